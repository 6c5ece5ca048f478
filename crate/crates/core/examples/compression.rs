//! Parameter counts of a full-width radiance-field network in dense,
//! low-rank and structurally pruned form.

use memfield::field::{Architecture, Compression};
use memfield::rng;

fn main() -> memfield::Result<()> {
    let net = Architecture::nerf_default().build(&[63, 27], &mut rng::stream(0, 0))?;
    for rate in [0.0, 0.5, 0.9] {
        let c = Compression::of(&net, rate)?;
        println!(
            "prune {rate:.1}: dense {:>7}  low-rank {:>7} ({:+.2}%)  pruned {:>7}  overall {:.1}x",
            c.dense,
            c.low_rank,
            -100.0 * c.low_rank_reduction(),
            c.pruned,
            c.overall()
        );
    }
    Ok(())
}
