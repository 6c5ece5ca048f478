//! Reconstructs a nested-ellipsoid phantom from evenly spaced slices and
//! prints PSNR over the full volume against the number of training slices.

use memfield::device::NoiseModel;
use memfield::encoder::EncoderConfig;
use memfield::experiments::sparse_slice_curve;
use memfield::field::{AdamConfig, Architecture, TrainConfig};
use memfield::io::phantom;

fn main() -> memfield::Result<()> {
    let volume = phantom(16, 32, 32)?;
    let train = TrainConfig::new(30, 1e-3).with_batch(512).with_adam(AdamConfig::new(1e-3).with_decay(1e-5));
    let curve = sparse_slice_curve(&volume, &[4, 8, 12, 16], &Architecture::ct_default(), &EncoderConfig::ct(), &NoiseModel::fitted(), &train)?;
    println!("{:>7} {:>9}", "slices", "psnr dB");
    for (n, psnr) in curve {
        println!("{n:>7} {psnr:>9.2}");
    }
    Ok(())
}
