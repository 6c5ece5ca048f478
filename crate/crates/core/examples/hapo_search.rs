//! Trains one image network, then searches deployment bit widths and the
//! significance ratio for the best PSNR/cell trade-off under a cell budget.

use memfield::device::NoiseModel;
use memfield::encoder::{EncoderConfig, EncodingMode};
use memfield::experiments::{deploy_fit, fit_image};
use memfield::field::{AdamConfig, Architecture, DeployConfig, TrainConfig};
use memfield::hapo::{grid_search, Evaluation, HardwareAxes, Objective};
use memfield::io::synthetic_image;

fn main() -> memfield::Result<()> {
    let target = synthetic_image(32, 32, 1);
    let noise = NoiseModel::fitted();
    let enc = EncoderConfig::new(EncodingMode::Gaussian, 2, 32).with_sigma(4.0).with_concat(true);
    let arch = Architecture::Ct { hidden: 48, rank: 8, omega0: 30.0, out_dim: 1 };
    let train = TrainConfig::new(200, 1e-4).with_batch(128).with_adam(AdamConfig::new(1e-4).with_decay(1e-6));
    let fit = fit_image(&target, &arch, &enc, &noise, &train)?;
    let software = fit.train_psnr()?;
    println!("software psnr {software:.2} dB");

    let axes = HardwareAxes { bits: vec![vec![6, 10, 14], vec![6, 10, 14], vec![6, 10]], ratios: vec![1.3, 1.5, 1.7] };
    let obj = Objective { n_max: 60_000, ..Objective::new(0.8, software) };
    let result = grid_search(&axes, &obj, |hc| {
        let r = deploy_fit(&fit, &DeployConfig::haq(hc.bits.clone(), hc.ratio), &noise, 0)?;
        Ok(Evaluation { psnr: r.psnr, cells: r.cells })
    })?;
    for row in result.table.iter().filter(|r| r.score.is_finite()).take(8) {
        println!("{:?} s={} psnr {:.2} cells {} score {:.4}", row.config.bits, row.config.ratio, row.psnr, row.cells, row.score);
    }
    println!("best: {:?} s={} (score {:.4})", result.best.bits, result.best.ratio, result.best_score);
    Ok(())
}
