//! Fits a sine network to a 64x64 test image through a Gaussian encoding,
//! deploys it with HAQ and PTQ, and writes the three reconstructions.
//!
//! Usage: `cargo run --release --example image_fit [out_dir]`

use std::path::PathBuf;

use memfield::device::NoiseModel;
use memfield::encoder::{EncoderConfig, EncodingMode};
use memfield::experiments::{fit_image, hardware_predict, predictions_to_image};
use memfield::field::{AdamConfig, Architecture, DeployConfig, TrainConfig};
use memfield::io::synthetic_image;
use memfield::metrics::MetricsRow;

fn main() -> memfield::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/image_fit".into()));
    std::fs::create_dir_all(&out).map_err(|e| memfield::Error::io(&out, e))?;
    let target = synthetic_image(64, 64, 1);
    let noise = NoiseModel::fitted();
    let enc = EncoderConfig::new(EncodingMode::Gaussian, 2, 64).with_sigma(4.0).with_concat(true);
    let train = TrainConfig::new(300, 1e-4).with_batch(256).with_adam(AdamConfig::new(1e-4).with_decay(1e-6));
    let fit = fit_image(&target, &Architecture::ct_default(), &enc, &noise, &train)?;

    let sw = fit.net.forward_head(fit.features.view(), &fit.head)?;
    let sw = predictions_to_image(sw.view(), 64, 64)?;
    target.save_ppm(&out.join("target.ppm"))?;
    sw.save_ppm(&out.join("software.ppm"))?;
    println!("software  psnr {:6.2} dB", MetricsRow::evaluate("image", "sw", &target, &sw, "")?.psnr_db);

    for (name, cfg) in [("haq", DeployConfig::ct_default()), ("ptq", DeployConfig::ptq(vec![14, 14, 12]))] {
        let (y, cells) = hardware_predict(&fit, &cfg, &noise, 1, fit.features.view())?;
        let img = predictions_to_image(y.view(), 64, 64)?;
        img.save_ppm(&out.join(format!("{name}.ppm")))?;
        let m = MetricsRow::evaluate("image", name, &target, &img, "")?;
        println!("{name:<9} psnr {:6.2} dB  ssim {:.3}  cells {cells}", m.psnr_db, m.ssim);
    }
    Ok(())
}
