//! Renders a two-object analytic scene, trains a small compressed radiance
//! field on the views and writes reference and learned renders side by side.
//!
//! Usage: `cargo run --release --example scene_render [out_dir]`

use std::path::PathBuf;

use memfield::device::NoiseModel;
use memfield::encoder::{EncoderConfig, EncodingMode};
use memfield::experiments::{fit_scene, NerfSpec};
use memfield::field::Architecture;
use memfield::io::{make_synthetic_scene, SceneSpec};
use memfield::metrics::MetricsRow;
use memfield::render::{NerfTrainConfig, RenderConfig};

fn main() -> memfield::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "out/scene_render".into()));
    let spec = SceneSpec { width: 32, height: 32, focal: 40.0, ..SceneSpec::desk() };
    let scene = make_synthetic_scene(&spec, 0)?;
    scene.save(&out.join("reference"))?;

    let mut train = NerfTrainConfig::full_scale(400);
    train.batch_rays = 256;
    train.render.samples = 32;
    let nerf = NerfSpec {
        architecture: Architecture::Nerf { width: 64, depth: 4, rank: Some(16), skip: 2 },
        position: EncoderConfig::new(EncodingMode::Gaussian, 3, 32).with_concat(true),
        direction: Some(EncoderConfig::new(EncodingMode::Basic, 3, 1)),
        train,
    };
    let fit = fit_scene(&scene, &nerf, None, &NoiseModel::fitted())?;
    println!("final loss {:.5}", fit.report.final_loss());
    let render = RenderConfig { samples: 32, ..RenderConfig::default() };
    let views = fit.render_views(&scene, &render, 1)?;
    for (k, (view, reference)) in views.iter().zip(&scene.images).enumerate() {
        view.save_ppm(&out.join(format!("learned_{k:03}.ppm")))?;
        let m = MetricsRow::evaluate("scene", "view", reference, view, "")?;
        println!("view {k}: psnr {:.2} dB, ssim {:.3}", m.psnr_db, m.ssim);
    }
    Ok(())
}
