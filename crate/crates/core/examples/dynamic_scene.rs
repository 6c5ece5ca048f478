//! A scene translating along x over eight frames, learned as a canonical
//! field plus a deformation network queried with (x, y, z, t).

use memfield::device::NoiseModel;
use memfield::encoder::{EncoderConfig, EncodingMode};
use memfield::experiments::{fit_scene, DeformationSpec, NerfSpec};
use memfield::field::Architecture;
use memfield::io::{make_synthetic_scene, SceneSpec};
use memfield::metrics::MetricsRow;
use memfield::render::{NerfTrainConfig, RenderConfig};

fn main() -> memfield::Result<()> {
    let spec = SceneSpec { width: 24, height: 24, focal: 30.0, ..SceneSpec::desk() }.with_motion([0.4, 0.0, 0.0], 8);
    let scene = make_synthetic_scene(&spec, 0)?;
    let mut train = NerfTrainConfig::full_scale(300);
    train.batch_rays = 256;
    train.render.samples = 24;
    let nerf = NerfSpec {
        architecture: Architecture::Nerf { width: 48, depth: 4, rank: Some(12), skip: 2 },
        position: EncoderConfig::new(EncodingMode::Gaussian, 3, 24).with_concat(true),
        direction: Some(EncoderConfig::new(EncodingMode::Basic, 3, 1)),
        train,
    };
    let deformation = DeformationSpec {
        architecture: Architecture::deformation_default(),
        encoder: EncoderConfig::new(EncodingMode::Positional, 4, 4).with_concat(true),
    };
    let fit = fit_scene(&scene, &nerf, Some(&deformation), &NoiseModel::fitted())?;
    println!("final loss {:.5}", fit.report.final_loss());
    let render = RenderConfig { samples: 24, ..RenderConfig::default() };
    let views = fit.render_views(&scene, &render, 1)?;
    for (k, (view, reference)) in views.iter().zip(&scene.images).enumerate() {
        let m = MetricsRow::evaluate("dynamic", "view", reference, view, "")?;
        println!("t = {:.3}: psnr {:.2} dB", scene.times[k], m.psnr_db);
    }
    Ok(())
}
