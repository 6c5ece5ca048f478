use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::manifest::{DatasetRef, ExperimentManifest, Task};
use super::stamp::RunWriter;
use super::synth::{make_synthetic_scene, synthetic_image, SceneSpec};
use super::volume::{evenly_spaced, ingest_volume, phantom, validate_subset, VolumeDataset};
use crate::device::NoiseModel;
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::experiments::{
    fit_field, hardware_predict, image_coords, image_targets, matmul_bench, predictions_to_image, psnr_clamped, sparse_slice_curve, FieldFit,
    NerfSpec, SceneFit,
};
use crate::field::{checkpoint, Architecture, DeployConfig, FieldNetwork, PruneSpec, TrainConfig};
use crate::hapo::{grid_search, population_search, Evaluation, Objective};
use crate::image::Image;
use crate::metrics::MetricsRow;
use crate::render::{NerfEncoders, RenderConfig};

const TRAIN_TAG: u64 = 0x7472;
const ENCODER_TAG: u64 = 0x656e;
const NOISE_TAG: u64 = 0x6e6f;
const DEPLOY_TAG: u64 = 0x6470;
const SCENE_TAG: u64 = 0x7363;
const RENDER_TAG: u64 = 0x7264;

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub hash: String,
    pub dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub metrics: Vec<MetricsRow>,
    /// Scalar results, also written to `report.toml`.
    pub report: BTreeMap<String, f64>,
}

/// Runs a manifest end to end, writing every output into its `output_dir`.
pub fn run(m: &ExperimentManifest) -> Result<RunSummary> {
    m.validate()?;
    let mut w = RunWriter::create(&m.output_path(), m)?;
    let mut metrics = Vec::new();
    let mut report = BTreeMap::new();
    match m.task {
        Task::ImageFit => image_fit(m, &mut w, &mut metrics, &mut report)?,
        Task::CtDense | Task::CtSparse => volume_fit(m, &mut w, &mut metrics, &mut report)?,
        Task::Nerf | Task::Dnerf => scene_fit(m, &mut w, &mut metrics, &mut report)?,
        Task::MatmulBench => matmul(m, &mut w, &mut report)?,
        Task::Hapo => hapo(m, &mut w, &mut report)?,
    }
    if !metrics.is_empty() {
        w.metrics("metrics.csv", &metrics)?;
    }
    w.toml("report.toml", &report)?;
    Ok(RunSummary { hash: w.hash.clone(), dir: w.dir.clone(), files: w.written, metrics, report })
}

/// Noise model with its seed derived from the manifest seed.
pub fn run_noise(m: &ExperimentManifest) -> NoiseModel {
    m.noise.with_seed(crate::rng::mix(&[m.seed, NOISE_TAG, m.noise.seed]))
}

/// Training settings with the seed derived from the manifest seed.
pub fn run_train(m: &ExperimentManifest) -> Result<TrainConfig> {
    let t = m.train.clone().ok_or_else(|| Error::config("manifest has no train section"))?;
    let seed = crate::rng::mix(&[m.seed, TRAIN_TAG, t.seed]);
    Ok(t.with_seed(seed))
}

fn derived_encoder(m: &ExperimentManifest, cfg: &EncoderConfig, slot: u64) -> EncoderConfig {
    let mut c = cfg.clone();
    c.matrix_seed = crate::rng::mix(&[m.seed, ENCODER_TAG, slot, cfg.matrix_seed]);
    c
}

/// Position encoder settings with the matrix seed derived from the manifest.
pub fn run_encoder(m: &ExperimentManifest) -> Result<EncoderConfig> {
    let e = m.encoder.as_ref().ok_or_else(|| Error::config("manifest has no encoder section"))?;
    Ok(derived_encoder(m, e, 0))
}

fn architecture(m: &ExperimentManifest) -> Result<&Architecture> {
    m.architecture.as_ref().ok_or_else(|| Error::config("manifest has no architecture section"))
}

fn resolve(path: &str) -> PathBuf {
    PathBuf::from(path)
}

/// The target image of an image manifest.
pub fn load_image(m: &ExperimentManifest) -> Result<Image> {
    match &m.dataset {
        DatasetRef::SyntheticImage { width, height, channels } => Ok(synthetic_image(*width, *height, *channels)),
        DatasetRef::Image { path } => Image::load(&resolve(path)),
        _ => Err(Error::config("dataset is not an image")),
    }
}

/// The volume of a CT manifest.
pub fn load_volume(m: &ExperimentManifest) -> Result<VolumeDataset> {
    match &m.dataset {
        DatasetRef::Phantom { slices, width, height } => phantom(*slices, *width, *height),
        DatasetRef::Volume { path, normalization } => ingest_volume(&resolve(path), normalization.clone()),
        _ => Err(Error::config("dataset is not a volume")),
    }
}

/// The rendered views of a scene manifest.
pub fn load_scene(m: &ExperimentManifest) -> Result<(SceneSpec, super::SyntheticScene)> {
    match &m.dataset {
        DatasetRef::Scene { spec } => Ok((spec.clone(), make_synthetic_scene(spec, m.seed_for(SCENE_TAG))?)),
        _ => Err(Error::config("dataset is not a scene")),
    }
}

/// Training slices of a volume manifest.
pub fn train_slices(m: &ExperimentManifest, vol: &VolumeDataset) -> Result<Vec<usize>> {
    match (m.task, &m.slices) {
        (Task::CtSparse, Some(s)) => match (&s.train, s.count) {
            (Some(t), _) => {
                validate_subset(t, vol.slices)?;
                Ok(t.clone())
            }
            (None, Some(c)) => evenly_spaced(vol.slices, c),
            (None, None) => Err(Error::config("slices section needs train or count")),
        },
        _ => Ok(vol.all_slices()),
    }
}

fn deploy_label(cfg: &DeployConfig, k: usize) -> String {
    format!("{}-{k}", format!("{:?}", cfg.scheme).to_lowercase())
}

fn image_fit(m: &ExperimentManifest, w: &mut RunWriter, rows: &mut Vec<MetricsRow>, report: &mut BTreeMap<String, f64>) -> Result<()> {
    let img = load_image(m)?;
    let noise = run_noise(m);
    let fit = fit_field(image_coords(img.width, img.height).view(), image_targets(&img).view(), architecture(m)?, &run_encoder(m)?, &noise, &run_train(m)?)?;
    w.checkpoint("model.nfw", &fit.net)?;
    let sw = fit.net.forward_head(fit.features.view(), &fit.head)?;
    let sw_img = predictions_to_image(sw.view(), img.width, img.height)?;
    w.ppm("target.ppm", &img)?;
    w.ppm("software.ppm", &sw_img)?;
    rows.push(MetricsRow::evaluate(&m.name, "software", &img, &sw_img, &w.hash)?);
    report.insert("final_loss".into(), fit.report.final_loss());
    report.insert("software_psnr".into(), rows[0].psnr_db);
    for (k, cfg) in m.deploy.iter().enumerate() {
        let label = deploy_label(cfg, k);
        let (y, cells) = hardware_predict(&fit, cfg, &noise, m.seed_for(DEPLOY_TAG + k as u64), fit.features.view())?;
        let hw = predictions_to_image(y.view(), img.width, img.height)?;
        w.ppm(&format!("{label}.ppm"), &hw)?;
        let row = MetricsRow::evaluate(&m.name, &label, &img, &hw, &w.hash)?;
        report.insert(format!("{label}_psnr"), row.psnr_db);
        report.insert(format!("{label}_cells"), cells as f64);
        rows.push(row);
    }
    Ok(())
}

fn slice_images(pred: &Array2<f64>, vol: &VolumeDataset) -> Result<Vec<Image>> {
    let per = vol.width * vol.height;
    (0..vol.slices)
        .map(|s| Image::from_data(vol.width, vol.height, 1, pred.as_slice().expect("standard layout")[s * per..(s + 1) * per].iter().map(|v| v.clamp(0.0, 1.0)).collect()))
        .collect()
}

fn volume_rows(m: &ExperimentManifest, w: &RunWriter, vol: &VolumeDataset, pred: &Array2<f64>, label: &str, rows: &mut Vec<MetricsRow>) -> Result<Vec<Image>> {
    let images = slice_images(pred, vol)?;
    for (s, img) in images.iter().enumerate() {
        rows.push(MetricsRow::evaluate(&m.name, &format!("{label}/slice_{s:04}"), &vol.slice_image(s)?, img, &w.hash)?);
    }
    Ok(images)
}

fn volume_fit(m: &ExperimentManifest, w: &mut RunWriter, rows: &mut Vec<MetricsRow>, report: &mut BTreeMap<String, f64>) -> Result<()> {
    let vol = load_volume(m)?;
    let noise = run_noise(m);
    let (arch, enc, train) = (architecture(m)?, run_encoder(m)?, run_train(m)?);
    let subset = train_slices(m, &vol)?;
    let (x, y) = vol.samples(&subset)?;
    let fit = fit_field(x.view(), y.view(), arch, &enc, &noise, &train)?;
    w.checkpoint("model.nfw", &fit.net)?;
    let (xa, ya) = vol.samples(&vol.all_slices())?;
    let fa = fit.encoder.encode_batch(xa.view())?;
    let sw = fit.net.forward_head(fa.view(), &fit.head)?;
    report.insert("final_loss".into(), fit.report.final_loss());
    report.insert("train_slices".into(), subset.len() as f64);
    report.insert("software_psnr".into(), psnr_clamped(sw.view(), ya.view()));
    for (s, img) in volume_rows(m, w, &vol, &sw, "software", rows)?.iter().enumerate() {
        w.pgm16(&format!("software_slice_{s:04}.pgm"), img)?;
    }
    for (k, cfg) in m.deploy.iter().enumerate() {
        let label = deploy_label(cfg, k);
        let (hw, cells) = hardware_predict(&fit, cfg, &noise, m.seed_for(DEPLOY_TAG + k as u64), fa.view())?;
        volume_rows(m, w, &vol, &hw, &label, rows)?;
        report.insert(format!("{label}_psnr"), psnr_clamped(hw.view(), ya.view()));
        report.insert(format!("{label}_cells"), cells as f64);
    }
    if let Some(s) = m.slices.as_ref().filter(|s| !s.sweep.is_empty()) {
        let curve = sparse_slice_curve(&vol, &s.sweep, arch, &enc, &noise, &train)?;
        let table: Vec<Vec<String>> = curve.iter().map(|(c, p)| vec![c.to_string(), p.to_string()]).collect();
        w.table("sparse_curve.csv", &["train_slices".into(), "psnr".into()], &table)?;
    }
    Ok(())
}

/// Settings of a radiance-field manifest with derived seeds.
pub fn nerf_spec(m: &ExperimentManifest) -> Result<NerfSpec> {
    let mut train = m.nerf_train.clone().ok_or_else(|| Error::config("manifest has no nerf_train section"))?;
    train.seed = crate::rng::mix(&[m.seed, TRAIN_TAG, train.seed]);
    Ok(NerfSpec {
        architecture: architecture(m)?.clone(),
        position: run_encoder(m)?,
        direction: m.direction_encoder.as_ref().map(|d| derived_encoder(m, d, 1)),
        train,
    })
}

fn deformation_spec(m: &ExperimentManifest) -> Option<crate::experiments::DeformationSpec> {
    m.deformation.as_ref().map(|d| crate::experiments::DeformationSpec { architecture: d.architecture.clone(), encoder: derived_encoder(m, &d.encoder, 2) })
}

fn render_config(m: &ExperimentManifest) -> RenderConfig {
    m.render.clone().unwrap_or_default()
}

fn scene_fit(m: &ExperimentManifest, w: &mut RunWriter, rows: &mut Vec<MetricsRow>, report: &mut BTreeMap<String, f64>) -> Result<()> {
    let (_, scene) = load_scene(m)?;
    let noise = run_noise(m);
    let spec = nerf_spec(m)?;
    let fit = crate::experiments::fit_scene(&scene, &spec, deformation_spec(m).as_ref(), &noise)?;
    write_scene_outputs(m, w, &scene, &fit, rows, report)
}

fn write_scene_outputs(
    m: &ExperimentManifest,
    w: &mut RunWriter,
    scene: &super::SyntheticScene,
    fit: &SceneFit,
    rows: &mut Vec<MetricsRow>,
    report: &mut BTreeMap<String, f64>,
) -> Result<()> {
    w.checkpoint("model.nfw", &fit.net)?;
    if let Some((d, _)) = &fit.deformation {
        w.checkpoint("deformation.nfw", d)?;
    }
    let views = fit.render_views(scene, &render_config(m), m.seed_for(RENDER_TAG))?;
    let mut total = 0.0;
    for (k, (view, reference)) in views.iter().zip(&scene.images).enumerate() {
        w.ppm(&format!("view_{k:03}.ppm"), view)?;
        w.ppm(&format!("reference_{k:03}.ppm"), reference)?;
        let row = MetricsRow::evaluate(&m.name, &format!("view_{k:03}"), reference, view, &w.hash)?;
        total += row.psnr_db;
        rows.push(row);
    }
    report.insert("final_loss".into(), fit.report.final_loss());
    report.insert("mean_psnr".into(), total / views.len().max(1) as f64);
    Ok(())
}

fn matmul(m: &ExperimentManifest, w: &mut RunWriter, report: &mut BTreeMap<String, f64>) -> Result<()> {
    let spec = m.matmul.as_ref().ok_or_else(|| Error::config("manifest has no matmul section"))?;
    let rows = matmul_bench(spec, &run_noise(m), m.seed)?;
    w.csv("matmul.csv", &rows)?;
    let n = rows.len().max(1) as f64;
    let haq = rows.iter().map(|r| r.haq_rmse).sum::<f64>() / n;
    let ptq = rows.iter().map(|r| r.ptq_rmse).sum::<f64>() / n;
    report.insert("haq_rmse_mean".into(), haq);
    report.insert("ptq_rmse_mean".into(), ptq);
    report.insert("ptq_over_haq".into(), ptq / haq);
    Ok(())
}

/// Coordinates and targets of an image or volume manifest.
pub fn field_data(m: &ExperimentManifest) -> Result<(Array2<f64>, Array2<f64>)> {
    match &m.dataset {
        DatasetRef::SyntheticImage { .. } | DatasetRef::Image { .. } => {
            let img = load_image(m)?;
            Ok((image_coords(img.width, img.height), image_targets(&img)))
        }
        _ => {
            let vol = load_volume(m)?;
            let subset = train_slices(m, &vol)?;
            vol.samples(&subset)
        }
    }
}

fn with_rank(arch: &Architecture, rank: usize) -> Architecture {
    match arch.clone() {
        Architecture::Ct { hidden, omega0, out_dim, .. } => Architecture::Ct { hidden, rank, omega0, out_dim },
        Architecture::Mlp { width, hidden_layers, out_dim, out_activation, .. } => Architecture::Mlp { width, hidden_layers, rank: Some(rank), out_dim, out_activation },
        Architecture::Nerf { width, depth, skip, .. } => Architecture::Nerf { width, depth, rank: Some(rank), skip },
    }
}

fn hapo(m: &ExperimentManifest, w: &mut RunWriter, report: &mut BTreeMap<String, f64>) -> Result<()> {
    let spec = m.hapo.as_ref().ok_or_else(|| Error::config("manifest has no hapo section"))?;
    let (x, y) = field_data(m)?;
    let noise = run_noise(m);
    let (arch, enc, train) = (architecture(m)?, run_encoder(m)?, run_train(m)?);
    let fit = fit_field(x.view(), y.view(), arch, &enc, &noise, &train)?;
    w.checkpoint("model.nfw", &fit.net)?;
    let software_psnr = fit.train_psnr()?;
    let obj = Objective { omega: spec.omega, psnr_max: spec.psnr_max.unwrap_or(software_psnr), n_max: spec.n_max, orientation: spec.orientation };
    report.insert("software_psnr".into(), software_psnr);
    report.insert("psnr_max".into(), obj.psnr_max);

    let seed = m.seed_for(DEPLOY_TAG);
    let result = grid_search(&spec.hardware, &obj, |hc| {
        let cfg = DeployConfig::haq(hc.bits.clone(), hc.ratio);
        let cells = cfg.cell_count(&fit.net)?;
        if cells > obj.n_max {
            return Ok(Evaluation { psnr: 0.0, cells });
        }
        let (pred, cells) = hardware_predict(&fit, &cfg, &noise, seed, fit.features.view())?;
        Ok(Evaluation { psnr: psnr_clamped(pred.view(), fit.targets.view()), cells })
    })?;
    let layers = spec.hardware.bits.len();
    let mut header: Vec<String> = (0..layers).map(|i| format!("bits_{i}")).collect();
    header.extend(["ratio", "psnr", "cells", "score", "seed"].map(String::from));
    let table: Vec<Vec<String>> = result
        .table
        .iter()
        .map(|r| {
            let mut rec: Vec<String> = r.config.bits.iter().map(|b| b.to_string()).collect();
            rec.extend([r.config.ratio.to_string(), r.psnr.to_string(), r.cells.to_string(), r.score.to_string(), m.seed.to_string()]);
            rec
        })
        .collect();
    w.table("hapo_grid.csv", &header, &table)?;
    report.insert("best_score".into(), result.best_score);
    report.insert("best_ratio".into(), result.best.ratio);
    for (i, b) in result.best.bits.iter().enumerate() {
        report.insert(format!("best_bits_{i}"), *b as f64);
    }

    let best_deploy = DeployConfig::haq(result.best.bits.clone(), result.best.ratio);
    let task = if matches!(m.dataset, DatasetRef::SyntheticImage { .. } | DatasetRef::Image { .. }) { Task::ImageFit } else { Task::CtDense };
    let best = ExperimentManifest { name: format!("{}-best", m.name), task, hapo: None, deploy: vec![best_deploy], ..m.clone() };
    w.toml("best_manifest.toml", &best)?;

    if let Some(sw) = &spec.software {
        let pop = population_search(&sw.axes, sw.population, sw.generations, &obj, m.seed_for(TRAIN_TAG), |c| {
            let a = with_rank(arch, c.rank);
            let e = enc.clone().with_sigma(c.sigma);
            let mut t = train.clone();
            t.prune = (c.prune_rate > 0.0).then(|| PruneSpec { rate: c.prune_rate, schedule: vec![t.epochs / 2] });
            let f = fit_field(x.view(), y.view(), &a, &e, &noise, &t)?;
            Ok(Evaluation { psnr: f.train_psnr()?, cells: f.net.weight_count() * sw.bits })
        })?;
        let lineage: Vec<Vec<String>> = pop
            .lineage
            .iter()
            .map(|l| {
                let idx = |i: [usize; 3]| format!("{}:{}:{}", i[0], i[1], i[2]);
                vec![l.generation.to_string(), idx(l.index), l.parent.map(idx).unwrap_or_default(), l.score.to_string()]
            })
            .collect();
        w.table("hapo_lineage.csv", &["generation".into(), "index".into(), "parent".into(), "score".into()], &lineage)?;
        report.insert("software_best_score".into(), pop.best_score);
        report.insert("software_best_prune_rate".into(), pop.best.prune_rate);
        report.insert("software_best_rank".into(), pop.best.rank as f64);
        report.insert("software_best_sigma".into(), pop.best.sigma);
    }
    Ok(())
}

/// Deploys a saved checkpoint of an image or volume manifest with each of
/// its deployment configurations and writes stamped metrics.
pub fn deploy_checkpoint(m: &ExperimentManifest, checkpoint_path: &Path) -> Result<RunSummary> {
    m.validate()?;
    if m.deploy.is_empty() {
        return Err(Error::config("manifest lists no deployments"));
    }
    let net = checkpoint::load(checkpoint_path)?;
    let noise = run_noise(m);
    let encoder = Encoder::new(run_encoder(m)?, &noise)?;
    let (x, y) = field_data(m)?;
    let features = encoder.encode_batch(x.view())?;
    let head = net.heads.first().map(|h| h.0.clone()).ok_or_else(|| Error::data("checkpoint has no head"))?;
    let fit = FieldFit { net, encoder, features, targets: y, head, report: Default::default() };
    let mut w = RunWriter::create(&m.output_path(), m)?;
    let mut report = BTreeMap::new();
    let mut rows = Vec::new();
    let image = load_image(m).ok();
    for (k, cfg) in m.deploy.iter().enumerate() {
        let label = deploy_label(cfg, k);
        let (pred, cells) = hardware_predict(&fit, cfg, &noise, m.seed_for(DEPLOY_TAG + k as u64), fit.features.view())?;
        report.insert(format!("{label}_psnr"), psnr_clamped(pred.view(), fit.targets.view()));
        report.insert(format!("{label}_cells"), cells as f64);
        if let Some(img) = &image {
            let hw = predictions_to_image(pred.view(), img.width, img.height)?;
            w.ppm(&format!("{label}.ppm"), &hw)?;
            rows.push(MetricsRow::evaluate(&m.name, &label, img, &hw, &w.hash)?);
        }
    }
    if !rows.is_empty() {
        w.metrics("metrics.csv", &rows)?;
    }
    w.toml("report.toml", &report)?;
    Ok(RunSummary { hash: w.hash.clone(), dir: w.dir.clone(), files: w.written, metrics: rows, report })
}

/// Renders every pose of a scene manifest, from a saved checkpoint when
/// given and from the analytic scene otherwise.
pub fn render_scene(m: &ExperimentManifest, checkpoint_path: Option<&Path>, deformation_path: Option<&Path>) -> Result<RunSummary> {
    m.validate()?;
    let (_, scene) = load_scene(m)?;
    let mut w = RunWriter::create(&m.output_path(), m)?;
    let mut rows = Vec::new();
    let mut report = BTreeMap::new();
    match checkpoint_path {
        None => {
            for (k, img) in scene.images.iter().enumerate() {
                w.ppm(&format!("view_{k:03}.ppm"), img)?;
            }
            w.toml("poses.toml", &scene.poses())?;
            report.insert("views".into(), scene.images.len() as f64);
        }
        Some(p) => {
            let noise = run_noise(m);
            let spec = nerf_spec(m)?;
            let net: FieldNetwork = checkpoint::load(p)?;
            let encoders = NerfEncoders {
                position: Encoder::new(spec.position.clone(), &noise)?,
                direction: spec.direction.as_ref().map(|d| Encoder::new(d.clone(), &noise)).transpose()?,
            };
            let deformation = match (deformation_path, deformation_spec(m)) {
                (Some(dp), Some(d)) => Some((checkpoint::load(dp)?, Encoder::new(d.encoder, &noise)?)),
                (Some(_), None) => return Err(Error::config("manifest has no deformation section")),
                _ => None,
            };
            let fit = SceneFit { net, encoders, deformation, report: Default::default() };
            let views = fit.render_views(&scene, &render_config(m), m.seed_for(RENDER_TAG))?;
            let mut total = 0.0;
            for (k, (view, reference)) in views.iter().zip(&scene.images).enumerate() {
                w.ppm(&format!("view_{k:03}.ppm"), view)?;
                let row = MetricsRow::evaluate(&m.name, &format!("view_{k:03}"), reference, view, &w.hash)?;
                total += row.psnr_db;
                rows.push(row);
            }
            report.insert("mean_psnr".into(), total / views.len().max(1) as f64);
            w.metrics("metrics.csv", &rows)?;
        }
    }
    w.toml("report.toml", &report)?;
    Ok(RunSummary { hash: w.hash.clone(), dir: w.dir.clone(), files: w.written, metrics: rows, report })
}
