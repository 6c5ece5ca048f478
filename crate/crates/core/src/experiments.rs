//! Reusable experiment pipelines shared by the manifest runner, the CLI and
//! the examples.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{Chip, ConverterBits, NoiseModel};
use crate::encoder::{Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::field::{deploy, train_regression, Architecture, DeployConfig, FieldNetwork, TrainConfig, TrainReport};
use crate::image::Image;
use crate::io::{SyntheticScene, VolumeDataset};
use crate::metrics::{mse_values, psnr_from_mse};
use crate::quant::{haq_program, ptq_program, HaqOptions, MappedMatrix, Mapping};
use crate::render::{
    all_pixels, generate_rays, render_image, train_dnerf, train_nerf, DeformedField, NerfEncoders, NerfTrainConfig,
    NetworkDeformation, NeuralField, RaySample, RenderConfig,
};
use crate::rng;

/// Random vector–matrix product benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatmulSpec {
    /// Input vector length.
    pub length: usize,
    /// Output count.
    pub outputs: usize,
    pub weight_bits: usize,
    pub ratio: f64,
    pub converters: ConverterBits,
    pub seeds: usize,
}

impl Default for MatmulSpec {
    fn default() -> Self {
        Self {
            length: 100,
            outputs: 100,
            weight_bits: 12,
            ratio: 1.5,
            converters: ConverterBits { dac_bits: Some(8), adc_bits: Some(14) },
            seeds: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatmulRow {
    pub seed: u64,
    pub haq_rmse: f64,
    pub ptq_rmse: f64,
}

fn rmse(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    mse_values(a.as_slice().expect("standard layout"), b.as_slice().expect("standard layout")).sqrt()
}

fn random_problem(spec: &MatmulSpec, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut r = rng::stream(seed, 0x6d61);
    let w = Array2::from_shape_fn((spec.outputs, spec.length), |_| r.random_range(-1.0..1.0));
    let x = Array2::from_shape_fn((1, spec.length), |_| r.random_range(0.0..1.0));
    (w, x)
}

fn mapped_rmse(mapping: Mapping, chip: &Chip, noise: &NoiseModel, spec: &MatmulSpec, w: &Array2<f64>, x: &Array2<f64>, seed: u64) -> Result<f64> {
    let mut m = MappedMatrix::new(mapping, chip, noise.clone())?;
    m.calibrate(x.view(), spec.converters)?;
    let y = m.matmul(x.view(), &mut rng::stream(seed, 0x7264))?;
    Ok(rmse(y.view(), x.dot(&w.t()).view()))
}

/// HAQ matmul RMSE for one random problem at the given ratio.
pub fn haq_matmul_rmse(spec: &MatmulSpec, ratio: f64, noise: &NoiseModel, seed: u64) -> Result<f64> {
    let (w, x) = random_problem(spec, seed);
    let mut chip = Chip::unlimited();
    let noise = noise.with_seed(rng::mix(&[noise.seed, seed]));
    let m = haq_program("w", w.view(), spec.weight_bits, ratio, &mut chip, &noise, &mut rng::stream(seed, 0x6871), HaqOptions::default())?;
    mapped_rmse(Mapping::Haq(m), &chip, &noise, spec, &w, &x, seed)
}

/// PTQ matmul RMSE for one random problem.
pub fn ptq_matmul_rmse(spec: &MatmulSpec, noise: &NoiseModel, seed: u64) -> Result<f64> {
    let (w, x) = random_problem(spec, seed);
    let mut chip = Chip::unlimited();
    let noise = noise.with_seed(rng::mix(&[noise.seed, seed]));
    let m = ptq_program("w", w.view(), spec.weight_bits, &mut chip, &noise, &mut rng::stream(seed, 0x7074))?;
    mapped_rmse(Mapping::Ptq(m), &chip, &noise, spec, &w, &x, seed)
}

/// HAQ and PTQ RMSE on `spec.seeds` random problems starting at `seed`.
pub fn matmul_bench(spec: &MatmulSpec, noise: &NoiseModel, seed: u64) -> Result<Vec<MatmulRow>> {
    (0..spec.seeds as u64)
        .map(|k| {
            let s = seed + k;
            Ok(MatmulRow { seed: s, haq_rmse: haq_matmul_rmse(spec, spec.ratio, noise, s)?, ptq_rmse: ptq_matmul_rmse(spec, noise, s)? })
        })
        .collect()
}

/// Mean HAQ RMSE at every ratio; returns `(ratio, mean_rmse)` pairs.
pub fn ratio_sweep(spec: &MatmulSpec, ratios: &[f64], noise: &NoiseModel, seed: u64) -> Result<Vec<(f64, f64)>> {
    ratios
        .iter()
        .map(|&s| {
            let total: f64 = (0..spec.seeds as u64).map(|k| haq_matmul_rmse(spec, s, noise, seed + k)).sum::<Result<f64>>()?;
            Ok((s, total / spec.seeds as f64))
        })
        .collect()
}

/// Ratio with the lowest mean RMSE in a sweep.
pub fn best_ratio(sweep: &[(f64, f64)]) -> Option<f64> {
    sweep.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|p| p.0)
}

/// A trained coordinate network together with its encoder and data.
#[derive(Debug, Clone)]
pub struct FieldFit {
    pub net: FieldNetwork,
    pub encoder: Encoder,
    pub features: Array2<f64>,
    pub targets: Array2<f64>,
    pub head: String,
    pub report: TrainReport,
}

impl FieldFit {
    pub fn predict(&self, coords: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = self.encoder.encode_batch(coords)?;
        self.net.forward_head(f.view(), &self.head)
    }

    /// Software PSNR on the training samples (peak 1).
    pub fn train_psnr(&self) -> Result<f64> {
        let y = self.net.forward_head(self.features.view(), &self.head)?;
        Ok(psnr_clamped(y.view(), self.targets.view()))
    }
}

/// PSNR with peak 1 after clamping predictions into `[0, 1]`.
pub fn psnr_clamped(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> f64 {
    let p: Vec<f64> = pred.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let t: Vec<f64> = target.iter().copied().collect();
    psnr_from_mse(mse_values(&p, &t), 1.0)
}

/// Encodes `coords`, builds `arch` on the encoding and fits it to `targets`.
pub fn fit_field(
    coords: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    arch: &Architecture,
    encoder: &EncoderConfig,
    noise: &NoiseModel,
    train: &TrainConfig,
) -> Result<FieldFit> {
    if encoder.input_dim != coords.ncols() {
        return Err(Error::config(format!("encoder expects {} inputs, data has {}", encoder.input_dim, coords.ncols())));
    }
    let encoder = Encoder::new(encoder.clone(), noise)?;
    let features = encoder.encode_batch(coords)?;
    let mut net = arch.build(&[features.ncols()], &mut rng::stream(train.seed, 0x696e))?;
    let head = net.heads.first().map(|h| h.0.clone()).ok_or_else(|| Error::config("architecture has no head"))?;
    let report = train_regression(&mut net, features.view(), targets, &head, train)?;
    Ok(FieldFit { net, encoder, features, targets: targets.to_owned(), head, report })
}

pub fn image_coords(width: usize, height: usize) -> Array2<f64> {
    let c = Image::pixel_coords(width, height);
    Array2::from_shape_fn((c.len(), 2), |(i, k)| c[i][k])
}

pub fn image_targets(img: &Image) -> Array2<f64> {
    Array2::from_shape_vec((img.pixels(), img.channels), img.data.clone()).expect("image layout")
}

pub fn predictions_to_image(pred: ArrayView2<f64>, width: usize, height: usize) -> Result<Image> {
    Image::from_data(width, height, pred.ncols(), pred.iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

pub fn fit_image(target: &Image, arch: &Architecture, encoder: &EncoderConfig, noise: &NoiseModel, train: &TrainConfig) -> Result<FieldFit> {
    fit_field(image_coords(target.width, target.height).view(), image_targets(target).view(), arch, encoder, noise, train)
}

/// Outcome of running a fitted network on simulated crossbars.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeploymentResult {
    pub psnr: f64,
    pub cells: usize,
}

/// Deploys `fit.net`, calibrating converters on the training features, and
/// runs `features` through the simulated crossbars.
pub fn hardware_predict(fit: &FieldFit, cfg: &DeployConfig, noise: &NoiseModel, seed: u64, features: ArrayView2<f64>) -> Result<(Array2<f64>, usize)> {
    let noise = noise.with_seed(rng::mix(&[noise.seed, seed]));
    let mut r = rng::stream(seed, 0x6470);
    let d = deploy(&fit.net, cfg, fit.features.view(), &noise, Chip::unlimited(), &mut r)?;
    let y = d.hw_forward_head(features, &fit.head, &mut r)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("hardware forward produced non-finite values".into()));
    }
    Ok((y, d.cell_count()))
}

/// [`hardware_predict`] on the training features, scored against the targets.
pub fn deploy_fit(fit: &FieldFit, cfg: &DeployConfig, noise: &NoiseModel, seed: u64) -> Result<DeploymentResult> {
    let (y, cells) = hardware_predict(fit, cfg, noise, seed, fit.features.view())?;
    Ok(DeploymentResult { psnr: psnr_clamped(y.view(), fit.targets.view()), cells })
}

/// Fits a volume on `train_slices` and reports PSNR over every slice.
pub fn fit_volume(
    volume: &VolumeDataset,
    train_slices: &[usize],
    arch: &Architecture,
    encoder: &EncoderConfig,
    noise: &NoiseModel,
    train: &TrainConfig,
) -> Result<(FieldFit, f64)> {
    let (x, y) = volume.samples(train_slices)?;
    let fit = fit_field(x.view(), y.view(), arch, encoder, noise, train)?;
    let (xa, ya) = volume.samples(&volume.all_slices())?;
    let pred = fit.predict(xa.view())?;
    let psnr = psnr_clamped(pred.view(), ya.view());
    Ok((fit, psnr))
}

/// PSNR over all slices after training on evenly spaced subsets of each size.
pub fn sparse_slice_curve(
    volume: &VolumeDataset,
    counts: &[usize],
    arch: &Architecture,
    encoder: &EncoderConfig,
    noise: &NoiseModel,
    train: &TrainConfig,
) -> Result<Vec<(usize, f64)>> {
    counts
        .iter()
        .map(|&c| {
            let subset = crate::io::evenly_spaced(volume.slices, c)?;
            Ok((c, fit_volume(volume, &subset, arch, encoder, noise, train)?.1))
        })
        .collect()
}

/// Every pixel of every view as a training ray.
pub fn scene_rays(scene: &SyntheticScene, render: &RenderConfig) -> Result<Vec<RaySample>> {
    let mut out = Vec::new();
    for ((cam, img), &time) in scene.cameras.iter().zip(&scene.images).zip(&scene.times) {
        let pixels = all_pixels(cam);
        let rays = generate_rays(cam, &pixels, render.t_near, render.t_far)?;
        for (ray, (x, y)) in rays.into_iter().zip(pixels) {
            out.push(RaySample { ray, color: [img.get(x, y, 0), img.get(x, y, 1), img.get(x, y, 2)], time });
        }
    }
    Ok(out)
}

/// Network, encoder and training settings of a radiance-field run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NerfSpec {
    pub architecture: Architecture,
    pub position: EncoderConfig,
    #[serde(default)]
    pub direction: Option<EncoderConfig>,
    pub train: NerfTrainConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationSpec {
    pub architecture: Architecture,
    pub encoder: EncoderConfig,
}

#[derive(Debug, Clone)]
pub struct SceneFit {
    pub net: FieldNetwork,
    pub encoders: NerfEncoders,
    pub deformation: Option<(FieldNetwork, Encoder)>,
    pub report: TrainReport,
}

impl SceneFit {
    /// Renders every view of `scene` and returns the images.
    pub fn render_views(&self, scene: &SyntheticScene, render: &RenderConfig, seed: u64) -> Result<Vec<Image>> {
        let canonical = NeuralField::software(&self.net, &self.encoders);
        scene
            .cameras
            .iter()
            .zip(&scene.times)
            .enumerate()
            .map(|(k, (cam, &t))| {
                let cfg = render.clone().at_time(t);
                let s = rng::mix(&[seed, k as u64]);
                let out = match &self.deformation {
                    None => render_image(&canonical, cam, &cfg, s)?,
                    Some((net, enc)) => {
                        let deformation = NetworkDeformation { net, encoder: enc };
                        render_image(&DeformedField { deformation: &deformation, canonical: &canonical }, cam, &cfg, s)?
                    }
                };
                Ok(out.image)
            })
            .collect()
    }
}

fn nerf_encoders(spec: &NerfSpec, noise: &NoiseModel) -> Result<NerfEncoders> {
    Ok(NerfEncoders {
        position: Encoder::new(spec.position.clone(), noise)?,
        direction: spec.direction.as_ref().map(|d| Encoder::new(d.clone(), noise)).transpose()?,
    })
}

/// Trains a static radiance field (or, with `deformation`, a dynamic one)
/// on every pixel of the synthetic views.
pub fn fit_scene(scene: &SyntheticScene, spec: &NerfSpec, deformation: Option<&DeformationSpec>, noise: &NoiseModel) -> Result<SceneFit> {
    let encoders = nerf_encoders(spec, noise)?;
    let mut r = rng::stream(spec.train.seed, 0x6e66);
    let mut net = spec.architecture.build(&encoders.groups(), &mut r)?;
    let data = scene_rays(scene, &spec.train.render)?;
    match deformation {
        None => {
            let report = train_nerf(&mut net, &encoders, &data, &spec.train)?;
            Ok(SceneFit { net, encoders, deformation: None, report })
        }
        Some(d) => {
            if d.encoder.input_dim != 4 {
                return Err(Error::config("deformation encoder takes (x, y, z, t)"));
            }
            let enc = Encoder::new(d.encoder.clone(), noise)?;
            let mut dnet = d.architecture.build(&[enc.output_dim()], &mut r)?;
            let report = train_dnerf(&mut dnet, &enc, &mut net, &encoders, &data, &spec.train)?;
            Ok(SceneFit { net, encoders, deformation: Some((dnet, enc)), report })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EncodingMode;
    use crate::field::Activation;

    #[test]
    fn matmul_rows_are_deterministic_and_haq_wins() {
        let spec = MatmulSpec { seeds: 3, ..MatmulSpec::default() };
        let rows = matmul_bench(&spec, &NoiseModel::fitted(), 0).unwrap();
        assert_eq!(rows, matmul_bench(&spec, &NoiseModel::fitted(), 0).unwrap());
        for r in &rows {
            assert!(r.haq_rmse < r.ptq_rmse, "{r:?}");
        }
    }

    #[test]
    fn noiseless_matmul_is_accurate() {
        let spec = MatmulSpec { seeds: 1, converters: ConverterBits::ideal(), ..MatmulSpec::default() };
        let quiet = NoiseModel::noiseless();
        assert!(haq_matmul_rmse(&spec, 1.5, &quiet, 0).unwrap() < 0.05);
        assert!(ptq_matmul_rmse(&spec, &quiet, 0).unwrap() < 0.05);
    }

    #[test]
    fn tiny_image_fit_and_deploy() {
        let img = crate::io::synthetic_image(8, 8, 1);
        let arch = Architecture::Mlp { width: 16, hidden_layers: 1, rank: None, out_dim: 1, out_activation: Activation::Identity };
        let enc = EncoderConfig::new(EncodingMode::Basic, 2, 1);
        let fit = fit_image(&img, &arch, &enc, &NoiseModel::fitted(), &TrainConfig::new(50, 1e-2)).unwrap();
        assert!(fit.report.final_loss() < fit.report.loss_trace[0]);
        let sw = fit.train_psnr().unwrap();
        let hw = deploy_fit(&fit, &DeployConfig::haq(vec![12], 1.5), &NoiseModel::fitted(), 0).unwrap();
        assert!(hw.psnr > sw - 6.0, "{} vs {sw}", hw.psnr);
        assert_eq!(hw.cells, 12 * fit.net.weight_count());
        assert!(fit_image(&img, &arch, &EncoderConfig::new(EncodingMode::Basic, 3, 1), &NoiseModel::fitted(), &TrainConfig::new(1, 1e-2)).is_err());
    }

    #[test]
    fn sweep_argmin() {
        assert_eq!(best_ratio(&[(1.2, 0.3), (1.5, 0.1), (2.0, 0.2)]), Some(1.5));
        assert_eq!(best_ratio(&[]), None);
    }
}
