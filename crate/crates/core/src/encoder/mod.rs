//! Coordinate encodings: none, basic, positional and crossbar-derived Gaussian.

mod cordic;

pub use cordic::{cordic_sincos, FIXED_POINT_FLOOR, MAX_ITERATIONS};

use std::f64::consts::TAU;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::device::{column_currents, form_random_matrix, ConverterSpec, CrossbarArray, NoiseModel};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncodingMode {
    None,
    Basic,
    Positional,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencySpacing {
    /// `f_j = ω · 2^j`
    Log2,
    /// `f_j = j / ω`
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub mode: EncodingMode,
    pub input_dim: usize,
    pub feature_count: usize,
    pub positional_scale: f64,
    pub gaussian_sigma: f64,
    pub frequency_spacing: FrequencySpacing,
    pub concat_raw_input: bool,
    pub cordic_iterations: u32,
    /// Seed of the forming run that produces the Gaussian matrix.
    pub matrix_seed: u64,
}

impl EncoderConfig {
    pub fn new(mode: EncodingMode, input_dim: usize, feature_count: usize) -> Self {
        Self {
            mode,
            input_dim,
            feature_count,
            positional_scale: 1.0,
            gaussian_sigma: 1.0,
            frequency_spacing: FrequencySpacing::Log2,
            concat_raw_input: false,
            cordic_iterations: 24,
            matrix_seed: 0,
        }
    }

    /// Three coordinates, 64 Gaussian features and the raw input: width 131.
    pub fn ct() -> Self {
        Self { concat_raw_input: true, ..Self::new(EncodingMode::Gaussian, 3, 64) }
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.gaussian_sigma = sigma;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.positional_scale = scale;
        self
    }

    pub fn with_spacing(mut self, spacing: FrequencySpacing) -> Self {
        self.frequency_spacing = spacing;
        self
    }

    pub fn with_concat(mut self, concat: bool) -> Self {
        self.concat_raw_input = concat;
        self
    }

    pub fn with_matrix_seed(mut self, seed: u64) -> Self {
        self.matrix_seed = seed;
        self
    }

    pub fn output_dim(&self) -> usize {
        let (d, m) = (self.input_dim, self.feature_count);
        let core = match self.mode {
            EncodingMode::None => d,
            EncodingMode::Basic => 2 * d,
            EncodingMode::Positional => 2 * m * d,
            EncodingMode::Gaussian => 2 * m,
        };
        core + if self.concat_raw_input { d } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::config("encoder input_dim must be positive"));
        }
        if matches!(self.mode, EncodingMode::Positional | EncodingMode::Gaussian) && self.feature_count == 0 {
            return Err(Error::config("encoder feature_count must be positive"));
        }
        if self.cordic_iterations == 0 {
            return Err(Error::config("cordic_iterations must be at least 1"));
        }
        if !(self.positional_scale.is_finite() && self.positional_scale > 0.0) {
            return Err(Error::config("positional_scale must be positive"));
        }
        if !(self.gaussian_sigma.is_finite() && self.gaussian_sigma > 0.0) {
            return Err(Error::config("gaussian_sigma must be positive"));
        }
        Ok(())
    }

    fn frequencies(&self) -> Vec<f64> {
        (0..self.feature_count)
            .map(|j| match self.frequency_spacing {
                FrequencySpacing::Log2 => self.positional_scale * 2f64.powi(j as i32),
                FrequencySpacing::Linear => j as f64 / self.positional_scale,
            })
            .collect()
    }
}

/// Standardizes the conductances of a formed `d × m` array into the
/// projection `B` (`m × d`) with `B = σ (G − mean) / std`.
pub fn standardize_formed_matrix(array: &CrossbarArray, sigma: f64) -> Result<Array2<f64>> {
    let (mean, std) = formed_stats(array)?;
    let g = Array2::from_shape_vec((array.rows(), array.cols()), array.conductances().to_vec())
        .expect("array shape");
    Ok(g.t().mapv(|v| sigma * (v - mean) / std))
}

fn formed_stats(array: &CrossbarArray) -> Result<(f64, f64)> {
    if !array.region_is_programmed(&array.full_region()) {
        return Err(Error::State("Gaussian matrix source has unformed cells".into()));
    }
    let g = array.conductances();
    let n = g.len() as f64;
    let mean = g.iter().sum::<f64>() / n;
    let var = g.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Numerical("formed matrix has zero variance".into()));
    }
    Ok((mean, var.sqrt()))
}

/// Frozen Gaussian projection and the array it was derived from.
#[derive(Debug, Clone)]
pub struct GaussianProjection {
    pub array: CrossbarArray,
    /// `m × d`
    pub b: Array2<f64>,
    mean: f64,
    std: f64,
}

/// An immutable encoder.
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    projection: Option<GaussianProjection>,
}

impl Encoder {
    /// Builds the encoder; Gaussian mode forms a fresh `d × m` array seeded by
    /// `noise.seed` and `config.matrix_seed`.
    pub fn new(config: EncoderConfig, noise: &NoiseModel) -> Result<Self> {
        config.validate()?;
        if config.mode != EncodingMode::Gaussian {
            return Ok(Self { config, projection: None });
        }
        let mut r = rng::stream(rng::mix(&[noise.seed, config.matrix_seed]), 0x6e6e);
        let array = form_random_matrix(config.input_dim, config.feature_count, noise, &mut r)?;
        Self::from_array(config, array)
    }

    /// Gaussian encoder over an existing formed array (e.g. a loaded snapshot).
    pub fn from_array(config: EncoderConfig, array: CrossbarArray) -> Result<Self> {
        config.validate()?;
        if config.mode != EncodingMode::Gaussian {
            return Err(Error::config("from_array requires Gaussian mode"));
        }
        if array.rows() != config.input_dim || array.cols() != config.feature_count {
            return Err(Error::dim(format!(
                "formed array is {}x{}, encoder needs {}x{}",
                array.rows(),
                array.cols(),
                config.input_dim,
                config.feature_count
            )));
        }
        let (mean, std) = formed_stats(&array)?;
        let b = standardize_formed_matrix(&array, config.gaussian_sigma)?;
        Ok(Self { config, projection: Some(GaussianProjection { array, b, mean, std }) })
    }

    pub fn output_dim(&self) -> usize {
        self.config.output_dim()
    }

    pub fn projection(&self) -> Option<&GaussianProjection> {
        self.projection.as_ref()
    }

    /// Encodes one coordinate vector.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.encode_batch(x)?.row(0).to_vec())
    }

    /// Encodes a batch (`n × d`) with the frozen projection.
    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check(x)?;
        let proj = match &self.projection {
            Some(p) => Some(x.dot(&p.b.t())),
            None => None,
        };
        Ok(self.assemble(x, proj))
    }

    /// Gaussian encoding with `B x` computed as an analog product on the
    /// formed array: the inputs drive the rows through the DAC, column
    /// currents pass the ADC, and the mean/std standardization is applied
    /// digitally. Other modes fall back to [`Encoder::encode_batch`].
    pub fn encode_batch_hardware<R: Rng + ?Sized>(
        &self,
        x: ArrayView2<f64>,
        conv: &ConverterSpec,
        read_std_rel: f64,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        self.check(x)?;
        let Some(p) = &self.projection else {
            return self.encode_batch(x);
        };
        let xq = x.mapv(|v| conv.dacq(v));
        let g = Array2::from_shape_vec((p.array.rows(), p.array.cols()), p.array.conductances().to_vec())
            .expect("array shape");
        let currents = column_currents(xq.view(), g.view(), read_std_rel, rng).mapv(|c| conv.adcq(c));
        let drive: Array1<f64> = xq.sum_axis(Axis(1));
        let k = self.config.gaussian_sigma / p.std;
        let mut bx = currents;
        for (mut row, &s) in bx.axis_iter_mut(Axis(0)).zip(drive.iter()) {
            row.mapv_inplace(|c| k * (c - p.mean * s));
        }
        Ok(self.assemble(x, Some(bx)))
    }

    /// Analog output range of the formed array for inputs in `[lo, hi]^d`.
    pub fn hardware_current_range(&self, lo: f64, hi: f64) -> Option<(f64, f64)> {
        let p = self.projection.as_ref()?;
        let d = p.array.rows() as f64;
        let gmax = p.array.conductances().iter().cloned().fold(0.0, f64::max);
        Some((d * lo.min(0.0) * gmax, d * hi.max(0.0) * gmax))
    }

    /// Gradient with respect to the coordinates given the gradient with
    /// respect to the features (`n × output_dim`) produced from them.
    pub fn backward(&self, features: ArrayView2<f64>, grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        let cfg = &self.config;
        if features.dim() != grad.dim() || features.ncols() != cfg.output_dim() {
            return Err(Error::dim("feature gradient shape mismatch"));
        }
        let d = cfg.input_dim;
        let raw = if cfg.concat_raw_input { d } else { 0 };
        let freqs = cfg.frequencies();
        let mut gx = Array2::zeros((features.nrows(), d));
        for i in 0..features.nrows() {
            let f = features.row(i);
            let g = grad.row(i);
            let mut out = gx.row_mut(i);
            for k in 0..raw {
                out[k] += g[k];
            }
            // d/dθ of [cos θ, sin θ] paired with the incoming gradient.
            let dtheta = |c: usize, s: usize| -> f64 { -f[raw + s] * g[raw + c] + f[raw + c] * g[raw + s] };
            match cfg.mode {
                EncodingMode::None => {
                    for k in 0..d {
                        out[k] += g[raw + k];
                    }
                }
                EncodingMode::Basic => {
                    for k in 0..d {
                        out[k] += TAU * dtheta(k, d + k);
                    }
                }
                EncodingMode::Positional => {
                    for (j, &fr) in freqs.iter().enumerate() {
                        for k in 0..d {
                            out[k] += TAU * fr * dtheta(2 * d * j + k, 2 * d * j + d + k);
                        }
                    }
                }
                EncodingMode::Gaussian => {
                    let b = &self.projection.as_ref().expect("projection").b;
                    let m = cfg.feature_count;
                    for r in 0..m {
                        let dt = TAU * dtheta(r, m + r);
                        for k in 0..d {
                            out[k] += dt * b[[r, k]];
                        }
                    }
                }
            }
        }
        Ok(gx)
    }

    fn check(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.config.input_dim {
            return Err(Error::dim(format!(
                "coordinate length {} does not match encoder input {}",
                x.ncols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn assemble(&self, x: ArrayView2<f64>, projected: Option<Array2<f64>>) -> Array2<f64> {
        let cfg = &self.config;
        let n = cfg.cordic_iterations;
        let width = cfg.output_dim();
        let raw = if cfg.concat_raw_input { cfg.input_dim } else { 0 };
        let mut out = Array2::zeros((x.nrows(), width));
        let freqs = cfg.frequencies();
        for (i, xi) in x.axis_iter(Axis(0)).enumerate() {
            let mut row = out.row_mut(i);
            for k in 0..raw {
                row[k] = xi[k];
            }
            let body = &mut row.as_slice_mut().expect("contiguous")[raw..];
            match cfg.mode {
                EncodingMode::None => body.copy_from_slice(xi.as_slice().unwrap_or(&xi.to_vec())),
                EncodingMode::Basic => sincos_into(xi, 1.0, n, body),
                EncodingMode::Positional => {
                    let d = cfg.input_dim;
                    for (j, &f) in freqs.iter().enumerate() {
                        sincos_into(xi, f, n, &mut body[2 * d * j..2 * d * (j + 1)]);
                    }
                }
                EncodingMode::Gaussian => {
                    let bx = projected.as_ref().expect("projection").row(i).to_owned();
                    sincos_into(bx.view(), 1.0, n, body);
                }
            }
        }
        out
    }
}

/// Writes `[cos(2π f v), sin(2π f v)]` for every component of `v`.
fn sincos_into(v: ArrayView1<f64>, f: f64, iterations: u32, out: &mut [f64]) {
    let k = v.len();
    for (i, &x) in v.iter().enumerate() {
        let (s, c) = cordic_sincos(TAU * f * x, iterations);
        out[i] = c;
        out[k + i] = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_examples() {
        let e = Encoder::new(EncoderConfig::new(EncodingMode::Basic, 1, 0), &NoiseModel::fitted()).unwrap();
        let y = e.encode(&[0.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-6 && y[1].abs() < 1e-6);
        let y = e.encode(&[0.25]).unwrap();
        assert!(y[0].abs() < 1e-6 && (y[1] - 1.0).abs() < 1e-6);
        let a = e.encode(&[0.37]).unwrap();
        let b = e.encode(&[1.37]).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn ct_configuration_has_width_131() {
        let e = Encoder::new(EncoderConfig::ct(), &NoiseModel::fitted()).unwrap();
        assert_eq!(e.output_dim(), 131);
        let y = e.encode(&[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(y.len(), 131);
        assert_eq!(&y[..3], &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn standardization_moments_and_zero_variance() {
        let noise = NoiseModel::fitted();
        let mut r = rng::stream(1, 0);
        let a = form_random_matrix(2, 500, &noise, &mut r).unwrap();
        let b = standardize_formed_matrix(&a, 3.0).unwrap();
        let n = b.len() as f64;
        let mean = b.sum() / n;
        let std = (b.mapv(|v| (v - mean).powi(2)).sum() / n).sqrt();
        assert!(mean.abs() < 1e-12 * 3.0);
        assert!((std - 3.0).abs() < 1e-9);
        let flat = form_random_matrix(2, 3, &NoiseModel::noiseless(), &mut r).unwrap();
        assert!(standardize_formed_matrix(&flat, 1.0).is_err());
    }

    #[test]
    fn dimension_mismatch_and_unformed_source() {
        let e = Encoder::new(EncoderConfig::new(EncodingMode::Basic, 2, 0), &NoiseModel::fitted()).unwrap();
        assert!(matches!(e.encode(&[0.0]), Err(Error::Dimension(_))));
        let cfg = EncoderConfig::new(EncodingMode::Gaussian, 2, 4);
        assert!(Encoder::from_array(cfg, CrossbarArray::new(2, 4).unwrap()).is_err());
    }

    #[test]
    fn gaussian_determinism() {
        let noise = NoiseModel::fitted().with_seed(5);
        let cfg = EncoderConfig::new(EncodingMode::Gaussian, 2, 16).with_sigma(2.0);
        let e1 = Encoder::new(cfg.clone(), &noise).unwrap();
        let e2 = Encoder::new(cfg, &noise).unwrap();
        assert_eq!(e1.projection().unwrap().b, e2.projection().unwrap().b);
        assert_eq!(e1.encode(&[0.3, -0.2]).unwrap(), e1.encode(&[0.3, -0.2]).unwrap());
    }

    #[test]
    fn hardware_path_matches_frozen_matrix_with_ideal_converters() {
        let noise = NoiseModel::fitted();
        let e = Encoder::new(EncoderConfig::new(EncodingMode::Gaussian, 3, 8).with_concat(true), &noise).unwrap();
        let x = Array2::from_shape_fn((5, 3), |(i, j)| (i as f64 - 2.0) * 0.1 + j as f64 * 0.05);
        let mut r = rng::stream(0, 0);
        let hw = e.encode_batch_hardware(x.view(), &ConverterSpec::ideal(), 0.0, &mut r).unwrap();
        let sw = e.encode_batch(x.view()).unwrap();
        for (a, b) in hw.iter().zip(sw.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        for mode in [EncodingMode::None, EncodingMode::Basic, EncodingMode::Positional, EncodingMode::Gaussian] {
            let mut cfg = EncoderConfig::new(mode, 3, 4).with_concat(true).with_scale(0.7);
            cfg.cordic_iterations = 40;
            let e = Encoder::new(cfg, &NoiseModel::fitted()).unwrap();
            let x = Array2::from_shape_fn((2, 3), |(i, j)| 0.1 * i as f64 - 0.2 * j as f64 + 0.05);
            let f = e.encode_batch(x.view()).unwrap();
            let g = Array2::from_shape_fn(f.dim(), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
            let gx = e.backward(f.view(), g.view()).unwrap();
            let h = 1e-4;
            for i in 0..2 {
                for k in 0..3 {
                    let mut xp = x.clone();
                    xp[[i, k]] += h;
                    let up = (&e.encode_batch(xp.view()).unwrap() * &g).sum();
                    xp[[i, k]] -= 2.0 * h;
                    let down = (&e.encode_batch(xp.view()).unwrap() * &g).sum();
                    let fd = (up - down) / (2.0 * h);
                    assert!((fd - gx[[i, k]]).abs() < 1e-3 * fd.abs().max(1.0), "{mode:?}: {fd} vs {}", gx[[i, k]]);
                }
            }
        }
    }

    fn mode_strategy() -> impl Strategy<Value = EncodingMode> {
        prop_oneof![
            Just(EncodingMode::None),
            Just(EncodingMode::Basic),
            Just(EncodingMode::Positional),
            Just(EncodingMode::Gaussian)
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn output_dimension_and_range(mode in mode_strategy(), d in 1usize..4, m in 2usize..6, concat: bool,
                                      x in proptest::collection::vec(-2.0f64..2.0, 4)) {
            let cfg = EncoderConfig::new(mode, d, m).with_concat(concat).with_scale(0.5);
            let e = Encoder::new(cfg.clone(), &NoiseModel::fitted()).unwrap();
            let y = e.encode(&x[..d]).unwrap();
            let core = match mode {
                EncodingMode::None => d,
                EncodingMode::Basic => 2 * d,
                EncodingMode::Positional => 2 * m * d,
                EncodingMode::Gaussian => 2 * m,
            };
            prop_assert_eq!(y.len(), core + if concat { d } else { 0 });
            let raw = if concat { d } else { 0 };
            if mode != EncodingMode::None {
                prop_assert!(y[raw..].iter().all(|v| v.abs() <= 1.0 + 1e-9));
            }
        }
    }
}
