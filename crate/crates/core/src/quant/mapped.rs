use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::haq::HaqMapping;
use super::ptq::PtqMapping;
use crate::device::{column_currents, Chip, ConverterBits, ConverterSpec, NoiseModel, MACRO_DIM};
use crate::error::{Error, Result};

/// A weight matrix mapped onto cells by either scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum Mapping {
    Haq(HaqMapping),
    Ptq(PtqMapping),
}

impl Mapping {
    pub fn name(&self) -> &str {
        match self {
            Mapping::Haq(m) => &m.name,
            Mapping::Ptq(m) => &m.name,
        }
    }

    pub fn cell_count(&self) -> usize {
        match self {
            Mapping::Haq(m) => m.cell_count(),
            Mapping::Ptq(m) => m.cell_count(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        let l = self.layout();
        (l.out_dim, l.in_dim)
    }

    pub fn layout(&self) -> &super::layout::PlaneLayout {
        match self {
            Mapping::Haq(m) => &m.layout,
            Mapping::Ptq(m) => &m.layout,
        }
    }

    pub fn dequantize<R: Rng + ?Sized>(&self, chip: &Chip, noise: &NoiseModel, rng: &mut R) -> Result<Array2<f64>> {
        match self {
            Mapping::Haq(m) => m.dequantize(chip, noise, rng),
            Mapping::Ptq(m) => m.dequantize(chip, noise, rng),
        }
    }

    /// Structured-text manifest of the mapping; round-trips losslessly.
    pub fn to_manifest(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::data(e.to_string()))
    }

    pub fn from_manifest(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::data(e.to_string()))
    }
}

/// A mapped matrix ready for analog inference.
///
/// Stored conductances of every plane are gathered once per row tile
/// (`tile_rows × out`), since inference never reprograms cells.
#[derive(Debug, Clone)]
pub struct MappedMatrix {
    pub mapping: Mapping,
    pub noise: NoiseModel,
    pub converter: ConverterSpec,
    planes: Vec<Vec<Array2<f64>>>,
}

impl MappedMatrix {
    pub fn new(mapping: Mapping, chip: &Chip, noise: NoiseModel) -> Result<Self> {
        let layout = mapping.layout().clone();
        let mut planes = Vec::with_capacity(layout.row_tiles());
        for rt in 0..layout.row_tiles() {
            let rows = (layout.in_dim - rt * MACRO_DIM).min(MACRO_DIM);
            let mut per_plane = Vec::with_capacity(layout.planes);
            for p in 0..layout.planes {
                let mut g = Array2::zeros((rows, layout.out_dim));
                for ct in 0..layout.col_tiles() {
                    let b = layout.block(p, rt, ct);
                    let arr = chip.array(b.array)?;
                    if !arr.region_is_programmed(&b.region) {
                        return Err(Error::State(format!("mapping {} has unprogrammed cells", mapping.name())));
                    }
                    let vals = arr.region_conductances(&b.region)?;
                    let block = Array2::from_shape_vec((b.region.rows, b.region.cols), vals).expect("region shape");
                    let c0 = ct * MACRO_DIM;
                    g.slice_mut(s![.., c0..c0 + b.region.cols]).assign(&block);
                }
                per_plane.push(g);
            }
            planes.push(per_plane);
        }
        Ok(Self { mapping, noise, converter: ConverterSpec::ideal(), planes })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.mapping.shape()
    }

    /// Analog quantities that reach an ADC, per row tile: the VCMAC output
    /// (HAQ) or each plane's column currents (PTQ).
    fn analog<R: Rng + ?Sized>(&self, xq: ArrayView2<f64>, read_noise: bool, rng: &mut R) -> Vec<Vec<Array2<f64>>> {
        let std = if read_noise { self.noise.read_std_rel } else { 0.0 };
        let mut out = Vec::with_capacity(self.planes.len());
        for (rt, planes) in self.planes.iter().enumerate() {
            let r0 = rt * MACRO_DIM;
            let xt = xq.slice(s![.., r0..r0 + planes[0].nrows()]);
            match &self.mapping {
                Mapping::Haq(m) => {
                    let mut acc = Array2::zeros((xq.nrows(), m.layout.out_dim));
                    for (p, g) in planes.iter().enumerate() {
                        let cur = column_currents(xt, g.view(), std, rng);
                        let w: Array1<f64> = (0..m.layout.out_dim)
                            .map(|o| m.chains[m.layout.chain(rt, o)].raw_weights(m.bits)[p])
                            .collect();
                        acc += &(cur * &w);
                    }
                    out.push(vec![acc]);
                }
                Mapping::Ptq(_) => {
                    out.push(planes.iter().map(|g| column_currents(xt, g.view(), std, rng)).collect());
                }
            }
        }
        out
    }

    /// Sets DAC/ADC ranges from the noiseless min/max over a calibration batch.
    pub fn calibrate(&mut self, calibration: ArrayView2<f64>, bits: ConverterBits) -> Result<()> {
        bits.validate()?;
        self.check_input(calibration)?;
        let (lo, hi) = min_max(calibration.iter().copied());
        let dac_only = bits.spec((lo, hi), (0.0, 1.0));
        let xq = calibration.mapv(|x| dac_only.dacq(x));
        let mut dummy = crate::rng::stream(0, 0);
        let analog = self.analog(xq.view(), false, &mut dummy);
        let (alo, ahi) = min_max(analog.iter().flatten().flat_map(|a| a.iter().copied()));
        self.converter = bits.spec((lo, hi), (alo, ahi));
        self.converter.validate()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        let (_, in_dim) = self.shape();
        if x.ncols() != in_dim {
            return Err(Error::dim(format!("input width {} does not match matrix input {in_dim}", x.ncols())));
        }
        Ok(())
    }

    /// Hardware product `x · Wᵀ` for a batch `x` (`batch × in`).
    pub fn matmul<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let conv = &self.converter;
        let xq = x.mapv(|v| conv.dacq(v));
        let analog = self.analog(xq.view(), true, rng);
        let (out_dim, _) = self.shape();
        let mut y = Array2::zeros((x.nrows(), out_dim));
        let bias = self.noise.signed_bias();
        for (rt, currents) in analog.into_iter().enumerate() {
            let r0 = rt * MACRO_DIM;
            let rows = self.planes[rt][0].nrows();
            let drive: Array1<f64> = xq.slice(s![.., r0..r0 + rows]).sum_axis(Axis(1));
            match &self.mapping {
                Mapping::Haq(m) => {
                    let a = currents[0].mapv(|v| conv.adcq(v));
                    let scale = m.tensor_scale / self.noise.signed_scale();
                    for o in 0..out_dim {
                        let chain = m.layout.chain(rt, o);
                        let corr = if m.calibrated { m.chains[chain].correction(m.bits) } else { 1.0 };
                        let sig_sum: f64 = m.significances[chain].iter().sum();
                        for b in 0..x.nrows() {
                            y[[b, o]] += (a[[b, o]] * corr - bias * drive[b] * sig_sum) * scale;
                        }
                    }
                }
                Mapping::Ptq(m) => {
                    let span = self.noise.lrs_mean - self.noise.hrs_mean;
                    let mut code_dot = Array2::<f64>::zeros((x.nrows(), out_dim));
                    for (p, cur) in currents.into_iter().enumerate() {
                        let weight = m.plane_weight(p);
                        let mut q = cur.mapv(|v| conv.adcq(v));
                        for (mut row, &d) in q.axis_iter_mut(Axis(0)).zip(drive.iter()) {
                            row.mapv_inplace(|v| (v - self.noise.hrs_mean * d) / span * weight);
                        }
                        code_dot += &q;
                    }
                    let zp = m.quantizer.zero_point as f64;
                    for (mut row, &d) in code_dot.axis_iter_mut(Axis(0)).zip(drive.iter()) {
                        row.mapv_inplace(|v| (v - zp * d) * m.quantizer.scale);
                    }
                    y += &code_dot;
                }
            }
        }
        Ok(y)
    }
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    if lo.is_finite() && hi.is_finite() {
        (lo, hi)
    } else {
        (0.0, 0.0)
    }
}
