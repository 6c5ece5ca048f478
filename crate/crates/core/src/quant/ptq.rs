use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layout::PlaneLayout;
use crate::device::{CellState, Chip, NoiseModel};
use crate::error::{Error, Result};

/// Per-tensor asymmetric uniform quantizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymmetricQuantizer {
    pub bits: usize,
    pub scale: f64,
    pub zero_point: i64,
}

impl AsymmetricQuantizer {
    /// Fits scale and zero point to the tensor range (extended to contain 0).
    pub fn fit(values: impl IntoIterator<Item = f64>, bits: usize) -> Result<Self> {
        if !(1..=16).contains(&bits) {
            return Err(Error::config(format!("PTQ bit width must be in 1..=16, got {bits}")));
        }
        let (mut lo, mut hi) = (0.0f64, 0.0f64);
        for v in values {
            if !v.is_finite() {
                return Err(Error::Numerical("non-finite weight".into()));
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let top = ((1u64 << bits) - 1) as f64;
        let scale = if hi > lo { (hi - lo) / top } else { 1.0 };
        let zero_point = (-lo / scale).round().clamp(0.0, top) as i64;
        Ok(Self { bits, scale, zero_point })
    }

    pub fn top_code(&self) -> u64 {
        (1u64 << self.bits) - 1
    }

    pub fn quantize(&self, w: f64) -> u64 {
        ((w / self.scale).round() + self.zero_point as f64).clamp(0.0, self.top_code() as f64) as u64
    }

    pub fn dequantize(&self, code: f64) -> f64 {
        (code - self.zero_point as f64) * self.scale
    }
}

/// Baseline mapping: digital codes written bit by bit with no read-back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PtqMapping {
    pub name: String,
    pub quantizer: AsymmetricQuantizer,
    /// Planes are ordered MSB first; plane `p` carries weight `2^(bits-1-p)`.
    pub layout: PlaneLayout,
}

pub fn ptq_program<R: Rng + ?Sized>(
    name: &str,
    weights: ArrayView2<f64>,
    bits: usize,
    chip: &mut Chip,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<PtqMapping> {
    noise.validate()?;
    let quantizer = AsymmetricQuantizer::fit(weights.iter().copied(), bits)?;
    let (out_dim, in_dim) = weights.dim();
    let layout = PlaneLayout::allocate(chip, out_dim, in_dim, bits)?;
    for o in 0..out_dim {
        for i in 0..in_dim {
            let code = quantizer.quantize(weights[[o, i]]);
            for (p, (a, r, c)) in layout.cells_of(o, i).into_iter().enumerate() {
                let bit = (code >> (bits - 1 - p)) & 1 == 1;
                let state = if bit { CellState::Lrs } else { CellState::Hrs };
                chip.array_mut(a)?.program(r, c, state, noise, rng)?;
            }
        }
    }
    Ok(PtqMapping { name: name.to_owned(), quantizer, layout })
}

impl PtqMapping {
    pub fn bits(&self) -> usize {
        self.quantizer.bits
    }

    pub fn cell_count(&self) -> usize {
        self.layout.cell_count()
    }

    pub fn plane_weight(&self, plane: usize) -> f64 {
        (1u64 << (self.bits() - 1 - plane)) as f64
    }

    /// Reads every cell once and applies `Σ b_i 2^i` then the affine rescale.
    pub fn dequantize<R: Rng + ?Sized>(&self, chip: &Chip, noise: &NoiseModel, rng: &mut R) -> Result<Array2<f64>> {
        let (out_dim, in_dim) = (self.layout.out_dim, self.layout.in_dim);
        let mut w = Array2::zeros((out_dim, in_dim));
        for o in 0..out_dim {
            for i in 0..in_dim {
                let mut code = 0.0;
                for (p, (a, r, c)) in self.layout.cells_of(o, i).into_iter().enumerate() {
                    let arr = chip
                        .array(a)
                        .map_err(|_| Error::dim(format!("mapping {} refers to missing array {a}", self.name)))?;
                    code += noise.to_unsigned(arr.read(r, c, noise, rng)?) * self.plane_weight(p);
                }
                w[[o, i]] = self.quantizer.dequantize(code);
            }
        }
        Ok(w)
    }
}
