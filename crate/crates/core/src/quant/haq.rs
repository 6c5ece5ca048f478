use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layout::PlaneLayout;
use crate::device::{CellState, Chip, NoiseModel, VcmacChain};
use crate::error::{Error, Result};

pub const MIN_BITS: usize = 4;
pub const MAX_BITS: usize = 16;

/// Signed multi-cell representation `w ≈ scale · Σ b_i · sig_i` of a weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HaqMapping {
    pub name: String,
    pub bits: usize,
    pub ratio: f64,
    pub tensor_scale: f64,
    pub layout: PlaneLayout,
    /// Characterised amplification chains, one per (row tile, output).
    pub chains: Vec<VcmacChain>,
    pub calibrated: bool,
    /// Per-chain significances used both for read-back compensation and for
    /// digital post-processing.
    pub significances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HaqOptions {
    /// Fold the measured chain gain error into the significances.
    pub calibrate: bool,
    /// Re-read every previously programmed cell at each step instead of
    /// caching its first read.
    pub reread: bool,
}

impl Default for HaqOptions {
    fn default() -> Self {
        Self { calibrate: true, reread: false }
    }
}

/// Ideal significances `(1/s)^i`.
pub fn ideal_significances(s: f64, bits: usize) -> Vec<f64> {
    (0..bits as i32).map(|i| s.powi(-i)).collect()
}

/// Significances realised by a chain with stage gain error `gamma`, normalised
/// to the MSB: `sig_i = (1 / (s·(1+γ)))^i`.
pub fn calibrate_significances(s: f64, gamma: f64, bits: usize) -> Vec<f64> {
    let stage = s * (1.0 + gamma);
    (0..bits as i32).map(|i| stage.powi(-i)).collect()
}

pub fn check_haq_params(bits: usize, ratio: f64) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(Error::config(format!("bits per weight must be in {MIN_BITS}..={MAX_BITS}, got {bits}")));
    }
    if !(ratio > 1.0 && ratio <= 2.5) {
        return Err(Error::config(format!("significance ratio must be in (1, 2.5], got {ratio}")));
    }
    Ok(())
}

/// Outcome of the greedy bit search for one weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    /// Requested polarity per cell (`true` = LRS / +1).
    pub polarity: Vec<bool>,
    /// Read-back signed value per cell.
    pub values: Vec<f64>,
    /// Programmed value after each cell.
    pub partial: Vec<f64>,
}

impl Trace {
    pub fn programmed(&self) -> f64 {
        *self.partial.last().unwrap_or(&0.0)
    }
}

/// Greedy program–read–compare loop on a scaled target in `[-1, 1]`.
///
/// `write(i, positive)` programs cell `i` and returns the signed value read
/// back from it; `reread(i)` re-reads an earlier cell when `Some`.
/// The first cell follows the sign of the target (zero counts as positive);
/// afterwards a programmed value below the target selects +1 and anything
/// else, including an exact tie, selects −1.
pub fn greedy_quantize(
    target: f64,
    sig: &[f64],
    mut write: impl FnMut(usize, bool) -> Result<f64>,
    mut reread: Option<&mut dyn FnMut(usize) -> Result<f64>>,
) -> Result<Trace> {
    let n = sig.len();
    let mut trace = Trace {
        polarity: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        partial: Vec::with_capacity(n),
    };
    let mut w_pro = 0.0;
    for i in 0..n {
        let positive = if i == 0 { target >= 0.0 } else { w_pro - target < 0.0 };
        let b = write(i, positive)?;
        trace.polarity.push(positive);
        trace.values.push(b);
        w_pro = match reread.as_deref_mut() {
            Some(read) if i > 0 => {
                let mut acc = b * sig[i];
                for (j, s) in sig.iter().enumerate().take(i) {
                    acc += read(j)? * s;
                }
                acc
            }
            _ => w_pro + b * sig[i],
        };
        trace.partial.push(w_pro);
    }
    Ok(trace)
}

/// Noise-free trace, where every cell reads back exactly ±1.
pub fn ideal_trace(target: f64, sig: &[f64]) -> Trace {
    greedy_quantize(target, sig, |_, p| Ok(if p { 1.0 } else { -1.0 }), None).expect("infallible")
}

/// Quantizes and programs `weights` (`out × in`) simultaneously, reading every
/// cell back right after its write so later cells compensate the actual
/// deviation of earlier ones.
pub fn haq_program<R: Rng + ?Sized>(
    name: &str,
    weights: ArrayView2<f64>,
    bits: usize,
    ratio: f64,
    chip: &mut Chip,
    noise: &NoiseModel,
    rng: &mut R,
    opts: HaqOptions,
) -> Result<HaqMapping> {
    check_haq_params(bits, ratio)?;
    noise.validate()?;
    let (out_dim, in_dim) = weights.dim();
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if !max_abs.is_finite() {
        return Err(Error::Numerical("non-finite weight".into()));
    }
    let tensor_scale = if max_abs > 0.0 { max_abs } else { 1.0 };
    let layout = PlaneLayout::allocate(chip, out_dim, in_dim, bits)?;

    let chains: Vec<VcmacChain> = (0..layout.chain_count())
        .map(|_| VcmacChain { ratio, gain_error: noise.sample_gain_error(rng) })
        .collect();
    let significances: Vec<Vec<f64>> = chains
        .iter()
        .map(|c| {
            if opts.calibrate {
                calibrate_significances(ratio, c.gain_error, bits)
            } else {
                ideal_significances(ratio, bits)
            }
        })
        .collect();

    for o in 0..out_dim {
        for i in 0..in_dim {
            let target = weights[[o, i]] / tensor_scale;
            let sig = &significances[layout.chain(i / crate::device::MACRO_DIM, o)];
            let cells = layout.cells_of(o, i);
            // Both closures need the chip and rng; a RefCell keeps the borrow local.
            let shared = std::cell::RefCell::new((&mut *chip, &mut *rng));
            let write = |k: usize, positive: bool| -> Result<f64> {
                let mut guard = shared.borrow_mut();
                let (chip, rng) = &mut *guard;
                let (a, r, c) = cells[k];
                let state = if positive { CellState::Lrs } else { CellState::Hrs };
                let arr = chip.array_mut(a)?;
                arr.program(r, c, state, noise, &mut **rng)?;
                Ok(noise.to_signed(arr.read(r, c, noise, &mut **rng)?))
            };
            let mut read = |k: usize| -> Result<f64> {
                let mut guard = shared.borrow_mut();
                let (chip, rng) = &mut *guard;
                let (a, r, c) = cells[k];
                Ok(noise.to_signed(chip.array(a)?.read(r, c, noise, &mut **rng)?))
            };
            let reread: Option<&mut dyn FnMut(usize) -> Result<f64>> =
                if opts.reread { Some(&mut read) } else { None };
            greedy_quantize(target, sig, write, reread)?;
        }
    }

    Ok(HaqMapping {
        name: name.to_owned(),
        bits,
        ratio,
        tensor_scale,
        layout,
        chains,
        calibrated: opts.calibrate,
        significances,
    })
}

impl HaqMapping {
    pub fn cell_count(&self) -> usize {
        self.layout.cell_count()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.layout.out_dim, self.layout.in_dim)
    }

    /// Reads every cell once and rebuilds the effective weights.
    pub fn dequantize<R: Rng + ?Sized>(&self, chip: &Chip, noise: &NoiseModel, rng: &mut R) -> Result<Array2<f64>> {
        let (out_dim, in_dim) = self.shape();
        let mut w = Array2::zeros((out_dim, in_dim));
        for o in 0..out_dim {
            for i in 0..in_dim {
                let sig = &self.significances[self.layout.chain(i / crate::device::MACRO_DIM, o)];
                let mut acc = 0.0;
                for (p, (a, r, c)) in self.layout.cells_of(o, i).into_iter().enumerate() {
                    let arr = chip
                        .array(a)
                        .map_err(|_| Error::dim(format!("mapping {} refers to missing array {a}", self.name)))?;
                    acc += noise.to_signed(arr.read(r, c, noise, rng)?) * sig[p];
                }
                w[[o, i]] = acc * self.tensor_scale;
            }
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use ndarray::array;

    #[test]
    fn three_bit_trace_for_0_6() {
        let t = ideal_trace(0.6, &ideal_significances(2.0, 3));
        assert_eq!(t.polarity, vec![true, false, true]);
        assert_eq!(t.partial, vec![1.0, 0.5, 0.75]);
        assert!((t.programmed() - 0.6 - 0.15).abs() < 1e-15);
    }

    #[test]
    fn zero_target_tie_rule() {
        let t = ideal_trace(0.0, &ideal_significances(2.0, 3));
        assert_eq!(t.polarity, vec![true, false, false]);
        assert_eq!(t.programmed(), 0.25);
    }

    #[test]
    fn parameter_validation() {
        assert!(check_haq_params(3, 1.5).is_err());
        assert!(check_haq_params(17, 1.5).is_err());
        assert!(check_haq_params(8, 1.0).is_err());
        assert!(check_haq_params(8, 2.6).is_err());
        assert!(check_haq_params(8, 2.5).is_ok());
    }

    #[test]
    fn calibrated_significance_deviation() {
        let ideal = ideal_significances(1.5, 3);
        let cal = calibrate_significances(1.5, 0.01, 3);
        assert_eq!(calibrate_significances(1.5, 0.0, 3), ideal);
        let worst = ideal
            .iter()
            .zip(&cal)
            .map(|(a, b)| (b / a - 1.0).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.01f64.powi(2) - 1.0);
        assert!(((cal[2] / ideal[2] - 1.0).abs() - (1.0 - 1.0 / 1.0201)).abs() < 1e-12);
    }

    #[test]
    fn noiseless_program_matches_trace_and_accounts_cells() {
        let w = array![[0.6, -0.3, 0.0], [1.2, -1.2, 0.05]];
        let mut chip = Chip::unlimited();
        let noise = NoiseModel::noiseless();
        let mut r = rng::stream(1, 0);
        let m = haq_program("w", w.view(), 6, 2.0, &mut chip, &noise, &mut r, HaqOptions::default()).unwrap();
        assert_eq!(m.cell_count(), 6 * 6);
        assert_eq!(chip.cells_allocated(), 36);
        assert_eq!(m.tensor_scale, 1.2);
        let deq = m.dequantize(&chip, &noise, &mut r).unwrap();
        let sig = ideal_significances(2.0, 6);
        for ((o, i), &x) in w.indexed_iter() {
            let expect = ideal_trace(x / 1.2, &sig).programmed() * 1.2;
            assert!((deq[[o, i]] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn insufficient_cells() {
        let w = Array2::<f64>::ones((300, 300));
        let mut chip = Chip::new(Some(1));
        let mut r = rng::stream(1, 0);
        let err = haq_program("w", w.view(), 4, 2.0, &mut chip, &NoiseModel::noiseless(), &mut r, HaqOptions::default());
        assert!(matches!(err, Err(Error::Capacity(_))));
    }

    #[test]
    fn reread_variant_runs_and_compensates() {
        let w = array![[0.37, -0.81]];
        let noise = NoiseModel::fitted();
        let mut chip = Chip::unlimited();
        let mut r = rng::stream(5, 0);
        let opts = HaqOptions { calibrate: true, reread: true };
        let m = haq_program("w", w.view(), 12, 1.5, &mut chip, &noise, &mut r, opts).unwrap();
        let deq = m.dequantize(&chip, &noise.with_read_noise(0.0), &mut r).unwrap();
        for (a, b) in w.iter().zip(deq.iter()) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }
}
