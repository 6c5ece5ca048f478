use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::NoiseModel;
use crate::error::{Error, Result};

/// Supported amplification ratio of the current-mirror chain.
pub const MIN_RATIO: f64 = 1.1;
pub const MAX_RATIO: f64 = 2.5;

/// One variable-current multiplicative amplification chain.
///
/// Each stage multiplies the running current by `ratio · (1 + gain_error)` and
/// adds the next source-line current. The gain error is systematic: it is
/// drawn once when the chain is characterised and never changes afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VcmacChain {
    pub ratio: f64,
    pub gain_error: f64,
}

pub fn check_ratio(s: f64) -> Result<()> {
    if !(MIN_RATIO..=MAX_RATIO).contains(&s) {
        return Err(Error::config(format!(
            "significance ratio {s} outside the supported {MIN_RATIO}..={MAX_RATIO}"
        )));
    }
    Ok(())
}

impl VcmacChain {
    pub fn ideal(ratio: f64) -> Result<Self> {
        check_ratio(ratio)?;
        Ok(Self { ratio, gain_error: 0.0 })
    }

    pub fn sample<R: Rng + ?Sized>(ratio: f64, noise: &NoiseModel, rng: &mut R) -> Result<Self> {
        check_ratio(ratio)?;
        Ok(Self { ratio, gain_error: noise.sample_gain_error(rng) })
    }

    pub fn stage_gain(&self) -> f64 {
        self.ratio * (1.0 + self.gain_error)
    }

    /// Chain output for MSB-first bit currents, normalised by the nominal
    /// `ratio^(n-1)`. With zero gain error this is `Σ B_i (1/s)^i`.
    pub fn aggregate(&self, bit_currents: &[f64]) -> Result<f64> {
        let (first, rest) = bit_currents
            .split_first()
            .ok_or_else(|| Error::config("VCMAC needs at least one bit current"))?;
        let gain = self.stage_gain();
        let acc = rest.iter().fold(*first, |acc, &b| acc * gain + b);
        Ok(acc * self.ratio.powi(-(rest.len() as i32)))
    }

    /// Digital factor removing the chain's common gain `(1+γ)^(n-1)`, after
    /// which the output equals `Σ B_i sig_i` with the calibrated significances.
    pub fn correction(&self, bits: usize) -> f64 {
        (1.0 + self.gain_error).powi(-(bits.saturating_sub(1) as i32))
    }

    /// Per-stage effective weight of each MSB-first position in the raw
    /// [`VcmacChain::aggregate`] output.
    pub fn raw_weights(&self, bits: usize) -> Vec<f64> {
        let n = bits as i32;
        (0..n)
            .map(|i| self.ratio.powi(-i) * (1.0 + self.gain_error).powi(n - 1 - i))
            .collect()
    }
}

/// Aggregates bit-plane currents on a freshly characterised chain.
pub fn vcmac_aggregate<R: Rng + ?Sized>(
    bit_currents: &[f64],
    s: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    VcmacChain::sample(s, noise, rng)?.aggregate(bit_currents)
}
