use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Programmed state of a 1T1R cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellState {
    Lrs,
    Hrs,
    Unformed,
}

/// Parametric device noise. Conductances are in microsiemens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub lrs_mean: f64,
    pub lrs_std: f64,
    pub hrs_mean: f64,
    pub hrs_std: f64,
    /// Cycle-to-cycle read fluctuation, relative to the stored conductance.
    pub read_std_rel: f64,
    /// Spread of the systematic per-chain VCMAC stage gain error.
    pub vcmac_gain_err_rel: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::fitted()
    }
}

impl NoiseModel {
    /// LRS set distribution measured over 10,000 cells (29.22 ± 5.46 µS),
    /// with the configurable HRS/read/gain defaults.
    pub fn fitted() -> Self {
        Self {
            lrs_mean: 29.22,
            lrs_std: 5.46,
            hrs_mean: 2.0,
            hrs_std: 0.6,
            read_std_rel: 0.01,
            vcmac_gain_err_rel: 0.005,
            seed: 0,
        }
    }

    /// Same state means as [`NoiseModel::fitted`] with every noise source off.
    pub fn noiseless() -> Self {
        Self {
            lrs_std: 0.0,
            hrs_std: 0.0,
            read_std_rel: 0.0,
            vcmac_gain_err_rel: 0.0,
            ..Self::fitted()
        }
    }

    /// Sets both write spreads to `rel` times their state means.
    pub fn with_write_noise(mut self, rel: f64) -> Self {
        self.lrs_std = rel * self.lrs_mean;
        self.hrs_std = rel * self.hrs_mean;
        self
    }

    pub fn with_read_noise(mut self, rel: f64) -> Self {
        self.read_std_rel = rel;
        self
    }

    pub fn with_gain_error(mut self, rel: f64) -> Self {
        self.vcmac_gain_err_rel = rel;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lrs_mean,
            self.lrs_std,
            self.hrs_mean,
            self.hrs_std,
            self.read_std_rel,
            self.vcmac_gain_err_rel,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("noise parameters must be finite"));
        }
        if !(self.lrs_mean > self.hrs_mean && self.hrs_mean >= 0.0) {
            return Err(Error::config(format!(
                "need lrs_mean > hrs_mean >= 0, got {} and {}",
                self.lrs_mean, self.hrs_mean
            )));
        }
        if self.lrs_std < 0.0 || self.hrs_std < 0.0 {
            return Err(Error::config("write noise std must be non-negative"));
        }
        for (name, v) in [
            ("read_std_rel", self.read_std_rel),
            ("vcmac_gain_err_rel", self.vcmac_gain_err_rel),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }

    /// Conductance subtracted from every cell to obtain a signed bit value.
    pub fn signed_bias(&self) -> f64 {
        0.5 * (self.lrs_mean + self.hrs_mean)
    }

    /// Conductance corresponding to one unit of signed bit value.
    pub fn signed_scale(&self) -> f64 {
        0.5 * (self.lrs_mean - self.hrs_mean)
    }

    /// Signed bit value (≈ ±1) carried by conductance `g`.
    pub fn to_signed(&self, g: f64) -> f64 {
        (g - self.signed_bias()) / self.signed_scale()
    }

    /// Unsigned bit value (≈ 0/1) carried by conductance `g`.
    pub fn to_unsigned(&self, g: f64) -> f64 {
        (g - self.hrs_mean) / (self.lrs_mean - self.hrs_mean)
    }

    pub fn write_distribution(&self, target: CellState) -> Result<(f64, f64)> {
        match target {
            CellState::Lrs => Ok((self.lrs_mean, self.lrs_std)),
            CellState::Hrs => Ok((self.hrs_mean, self.hrs_std)),
            CellState::Unformed => Err(Error::config("cannot program a cell to UNFORMED")),
        }
    }

    /// Systematic gain error of one amplification chain.
    pub fn sample_gain_error<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        gaussian(rng, 0.0, self.vcmac_gain_err_rel)
    }
}

/// One Gaussian draw; a zero spread returns the mean without touching `rng`.
pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    if std == 0.0 {
        return mean;
    }
    Normal::new(mean, std).expect("std validated").sample(rng)
}

/// Draws the conductance of a freshly programmed cell.
///
/// The draw is Gaussian with the target state's parameters and clamped at 0.
pub fn program_cell<R: Rng + ?Sized>(
    target: CellState,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    let (mean, std) = noise.write_distribution(target)?;
    Ok(gaussian(rng, mean, std).max(0.0))
}
