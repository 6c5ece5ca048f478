use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform mid-rise quantizer over `[lo, hi]`. `bits == None` passes values
/// through untouched, which stands in for an ideal converter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformQuantizer {
    pub bits: Option<u32>,
    pub lo: f64,
    pub hi: f64,
}

impl UniformQuantizer {
    pub fn new(bits: Option<u32>, lo: f64, hi: f64) -> Self {
        Self { bits, lo, hi }
    }

    pub fn pass_through() -> Self {
        Self { bits: None, lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    /// Width of one code.
    pub fn step(&self) -> f64 {
        match self.bits {
            Some(b) => (self.hi - self.lo) / (1u64 << b) as f64,
            None => 0.0,
        }
    }

    pub fn quantize(&self, x: f64) -> f64 {
        let Some(bits) = self.bits else { return x };
        let levels = (1u64 << bits) as f64;
        let step = (self.hi - self.lo) / levels;
        if step <= 0.0 {
            return 0.5 * (self.lo + self.hi);
        }
        let code = ((x - self.lo) / step).floor().clamp(0.0, levels - 1.0);
        self.lo + (code + 0.5) * step
    }

    fn validate(&self, name: &str, max_bits: u32) -> Result<()> {
        if let Some(b) = self.bits {
            if b < 1 || b > max_bits {
                return Err(Error::config(format!("{name} bits must be in 1..={max_bits}, got {b}")));
            }
            if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
                return Err(Error::config(format!(
                    "{name} range [{}, {}] must be finite and ordered",
                    self.lo, self.hi
                )));
            }
        }
        Ok(())
    }
}

/// DAC/ADC pair of the hybrid platform.
///
/// The input range is in the units of the vector driven onto the bit lines;
/// the output range is in column-current units (µS × input units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConverterSpec {
    pub dac: UniformQuantizer,
    pub adc: UniformQuantizer,
}

pub const MAX_DAC_BITS: u32 = 16;
pub const MAX_ADC_BITS: u32 = 14;

impl ConverterSpec {
    pub fn new(dac_bits: u32, adc_bits: u32, input_range: (f64, f64), output_range: (f64, f64)) -> Result<Self> {
        let spec = Self {
            dac: UniformQuantizer::new(Some(dac_bits), input_range.0, input_range.1),
            adc: UniformQuantizer::new(Some(adc_bits), output_range.0, output_range.1),
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Ideal converters on both sides.
    pub fn ideal() -> Self {
        Self { dac: UniformQuantizer::pass_through(), adc: UniformQuantizer::pass_through() }
    }

    pub fn validate(&self) -> Result<()> {
        self.dac.validate("DAC", MAX_DAC_BITS)?;
        self.adc.validate("ADC", MAX_ADC_BITS)
    }

    pub fn dacq(&self, x: f64) -> f64 {
        self.dac.quantize(x)
    }

    pub fn adcq(&self, y: f64) -> f64 {
        self.adc.quantize(y)
    }

    pub fn with_input_range(mut self, lo: f64, hi: f64) -> Self {
        self.dac.lo = lo;
        self.dac.hi = hi;
        self
    }

    pub fn with_output_range(mut self, lo: f64, hi: f64) -> Self {
        self.adc.lo = lo;
        self.adc.hi = hi;
        self
    }
}

/// Bit widths for the DAC/ADC of a deployed layer; ranges are calibrated later.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConverterBits {
    pub dac_bits: Option<u32>,
    pub adc_bits: Option<u32>,
}

impl Default for ConverterBits {
    fn default() -> Self {
        Self { dac_bits: Some(8), adc_bits: Some(14) }
    }
}

impl ConverterBits {
    pub fn ideal() -> Self {
        Self { dac_bits: None, adc_bits: None }
    }

    pub fn validate(&self) -> Result<()> {
        self.spec((0.0, 1.0), (0.0, 1.0)).validate()
    }

    pub fn spec(&self, input_range: (f64, f64), output_range: (f64, f64)) -> ConverterSpec {
        let q = |bits: Option<u32>, (lo, hi): (f64, f64)| match bits {
            Some(_) => UniformQuantizer::new(bits, lo, hi),
            None => UniformQuantizer::pass_through(),
        };
        ConverterSpec { dac: q(self.dac_bits, input_range), adc: q(self.adc_bits, output_range) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mid_rise_levels_and_saturation() {
        let q = UniformQuantizer::new(Some(2), 0.0, 1.0);
        assert_eq!(q.quantize(0.0), 0.125);
        assert_eq!(q.quantize(0.3), 0.375);
        assert_eq!(q.quantize(0.99), 0.875);
        assert_eq!(q.quantize(5.0), 0.875);
        assert_eq!(q.quantize(-5.0), 0.125);
        assert_eq!(UniformQuantizer::pass_through().quantize(0.123), 0.123);
    }

    #[test]
    fn bit_limits() {
        assert!(ConverterSpec::new(8, 14, (0.0, 1.0), (0.0, 1.0)).is_ok());
        assert!(ConverterSpec::new(17, 14, (0.0, 1.0), (0.0, 1.0)).is_err());
        assert!(ConverterSpec::new(8, 15, (0.0, 1.0), (0.0, 1.0)).is_err());
        assert!(ConverterSpec::new(0, 14, (0.0, 1.0), (0.0, 1.0)).is_err());
        assert!(ConverterSpec::new(8, 14, (1.0, 0.0), (0.0, 1.0)).is_err());
    }

    proptest! {
        #[test]
        fn monotone_and_idempotent(bits in 1u32..=16, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let q = UniformQuantizer::new(Some(bits), -1.0, 2.0);
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(q.quantize(x) <= q.quantize(y));
            let once = q.quantize(a);
            prop_assert_eq!(q.quantize(once), once);
            prop_assert!((once - a.clamp(-1.0, 2.0)).abs() <= q.step() / 2.0 + 1e-12);
        }
    }
}
