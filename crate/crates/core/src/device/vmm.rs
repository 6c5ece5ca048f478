use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;

use super::converter::ConverterSpec;
use super::crossbar::{CrossbarArray, Region, MACRO_DIM};
use super::noise::{gaussian, CellState, NoiseModel};
use crate::error::{Error, Result};

/// Analog vector–matrix product on a window of one array.
///
/// Inputs are DAC-quantized and driven onto the rows; every cell is read with
/// fresh read noise; each column current is ADC-quantized and the universal
/// bias `bias_conductance · Σ x` is removed digitally.
pub fn vmm_region<R: Rng + ?Sized>(
    array: &CrossbarArray,
    region: Region,
    input: &[f64],
    conv: &ConverterSpec,
    bias_conductance: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    array.check_region(&region)?;
    if input.len() != region.rows {
        return Err(Error::dim(format!(
            "input length {} does not match {} crossbar rows",
            input.len(),
            region.rows
        )));
    }
    if !array.region_is_programmed(&region) {
        return Err(Error::State("vmm references unformed cells".into()));
    }
    let xq: Vec<f64> = input.iter().map(|&x| conv.dacq(x)).collect();
    let drive: f64 = xq.iter().sum();
    let mut currents = vec![0.0; region.cols];
    for (i, &x) in xq.iter().enumerate() {
        let row = region.row0 + i;
        for (j, acc) in currents.iter_mut().enumerate() {
            *acc += x * array.read(row, region.col0 + j, noise, rng)?;
        }
    }
    Ok(currents
        .into_iter()
        .map(|c| conv.adcq(c) - bias_conductance * drive)
        .collect())
}

/// [`vmm_region`] over the whole array.
pub fn vmm<R: Rng + ?Sized>(
    array: &CrossbarArray,
    input: &[f64],
    conv: &ConverterSpec,
    bias_conductance: f64,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<Vec<f64>> {
    vmm_region(array, array.full_region(), input, conv, bias_conductance, noise, rng)
}

/// Batched column currents `X · G` with read noise, for already DAC-quantized
/// inputs (`batch × rows`) and stored conductances (`rows × cols`).
///
/// Per-cell multiplicative read noise enters a column current as a sum of
/// independent Gaussians, so it is drawn once per output with variance
/// `σ² Σ_r x_r² g_rc²`; the result has the same distribution as reading every
/// cell individually.
pub fn column_currents<R: Rng + ?Sized>(
    x: ArrayView2<f64>,
    g: ArrayView2<f64>,
    read_std_rel: f64,
    rng: &mut R,
) -> Array2<f64> {
    let mut out = x.dot(&g);
    if read_std_rel > 0.0 {
        let var = x.mapv(|v| v * v).dot(&g.mapv(|v| v * v));
        Zip::from(&mut out).and(&var).for_each(|o, &v| {
            *o += gaussian(rng, 0.0, read_std_rel * v.sqrt());
        });
    }
    out
}

/// A logical matrix larger than one macro, split into a grid of macros whose
/// partial sums are accumulated digitally.
#[derive(Debug, Clone)]
pub struct TiledCrossbar {
    rows: usize,
    cols: usize,
    tiles: Vec<CrossbarArray>,
    tile_cols: usize,
}

impl TiledCrossbar {
    /// Loads explicit conductances (row-major `rows × cols`), marking every cell LRS.
    pub fn from_conductances(rows: usize, cols: usize, values: &[f64]) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::dim("conductance buffer does not match shape"));
        }
        let tile_rows = rows.div_ceil(MACRO_DIM);
        let tile_cols = cols.div_ceil(MACRO_DIM);
        let mut tiles = Vec::with_capacity(tile_rows * tile_cols);
        for tr in 0..tile_rows {
            for tc in 0..tile_cols {
                let r0 = tr * MACRO_DIM;
                let c0 = tc * MACRO_DIM;
                let nr = (rows - r0).min(MACRO_DIM);
                let nc = (cols - c0).min(MACRO_DIM);
                let mut a = CrossbarArray::new(nr, nc)?;
                for r in 0..nr {
                    for c in 0..nc {
                        a.restore(r, c, CellState::Lrs, values[(r0 + r) * cols + c0 + c])?;
                    }
                }
                tiles.push(a);
            }
        }
        Ok(Self { rows, cols, tiles, tile_cols })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tile_count(&self) -> usize {
        self.tiles.len()
    }

    /// Per-tile [`vmm`] with digital accumulation of the partial column sums.
    pub fn vmm<R: Rng + ?Sized>(
        &self,
        input: &[f64],
        conv: &ConverterSpec,
        bias_conductance: f64,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if input.len() != self.rows {
            return Err(Error::dim(format!("input length {} vs {} rows", input.len(), self.rows)));
        }
        let mut out = vec![0.0; self.cols];
        for (t, tile) in self.tiles.iter().enumerate() {
            let r0 = (t / self.tile_cols) * MACRO_DIM;
            let c0 = (t % self.tile_cols) * MACRO_DIM;
            let part = vmm(tile, &input[r0..r0 + tile.rows()], conv, bias_conductance, noise, rng)?;
            for (o, p) in out[c0..c0 + tile.cols()].iter_mut().zip(part) {
                *o += p;
            }
        }
        Ok(out)
    }
}
