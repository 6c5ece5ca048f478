use rand::Rng;

use super::noise::{gaussian, program_cell, CellState, NoiseModel};
use crate::error::{Error, Result};

/// Rows and columns of one physical macro.
pub const MACRO_DIM: usize = 512;

/// A single crossbar macro: conductances (µS) plus per-cell programming state.
///
/// Conductance and state are only mutated together through [`CrossbarArray::program`]
/// or [`CrossbarArray::restore`].
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    rows: usize,
    cols: usize,
    conductance: Vec<f64>,
    state: Vec<CellState>,
}

/// Rectangular window of an array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Region {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Region {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        row >= self.row0 && row < self.row0 + self.rows && col >= self.col0 && col < self.col0 + self.cols
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }
}

impl CrossbarArray {
    /// An unformed array. Dimensions are limited to one macro.
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::config("crossbar dimensions must be positive"));
        }
        if rows > MACRO_DIM || cols > MACRO_DIM {
            return Err(Error::Capacity(format!(
                "{rows}x{cols} exceeds the {MACRO_DIM}x{MACRO_DIM} macro; tile it"
            )));
        }
        Ok(Self {
            rows,
            cols,
            conductance: vec![0.0; rows * cols],
            state: vec![CellState::Unformed; rows * cols],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn full_region(&self) -> Region {
        Region { row0: 0, col0: 0, rows: self.rows, cols: self.cols }
    }

    fn index(&self, row: usize, col: usize) -> Result<usize> {
        if row >= self.rows || col >= self.cols {
            return Err(Error::OutOfBounds { row, col, rows: self.rows, cols: self.cols });
        }
        Ok(row * self.cols + col)
    }

    pub fn check_region(&self, region: &Region) -> Result<()> {
        if region.rows == 0
            || region.cols == 0
            || region.row0 + region.rows > self.rows
            || region.col0 + region.cols > self.cols
        {
            return Err(Error::dim(format!(
                "region {region:?} does not fit a {}x{} array",
                self.rows, self.cols
            )));
        }
        Ok(())
    }

    /// Stored (noise-free read) conductance.
    pub fn stored(&self, row: usize, col: usize) -> Result<f64> {
        Ok(self.conductance[self.index(row, col)?])
    }

    pub fn state(&self, row: usize, col: usize) -> Result<CellState> {
        Ok(self.state[self.index(row, col)?])
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    pub fn states(&self) -> &[CellState] {
        &self.state
    }

    /// Programs one cell with a single write pulse and returns the new conductance.
    pub fn program<R: Rng + ?Sized>(
        &mut self,
        row: usize,
        col: usize,
        target: CellState,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<f64> {
        let idx = self.index(row, col)?;
        let g = program_cell(target, noise, rng)?;
        self.conductance[idx] = g;
        self.state[idx] = target;
        Ok(g)
    }

    /// Writes a known conductance/state pair, e.g. when loading a snapshot.
    pub fn restore(&mut self, row: usize, col: usize, state: CellState, g: f64) -> Result<()> {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::data(format!("conductance {g} must be finite and non-negative")));
        }
        let idx = self.index(row, col)?;
        self.conductance[idx] = g;
        self.state[idx] = state;
        Ok(())
    }

    /// Noisy, non-destructive read of one cell.
    pub fn read<R: Rng + ?Sized>(
        &self,
        row: usize,
        col: usize,
        noise: &NoiseModel,
        rng: &mut R,
    ) -> Result<f64> {
        let idx = self.index(row, col)?;
        if self.state[idx] == CellState::Unformed {
            return Err(Error::State(format!("cell ({row}, {col}) is unformed")));
        }
        let g = self.conductance[idx];
        let eps = gaussian(rng, 0.0, noise.read_std_rel);
        Ok(g * (1.0 + eps))
    }

    pub fn region_is_programmed(&self, region: &Region) -> bool {
        (region.row0..region.row0 + region.rows).all(|r| {
            let base = r * self.cols;
            self.state[base + region.col0..base + region.col0 + region.cols]
                .iter()
                .all(|s| *s != CellState::Unformed)
        })
    }

    /// Copies the stored conductances of `region` into a row-major buffer.
    pub fn region_conductances(&self, region: &Region) -> Result<Vec<f64>> {
        self.check_region(region)?;
        let mut out = Vec::with_capacity(region.cells());
        for r in region.row0..region.row0 + region.rows {
            let base = r * self.cols;
            out.extend_from_slice(&self.conductance[base + region.col0..base + region.col0 + region.cols]);
        }
        Ok(out)
    }
}

/// Free function form of [`CrossbarArray::read`].
pub fn read_cell<R: Rng + ?Sized>(
    array: &CrossbarArray,
    row: usize,
    col: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<f64> {
    array.read(row, col, noise, rng)
}

/// Forms every cell of a fresh array, modelling forming as the LRS write
/// distribution. The resulting matrix is the physical entropy source for
/// Gaussian encoding.
pub fn form_random_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    noise: &NoiseModel,
    rng: &mut R,
) -> Result<CrossbarArray> {
    noise.validate()?;
    let mut array = CrossbarArray::new(rows, cols)?;
    for r in 0..rows {
        for c in 0..cols {
            array.program(r, c, CellState::Lrs, noise, rng)?;
        }
    }
    Ok(array)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn oversize_array_is_rejected() {
        assert!(matches!(CrossbarArray::new(513, 4), Err(Error::Capacity(_))));
        let mut r = rng::stream(0, 0);
        assert!(form_random_matrix(4, 600, &NoiseModel::fitted(), &mut r).is_err());
    }

    #[test]
    fn zero_noise_read_and_zero_conductance() {
        let mut a = CrossbarArray::new(2, 2).unwrap();
        a.restore(0, 0, CellState::Lrs, 30.0).unwrap();
        a.restore(0, 1, CellState::Hrs, 0.0).unwrap();
        let mut r = rng::stream(3, 0);
        let quiet = NoiseModel::fitted().with_read_noise(0.0);
        assert_eq!(a.read(0, 0, &quiet, &mut r).unwrap(), 30.0);
        let loud = NoiseModel::fitted().with_read_noise(0.5);
        for _ in 0..10 {
            assert_eq!(a.read(0, 1, &loud, &mut r).unwrap(), 0.0);
        }
    }

    #[test]
    fn read_errors() {
        let a = CrossbarArray::new(2, 2).unwrap();
        let mut r = rng::stream(3, 0);
        let n = NoiseModel::fitted();
        assert!(matches!(a.read(0, 0, &n, &mut r), Err(Error::State(_))));
        assert!(matches!(a.read(2, 0, &n, &mut r), Err(Error::OutOfBounds { .. })));
    }

    #[test]
    fn reads_are_non_destructive() {
        let mut r = rng::stream(5, 0);
        let n = NoiseModel::fitted().with_read_noise(0.05);
        let a = form_random_matrix(8, 8, &n, &mut r).unwrap();
        let before = a.clone();
        for i in 0..500 {
            a.read(i % 8, (i / 8) % 8, &n, &mut r).unwrap();
        }
        assert_eq!(a, before);
    }

    #[test]
    fn read_noise_statistics() {
        let mut a = CrossbarArray::new(1, 1).unwrap();
        a.restore(0, 0, CellState::Lrs, 30.0).unwrap();
        let n = NoiseModel::fitted().with_read_noise(0.01);
        let mut r = rng::stream(11, 0);
        let reads: Vec<f64> = (0..20_000).map(|_| a.read(0, 0, &n, &mut r).unwrap()).collect();
        let mean = reads.iter().sum::<f64>() / reads.len() as f64;
        let var = reads.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (reads.len() - 1) as f64;
        let cv = var.sqrt() / mean;
        assert!((cv - 0.01).abs() < 0.2 * 0.01, "cv {cv}");
    }

    #[test]
    fn zero_spread_forming_is_constant() {
        let mut r = rng::stream(0, 0);
        let n = NoiseModel::fitted().with_write_noise(0.0);
        let a = form_random_matrix(2, 2, &n, &mut r).unwrap();
        assert!(a.conductances().iter().all(|&g| g == n.lrs_mean));
        assert!(a.states().iter().all(|&s| s == CellState::Lrs));
    }

    #[test]
    fn forming_is_deterministic_per_seed() {
        let n = NoiseModel::fitted();
        let a = form_random_matrix(16, 16, &n, &mut rng::stream(9, 0)).unwrap();
        let b = form_random_matrix(16, 16, &n, &mut rng::stream(9, 0)).unwrap();
        let c = form_random_matrix(16, 16, &n, &mut rng::stream(10, 0)).unwrap();
        assert_eq!(a.conductances(), b.conductances());
        assert_ne!(a.conductances(), c.conductances());
    }
}
