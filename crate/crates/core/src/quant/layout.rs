use serde::{Deserialize, Serialize};

use crate::device::{Block, Chip, MACRO_DIM};
use crate::error::Result;

/// Where every bit plane of a logical `out × in` weight matrix lives.
///
/// Crossbar rows carry inputs and columns carry outputs, so plane `p` of the
/// matrix is split into `⌈in/512⌉ × ⌈out/512⌉` blocks. Each weight therefore
/// owns exactly one cell per plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneLayout {
    pub out_dim: usize,
    pub in_dim: usize,
    pub planes: usize,
    /// Indexed `[plane][row tile][col tile]`, flattened.
    pub blocks: Vec<Block>,
}

impl PlaneLayout {
    pub fn allocate(chip: &mut Chip, out_dim: usize, in_dim: usize, planes: usize) -> Result<Self> {
        let rt = in_dim.div_ceil(MACRO_DIM);
        let ct = out_dim.div_ceil(MACRO_DIM);
        let mut blocks = Vec::with_capacity(planes * rt * ct);
        for _ in 0..planes {
            for r in 0..rt {
                for c in 0..ct {
                    let rows = (in_dim - r * MACRO_DIM).min(MACRO_DIM);
                    let cols = (out_dim - c * MACRO_DIM).min(MACRO_DIM);
                    blocks.push(chip.allocate(rows, cols)?);
                }
            }
        }
        Ok(Self { out_dim, in_dim, planes, blocks })
    }

    pub fn row_tiles(&self) -> usize {
        self.in_dim.div_ceil(MACRO_DIM)
    }

    pub fn col_tiles(&self) -> usize {
        self.out_dim.div_ceil(MACRO_DIM)
    }

    pub fn block(&self, plane: usize, row_tile: usize, col_tile: usize) -> &Block {
        &self.blocks[(plane * self.row_tiles() + row_tile) * self.col_tiles() + col_tile]
    }

    /// `(array, row, col)` of the cell holding plane `plane` of weight `(out, inp)`.
    pub fn cell(&self, plane: usize, out: usize, inp: usize) -> (usize, usize, usize) {
        let b = self.block(plane, inp / MACRO_DIM, out / MACRO_DIM);
        (b.array, b.region.row0 + inp % MACRO_DIM, b.region.col0 + out % MACRO_DIM)
    }

    /// Cells of one weight, most significant plane first.
    pub fn cells_of(&self, out: usize, inp: usize) -> Vec<(usize, usize, usize)> {
        (0..self.planes).map(|p| self.cell(p, out, inp)).collect()
    }

    pub fn cell_count(&self) -> usize {
        self.blocks.iter().map(|b| b.region.cells()).sum()
    }

    /// Chain index serving output `out` for inputs in `row_tile`.
    pub fn chain(&self, row_tile: usize, out: usize) -> usize {
        row_tile * self.out_dim + out
    }

    pub fn chain_count(&self) -> usize {
        self.row_tiles() * self.out_dim
    }
}
