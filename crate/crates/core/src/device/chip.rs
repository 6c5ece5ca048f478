use super::crossbar::{CrossbarArray, Region, MACRO_DIM};
use crate::error::{Error, Result};

/// A rectangle of cells handed out by the [`Chip`] allocator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Block {
    pub array: usize,
    pub region: Region,
}

/// A pool of 512×512 macros with a bottom-left skyline allocator.
///
/// Arrays are created on demand ("virtual macros") up to an optional limit.
#[derive(Debug, Clone)]
pub struct Chip {
    arrays: Vec<CrossbarArray>,
    skylines: Vec<Vec<usize>>,
    max_arrays: Option<usize>,
    cells_allocated: usize,
}

impl Chip {
    pub fn new(max_arrays: Option<usize>) -> Self {
        Self { arrays: Vec::new(), skylines: Vec::new(), max_arrays, cells_allocated: 0 }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn arrays(&self) -> &[CrossbarArray] {
        &self.arrays
    }

    pub fn array(&self, id: usize) -> Result<&CrossbarArray> {
        self.arrays
            .get(id)
            .ok_or_else(|| Error::dim(format!("no array with id {id}")))
    }

    pub fn array_mut(&mut self, id: usize) -> Result<&mut CrossbarArray> {
        self.arrays
            .get_mut(id)
            .ok_or_else(|| Error::dim(format!("no array with id {id}")))
    }

    pub fn cells_allocated(&self) -> usize {
        self.cells_allocated
    }

    /// Reserves a `rows × cols` rectangle, opening a new macro when none of the
    /// existing ones has room.
    pub fn allocate(&mut self, rows: usize, cols: usize) -> Result<Block> {
        if rows == 0 || cols == 0 || rows > MACRO_DIM || cols > MACRO_DIM {
            return Err(Error::config(format!("block {rows}x{cols} must fit one macro")));
        }
        for (id, sky) in self.skylines.iter_mut().enumerate() {
            if let Some((row0, col0)) = place(sky, rows, cols) {
                self.cells_allocated += rows * cols;
                return Ok(Block { array: id, region: Region { row0, col0, rows, cols } });
            }
        }
        if self.max_arrays.is_some_and(|m| self.arrays.len() >= m) {
            return Err(Error::Capacity(format!(
                "no room for a {rows}x{cols} block in {} macro(s)",
                self.arrays.len()
            )));
        }
        self.arrays.push(CrossbarArray::new(MACRO_DIM, MACRO_DIM)?);
        self.skylines.push(vec![0; MACRO_DIM]);
        let id = self.arrays.len() - 1;
        let (row0, col0) = place(&mut self.skylines[id], rows, cols).expect("empty macro fits any block");
        self.cells_allocated += rows * cols;
        Ok(Block { array: id, region: Region { row0, col0, rows, cols } })
    }
}

/// Lowest, then left-most, position for the block; updates the skyline.
fn place(sky: &mut [usize], rows: usize, cols: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    for x in 0..=sky.len() - cols {
        let y = *sky[x..x + cols].iter().max().expect("cols > 0");
        if y + rows <= MACRO_DIM && best.is_none_or(|(by, _)| y < by) {
            best = Some((y, x));
        }
    }
    let (y, x) = best?;
    sky[x..x + cols].iter_mut().for_each(|h| *h = y + rows);
    Some((y, x))
}
