//! Simulated 1T1R resistive crossbar hardware.

pub mod chip;
pub mod converter;
pub mod crossbar;
pub mod noise;
pub mod snapshot;
pub mod vcmac;
pub mod vmm;

pub use chip::{Block, Chip};
pub use converter::{ConverterBits, ConverterSpec, UniformQuantizer};
pub use crossbar::{form_random_matrix, read_cell, CrossbarArray, Region, MACRO_DIM};
pub use noise::{program_cell, CellState, NoiseModel};
pub use vcmac::{check_ratio, vcmac_aggregate, VcmacChain, MAX_RATIO, MIN_RATIO};
pub use vmm::{column_currents, vmm, vmm_region, TiledCrossbar};
