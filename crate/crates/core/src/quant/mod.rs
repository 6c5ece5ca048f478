//! Weight-to-cell mapping: hardware-aware quantization and the PTQ baseline.

pub mod haq;
pub mod layout;
pub mod mapped;
pub mod ptq;

pub use haq::{
    calibrate_significances, greedy_quantize, haq_program, ideal_significances, ideal_trace, HaqMapping,
    HaqOptions, Trace,
};
pub use layout::PlaneLayout;
pub use mapped::{MappedMatrix, Mapping};
pub use ptq::{ptq_program, AsymmetricQuantizer, PtqMapping};
