//! Files, datasets, manifests and end-to-end runs.

mod atomic;
pub mod manifest;
pub mod run;
pub mod stamp;
pub mod synth;
pub mod volume;

pub use atomic::atomic_write;
pub use manifest::{DatasetRef, ExperimentManifest, HapoSpec, SliceSpec, SoftwareSearch, Task};
pub use run::{deploy_checkpoint, render_scene, run, RunSummary};
pub use stamp::{verify, RunWriter, VerifyReport};
pub use synth::{load_poses, make_synthetic_scene, synthetic_image, PoseFile, SceneSpec, SyntheticScene};
pub use volume::{evenly_spaced, ingest_volume, phantom, phantom_value, validate_subset, Normalization, VolumeDataset};
