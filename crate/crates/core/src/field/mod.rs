//! Coordinate networks: layers, training, compression and deployment.

pub mod arch;
pub mod checkpoint;
pub mod deploy;
pub mod layer;
pub mod network;
pub mod prune;
pub mod train;

pub use arch::Architecture;
pub use deploy::{deploy, DeployConfig, DeployedNetwork, NodeMatrices, Scheme};
pub use layer::{Activation, Init, Node, Source, Weights};
pub use network::{identity_network, FieldNetwork, ForwardCache};
pub use prune::{
    apply_plan, masked_network, plan, pruned_rank, pruned_width, structured_prune, Compression, PrunePlan, PruneSpec,
};
pub use train::{train_regression, Adam, AdamConfig, TrainConfig, TrainReport};
