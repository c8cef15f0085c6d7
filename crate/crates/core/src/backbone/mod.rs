//! The multi-branch backbone: configuration, construction, forward pass and
//! weight persistence.

mod config;
mod network;
mod weights;

pub use config::{load_config, NetConfig, StageSpec, Variant};
pub use network::{build_network, HrModule, Network, Stage};
pub use weights::{load_weights, save_weights, WEIGHTS_MAGIC, WEIGHTS_VERSION};
