//! Dataset loaders, synthetic generators and per-user partitioning.

pub mod featfile;
pub mod idx;
pub mod partition;
pub mod synth;

pub use featfile::{encode_feature_file, load_feature_file, parse_feature_file, write_feature_file};
pub use idx::{load_idx, parse_idx_images, parse_idx_labels, parse_idx_pair};
pub use partition::{partition_dataset, TaskSpec, UserPartitionPlan, UserShare};
pub use synth::{planted_tasks, synth_pool, synth_tasks, PoolSpec, SynthSpec};
