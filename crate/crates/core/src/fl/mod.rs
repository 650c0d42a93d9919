//! Multi-task hierarchical federated learning over dense networks.

pub mod aggregate;
pub mod hierarchy;
pub mod model;
pub mod train;

pub use aggregate::{fedavg_aggregate, AggregationScope};
pub use hierarchy::{history_csv, run_mthfl, split_users, ClusterState, RoundRecord, UserSplit};
pub use model::{DenseLayer, LayeredModel};
pub use train::{evaluate, local_train, split_train_eval, GpsWeighting, LocalUpdate, TrainingConfig};
