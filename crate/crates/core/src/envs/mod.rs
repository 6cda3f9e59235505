//! Built-in benchmark environments and policy constructors.

pub mod bandit;
pub mod graph;
pub mod policies;
pub mod sepsis;

pub use bandit::{build_bandit, BanditConfig, BanditDataset, BanditPolicy, BanditPolicyKind, BanditProblem, BanditSample};
pub use graph::{build_graph, GraphConfig};
pub use policies::{noised_policy, optimal_policy};
pub use sepsis::{build_sepsis, SepsisConfig};
