//! Analysis of conditional-independence networks.

mod communities;
mod network;
mod paths;
mod stats;

pub use communities::{communities, modularity, CommunityStructure};
pub use network::{EdgeList, Network};
pub use paths::{path_decomposition, PathContribution, PathKind, PathReport, PATH_WARN_LIMIT};
pub use stats::{brandes_betweenness, network_stats, NodeStat, NodeStats, StatsTable, STAT_COLUMNS};
