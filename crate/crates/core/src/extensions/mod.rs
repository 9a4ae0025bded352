//! Protocol variants that reuse the overlay machinery: all-cast from any peer,
//! several sources per substream, and capacity clusters.

mod allcast;
mod cluster;
mod multisource;

pub use allcast::{
    allcast_coverage_check, allcast_route, allcast_step, AllCastHop, AllCastStream, CameFrom, CoverageReport, Via,
};
pub use cluster::{cluster_assign, structural_edges, Cluster, ClusterError, ClusterPlan, Donation};
pub use multisource::{
    apply_size_directive, end_links, even_sizes, multi_source_bootstrap, multi_source_with_sizes,
    rebalance_until_quiet, subtree_size_rebalance, subtree_sizes, EndLink, MultiSourceError, SizeDirective,
};
