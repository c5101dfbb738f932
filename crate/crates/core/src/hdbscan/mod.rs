//! Density-based hierarchical clustering over a precomputed distance matrix.
//!
//! The pipeline is the usual one: core distances, mutual reachability,
//! minimum spanning tree, single-linkage hierarchy, condensed tree, and
//! finally flat cluster selection by Excess of Mass or by leaves.
//!
//! Everything is deterministic: ties resolve towards lower indices, and the
//! parallel parts only compute independent per-point values.

mod mst;
mod tree;

pub use mst::{
    build_hierarchy, core_distances, minimum_spanning_tree, mutual_reachability, Dendrogram, Merge,
    MstEdge, MutualReachability,
};
pub use tree::{
    condense_tree, lambda_of, select_clusters, selected_nodes, CondensedTree, HdbscanLabels,
    SelectionMethod, TreeEdge, LAMBDA_CAP, NOISE,
};

use crate::error::{Error, Result};
use crate::geometry::{Dissimilarity, DistanceMatrix};

/// Condensed tree for `dm`, without flat selection.
///
/// `min_samples` larger than `n - 1` is clamped so tiny inputs still cluster.
pub fn hdbscan_tree(
    dm: &DistanceMatrix,
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<CondensedTree> {
    let n = dm.n();
    if n < 2 {
        return Err(Error::Empty("clustering needs at least 2 points"));
    }
    if min_samples == 0 {
        return Err(Error::InvalidParams("min_samples must be >= 1".into()));
    }
    let core = core_distances(dm, min_samples.min(n - 1))?;
    let mreach = MutualReachability::new(dm, &core)?;
    let mst = minimum_spanning_tree(&mreach);
    let dendrogram = build_hierarchy(n, &mst);
    condense_tree(&dendrogram, min_cluster_size)
}

pub fn run_hdbscan(
    dm: &DistanceMatrix,
    min_cluster_size: usize,
    min_samples: usize,
    method: SelectionMethod,
) -> Result<HdbscanLabels> {
    let tree = hdbscan_tree(dm, min_cluster_size, min_samples)?;
    Ok(select_clusters(&tree, method))
}
