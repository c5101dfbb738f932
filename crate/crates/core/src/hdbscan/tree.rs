use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::mst::Dendrogram;

/// Lambda assigned to zero-distance separations (duplicate embeddings).
pub const LAMBDA_CAP: f64 = 1e12;

/// `1 / distance`, capped at [`LAMBDA_CAP`].
pub fn lambda_of(distance: f64) -> f64 {
    if distance <= 0.0 {
        LAMBDA_CAP
    } else {
        (1.0 / distance).min(LAMBDA_CAP)
    }
}

/// One record of the condensed hierarchy.
///
/// Cluster nodes are numbered from `n` upward (the root is `n`); children
/// always have larger numbers than their parent. A `child` below `n` is a
/// single point falling out of `parent` at `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CondensedTree {
    n: usize,
    min_cluster_size: usize,
    num_clusters: usize,
    edges: Vec<TreeEdge>,
}

impl CondensedTree {
    pub fn n_points(&self) -> usize {
        self.n
    }

    pub fn min_cluster_size(&self) -> usize {
        self.min_cluster_size
    }

    pub fn root(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    /// Cluster node ids in ascending (top-down) order.
    pub fn cluster_ids(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.num_clusters
    }

    pub fn cluster_children(&self, cluster: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.parent == cluster && e.child >= self.n)
            .map(|e| e.child)
            .collect()
    }

    /// The root only counts as a cluster when it is large enough.
    pub fn root_is_cluster(&self) -> bool {
        self.n >= self.min_cluster_size
    }

    /// Parent cluster of each cluster node (indexed by `id - n`); `None` for the root.
    pub fn cluster_parents(&self) -> Vec<Option<usize>> {
        let mut parents = vec![None; self.num_clusters];
        for e in self.edges.iter().filter(|e| e.child >= self.n) {
            parents[e.child - self.n] = Some(e.parent);
        }
        parents
    }

    /// Lambda at which each cluster node appears (indexed by `id - n`); the root's is 0.
    pub fn births(&self) -> Vec<f64> {
        let mut births = vec![0.0; self.num_clusters];
        for e in self.edges.iter().filter(|e| e.child >= self.n) {
            births[e.child - self.n] = e.lambda;
        }
        births
    }

    /// Stability of each cluster node (indexed by `id - n`):
    /// the sum over its points of `lambda_leave - lambda_birth`.
    pub fn stabilities(&self) -> Vec<f64> {
        let births = self.births();
        let mut stability = vec![0.0; self.num_clusters];
        for e in &self.edges {
            let p = e.parent - self.n;
            stability[p] += (e.lambda - births[p]) * e.child_size as f64;
        }
        stability
    }
}

/// Prunes a single-linkage dendrogram into the condensed cluster tree.
///
/// At each split, a side with fewer than `min_cluster_size` points sheds
/// its points from the parent; when both sides are large enough they
/// become two new child clusters; when only one is, it continues as the
/// parent cluster.
pub fn condense_tree(dendrogram: &Dendrogram, min_cluster_size: usize) -> Result<CondensedTree> {
    if min_cluster_size < 2 {
        return Err(Error::InvalidParams(format!(
            "min_cluster_size must be >= 2, got {min_cluster_size}"
        )));
    }
    let n = dendrogram.n;
    let mut edges = Vec::new();
    let mut next_label = n + 1;
    if dendrogram.merges.is_empty() {
        // One point: it falls out of the root immediately.
        if n == 1 {
            edges.push(TreeEdge {
                parent: n,
                child: 0,
                lambda: LAMBDA_CAP,
                child_size: 1,
            });
        }
        return Ok(CondensedTree {
            n,
            min_cluster_size,
            num_clusters: 1,
            edges,
        });
    }
    let root = dendrogram.root();
    let total_nodes = n + dendrogram.merges.len();
    // Condensed label carried by each dendrogram node; None = already shed.
    let mut relabel: Vec<Option<usize>> = vec![None; total_nodes];
    relabel[root] = Some(n);

    let shed = |edges: &mut Vec<TreeEdge>, parent: usize, node: usize, lambda: f64| {
        for p in dendrogram.leaves(node) {
            edges.push(TreeEdge {
                parent,
                child: p,
                lambda,
                child_size: 1,
            });
        }
    };

    // Dendrogram children always have smaller ids than their parent, so a
    // descending sweep visits every node after its parent.
    for node in (n..total_nodes).rev() {
        let Some(label) = relabel[node] else { continue };
        let m = dendrogram.merges[node - n];
        let lambda = lambda_of(m.distance);
        let (left, right) = (m.left, m.right);
        let (ls, rs) = (dendrogram.size(left), dendrogram.size(right));
        match (ls >= min_cluster_size, rs >= min_cluster_size) {
            (true, true) => {
                for (child, size) in [(left, ls), (right, rs)] {
                    relabel[child] = Some(next_label);
                    edges.push(TreeEdge {
                        parent: label,
                        child: next_label,
                        lambda,
                        child_size: size,
                    });
                    next_label += 1;
                }
            }
            (false, false) => {
                shed(&mut edges, label, left, lambda);
                shed(&mut edges, label, right, lambda);
            }
            (true, false) => {
                relabel[left] = Some(label);
                shed(&mut edges, label, right, lambda);
            }
            (false, true) => {
                relabel[right] = Some(label);
                shed(&mut edges, label, left, lambda);
            }
        }
    }
    Ok(CondensedTree {
        n,
        min_cluster_size,
        num_clusters: next_label - n,
        edges,
    })
}

/// How flat clusters are read off the condensed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SelectionMethod {
    /// Excess of Mass: the non-overlapping set of maximum total stability.
    #[default]
    ExcessOfMass,
    /// Every leaf of the condensed tree.
    Leaf,
}

impl FromStr for SelectionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eom" => Ok(SelectionMethod::ExcessOfMass),
            "leaf" => Ok(SelectionMethod::Leaf),
            other => Err(Error::UnknownMethod(other.to_string())),
        }
    }
}

impl fmt::Display for SelectionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionMethod::ExcessOfMass => "eom",
            SelectionMethod::Leaf => "leaf",
        })
    }
}

/// Selected cluster node ids, ascending.
pub fn selected_nodes(tree: &CondensedTree, method: SelectionMethod) -> Vec<usize> {
    let n = tree.n_points();
    let k = tree.cluster_ids().len();
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); k];
    for e in tree.edges().iter().filter(|e| e.child >= n) {
        children[e.parent - n].push(e.child);
    }
    let eligible = |c: usize| c != tree.root() || tree.root_is_cluster();

    let mut selected = vec![false; k];
    match method {
        SelectionMethod::Leaf => {
            for c in tree.cluster_ids() {
                if children[c - n].is_empty() && eligible(c) {
                    selected[c - n] = true;
                }
            }
        }
        SelectionMethod::ExcessOfMass => {
            let mut stability = tree.stabilities();
            for c in tree.cluster_ids().rev() {
                if !eligible(c) {
                    continue;
                }
                let subtree: f64 = children[c - n].iter().map(|&ch| stability[ch - n]).sum();
                if subtree > stability[c - n] {
                    stability[c - n] = subtree;
                } else {
                    // Ties keep the parent.
                    selected[c - n] = true;
                    let mut stack = children[c - n].clone();
                    while let Some(d) = stack.pop() {
                        selected[d - n] = false;
                        stack.extend_from_slice(&children[d - n]);
                    }
                }
            }
        }
    }
    tree.cluster_ids().filter(|&c| selected[c - n]).collect()
}

/// Flat labelling: `-1` for noise, otherwise `0..k` in tree order.
#[derive(Debug, Clone, PartialEq)]
pub struct HdbscanLabels {
    pub labels: Vec<i64>,
    /// Informational membership strength in `[0, 1]`; 0 for noise.
    pub probabilities: Vec<f64>,
}

pub const NOISE: i64 = -1;

impl HdbscanLabels {
    pub fn num_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn cluster_of(&self, point: usize) -> Option<usize> {
        usize::try_from(self.labels[point]).ok()
    }

    /// Member lists per flat cluster, and the noise points.
    pub fn groups(&self) -> (Vec<Vec<usize>>, Vec<usize>) {
        let mut groups = vec![Vec::new(); self.num_clusters()];
        let mut noise = Vec::new();
        for (i, &l) in self.labels.iter().enumerate() {
            match usize::try_from(l) {
                Ok(c) => groups[c].push(i),
                Err(_) => noise.push(i),
            }
        }
        (groups, noise)
    }
}

/// Flat clusters chosen by `method`.
///
/// A point belongs to the selected cluster that is its nearest ancestor in
/// the tree. Points that fell out of the hierarchy above every selected
/// cluster are noise.
pub fn select_clusters(tree: &CondensedTree, method: SelectionMethod) -> HdbscanLabels {
    let n = tree.n_points();
    let selected = selected_nodes(tree, method);
    let k = tree.cluster_ids().len();
    let mut flat_of_node = vec![None; k];
    for (flat, &c) in selected.iter().enumerate() {
        flat_of_node[c - n] = Some(flat);
    }
    let parents = tree.cluster_parents();
    // Resolve each cluster node to its nearest selected ancestor (or itself).
    let mut owner: Vec<Option<usize>> = vec![None; k];
    for c in tree.cluster_ids() {
        owner[c - n] = match flat_of_node[c - n] {
            Some(f) => Some(f),
            None => parents[c - n].and_then(|p| owner[p - n]),
        };
    }

    let mut labels = vec![NOISE; n];
    let mut point_lambda = vec![0.0; n];
    for e in tree.edges().iter().filter(|e| e.child < n) {
        point_lambda[e.child] = e.lambda;
        if let Some(f) = owner[e.parent - n] {
            labels[e.child] = f as i64;
        }
    }

    let mut max_lambda = vec![0.0f64; selected.len()];
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            let m = &mut max_lambda[l as usize];
            *m = m.max(point_lambda[i]);
        }
    }
    let probabilities = labels
        .iter()
        .zip(&point_lambda)
        .map(|(&l, &lam)| {
            if l < 0 {
                0.0
            } else {
                let max = max_lambda[l as usize];
                if max <= 0.0 {
                    1.0
                } else {
                    (lam.min(max) / max).min(1.0)
                }
            }
        })
        .collect();
    HdbscanLabels {
        labels,
        probabilities,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hdbscan::mst::{build_hierarchy, MstEdge};

    fn chain(weights: &[f64]) -> Dendrogram {
        let edges: Vec<MstEdge> = weights
            .iter()
            .enumerate()
            .map(|(i, &w)| MstEdge { a: i, b: i + 1, weight: w })
            .collect();
        build_hierarchy(weights.len() + 1, &edges)
    }

    #[test]
    fn lambda_convention() {
        assert_eq!(lambda_of(0.5), 2.0);
        assert_eq!(lambda_of(0.0), LAMBDA_CAP);
        assert_eq!(lambda_of(1e-20), LAMBDA_CAP);
    }

    #[test]
    fn equidistant_points_give_single_root() {
        // n = 6 < 2 * 4: no split can leave two sides of 4.
        let d = chain(&[0.3; 5]);
        let tree = condense_tree(&d, 4).unwrap();
        assert_eq!(tree.cluster_ids(), 6..7);
        assert_eq!(tree.edges().len(), 6);
        assert!(tree.edges().iter().all(|e| e.parent == 6 && e.child < 6));
        for method in [SelectionMethod::ExcessOfMass, SelectionMethod::Leaf] {
            let labels = select_clusters(&tree, method);
            assert_eq!(labels.labels, vec![0; 6]);
        }
    }

    #[test]
    fn too_few_points_are_all_noise() {
        let d = chain(&[0.3, 0.3]);
        let tree = condense_tree(&d, 4).unwrap();
        assert!(!tree.root_is_cluster());
        for method in [SelectionMethod::ExcessOfMass, SelectionMethod::Leaf] {
            assert_eq!(select_clusters(&tree, method).labels, vec![NOISE; 3]);
        }
    }

    #[test]
    fn two_groups_split_into_two_children() {
        // Points 0..4 and 4..8 joined by a long edge.
        let d = chain(&[0.1, 0.1, 0.1, 2.0, 0.1, 0.1, 0.1]);
        let tree = condense_tree(&d, 4).unwrap();
        assert_eq!(tree.cluster_children(8), vec![9, 10]);
        let labels = select_clusters(&tree, SelectionMethod::ExcessOfMass);
        assert_eq!(labels.labels, vec![0, 0, 0, 0, 1, 1, 1, 1]);
        let leaf = select_clusters(&tree, SelectionMethod::Leaf);
        assert_eq!(leaf.labels, labels.labels);
    }

    #[test]
    fn outlier_falls_out_without_child_split() {
        // Six tight points plus one far outlier at the end.
        let d = chain(&[0.1, 0.1, 0.1, 0.1, 0.1, 1.5]);
        let tree = condense_tree(&d, 4).unwrap();
        assert_eq!(tree.cluster_ids(), 7..8);
        let outlier = tree.edges().iter().find(|e| e.child == 6).unwrap();
        assert_eq!(outlier.parent, 7);
        assert!((outlier.lambda - 1.0 / 1.5).abs() < 1e-15);
        assert!(tree.edges().iter().filter(|e| e.child != 6).all(|e| e.lambda == 10.0));
    }

    #[test]
    fn stability_and_births() {
        let d = chain(&[0.1, 0.1, 0.1, 2.0, 0.1, 0.1, 0.1]);
        let tree = condense_tree(&d, 4).unwrap();
        let births = tree.births();
        assert_eq!(births, vec![0.0, 0.5, 0.5]);
        let s = tree.stabilities();
        assert!((s[0] - 8.0 * 0.5).abs() < 1e-12);
        assert!((s[1] - 4.0 * 9.5).abs() < 1e-9);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("eom".parse::<SelectionMethod>().unwrap(), SelectionMethod::ExcessOfMass);
        assert_eq!("leaf".parse::<SelectionMethod>().unwrap(), SelectionMethod::Leaf);
        assert!(matches!("best".parse::<SelectionMethod>(), Err(Error::UnknownMethod(_))));
        assert_eq!(SelectionMethod::Leaf.to_string(), "leaf");
    }

    #[test]
    fn min_cluster_size_below_two_is_rejected() {
        assert!(condense_tree(&chain(&[0.1]), 1).is_err());
    }
}
