use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Dissimilarity, DistanceMatrix};

/// Distance from each point to its `min_samples`-th nearest neighbour, self excluded.
pub fn core_distances<D: Dissimilarity>(dm: &D, min_samples: usize) -> Result<Vec<f64>> {
    let n = dm.n();
    if n < 2 {
        return Err(Error::Empty("core distances need at least 2 points"));
    }
    if min_samples < 1 || min_samples > n - 1 {
        return Err(Error::InvalidParams(format!(
            "min_samples must be in 1..={} for {n} points, got {min_samples}",
            n - 1
        )));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut row: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| dm.get(i, j)).collect();
            let (_, kth, _) = row.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// `max(core(i), core(j), d(i, j))` evaluated on demand.
pub struct MutualReachability<'a, D> {
    base: &'a D,
    core: &'a [f64],
}

impl<'a, D: Dissimilarity> MutualReachability<'a, D> {
    pub fn new(base: &'a D, core: &'a [f64]) -> Result<Self> {
        if core.len() != base.n() {
            return Err(Error::DimensionMismatch {
                expected: base.n(),
                actual: core.len(),
            });
        }
        Ok(MutualReachability { base, core })
    }
}

impl<D: Dissimilarity> Dissimilarity for MutualReachability<'_, D> {
    fn n(&self) -> usize {
        self.base.n()
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        self.base.get(i, j).max(self.core[i]).max(self.core[j])
    }
}

/// Materialized mutual-reachability matrix.
pub fn mutual_reachability(dm: &DistanceMatrix, core: &[f64]) -> Result<DistanceMatrix> {
    let view = MutualReachability::new(dm, core)?;
    let n = dm.n();
    let mut data = Vec::with_capacity(dm.condensed().len());
    for i in 0..n {
        for j in i + 1..n {
            data.push(view.get(i, j));
        }
    }
    DistanceMatrix::from_condensed(n, data)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm over a dense dissimilarity, O(n²) time and O(n) extra space.
///
/// Grows from point 0. Ties pick the lowest-index candidate, and a candidate
/// keeps its earlier attachment point when a new one is only equally close.
pub fn minimum_spanning_tree<D: Dissimilarity>(d: &D) -> Vec<MstEdge> {
    let n = d.n();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut attach = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let w = d.get(current, j);
            if w < best[j] {
                best[j] = w;
                attach[j] = current;
            }
            if next == usize::MAX || best[j] < next_w {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push(MstEdge {
            a: attach[next],
            b: next,
            weight: next_w,
        });
        current = next;
    }
    edges
}

/// One agglomeration step. Node ids below `n` are points; merge `k` creates node `n + k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub distance: f64,
    pub size: usize,
}

/// Single-linkage merge sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub n: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn root(&self) -> usize {
        if self.merges.is_empty() {
            0
        } else {
            self.n + self.merges.len() - 1
        }
    }

    pub fn size(&self, node: usize) -> usize {
        if node < self.n {
            1
        } else {
            self.merges[node - self.n].size
        }
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.distance).collect()
    }

    /// Points under `node`, in depth-first order.
    pub fn leaves(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.size(node));
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                let m = &self.merges[x - self.n];
                stack.push(m.right);
                stack.push(m.left);
            }
        }
        out
    }
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> usize {
        let (big, small) = if self.size[a] >= self.size[b] { (a, b) } else { (b, a) };
        self.parent[small] = big;
        self.size[big] += self.size[small];
        big
    }
}

/// Kruskal-style replay of MST edges in ascending weight order.
///
/// Equal weights are ordered by their endpoint pair so the merge sequence
/// is independent of the order `mst` arrives in.
pub fn build_hierarchy(n: usize, mst: &[MstEdge]) -> Dendrogram {
    let mut edges = mst.to_vec();
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then_with(|| (x.a.min(x.b), x.a.max(x.b)).cmp(&(y.a.min(y.b), y.a.max(y.b))))
    });
    let mut uf = UnionFind::new(n);
    // Dendrogram node currently representing each union-find root.
    let mut node_of: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for e in edges {
        let (ra, rb) = (uf.find(e.a), uf.find(e.b));
        if ra == rb {
            continue;
        }
        let (na, nb) = (node_of[ra], node_of[rb]);
        let size = uf.size[ra] + uf.size[rb];
        let root = uf.union(ra, rb);
        node_of[root] = n + merges.len();
        merges.push(Merge {
            left: na.min(nb),
            right: na.max(nb),
            distance: e.weight,
            size,
        });
    }
    Dendrogram { n, merges }
}
