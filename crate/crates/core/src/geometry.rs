//! Cosine similarity kernels and condensed pairwise distance storage.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::types::{Cluster, Embedding};

/// Upper bound on a single condensed matrix, in bytes (4 GiB, roughly 32k points).
pub const DEFAULT_MATRIX_BUDGET_BYTES: usize = 4 << 30;

/// Read access to a symmetric dissimilarity with zero diagonal.
pub trait Dissimilarity: Sync {
    fn n(&self) -> usize;
    fn get(&self, i: usize, j: usize) -> f64;
}

/// All-pairs cosine distances in condensed upper-triangular form.
///
/// Entry `(i, j)` for `i < j` lives at
/// `n*i - i*(i+1)/2 + (j - i - 1)`. The diagonal is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

/// Position of `(i, j)`, `i < j < n`, in condensed storage.
#[inline]
pub fn condensed_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    n * i - i * (i + 1) / 2 + (j - i - 1)
}

/// Inverse of [`condensed_index`].
pub fn condensed_pair(n: usize, k: usize) -> (usize, usize) {
    debug_assert!(k < n * (n - 1) / 2);
    // Row i starts at start(i) = i*(2n - i - 1)/2; solve for the largest i with start(i) <= k.
    let nf = n as f64;
    let guess = ((2.0 * nf - 1.0) - ((2.0 * nf - 1.0).powi(2) - 8.0 * k as f64).sqrt()) / 2.0;
    let mut i = (guess.floor().max(0.0) as usize).min(n.saturating_sub(2));
    let start = |i: usize| i * (2 * n - i - 1) / 2;
    while i > 0 && start(i) > k {
        i -= 1;
    }
    while i + 1 < n - 1 && start(i + 1) <= k {
        i += 1;
    }
    (i, k - start(i) + i + 1)
}

fn condensed_len(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

impl DistanceMatrix {
    pub fn from_condensed(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != condensed_len(n) {
            return Err(Error::InvalidParams(format!(
                "condensed matrix for {n} points needs {} entries, got {}",
                condensed_len(n),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|d| !d.is_finite() || **d < 0.0) {
            return Err(Error::InvalidParams(format!("distance {bad} is not a finite nonnegative value")));
        }
        Ok(DistanceMatrix { n, data })
    }

    /// Builds a condensed matrix from a full square matrix, reading the upper triangle.
    pub fn from_square(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(condensed_len(n));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(&row[i + 1..]);
        }
        DistanceMatrix::from_condensed(n, data)
    }

    pub fn condensed(&self) -> &[f64] {
        &self.data
    }

    /// Distances from `i` to every point, including the zero self-distance.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.n).map(|j| self.get(i, j)).collect()
    }
}

impl Dissimilarity for DistanceMatrix {
    fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        use std::cmp::Ordering::*;
        match i.cmp(&j) {
            Equal => 0.0,
            Less => self.data[condensed_index(self.n, i, j)],
            Greater => self.data[condensed_index(self.n, j, i)],
        }
    }
}

/// Dot product with eight independent accumulators so the loop vectorizes.
/// The summation order is fixed, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

fn clamp_similarity(s: f64) -> f64 {
    s.clamp(-1.0, 1.0)
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(clamp_similarity(dot(a.values(), b.values()) / (na * nb)))
}

pub fn cosine_distance(a: &Embedding, b: &Embedding) -> Result<f64> {
    cosine_similarity(a, b).map(|s| 1.0 - s)
}

/// Pairwise cosine distances under [`DEFAULT_MATRIX_BUDGET_BYTES`].
pub fn pairwise_distance_matrix(points: &[&Embedding]) -> Result<DistanceMatrix> {
    pairwise_distance_matrix_with_budget(points, DEFAULT_MATRIX_BUDGET_BYTES)
}

/// Pairwise cosine distances; fails up front if the matrix would exceed `budget_bytes`.
///
/// Rows are filled in parallel. Each entry is computed independently, so
/// the result does not depend on the thread count.
pub fn pairwise_distance_matrix_with_budget(
    points: &[&Embedding],
    budget_bytes: usize,
) -> Result<DistanceMatrix> {
    let n = points.len();
    if n < 2 {
        return Err(Error::Empty("pairwise distances need at least 2 points"));
    }
    let dim = points[0].dim();
    if let Some(p) = points.iter().find(|p| p.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: p.dim(),
        });
    }
    let len = condensed_len(n);
    let required = len.saturating_mul(std::mem::size_of::<f64>());
    if required > budget_bytes {
        return Err(Error::MemoryBudget {
            points: n,
            required,
            available: budget_bytes,
        });
    }
    let inv_norms = points
        .iter()
        .map(|p| {
            let norm = p.norm();
            if norm == 0.0 {
                Err(Error::ZeroNorm)
            } else {
                Ok(1.0 / norm)
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    // Blocks of consecutive rows occupy contiguous condensed storage. Within
    // a block each column vector is loaded once and dotted against every row
    // of the block, which keeps the working set in cache.
    const BLOCK: usize = 32;
    let row_start = |i: usize| i * (2 * n - i - 1) / 2;
    let mut data = vec![0.0; len];
    let mut blocks: Vec<(usize, usize, &mut [f64])> = Vec::new();
    let mut rest = data.as_mut_slice();
    for i0 in (0..n - 1).step_by(BLOCK) {
        let i1 = (i0 + BLOCK).min(n - 1);
        let (chunk, tail) = rest.split_at_mut(row_start(i1) - row_start(i0));
        blocks.push((i0, i1, chunk));
        rest = tail;
    }
    blocks.into_par_iter().for_each(|(i0, i1, chunk)| {
        let base = row_start(i0);
        for j in i0 + 1..n {
            let b = points[j].values();
            for i in i0..i1.min(j) {
                let s = dot(points[i].values(), b) * inv_norms[i] * inv_norms[j];
                chunk[row_start(i) - base + (j - i - 1)] = 1.0 - clamp_similarity(s);
            }
        }
    });
    Ok(DistanceMatrix { n, data })
}

/// L2-renormalized arithmetic mean, summed in iteration order.
pub fn centroid<'a>(members: impl IntoIterator<Item = &'a Embedding>) -> Result<Embedding> {
    let mut iter = members.into_iter();
    let first = iter.next().ok_or(Error::Empty("centroid of no embeddings"))?;
    let mut sum = first.values().to_vec();
    let mut count = 1usize;
    for e in iter {
        if e.dim() != sum.len() {
            return Err(Error::DimensionMismatch {
                expected: sum.len(),
                actual: e.dim(),
            });
        }
        sum.iter_mut().zip(e.values()).for_each(|(s, v)| *s += v);
        count += 1;
    }
    let inv = 1.0 / count as f64;
    sum.iter_mut().for_each(|s| *s *= inv);
    let norm = sum.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return Err(Error::DegenerateCentroid);
    }
    sum.iter_mut().for_each(|s| *s /= norm);
    Embedding::new(sum)
}

/// Cosine similarity of two cluster centroids.
pub fn cluster_similarity(a: &Cluster, b: &Cluster) -> Result<f64> {
    cosine_similarity(a.centroid(), b.centroid())
}
