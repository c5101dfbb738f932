//! Scoring a clustering against ground-truth speaker labels.
//!
//! Cluster Purity is the share of a cluster held by its dominant speaker.
//! Cluster Uniqueness counts speakers that dominate exactly one cluster and
//! divides by the number of clusters. Noise points belong to no cluster and
//! are reported on their own.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry;
use crate::types::{Cluster, ClusterId, ClusteringResult, Corpus};

pub const STAGE_FILTER: &str = "filter_small_clusters";

/// Ground-truth label per corpus index.
pub fn corpus_labels(corpus: &Corpus) -> Vec<Option<&str>> {
    corpus
        .utterances()
        .iter()
        .map(|u| u.true_speaker.as_deref())
        .collect()
}

fn member_labels<'a, S: AsRef<str>>(cluster: &Cluster, labels: &'a [Option<S>]) -> Result<Vec<&'a str>> {
    let mut missing = Vec::new();
    let mut out = Vec::with_capacity(cluster.len());
    for &m in cluster.members() {
        match labels.get(m).and_then(|l| l.as_ref()) {
            Some(l) => out.push(l.as_ref()),
            None => missing.push(format!("#{m}")),
        }
    }
    if missing.is_empty() {
        Ok(out)
    } else {
        Err(Error::MissingLabels(missing))
    }
}

/// Dominant speaker and its utterance count. Ties go to the
/// lexicographically smallest label.
pub fn dominant_speaker<'a, S: AsRef<str>>(
    cluster: &Cluster,
    labels: &'a [Option<S>],
) -> Result<(&'a str, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in member_labels(cluster, labels)? {
        *counts.entry(l).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (l, c) in counts {
        if best.is_none_or(|(_, b)| c > b) {
            best = Some((l, c));
        }
    }
    best.ok_or(Error::Empty("cluster has no members"))
}

pub fn cluster_purity<S: AsRef<str>>(cluster: &Cluster, labels: &[Option<S>]) -> Result<f64> {
    let (_, count) = dominant_speaker(cluster, labels)?;
    Ok(count as f64 / cluster.len() as f64)
}

/// `(speakers dominating exactly one cluster, that count / number of clusters)`.
pub fn cluster_uniqueness<S: AsRef<str>>(
    clusters: &[Cluster],
    labels: &[Option<S>],
) -> Result<(usize, f64)> {
    if clusters.is_empty() {
        return Err(Error::Empty("cluster uniqueness needs at least one cluster"));
    }
    let mut dominated: BTreeMap<&str, usize> = BTreeMap::new();
    for c in clusters {
        let (speaker, _) = dominant_speaker(c, labels)?;
        *dominated.entry(speaker).or_default() += 1;
    }
    let unique = dominated.values().filter(|&&n| n == 1).count();
    Ok((unique, unique as f64 / clusters.len() as f64))
}

/// Drops clusters with fewer than `min_utterances` members; their members become noise.
pub fn filter_small_clusters(result: &ClusteringResult, min_utterances: usize) -> ClusteringResult {
    let mut out = result.clone();
    let before = out.clusters.len();
    let (kept, dropped): (Vec<Cluster>, Vec<Cluster>) = std::mem::take(&mut out.clusters)
        .into_iter()
        .partition(|c| c.len() >= min_utterances);
    out.clusters = kept;
    out.noise.extend(dropped.iter().flat_map(|c| c.members().iter().copied()));
    out.noise.sort_unstable();
    out.log_stage(STAGE_FILTER, before);
    out
}

pub fn noise_fraction(result: &ClusteringResult, corpus: &Corpus) -> f64 {
    result.noise.len() as f64 / corpus.len() as f64
}

/// Share of clustered utterances held by the largest `ceil(top_fraction * k)`
/// clusters, after dropping clusters smaller than `min_utterances`.
pub fn data_coverage(result: &ClusteringResult, top_fraction: f64, min_utterances: usize) -> Result<f64> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(Error::InvalidParams(format!("top_fraction must be in (0, 1], got {top_fraction}")));
    }
    let filtered = filter_small_clusters(result, min_utterances);
    if filtered.clusters.is_empty() {
        return Err(Error::Empty("no clusters left after filtering"));
    }
    let mut sizes: Vec<usize> = filtered.clusters.iter().map(Cluster::len).collect();
    sizes.sort_unstable_by(|a, b| b.cmp(a));
    let k = sizes.len();
    // Guard against 0.8 * 5 evaluating to 4.000000000000001.
    let take = ((top_fraction * k as f64 - 1e-9).ceil() as usize).clamp(1, k);
    let top: usize = sizes[..take].iter().sum();
    let total: usize = sizes.iter().sum();
    Ok(top as f64 / total as f64)
}

/// Summary of one evaluation run; field order mirrors the reporting table.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub num_utterances: usize,
    pub num_clusters_total: usize,
    pub num_clusters_after_filter: usize,
    pub per_cluster_purity: BTreeMap<ClusterId, f64>,
    /// Unweighted mean of per-cluster purity.
    pub average_purity: f64,
    /// Utterance-weighted mean of per-cluster purity.
    pub average_purity_weighted: f64,
    pub speakers_with_one_dominant_cluster: usize,
    pub cluster_uniqueness: f64,
    /// Pipeline noise, before small clusters are filtered out.
    pub noise_fraction: f64,
    pub coverage: f64,
}

/// Evaluates `result` on the clusters that survive `min_utterances` filtering.
pub fn evaluate(
    result: &ClusteringResult,
    corpus: &Corpus,
    min_utterances: usize,
    top_fraction: f64,
) -> Result<EvaluationReport> {
    let labels = corpus_labels(corpus);
    let filtered = filter_small_clusters(result, min_utterances);
    if filtered.clusters.is_empty() {
        return Err(Error::Empty("no clusters left after filtering"));
    }
    let mut per_cluster_purity = BTreeMap::new();
    let (mut dominant_total, mut member_total) = (0usize, 0usize);
    for c in &filtered.clusters {
        let (_, count) = dominant_speaker(c, &labels)?;
        per_cluster_purity.insert(c.id, count as f64 / c.len() as f64);
        dominant_total += count;
        member_total += c.len();
    }
    let average_purity = per_cluster_purity.values().sum::<f64>() / per_cluster_purity.len() as f64;
    let (unique, uniqueness) = cluster_uniqueness(&filtered.clusters, &labels)?;
    Ok(EvaluationReport {
        num_utterances: corpus.len(),
        num_clusters_total: result.clusters.len(),
        num_clusters_after_filter: filtered.clusters.len(),
        per_cluster_purity,
        average_purity,
        average_purity_weighted: dominant_total as f64 / member_total as f64,
        speakers_with_one_dominant_cluster: unique,
        cluster_uniqueness: uniqueness,
        noise_fraction: noise_fraction(result, corpus),
        coverage: data_coverage(result, top_fraction, min_utterances)?,
    })
}

/// Distribution of one family of pairwise similarities.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityStats {
    pub count: u64,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
    /// Counts per bin over `[-1, 1]`.
    pub histogram: Vec<u64>,
}

/// Same-speaker versus different-speaker cosine similarities over all pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityReport {
    pub bins: usize,
    pub same: SimilarityStats,
    pub different: SimilarityStats,
    /// Shared area of the two normalized histograms, in `[0, 1]`.
    pub overlap: f64,
}

impl SimilarityReport {
    /// Lower and upper edge of bin `b`.
    pub fn bin_edges(&self, b: usize) -> (f64, f64) {
        let w = 2.0 / self.bins as f64;
        (-1.0 + b as f64 * w, -1.0 + (b + 1) as f64 * w)
    }
}

#[derive(Clone)]
struct Acc {
    count: u64,
    sum: f64,
    sum_sq: f64,
    min: f64,
    max: f64,
    histogram: Vec<u64>,
}

impl Acc {
    fn new(bins: usize) -> Self {
        Acc {
            count: 0,
            sum: 0.0,
            sum_sq: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
            histogram: vec![0; bins],
        }
    }

    fn push(&mut self, s: f64) {
        let bins = self.histogram.len();
        let b = (((s + 1.0) / 2.0 * bins as f64).floor() as usize).min(bins - 1);
        self.histogram[b] += 1;
        self.count += 1;
        self.sum += s;
        self.sum_sq += s * s;
        self.min = self.min.min(s);
        self.max = self.max.max(s);
    }

    fn absorb(&mut self, o: &Acc) {
        self.count += o.count;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
        self.min = self.min.min(o.min);
        self.max = self.max.max(o.max);
        self.histogram.iter_mut().zip(&o.histogram).for_each(|(a, b)| *a += b);
    }

    fn finish(self) -> SimilarityStats {
        let n = self.count as f64;
        let mean = self.sum / n;
        let var = (self.sum_sq / n - mean * mean).max(0.0);
        SimilarityStats {
            count: self.count,
            mean,
            std: var.sqrt(),
            min: self.min,
            max: self.max,
            histogram: self.histogram,
        }
    }
}

/// Pairwise similarity distributions split by whether both utterances share a speaker.
///
/// Only histograms and moments are kept, so memory does not grow with the
/// number of pairs. Rows are reduced in index order for reproducible sums.
pub fn similarity_report(corpus: &Corpus, bins: usize) -> Result<SimilarityReport> {
    if bins == 0 {
        return Err(Error::InvalidParams("histogram needs at least one bin".into()));
    }
    if corpus.len() < 2 {
        return Err(Error::Empty("similarity report needs at least 2 utterances"));
    }
    let labels = corpus.speaker_labels()?;
    let rows: Vec<(Acc, Acc)> = (0..corpus.len() - 1)
        .into_par_iter()
        .map(|i| {
            let (mut same, mut diff) = (Acc::new(bins), Acc::new(bins));
            for j in i + 1..corpus.len() {
                let s = geometry::cosine_similarity(corpus.embedding(i), corpus.embedding(j))?;
                if labels[i] == labels[j] {
                    same.push(s);
                } else {
                    diff.push(s);
                }
            }
            Ok((same, diff))
        })
        .collect::<Result<_>>()?;
    let (mut same, mut diff) = (Acc::new(bins), Acc::new(bins));
    for (s, d) in &rows {
        same.absorb(s);
        diff.absorb(d);
    }
    if diff.count == 0 {
        return Err(Error::Empty("no different-speaker pairs; need at least 2 speakers"));
    }
    if same.count == 0 {
        return Err(Error::Empty("no same-speaker pairs; need a speaker with 2 utterances"));
    }
    let overlap = same
        .histogram
        .iter()
        .zip(&diff.histogram)
        .map(|(&a, &b)| (a as f64 / same.count as f64).min(b as f64 / diff.count as f64))
        .sum();
    Ok(SimilarityReport {
        bins,
        same: same.finish(),
        different: diff.finish(),
        overlap,
    })
}
