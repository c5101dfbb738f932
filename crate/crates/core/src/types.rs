//! Domain types shared by every stage of the clustering pipeline.
//!
//! Everything here is an immutable snapshot between stages. A stage that
//! changes cluster membership owns a working copy and hands back a new
//! [`ClusteringResult`].

use std::collections::HashSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry;

/// Fixed-length voice summary vector for one utterance.
///
/// Values are finite and the vector is never zero. Loading code decides
/// whether near-unit vectors are rescaled or rejected; see
/// [`crate::io::load_embeddings`].
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("embedding has no values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(Embedding(values))
    }

    /// Builds an embedding scaled to unit L2 norm.
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let mut e = Embedding::new(values)?;
        let norm = e.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        e.0.iter_mut().for_each(|v| *v /= norm);
        Ok(e)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Embedding {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub embedding: Embedding,
    pub duration_seconds: Option<f64>,
    /// Ground-truth speaker, used only for evaluation.
    pub true_speaker: Option<String>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, embedding: Embedding) -> Self {
        Utterance {
            id: id.into(),
            embedding,
            duration_seconds: None,
            true_speaker: None,
        }
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.duration_seconds = Some(seconds);
        self
    }

    pub fn with_speaker(mut self, speaker: impl Into<String>) -> Self {
        self.true_speaker = Some(speaker.into());
        self
    }
}

/// Ordered, nonempty collection of utterances sharing one embedding dimension.
///
/// Insertion order is significant: partial sets are cut from it.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    utterances: Vec<Utterance>,
    dim: usize,
}

impl Corpus {
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let first = utterances
            .first()
            .ok_or(Error::Empty("corpus has no utterances"))?;
        let dim = first.embedding.dim();
        let mut seen = HashSet::with_capacity(utterances.len());
        for u in &utterances {
            if u.embedding.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: u.embedding.dim(),
                });
            }
            if !seen.insert(u.id.as_str()) {
                return Err(Error::InvalidParams(format!("duplicate utterance id {:?}", u.id)));
            }
            if let Some(d) = u.duration_seconds {
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::InvalidParams(format!(
                        "utterance {:?} has non-positive duration {d}",
                        u.id
                    )));
                }
            }
        }
        Ok(Corpus { utterances, dim })
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn embedding(&self, index: usize) -> &Embedding {
        &self.utterances[index].embedding
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &Embedding> {
        self.utterances.iter().map(|u| &u.embedding)
    }

    /// Ground-truth labels for every utterance, or the ids of those lacking one.
    pub fn speaker_labels(&self) -> Result<Vec<&str>> {
        let missing: Vec<String> = self
            .utterances
            .iter()
            .filter(|u| u.true_speaker.is_none())
            .map(|u| u.id.clone())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingLabels(missing));
        }
        Ok(self
            .utterances
            .iter()
            .map(|u| u.true_speaker.as_deref().unwrap_or_default())
            .collect())
    }
}

pub type ClusterId = usize;

/// Where a cluster came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ClusterOrigin {
    /// Partial set the cluster was first found in; `None` for clusters
    /// produced by re-splitting or built by hand.
    pub partition: Option<usize>,
    /// Number of merges folded into this cluster.
    pub merge_generation: u32,
    /// Produced by re-clustering a big cluster with leaf selection.
    pub split: bool,
}

/// A set of utterances with its cached centroid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub id: ClusterId,
    members: Vec<usize>,
    centroid: Embedding,
    pub origin: ClusterOrigin,
}

impl Cluster {
    /// `members` are corpus indices; they are sorted and deduplicated here.
    pub fn new(
        id: ClusterId,
        mut members: Vec<usize>,
        corpus: &Corpus,
        origin: ClusterOrigin,
    ) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        let centroid = geometry::centroid(members.iter().map(|&i| corpus.embedding(i)))?;
        Ok(Cluster {
            id,
            members,
            centroid,
            origin,
        })
    }

    /// Sorted ascending corpus indices.
    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn centroid(&self) -> &Embedding {
        &self.centroid
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Unions `other` into `self`, keeping the smaller id, and recomputes the centroid.
    pub fn absorb(&mut self, other: Cluster, corpus: &Corpus) -> Result<()> {
        self.extend_members(other.members, corpus)?;
        self.id = self.id.min(other.id);
        self.origin.merge_generation =
            self.origin.merge_generation.max(other.origin.merge_generation) + 1;
        if self.origin.partition != other.origin.partition {
            self.origin.partition = None;
        }
        self.origin.split |= other.origin.split;
        Ok(())
    }

    /// Adds members and recomputes the centroid over the sorted member list.
    pub(crate) fn extend_members(&mut self, extra: Vec<usize>, corpus: &Corpus) -> Result<()> {
        let mut merged = Vec::with_capacity(self.members.len() + extra.len());
        merged.extend_from_slice(&self.members);
        merged.extend(extra);
        merged.sort_unstable();
        merged.dedup();
        self.centroid = geometry::centroid(merged.iter().map(|&i| corpus.embedding(i)))?;
        self.members = merged;
        Ok(())
    }
}

/// One entry of the per-stage provenance log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageRecord {
    pub stage: String,
    pub clusters_before: usize,
    pub clusters_after: usize,
    pub noise: usize,
}

impl fmt::Display for StageRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: clusters {} -> {}, noise {}",
            self.stage, self.clusters_before, self.clusters_after, self.noise
        )
    }
}

/// Clusters plus noise covering a whole corpus, with the stages that produced them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusteringResult {
    pub clusters: Vec<Cluster>,
    /// Sorted corpus indices assigned to no cluster.
    pub noise: Vec<usize>,
    pub stage_log: Vec<StageRecord>,
}

impl ClusteringResult {
    /// Cluster id per corpus index, `None` for noise.
    pub fn assignments(&self, n: usize) -> Vec<Option<ClusterId>> {
        let mut out = vec![None; n];
        for c in &self.clusters {
            for &m in c.members() {
                if m < n {
                    out[m] = Some(c.id);
                }
            }
        }
        out
    }

    pub fn clustered_count(&self) -> usize {
        self.clusters.iter().map(Cluster::len).sum()
    }

    /// Checks that clusters and noise partition `0..n` and that ids are unique.
    pub fn check_partition(&self, n: usize, stage: &str) -> Result<()> {
        let fail = |detail: String| Error::Invariant {
            stage: stage.to_string(),
            detail,
        };
        let mut seen = vec![false; n];
        let mut ids = HashSet::with_capacity(self.clusters.len());
        let mut mark = |i: usize, what: &str| -> Result<()> {
            if i >= n {
                return Err(fail(format!("{what} index {i} out of range 0..{n}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(fail(format!("index {i} appears more than once")));
            }
            Ok(())
        };
        for c in &self.clusters {
            if c.is_empty() {
                return Err(fail(format!("cluster {} is empty", c.id)));
            }
            if !ids.insert(c.id) {
                return Err(fail(format!("duplicate cluster id {}", c.id)));
            }
            for &m in c.members() {
                mark(m, "member")?;
            }
        }
        for &i in &self.noise {
            mark(i, "noise")?;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(fail(format!("index {missing} is neither clustered nor noise")));
        }
        Ok(())
    }

    pub(crate) fn log_stage(&mut self, stage: &str, clusters_before: usize) {
        self.stage_log.push(StageRecord {
            stage: stage.to_string(),
            clusters_before,
            clusters_after: self.clusters.len(),
            noise: self.noise.len(),
        });
    }
}

/// Distance metric handed to the density clusterer. Only precomputed
/// cosine-distance matrices are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Precomputed,
}

/// Tunable knobs of the clustering pipeline. Defaults reproduce the
/// published configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineParams {
    /// Utterances per independently clustered chunk.
    pub partial_set_size: usize,
    /// Smallest grouping considered a cluster.
    pub min_cluster_size: usize,
    /// Neighbours needed for a core point; `1..=min_cluster_size`.
    pub min_samples: usize,
    pub metric: Metric,
    /// Noise points join their nearest cluster only above this centroid similarity.
    pub fit_noise_on_similarity: f64,
    pub merge_start: f64,
    pub merge_end: f64,
    pub merge_step: f64,
    /// A cluster is "big" when its size exceeds mean + factor * std.
    pub big_cluster_std_factor: f64,
    /// Clusters smaller than this are dropped from reports.
    pub report_min_cluster_utterances: usize,
    pub speaker_duration_cap_seconds: Option<f64>,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            partial_set_size: 10_000,
            min_cluster_size: 4,
            min_samples: 1,
            metric: Metric::Precomputed,
            fit_noise_on_similarity: 0.8,
            merge_start: 0.96,
            merge_end: 0.90,
            merge_step: 0.01,
            big_cluster_std_factor: 2.0,
            report_min_cluster_utterances: 30,
            speaker_duration_cap_seconds: Some(5400.0),
        }
    }
}

impl PipelineParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if self.min_cluster_size < 2 {
            return bad(format!("min_cluster_size must be >= 2, got {}", self.min_cluster_size));
        }
        if self.min_samples < 1 || self.min_samples > self.min_cluster_size {
            return bad(format!(
                "min_samples must be in 1..={}, got {}",
                self.min_cluster_size, self.min_samples
            ));
        }
        if self.partial_set_size < self.min_cluster_size {
            return bad(format!(
                "partial_set_size ({}) must be >= min_cluster_size ({})",
                self.partial_set_size, self.min_cluster_size
            ));
        }
        if !(-1.0..=1.0).contains(&self.fit_noise_on_similarity) {
            return bad(format!(
                "fit_noise_on_similarity must be in [-1, 1], got {}",
                self.fit_noise_on_similarity
            ));
        }
        if !(self.merge_step > 0.0 && self.merge_step.is_finite()) {
            return bad(format!("merge_step must be > 0, got {}", self.merge_step));
        }
        if !(self.merge_end <= self.merge_start) {
            return bad(format!(
                "merge_end ({}) must be <= merge_start ({})",
                self.merge_end, self.merge_start
            ));
        }
        if !(self.merge_start <= 1.0 && self.merge_end > -1.0) {
            return bad("merge thresholds must lie in (-1, 1]".to_string());
        }
        if !(self.big_cluster_std_factor > 0.0 && self.big_cluster_std_factor.is_finite()) {
            return bad(format!(
                "big_cluster_std_factor must be > 0, got {}",
                self.big_cluster_std_factor
            ));
        }
        if let Some(cap) = self.speaker_duration_cap_seconds {
            if !(cap > 0.0 && cap.is_finite()) {
                return bad(format!("speaker duration cap must be > 0, got {cap}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(vectors: &[&[f64]]) -> Corpus {
        Corpus::new(
            vectors
                .iter()
                .enumerate()
                .map(|(i, v)| Utterance::new(format!("u{i}"), Embedding::normalized(v.to_vec()).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn embedding_rejects_bad_values() {
        assert!(matches!(Embedding::new(vec![0.0, 0.0]), Err(Error::ZeroNorm)));
        assert!(matches!(Embedding::new(vec![f64::NAN, 1.0]), Err(Error::NonFinite)));
        assert!(matches!(Embedding::new(vec![]), Err(Error::Empty(_))));
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert!((e.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn corpus_validation() {
        let a = Utterance::new("a", Embedding::normalized(vec![1.0, 0.0]).unwrap());
        let b = Utterance::new("a", Embedding::normalized(vec![0.0, 1.0]).unwrap());
        assert!(Corpus::new(vec![a.clone(), b]).is_err());
        let c = Utterance::new("c", Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap());
        assert!(matches!(
            Corpus::new(vec![a.clone(), c]),
            Err(Error::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(Corpus::new(vec![a.clone().with_duration(0.0)]).is_err());
        assert!(Corpus::new(vec![]).is_err());
        assert!(Corpus::new(vec![a]).is_ok());
    }

    #[test]
    fn absorb_keeps_smaller_id_and_sorted_members() {
        let c = corpus(&[&[1.0, 0.0], &[1.0, 0.1], &[0.9, 0.0], &[1.0, -0.1]]);
        let mut a = Cluster::new(7, vec![3, 0], &c, ClusterOrigin::default()).unwrap();
        let b = Cluster::new(2, vec![2, 1], &c, ClusterOrigin::default()).unwrap();
        a.absorb(b, &c).unwrap();
        assert_eq!(a.id, 2);
        assert_eq!(a.members(), &[0, 1, 2, 3]);
        assert_eq!(a.origin.merge_generation, 1);
        let fresh = Cluster::new(0, vec![0, 1, 2, 3], &c, ClusterOrigin::default()).unwrap();
        assert_eq!(a.centroid(), fresh.centroid());
    }

    #[test]
    fn partition_check_detects_overlap_and_gaps() {
        let c = corpus(&[&[1.0, 0.0], &[1.0, 0.1], &[0.0, 1.0]]);
        let cl = Cluster::new(0, vec![0, 1], &c, ClusterOrigin::default()).unwrap();
        let ok = ClusteringResult {
            clusters: vec![cl.clone()],
            noise: vec![2],
            stage_log: vec![],
        };
        ok.check_partition(3, "t").unwrap();
        let overlap = ClusteringResult {
            noise: vec![1, 2],
            ..ok.clone()
        };
        assert!(overlap.check_partition(3, "t").is_err());
        let gap = ClusteringResult {
            noise: vec![],
            ..ok.clone()
        };
        assert!(gap.check_partition(3, "t").is_err());
        let dup = ClusteringResult {
            clusters: vec![cl.clone(), Cluster::new(0, vec![2], &c, ClusterOrigin::default()).unwrap()],
            noise: vec![],
            stage_log: vec![],
        };
        assert!(dup.check_partition(3, "t").is_err());
    }

    #[test]
    fn default_params_validate() {
        let p = PipelineParams::default();
        p.validate().unwrap();
        assert_eq!(p.partial_set_size, 10_000);
        assert_eq!(p.min_cluster_size, 4);
        assert_eq!(p.min_samples, 1);
        assert_eq!(p.fit_noise_on_similarity, 0.8);
        assert_eq!(p.speaker_duration_cap_seconds, Some(5400.0));
        let bad = PipelineParams {
            min_samples: 5,
            ..PipelineParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineParams {
            min_cluster_size: 1,
            min_samples: 1,
            ..PipelineParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = PipelineParams {
            merge_end: 0.97,
            ..PipelineParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
