//! The five-stage speaker clustering procedure.
//!
//! 1. Cut the corpus into partial sets and cluster each with HDBSCAN (EOM).
//! 2. Merge clusters whose centroids are similar, walking a decaying
//!    threshold schedule.
//! 3. Re-cluster oversized clusters with leaf selection.
//! 4. Merge again with the same schedule.
//! 5. Attach noise points to their most similar cluster when close enough.
//!
//! Every stage checks the partition invariant before handing its result on.

use std::ops::Range;

use log::{debug, info, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{self, pairwise_distance_matrix};
use crate::hdbscan::{run_hdbscan, SelectionMethod};
use crate::types::{Cluster, ClusterId, ClusterOrigin, ClusteringResult, Corpus, PipelineParams};

pub const STAGE_PARTITION: &str = "partition";
pub const STAGE_MERGE_1: &str = "merge_pass_1";
pub const STAGE_SPLIT: &str = "split_big_clusters";
pub const STAGE_MERGE_2: &str = "merge_pass_2";
pub const STAGE_ASSIGN_NOISE: &str = "assign_noise";

/// Strictly descending centroid-similarity thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct MergeSchedule {
    thresholds: Vec<f64>,
}

impl MergeSchedule {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.iter().any(|t| !(*t > -1.0 && *t <= 1.0)) {
            return Err(Error::InvalidParams("merge thresholds must lie in (-1, 1]".into()));
        }
        if thresholds.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParams("merge thresholds must be strictly descending".into()));
        }
        Ok(MergeSchedule { thresholds })
    }

    /// `start, start - step, ...` down to and including `end`.
    ///
    /// Values are rounded to 9 decimals so `0.96 - 6 * 0.01` lands on `0.90`.
    pub fn from_range(start: f64, end: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || end > start {
            return Err(Error::InvalidParams(format!(
                "bad merge range start={start} end={end} step={step}"
            )));
        }
        let round = |x: f64| (x * 1e9).round() / 1e9;
        let count = ((start - end) / step + 1e-9).floor() as usize;
        let thresholds = (0..=count).map(|k| round(start - k as f64 * step)).collect();
        MergeSchedule::new(thresholds)
    }

    pub fn from_params(params: &PipelineParams) -> Result<Self> {
        MergeSchedule::from_range(params.merge_start, params.merge_end, params.merge_step)
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Default for MergeSchedule {
    fn default() -> Self {
        MergeSchedule::from_range(0.96, 0.90, 0.01).expect("default schedule is valid")
    }
}

/// Hands out cluster ids that are never reused within one run.
#[derive(Debug, Clone, Default)]
pub struct IdAllocator {
    next: ClusterId,
}

impl IdAllocator {
    pub fn starting_at(next: ClusterId) -> Self {
        IdAllocator { next }
    }

    pub fn next_id(&mut self) -> ClusterId {
        let id = self.next;
        self.next += 1;
        id
    }
}

/// Contiguous chunks of `0..n` of length `partial_set_size`; a trailing
/// chunk shorter than `min_cluster_size` is folded into its predecessor.
pub fn partition_ranges(
    n: usize,
    partial_set_size: usize,
    min_cluster_size: usize,
) -> Result<Vec<Range<usize>>> {
    if n == 0 {
        return Err(Error::Empty("cannot partition an empty corpus"));
    }
    if partial_set_size == 0 || partial_set_size < min_cluster_size {
        return Err(Error::InvalidParams(format!(
            "partial_set_size ({partial_set_size}) must be >= min_cluster_size ({min_cluster_size})"
        )));
    }
    let mut ranges: Vec<Range<usize>> = (0..n)
        .step_by(partial_set_size)
        .map(|start| start..(start + partial_set_size).min(n))
        .collect();
    if ranges.len() > 1 && ranges.last().is_some_and(|r| r.len() < min_cluster_size) {
        let last = ranges.pop().expect("nonempty");
        ranges.last_mut().expect("nonempty").end = last.end;
    }
    Ok(ranges)
}

pub fn partition_corpus(corpus: &Corpus, params: &PipelineParams) -> Result<Vec<Range<usize>>> {
    partition_ranges(corpus.len(), params.partial_set_size, params.min_cluster_size)
}

/// Cluster groups and noise for an arbitrary subset of corpus indices.
fn cluster_indices(
    corpus: &Corpus,
    indices: &[usize],
    params: &PipelineParams,
    method: SelectionMethod,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    if indices.len() < 2 {
        return Ok((Vec::new(), indices.to_vec()));
    }
    let points: Vec<_> = indices.iter().map(|&i| corpus.embedding(i)).collect();
    let dm = pairwise_distance_matrix(&points)?;
    let labels = run_hdbscan(&dm, params.min_cluster_size, params.min_samples, method)?;
    let (groups, noise) = labels.groups();
    let to_corpus = |local: Vec<usize>| local.into_iter().map(|l| indices[l]).collect::<Vec<_>>();
    Ok((groups.into_iter().map(to_corpus).collect(), to_corpus(noise)))
}

/// HDBSCAN (Excess of Mass) over one partial set.
///
/// Clusters are numbered from `first_id`; indices in the result are corpus
/// indices. Only the range's own points appear in the result.
pub fn cluster_partition(
    corpus: &Corpus,
    range: Range<usize>,
    params: &PipelineParams,
    first_id: ClusterId,
) -> Result<ClusteringResult> {
    if range.end > corpus.len() || range.is_empty() {
        return Err(Error::InvalidParams(format!(
            "range {range:?} is not a nonempty subrange of 0..{}",
            corpus.len()
        )));
    }
    let indices: Vec<usize> = range.collect();
    let (groups, noise) = cluster_indices(corpus, &indices, params, SelectionMethod::ExcessOfMass)?;
    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(k, members)| Cluster::new(first_id + k, members, corpus, ClusterOrigin::default()))
        .collect::<Result<Vec<_>>>()?;
    Ok(ClusteringResult {
        clusters,
        noise,
        stage_log: Vec::new(),
    })
}

#[derive(Clone, Copy)]
struct Best {
    sim: f64,
    other: usize,
}

/// Greedy centroid merging over a decaying threshold schedule.
///
/// At each threshold the most similar pair is merged (ties prefer the
/// lowest cluster ids) and the merged centroid recomputed, until no pair
/// reaches the threshold. The survivor keeps the smaller id. Output is
/// sorted by id.
pub fn merge_clusters(
    mut clusters: Vec<Cluster>,
    schedule: &MergeSchedule,
    corpus: &Corpus,
) -> Result<Vec<Cluster>> {
    clusters.sort_by_key(|c| c.id);
    let k = clusters.len();
    if k < 2 {
        return Ok(clusters);
    }
    let mut slots: Vec<Option<Cluster>> = clusters.into_iter().map(Some).collect();
    let sim_of = |a: &Cluster, b: &Cluster| geometry::cluster_similarity(a, b);

    // Full symmetric similarity table, indexed by slot.
    let mut sim = vec![0.0f64; k * k];
    {
        let rows: Vec<Vec<f64>> = (0..k)
            .into_par_iter()
            .map(|i| {
                let a = slots[i].as_ref().expect("alive");
                (0..k)
                    .map(|j| {
                        if i == j {
                            Ok(f64::NEG_INFINITY)
                        } else {
                            sim_of(a, slots[j].as_ref().expect("alive"))
                        }
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        for (i, row) in rows.into_iter().enumerate() {
            sim[i * k..(i + 1) * k].copy_from_slice(&row);
        }
    }
    let mut alive = vec![true; k];
    let row_best = |sim: &[f64], alive: &[bool], i: usize| -> Option<Best> {
        let mut best: Option<Best> = None;
        for j in (0..k).filter(|&j| j != i && alive[j]) {
            let s = sim[i * k + j];
            if best.is_none_or(|b| s > b.sim) {
                best = Some(Best { sim: s, other: j });
            }
        }
        best
    };
    let mut best: Vec<Option<Best>> = (0..k).map(|i| row_best(&sim, &alive, i)).collect();

    for &threshold in schedule.thresholds() {
        loop {
            let mut top: Option<(usize, Best)> = None;
            for i in (0..k).filter(|&i| alive[i]) {
                if let Some(b) = best[i] {
                    if top.is_none_or(|(_, t)| b.sim > t.sim) {
                        top = Some((i, b));
                    }
                }
            }
            let Some((i, b)) = top else { break };
            if b.sim < threshold {
                break;
            }
            let j = b.other;
            debug_assert!(i < j);
            let absorbed = slots[j].take().expect("alive");
            alive[j] = false;
            best[j] = None;
            let survivor = slots[i].as_mut().expect("alive");
            debug!(
                "merge {} <- {} at similarity {:.4} (threshold {threshold})",
                survivor.id, absorbed.id, b.sim
            );
            survivor.absorb(absorbed, corpus)?;
            let survivor = slots[i].as_ref().expect("alive");
            for r in (0..k).filter(|&r| alive[r] && r != i) {
                let s = sim_of(survivor, slots[r].as_ref().expect("alive"))?;
                sim[i * k + r] = s;
                sim[r * k + i] = s;
            }
            best[i] = row_best(&sim, &alive, i);
            for r in (0..k).filter(|&r| alive[r] && r != i) {
                let stale = best[r].is_some_and(|b| b.other == i || b.other == j);
                if stale {
                    best[r] = row_best(&sim, &alive, r);
                } else {
                    let s = sim[r * k + i];
                    if best[r].is_none_or(|b| s > b.sim || (s == b.sim && i < b.other)) {
                        best[r] = Some(Best { sim: s, other: i });
                    }
                }
            }
        }
    }
    Ok(slots.into_iter().flatten().collect())
}

/// Ids of clusters whose size exceeds `mean + std_factor * std` of all
/// cluster sizes (population standard deviation). Sorted ascending.
pub fn find_big_clusters(clusters: &[Cluster], std_factor: f64) -> Vec<ClusterId> {
    if clusters.len() < 2 {
        return Vec::new();
    }
    let sizes: Vec<f64> = clusters.iter().map(|c| c.len() as f64).collect();
    let n = sizes.len() as f64;
    let mean = sizes.iter().sum::<f64>() / n;
    let var = sizes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let limit = mean + std_factor * var.sqrt();
    let mut ids: Vec<ClusterId> = clusters
        .iter()
        .filter(|c| c.len() as f64 > limit)
        .map(|c| c.id)
        .collect();
    ids.sort_unstable();
    ids
}

/// Result of re-clustering one big cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub clusters: Vec<Cluster>,
    /// Members the leaf re-run labelled as noise.
    pub noise: Vec<usize>,
}

impl SplitOutcome {
    pub fn was_split(&self) -> bool {
        self.clusters.len() > 1
    }
}

/// Raw leaf-selection re-run over a cluster's members: groups and noise in
/// corpus indices. Members beyond `partial_set_size` are processed in
/// contiguous chunks so each distance matrix stays bounded.
pub fn recluster_leaf(
    corpus: &Corpus,
    cluster: &Cluster,
    params: &PipelineParams,
) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let members = cluster.members();
    let chunks = partition_ranges(members.len(), params.partial_set_size, params.min_cluster_size)?;
    if chunks.len() > 1 {
        warn!(
            "cluster {} has {} members; re-clustering it in {} chunks",
            cluster.id,
            members.len(),
            chunks.len()
        );
    }
    let mut groups = Vec::new();
    let mut noise = Vec::new();
    for chunk in chunks {
        let (g, n) = cluster_indices(corpus, &members[chunk], params, SelectionMethod::Leaf)?;
        groups.extend(g);
        noise.extend(n);
    }
    noise.sort_unstable();
    Ok((groups, noise))
}

/// Re-clusters `cluster` with leaf selection.
///
/// Leaf selection shatters even a single-speaker cluster into many small
/// leaves, so the leaves are first consolidated with `merge_clusters` under
/// the pipeline's own schedule. If at least two distinct groups remain they
/// replace the input, with fresh ids from `ids`, and members the leaf run
/// left out become noise. Otherwise the input comes back unchanged.
/// Clusters smaller than `2 * min_cluster_size` are never split.
pub fn split_big_cluster(
    corpus: &Corpus,
    cluster: Cluster,
    params: &PipelineParams,
    ids: &mut IdAllocator,
) -> Result<SplitOutcome> {
    let unchanged = |cluster: Cluster| SplitOutcome {
        clusters: vec![cluster],
        noise: Vec::new(),
    };
    if cluster.len() < 2 * params.min_cluster_size {
        return Ok(unchanged(cluster));
    }
    let (groups, noise) = recluster_leaf(corpus, &cluster, params)?;
    if groups.len() < 2 {
        return Ok(unchanged(cluster));
    }
    let origin = ClusterOrigin {
        split: true,
        ..cluster.origin
    };
    let leaves = groups
        .into_iter()
        .map(|g| Cluster::new(ids.next_id(), g, corpus, origin))
        .collect::<Result<Vec<_>>>()?;
    let leaf_count = leaves.len();
    let clusters = merge_clusters(leaves, &MergeSchedule::from_params(params)?, corpus)?;
    debug!(
        "cluster {}: {leaf_count} leaves consolidated into {}",
        cluster.id,
        clusters.len()
    );
    if clusters.len() < 2 {
        return Ok(unchanged(cluster));
    }
    Ok(SplitOutcome { clusters, noise })
}

/// Attaches each noise point to its most similar cluster centroid when the
/// similarity is strictly above `fit_noise_on_similarity`.
///
/// All points are scored against the incoming centroids; centroids are
/// refreshed once at the end, so the outcome does not depend on the order
/// of `noise`. Ties go to the lower cluster id.
pub fn assign_noise(
    corpus: &Corpus,
    mut clusters: Vec<Cluster>,
    noise: Vec<usize>,
    fit_noise_on_similarity: f64,
) -> Result<(Vec<Cluster>, Vec<usize>)> {
    clusters.sort_by_key(|c| c.id);
    if clusters.is_empty() {
        let mut noise = noise;
        noise.sort_unstable();
        return Ok((clusters, noise));
    }
    let choices: Vec<Option<usize>> = noise
        .par_iter()
        .map(|&p| {
            let point = corpus.embedding(p);
            let mut best: Option<(usize, f64)> = None;
            for (slot, c) in clusters.iter().enumerate() {
                let s = geometry::cosine_similarity(point, c.centroid())?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((slot, s));
                }
            }
            Ok(best.filter(|&(_, s)| s > fit_noise_on_similarity).map(|(slot, _)| slot))
        })
        .collect::<Result<_>>()?;

    let mut additions: Vec<Vec<usize>> = vec![Vec::new(); clusters.len()];
    let mut remaining = Vec::new();
    for (&p, choice) in noise.iter().zip(choices) {
        match choice {
            Some(slot) => additions[slot].push(p),
            None => remaining.push(p),
        }
    }
    for (cluster, extra) in clusters.iter_mut().zip(additions) {
        if !extra.is_empty() {
            cluster.extend_members(extra, corpus)?;
        }
    }
    remaining.sort_unstable();
    Ok((clusters, remaining))
}

fn checked(result: &ClusteringResult, corpus: &Corpus, stage: &str) -> Result<()> {
    result.check_partition(corpus.len(), stage)?;
    if let Some(r) = result.stage_log.last() {
        info!("{r}");
    }
    Ok(())
}

/// Stage 1 only: every partial set clustered independently, with globally
/// unique ids assigned in partition order.
pub fn cluster_partitions(
    corpus: &Corpus,
    params: &PipelineParams,
    ranges: &[Range<usize>],
    ids: &mut IdAllocator,
) -> Result<ClusteringResult> {
    let parts = ranges
        .par_iter()
        .map(|r| cluster_partition(corpus, r.clone(), params, 0))
        .collect::<Result<Vec<_>>>()?;
    let mut result = ClusteringResult::default();
    for (p, part) in parts.into_iter().enumerate() {
        for mut c in part.clusters {
            c.id = ids.next_id();
            c.origin.partition = Some(p);
            result.clusters.push(c);
        }
        result.noise.extend(part.noise);
    }
    result.noise.sort_unstable();
    Ok(result)
}

/// Stages 2 to 5 applied to an existing stage-1 result.
pub fn refine(
    corpus: &Corpus,
    params: &PipelineParams,
    mut result: ClusteringResult,
    ids: &mut IdAllocator,
) -> Result<ClusteringResult> {
    let schedule = MergeSchedule::from_params(params)?;

    let before = result.clusters.len();
    result.clusters = merge_clusters(std::mem::take(&mut result.clusters), &schedule, corpus)?;
    result.log_stage(STAGE_MERGE_1, before);
    checked(&result, corpus, STAGE_MERGE_1)?;

    let before = result.clusters.len();
    let big = find_big_clusters(&result.clusters, params.big_cluster_std_factor);
    let mut kept = Vec::with_capacity(result.clusters.len());
    for cluster in std::mem::take(&mut result.clusters) {
        if big.binary_search(&cluster.id).is_ok() {
            let id = cluster.id;
            let outcome = split_big_cluster(corpus, cluster, params, ids)?;
            if outcome.was_split() {
                info!(
                    "split big cluster {id} into {} clusters (+{} noise)",
                    outcome.clusters.len(),
                    outcome.noise.len()
                );
            }
            kept.extend(outcome.clusters);
            result.noise.extend(outcome.noise);
        } else {
            kept.push(cluster);
        }
    }
    kept.sort_by_key(|c| c.id);
    result.clusters = kept;
    result.noise.sort_unstable();
    result.log_stage(STAGE_SPLIT, before);
    checked(&result, corpus, STAGE_SPLIT)?;

    let before = result.clusters.len();
    result.clusters = merge_clusters(std::mem::take(&mut result.clusters), &schedule, corpus)?;
    result.log_stage(STAGE_MERGE_2, before);
    checked(&result, corpus, STAGE_MERGE_2)?;

    let before = result.clusters.len();
    let (clusters, noise) = assign_noise(
        corpus,
        std::mem::take(&mut result.clusters),
        std::mem::take(&mut result.noise),
        params.fit_noise_on_similarity,
    )?;
    result.clusters = clusters;
    result.noise = noise;
    result.log_stage(STAGE_ASSIGN_NOISE, before);
    checked(&result, corpus, STAGE_ASSIGN_NOISE)?;
    Ok(result)
}

/// Full five-stage pipeline.
pub fn run_pipeline(corpus: &Corpus, params: &PipelineParams) -> Result<ClusteringResult> {
    params.validate()?;
    let ranges = partition_corpus(corpus, params)?;
    info!(
        "clustering {} utterances in {} partial set(s)",
        corpus.len(),
        ranges.len()
    );
    let mut ids = IdAllocator::default();
    let mut result = cluster_partitions(corpus, params, &ranges, &mut ids)?;
    result.log_stage(STAGE_PARTITION, 0);
    checked(&result, corpus, STAGE_PARTITION)?;
    refine(corpus, params, result, &mut ids)
}

/// Per-cluster split of members into kept and excess utterances under a duration cap.
#[derive(Debug, Clone, PartialEq)]
pub struct CappedCluster {
    pub cluster_id: ClusterId,
    pub selected: Vec<usize>,
    pub excess: Vec<usize>,
    pub selected_seconds: f64,
}

/// Keeps each cluster's utterances in input order while the running total
/// stays within `cap_seconds`; the first utterance that would overshoot
/// and everything after it is flagged as excess.
pub fn cap_speaker_duration(
    result: &ClusteringResult,
    corpus: &Corpus,
    cap_seconds: f64,
) -> Result<Vec<CappedCluster>> {
    if !(cap_seconds > 0.0) {
        return Err(Error::InvalidParams(format!("duration cap must be > 0, got {cap_seconds}")));
    }
    let missing: Vec<String> = result
        .clusters
        .iter()
        .flat_map(|c| c.members())
        .filter(|&&i| corpus.utterances()[i].duration_seconds.is_none())
        .map(|&i| corpus.utterances()[i].id.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingDurations(missing));
    }
    Ok(result
        .clusters
        .iter()
        .map(|c| {
            let mut total = 0.0;
            let mut selected = Vec::new();
            let mut excess = Vec::new();
            for &i in c.members() {
                let d = corpus.utterances()[i].duration_seconds.unwrap_or_default();
                if excess.is_empty() && total + d <= cap_seconds {
                    total += d;
                    selected.push(i);
                } else {
                    excess.push(i);
                }
            }
            CappedCluster {
                cluster_id: c.id,
                selected,
                excess,
                selected_seconds: total,
            }
        })
        .collect())
}

/// Per-utterance excess flag; `None` for noise.
pub fn excess_flags(capped: &[CappedCluster], n: usize) -> Vec<Option<bool>> {
    let mut flags = vec![None; n];
    for c in capped {
        c.selected.iter().for_each(|&i| flags[i] = Some(false));
        c.excess.iter().for_each(|&i| flags[i] = Some(true));
    }
    flags
}
