//! Independent reference implementations and generators shared by the
//! integration tests. Nothing here calls into the code under test except
//! to obtain the inputs being compared.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spkclust::hdbscan::CondensedTree;
use spkclust::pipeline::{self, IdAllocator, MergeSchedule};
use spkclust::{ClusteringResult, Corpus, PipelineParams};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

/// Plain double-loop cosine distance matrix.
pub fn cosine_distances(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let dot: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| a * b).sum();
                let sim = (dot / (norm(&points[i]) * norm(&points[j]))).clamp(-1.0, 1.0);
                d[i][j] = 1.0 - sim;
            }
        }
    }
    d
}

pub fn euclidean_distances(points: &[[f64; 2]]) -> Vec<Vec<f64>> {
    points
        .iter()
        .map(|a| points.iter().map(|b| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()).collect())
        .collect()
}

/// Distance to the k-th nearest other point, by full sort.
pub fn core_distances(d: &[Vec<f64>], k: usize) -> Vec<f64> {
    (0..d.len())
        .map(|i| {
            let mut row: Vec<f64> = (0..d.len()).filter(|&j| j != i).map(|j| d[i][j]).collect();
            row.sort_by(f64::total_cmp);
            row[k - 1]
        })
        .collect()
}

pub fn mutual_reachability(d: &[Vec<f64>], core: &[f64]) -> Vec<Vec<f64>> {
    let n = d.len();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| if i == j { 0.0 } else { d[i][j].max(core[i]).max(core[j]) })
                .collect()
        })
        .collect()
}

/// Textbook agglomerative single linkage: repeatedly merge the two clusters
/// with the smallest minimum inter-member distance. Returns the n - 1 merge
/// heights in merge order.
pub fn single_linkage_heights(d: &[Vec<f64>]) -> Vec<f64> {
    let mut clusters: Vec<Vec<usize>> = (0..d.len()).map(|i| vec![i]).collect();
    let mut heights = Vec::new();
    while clusters.len() > 1 {
        let mut best = (f64::INFINITY, 0, 1);
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                for &i in &clusters[a] {
                    for &j in &clusters[b] {
                        if d[i][j] < best.0 {
                            best = (d[i][j], a, b);
                        }
                    }
                }
            }
        }
        let (h, a, b) = best;
        let moved = clusters.remove(b);
        clusters[a].extend(moved);
        heights.push(h);
    }
    heights
}

/// Tree edges encoded by a Prüfer sequence over `n` labelled vertices.
pub fn prufer_decode(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &v in seq {
        degree[v] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &v in seq {
        let leaf = (0..n).find(|&u| degree[u] == 1).expect("a leaf exists");
        edges.push((leaf, v));
        degree[leaf] -= 1;
        degree[v] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&u| degree[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Minimum total weight over all n^(n-2) labelled spanning trees, and how
/// many trees were visited.
pub fn exhaustive_mst_weight(d: &[Vec<f64>]) -> (f64, u64) {
    let n = d.len();
    if n < 2 {
        return (0.0, 1);
    }
    if n == 2 {
        return (d[0][1], 1);
    }
    let len = n - 2;
    let mut seq = vec![0usize; len];
    let mut best = f64::INFINITY;
    let mut visited = 0;
    loop {
        let w: f64 = prufer_decode(&seq, n).iter().map(|&(a, b)| d[a][b]).sum();
        best = best.min(w);
        visited += 1;
        // Odometer increment.
        let mut k = 0;
        loop {
            if k == len {
                return (best, visited);
            }
            seq[k] += 1;
            if seq[k] < n {
                break;
            }
            seq[k] = 0;
            k += 1;
        }
    }
}

/// Cluster stabilities recomputed point by point: each point contributes
/// (exit lambda - birth lambda) to every cluster on its path to the root,
/// where it exits an ancestor when the child containing it is born.
pub fn stabilities_per_point(tree: &CondensedTree) -> Vec<f64> {
    let n = tree.n_points();
    let k = tree.cluster_ids().len();
    let mut parent = vec![None; k];
    let mut birth = vec![0.0; k];
    for e in tree.edges().iter().filter(|e| e.child >= n) {
        parent[e.child - n] = Some(e.parent);
        birth[e.child - n] = e.lambda;
    }
    let mut stability = vec![0.0; k];
    for e in tree.edges().iter().filter(|e| e.child < n) {
        // Innermost cluster: the point falls out at the edge's lambda.
        let mut node = e.parent;
        let mut exit = e.lambda;
        loop {
            stability[node - n] += exit - birth[node - n];
            match parent[node - n] {
                Some(p) => {
                    exit = birth[node - n];
                    node = p;
                }
                None => break,
            }
        }
    }
    stability
}

fn antichains(tree: &CondensedTree, node: usize, eligible: &dyn Fn(usize) -> bool) -> Vec<BTreeSet<usize>> {
    let mut below: Vec<BTreeSet<usize>> = vec![BTreeSet::new()];
    for child in tree.cluster_children(node) {
        let sub = antichains(tree, child, eligible);
        below = below
            .iter()
            .flat_map(|a| sub.iter().map(move |b| a.union(b).copied().collect()))
            .collect();
    }
    if eligible(node) {
        below.push(BTreeSet::from([node]));
    }
    below
}

/// Every antichain of cluster nodes reaching the maximum total stability.
pub fn best_antichains(tree: &CondensedTree, stability: &[f64]) -> (f64, Vec<BTreeSet<usize>>) {
    let n = tree.n_points();
    let eligible = |c: usize| c != tree.root() || tree.root_is_cluster();
    let all = antichains(tree, tree.root(), &eligible);
    let total = |s: &BTreeSet<usize>| s.iter().map(|&c| stability[c - n]).sum::<f64>();
    let best = all.iter().map(total).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * best.abs().max(1.0);
    let optimal = all.into_iter().filter(|s| total(s) >= best - tol).collect();
    (best, optimal)
}

/// 2-D points in blobs nested inside blobs, plus a few scattered points.
pub fn nested_blobs(rng: &mut ChaCha8Rng, max_points: usize) -> Vec<[f64; 2]> {
    let mut pts = Vec::new();
    let supers = rng.random_range(1..=3);
    for _ in 0..supers {
        let c = [rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0)];
        for _ in 0..rng.random_range(1..=3) {
            let sub = [c[0] + rng.random_range(-4.0..4.0), c[1] + rng.random_range(-4.0..4.0)];
            let spread = rng.random_range(0.2..1.0);
            for _ in 0..rng.random_range(3..=8) {
                let dx: f64 = rng.sample(StandardNormal);
                let dy: f64 = rng.sample(StandardNormal);
                pts.push([sub[0] + spread * dx, sub[1] + spread * dy]);
            }
        }
    }
    for _ in 0..rng.random_range(0..=4) {
        pts.push([rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)]);
    }
    pts.truncate(max_points);
    pts
}

/// Independent partition check: every index in exactly one cluster or in
/// noise, no empty clusters, no duplicate cluster ids.
pub fn check_partition(result: &ClusteringResult, n: usize) -> Result<(), String> {
    let mut seen = vec![0u32; n];
    let mut ids = BTreeSet::new();
    for c in &result.clusters {
        if c.members().is_empty() {
            return Err(format!("cluster {} is empty", c.id));
        }
        if !ids.insert(c.id) {
            return Err(format!("cluster id {} repeated", c.id));
        }
        for &m in c.members() {
            *seen.get_mut(m).ok_or(format!("index {m} out of range"))? += 1;
        }
    }
    for &m in &result.noise {
        *seen.get_mut(m).ok_or(format!("noise index {m} out of range"))? += 1;
    }
    match seen.iter().position(|&s| s != 1) {
        Some(i) => Err(format!("index {i} appears {} times", seen[i])),
        None => Ok(()),
    }
}

/// The five pipeline stages driven step by step through the public API,
/// returning the intermediate result after each stage.
pub fn staged_pipeline(corpus: &Corpus, params: &PipelineParams) -> Vec<(&'static str, ClusteringResult)> {
    let schedule = MergeSchedule::from_params(params).unwrap();
    let ranges = pipeline::partition_corpus(corpus, params).unwrap();
    let mut ids = IdAllocator::default();
    let mut stages = Vec::new();

    let mut r = pipeline::cluster_partitions(corpus, params, &ranges, &mut ids).unwrap();
    stages.push(("partition", r.clone()));

    r.clusters = pipeline::merge_clusters(r.clusters, &schedule, corpus).unwrap();
    stages.push(("merge_pass_1", r.clone()));

    let big = pipeline::find_big_clusters(&r.clusters, params.big_cluster_std_factor);
    let mut kept = Vec::new();
    for c in std::mem::take(&mut r.clusters) {
        if big.contains(&c.id) {
            let out = pipeline::split_big_cluster(corpus, c, params, &mut ids).unwrap();
            kept.extend(out.clusters);
            r.noise.extend(out.noise);
        } else {
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| c.id);
    r.clusters = kept;
    r.noise.sort_unstable();
    stages.push(("split_big_clusters", r.clone()));

    r.clusters = pipeline::merge_clusters(r.clusters, &schedule, corpus).unwrap();
    stages.push(("merge_pass_2", r.clone()));

    let (clusters, noise) =
        pipeline::assign_noise(corpus, r.clusters, r.noise, params.fit_noise_on_similarity).unwrap();
    stages.push(("assign_noise", ClusteringResult { clusters, noise, stage_log: vec![] }));
    stages
}

/// Labelled assignment built from explicit per-cluster label counts, for
/// metric checks. Embeddings are arbitrary unit vectors.
pub fn labelled_clusters(clusters: &[&[(&str, usize)]]) -> (Corpus, ClusteringResult) {
    use spkclust::{Cluster, ClusterOrigin, Embedding, Utterance};
    let mut utts = Vec::new();
    let mut groups = Vec::new();
    for spec in clusters {
        let mut members = Vec::new();
        for &(label, count) in spec.iter() {
            for _ in 0..count {
                members.push(utts.len());
                let e = Embedding::new(vec![1.0, 0.0]).unwrap();
                utts.push(Utterance::new(format!("u{}", utts.len()), e).with_speaker(label));
            }
        }
        groups.push(members);
    }
    let corpus = Corpus::new(utts).unwrap();
    let clusters = groups
        .into_iter()
        .enumerate()
        .map(|(k, m)| Cluster::new(k, m, &corpus, ClusterOrigin::default()).unwrap())
        .collect();
    (corpus, ClusteringResult { clusters, noise: vec![], stage_log: vec![] })
}
