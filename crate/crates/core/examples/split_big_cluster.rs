//! Re-splitting an oversized cluster. A cluster that fused two speakers is
//! separated again; a cluster holding one speaker is left alone.

use spkclust::pipeline::{find_big_clusters, recluster_leaf, split_big_cluster, IdAllocator};
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::{Cluster, ClusterOrigin, Corpus, PipelineParams};

fn corpus(speakers: usize, per: usize) -> anyhow::Result<Corpus> {
    Ok(generate(&SynthSpec {
        num_speakers: speakers,
        utterances: UtteranceCounts::Fixed(per),
        dim: 64,
        angular_spread: 0.4,
        seed: 3,
        ..SynthSpec::default()
    })?)
}

fn main() -> anyhow::Result<()> {
    // Which cluster counts as big: size above mean + 2 std.
    let sizes_corpus = corpus(1, 400)?;
    let mut start = 0;
    let clusters = [20, 22, 18, 25, 21, 19, 23, 20, 200]
        .iter()
        .enumerate()
        .map(|(id, &n)| {
            let c = Cluster::new(id, (start..start + n).collect(), &sizes_corpus, ClusterOrigin::default());
            start += n;
            c
        })
        .collect::<Result<Vec<_>, _>>()?;
    println!("big clusters: {:?}", find_big_clusters(&clusters, 2.0));

    let params = PipelineParams::default();
    for (label, corpus) in [("two speakers fused", corpus(2, 100)?), ("one speaker", corpus(1, 200)?)] {
        let whole = Cluster::new(0, (0..corpus.len()).collect(), &corpus, ClusterOrigin::default())?;
        let (leaves, leaf_noise) = recluster_leaf(&corpus, &whole, &params)?;
        let out = split_big_cluster(&corpus, whole, &params, &mut IdAllocator::starting_at(1))?;
        let sizes: Vec<usize> = out.clusters.iter().map(Cluster::len).collect();
        println!(
            "{label}: leaf run gave {} leaves and {} noise; after consolidation {sizes:?} (split: {}, noise {})",
            leaves.len(),
            leaf_noise.len(),
            out.was_split(),
            out.noise.len()
        );
    }
    Ok(())
}
