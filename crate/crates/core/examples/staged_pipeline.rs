//! Running the pipeline one stage at a time: partition the corpus into
//! partial sets, cluster each independently, then refine the union.

use spkclust::pipeline::{cluster_partitions, partition_corpus, refine, IdAllocator};
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::PipelineParams;

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthSpec {
        num_speakers: 12,
        utterances: UtteranceCounts::Fixed(60),
        dim: 64,
        angular_spread: 0.4,
        seed: 5,
        ..SynthSpec::default()
    })?;
    // Small partial sets so every speaker is cut into several fragments.
    let params = PipelineParams {
        partial_set_size: 180,
        ..PipelineParams::default()
    };

    let ranges = partition_corpus(&corpus, &params)?;
    println!("{} utterances in {} partial sets: {ranges:?}", corpus.len(), ranges.len());

    let mut ids = IdAllocator::starting_at(0);
    let first = cluster_partitions(&corpus, &params, &ranges, &mut ids)?;
    for p in 0..ranges.len() {
        let n = first.clusters.iter().filter(|c| c.origin.partition == Some(p)).count();
        println!("  partial set {p}: {n} clusters");
    }
    println!("after partitioning: {} clusters, {} noise", first.clusters.len(), first.noise.len());

    let refined = refine(&corpus, &params, first, &mut ids)?;
    for record in &refined.stage_log {
        println!("  {record}");
    }
    let merged = refined.clusters.iter().filter(|c| c.origin.partition.is_none()).count();
    println!("{merged} of {} final clusters span more than one partial set", refined.clusters.len());
    Ok(())
}
