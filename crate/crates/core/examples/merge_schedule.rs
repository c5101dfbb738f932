//! Centroid merging under the decaying threshold schedule: fragments of
//! the same speaker are reunited, distinct speakers are not.

use spkclust::geometry::cluster_similarity;
use spkclust::pipeline::{merge_clusters, MergeSchedule};
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::{Cluster, ClusterOrigin, PipelineParams};

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthSpec {
        num_speakers: 3,
        utterances: UtteranceCounts::Fixed(40),
        dim: 64,
        angular_spread: 0.3,
        seed: 2,
        shuffle: false,
        ..SynthSpec::default()
    })?;
    // Cut each speaker's 40 utterances into four fragments of 10.
    let fragments = (0..12)
        .map(|k| Cluster::new(k, (10 * k..10 * k + 10).collect(), &corpus, ClusterOrigin::default()))
        .collect::<Result<Vec<_>, _>>()?;
    println!("fragment 0 vs 1 (same speaker):      {:.3}", cluster_similarity(&fragments[0], &fragments[1])?);
    println!("fragment 0 vs 4 (different speaker): {:.3}", cluster_similarity(&fragments[0], &fragments[4])?);

    let schedule = MergeSchedule::from_params(&PipelineParams::default())?;
    println!("schedule: {:?}", schedule.thresholds());
    let merged = merge_clusters(fragments, &schedule, &corpus)?;
    for c in &merged {
        let speaker = corpus.utterances()[c.members()[0]].true_speaker.as_deref().unwrap_or("?");
        println!("cluster {:>2}: {} members, {} merges, speaker {speaker}", c.id, c.len(), c.origin.merge_generation);
    }

    // A custom, more permissive schedule also fuses speakers.
    let loose = MergeSchedule::new(vec![0.9, 0.5, 0.0])?;
    let fragments = (0..12)
        .map(|k| Cluster::new(k, (10 * k..10 * k + 10).collect(), &corpus, ClusterOrigin::default()))
        .collect::<Result<Vec<_>, _>>()?;
    println!("with thresholds {:?}: {} clusters", loose.thresholds(), merge_clusters(fragments, &loose, &corpus)?.len());
    Ok(())
}
