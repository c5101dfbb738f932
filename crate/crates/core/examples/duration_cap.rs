//! Limiting how much speech each discovered speaker contributes to a
//! training set.

use spkclust::pipeline::{cap_speaker_duration, excess_flags, run_pipeline};
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::PipelineParams;

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthSpec {
        num_speakers: 4,
        utterances: UtteranceCounts::PerSpeaker(vec![20, 60, 120, 200]),
        dim: 64,
        seed: 9,
        ..SynthSpec::default()
    })?;
    let result = run_pipeline(&corpus, &PipelineParams::default())?;

    let cap = 10.0 * 60.0;
    let capped = cap_speaker_duration(&result, &corpus, cap)?;
    for c in &capped {
        println!(
            "cluster {:>2}: keep {:>3} utterances ({:>5.1} s), drop {:>3}",
            c.cluster_id,
            c.selected.len(),
            c.selected_seconds,
            c.excess.len()
        );
    }
    let flags = excess_flags(&capped, corpus.len());
    let dropped = flags.iter().filter(|f| **f == Some(true)).count();
    println!("{dropped} of {} utterances exceed the {cap} s cap", corpus.len());
    Ok(())
}
