//! Scoring a clustering against ground-truth speaker labels and writing
//! the report table.

use spkclust::io;
use spkclust::metrics::{cluster_purity, corpus_labels, evaluate};
use spkclust::pipeline::run_pipeline;
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::PipelineParams;

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthSpec {
        num_speakers: 10,
        utterances: UtteranceCounts::Uniform { min: 20, max: 80 },
        dim: 64,
        angular_spread: 0.5,
        seed: 4,
        confusable_fraction: 0.4,
        confusable_similarity: 0.95,
        ..SynthSpec::default()
    })?;
    let result = run_pipeline(&corpus, &PipelineParams::default())?;

    let labels = corpus_labels(&corpus);
    for c in &result.clusters {
        println!("cluster {:>3}: {:>3} utterances, purity {:.3}", c.id, c.len(), cluster_purity(c, &labels)?);
    }

    let report = evaluate(&result, &corpus, 30, 0.8)?;
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("report.tsv");
    io::save_report(&report, &path)?;
    print!("\n{}", std::fs::read_to_string(&path)?);
    Ok(())
}
