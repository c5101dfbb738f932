//! End to end: generate a labelled corpus, cluster it, and score the result.
//!
//!     cargo run --release --example cluster_corpus -- [num_speakers] [seed]

use spkclust::metrics::evaluate;
use spkclust::pipeline::run_pipeline;
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::PipelineParams;

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let num_speakers = args.next().map(|s| s.parse()).transpose()?.unwrap_or(20);
    let seed = args.next().map(|s| s.parse()).transpose()?.unwrap_or(7);

    let corpus = generate(&SynthSpec {
        num_speakers,
        utterances: UtteranceCounts::Uniform { min: 50, max: 200 },
        dim: 128,
        seed,
        confusable_fraction: 0.1,
        ..SynthSpec::default()
    })?;
    println!("{} utterances from {num_speakers} speakers", corpus.len());

    let params = PipelineParams {
        partial_set_size: 1500,
        ..PipelineParams::default()
    };
    let result = run_pipeline(&corpus, &params)?;
    for record in &result.stage_log {
        println!("  {record}");
    }

    let report = evaluate(&result, &corpus, params.report_min_cluster_utterances, 0.8)?;
    println!("clusters (>= {} utts)   {}", params.report_min_cluster_utterances, report.num_clusters_after_filter);
    println!("average purity          {:.2}%", 100.0 * report.average_purity);
    println!("cluster uniqueness      {:.2}%", 100.0 * report.cluster_uniqueness);
    println!("noise                   {:.2}%", 100.0 * report.noise_fraction);
    println!("coverage of top 80%     {:.2}%", 100.0 * report.coverage);
    Ok(())
}
