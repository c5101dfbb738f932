//! Reading and writing embeddings and assignments on disk.

use spkclust::io::{self, EmbeddingFormat};
use spkclust::pipeline::run_pipeline;
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};
use spkclust::PipelineParams;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let corpus = generate(&SynthSpec {
        num_speakers: 5,
        utterances: UtteranceCounts::Fixed(40),
        dim: 192,
        seed: 1,
        ..SynthSpec::default()
    })?;

    let text = dir.path().join("embeddings.tsv");
    let binary = dir.path().join("embeddings.bin");
    io::save_embeddings(&corpus, &text, EmbeddingFormat::Text)?;
    io::save_embeddings(&corpus, &binary, EmbeddingFormat::Binary)?;
    println!("text:   {} bytes", std::fs::metadata(&text)?.len());
    println!("binary: {} bytes (f32)", std::fs::metadata(&binary)?.len());

    // The loader sniffs the format; text round-trips exactly.
    assert_eq!(io::load_embeddings(&text, false)?, corpus);
    let from_binary = io::load_embeddings(&binary, true)?;
    println!("binary reload: {} utterances, dim {}", from_binary.len(), from_binary.dim());

    let first_line = std::fs::read_to_string(&text)?.lines().nth(1).unwrap_or_default().to_string();
    println!("first row: {}...", &first_line[..first_line.len().min(60)]);

    let result = run_pipeline(&from_binary, &PipelineParams::default())?;
    let assignments = dir.path().join("assignments.tsv");
    io::save_assignments(&result, &from_binary, None, &assignments)?;
    let rows = io::load_assignments(&assignments)?;
    let back = io::result_from_assignments(&rows, &from_binary)?;
    assert_eq!(back.assignments(from_binary.len()), result.assignments(from_binary.len()));
    println!("{} assignment rows, {} clusters", rows.len(), back.clusters.len());

    let log = dir.path().join("stages.tsv");
    io::save_stage_log(&result.stage_log, &log)?;
    print!("{}", std::fs::read_to_string(&log)?);
    Ok(())
}
