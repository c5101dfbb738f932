//! Same-speaker versus different-speaker cosine similarities, the usual
//! sanity check before picking merge and noise thresholds.

use spkclust::metrics::similarity_report;
use spkclust::synthgen::{generate, SynthSpec, UtteranceCounts};

fn main() -> anyhow::Result<()> {
    let corpus = generate(&SynthSpec {
        num_speakers: 20,
        utterances: UtteranceCounts::Fixed(30),
        dim: 128,
        seed: 6,
        ..SynthSpec::default()
    })?;
    let report = similarity_report(&corpus, 20)?;
    for (name, s) in [("same", &report.same), ("different", &report.different)] {
        println!(
            "{name:>9}: {} pairs, mean {:.3}, std {:.3}, range [{:.3}, {:.3}]",
            s.count, s.mean, s.std, s.min, s.max
        );
    }
    println!("histogram overlap: {:.4}\n", report.overlap);

    let scale = |n: u64, total: u64| "#".repeat((100 * n / total.max(1)) as usize);
    for b in 0..report.bins {
        let (lo, hi) = report.bin_edges(b);
        if report.same.histogram[b] + report.different.histogram[b] == 0 {
            continue;
        }
        println!(
            "[{lo:+.1}, {hi:+.1})  same {:<40} diff {}",
            scale(report.same.histogram[b], report.same.count),
            scale(report.different.histogram[b], report.different.count)
        );
    }
    Ok(())
}
