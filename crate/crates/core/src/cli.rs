//! Command-line front end: `cluster`, `evaluate`, `synth` and `simreport`.
//!
//! Every tunable flag can also be set through an environment variable named
//! `SPKCLUST_` plus the flag in upper snake case, e.g.
//! `SPKCLUST_MIN_CLUSTER_SIZE=6`. Explicit flags win over the environment.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::error::{Error, Result};
use crate::io::{self, EmbeddingFormat};
use crate::metrics;
use crate::pipeline;
use crate::synthgen::{self, SynthSpec, UtteranceCounts};
use crate::types::{Corpus, PipelineParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "spkclust", version, about = "Unsupervised speaker clustering of utterance embeddings")]
pub struct Cli {
    /// Worker threads; 0 uses every available core.
    #[arg(long, global = true, default_value_t = 0, env = "SPKCLUST_THREADS")]
    pub threads: usize,

    /// More log output on stderr (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Cluster an embeddings file and write per-utterance assignments.
    Cluster(ClusterArgs),
    /// Score assignments against the speaker labels of an embeddings file.
    Evaluate(EvaluateArgs),
    /// Write a labelled synthetic embeddings file.
    Synth(SynthArgs),
    /// Histogram same- and different-speaker cosine similarities.
    Simreport(SimreportArgs),
}

#[derive(Debug, Args)]
pub struct PipelineFlags {
    /// Utterances clustered together in one partial set.
    #[arg(long, default_value_t = 10_000, env = "SPKCLUST_PARTIAL_SET_SIZE",
          value_parser = at_least(2))]
    pub partial_set_size: usize,

    #[arg(long, default_value_t = 4, env = "SPKCLUST_MIN_CLUSTER_SIZE",
          value_parser = at_least(2))]
    pub min_cluster_size: usize,

    #[arg(long, default_value_t = 1, env = "SPKCLUST_MIN_SAMPLES",
          value_parser = at_least(1))]
    pub min_samples: usize,

    /// Noise points join a cluster when centroid similarity is strictly above this.
    #[arg(long, default_value_t = 0.8, env = "SPKCLUST_FIT_NOISE_ON_SIMILARITY")]
    pub fit_noise_on_similarity: f64,

    #[arg(long, default_value_t = 0.96, env = "SPKCLUST_MERGE_START")]
    pub merge_start: f64,

    #[arg(long, default_value_t = 0.90, env = "SPKCLUST_MERGE_END")]
    pub merge_end: f64,

    #[arg(long, default_value_t = 0.01, env = "SPKCLUST_MERGE_STEP")]
    pub merge_step: f64,

    /// Clusters larger than mean + factor * std are re-split.
    #[arg(long, default_value_t = 2.0, env = "SPKCLUST_BIG_CLUSTER_STD_FACTOR")]
    pub big_cluster_std_factor: f64,

    /// Per-cluster duration cap used for the excess column.
    #[arg(long, default_value_t = 5400.0, env = "SPKCLUST_SPEAKER_DURATION_CAP_SECONDS")]
    pub speaker_duration_cap_seconds: f64,

    /// Leave the excess column empty.
    #[arg(long)]
    pub no_duration_cap: bool,
}

impl PipelineFlags {
    pub fn params(&self) -> Result<PipelineParams> {
        let params = PipelineParams {
            partial_set_size: self.partial_set_size,
            min_cluster_size: self.min_cluster_size,
            min_samples: self.min_samples,
            fit_noise_on_similarity: self.fit_noise_on_similarity,
            merge_start: self.merge_start,
            merge_end: self.merge_end,
            merge_step: self.merge_step,
            big_cluster_std_factor: self.big_cluster_std_factor,
            speaker_duration_cap_seconds: (!self.no_duration_cap).then_some(self.speaker_duration_cap_seconds),
            ..PipelineParams::default()
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    /// Embeddings file (text or binary).
    #[arg(long)]
    pub embeddings: PathBuf,

    /// One row per utterance: id, cluster (-1 for noise), excess flag.
    #[arg(long)]
    pub out_assignments: PathBuf,

    /// Per-stage cluster and noise counts.
    #[arg(long)]
    pub out_log: Option<PathBuf>,

    /// Reject vectors that are not unit norm instead of rescaling them.
    #[arg(long)]
    pub no_renormalize: bool,

    #[command(flatten)]
    pub pipeline: PipelineFlags,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub assignments: PathBuf,

    /// Embeddings file carrying speaker labels.
    #[arg(long)]
    pub embeddings: PathBuf,

    #[arg(long)]
    pub out_report: PathBuf,

    /// Clusters with fewer utterances are dropped before scoring.
    #[arg(long, default_value_t = 30, env = "SPKCLUST_MIN_UTTERANCES")]
    pub min_utterances: usize,

    /// Share of the largest clusters used for the coverage figure.
    #[arg(long, default_value_t = 0.8, env = "SPKCLUST_TOP_FRACTION")]
    pub top_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Text,
    Binary,
}

impl From<FormatArg> for EmbeddingFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => EmbeddingFormat::Text,
            FormatArg::Binary => EmbeddingFormat::Binary,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 80, env = "SPKCLUST_NUM_SPEAKERS",
          value_parser = at_least(1))]
    pub num_speakers: usize,

    /// Utterances per speaker; ignored when a min/max range is given.
    #[arg(long, default_value_t = 150, env = "SPKCLUST_UTTERANCES_PER_SPEAKER")]
    pub utterances_per_speaker: usize,

    /// Draw each speaker's utterance count uniformly from min..=max.
    #[arg(long, requires = "max_utterances")]
    pub min_utterances: Option<usize>,

    #[arg(long, requires = "min_utterances")]
    pub max_utterances: Option<usize>,

    #[arg(long, default_value_t = 256, env = "SPKCLUST_DIM")]
    pub dim: usize,

    #[arg(long, default_value_t = 0.5, env = "SPKCLUST_ANGULAR_SPREAD")]
    pub angular_spread: f64,

    #[arg(long, default_value_t = 0, env = "SPKCLUST_SEED")]
    pub seed: u64,

    #[arg(long, default_value_t = 6.0, env = "SPKCLUST_DURATION_MEAN_SECONDS")]
    pub duration_mean_seconds: f64,

    /// Fraction of speakers placed in confusable pairs.
    #[arg(long, default_value_t = 0.0, env = "SPKCLUST_CONFUSABLE_FRACTION")]
    pub confusable_fraction: f64,

    #[arg(long, default_value_t = 0.9, env = "SPKCLUST_CONFUSABLE_SIMILARITY")]
    pub confusable_similarity: f64,

    /// Keep utterances grouped by speaker.
    #[arg(long)]
    pub no_shuffle: bool,

    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    pub format: FormatArg,
}

impl SynthArgs {
    pub fn spec(&self) -> SynthSpec {
        let utterances = match (self.min_utterances, self.max_utterances) {
            (Some(min), Some(max)) => UtteranceCounts::Uniform { min, max },
            _ => UtteranceCounts::Fixed(self.utterances_per_speaker),
        };
        SynthSpec {
            num_speakers: self.num_speakers,
            utterances,
            dim: self.dim,
            angular_spread: self.angular_spread,
            seed: self.seed,
            duration_mean_seconds: self.duration_mean_seconds,
            confusable_fraction: self.confusable_fraction,
            confusable_similarity: self.confusable_similarity,
            shuffle: !self.no_shuffle,
        }
    }
}

#[derive(Debug, Args)]
pub struct SimreportArgs {
    /// Embeddings file carrying speaker labels.
    #[arg(long)]
    pub embeddings: PathBuf,

    #[arg(long)]
    pub out: PathBuf,

    #[arg(long, default_value_t = 50, env = "SPKCLUST_BINS",
          value_parser = at_least(1))]
    pub bins: usize,
}

fn at_least(min: usize) -> impl Fn(&str) -> std::result::Result<usize, String> + Clone + Send + Sync {
    move |s| match s.parse::<usize>() {
        Ok(v) if v >= min => Ok(v),
        Ok(v) => Err(format!("must be >= {min}, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParams(_) | Error::UnknownMethod(_) => EXIT_USAGE,
        Error::Invariant { .. } => EXIT_INTERNAL,
        _ => EXIT_DATA,
    }
}

pub fn cmd_cluster(args: &ClusterArgs) -> Result<()> {
    let params = args.pipeline.params()?;
    let corpus = io::load_embeddings(&args.embeddings, !args.no_renormalize)?;
    info!("loaded {} utterances of dimension {}", corpus.len(), corpus.dim());
    let result = pipeline::run_pipeline(&corpus, &params)?;
    let excess = match params.speaker_duration_cap_seconds {
        Some(cap) if has_durations(&corpus) => {
            let capped = pipeline::cap_speaker_duration(&result, &corpus, cap)?;
            let flagged: usize = capped.iter().map(|c| c.excess.len()).sum();
            info!("{flagged} utterances exceed the {cap} s per-cluster cap");
            Some(pipeline::excess_flags(&capped, corpus.len()))
        }
        Some(_) => {
            warn!("input has no durations; skipping the duration cap");
            None
        }
        None => None,
    };
    io::save_assignments(&result, &corpus, excess.as_deref(), &args.out_assignments)?;
    if let Some(path) = &args.out_log {
        io::save_stage_log(&result.stage_log, path)?;
    }
    info!(
        "{} clusters, {} noise utterances",
        result.clusters.len(),
        result.noise.len()
    );
    Ok(())
}

fn has_durations(corpus: &Corpus) -> bool {
    corpus.utterances().iter().any(|u| u.duration_seconds.is_some())
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let corpus = io::load_embeddings(&args.embeddings, true)?;
    corpus.speaker_labels()?;
    let rows = io::load_assignments(&args.assignments)?;
    let result = io::result_from_assignments(&rows, &corpus)?;
    let report = metrics::evaluate(&result, &corpus, args.min_utterances, args.top_fraction)?;
    io::save_report(&report, &args.out_report)?;
    for (key, value) in io::ReportTable::from(&report).rows() {
        info!("{key}: {value}");
    }
    Ok(())
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = args.spec();
    let corpus = synthgen::generate(&spec)?;
    io::save_embeddings(&corpus, &args.out, args.format.into())?;
    info!(
        "wrote {} utterances from {} speakers to {}",
        corpus.len(),
        spec.num_speakers,
        args.out.display()
    );
    Ok(())
}

pub fn cmd_simreport(args: &SimreportArgs) -> Result<()> {
    let corpus = io::load_embeddings(&args.embeddings, true)?;
    let report = metrics::similarity_report(&corpus, args.bins)?;
    io::save_similarity_report(&report, &args.out)?;
    info!(
        "same-speaker mean {:.4}, different-speaker mean {:.4}, overlap {:.4}",
        report.same.mean, report.different.mean, report.overlap
    );
    Ok(())
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Info,
        (false, 1) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("SPKCLUST_LOG")
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Runs one parsed command on a pool of `cli.threads` workers.
pub fn execute(cli: &Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::InvalidParams(format!("cannot start {} threads: {e}", cli.threads)))?;
    pool.install(|| match &cli.command {
        Command::Cluster(a) => cmd_cluster(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Simreport(a) => cmd_simreport(a),
    })
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    init_logging(cli.verbose, cli.quiet);
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            log::error!("{e}");
            exit_code(&e)
        }
    }
}
