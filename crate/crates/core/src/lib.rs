//! Unsupervised speaker clustering over utterance embeddings.
//!
//! Given unit-norm voice embeddings with no speaker labels and no speaker
//! count, [`pipeline::run_pipeline`] discovers speaker clusters in five
//! stages: HDBSCAN over memory-bounded partial sets, decaying-threshold
//! centroid merging, leaf re-clustering of oversized clusters, a second
//! merge pass, and reassignment of noise points to nearby clusters.
//! [`metrics`] scores the result against ground truth with Cluster Purity
//! and Cluster Uniqueness.
//!
//! ```no_run
//! use spkclust::{io, pipeline, PipelineParams};
//!
//! let corpus = io::load_embeddings("embeddings.tsv", true)?;
//! let result = pipeline::run_pipeline(&corpus, &PipelineParams::default())?;
//! println!("{} clusters, {} noise", result.clusters.len(), result.noise.len());
//! # Ok::<(), spkclust::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod geometry;
pub mod hdbscan;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod synthgen;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    Cluster, ClusterId, ClusterOrigin, ClusteringResult, Corpus, Embedding, Metric,
    PipelineParams, StageRecord, Utterance,
};
