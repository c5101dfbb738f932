//! On-disk formats.
//!
//! Embeddings (text): UTF-8, LF line endings, `#` comment lines allowed
//! anywhere, then a header row and one utterance per line:
//!
//! ```text
//! id<TAB>duration<TAB>speaker<TAB>embedding
//! spk000-u0001<TAB>5.912<TAB>spk000<TAB>0.0132,-0.0871,...
//! ```
//!
//! `duration` and `speaker` may be empty. Embeddings (binary) start with a
//! 32-byte little-endian header followed by fixed-width records; see
//! [`BINARY_MAGIC`]. Assignments, stage logs, reports and histograms are
//! tab-separated text with a header row. Every writer goes through a
//! temporary file that is renamed into place, so a failed write leaves no
//! partial output.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{EvaluationReport, SimilarityReport};
use crate::types::{
    Cluster, ClusterId, ClusterOrigin, ClusteringResult, Corpus, Embedding, StageRecord, Utterance,
};

pub const EMBEDDINGS_HEADER: &str = "id\tduration\tspeaker\tembedding";
pub const ASSIGNMENTS_HEADER: &str = "id\tcluster\texcess";
pub const STAGE_LOG_HEADER: &str = "stage\tclusters_before\tclusters_after\tnoise";
pub const REPORT_HEADER: &str = "metric\tvalue";
pub const HISTOGRAM_HEADER: &str = "bin_low\tbin_high\tsame_speaker\tdifferent_speaker";
/// Cluster column value for utterances assigned to no cluster.
pub const NOISE_MARKER: &str = "-1";

/// Binary embedding file layout, all integers little-endian:
///
/// | offset | size | field                                  |
/// |--------|------|----------------------------------------|
/// | 0      | 8    | magic `SPKCEMB\0`                      |
/// | 8      | 4    | version (u32, currently 1)             |
/// | 12     | 4    | dimension D (u32)                      |
/// | 16     | 8    | record count (u64)                     |
/// | 24     | 4    | text field width W in bytes (u32)      |
/// | 28     | 4    | reserved, zero                         |
///
/// Each record is `W` bytes of id, `W` bytes of speaker label (both UTF-8,
/// zero padded; an all-zero speaker means unlabelled), an f32 duration
/// (NaN when absent) and D f32 embedding values.
pub const BINARY_MAGIC: &[u8; 8] = b"SPKCEMB\0";
pub const BINARY_VERSION: u32 = 1;
const BINARY_HEADER_LEN: usize = 32;

/// Largest allowed deviation from unit norm when not renormalizing.
pub const NORM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmbeddingFormat {
    #[default]
    Text,
    Binary,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temporary file renamed over `path` on success.
pub fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        body(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn check_text_field(value: &str, what: &str) -> Result<()> {
    if value.contains(['\t', '\n', '\r']) {
        return Err(Error::InvalidParams(format!("{what} {value:?} contains a tab or newline")));
    }
    Ok(())
}

/// Turns raw values into an embedding under the normalization policy.
fn checked_embedding(values: Vec<f64>, renormalize: bool, path: &Path, row: usize) -> Result<Embedding> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::parse(path, row, "non-finite embedding value"));
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::parse(path, row, "zero embedding vector"));
    }
    if renormalize {
        Embedding::normalized(values).map_err(|e| Error::parse(path, row, e.to_string()))
    } else if (norm - 1.0).abs() > NORM_TOLERANCE {
        Err(Error::parse(
            path,
            row,
            format!("embedding norm {norm:.6} is not within {NORM_TOLERANCE} of 1"),
        ))
    } else {
        Embedding::new(values).map_err(|e| Error::parse(path, row, e.to_string()))
    }
}

/// Tracks dimension and id uniqueness while rows stream in.
struct RowChecker<'a> {
    path: &'a Path,
    dim: Option<usize>,
    ids: HashSet<String>,
}

impl RowChecker<'_> {
    fn check(&mut self, id: &str, dim: usize, row: usize) -> Result<()> {
        if id.is_empty() {
            return Err(Error::parse(self.path, row, "empty utterance id"));
        }
        match self.dim {
            None => self.dim = Some(dim),
            Some(d) if d != dim => {
                return Err(Error::parse(
                    self.path,
                    row,
                    format!("embedding has {dim} values, expected {d}"),
                ))
            }
            _ => {}
        }
        if !self.ids.insert(id.to_string()) {
            return Err(Error::parse(self.path, row, format!("duplicate utterance id {id:?}")));
        }
        Ok(())
    }
}

/// Loads embeddings in file order, detecting the binary format by its magic.
///
/// With `renormalize` every vector is scaled to unit norm; otherwise
/// vectors further than [`NORM_TOLERANCE`] from unit norm are rejected.
/// Errors carry the 1-based line (text) or record (binary) number.
pub fn load_embeddings(path: impl AsRef<Path>, renormalize: bool) -> Result<Corpus> {
    let path = path.as_ref();
    let mut reader = BufReader::new(open(path)?);
    let head = reader.fill_buf().map_err(|e| Error::io(path, e))?;
    if head.starts_with(BINARY_MAGIC) {
        load_binary(path, reader, renormalize)
    } else {
        load_text(path, reader, renormalize)
    }
}

fn parse_optional(field: &str) -> Option<&str> {
    (!field.is_empty()).then_some(field)
}

fn load_text(path: &Path, reader: impl BufRead, renormalize: bool) -> Result<Corpus> {
    let mut checker = RowChecker {
        path,
        dim: None,
        ids: HashSet::new(),
    };
    let mut utterances = Vec::new();
    let mut seen_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let row = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        if !seen_header {
            if line != EMBEDDINGS_HEADER {
                return Err(Error::parse(
                    path,
                    row,
                    format!("expected header {EMBEDDINGS_HEADER:?}"),
                ));
            }
            seen_header = true;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [id, duration, speaker, values] = fields[..] else {
            return Err(Error::parse(path, row, format!("expected 4 tab-separated fields, got {}", fields.len())));
        };
        let values = values
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::parse(path, row, format!("bad embedding value: {e}")))?;
        checker.check(id, values.len(), row)?;
        let embedding = checked_embedding(values, renormalize, path, row)?;
        let mut u = Utterance::new(id, embedding);
        if let Some(d) = parse_optional(duration) {
            let d: f64 = d
                .parse()
                .map_err(|e| Error::parse(path, row, format!("bad duration {d:?}: {e}")))?;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::parse(path, row, format!("duration must be > 0, got {d}")));
            }
            u = u.with_duration(d);
        }
        if let Some(s) = parse_optional(speaker) {
            u = u.with_speaker(s);
        }
        utterances.push(u);
    }
    if !seen_header {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    Corpus::new(utterances).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn read_exact(path: &Path, r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::parse(path, 0, format!("file truncated while reading {what}"))
        } else {
            Error::io(path, e)
        }
    })
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

fn text_field(path: &Path, raw: &[u8], row: usize) -> Result<String> {
    let end = raw.iter().position(|&b| b == 0).unwrap_or(raw.len());
    String::from_utf8(raw[..end].to_vec()).map_err(|_| Error::parse(path, row, "text field is not UTF-8"))
}

fn load_binary(path: &Path, mut reader: impl Read, renormalize: bool) -> Result<Corpus> {
    let mut header = [0u8; BINARY_HEADER_LEN];
    read_exact(path, &mut reader, &mut header, "header")?;
    let version = u32_at(&header, 8);
    if version != BINARY_VERSION {
        return Err(Error::parse(path, 0, format!("unsupported binary version {version}")));
    }
    let dim = u32_at(&header, 12) as usize;
    let count = u64::from_le_bytes(header[16..24].try_into().expect("8 bytes"));
    let width = u32_at(&header, 24) as usize;
    if dim == 0 || width == 0 {
        return Err(Error::parse(path, 0, "header declares zero dimension or field width"));
    }
    let mut checker = RowChecker {
        path,
        dim: Some(dim),
        ids: HashSet::new(),
    };
    let mut record = vec![0u8; 2 * width + 4 + 4 * dim];
    let mut utterances = Vec::new();
    for r in 0..count {
        let row = r as usize + 1;
        read_exact(path, &mut reader, &mut record, "record")?;
        let id = text_field(path, &record[..width], row)?;
        let speaker = text_field(path, &record[width..2 * width], row)?;
        let duration = f32::from_le_bytes(record[2 * width..2 * width + 4].try_into().expect("4 bytes"));
        let values: Vec<f64> = record[2 * width + 4..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        checker.check(&id, values.len(), row)?;
        let mut u = Utterance::new(id, checked_embedding(values, renormalize, path, row)?);
        if !duration.is_nan() {
            if !(duration > 0.0 && duration.is_finite()) {
                return Err(Error::parse(path, row, format!("duration must be > 0, got {duration}")));
            }
            u = u.with_duration(duration as f64);
        }
        if !speaker.is_empty() {
            u = u.with_speaker(speaker);
        }
        utterances.push(u);
    }
    Corpus::new(utterances).map_err(|e| Error::parse(path, 0, e.to_string()))
}

fn join_values(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 20);
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            s.push(',');
        }
        s.push_str(&v.to_string());
    }
    s
}

/// Writes `corpus` in the given format. Text output round-trips exactly.
pub fn save_embeddings(corpus: &Corpus, path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<()> {
    let path = path.as_ref();
    for u in corpus.utterances() {
        check_text_field(&u.id, "utterance id")?;
        if let Some(s) = &u.true_speaker {
            check_text_field(s, "speaker label")?;
        }
    }
    match format {
        EmbeddingFormat::Text => write_atomic(path, |w| {
            writeln!(w, "{EMBEDDINGS_HEADER}")?;
            for u in corpus.utterances() {
                let duration = u.duration_seconds.map(|d| d.to_string()).unwrap_or_default();
                let speaker = u.true_speaker.as_deref().unwrap_or_default();
                writeln!(w, "{}\t{duration}\t{speaker}\t{}", u.id, join_values(u.embedding.values()))?;
            }
            Ok(())
        }),
        EmbeddingFormat::Binary => {
            let width = corpus
                .utterances()
                .iter()
                .map(|u| u.id.len().max(u.true_speaker.as_ref().map_or(0, String::len)))
                .max()
                .unwrap_or(1)
                .max(1);
            write_atomic(path, |w| {
                let mut header = [0u8; BINARY_HEADER_LEN];
                header[..8].copy_from_slice(BINARY_MAGIC);
                header[8..12].copy_from_slice(&BINARY_VERSION.to_le_bytes());
                header[12..16].copy_from_slice(&(corpus.dim() as u32).to_le_bytes());
                header[16..24].copy_from_slice(&(corpus.len() as u64).to_le_bytes());
                header[24..28].copy_from_slice(&(width as u32).to_le_bytes());
                w.write_all(&header)?;
                let mut field = vec![0u8; width];
                for u in corpus.utterances() {
                    for text in [Some(u.id.as_str()), u.true_speaker.as_deref()] {
                        field.fill(0);
                        if let Some(t) = text {
                            field[..t.len()].copy_from_slice(t.as_bytes());
                        }
                        w.write_all(&field)?;
                    }
                    let d = u.duration_seconds.map_or(f32::NAN, |d| d as f32);
                    w.write_all(&d.to_le_bytes())?;
                    for v in u.embedding.values() {
                        w.write_all(&(*v as f32).to_le_bytes())?;
                    }
                }
                Ok(())
            })
        }
    }
}

/// One line of an assignments file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentRow {
    pub id: String,
    pub cluster: Option<ClusterId>,
    /// Set when a duration cap was applied; `None` otherwise and for noise.
    pub excess: Option<bool>,
}

/// One row per utterance in corpus order. `excess` comes from
/// [`crate::pipeline::excess_flags`] when a duration cap was applied.
pub fn save_assignments(
    result: &ClusteringResult,
    corpus: &Corpus,
    excess: Option<&[Option<bool>]>,
    path: impl AsRef<Path>,
) -> Result<()> {
    let path = path.as_ref();
    let assigned = result.assignments(corpus.len());
    write_atomic(path, |w| {
        writeln!(w, "{ASSIGNMENTS_HEADER}")?;
        for (i, u) in corpus.utterances().iter().enumerate() {
            let cluster = assigned[i].map_or_else(|| NOISE_MARKER.to_string(), |c| c.to_string());
            let flag = match excess.and_then(|e| e.get(i).copied().flatten()) {
                Some(true) => "1",
                Some(false) => "0",
                None => "",
            };
            writeln!(w, "{}\t{cluster}\t{flag}", u.id)?;
        }
        Ok(())
    })
}

fn data_lines(path: &Path, header: &str) -> Result<Vec<(usize, String)>> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    let mut seen_header = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !seen_header {
            if line != header {
                return Err(Error::parse(path, idx + 1, format!("expected header {header:?}")));
            }
            seen_header = true;
            continue;
        }
        out.push((idx + 1, line));
    }
    if !seen_header {
        return Err(Error::parse(path, 1, "missing header row"));
    }
    Ok(out)
}

pub fn load_assignments(path: impl AsRef<Path>) -> Result<Vec<AssignmentRow>> {
    let path = path.as_ref();
    data_lines(path, ASSIGNMENTS_HEADER)?
        .into_iter()
        .map(|(row, line)| {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, cluster, excess] = fields[..] else {
                return Err(Error::parse(path, row, "expected 3 tab-separated fields"));
            };
            let cluster = if cluster == NOISE_MARKER {
                None
            } else {
                Some(
                    cluster
                        .parse()
                        .map_err(|_| Error::parse(path, row, format!("bad cluster id {cluster:?}")))?,
                )
            };
            let excess = match excess {
                "" => None,
                "0" => Some(false),
                "1" => Some(true),
                other => return Err(Error::parse(path, row, format!("bad excess flag {other:?}"))),
            };
            Ok(AssignmentRow {
                id: id.to_string(),
                cluster,
                excess,
            })
        })
        .collect()
}

/// Rebuilds a clustering over `corpus` from assignment rows. Every corpus
/// utterance must appear exactly once.
pub fn result_from_assignments(rows: &[AssignmentRow], corpus: &Corpus) -> Result<ClusteringResult> {
    let index: HashMap<&str, usize> = corpus
        .utterances()
        .iter()
        .enumerate()
        .map(|(i, u)| (u.id.as_str(), i))
        .collect();
    let mut seen = vec![false; corpus.len()];
    let mut groups: std::collections::BTreeMap<ClusterId, Vec<usize>> = Default::default();
    let mut noise = Vec::new();
    for r in rows {
        let &i = index
            .get(r.id.as_str())
            .ok_or_else(|| Error::InvalidParams(format!("assignment for unknown utterance {:?}", r.id)))?;
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidParams(format!("utterance {:?} assigned twice", r.id)));
        }
        match r.cluster {
            Some(c) => groups.entry(c).or_default().push(i),
            None => noise.push(i),
        }
    }
    if let Some(i) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidParams(format!(
            "utterance {:?} has no assignment",
            corpus.utterances()[i].id
        )));
    }
    let clusters = groups
        .into_iter()
        .map(|(id, members)| Cluster::new(id, members, corpus, ClusterOrigin::default()))
        .collect::<Result<Vec<_>>>()?;
    noise.sort_unstable();
    Ok(ClusteringResult {
        clusters,
        noise,
        stage_log: Vec::new(),
    })
}

pub fn save_stage_log(log: &[StageRecord], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        writeln!(w, "{STAGE_LOG_HEADER}")?;
        for r in log {
            writeln!(w, "{}\t{}\t{}\t{}", r.stage, r.clusters_before, r.clusters_after, r.noise)?;
        }
        Ok(())
    })
}

pub fn load_stage_log(path: impl AsRef<Path>) -> Result<Vec<StageRecord>> {
    let path = path.as_ref();
    data_lines(path, STAGE_LOG_HEADER)?
        .into_iter()
        .map(|(row, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            let [stage, before, after, noise] = f[..] else {
                return Err(Error::parse(path, row, "expected 4 tab-separated fields"));
            };
            let num = |s: &str| s.parse::<usize>().map_err(|_| Error::parse(path, row, format!("bad count {s:?}")));
            Ok(StageRecord {
                stage: stage.to_string(),
                clusters_before: num(before)?,
                clusters_after: num(after)?,
                noise: num(noise)?,
            })
        })
        .collect()
}

/// A fraction as a percentage with two decimals, e.g. `0.8481 -> "84.81"`.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.2}", fraction * 100.0)
}

/// The serialized view of an [`EvaluationReport`]: the headline rows plus coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportTable {
    pub num_clusters: usize,
    pub average_purity: f64,
    pub speakers_in_one_cluster: usize,
    pub cluster_uniqueness: f64,
    pub noise_fraction: f64,
    pub coverage: f64,
}

impl From<&EvaluationReport> for ReportTable {
    fn from(r: &EvaluationReport) -> Self {
        ReportTable {
            num_clusters: r.num_clusters_after_filter,
            average_purity: r.average_purity,
            speakers_in_one_cluster: r.speakers_with_one_dominant_cluster,
            cluster_uniqueness: r.cluster_uniqueness,
            noise_fraction: r.noise_fraction,
            coverage: r.coverage,
        }
    }
}

const KEY_CLUSTERS: &str = "num_clusters_identified";
const KEY_PURITY: &str = "average_cluster_purity_pct";
const KEY_ONE_CLUSTER: &str = "num_speakers_in_only_one_cluster";
const KEY_UNIQUENESS: &str = "cluster_uniqueness_pct";
const KEY_NOISE: &str = "utterances_classified_as_noise_pct";
const KEY_COVERAGE: &str = "coverage_top_clusters_pct";

impl ReportTable {
    pub fn rows(&self) -> Vec<(&'static str, String)> {
        vec![
            (KEY_CLUSTERS, self.num_clusters.to_string()),
            (KEY_PURITY, format_percent(self.average_purity)),
            (KEY_ONE_CLUSTER, self.speakers_in_one_cluster.to_string()),
            (KEY_UNIQUENESS, format_percent(self.cluster_uniqueness)),
            (KEY_NOISE, format_percent(self.noise_fraction)),
            (KEY_COVERAGE, format_percent(self.coverage)),
        ]
    }
}

pub fn save_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let table = ReportTable::from(report);
    write_atomic(path.as_ref(), |w| {
        writeln!(w, "{REPORT_HEADER}")?;
        for (k, v) in table.rows() {
            writeln!(w, "{k}\t{v}")?;
        }
        Ok(())
    })
}

/// Reads a report back; percentages return as fractions.
pub fn load_report(path: impl AsRef<Path>) -> Result<ReportTable> {
    let path = path.as_ref();
    let mut values: HashMap<String, (usize, String)> = HashMap::new();
    for (row, line) in data_lines(path, REPORT_HEADER)? {
        let Some((k, v)) = line.split_once('\t') else {
            return Err(Error::parse(path, row, "expected key<TAB>value"));
        };
        values.insert(k.to_string(), (row, v.to_string()));
    }
    let get = |key: &str| -> Result<(usize, &str)> {
        values
            .get(key)
            .map(|(r, v)| (*r, v.as_str()))
            .ok_or_else(|| Error::parse(path, 0, format!("missing key {key}")))
    };
    let count = |key: &str| -> Result<usize> {
        let (row, v) = get(key)?;
        v.parse().map_err(|_| Error::parse(path, row, format!("bad integer {v:?}")))
    };
    let pct = |key: &str| -> Result<f64> {
        let (row, v) = get(key)?;
        v.parse::<f64>()
            .map(|p| p / 100.0)
            .map_err(|_| Error::parse(path, row, format!("bad percentage {v:?}")))
    };
    Ok(ReportTable {
        num_clusters: count(KEY_CLUSTERS)?,
        average_purity: pct(KEY_PURITY)?,
        speakers_in_one_cluster: count(KEY_ONE_CLUSTER)?,
        cluster_uniqueness: pct(KEY_UNIQUENESS)?,
        noise_fraction: pct(KEY_NOISE)?,
        coverage: pct(KEY_COVERAGE)?,
    })
}

/// Histogram table with the summary statistics as leading comment lines.
pub fn save_similarity_report(report: &SimilarityReport, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), |w| {
        for (name, s) in [("same_speaker", &report.same), ("different_speaker", &report.different)] {
            writeln!(
                w,
                "# {name}: pairs={} mean={:.6} std={:.6} min={:.6} max={:.6}",
                s.count, s.mean, s.std, s.min, s.max
            )?;
        }
        writeln!(w, "# overlap={:.6}", report.overlap)?;
        writeln!(w, "{HISTOGRAM_HEADER}")?;
        for b in 0..report.bins {
            let (lo, hi) = report.bin_edges(b);
            writeln!(
                w,
                "{lo:.4}\t{hi:.4}\t{}\t{}",
                report.same.histogram[b], report.different.histogram[b]
            )?;
        }
        Ok(())
    })
}
