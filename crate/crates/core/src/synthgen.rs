//! Labelled synthetic speaker-embedding corpora.
//!
//! Each speaker gets a random unit direction; each utterance is that
//! direction plus isotropic Gaussian noise, renormalized. The noise vector
//! has expected norm `angular_spread`, so a single utterance sits at an
//! angle of roughly `atan(angular_spread)` from its speaker direction.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{Corpus, Embedding, Utterance};

/// How many utterances each speaker gets.
#[derive(Debug, Clone, PartialEq)]
pub enum UtteranceCounts {
    Fixed(usize),
    /// Drawn uniformly from `min..=max` per speaker.
    Uniform { min: usize, max: usize },
    PerSpeaker(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_speakers: usize,
    pub utterances: UtteranceCounts,
    pub dim: usize,
    pub angular_spread: f64,
    pub seed: u64,
    pub duration_mean_seconds: f64,
    /// Fraction of speakers placed in confusable pairs.
    pub confusable_fraction: f64,
    /// Cosine similarity between the two directions of a confusable pair.
    pub confusable_similarity: f64,
    /// Interleave speakers randomly; otherwise utterances are grouped by speaker.
    pub shuffle: bool,
}

impl Default for SynthSpec {
    /// 80 speakers at 150 utterances of ~6 s: about 20 hours of speech.
    fn default() -> Self {
        SynthSpec {
            num_speakers: 80,
            utterances: UtteranceCounts::Fixed(150),
            dim: 256,
            angular_spread: 0.5,
            seed: 0,
            duration_mean_seconds: 6.0,
            confusable_fraction: 0.0,
            confusable_similarity: 0.9,
            shuffle: true,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.num_speakers == 0 {
            return bad("num_speakers must be >= 1".into());
        }
        if self.dim < 2 {
            return bad(format!("dimension must be >= 2, got {}", self.dim));
        }
        if !(self.angular_spread > 0.0 && self.angular_spread.is_finite()) {
            return bad(format!("angular_spread must be > 0, got {}", self.angular_spread));
        }
        if !(self.duration_mean_seconds > 0.0 && self.duration_mean_seconds.is_finite()) {
            return bad(format!(
                "duration_mean_seconds must be > 0, got {}",
                self.duration_mean_seconds
            ));
        }
        if !(0.0..=1.0).contains(&self.confusable_fraction) {
            return bad(format!(
                "confusable_fraction must be in [0, 1], got {}",
                self.confusable_fraction
            ));
        }
        if !(-1.0..1.0).contains(&self.confusable_similarity) {
            return bad(format!(
                "confusable_similarity must be in [-1, 1), got {}",
                self.confusable_similarity
            ));
        }
        match &self.utterances {
            UtteranceCounts::Fixed(0) => bad("utterances per speaker must be >= 1".into()),
            UtteranceCounts::Uniform { min, max } if *min == 0 || min > max => {
                bad(format!("bad utterance range {min}..={max}"))
            }
            UtteranceCounts::PerSpeaker(v) if v.len() != self.num_speakers => bad(format!(
                "{} per-speaker counts for {} speakers",
                v.len(),
                self.num_speakers
            )),
            UtteranceCounts::PerSpeaker(v) if v.iter().all(|&c| c == 0) => {
                bad("corpus would be empty".into())
            }
            _ => Ok(()),
        }
    }

    /// Number of confusable pairs implied by `confusable_fraction`.
    pub fn confusable_pairs(&self) -> usize {
        ((self.confusable_fraction * self.num_speakers as f64 / 2.0).round() as usize)
            .min(self.num_speakers / 2)
    }
}

pub fn speaker_label(s: usize) -> String {
    format!("spk{s:03}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

/// Speaker directions; the first `2 * pairs` speakers come in confusable pairs.
fn speaker_directions(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let pairs = spec.confusable_pairs();
    let mut dirs = Vec::with_capacity(spec.num_speakers);
    for s in 0..spec.num_speakers {
        let fresh = unit(gaussian(rng, spec.dim));
        if s % 2 == 1 && s < 2 * pairs {
            // Rotate towards the partner: sim * u + sqrt(1 - sim²) * w with w ⟂ u.
            let u: &Vec<f64> = &dirs[s - 1];
            let proj: f64 = fresh.iter().zip(u).map(|(a, b)| a * b).sum();
            let w = unit(fresh.iter().zip(u).map(|(a, b)| a - proj * b).collect());
            let c = spec.confusable_similarity;
            let sn = (1.0 - c * c).sqrt();
            dirs.push(u.iter().zip(&w).map(|(a, b)| c * a + sn * b).collect());
        } else {
            dirs.push(fresh);
        }
    }
    dirs
}

/// Deterministic labelled corpus for `spec`.
///
/// Utterance ids are `spkNNN-uMMMM`; labels are `spkNNN`; durations are
/// uniform in `[0.5, 1.5) * duration_mean_seconds`, rounded to milliseconds.
pub fn generate(spec: &SynthSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dirs = speaker_directions(spec, &mut rng);
    let counts: Vec<usize> = match &spec.utterances {
        UtteranceCounts::Fixed(c) => vec![*c; spec.num_speakers],
        UtteranceCounts::Uniform { min, max } => (0..spec.num_speakers)
            .map(|_| rng.random_range(*min..=*max))
            .collect(),
        UtteranceCounts::PerSpeaker(v) => v.clone(),
    };
    let noise_scale = spec.angular_spread / (spec.dim as f64).sqrt();
    let mut utterances = Vec::with_capacity(counts.iter().sum());
    for (s, (dir, &count)) in dirs.iter().zip(&counts).enumerate() {
        for u in 0..count {
            let v = dir
                .iter()
                .map(|d| d + noise_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let duration = spec.duration_mean_seconds * (0.5 + rng.random::<f64>());
            let duration = ((duration * 1000.0).round() / 1000.0).max(0.001);
            utterances.push(
                Utterance::new(format!("{}-u{u:04}", speaker_label(s)), Embedding::normalized(v)?)
                    .with_duration(duration)
                    .with_speaker(speaker_label(s)),
            );
        }
    }
    if spec.shuffle {
        utterances.shuffle(&mut rng);
    }
    Corpus::new(utterances)
}
