//! Vector-quantization speaker models.
//!
//! A codebook holds `2^No` LPCC centroids picked at random from the
//! speaker's training frames. A test utterance is scored by its mean
//! squared distance to the nearest centroid.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{validate_label, LanguageTag};
use crate::decision::{argmin_speaker, format_floats, header_field, parse_floats, parse_header, Identification};
use crate::dsp::FeatureSequence;
use crate::error::{Error, Result};

/// Largest codebook size exercised by the experiments is 2^7; allow a bit
/// more headroom for ad-hoc use.
pub const MAX_BITS: u32 = 16;

const LLOYD_MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub centroids: Vec<Vec<f64>>,
    /// `No`: bits of a single-language book (component size for combined books).
    pub bits: u32,
    pub order: usize,
    pub speaker_id: String,
    pub language: LanguageTag,
    pub seed: u64,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn expected_len(bits: u32, language: LanguageTag) -> usize {
        let base = 1usize << bits;
        match language {
            LanguageTag::Combined => 2 * base,
            LanguageTag::Single(_) => base,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.len() * self.order
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "vqcb v1 P={} No={} count={} speaker={} lang={} seed={}\n",
            self.order,
            self.bits,
            self.len(),
            self.speaker_id,
            self.language,
            self.seed
        );
        for c in &self.centroids {
            let _ = writeln!(out, "{}", format_floats(c));
        }
        out
    }

    /// Parses the text form; `origin` only labels errors.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        let fields = parse_header(header, "vqcb", origin)?;
        let order: usize = header_field(&fields, "P", origin)?;
        let bits: u32 = header_field(&fields, "No", origin)?;
        let count: usize = header_field(&fields, "count", origin)?;
        let speaker_id: String = header_field(&fields, "speaker", origin)?;
        let language: LanguageTag = header_field(&fields, "lang", origin)?;
        let seed: u64 = header_field(&fields, "seed", origin)?;
        if bits > MAX_BITS || count != Codebook::expected_len(bits, language) {
            return Err(Error::parse(
                origin,
                1,
                format!("count={count} inconsistent with No={bits} lang={language}"),
            ));
        }
        let mut centroids = Vec::with_capacity(count);
        for (idx, line) in lines.enumerate() {
            let row = parse_floats(line, origin, idx + 2)?;
            if row.len() != order {
                return Err(Error::parse(
                    origin,
                    idx + 2,
                    format!("expected {order} values, found {}", row.len()),
                ));
            }
            centroids.push(row);
        }
        if centroids.len() != count {
            return Err(Error::parse(
                origin,
                1,
                format!("header declares {count} centroids, file has {}", centroids.len()),
            ));
        }
        Ok(Codebook {
            centroids,
            bits,
            order,
            speaker_id,
            language,
            seed,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Codebook::from_text(&text, path)
    }
}

/// `2^No × P`.
pub fn count_vq_parameters(bits: u32, order: usize) -> usize {
    (1usize << bits) * order
}

/// Random codebook: `2^No` distinct training vectors drawn uniformly
/// without replacement.
pub fn train_codebook_random(features: &FeatureSequence, bits: u32, seed: u64) -> Result<Codebook> {
    train_codebook(features, bits, seed, false)
}

/// Random selection, optionally followed by Lloyd iterations.
pub fn train_codebook(features: &FeatureSequence, bits: u32, seed: u64, refine: bool) -> Result<Codebook> {
    if bits > MAX_BITS {
        return Err(Error::InvalidConfig(format!("codebook bits {bits} exceed {MAX_BITS}")));
    }
    validate_label("speaker_id", &features.speaker_id)?;
    let size = 1usize << bits;
    if features.len() < size {
        return Err(Error::InsufficientData {
            needed: size,
            got: features.len(),
        });
    }
    if let Some(v) = features.vectors.iter().find(|v| v.len() != features.order) {
        return Err(Error::DimensionMismatch {
            expected: features.order,
            got: v.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = rand::seq::index::sample(&mut rng, features.len(), size)
        .into_iter()
        .map(|i| features.vectors[i].clone())
        .collect();
    if refine {
        lloyd(&features.vectors, &mut centroids);
    }
    Ok(Codebook {
        centroids,
        bits,
        order: features.order,
        speaker_id: features.speaker_id.clone(),
        language: features.language.into(),
        seed,
    })
}

/// Batch k-means updates; a centroid left without members keeps its place.
fn lloyd(data: &[Vec<f64>], centroids: &mut [Vec<f64>]) {
    let dim = centroids.first().map_or(0, Vec::len);
    let mut assignment: Vec<usize> = vec![usize::MAX; data.len()];
    for _ in 0..LLOYD_MAX_ITERATIONS {
        let mut changed = false;
        for (slot, v) in assignment.iter_mut().zip(data) {
            let (best, _) = nearest(v, centroids);
            if *slot != best {
                *slot = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (&k, v) in assignment.iter().zip(data) {
            counts[k] += 1;
            sums[k].iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid (first on ties).
pub fn nearest(v: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(i, c)| (i, squared_distance(v, c)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Mean over frames of the squared Euclidean distance to the nearest
/// centroid.
pub fn quantize_distortion(vectors: &[Vec<f64>], codebook: &Codebook) -> Result<f64> {
    if vectors.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if codebook.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(v) = vectors.iter().find(|v| v.len() != codebook.order) {
        return Err(Error::DimensionMismatch {
            expected: codebook.order,
            got: v.len(),
        });
    }
    let total: f64 = vectors.iter().map(|v| nearest(v, &codebook.centroids).1).sum();
    Ok(total / vectors.len() as f64)
}

/// Concatenates one speaker's two equal-size single-language books, A's
/// centroids first.
pub fn combine_codebooks(a: &Codebook, b: &Codebook) -> Result<Codebook> {
    if a.bits != b.bits || a.len() != b.len() {
        return Err(Error::Combine(format!(
            "sizes differ ({} vs {} centroids)",
            a.len(),
            b.len()
        )));
    }
    if a.order != b.order {
        return Err(Error::Combine(format!(
            "dimensions differ (P={} vs P={})",
            a.order, b.order
        )));
    }
    if a.speaker_id != b.speaker_id {
        return Err(Error::Combine(format!(
            "speakers differ ({} vs {})",
            a.speaker_id, b.speaker_id
        )));
    }
    if a.language == LanguageTag::Combined || b.language == LanguageTag::Combined {
        return Err(Error::Combine("inputs must be single-language codebooks".into()));
    }
    Ok(Codebook {
        centroids: a.centroids.iter().chain(&b.centroids).cloned().collect(),
        bits: a.bits,
        order: a.order,
        speaker_id: a.speaker_id.clone(),
        language: LanguageTag::Combined,
        seed: a.seed,
    })
}

/// Minimal-distortion speaker among `models`.
pub fn identify_vq(models: &[Codebook], vectors: &[Vec<f64>]) -> Result<Identification> {
    if let Some(first) = models.first() {
        if let Some(m) = models.iter().find(|m| m.order != first.order) {
            return Err(Error::DimensionMismatch {
                expected: first.order,
                got: m.order,
            });
        }
    }
    let scores = models
        .iter()
        .map(|m| quantize_distortion(vectors, m))
        .collect::<Result<Vec<_>>>()?;
    argmin_speaker(models.iter().map(|m| m.speaker_id.as_str()), scores)
}
