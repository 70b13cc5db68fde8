//! LPCC front end: pre-emphasis, framing, energy-based silence removal,
//! Hamming window, autocorrelation, Levinson-Durbin and the LPC-to-cepstrum
//! recursion.
//!
//! Predictor convention: `x̂[n] = Σ_{k=1..P} a_k x[n-k]`. The cepstral
//! recursion below assumes this sign.

// Negated comparisons below are deliberate: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Utterance};
use crate::error::{Error, Result};

/// Energy offset inside the log so that all-zero frames have finite energy.
const ENERGY_EPSILON: f64 = 1e-12;

/// Largest admissible reflection coefficient magnitude.
pub const REFLECTION_CLAMP: f64 = 0.999;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub frame_length: usize,
    pub overlap_fraction: f64,
    pub preemphasis: f64,
    pub lpc_order: usize,
    /// Frames more than this many dB below the loudest frame are dropped.
    pub silence_floor_db: f64,
    /// Permit orders above `frame_length / 10`, where the autocorrelation
    /// estimate is known to be unreliable. Needed to sweep high CM orders.
    pub allow_high_order: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            frame_length: 240,
            overlap_fraction: 2.0 / 3.0,
            preemphasis: 0.95,
            lpc_order: 12,
            silence_floor_db: 30.0,
            allow_high_order: false,
        }
    }
}

impl AnalysisConfig {
    pub fn with_order(&self, lpc_order: usize) -> Self {
        Self {
            lpc_order,
            ..self.clone()
        }
    }

    /// Highest order considered reliably estimable for this frame length.
    pub fn max_reliable_order(&self) -> usize {
        self.frame_length / 10
    }

    pub fn hop(&self) -> Result<usize> {
        let exact = self.frame_length as f64 * (1.0 - self.overlap_fraction);
        let hop = exact.round();
        if !(0.0..1.0).contains(&self.overlap_fraction) || hop < 1.0 || (exact - hop).abs() > 1e-6 {
            return Err(Error::InvalidConfig(format!(
                "frame length {} with overlap {} does not give a positive integer hop",
                self.frame_length, self.overlap_fraction
            )));
        }
        Ok(hop as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length < 2 {
            return Err(Error::InvalidConfig("frame length must be at least 2".into()));
        }
        self.hop()?;
        if !(0.0..1.0).contains(&self.preemphasis) {
            return Err(Error::InvalidConfig(format!(
                "preemphasis {} outside [0, 1)",
                self.preemphasis
            )));
        }
        if self.lpc_order == 0 || self.lpc_order >= self.frame_length {
            return Err(Error::InvalidConfig(format!(
                "LPC order {} must lie in 1..{}",
                self.lpc_order, self.frame_length
            )));
        }
        if !self.allow_high_order && self.lpc_order > self.max_reliable_order() {
            return Err(Error::InvalidConfig(format!(
                "LPC order {} exceeds {} for {}-sample frames",
                self.lpc_order,
                self.max_reliable_order(),
                self.frame_length
            )));
        }
        if !(self.silence_floor_db > 0.0) {
            return Err(Error::InvalidConfig("silence floor must be a positive dB value".into()));
        }
        Ok(())
    }
}

/// LPCC vectors of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub vectors: Vec<Vec<f64>>,
    pub order: usize,
    pub speaker_id: String,
    pub language: Language,
    pub task_id: String,
    /// Frames whose Levinson-Durbin recursion hit the reflection clamp.
    pub clamped_frames: usize,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

pub fn preemphasize(samples: &[f64], coefficient: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    if let Some(&first) = samples.first() {
        out.push(first);
        out.extend(samples.windows(2).map(|w| w[1] - coefficient * w[0]));
    }
    out
}

/// Full frames at offsets `0, hop, 2·hop, …`; a trailing partial frame is
/// discarded.
pub fn frame_signal(samples: &[f64], frame_length: usize, hop: usize) -> Vec<&[f64]> {
    assert!(frame_length > 0 && hop > 0, "frame length and hop must be positive");
    (0..)
        .map(|i| i * hop)
        .take_while(|&start| start + frame_length <= samples.len())
        .map(|start| &samples[start..start + frame_length])
        .collect()
}

pub fn frame_log_energy(frame: &[f64]) -> f64 {
    10.0 * (frame.iter().map(|x| x * x).sum::<f64>() + ENERGY_EPSILON).log10()
}

/// Keeps frames within `floor_db` of the loudest frame, preserving order.
pub fn remove_silence<F: AsRef<[f64]>>(frames: Vec<F>, floor_db: f64) -> Result<Vec<F>> {
    let energies: Vec<f64> = frames.iter().map(|f| frame_log_energy(f.as_ref())).collect();
    let peak_power = frames
        .iter()
        .map(|f| f.as_ref().iter().map(|x| x * x).sum::<f64>())
        .fold(0.0f64, f64::max);
    if peak_power <= 0.0 {
        return Err(Error::EmptyUtterance);
    }
    let max = energies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<F> = frames
        .into_iter()
        .zip(energies)
        .filter(|(_, e)| *e >= max - floor_db)
        .map(|(f, _)| f)
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    Ok(kept)
}

pub fn hamming(length: usize) -> Vec<f64> {
    assert!(length >= 2, "Hamming window needs at least two points");
    let denom = (length - 1) as f64;
    (0..length)
        .map(|n| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / denom).cos())
        .collect()
}

pub fn apply_window(frame: &[f64]) -> Vec<f64> {
    frame.iter().zip(hamming(frame.len())).map(|(x, w)| x * w).collect()
}

/// Biased, unnormalized autocorrelation for lags `0..=order`.
pub fn autocorrelate(frame: &[f64], order: usize) -> Vec<f64> {
    assert!(order < frame.len(), "order must be below the frame length");
    (0..=order)
        .map(|k| frame[k..].iter().zip(frame).map(|(a, b)| a * b).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpcAnalysis {
    /// `a_1..a_P`.
    pub coefficients: Vec<f64>,
    /// Final prediction-error power.
    pub residual_gain: f64,
    pub reflection: Vec<f64>,
    /// Set when some reflection coefficient was clamped to ±0.999.
    pub clamped: bool,
}

/// Order-recursive solution of the autocorrelation normal equations.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcAnalysis> {
    if r.len() < order + 1 {
        return Err(Error::DimensionMismatch {
            expected: order + 1,
            got: r.len(),
        });
    }
    if !(r[0] > 0.0) {
        return Err(Error::DegenerateFrame(r[0]));
    }
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut error = r[0];
    let mut clamped = false;
    for m in 0..order {
        let acc: f64 = (0..m).map(|j| prev[j] * r[m - j]).sum();
        let mut k = (r[m + 1] - acc) / error;
        if !(k.abs() < 1.0) {
            k = if k.is_nan() { 0.0 } else { REFLECTION_CLAMP.copysign(k) };
            clamped = true;
        }
        a[m] = k;
        for j in 0..m {
            a[j] = prev[j] - k * prev[m - 1 - j];
        }
        error *= 1.0 - k * k;
        reflection.push(k);
        prev[..=m].copy_from_slice(&a[..=m]);
    }
    Ok(LpcAnalysis {
        coefficients: a,
        residual_gain: error,
        reflection,
        clamped,
    })
}

/// `c_n = a_n + Σ_{k=1}^{n-1} (k/n) c_k a_{n-k}` for `n = 1..P`; `c_0` is
/// not included.
pub fn lpc_to_cepstrum(a: &[f64]) -> Vec<f64> {
    let mut c = Vec::with_capacity(a.len());
    for n in 1..=a.len() {
        let tail: f64 = (1..n).map(|k| (k as f64 / n as f64) * c[k - 1] * a[n - k - 1]).sum();
        c.push(a[n - 1] + tail);
    }
    c
}

pub fn extract_features(utterance: &Utterance, config: &AnalysisConfig) -> Result<FeatureSequence> {
    config.validate()?;
    if utterance.samples.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let hop = config.hop()?;
    let emphasized = preemphasize(&utterance.samples, config.preemphasis);
    let frames = frame_signal(&emphasized, config.frame_length, hop);
    if frames.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    let voiced = remove_silence(frames, config.silence_floor_db)?;
    let window = hamming(config.frame_length);

    let mut vectors = Vec::with_capacity(voiced.len());
    let mut clamped_frames = 0;
    let mut windowed = vec![0.0; config.frame_length];
    for frame in voiced {
        for ((w, x), h) in windowed.iter_mut().zip(frame).zip(&window) {
            *w = x * h;
        }
        let r = autocorrelate(&windowed, config.lpc_order);
        let lpc = levinson_durbin(&r, config.lpc_order)?;
        if lpc.clamped {
            clamped_frames += 1;
        }
        vectors.push(lpc_to_cepstrum(&lpc.coefficients));
    }
    Ok(FeatureSequence {
        vectors,
        order: config.lpc_order,
        speaker_id: utterance.speaker_id.clone(),
        language: utterance.language,
        task_id: utterance.task_id.clone(),
        clamped_frames,
    })
}

/// Writes one LPCC vector per line under a `# lpcc P=<P>` header.
pub fn write_feature_dump(path: impl AsRef<Path>, features: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("# lpcc P={}\n", features.order);
    for v in &features.vectors {
        let row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        let _ = writeln!(out, "{}", row.join("\t"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a feature dump back as `(P, vectors)`.
pub fn read_feature_dump(path: impl AsRef<Path>) -> Result<(usize, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let order: usize = lines
        .next()
        .and_then(|h| h.strip_prefix("# lpcc P="))
        .and_then(|p| p.trim().parse().ok())
        .ok_or_else(|| Error::parse(path, 1, "expected header `# lpcc P=<P>`"))?;
    let mut vectors = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let row = line
            .split('\t')
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        if row.len() != order {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected {order} columns, found {}", row.len()),
            ));
        }
        vectors.push(row);
    }
    Ok((order, vectors))
}
