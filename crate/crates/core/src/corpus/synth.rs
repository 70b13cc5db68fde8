//! Deterministic synthetic bilingual corpus.
//!
//! Every speaker owns a bank of all-pole "vowel" states. A state is a cascade
//! of three second-order resonators whose center frequencies come from a
//! language-level template scaled by a speaker-specific vocal-tract factor and
//! per-state jitter. Two speaker-level resonances and a one-pole spectral tilt
//! are shared by every state of that speaker in both languages, so the
//! speaker identity survives a change of language. Each speaker takes its
//! own stratum of the scale and tilt ranges, spreading speakers evenly.
//! Language B reuses a subset of language A's templates, slightly shifted.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Language, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSpec {
    pub n_speakers: usize,
    pub n_states_lang_a: usize,
    pub n_states_lang_b: usize,
    pub train_duration_s: f64,
    pub n_test_utterances: usize,
    pub test_duration_s: f64,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthesisSpec {
    fn default() -> Self {
        Self {
            n_speakers: 10,
            n_states_lang_a: 8,
            n_states_lang_b: 5,
            train_duration_s: 60.0,
            n_test_utterances: 5,
            test_duration_s: 4.0,
            sample_rate: 8000,
            seed: 0,
        }
    }
}

impl SynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_speakers == 0 {
            return bad("number of speakers must be at least 1");
        }
        if self.n_states_lang_a == 0 || self.n_states_lang_b == 0 {
            return bad("state inventories must hold at least one state per language");
        }
        if self.n_test_utterances == 0 {
            return bad("at least one test utterance per language is required");
        }
        if !(self.train_duration_s > 0.0 && self.test_duration_s > 0.0) {
            return bad("durations must be positive");
        }
        if self.sample_rate == 0 {
            return bad("sample rate must be positive");
        }
        Ok(())
    }

    /// Zero-padded so that lexicographic order equals numeric order.
    pub fn speaker_id(&self, index: usize) -> String {
        let width = self.n_speakers.saturating_sub(1).to_string().len().max(2);
        format!("spk{index:0width$}")
    }

    /// Number of utterances [`generate_synthetic_corpus`] produces.
    pub fn utterance_count(&self) -> usize {
        self.n_speakers * 2 * (1 + self.n_test_utterances)
    }
}

/// Mixes a base seed with a path of integer tags (splitmix64 finalizer).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    tags.iter().fold(mix(base), |acc, &t| mix(acc ^ mix(t)))
}

const TAG_LANGUAGE: u64 = 1;
const TAG_SPEAKER: u64 = 2;
const TAG_UTTERANCE: u64 = 3;

const SEGMENT_MIN_S: f64 = 0.1;
const SEGMENT_MAX_S: f64 = 0.3;
const EDGE_SILENCE_S: f64 = 0.2;
/// Near-silence standard deviation relative to unit-RMS speech (-60 dB).
const SILENCE_LEVEL: f64 = 1e-3;
const PEAK: f64 = 0.9;
const SCALE_RANGE: (f64, f64) = (0.75, 1.25);
const TILT_RANGE: (f64, f64) = (0.1, 0.95);

#[derive(Debug, Clone, Copy)]
struct Resonator {
    freq_hz: f64,
    bandwidth_hz: f64,
}

impl Resonator {
    /// Feedback coefficients of `y[n] = x[n] + a1 y[n-1] + a2 y[n-2]`.
    fn coefficients(self, sample_rate: f64) -> (f64, f64) {
        let freq = self.freq_hz.min(0.48 * sample_rate);
        let r = (-std::f64::consts::PI * self.bandwidth_hz / sample_rate).exp();
        let theta = 2.0 * std::f64::consts::PI * freq / sample_rate;
        (2.0 * r * theta.cos(), -r * r)
    }
}

type Template = [f64; 3];

struct Voice {
    states_a: Vec<[Resonator; 3]>,
    states_b: Vec<[Resonator; 3]>,
    extra: [Resonator; 2],
    tilt: f64,
}

fn draw_template(rng: &mut impl Rng) -> Template {
    [
        rng.random_range(430.0..570.0),
        rng.random_range(1300.0..1700.0),
        rng.random_range(2500.0..2700.0),
    ]
}

/// Corpus-level draws shared by all speakers: the two languages' state
/// templates and the strata assigning each speaker a distinct slice of the
/// vocal-tract scale and spectral-tilt ranges.
struct Population {
    templates_a: Vec<Template>,
    templates_b: Vec<Template>,
    scale_stratum: Vec<usize>,
    tilt_stratum: Vec<usize>,
}

fn population(spec: &SynthesisSpec) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_LANGUAGE]));
    let templates_a: Vec<Template> = (0..spec.n_states_lang_a).map(|_| draw_template(&mut rng)).collect();
    let templates_b = (0..spec.n_states_lang_b)
        .map(|j| match templates_a.get(j) {
            Some(t) => {
                let mut shifted = *t;
                for f in &mut shifted {
                    *f *= rng.random_range(0.97..1.03);
                }
                shifted
            }
            None => draw_template(&mut rng),
        })
        .collect();
    let mut scale_stratum: Vec<usize> = (0..spec.n_speakers).collect();
    scale_stratum.shuffle(&mut rng);
    let mut tilt_stratum: Vec<usize> = (0..spec.n_speakers).collect();
    tilt_stratum.shuffle(&mut rng);
    Population {
        templates_a,
        templates_b,
        scale_stratum,
        tilt_stratum,
    }
}

/// Uniform draw from the middle of stratum `k` of `n` over `range`.
fn stratified(rng: &mut impl Rng, range: (f64, f64), k: usize, n: usize) -> f64 {
    let u = rng.random_range(0.2..0.8);
    range.0 + (range.1 - range.0) * (k as f64 + u) / n as f64
}

fn speaker_voice(spec: &SynthesisSpec, population: &Population, index: usize) -> Voice {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[TAG_SPEAKER, index as u64]));
    let scale = stratified(&mut rng, SCALE_RANGE, population.scale_stratum[index], spec.n_speakers);
    let tilt = stratified(&mut rng, TILT_RANGE, population.tilt_stratum[index], spec.n_speakers);
    let bandwidths = [
        rng.random_range(40.0..140.0),
        rng.random_range(60.0..200.0),
        rng.random_range(80.0..300.0),
    ];
    let extra = [
        Resonator {
            freq_hz: rng.random_range(2900.0..3800.0),
            bandwidth_hz: rng.random_range(100.0..400.0),
        },
        Resonator {
            freq_hz: rng.random_range(150.0..400.0),
            bandwidth_hz: rng.random_range(150.0..400.0),
        },
    ];
    let n_states = spec.n_states_lang_a.max(spec.n_states_lang_b);
    // Jitter is indexed by state so the shared subset keeps the same
    // speaker-specific deviation in both languages.
    let jitter: Vec<[f64; 3]> = (0..n_states)
        .map(|_| {
            [
                rng.random_range(0.97..1.03),
                rng.random_range(0.97..1.03),
                rng.random_range(0.97..1.03),
            ]
        })
        .collect();
    let build = |temps: &[Template]| -> Vec<[Resonator; 3]> {
        temps
            .iter()
            .zip(&jitter)
            .map(|(t, j)| {
                std::array::from_fn(|k| Resonator {
                    freq_hz: t[k] * scale * j[k],
                    bandwidth_hz: bandwidths[k],
                })
            })
            .collect()
    };
    Voice {
        states_a: build(&population.templates_a),
        states_b: build(&population.templates_b),
        extra,
        tilt,
    }
}

fn render(voice: &Voice, language: Language, duration_s: f64, sample_rate: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let fs = f64::from(sample_rate);
    let states = match language {
        Language::A => &voice.states_a,
        Language::B => &voice.states_b,
    };
    let target = ((duration_s * fs).round() as usize).max(1);
    let edge = (EDGE_SILENCE_S * fs).round() as usize;

    let mut out = Vec::with_capacity(target + 2 * edge);
    let silence = |out: &mut Vec<f64>, rng: &mut ChaCha8Rng| {
        for _ in 0..edge {
            let z: f64 = rng.sample(StandardNormal);
            out.push(SILENCE_LEVEL * z);
        }
    };
    silence(&mut out, rng);

    let mut speech = 0usize;
    while speech < target {
        let len = ((rng.random_range(SEGMENT_MIN_S..SEGMENT_MAX_S) * fs).round() as usize).max(1);
        let len = len.min(target - speech);
        let state = &states[rng.random_range(0..states.len())];
        let gain = 10f64.powf(rng.random_range(-4.0..4.0) / 20.0);

        let sections: Vec<(f64, f64)> = state.iter().chain(&voice.extra).map(|r| r.coefficients(fs)).collect();
        let mut memory = vec![(0.0f64, 0.0f64); sections.len()];
        let mut tilt_mem = 0.0;
        let mut segment = Vec::with_capacity(len);
        for _ in 0..len {
            let mut x: f64 = rng.sample(StandardNormal);
            tilt_mem = x + voice.tilt * tilt_mem;
            x = tilt_mem;
            for ((a1, a2), (y1, y2)) in sections.iter().zip(memory.iter_mut()) {
                let y = x + a1 * *y1 + a2 * *y2;
                *y2 = *y1;
                *y1 = y;
                x = y;
            }
            segment.push(x);
        }
        let rms = (segment.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        let norm = if rms > 0.0 { gain / rms } else { 0.0 };
        out.extend(segment.iter().map(|v| v * norm));
        speech += len;
    }
    silence(&mut out, rng);

    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let k = PEAK / peak;
        out.iter_mut().for_each(|v| *v *= k);
    }
    out
}

/// Generates, for every speaker and language, one train utterance followed
/// by `n_test_utterances` test utterances. Output order is speaker, then
/// language (A before B), then train before tests.
pub fn generate_synthetic_corpus(spec: &SynthesisSpec) -> Result<Vec<Utterance>> {
    spec.validate()?;
    let population = population(spec);
    let jobs: Vec<(usize, Language)> = (0..spec.n_speakers)
        .flat_map(|s| Language::ALL.into_iter().map(move |l| (s, l)))
        .collect();
    let per_job: Vec<Vec<Utterance>> = jobs
        .par_iter()
        .map(|&(speaker, language)| {
            let voice = speaker_voice(spec, &population, speaker);
            let speaker_id = spec.speaker_id(speaker);
            let lang_tag = match language {
                Language::A => 0,
                Language::B => 1,
            };
            let make = |split: Split, index: usize, duration: f64, task_id: String| {
                let split_tag = match split {
                    Split::Train => 0,
                    Split::Test => 1,
                };
                let seed = derive_seed(
                    spec.seed,
                    &[TAG_UTTERANCE, speaker as u64, lang_tag, split_tag, index as u64],
                );
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Utterance {
                    samples: render(&voice, language, duration, spec.sample_rate, &mut rng),
                    sample_rate: spec.sample_rate,
                    speaker_id: speaker_id.clone(),
                    language,
                    split,
                    task_id,
                }
            };
            let mut out = vec![make(Split::Train, 0, spec.train_duration_s, "text".to_string())];
            for t in 0..spec.n_test_utterances {
                out.push(make(Split::Test, t, spec.test_duration_s, format!("s{}", t + 1)));
            }
            out
        })
        .collect();
    Ok(per_job.into_iter().flatten().collect())
}
