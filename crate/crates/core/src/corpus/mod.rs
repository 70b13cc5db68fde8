//! Labeled utterances: manifest ingestion, WAV I/O and the synthetic
//! bilingual corpus generator.

mod manifest;
mod synth;
mod wav;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use manifest::{load_manifest, load_utterances, parse_manifest, write_manifest, Manifest, ManifestEntry};
pub use synth::{derive_seed, generate_synthetic_corpus, SynthesisSpec};
pub use wav::{read_wav, write_wav, WavAudio};

/// One of the two languages spoken by every (bilingual) speaker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Language {
    A,
    B,
}

impl Language {
    pub const ALL: [Language; 2] = [Language::A, Language::B];

    pub fn as_str(self) -> &'static str {
        match self {
            Language::A => "A",
            Language::B => "B",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Language::A),
            "B" | "b" => Ok(Language::B),
            other => Err(Error::InvalidConfig(format!(
                "unknown language {other:?} (expected A or B)"
            ))),
        }
    }
}

/// Language label carried by a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LanguageTag {
    Single(Language),
    Combined,
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LanguageTag::Single(lang) => lang.fmt(f),
            LanguageTag::Combined => f.write_str("combined"),
        }
    }
}

impl FromStr for LanguageTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "combined" {
            Ok(LanguageTag::Combined)
        } else {
            s.parse().map(LanguageTag::Single)
        }
    }
}

impl From<Language> for LanguageTag {
    fn from(lang: Language) -> Self {
        LanguageTag::Single(lang)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!(
                "unknown split {other:?} (expected train or test)"
            ))),
        }
    }
}

/// A labeled mono recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    /// Amplitudes in [-1, 1].
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub speaker_id: String,
    pub language: Language,
    pub split: Split,
    pub task_id: String,
}

impl Utterance {
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Checks that a label can be embedded in the whitespace- and tab-separated
/// file formats used throughout the crate.
pub(crate) fn validate_label(kind: &str, label: &str) -> Result<()> {
    if label.is_empty() || label.chars().any(|c| c.is_whitespace() || c == '=') {
        return Err(Error::InvalidConfig(format!(
            "{kind} {label:?} must be nonempty and contain no whitespace or '='"
        )));
    }
    Ok(())
}
