//! Experimental protocol: same- and cross-language identification grids,
//! the combined bilingual codebook, distortion accumulation and the VQ/CM
//! memory-parity mapping.

mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cm::{count_cm_parameters, estimate_covariance, identify_cm, CovarianceModel};
use crate::corpus::{derive_seed, Language, LanguageTag, Split, Utterance};
use crate::decision::Identification;
use crate::dsp::{extract_features, AnalysisConfig, FeatureSequence};
use crate::error::{Error, Result};
use crate::vq::{combine_codebooks, count_vq_parameters, identify_vq, train_codebook, Codebook};

pub use report::{emit_report, parity_table_text, write_distortion_profile, write_parity_table, ReportFiles};

/// Largest CM order considered when matching VQ parameter counts.
pub const PARITY_SEARCH_LIMIT: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vq,
    Combined,
    Cm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Vq => "vq",
            ModelKind::Combined => "combined",
            ModelKind::Cm => "cm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vq" => Ok(ModelKind::Vq),
            "combined" | "vq_combined" => Ok(ModelKind::Combined),
            "cm" => Ok(ModelKind::Cm),
            other => Err(Error::Usage(format!("unknown model kind {other:?} (vq, combined, cm)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HarnessConfig {
    /// Front-end settings; `lpc_order` is the VQ dimension P.
    pub analysis: AnalysisConfig,
    pub seed: u64,
    /// Lloyd refinement after random codebook selection.
    pub refine: bool,
}

/// Stable 64-bit tag for a text label (FNV-1a).
pub fn label_tag(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed used for the codebook of `speaker` in `language` at `bits`.
pub fn codebook_seed(base: u64, speaker: &str, language: Language, bits: u32) -> u64 {
    let lang = match language {
        Language::A => 0,
        Language::B => 1,
    };
    derive_seed(base, &[label_tag(speaker), lang, u64::from(bits)])
}

/// LPCC features of a corpus at one analysis order, grouped per speaker and
/// language. Several train utterances of the same speaker and language are
/// pooled.
#[derive(Debug, Clone)]
pub struct CorpusFeatures {
    pub order: usize,
    pub speakers: Vec<String>,
    pub train: BTreeMap<(String, Language), FeatureSequence>,
    pub test: BTreeMap<(String, Language), Vec<FeatureSequence>>,
}

impl CorpusFeatures {
    pub fn extract(corpus: &[Utterance], analysis: &AnalysisConfig) -> Result<Self> {
        check_coverage(corpus)?;
        let features: Vec<FeatureSequence> = corpus
            .par_iter()
            .map(|u| {
                extract_features(u, analysis).map_err(|e| match e {
                    Error::EmptyUtterance | Error::DegenerateFrame(_) => Error::Protocol(format!(
                        "utterance {}/{}/{}/{}: {e}",
                        u.speaker_id, u.language, u.split, u.task_id
                    )),
                    other => other,
                })
            })
            .collect::<Result<_>>()?;

        let mut train: BTreeMap<(String, Language), FeatureSequence> = BTreeMap::new();
        let mut test: BTreeMap<(String, Language), Vec<FeatureSequence>> = BTreeMap::new();
        for (u, f) in corpus.iter().zip(features) {
            let key = (u.speaker_id.clone(), u.language);
            match u.split {
                Split::Train => match train.get_mut(&key) {
                    Some(existing) => {
                        existing.clamped_frames += f.clamped_frames;
                        existing.vectors.extend(f.vectors);
                    }
                    None => {
                        train.insert(key, f);
                    }
                },
                Split::Test => test.entry(key).or_default().push(f),
            }
        }
        let speakers = speakers_of(corpus);
        Ok(CorpusFeatures {
            order: analysis.lpc_order,
            speakers,
            train,
            test,
        })
    }

    fn train_for(&self, speaker: &str, language: Language) -> &FeatureSequence {
        &self.train[&(speaker.to_string(), language)]
    }

    fn tests_for(&self, speaker: &str, language: Language) -> &[FeatureSequence] {
        &self.test[&(speaker.to_string(), language)]
    }
}

fn speakers_of(corpus: &[Utterance]) -> Vec<String> {
    let mut speakers: Vec<String> = corpus.iter().map(|u| u.speaker_id.clone()).collect();
    speakers.sort();
    speakers.dedup();
    speakers
}

/// Every speaker needs a train and at least one test utterance in both
/// languages, and no test utterance may repeat a train utterance.
pub fn check_coverage(corpus: &[Utterance]) -> Result<()> {
    let speakers = speakers_of(corpus);
    if speakers.is_empty() {
        return Err(Error::Protocol("corpus is empty".into()));
    }
    for speaker in &speakers {
        for lang in Language::ALL {
            for split in [Split::Train, Split::Test] {
                let present = corpus
                    .iter()
                    .any(|u| &u.speaker_id == speaker && u.language == lang && u.split == split);
                if !present {
                    return Err(Error::Protocol(format!(
                        "speaker {speaker} has no {split} utterance in language {lang}"
                    )));
                }
            }
            let trains: Vec<&Utterance> = corpus
                .iter()
                .filter(|u| &u.speaker_id == speaker && u.language == lang && u.split == Split::Train)
                .collect();
            let leak = corpus
                .iter()
                .filter(|u| &u.speaker_id == speaker && u.language == lang && u.split == Split::Test)
                .find(|t| {
                    trains
                        .iter()
                        .any(|tr| tr.task_id == t.task_id || tr.samples == t.samples)
                });
            if let Some(t) = leak {
                return Err(Error::Protocol(format!(
                    "test utterance {} of speaker {speaker} in language {lang} overlaps the train split",
                    t.task_id
                )));
            }
        }
    }
    Ok(())
}

/// One scored test utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub kind: ModelKind,
    pub order: usize,
    pub size: usize,
    pub train: LanguageTag,
    pub test: Language,
    pub speaker_id: String,
    pub task_id: String,
    pub predicted: String,
    /// Winning score (distortion or μ).
    pub score: f64,
    /// Scores against every enrolled model, in the report's speaker order.
    pub scores: Vec<f64>,
}

impl TrialRecord {
    pub fn correct(&self) -> bool {
        self.speaker_id == self.predicted
    }
}

/// Counts for one (train language, test language, order, size) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub kind: ModelKind,
    pub order: usize,
    pub size: usize,
    pub train: LanguageTag,
    pub test: Language,
    pub correct: usize,
    pub total: usize,
    /// `(true speaker, predicted speaker) -> count`.
    pub confusion: BTreeMap<(String, String), usize>,
    /// Models or test covariances that needed a ridge.
    pub regularized: usize,
    pub parameters_per_model: usize,
}

impl CellResult {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }

    pub fn incorrect(&self) -> usize {
        self.total - self.correct
    }

    pub fn label(&self) -> String {
        pair_label(self.train, self.test)
    }
}

pub fn pair_label(train: LanguageTag, test: Language) -> String {
    match train {
        LanguageTag::Single(l) => format!("{l}-{test}"),
        LanguageTag::Combined => format!("c{test}"),
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationReport {
    pub speakers: Vec<String>,
    pub cells: Vec<CellResult>,
    pub trials: Vec<TrialRecord>,
}

impl EvaluationReport {
    pub fn cell(
        &self,
        kind: ModelKind,
        order: usize,
        size: usize,
        train: LanguageTag,
        test: Language,
    ) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.kind == kind && c.order == order && c.size == size && c.train == train && c.test == test)
    }

    /// Appends another report over the same speakers.
    pub fn merge(&mut self, other: EvaluationReport) {
        if self.speakers.is_empty() {
            self.speakers = other.speakers;
        }
        self.cells.extend(other.cells);
        self.trials.extend(other.trials);
    }
}

struct CellInput<'a> {
    kind: ModelKind,
    order: usize,
    size: usize,
    train: LanguageTag,
    test: Language,
    parameters_per_model: usize,
    regularized: usize,
    outcomes: Vec<(&'a FeatureSequence, Identification)>,
}

fn assemble(cell: CellInput<'_>) -> (CellResult, Vec<TrialRecord>) {
    let mut confusion = BTreeMap::new();
    let mut trials = Vec::with_capacity(cell.outcomes.len());
    for (features, id) in cell.outcomes {
        *confusion
            .entry((features.speaker_id.clone(), id.speaker_id.clone()))
            .or_insert(0) += 1;
        trials.push(TrialRecord {
            kind: cell.kind,
            order: cell.order,
            size: cell.size,
            train: cell.train,
            test: cell.test,
            speaker_id: features.speaker_id.clone(),
            task_id: features.task_id.clone(),
            predicted: id.speaker_id,
            score: id.score,
            scores: id.scores,
        });
    }
    let correct = trials.iter().filter(|t| t.correct()).count();
    let result = CellResult {
        kind: cell.kind,
        order: cell.order,
        size: cell.size,
        train: cell.train,
        test: cell.test,
        correct,
        total: trials.len(),
        confusion,
        regularized: cell.regularized,
        parameters_per_model: cell.parameters_per_model,
    };
    (result, trials)
}

fn collect_cells(speakers: &[String], cells: Vec<(CellResult, Vec<TrialRecord>)>) -> EvaluationReport {
    let mut report = EvaluationReport {
        speakers: speakers.to_vec(),
        ..Default::default()
    };
    for (cell, trials) in cells {
        report.cells.push(cell);
        report.trials.extend(trials);
    }
    report
}

fn train_books(
    features: &CorpusFeatures,
    bits: u32,
    config: &HarnessConfig,
) -> Result<BTreeMap<Language, Vec<Codebook>>> {
    let mut books = BTreeMap::new();
    for lang in Language::ALL {
        let per_speaker = features
            .speakers
            .par_iter()
            .map(|s| {
                train_codebook(
                    features.train_for(s, lang),
                    bits,
                    codebook_seed(config.seed, s, lang, bits),
                    config.refine,
                )
                .map_err(|e| Error::Protocol(format!("speaker {s}, language {lang}, No={bits}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        books.insert(lang, per_speaker);
    }
    Ok(books)
}

fn score_vq<'a>(
    models: &[Codebook],
    tests: Vec<&'a FeatureSequence>,
) -> Result<Vec<(&'a FeatureSequence, Identification)>> {
    tests
        .into_par_iter()
        .map(|f| identify_vq(models, &f.vectors).map(|id| (f, id)))
        .collect()
}

fn all_tests(features: &CorpusFeatures, lang: Language) -> Vec<&FeatureSequence> {
    features
        .speakers
        .iter()
        .flat_map(|s| features.tests_for(s, lang))
        .collect()
}

/// VQ cells for every language pair and codebook size, at the order the
/// features were extracted with.
pub fn vq_language_grid(features: &CorpusFeatures, sizes: &[u32], config: &HarnessConfig) -> Result<EvaluationReport> {
    let cells = sizes
        .par_iter()
        .map(|&bits| {
            let books = train_books(features, bits, config)?;
            let mut out = Vec::new();
            for train in Language::ALL {
                for test in Language::ALL {
                    let outcomes = score_vq(&books[&train], all_tests(features, test))?;
                    out.push(assemble(CellInput {
                        kind: ModelKind::Vq,
                        order: features.order,
                        size: bits as usize,
                        train: train.into(),
                        test,
                        parameters_per_model: count_vq_parameters(bits, features.order),
                        regularized: 0,
                        outcomes,
                    }));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_cells(&features.speakers, cells.into_iter().flatten().collect()))
}

/// Combined-codebook cells: per speaker the two `No`-bit language books are
/// concatenated and tested with each language. `size` is the component `No`.
pub fn vq_combined_grid(features: &CorpusFeatures, sizes: &[u32], config: &HarnessConfig) -> Result<EvaluationReport> {
    let cells = sizes
        .par_iter()
        .map(|&bits| {
            let books = train_books(features, bits, config)?;
            let combined = books[&Language::A]
                .iter()
                .zip(&books[&Language::B])
                .map(|(a, b)| combine_codebooks(a, b))
                .collect::<Result<Vec<_>>>()?;
            let mut out = Vec::new();
            for test in Language::ALL {
                let outcomes = score_vq(&combined, all_tests(features, test))?;
                out.push(assemble(CellInput {
                    kind: ModelKind::Combined,
                    order: features.order,
                    size: bits as usize,
                    train: LanguageTag::Combined,
                    test,
                    parameters_per_model: 2 * count_vq_parameters(bits, features.order),
                    regularized: 0,
                    outcomes,
                }));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_cells(&features.speakers, cells.into_iter().flatten().collect()))
}

/// CM cells for every language pair at the order the features were
/// extracted with.
pub fn cm_language_grid(features: &CorpusFeatures) -> Result<EvaluationReport> {
    let mut models: BTreeMap<Language, Vec<CovarianceModel>> = BTreeMap::new();
    for lang in Language::ALL {
        let per_speaker = features
            .speakers
            .par_iter()
            .map(|s| {
                estimate_covariance(features.train_for(s, lang))
                    .map_err(|e| Error::Protocol(format!("speaker {s}, language {lang}, P={}: {e}", features.order)))
            })
            .collect::<Result<Vec<_>>>()?;
        models.insert(lang, per_speaker);
    }
    let mut test_models: BTreeMap<Language, Vec<(&FeatureSequence, CovarianceModel)>> = BTreeMap::new();
    for lang in Language::ALL {
        let estimated = all_tests(features, lang)
            .into_par_iter()
            .map(|f| {
                estimate_covariance(f)
                    .map(|m| (f, m))
                    .map_err(|e| Error::Protocol(format!("test {}/{}/{}: {e}", f.speaker_id, lang, f.task_id)))
            })
            .collect::<Result<Vec<_>>>()?;
        test_models.insert(lang, estimated);
    }

    let mut cells = Vec::new();
    for train in Language::ALL {
        for test in Language::ALL {
            let enrolled = &models[&train];
            let probes = &test_models[&test];
            let outcomes = probes
                .par_iter()
                .map(|(f, m)| identify_cm(enrolled, m).map(|id| (*f, id)))
                .collect::<Result<Vec<_>>>()?;
            let regularized = enrolled.iter().filter(|m| m.regularized).count()
                + probes.iter().filter(|(_, m)| m.regularized).count();
            cells.push(assemble(CellInput {
                kind: ModelKind::Cm,
                order: features.order,
                size: features.order,
                train: train.into(),
                test,
                parameters_per_model: count_cm_parameters(features.order),
                regularized,
                outcomes,
            }));
        }
    }
    Ok(collect_cells(&features.speakers, cells))
}

/// Runs the train/test language grid for `kind`. For `vq` and `combined`,
/// `sizes` are codebook bits and the order comes from `config.analysis`;
/// for `cm`, `sizes` are analysis orders.
pub fn run_language_grid(
    corpus: &[Utterance],
    kind: ModelKind,
    sizes: &[usize],
    config: &HarnessConfig,
) -> Result<EvaluationReport> {
    match kind {
        ModelKind::Vq | ModelKind::Combined => {
            let bits = sizes
                .iter()
                .map(|&s| u32::try_from(s).map_err(|_| Error::Usage(format!("codebook bits {s} too large"))))
                .collect::<Result<Vec<_>>>()?;
            let features = CorpusFeatures::extract(corpus, &config.analysis)?;
            if kind == ModelKind::Vq {
                vq_language_grid(&features, &bits, config)
            } else {
                vq_combined_grid(&features, &bits, config)
            }
        }
        ModelKind::Cm => {
            let mut report = EvaluationReport::default();
            for &order in sizes {
                let analysis = AnalysisConfig {
                    allow_high_order: true,
                    ..config.analysis.with_order(order)
                };
                let features = CorpusFeatures::extract(corpus, &analysis)?;
                report.merge(cm_language_grid(&features)?);
            }
            if report.speakers.is_empty() {
                report.speakers = speakers_of(corpus);
            }
            Ok(report)
        }
    }
}

/// Combined-codebook evaluation over `sizes` (component bits).
pub fn run_combined_grid(corpus: &[Utterance], sizes: &[usize], config: &HarnessConfig) -> Result<EvaluationReport> {
    run_language_grid(corpus, ModelKind::Combined, sizes, config)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccumulationMode {
    /// Every (test utterance, model) distortion.
    All,
    /// Only the identified model's distortion per test utterance.
    Identified,
}

impl AccumulationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AccumulationMode::All => "all",
            AccumulationMode::Identified => "identified",
        }
    }
}

impl FromStr for AccumulationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(AccumulationMode::All),
            "identified" => Ok(AccumulationMode::Identified),
            other => Err(Error::Usage(format!(
                "unknown accumulation mode {other:?} (all, identified)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionCurve {
    /// `X-Y` for single-language books, `cY` for combined books.
    pub label: String,
    pub order: usize,
    /// `(No, accumulated distortion)` in ascending `No`.
    pub points: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistortionProfile {
    pub mode: AccumulationMode,
    pub curves: Vec<DistortionCurve>,
}

/// Sums quantization distortions of the VQ trials in `reports`, one curve
/// per (order, train/test pair).
pub fn accumulate_distortions(reports: &[&EvaluationReport], mode: AccumulationMode) -> Result<DistortionProfile> {
    let mut sums: BTreeMap<(usize, String), BTreeMap<usize, f64>> = BTreeMap::new();
    for report in reports {
        for t in &report.trials {
            if t.kind == ModelKind::Cm {
                return Err(Error::Usage(
                    "distortion accumulation applies to VQ reports only".into(),
                ));
            }
            let value = match mode {
                AccumulationMode::All => t.scores.iter().sum::<f64>(),
                AccumulationMode::Identified => t.score,
            };
            *sums
                .entry((t.order, pair_label(t.train, t.test)))
                .or_default()
                .entry(t.size)
                .or_insert(0.0) += value;
        }
    }
    let curves = sums
        .into_iter()
        .map(|((order, label), points)| DistortionCurve {
            label,
            order,
            points: points.into_iter().collect(),
        })
        .collect();
    Ok(DistortionProfile { mode, curves })
}

/// For `Nq = 0..=7`, the CM order whose `(P² + P)/2` is closest to
/// `2^Nq · P_vq` (ties to the smaller order).
pub fn memory_parity_pairs(p_vq: usize) -> Vec<(u32, usize)> {
    (0..=7u32)
        .map(|nq| {
            let target = count_vq_parameters(nq, p_vq) as i64;
            let best = (1..=PARITY_SEARCH_LIMIT)
                .min_by_key(|&p| ((count_cm_parameters(p) as i64 - target).abs(), p))
                .unwrap_or(1);
            (nq, best)
        })
        .collect()
}
