//! Batch command-line interface.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! data and contract errors.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cm::{estimate_covariance, model_sphericity, CovarianceModel};
use crate::corpus::{
    generate_synthetic_corpus, load_manifest, load_utterances, read_wav, write_manifest, write_wav, Language,
    LanguageTag, Manifest, ManifestEntry, Split, SynthesisSpec, Utterance,
};
use crate::dsp::{extract_features, write_feature_dump, AnalysisConfig, FeatureSequence};
use crate::error::{Error, Result};
use crate::eval::{
    accumulate_distortions, codebook_seed, emit_report, memory_parity_pairs, parity_table_text, run_language_grid,
    write_distortion_profile, AccumulationMode, EvaluationReport, HarnessConfig, ModelKind,
};
use crate::vq::{combine_codebooks, quantize_distortion, train_codebook, Codebook};

const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Parser)]
#[command(
    name = "spkid",
    version,
    about = "Closed-set speaker identification with VQ codebooks and covariance models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic bilingual corpus as WAV files plus a manifest.
    Synth(SynthArgs),
    /// Train one model per speaker and language from the train split.
    Train(TrainArgs),
    /// Rank enrolled speakers for a single WAV file.
    Identify(IdentifyArgs),
    /// Run the train/test language grid and write report tables.
    Evaluate(EvaluateArgs),
    /// Print the CM orders matching VQ parameter counts.
    Parity(ParityArgs),
    /// Dump the LPCC vectors of a WAV file.
    Features(FeaturesArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    speakers: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    states_a: usize,
    #[arg(long, default_value_t = 5)]
    states_b: usize,
    /// Train utterance length in seconds.
    #[arg(long, default_value_t = 60.0)]
    train_seconds: f64,
    #[arg(long, default_value_t = 5)]
    tests: usize,
    /// Test utterance length in seconds.
    #[arg(long, default_value_t = 4.0)]
    test_seconds: f64,
    #[arg(long, default_value_t = 8000)]
    rate: u32,
}

#[derive(Debug, Args)]
struct AnalysisArgs {
    /// Frame length in samples.
    #[arg(long, default_value_t = 240)]
    frame: usize,
    /// Frame overlap as a fraction, e.g. `2/3` or `0.5`.
    #[arg(long, default_value = "2/3")]
    overlap: String,
    #[arg(long, default_value_t = 0.95)]
    preemph: f64,
    /// Silence floor in dB below the loudest frame.
    #[arg(long, default_value_t = 30.0)]
    silence_db: f64,
    /// Accept LPC orders above frame/10 (always on for CM).
    #[arg(long)]
    allow_high_order: bool,
}

#[derive(Debug, Args)]
struct SizeArgs {
    /// Codebook bits No; repeatable, comma separated or an inclusive range `a..b`.
    #[arg(long, value_delimiter = ',')]
    bits: Vec<String>,
    /// LPC order P; for CM these are the model sizes.
    #[arg(long, value_delimiter = ',')]
    order: Vec<String>,
    /// Model sizes: bits for vq/combined, orders for cm.
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "vq")]
    kind: String,
    #[command(flatten)]
    sizes: SizeArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lloyd refinement after random codebook selection.
    #[arg(long)]
    refine: bool,
    /// Train only this language.
    #[arg(long)]
    lang: Option<String>,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
struct IdentifyArgs {
    /// Directory of `.model` files.
    #[arg(long)]
    models: PathBuf,
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    kind: Option<String>,
    /// Codebook bits or CM order to select among the models.
    #[arg(long)]
    size: Option<usize>,
    #[arg(long)]
    lang: Option<String>,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "vq")]
    kind: String,
    #[command(flatten)]
    sizes: SizeArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    refine: bool,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

#[derive(Debug, Args)]
struct ParityArgs {
    /// LPC order of the VQ system.
    #[arg(long, default_value_t = 12)]
    pvq: usize,
    /// Directory for `parity.tsv` and the run manifest.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long)]
    wav: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 12)]
    order: usize,
    #[command(flatten)]
    analysis: AnalysisArgs,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status. Normal output goes to `stdout`, diagnostics to
/// `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return 1;
            }
            let _ = write!(stdout, "{text}");
            return 0;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Synth(a) => cmd_synth(&a, out),
        Command::Train(a) => cmd_train(&a, out),
        Command::Identify(a) => cmd_identify(&a, out),
        Command::Evaluate(a) => cmd_evaluate(&a, out),
        Command::Parity(a) => cmd_parity(&a, out),
        Command::Features(a) => cmd_features(&a, out),
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_run_manifest(dir: &Path, command: &str, config: Value) -> Result<()> {
    let doc = json!({
        "tool": "spkid",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
    });
    let path = dir.join(RUN_MANIFEST);
    let mut text = serde_json::to_string_pretty(&doc).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Parses `2/3`, `0.5` or `1/2` style fractions.
fn parse_fraction(text: &str) -> Result<f64> {
    let bad = || Error::Usage(format!("cannot parse fraction {text:?}"));
    let value = match text.split_once('/') {
        Some((num, den)) => {
            let num: f64 = num.trim().parse().map_err(|_| bad())?;
            let den: f64 = den.trim().parse().map_err(|_| bad())?;
            if den == 0.0 {
                return Err(bad());
            }
            num / den
        }
        None => text.trim().parse().map_err(|_| bad())?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

/// Expands `5`, `0..7` and `0..=7` (both ranges inclusive) into a sorted,
/// deduplicated list.
fn parse_size_list(values: &[String]) -> Result<Vec<usize>> {
    let mut out = BTreeSet::new();
    for raw in values {
        let v = raw.trim();
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("cannot parse size {raw:?}")))
        };
        if let Some((lo, hi)) = v.split_once("..") {
            let lo = num(lo)?;
            let hi = num(hi.strip_prefix('=').unwrap_or(hi))?;
            if lo > hi {
                return Err(Error::Usage(format!("empty range {raw:?}")));
            }
            out.extend(lo..=hi);
        } else {
            out.insert(num(v)?);
        }
    }
    Ok(out.into_iter().collect())
}

fn analysis_config(args: &AnalysisArgs, order: usize) -> Result<AnalysisConfig> {
    let config = AnalysisConfig {
        frame_length: args.frame,
        overlap_fraction: parse_fraction(&args.overlap)?,
        preemphasis: args.preemph,
        lpc_order: order,
        silence_floor_db: args.silence_db,
        allow_high_order: args.allow_high_order,
    };
    config.validate()?;
    Ok(config)
}

/// Model sizes and LPC orders requested for `kind`.
struct Resolved {
    sizes: Vec<usize>,
    orders: Vec<usize>,
}

fn resolve_sizes(kind: ModelKind, args: &SizeArgs) -> Result<Resolved> {
    let bits = parse_size_list(&args.bits)?;
    let orders = parse_size_list(&args.order)?;
    let generic = parse_size_list(&args.sizes)?;
    let resolved = match kind {
        ModelKind::Vq | ModelKind::Combined => {
            let sizes: Vec<usize> = bits
                .iter()
                .chain(&generic)
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            Resolved {
                sizes,
                orders: if orders.is_empty() { vec![12] } else { orders },
            }
        }
        ModelKind::Cm => {
            if !bits.is_empty() {
                return Err(Error::Usage("--bits does not apply to cm; use --order".into()));
            }
            let sizes: Vec<usize> = orders
                .iter()
                .chain(&generic)
                .copied()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            Resolved {
                orders: sizes.clone(),
                sizes,
            }
        }
    };
    if resolved.sizes.is_empty() {
        return Err(Error::Usage(match kind {
            ModelKind::Cm => "no model order given (--order or --sizes)".into(),
            _ => "no codebook size given (--bits or --sizes)".into(),
        }));
    }
    if resolved.orders.contains(&0) {
        return Err(Error::Usage("LPC order must be at least 1".into()));
    }
    Ok(resolved)
}

fn path_text(p: &Path) -> String {
    p.display().to_string()
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let spec = SynthesisSpec {
        n_speakers: args.speakers,
        n_states_lang_a: args.states_a,
        n_states_lang_b: args.states_b,
        train_duration_s: args.train_seconds,
        n_test_utterances: args.tests,
        test_duration_s: args.test_seconds,
        sample_rate: args.rate,
        seed: args.seed,
    };
    spec.validate().map_err(|e| match e {
        Error::InvalidConfig(msg) => Error::Usage(msg),
        other => other,
    })?;
    let corpus = generate_synthetic_corpus(&spec)?;
    create_dir(&args.out)?;
    let entries: Vec<ManifestEntry> = corpus
        .iter()
        .map(|u| ManifestEntry {
            path: PathBuf::from(format!("{}_{}_{}_{}.wav", u.speaker_id, u.language, u.split, u.task_id)),
            speaker_id: u.speaker_id.clone(),
            language: u.language,
            split: u.split,
            task_id: u.task_id.clone(),
        })
        .collect();
    corpus
        .par_iter()
        .zip(&entries)
        .try_for_each(|(u, e)| write_wav(args.out.join(&e.path), &u.samples, u.sample_rate))?;
    write_manifest(args.out.join("manifest.tsv"), &entries)?;
    let spec_json = serde_json::to_value(&spec).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    write_run_manifest(
        &args.out,
        "synth",
        json!({ "spec": spec_json, "utterances": entries.len(), "manifest": "manifest.tsv" }),
    )?;
    emit(
        out,
        &format!(
            "wrote {} utterances and manifest.tsv to {}\n",
            entries.len(),
            args.out.display()
        ),
    )
}

/// Train-split features pooled per (speaker, language).
fn pooled_train_features(
    manifest: &Manifest,
    languages: &[Language],
    analyses: &[AnalysisConfig],
) -> Result<Vec<BTreeMap<(String, Language), FeatureSequence>>> {
    let speakers: BTreeSet<String> = manifest.entries.iter().map(|e| e.speaker_id.clone()).collect();
    if speakers.is_empty() {
        return Err(Error::Protocol("manifest lists no utterances".into()));
    }
    for speaker in &speakers {
        for &lang in languages {
            let present = manifest
                .entries
                .iter()
                .any(|e| &e.speaker_id == speaker && e.language == lang && e.split == Split::Train);
            if !present {
                return Err(Error::Protocol(format!(
                    "speaker {speaker} has no train utterance in language {lang}"
                )));
            }
        }
    }
    let train = Manifest {
        entries: manifest
            .entries
            .iter()
            .filter(|e| e.split == Split::Train && languages.contains(&e.language))
            .cloned()
            .collect(),
        base_dir: manifest.base_dir.clone(),
    };
    let utterances = load_utterances(&train)?;
    analyses
        .iter()
        .map(|analysis| {
            let features = utterances
                .par_iter()
                .map(|u| {
                    extract_features(u, analysis).map_err(|e| {
                        Error::Protocol(format!(
                            "speaker {}, language {}, task {}: {e}",
                            u.speaker_id, u.language, u.task_id
                        ))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let mut pooled: BTreeMap<(String, Language), FeatureSequence> = BTreeMap::new();
            for f in features {
                match pooled.get_mut(&(f.speaker_id.clone(), f.language)) {
                    Some(existing) => {
                        existing.vectors.extend(f.vectors);
                        existing.clamped_frames += f.clamped_frames;
                    }
                    None => {
                        pooled.insert((f.speaker_id.clone(), f.language), f);
                    }
                }
            }
            Ok(pooled)
        })
        .collect()
}

fn parse_language(text: &str) -> Result<Language> {
    text.parse().map_err(|e: Error| Error::Usage(e.to_string()))
}

fn parse_kind(text: &str) -> Result<ModelKind> {
    text.parse()
}

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let resolved = resolve_sizes(kind, &args.sizes)?;
    if kind != ModelKind::Cm && resolved.orders.len() != 1 {
        return Err(Error::Usage("training codebooks needs a single --order".into()));
    }
    let languages = match (&args.lang, kind) {
        (Some(_), ModelKind::Combined) => {
            return Err(Error::Usage(
                "combined codebooks need both languages; drop --lang".into(),
            ))
        }
        (Some(l), _) => vec![parse_language(l)?],
        (None, _) => Language::ALL.to_vec(),
    };
    let analyses = resolved
        .orders
        .iter()
        .map(|&p| {
            let mut a = analysis_config(&args.analysis, 12)?;
            a.allow_high_order |= kind == ModelKind::Cm;
            a.lpc_order = p;
            a.validate()?;
            Ok(a)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = load_manifest(&args.manifest)?;
    let pooled = pooled_train_features(&manifest, &languages, &analyses)?;
    create_dir(&args.out)?;

    let mut written: Vec<String> = Vec::new();
    match kind {
        ModelKind::Vq | ModelKind::Combined => {
            let features = &pooled[0];
            for &size in &resolved.sizes {
                let bits = u32::try_from(size).map_err(|_| Error::Usage(format!("codebook bits {size} too large")))?;
                let books = features
                    .par_iter()
                    .map(|((speaker, lang), f)| {
                        train_codebook(f, bits, codebook_seed(args.seed, speaker, *lang, bits), args.refine)
                            .map(|b| ((speaker.clone(), *lang), b))
                            .map_err(|e| Error::Protocol(format!("speaker {speaker}, language {lang}, No={bits}: {e}")))
                    })
                    .collect::<Result<BTreeMap<_, _>>>()?;
                if kind == ModelKind::Vq {
                    for ((speaker, lang), book) in &books {
                        let name = format!("{speaker}_{lang}_vq{bits}.model");
                        book.save(args.out.join(&name))?;
                        written.push(name);
                    }
                } else {
                    let speakers: BTreeSet<&String> = books.keys().map(|(s, _)| s).collect();
                    for speaker in speakers {
                        let a = &books[&(speaker.clone(), Language::A)];
                        let b = &books[&(speaker.clone(), Language::B)];
                        let name = format!("{speaker}_combined_combined{bits}.model");
                        combine_codebooks(a, b)?.save(args.out.join(&name))?;
                        written.push(name);
                    }
                }
            }
        }
        ModelKind::Cm => {
            for (features, &order) in pooled.iter().zip(&resolved.orders) {
                let models = features
                    .par_iter()
                    .map(|((speaker, lang), f)| {
                        estimate_covariance(f)
                            .map_err(|e| Error::Protocol(format!("speaker {speaker}, language {lang}, P={order}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for m in &models {
                    let name = format!("{}_{}_cm{order}.model", m.speaker_id, m.language);
                    m.save(args.out.join(&name))?;
                    written.push(name);
                }
            }
        }
    }
    written.sort();
    write_run_manifest(
        &args.out,
        "train",
        json!({
            "manifest": path_text(&args.manifest),
            "kind": kind.as_str(),
            "sizes": resolved.sizes,
            "orders": resolved.orders,
            "languages": languages.iter().map(|l| l.as_str()).collect::<Vec<_>>(),
            "seed": args.seed,
            "refine": args.refine,
            "analysis": serde_json::to_value(&analyses[0]).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            "models": written,
        }),
    )?;
    emit(
        out,
        &format!("wrote {} models to {}\n", written.len(), args.out.display()),
    )
}

enum LoadedModel {
    Vq(Codebook),
    Cm(CovarianceModel),
}

impl LoadedModel {
    fn kind(&self) -> ModelKind {
        match self {
            LoadedModel::Vq(b) if b.language == LanguageTag::Combined => ModelKind::Combined,
            LoadedModel::Vq(_) => ModelKind::Vq,
            LoadedModel::Cm(_) => ModelKind::Cm,
        }
    }

    fn size(&self) -> usize {
        match self {
            LoadedModel::Vq(b) => b.bits as usize,
            LoadedModel::Cm(m) => m.order(),
        }
    }

    fn order(&self) -> usize {
        match self {
            LoadedModel::Vq(b) => b.order,
            LoadedModel::Cm(m) => m.order(),
        }
    }

    fn speaker(&self) -> &str {
        match self {
            LoadedModel::Vq(b) => &b.speaker_id,
            LoadedModel::Cm(m) => &m.speaker_id,
        }
    }

    fn language(&self) -> LanguageTag {
        match self {
            LoadedModel::Vq(b) => b.language,
            LoadedModel::Cm(m) => m.language,
        }
    }
}

fn load_model(path: &Path) -> Result<LoadedModel> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match text.split_whitespace().next() {
        Some("vqcb") => Codebook::from_text(&text, path).map(LoadedModel::Vq),
        Some("cmmodel") => CovarianceModel::from_text(&text, path).map(LoadedModel::Cm),
        _ => Err(Error::parse(path, 1, "unrecognized model header")),
    }
}

fn cmd_identify(args: &IdentifyArgs, out: &mut dyn Write) -> Result<()> {
    let kind_filter = args.kind.as_deref().map(parse_kind).transpose()?;
    let lang_filter = args
        .lang
        .as_deref()
        .map(|l| l.parse::<LanguageTag>())
        .transpose()
        .map_err(|e| Error::Usage(e.to_string()))?;
    let mut paths: Vec<PathBuf> = fs::read_dir(&args.models)
        .map_err(|e| Error::io(&args.models, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(&args.models, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.retain(|p| p.extension().is_some_and(|x| x == "model"));
    paths.sort();
    let models: Vec<LoadedModel> = paths
        .iter()
        .map(|p| load_model(p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|m| kind_filter.is_none_or(|k| m.kind() == k))
        .filter(|m| args.size.is_none_or(|s| m.size() == s))
        .filter(|m| lang_filter.is_none_or(|l| m.language() == l))
        .collect();
    if models.is_empty() {
        return Err(Error::Usage(format!("no matching models in {}", args.models.display())));
    }
    let groups: BTreeSet<(ModelKind, usize, usize)> = models.iter().map(|m| (m.kind(), m.size(), m.order())).collect();
    if groups.len() > 1 {
        let listed: Vec<String> = groups.iter().map(|(k, s, _)| format!("{k}{s}")).collect();
        return Err(Error::Usage(format!(
            "models of several kinds or sizes found ({}); select one with --kind and --size",
            listed.join(", ")
        )));
    }
    let &(kind, _, order) = groups.first().expect("one group");

    let audio = read_wav(&args.wav)?;
    let utterance = Utterance {
        samples: audio.samples,
        sample_rate: audio.sample_rate,
        speaker_id: "unknown".into(),
        language: Language::A,
        split: Split::Test,
        task_id: "probe".into(),
    };
    let mut analysis = analysis_config(&args.analysis, 12)?;
    analysis.allow_high_order |= kind == ModelKind::Cm;
    analysis.lpc_order = order;
    analysis.validate()?;
    let features = extract_features(&utterance, &analysis)?;
    let test_model = match kind {
        ModelKind::Cm => Some(estimate_covariance(&features)?),
        _ => None,
    };
    let mut ranked = models
        .iter()
        .map(|m| {
            let score = match (m, &test_model) {
                (LoadedModel::Vq(book), _) => quantize_distortion(&features.vectors, book)?,
                (LoadedModel::Cm(model), Some(test)) => model_sphericity(test, model)?,
                (LoadedModel::Cm(_), None) => unreachable!("test covariance is estimated for cm"),
            };
            Ok((score, m.speaker().to_string(), m.language()))
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| {
        let key = |s: f64| if s.is_nan() { f64::INFINITY } else { s };
        key(a.0)
            .total_cmp(&key(b.0))
            .then_with(|| a.1.cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });
    let mut text = String::from("rank\tspeaker\tlanguage\tscore\n");
    for (i, (score, speaker, lang)) in ranked.iter().enumerate() {
        text.push_str(&format!("{}\t{speaker}\t{lang}\t{score:.6}\n", i + 1));
    }
    emit(out, &text)
}

fn cmd_evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let kind = parse_kind(&args.kind)?;
    let resolved = resolve_sizes(kind, &args.sizes)?;
    let base = analysis_config(&args.analysis, 12)?;
    let manifest = load_manifest(&args.manifest)?;
    let corpus = load_utterances(&manifest)?;
    let mut report = EvaluationReport::default();
    match kind {
        ModelKind::Cm => {
            let config = HarnessConfig {
                analysis: base.clone(),
                seed: args.seed,
                refine: args.refine,
            };
            report = run_language_grid(&corpus, kind, &resolved.sizes, &config)?;
        }
        ModelKind::Vq | ModelKind::Combined => {
            for &order in &resolved.orders {
                let analysis = base.with_order(order);
                analysis.validate()?;
                let config = HarnessConfig {
                    analysis,
                    seed: args.seed,
                    refine: args.refine,
                };
                report.merge(run_language_grid(&corpus, kind, &resolved.sizes, &config)?);
            }
        }
    }
    create_dir(&args.out)?;
    let stem = kind.as_str();
    let files = emit_report(&report, &args.out, stem)?;
    let mut outputs = vec![files.table, files.cells, files.trials, files.confusion];
    if kind != ModelKind::Cm {
        for mode in [AccumulationMode::All, AccumulationMode::Identified] {
            let profile = accumulate_distortions(&[&report], mode)?;
            let path = args.out.join(format!("{stem}_distortion_{}.tsv", mode.as_str()));
            write_distortion_profile(&profile, &path)?;
            outputs.push(path);
        }
    }
    let names: Vec<String> = outputs
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    write_run_manifest(
        &args.out,
        "evaluate",
        json!({
            "manifest": path_text(&args.manifest),
            "kind": kind.as_str(),
            "sizes": resolved.sizes,
            "orders": resolved.orders,
            "seed": args.seed,
            "refine": args.refine,
            "analysis": serde_json::to_value(&base).map_err(|e| Error::InvalidConfig(e.to_string()))?,
            "speakers": report.speakers,
            "outputs": names,
        }),
    )?;
    let table = fs::read_to_string(&outputs[0]).map_err(|e| Error::io(&outputs[0], e))?;
    emit(out, &table)
}

fn cmd_parity(args: &ParityArgs, out: &mut dyn Write) -> Result<()> {
    if args.pvq == 0 {
        return Err(Error::Usage("--pvq must be at least 1".into()));
    }
    let pairs = memory_parity_pairs(args.pvq);
    let text = parity_table_text(args.pvq, &pairs);
    if let Some(dir) = &args.out {
        create_dir(dir)?;
        let path = dir.join("parity.tsv");
        fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
        write_run_manifest(dir, "parity", json!({ "pvq": args.pvq, "outputs": ["parity.tsv"] }))?;
    }
    emit(out, &text)
}

fn cmd_features(args: &FeaturesArgs, out: &mut dyn Write) -> Result<()> {
    let analysis = analysis_config(&args.analysis, args.order)?;
    let audio = read_wav(&args.wav)?;
    let utterance = Utterance {
        samples: audio.samples,
        sample_rate: audio.sample_rate,
        speaker_id: "unknown".into(),
        language: Language::A,
        split: Split::Test,
        task_id: "dump".into(),
    };
    let features = extract_features(&utterance, &analysis)?;
    write_feature_dump(&args.out, &features)?;
    emit(
        out,
        &format!(
            "wrote {} vectors of order {} to {} ({} clamped frames)\n",
            features.len(),
            features.order,
            args.out.display(),
            features.clamped_frames
        ),
    )
}
