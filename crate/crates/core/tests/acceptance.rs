//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any fails.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use spkid::cm::{invert_spd, sphericity, trace_product};
use spkid::corpus::{generate_synthetic_corpus, Language, LanguageTag, SynthesisSpec, Utterance};
use spkid::dsp::{extract_features, levinson_durbin, AnalysisConfig};
use spkid::eval::{
    accumulate_distortions, memory_parity_pairs, run_combined_grid, run_language_grid, AccumulationMode,
    EvaluationReport, HarnessConfig, ModelKind,
};
use spkid::vq::{combine_codebooks, count_vq_parameters, quantize_distortion, Codebook};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    let detail = detail.into();
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let vq: Vec<usize> = (0..=7).map(|nq| count_vq_parameters(nq, 12)).collect();
    let pairs = memory_parity_pairs(12);
    within(start.elapsed(), Duration::from_secs(1))?;
    let want_vq = vec![12, 24, 48, 96, 192, 384, 768, 1536];
    let want_pairs = vec![(0, 4), (1, 6), (2, 9), (3, 13), (4, 19), (5, 27), (6, 39), (7, 55)];
    check(
        vq == want_vq && pairs == want_pairs,
        format!("vq column {vq:?}, parity {pairs:?}"),
    )
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_self = 0.0f64;
    let mut worst_scale = 0.0f64;
    let mut worst_congruence = 0.0f64;
    let mut min_mu = f64::INFINITY;
    for i in 0..1000 {
        let m = 2 + i % 19;
        let a = random_spd(&mut rng, m);
        let b = random_spd(&mut rng, m);
        worst_self = worst_self.max(sphericity(&a, &a).map_err(|e| e.to_string())?.abs());
        for alpha in [0.01, 1.0, 100.0] {
            let scaled = &a * alpha;
            worst_scale = worst_scale.max(sphericity(&a, &scaled).map_err(|e| e.to_string())?.abs());
        }
        let ab = sphericity(&a, &b).map_err(|e| e.to_string())?;
        let ba = sphericity(&b, &a).map_err(|e| e.to_string())?;
        if ab.to_bits() != ba.to_bits() {
            return Err(format!("asymmetric: mu(A,B)={ab:?} mu(B,A)={ba:?} at m={m}"));
        }
        min_mu = min_mu.min(ab);
        let t = gaussian_matrix(&mut rng, m, m) + DMatrix::identity(m, m) * (m as f64).sqrt();
        let ta = &t * &a * t.transpose();
        let tb = &t * &b * t.transpose();
        let congruent =
            sphericity(&((&ta + ta.transpose()) * 0.5), &((&tb + tb.transpose()) * 0.5)).map_err(|e| e.to_string())?;
        worst_congruence = worst_congruence.max((congruent - ab).abs());
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    check(
        worst_self <= 1e-9 && worst_scale <= 1e-9 && min_mu >= -1e-12 && worst_congruence <= 1e-6,
        format!(
            "max |mu(C,C)|={worst_self:.2e}, max |mu(A,aA)|={worst_scale:.2e}, min mu={min_mu:.2e}, max congruence gap={worst_congruence:.2e}"
        ),
    )
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let m = 2 + i % 19;
        let x = random_spd(&mut rng, m);
        let y = random_spd(&mut rng, m);
        let x_inv = invert_spd(&x).map_err(|e| e.to_string())?.inverse;
        let y_inv = invert_spd(&y).map_err(|e| e.to_string())?.inverse;
        let (t_yx, t_xy) = trace_product(&y, &x, &x_inv, &y_inv).map_err(|e| e.to_string())?;
        let d_yx = dense_trace(&y, &x);
        let d_xy = dense_trace(&x, &y);
        worst = worst
            .max(((t_yx - d_yx) / d_yx).abs())
            .max(((t_xy - d_xy) / d_xy).abs());
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    check(
        worst <= 1e-10,
        format!("max relative trace error {worst:.2e} over 1000 pairs"),
    )
}

fn criterion_4() -> Outcome {
    let one = levinson_durbin(&[1.0, 0.9], 1).map_err(|e| e.to_string())?;
    let two = levinson_durbin(&[1.0, 0.5, 0.25], 2).map_err(|e| e.to_string())?;
    let hand = (one.coefficients[0] - 0.9).abs() <= 1e-12
        && (two.coefficients[0] - 0.5).abs() <= 1e-12
        && two.coefficients[1].abs() <= 1e-12;
    if !hand {
        return Err(format!(
            "hand cases gave {:?} and {:?}",
            one.coefficients, two.coefficients
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..200 {
        let p = 1 + i % 20;
        let ar = random_stable_ar(&mut rng, p, 0.9);
        let r = ar_autocorrelation(&mut rng, &ar, 4000);
        let lpc = levinson_durbin(&r, p).map_err(|e| e.to_string())?;
        let dense = dense_normal_equations(&r, p);
        worst = worst.max(relative_error(&lpc.coefficients, &dense));
    }
    check(
        worst <= 1e-8,
        format!("hand cases exact, max relative error {worst:.2e} over 200 AR spectra"),
    )
}

fn criterion_5() -> Outcome {
    let spec = SynthesisSpec {
        n_speakers: 5,
        n_test_utterances: 4,
        train_duration_s: 2.0,
        test_duration_s: 1.0,
        seed: 5,
        ..SynthesisSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec).map_err(|e| e.to_string())?;
    if corpus.len() != 50 {
        return Err(format!("expected 50 utterances, got {}", corpus.len()));
    }
    let config = AnalysisConfig::default();
    let mut worst = 0.0f64;
    for u in &corpus {
        let base = extract_features(u, &config).map_err(|e| e.to_string())?;
        for alpha in [0.1, 10.0] {
            let scaled = Utterance {
                samples: u.samples.iter().map(|x| x * alpha).collect(),
                ..u.clone()
            };
            let f = extract_features(&scaled, &config).map_err(|e| e.to_string())?;
            if f.vectors.len() != base.vectors.len() {
                return Err(format!("frame count changed under gain {alpha}"));
            }
            for (v, w) in f.vectors.iter().zip(&base.vectors) {
                for (x, y) in v.iter().zip(w) {
                    worst = worst.max((x - y).abs());
                }
            }
        }
    }
    check(
        worst <= 1e-9,
        format!("max coefficient change {worst:.2e} over 50 utterances"),
    )
}

fn random_book(rng: &mut ChaCha8Rng, count: usize, order: usize, bits: u32, language: Language) -> Codebook {
    Codebook {
        centroids: (0..count)
            .map(|_| (0..order).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect(),
        bits,
        order,
        speaker_id: "s".into(),
        language: LanguageTag::Single(language),
        seed: 0,
    }
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..100 {
        let order = rng.random_range(1..=20);
        let bits = rng.random_range(0..=5);
        let n = rng.random_range(1..200);
        let features: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..order).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let a = random_book(&mut rng, 1 << bits, order, bits, Language::A);
        let b = random_book(&mut rng, 1 << bits, order, bits, Language::B);
        let extra = rng.random_range(1..10);
        let mut superset = a.clone();
        superset
            .centroids
            .extend(random_book(&mut rng, extra, order, bits, Language::A).centroids);
        let d = |f: &[Vec<f64>], cb: &Codebook| quantize_distortion(f, cb).map_err(|e| e.to_string());
        let (da, db, ds) = (d(&features, &a)?, d(&features, &b)?, d(&features, &superset)?);
        let dc = d(&features, &combine_codebooks(&a, &b).map_err(|e| e.to_string())?)?;
        if ds > da {
            return Err(format!("instance {i}: superset distortion {ds} > subset {da}"));
        }
        if dc > da.min(db) {
            return Err(format!("instance {i}: combined distortion {dc} > min({da}, {db})"));
        }
    }
    Ok("superset monotonicity and combined dominance on 100 instances".into())
}

/// Default-seed corpus with every grid the identification criteria need.
struct Desk {
    vq: EvaluationReport,
    combined: EvaluationReport,
    cm: EvaluationReport,
    elapsed: Duration,
}

const VQ_SIZES: [usize; 8] = [0, 1, 2, 3, 4, 5, 6, 7];
const CM_ORDERS: [usize; 14] = [4, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 27, 39, 55];

fn desk() -> &'static Result<Desk, String> {
    static DESK: OnceLock<Result<Desk, String>> = OnceLock::new();
    DESK.get_or_init(|| {
        let start = Instant::now();
        let corpus = generate_synthetic_corpus(&SynthesisSpec::default()).map_err(|e| e.to_string())?;
        let config = HarnessConfig::default();
        let vq = run_language_grid(&corpus, ModelKind::Vq, &VQ_SIZES, &config).map_err(|e| e.to_string())?;
        let combined = run_combined_grid(&corpus, &VQ_SIZES, &config).map_err(|e| e.to_string())?;
        let cm = run_language_grid(&corpus, ModelKind::Cm, &CM_ORDERS, &config).map_err(|e| e.to_string())?;
        Ok(Desk {
            vq,
            combined,
            cm,
            elapsed: start.elapsed(),
        })
    })
}

fn criterion_7() -> Outcome {
    let desk = desk().as_ref().map_err(Clone::clone)?;
    let mut points = 0;
    for report in [&desk.vq, &desk.combined] {
        let all = accumulate_distortions(&[report], AccumulationMode::All).map_err(|e| e.to_string())?;
        let identified = accumulate_distortions(&[report], AccumulationMode::Identified).map_err(|e| e.to_string())?;
        for (ca, ci) in all.curves.iter().zip(&identified.curves) {
            if ca.label != ci.label || ca.points.len() != ci.points.len() {
                return Err(format!("curve mismatch {} vs {}", ca.label, ci.label));
            }
            for ((size, va), (_, vi)) in ca.points.iter().zip(&ci.points) {
                if va < vi {
                    return Err(format!("{} No={size}: all {va} < identified {vi}", ca.label));
                }
                points += 1;
            }
        }
    }
    Ok(format!("all-mode >= identified-mode at {points} sweep points"))
}

fn same_language(train: LanguageTag, test: Language) -> bool {
    train == LanguageTag::Single(test)
}

fn criterion_8() -> Outcome {
    let desk = desk().as_ref().map_err(Clone::clone)?;
    within(desk.elapsed, Duration::from_secs(120))?;
    let mut failures = Vec::new();
    let mut cross_min = 100.0f64;
    for c in desk.vq.cells.iter().filter(|c| c.size >= 4) {
        if same_language(c.train, c.test) {
            if c.rate() < 100.0 {
                failures.push(format!("vq No={} {} {:.1}%", c.size, c.label(), c.rate()));
            }
        } else {
            cross_min = cross_min.min(c.rate());
        }
    }
    for c in desk.cm.cells.iter().filter(|c| (12..=19).contains(&c.order)) {
        if same_language(c.train, c.test) {
            if c.rate() < 100.0 {
                failures.push(format!("cm P={} {} {:.1}%", c.order, c.label(), c.rate()));
            }
        } else {
            cross_min = cross_min.min(c.rate());
        }
    }
    if cross_min < 80.0 {
        failures.push(format!("cross-language minimum {cross_min:.1}% < 80%"));
    }
    let mut dominated = 0;
    for &size in &VQ_SIZES {
        let ok = Language::ALL.iter().all(|&lang| {
            let single = desk
                .vq
                .cell(ModelKind::Vq, 12, size, lang.into(), lang)
                .map(|c| c.rate());
            let comb = desk
                .combined
                .cell(ModelKind::Combined, 12, size, LanguageTag::Combined, lang)
                .map(|c| c.rate());
            matches!((single, comb), (Some(s), Some(c)) if c >= s)
        });
        dominated += usize::from(ok);
    }
    if dominated < 7 {
        failures.push(format!("combined >= single at only {dominated} of 8 sizes"));
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "same-language 100%, cross-language min {cross_min:.1}%, combined >= single at {dominated}/8 sizes, {:.1?}",
                desk.elapsed
            )
        } else {
            failures.join("; ")
        },
    )
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_spkid"))
        .args(args)
        .current_dir(dir)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "spkid {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn criterion_9() -> Outcome {
    let steps: [&[&str]; 6] = [
        &[
            "synth",
            "--speakers",
            "5",
            "--seed",
            "9",
            "--train-seconds",
            "30",
            "--out",
            "corpus",
        ],
        &[
            "train",
            "--manifest",
            "corpus/manifest.tsv",
            "--kind",
            "vq",
            "--bits",
            "0..5",
            "--out",
            "vq_models",
        ],
        &[
            "train",
            "--manifest",
            "corpus/manifest.tsv",
            "--kind",
            "cm",
            "--order",
            "12,19",
            "--out",
            "cm_models",
        ],
        &[
            "train",
            "--manifest",
            "corpus/manifest.tsv",
            "--kind",
            "combined",
            "--bits",
            "3",
            "--out",
            "comb_models",
        ],
        &[
            "evaluate",
            "--manifest",
            "corpus/manifest.tsv",
            "--kind",
            "vq",
            "--sizes",
            "0..5",
            "--out",
            "vq_report",
        ],
        &[
            "evaluate",
            "--manifest",
            "corpus/manifest.tsv",
            "--kind",
            "cm",
            "--order",
            "12,19",
            "--out",
            "cm_report",
        ],
    ];
    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        for args in steps {
            run_cli(dir.path(), args)?;
        }
        snapshots.push(snapshot(dir.path()));
    }
    let (first, second) = (&snapshots[0], &snapshots[1]);
    if first.keys().ne(second.keys()) {
        return Err("runs produced different file sets".into());
    }
    let differing: Vec<&String> = first
        .iter()
        .filter(|(k, v)| &second[*k] != *v)
        .map(|(k, _)| k)
        .collect();
    let models = first.keys().filter(|k| k.ends_with(".model")).count();
    let reports = first
        .keys()
        .filter(|k| k.ends_with(".tsv") && k.contains("_report"))
        .count();
    check(
        differing.is_empty(),
        if differing.is_empty() {
            format!(
                "{} files identical across runs ({models} models, {reports} report tables)",
                first.len()
            )
        } else {
            format!("differing files: {differing:?}")
        },
    )
}

fn overall_rate(report: &EvaluationReport, order: usize) -> Option<f64> {
    let cells: Vec<_> = report.cells.iter().filter(|c| c.order == order).collect();
    let total: usize = cells.iter().map(|c| c.total).sum();
    let correct: usize = cells.iter().map(|c| c.correct).sum();
    (total > 0).then(|| 100.0 * correct as f64 / total as f64)
}

fn criterion_10() -> Outcome {
    let desk = desk().as_ref().map_err(Clone::clone)?;
    let rates: Vec<(usize, f64)> = CM_ORDERS
        .iter()
        .filter_map(|&p| overall_rate(&desk.cm, p).map(|r| (p, r)))
        .collect();
    let (best_p, best) =
        rates.iter().filter(|(p, _)| *p <= 27).fold(
            (0, f64::NEG_INFINITY),
            |acc, &(p, r)| if r > acc.1 { (p, r) } else { acc },
        );
    let high = overall_rate(&desk.cm, 55).ok_or("no P=55 cells")?;
    check(
        high <= best,
        format!("rate at P=55 {high:.1}% vs best P<=27 {best:.1}% (P={best_p}); sweep {rates:?}"),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("parameter counts and memory parity", criterion_1),
        ("sphericity properties", criterion_2),
        ("trace formula vs dense product", criterion_3),
        ("Levinson-Durbin vs dense normal equations", criterion_4),
        ("LPCC gain invariance", criterion_5),
        ("VQ dominance properties", criterion_6),
        ("distortion accumulation ordering", criterion_7),
        ("desk-scale identification", criterion_8),
        ("CLI determinism", criterion_9),
        ("CM high-order degradation", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2}: {name}: {detail} [{secs:.2}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2}: {name}: {detail} [{secs:.2}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
