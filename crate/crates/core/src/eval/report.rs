use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{pair_label, DistortionProfile, EvaluationReport, ModelKind};
use crate::cm::count_cm_parameters;
use crate::corpus::{Language, LanguageTag};
use crate::error::{Error, Result};
use crate::vq::count_vq_parameters;

/// Files written by [`emit_report`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportFiles {
    /// Rates as a grid of language pairs by model size.
    pub table: PathBuf,
    /// One row per grid cell with raw counts.
    pub cells: PathBuf,
    /// Long format, one row per trial.
    pub trials: PathBuf,
    pub confusion: PathBuf,
}

const SINGLE_PAIRS: [(Language, Language); 4] = [
    (Language::A, Language::A),
    (Language::B, Language::B),
    (Language::A, Language::B),
    (Language::B, Language::A),
];

fn write(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn rate_or_dash(
    report: &EvaluationReport,
    kind: ModelKind,
    order: usize,
    size: usize,
    train: LanguageTag,
    test: Language,
) -> String {
    report
        .cell(kind, order, size, train, test)
        .map_or_else(|| "-".to_string(), |c| format!("{:.1}", c.rate()))
}

fn rate_table(report: &EvaluationReport) -> Result<String> {
    let kinds: BTreeSet<ModelKind> = report.cells.iter().map(|c| c.kind).collect();
    let orders: BTreeSet<usize> = report.cells.iter().map(|c| c.order).collect();
    let sizes: BTreeSet<usize> = report.cells.iter().map(|c| c.size).collect();
    let mut out = String::new();
    match kinds.len() {
        0 => out.push_str("P\ttrain/test\n"),
        1 => {}
        _ => return Err(Error::Usage("cannot lay out a table mixing model kinds".into())),
    }
    let Some(&kind) = kinds.first() else {
        return Ok(out);
    };
    match kind {
        ModelKind::Vq => {
            out.push_str("P\ttrain/test");
            for s in &sizes {
                let _ = write!(out, "\tNo={s}");
            }
            out.push('\n');
            for &order in &orders {
                for (train, test) in SINGLE_PAIRS {
                    let _ = write!(out, "{order}\t{train}-{test}");
                    for &s in &sizes {
                        let _ = write!(out, "\t{}", rate_or_dash(report, kind, order, s, train.into(), test));
                    }
                    out.push('\n');
                }
            }
        }
        ModelKind::Combined => {
            // Column labels carry both conventions: component bits and the
            // bits of the doubled book.
            out.push_str("P\tt.");
            for s in &sizes {
                let _ = write!(out, "\tNo={s}|combNo={}", s + 1);
            }
            out.push('\n');
            for &order in &orders {
                for test in Language::ALL {
                    let _ = write!(out, "{order}\t{test}");
                    for &s in &sizes {
                        let _ = write!(
                            out,
                            "\t{}",
                            rate_or_dash(report, kind, order, s, LanguageTag::Combined, test)
                        );
                    }
                    out.push('\n');
                }
            }
        }
        ModelKind::Cm => {
            out.push_str("train/test");
            for s in &sizes {
                let _ = write!(out, "\tP={s}");
            }
            out.push('\n');
            for (train, test) in SINGLE_PAIRS {
                let _ = write!(out, "{train}-{test}");
                for &s in &sizes {
                    let _ = write!(out, "\t{}", rate_or_dash(report, kind, s, s, train.into(), test));
                }
                out.push('\n');
            }
        }
    }
    Ok(out)
}

/// Writes `<stem>_table.tsv`, `<stem>_cells.tsv`, `<stem>_trials.tsv` and
/// `<stem>_confusion.tsv` into `dir`.
pub fn emit_report(report: &EvaluationReport, dir: impl AsRef<Path>, stem: &str) -> Result<ReportFiles> {
    let dir = dir.as_ref();
    let files = ReportFiles {
        table: dir.join(format!("{stem}_table.tsv")),
        cells: dir.join(format!("{stem}_cells.tsv")),
        trials: dir.join(format!("{stem}_trials.tsv")),
        confusion: dir.join(format!("{stem}_confusion.tsv")),
    };
    write(&files.table, rate_table(report)?)?;

    let mut cells =
        String::from("kind\tP\tsize\ttrain/test\tcorrect\tincorrect\ttotal\trate\tregularized\tparameters\n");
    for c in &report.cells {
        let _ = writeln!(
            cells,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.4}\t{}\t{}",
            c.kind,
            c.order,
            c.size,
            c.label(),
            c.correct,
            c.incorrect(),
            c.total,
            c.rate(),
            c.regularized,
            c.parameters_per_model
        );
    }
    write(&files.cells, cells)?;

    let mut trials = String::from("kind\tP\tsize\ttrain/test\tspeaker\ttask\tpredicted\tcorrect\tscore\n");
    for t in &report.trials {
        let _ = writeln!(
            trials,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:?}",
            t.kind,
            t.order,
            t.size,
            pair_label(t.train, t.test),
            t.speaker_id,
            t.task_id,
            t.predicted,
            u8::from(t.correct()),
            t.score
        );
    }
    write(&files.trials, trials)?;

    let mut confusion = String::from("kind\tP\tsize\ttrain/test\ttrue\tpredicted\tcount\n");
    for c in &report.cells {
        for ((truth, predicted), n) in &c.confusion {
            let _ = writeln!(
                confusion,
                "{}\t{}\t{}\t{}\t{truth}\t{predicted}\t{n}",
                c.kind,
                c.order,
                c.size,
                c.label()
            );
        }
    }
    write(&files.confusion, confusion)?;
    Ok(files)
}

pub fn write_distortion_profile(profile: &DistortionProfile, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("mode\tP\tcurve\tNo\tdistortion\n");
    for curve in &profile.curves {
        for (size, value) in &curve.points {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{size}\t{value:?}",
                profile.mode.as_str(),
                curve.order,
                curve.label
            );
        }
    }
    write(path.as_ref(), out)
}

/// Parity table with the VQ and CM parameter counts side by side.
pub fn parity_table_text(p_vq: usize, pairs: &[(u32, usize)]) -> String {
    let mut out = String::from("Nq\tvq_parameters\tP\tcm_parameters\n");
    for &(nq, p) in pairs {
        let _ = writeln!(
            out,
            "{nq}\t{}\t{p}\t{}",
            count_vq_parameters(nq, p_vq),
            count_cm_parameters(p)
        );
    }
    out
}

pub fn write_parity_table(p_vq: usize, pairs: &[(u32, usize)], path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), parity_table_text(p_vq, pairs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{CellResult, TrialRecord};
    use std::collections::BTreeMap;

    fn cell(kind: ModelKind, order: usize, size: usize, train: LanguageTag, test: Language) -> CellResult {
        CellResult {
            kind,
            order,
            size,
            train,
            test,
            correct: 3,
            total: 4,
            confusion: BTreeMap::from([(("a".into(), "a".into()), 3), (("b".into(), "a".into()), 1)]),
            regularized: 0,
            parameters_per_model: 0,
        }
    }

    #[test]
    fn empty_report_writes_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&EvaluationReport::default(), dir.path(), "empty").unwrap();
        for p in [&files.table, &files.cells, &files.trials, &files.confusion] {
            assert_eq!(fs::read_to_string(p).unwrap().lines().count(), 1, "{}", p.display());
        }
    }

    #[test]
    fn vq_table_has_twelve_rows_by_eight_columns() {
        let mut report = EvaluationReport::default();
        for order in [12, 16, 20] {
            for size in 0..8 {
                for (train, test) in SINGLE_PAIRS {
                    report.cells.push(cell(ModelKind::Vq, order, size, train.into(), test));
                }
            }
        }
        let table = rate_table(&report).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 13);
        assert_eq!(
            lines[0],
            "P\ttrain/test\tNo=0\tNo=1\tNo=2\tNo=3\tNo=4\tNo=5\tNo=6\tNo=7"
        );
        assert!(lines[1..].iter().all(|l| l.split('\t').count() == 10));
        assert!(lines[1].starts_with("12\tA-A\t75.0"));
    }

    #[test]
    fn cm_and_combined_layouts() {
        let mut cm = EvaluationReport::default();
        for p in [4, 6] {
            for (train, test) in SINGLE_PAIRS {
                cm.cells.push(cell(ModelKind::Cm, p, p, train.into(), test));
            }
        }
        let t = rate_table(&cm).unwrap();
        assert_eq!(t.lines().next().unwrap(), "train/test\tP=4\tP=6");
        assert_eq!(t.lines().count(), 5);

        let mut comb = EvaluationReport::default();
        for test in Language::ALL {
            comb.cells
                .push(cell(ModelKind::Combined, 12, 3, LanguageTag::Combined, test));
        }
        let t = rate_table(&comb).unwrap();
        assert_eq!(t.lines().next().unwrap(), "P\tt.\tNo=3|combNo=4");
        assert_eq!(t.lines().nth(2).unwrap(), "12\tB\t75.0");
    }

    #[test]
    fn long_format_counts_trials() {
        let mut report = EvaluationReport::default();
        report
            .cells
            .push(cell(ModelKind::Vq, 12, 1, Language::A.into(), Language::B));
        for i in 0..5 {
            report.trials.push(TrialRecord {
                kind: ModelKind::Vq,
                order: 12,
                size: 1,
                train: Language::A.into(),
                test: Language::B,
                speaker_id: "a".into(),
                task_id: format!("s{i}"),
                predicted: "a".into(),
                score: 0.5,
                scores: vec![0.5],
            });
        }
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&report, dir.path(), "r").unwrap();
        let trials = fs::read_to_string(files.trials).unwrap();
        assert_eq!(trials.lines().count(), 1 + 5);
        let confusion = fs::read_to_string(files.confusion).unwrap();
        assert_eq!(confusion.lines().count(), 3);
    }

    #[test]
    fn mixed_kinds_rejected() {
        let mut report = EvaluationReport::default();
        report
            .cells
            .push(cell(ModelKind::Vq, 12, 1, Language::A.into(), Language::A));
        report
            .cells
            .push(cell(ModelKind::Cm, 12, 12, Language::A.into(), Language::A));
        assert!(rate_table(&report).is_err());
    }

    #[test]
    fn parity_text() {
        let text = parity_table_text(12, &[(5, 27)]);
        assert_eq!(text.lines().nth(1).unwrap(), "5\t384\t27\t378");
    }
}
