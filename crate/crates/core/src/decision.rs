//! Closed-set decision rule shared by both recognizers.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub speaker_id: String,
    /// Score of the winning model.
    pub score: f64,
    /// One score per candidate model, in the order the models were given.
    pub scores: Vec<f64>,
}

/// Picks the lowest score. Equal scores go to the lexicographically smallest
/// speaker id, so the result does not depend on model order.
pub fn argmin_speaker<'a>(speakers: impl IntoIterator<Item = &'a str>, scores: Vec<f64>) -> Result<Identification> {
    let mut best: Option<(&str, f64)> = None;
    for (speaker, &score) in speakers.into_iter().zip(&scores) {
        // NaN never beats a real score
        let key = if score.is_nan() { f64::INFINITY } else { score };
        best = match best {
            Some((b, bs)) if bs < key || (bs == key && b <= speaker) => Some((b, bs)),
            _ => Some((speaker, key)),
        };
    }
    let (speaker_id, score) = best.ok_or_else(|| Error::Protocol("no candidate models".into()))?;
    Ok(Identification {
        speaker_id: speaker_id.to_string(),
        score,
        scores,
    })
}

/// Splits a `magic key=value ...` header line.
pub(crate) fn parse_header<'a>(line: &'a str, magic: &str, path: &Path) -> Result<BTreeMap<&'a str, &'a str>> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(magic) || tokens.next() != Some("v1") {
        return Err(Error::parse(path, 1, format!("expected `{magic} v1` header")));
    }
    tokens
        .map(|t| {
            t.split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("malformed header field {t:?}")))
        })
        .collect()
}

pub(crate) fn header_field<T: std::str::FromStr>(fields: &BTreeMap<&str, &str>, key: &str, path: &Path) -> Result<T> {
    fields
        .get(key)
        .ok_or_else(|| Error::parse(path, 1, format!("missing header field {key}")))?
        .parse()
        .map_err(|_| Error::parse(path, 1, format!("invalid value for {key}")))
}

pub(crate) fn parse_floats(line: &str, path: &Path, lineno: usize) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::parse(path, lineno, format!("{t:?}: {e}")))
        })
        .collect()
}

pub(crate) fn format_floats(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}
