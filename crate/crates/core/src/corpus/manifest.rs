use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{read_wav, validate_label, Language, Split, Utterance};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub speaker_id: String,
    pub language: Language,
    pub split: Split,
    pub task_id: String,
}

/// Corpus listing, one entry per audio file.
///
/// Relative paths are resolved against `base_dir`, the directory holding the
/// manifest file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
    pub base_dir: PathBuf,
}

impl Manifest {
    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        if entry.path.is_absolute() {
            entry.path.clone()
        } else {
            self.base_dir.join(&entry.path)
        }
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text, path)?;
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

/// Parses manifest text. `origin` is only used in error messages.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<Manifest> {
    let mut entries = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        }
        let at_line = |e: Error| Error::parse(origin, lineno, e.to_string());
        if fields[0].is_empty() {
            return Err(Error::parse(origin, lineno, "empty path"));
        }
        validate_label("speaker_id", fields[1]).map_err(at_line)?;
        validate_label("task_id", fields[4]).map_err(at_line)?;
        entries.push(ManifestEntry {
            path: PathBuf::from(fields[0]),
            speaker_id: fields[1].to_string(),
            language: fields[2].parse().map_err(at_line)?,
            split: fields[3].parse().map_err(at_line)?,
            task_id: fields[4].to_string(),
        });
    }
    Ok(Manifest {
        entries,
        base_dir: PathBuf::new(),
    })
}

pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("# path\tspeaker_id\tlanguage\tsplit\ttask_id\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.path.display(),
            e.speaker_id,
            e.language,
            e.split,
            e.task_id
        );
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads every WAV referenced by the manifest, in manifest order.
pub fn load_utterances(manifest: &Manifest) -> Result<Vec<Utterance>> {
    manifest
        .entries
        .par_iter()
        .map(|entry| {
            let audio = read_wav(manifest.resolve(entry))?;
            Ok(Utterance {
                samples: audio.samples,
                sample_rate: audio.sample_rate,
                speaker_id: entry.speaker_id.clone(),
                language: entry.language,
                split: entry.split,
                task_id: entry.task_id.clone(),
            })
        })
        .collect()
}
