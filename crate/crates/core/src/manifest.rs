//! JSON-Lines utterance manifests.
//!
//! One utterance per line with the fields `id`, `path`, `speaker`, `language`,
//! `gender`, and optionally `age`, `emotion`, `transcription`, `words` (an
//! array of `[word, start, end]`), and `split`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attributes::{Gender, Language, UtteranceMeta, WordBoundary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    path: String,
    speaker: String,
    language: Language,
    gender: Gender,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    age: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    emotion: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcription: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    words: Option<Vec<(String, f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<String>,
}

/// One manifest row: utterance metadata plus where its audio lives.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub meta: UtteranceMeta,
    pub wav_path: PathBuf,
    pub split: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let mut entries = Vec::new();
        let mut seen = BTreeSet::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: ManifestLine = serde_json::from_str(line)
                .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            if !seen.insert(row.id.clone()) {
                return Err(Error::Manifest(format!(
                    "duplicate utterance id `{}`",
                    row.id
                )));
            }
            let meta = UtteranceMeta {
                utterance_id: row.id,
                speaker_id: row.speaker,
                language: row.language,
                gender: row.gender,
                age_years: row.age,
                emotion: row.emotion,
                transcription: row.transcription,
                word_boundaries: row.words.map(|ws| {
                    ws.into_iter()
                        .map(|(word, start_s, end_s)| WordBoundary {
                            word,
                            start_s,
                            end_s,
                        })
                        .collect()
                }),
            };
            meta.validate()?;
            let wav_path = {
                let p = PathBuf::from(&row.path);
                if p.is_absolute() {
                    p
                } else {
                    base.join(p)
                }
            };
            entries.push(ManifestEntry {
                meta,
                wav_path,
                split: row.split,
            });
        }
        Ok(Manifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for e in &self.entries {
            let row = ManifestLine {
                id: e.meta.utterance_id.clone(),
                path: e.wav_path.to_string_lossy().into_owned(),
                speaker: e.meta.speaker_id.clone(),
                language: e.meta.language,
                gender: e.meta.gender,
                age: e.meta.age_years,
                emotion: e.meta.emotion.clone(),
                transcription: e.meta.transcription.clone(),
                words: e.meta.word_boundaries.as_ref().map(|ws| {
                    ws.iter()
                        .map(|w| (w.word.clone(), w.start_s, w.end_s))
                        .collect()
                }),
                split: e.split.clone(),
            };
            out.push_str(&serde_json::to_string(&row)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
    }

    /// Entries carrying the given split tag (all entries when the manifest is
    /// untagged and `split` is empty).
    pub fn split(&self, split: &str) -> Vec<&ManifestEntry> {
        if split.is_empty() {
            self.entries.iter().collect()
        } else {
            self.entries
                .iter()
                .filter(|e| e.split.as_deref() == Some(split))
                .collect()
        }
    }

    /// Ensure no speaker or utterance appears in more than one split.
    pub fn validate_disjoint_splits(&self) -> Result<()> {
        let mut speaker_split: BTreeMap<&str, &str> = BTreeMap::new();
        for e in &self.entries {
            let Some(split) = e.split.as_deref() else {
                continue;
            };
            match speaker_split.get(e.meta.speaker_id.as_str()) {
                Some(&prev) if prev != split => {
                    return Err(Error::Manifest(format!(
                        "speaker `{}` appears in splits `{prev}` and `{split}`",
                        e.meta.speaker_id
                    )));
                }
                _ => {
                    speaker_split.insert(&e.meta.speaker_id, split);
                }
            }
        }
        Ok(())
    }
}
