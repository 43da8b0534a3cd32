//! Verbalizing cue labels into text prompts.
//!
//! Three configurations per mixture: one prompt per cue, a random subset of
//! cues, and all cues together. Prompt metadata records exactly which cues a
//! prompt mentions, so nothing downstream ever parses the English text.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cues::{Attribute, CueKind, CueLabel};
use crate::error::{Error, Result};
use crate::rng::stable_hash;

const DEFAULT_TEMPLATES: &str = include_str!("templates_default.tsv");
const DEFAULT_VERBS: [&str; 3] = ["extract", "separate", "isolate"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptConfig {
    Individual,
    Random,
    All,
}

/// One generated prompt and the cues it mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub text: String,
    pub config: PromptConfig,
    pub kind: CueKind,
    pub cue_types: Vec<Attribute>,
    pub categories: Vec<String>,
    pub target_index: u8,
}

/// Phrase table: exact (attribute, category) entries plus per-attribute
/// wildcard entries whose `{}` receives the category text.
#[derive(Debug, Clone)]
pub struct PromptTemplates {
    exact: BTreeMap<(Attribute, String), String>,
    wildcard: BTreeMap<Attribute, String>,
    verbs: Vec<String>,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates::parse(DEFAULT_TEMPLATES).expect("embedded templates parse")
    }
}

impl PromptTemplates {
    pub fn parse(text: &str) -> Result<Self> {
        let mut exact = BTreeMap::new();
        let mut wildcard = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (attr, category, phrase) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(c), Some(p)) => (a, c, p),
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "template line {} needs attribute<TAB>category<TAB>phrase",
                        lineno + 1
                    )))
                }
            };
            let attribute = Attribute::from_id(attr)?;
            if category == "*" {
                wildcard.insert(attribute, phrase.to_string());
            } else {
                exact.insert((attribute, category.to_string()), phrase.to_string());
            }
        }
        Ok(PromptTemplates {
            exact,
            wildcard,
            verbs: DEFAULT_VERBS.iter().map(|v| v.to_string()).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        PromptTemplates::parse(&text)
    }

    pub fn with_verbs(mut self, verbs: &[String]) -> Self {
        if !verbs.is_empty() {
            self.verbs = verbs.to_vec();
        }
        self
    }

    fn phrase(&self, label: &CueLabel) -> Result<String> {
        if let Some(p) = self.exact.get(&(label.attribute, label.category.clone())) {
            return Ok(p.clone());
        }
        if let Some(p) = self.wildcard.get(&label.attribute) {
            return Ok(p.replace("{}", &label.category));
        }
        Err(Error::UnknownAttribute(format!(
            "no template for {} / {}",
            label.attribute.id(),
            label.category
        )))
    }
}

/// Qualifier phrase for one cue label (the gender subject phrase for gender
/// labels).
pub fn verbalize_cue(label: &CueLabel, templates: &PromptTemplates) -> Result<String> {
    templates.phrase(label)
}

/// Which labels a prompt pass may verbalize: one cue kind at a time,
/// optionally dropping the non-discriminative similar/Same categories.
pub fn eligible_labels(labels: &[CueLabel], kind: CueKind, filter_similar: bool) -> Vec<&CueLabel> {
    labels
        .iter()
        .filter(|l| l.kind == kind)
        .filter(|l| !filter_similar || !l.is_similar_or_same())
        .collect()
}

fn assemble(
    mixture_id: &str,
    labels: &[&CueLabel],
    templates: &PromptTemplates,
    config: PromptConfig,
    kind: CueKind,
    target_index: u8,
) -> Result<PromptRecord> {
    let cue_key: String = labels
        .iter()
        .map(|l| l.attribute.id())
        .collect::<Vec<_>>()
        .join("+");
    let verb_idx =
        (stable_hash(&format!("{mixture_id}|{cue_key}")) % templates.verbs.len() as u64) as usize;
    let verb = &templates.verbs[verb_idx];

    let mut subject = "the speaker".to_string();
    let mut qualifiers = Vec::new();
    for label in labels {
        let phrase = templates.phrase(label)?;
        if label.attribute == Attribute::Gender && !label.is_similar_or_same() {
            subject = phrase;
        } else {
            qualifiers.push(phrase);
        }
    }
    let mut text = format!("Please {verb} {subject}");
    match qualifiers.len() {
        0 => {}
        1 => {
            text.push(' ');
            text.push_str(&qualifiers[0]);
        }
        _ => {
            let head = &qualifiers[..qualifiers.len() - 1];
            text.push(' ');
            text.push_str(&head.join(", "));
            text.push_str(" and ");
            text.push_str(&qualifiers[qualifiers.len() - 1]);
        }
    }
    text.push('.');

    Ok(PromptRecord {
        text,
        config,
        kind,
        cue_types: labels.iter().map(|l| l.attribute).collect(),
        categories: labels.iter().map(|l| l.category.clone()).collect(),
        target_index,
    })
}

/// One prompt per eligible cue.
pub fn generate_individual(
    mixture_id: &str,
    labels: &[CueLabel],
    templates: &PromptTemplates,
    kind: CueKind,
    filter_similar: bool,
    target_index: u8,
) -> Result<Vec<PromptRecord>> {
    eligible_labels(labels, kind, filter_similar)
        .into_iter()
        .map(|l| {
            assemble(
                mixture_id,
                &[l],
                templates,
                PromptConfig::Individual,
                kind,
                target_index,
            )
        })
        .collect()
}

/// A uniformly random subset of 2 to n-1 cues; absent unless more than three
/// cues are available (a three-cue mixture would force the subset size).
pub fn generate_random(
    mixture_id: &str,
    labels: &[CueLabel],
    templates: &PromptTemplates,
    kind: CueKind,
    filter_similar: bool,
    target_index: u8,
    rng: &mut ChaCha8Rng,
) -> Result<Option<PromptRecord>> {
    let eligible = eligible_labels(labels, kind, filter_similar);
    let n = eligible.len();
    if n <= 3 {
        return Ok(None);
    }
    let size = rng.random_range(2..=n - 1);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(rng);
    let mut chosen: Vec<usize> = indices.into_iter().take(size).collect();
    chosen.sort_unstable();
    let subset: Vec<&CueLabel> = chosen.into_iter().map(|i| eligible[i]).collect();
    Ok(Some(assemble(
        mixture_id,
        &subset,
        templates,
        PromptConfig::Random,
        kind,
        target_index,
    )?))
}

/// A single prompt covering every eligible cue; absent below two cues.
pub fn generate_all(
    mixture_id: &str,
    labels: &[CueLabel],
    templates: &PromptTemplates,
    kind: CueKind,
    filter_similar: bool,
    target_index: u8,
) -> Result<Option<PromptRecord>> {
    let eligible = eligible_labels(labels, kind, filter_similar);
    if eligible.len() < 2 {
        return Ok(None);
    }
    Ok(Some(assemble(
        mixture_id,
        &eligible,
        templates,
        PromptConfig::All,
        kind,
        target_index,
    )?))
}
