//! Relative and independent cue labeling for attribute pairs.
//!
//! A relative cue compares the target speaker's attribute against the
//! interfering speaker's (difference or percentage difference against a
//! per-attribute threshold); an independent cue quantizes a single speaker's
//! attribute into equal-frequency bins fitted on training data.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attributes::{AttributeVector, Language};
use crate::error::{Error, Result};

/// The twelve speech attributes cues are derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    MeanF0,
    F0Span,
    Age,
    SpeakingDuration,
    SpeakingRate,
    RmsEnergy,
    Distance,
    AppearanceTime,
    Language,
    Gender,
    Emotion,
    Transcription,
}

impl Attribute {
    pub const CONTINUOUS: [Attribute; 8] = [
        Attribute::MeanF0,
        Attribute::F0Span,
        Attribute::Age,
        Attribute::SpeakingDuration,
        Attribute::SpeakingRate,
        Attribute::RmsEnergy,
        Attribute::Distance,
        Attribute::AppearanceTime,
    ];

    pub const DISCRETE: [Attribute; 4] = [
        Attribute::Language,
        Attribute::Gender,
        Attribute::Emotion,
        Attribute::Transcription,
    ];

    pub const ALL: [Attribute; 12] = [
        Attribute::MeanF0,
        Attribute::F0Span,
        Attribute::Age,
        Attribute::SpeakingDuration,
        Attribute::SpeakingRate,
        Attribute::RmsEnergy,
        Attribute::Distance,
        Attribute::AppearanceTime,
        Attribute::Language,
        Attribute::Gender,
        Attribute::Emotion,
        Attribute::Transcription,
    ];

    pub fn is_continuous(self) -> bool {
        Attribute::CONTINUOUS.contains(&self)
    }

    /// Identifier used in configs and serialized records.
    pub fn id(self) -> &'static str {
        match self {
            Attribute::MeanF0 => "mean_f0",
            Attribute::F0Span => "f0_span",
            Attribute::Age => "age",
            Attribute::SpeakingDuration => "speaking_duration",
            Attribute::SpeakingRate => "speaking_rate",
            Attribute::RmsEnergy => "rms_energy",
            Attribute::Distance => "distance",
            Attribute::AppearanceTime => "appearance_time",
            Attribute::Language => "language",
            Attribute::Gender => "gender",
            Attribute::Emotion => "emotion",
            Attribute::Transcription => "transcription",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.id() == id)
            .ok_or_else(|| Error::UnknownAttribute(id.to_string()))
    }

    /// Category names for the relative "greater" / "lesser" sides.
    pub fn relative_names(self) -> Option<(&'static str, &'static str)> {
        match self {
            Attribute::MeanF0 => Some(("higher", "lower")),
            Attribute::F0Span => Some(("wider", "narrower")),
            Attribute::Age => Some(("older", "younger")),
            Attribute::SpeakingDuration => Some(("longer", "shorter")),
            Attribute::SpeakingRate => Some(("faster", "slower")),
            Attribute::RmsEnergy => Some(("louder", "quieter")),
            Attribute::Distance => Some(("farther", "nearer")),
            Attribute::AppearanceTime => Some(("later", "earlier")),
            _ => None,
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// How a continuous attribute pair is differenced before thresholding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffMode {
    /// Plain difference, threshold in the attribute's own unit.
    Direct,
    /// Percentage difference relative to the smaller value, threshold in %.
    Percent,
}

/// Per-attribute comparison thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTable {
    entries: BTreeMap<Attribute, ThresholdEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    pub mode: DiffMode,
    pub theta: f64,
}

impl Default for ThresholdTable {
    /// Shipped defaults: 3 dB energy, 0.5 m distance, 10 years age, 6% pitch,
    /// 25% pitch span, 15% rate, 15% duration, 0.1 s appearance time.
    fn default() -> Self {
        use Attribute::*;
        use DiffMode::*;
        let mut entries = BTreeMap::new();
        let mut put = |a, mode, theta| {
            entries.insert(a, ThresholdEntry { mode, theta });
        };
        put(RmsEnergy, Direct, 3.0);
        put(Distance, Direct, 0.5);
        put(Age, Direct, 10.0);
        put(MeanF0, Percent, 6.0);
        put(F0Span, Percent, 25.0);
        put(SpeakingRate, Percent, 15.0);
        put(SpeakingDuration, Percent, 15.0);
        put(AppearanceTime, Direct, 0.1);
        ThresholdTable { entries }
    }
}

impl ThresholdTable {
    pub fn get(&self, attribute: Attribute) -> Result<ThresholdEntry> {
        self.entries
            .get(&attribute)
            .copied()
            .ok_or_else(|| Error::UnknownAttribute(format!("no threshold for {}", attribute.id())))
    }

    pub fn set(&mut self, attribute: Attribute, mode: DiffMode, theta: f64) -> Result<()> {
        if theta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "threshold for {} must be positive",
                attribute.id()
            )));
        }
        self.entries
            .insert(attribute, ThresholdEntry { mode, theta });
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = (Attribute, ThresholdEntry)> + '_ {
        self.entries.iter().map(|(a, e)| (*a, *e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Whether a cue compares the pair or describes the target alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Relative,
    Independent,
}

/// Where the cue's evidence came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueSource {
    /// Derived from the target speaker alone.
    Target,
    /// Derived from the target/interference pair.
    Pair,
}

/// One cue label for one attribute of a target/interference pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueLabel {
    pub attribute: Attribute,
    pub kind: CueKind,
    pub category: String,
    /// The difference value used for relative continuous cues (direct units
    /// or percent, per the attribute's mode).
    pub delta: Option<f64>,
    pub source: CueSource,
}

impl CueLabel {
    pub fn is_similar_or_same(&self) -> bool {
        self.category == "similar" || self.category == "Same"
    }
}

/// Direct difference between target and interference values.
pub fn direct_diff(x_tar: f64, x_inf: f64) -> f64 {
    x_tar - x_inf
}

/// Percentage difference relative to the smaller of the two values.
pub fn percent_diff(x_tar: f64, x_inf: f64) -> Result<f64> {
    if x_tar <= 0.0 || x_inf <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "percent_diff requires positive inputs, got ({x_tar}, {x_inf})"
        )));
    }
    Ok((x_tar - x_inf) / x_tar.min(x_inf) * 100.0)
}

/// Relative cue for one continuous attribute: the greater-side name when the
/// difference exceeds the threshold, the lesser-side name below the negated
/// threshold, and "similar" inside the band (boundary inclusive).
pub fn relative_category(
    attribute: Attribute,
    x_tar: f64,
    x_inf: f64,
    thresholds: &ThresholdTable,
) -> Result<CueLabel> {
    let (greater, lesser) = attribute.relative_names().ok_or_else(|| {
        Error::UnknownAttribute(format!("{} has no relative mode", attribute.id()))
    })?;
    let entry = thresholds.get(attribute)?;
    let delta = match entry.mode {
        DiffMode::Direct => direct_diff(x_tar, x_inf),
        DiffMode::Percent => percent_diff(x_tar, x_inf)?,
    };
    let category = if delta > entry.theta {
        greater
    } else if delta < -entry.theta {
        lesser
    } else {
        "similar"
    };
    Ok(CueLabel {
        attribute,
        kind: CueKind::Relative,
        category: category.to_string(),
        delta: Some(delta),
        source: CueSource::Pair,
    })
}

/// Relative cue for a discrete attribute: "Same" when the categories match,
/// otherwise the target's own category.
pub fn discrete_relative(attribute: Attribute, d_tar: &str, d_inf: &str) -> Result<CueLabel> {
    if d_tar.is_empty() || d_inf.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "empty category for {}",
            attribute.id()
        )));
    }
    let category = if d_tar == d_inf { "Same" } else { d_tar };
    Ok(CueLabel {
        attribute,
        kind: CueKind::Relative,
        category: category.to_string(),
        delta: None,
        source: CueSource::Pair,
    })
}

/// Equal-frequency quantizer into 2 or 3 named bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentQuantizer {
    pub attribute: Attribute,
    /// Strictly increasing bin boundaries; values on a boundary go up.
    pub breakpoints: Vec<f64>,
    pub names: Vec<String>,
}

impl IndependentQuantizer {
    /// Fit breakpoints at the empirical quantiles of `training_values`
    /// (midpoint between the order statistics straddling each cut).
    pub fn fit(attribute: Attribute, training_values: &[f64], names: &[&str]) -> Result<Self> {
        let k = names.len();
        if !(2..=3).contains(&k) {
            return Err(Error::Quantizer(format!(
                "{}: bin count must be 2 or 3, got {k}",
                attribute.id()
            )));
        }
        let mut sorted: Vec<f64> = training_values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < k {
            return Err(Error::Quantizer(format!(
                "{}: need at least {k} distinct values, got {}",
                attribute.id(),
                distinct.len()
            )));
        }
        let n = sorted.len();
        let mut breakpoints = Vec::with_capacity(k - 1);
        for cut in 1..k {
            let idx = (n * cut) / k;
            let bp = 0.5 * (sorted[idx - 1] + sorted[idx]);
            breakpoints.push(bp);
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Quantizer(format!(
                "{}: degenerate breakpoints {breakpoints:?}",
                attribute.id()
            )));
        }
        Ok(IndependentQuantizer {
            attribute,
            breakpoints,
            names: names.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Zero-based bin index for a value; boundary values go to the upper bin.
    pub fn bin(&self, x: f64) -> usize {
        self.breakpoints.iter().filter(|&&bp| x >= bp).count()
    }

    pub fn quantize(&self, x: f64) -> CueLabel {
        CueLabel {
            attribute: self.attribute,
            kind: CueKind::Independent,
            category: self.names[self.bin(x)].clone(),
            delta: None,
            source: CueSource::Target,
        }
    }
}

/// Fitted quantizers keyed by attribute; serialized next to the dataset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSet {
    quantizers: BTreeMap<Attribute, IndependentQuantizer>,
}

impl QuantizerSet {
    pub fn insert(&mut self, q: IndependentQuantizer) {
        self.quantizers.insert(q.attribute, q);
    }

    pub fn get(&self, attribute: Attribute) -> Option<&IndependentQuantizer> {
        self.quantizers.get(&attribute)
    }

    pub fn is_empty(&self) -> bool {
        self.quantizers.is_empty()
    }

    pub fn attributes(&self) -> impl Iterator<Item = Attribute> + '_ {
        self.quantizers.keys().copied()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io_at(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Bin names used when fitting quantizers for the attributes evaluated with
/// independent cues.
pub fn default_bin_names(attribute: Attribute) -> Option<&'static [&'static str]> {
    match attribute {
        Attribute::MeanF0 => Some(&["low", "normal", "high"]),
        Attribute::F0Span => Some(&["narrow", "normal", "wide"]),
        Attribute::RmsEnergy => Some(&["quiet", "normal", "loud"]),
        Attribute::Distance => Some(&["near", "far"]),
        Attribute::SpeakingRate => Some(&["slow", "normal", "fast"]),
        Attribute::SpeakingDuration => Some(&["short", "long"]),
        _ => None,
    }
}

fn language_display(language: Language) -> &'static str {
    match language {
        Language::En => "English",
        Language::Fr => "French",
        Language::De => "German",
        Language::Es => "Spanish",
        Language::Zh => "Chinese",
    }
}

fn discrete_value(av: &AttributeVector, attribute: Attribute) -> Option<String> {
    match attribute {
        Attribute::Language => av.language.map(|l| language_display(l).to_string()),
        Attribute::Gender => av.gender.map(|g| g.to_string()),
        Attribute::Emotion => av.emotion.clone(),
        Attribute::Transcription => av.transcription.clone(),
        _ => None,
    }
}

/// All cue labels for a target/interference attribute pair: one relative label
/// per attribute available on both sides, plus independent labels for
/// target-side attributes (quantized for continuous ones). Attributes whose
/// values cannot be differenced under their mode (e.g. a zero span in percent
/// mode) are skipped.
pub fn cue_labels_for_pair(
    av_tar: &AttributeVector,
    av_inf: &AttributeVector,
    thresholds: &ThresholdTable,
    quantizers: &QuantizerSet,
) -> Vec<CueLabel> {
    let mut labels = Vec::new();
    for attribute in Attribute::CONTINUOUS {
        let (tar, inf) = (
            av_tar.continuous_value(attribute),
            av_inf.continuous_value(attribute),
        );
        if let (Some(t), Some(i)) = (tar, inf) {
            if let Ok(label) = relative_category(attribute, t, i, thresholds) {
                labels.push(label);
            }
        }
        if let (Some(t), Some(q)) = (tar, quantizers.get(attribute)) {
            labels.push(q.quantize(t));
        }
    }
    for attribute in Attribute::DISCRETE {
        let (tar, inf) = (
            discrete_value(av_tar, attribute),
            discrete_value(av_inf, attribute),
        );
        if let (Some(t), Some(i)) = (&tar, &inf) {
            if let Ok(label) = discrete_relative(attribute, t, i) {
                labels.push(label);
            }
        }
        if let Some(t) = tar {
            labels.push(CueLabel {
                attribute,
                kind: CueKind::Independent,
                category: t,
                delta: None,
                source: CueSource::Target,
            });
        }
    }
    labels
}
