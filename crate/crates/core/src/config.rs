//! Pipeline configuration: one TOML file with a section per subsystem.
//! Every field has a default matching the shipped simulation recipe, so a
//! config file only needs the overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attributes::AttributeConfig;
use crate::classifier::{ClassifierConfig, TrainSchedule};
use crate::cues::{Attribute, DiffMode, ThresholdTable};
use crate::error::{Error, Result};
use crate::room::RoomRanges;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Mixtures per split when `simulate` runs without an explicit count.
    pub train_count: usize,
    pub valid_count: usize,
    pub test_count: usize,
    /// Sources longer than this after trimming are excluded at ingestion.
    pub max_source_s: f64,
    /// Split whose attribute values fit the independent-cue quantizers.
    pub fit_split: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            train_count: 100,
            valid_count: 20,
            test_count: 20,
            max_source_s: 12.0,
            fit_split: "train".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    pub sir_db: [f64; 2],
}

impl Default for MixtureConfig {
    fn default() -> Self {
        MixtureConfig {
            sir_db: [-6.0, 6.0],
        }
    }
}

/// Threshold override entry in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdOverride {
    pub attribute: String,
    pub mode: DiffMode,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptsConfig {
    /// Drop similar/Same cues from prompts.
    pub filter_similar: bool,
    /// Cue representations to generate prompts for.
    pub kinds: Vec<String>,
    pub verbs: Vec<String>,
    pub template_file: Option<PathBuf>,
}

impl Default for PromptsConfig {
    fn default() -> Self {
        PromptsConfig {
            filter_similar: true,
            kinds: vec!["relative".into()],
            verbs: vec!["extract".into(), "separate".into(), "isolate".into()],
            template_file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    /// "oracle" or "store".
    pub kind: String,
    /// Embedding dimension for the oracle provider.
    pub dimension: usize,
    pub noise_sigma: f64,
    pub audio_store: Option<PathBuf>,
    pub text_store: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: "oracle".into(),
            dimension: 64,
            noise_sigma: 0.0,
            audio_store: None,
            text_store: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeparationConfig {
    /// Per-channel signal-to-leak ratio for the oracle separator; perfect
    /// separation when absent.
    pub leak_db: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub attributes: AttributeConfig,
    pub room: RoomRanges,
    pub mixture: MixtureConfig,
    /// Table-level threshold overrides; unlisted attributes keep defaults.
    pub thresholds: Vec<ThresholdOverride>,
    pub prompts: PromptsConfig,
    pub provider: ProviderConfig,
    pub classifier: ClassifierConfig,
    pub training: TrainSchedule,
    pub separation: SeparationConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
        let config: PipelineConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config {
            field: "config".into(),
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let range_ok = |r: [f64; 2]| r[0] < r[1];
        let check = |name: &str, ok: bool, reason: String| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config {
                    field: name.into(),
                    reason,
                })
            }
        };
        check(
            "room.length_m",
            range_ok(self.room.length_m),
            format!("degenerate range {:?}", self.room.length_m),
        )?;
        check(
            "room.width_m",
            range_ok(self.room.width_m),
            format!("degenerate range {:?}", self.room.width_m),
        )?;
        check(
            "room.height_m",
            range_ok(self.room.height_m),
            format!("degenerate range {:?}", self.room.height_m),
        )?;
        check(
            "room.rt60_s",
            range_ok(self.room.rt60_s) && self.room.rt60_s[0] > 0.0,
            format!("degenerate range {:?}", self.room.rt60_s),
        )?;
        check(
            "mixture.sir_db",
            range_ok(self.mixture.sir_db),
            format!("degenerate range {:?}", self.mixture.sir_db),
        )?;
        check(
            "attributes.f0 range",
            self.attributes.f0_min_hz < self.attributes.f0_max_hz,
            format!(
                "f0_min {} must be below f0_max {}",
                self.attributes.f0_min_hz, self.attributes.f0_max_hz
            ),
        )?;
        check(
            "dataset.max_source_s",
            self.dataset.max_source_s > 0.0,
            "must be positive".into(),
        )?;
        self.classifier.validate()?;
        check(
            "provider.kind",
            self.provider.kind == "oracle" || self.provider.kind == "store",
            format!("unknown provider kind `{}`", self.provider.kind),
        )?;
        check(
            "provider.noise_sigma",
            self.provider.noise_sigma >= 0.0,
            "must be non-negative".into(),
        )?;
        for kind in &self.prompts.kinds {
            check(
                "prompts.kinds",
                kind == "relative" || kind == "independent",
                format!("unknown cue kind `{kind}`"),
            )?;
        }
        for t in &self.thresholds {
            Attribute::from_id(&t.attribute)?;
            check(
                "thresholds.theta",
                t.theta > 0.0,
                format!("{}: theta must be positive", t.attribute),
            )?;
        }
        Ok(())
    }

    /// Shipped defaults plus any config-file overrides.
    pub fn threshold_table(&self) -> Result<ThresholdTable> {
        let mut table = ThresholdTable::default();
        for t in &self.thresholds {
            table.set(Attribute::from_id(&t.attribute)?, t.mode, t.theta)?;
        }
        Ok(table)
    }

    /// Stable hash of the effective configuration.
    pub fn content_hash(&self) -> Result<String> {
        Ok(format!(
            "{:016x}",
            crate::rng::stable_hash(&self.to_toml()?)
        ))
    }
}
