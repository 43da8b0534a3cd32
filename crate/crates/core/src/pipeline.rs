//! End-to-end dataset pipeline and its on-disk layout.
//!
//! A dataset directory holds `index.json`, one subdirectory per mixture with
//! `mixture.wav`, `ch1.wav`, `ch2.wav`, and `meta.json`, plus
//! `thresholds.json` / `quantizers.json` once cues have been labeled. Stages
//! are idempotent: re-running one rewrites the same bytes for the same seed.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::prelude::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{CueType, EvalRow};
use crate::attributes::{extract_all, AttributeVector, PlacementContext, UtteranceMeta};
use crate::classifier::{
    classify_embeddings, make_label, Classification, ClassifierConfig, ProjectionHead, TrainSample,
};
use crate::config::PipelineConfig;
use crate::cues::{
    cue_labels_for_pair, default_bin_names, Attribute, CueKind, CueLabel, IndependentQuantizer,
    QuantizerSet, ThresholdTable,
};
use crate::embeddings::{
    ChannelQuery, EmbeddingProvider, EmbeddingStore, OracleProvider, PromptQuery, StoreProvider,
};
use crate::error::{Error, Result};
use crate::manifest::{Manifest, ManifestEntry};
use crate::mixer::{
    oracle_separate, plan_overlap, render_mixture, trim_silence, MixturePlan, RenderedMixture,
};
use crate::prompts::{
    generate_all, generate_individual, generate_random, PromptConfig, PromptRecord, PromptTemplates,
};
use crate::rng::{stable_hash, stream_rng};
use crate::room::{sample_placement, sample_room};
use crate::wave::{read_wav, si_sdr, write_wav, WaveBuffer};

/// Per-mixture metadata file contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureMeta {
    pub id: String,
    pub split: String,
    pub plan: MixturePlan,
    pub norm_gain: f64,
    pub attributes_tar: AttributeVector,
    pub attributes_inf: AttributeVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cue_labels: Option<Vec<CueLabel>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompts: Option<Vec<PromptRecord>>,
    pub mixture_wav: String,
    pub ch1_wav: String,
    pub ch2_wav: String,
}

impl MixtureMeta {
    /// Attribute vector of a channel (1 or 2).
    pub fn attributes_of_channel(&self, channel: u8) -> &AttributeVector {
        if channel == self.plan.target_index {
            &self.attributes_tar
        } else {
            &self.attributes_inf
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub split: String,
    pub dir: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub seed: u64,
    pub config_hash: String,
    pub mixtures: Vec<IndexEntry>,
}

/// Handle to a dataset directory.
pub struct Dataset {
    pub dir: PathBuf,
    pub index: DatasetIndex,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let index_path = dir.join("index.json");
        let text =
            std::fs::read_to_string(&index_path).map_err(|e| Error::io_at(&index_path, e))?;
        Ok(Dataset {
            dir: dir.to_path_buf(),
            index: serde_json::from_str(&text)?,
        })
    }

    pub fn meta_path(&self, entry: &IndexEntry) -> PathBuf {
        self.dir.join(&entry.dir).join("meta.json")
    }

    pub fn load_meta(&self, entry: &IndexEntry) -> Result<MixtureMeta> {
        let path = self.meta_path(entry);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io_at(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save_meta(&self, entry: &IndexEntry, meta: &MixtureMeta) -> Result<()> {
        let path = self.meta_path(entry);
        let text = serde_json::to_string_pretty(meta)?;
        std::fs::write(&path, text).map_err(|e| Error::io_at(&path, e))
    }

    pub fn entries(&self, split: &str) -> Vec<&IndexEntry> {
        self.index
            .mixtures
            .iter()
            .filter(|e| split.is_empty() || e.split == split)
            .collect()
    }

    /// Stable hash of the index file, stamped into reports.
    pub fn content_hash(&self) -> Result<String> {
        let path = self.dir.join("index.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io_at(&path, e))?;
        Ok(format!("{:016x}", stable_hash(&text)))
    }

    pub fn thresholds(&self) -> Result<ThresholdTable> {
        ThresholdTable::load(&self.dir.join("thresholds.json"))
    }

    pub fn quantizers(&self) -> Result<QuantizerSet> {
        QuantizerSet::load(&self.dir.join("quantizers.json"))
    }

    pub fn load_rendered(&self, meta: &MixtureMeta) -> Result<RenderedMixture> {
        let dir = self.dir.join(meta.id.as_str());
        Ok(RenderedMixture {
            plan: meta.plan.clone(),
            mixture: read_wav(&dir.join(&meta.mixture_wav))?,
            rev1: read_wav(&dir.join(&meta.ch1_wav))?,
            rev2: read_wav(&dir.join(&meta.ch2_wav))?,
            norm_gain: meta.norm_gain,
        })
    }
}

/// Run a closure inside a rayon pool of the requested size (0 = default).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> T {
    if jobs == 0 {
        f()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(f)
    }
}

struct SourcePool {
    /// Speaker ids in sorted order, each with its usable utterances.
    speakers: Vec<(String, Vec<ManifestEntry>)>,
}

impl SourcePool {
    fn build(manifest: &Manifest, split: &str, max_source_s: f64) -> Result<Self> {
        manifest.validate_disjoint_splits()?;
        let mut by_speaker: std::collections::BTreeMap<String, Vec<ManifestEntry>> =
            std::collections::BTreeMap::new();
        for entry in manifest.split(split) {
            // Cheap duration check from the WAV header.
            let reader = hound::WavReader::open(&entry.wav_path)
                .map_err(|e| Error::Manifest(format!("{}: {e}", entry.wav_path.display())))?;
            let duration_s =
                f64::from(reader.duration()) / f64::from(reader.spec().sample_rate.max(1));
            if duration_s > max_source_s {
                continue;
            }
            by_speaker
                .entry(entry.meta.speaker_id.clone())
                .or_default()
                .push((*entry).clone());
        }
        let speakers: Vec<(String, Vec<ManifestEntry>)> = by_speaker.into_iter().collect();
        if speakers.len() < 2 {
            return Err(Error::Dataset(format!(
                "split `{split}` has {} usable speakers, need at least 2",
                speakers.len()
            )));
        }
        Ok(SourcePool { speakers })
    }
}

fn mixture_id(ordinal: usize) -> String {
    format!("mix_{ordinal:06}")
}

/// Simulate `count` mixtures for one split into `out_dir`.
///
/// Fully deterministic in `(config.seed, split, ordinal)`; mixtures are
/// rendered in parallel.
pub fn simulate(
    manifest: &Manifest,
    config: &PipelineConfig,
    split: &str,
    count: usize,
    out_dir: &Path,
    jobs: usize,
) -> Result<Dataset> {
    let pool = SourcePool::build(manifest, split, config.dataset.max_source_s)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io_at(out_dir, e))?;

    let split_label = if split.is_empty() { "all" } else { split };
    let entries: Vec<IndexEntry> = (0..count)
        .map(|ordinal| IndexEntry {
            id: mixture_id(ordinal),
            split: split_label.to_string(),
            dir: mixture_id(ordinal),
        })
        .collect();

    with_jobs(jobs, || {
        entries
            .par_iter()
            .enumerate()
            .try_for_each(|(ordinal, entry)| -> Result<()> {
                let meta = build_one_mixture(&pool, config, split_label, ordinal)?;
                let dir = out_dir.join(&entry.dir);
                std::fs::create_dir_all(&dir).map_err(|e| Error::io_at(&dir, e))?;
                write_mixture(&dir, &meta.0, &meta.1)?;
                Ok(())
            })
    })?;

    let index = DatasetIndex {
        seed: config.seed,
        config_hash: config.content_hash()?,
        mixtures: entries,
    };
    let index_path = out_dir.join("index.json");
    std::fs::write(&index_path, serde_json::to_string_pretty(&index)?)
        .map_err(|e| Error::io_at(&index_path, e))?;
    Ok(Dataset {
        dir: out_dir.to_path_buf(),
        index,
    })
}

fn write_mixture(dir: &Path, meta: &MixtureMeta, rendered: &RenderedMixture) -> Result<()> {
    write_wav(&dir.join(&meta.mixture_wav), &rendered.mixture)?;
    write_wav(&dir.join(&meta.ch1_wav), &rendered.rev1)?;
    write_wav(&dir.join(&meta.ch2_wav), &rendered.rev2)?;
    let path = dir.join("meta.json");
    std::fs::write(&path, serde_json::to_string_pretty(meta)?).map_err(|e| Error::io_at(&path, e))
}

fn build_one_mixture(
    pool: &SourcePool,
    config: &PipelineConfig,
    split: &str,
    ordinal: usize,
) -> Result<(MixtureMeta, RenderedMixture)> {
    let id = mixture_id(ordinal);
    let mut rng = stream_rng(config.seed, &format!("mixture|{split}"), ordinal as u64);

    // Two distinct speakers, one utterance each.
    let speaker_count = pool.speakers.len();
    let i1 = rng.random_range(0..speaker_count);
    let mut i2 = rng.random_range(0..speaker_count - 1);
    if i2 >= i1 {
        i2 += 1;
    }
    let entry1 = pool.speakers[i1].1.choose(&mut rng).expect("non-empty");
    let entry2 = pool.speakers[i2].1.choose(&mut rng).expect("non-empty");

    let raw1 = read_wav(&entry1.wav_path)?;
    let raw2 = read_wav(&entry2.wav_path)?;
    let trim1 = trim_silence(&raw1, &entry1.meta)?;
    let trim2 = trim_silence(&raw2, &entry2.meta)?;
    let meta1 = entry1.meta.rebased(trim1.start_s, trim1.end_s);
    let meta2 = entry2.meta.rebased(trim2.start_s, trim2.end_s);

    let (offset1_s, offset2_s, overlap_s, overlap_capped) = plan_overlap(
        trim1.buffer.duration_s(),
        trim2.buffer.duration_s(),
        &mut rng,
    )?;

    let room = sample_room(&mut rng, &config.room);
    let placement1 = sample_placement(&mut rng, &room, &config.room)?;
    let placement2 = sample_placement(&mut rng, &room, &config.room)?;
    let sir_db = rng.random_range(config.mixture.sir_db[0]..=config.mixture.sir_db[1]);
    let target_index: u8 = if rng.random_range(0..2u8) == 0 { 1 } else { 2 };

    let plan = MixturePlan {
        s1_id: entry1.meta.utterance_id.clone(),
        s2_id: entry2.meta.utterance_id.clone(),
        offset1_s,
        offset2_s,
        overlap_s,
        overlap_capped,
        target_index,
        sir_db,
        room,
        placement1,
        placement2,
        max_order: config.room.max_order,
        seed: config.seed,
    };
    let rendered = render_mixture(&plan, &trim1.buffer, &trim2.buffer)?;

    let av1 = extract_channel_attributes(
        &trim1.buffer,
        &meta1,
        &plan.placement1,
        offset1_s,
        &rendered.rev1,
        config,
    )?;
    let av2 = extract_channel_attributes(
        &trim2.buffer,
        &meta2,
        &plan.placement2,
        offset2_s,
        &rendered.rev2,
        config,
    )?;
    let (attributes_tar, attributes_inf) = if target_index == 1 {
        (av1, av2)
    } else {
        (av2, av1)
    };

    let meta = MixtureMeta {
        id: id.clone(),
        split: split.to_string(),
        plan,
        norm_gain: rendered.norm_gain,
        attributes_tar,
        attributes_inf,
        cue_labels: None,
        prompts: None,
        mixture_wav: "mixture.wav".into(),
        ch1_wav: "ch1.wav".into(),
        ch2_wav: "ch2.wav".into(),
    };
    Ok((meta, rendered))
}

fn extract_channel_attributes(
    clean: &WaveBuffer,
    meta: &UtteranceMeta,
    placement: &crate::room::SourcePlacement,
    offset_s: f64,
    reverberant: &WaveBuffer,
    config: &PipelineConfig,
) -> Result<AttributeVector> {
    let ctx = PlacementContext {
        distance_m: placement.horizontal_distance_m,
        offset_s,
        reverberant,
    };
    extract_all(clean, meta, Some(&ctx), &config.attributes)
}

/// Fit independent-cue quantizers on the fit split and write cue labels into
/// every mixture's metadata.
pub fn label_cues(dataset: &Dataset, config: &PipelineConfig) -> Result<()> {
    let thresholds = config.threshold_table()?;
    let metas: Vec<(usize, MixtureMeta)> = dataset
        .index
        .mixtures
        .iter()
        .enumerate()
        .map(|(i, e)| dataset.load_meta(e).map(|m| (i, m)))
        .collect::<Result<_>>()?;

    // Training values pool both speakers of every fit-split mixture.
    let mut quantizers = QuantizerSet::default();
    for attribute in Attribute::CONTINUOUS {
        let Some(names) = default_bin_names(attribute) else {
            continue;
        };
        let values: Vec<f64> = metas
            .iter()
            .filter(|(_, m)| m.split == config.dataset.fit_split)
            .flat_map(|(_, m)| {
                [
                    m.attributes_tar.continuous_value(attribute),
                    m.attributes_inf.continuous_value(attribute),
                ]
            })
            .flatten()
            .collect();
        match IndependentQuantizer::fit(attribute, &values, names) {
            Ok(q) => quantizers.insert(q),
            Err(_) => continue, // attribute missing or degenerate in this corpus
        }
    }

    thresholds.save(&dataset.dir.join("thresholds.json"))?;
    quantizers.save(&dataset.dir.join("quantizers.json"))?;

    for (i, mut meta) in metas {
        let labels = cue_labels_for_pair(
            &meta.attributes_tar,
            &meta.attributes_inf,
            &thresholds,
            &quantizers,
        );
        meta.cue_labels = Some(labels);
        dataset.save_meta(&dataset.index.mixtures[i], &meta)?;
    }
    Ok(())
}

/// Generate prompt records for every labeled mixture.
pub fn generate_prompts(dataset: &Dataset, config: &PipelineConfig) -> Result<()> {
    let templates = match &config.prompts.template_file {
        Some(path) => PromptTemplates::load(path)?,
        None => PromptTemplates::default(),
    }
    .with_verbs(&config.prompts.verbs);

    for (ordinal, entry) in dataset.index.mixtures.iter().enumerate() {
        let mut meta = dataset.load_meta(entry)?;
        let labels = meta.cue_labels.clone().ok_or_else(|| {
            Error::Dataset(format!("{}: run the cues stage before prompts", meta.id))
        })?;
        let target_index = meta.plan.target_index;
        let mut prompts = Vec::new();
        for kind_name in &config.prompts.kinds {
            let kind = if kind_name == "relative" {
                CueKind::Relative
            } else {
                CueKind::Independent
            };
            let filter = config.prompts.filter_similar;
            prompts.extend(generate_individual(
                &meta.id,
                &labels,
                &templates,
                kind,
                filter,
                target_index,
            )?);
            let mut rng = stream_rng(
                config.seed,
                &format!("prompt-random|{kind_name}"),
                ordinal as u64,
            );
            if let Some(p) = generate_random(
                &meta.id,
                &labels,
                &templates,
                kind,
                filter,
                target_index,
                &mut rng,
            )? {
                prompts.push(p);
            }
            if let Some(p) =
                generate_all(&meta.id, &labels, &templates, kind, filter, target_index)?
            {
                prompts.push(p);
            }
        }
        meta.prompts = Some(prompts);
        dataset.save_meta(entry, &meta)?;
    }
    Ok(())
}

/// Construct the configured embedding provider. The oracle provider scans the
/// dataset in ordinal order to build its category-axis registry.
pub fn build_provider(
    dataset: &Dataset,
    config: &PipelineConfig,
) -> Result<Arc<dyn EmbeddingProvider>> {
    match config.provider.kind.as_str() {
        "store" => {
            let audio_path = config.provider.audio_store.as_ref().ok_or(Error::Config {
                field: "provider.audio_store".into(),
                reason: "store provider needs an audio store path".into(),
            })?;
            let text_path = config.provider.text_store.as_ref().ok_or(Error::Config {
                field: "provider.text_store".into(),
                reason: "store provider needs a text store path".into(),
            })?;
            let provider = StoreProvider::new(
                EmbeddingStore::load(audio_path)?,
                EmbeddingStore::load(text_path)?,
            )?;
            Ok(Arc::new(provider))
        }
        _ => {
            let thresholds = dataset.thresholds().or_else(|_| config.threshold_table())?;
            let quantizers = dataset.quantizers().unwrap_or_default();
            let mut categories: Vec<(Attribute, String)> = Vec::new();
            for entry in &dataset.index.mixtures {
                let meta = dataset.load_meta(entry)?;
                for channel in [1u8, 2u8] {
                    let labels = channel_labels(&meta, channel, &thresholds, &quantizers);
                    for l in labels {
                        categories.push((l.attribute, l.category));
                    }
                }
                if let Some(prompts) = &meta.prompts {
                    for p in prompts {
                        for (a, c) in p.cue_types.iter().zip(&p.categories) {
                            categories.push((*a, c.clone()));
                        }
                    }
                }
            }
            let provider = OracleProvider::fit(
                config.provider.dimension,
                config.provider.noise_sigma,
                config.seed,
                thresholds,
                categories.iter().map(|(a, c)| (*a, c.as_str())),
            )?;
            Ok(Arc::new(provider))
        }
    }
}

/// Cue labels of a channel computed with that channel as the target.
pub fn channel_labels(
    meta: &MixtureMeta,
    channel: u8,
    thresholds: &ThresholdTable,
    quantizers: &QuantizerSet,
) -> Vec<CueLabel> {
    let (av_self, av_other) = if channel == meta.plan.target_index {
        (&meta.attributes_tar, &meta.attributes_inf)
    } else {
        (&meta.attributes_inf, &meta.attributes_tar)
    };
    cue_labels_for_pair(av_self, av_other, thresholds, quantizers)
}

fn prompt_cue_tuples(
    meta: &MixtureMeta,
    prompt: &PromptRecord,
) -> Vec<(Attribute, String, Option<f64>)> {
    let deltas: std::collections::BTreeMap<Attribute, f64> = meta
        .cue_labels
        .iter()
        .flatten()
        .filter(|l| l.kind == CueKind::Relative)
        .filter_map(|l| l.delta.map(|d| (l.attribute, d)))
        .collect();
    prompt
        .cue_types
        .iter()
        .zip(&prompt.categories)
        .map(|(a, c)| (*a, c.clone(), deltas.get(a).copied()))
        .collect()
}

fn cue_type_of(prompt: &PromptRecord) -> CueType {
    match prompt.config {
        PromptConfig::Individual => CueType::Single(prompt.cue_types[0]),
        PromptConfig::Random => CueType::Random,
        PromptConfig::All => CueType::All,
    }
}

/// Classify every prompt of every mixture; one row per prompt, in
/// (ordinal, prompt index) order.
pub fn evaluate(
    dataset: &Dataset,
    config: &PipelineConfig,
    provider: &Arc<dyn EmbeddingProvider>,
    head: Option<&ProjectionHead>,
    jobs: usize,
) -> Result<Vec<EvalRow>> {
    let thresholds = dataset.thresholds().or_else(|_| config.threshold_table())?;
    let quantizers = dataset.quantizers().unwrap_or_default();
    let identity = ProjectionHead::identity(provider.dimension());
    let head = head.unwrap_or(&identity);
    let cls = &config.classifier;

    let per_mixture: Vec<Vec<EvalRow>> = with_jobs(jobs, || {
        dataset
            .index
            .mixtures
            .par_iter()
            .map(|entry| {
                evaluate_mixture(
                    dataset,
                    config,
                    provider,
                    head,
                    cls,
                    &thresholds,
                    &quantizers,
                    entry,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_mixture.into_iter().flatten().collect())
}

#[allow(clippy::too_many_arguments)]
fn evaluate_mixture(
    dataset: &Dataset,
    config: &PipelineConfig,
    provider: &Arc<dyn EmbeddingProvider>,
    head: &ProjectionHead,
    cls: &ClassifierConfig,
    thresholds: &ThresholdTable,
    quantizers: &QuantizerSet,
    entry: &IndexEntry,
) -> Result<Vec<EvalRow>> {
    let meta = dataset.load_meta(entry)?;
    let prompts = meta.prompts.clone().ok_or_else(|| {
        Error::Dataset(format!(
            "{}: run the prompts stage before evaluate",
            meta.id
        ))
    })?;
    let rendered = dataset.load_rendered(&meta)?;
    let (s1, s2) = oracle_separate(&rendered, config.separation.leak_db)?;
    let rev_target = rendered.rev_target();
    let true_label = make_label(&s1, &s2, rev_target)?;
    let mix_sdr = si_sdr(&rendered.mixture, rev_target)?;

    let labels1 = channel_labels(&meta, 1, thresholds, quantizers);
    let labels2 = channel_labels(&meta, 2, thresholds, quantizers);
    let z1 = provider.embed_channel(&ChannelQuery {
        mixture_id: &meta.id,
        channel: 1,
        labels: &labels1,
    })?;
    let z2 = provider.embed_channel(&ChannelQuery {
        mixture_id: &meta.id,
        channel: 2,
        labels: &labels2,
    })?;

    let mut rows = Vec::with_capacity(prompts.len());
    for (prompt_index, prompt) in prompts.iter().enumerate() {
        let cues = prompt_cue_tuples(&meta, prompt);
        let z_p_raw = provider.embed_prompt(&PromptQuery {
            mixture_id: &meta.id,
            prompt_index,
            text: &prompt.text,
            kind: prompt.kind,
            cues: &cues,
        })?;
        let z_p = head.project(&z_p_raw)?;
        let decision = classify_embeddings(&z_p, &z1.values, &z2.values, cls)?;
        let pred_label = u8::from(decision.pred_index == 1);

        let chosen = if pred_label == 1 { &s1 } else { &s2 };
        let chosen_sdr = si_sdr(chosen, rev_target)?;

        let (delta, relative_category) = match cue_type_of(prompt) {
            CueType::Single(attr) => {
                let rel = meta
                    .cue_labels
                    .iter()
                    .flatten()
                    .find(|c| c.kind == CueKind::Relative && c.attribute == attr);
                (rel.and_then(|c| c.delta), rel.map(|c| c.category.clone()))
            }
            _ => (None, None),
        };
        let (indep_tar, indep_inf) = match cue_type_of(prompt) {
            CueType::Single(attr) => match quantizers.get(attr) {
                Some(q) => {
                    let tar = meta.attributes_tar.continuous_value(attr);
                    let inf = meta.attributes_inf.continuous_value(attr);
                    (
                        tar.map(|v| q.quantize(v).category),
                        inf.map(|v| q.quantize(v).category),
                    )
                }
                None => (None, None),
            },
            _ => (None, None),
        };

        rows.push(EvalRow {
            mixture_id: meta.id.clone(),
            cue: cue_type_of(prompt),
            prompt_kind: prompt.kind,
            prompt_config: prompt.config,
            true_label,
            pred_label,
            prob: decision.prob,
            si_sdr_chosen_db: Some(chosen_sdr),
            si_sdri_db: Some(chosen_sdr - mix_sdr),
            delta,
            relative_category,
            indep_category_tar: indep_tar,
            indep_category_inf: indep_inf,
        });
    }
    Ok(rows)
}

/// Stage-2 decisions for one mixture, with the prompt each came from.
pub fn classify_mixture(
    dataset: &Dataset,
    config: &PipelineConfig,
    provider: &Arc<dyn EmbeddingProvider>,
    head: Option<&ProjectionHead>,
    mixture_id: &str,
) -> Result<Vec<(PromptRecord, Classification)>> {
    let thresholds = dataset.thresholds().or_else(|_| config.threshold_table())?;
    let quantizers = dataset.quantizers().unwrap_or_default();
    let identity = ProjectionHead::identity(provider.dimension());
    let head = head.unwrap_or(&identity);

    let entry = dataset
        .index
        .mixtures
        .iter()
        .find(|e| e.id == mixture_id)
        .ok_or_else(|| Error::Dataset(format!("no mixture named `{mixture_id}`")))?;
    let meta = dataset.load_meta(entry)?;
    let prompts = meta.prompts.clone().ok_or_else(|| {
        Error::Dataset(format!(
            "{}: run the prompts stage before classify",
            meta.id
        ))
    })?;

    let labels1 = channel_labels(&meta, 1, &thresholds, &quantizers);
    let labels2 = channel_labels(&meta, 2, &thresholds, &quantizers);
    let z1 = provider.embed_channel(&ChannelQuery {
        mixture_id: &meta.id,
        channel: 1,
        labels: &labels1,
    })?;
    let z2 = provider.embed_channel(&ChannelQuery {
        mixture_id: &meta.id,
        channel: 2,
        labels: &labels2,
    })?;

    let mut out = Vec::with_capacity(prompts.len());
    for (prompt_index, prompt) in prompts.into_iter().enumerate() {
        let cues = prompt_cue_tuples(&meta, &prompt);
        let z_p_raw = provider.embed_prompt(&PromptQuery {
            mixture_id: &meta.id,
            prompt_index,
            text: &prompt.text,
            kind: prompt.kind,
            cues: &cues,
        })?;
        let z_p = head.project(&z_p_raw)?;
        let decision = classify_embeddings(&z_p, &z1.values, &z2.values, &config.classifier)?;
        out.push((prompt, decision));
    }
    Ok(out)
}

/// Assemble training samples for the projection head: one per prompt, with
/// channel order randomized per sample (the label follows the permutation).
pub fn build_training_set(
    dataset: &Dataset,
    config: &PipelineConfig,
    provider: &Arc<dyn EmbeddingProvider>,
    split: &str,
) -> Result<Vec<TrainSample>> {
    let thresholds = dataset.thresholds().or_else(|_| config.threshold_table())?;
    let quantizers = dataset.quantizers().unwrap_or_default();
    let mut samples = Vec::new();
    for (ordinal, entry) in dataset.index.mixtures.iter().enumerate() {
        if !split.is_empty() && entry.split != split {
            continue;
        }
        let meta = dataset.load_meta(entry)?;
        let prompts = meta.prompts.clone().ok_or_else(|| {
            Error::Dataset(format!("{}: run the prompts stage before train", meta.id))
        })?;
        let rendered = dataset.load_rendered(&meta)?;
        let (s1, s2) = oracle_separate(&rendered, config.separation.leak_db)?;
        let label = make_label(&s1, &s2, rendered.rev_target())?;

        let labels1 = channel_labels(&meta, 1, &thresholds, &quantizers);
        let labels2 = channel_labels(&meta, 2, &thresholds, &quantizers);
        let z1 = provider
            .embed_channel(&ChannelQuery {
                mixture_id: &meta.id,
                channel: 1,
                labels: &labels1,
            })?
            .values;
        let z2 = provider
            .embed_channel(&ChannelQuery {
                mixture_id: &meta.id,
                channel: 2,
                labels: &labels2,
            })?
            .values;

        let mut rng = stream_rng(config.seed, "train-swap", ordinal as u64);
        for (prompt_index, prompt) in prompts.iter().enumerate() {
            let cues = prompt_cue_tuples(&meta, prompt);
            let z_p_raw = provider
                .embed_prompt(&PromptQuery {
                    mixture_id: &meta.id,
                    prompt_index,
                    text: &prompt.text,
                    kind: prompt.kind,
                    cues: &cues,
                })?
                .values;
            let swap = rng.random_range(0..2u8) == 1;
            let (za, zb, y) = if swap {
                (z2.clone(), z1.clone(), 1 - label)
            } else {
                (z1.clone(), z2.clone(), label)
            };
            samples.push(TrainSample {
                prompt_raw: z_p_raw,
                z1: za,
                z2: zb,
                label: y,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!(
            "no training samples in split `{split}`"
        )));
    }
    Ok(samples)
}

/// Write evaluation rows as CSV.
pub fn save_eval_rows(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut out = String::from(
        "mixture_id,cue,prompt_kind,prompt_config,true_label,pred_label,prob,\
         si_sdr_chosen_db,si_sdri_db,delta,relative_category,indep_tar,indep_inf\n",
    );
    let opt = |v: &Option<f64>| v.map_or(String::new(), |x| x.to_string());
    let opt_s = |v: &Option<String>| v.clone().unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.mixture_id,
            r.cue,
            match r.prompt_kind {
                CueKind::Relative => "relative",
                CueKind::Independent => "independent",
            },
            match r.prompt_config {
                PromptConfig::Individual => "individual",
                PromptConfig::Random => "random",
                PromptConfig::All => "all",
            },
            r.true_label,
            r.pred_label,
            r.prob,
            opt(&r.si_sdr_chosen_db),
            opt(&r.si_sdri_db),
            opt(&r.delta),
            opt_s(&r.relative_category),
            opt_s(&r.indep_category_tar),
            opt_s(&r.indep_category_inf),
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io_at(path, e))
}

/// Read evaluation rows back from CSV.
pub fn load_eval_rows(path: &Path) -> Result<Vec<EvalRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io_at(path, e))?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate().skip(1) {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 13 {
            return Err(Error::Analysis(format!(
                "{}:{}: expected 13 fields, got {}",
                path.display(),
                lineno + 1,
                fields.len()
            )));
        }
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<f64>()
                    .map(Some)
                    .map_err(|e| Error::Analysis(format!("bad number `{s}`: {e}")))
            }
        };
        let opt_str = |s: &str| {
            if s.is_empty() {
                None
            } else {
                Some(s.to_string())
            }
        };
        let cue = match fields[1] {
            "random" => CueType::Random,
            "all" => CueType::All,
            id => CueType::Single(Attribute::from_id(id)?),
        };
        rows.push(EvalRow {
            mixture_id: fields[0].to_string(),
            cue,
            prompt_kind: if fields[2] == "independent" {
                CueKind::Independent
            } else {
                CueKind::Relative
            },
            prompt_config: match fields[3] {
                "random" => PromptConfig::Random,
                "all" => PromptConfig::All,
                _ => PromptConfig::Individual,
            },
            true_label: fields[4]
                .parse()
                .map_err(|e| Error::Analysis(format!("bad label: {e}")))?,
            pred_label: fields[5]
                .parse()
                .map_err(|e| Error::Analysis(format!("bad label: {e}")))?,
            prob: fields[6]
                .parse()
                .map_err(|e| Error::Analysis(format!("bad prob: {e}")))?,
            si_sdr_chosen_db: parse_opt(fields[7])?,
            si_sdri_db: parse_opt(fields[8])?,
            delta: parse_opt(fields[9])?,
            relative_category: opt_str(fields[10]),
            indep_category_tar: opt_str(fields[11]),
            indep_category_inf: opt_str(fields[12]),
        });
    }
    Ok(rows)
}
