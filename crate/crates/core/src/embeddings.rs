//! Embedding providers for the two-stage classifier.
//!
//! Neural encoders run out of process: external tooling exports one vector
//! per separated channel and per prompt into a binary [`EmbeddingStore`],
//! keyed `audio:<mixture>:<channel>` and `text:<mixture>:<prompt-index>`.
//! For closed-loop testing the [`OracleProvider`] synthesizes embeddings
//! directly from cue labels, with one orthogonal axis per (attribute,
//! category) and optional Gaussian noise.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cues::{Attribute, CueKind, CueLabel, ThresholdTable};
use crate::error::{Error, Result};
use crate::rng::stable_hash;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub id: String,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn dimension(&self) -> usize {
        self.values.len()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Fixed-dimension key/vector map with a compact binary file form:
/// magic "EMBD", version u16, dimension u32, count u64, then per record a
/// u16 key length, the UTF-8 key, and `dimension` little-endian f32 values.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingStore {
    dimension: usize,
    vectors: BTreeMap<String, Vec<f64>>,
}

const STORE_MAGIC: &[u8; 4] = b"EMBD";
const STORE_VERSION: u16 = 1;

impl EmbeddingStore {
    pub fn new(dimension: usize) -> Self {
        EmbeddingStore {
            dimension,
            vectors: BTreeMap::new(),
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, key: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.dimension {
            return Err(Error::EmbeddingDimension {
                key: key.into(),
                expected: self.dimension,
                got: values.len(),
            });
        }
        if self.vectors.contains_key(key) {
            return Err(Error::DuplicateKey(key.into()));
        }
        self.vectors.insert(key.into(), values);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<EmbeddingVector> {
        self.vectors
            .get(key)
            .map(|values| EmbeddingVector {
                id: key.into(),
                values: values.clone(),
            })
            .ok_or_else(|| Error::MissingKey(key.into()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
        file.write_all(STORE_MAGIC)?;
        file.write_all(&STORE_VERSION.to_le_bytes())?;
        file.write_all(&(self.dimension as u32).to_le_bytes())?;
        file.write_all(&(self.vectors.len() as u64).to_le_bytes())?;
        for (key, values) in &self.vectors {
            let key_bytes = key.as_bytes();
            if key_bytes.len() > u16::MAX as usize {
                return Err(Error::StoreFormat(format!("key too long: {key}")));
            }
            file.write_all(&(key_bytes.len() as u16).to_le_bytes())?;
            file.write_all(key_bytes)?;
            for &v in values {
                file.write_all(&(v as f32).to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)
            .map_err(|_| Error::StoreFormat("file too short for header".into()))?;
        if &magic != STORE_MAGIC {
            return Err(Error::StoreFormat(format!("bad magic {magic:?}")));
        }
        let mut u16buf = [0u8; 2];
        file.read_exact(&mut u16buf)?;
        let version = u16::from_le_bytes(u16buf);
        if version != STORE_VERSION {
            return Err(Error::StoreFormat(format!("unsupported version {version}")));
        }
        let mut u32buf = [0u8; 4];
        file.read_exact(&mut u32buf)?;
        let dimension = u32::from_le_bytes(u32buf) as usize;
        let mut u64buf = [0u8; 8];
        file.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;

        let mut store = EmbeddingStore::new(dimension);
        for _ in 0..count {
            file.read_exact(&mut u16buf)
                .map_err(|_| Error::StoreFormat("truncated record header".into()))?;
            let key_len = u16::from_le_bytes(u16buf) as usize;
            let mut key_bytes = vec![0u8; key_len];
            file.read_exact(&mut key_bytes)
                .map_err(|_| Error::StoreFormat("truncated key".into()))?;
            let key = String::from_utf8(key_bytes)
                .map_err(|e| Error::StoreFormat(format!("invalid key: {e}")))?;
            let mut values = Vec::with_capacity(dimension);
            for _ in 0..dimension {
                file.read_exact(&mut u32buf)
                    .map_err(|_| Error::StoreFormat(format!("truncated vector for key `{key}`")))?;
                values.push(f64::from(f32::from_le_bytes(u32buf)));
            }
            store.insert(&key, values)?;
        }
        Ok(store)
    }
}

/// Store key for a separated channel's audio embedding.
pub fn audio_key(mixture_id: &str, channel: u8) -> String {
    format!("audio:{mixture_id}:{channel}")
}

/// Store key for a prompt's text embedding.
pub fn text_key(mixture_id: &str, prompt_index: usize) -> String {
    format!("text:{mixture_id}:{prompt_index}")
}

/// What a provider gets to embed one separated channel: the channel's cue
/// labels computed with itself as the target.
#[derive(Debug, Clone)]
pub struct ChannelQuery<'a> {
    pub mixture_id: &'a str,
    pub channel: u8,
    pub labels: &'a [CueLabel],
}

/// What a provider gets to embed one prompt.
#[derive(Debug, Clone)]
pub struct PromptQuery<'a> {
    pub mixture_id: &'a str,
    pub prompt_index: usize,
    pub text: &'a str,
    pub kind: CueKind,
    pub cues: &'a [(Attribute, String, Option<f64>)],
}

pub trait EmbeddingProvider: Send + Sync {
    fn dimension(&self) -> usize;
    fn embed_channel(&self, query: &ChannelQuery) -> Result<EmbeddingVector>;
    fn embed_prompt(&self, query: &PromptQuery) -> Result<EmbeddingVector>;
}

/// Provider backed by externally computed vectors.
pub struct StoreProvider {
    audio: EmbeddingStore,
    text: EmbeddingStore,
}

impl StoreProvider {
    pub fn new(audio: EmbeddingStore, text: EmbeddingStore) -> Result<Self> {
        if audio.dimension() != text.dimension() {
            return Err(Error::EmbeddingDimension {
                key: "text store".into(),
                expected: audio.dimension(),
                got: text.dimension(),
            });
        }
        Ok(StoreProvider { audio, text })
    }
}

impl EmbeddingProvider for StoreProvider {
    fn dimension(&self) -> usize {
        self.audio.dimension()
    }

    fn embed_channel(&self, query: &ChannelQuery) -> Result<EmbeddingVector> {
        self.audio.get(&audio_key(query.mixture_id, query.channel))
    }

    fn embed_prompt(&self, query: &PromptQuery) -> Result<EmbeddingVector> {
        self.text
            .get(&text_key(query.mixture_id, query.prompt_index))
    }
}

/// Transcription categories are open-ended, so they live in a reserved block
/// where each distinct text hashes to its own deterministic direction.
const TRANSCRIPTION_BLOCK: usize = 16;

/// Synthetic provider for closed-loop testing.
///
/// Every (attribute, category) pair seen at registration time owns one
/// orthogonal axis. A channel embedding activates the axes of its own cue
/// labels; a prompt embedding activates the axes of the cues it mentions.
/// Relative continuous cues are weighted by how far the pair sits from the
/// similarity threshold (saturating at four thresholds), so added noise
/// produces the expected accuracy falloff near the boundary while the
/// noise-free argmax stays exact. Noise of scale `noise_sigma` is Gaussian
/// with that expected vector norm.
pub struct OracleProvider {
    dimension: usize,
    noise_sigma: f64,
    seed: u64,
    thresholds: ThresholdTable,
    axes: BTreeMap<(Attribute, String), usize>,
}

impl OracleProvider {
    /// Build the axis registry from every cue label and prompt cue in the
    /// dataset. Registration order must be deterministic; pass labels in
    /// mixture-ordinal order.
    pub fn fit<'a>(
        dimension: usize,
        noise_sigma: f64,
        seed: u64,
        thresholds: ThresholdTable,
        labels: impl Iterator<Item = (Attribute, &'a str)>,
    ) -> Result<Self> {
        if noise_sigma < 0.0 {
            return Err(Error::InvalidArgument("noise_sigma must be >= 0".into()));
        }
        let mut axes = BTreeMap::new();
        let mut next = TRANSCRIPTION_BLOCK;
        for (attribute, category) in labels {
            if attribute == Attribute::Transcription && category != "Same" {
                continue;
            }
            let key = (attribute, category.to_string());
            if !axes.contains_key(&key) {
                if next >= dimension {
                    return Err(Error::InvalidArgument(format!(
                        "oracle provider needs more than {dimension} dimensions \
                         ({} category axes plus the {TRANSCRIPTION_BLOCK}-wide \
                         transcription block); raise provider.dimension",
                        axes.len() + 1
                    )));
                }
                axes.insert(key, next);
                next += 1;
            }
        }
        Ok(OracleProvider {
            dimension,
            noise_sigma,
            seed,
            thresholds,
            axes,
        })
    }

    fn weight(&self, attribute: Attribute, kind: CueKind, delta: Option<f64>) -> f64 {
        if kind != CueKind::Relative {
            return 1.0;
        }
        match (delta, self.thresholds.get(attribute)) {
            (Some(d), Ok(entry)) => (d.abs() / (4.0 * entry.theta)).min(1.0),
            _ => 1.0,
        }
    }

    /// Direction for a transcription text inside the reserved block.
    /// Components are non-negative so a ReLU in the projection head passes
    /// prompt directions through unchanged; distinct texts still get
    /// distinct unit directions, so the matching channel always wins.
    fn transcription_direction(&self, text: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&format!("transcription|{text}")));
        let mut dir: Vec<f64> = (0..TRANSCRIPTION_BLOCK)
            .map(|_| standard_normal(&mut rng).abs())
            .collect();
        let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        dir.iter_mut().for_each(|v| *v /= norm);
        dir
    }

    fn encode(
        &self,
        cues: impl Iterator<Item = (Attribute, String, CueKind, Option<f64>)>,
        noise_stream: &str,
    ) -> Result<Vec<f64>> {
        let mut values = vec![0.0f64; self.dimension];
        for (attribute, category, kind, delta) in cues {
            let w = self.weight(attribute, kind, delta);
            if attribute == Attribute::Transcription && category != "Same" {
                for (i, d) in self.transcription_direction(&category).iter().enumerate() {
                    values[i] += w * d;
                }
                continue;
            }
            let key = (attribute, category);
            let axis = self.axes.get(&key).ok_or_else(|| {
                Error::MissingKey(format!(
                    "oracle axis for {} / {} (not seen at fit time)",
                    key.0.id(),
                    key.1
                ))
            })?;
            values[*axis] += w;
        }
        if self.noise_sigma > 0.0 {
            // noise_sigma is the expected norm of the whole noise vector, so
            // its effect is independent of the embedding dimension.
            let component = self.noise_sigma / (self.dimension as f64).sqrt();
            let mut rng =
                ChaCha8Rng::seed_from_u64(crate::rng::derive_seed(self.seed, noise_stream, 0));
            for v in values.iter_mut() {
                *v += component * standard_normal(&mut rng);
            }
        }
        Ok(values)
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller from two uniform draws.
    use rand::Rng;
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

impl EmbeddingProvider for OracleProvider {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_channel(&self, query: &ChannelQuery) -> Result<EmbeddingVector> {
        let values = self.encode(
            query
                .labels
                .iter()
                .map(|l| (l.attribute, l.category.clone(), l.kind, l.delta)),
            &format!("noise|audio|{}|{}", query.mixture_id, query.channel),
        )?;
        Ok(EmbeddingVector {
            id: audio_key(query.mixture_id, query.channel),
            values,
        })
    }

    fn embed_prompt(&self, query: &PromptQuery) -> Result<EmbeddingVector> {
        let kind = query.kind;
        let values = self.encode(
            query.cues.iter().map(|(a, c, d)| (*a, c.clone(), kind, *d)),
            &format!("noise|text|{}|{}", query.mixture_id, query.prompt_index),
        )?;
        Ok(EmbeddingVector {
            id: text_key(query.mixture_id, query.prompt_index),
            values,
        })
    }
}
