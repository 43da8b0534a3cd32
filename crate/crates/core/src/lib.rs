//! Inter-speaker relative cues for two-speaker target-speech classification.
//!
//! This crate simulates reverberant two-speaker mixtures, extracts per-utterance
//! speech attributes (pitch, energy, speaking rate, ...), turns attribute pairs
//! into relative and independent cue labels, verbalizes those labels into text
//! prompts, and evaluates a two-stage target-speaker classifier that matches
//! prompt embeddings against separated-channel embeddings.
//!
//! Neural encoders are intentionally out of process: embeddings are either read
//! from a binary store produced by external tooling or synthesized by a
//! deterministic oracle provider for closed-loop testing.

pub mod analysis;
pub mod attributes;
pub mod classifier;
pub mod config;
pub mod cues;
pub mod embeddings;
pub mod error;
pub mod manifest;
pub mod mixer;
pub mod pipeline;
pub mod prompts;
pub mod rng;
pub mod room;
pub mod wave;

pub use error::{Error, Result};
pub use wave::WaveBuffer;

/// Canonical sample rate for every signal in the pipeline.
pub const SAMPLE_RATE_HZ: u32 = 16_000;

/// Speed of sound used for all geometric delay computations, in m/s.
pub const SPEED_OF_SOUND_M_S: f64 = 343.0;
