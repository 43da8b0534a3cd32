//! Per-utterance speech attribute extraction.
//!
//! Continuous attributes (mean F0, F0 span, speaking duration, speaking rate,
//! RMS energy, distance, appearance time, age) and discrete attributes
//! (language, gender, emotion, transcription). Signal-derived values come from
//! the clean trimmed utterance; RMS energy is measured on the reverberant
//! component; distance and appearance time come from the mixture placement.

pub mod pitch;
pub mod syllables;
pub mod vad;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cues::Attribute;
use crate::error::{Error, Result};
use crate::wave::{rms_db, WaveBuffer};

pub use pitch::{estimate_f0_track, f0_span, mean_f0, F0Frame};
pub use syllables::count_syllables;
pub use vad::detect_speech_segments;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
    De,
    Es,
    Zh,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Language::En => "en",
            Language::Fr => "fr",
            Language::De => "de",
            Language::Es => "es",
            Language::Zh => "zh",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
}

impl fmt::Display for Gender {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Gender::Male => "male",
            Gender::Female => "female",
        })
    }
}

/// Word-level time alignment from the source corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordBoundary {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
}

/// Corpus-side metadata for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub utterance_id: String,
    pub speaker_id: String,
    pub language: Language,
    pub gender: Gender,
    pub age_years: Option<f64>,
    pub emotion: Option<String>,
    pub transcription: Option<String>,
    pub word_boundaries: Option<Vec<WordBoundary>>,
}

impl UtteranceMeta {
    /// Checks field invariants: ordered, non-overlapping word boundaries and
    /// a plausible age.
    pub fn validate(&self) -> Result<()> {
        if let Some(age) = self.age_years {
            if !(0.0..120.0).contains(&age) || age == 0.0 {
                return Err(Error::Manifest(format!(
                    "{}: age {age} outside (0, 120)",
                    self.utterance_id
                )));
            }
        }
        if let Some(words) = &self.word_boundaries {
            for w in words {
                if w.end_s < w.start_s {
                    return Err(Error::Manifest(format!(
                        "{}: word `{}` ends before it starts",
                        self.utterance_id, w.word
                    )));
                }
            }
            for pair in words.windows(2) {
                if pair[1].start_s < pair[0].end_s {
                    return Err(Error::Manifest(format!(
                        "{}: word boundaries overlap at `{}`",
                        self.utterance_id, pair[1].word
                    )));
                }
            }
        }
        Ok(())
    }

    /// Shift word boundaries into the coordinates of a `[start_s, end_s]` cut
    /// of the waveform, dropping words that fall outside.
    pub fn rebased(&self, start_s: f64, end_s: f64) -> UtteranceMeta {
        let mut out = self.clone();
        if let Some(words) = &self.word_boundaries {
            let rebased: Vec<WordBoundary> = words
                .iter()
                .filter(|w| w.end_s > start_s && w.start_s < end_s)
                .map(|w| WordBoundary {
                    word: w.word.clone(),
                    start_s: (w.start_s - start_s).max(0.0),
                    end_s: (w.end_s - start_s).min(end_s - start_s),
                })
                .collect();
            out.word_boundaries = Some(rebased);
        }
        out
    }
}

/// The attribute values of one utterance; fields are absent when their inputs
/// are absent (no transcription means no speaking rate, no placement means no
/// distance).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub mean_f0_hz: Option<f64>,
    pub f0_span_hz: Option<f64>,
    pub age_years: Option<f64>,
    pub speaking_duration_s: Option<f64>,
    pub speaking_rate_spm: Option<f64>,
    pub rms_energy_db: Option<f64>,
    pub distance_m: Option<f64>,
    pub appearance_time_s: Option<f64>,
    pub language: Option<Language>,
    pub gender: Option<Gender>,
    pub emotion: Option<String>,
    pub transcription: Option<String>,
}

impl AttributeVector {
    pub fn continuous_value(&self, attribute: Attribute) -> Option<f64> {
        match attribute {
            Attribute::MeanF0 => self.mean_f0_hz,
            Attribute::F0Span => self.f0_span_hz,
            Attribute::Age => self.age_years,
            Attribute::SpeakingDuration => self.speaking_duration_s,
            Attribute::SpeakingRate => self.speaking_rate_spm,
            Attribute::RmsEnergy => self.rms_energy_db,
            Attribute::Distance => self.distance_m,
            Attribute::AppearanceTime => self.appearance_time_s,
            _ => None,
        }
    }
}

/// Knobs for signal-derived attribute extraction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttributeConfig {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Pauses longer than this are excluded from speaking duration.
    pub max_pause_s: f64,
}

impl Default for AttributeConfig {
    fn default() -> Self {
        AttributeConfig {
            f0_min_hz: 60.0,
            f0_max_hz: 500.0,
            max_pause_s: 0.6,
        }
    }
}

/// Mixture-side context for attributes that only exist once an utterance is
/// placed in a simulated room.
#[derive(Debug, Clone, Copy)]
pub struct PlacementContext<'a> {
    pub distance_m: f64,
    pub offset_s: f64,
    /// Reverberant, placed, scaled component the RMS energy is measured on.
    pub reverberant: &'a WaveBuffer,
}

/// Active speech intervals: word boundaries when the corpus provides them,
/// the energy VAD envelope otherwise.
pub fn speaking_segments(w: &WaveBuffer, meta: &UtteranceMeta) -> Vec<[f64; 2]> {
    match &meta.word_boundaries {
        Some(words) if !words.is_empty() => words.iter().map(|b| [b.start_s, b.end_s]).collect(),
        _ => detect_speech_segments(w),
    }
}

/// Total active speech time: segment durations plus inter-segment pauses no
/// longer than `max_pause_s` (pauses exactly at the limit are included; the
/// nanosecond slack keeps that rule stable under float subtraction).
pub fn speaking_duration(segments: &[[f64; 2]], max_pause_s: f64) -> f64 {
    let mut total = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        total += seg[1] - seg[0];
        if i + 1 < segments.len() {
            let pause = segments[i + 1][0] - seg[1];
            if pause <= max_pause_s + 1e-9 {
                total += pause;
            }
        }
    }
    total
}

/// Syllables per minute.
pub fn speaking_rate(text: &str, language: Language, speaking_duration_s: f64) -> Result<f64> {
    if speaking_duration_s <= 0.0 {
        return Err(Error::InvalidArgument(
            "speaking_rate requires a positive duration".into(),
        ));
    }
    Ok(60.0 * count_syllables(text, language) as f64 / speaking_duration_s)
}

/// Onset of a placed source's speech: placement offset plus the start of its
/// first active segment.
pub fn appearance_time(offset_s: f64, segments: &[[f64; 2]]) -> f64 {
    offset_s + segments.first().map_or(0.0, |s| s[0])
}

/// Full attribute vector for one utterance.
pub fn extract_all(
    clean: &WaveBuffer,
    meta: &UtteranceMeta,
    placement: Option<&PlacementContext>,
    cfg: &AttributeConfig,
) -> Result<AttributeVector> {
    let track = estimate_f0_track(clean, cfg.f0_min_hz, cfg.f0_max_hz)?;
    let segments = speaking_segments(clean, meta);
    let duration = speaking_duration(&segments, cfg.max_pause_s);

    let speaking_rate_spm = match (&meta.transcription, duration) {
        (Some(text), d) if d > 0.0 => Some(speaking_rate(text, meta.language, d)?),
        _ => None,
    };

    let rms_energy_db = match placement {
        Some(ctx) => {
            let shifted: Vec<[f64; 2]> = segments
                .iter()
                .map(|s| {
                    [
                        (s[0] + ctx.offset_s).min(ctx.reverberant.duration_s()),
                        (s[1] + ctx.offset_s).min(ctx.reverberant.duration_s()),
                    ]
                })
                .collect();
            if shifted.is_empty() {
                Some(rms_db(ctx.reverberant, None)?)
            } else {
                Some(rms_db(ctx.reverberant, Some(&shifted))?)
            }
        }
        None => {
            if segments.is_empty() {
                Some(rms_db(clean, None)?)
            } else {
                Some(rms_db(clean, Some(&segments))?)
            }
        }
    };

    Ok(AttributeVector {
        mean_f0_hz: mean_f0(&track),
        f0_span_hz: f0_span(&track),
        age_years: meta.age_years,
        speaking_duration_s: Some(duration),
        speaking_rate_spm,
        rms_energy_db,
        distance_m: placement.map(|p| p.distance_m),
        appearance_time_s: placement.map(|p| appearance_time(p.offset_s, &segments)),
        language: Some(meta.language),
        gender: Some(meta.gender),
        emotion: meta.emotion.clone(),
        transcription: meta.transcription.clone(),
    })
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    /// Sine tone with optional vibrato, at unit sample rate 16 kHz.
    pub fn tone(freq_hz: f64, duration_s: f64, amplitude: f64) -> WaveBuffer {
        vibrato_tone(freq_hz, 0.0, 0.0, duration_s, amplitude)
    }

    /// Tone whose instantaneous frequency wobbles by +/- depth_hz at rate_hz.
    pub fn vibrato_tone(
        freq_hz: f64,
        depth_hz: f64,
        rate_hz: f64,
        duration_s: f64,
        amplitude: f64,
    ) -> WaveBuffer {
        let fs = f64::from(crate::SAMPLE_RATE_HZ);
        let n = (duration_s * fs).round() as usize;
        let mut phase = 0.0f64;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / fs;
                let inst = freq_hz + depth_hz * (2.0 * std::f64::consts::PI * rate_hz * t).sin();
                phase += 2.0 * std::f64::consts::PI * inst / fs;
                amplitude * phase.sin()
            })
            .collect();
        WaveBuffer::from_samples(samples)
    }

    pub fn meta(id: &str, speaker: &str) -> UtteranceMeta {
        UtteranceMeta {
            utterance_id: id.into(),
            speaker_id: speaker.into(),
            language: Language::En,
            gender: Gender::Female,
            age_years: Some(30.0),
            emotion: Some("neutral".into()),
            transcription: Some("hello world".into()),
            word_boundaries: None,
        }
    }
}
