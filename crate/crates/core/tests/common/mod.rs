//! Shared fixtures for the integration suites: synthetic speech-like
//! corpora and independent measurement oracles.

use std::path::Path;

use relcue_core::attributes::{Gender, Language, UtteranceMeta};
use relcue_core::manifest::{Manifest, ManifestEntry};
use relcue_core::rng::stream_rng;
use relcue_core::wave::{write_wav, WaveBuffer};
use relcue_core::SAMPLE_RATE_HZ;

use rand::Rng;

/// Sine tone with optional vibrato so the pitch track has a nonzero span.
pub fn vibrato_tone(
    freq_hz: f64,
    depth_hz: f64,
    rate_hz: f64,
    duration_s: f64,
    amplitude: f64,
) -> WaveBuffer {
    let fs = f64::from(SAMPLE_RATE_HZ);
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

pub fn tone(freq_hz: f64, duration_s: f64, amplitude: f64) -> WaveBuffer {
    vibrato_tone(freq_hz, 0.0, 0.0, duration_s, amplitude)
}

/// Uniform white noise buffer.
pub fn noise(seed: u64, n: usize, amplitude: f64) -> WaveBuffer {
    let mut rng = stream_rng(seed, "test-noise", 0);
    WaveBuffer::from_samples(
        (0..n)
            .map(|_| rng.random_range(-amplitude..amplitude))
            .collect(),
    )
}

/// Synthesize a corpus of vibrato-tone "utterances" with diverse per-speaker
/// attributes (pitch, pitch span, level, duration, age, language, gender,
/// emotion, transcription), silence-padded so trimming has work to do.
///
/// `duration_range` bounds the voiced part, before padding.
pub fn synth_corpus(
    dir: &Path,
    speakers: usize,
    utterances_per: usize,
    seed: u64,
    duration_range: [f64; 2],
    split: &str,
) -> Manifest {
    let words = [
        "hello", "world", "morning", "river", "window", "garden", "yellow", "mountain", "quiet",
        "forest", "summer", "evening", "copper", "violet", "anchor", "meadow",
    ];
    let mut entries = Vec::new();
    for s in 0..speakers {
        let mut rng = stream_rng(seed, "corpus-speaker", s as u64);
        let f0 = rng.random_range(100.0..320.0f64);
        let vibrato = rng.random_range(3.0..30.0f64);
        let amp = rng.random_range(0.1..0.6f64);
        let gender = if s % 2 == 0 {
            Gender::Female
        } else {
            Gender::Male
        };
        let language = [
            Language::En,
            Language::Fr,
            Language::Es,
            Language::De,
            Language::Zh,
        ][s % 5];
        let emotion = ["neutral", "happy", "sad", "angry"][s % 4];
        let age = rng.random_range(18.0..75.0f64);
        for u in 0..utterances_per {
            let mut urng = stream_rng(seed, "corpus-utt", (s * 1000 + u) as u64);
            let dur = urng.random_range(duration_range[0]..duration_range[1]);
            let voiced = vibrato_tone(f0, vibrato, 5.0, dur, amp);
            let fs = f64::from(SAMPLE_RATE_HZ);
            let mut samples = vec![0.0; (0.25 * fs) as usize];
            samples.extend_from_slice(voiced.samples());
            samples.extend(vec![0.0; (0.25 * fs) as usize]);
            let wav = WaveBuffer::from_samples(samples);

            let id = format!("spk{s:02}_utt{u:02}");
            let path = dir.join(format!("{id}.wav"));
            write_wav(&path, &wav).unwrap();

            let n_words = 3 + urng.random_range(0..8usize);
            let text: Vec<&str> = (0..n_words)
                .map(|i| words[(s * 5 + u * 3 + i * 7) % words.len()])
                .collect();
            entries.push(ManifestEntry {
                meta: UtteranceMeta {
                    utterance_id: id,
                    speaker_id: format!("spk{s:02}"),
                    language,
                    gender,
                    age_years: Some(age),
                    emotion: Some(emotion.into()),
                    transcription: Some(text.join(" ")),
                    word_boundaries: None,
                },
                wav_path: path,
                split: Some(split.into()),
            });
        }
    }
    Manifest { entries }
}

/// Reverberation time from the Schroeder backward integral: least-squares
/// slope of the energy-decay curve between -5 and -25 dB, extrapolated to
/// -60 dB. Independent of the image-source synthesis it checks.
pub fn schroeder_t60(taps: &[f64], fs: f64) -> Option<f64> {
    let total: f64 = taps.iter().map(|t| t * t).sum();
    if total <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    let mut edc: Vec<f64> = taps
        .iter()
        .rev()
        .map(|t| {
            acc += t * t;
            acc
        })
        .collect();
    edc.reverse();
    let mut n = 0.0f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if (-25.0..=-5.0).contains(&db) {
            let t = i as f64 / fs;
            n += 1.0;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
        }
    }
    if n < 10.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope < 0.0).then(|| -60.0 / slope)
}
