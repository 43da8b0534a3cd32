//! Synthesize a small demonstration corpus: vibrato-tone "utterances" with
//! per-speaker pitch, level, and length, plus a JSON-Lines manifest.
//!
//! Usage: synth_corpus <out_dir> [speakers] [utterances_per_speaker] [seed]

use std::path::PathBuf;

use rand::Rng;
use relcue_core::attributes::{Gender, Language, UtteranceMeta};
use relcue_core::manifest::{Manifest, ManifestEntry};
use relcue_core::rng::stream_rng;
use relcue_core::wave::{write_wav, WaveBuffer};
use relcue_core::SAMPLE_RATE_HZ;

fn main() {
    let mut args = std::env::args().skip(1);
    let out: PathBuf = args.next().expect("usage: synth_corpus <out_dir>").into();
    let speakers: usize = args.next().map_or(8, |s| s.parse().expect("speakers"));
    let per: usize = args.next().map_or(4, |s| s.parse().expect("utterances"));
    let seed: u64 = args.next().map_or(42, |s| s.parse().expect("seed"));
    std::fs::create_dir_all(&out).expect("create output dir");

    let words = [
        "hello", "world", "morning", "river", "window", "garden", "yellow", "mountain", "quiet",
        "forest", "summer", "evening",
    ];
    let fs = f64::from(SAMPLE_RATE_HZ);
    let mut entries = Vec::new();
    for s in 0..speakers {
        let mut rng = stream_rng(seed, "demo-speaker", s as u64);
        let f0 = rng.random_range(100.0..320.0);
        let vibrato = rng.random_range(3.0..30.0);
        let amp = rng.random_range(0.1..0.6);
        let age = rng.random_range(18.0..75.0);
        for u in 0..per {
            let mut urng = stream_rng(seed, "demo-utt", (s * 1000 + u) as u64);
            let dur = urng.random_range(3.2..5.8);
            let n = (dur * fs) as usize;
            let mut phase = 0.0f64;
            let mut samples = vec![0.0; (0.25 * fs) as usize];
            samples.extend((0..n).map(|i| {
                let t = i as f64 / fs;
                let inst = f0 + vibrato * (2.0 * std::f64::consts::PI * 5.0 * t).sin();
                phase += 2.0 * std::f64::consts::PI * inst / fs;
                amp * phase.sin()
            }));
            samples.extend(vec![0.0; (0.25 * fs) as usize]);

            let id = format!("spk{s:02}_utt{u:02}");
            let path = out.join(format!("{id}.wav"));
            write_wav(&path, &WaveBuffer::from_samples(samples)).expect("write wav");
            let n_words = 3 + urng.random_range(0..8usize);
            let text: Vec<&str> = (0..n_words)
                .map(|i| words[(s * 5 + u * 3 + i * 7) % words.len()])
                .collect();
            entries.push(ManifestEntry {
                meta: UtteranceMeta {
                    utterance_id: id,
                    speaker_id: format!("spk{s:02}"),
                    language: [Language::En, Language::Fr, Language::Es, Language::De][s % 4],
                    gender: if s % 2 == 0 {
                        Gender::Female
                    } else {
                        Gender::Male
                    },
                    age_years: Some(age),
                    emotion: Some(["neutral", "happy", "sad", "angry"][s % 4].into()),
                    transcription: Some(text.join(" ")),
                    word_boundaries: None,
                },
                wav_path: path,
                split: Some("train".into()),
            });
        }
    }
    let manifest_path = out.join("manifest.jsonl");
    Manifest { entries }
        .save(&manifest_path)
        .expect("write manifest");
    println!(
        "wrote {} utterances and {}",
        speakers * per,
        manifest_path.display()
    );
}
