//! Frame-energy voice activity detection.

use crate::wave::{rms_db, WaveBuffer, RMS_FLOOR_DB};

/// Frame length in seconds.
pub const FRAME_S: f64 = 0.030;
/// Hop between frames in seconds.
pub const HOP_S: f64 = 0.010;
/// Absolute activity threshold in dB.
pub const BASE_THRESHOLD_DB: f64 = -45.0;
/// Margin above the estimated noise floor in dB.
pub const NOISE_MARGIN_DB: f64 = 10.0;
/// Gaps shorter than this are bridged into one segment.
pub const HANGOVER_S: f64 = 0.100;

/// Active speech segments as `[start_s, end_s]`, time-ordered and
/// non-overlapping. Silence yields an empty list.
///
/// Frames are 30 ms with a 10 ms hop; a frame is active when its level
/// exceeds `max(-45 dB, noise_floor + 10 dB)` where the noise floor is the
/// quietest frame. Signals with no quiet frames at all (e.g. an
/// already-trimmed constant tone) would push that threshold above every
/// frame, so when nothing clears the adaptive threshold the absolute -45 dB
/// threshold is applied instead.
pub fn detect_speech_segments(w: &WaveBuffer) -> Vec<[f64; 2]> {
    if w.is_empty() {
        return Vec::new();
    }
    let fs = f64::from(w.sample_rate_hz());
    let frame_len = ((FRAME_S * fs).round() as usize).max(1);
    let hop = ((HOP_S * fs).round() as usize).max(1);

    let mut levels = Vec::new();
    if w.len() <= frame_len {
        levels.push(rms_db(w, None).unwrap_or(RMS_FLOOR_DB));
    } else {
        let mut start = 0;
        while start + frame_len <= w.len() {
            let frame = w.slice(start, start + frame_len);
            levels.push(rms_db(&frame, None).unwrap_or(RMS_FLOOR_DB));
            start += hop;
        }
    }

    let noise_floor = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let adaptive = BASE_THRESHOLD_DB.max(noise_floor + NOISE_MARGIN_DB);
    let mut active: Vec<bool> = levels.iter().map(|&db| db > adaptive).collect();
    if !active.iter().any(|&a| a) {
        active = levels.iter().map(|&db| db > BASE_THRESHOLD_DB).collect();
    }

    let frame_s = frame_len as f64 / fs;
    let hop_s = hop as f64 / fs;
    let duration = w.duration_s();

    let mut segments: Vec<[f64; 2]> = Vec::new();
    for (i, &is_active) in active.iter().enumerate() {
        if !is_active {
            continue;
        }
        let start = i as f64 * hop_s;
        let end = (start + frame_s).min(duration);
        match segments.last_mut() {
            Some(last) if start - last[1] <= HANGOVER_S => last[1] = last[1].max(end),
            _ => segments.push([start, end]),
        }
    }
    segments
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::test_util::tone;

    fn padded_tone(pre_s: f64, tone_s: f64, post_s: f64) -> WaveBuffer {
        let fs = f64::from(crate::SAMPLE_RATE_HZ);
        let mut samples = vec![0.0; (pre_s * fs) as usize];
        samples.extend_from_slice(tone(220.0, tone_s, 0.5).samples());
        samples.extend(vec![0.0; (post_s * fs) as usize]);
        WaveBuffer::from_samples(samples)
    }

    #[test]
    fn silence_yields_empty() {
        let w = WaveBuffer::from_samples(vec![0.0; 16000]);
        assert!(detect_speech_segments(&w).is_empty());
    }

    #[test]
    fn padded_tone_boundaries() {
        let w = padded_tone(0.5, 1.0, 0.5);
        let segs = detect_speech_segments(&w);
        assert_eq!(segs.len(), 1, "{segs:?}");
        assert!((segs[0][0] - 0.5).abs() <= 0.030, "{segs:?}");
        assert!((segs[0][1] - 1.5).abs() <= 0.030, "{segs:?}");
    }

    #[test]
    fn two_tones_two_segments() {
        let fs = f64::from(crate::SAMPLE_RATE_HZ);
        let mut samples = tone(220.0, 0.5, 0.5).samples().to_vec();
        samples.extend(vec![0.0; fs as usize]);
        samples.extend_from_slice(tone(330.0, 0.5, 0.5).samples());
        let w = WaveBuffer::from_samples(samples);
        let segs = detect_speech_segments(&w);
        assert_eq!(segs.len(), 2, "{segs:?}");
    }

    #[test]
    fn short_gaps_are_bridged() {
        let fs = f64::from(crate::SAMPLE_RATE_HZ);
        let mut samples = tone(220.0, 0.5, 0.5).samples().to_vec();
        samples.extend(vec![0.0; (0.05 * fs) as usize]);
        samples.extend_from_slice(tone(330.0, 0.5, 0.5).samples());
        let w = WaveBuffer::from_samples(samples);
        let segs = detect_speech_segments(&w);
        assert_eq!(segs.len(), 1, "{segs:?}");
    }

    #[test]
    fn constant_tone_is_fully_active() {
        let w = tone(220.0, 1.0, 0.5);
        let segs = detect_speech_segments(&w);
        assert_eq!(segs.len(), 1, "{segs:?}");
        assert!(segs[0][0] <= 0.011);
        assert!(segs[0][1] >= w.duration_s() - 0.05);
    }

    #[test]
    fn prepended_silence_shifts_boundaries() {
        let base = padded_tone(0.2, 0.8, 0.2);
        let shifted = {
            let fs = f64::from(crate::SAMPLE_RATE_HZ);
            let mut samples = vec![0.0; (0.3 * fs) as usize];
            samples.extend_from_slice(base.samples());
            WaveBuffer::from_samples(samples)
        };
        let a = detect_speech_segments(&base);
        let b = detect_speech_segments(&shifted);
        assert_eq!(a.len(), b.len());
        for (sa, sb) in a.iter().zip(b.iter()) {
            assert!((sb[0] - sa[0] - 0.3).abs() <= HOP_S + 1e-9);
            assert!((sb[1] - sa[1] - 0.3).abs() <= HOP_S + 1e-9);
        }
    }
}
