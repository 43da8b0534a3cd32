//! Deterministic YIN pitch tracking.
//!
//! Cumulative-mean-normalized difference function with an absolute threshold
//! and parabolic interpolation; no probabilistic smoothing, so identical input
//! always yields an identical track.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::WaveBuffer;

/// Analysis frame length in seconds.
pub const FRAME_S: f64 = 0.0464;
/// Hop between frames in seconds.
pub const HOP_S: f64 = 0.010;
/// Voicing decision threshold on the normalized difference function.
pub const CMNDF_THRESHOLD: f64 = 0.1;

/// One analysis frame: center time and the detected F0, if voiced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F0Frame {
    pub time_s: f64,
    pub f0_hz: Option<f64>,
}

/// Per-frame F0 track over `[fmin_hz, fmax_hz]`.
pub fn estimate_f0_track(w: &WaveBuffer, fmin_hz: f64, fmax_hz: f64) -> Result<Vec<F0Frame>> {
    if !(50.0..=600.0).contains(&fmin_hz) || !(50.0..=600.0).contains(&fmax_hz) {
        return Err(Error::InvalidArgument(format!(
            "f0 range [{fmin_hz}, {fmax_hz}] must lie within [50, 600] Hz"
        )));
    }
    if fmin_hz >= fmax_hz {
        return Err(Error::InvalidArgument(format!(
            "fmin {fmin_hz} must be below fmax {fmax_hz}"
        )));
    }
    let fs = f64::from(w.sample_rate_hz());
    let frame_len = (FRAME_S * fs).round() as usize;
    let hop = (HOP_S * fs).round() as usize;
    let need = frame_len + hop;
    if w.len() < need {
        return Err(Error::TooShort { need, got: w.len() });
    }

    let window = frame_len / 2;
    let tau_min = ((fs / fmax_hz).floor() as usize).max(2);
    let tau_max = ((fs / fmin_hz).ceil() as usize).min(window - 1);

    let samples = w.samples();
    let mut frames = Vec::with_capacity(w.len() / hop);
    let mut diff = vec![0.0f64; tau_max + 1];
    let mut cmndf = vec![1.0f64; tau_max + 1];

    let mut start = 0;
    while start + frame_len <= samples.len() {
        let x = &samples[start..start + frame_len];
        for (tau, d) in diff.iter_mut().enumerate().skip(1) {
            let mut acc = 0.0;
            for i in 0..window {
                let delta = x[i] - x[i + tau];
                acc += delta * delta;
            }
            *d = acc;
        }
        let mut running = 0.0;
        cmndf[0] = 1.0;
        for tau in 1..=tau_max {
            running += diff[tau];
            cmndf[tau] = if running > 0.0 {
                diff[tau] * tau as f64 / running
            } else {
                1.0
            };
        }

        let f0 = find_dip(&cmndf, tau_min, tau_max).map(|tau| fs / refine_lag(&cmndf, tau));
        frames.push(F0Frame {
            time_s: (start + frame_len / 2) as f64 / fs,
            f0_hz: f0,
        });
        start += hop;
    }
    Ok(frames)
}

/// First lag under the threshold, descended to its local minimum.
fn find_dip(cmndf: &[f64], tau_min: usize, tau_max: usize) -> Option<usize> {
    let mut tau = tau_min;
    while tau <= tau_max && cmndf[tau] >= CMNDF_THRESHOLD {
        tau += 1;
    }
    if tau > tau_max {
        return None;
    }
    while tau < tau_max && cmndf[tau + 1] < cmndf[tau] {
        tau += 1;
    }
    Some(tau)
}

/// Parabolic interpolation around the dip.
fn refine_lag(cmndf: &[f64], tau: usize) -> f64 {
    if tau == 0 || tau + 1 >= cmndf.len() {
        return tau as f64;
    }
    let (s0, s1, s2) = (cmndf[tau - 1], cmndf[tau], cmndf[tau + 1]);
    let denom = s0 - 2.0 * s1 + s2;
    if denom.abs() < 1e-18 {
        return tau as f64;
    }
    let offset = (s0 - s2) / (2.0 * denom);
    (tau as f64 + offset.clamp(-1.0, 1.0)).max(1.0)
}

/// Mean F0 over voiced frames; absent when no frame is voiced.
pub fn mean_f0(track: &[F0Frame]) -> Option<f64> {
    let voiced: Vec<f64> = track.iter().filter_map(|f| f.f0_hz).collect();
    if voiced.is_empty() {
        None
    } else {
        Some(voiced.iter().sum::<f64>() / voiced.len() as f64)
    }
}

/// Max minus min F0 over voiced frames; absent when no frame is voiced.
pub fn f0_span(track: &[F0Frame]) -> Option<f64> {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut any = false;
    for f in track.iter().filter_map(|f| f.f0_hz) {
        min = min.min(f);
        max = max.max(f);
        any = true;
    }
    if any {
        Some(max - min)
    } else {
        None
    }
}
