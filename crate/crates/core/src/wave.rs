//! Mono audio buffers and the signal-level metrics everything else is built on.

use std::path::Path;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::RealFftPlanner;

use crate::error::{Error, Result};
use crate::SAMPLE_RATE_HZ;

/// dB value reported for silent signals instead of -inf.
pub const RMS_FLOOR_DB: f64 = -120.0;

/// SI-SDR is clamped to this range; the regularized denominator keeps the
/// perfect-reconstruction case finite and the clamp keeps averages sane.
pub const SI_SDR_CLAMP_DB: f64 = 60.0;

const SI_SDR_EPS: f64 = 1e-10;

/// Mono sampled audio. Samples are `f64` in [-1, 1] for anything rendered to
/// disk; intermediate processing may exceed that range until a renderer
/// peak-normalizes.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl WaveBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if sample_rate_hz == 0 {
            return Err(Error::InvalidArgument(
                "sample rate must be positive".into(),
            ));
        }
        Ok(WaveBuffer {
            samples,
            sample_rate_hz,
        })
    }

    /// Buffer at the pipeline's canonical 16 kHz rate.
    pub fn from_samples(samples: Vec<f64>) -> Self {
        WaveBuffer {
            samples,
            sample_rate_hz: SAMPLE_RATE_HZ,
        }
    }

    pub fn silence(duration_s: f64, sample_rate_hz: u32) -> Self {
        let n = (duration_s * f64::from(sample_rate_hz)).round() as usize;
        WaveBuffer {
            samples: vec![0.0; n],
            sample_rate_hz,
        }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn is_all_zero(&self) -> bool {
        self.samples.iter().all(|&s| s == 0.0)
    }

    /// Sample index for a time offset, rounded.
    pub fn index_at(&self, time_s: f64) -> usize {
        (time_s * f64::from(self.sample_rate_hz)).round() as usize
    }

    pub fn slice(&self, start: usize, end: usize) -> WaveBuffer {
        WaveBuffer {
            samples: self.samples[start..end.min(self.samples.len())].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn scaled(&self, gain: f64) -> WaveBuffer {
        WaveBuffer {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    /// Elementwise sum; the shorter operand is treated as zero-padded.
    pub fn mixed_with(&self, other: &WaveBuffer) -> Result<WaveBuffer> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::SampleRateMismatch {
                left: self.sample_rate_hz,
                right: other.sample_rate_hz,
            });
        }
        let n = self.len().max(other.len());
        let mut out = vec![0.0; n];
        for (o, s) in out.iter_mut().zip(self.samples.iter()) {
            *o += s;
        }
        for (o, s) in out.iter_mut().zip(other.samples.iter()) {
            *o += s;
        }
        Ok(WaveBuffer {
            samples: out,
            sample_rate_hz: self.sample_rate_hz,
        })
    }

    /// Shift right by `offset` samples, zero-filling the front, optionally
    /// zero-padding to `total_len`.
    pub fn placed_at(&self, offset: usize, total_len: Option<usize>) -> WaveBuffer {
        let base = offset + self.len();
        let n = total_len.map_or(base, |t| t.max(base));
        let mut out = vec![0.0; n];
        out[offset..offset + self.len()].copy_from_slice(&self.samples);
        WaveBuffer {
            samples: out,
            sample_rate_hz: self.sample_rate_hz,
        }
    }
}

fn check_nonempty(w: &WaveBuffer, what: &'static str) -> Result<()> {
    if w.is_empty() {
        Err(Error::EmptySignal(what))
    } else {
        Ok(())
    }
}

/// RMS level in dB over the whole buffer or over the union of `[start_s, end_s]`
/// segments (overlapping segments count once). Silent input reports
/// [`RMS_FLOOR_DB`] rather than an error.
pub fn rms_db(w: &WaveBuffer, segments: Option<&[[f64; 2]]>) -> Result<f64> {
    check_nonempty(w, "rms_db")?;
    let (sum_sq, count) = match segments {
        None => (w.energy(), w.len()),
        Some(segs) => {
            let dur = w.duration_s();
            let mut spans: Vec<(usize, usize)> = Vec::with_capacity(segs.len());
            for seg in segs {
                let (start_s, end_s) = (seg[0], seg[1]);
                if start_s < 0.0 || end_s > dur + 1e-9 || start_s > end_s {
                    return Err(Error::InvalidArgument(format!(
                        "segment [{start_s}, {end_s}] outside buffer of {dur:.3} s"
                    )));
                }
                spans.push((
                    w.index_at(start_s).min(w.len()),
                    w.index_at(end_s).min(w.len()),
                ));
            }
            spans.sort_unstable();
            let mut sum = 0.0;
            let mut count = 0usize;
            let mut covered_to = 0usize;
            for (a, b) in spans {
                let a = a.max(covered_to);
                if a < b {
                    sum += w.samples[a..b].iter().map(|s| s * s).sum::<f64>();
                    count += b - a;
                    covered_to = b;
                }
            }
            (sum, count)
        }
    };
    if count == 0 || sum_sq == 0.0 {
        return Ok(RMS_FLOOR_DB);
    }
    let rms = (sum_sq / count as f64).sqrt();
    Ok((20.0 * rms.log10()).max(RMS_FLOOR_DB))
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to
/// +/-[`SI_SDR_CLAMP_DB`].
pub fn si_sdr(estimate: &WaveBuffer, reference: &WaveBuffer) -> Result<f64> {
    check_nonempty(estimate, "si_sdr estimate")?;
    check_nonempty(reference, "si_sdr reference")?;
    if estimate.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: estimate.len(),
            right: reference.len(),
            context: "si_sdr",
        });
    }
    if estimate.sample_rate_hz != reference.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            left: estimate.sample_rate_hz,
            right: reference.sample_rate_hz,
        });
    }
    let ref_energy = reference.energy();
    if ref_energy == 0.0 {
        return Err(Error::ZeroSignal("si_sdr reference"));
    }
    let dot: f64 = estimate
        .samples
        .iter()
        .zip(reference.samples.iter())
        .map(|(e, r)| e * r)
        .sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let error_energy: f64 = estimate
        .samples
        .iter()
        .zip(reference.samples.iter())
        .map(|(e, r)| {
            let d = e - alpha * r;
            d * d
        })
        .sum();
    let ratio = target_energy / (error_energy + SI_SDR_EPS);
    let db = if ratio > 0.0 {
        10.0 * ratio.log10()
    } else {
        -SI_SDR_CLAMP_DB
    };
    Ok(db.clamp(-SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))
}

/// SI-SDR improvement of `estimate` over the unprocessed `mixture`.
pub fn si_sdri(estimate: &WaveBuffer, reference: &WaveBuffer, mixture: &WaveBuffer) -> Result<f64> {
    Ok(si_sdr(estimate, reference)? - si_sdr(mixture, reference)?)
}

/// Gain that scales `signal` to the requested signal-to-interference ratio
/// against `interference` (energies over the full buffers).
pub fn sir_gain(signal: &WaveBuffer, interference: &WaveBuffer, sir_db: f64) -> Result<f64> {
    check_nonempty(signal, "scale_to_sir signal")?;
    check_nonempty(interference, "scale_to_sir interference")?;
    let sig_energy = signal.energy();
    let int_energy = interference.energy();
    if sig_energy == 0.0 {
        return Err(Error::ZeroSignal("scale_to_sir signal"));
    }
    if int_energy == 0.0 {
        return Err(Error::ZeroSignal("scale_to_sir interference"));
    }
    Ok(10f64.powf(sir_db / 20.0) * (int_energy / sig_energy).sqrt())
}

/// Scaled copy of `signal` whose energy ratio against `interference` is
/// `sir_db`.
pub fn scale_to_sir(
    signal: &WaveBuffer,
    interference: &WaveBuffer,
    sir_db: f64,
) -> Result<WaveBuffer> {
    Ok(signal.scaled(sir_gain(signal, interference, sir_db)?))
}

/// Measured SIR in dB between two components.
pub fn measure_sir(signal: &WaveBuffer, interference: &WaveBuffer) -> Result<f64> {
    let se = signal.energy();
    let ie = interference.energy();
    if se == 0.0 || ie == 0.0 {
        return Err(Error::ZeroSignal("measure_sir"));
    }
    Ok(10.0 * (se / ie).log10())
}

/// Full linear convolution; output length `len(w) + len(kernel) - 1`.
///
/// Small workloads run the direct sum; larger ones go through an FFT
/// overlap-free full-size transform. Both routes agree to ~1e-12 relative
/// error and the direct route doubles as the test oracle.
pub fn convolve(w: &WaveBuffer, kernel: &[f64]) -> Result<WaveBuffer> {
    if kernel.is_empty() {
        return Err(Error::EmptySignal("convolve kernel"));
    }
    check_nonempty(w, "convolve input")?;
    let cost = w.len() as u64 * kernel.len() as u64;
    let samples = if cost < 1_000_000 {
        convolve_direct(&w.samples, kernel)
    } else {
        convolve_fft(&w.samples, kernel)
    };
    Ok(WaveBuffer {
        samples,
        sample_rate_hz: w.sample_rate_hz,
    })
}

pub fn convolve_direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len() + h.len() - 1;
    let mut out = vec![0.0; n];
    for (i, &xi) in x.iter().enumerate() {
        if xi == 0.0 {
            continue;
        }
        for (j, &hj) in h.iter().enumerate() {
            out[i + j] += xi * hj;
        }
    }
    out
}

pub fn convolve_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    let fft_len = out_len.next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(fft_len);
    let inv = planner.plan_fft_inverse(fft_len);

    let spectrum = |data: &[f64], fwd: &Arc<dyn realfft::RealToComplex<f64>>| {
        let mut buf = vec![0.0; fft_len];
        buf[..data.len()].copy_from_slice(data);
        let mut spec = fwd.make_output_vec();
        fwd.process(&mut buf, &mut spec).expect("fft sizes match");
        spec
    };
    let xs = spectrum(x, &fwd);
    let hs = spectrum(h, &fwd);
    let mut prod: Vec<Complex<f64>> = xs.iter().zip(hs.iter()).map(|(a, b)| a * b).collect();
    let mut out = inv.make_output_vec();
    inv.process(&mut prod, &mut out).expect("fft sizes match");
    let scale = 1.0 / fft_len as f64;
    out.truncate(out_len);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Read a 16-bit PCM mono WAV at the canonical sample rate. Any other layout
/// is rejected with a diagnostic naming the offending property.
pub fn read_wav(path: &Path) -> Result<WaveBuffer> {
    let reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::WavFormat {
            property: "channels",
            actual: spec.channels.to_string(),
            expected: "1 (mono)".into(),
            path: path.to_path_buf(),
        });
    }
    if spec.sample_rate != SAMPLE_RATE_HZ {
        return Err(Error::WavFormat {
            property: "sample_rate",
            actual: spec.sample_rate.to_string(),
            expected: format!("{SAMPLE_RATE_HZ}"),
            path: path.to_path_buf(),
        });
    }
    if spec.bits_per_sample != 16 || spec.sample_format != hound::SampleFormat::Int {
        return Err(Error::WavFormat {
            property: "sample_format",
            actual: format!("{:?} {} bit", spec.sample_format, spec.bits_per_sample),
            expected: "Int 16 bit".into(),
            path: path.to_path_buf(),
        });
    }
    let samples: Vec<f64> = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<_, _>>()?;
    Ok(WaveBuffer {
        samples,
        sample_rate_hz: SAMPLE_RATE_HZ,
    })
}

/// Write a buffer as 16-bit PCM mono WAV. Samples must already satisfy the
/// rendered-amplitude invariant (|s| <= 1 + 1e-6).
pub fn write_wav(path: &Path, w: &WaveBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in &w.samples {
        if s.abs() > 1.0 + 1e-6 {
            return Err(Error::SampleOutOfRange {
                value: s,
                path: path.to_path_buf(),
            });
        }
        let v = (s * 32767.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
