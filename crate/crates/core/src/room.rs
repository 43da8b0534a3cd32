//! Room and source-position sampling plus image-source RIR synthesis.
//!
//! Shoebox rooms with uniform wall absorption; the microphone sits at the
//! geometric room center (height configurable). Sources are placed by
//! horizontal distance and azimuth around the microphone.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::wave::{convolve, WaveBuffer};
use crate::{SAMPLE_RATE_HZ, SPEED_OF_SOUND_M_S};

/// Half-width of the fractional-delay windowed sinc, in taps.
const SINC_HALF_WIDTH: usize = 16;

/// Sampling ranges for rooms and source placements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomRanges {
    pub length_m: [f64; 2],
    pub width_m: [f64; 2],
    pub height_m: [f64; 2],
    pub rt60_s: [f64; 2],
    pub source_distance_m: [f64; 2],
    pub source_height_m: [f64; 2],
    /// Microphone height; the room's half-height when absent.
    pub mic_height_m: Option<f64>,
    pub max_order: u32,
}

impl Default for RoomRanges {
    fn default() -> Self {
        RoomRanges {
            length_m: [9.0, 11.0],
            width_m: [9.0, 11.0],
            height_m: [2.6, 3.5],
            rt60_s: [0.3, 0.6],
            source_distance_m: [0.3, 1.5],
            source_height_m: [1.6, 1.9],
            mic_height_m: None,
            max_order: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub length_m: f64,
    pub width_m: f64,
    pub height_m: f64,
    pub rt60_s: f64,
    pub mic_height_m: f64,
}

impl RoomSpec {
    pub fn mic_position(&self) -> [f64; 3] {
        [self.length_m / 2.0, self.width_m / 2.0, self.mic_height_m]
    }

    pub fn volume(&self) -> f64 {
        self.length_m * self.width_m * self.height_m
    }

    pub fn surface_area(&self) -> f64 {
        2.0 * (self.length_m * self.width_m
            + self.length_m * self.height_m
            + self.width_m * self.height_m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourcePlacement {
    pub horizontal_distance_m: f64,
    pub azimuth_rad: f64,
    pub source_height_m: f64,
}

impl SourcePlacement {
    pub fn position(&self, room: &RoomSpec) -> [f64; 3] {
        let mic = room.mic_position();
        [
            mic[0] + self.horizontal_distance_m * self.azimuth_rad.cos(),
            mic[1] + self.horizontal_distance_m * self.azimuth_rad.sin(),
            self.source_height_m,
        ]
    }

    /// Euclidean (3-D) source-to-microphone distance; the direct-path delay
    /// follows this, while the distance *attribute* is the horizontal one.
    pub fn direct_distance_m(&self, room: &RoomSpec) -> f64 {
        let mic = room.mic_position();
        let pos = self.position(room);
        ((pos[0] - mic[0]).powi(2) + (pos[1] - mic[1]).powi(2) + (pos[2] - mic[2]).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rir {
    pub taps: Vec<f64>,
    pub direct_path_index: usize,
}

pub fn sample_room(rng: &mut ChaCha8Rng, ranges: &RoomRanges) -> RoomSpec {
    let length_m = rng.random_range(ranges.length_m[0]..=ranges.length_m[1]);
    let width_m = rng.random_range(ranges.width_m[0]..=ranges.width_m[1]);
    let height_m = rng.random_range(ranges.height_m[0]..=ranges.height_m[1]);
    let rt60_s = rng.random_range(ranges.rt60_s[0]..=ranges.rt60_s[1]);
    RoomSpec {
        length_m,
        width_m,
        height_m,
        rt60_s,
        mic_height_m: ranges.mic_height_m.unwrap_or(height_m / 2.0),
    }
}

/// Sample a placement, re-drawing the azimuth until the source sits inside
/// the walls with a 0.1 m margin (cannot fail for the default ranges, but
/// guarded anyway).
pub fn sample_placement(
    rng: &mut ChaCha8Rng,
    room: &RoomSpec,
    ranges: &RoomRanges,
) -> Result<SourcePlacement> {
    let distance = rng.random_range(ranges.source_distance_m[0]..=ranges.source_distance_m[1]);
    let height = rng.random_range(ranges.source_height_m[0]..=ranges.source_height_m[1]);
    for _ in 0..100 {
        let azimuth = rng.random_range(0.0..2.0 * PI);
        let placement = SourcePlacement {
            horizontal_distance_m: distance,
            azimuth_rad: azimuth,
            source_height_m: height,
        };
        let pos = placement.position(room);
        let margin = 0.1;
        if pos[0] >= margin
            && pos[0] <= room.length_m - margin
            && pos[1] >= margin
            && pos[1] <= room.width_m - margin
            && pos[2] >= margin
            && pos[2] <= room.height_m - margin
        {
            return Ok(placement);
        }
    }
    Err(Error::InvalidArgument(
        "no in-room source position found in 100 attempts".into(),
    ))
}

/// Sabine absorption coefficient for the room's target RT60, clamped to
/// (0, 0.99].
pub fn rt60_to_absorption(room: &RoomSpec) -> Result<f64> {
    if room.rt60_s <= 0.0 {
        return Err(Error::InvalidArgument("rt60 must be positive".into()));
    }
    let alpha = 0.161 * room.volume() / (room.rt60_s * room.surface_area());
    Ok(alpha.clamp(f64::MIN_POSITIVE, 0.99))
}

/// Visit every image source up to `max_order` whose delay can land inside
/// `max_dist`, yielding `(wall_hits, distance_m)`.
fn for_each_image(
    room: &RoomSpec,
    placement: &SourcePlacement,
    max_order: u32,
    max_dist: f64,
    mut visit: impl FnMut(u32, f64),
) {
    let mic = room.mic_position();
    let src = placement.position(room);
    let half_order = (max_order as i64 + 1) / 2;
    let bound = |dim: f64| -> i64 { ((max_dist / (2.0 * dim)).ceil() as i64).min(half_order) };
    let (nx, ny, nz) = (
        bound(room.length_m),
        bound(room.width_m),
        bound(room.height_m),
    );

    for mx in -nx..=nx {
        for my in -ny..=ny {
            for mz in -nz..=nz {
                for q in 0..=1i64 {
                    for j in 0..=1i64 {
                        for k in 0..=1i64 {
                            let order =
                                (2 * mx - q).abs() + (2 * my - j).abs() + (2 * mz - k).abs();
                            if order > i64::from(max_order) {
                                continue;
                            }
                            let dx = (1 - 2 * q) as f64 * src[0] - mic[0]
                                + 2.0 * mx as f64 * room.length_m;
                            let dy = (1 - 2 * j) as f64 * src[1] - mic[1]
                                + 2.0 * my as f64 * room.width_m;
                            let dz = (1 - 2 * k) as f64 * src[2] - mic[2]
                                + 2.0 * mz as f64 * room.height_m;
                            let dist = (dx * dx + dy * dy + dz * dz).sqrt();
                            if dist <= max_dist {
                                visit(order as u32, dist);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// T60 of a binned energy-decay curve via a least-squares fit of the
/// Schroeder integral between -5 and -25 dB.
fn edc_t60(energy_bins: &[f64], bin_s: f64) -> Option<f64> {
    let total: f64 = energy_bins.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let mut acc = 0.0;
    let mut edc: Vec<f64> = energy_bins
        .iter()
        .rev()
        .map(|e| {
            acc += e;
            acc
        })
        .collect();
    edc.reverse();
    let mut n = 0.0f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for (i, e) in edc.iter().enumerate() {
        let db = 10.0 * (e / total).log10();
        if (-25.0..=-5.0).contains(&db) {
            let t = i as f64 * bin_s;
            n += 1.0;
            sx += t;
            sy += db;
            sxx += t * t;
            sxy += t * db;
        }
    }
    if n < 5.0 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    if slope >= 0.0 {
        return None;
    }
    Some(-60.0 / slope)
}

/// Uniform wall reflectivity calibrated so the image set's own energy decay
/// hits the requested RT60.
///
/// A single Sabine or Eyring coefficient undershoots the decay time in these
/// flat rooms: the late field is carried by near-horizontal image paths that
/// cross few walls per meter. Binning the image energies by arrival time and
/// bisecting on the reflectivity pins the Schroeder slope to the target.
fn calibrated_reflectivity(room: &RoomSpec, placement: &SourcePlacement, max_order: u32) -> f64 {
    const BIN_S: f64 = 0.002;
    let c = SPEED_OF_SOUND_M_S;
    let direct = placement.direct_distance_m(room);
    let max_dist = (room.rt60_s * 1.2 + direct / c) * c;
    let n_bins = (max_dist / c / BIN_S).ceil() as usize + 1;

    // weights[bin][order] = sum of 1/(4 pi d)^2 for images arriving in bin.
    let max_order = max_order.min(60);
    let mut weights = vec![vec![0.0f64; max_order as usize + 1]; n_bins];
    for_each_image(room, placement, max_order, max_dist, |order, dist| {
        let bin = (dist / c / BIN_S) as usize;
        if bin < n_bins {
            let a = 1.0 / (4.0 * PI * dist.max(1e-3));
            weights[bin][order as usize] += a * a;
        }
    });

    let t60_for = |beta: f64| -> Option<f64> {
        let bins: Vec<f64> = weights
            .iter()
            .map(|per_order| {
                per_order
                    .iter()
                    .enumerate()
                    .map(|(o, w)| w * beta.powi(2 * o as i32))
                    .sum()
            })
            .collect();
        edc_t60(&bins, BIN_S)
    };

    let (mut lo, mut hi) = (0.05f64, 0.999f64);
    match t60_for(hi) {
        Some(t) if t < room.rt60_s => return hi,
        _ => {}
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        match t60_for(mid) {
            Some(t) if t > room.rt60_s => hi = mid,
            Some(_) => lo = mid,
            None => lo = mid,
        }
    }
    0.5 * (lo + hi)
}

/// Image-source room impulse response at 16 kHz.
///
/// Each image contributes an attenuated, distance-delayed impulse: reflection
/// gain `(1 - alpha)^(order/2)` per wall hit, `1/(4*pi*d)` spherical
/// spreading, and a Hann-windowed sinc for the fractional delay. The response
/// covers the RT60 plus the direct delay. Wall reflectivity comes from
/// [`calibrated_reflectivity`] so the rendered decay matches `rt60_s`.
pub fn image_source_rir(
    room: &RoomSpec,
    placement: &SourcePlacement,
    max_order: u32,
) -> Result<Rir> {
    if room.rt60_s <= 0.0 {
        return Err(Error::InvalidArgument("rt60 must be positive".into()));
    }
    let fs = f64::from(SAMPLE_RATE_HZ);
    let c = SPEED_OF_SOUND_M_S;
    let direct = placement.direct_distance_m(room);
    let beta = if max_order == 0 {
        0.0
    } else {
        calibrated_reflectivity(room, placement, max_order)
    };

    let direct_delay = direct / c * fs;
    let len = ((room.rt60_s + direct / c) * fs).ceil() as usize + SINC_HALF_WIDTH + 1;
    let max_dist = len as f64 / fs * c;
    let mut taps = vec![0.0f64; len];

    for_each_image(room, placement, max_order, max_dist, |order, dist| {
        let delay = dist / c * fs;
        let gain = beta.powi(order as i32) / (4.0 * PI * dist.max(1e-3));
        if order == 0 || gain.abs() > 0.0 {
            add_windowed_sinc(&mut taps, delay, gain);
        }
    });

    // All image gains are positive, so the dense late field piles up
    // coherently at DC and stretches the measured decay; the usual 100 Hz
    // image-method high-pass removes it. A free-field response has no pileup
    // and is left untouched.
    if max_order > 0 {
        highpass_100hz(&mut taps, fs);
    }

    Ok(Rir {
        taps,
        direct_path_index: direct_delay.round() as usize,
    })
}

fn highpass_100hz(taps: &mut [f64], fs: f64) {
    let w = 2.0 * PI * 100.0 / fs;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut y1, mut y2) = (0.0f64, 0.0f64);
    for t in taps.iter_mut() {
        let y0 = *t + b1 * y1 + b2 * y2;
        *t = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}

/// Accumulate `gain * hann_sinc(t - delay)` over the integer taps around
/// `delay`. One sin/cos pair per call; the window recurrence covers the rest.
fn add_windowed_sinc(taps: &mut [f64], delay: f64, gain: f64) {
    let hw = SINC_HALF_WIDTH as i64;
    let i0 = delay.floor() as i64;
    let t_lo = (i0 - hw + 1).max(0);
    let t_hi = (i0 + hw).min(taps.len() as i64 - 1);
    if t_lo > t_hi {
        return;
    }
    let frac = delay - i0 as f64;

    // sin(pi*(t - delay)) = (-1)^(t - i0) * (-sin(pi*frac)) for integer t.
    let sin_pi_frac = (PI * frac).sin();

    // Hann window over width 2*(hw+1), evaluated by angle recurrence.
    let wstep = PI / (hw as f64 + 1.0);
    let u0 = t_lo as f64 - delay;
    let (mut wsin, mut wcos) = (wstep * u0).sin_cos();
    let (dsin, dcos) = wstep.sin_cos();

    let mut sign = if (t_lo - i0) % 2 == 0 { -1.0 } else { 1.0 };
    for t in t_lo..=t_hi {
        let u = t as f64 - delay;
        let sinc = if u.abs() < 1e-9 {
            1.0
        } else {
            sign * sin_pi_frac / (PI * u)
        };
        let window = 0.5 * (1.0 + wcos);
        taps[t as usize] += gain * window * sinc;

        sign = -sign;
        let (ns, nc) = (wsin * dcos + wcos * dsin, wcos * dcos - wsin * dsin);
        wsin = ns;
        wcos = nc;
    }
}

/// Source convolved with its room response; keeps the full reverberant tail.
pub fn apply_rir(w: &WaveBuffer, rir: &Rir) -> Result<WaveBuffer> {
    convolve(w, &rir.taps)
}

const CACHE_MAGIC: &[u8; 4] = b"RIRC";

/// Content key for the on-disk cache.
pub fn cache_key(room: &RoomSpec, placement: &SourcePlacement, max_order: u32) -> String {
    let text = format!(
        "{:.9}|{:.9}|{:.9}|{:.9}|{:.9}|{:.9}|{:.9}|{:.9}|{max_order}",
        room.length_m,
        room.width_m,
        room.height_m,
        room.rt60_s,
        room.mic_height_m,
        placement.horizontal_distance_m,
        placement.azimuth_rad,
        placement.source_height_m,
    );
    format!("{:016x}", crate::rng::stable_hash(&text))
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("rir_{key}.bin"))
}

/// Write taps as 32-bit floats with a small header (magic, sample rate, count).
pub fn save_cached_rir(path: &Path, rir: &Rir) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io_at(path, e))?;
    file.write_all(CACHE_MAGIC)?;
    file.write_all(&SAMPLE_RATE_HZ.to_le_bytes())?;
    file.write_all(&(rir.taps.len() as u64).to_le_bytes())?;
    for &t in &rir.taps {
        file.write_all(&(t as f32).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_cached_rir(path: &Path, direct_path_index: usize) -> Result<Rir> {
    let mut file = std::fs::File::open(path).map_err(|e| Error::io_at(path, e))?;
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(Error::StoreFormat(format!(
            "{}: bad magic {magic:?}",
            path.display()
        )));
    }
    let mut u32buf = [0u8; 4];
    file.read_exact(&mut u32buf)?;
    let fs = u32::from_le_bytes(u32buf);
    if fs != SAMPLE_RATE_HZ {
        return Err(Error::StoreFormat(format!(
            "{}: cached at {fs} Hz, expected {SAMPLE_RATE_HZ}",
            path.display()
        )));
    }
    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf)?;
    let count = u64::from_le_bytes(u64buf) as usize;
    let mut taps = Vec::with_capacity(count);
    for _ in 0..count {
        file.read_exact(&mut u32buf)?;
        taps.push(f64::from(f32::from_le_bytes(u32buf)));
    }
    Ok(Rir {
        taps,
        direct_path_index,
    })
}

/// RIR via the cache directory when one is configured.
pub fn rir_with_cache(
    cache_dir: Option<&Path>,
    room: &RoomSpec,
    placement: &SourcePlacement,
    max_order: u32,
) -> Result<Rir> {
    let Some(dir) = cache_dir else {
        return image_source_rir(room, placement, max_order);
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
    let path = cache_path(dir, &cache_key(room, placement, max_order));
    if path.exists() {
        let fs = f64::from(SAMPLE_RATE_HZ);
        let direct = placement.direct_distance_m(room) / SPEED_OF_SOUND_M_S * fs;
        return load_cached_rir(&path, direct.round() as usize);
    }
    let rir = image_source_rir(room, placement, max_order)?;
    save_cached_rir(&path, &rir)?;
    Ok(rir)
}
