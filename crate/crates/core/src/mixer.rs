//! Two-speaker reverberant mixture assembly: silence trimming, temporal
//! overlap planning, SIR scaling, rendering, and oracle separation.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attributes::{detect_speech_segments, UtteranceMeta};
use crate::error::{Error, Result};
use crate::room::{apply_rir, image_source_rir, RoomSpec, SourcePlacement};
use crate::wave::{measure_sir, si_sdr, sir_gain, WaveBuffer};

/// Everything needed to re-render one mixture deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub s1_id: String,
    pub s2_id: String,
    pub offset1_s: f64,
    pub offset2_s: f64,
    pub overlap_s: f64,
    /// True when the overlap formula exceeded the geometric maximum and was
    /// capped at the shorter length.
    pub overlap_capped: bool,
    /// 1 or 2: which source is the extraction target.
    pub target_index: u8,
    pub sir_db: f64,
    pub room: RoomSpec,
    pub placement1: SourcePlacement,
    pub placement2: SourcePlacement,
    pub max_order: u32,
    pub seed: u64,
}

/// Rendered signals for one mixture; channels follow source order, the
/// target/interference split follows `plan.target_index`.
#[derive(Debug, Clone)]
pub struct RenderedMixture {
    pub plan: MixturePlan,
    pub mixture: WaveBuffer,
    pub rev1: WaveBuffer,
    pub rev2: WaveBuffer,
    /// Joint gain applied to mixture and components at the final peak
    /// normalization.
    pub norm_gain: f64,
}

impl RenderedMixture {
    pub fn rev_target(&self) -> &WaveBuffer {
        if self.plan.target_index == 1 {
            &self.rev1
        } else {
            &self.rev2
        }
    }

    pub fn rev_interference(&self) -> &WaveBuffer {
        if self.plan.target_index == 1 {
            &self.rev2
        } else {
            &self.rev1
        }
    }
}

/// Result of cutting leading/trailing silence.
#[derive(Debug, Clone)]
pub struct Trimmed {
    pub buffer: WaveBuffer,
    pub start_s: f64,
    pub end_s: f64,
}

/// Cut an utterance to its speech envelope: word boundaries when available,
/// the energy-VAD envelope otherwise. Pure silence is an error.
pub fn trim_silence(w: &WaveBuffer, meta: &UtteranceMeta) -> Result<Trimmed> {
    let (start_s, end_s) = match &meta.word_boundaries {
        Some(words) if !words.is_empty() => (words[0].start_s, words[words.len() - 1].end_s),
        _ => {
            let segments = detect_speech_segments(w);
            match (segments.first(), segments.last()) {
                (Some(first), Some(last)) => (first[0], last[1]),
                _ => return Err(Error::NoSpeech("trim_silence")),
            }
        }
    };
    let a = w.index_at(start_s).min(w.len());
    let b = w.index_at(end_s).min(w.len());
    if a >= b {
        return Err(Error::NoSpeech("trim_silence"));
    }
    Ok(Trimmed {
        buffer: w.slice(a, b),
        start_s,
        end_s,
    })
}

/// Temporal arrangement of two trimmed sources.
///
/// When either source is shorter than 3 s the overlap is the shorter length
/// and the shorter source starts at a random offset inside the longer one.
/// Otherwise the second source starts at `6 - len2` (clamped at zero) and the
/// overlap is `len1 + len2 - 6`, capped at the shorter length when a source
/// runs past 6 s.
pub fn plan_overlap(
    len1_s: f64,
    len2_s: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64, f64, bool)> {
    if len1_s <= 0.0 || len2_s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "source lengths must be positive, got ({len1_s}, {len2_s})"
        )));
    }
    let shorter = len1_s.min(len2_s);
    if shorter < 3.0 {
        let slack = (len1_s - len2_s).abs();
        let offset = if slack > 0.0 {
            rng.random_range(0.0..=slack)
        } else {
            0.0
        };
        let (offset1, offset2) = if len1_s <= len2_s {
            (offset, 0.0)
        } else {
            (0.0, offset)
        };
        return Ok((offset1, offset2, shorter, false));
    }
    let offset2 = (6.0 - len2_s).max(0.0);
    let raw = len1_s + len2_s - 6.0;
    let capped = raw > shorter;
    Ok((0.0, offset2, raw.min(shorter), capped))
}

/// Overlap of the two placed dry intervals, for validation.
pub fn realized_overlap_s(plan: &MixturePlan, len1_s: f64, len2_s: f64) -> f64 {
    let end1 = plan.offset1_s + len1_s;
    let end2 = plan.offset2_s + len2_s;
    (end1.min(end2) - plan.offset1_s.max(plan.offset2_s)).max(0.0)
}

/// Convolve, place, scale to the planned SIR, sum, and jointly
/// peak-normalize. The stored components always sum to the mixture.
pub fn render_mixture(
    plan: &MixturePlan,
    w1: &WaveBuffer,
    w2: &WaveBuffer,
) -> Result<RenderedMixture> {
    let sample_period = 1.0 / f64::from(w1.sample_rate_hz());
    let realized = realized_overlap_s(plan, w1.duration_s(), w2.duration_s());
    if (realized - plan.overlap_s).abs() > sample_period {
        return Err(Error::Dataset(format!(
            "plan overlap {:.6} s inconsistent with trimmed lengths (realized {realized:.6} s)",
            plan.overlap_s
        )));
    }

    let rir1 = image_source_rir(&plan.room, &plan.placement1, plan.max_order)?;
    let rir2 = image_source_rir(&plan.room, &plan.placement2, plan.max_order)?;
    let rev1 = apply_rir(w1, &rir1)?;
    let rev2 = apply_rir(w2, &rir2)?;

    let off1 = w1.index_at(plan.offset1_s);
    let off2 = w2.index_at(plan.offset2_s);
    let total = (off1 + rev1.len()).max(off2 + rev2.len());
    let placed1 = rev1.placed_at(off1, Some(total));
    let placed2 = rev2.placed_at(off2, Some(total));

    // Reverberant S2 is fixed; S1 is scaled to the planned SIR.
    let gain1 = sir_gain(&placed1, &placed2, plan.sir_db)?;
    let placed1 = placed1.scaled(gain1);

    let mixture = placed1.mixed_with(&placed2)?;
    let peak = mixture.peak().max(placed1.peak()).max(placed2.peak());
    let norm_gain = if peak > 1.0 { 1.0 / peak } else { 1.0 };

    Ok(RenderedMixture {
        plan: plan.clone(),
        mixture: mixture.scaled(norm_gain),
        rev1: placed1.scaled(norm_gain),
        rev2: placed2.scaled(norm_gain),
        norm_gain,
    })
}

/// Stand-in for a neural separator: returns the true reverberant components,
/// optionally with controlled cross-talk at the given per-channel
/// signal-to-leak ratio.
pub fn oracle_separate(
    rendered: &RenderedMixture,
    leak_db: Option<f64>,
) -> Result<(WaveBuffer, WaveBuffer)> {
    match leak_db {
        None => Ok((rendered.rev1.clone(), rendered.rev2.clone())),
        Some(db) if db > 0.0 => {
            let e1 = rendered.rev1.energy();
            let e2 = rendered.rev2.energy();
            if e1 == 0.0 || e2 == 0.0 {
                return Err(Error::ZeroSignal("oracle_separate leak"));
            }
            let g1 = (e1 / e2).sqrt() * 10f64.powf(-db / 20.0);
            let g2 = (e2 / e1).sqrt() * 10f64.powf(-db / 20.0);
            let s1 = rendered.rev1.mixed_with(&rendered.rev2.scaled(g1))?;
            let s2 = rendered.rev2.mixed_with(&rendered.rev1.scaled(g2))?;
            Ok((s1, s2))
        }
        Some(db) => Err(Error::InvalidArgument(format!(
            "leak_db must be positive, got {db}"
        ))),
    }
}

/// Measured SIR of the stored components, channel 1 against channel 2.
pub fn measured_sir_db(rendered: &RenderedMixture) -> Result<f64> {
    measure_sir(&rendered.rev1, &rendered.rev2)
}

/// SI-SDR of each oracle-separated channel against its own component.
pub fn separation_quality(
    rendered: &RenderedMixture,
    s1: &WaveBuffer,
    s2: &WaveBuffer,
) -> Result<(f64, f64)> {
    Ok((si_sdr(s1, &rendered.rev1)?, si_sdr(s2, &rendered.rev2)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attributes::test_util::{meta, tone};
    use crate::rng::stream_rng;
    use crate::room::RoomRanges;
    use crate::room::{sample_placement, sample_room};
    use crate::wave::SI_SDR_CLAMP_DB;

    fn padded(pre_s: f64, tone_s: f64, post_s: f64) -> WaveBuffer {
        let fs = f64::from(crate::SAMPLE_RATE_HZ);
        let mut samples = vec![0.0; (pre_s * fs) as usize];
        samples.extend_from_slice(tone(220.0, tone_s, 0.5).samples());
        samples.extend(vec![0.0; (post_s * fs) as usize]);
        WaveBuffer::from_samples(samples)
    }

    fn test_plan(seed: u64, len1_s: f64, len2_s: f64) -> (MixturePlan, WaveBuffer, WaveBuffer) {
        let ranges = RoomRanges::default();
        let mut rng = stream_rng(seed, "mixer-test", 0);
        let room = sample_room(&mut rng, &ranges);
        let placement1 = sample_placement(&mut rng, &room, &ranges).unwrap();
        let placement2 = sample_placement(&mut rng, &room, &ranges).unwrap();
        let (offset1_s, offset2_s, overlap_s, overlap_capped) =
            plan_overlap(len1_s, len2_s, &mut rng).unwrap();
        let sir_db = rng.random_range(-6.0..=6.0);
        let plan = MixturePlan {
            s1_id: "u1".into(),
            s2_id: "u2".into(),
            offset1_s,
            offset2_s,
            overlap_s,
            overlap_capped,
            target_index: if rng.random_range(0..2) == 0 { 1 } else { 2 },
            sir_db,
            room,
            placement1,
            placement2,
            max_order: 8,
            seed,
        };
        let w1 = tone(210.0, len1_s, 0.4);
        let w2 = tone(150.0, len2_s, 0.4);
        (plan, w1, w2)
    }

    #[test]
    fn trim_removes_padding_and_is_idempotent() {
        let w = padded(0.5, 1.0, 0.4);
        let m = meta("u", "s");
        let t = trim_silence(&w, &m).unwrap();
        assert!((t.start_s - 0.5).abs() <= 0.03, "{}", t.start_s);
        assert!((t.end_s - 1.5).abs() <= 0.03, "{}", t.end_s);

        let again = trim_silence(&t.buffer, &m).unwrap();
        assert!(again.start_s <= 0.011);
        assert!((again.end_s - t.buffer.duration_s()).abs() <= 0.011 + 0.03);
    }

    #[test]
    fn trim_uses_word_boundaries_when_present() {
        let w = padded(0.5, 1.0, 0.5);
        let mut m = meta("u", "s");
        m.word_boundaries = Some(vec![crate::attributes::WordBoundary {
            word: "tone".into(),
            start_s: 0.5,
            end_s: 1.5,
        }]);
        let t = trim_silence(&w, &m).unwrap();
        assert_eq!(t.start_s, 0.5);
        assert_eq!(t.end_s, 1.5);
        assert_eq!(t.buffer.len(), 16000);
    }

    #[test]
    fn trim_errors_on_silence() {
        let w = WaveBuffer::from_samples(vec![0.0; 16000]);
        assert!(trim_silence(&w, &meta("u", "s")).is_err());
    }

    #[test]
    fn plan_overlap_formula_cases() {
        let mut rng = stream_rng(0, "plan", 0);
        // Long branch: 5 + 4 - 6 = 3, S2 offset 2.
        let (o1, o2, ov, capped) = plan_overlap(5.0, 4.0, &mut rng).unwrap();
        assert_eq!((o1, o2, ov, capped), (0.0, 2.0, 3.0, false));

        // Short branch: overlap is the shorter length, offset within slack.
        for _ in 0..20 {
            let (o1, o2, ov, _) = plan_overlap(5.0, 2.0, &mut rng).unwrap();
            assert_eq!(o1, 0.0);
            assert!((0.0..=3.0).contains(&o2));
            assert_eq!(ov, 2.0);
        }

        // Boundary: both exactly 3 s.
        let (o1, o2, ov, capped) = plan_overlap(3.0, 3.0, &mut rng).unwrap();
        assert_eq!((o1, o2, ov, capped), (0.0, 3.0, 0.0, false));

        // Cap engages when a source is longer than 6 s.
        let (_, o2, ov, capped) = plan_overlap(7.0, 5.0, &mut rng).unwrap();
        assert_eq!(o2, 1.0);
        assert_eq!(ov, 5.0);
        assert!(capped);

        assert!(plan_overlap(0.0, 2.0, &mut rng).is_err());
    }

    #[test]
    fn render_hits_planned_sir_and_reconstructs() {
        for seed in 0..5 {
            let (plan, w1, w2) = test_plan(seed, 4.0, 3.5);
            let rendered = render_mixture(&plan, &w1, &w2).unwrap();
            let sir = measured_sir_db(&rendered).unwrap();
            assert!((sir - plan.sir_db).abs() < 0.1, "{sir} vs {}", plan.sir_db);

            let sum = rendered.rev1.mixed_with(&rendered.rev2).unwrap();
            for (a, b) in sum.samples().iter().zip(rendered.mixture.samples()) {
                assert!((a - b).abs() < 1e-6);
            }
            assert!(rendered.mixture.peak() <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn render_is_deterministic() {
        let (plan, w1, w2) = test_plan(11, 3.2, 3.1);
        let a = render_mixture(&plan, &w1, &w2).unwrap();
        let b = render_mixture(&plan, &w1, &w2).unwrap();
        assert_eq!(a.mixture.samples(), b.mixture.samples());
    }

    #[test]
    fn render_rejects_inconsistent_plan() {
        let (mut plan, w1, w2) = test_plan(3, 4.0, 3.5);
        plan.overlap_s += 0.5;
        assert!(render_mixture(&plan, &w1, &w2).is_err());
    }

    #[test]
    fn oracle_perfect_mode_hits_clamp() {
        let (plan, w1, w2) = test_plan(7, 3.5, 3.2);
        let rendered = render_mixture(&plan, &w1, &w2).unwrap();
        let (s1, s2) = oracle_separate(&rendered, None).unwrap();
        assert_eq!(si_sdr(&s1, &rendered.rev1).unwrap(), SI_SDR_CLAMP_DB);
        assert_eq!(si_sdr(&s2, &rendered.rev2).unwrap(), SI_SDR_CLAMP_DB);
    }

    #[test]
    fn oracle_leak_mode_ratios() {
        let (plan, w1, w2) = test_plan(9, 3.5, 3.2);
        let rendered = render_mixture(&plan, &w1, &w2).unwrap();
        let (s1, s2) = oracle_separate(&rendered, Some(20.0)).unwrap();

        // Leak component at 20 dB below the channel signal.
        let leak1 = s1
            .samples()
            .iter()
            .zip(rendered.rev1.samples())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>();
        let leak_energy: f64 = leak1.iter().map(|v| v * v).sum();
        let ratio = 10.0 * (rendered.rev1.energy() / leak_energy).log10();
        assert!((ratio - 20.0).abs() < 0.1, "{ratio}");

        let q1 = si_sdr(&s1, &rendered.rev1).unwrap();
        let q2 = si_sdr(&s2, &rendered.rev2).unwrap();
        assert!((q1 - 20.0).abs() < 1.0, "{q1}");
        assert!((q2 - 20.0).abs() < 1.0, "{q2}");

        assert!(oracle_separate(&rendered, Some(0.0)).is_err());
        assert!(oracle_separate(&rendered, Some(-3.0)).is_err());
    }
}
