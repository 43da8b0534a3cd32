//! Acceptance suite: one test per release criterion, each printing a
//! `PASS <criterion>` line (visible with `--nocapture`).
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::path::PathBuf;
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use relcue_core::analysis::{logistic_fit_1d, wilson_interval, CueType, EvalRow};
use relcue_core::attributes::{estimate_f0_track, mean_f0, syllables::count_syllables, Language};
use relcue_core::classifier::{
    batch_loss_and_grad, bce_loss, logit, pit_assign, predict_prob, ClassifierConfig,
    ProjectionHead, TrainSample,
};
use relcue_core::config::PipelineConfig;
use relcue_core::cues::{relative_category, Attribute, CueKind, DiffMode, ThresholdTable};
use relcue_core::mixer::{plan_overlap, render_mixture, MixturePlan};
use relcue_core::pipeline::{
    build_provider, evaluate, generate_prompts, label_cues, save_eval_rows, simulate, MixtureMeta,
};
use relcue_core::prompts::PromptConfig;
use relcue_core::rng::stream_rng;
use relcue_core::room::{image_source_rir, sample_placement, sample_room, RoomRanges};
use relcue_core::wave::{measure_sir, si_sdr, WaveBuffer};
use relcue_core::SPEED_OF_SOUND_M_S;

use common::{noise, schroeder_t60, synth_corpus, tone};

#[test]
fn acceptance_si_sdr_scale_invariance() {
    let start = Instant::now();
    for case in 0..1000u64 {
        let mut rng = stream_rng(case, "acc-sisdr", 0);
        let n = 1600;
        let est = WaveBuffer::from_samples((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let reference =
            WaveBuffer::from_samples((0..n).map(|_| rng.random_range(-1.0..1.0)).collect());
        let base = si_sdr(&est, &reference).unwrap();
        for alpha in [-2.0, 0.1, 3.0] {
            let scaled = si_sdr(&est.scaled(alpha), &reference).unwrap();
            assert!(
                (scaled - base).abs() < 1e-6,
                "case {case}, alpha {alpha}: {base} vs {scaled}"
            );
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
    println!("PASS si-sdr scale invariance: 1000 pairs x 3 scales, {elapsed:?}");
}

#[test]
fn acceptance_pit_oracle_equivalence() {
    let mut agree = 0usize;
    for case in 0..1000u64 {
        let r1 = noise(case * 4, 512, 0.8);
        let r2 = noise(case * 4 + 1, 512, 0.8);
        let e1 = r1.mixed_with(&noise(case * 4 + 2, 512, 0.6)).unwrap();
        let e2 = r2.mixed_with(&noise(case * 4 + 3, 512, 0.6)).unwrap();
        let (perm, _) = pit_assign([&e1, &e2], [&r1, &r2]).unwrap();

        // Exhaustive two-permutation search, written independently.
        let identity = si_sdr(&e1, &r1).unwrap() + si_sdr(&e2, &r2).unwrap();
        let swapped = si_sdr(&e2, &r1).unwrap() + si_sdr(&e1, &r2).unwrap();
        let brute = if identity >= swapped { [0, 1] } else { [1, 0] };
        if perm == brute {
            agree += 1;
        }
    }
    assert_eq!(agree, 1000);
    println!("PASS pit oracle equivalence: 1000/1000 match exhaustive search");
}

#[test]
fn acceptance_cue_antisymmetry() {
    let thresholds = ThresholdTable::default();
    for case in 0..10_000u64 {
        let mut rng = stream_rng(case, "acc-anti", 0);
        for attribute in Attribute::CONTINUOUS {
            let entry = thresholds.get(attribute).unwrap();
            let (x, y) = match entry.mode {
                DiffMode::Direct => (rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)),
                DiffMode::Percent => (rng.random_range(0.5..500.0), rng.random_range(0.5..500.0)),
            };
            let ab = relative_category(attribute, x, y, &thresholds).unwrap();
            let ba = relative_category(attribute, y, x, &thresholds).unwrap();
            let (greater, lesser) = attribute.relative_names().unwrap();
            let ok = match ab.category.as_str() {
                "similar" => ba.category == "similar",
                c if c == greater => ba.category == lesser,
                _ => ba.category == greater,
            };
            assert!(
                ok,
                "{attribute}: ({x}, {y}) -> {} / {}",
                ab.category, ba.category
            );
        }
    }

    // Exact-boundary pairs land on "similar" for every attribute.
    for attribute in Attribute::CONTINUOUS {
        let entry = thresholds.get(attribute).unwrap();
        let (x_inf, x_tar) = match entry.mode {
            DiffMode::Direct => (10.0, 10.0 + entry.theta),
            DiffMode::Percent => (100.0, 100.0 + entry.theta),
        };
        let label = relative_category(attribute, x_tar, x_inf, &thresholds).unwrap();
        assert_eq!(label.category, "similar", "{attribute} boundary");
        let swapped = relative_category(attribute, x_inf, x_tar, &thresholds).unwrap();
        assert_eq!(swapped.category, "similar", "{attribute} boundary swapped");
    }
    println!("PASS cue antisymmetry: 10000 pairs x 8 attributes plus boundaries");
}

#[test]
fn acceptance_threshold_defaults() {
    let t = ThresholdTable::default();
    let expect = [
        (Attribute::RmsEnergy, DiffMode::Direct, 3.0),
        (Attribute::Distance, DiffMode::Direct, 0.5),
        (Attribute::Age, DiffMode::Direct, 10.0),
        (Attribute::MeanF0, DiffMode::Percent, 6.0),
        (Attribute::F0Span, DiffMode::Percent, 25.0),
        (Attribute::SpeakingRate, DiffMode::Percent, 15.0),
        (Attribute::SpeakingDuration, DiffMode::Percent, 15.0),
        (Attribute::AppearanceTime, DiffMode::Direct, 0.1),
    ];
    for (attribute, mode, theta) in expect {
        let entry = t.get(attribute).unwrap();
        assert_eq!(entry.mode, mode, "{attribute}");
        assert_eq!(entry.theta, theta, "{attribute}");
    }
    assert_eq!(t.entries().count(), 8);
    println!("PASS threshold defaults: shipped table matches {{3 dB, 0.5 m, 10 y, 6%, 25%, 15%, 15%, 0.1 s}}");
}

#[test]
fn acceptance_mixture_rules() {
    let start = Instant::now();
    let ranges = RoomRanges::default();
    let fs = f64::from(relcue_core::SAMPLE_RATE_HZ);

    let failures: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|case| {
            let mut rng = stream_rng(case, "acc-mixture", 1);
            let len1 = rng.random_range(3.0..=6.0);
            let len2 = rng.random_range(3.0..=6.0);
            let w1 = tone(210.0, len1, 0.35);
            let w2 = tone(147.0, len2, 0.35);
            let (offset1_s, offset2_s, overlap_s, overlap_capped) =
                plan_overlap(w1.duration_s(), w2.duration_s(), &mut rng).ok()?;
            let room = sample_room(&mut rng, &ranges);
            let placement1 = sample_placement(&mut rng, &room, &ranges).ok()?;
            let placement2 = sample_placement(&mut rng, &room, &ranges).ok()?;
            let plan = MixturePlan {
                s1_id: format!("a{case}"),
                s2_id: format!("b{case}"),
                offset1_s,
                offset2_s,
                overlap_s,
                overlap_capped,
                target_index: 1,
                sir_db: rng.random_range(-6.0..=6.0),
                room,
                placement1,
                placement2,
                max_order: ranges.max_order,
                seed: case,
            };
            let rendered = render_mixture(&plan, &w1, &w2).err_string()?;

            // Realized overlap of the placed dry intervals, in samples.
            let start1 = (offset1_s * fs).round() as i64;
            let start2 = (offset2_s * fs).round() as i64;
            let end1 = start1 + w1.len() as i64;
            let end2 = start2 + w2.len() as i64;
            let realized = (end1.min(end2) - start1.max(start2)).max(0);
            let formula = w1.len() as i64 + w2.len() as i64 - (6.0 * fs) as i64;
            if (realized - formula).abs() > 1 {
                return Some(format!(
                    "case {case}: overlap {realized} vs formula {formula} samples"
                ));
            }

            let sir = measure_sir(&rendered.rev1, &rendered.rev2).ok()?;
            if (sir - plan.sir_db).abs() > 0.1 {
                return Some(format!("case {case}: SIR {sir} vs planned {}", plan.sir_db));
            }
            None
        })
        .collect();
    assert!(failures.is_empty(), "{failures:?}");
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}");
    println!("PASS mixture rules: 1000 mixtures, overlap within 1 sample, SIR within 0.1 dB, {elapsed:?}");
}

/// Helper: treat render errors as failures with context.
trait ErrString<T> {
    fn err_string(self) -> Option<T>;
}

impl<T> ErrString<T> for Result<T, relcue_core::Error> {
    fn err_string(self) -> Option<T> {
        match self {
            Ok(v) => Some(v),
            Err(e) => panic!("unexpected error: {e}"),
        }
    }
}

#[test]
fn acceptance_rir_fidelity() {
    let ranges = RoomRanges::default();
    let fs = f64::from(relcue_core::SAMPLE_RATE_HZ);

    // Direct-path delay within one sample of geometry on 100 random rooms.
    for case in 0..100u64 {
        let mut rng = stream_rng(case, "acc-rir-delay", 0);
        let room = sample_room(&mut rng, &ranges);
        let placement = sample_placement(&mut rng, &room, &ranges).unwrap();
        let rir = image_source_rir(&room, &placement, ranges.max_order).unwrap();
        let peak = rir
            .taps
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .unwrap()
            .0 as i64;
        let geometric =
            (placement.direct_distance_m(&room) / SPEED_OF_SOUND_M_S * fs).round() as i64;
        assert!(
            (peak - geometric).abs() <= 1,
            "case {case}: peak {peak} vs geometric {geometric}"
        );
    }

    // Schroeder T60 within 20% of the requested value.
    for rt60 in [0.3, 0.45, 0.6] {
        for case in 0..5u64 {
            let mut rng = stream_rng(case, "acc-rir-t60", 7);
            let mut room = sample_room(&mut rng, &ranges);
            room.rt60_s = rt60;
            let placement = sample_placement(&mut rng, &room, &ranges).unwrap();
            let rir = image_source_rir(&room, &placement, ranges.max_order).unwrap();
            let measured = schroeder_t60(&rir.taps, fs).expect("decay fit");
            let rel = (measured - rt60) / rt60;
            assert!(
                rel.abs() <= 0.20,
                "rt60 {rt60}, case {case}: measured {measured:.3} ({:+.1}%)",
                rel * 100.0
            );
        }
    }
    println!(
        "PASS rir fidelity: delay within 1 sample on 100 rooms, T60 within 20% at 0.3/0.45/0.6 s"
    );
}

#[test]
fn acceptance_pitch_tracker() {
    for freq in [100.0, 150.0, 220.0, 330.0, 400.0] {
        let w = tone(freq, 1.0, 0.5);
        let track = estimate_f0_track(&w, 60.0, 500.0).unwrap();
        let mean = mean_f0(&track).expect("voiced tone");
        assert!(
            (mean - freq).abs() / freq < 0.01,
            "{freq} Hz tracked as {mean} Hz"
        );
    }
    let silence = WaveBuffer::from_samples(vec![0.0; 16000]);
    let track = estimate_f0_track(&silence, 60.0, 500.0).unwrap();
    assert!(track.iter().all(|f| f.f0_hz.is_none()));
    println!("PASS pitch tracker: 100/150/220/330/400 Hz within 1%, silence unvoiced");
}

#[test]
fn acceptance_syllable_fixture() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/syllable_fixture.tsv");
    let text = std::fs::read_to_string(&path).unwrap();
    let mut checked = 0usize;
    for line in text.lines() {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        assert!(fields.len() >= 3, "malformed fixture line: {line}");
        let language = match fields[0] {
            "en" => Language::En,
            "fr" => Language::Fr,
            "de" => Language::De,
            "es" => Language::Es,
            "zh" => Language::Zh,
            other => panic!("unknown language {other}"),
        };
        let expected: usize = fields[1].parse().unwrap();
        let sentence = fields[2];
        let got = count_syllables(sentence, language);
        assert_eq!(
            got, expected,
            "{language:?} `{sentence}`: counted {got}, fixture says {expected}"
        );
        checked += 1;
    }
    assert_eq!(checked, 50, "fixture must hold exactly 50 sentences");
    println!("PASS syllable parser: 50-sentence fixture matches hand-derived counts");
}

#[test]
fn acceptance_gradient_check() {
    let config = ClassifierConfig::default();
    for seed in 0..10u64 {
        let mut rng = stream_rng(seed, "acc-grad", 0);
        let (d_in, d_out) = (7, 6);
        let mut head = ProjectionHead::random(d_in, d_out, &mut rng);
        for g in head.gamma.iter_mut() {
            *g = rng.random_range(0.5..1.5);
        }
        // Nonzero beta keeps the projected vector away from zero even when a
        // sample lands every ReLU unit in the dead region.
        for b in head.beta.iter_mut() {
            *b = rng.random_range(0.05..0.3);
        }
        let samples: Vec<TrainSample> = (0..8)
            .map(|_| TrainSample {
                prompt_raw: (0..d_in).map(|_| rng.random_range(-1.0..1.0)).collect(),
                z1: (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect(),
                z2: (0..d_out).map(|_| rng.random_range(-1.0..1.0)).collect(),
                label: u8::from(rng.random_range(0.0..1.0) > 0.5),
            })
            .collect();
        let batch: Vec<&TrainSample> = samples.iter().collect();
        let (_, grad) = batch_loss_and_grad(&head, &batch, &config).unwrap();
        let analytic: Vec<f64> = grad
            .weight
            .iter()
            .chain(&grad.bias)
            .chain(&grad.gamma)
            .chain(&grad.beta)
            .copied()
            .collect();

        // Central finite differences at step 1e-4 over every parameter.
        let loss_of = |h: &ProjectionHead| -> f64 {
            batch
                .iter()
                .map(|s| {
                    let z = h.forward(&s.prompt_raw).unwrap().output;
                    let l = logit(&z, &s.z1, &s.z2).unwrap();
                    bce_loss(predict_prob(l, &config), s.label)
                })
                .sum::<f64>()
                / batch.len() as f64
        };
        let step = 1e-4;
        let mut probe = head.clone();
        let total = head.param_len();
        #[allow(clippy::needless_range_loop)] // idx addresses parameter slots, not one array
        for idx in 0..total {
            let slot = |h: &mut ProjectionHead, i: usize| -> *mut f64 {
                let (w, b, g) = (h.weight.len(), h.bias.len(), h.gamma.len());
                if i < w {
                    &mut h.weight[i]
                } else if i < w + b {
                    &mut h.bias[i - w]
                } else if i < w + b + g {
                    &mut h.gamma[i - w - b]
                } else {
                    &mut h.beta[i - w - b - g]
                }
            };
            unsafe {
                let p = slot(&mut probe, idx);
                let orig = *p;
                *p = orig + step;
                let up = loss_of(&probe);
                *p = orig - step;
                let down = loss_of(&probe);
                *p = orig;
                let numeric = (up - down) / (2.0 * step);
                let a = analytic[idx];
                let denom = a.abs().max(numeric.abs()).max(1.0);
                assert!(
                    (a - numeric).abs() / denom < 1e-4,
                    "seed {seed}, param {idx}: analytic {a} vs numeric {numeric}"
                );
            }
        }
    }
    println!("PASS gradient check: analytic vs central differences < 1e-4 on 10 minibatches");
}

struct ClosedLoop {
    _dir: tempfile::TempDir,
    clean_rows: Vec<EvalRow>,
    noisy_rows: Vec<EvalRow>,
    metas: Vec<MixtureMeta>,
    thresholds: ThresholdTable,
    quantizers: relcue_core::cues::QuantizerSet,
    build_time: std::time::Duration,
}

static CLOSED_LOOP: OnceLock<ClosedLoop> = OnceLock::new();

fn closed_loop() -> &'static ClosedLoop {
    CLOSED_LOOP.get_or_init(|| {
        let start = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let corpus = dir.path().join("corpus");
        std::fs::create_dir_all(&corpus).unwrap();
        let manifest = synth_corpus(&corpus, 14, 4, 2024, [3.2, 5.8], "train");

        let mut config = PipelineConfig {
            seed: 2024,
            ..PipelineConfig::default()
        };
        config.provider.dimension = 192;

        let out = dir.path().join("dataset");
        let dataset = simulate(&manifest, &config, "train", 500, &out, 0).unwrap();
        label_cues(&dataset, &config).unwrap();
        generate_prompts(&dataset, &config).unwrap();

        let metas: Vec<MixtureMeta> = dataset
            .index
            .mixtures
            .iter()
            .map(|e| dataset.load_meta(e).unwrap())
            .collect();
        let thresholds = dataset.thresholds().unwrap();
        let quantizers = dataset.quantizers().unwrap();

        let provider = build_provider(&dataset, &config).unwrap();
        let clean_rows = evaluate(&dataset, &config, &provider, None, 0).unwrap();

        let mut noisy_config = config.clone();
        noisy_config.provider.noise_sigma = 0.5;
        noisy_config.separation.leak_db = Some(15.0);
        let noisy_provider = build_provider(&dataset, &noisy_config).unwrap();
        let noisy_rows = evaluate(&dataset, &noisy_config, &noisy_provider, None, 0).unwrap();

        ClosedLoop {
            _dir: dir,
            clean_rows,
            noisy_rows,
            metas,
            thresholds,
            quantizers,
            build_time: start.elapsed(),
        }
    })
}

#[test]
fn acceptance_closed_loop_end_to_end() {
    let start = Instant::now();
    let loop_data = closed_loop();

    // Zero noise, perfect separation: every individual-cue prompt (all
    // non-similar by the prompt filter) classifies the true target.
    let individual: Vec<&EvalRow> = loop_data
        .clean_rows
        .iter()
        .filter(|r| r.prompt_config == PromptConfig::Individual)
        .collect();
    assert!(
        individual.len() >= 2000,
        "expected a few thousand individual prompts, got {}",
        individual.len()
    );
    let wrong: Vec<_> = individual.iter().filter(|r| !r.correct()).collect();
    assert!(
        wrong.is_empty(),
        "{} of {} individual prompts misclassified: first {:?}",
        wrong.len(),
        individual.len(),
        wrong.first()
    );

    // Noise 0.5 + 15 dB leak: accuracy grows with |delta| for every
    // continuous cue that still makes errors, and the logistic slope is
    // positive wherever it is fittable.
    let mut fitted = 0usize;
    for attribute in Attribute::CONTINUOUS {
        let points: Vec<(f64, bool)> = loop_data
            .noisy_rows
            .iter()
            .filter(|r| r.cue == CueType::Single(attribute))
            .filter_map(|r| r.delta.map(|d| (d.abs(), r.correct())))
            .collect();
        if points.len() < 50 {
            continue;
        }
        let errors = points.iter().filter(|(_, c)| !c).count();
        if errors == 0 {
            // Saturated cue (every pair far from threshold); monotonicity
            // holds trivially and the MLE does not exist.
            continue;
        }
        // Split at the median |delta|: the low half must be harder.
        let mut deltas: Vec<f64> = points.iter().map(|(d, _)| *d).collect();
        deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = deltas[deltas.len() / 2];
        let acc_of = |pred: &dyn Fn(f64) -> bool| {
            let subset: Vec<&(f64, bool)> = points.iter().filter(|(d, _)| pred(*d)).collect();
            subset.iter().filter(|(_, c)| *c).count() as f64 / subset.len().max(1) as f64
        };
        let low = acc_of(&|d| d < median);
        let high = acc_of(&|d| d >= median);
        assert!(
            low < high,
            "{attribute}: accuracy below median {low:.4} !< above {high:.4}"
        );

        let (_, slope) = logistic_fit_1d(&points).unwrap();
        assert!(slope > 0.0, "{attribute}: slope {slope}");
        fitted += 1;
    }
    assert!(
        fitted >= 5,
        "expected at least 5 continuous cues with fittable accuracy decay, got {fitted}"
    );

    let elapsed = loop_data.build_time + start.elapsed();
    assert!(elapsed.as_secs_f64() < 600.0, "took {elapsed:?}");
    println!(
        "PASS closed loop: {} clean individual prompts all correct; {fitted} noisy cues with positive slope; {elapsed:?}",
        individual.len()
    );
}

#[test]
fn acceptance_relative_vs_independent() {
    let loop_data = closed_loop();

    // Same independent bin, non-similar relative label: these pairs exist
    // whenever the fitted bins are wider than the similarity threshold, and
    // the classifier still resolves them well above chance.
    let mut cues_with_subset = 0usize;
    let mut subset_n = 0usize;
    let mut subset_correct = 0usize;
    for attribute in Attribute::CONTINUOUS {
        if loop_data.quantizers.get(attribute).is_none() {
            continue;
        }
        let theta = loop_data.thresholds.get(attribute).unwrap().theta;
        let same_bin: Vec<&EvalRow> = loop_data
            .noisy_rows
            .iter()
            .filter(|r| r.cue == CueType::Single(attribute))
            .filter(|r| {
                r.indep_category_tar.is_some() && r.indep_category_tar == r.indep_category_inf
            })
            .collect();
        let wide_pairs = same_bin
            .iter()
            .filter(|r| r.delta.is_some_and(|d| d.abs() > theta))
            .count();
        let non_similar: Vec<&&EvalRow> = same_bin
            .iter()
            .filter(|r| {
                r.relative_category
                    .as_deref()
                    .is_some_and(|c| c != "similar")
            })
            .collect();
        if wide_pairs > 0 {
            assert!(
                !non_similar.is_empty(),
                "{attribute}: same-bin pairs exceed theta but none labeled non-similar"
            );
            cues_with_subset += 1;
            subset_n += non_similar.len();
            subset_correct += non_similar.iter().filter(|r| r.correct()).count();
        }
    }
    assert!(
        cues_with_subset >= 4,
        "expected most quantized cues to have same-bin non-similar pairs, got {cues_with_subset}"
    );
    assert!(subset_n >= 50, "subset too small: {subset_n}");
    let (wilson_low, _) = wilson_interval(subset_correct, subset_n);
    assert!(
        wilson_low > 0.5,
        "accuracy {}/{subset_n} not significantly above chance (Wilson low {wilson_low:.3})",
        subset_correct
    );
    println!(
        "PASS relative vs independent: {cues_with_subset} cues, {subset_correct}/{subset_n} correct on same-bin non-similar pairs (Wilson low {wilson_low:.3})"
    );
}

#[test]
fn acceptance_pipeline_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(&corpus).unwrap();
    let manifest = synth_corpus(&corpus, 6, 3, 77, [3.1, 5.5], "train");

    let mut config = PipelineConfig {
        seed: 99,
        ..PipelineConfig::default()
    };
    config.provider.dimension = 192;
    config.provider.noise_sigma = 0.3;

    let run = |out: &std::path::Path, jobs: usize| {
        let dataset = simulate(&manifest, &config, "train", 30, out, jobs).unwrap();
        label_cues(&dataset, &config).unwrap();
        generate_prompts(&dataset, &config).unwrap();
        let provider = build_provider(&dataset, &config).unwrap();
        let rows = evaluate(&dataset, &config, &provider, None, jobs).unwrap();
        save_eval_rows(&out.join("rows.csv"), &rows).unwrap();

        let quantizers = dataset.quantizers().unwrap();
        let report = relcue_core::analysis::Report {
            provenance: relcue_core::analysis::Provenance {
                dataset_hash: dataset.content_hash().unwrap(),
                config_hash: config.content_hash().unwrap(),
                seed: config.seed,
            },
            accuracy: relcue_core::analysis::accuracy_by_cue(&rows),
            logistic: relcue_core::analysis::logistic_curves(&rows),
            crosstabs: relcue_core::analysis::group_crosstab(&rows, &quantizers),
        };
        relcue_core::analysis::export_report(&report, &out.join("report")).unwrap();
    };

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run(&out_a, 1);
    run(&out_b, 2);

    let mut compared = 0usize;
    let mut compare = |rel: &str| {
        let a = std::fs::read(out_a.join(rel)).unwrap();
        let b = std::fs::read(out_b.join(rel)).unwrap();
        assert_eq!(a, b, "{rel} differs between runs");
        compared += 1;
    };
    compare("index.json");
    compare("thresholds.json");
    compare("quantizers.json");
    compare("rows.csv");
    for i in 0..30 {
        compare(&format!("mix_{i:06}/meta.json"));
    }
    compare("mix_000000/mixture.wav");
    compare("mix_000007/ch1.wav");
    for table in [
        "report/accuracy.csv",
        "report/logistic.csv",
        "report/curves.csv",
        "report/crosstab.csv",
        "report/report.json",
    ] {
        compare(table);
    }
    println!("PASS pipeline determinism: {compared} files byte-identical across reruns");
}

#[test]
fn acceptance_closed_loop_dataset_sanity() {
    // Ancillary guard for the closed-loop criteria: the synthetic corpus
    // exercises every attribute and the prompt filter keeps similar/Same out.
    let loop_data = closed_loop();
    assert_eq!(loop_data.metas.len(), 500);
    for meta in &loop_data.metas {
        assert!(meta.cue_labels.is_some());
        assert!(meta.prompts.is_some());
    }
    let with_labels: std::collections::BTreeSet<Attribute> = loop_data
        .metas
        .iter()
        .flat_map(|m| m.cue_labels.iter().flatten())
        .filter(|l| l.kind == CueKind::Relative)
        .map(|l| l.attribute)
        .collect();
    for attribute in Attribute::ALL {
        assert!(
            with_labels.contains(&attribute),
            "no relative labels for {attribute}"
        );
    }
    for meta in &loop_data.metas {
        for p in meta.prompts.iter().flatten() {
            for c in &p.categories {
                assert_ne!(c, "similar");
                assert_ne!(c, "Same");
            }
        }
    }
    println!("PASS closed-loop dataset sanity: 500 mixtures, all 12 attributes labeled");
}
