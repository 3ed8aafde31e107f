//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criterion 8 is a robustness probe; its result is printed but does not
//! affect the exit status.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use surfrec_core::dataset::Drive;
use surfrec_core::eval::{confusion, evaluate, format_table, metrics, MetricsReport};
use surfrec_core::model::write_model;
use surfrec_core::nn::{bce_grad, bce_loss, Act, Conv1d, Dense, Layer, Lstm, Mat, Mode, SeqBatch};
use surfrec_core::preprocess::{
    lowpass_filter, rotate, rotation_from_roll_pitch, transpose, FilterSpec, Pipeline,
};
use surfrec_core::simride::{generate_ride, session_corpus, RideScript};
use surfrec_core::stream::{run_stream, stream_vs_batch_equivalence, write_decisions_csv, StreamConfig};
use surfrec_core::{
    preprocess_pipeline, Attitude, Classifier, Dataset, ImuSeries, ModelArch, TrainOptions, WindowConfig, G0,
};

const SEED: u64 = 2024;

// criterion 1
const STOP_HZ: f64 = 25.0;
const STOP_MAX: f64 = 0.032;
const PASS_HZ: f64 = 5.0;
const PASS_MIN: f64 = 0.99;
const ORACLE_REL_TOL: f64 = 0.05;
// criterion 2
const MAX_TILT_DEG: f64 = 30.0;
const LEVEL_TOL: f64 = 1e-3;
// criterion 3
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_TRIALS: usize = 20;
const FD_STEP: f64 = 1e-5;
// criterion 4
const WINDOWS: [usize; 3] = [1, 2, 3];
const BEST_MIN_ACC: f64 = 0.95;
const BEST_MAX_FPR: f64 = 0.10;
const ALL_MIN_ACC: f64 = 0.80;
const TRAIN_BUDGET_S: f64 = 600.0;
// criterion 5
const MIXED_RIDE_S: f64 = 180.0;
const STREAM_TOL: f64 = 1e-6;
const SEGMENT_MIN_ACC: f64 = 0.90;
const STREAM_BUDGET_S: f64 = 30.0;
// criterion 8
const WIND: f64 = 2.0;
const WIND_MAX_DROP: f64 = 0.10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn print_line(id: usize, name: &str, o: &Outcome, secs: f64, blocking: bool) {
    let tag = match (o.pass, blocking) {
        (true, _) => "PASS",
        (false, true) => "FAIL",
        (false, false) => "FAIL (reported only)",
    };
    println!("{tag} criterion {id}: {name}: {} [{secs:.2} s]", o.detail);
}

/// Amplitude of the `freq` component by projection onto sin and cos over a
/// whole number of periods.
fn tone_amplitude(y: &[f64], freq: f64, rate: f64) -> f64 {
    let n = y.len() as f64;
    let (mut s, mut c) = (0.0, 0.0);
    for (i, v) in y.iter().enumerate() {
        let ph = 2.0 * PI * freq * i as f64 / rate;
        s += v * ph.sin();
        c += v * ph.cos();
    }
    2.0 * (s * s + c * c).sqrt() / n
}

/// Bilinear-transform Butterworth magnitude.
fn butterworth_gain(order: usize, cutoff: f64, rate: f64, f: f64) -> f64 {
    let ratio = (PI * f / rate).tan() / (PI * cutoff / rate).tan();
    1.0 / (1.0 + ratio.powi(2 * order as i32)).sqrt()
}

fn criterion_1() -> Outcome {
    let spec = FilterSpec::default();
    let rate = spec.input_rate_hz;
    let mut parts = Vec::new();
    let mut ok = true;
    for (f, bound_ok) in [
        (STOP_HZ, Box::new(|g: f64| g <= STOP_MAX) as Box<dyn Fn(f64) -> bool>),
        (PASS_HZ, Box::new(|g: f64| g >= PASS_MIN)),
    ] {
        let n = 2000;
        let rows: Vec<[f64; 6]> = (0..n)
            .map(|i| [(2.0 * PI * f * i as f64 / rate).sin(); 6])
            .collect();
        let x = ImuSeries::from_channels(rate, 0.0, &rows).unwrap();
        let y = lowpass_filter(&x, &spec).unwrap();
        let tail: Vec<f64> = y.samples()[n - 1000..].iter().map(|s| s.accel[0]).collect();
        let g = tone_amplitude(&tail, f, rate);
        let oracle = butterworth_gain(spec.order, spec.cutoff_hz, rate, f);
        let close = (g - oracle).abs() <= ORACLE_REL_TOL * oracle;
        ok &= close && bound_ok(g);
        parts.push(format!("{f} Hz gain {g:.5} (oracle {oracle:.5})"));
    }
    outcome(ok, parts.join(", "))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut tilts: Vec<(f64, f64)> = Vec::new();
    for r in [-MAX_TILT_DEG, -15.0, 0.0, 15.0, MAX_TILT_DEG] {
        for p in [-MAX_TILT_DEG, -15.0, 0.0, 15.0, MAX_TILT_DEG] {
            tilts.push((r, p));
        }
    }
    for _ in 0..25 {
        tilts.push((
            rng.random_range(-MAX_TILT_DEG..=MAX_TILT_DEG),
            rng.random_range(-MAX_TILT_DEG..=MAX_TILT_DEG),
        ));
    }
    let mut worst: f64 = 0.0;
    for (r, p) in &tilts {
        let a = Attitude::from_degrees(*r, *p).unwrap();
        let f = rotate(&transpose(&rotation_from_roll_pitch(&a)), [0.0, 0.0, G0]);
        let rows = vec![[f[0], f[1], f[2], 0.0, 0.0, 0.0]; 1000];
        let x = ImuSeries::from_channels(100.0, 0.0, &rows).unwrap();
        let out = preprocess_pipeline(&x).unwrap();
        let n = out.len() as f64;
        let mut m = [0.0; 3];
        for s in &out.samples {
            for (acc, v) in m.iter_mut().zip(s.accel) {
                *acc += v / n;
            }
        }
        worst = worst.max((m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt());
    }
    outcome(
        worst <= LEVEL_TOL,
        format!("{} tilts, worst |mean accel| {worst:.2e} m/s²", tilts.len()),
    )
}

/// Gradient-check error of one trial: `|a - n| / (|a| + |n|)` over the
/// whole gradient vector.
fn rel_error(a: &[f64], n: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(n).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()) + norm(&mut n.iter().copied());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn random_act(seq: bool, a: usize, b: usize, c: usize, rng: &mut ChaCha8Rng) -> Act {
    if seq {
        let mut s = SeqBatch::zeros(a, b, c);
        s.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        Act::Seq(s)
    } else {
        let mut m = Mat::zeros(b, c);
        m.data.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        Act::Flat(m)
    }
}

/// Analytic vs central-difference gradients of `L = sum(r * layer(x))` with
/// respect to the input and every parameter.
fn layer_trial(layer: &mut Layer, x: &Act, rng: &mut ChaCha8Rng) -> f64 {
    let fwd = |l: &Layer, x: &Act| l.forward::<ChaCha8Rng>(x, &mut Mode::Eval).unwrap();
    let (y, cache) = fwd(layer, x);
    let mut dy = y.zeros_like();
    dy.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
    let r: Vec<f64> = dy.data().to_vec();
    let loss = |l: &Layer, x: &Act| fwd(l, x).0.data().iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();

    let mut grads: Vec<Vec<f64>> = layer.params().iter().map(|p| vec![0.0; p.len()]).collect();
    let dx = layer.backward(x, &cache, &dy, &mut grads).unwrap();

    let mut analytic: Vec<f64> = dx.data().to_vec();
    let mut numeric = Vec::new();
    let mut xp = x.clone();
    for i in 0..x.data().len() {
        let v = xp.data()[i];
        xp.data_mut()[i] = v + FD_STEP;
        let lp = loss(layer, &xp);
        xp.data_mut()[i] = v - FD_STEP;
        let lm = loss(layer, &xp);
        xp.data_mut()[i] = v;
        numeric.push((lp - lm) / (2.0 * FD_STEP));
    }
    for (k, g) in grads.iter().enumerate() {
        analytic.extend_from_slice(g);
        for i in 0..g.len() {
            let v = layer.params()[k][i];
            layer.params_mut()[k][i] = v + FD_STEP;
            let lp = loss(layer, x);
            layer.params_mut()[k][i] = v - FD_STEP;
            let lm = loss(layer, x);
            layer.params_mut()[k][i] = v;
            numeric.push((lp - lm) / (2.0 * FD_STEP));
        }
    }
    rel_error(&analytic, &numeric)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let record = |name, e: f64, worst: &mut Vec<(&str, f64)>| match worst.iter_mut().find(|(n, _)| *n == name) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((name, e)),
    };
    for _ in 0..GRAD_TRIALS {
        let (c_in, c_out, k) = (rng.random_range(1..5), rng.random_range(1..5), 2 * rng.random_range(0..2) + 1);
        let (steps, batch) = (rng.random_range(3..9), rng.random_range(1..4));
        let mut l = Layer::Conv1d(Conv1d::new(c_in, c_out, k, &mut rng));
        let x = random_act(true, steps, batch, c_in, &mut rng);
        let e = layer_trial(&mut l, &x, &mut rng);
        record("conv1d", e, &mut worst);

        let hidden = rng.random_range(1..6);
        let seqs = rng.random_bool(0.5);
        let mut l = Layer::Lstm(Lstm::new(c_in, hidden, seqs, &mut rng));
        let x = random_act(true, steps, batch, c_in, &mut rng);
        let e = layer_trial(&mut l, &x, &mut rng);
        record("lstm", e, &mut worst);

        let mut l = Layer::Dense(Dense::new(c_in * 3, c_out, &mut rng));
        let x = random_act(false, 0, batch, c_in * 3, &mut rng);
        let e = layer_trial(&mut l, &x, &mut rng);
        record("dense", e, &mut worst);

        for (name, mut l) in [("avgpool", Layer::AvgPool), ("maxpool", Layer::MaxPool)] {
            let x = random_act(true, 2 * steps, batch, c_in, &mut rng);
            let e = layer_trial(&mut l, &x, &mut rng);
            record(name, e, &mut worst);
        }

        let y = rng.random_range(0..2u8);
        let p: f64 = rng.random_range(0.01..0.99);
        let num = (bce_loss(p + FD_STEP, y) - bce_loss(p - FD_STEP, y)) / (2.0 * FD_STEP);
        record("loss", rel_error(&[bce_grad(p, y)], &[num]), &mut worst);
    }
    let ok = worst.iter().all(|(_, e)| *e <= GRAD_REL_TOL);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(ok, format!("{GRAD_TRIALS} trials each, worst relative error: {detail}"))
}

struct Trained {
    reports: Vec<MetricsReport>,
    model_bytes: Vec<Vec<u8>>,
    best: Classifier,
}

fn corpus() -> (Vec<Drive>, Vec<Drive>) {
    let pipeline = Pipeline::default();
    let (train, val) = session_corpus(SEED);
    let make = |d: &[surfrec_core::simride::SimDrive]| {
        d.iter().map(|s| s.to_drive(&pipeline).unwrap()).collect::<Vec<_>>()
    };
    (make(&train), make(&val))
}

fn train_all() -> Trained {
    let (train, val) = corpus();
    let train_refs: Vec<&Drive> = train.iter().collect();
    let val_refs: Vec<&Drive> = val.iter().collect();
    let opts = TrainOptions::with_seed(SEED);
    let mut reports = Vec::new();
    let mut model_bytes = Vec::new();
    let mut best = None;
    for s in WINDOWS {
        let cfg = WindowConfig::new(s).unwrap();
        let tr = Dataset::from_drives(&train_refs, &cfg).unwrap();
        let va = Dataset::from_drives(&val_refs, &cfg).unwrap();
        for arch in ModelArch::ALL {
            let t = Instant::now();
            let (model, _) = Classifier::train(arch, &tr, &opts).unwrap();
            let report = evaluate(&model, &va).unwrap();
            eprintln!(
                "  trained {} S={s}: accuracy {:.4} in {:.1} s",
                arch.display_name(),
                report.metrics.accuracy,
                t.elapsed().as_secs_f64()
            );
            let mut bytes = Vec::new();
            write_model(&model, &mut bytes).unwrap();
            model_bytes.push(bytes);
            reports.push(report);
            if arch == ModelArch::LstmCnn && s == 3 {
                best = Some(model);
            }
        }
    }
    Trained {
        reports,
        model_bytes,
        best: best.unwrap(),
    }
}

fn criterion_4(t: &Trained, secs: f64) -> Outcome {
    let best = t
        .reports
        .iter()
        .find(|r| r.model == ModelArch::LstmCnn.tag() && r.window_seconds == 3)
        .unwrap();
    let worst = t
        .reports
        .iter()
        .min_by(|a, b| a.metrics.accuracy.total_cmp(&b.metrics.accuracy))
        .unwrap();
    let ok = best.metrics.accuracy >= BEST_MIN_ACC
        && best.metrics.fpr <= BEST_MAX_FPR
        && t.reports.iter().all(|r| r.metrics.accuracy > ALL_MIN_ACC)
        && secs <= TRAIN_BUDGET_S;
    outcome(
        ok,
        format!(
            "LSTM-CNN S=3 accuracy {:.4} FPR {:.4}; lowest accuracy {:.4} ({} S={}); {} models",
            best.metrics.accuracy,
            best.metrics.fpr,
            worst.metrics.accuracy,
            worst.model,
            worst.window_seconds,
            t.reports.len()
        ),
    )
}

struct StreamRun {
    max_diff: f64,
    pairs: usize,
    segment_accuracy: f64,
    log: Vec<u8>,
}

fn mixed_ride(wind: f64) -> (ImuSeries, Vec<u8>) {
    let mount = Attitude::from_degrees(8.0, -5.0).unwrap();
    let script = RideScript::mixed(MIXED_RIDE_S, SEED + 5).with_conditions(mount, wind);
    let ride = generate_ride(&script).unwrap();
    (ride.series, ride.labels)
}

fn stream_run(model: &Classifier, wind: f64) -> StreamRun {
    let cfg = StreamConfig::default();
    let (series, labels) = mixed_ride(wind);
    let report = stream_vs_batch_equivalence(model, &series, cfg).unwrap();
    let decisions = run_stream(model, &series, cfg).unwrap();
    let span = (cfg.window_seconds as f64 * cfg.pipeline.filter.input_rate_hz) as usize;
    let correct = decisions
        .iter()
        .filter(|d| {
            let w = &labels[d.sample_index + 1 - span..=d.sample_index];
            let ones = w.iter().filter(|&&y| y == 1).count();
            let truth = u8::from(2 * ones >= w.len());
            d.prediction.label == truth
        })
        .count();
    let mut log = Vec::new();
    write_decisions_csv(&decisions, &mut log).unwrap();
    StreamRun {
        max_diff: report.max_abs_diff,
        pairs: report.pairs.len(),
        segment_accuracy: correct as f64 / decisions.len() as f64,
        log,
    }
}

fn criterion_5(r: &StreamRun, secs: f64) -> Outcome {
    let ok = r.max_diff <= STREAM_TOL && r.segment_accuracy >= SEGMENT_MIN_ACC && secs < STREAM_BUDGET_S;
    outcome(
        ok,
        format!(
            "{} decisions, max |p_stream - p_batch| {:.1e}, segment accuracy {:.4}",
            r.pairs, r.max_diff, r.segment_accuracy
        ),
    )
}

fn criterion_6() -> Outcome {
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for (p, t, n) in [(1u8, 1u8, 4), (1, 0, 2), (0, 0, 3), (0, 1, 1)] {
        preds.extend(std::iter::repeat_n(p, n));
        truth.extend(std::iter::repeat_n(t, n));
    }
    let c = confusion(&preds, &truth).unwrap();
    let m = metrics(&c).unwrap();
    let ok = (c.tp, c.fp, c.tn, c.fn_) == (4, 2, 3, 1) && m.accuracy == 0.7 && m.f1 == 8.0 / 11.0 && m.fpr == 0.4;
    outcome(
        ok,
        format!("accuracy {} F1 {} FPR {}", m.accuracy, m.f1, m.fpr),
    )
}

fn main() {
    let mut failed = Vec::new();
    // `prior` is setup time spent outside `f` that belongs to the criterion
    let mut run = |id: usize, name: &str, f: &mut dyn FnMut() -> Outcome, blocking: bool, prior: f64| {
        let t = Instant::now();
        let o = f();
        print_line(id, name, &o, prior + t.elapsed().as_secs_f64(), blocking);
        if blocking && !o.pass {
            failed.push(id);
        }
    };

    run(1, "filter response", &mut criterion_1, true, 0.0);
    run(2, "leveling fixed point", &mut criterion_2, true, 0.0);
    run(3, "gradient oracle", &mut criterion_3, true, 0.0);

    let t = Instant::now();
    let trained = train_all();
    let train_secs = t.elapsed().as_secs_f64();
    println!("{}", format_table(&trained.reports));
    run(4, "end-to-end learning", &mut || criterion_4(&trained, train_secs), true, train_secs);

    let t = Instant::now();
    let calm = stream_run(&trained.best, 1.0);
    let stream_secs = t.elapsed().as_secs_f64();
    run(5, "streaming equivalence", &mut || criterion_5(&calm, stream_secs), true, stream_secs);

    run(6, "metric correctness", &mut criterion_6, true, 0.0);

    run(
        7,
        "determinism",
        &mut || {
            let again = train_all();
            let stream_again = stream_run(&again.best, 1.0);
            let same_models = again.model_bytes == trained.model_bytes;
            let same_log = stream_again.log == calm.log;
            outcome(
                same_models && same_log,
                format!(
                    "{} model files identical: {same_models}, decision log identical: {same_log}",
                    trained.model_bytes.len()
                ),
            )
        },
        true,
        0.0,
    );

    run(
        8,
        "wind robustness",
        &mut || {
            let windy = stream_run(&trained.best, WIND);
            let drop = calm.segment_accuracy - windy.segment_accuracy;
            outcome(
                drop <= WIND_MAX_DROP,
                format!(
                    "segment accuracy {:.4} at wind x{WIND} vs {:.4}, drop {drop:.4}",
                    windy.segment_accuracy, calm.segment_accuracy
                ),
            )
        },
        false,
        0.0,
    );

    if !failed.is_empty() {
        println!("acceptance failed: criteria {failed:?}");
        std::process::exit(1);
    }
}
