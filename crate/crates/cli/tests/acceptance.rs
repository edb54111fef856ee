//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so that the expensive desk-scale
//! training runs are shared between the criteria that need them.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vabark::anchors::{AnchorSet, QuantilePair, ANCHORS_VERSION};
use vabark::audio::{mel_spectrogram, SpectrogramConfig, Waveform};
use vabark::features::AcousticFeatures;
use vabark::manifest::Manifest;
use vabark::metrics::{pearson_r, va_mae, MaeMode};
use vabark::model::{backward, forward, HeadDims, ModelConfig, ModelOutput, ModelParams, OutputGrads};
use vabark::pipeline::{compute_features, fit_corpus_anchors, label_manifest};
use vabark::synth::{synth_corpus, ClassMix, ProfileTable};
use vabark::taxonomy::Emotion;
use vabark::training::{
    multitask_loss, run_experiment, sample_loss, stratified_split, trace_early_stopping, Clip, ExperimentKind,
    ExperimentRequest, LossWeights, TrainConfig, TrainOutcome, Targets,
};
use vabark::valabel::{label_from_features, EmotionBiasTable, VALabel};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// 1. Label generator against a straight-line oracle

fn oracle_bias(e: &str) -> f64 {
    match e {
        "fearful" => -0.18,
        "separation_anxiety" => -0.16,
        "anxious" => -0.12,
        "territorial" => -0.08,
        "alert" => -0.02,
        "playful" => 0.10,
        "content" => 0.12,
        "excited" => 0.14,
        _ => panic!("unknown emotion {e}"),
    }
}

fn oracle_label(rms: f64, centroid: f64, zcr: f64, log_rms: f64, e: &str, a: &AnchorSet) -> (f64, f64) {
    let mut x = rms;
    if x < 1e-10 {
        x = 1e-10;
    }
    let mut arousal = (x.ln() - a.a_low.ln()) / (a.a_high.ln() - a.a_low.ln());
    if arousal < 0.0 {
        arousal = 0.0;
    }
    if arousal > 1.0 {
        arousal = 1.0;
    }
    let mut c = 2.0 * (centroid - a.centroid.q10) / (a.centroid.q90 - a.centroid.q10) - 1.0;
    c = c.max(-1.0).min(1.0);
    let mut r = 2.0 * (log_rms - a.log_rms.q10) / (a.log_rms.q90 - a.log_rms.q10) - 1.0;
    r = r.max(-1.0).min(1.0);
    let mut z = 2.0 * (zcr - a.zcr.q10) / (a.zcr.q90 - a.zcr.q10) - 1.0;
    z = z.max(-1.0).min(1.0);
    let s = 0.45 * c - 0.35 * r + 0.25 * z;
    let mut valence = s + oracle_bias(e);
    valence = valence.max(-1.0).min(1.0);
    (valence, arousal)
}

fn test_anchors() -> AnchorSet {
    AnchorSet {
        a_low: 0.01,
        a_high: 0.2,
        centroid: QuantilePair { q10: 1500.0, q90: 5000.0 },
        zcr: QuantilePair { q10: 0.01, q90: 0.2 },
        log_rms: QuantilePair { q10: -6.0, q90: -2.0 },
        version: ANCHORS_VERSION,
    }
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let a = test_anchors();
    let table = EmotionBiasTable::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let f = AcousticFeatures {
            rms_p95: 10f64.powf(rng.gen_range(-11.0..0.0)),
            centroid: rng.gen_range(200.0..9000.0),
            zcr: rng.gen_range(0.0..0.4),
            log_rms: rng.gen_range(-9.0..0.0),
        };
        let e = Emotion::ALL[rng.gen_range(0..Emotion::ALL.len())];
        let got = label_from_features(&f, e, &a, &table);
        let (v, ar) = oracle_label(f.rms_p95, f.centroid, f.zcr, f.log_rms, e.as_str(), &a);
        worst = worst.max((got.valence - v).abs()).max((got.arousal - ar).abs());
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;

    // anchors map exactly onto the ends of the ranges
    let mid = AcousticFeatures { rms_p95: 0.05, centroid: 3000.0, zcr: 0.1, log_rms: -4.0 };
    let at = |f: AcousticFeatures, e: Emotion| label_from_features(&f, e, &a, &table);
    ensure(at(AcousticFeatures { rms_p95: a.a_low, ..mid }, Emotion::Alert).arousal == 0.0, "a_low -> 0")?;
    ensure(at(AcousticFeatures { rms_p95: a.a_high, ..mid }, Emotion::Alert).arousal == 1.0, "a_high -> 1")?;
    ensure(at(AcousticFeatures { rms_p95: 0.0, ..mid }, Emotion::Alert).arousal == 0.0, "silence -> 0")?;
    let brightest = AcousticFeatures { rms_p95: 0.05, centroid: 5000.0, zcr: 0.2, log_rms: -6.0 };
    ensure(at(brightest, Emotion::Excited).valence == 1.0, "maximal score clips to +1")?;
    let darkest = AcousticFeatures { rms_p95: 0.05, centroid: 1500.0, zcr: 0.01, log_rms: -2.0 };
    ensure(at(darkest, Emotion::Fearful).valence == -1.0, "minimal score clips to -1")?;
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(1), format!("took {elapsed:?}"))?;
    Ok(format!("1000 vectors, max deviation {worst:e}, {elapsed:?}"))
}

// ---------------------------------------------------------------------------
// 2. Bias table

fn criterion_2() -> Check {
    let published = [
        ("fearful", -0.18),
        ("separation_anxiety", -0.16),
        ("anxious", -0.12),
        ("territorial", -0.08),
        ("alert", -0.02),
        ("playful", 0.10),
        ("content", 0.12),
        ("excited", 0.14),
    ];
    let table = EmotionBiasTable::default();
    let map = table.to_map();
    ensure(map.len() == 8, format!("{} entries", map.len()))?;
    for (name, b) in published {
        ensure(map.get(name) == Some(&b), format!("{name}: {:?} != {b}", map.get(name)))?;
    }
    // the ordering invariant is enforced on load
    let mut swapped: std::collections::BTreeMap<String, f64> = published.iter().map(|(n, b)| (n.to_string(), *b)).collect();
    swapped.insert("fearful".into(), 0.2);
    ensure(EmotionBiasTable::from_map(&swapped).is_err(), "out-of-order table accepted")?;
    ensure(table.validate().is_ok(), "shipped table fails validation")?;
    Ok("8 values exact, ordering enforced".into())
}

// ---------------------------------------------------------------------------
// 3. Gradient check

fn criterion_3() -> Check {
    let start = Instant::now();
    let cfg = ModelConfig {
        n_layers: 1,
        d_model: 8,
        n_heads: 2,
        d_ff: 16,
        input_dim: 5,
        head_hidden: HeadDims { valence: 4, arousal: 4, emotion: 4, size: 4, gender: 4 },
        ..ModelConfig::default()
    };
    let mut params = ModelParams::<f64>::init(&cfg, 3).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for t in params.weights_mut().tensors_mut() {
        if !t.name.ends_with(".weight") {
            t.data.iter_mut().for_each(|v| *v += rng.gen_range(-0.3..0.3));
        }
    }
    let input = Array2::from_shape_simple_fn((cfg.input_dim, 4), || rng.gen_range(-2.0..2.0));
    let mut coef = |n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
    let up = OutputGrads {
        valence: coef(1)[0],
        arousal: coef(1)[0],
        emotion_logits: coef(cfg.n_emotions),
        size_logits: coef(cfg.n_sizes),
        gender_logits: coef(cfg.n_genders),
    };
    let objective = |p: &ModelParams<f64>| {
        let (o, _) = forward(p, input.view(), false, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        up.valence * o.valence
            + up.arousal * o.arousal
            + dot(&up.emotion_logits, &o.emotion_logits)
            + dot(&up.size_logits, &o.size_logits)
            + dot(&up.gender_logits, &o.gender_logits)
    };
    let (_, cache) = forward(&params, input.view(), false, &mut ChaCha8Rng::seed_from_u64(0)).map_err(e2s)?;
    let grads = backward(&params, &cache, &up).map_err(e2s)?;
    let analytic: Vec<Vec<f64>> = grads.weights.tensors().iter().map(|t| t.data.to_vec()).collect();
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut count = 0;
    for (ti, ga) in analytic.iter().enumerate() {
        for (j, &a) in ga.iter().enumerate() {
            let mut plus = params.clone();
            plus.weights_mut().tensors_mut()[ti].data[j] += h;
            let mut minus = params.clone();
            minus.weights_mut().tensors_mut()[ti].data[j] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-4, format!("worst relative error {worst:e}"))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!("{count} parameters, worst relative error {worst:.2e}, {elapsed:?}"))
}

// ---------------------------------------------------------------------------
// 4. Shapes, ranges and parameter counts

fn closed_form_params(c: &ModelConfig) -> usize {
    let d = c.d_model;
    let input = c.input_dim * d + d;
    let attention = 4 * (d * d + d);
    let ff = (d * c.d_ff + c.d_ff) + (c.d_ff * d + d);
    let norms = 2 * (2 * d);
    let heads = [
        (c.head_hidden.valence, 1),
        (c.head_hidden.arousal, 1),
        (c.head_hidden.emotion, c.n_emotions),
        (c.head_hidden.size, c.n_sizes),
        (c.head_hidden.gender, c.n_genders),
    ]
    .iter()
    .map(|&(hid, out)| d * hid + hid + hid * out + out)
    .sum::<usize>();
    input + c.n_layers * (attention + ff + norms) + heads
}

fn criterion_4() -> Check {
    let spec = SpectrogramConfig::default();
    let w = Waveform::new(vec![0.0; 3 * 44100], 44100).map_err(e2s)?;
    let mel = mel_spectrogram(&w, &spec).map_err(e2s)?;
    ensure(mel.values.dim() == (128, 259), format!("input shape {:?}", mel.values.dim()))?;

    let cfg = ModelConfig::tiny();
    ensure(cfg.input_dim == 128, "tiny model input_dim")?;
    let params = ModelParams::<f32>::init(&cfg, 5).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let x = Array2::from_shape_simple_fn((128, 259), || rng.gen_range(-4.0f32..4.0));
        let (o, _) = forward(&params, x.view(), false, &mut rng).map_err(e2s)?;
        ensure((-1.0..=1.0).contains(&o.valence), format!("valence {}", o.valence))?;
        ensure((0.0..=1.0).contains(&o.arousal), format!("arousal {}", o.arousal))?;
        for p in [&o.emotion_probs, &o.size_probs, &o.gender_probs] {
            ensure(p.iter().all(|v| (0.0..=1.0).contains(v)), "probability outside [0, 1]")?;
            ensure((p.iter().sum::<f32>() - 1.0).abs() < 1e-5, "probabilities do not sum to 1")?;
        }
        ensure(o.emotion_probs.len() == 8 && o.size_probs.len() == 3 && o.gender_probs.len() == 2, "head widths")?;
    }

    for c in [ModelConfig::default(), ModelConfig::tiny()] {
        let want = closed_form_params(&c);
        let got = ModelParams::<f32>::init(&c, 1).map_err(e2s)?.param_count();
        ensure(got == want, format!("instantiated {got} vs closed form {want}"))?;
        ensure(c.param_counts().total() == want, "param_counts total")?;
    }
    Ok(format!("input 128x259, 100 random inputs in range, default model {} parameters", closed_form_params(&ModelConfig::default())))
}

// ---------------------------------------------------------------------------
// 5. Metrics

fn criterion_5() -> Check {
    let va = |v, a| VALabel { valence: v, arousal: a };
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-12;
    let single = ([va(0.1, 0.3)], [va(0.0, 0.0)]);
    ensure(close(va_mae(&single.0, &single.1, MaeMode::Eq6).map_err(e2s)?, 0.4), "eq6 single")?;
    ensure(close(va_mae(&single.0, &single.1, MaeMode::Mean2).map_err(e2s)?, 0.2), "mean2 single")?;
    let pair = va_mae(&[va(0.1, 0.1), va(0.3, 0.3)], &[va(0.0, 0.0), va(0.0, 0.0)], MaeMode::Eq6).map_err(e2s)?;
    ensure(close(pair, 0.4), format!("eq6 pair {pair}"))?;
    let p = [va(0.2, 0.5), va(-0.3, 0.1)];
    ensure(va_mae(&p, &p, MaeMode::Eq6).map_err(e2s)? == 0.0, "identical -> 0")?;

    let x = [1.0, 2.0, 3.0, 4.0];
    let r = pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).map_err(e2s)?;
    ensure(close(r, 0.8), format!("r = {r}"))?;
    ensure(close(pearson_r(&x, &x).map_err(e2s)?, 1.0), "r(x, x)")?;
    let neg: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
    ensure(close(pearson_r(&x, &neg).map_err(e2s)?, -1.0), "r(x, -2x+3)")?;
    ensure(pearson_r(&x, &[1.0; 4]).is_err(), "constant input must error")?;
    Ok(format!("eq6 0.4 / mean2 0.2, r = {r}"))
}

// ---------------------------------------------------------------------------
// 6. Loss arithmetic

fn criterion_6() -> Check {
    let softmax = |z: &[f64]| {
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.into_iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let (e, s, g) = (vec![0.0; 8], vec![60.0, 0.0, 0.0], vec![0.0, 60.0]);
    let out = ModelOutput {
        valence: 0.5,
        arousal: 0.5,
        emotion_probs: softmax(&e),
        size_probs: softmax(&s),
        gender_probs: softmax(&g),
        emotion_logits: e,
        size_logits: s,
        gender_logits: g,
    };
    let t = Targets { label: VALabel { valence: 0.0, arousal: 1.0 }, emotion: 3, size: 0, gender: 1 };
    let (c, _) = multitask_loss(&[out], &[t], &LossWeights::default()).map_err(e2s)?;
    ensure((c.total - 1.1238).abs() <= 1e-4, format!("total {}", c.total))?;

    // zero auxiliary weights: auxiliary heads receive exactly zero gradient
    let cfg = ModelConfig { input_dim: 6, ..ModelConfig::tiny() };
    let params = ModelParams::<f64>::init(&cfg, 9).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Array2::from_shape_simple_fn((6, 10), || rng.gen_range(-1.0..1.0));
    let (o, cache) = forward(&params, x.view(), true, &mut rng).map_err(e2s)?;
    let w = LossWeights { w_e: 0.0, w_s: 0.0, w_g: 0.0, ..LossWeights::default() };
    let (lc, og) = sample_loss(&o, &t, &w).map_err(e2s)?;
    ensure(lc.total == lc.l_v + lc.l_a, "total is not l_v + l_a")?;
    let grads = backward(&params, &cache, &og).map_err(e2s)?;
    let mut aux = 0;
    for tensor in grads.weights.tensors() {
        let is_aux = ["heads.emotion.", "heads.size.", "heads.gender."].iter().any(|p| tensor.name.starts_with(p));
        if is_aux {
            aux += tensor.data.len();
            ensure(tensor.data.iter().all(|&v| v == 0.0), format!("{} has non-zero gradient", tensor.name))?;
        }
    }
    ensure(grads.weights.tensors().iter().any(|t| t.name.starts_with("heads.valence.") && t.data.iter().any(|&v| v != 0.0)), "valence head got no gradient")?;
    Ok(format!("total {:.6}; {aux} auxiliary-head gradients exactly zero", c.total))
}

// ---------------------------------------------------------------------------
// 7-9. Desk-scale corpus and training

const DESK_N: usize = 2000;
const DESK_SEED: u64 = 42;
const DESK_EPOCHS: usize = 15;
const DESK_LR: f64 = 1e-3;

struct Desk {
    labeled: Manifest,
    full: Result<(TrainOutcome, Duration), String>,
    va_only: Result<(TrainOutcome, Duration), String>,
}

fn desk_run(dir: &Path) -> Result<Desk, String> {
    let t0 = Instant::now();
    let m = synth_corpus(DESK_N, &ClassMix::default(), &ProfileTable::default(), DESK_SEED, dir, 1).map_err(e2s)?;
    let spec = SpectrogramConfig::default();
    let rows = compute_features(&m, &spec, 1).map_err(e2s)?;
    let feats: Vec<AcousticFeatures> = rows.into_iter().map(|r| r.features).collect();
    let anchors = fit_corpus_anchors(&m, &feats, Default::default(), None, false).map_err(e2s)?;
    let labeled = label_manifest(&m, &feats, &anchors, &EmotionBiasTable::default()).map_err(e2s)?;
    eprintln!("desk corpus ready in {:?}", t0.elapsed());

    let train = TrainConfig { epochs: DESK_EPOCHS, t_max: DESK_EPOCHS, lr: DESK_LR, seed: DESK_SEED, ..TrainConfig::default() };
    let split = stratified_split(&labeled.emotions(), train.split_fractions, DESK_SEED).map_err(e2s)?;
    let clips = Clip::from_manifest(&labeled).map_err(e2s)?;
    let run = |kind: ExperimentKind| -> Result<(TrainOutcome, Duration), String> {
        let t = Instant::now();
        let out = run_experiment(
            &[kind],
            &ExperimentRequest {
                clips: &clips,
                split: &split,
                model: ModelConfig::tiny(),
                spectrogram: spec.clone(),
                train: train.clone(),
                jobs: 1,
                out_dir: Some(&dir.join(kind.as_str())),
            },
        )
        .map_err(e2s)?;
        let elapsed = t.elapsed();
        eprintln!("{kind} trained in {elapsed:?}");
        let (_, outcome) = out.runs.into_iter().next().ok_or("no run")?;
        Ok((outcome, elapsed))
    };
    Ok(Desk { full: run(ExperimentKind::FullMtl), va_only: run(ExperimentKind::VaOnly), labeled })
}

fn criterion_7(d: &Desk) -> Check {
    let (run, elapsed) = d.full.as_ref().map_err(|e| e.clone())?;
    let first = run.history.first().ok_or("empty history")?.val_va_mae;
    let rep = &run.best_report;
    let improvement = (first - rep.va_mae) / first;
    let rv = rep.valence_r.ok_or("valence r undefined")?;
    let ra = rep.arousal_r.ok_or("arousal r undefined")?;
    let detail = format!(
        "{} epochs in {elapsed:.0?}; val VA MAE {first:.4} -> {:.4} ({:.1}%), valence r {rv:.3}, arousal r {ra:.3}",
        run.history.len(),
        rep.va_mae,
        100.0 * improvement
    );
    ensure(run.history.len() <= DESK_EPOCHS, format!("{detail}: too many epochs"))?;
    ensure(improvement >= 0.30, format!("{detail}: improvement below 30%"))?;
    ensure(rv >= 0.8, format!("{detail}: valence r below 0.8"))?;
    ensure(ra >= 0.6, format!("{detail}: arousal r below 0.6"))?;
    ensure(rv >= ra, format!("{detail}: valence r below arousal r"))?;
    ensure(*elapsed < Duration::from_secs(30 * 60), format!("{detail}: over 30 min"))?;
    Ok(detail)
}

fn criterion_8(d: &Desk) -> Check {
    let (full, t_full) = d.full.as_ref().map_err(|e| e.clone())?;
    let (va, t_va) = d.va_only.as_ref().map_err(|e| e.clone())?;
    let (f, v) = (full.best_report.va_mae, va.best_report.va_mae);
    let total = *t_full + *t_va;
    let detail = format!("full_mtl {f:.4} vs va_only {v:.4}, both runs in {total:.0?}");
    ensure(f <= v, format!("{detail}: auxiliary tasks did not help"))?;
    ensure(total < Duration::from_secs(60 * 60), format!("{detail}: over 60 min"))?;
    Ok(detail)
}

fn criterion_9(d: &Desk) -> Check {
    let mean = |e: Emotion, f: fn(&VALabel) -> f64| {
        let v: Vec<f64> = d.labeled.rows.iter().filter(|r| r.emotion == e).filter_map(|r| r.label()).map(|l| f(&l)).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let v = |e| mean(e, |l| l.valence);
    let a = |e| mean(e, |l| l.arousal);
    let detail = format!(
        "V fearful {:.3} < territorial {:.3} < excited {:.3}; A content {:.3} < excited {:.3}",
        v(Emotion::Fearful),
        v(Emotion::Territorial),
        v(Emotion::Excited),
        a(Emotion::Content),
        a(Emotion::Excited)
    );
    ensure(v(Emotion::Fearful) < v(Emotion::Territorial) && v(Emotion::Territorial) < v(Emotion::Excited), detail.clone())?;
    ensure(a(Emotion::Content) < a(Emotion::Excited), detail.clone())?;
    Ok(detail)
}

// ---------------------------------------------------------------------------
// 10. Byte-identical reruns through the command-line tool

fn vabark(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_vabark")).args(args).env("VA_BARK_LOG", "warn").output().map_err(e2s)?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!("vabark {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn pipeline(root: &Path, jobs: &str) -> Result<(), String> {
    let p = |s: &str| root.join(s).to_string_lossy().into_owned();
    let model = p("model.json");
    std::fs::create_dir_all(root).map_err(e2s)?;
    std::fs::write(
        &model,
        r#"{"n_layers": 1, "d_model": 16, "n_heads": 2, "d_ff": 32,
            "head_hidden": {"valence": 8, "arousal": 8, "emotion": 8, "size": 8, "gender": 8}}"#,
    )
    .map_err(e2s)?;
    vabark(&["synth", "--n", "120", "--seed", "7", "--out-dir", &p("corpus"), "--jobs", jobs])?;
    vabark(&["features", "--manifest", &p("corpus/manifest.jsonl"), "--out-dir", &p("features"), "--jobs", jobs])?;
    vabark(&["anchors", "--features", &p("features/features.jsonl"), "--out-dir", &p("anchors")])?;
    vabark(&[
        "label", "--manifest", &p("corpus/manifest.jsonl"), "--anchors", &p("anchors/anchors.json"),
        "--features", &p("features/features.jsonl"), "--out-dir", &p("corpus"), "--jobs", jobs,
    ])?;
    vabark(&["split", "--manifest", &p("corpus/labeled.jsonl"), "--seed", "7", "--out-dir", &p("split")])?;
    vabark(&[
        "train", "--manifest", &p("corpus/labeled.jsonl"), "--split", &p("split/split.json"), "--model-config", &model,
        "--epochs", "2", "--batch-size", "16", "--lr", "0.001", "--seed", "7", "--out-dir", &p("train"), "--jobs", jobs,
    ])?;
    vabark(&[
        "eval", "--ckpt", &p("train/best.ckpt"), "--manifest", &p("corpus/labeled.jsonl"), "--split",
        &p("split/split.json"), "--subset", "test", "--out-dir", &p("eval"), "--jobs", jobs,
    ])
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn criterion_10(tmp: &Path) -> Check {
    let (a, b) = (tmp.join("jobs1"), tmp.join("jobs4"));
    pipeline(&a, "1")?;
    pipeline(&b, "4")?;
    let (fa, fb) = (files(&a), files(&b));
    ensure(fa == fb, "different file sets")?;
    let stages = ["corpus/manifest.jsonl", "features/features.jsonl", "anchors/anchors.json", "corpus/labeled.jsonl",
        "split/split.json", "train/history.csv", "train/best.ckpt", "train/last.ckpt", "train/norm_stats.json",
        "eval/report.json"];
    for s in stages {
        ensure(fa.iter().any(|f| f == Path::new(s)), format!("missing {s}"))?;
    }
    for f in &fa {
        let (x, y) = (std::fs::read(a.join(f)).map_err(e2s)?, std::fs::read(b.join(f)).map_err(e2s)?);
        ensure(x == y, format!("{} differs between --jobs 1 and --jobs 4", f.display()))?;
    }
    Ok(format!("{} files identical across synth, features, anchors, label, split, train, eval", fa.len()))
}

// ---------------------------------------------------------------------------
// 11. Early stopping

fn criterion_11() -> Check {
    let seq = [0.5, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4, 0.4];
    let (stop, best) = trace_early_stopping(&seq, 8, 0.001);
    ensure((stop, best) == (10, Some(2)), format!("stopped at {stop}, best {best:?}"))?;
    let (stop9, _) = trace_early_stopping(&seq[..9], 8, 0.001);
    ensure(stop9 == 9, "stopped before patience ran out")?;
    let improving: Vec<f64> = (0..20).map(|i| 1.0 - 0.01 * i as f64).collect();
    ensure(trace_early_stopping(&improving, 8, 0.001) == (20, Some(20)), "steady improvement stopped")?;
    Ok(format!("plateau stops at epoch {stop}, best epoch {}", best.unwrap_or(0)))
}

// ---------------------------------------------------------------------------

fn report(n: usize, name: &str, f: impl FnOnce() -> Check) -> bool {
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    match r {
        Ok(detail) => {
            println!("PASS {n:>2} {name}: {detail}");
            true
        }
        Err(why) => {
            println!("FAIL {n:>2} {name}: {why}");
            false
        }
    }
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    ok &= report(1, "label generator oracle", criterion_1);
    ok &= report(2, "bias table", criterion_2);
    ok &= report(3, "gradient check", criterion_3);
    ok &= report(4, "shapes and ranges", criterion_4);
    ok &= report(5, "metric oracles", criterion_5);
    ok &= report(6, "loss arithmetic", criterion_6);
    let desk = desk_run(&tmp.path().join("desk"));
    let desk = &desk;
    let desk_check = |f: fn(&Desk) -> Check| move || desk.as_ref().map_err(|e| e.clone()).and_then(f);
    ok &= report(7, "desk-scale convergence", desk_check(criterion_7));
    ok &= report(8, "ablation direction", desk_check(criterion_8));
    ok &= report(9, "VA-space structure", desk_check(criterion_9));
    ok &= report(10, "reproducibility", || criterion_10(tmp.path()));
    ok &= report(11, "early stopping", criterion_11);
    if !ok {
        std::process::exit(1);
    }
}
