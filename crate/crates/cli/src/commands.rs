use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use vabark::anchors::AnchorSet;
use vabark::audio::{load_wav, SpectrogramConfig};
use vabark::features::AcousticFeatures;
use vabark::fsutil::{to_json_pretty, write_atomic};
use vabark::manifest::{align_features, load_features, save_features, Manifest};
use vabark::metrics::{emit_report, MaeMode};
use vabark::model::checkpoint::Checkpoint;
use vabark::model::predict;
use vabark::pipeline::{compute_features, fit_corpus_anchors, label_manifest, AnchorScope, SplitFile};
use vabark::synth::{synth_corpus, ClassMix, ProfileTable};
use vabark::taxonomy::{BodySize, Emotion, Gender};
use vabark::training::{
    evaluate_clips, run_experiment, stratified_split, train, Clip, ExperimentKind, ExperimentRequest, Featurizer,
    HistoryRow, SplitIndices, TrainRequest,
};
use vabark::valabel::EmotionBiasTable;
use vabark::{Error, Result};

use crate::config::{resolve, Overrides, RunConfig};
use crate::{Command, ConfigArgs};

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Synth { n, seed, mix, profiles, out_dir, jobs } => {
            let mix = mix.map(ClassMix::load).transpose()?.unwrap_or_default();
            let profiles = profiles.map(ProfileTable::load).transpose()?.unwrap_or_default();
            let m = synth_corpus(n, &mix, &profiles, seed, &out_dir, jobs.jobs)?;
            log::info!("wrote {} clips to {}", m.rows.len(), out_dir.display());
            Ok(())
        }
        Command::Features { manifest, config, out_dir, jobs } => {
            let m = Manifest::load(&manifest)?;
            let cfg = run_config(&ConfigArgs::only(config))?;
            let rows = compute_features(&m, &cfg.spectrogram, jobs.jobs)?;
            save_features(&rows, out_dir.join("features.jsonl"))?;
            log::info!("wrote features for {} rows", rows.len());
            Ok(())
        }
        Command::Anchors { features, manifest, anchor_scope, split, exclude_enhanced, out_dir } => {
            let scope: AnchorScope = anchor_scope.parse()?;
            let rows = load_features(&features)?;
            let anchors = match manifest {
                Some(path) => {
                    let m = Manifest::load(&path)?;
                    let split = split.map(|p| load_split(&p, &m)).transpose()?;
                    let f = align_features(&m, rows)?;
                    fit_corpus_anchors(&m, &f, scope, split.as_ref(), exclude_enhanced)?
                }
                None => {
                    if scope != AnchorScope::All || exclude_enhanced {
                        return Err(Error::Argument("--anchor-scope train and --exclude-enhanced need --manifest".into()));
                    }
                    let f: Vec<AcousticFeatures> = rows.into_iter().map(|r| r.features).collect();
                    vabark::anchors::fit_anchors(&f)?
                }
            };
            anchors.save(out_dir.join("anchors.json"))?;
            log::info!("anchors: {anchors:?}");
            Ok(())
        }
        Command::Label { manifest, anchors, features, bias_table, config, out_dir, jobs } => {
            let m = Manifest::load(&manifest)?;
            let anchors = AnchorSet::load(&anchors)?;
            let table = bias_table.map(EmotionBiasTable::load).transpose()?.unwrap_or_default();
            let spectrogram = run_config(&ConfigArgs::only(config))?.spectrogram;
            let labeled = label(&m, &anchors, features.as_deref(), &table, &spectrogram, jobs.jobs)?;
            let labeled = if same_dir(&m.base_dir, &out_dir) { labeled } else { labeled.with_absolute_paths()? };
            labeled.save(out_dir.join("labeled.jsonl"))?;
            log::info!("labeled {} rows", labeled.rows.len());
            Ok(())
        }
        Command::Split { manifest, seed, fractions, out_dir } => {
            let m = Manifest::load(&manifest)?;
            let split = stratified_split(&m.emotions(), parse_fractions(&fractions)?, seed)?;
            write_json(&out_dir.join("split.json"), &SplitFile::from_indices(&m, &split, seed))?;
            log::info!("split {} / {} / {}", split.train.len(), split.val.len(), split.test.len());
            Ok(())
        }
        Command::Train { manifest, anchors, split, cfg, out_dir, jobs } => {
            let cfg = run_config(&cfg)?;
            let (m, clips, split) = prepare(&manifest, anchors.as_deref(), split.as_deref(), &cfg, jobs.jobs)?;
            std::fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("effective_config.json"), &cfg)?;
            write_json(&out_dir.join("split.json"), &SplitFile::from_indices(&m, &split, cfg.train.seed))?;
            let outcome = train(&TrainRequest {
                clips: &clips,
                split: &split,
                model: cfg.model.clone(),
                spectrogram: cfg.spectrogram.clone(),
                train: cfg.train.clone(),
                weights: cfg.loss,
                jobs: jobs.jobs,
                out_dir: Some(&out_dir),
            })?;
            write_json(&out_dir.join("val_report.json"), &outcome.best_report)?;
            log::info!(
                "best epoch {} of {}: val VA MAE {:.4}",
                outcome.best_epoch,
                outcome.history.len(),
                outcome.best_report.va_mae
            );
            Ok(())
        }
        Command::Experiment { kind, manifest, anchors, split, cfg, out_dir, jobs } => {
            let kinds = ExperimentKind::parse_list(&kind)?;
            let cfg = run_config(&cfg)?;
            let (m, clips, split) = prepare(&manifest, anchors.as_deref(), split.as_deref(), &cfg, jobs.jobs)?;
            std::fs::create_dir_all(&out_dir)?;
            write_json(&out_dir.join("effective_config.json"), &cfg)?;
            write_json(&out_dir.join("split.json"), &SplitFile::from_indices(&m, &split, cfg.train.seed))?;
            if cfg.loss != Default::default() {
                log::warn!("loss weights in the config are ignored; each experiment kind sets its own");
            }
            let out = run_experiment(
                &kinds,
                &ExperimentRequest {
                    clips: &clips,
                    split: &split,
                    model: cfg.model.clone(),
                    spectrogram: cfg.spectrogram.clone(),
                    train: cfg.train.clone(),
                    jobs: jobs.jobs,
                    out_dir: Some(&out_dir),
                },
            )?;
            for r in &out.report.ablation {
                log::info!("{}: val VA MAE {:.4}", r.config, r.val_va_mae);
            }
            Ok(())
        }
        Command::Eval { ckpt, manifest, split, subset, mae_mode, history, out_dir, jobs } => {
            let mode: MaeMode = mae_mode.parse()?;
            let ckpt = Checkpoint::load(&ckpt)?;
            let featurizer = featurizer(&ckpt)?;
            let m = Manifest::load(&manifest)?;
            let clips = Clip::from_manifest(&m)?;
            let indices = subset_indices(&m, split.as_deref(), &subset)?;
            let (_, records) = evaluate_clips(&ckpt.params, &featurizer, &clips, &indices, mode, jobs.jobs)?;
            let report = emit_report(&records, mode, history.as_deref(), &out_dir)?;
            log::info!("{subset}: VA MAE {:.4} over {} clips", report.va_mae, report.n_samples);
            Ok(())
        }
        Command::Infer { ckpt, wav } => {
            let ckpt = Checkpoint::load(&ckpt)?;
            let featurizer = featurizer(&ckpt)?;
            let start = Instant::now();
            let w = featurizer.standardize(&load_wav(&wav)?)?;
            let values = featurizer.input(&w)?;
            let out = predict(&ckpt.params, &vabark::audio::MelSpectrogram { values, config: featurizer.config().clone() })?;
            let latency_ms = start.elapsed().as_secs_f64() * 1e3;
            let probs = |names: Vec<&'static str>, p: &[f32]| -> BTreeMap<&'static str, f64> {
                names.into_iter().zip(p).map(|(n, &v)| (n, v as f64)).collect()
            };
            let result = Inference {
                valence: out.valence as f64,
                arousal: out.arousal as f64,
                emotion_probs: probs(Emotion::ALL.iter().map(|e| e.as_str()).collect(), &out.emotion_probs),
                size_probs: probs(BodySize::ALL.iter().map(|e| e.as_str()).collect(), &out.size_probs),
                gender_probs: probs(Gender::ALL.iter().map(|e| e.as_str()).collect(), &out.gender_probs),
                latency_ms,
            };
            println!("{}", serde_json::to_string_pretty(&result)?);
            Ok(())
        }
        Command::Report { run_dir } => {
            println!("{}", serde_json::to_string_pretty(&summarize(&run_dir)?)?);
            Ok(())
        }
    }
}

impl ConfigArgs {
    fn only(config: Option<PathBuf>) -> Self {
        Self { config, model_config: None, train_config: None, seed: None, epochs: None, lr: None, batch_size: None }
    }
}

#[derive(Serialize)]
struct Inference {
    valence: f64,
    arousal: f64,
    emotion_probs: BTreeMap<&'static str, f64>,
    size_probs: BTreeMap<&'static str, f64>,
    gender_probs: BTreeMap<&'static str, f64>,
    latency_ms: f64,
}

/// Resolves and validates the configuration, then echoes it to stderr.
fn run_config(args: &ConfigArgs) -> Result<RunConfig> {
    let flags = Overrides { seed: args.seed, epochs: args.epochs, lr: args.lr, batch_size: args.batch_size };
    let cfg = resolve(
        RunConfig::default(),
        args.config.as_deref(),
        args.model_config.as_deref(),
        args.train_config.as_deref(),
        &flags,
    )?;
    eprintln!("effective config:\n{}", serde_json::to_string_pretty(&cfg)?);
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    write_atomic(path, &to_json_pretty(v)?)
}

fn same_dir(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn parse_fractions(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Argument(format!("bad fraction `{p}`"))))
        .collect::<Result<_>>()?;
    parts.try_into().map_err(|_| Error::Argument("--fractions needs exactly three values".into()))
}

fn load_split(path: &Path, m: &Manifest) -> Result<SplitIndices> {
    let file: SplitFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    file.to_indices(m)
}

fn label(
    m: &Manifest,
    anchors: &AnchorSet,
    features: Option<&Path>,
    table: &EmotionBiasTable,
    spectrogram: &SpectrogramConfig,
    jobs: usize,
) -> Result<Manifest> {
    let rows = match features {
        Some(p) => load_features(p)?,
        None => compute_features(m, spectrogram, jobs)?,
    };
    label_manifest(m, &align_features(m, rows)?, anchors, table)
}

/// Loads the manifest (labeling it when needed), its clips and the split.
fn prepare(
    manifest: &Path,
    anchors: Option<&Path>,
    split: Option<&Path>,
    cfg: &RunConfig,
    jobs: usize,
) -> Result<(Manifest, Vec<Clip>, SplitIndices)> {
    let mut m = Manifest::load(manifest)?;
    if !m.is_labeled() {
        let path = anchors.ok_or_else(|| Error::Argument("manifest is unlabeled; pass --anchors".into()))?;
        m = label(&m, &AnchorSet::load(path)?, None, &EmotionBiasTable::default(), &cfg.spectrogram, jobs)?;
    }
    let split = match split {
        Some(p) => load_split(p, &m)?,
        None => stratified_split(&m.emotions(), cfg.train.split_fractions, cfg.train.seed)?,
    };
    let clips = Clip::from_manifest(&m)?;
    Ok((m, clips, split))
}

fn featurizer(ckpt: &Checkpoint) -> Result<Featurizer> {
    let spectrogram = ckpt.spectrogram.clone().ok_or_else(|| Error::Checkpoint("checkpoint has no spectrogram config".into()))?;
    let norm = ckpt.norm_stats.clone().ok_or_else(|| Error::Checkpoint("checkpoint has no normalization stats".into()))?;
    Featurizer::new(spectrogram, norm)
}

fn subset_indices(m: &Manifest, split: Option<&Path>, subset: &str) -> Result<Vec<usize>> {
    if subset == "all" {
        return Ok((0..m.rows.len()).collect());
    }
    let split = load_split(split.ok_or_else(|| Error::Argument(format!("--subset {subset} needs --split")))?, m)?;
    match subset {
        "train" => Ok(split.train),
        "val" => Ok(split.val),
        "test" => Ok(split.test),
        other => Err(Error::Argument(format!("unknown subset `{other}` (expected train, val, test or all)"))),
    }
}

#[derive(Serialize)]
struct RunSummary {
    epochs_run: usize,
    best_epoch: usize,
    first_val_va_mae: f64,
    best_val_va_mae: f64,
    improvement_pct: f64,
    best_val_valence_r: Option<f64>,
    best_val_arousal_r: Option<f64>,
    best_val_emotion_acc: f64,
    best_val_size_acc: f64,
    best_val_gender_acc: f64,
}

fn summarize_history(path: &Path) -> Result<RunSummary> {
    let rows: Vec<HistoryRow> = csv::Reader::from_path(path)?.deserialize().collect::<Result<_, _>>()?;
    let first = rows.first().ok_or_else(|| Error::Argument(format!("{} has no rows", path.display())))?;
    let best = rows.iter().fold(first, |b, r| if r.val_va_mae < b.val_va_mae { r } else { b });
    Ok(RunSummary {
        epochs_run: rows.len(),
        best_epoch: best.epoch,
        first_val_va_mae: first.val_va_mae,
        best_val_va_mae: best.val_va_mae,
        improvement_pct: 100.0 * (first.val_va_mae - best.val_va_mae) / first.val_va_mae,
        best_val_valence_r: best.val_valence_r,
        best_val_arousal_r: best.val_arousal_r,
        best_val_emotion_acc: best.val_emotion_acc,
        best_val_size_acc: best.val_size_acc,
        best_val_gender_acc: best.val_gender_acc,
    })
}

/// Per-run history summaries plus any experiment report found in `dir`.
fn summarize(dir: &Path) -> Result<serde_json::Value> {
    if !dir.is_dir() {
        return Err(Error::Argument(format!("{} is not a directory", dir.display())));
    }
    let mut out = serde_json::Map::new();
    if dir.join("history.csv").is_file() {
        out.insert("run".into(), serde_json::to_value(summarize_history(&dir.join("history.csv"))?)?);
    }
    let runs = dir.join("runs");
    if runs.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(&runs)?.map(|e| e.map(|e| e.path())).collect::<Result<_, _>>()?;
        names.sort();
        let mut per = serde_json::Map::new();
        for p in names.iter().filter(|p| p.join("history.csv").is_file()) {
            let name = p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            per.insert(name, serde_json::to_value(summarize_history(&p.join("history.csv"))?)?);
        }
        out.insert("runs".into(), per.into());
    }
    if dir.join("report.json").is_file() {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
        out.insert("report".into(), v);
    }
    if out.is_empty() {
        return Err(Error::Argument(format!("no history.csv, runs/ or report.json in {}", dir.display())));
    }
    Ok(out.into())
}
