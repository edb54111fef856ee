use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::early_stop::EarlyStopping;
use super::loss::{sample_loss, LossComponents, LossWeights, Targets};
use super::norm::{NormMode, NormStats};
use super::optim::{adamw_step, cosine_lr, AdamWHyper, AdamWState};
use super::split::{validate_fractions, SplitIndices};
use crate::audio::{load_wav, standardize_duration, MelFrontEnd, SpectrogramConfig, Waveform};
use crate::error::{Error, Result};
use crate::fsutil::{to_json_pretty, write_atomic};
use crate::manifest::Manifest;
use crate::metrics::{evaluate, EvalRecord, EvalReport, MaeMode};
use crate::model::checkpoint::Checkpoint;
use crate::model::{backward_into, forward, ModelConfig, ModelOutput, ModelParams, OutputGrads, ParamGrads};
use crate::seeds::{derive_seed, rng_for, streams};
use crate::taxonomy::{BodySize, Emotion, Gender};
use crate::valabel::VALabel;

/// Samples per gradient chunk. Chunks are the unit of parallel work and are
/// reduced in a fixed order, so the thread count never changes the result.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub betas: [f64; 2],
    pub adam_eps: f64,
    pub t_max: usize,
    pub lr_min: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub split_fractions: [f64; 3],
    pub norm_mode: NormMode,
    pub mae_mode: MaeMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            lr: 1e-4,
            weight_decay: 1e-5,
            betas: [0.9, 0.999],
            adam_eps: 1e-8,
            t_max: 40,
            lr_min: 1e-6,
            patience: 8,
            min_delta: 0.001,
            seed: 42,
            augment: AugmentConfig::default(),
            split_fractions: [0.7, 0.15, 0.15],
            norm_mode: NormMode::Global,
            mae_mode: MaeMode::Eq6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.t_max == 0 {
            return Err(Error::Config("epochs, batch_size and t_max must be positive".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lr) || !(self.lr_min.is_finite() && self.lr_min >= 0.0 && self.lr_min <= self.lr) {
            return Err(Error::Config("need lr > 0 and 0 <= lr_min <= lr".into()));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) || !pos(self.adam_eps) || !(self.min_delta >= 0.0) {
            return Err(Error::Config("weight_decay and min_delta must be non-negative, adam_eps positive".into()));
        }
        if self.betas.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        self.augment.validate()?;
        validate_fractions(self.split_fractions)
    }

    fn adamw(&self, lr: f64) -> AdamWHyper {
        AdamWHyper { lr, beta1: self.betas[0], beta2: self.betas[1], eps: self.adam_eps, weight_decay: self.weight_decay }
    }
}

#[derive(Debug, Clone)]
pub enum ClipSource {
    File(PathBuf),
    Memory(Arc<Waveform>),
}

/// A labeled clip ready for training or evaluation.
#[derive(Debug, Clone)]
pub struct Clip {
    pub id: String,
    pub source: ClipSource,
    pub label: VALabel,
    pub emotion: Emotion,
    pub size: BodySize,
    pub gender: Gender,
}

impl Clip {
    pub fn targets(&self) -> Targets {
        Targets { label: self.label, emotion: self.emotion.index(), size: self.size.index(), gender: self.gender.index() }
    }

    pub fn load(&self) -> Result<Waveform> {
        match &self.source {
            ClipSource::File(p) => load_wav(p),
            ClipSource::Memory(w) => Ok(Waveform::clone(w)),
        }
    }

    pub fn from_manifest(m: &Manifest) -> Result<Vec<Clip>> {
        m.rows
            .iter()
            .map(|r| {
                let label = r.label().ok_or_else(|| Error::Manifest(format!("row `{}` has no valence/arousal label", r.id)))?;
                Ok(Clip {
                    id: r.id.clone(),
                    source: ClipSource::File(m.resolve(r)),
                    label,
                    emotion: r.emotion,
                    size: r.size,
                    gender: r.gender,
                })
            })
            .collect()
    }
}

/// One row of `history.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_l_v: f64,
    pub train_l_a: f64,
    pub train_l_e: f64,
    pub train_l_s: f64,
    pub train_l_g: f64,
    pub val_loss: f64,
    pub val_va_mae: f64,
    pub val_valence_mae: f64,
    pub val_arousal_mae: f64,
    pub val_valence_r: Option<f64>,
    pub val_arousal_r: Option<f64>,
    pub val_emotion_acc: f64,
    pub val_size_acc: f64,
    pub val_gender_acc: f64,
}

pub fn history_csv(rows: &[HistoryRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub struct TrainRequest<'a> {
    pub clips: &'a [Clip],
    pub split: &'a SplitIndices,
    pub model: ModelConfig,
    pub spectrogram: SpectrogramConfig,
    pub train: TrainConfig,
    pub weights: LossWeights,
    pub jobs: usize,
    /// When set, `history.csv`, `norm_stats.json`, `best.ckpt` and
    /// `last.ckpt` are kept up to date here.
    pub out_dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub norm_stats: NormStats,
    /// Validation report of the best checkpoint.
    pub best_report: EvalReport,
}

/// Standardized, log-mel, normalized input for `clip`.
pub struct Featurizer {
    front: MelFrontEnd,
    norm: NormStats,
}

impl Featurizer {
    pub fn new(spectrogram: SpectrogramConfig, norm: NormStats) -> Result<Self> {
        norm.validate(spectrogram.n_mels)?;
        Ok(Self { front: MelFrontEnd::new(spectrogram)?, norm })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        self.front.config()
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn standardize(&self, w: &Waveform) -> Result<Waveform> {
        let c = self.front.config();
        standardize_duration(w, c.target_duration, c.sample_rate)
    }

    /// `w` must already be standardized.
    pub fn input(&self, w: &Waveform) -> Result<Array2<f32>> {
        let mut v = self.front.compute(w)?.values;
        self.norm.apply(&mut v);
        Ok(v)
    }

    pub fn clip_input(&self, clip: &Clip) -> Result<Array2<f32>> {
        self.input(&self.standardize(&clip.load()?)?)
    }
}

pub fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Fits normalization statistics on the clean spectrograms of `indices`.
pub fn fit_norm(clips: &[Clip], indices: &[usize], spectrogram: &SpectrogramConfig, mode: NormMode) -> Result<NormStats> {
    let front = MelFrontEnd::new(spectrogram.clone())?;
    let specs: Vec<Array2<f32>> = indices
        .par_iter()
        .map(|&i| {
            let w = standardize_duration(&clips[i].load()?, spectrogram.target_duration, spectrogram.sample_rate)?;
            Ok(front.compute(&w)?.values)
        })
        .collect::<Result<_>>()?;
    NormStats::fit(specs.iter(), mode)
}

fn argmax(p: &[f32]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

pub fn eval_record(clip: &Clip, out: &ModelOutput<f32>) -> EvalRecord {
    EvalRecord {
        id: clip.id.clone(),
        pred: VALabel { valence: out.valence as f64, arousal: out.arousal as f64 },
        truth: clip.label,
        pred_emotion: Emotion::from_index(argmax(&out.emotion_probs)).unwrap(),
        emotion: clip.emotion,
        pred_size: BodySize::from_index(argmax(&out.size_probs)).unwrap(),
        size: clip.size,
        pred_gender: Gender::from_index(argmax(&out.gender_probs)).unwrap(),
        gender: clip.gender,
    }
}

/// Evaluation-mode outputs for precomputed inputs, in input order.
fn predict_inputs(params: &ModelParams<f32>, inputs: &[Array2<f32>]) -> Result<Vec<ModelOutput<f32>>> {
    inputs
        .par_iter()
        .map(|x| {
            let (out, _) = forward(params, x.view(), false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
            Ok(out)
        })
        .collect()
}

/// Evaluation-mode outputs for `clips[indices]`, computed on `jobs` threads.
pub fn predict_clips(
    params: &ModelParams<f32>,
    featurizer: &Featurizer,
    clips: &[Clip],
    indices: &[usize],
    jobs: usize,
) -> Result<Vec<ModelOutput<f32>>> {
    thread_pool(jobs)?.install(|| {
        indices
            .par_iter()
            .map(|&i| {
                let x = featurizer.clip_input(&clips[i])?;
                let (out, _) = forward(params, x.view(), false, &mut rand::rngs::mock::StepRng::new(0, 0))?;
                Ok(out)
            })
            .collect()
    })
}

/// Evaluation report of `params` on `clips[indices]`.
pub fn evaluate_clips(
    params: &ModelParams<f32>,
    featurizer: &Featurizer,
    clips: &[Clip],
    indices: &[usize],
    mode: MaeMode,
    jobs: usize,
) -> Result<(EvalReport, Vec<EvalRecord>)> {
    let outs = predict_clips(params, featurizer, clips, indices, jobs)?;
    let records: Vec<EvalRecord> = indices.iter().zip(&outs).map(|(&i, o)| eval_record(&clips[i], o)).collect();
    Ok((evaluate(&records, mode)?, records))
}

struct ChunkResult {
    losses: Vec<LossComponents>,
    grads: ParamGrads<f32>,
}

#[derive(Serialize)]
struct NanSnapshot<'a> {
    epoch: usize,
    step: usize,
    lr: f64,
    batch_ids: Vec<&'a str>,
    losses: Vec<LossComponents>,
    grads_finite: bool,
}

fn checkpoint(params: &ModelParams<f32>, featurizer: &Featurizer, meta: &[(&str, String)]) -> Checkpoint {
    let mut ck = Checkpoint::new(params.clone());
    ck.norm_stats = Some(featurizer.norm().clone());
    ck.spectrogram = Some(featurizer.config().clone());
    ck.metadata = meta.iter().map(|(k, v)| (k.to_string(), v.clone())).collect::<BTreeMap<_, _>>();
    ck
}

/// Trains a model with AdamW, a per-epoch cosine schedule and early stopping
/// on validation VA MAE, keeping the checkpoint with the lowest value.
pub fn train(req: &TrainRequest<'_>) -> Result<TrainOutcome> {
    let cfg = &req.train;
    cfg.validate()?;
    req.weights.validate()?;
    req.model.validate()?;
    req.spectrogram.validate()?;
    if req.model.input_dim != req.spectrogram.n_mels {
        return Err(Error::Config(format!(
            "model input_dim {} does not match n_mels {}",
            req.model.input_dim, req.spectrogram.n_mels
        )));
    }
    if req.split.train.is_empty() || req.split.val.is_empty() {
        return Err(Error::Split("training needs non-empty train and val splits".into()));
    }
    if let Some(&bad) = req.split.train.iter().chain(&req.split.val).find(|&&i| i >= req.clips.len()) {
        return Err(Error::Split(format!("split index {bad} out of range")));
    }
    let pool = thread_pool(req.jobs)?;
    pool.install(|| train_inner(req, cfg))
}

fn train_inner(req: &TrainRequest<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let clips = req.clips;
    let norm = fit_norm(clips, &req.split.train, &req.spectrogram, cfg.norm_mode)?;
    let featurizer = Featurizer::new(req.spectrogram.clone(), norm.clone())?;
    if let Some(dir) = req.out_dir {
        write_atomic(&dir.join("norm_stats.json"), &to_json_pretty(&norm)?)?;
    }
    let val_inputs: Vec<Array2<f32>> = req.split.val.par_iter().map(|&i| featurizer.clip_input(&clips[i])).collect::<Result<_>>()?;
    let val_clips: Vec<&Clip> = req.split.val.iter().map(|&i| &clips[i]).collect();

    let mut params = ModelParams::<f32>::init(&req.model, derive_seed(cfg.seed, streams::INIT, &[]))?;
    let mut opt = AdamWState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience, cfg.min_delta);
    let mut history = Vec::new();
    let mut best: Option<(Checkpoint, EvalReport, usize)> = None;
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut order = req.split.train.clone();
    let target_duration = req.spectrogram.target_duration;
    let w = req.weights;

    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr((epoch - 1).min(cfg.t_max), cfg.t_max, cfg.lr, cfg.lr_min);
        let hyper = cfg.adamw(lr);
        order.clone_from(&req.split.train);
        order.shuffle(&mut rng_for(cfg.seed, streams::SHUFFLE, &[epoch as u64]));
        let mut epoch_losses = Vec::with_capacity(order.len());

        for batch in order.chunks(cfg.batch_size) {
            step += 1;
            let inv_b = 1.0 / batch.len() as f32;
            let snapshot = &params;
            let chunks: Vec<ChunkResult> = batch
                .par_chunks(GRAD_CHUNK)
                .map(|chunk| {
                    let mut grads = snapshot.zero_grads();
                    let mut losses = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let clip = &clips[i];
                        let wave = featurizer.standardize(&clip.load()?)?;
                        let mut aug_rng = rng_for(cfg.seed, streams::AUGMENT, &[epoch as u64, i as u64]);
                        let wave = augment(&wave, &cfg.augment, target_duration, &mut aug_rng)?;
                        let x = featurizer.input(&wave)?;
                        let mut drop_rng = rng_for(cfg.seed, streams::DROPOUT, &[epoch as u64, i as u64]);
                        let (out, cache) = forward(snapshot, x.view(), true, &mut drop_rng)?;
                        let (loss, g): (LossComponents, OutputGrads<f32>) = sample_loss(&out, &clip.targets(), &w)?;
                        backward_into(snapshot, &cache, &g.scaled(inv_b), &mut grads)?;
                        losses.push(loss);
                    }
                    Ok(ChunkResult { losses, grads })
                })
                .collect::<Result<_>>()?;

            let mut grads = params.zero_grads();
            let mut batch_losses = Vec::with_capacity(batch.len());
            for c in chunks {
                grads.accumulate(&c.grads);
                batch_losses.extend(c.losses);
            }
            let batch_loss = LossComponents::mean(&batch_losses, &w);
            let grads_finite = grads.is_finite();
            if !batch_loss.is_finite() || !grads_finite {
                if let Some(dir) = req.out_dir {
                    let snap = NanSnapshot {
                        epoch,
                        step,
                        lr,
                        batch_ids: batch.iter().map(|&i| clips[i].id.as_str()).collect(),
                        losses: batch_losses.clone(),
                        grads_finite,
                    };
                    write_atomic(&dir.join("nan_snapshot.json"), &to_json_pretty(&snap)?)?;
                    checkpoint(&params, &featurizer, &[("epoch", epoch.to_string()), ("step", step.to_string())])
                        .save(dir.join("nan_snapshot.ckpt"))?;
                }
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    detail: if grads_finite { format!("loss {batch_loss:?}") } else { "non-finite gradient".into() },
                });
            }
            adamw_step(&mut params, &grads, &mut opt, &hyper);
            epoch_losses.extend(batch_losses);
        }

        let train_loss = LossComponents::mean(&epoch_losses, &w);
        let outs = predict_inputs(&params, &val_inputs)?;
        let mut val_losses = Vec::with_capacity(outs.len());
        for (o, c) in outs.iter().zip(&val_clips) {
            val_losses.push(sample_loss(o, &c.targets(), &w)?.0);
        }
        let val_loss = LossComponents::mean(&val_losses, &w);
        let records: Vec<EvalRecord> = outs.iter().zip(&val_clips).map(|(o, c)| eval_record(c, o)).collect();
        let report = evaluate(&records, cfg.mae_mode)?;
        if !report.va_mae.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFinite { epoch, step, detail: "validation metrics".into() });
        }
        let row = HistoryRow {
            epoch,
            lr,
            train_loss: train_loss.total,
            train_l_v: train_loss.l_v,
            train_l_a: train_loss.l_a,
            train_l_e: train_loss.l_e,
            train_l_s: train_loss.l_s,
            train_l_g: train_loss.l_g,
            val_loss: val_loss.total,
            val_va_mae: report.va_mae,
            val_valence_mae: report.valence_mae,
            val_arousal_mae: report.arousal_mae,
            val_valence_r: report.valence_r,
            val_arousal_r: report.arousal_r,
            val_emotion_acc: report.emotion_acc,
            val_size_acc: report.size_acc,
            val_gender_acc: report.gender_acc,
        };
        let r = |v: Option<f64>| v.map_or("n/a".to_owned(), |x| format!("{x:.3}"));
        log::info!(
            "epoch {epoch}: lr {lr:.3e} train {:.4} val {:.4} va_mae {:.4} r_v {} r_a {}",
            row.train_loss,
            row.val_loss,
            row.val_va_mae,
            r(row.val_valence_r),
            r(row.val_arousal_r)
        );
        history.push(row);

        let decision = stopper.observe(epoch, report.va_mae);
        let meta = |kind: &str| {
            vec![
                ("kind", kind.to_string()),
                ("epoch", epoch.to_string()),
                ("seed", cfg.seed.to_string()),
                ("val_va_mae", report.va_mae.to_string()),
            ]
        };
        if decision.new_best {
            let ck = checkpoint(&params, &featurizer, &meta("best"));
            if let Some(dir) = req.out_dir {
                ck.save(dir.join("best.ckpt"))?;
            }
            best = Some((ck, report.clone(), epoch));
        }
        if let Some(dir) = req.out_dir {
            write_atomic(&dir.join("history.csv"), &history_csv(&history)?)?;
            checkpoint(&params, &featurizer, &meta("last")).save(dir.join("last.ckpt"))?;
        }
        if decision.stop && epoch < cfg.epochs {
            log::info!("early stop after epoch {epoch}; best epoch {:?}", stopper.best_epoch());
            stopped_early = true;
            break;
        }
    }

    let last_epoch = history.last().map(|r| r.epoch).unwrap_or(0);
    let last_meta = [
        ("kind", "last".to_string()),
        ("epoch", last_epoch.to_string()),
        ("seed", cfg.seed.to_string()),
        ("val_va_mae", history.last().map(|r| r.val_va_mae.to_string()).unwrap_or_default()),
    ];
    let last = checkpoint(&params, &featurizer, &last_meta);
    let (best, best_report, best_epoch) = best.ok_or_else(|| Error::Degenerate("no epoch completed".into()))?;
    Ok(TrainOutcome { best, last, history, best_epoch, stopped_early, norm_stats: norm, best_report })
}
