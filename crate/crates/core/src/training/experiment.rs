//! Auxiliary-task ablations and leave-one-size-group-out runs.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::LossWeights;
use super::split::{stratified_split, SplitIndices, MIN_PER_CLASS};
use super::trainer::{evaluate_clips, train, Clip, Featurizer, TrainConfig, TrainOutcome, TrainRequest};
use crate::audio::SpectrogramConfig;
use crate::error::{Error, Result};
use crate::fsutil::{to_json_pretty, write_atomic};
use crate::metrics::EvalReport;
use crate::model::ModelConfig;
use crate::taxonomy::{BodySize, Emotion};

pub const EXPERIMENT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    FullMtl,
    VaOnly,
    Emotion,
    Size,
    Gender,
    Logo,
}

impl ExperimentKind {
    pub const ABLATION: [ExperimentKind; 5] =
        [ExperimentKind::VaOnly, ExperimentKind::Emotion, ExperimentKind::Size, ExperimentKind::Gender, ExperimentKind::FullMtl];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::FullMtl => "full_mtl",
            ExperimentKind::VaOnly => "va_only",
            ExperimentKind::Emotion => "emotion",
            ExperimentKind::Size => "size",
            ExperimentKind::Gender => "gender",
            ExperimentKind::Logo => "logo",
        }
    }

    /// Loss weights: defaults with every auxiliary task outside this
    /// configuration switched off. LOGO trains with the full defaults.
    pub fn loss_weights(self) -> LossWeights {
        let d = LossWeights::default();
        let keep = |on: bool, w: f64| if on { w } else { 0.0 };
        match self {
            ExperimentKind::FullMtl | ExperimentKind::Logo => d,
            ExperimentKind::VaOnly => LossWeights { w_e: 0.0, w_s: 0.0, w_g: 0.0, ..d },
            k => LossWeights {
                w_e: keep(k == ExperimentKind::Emotion, d.w_e),
                w_s: keep(k == ExperimentKind::Size, d.w_s),
                w_g: keep(k == ExperimentKind::Gender, d.w_g),
                ..d
            },
        }
    }

    /// Parses a comma-separated list; `ablation` expands to the five loss configurations.
    pub fn parse_list(s: &str) -> Result<Vec<ExperimentKind>> {
        let mut out = Vec::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "ablation" {
                out.extend(Self::ABLATION);
                continue;
            }
            let k = [Self::FullMtl, Self::VaOnly, Self::Emotion, Self::Size, Self::Gender, Self::Logo]
                .into_iter()
                .find(|k| k.as_str() == part)
                .ok_or_else(|| Error::Argument(format!("unknown experiment kind `{part}`")))?;
            out.push(k);
        }
        out.dedup();
        if out.is_empty() {
            return Err(Error::Argument("no experiment kind given".into()));
        }
        Ok(out)
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config: ExperimentKind,
    pub w_e: f64,
    pub w_s: f64,
    pub w_g: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    /// Validation scores of the retained (lowest VA MAE) checkpoint.
    pub val_va_mae: f64,
    pub val_valence_r: Option<f64>,
    pub val_arousal_r: Option<f64>,
    pub last_epoch_val_va_mae: f64,
    /// Relative VA MAE reduction against the va_only row, percent.
    pub improvement_vs_va_only_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogoRow {
    pub train_group: String,
    pub test_group: String,
    pub n_train: usize,
    pub n_within: usize,
    pub n_cross: usize,
    pub within_va_mae: f64,
    pub within_valence_r: Option<f64>,
    pub within_arousal_r: Option<f64>,
    pub cross_va_mae: f64,
    pub cross_valence_r: Option<f64>,
    pub cross_arousal_r: Option<f64>,
    /// `(cross - within) / within` on VA MAE.
    pub generalization_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub seed: u64,
    pub mae_mode: crate::metrics::MaeMode,
    pub ablation: Vec<AblationRow>,
    pub logo: Vec<LogoRow>,
}

pub struct ExperimentRequest<'a> {
    pub clips: &'a [Clip],
    /// Partition used by the ablation runs.
    pub split: &'a SplitIndices,
    pub model: ModelConfig,
    pub spectrogram: SpectrogramConfig,
    pub train: TrainConfig,
    pub jobs: usize,
    /// Receives `report.json`, the CSV tables and one subdirectory per run.
    pub out_dir: Option<&'a Path>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    /// Training outcome of each ablation run, in request order.
    pub runs: Vec<(ExperimentKind, TrainOutcome)>,
}

fn run_dir(out: Option<&Path>, name: &str) -> Result<Option<std::path::PathBuf>> {
    out.map(|d| {
        let p = d.join("runs").join(name);
        std::fs::create_dir_all(&p)?;
        Ok(p)
    })
    .transpose()
}

fn ablation_row(kind: ExperimentKind, out: &TrainOutcome) -> AblationRow {
    let w = kind.loss_weights();
    AblationRow {
        config: kind,
        w_e: w.w_e,
        w_s: w.w_s,
        w_g: w.w_g,
        best_epoch: out.best_epoch,
        epochs_run: out.history.len(),
        val_va_mae: out.best_report.va_mae,
        val_valence_r: out.best_report.valence_r,
        val_arousal_r: out.best_report.arousal_r,
        last_epoch_val_va_mae: out.history.last().map(|r| r.val_va_mae).unwrap_or(f64::NAN),
        improvement_vs_va_only_pct: None,
    }
}

const SMALL_MEDIUM: &str = "small+medium";

fn group_name(large: bool) -> &'static str {
    if large { "large" } else { SMALL_MEDIUM }
}

fn logo_direction(req: &ExperimentRequest<'_>, train_large: bool) -> Result<LogoRow> {
    let clips = req.clips;
    let in_group = |c: &Clip, large: bool| (c.size == BodySize::Large) == large;
    let train_idx: Vec<usize> = (0..clips.len()).filter(|&i| in_group(&clips[i], train_large)).collect();
    let cross_idx: Vec<usize> = (0..clips.len()).filter(|&i| in_group(&clips[i], !train_large)).collect();
    if train_idx.is_empty() || cross_idx.is_empty() {
        return Err(Error::Split("leave-one-group-out needs clips in both size groups".into()));
    }
    // emotions too rare in this group to stratify go to train only
    let count = |e: Emotion| train_idx.iter().filter(|&&i| clips[i].emotion == e).count();
    let (strat_idx, rare_idx): (Vec<usize>, Vec<usize>) =
        train_idx.iter().partition(|&&i| count(clips[i].emotion) >= MIN_PER_CLASS);
    let emotions: Vec<Emotion> = strat_idx.iter().map(|&i| clips[i].emotion).collect();
    let local = stratified_split(&emotions, req.train.split_fractions, req.train.seed)?;
    let map = |v: &[usize]| v.iter().map(|&j| strat_idx[j]).collect::<Vec<_>>();
    let mut split = SplitIndices { train: map(&local.train), val: map(&local.val), test: map(&local.test) };
    split.train.extend(rare_idx);
    split.train.sort_unstable();
    if split.test.is_empty() {
        return Err(Error::Split("within-group test partition is empty".into()));
    }
    let name = format!("logo_{}", if train_large { "large" } else { "small_medium" });
    let dir = run_dir(req.out_dir, &name)?;
    let outcome = train(&TrainRequest {
        clips,
        split: &split,
        model: req.model.clone(),
        spectrogram: req.spectrogram.clone(),
        train: req.train.clone(),
        weights: ExperimentKind::Logo.loss_weights(),
        jobs: req.jobs,
        out_dir: dir.as_deref(),
    })?;
    let featurizer = Featurizer::new(req.spectrogram.clone(), outcome.norm_stats.clone())?;
    let params = &outcome.best.params;
    let (within, _): (EvalReport, _) = evaluate_clips(params, &featurizer, clips, &split.test, req.train.mae_mode, req.jobs)?;
    let (cross, _) = evaluate_clips(params, &featurizer, clips, &cross_idx, req.train.mae_mode, req.jobs)?;
    Ok(LogoRow {
        train_group: group_name(train_large).into(),
        test_group: group_name(!train_large).into(),
        n_train: split.train.len(),
        n_within: split.test.len(),
        n_cross: cross_idx.len(),
        within_va_mae: within.va_mae,
        within_valence_r: within.valence_r,
        within_arousal_r: within.arousal_r,
        cross_va_mae: cross.va_mae,
        cross_valence_r: cross.valence_r,
        cross_arousal_r: cross.arousal_r,
        generalization_gap: (cross.va_mae - within.va_mae) / within.va_mae,
    })
}

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Runs each requested configuration with the shared settings of `req`.
pub fn run_experiment(kinds: &[ExperimentKind], req: &ExperimentRequest<'_>) -> Result<ExperimentOutcome> {
    let mut runs = Vec::new();
    let mut ablation = Vec::new();
    let mut logo = Vec::new();
    for &kind in kinds {
        if kind == ExperimentKind::Logo {
            for train_large in [true, false] {
                let row = logo_direction(req, train_large)?;
                log::info!("logo {} -> {}: gap {:.4}", row.train_group, row.test_group, row.generalization_gap);
                logo.push(row);
            }
            continue;
        }
        let dir = run_dir(req.out_dir, kind.as_str())?;
        let outcome = train(&TrainRequest {
            clips: req.clips,
            split: req.split,
            model: req.model.clone(),
            spectrogram: req.spectrogram.clone(),
            train: req.train.clone(),
            weights: kind.loss_weights(),
            jobs: req.jobs,
            out_dir: dir.as_deref(),
        })?;
        log::info!("{kind}: val VA MAE {:.4}", outcome.best_report.va_mae);
        ablation.push(ablation_row(kind, &outcome));
        runs.push((kind, outcome));
    }
    if let Some(base) = ablation.iter().find(|r| r.config == ExperimentKind::VaOnly).map(|r| r.val_va_mae) {
        for r in &mut ablation {
            r.improvement_vs_va_only_pct = Some(100.0 * (base - r.val_va_mae) / base);
        }
    }
    let report = ExperimentReport {
        schema_version: EXPERIMENT_SCHEMA_VERSION,
        seed: req.train.seed,
        mae_mode: req.train.mae_mode,
        ablation,
        logo,
    };
    if let Some(dir) = req.out_dir {
        write_atomic(&dir.join("report.json"), &to_json_pretty(&report)?)?;
        if !report.ablation.is_empty() {
            write_atomic(&dir.join("ablation.csv"), &csv_bytes(&report.ablation)?)?;
        }
        if !report.logo.is_empty() {
            write_atomic(&dir.join("logo.csv"), &csv_bytes(&report.logo)?)?;
        }
    }
    Ok(ExperimentOutcome { report, runs })
}
