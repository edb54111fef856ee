//! Evaluation metrics and report emission.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::taxonomy::{BodySize, Emotion, Gender};
use crate::valabel::VALabel;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// How the valence and arousal absolute errors are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaeMode {
    /// Per-sample sum of both absolute errors, averaged over samples.
    #[default]
    Eq6,
    /// Half of `Eq6`: the mean over both dimensions.
    Mean2,
}

impl std::str::FromStr for MaeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eq6" => Ok(MaeMode::Eq6),
            "mean2" => Ok(MaeMode::Mean2),
            other => Err(Error::Argument(format!("unknown MAE mode `{other}` (expected eq6 or mean2)"))),
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Argument(format!("length mismatch: {a} predictions vs {b} targets")));
    }
    if a == 0 {
        return Err(Error::Argument("empty input".into()));
    }
    Ok(())
}

pub fn va_mae(pred: &[VALabel], truth: &[VALabel], mode: MaeMode) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    let sum: f64 = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p.valence - t.valence).abs() + (p.arousal - t.arousal).abs())
        .sum();
    let eq6 = sum / pred.len() as f64;
    Ok(match mode {
        MaeMode::Eq6 => eq6,
        MaeMode::Mean2 => eq6 / 2.0,
    })
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Pearson product-moment correlation. Constant inputs are an error.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_lengths(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::Argument("pearson_r needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson_r of a constant sequence".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

pub fn accuracy<C: PartialEq>(pred: &[C], truth: &[C]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / pred.len() as f64)
}

/// One evaluated clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub pred: VALabel,
    pub truth: VALabel,
    pub pred_emotion: Emotion,
    pub emotion: Emotion,
    pub pred_size: BodySize,
    pub size: BodySize,
    pub pred_gender: Gender,
    pub gender: Gender,
}

impl EvalRecord {
    pub fn va_error(&self) -> f64 {
        (self.pred.valence - self.truth.valence).abs() + (self.pred.arousal - self.truth.arousal).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub va_mae: f64,
    pub valence_mae: f64,
    pub arousal_mae: f64,
    /// `None` when either sequence is constant.
    pub valence_r: Option<f64>,
    pub arousal_r: Option<f64>,
    pub emotion_acc: f64,
    pub size_acc: f64,
    pub gender_acc: f64,
    pub n_samples: usize,
    pub mae_mode: MaeMode,
}

pub fn evaluate(records: &[EvalRecord], mode: MaeMode) -> Result<EvalReport> {
    if records.is_empty() {
        return Err(Error::Argument("cannot evaluate an empty set".into()));
    }
    let col = |f: fn(&EvalRecord) -> f64| records.iter().map(f).collect::<Vec<_>>();
    let (pv, tv) = (col(|r| r.pred.valence), col(|r| r.truth.valence));
    let (pa, ta) = (col(|r| r.pred.arousal), col(|r| r.truth.arousal));
    let pred: Vec<VALabel> = records.iter().map(|r| r.pred).collect();
    let truth: Vec<VALabel> = records.iter().map(|r| r.truth).collect();
    let cls = |p: fn(&EvalRecord) -> usize, t: fn(&EvalRecord) -> usize| {
        accuracy(&records.iter().map(p).collect::<Vec<_>>(), &records.iter().map(t).collect::<Vec<_>>())
    };
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        va_mae: va_mae(&pred, &truth, mode)?,
        valence_mae: mae(&pv, &tv)?,
        arousal_mae: mae(&pa, &ta)?,
        valence_r: pearson_r(&pv, &tv).ok(),
        arousal_r: pearson_r(&pa, &ta).ok(),
        emotion_acc: cls(|r| r.pred_emotion.index(), |r| r.emotion.index())?,
        size_acc: cls(|r| r.pred_size.index(), |r| r.size.index())?,
        gender_acc: cls(|r| r.pred_gender.index(), |r| r.gender.index())?,
        n_samples: records.len(),
        mae_mode: mode,
    })
}

/// Number of rows kept in `top_errors.csv`.
pub fn top_error_count(n: usize) -> usize {
    (n * 5).div_ceil(100)
}

fn scatter_csv(records: &[&EvalRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "pred_v", "true_v", "pred_a", "true_a", "emotion", "size", "gender", "va_error"])?;
    for r in records {
        w.write_record([
            r.id.clone(),
            r.pred.valence.to_string(),
            r.truth.valence.to_string(),
            r.pred.arousal.to_string(),
            r.truth.arousal.to_string(),
            r.emotion.to_string(),
            r.size.to_string(),
            r.gender.to_string(),
            r.va_error().to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Writes `report.json`, `va_scatter.csv`, `top_errors.csv` and, when given,
/// a copy of the training history as `history.csv`.
///
/// All contents are rendered before anything is written, so a failure leaves
/// no partial output behind.
pub fn emit_report(records: &[EvalRecord], mode: MaeMode, history_csv: Option<&Path>, out_dir: &Path) -> Result<EvalReport> {
    let report = evaluate(records, mode)?;
    let all: Vec<&EvalRecord> = records.iter().collect();
    let mut ranked = all.clone();
    // stable sort keeps input order among equal errors
    ranked.sort_by(|a, b| b.va_error().total_cmp(&a.va_error()));
    ranked.truncate(top_error_count(records.len()));

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("report.json", {
            let mut v = serde_json::to_vec_pretty(&report)?;
            v.push(b'\n');
            v
        }),
        ("va_scatter.csv", scatter_csv(&all)?),
        ("top_errors.csv", scatter_csv(&ranked)?),
    ];
    if let Some(h) = history_csv {
        files.push(("history.csv", fs::read(h)?));
    }
    fs::create_dir_all(out_dir)?;
    for (name, bytes) in files {
        fs::write(out_dir.join(name), bytes)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn va(v: f64, a: f64) -> VALabel {
        VALabel { valence: v, arousal: a }
    }

    #[test]
    fn mae_examples() {
        let t = [va(0.2, 0.5), va(-0.3, 0.1)];
        assert_eq!(va_mae(&t, &t, MaeMode::Eq6).unwrap(), 0.0);
        let single = va_mae(&[va(0.1, 0.3)], &[va(0.0, 0.0)], MaeMode::Eq6).unwrap();
        assert!((single - 0.4).abs() < 1e-12);
        let half = va_mae(&[va(0.1, 0.3)], &[va(0.0, 0.0)], MaeMode::Mean2).unwrap();
        assert!((half - 0.2).abs() < 1e-12);
        let two = va_mae(&[va(0.1, 0.1), va(0.3, 0.3)], &[va(0.0, 0.0), va(0.0, 0.0)], MaeMode::Eq6).unwrap();
        assert!((two - 0.4).abs() < 1e-12);
        assert!(va_mae(&t, &t[..1], MaeMode::Eq6).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let y: Vec<f64> = x.iter().map(|v| -2.0 * v + 3.0).collect();
        assert!((pearson_r(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_r(&x, &[1.0, 3.0, 2.0, 4.0]).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(pearson_r(&x, &[2.0; 4]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 2, 3, 4], &[1, 2, 3, 0]).unwrap(), 0.75);
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }

    fn record(i: usize, err: f64) -> EvalRecord {
        EvalRecord {
            id: format!("s{i}"),
            pred: va(err, 0.5),
            truth: va(0.0, 0.5),
            pred_emotion: Emotion::Alert,
            emotion: Emotion::Alert,
            pred_size: BodySize::Large,
            size: BodySize::Small,
            pred_gender: Gender::Male,
            gender: Gender::Male,
        }
    }

    #[test]
    fn emitted_files_have_expected_rows() {
        let dir = tempfile::tempdir().unwrap();
        let records: Vec<EvalRecord> = (0..41).map(|i| record(i, (i as f64 * 0.37) % 1.0)).collect();
        let report = emit_report(&records, MaeMode::Eq6, None, dir.path()).unwrap();
        assert_eq!(report.n_samples, 41);
        assert_eq!(report.size_acc, 0.0);
        let rows = |name: &str| csv::Reader::from_path(dir.path().join(name)).unwrap().records().count();
        assert_eq!(rows("va_scatter.csv"), 41);
        assert_eq!(rows("top_errors.csv"), 3);
        assert_eq!(top_error_count(100), 5);
        assert_eq!(top_error_count(1), 1);
    }

    #[test]
    fn empty_eval_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        assert!(emit_report(&[], MaeMode::Eq6, None, &out).is_err());
        assert!(!out.exists());
    }

    proptest! {
        #[test]
        fn mae_symmetric_translation_invariant(
            pts in proptest::collection::vec((-1.0f64..1.0, 0.0f64..1.0, -1.0f64..1.0, 0.0f64..1.0), 1..30),
            shift in -0.5f64..0.5,
        ) {
            let p: Vec<VALabel> = pts.iter().map(|t| va(t.0, t.1)).collect();
            let q: Vec<VALabel> = pts.iter().map(|t| va(t.2, t.3)).collect();
            let a = va_mae(&p, &q, MaeMode::Eq6).unwrap();
            prop_assert!((a - va_mae(&q, &p, MaeMode::Eq6).unwrap()).abs() < 1e-12);
            let ps: Vec<VALabel> = p.iter().map(|l| va(l.valence + shift, l.arousal + shift)).collect();
            let qs: Vec<VALabel> = q.iter().map(|l| va(l.valence + shift, l.arousal + shift)).collect();
            prop_assert!((a - va_mae(&ps, &qs, MaeMode::Eq6).unwrap()).abs() < 1e-9);
            let vm = mae(&p.iter().map(|l| l.valence).collect::<Vec<_>>(), &q.iter().map(|l| l.valence).collect::<Vec<_>>()).unwrap();
            let am = mae(&p.iter().map(|l| l.arousal).collect::<Vec<_>>(), &q.iter().map(|l| l.arousal).collect::<Vec<_>>()).unwrap();
            prop_assert!((a - (vm + am)).abs() < 1e-12);
        }

        #[test]
        fn pearson_affine_behaviour(
            xs in proptest::collection::vec(-10.0f64..10.0, 3..30),
            ys in proptest::collection::vec(-10.0f64..10.0, 3..30),
            k in 0.1f64..5.0, c in -3.0f64..3.0,
        ) {
            let n = xs.len().min(ys.len());
            let (x, y) = (&xs[..n], &ys[..n]);
            if let Ok(r) = pearson_r(x, y) {
                let scaled: Vec<f64> = x.iter().map(|v| k * v + c).collect();
                prop_assert!((pearson_r(&scaled, y).unwrap() - r).abs() < 1e-9);
                let neg: Vec<f64> = x.iter().map(|v| -k * v + c).collect();
                prop_assert!((pearson_r(&neg, y).unwrap() + r).abs() < 1e-9);
            }
        }
    }
}
