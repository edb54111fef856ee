//! Automatic valence/arousal labels from acoustics plus an emotion prior.
//!
//! Arousal is a log-scale position of the clip's 95th-percentile frame RMS
//! between the corpus anchors. Valence combines normalized centroid, log RMS
//! and zero-crossing rate with a per-emotion bias.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::anchors::{norm_feature, AnchorSet};
use crate::audio::{standardize_duration, SpectrogramConfig, Waveform};
use crate::error::{Error, Result};
use crate::features::{extract_features, AcousticFeatures, FEATURE_EPS};
use crate::taxonomy::Emotion;

/// Weights of normalized (centroid, log_rms, zcr) in the acoustic score.
pub const CENTROID_WEIGHT: f64 = 0.45;
pub const LOG_RMS_WEIGHT: f64 = -0.35;
pub const ZCR_WEIGHT: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VALabel {
    pub valence: f64,
    pub arousal: f64,
}

/// Additive valence prior per emotion.
#[derive(Debug, Clone, PartialEq)]
pub struct EmotionBiasTable {
    biases: [f64; 8],
}

impl Default for EmotionBiasTable {
    fn default() -> Self {
        Self { biases: [-0.18, -0.16, -0.12, -0.08, -0.02, 0.10, 0.12, 0.14] }
    }
}

impl EmotionBiasTable {
    /// Builds a table from a name → bias map, which must cover exactly the
    /// eight emotions with values in [-1, 1] strictly increasing in taxonomy order.
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut biases = [f64::NAN; 8];
        for (name, &b) in map {
            let e: Emotion = name.parse().map_err(|_| Error::BiasTable(format!("unknown emotion `{name}`")))?;
            biases[e.index()] = b;
        }
        if let Some(e) = Emotion::ALL.iter().find(|e| biases[e.index()].is_nan()) {
            return Err(Error::BiasTable(format!("missing entry for `{e}`")));
        }
        let table = Self { biases };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.biases.iter().find(|b| !(-1.0..=1.0).contains(*b)) {
            return Err(Error::BiasTable(format!("bias {b} outside [-1, 1]")));
        }
        for w in Emotion::ALL.windows(2) {
            if !(self.bias(w[0]) < self.bias(w[1])) {
                return Err(Error::BiasTable(format!("`{}` must have a lower bias than `{}`", w[0], w[1])));
            }
        }
        Ok(())
    }

    pub fn bias(&self, e: Emotion) -> f64 {
        self.biases[e.index()]
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        Emotion::ALL.iter().map(|e| (e.to_string(), self.bias(*e))).collect()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let map: BTreeMap<String, f64> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_map(&map)
    }
}

/// Log-scale position of `rms_p95` between the anchors, clipped to [0, 1].
pub fn compute_arousal(rms_p95: f64, anchors: &AnchorSet) -> f64 {
    let x = rms_p95.max(FEATURE_EPS).ln();
    let lo = anchors.a_low.ln();
    let hi = anchors.a_high.ln();
    ((x - lo) / (hi - lo)).clamp(0.0, 1.0)
}

/// Weighted sum of normalized centroid, log RMS and ZCR (pre-clip, in [-1.05, 1.05]).
pub fn acoustic_score(f: &AcousticFeatures, anchors: &AnchorSet) -> f64 {
    let c = norm_feature(f.centroid, anchors.centroid.q10, anchors.centroid.q90);
    let r = norm_feature(f.log_rms, anchors.log_rms.q10, anchors.log_rms.q90);
    let z = norm_feature(f.zcr, anchors.zcr.q10, anchors.zcr.q90);
    score_from_normalized(c, r, z)
}

pub fn score_from_normalized(c_norm: f64, r_norm: f64, z_norm: f64) -> f64 {
    CENTROID_WEIGHT * c_norm + LOG_RMS_WEIGHT * r_norm + ZCR_WEIGHT * z_norm
}

pub fn compute_valence(s_acoustic: f64, e: Emotion, table: &EmotionBiasTable) -> f64 {
    (s_acoustic + table.bias(e)).clamp(-1.0, 1.0)
}

pub fn label_from_features(f: &AcousticFeatures, e: Emotion, anchors: &AnchorSet, table: &EmotionBiasTable) -> VALabel {
    VALabel {
        arousal: compute_arousal(f.rms_p95, anchors),
        valence: compute_valence(acoustic_score(f, anchors), e, table),
    }
}

/// Standardizes the clip, extracts its features and labels it.
pub fn generate_va_label(
    w: &Waveform,
    e: Emotion,
    anchors: &AnchorSet,
    table: &EmotionBiasTable,
    cfg: &SpectrogramConfig,
) -> Result<VALabel> {
    let w = standardize_duration(w, cfg.target_duration, cfg.sample_rate)?;
    let f = extract_features(&w, cfg)?;
    Ok(label_from_features(&f, e, anchors, table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{QuantilePair, ANCHORS_VERSION};
    use proptest::prelude::*;

    fn anchors() -> AnchorSet {
        AnchorSet {
            a_low: 0.01,
            a_high: 0.4,
            centroid: QuantilePair { q10: 300.0, q90: 3000.0 },
            zcr: QuantilePair { q10: 0.01, q90: 0.2 },
            log_rms: QuantilePair { q10: -6.0, q90: -2.0 },
            version: ANCHORS_VERSION,
        }
    }

    #[test]
    fn arousal_anchor_points() {
        let a = anchors();
        assert_eq!(compute_arousal(a.a_low, &a), 0.0);
        assert_eq!(compute_arousal(a.a_high, &a), 1.0);
        assert!((compute_arousal((a.a_low * a.a_high).sqrt(), &a) - 0.5).abs() < 1e-12);
        assert_eq!(compute_arousal(0.0, &a), 0.0);
        assert_eq!(compute_arousal(0.9, &a), 1.0);
    }

    #[test]
    fn score_extremes() {
        assert_eq!(score_from_normalized(0.0, 0.0, 0.0), 0.0);
        assert!((score_from_normalized(1.0, -1.0, 1.0) - 1.05).abs() < 1e-12);
        assert!((score_from_normalized(-1.0, 1.0, -1.0) + 1.05).abs() < 1e-12);
    }

    #[test]
    fn valence_uses_table_biases() {
        let t = EmotionBiasTable::default();
        assert_eq!(compute_valence(0.0, Emotion::Excited, &t), 0.14);
        assert_eq!(compute_valence(0.0, Emotion::Fearful, &t), -0.18);
        assert_eq!(compute_valence(0.95, Emotion::Excited, &t), 1.0);
        assert_eq!(compute_valence(-0.95, Emotion::Fearful, &t), -1.0);
    }

    #[test]
    fn bias_table_validation() {
        let mut map = EmotionBiasTable::default().to_map();
        assert_eq!(EmotionBiasTable::from_map(&map).unwrap(), EmotionBiasTable::default());
        map.insert("content".into(), 0.2);
        assert!(EmotionBiasTable::from_map(&map).is_err());
        map.insert("content".into(), 0.12);
        map.remove("alert");
        assert!(EmotionBiasTable::from_map(&map).is_err());
        map.insert("alert".into(), -0.02);
        map.insert("happy".into(), 0.3);
        assert!(EmotionBiasTable::from_map(&map).is_err());
    }

    #[test]
    fn silence_labels_with_zero_arousal() {
        let cfg = SpectrogramConfig::default();
        let w = Waveform::new(vec![0.0; 1000], 44100).unwrap();
        let t = EmotionBiasTable::default();
        let a = anchors();
        let l = generate_va_label(&w, Emotion::Content, &a, &t, &cfg).unwrap();
        assert_eq!(l.arousal, 0.0);
        // silence: centroid 0 -> -1, log_rms floor -> -1, zcr 0 -> -1
        let s = score_from_normalized(-1.0, -1.0, -1.0);
        assert!((l.valence - (s + 0.12)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn arousal_monotone_in_rms(x in 0.0f64..1.0, y in 0.0f64..1.0) {
            let a = anchors();
            let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
            prop_assert!(compute_arousal(lo, &a) <= compute_arousal(hi, &a));
        }

        #[test]
        fn labels_in_range_and_respect_bias_order(
            rms in 0.0f64..1.0, c in 0.0f64..20000.0, z in 0.0f64..1.0, r in -25.0f64..0.0,
        ) {
            let a = anchors();
            let t = EmotionBiasTable::default();
            let f = AcousticFeatures { rms_p95: rms, centroid: c, zcr: z, log_rms: r };
            let labels: Vec<VALabel> = Emotion::ALL.iter().map(|&e| label_from_features(&f, e, &a, &t)).collect();
            for l in &labels {
                prop_assert!((-1.0..=1.0).contains(&l.valence));
                prop_assert!((0.0..=1.0).contains(&l.arousal));
            }
            for w in labels.windows(2) {
                prop_assert!(w[0].valence <= w[1].valence);
            }
        }
    }
}
