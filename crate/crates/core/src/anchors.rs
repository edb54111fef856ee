//! Corpus-level quantile anchors used to normalize features before labelling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{percentile, AcousticFeatures, FEATURE_EPS};

pub const ANCHORS_VERSION: u32 = 1;

/// Minimum number of clips needed to fit anchors.
pub const MIN_ANCHOR_SAMPLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantilePair {
    pub q10: f64,
    pub q90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSet {
    /// 5th percentile of clip rms_p95, floored at eps.
    pub a_low: f64,
    /// 95th percentile of clip rms_p95.
    pub a_high: f64,
    pub centroid: QuantilePair,
    pub zcr: QuantilePair,
    pub log_rms: QuantilePair,
    pub version: u32,
}

impl AnchorSet {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_low > 0.0 && self.a_low < self.a_high && self.a_high.is_finite()) {
            return Err(Error::AnchorFit(format!(
                "need 0 < a_low < a_high (a_low={}, a_high={})",
                self.a_low, self.a_high
            )));
        }
        for (name, q) in [("centroid", &self.centroid), ("zcr", &self.zcr), ("log_rms", &self.log_rms)] {
            if !(q.q10 < q.q90 && q.q10.is_finite() && q.q90.is_finite()) {
                return Err(Error::AnchorFit(format!("feature `{name}` has q10 >= q90 ({} vs {})", q.q10, q.q90)));
            }
        }
        if self.version != ANCHORS_VERSION {
            return Err(Error::AnchorFit(format!("unsupported anchors version {}", self.version)));
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::write_atomic(path.as_ref(), &crate::fsutil::to_json_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::AnchorFit(format!("cannot read {}: {e}", path.display())))?;
        let anchors: AnchorSet = serde_json::from_str(&text)?;
        anchors.validate()?;
        Ok(anchors)
    }
}

fn quantile_pair(name: &str, values: &[f64]) -> Result<QuantilePair> {
    let pair = QuantilePair { q10: percentile(values, 10.0)?, q90: percentile(values, 90.0)? };
    if pair.q10 < pair.q90 {
        Ok(pair)
    } else {
        Err(Error::AnchorFit(format!("feature `{name}` is degenerate (q10 = q90 = {})", pair.q10)))
    }
}

pub fn fit_anchors(features: &[AcousticFeatures]) -> Result<AnchorSet> {
    if features.len() < MIN_ANCHOR_SAMPLES {
        return Err(Error::AnchorFit(format!(
            "need at least {MIN_ANCHOR_SAMPLES} samples, got {}",
            features.len()
        )));
    }
    let column = |f: fn(&AcousticFeatures) -> f64| features.iter().map(f).collect::<Vec<_>>();
    let rms = column(|f| f.rms_p95);
    let a_low = percentile(&rms, 5.0)?.max(FEATURE_EPS);
    let a_high = percentile(&rms, 95.0)?;
    if !(a_low < a_high) {
        return Err(Error::AnchorFit(format!("feature `rms_p95` is degenerate (a_low = {a_low}, a_high = {a_high})")));
    }
    Ok(AnchorSet {
        a_low,
        a_high,
        centroid: quantile_pair("centroid", &column(|f| f.centroid))?,
        zcr: quantile_pair("zcr", &column(|f| f.zcr))?,
        log_rms: quantile_pair("log_rms", &column(|f| f.log_rms))?,
        version: ANCHORS_VERSION,
    })
}

/// Affine map of `[q10, q90]` onto `[-1, 1]`, hard-clipped outside.
pub fn norm_feature(x: f64, q10: f64, q90: f64) -> f64 {
    (2.0 * (x - q10) / (q90 - q10) - 1.0).clamp(-1.0, 1.0)
}
