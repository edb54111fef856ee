//! Corpus-level stages shared by the command-line tool and tests.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::{fit_anchors, AnchorSet};
use crate::audio::{load_wav, standardize_duration, SpectrogramConfig};
use crate::error::{Error, Result};
use crate::features::{extract_features, AcousticFeatures};
use crate::manifest::{FeatureRow, Manifest, ManifestRow, Source};
use crate::training::{thread_pool, SplitIndices};
use crate::valabel::{label_from_features, EmotionBiasTable};

/// Acoustic features of every manifest row, in manifest order.
pub fn compute_features(manifest: &Manifest, cfg: &SpectrogramConfig, jobs: usize) -> Result<Vec<FeatureRow>> {
    cfg.validate()?;
    thread_pool(jobs)?.install(|| {
        manifest
            .rows
            .par_iter()
            .map(|row| {
                let w = load_wav(manifest.resolve(row))?;
                let w = standardize_duration(&w, cfg.target_duration, cfg.sample_rate)?;
                Ok(FeatureRow { id: row.id.clone(), features: extract_features(&w, cfg)? })
            })
            .collect()
    })
}

/// Which rows the anchor statistics are fit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorScope {
    #[default]
    All,
    Train,
}

impl std::str::FromStr for AnchorScope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(AnchorScope::All),
            "train" => Ok(AnchorScope::Train),
            other => Err(Error::Argument(format!("unknown anchor scope `{other}` (expected all or train)"))),
        }
    }
}

/// Fits anchors over the rows selected by `scope` (and, optionally, only
/// original recordings). `features` must follow manifest order.
pub fn fit_corpus_anchors(
    manifest: &Manifest,
    features: &[AcousticFeatures],
    scope: AnchorScope,
    split: Option<&SplitIndices>,
    exclude_enhanced: bool,
) -> Result<AnchorSet> {
    if features.len() != manifest.rows.len() {
        return Err(Error::Argument(format!("{} feature rows for {} manifest rows", features.len(), manifest.rows.len())));
    }
    let indices: Vec<usize> = match scope {
        AnchorScope::All => (0..manifest.rows.len()).collect(),
        AnchorScope::Train => split
            .ok_or_else(|| Error::Argument("anchor scope `train` needs a split".into()))?
            .train
            .clone(),
    };
    let chosen: Vec<AcousticFeatures> = indices
        .into_iter()
        .filter(|&i| !(exclude_enhanced && manifest.rows[i].source == Source::Enhanced))
        .map(|i| {
            features.get(i).cloned().ok_or_else(|| Error::Split(format!("split index {i} out of range")))
        })
        .collect::<Result<_>>()?;
    fit_anchors(&chosen)
}

/// Copy of `manifest` with valence/arousal filled in for every row.
pub fn label_manifest(
    manifest: &Manifest,
    features: &[AcousticFeatures],
    anchors: &AnchorSet,
    table: &EmotionBiasTable,
) -> Result<Manifest> {
    anchors.validate()?;
    if features.len() != manifest.rows.len() {
        return Err(Error::Argument(format!("{} feature rows for {} manifest rows", features.len(), manifest.rows.len())));
    }
    let rows = manifest
        .rows
        .iter()
        .zip(features)
        .map(|(r, f)| {
            let l = label_from_features(f, r.emotion, anchors, table);
            ManifestRow { valence: Some(l.valence), arousal: Some(l.arousal), ..r.clone() }
        })
        .collect();
    Manifest::new(rows, manifest.base_dir.clone())
}

/// Split file contents: row ids per partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFile {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitFile {
    pub fn from_indices(manifest: &Manifest, split: &SplitIndices, seed: u64) -> Self {
        let ids = |v: &[usize]| v.iter().map(|&i| manifest.rows[i].id.clone()).collect();
        Self { seed, train: ids(&split.train), val: ids(&split.val), test: ids(&split.test) }
    }

    /// Resolves ids against `manifest`; every id must exist and appear once.
    pub fn to_indices(&self, manifest: &Manifest) -> Result<SplitIndices> {
        let pos: std::collections::HashMap<&str, usize> =
            manifest.rows.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
        let mut seen = std::collections::HashSet::new();
        let mut resolve = |ids: &[String]| -> Result<Vec<usize>> {
            let mut out: Vec<usize> = ids
                .iter()
                .map(|id| {
                    let i = *pos.get(id.as_str()).ok_or_else(|| Error::Split(format!("split id `{id}` not in manifest")))?;
                    if !seen.insert(i) {
                        return Err(Error::Split(format!("id `{id}` appears in more than one partition")));
                    }
                    Ok(i)
                })
                .collect::<Result<_>>()?;
            out.sort_unstable();
            Ok(out)
        };
        Ok(SplitIndices { train: resolve(&self.train)?, val: resolve(&self.val)?, test: resolve(&self.test)? })
    }
}
