//! JSONL corpus manifests and per-clip feature tables.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::AcousticFeatures;
use crate::fsutil::write_atomic;
use crate::taxonomy::{BodySize, Emotion, Gender};
use crate::valabel::VALabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Original,
    Enhanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRow {
    pub id: String,
    /// Relative paths are resolved against the manifest's directory.
    pub path: PathBuf,
    pub emotion: Emotion,
    pub breed: String,
    pub size: BodySize,
    pub gender: Gender,
    pub source: Source,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arousal: Option<f64>,
}

impl ManifestRow {
    pub fn label(&self) -> Option<VALabel> {
        Some(VALabel { valence: self.valence?, arousal: self.arousal? })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub rows: Vec<ManifestRow>,
    /// Directory relative row paths are resolved against.
    pub base_dir: PathBuf,
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| Error::Manifest(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn render_jsonl<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let m = Self { rows, base_dir: base_dir.into() };
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let rows = parse_jsonl(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(rows, base)
    }

    pub fn to_jsonl(&self) -> Result<Vec<u8>> {
        render_jsonl(&self.rows)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), &self.to_jsonl()?)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.rows {
            if r.id.is_empty() {
                return Err(Error::Manifest("empty id".into()));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::Manifest(format!("duplicate id `{}`", r.id)));
            }
            if r.valence.is_some() != r.arousal.is_some() {
                return Err(Error::Manifest(format!("row `{}` has only one of valence/arousal", r.id)));
            }
            if let Some(l) = r.label() {
                if !(-1.0..=1.0).contains(&l.valence) || !(0.0..=1.0).contains(&l.arousal) {
                    return Err(Error::Manifest(format!("row `{}` has an out-of-range label", r.id)));
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self, row: &ManifestRow) -> PathBuf {
        if row.path.is_absolute() { row.path.clone() } else { self.base_dir.join(&row.path) }
    }

    pub fn is_labeled(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.label().is_some())
    }

    pub fn emotions(&self) -> Vec<Emotion> {
        self.rows.iter().map(|r| r.emotion).collect()
    }

    /// Copy whose row paths are absolute, suitable for saving elsewhere.
    pub fn with_absolute_paths(&self) -> Result<Self> {
        let base = std::path::absolute(&self.base_dir)?;
        let rows = self.rows.iter().map(|r| ManifestRow { path: base.join(&r.path), ..r.clone() }).collect();
        Ok(Self { rows, base_dir: base })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    #[serde(flatten)]
    pub features: AcousticFeatures,
}

pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<FeatureRow>> {
    parse_jsonl(path.as_ref())
}

pub fn save_features(rows: &[FeatureRow], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &render_jsonl(rows)?)
}

/// Feature rows reordered to follow `manifest`; every manifest id must appear.
pub fn align_features(manifest: &Manifest, rows: Vec<FeatureRow>) -> Result<Vec<AcousticFeatures>> {
    let mut by_id: std::collections::HashMap<String, AcousticFeatures> = rows.into_iter().map(|r| (r.id, r.features)).collect();
    manifest
        .rows
        .iter()
        .map(|r| by_id.remove(&r.id).ok_or_else(|| Error::Manifest(format!("no features for id `{}`", r.id))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str) -> ManifestRow {
        ManifestRow {
            id: id.into(),
            path: PathBuf::from(format!("wav/{id}.wav")),
            emotion: Emotion::Alert,
            breed: "synthetic".into(),
            size: BodySize::Small,
            gender: Gender::Female,
            source: Source::Original,
            valence: None,
            arousal: None,
        }
    }

    #[test]
    fn round_trip_and_resolution() {
        let dir = tempfile::tempdir().unwrap();
        let mut labeled = row("b");
        labeled.valence = Some(-0.25);
        labeled.arousal = Some(0.75);
        let m = Manifest::new(vec![row("a"), labeled], dir.path()).unwrap();
        let p = dir.path().join("manifest.jsonl");
        m.save(&p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(!text.lines().next().unwrap().contains("valence"));
        let back = Manifest::load(&p).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.resolve(&back.rows[0]), dir.path().join("wav/a.wav"));
        assert!(!back.is_labeled());
    }

    #[test]
    fn rejects_duplicates_and_half_labels() {
        assert!(Manifest::new(vec![row("a"), row("a")], "").is_err());
        let mut r = row("a");
        r.valence = Some(0.1);
        assert!(Manifest::new(vec![r], "").is_err());
    }

    #[test]
    fn unknown_emotion_is_reported_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.jsonl");
        fs::write(&p, r#"{"id":"x","path":"x.wav","emotion":"happy","breed":"b","size":"large","gender":"male","source":"original"}"#).unwrap();
        let err = Manifest::load(&p).unwrap_err().to_string();
        assert!(err.contains("m.jsonl:1"), "{err}");
    }

    #[test]
    fn features_align_by_id() {
        let m = Manifest::new(vec![row("a"), row("b")], "").unwrap();
        let f = |x: f64| AcousticFeatures { rms_p95: x, centroid: 1.0, zcr: 0.1, log_rms: -1.0 };
        let rows = vec![FeatureRow { id: "b".into(), features: f(2.0) }, FeatureRow { id: "a".into(), features: f(1.0) }];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.jsonl");
        save_features(&rows, &p).unwrap();
        let aligned = align_features(&m, load_features(&p).unwrap()).unwrap();
        assert_eq!(aligned[0].rms_p95, 1.0);
        assert_eq!(aligned[1].rms_p95, 2.0);
    }
}
