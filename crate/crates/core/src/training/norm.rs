use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// One mean/std over every cell.
    #[default]
    Global,
    /// Separate mean/std per mel bin.
    PerBin,
}

/// Z-score statistics of training-split spectrogram cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub mode: NormMode,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Accumulates statistics over `specs` (each `[n_mels, n_frames]`).
    pub fn fit<'a>(specs: impl IntoIterator<Item = &'a Array2<f32>>, mode: NormMode) -> Result<Self> {
        let mut n_mels = None;
        let (mut sum, mut sum_sq, mut counts) = (Vec::new(), Vec::new(), Vec::new());
        for spec in specs {
            let rows = spec.nrows();
            if *n_mels.get_or_insert(rows) != rows {
                return Err(Error::Shape("spectrograms disagree on mel-bin count".into()));
            }
            let groups = match mode {
                NormMode::Global => 1,
                NormMode::PerBin => rows,
            };
            if sum.is_empty() {
                sum = vec![0.0f64; groups];
                sum_sq = vec![0.0f64; groups];
                counts = vec![0usize; groups];
            }
            for (m, row) in spec.rows().into_iter().enumerate() {
                let g = if groups == 1 { 0 } else { m };
                for &v in row {
                    let v = v as f64;
                    sum[g] += v;
                    sum_sq[g] += v * v;
                }
                counts[g] += row.len();
            }
        }
        if sum.is_empty() {
            return Err(Error::Argument("cannot fit normalization on zero spectrograms".into()));
        }
        let mut mean = Vec::with_capacity(sum.len());
        let mut std = Vec::with_capacity(sum.len());
        for ((s, sq), &n) in sum.iter().zip(&sum_sq).zip(&counts) {
            let m = s / n as f64;
            let var = (sq / n as f64 - m * m).max(0.0);
            if !(var.sqrt() > 0.0) {
                return Err(Error::Degenerate("spectrogram cells have zero variance".into()));
            }
            mean.push(m);
            std.push(var.sqrt());
        }
        Ok(Self { mode, mean, std })
    }

    pub fn apply(&self, spec: &mut Array2<f32>) {
        for (m, mut row) in spec.rows_mut().into_iter().enumerate() {
            let g = if self.mean.len() == 1 { 0 } else { m };
            let (mu, sd) = (self.mean[g], self.std[g]);
            row.mapv_inplace(|v| ((v as f64 - mu) / sd) as f32);
        }
    }

    pub fn validate(&self, n_mels: usize) -> Result<()> {
        let expected = match self.mode {
            NormMode::Global => 1,
            NormMode::PerBin => n_mels,
        };
        if self.mean.len() != expected || self.std.len() != expected {
            return Err(Error::Config(format!("normalization stats need {expected} entries")));
        }
        if self.std.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("normalization std must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn applied_stats_standardize_training_cells() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let specs: Vec<Array2<f32>> = (0..5)
            .map(|_| Array2::from_shape_simple_fn((16, 30), || rng.gen_range(-20.0f32..4.0)))
            .collect();
        for mode in [NormMode::Global, NormMode::PerBin] {
            let stats = NormStats::fit(&specs, mode).unwrap();
            let mut all = Vec::new();
            for s in &specs {
                let mut s = s.clone();
                stats.apply(&mut s);
                all.extend(s.iter().map(|&v| v as f64));
            }
            let n = all.len() as f64;
            let mean = all.iter().sum::<f64>() / n;
            let sd = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-3 && (sd - 1.0).abs() < 1e-3, "{mode:?}: {mean} {sd}");
        }
    }

    #[test]
    fn constant_cells_are_rejected() {
        let specs = vec![Array2::from_elem((4, 4), -3.0f32)];
        assert!(NormStats::fit(&specs, NormMode::Global).is_err());
    }
}
