use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stft::{frame_count, Stft};
use super::{target_len, Waveform};
use crate::error::{Error, Result};

/// Floor added to mel power before taking the natural log.
pub const LOG_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrogramConfig {
    pub n_mels: usize,
    pub hop: usize,
    pub n_fft: usize,
    /// Seconds.
    pub target_duration: f64,
    pub sample_rate: u32,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self { n_mels: 128, hop: 512, n_fft: 2048, target_duration: 3.0, sample_rate: 44100 }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 {
            return Err(Error::Config("n_mels must be positive".into()));
        }
        if self.hop == 0 || self.n_fft < self.hop {
            return Err(Error::Config(format!("need n_fft >= hop > 0 (n_fft={}, hop={})", self.n_fft, self.hop)));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be positive".into()));
        }
        if !(self.target_duration > 0.0) || !self.target_duration.is_finite() {
            return Err(Error::Config("target_duration must be positive".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        target_len(self.target_duration, self.sample_rate)
    }

    pub fn n_frames(&self) -> usize {
        frame_count(self.n_samples(), self.hop)
    }
}

/// Log-power mel spectrogram, `[n_mels x n_frames]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub values: Array2<f32>,
    pub config: SpectrogramConfig,
}

impl MelSpectrogram {
    pub fn n_mels(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_frames(&self) -> usize {
        self.values.ncols()
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// The `n_mels + 2` HTK mel-spaced edge frequencies between 0 Hz and Nyquist.
fn mel_edges(n_mels: usize, sample_rate: u32) -> Vec<f64> {
    let top = hz_to_mel(sample_rate as f64 / 2.0);
    (0..n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64)).collect()
}

/// Centre frequency (Hz) of each triangular mel filter.
pub fn mel_filter_centers(cfg: &SpectrogramConfig) -> Vec<f64> {
    mel_edges(cfg.n_mels, cfg.sample_rate)[1..=cfg.n_mels].to_vec()
}

/// Sparse triangular filter: weights for bins `start..start + weights.len()`.
#[derive(Debug, Clone)]
struct MelFilter {
    start: usize,
    weights: Vec<f64>,
}

/// Reusable STFT plan plus mel filterbank for one configuration.
#[derive(Debug)]
pub struct MelFrontEnd {
    config: SpectrogramConfig,
    stft: Stft,
    filters: Vec<MelFilter>,
}

impl MelFrontEnd {
    pub fn new(config: SpectrogramConfig) -> Result<Self> {
        config.validate()?;
        let stft = Stft::new(config.n_fft, config.hop);
        let freqs = stft.bin_frequencies(config.sample_rate);
        let edges = mel_edges(config.n_mels, config.sample_rate);
        let filters = (0..config.n_mels)
            .map(|m| {
                let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
                let full: Vec<f64> = freqs
                    .iter()
                    .map(|&f| {
                        let up = (f - lo) / (center - lo);
                        let down = (hi - f) / (hi - center);
                        up.min(down).max(0.0)
                    })
                    .collect();
                let start = full.iter().position(|&w| w > 0.0).unwrap_or(0);
                let end = full.iter().rposition(|&w| w > 0.0).map_or(start, |e| e + 1);
                MelFilter { start, weights: full[start..end].to_vec() }
            })
            .collect();
        Ok(Self { config, stft, filters })
    }

    pub fn config(&self) -> &SpectrogramConfig {
        &self.config
    }

    pub fn compute(&self, w: &Waveform) -> Result<MelSpectrogram> {
        let cfg = &self.config;
        if w.sample_rate() != cfg.sample_rate {
            return Err(Error::Config(format!(
                "waveform is {} Hz but spectrogram expects {} Hz",
                w.sample_rate(),
                cfg.sample_rate
            )));
        }
        if w.len() != cfg.n_samples() {
            return Err(Error::Config(format!(
                "waveform has {} samples; standardize to {} first",
                w.len(),
                cfg.n_samples()
            )));
        }
        let mut values = Array2::<f32>::zeros((cfg.n_mels, cfg.n_frames()));
        self.stft.for_each_power_frame(w.samples(), |k, power| {
            for (m, filt) in self.filters.iter().enumerate() {
                let p: f64 = filt.weights.iter().zip(&power[filt.start..]).map(|(w, p)| w * p).sum();
                values[[m, k]] = (p + LOG_EPS).ln() as f32;
            }
        });
        Ok(MelSpectrogram { values, config: cfg.clone() })
    }
}

/// Log-mel spectrogram of a standardized waveform.
pub fn mel_spectrogram(w: &Waveform, cfg: &SpectrogramConfig) -> Result<MelSpectrogram> {
    MelFrontEnd::new(cfg.clone())?.compute(w)
}
