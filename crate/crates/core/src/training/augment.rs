//! Train-time waveform augmentation: tempo change without pitch change
//! (WSOLA overlap-add) and pitch shift by resampling plus re-stretching.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::audio::{standardize_duration, stretch_by_ratio, Waveform};
use crate::error::{Error, Result};

const GRAIN: usize = 1024;
const SYN_HOP: usize = GRAIN / 2;
const SEARCH: usize = 256;
const OVERLAP: usize = GRAIN - SYN_HOP;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_stretch: f64,
    pub p_pitch: f64,
    pub stretch_min: f64,
    pub stretch_max: f64,
    pub max_semitones: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { p_stretch: 0.5, p_pitch: 0.5, stretch_min: 0.9, stretch_max: 1.1, max_semitones: 2.0 }
    }
}

impl AugmentConfig {
    /// Never alters a clip.
    pub fn disabled() -> Self {
        Self { p_stretch: 0.0, p_pitch: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let prob_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !prob_ok(self.p_stretch) || !prob_ok(self.p_pitch) {
            return Err(Error::Config("augmentation probabilities must lie in [0, 1]".into()));
        }
        if !(self.stretch_min > 0.0 && self.stretch_min <= self.stretch_max && self.stretch_max.is_finite()) {
            return Err(Error::Config("stretch range must satisfy 0 < min <= max".into()));
        }
        if !(self.max_semitones >= 0.0 && self.max_semitones.is_finite()) {
            return Err(Error::Config("max_semitones must be finite and non-negative".into()));
        }
        Ok(())
    }
}

fn hann(n: usize) -> Vec<f32> {
    (0..n).map(|i| (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()) as f32).collect()
}

/// Eight independent accumulators so the loop vectorizes.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0f32; 8];
    for (ca, cb) in a.chunks_exact(8).zip(b.chunks_exact(8)) {
        for i in 0..8 {
            acc[i] += ca[i] * cb[i];
        }
    }
    acc.iter().sum()
}

/// Changes tempo by `factor` (> 1 is faster) while keeping pitch.
///
/// Output length is `round(len / factor)`. Each synthesis grain is taken from
/// near its nominal input position, shifted by up to `SEARCH` samples to best
/// continue the previous grain, which avoids phase cancellation on tonal input.
pub fn time_stretch(w: &Waveform, factor: f64) -> Result<Waveform> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Argument(format!("stretch factor must be positive, got {factor}")));
    }
    let src = w.samples();
    let out_len = ((src.len() as f64 / factor).round() as usize).max(1);
    let n_frames = out_len / SYN_HOP + 1;
    let ana_hop = SYN_HOP as f64 * factor;
    // zero padding so every candidate window is in bounds
    let pad = SEARCH + GRAIN;
    let last_nominal = ((n_frames - 1) as f64 * ana_hop).round() as usize;
    let mut x = vec![0f32; pad + src.len().max(last_nominal + SYN_HOP) + pad + GRAIN];
    x[pad..pad + src.len()].copy_from_slice(src);

    let win = hann(GRAIN);
    let mut out = vec![0f32; out_len + GRAIN];
    let mut norm = vec![0f32; out_len + GRAIN];
    let mut prev = pad;
    for k in 0..n_frames {
        let nominal = pad + (k as f64 * ana_hop).round() as usize;
        let start = if k == 0 {
            nominal
        } else {
            // align the overlapping half with the natural continuation of the previous grain
            let natural = &x[prev + SYN_HOP..prev + SYN_HOP + OVERLAP];
            let mut best = (f32::NEG_INFINITY, nominal);
            for cand in nominal - SEARCH..=nominal + SEARCH {
                let c = dot(&x[cand..cand + OVERLAP], natural);
                if c > best.0 {
                    best = (c, cand);
                }
            }
            best.1
        };
        let o = k * SYN_HOP;
        for (n, (y, g)) in out[o..o + GRAIN].iter_mut().zip(&mut norm[o..o + GRAIN]).enumerate() {
            *y += win[n] * x[start + n];
            *g += win[n];
        }
        prev = start;
    }
    out.truncate(out_len);
    for (y, &g) in out.iter_mut().zip(&norm) {
        if g > 1e-3 {
            *y /= g;
        }
    }
    Waveform::new(out, w.sample_rate())
}

/// Shifts pitch by `semitones` and keeps the original length.
pub fn pitch_shift(w: &Waveform, semitones: f64) -> Result<Waveform> {
    if !semitones.is_finite() {
        return Err(Error::Argument("semitones must be finite".into()));
    }
    let ratio = 2f64.powf(semitones / 12.0);
    let len = w.len();
    let resampled_len = ((len as f64 / ratio).round() as usize).max(1);
    let resampled = Waveform::new(stretch_by_ratio(w.samples(), ratio, resampled_len), w.sample_rate())?;
    let mut samples = time_stretch(&resampled, 1.0 / ratio)?.into_samples();
    samples.resize(len, 0.0);
    Waveform::new(samples, w.sample_rate())
}

/// Applies each transform independently and returns a clip of exactly
/// `target_duration` seconds. Four random draws are consumed on every call.
pub fn augment(w: &Waveform, cfg: &AugmentConfig, target_duration: f64, rng: &mut dyn RngCore) -> Result<Waveform> {
    let u_stretch: f64 = rng.gen();
    let factor = cfg.stretch_min + (cfg.stretch_max - cfg.stretch_min) * rng.gen::<f64>();
    let u_pitch: f64 = rng.gen();
    let semitones = cfg.max_semitones * (2.0 * rng.gen::<f64>() - 1.0);
    let mut cur = w.clone();
    if u_stretch < cfg.p_stretch {
        cur = time_stretch(&cur, factor)?;
    }
    if u_pitch < cfg.p_pitch {
        cur = pitch_shift(&cur, semitones)?;
    }
    standardize_duration(&cur, target_duration, w.sample_rate())
}
