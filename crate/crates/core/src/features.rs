//! Scalar acoustic descriptors consumed by the label generator.

use serde::{Deserialize, Serialize};

use crate::audio::{frame_count, SpectrogramConfig, Stft, Waveform};
use crate::audio::stft::centered_frame;
use crate::error::{Error, Result};

/// Floor used inside logarithms so silence stays finite.
pub const FEATURE_EPS: f64 = 1e-10;

/// Frames whose spectral magnitude sum is below this are skipped by the centroid.
const SILENT_FRAME: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    /// 95th percentile of per-frame RMS.
    pub rms_p95: f64,
    /// Hz, averaged over non-silent frames.
    pub centroid: f64,
    /// Sign changes per consecutive sample pair.
    pub zcr: f64,
    /// ln(mean frame RMS + eps).
    pub log_rms: f64,
}

/// Per-frame RMS over centered, reflect-padded frames.
pub fn frame_rms(w: &Waveform, frame_len: usize, hop: usize) -> Vec<f64> {
    assert!(frame_len > 0 && hop > 0, "frame_len and hop must be positive");
    let mut frame = vec![0.0; frame_len];
    (0..frame_count(w.len(), hop))
        .map(|k| {
            centered_frame(w.samples(), k, frame_len, hop, &mut frame);
            (frame.iter().map(|x| x * x).sum::<f64>() / frame_len as f64).sqrt()
        })
        .collect()
}

/// Percentile `q` in [0, 100] by linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("percentile of an empty sequence".into()));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::Argument(format!("percentile {q} outside [0, 100]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn rms_p95(frames: &[f64]) -> Result<f64> {
    percentile(frames, 95.0)
}

pub fn log_rms(frames: &[f64]) -> Result<f64> {
    if frames.is_empty() {
        return Err(Error::Argument("log_rms of an empty sequence".into()));
    }
    let mean = frames.iter().sum::<f64>() / frames.len() as f64;
    Ok((mean + FEATURE_EPS).ln())
}

/// Magnitude-weighted mean frequency, averaged over non-silent frames.
/// Returns 0 when every frame is silent.
pub fn spectral_centroid(w: &Waveform, cfg: &SpectrogramConfig) -> f64 {
    let stft = Stft::new(cfg.n_fft, cfg.hop);
    centroid_with(&stft, w)
}

fn centroid_with(stft: &Stft, w: &Waveform) -> f64 {
    let freqs = stft.bin_frequencies(w.sample_rate());
    let (mut total, mut counted) = (0.0, 0usize);
    stft.for_each_power_frame(w.samples(), |_, power| {
        let (mut num, mut den) = (0.0, 0.0);
        for (&p, &f) in power.iter().zip(&freqs) {
            let mag = p.sqrt();
            num += f * mag;
            den += mag;
        }
        if den >= SILENT_FRAME {
            total += num / den;
            counted += 1;
        }
    });
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// Fraction of consecutive sample pairs whose sign differs. Zeros carry the
/// previous sign; leading zeros carry none.
pub fn zero_crossing_rate(w: &Waveform) -> f64 {
    let s = w.samples();
    if s.len() < 2 {
        return 0.0;
    }
    let mut prev: Option<bool> = None;
    let mut crossings = 0usize;
    for &x in s {
        let sign = if x > 0.0 {
            Some(true)
        } else if x < 0.0 {
            Some(false)
        } else {
            prev
        };
        if let (Some(a), Some(b)) = (prev, sign) {
            if a != b {
                crossings += 1;
            }
        }
        prev = sign;
    }
    crossings as f64 / (s.len() - 1) as f64
}

pub fn extract_features(w: &Waveform, cfg: &SpectrogramConfig) -> Result<AcousticFeatures> {
    let frames = frame_rms(w, cfg.n_fft, cfg.hop);
    let stft = Stft::new(cfg.n_fft, cfg.hop);
    Ok(AcousticFeatures {
        rms_p95: rms_p95(&frames)?,
        centroid: centroid_with(&stft, w),
        zcr: zero_crossing_rate(w),
        log_rms: log_rms(&frames)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn wave(samples: Vec<f32>) -> Waveform {
        Waveform::new(samples, 44100).unwrap()
    }

    fn sine(freq: f64, n: usize, amp: f64) -> Waveform {
        wave((0..n).map(|i| (amp * (2.0 * PI * freq * i as f64 / 44100.0).sin()) as f32).collect())
    }

    #[test]
    fn constant_signal_frame_rms() {
        let frames = frame_rms(&wave(vec![0.5; 10_000]), 2048, 512);
        assert!(frames.iter().all(|&r| (r - 0.5).abs() < 1e-12));
        assert!(frame_rms(&wave(vec![0.0; 10_000]), 2048, 512).iter().all(|&r| r == 0.0));
    }

    #[test]
    fn unit_sine_rms_is_one_over_root_two() {
        let frames = frame_rms(&sine(441.0, 44100, 1.0), 2048, 512);
        for &r in &frames[4..frames.len() - 4] {
            assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-2);
        }
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(rms_p95(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 1.0);
        let grid: Vec<f64> = (0..=100).map(f64::from).collect();
        assert!((rms_p95(&grid).unwrap() - 95.0).abs() < 1e-12);
        assert_eq!(rms_p95(&[0.3]).unwrap(), 0.3);
        assert!(rms_p95(&[]).is_err());
    }

    #[test]
    fn log_rms_examples() {
        assert!(log_rms(&[1.0; 5]).unwrap().abs() < 1e-9);
        assert!((log_rms(&[std::f64::consts::E; 3]).unwrap() - 1.0).abs() < 1e-9);
        assert!((log_rms(&[0.0; 3]).unwrap() + 23.025_850_929_940_457).abs() < 1e-9);
    }

    #[test]
    fn centroid_of_1khz_tone() {
        let c = spectral_centroid(&sine(1000.0, 132_300, 0.5), &SpectrogramConfig::default());
        assert!((950.0..=1050.0).contains(&c), "{c}");
    }

    #[test]
    fn centroid_of_white_noise_is_half_nyquist() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let w = wave((0..132_300).map(|_| rng.gen_range(-0.5f32..0.5)).collect());
        let c = spectral_centroid(&w, &SpectrogramConfig::default());
        let half = 22050.0 / 2.0;
        assert!((c - half).abs() < 0.1 * half, "{c}");
    }

    #[test]
    fn centroid_of_silence_is_zero() {
        assert_eq!(spectral_centroid(&wave(vec![0.0; 50_000]), &SpectrogramConfig::default()), 0.0);
    }

    #[test]
    fn zcr_examples() {
        assert_eq!(zero_crossing_rate(&wave(vec![0.3; 100])), 0.0);
        let alt: Vec<f32> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(zero_crossing_rate(&wave(alt)), 1.0);
        let z = zero_crossing_rate(&sine(100.0, 44100, 0.9));
        let expected = 200.0 / 44099.0;
        assert!((z - expected).abs() < 0.02 * expected, "{z}");
        // zeros inherit the previous sign
        assert_eq!(zero_crossing_rate(&wave(vec![1.0, 0.0, 0.0, 1.0])), 0.0);
        assert!((zero_crossing_rate(&wave(vec![1.0, 0.0, -1.0, 0.0])) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn silence_features() {
        let f = extract_features(&wave(vec![0.0; 132_300]), &SpectrogramConfig::default()).unwrap();
        assert_eq!(f.rms_p95, 0.0);
        assert_eq!(f.centroid, 0.0);
        assert_eq!(f.zcr, 0.0);
        assert!((f.log_rms - FEATURE_EPS.ln()).abs() < 1e-12);
    }

    #[test]
    fn gain_doubles_rms_and_keeps_shape_features() {
        let cfg = SpectrogramConfig::default();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let base = wave((0..132_300).map(|i| 0.2 * (i as f32 * 0.05).sin() + rng.gen_range(-0.05f32..0.05)).collect());
        let a = extract_features(&base, &cfg).unwrap();
        let b = extract_features(&base.scaled(2.0).unwrap(), &cfg).unwrap();
        assert!((b.rms_p95 - 2.0 * a.rms_p95).abs() < 1e-6 * a.rms_p95.max(1.0));
        assert!((b.centroid - a.centroid).abs() < 1e-6 * a.centroid);
        assert_eq!(a.zcr, b.zcr);
        assert!((b.log_rms - a.log_rms - 2f64.ln()).abs() < 1e-6);
        assert_eq!(a, extract_features(&base, &cfg).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn features_finite_and_p95_above_median(
            samples in proptest::collection::vec(-1.0f32..1.0, 600..4000),
            gain in 0.05f32..1.0,
        ) {
            let cfg = SpectrogramConfig { n_fft: 256, hop: 64, ..SpectrogramConfig::default() };
            let w = wave(samples.iter().map(|s| s * gain).collect());
            let f = extract_features(&w, &cfg).unwrap();
            prop_assert!(f.rms_p95.is_finite() && f.centroid.is_finite() && f.zcr.is_finite() && f.log_rms.is_finite());
            prop_assert!((0.0..=1.0).contains(&f.zcr));
            prop_assert!(f.centroid >= 0.0 && f.centroid <= 22050.0);
            let frames = frame_rms(&w, cfg.n_fft, cfg.hop);
            prop_assert!(f.rms_p95 >= percentile(&frames, 50.0).unwrap());
        }
    }
}
