//! Audio ingestion: WAV decoding, duration standardization and the log-mel
//! front end that produces the model input.

mod resample;
mod spectrogram;
pub(crate) mod stft;
mod wav;

pub use resample::resample_linear;
pub(crate) use resample::stretch_by_ratio;
pub use spectrogram::{hz_to_mel, mel_filter_centers, mel_spectrogram, mel_to_hz, MelFrontEnd, MelSpectrogram, SpectrogramConfig, LOG_EPS};
pub use stft::{frame_count, reflect_index, Stft};
pub use wav::{load_wav, write_wav_pcm16};

use crate::error::{Error, Result};

/// Decoded mono audio.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f32>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidWaveform("sample rate must be positive".into()));
        }
        if samples.is_empty() {
            return Err(Error::InvalidWaveform("no samples".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidWaveform(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn into_samples(self) -> Vec<f32> {
        self.samples
    }

    /// Multiplies every sample by `gain` without clamping.
    pub fn scaled(&self, gain: f32) -> Result<Self> {
        Waveform::new(self.samples.iter().map(|s| s * gain).collect(), self.sample_rate)
    }
}

/// Number of samples a clip of `duration` seconds occupies at `sample_rate`.
pub fn target_len(duration: f64, sample_rate: u32) -> usize {
    (duration * sample_rate as f64).round() as usize
}

/// Brings a clip to exactly `target_duration` seconds at `sample_rate`.
///
/// Clips at another rate are linearly resampled first. Short clips are
/// zero-padded at the end; long clips are center-cropped, keeping the window
/// that starts at `floor((len - target) / 2)`.
pub fn standardize_duration(w: &Waveform, target_duration: f64, sample_rate: u32) -> Result<Waveform> {
    if !(target_duration > 0.0) || !target_duration.is_finite() {
        return Err(Error::Argument(format!("target duration must be positive, got {target_duration}")));
    }
    if sample_rate == 0 {
        return Err(Error::Argument("sample rate must be positive".into()));
    }
    let resampled;
    let src = if w.sample_rate() != sample_rate {
        resampled = resample_linear(w, sample_rate)?;
        &resampled
    } else {
        w
    };
    let target = target_len(target_duration, sample_rate);
    if target == 0 {
        return Err(Error::Argument("target duration rounds to zero samples".into()));
    }
    let samples = src.samples();
    let out = match samples.len().cmp(&target) {
        std::cmp::Ordering::Equal => samples.to_vec(),
        std::cmp::Ordering::Less => {
            let mut v = samples.to_vec();
            v.resize(target, 0.0);
            v
        }
        std::cmp::Ordering::Greater => {
            let start = (samples.len() - target) / 2;
            samples[start..start + target].to_vec()
        }
    };
    Waveform::new(out, sample_rate)
}
