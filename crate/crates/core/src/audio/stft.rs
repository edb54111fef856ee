use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Frames produced by centered framing of `n_samples` with hop `hop`.
pub fn frame_count(n_samples: usize, hop: usize) -> usize {
    1 + n_samples / hop
}

/// Maps a possibly out-of-range index onto `0..len` by mirror reflection
/// about the first and last samples (edge samples are not repeated).
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Copies the centered frame `k` of length `frame_len` into `out`, reflecting
/// across the signal edges.
pub(crate) fn centered_frame(samples: &[f32], k: usize, frame_len: usize, hop: usize, out: &mut [f64]) {
    let start = (k * hop) as isize - (frame_len / 2) as isize;
    let len = samples.len();
    for (t, o) in out.iter_mut().enumerate() {
        let i = start + t as isize;
        let idx = if i >= 0 && (i as usize) < len { i as usize } else { reflect_index(i, len) };
        *o = samples[idx] as f64;
    }
}

/// Short-time Fourier transform with a periodic Hann window and centered,
/// reflect-padded frames.
pub struct Stft {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Stft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stft").field("n_fft", &self.n_fft).field("hop", &self.hop).finish()
    }
}

impl Stft {
    pub fn new(n_fft: usize, hop: usize) -> Self {
        let window = (0..n_fft)
            .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self { n_fft, hop, window, fft }
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Centre frequency in Hz of every non-negative FFT bin.
    pub fn bin_frequencies(&self, sample_rate: u32) -> Vec<f64> {
        (0..self.n_bins()).map(|k| k as f64 * sample_rate as f64 / self.n_fft as f64).collect()
    }

    /// Calls `f(frame_index, power)` for each frame, where `power[k] = |X_k|^2`
    /// over the `n_fft / 2 + 1` non-negative bins.
    pub fn for_each_power_frame(&self, samples: &[f32], mut f: impl FnMut(usize, &[f64])) {
        let n_frames = frame_count(samples.len(), self.hop);
        let mut frame = vec![0.0f64; self.n_fft];
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut power = vec![0.0f64; self.n_bins()];
        for k in 0..n_frames {
            centered_frame(samples, k, self.n_fft, self.hop, &mut frame);
            for ((b, &x), &w) in buf.iter_mut().zip(&frame).zip(&self.window) {
                *b = Complex::new(x * w, 0.0);
            }
            self.fft.process_with_scratch(&mut buf, &mut scratch);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            f(k, &power);
        }
    }
}
