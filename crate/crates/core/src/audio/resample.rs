use super::Waveform;
use crate::error::Result;

/// Linear-interpolation resampling to `target_rate`.
///
/// Output length is `round(len * target_rate / source_rate)` (at least one
/// sample). No anti-alias filtering is applied.
pub fn resample_linear(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if w.sample_rate() == target_rate {
        return Ok(w.clone());
    }
    let ratio = w.sample_rate() as f64 / target_rate as f64;
    let out_len = ((w.len() as f64 / ratio).round() as usize).max(1);
    Waveform::new(stretch_by_ratio(w.samples(), ratio, out_len), target_rate)
}

/// Reads `src` at fractional positions `i * step` for `i in 0..out_len`,
/// interpolating linearly and holding the last sample past the end.
pub(crate) fn stretch_by_ratio(src: &[f32], step: f64, out_len: usize) -> Vec<f32> {
    let last = src.len() - 1;
    (0..out_len)
        .map(|i| {
            let pos = i as f64 * step;
            let i0 = pos.floor() as usize;
            if i0 >= last {
                return src[last];
            }
            let frac = (pos - i0 as f64) as f32;
            src[i0] + (src[i0 + 1] - src[i0]) * frac
        })
        .collect()
}
