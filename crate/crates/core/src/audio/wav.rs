use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::Waveform;
use crate::error::{Error, Result};

/// Decodes a PCM16 or IEEE-float32 RIFF WAV with one or two channels.
///
/// Stereo input is downmixed by averaging the channels. PCM samples are
/// scaled by 1/32768; float samples are clamped to [-1, 1].
pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let decode_err = |e: hound::Error| match e {
        hound::Error::Unsupported => Error::UnsupportedFormat {
            path: path.to_owned(),
            reason: "encoding not supported".into(),
        },
        other => Error::Decode { path: path.to_owned(), reason: other.to_string() },
    };
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let reader = WavReader::new(file).map_err(decode_err)?;
    let spec = reader.spec();
    let unsupported = |reason: String| Error::UnsupportedFormat { path: path.to_owned(), reason };
    if spec.channels == 0 || spec.channels > 2 {
        return Err(unsupported(format!("{} channels (expected 1 or 2)", spec.channels)));
    }
    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(decode_err)?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { v }))
            .collect::<std::result::Result<_, _>>()
            .map_err(decode_err)?,
        (fmt, bits) => return Err(unsupported(format!("{bits}-bit {fmt:?} samples"))),
    };
    let samples = if spec.channels == 2 {
        interleaved.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
    } else {
        interleaved
    };
    Waveform::new(samples, spec.sample_rate).map_err(|e| Error::Decode {
        path: path.to_owned(),
        reason: e.to_string(),
    })
}

/// Writes a mono PCM16 WAV. Samples are clamped to [-1, 1] and rounded.
pub fn write_wav_pcm16(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let to_io = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(other.to_string())),
    };
    let mut writer = WavWriter::create(path, spec).map_err(to_io)?;
    for &s in w.samples() {
        writer.write_sample(quantize_pcm16(s)).map_err(to_io)?;
    }
    writer.finalize().map_err(to_io)
}

pub(crate) fn quantize_pcm16(s: f32) -> i16 {
    (s.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pcm16_write_then_load_is_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ramp.wav");
        let samples: Vec<f32> = (0..1000).map(|i| (i as f32 / 500.0) - 1.0).collect();
        let w = Waveform::new(samples.clone(), 16000).unwrap();
        write_wav_pcm16(&path, &w).unwrap();
        let back = load_wav(&path).unwrap();
        assert_eq!(back.sample_rate(), 16000);
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 1.0 / 16384.0);
        }
    }

    #[test]
    fn garbage_file_is_a_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.wav");
        std::fs::write(&path, b"RIFF\x10\x00\x00\x00WAVEjunkjunk").unwrap();
        let r = load_wav(&path);
        assert!(matches!(r, Err(Error::Decode { .. })), "{r:?}");
    }

    #[test]
    fn pcm24_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p24.wav");
        let spec = WavSpec { channels: 1, sample_rate: 8000, bits_per_sample: 24, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..10 {
            w.write_sample(0i32).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(load_wav(&path), Err(Error::UnsupportedFormat { .. })));
    }
}
