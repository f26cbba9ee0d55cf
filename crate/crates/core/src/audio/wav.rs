//! RIFF/WAVE reading and writing.
//!
//! Input: PCM 16-bit or IEEE float 32-bit, mono or multichannel (channels are
//! averaged to mono). Output: always 16-bit PCM mono, samples scaled by 32768
//! and clamped so +1.0 stores as 32767 and -32768 reads back as exactly -1.0.

use std::path::Path;

use crate::audio::AudioClip;
use crate::error::{Error, Result};

pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    if spec.channels == 0 {
        return Err(Error::Format(format!("{}: zero channels", path.display())));
    }
    let channels = spec.channels as usize;

    let interleaved: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f32 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedCodec(format!(
                "{}: {bits}-bit {} samples (expected 16-bit PCM or 32-bit float)",
                path.display(),
                match fmt {
                    hound::SampleFormat::Int => "integer",
                    hound::SampleFormat::Float => "float",
                }
            )))
        }
    };

    if interleaved.is_empty() {
        return Err(Error::Format(format!(
            "{}: no audio samples",
            path.display()
        )));
    }

    let samples = if channels == 1 {
        interleaved
    } else {
        interleaved
            .chunks(channels)
            .map(|frame| frame.iter().sum::<f32>() / channels as f32)
            .collect()
    };

    AudioClip::new(samples, spec.sample_rate)
}

pub fn save_wav(clip: &AudioClip, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &clip.samples {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))?;
    Ok(())
}

/// Scale by 32768 and clamp; keeps the round-trip error within one
/// quantization step (1/32768) per sample.
fn quantize_i16(sample: f32) -> i16 {
    let scaled = (sample as f64 * 32768.0).round();
    scaled.clamp(-32768.0, 32767.0) as i16
}

fn map_hound(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        hound::Error::FormatError(msg) => Error::Format(format!("{}: {msg}", path.display())),
        hound::Error::Unsupported => {
            Error::UnsupportedCodec(format!("{}: unsupported WAVE encoding", path.display()))
        }
        other => Error::Format(format!("{}: {other}", path.display())),
    }
}
