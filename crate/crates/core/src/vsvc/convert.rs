//! Voice conversion backends.
//!
//! The builtin backend is fully deterministic: an optional
//! duration-preserving pitch offset followed by a cepstral
//! spectral-envelope frequency warp. The external backend shells out to any
//! converter honoring the `--in/--out/--timbre` protocol (for example a
//! wrapper around a neural conversion model).

use std::process::Command;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::{
    clip_guard, istft, load_wav, pitch_shift_factor, save_wav, stft, AudioClip, StftParams,
};
use crate::error::{Error, Result};
use crate::vsvc::TimbreTransform;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConversionBackend {
    Builtin,
    /// Command line invoked as `<cmd> --in <wav> --out <wav> --timbre <id>`;
    /// extra tokens after the program name are passed through.
    External {
        command: String,
    },
}

/// Convert `clip` toward the timbre described by `t`. Duration is preserved
/// exactly for the builtin backend and validated within 10% for external
/// converters.
pub fn convert_voice(clip: &AudioClip, t: &TimbreTransform) -> Result<AudioClip> {
    t.validate()?;
    match &t.backend {
        ConversionBackend::Builtin => builtin_convert(clip, t),
        ConversionBackend::External { command } => external_convert(clip, t, command),
    }
}

fn builtin_convert(clip: &AudioClip, t: &TimbreTransform) -> Result<AudioClip> {
    let params = StftParams::default();
    let target_len = clip.len();

    let working = if t.pitch_offset_semitones != 0 {
        let factor = 2.0f64.powf(t.pitch_offset_semitones as f64 / 12.0);
        pitch_shift_factor(clip, factor, &params)?
    } else {
        clip.clone()
    };

    let mut spec = stft(&working, &params)?;
    warp_envelope_frames(&mut spec.frames, spec.frame_size, t.warp_alpha);
    let resynth = istft(&spec)?;

    let mut samples = resynth.samples;
    samples.resize(target_len, 0.0);
    clip_guard(&mut samples);
    AudioClip::new(samples, clip.sample_rate)
}

/// Warp each frame's spectral envelope by `alpha` while leaving the
/// excitation (residual and phase) in place. The envelope is the
/// low-quefrency part of the real cepstrum of the log-magnitude spectrum.
fn warp_envelope_frames(frames: &mut [Vec<Complex<f32>>], frame_size: usize, alpha: f64) {
    let bins = frame_size / 2 + 1;
    let lifter_cutoff = (frame_size / 32).max(2);
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(frame_size);
    let inverse = planner.plan_fft_inverse(frame_size);
    let mut buf = vec![Complex::new(0.0f64, 0.0); frame_size];

    for frame in frames.iter_mut() {
        let log_mag: Vec<f64> = frame
            .iter()
            .map(|c| (c.norm() as f64).max(1e-10).ln())
            .collect();

        // Cepstral smoothing over the symmetric full spectrum.
        for k in 0..bins {
            buf[k] = Complex::new(log_mag[k], 0.0);
        }
        for k in bins..frame_size {
            buf[k] = Complex::new(log_mag[frame_size - k], 0.0);
        }
        forward.process(&mut buf);
        for (q, c) in buf.iter_mut().enumerate() {
            let mirror = frame_size - q;
            if q != 0 && q >= lifter_cutoff && mirror >= lifter_cutoff {
                *c = Complex::new(0.0, 0.0);
            }
        }
        inverse.process(&mut buf);
        let envelope: Vec<f64> = (0..bins).map(|k| buf[k].re / frame_size as f64).collect();

        for k in 0..bins {
            let residual = log_mag[k] - envelope[k];
            let warped = sample_envelope(&envelope, k as f64 / alpha);
            let new_mag = (warped + residual).exp() as f32;
            let old_mag = frame[k].norm();
            if old_mag > 1e-20 {
                frame[k] *= new_mag / old_mag;
            } else {
                frame[k] = Complex::new(new_mag, 0.0);
            }
        }
    }
}

fn sample_envelope(envelope: &[f64], pos: f64) -> f64 {
    let last = envelope.len() - 1;
    if pos <= 0.0 {
        return envelope[0];
    }
    if pos >= last as f64 {
        return envelope[last];
    }
    let p0 = pos.floor() as usize;
    let frac = pos - p0 as f64;
    envelope[p0] * (1.0 - frac) + envelope[p0 + 1] * frac
}

fn external_convert(clip: &AudioClip, t: &TimbreTransform, command: &str) -> Result<AudioClip> {
    let mut tokens = command.split_whitespace();
    let program = tokens
        .next()
        .ok_or_else(|| Error::Config("external converter command is empty".into()))?;

    let dir = tempfile::tempdir().map_err(|e| Error::io("<tempdir>", e))?;
    let in_path = dir.path().join("in.wav");
    let out_path = dir.path().join("out.wav");
    save_wav(clip, &in_path)?;

    let output = Command::new(program)
        .args(tokens)
        .arg("--in")
        .arg(&in_path)
        .arg("--out")
        .arg(&out_path)
        .arg("--timbre")
        .arg(&t.timbre_id)
        .output()
        .map_err(|e| Error::Backend(format!("failed to spawn `{program}`: {e}")))?;

    if !output.status.success() {
        return Err(Error::Backend(format!(
            "converter `{program}` exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    if !out_path.exists() {
        return Err(Error::Backend(format!(
            "converter `{program}` exited successfully but wrote no output file"
        )));
    }

    let converted = load_wav(&out_path)
        .map_err(|e| Error::Backend(format!("converter output unreadable: {e}")))?;
    if converted.sample_rate != clip.sample_rate {
        return Err(Error::Backend(format!(
            "converter changed sample rate: {} -> {}",
            clip.sample_rate, converted.sample_rate
        )));
    }
    let ratio = converted.len() as f64 / clip.len() as f64;
    if !(0.9..=1.1).contains(&ratio) {
        return Err(Error::Backend(format!(
            "converter changed duration by {:.1}% (allowed 10%)",
            (ratio - 1.0) * 100.0
        )));
    }
    Ok(converted)
}
