//! Phase-vocoder time stretching and linear-interpolation resampling.
//!
//! Pitch shifting by a factor `p` is realized as a stretch to `p` times the
//! duration followed by reading the stretched signal back at step `p`: the
//! duration returns to (about) the original while every frequency scales
//! by `p`.

use std::f64::consts::{PI, TAU};

use rustfft::num_complex::Complex;

use crate::audio::{clip_guard, istft, stft, AudioClip, Spectrogram, StftParams};
use crate::error::{Error, Result};

/// Stretch `clip` to `1/rate` times its duration without changing pitch.
/// `rate` > 1 shortens, `rate` < 1 lengthens, `rate` = 1 is an identity up to
/// reconstruction error.
pub fn time_stretch(clip: &AudioClip, rate: f64, params: &StftParams) -> Result<AudioClip> {
    if !(rate.is_finite() && rate > 0.0) {
        return Err(Error::InvalidInput(format!(
            "stretch rate must be positive, got {rate}"
        )));
    }
    let spec = stft(clip, params)?;
    let stretched = stretch_frames(&spec, rate);
    istft(&stretched)
}

/// Resample the spectrogram frame sequence at fractional step `rate`,
/// accumulating per-bin phase from the measured frame-to-frame deviation
/// around each bin's expected advance.
fn stretch_frames(spec: &Spectrogram, rate: f64) -> Spectrogram {
    let bins = spec.num_bins();
    let n_in = spec.num_frames();
    let phase_advance: Vec<f64> = (0..bins)
        .map(|k| TAU * spec.hop as f64 * k as f64 / spec.frame_size as f64)
        .collect();

    let mut acc: Vec<f64> = spec.frames[0].iter().map(|c| c.arg() as f64).collect();
    let max_t = (n_in - 1) as f64;
    let mut out = Vec::with_capacity((max_t / rate) as usize + 2);

    let mut step = 0usize;
    loop {
        let t = step as f64 * rate;
        if t > max_t + 1e-9 {
            break;
        }
        let i0 = (t.floor() as usize).min(n_in - 1);
        let i1 = (i0 + 1).min(n_in - 1);
        let frac = (t - i0 as f64) as f32;

        let cur = &spec.frames[i0];
        let next = &spec.frames[i1];
        let mut frame = Vec::with_capacity(bins);
        for k in 0..bins {
            let mag = cur[k].norm() * (1.0 - frac) + next[k].norm() * frac;
            frame.push(Complex::from_polar(mag, acc[k] as f32));
        }
        out.push(frame);

        // Advance the accumulator across the i0 -> i1 interval.
        for k in 0..bins {
            let measured = (next[k].arg() - cur[k].arg()) as f64;
            let deviation = wrap_phase(measured - phase_advance[k]);
            acc[k] += phase_advance[k] + deviation;
        }
        step += 1;
    }

    Spectrogram {
        frames: out,
        frame_size: spec.frame_size,
        hop: spec.hop,
        window: spec.window,
        sample_rate: spec.sample_rate,
        pad: spec.pad,
    }
}

fn wrap_phase(x: f64) -> f64 {
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

/// Read `clip` back at fractional step `step` (linear interpolation). The
/// output keeps the sample rate, so every frequency is multiplied by `step`
/// and the duration divided by it.
pub fn resample(clip: &AudioClip, step: f64) -> Result<AudioClip> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!(
            "resample step must be positive, got {step}"
        )));
    }
    let n = clip.len();
    let max_pos = (n - 1) as f64;
    let mut out = Vec::with_capacity((max_pos / step) as usize + 1);
    let mut i = 0usize;
    loop {
        let pos = i as f64 * step;
        if pos > max_pos + 1e-9 {
            break;
        }
        let p0 = (pos.floor() as usize).min(n - 1);
        let p1 = (p0 + 1).min(n - 1);
        let frac = (pos - p0 as f64) as f32;
        out.push(clip.samples[p0] * (1.0 - frac) + clip.samples[p1] * frac);
        i += 1;
    }
    AudioClip::new(out, clip.sample_rate)
}

/// Duration-preserving pitch shift by an arbitrary positive factor.
pub fn pitch_shift_factor(clip: &AudioClip, factor: f64, params: &StftParams) -> Result<AudioClip> {
    if !(factor.is_finite() && factor > 0.0) {
        return Err(Error::InvalidInput(format!(
            "pitch factor must be positive, got {factor}"
        )));
    }
    let stretched = time_stretch(clip, 1.0 / factor, params)?;
    let mut shifted = resample(&stretched, factor)?;
    clip_guard(&mut shifted.samples);
    Ok(shifted)
}
