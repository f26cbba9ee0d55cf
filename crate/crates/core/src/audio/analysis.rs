//! Measurement helpers used by tests, the CLI, and trigger synthesis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{AudioClip, WindowKind};

pub fn rms(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let sum: f64 = samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
    (sum / samples.len() as f64).sqrt()
}

/// Signal-to-noise ratio of `test` against `reference`, in dB, over the
/// common prefix. Infinite when the two agree exactly.
pub fn snr_db(reference: &[f32], test: &[f32]) -> f64 {
    let n = reference.len().min(test.len());
    let mut sig = 0.0f64;
    let mut err = 0.0f64;
    for i in 0..n {
        let r = reference[i] as f64;
        let d = r - test[i] as f64;
        sig += r * r;
        err += d * d;
    }
    if err == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (sig / err).log10()
}

fn magnitude_spectrum(clip: &AudioClip) -> (Vec<f64>, f64) {
    let n = clip.len();
    let nfft = (4 * n.next_power_of_two()).max(64);
    let window = WindowKind::Hann.samples(n);
    let mut buf = vec![Complex::new(0.0f32, 0.0); nfft];
    for i in 0..n {
        buf[i] = Complex::new(clip.samples[i] * window[i], 0.0);
    }
    FftPlanner::<f32>::new()
        .plan_fft_forward(nfft)
        .process(&mut buf);
    let bins = nfft / 2 + 1;
    let mags = buf[..bins].iter().map(|c| c.norm() as f64).collect();
    let bin_hz = clip.sample_rate as f64 / nfft as f64;
    (mags, bin_hz)
}

/// Frequency of the strongest spectral peak, refined by parabolic
/// interpolation on log magnitude. Returns 0.0 for (near-)silent input.
pub fn dominant_frequency(clip: &AudioClip) -> f64 {
    let (mags, bin_hz) = magnitude_spectrum(clip);
    let peak = mags
        .iter()
        .enumerate()
        .skip(1)
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap_or(0);
    if mags[peak] <= 1e-12 {
        return 0.0;
    }
    let mut k = peak as f64;
    if peak > 0 && peak + 1 < mags.len() {
        let lm = |m: f64| (m.max(1e-18)).ln();
        let (a, b, c) = (lm(mags[peak - 1]), lm(mags[peak]), lm(mags[peak + 1]));
        let denom = a - 2.0 * b + c;
        if denom.abs() > 1e-12 {
            let delta = 0.5 * (a - c) / denom;
            if delta.abs() <= 1.0 {
                k += delta;
            }
        }
    }
    k * bin_hz
}

/// Amplitude-weighted mean frequency of the magnitude spectrum.
pub fn spectral_centroid(clip: &AudioClip) -> f64 {
    let (mags, bin_hz) = magnitude_spectrum(clip);
    let total: f64 = mags.iter().sum();
    if total <= 1e-12 {
        return 0.0;
    }
    let weighted: f64 = mags.iter().enumerate().map(|(k, m)| k as f64 * m).sum();
    weighted / total * bin_hz
}
