//! Short-time analysis and overlap-add resynthesis.
//!
//! Frames are taken from a reflect-padded copy of the signal: `frame_size/2`
//! on the left, `frame_size/2` plus a hop-alignment tail on the right, so the
//! frame grid covers every input sample and the inverse transform returns at
//! least the original length. The inverse applies the analysis window a
//! second time and normalizes by the accumulated squared window, which gives
//! perfect reconstruction wherever the overlap sum is nonzero.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::audio::{AudioClip, StftParams, WindowKind};
use crate::error::{Error, Result};

/// Complex short-time spectrum of a real signal: one vector of
/// `frame_size/2 + 1` coefficients per frame.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex<f32>>>,
    pub frame_size: usize,
    pub hop: usize,
    pub window: WindowKind,
    pub sample_rate: u32,
    /// Samples trimmed from each end on inverse; `stft` sets `frame_size/2`,
    /// hand-built spectrograms may use 0.
    pub pad: usize,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size / 2 + 1
    }

    pub fn params(&self) -> StftParams {
        StftParams {
            frame_size: self.frame_size,
            hop: self.hop,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params().validate()?;
        let bins = self.num_bins();
        if self.frames.is_empty() {
            return Err(Error::InvalidInput("spectrogram has no frames".into()));
        }
        for (i, f) in self.frames.iter().enumerate() {
            if f.len() != bins {
                return Err(Error::InvalidInput(format!(
                    "frame {i} has {} coefficients, expected {bins}",
                    f.len()
                )));
            }
        }
        Ok(())
    }
}

/// Mirror an out-of-range index back into [0, n) (period 2n-2, no edge
/// repetition).
fn reflect_index(idx: isize, n: usize) -> usize {
    debug_assert!(n >= 2);
    let period = 2 * (n as isize - 1);
    let mut i = idx.rem_euclid(period);
    if i >= n as isize {
        i = period - i;
    }
    i as usize
}

fn reflect_padded(samples: &[f32], pad_left: usize, pad_right: usize) -> Vec<f32> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + pad_left + pad_right);
    for i in 0..pad_left {
        out.push(samples[reflect_index(i as isize - pad_left as isize, n)]);
    }
    out.extend_from_slice(samples);
    for i in 0..pad_right {
        out.push(samples[reflect_index((n + i) as isize, n)]);
    }
    out
}

pub fn stft(clip: &AudioClip, params: &StftParams) -> Result<Spectrogram> {
    params.validate()?;
    let frame_size = params.frame_size;
    let hop = params.hop;
    let n = clip.len();
    if n < frame_size {
        return Err(Error::InvalidInput(format!(
            "clip of {n} samples is shorter than one frame ({frame_size})"
        )));
    }

    let pad = frame_size / 2;
    // Align the frame grid to the hop so the last frame reaches the end.
    let tail_align = (hop - n % hop) % hop;
    let padded = reflect_padded(&clip.samples, pad, pad + tail_align);
    let n_frames = 1 + (padded.len() - frame_size) / hop;

    let window = params.window.samples(frame_size);
    let fft = FftPlanner::<f32>::new().plan_fft_forward(frame_size);
    let bins = frame_size / 2 + 1;

    let mut frames = Vec::with_capacity(n_frames);
    let mut buf = vec![Complex::new(0.0f32, 0.0); frame_size];
    for m in 0..n_frames {
        let start = m * hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        frames.push(buf[..bins].to_vec());
    }

    Ok(Spectrogram {
        frames,
        frame_size,
        hop,
        window: params.window,
        sample_rate: clip.sample_rate,
        pad,
    })
}

/// Steady-state overlap sum of the squared window at each hop phase. A near
/// zero entry means the window/hop pair cannot be inverted (NOLA violation).
fn squared_overlap_profile(window: &[f32], hop: usize) -> Vec<f64> {
    let mut profile = vec![0.0f64; hop];
    for (i, &w) in window.iter().enumerate() {
        profile[i % hop] += (w as f64) * (w as f64);
    }
    profile
}

pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    spec.validate()?;
    let frame_size = spec.frame_size;
    let hop = spec.hop;
    let window = spec.window.samples(frame_size);

    let profile = squared_overlap_profile(&window, hop);
    let max_p = profile.iter().cloned().fold(0.0f64, f64::max);
    if profile.iter().any(|&p| p < 1e-6 * max_p) {
        return Err(Error::Config(format!(
            "window {:?} with hop {hop} and frame {frame_size} violates the overlap-add \
             constraint; inverse transform is not defined",
            spec.window
        )));
    }

    let n_frames = spec.frames.len();
    let span = (n_frames - 1) * hop + frame_size;
    let mut acc = vec![0.0f64; span];
    let mut norm = vec![0.0f64; span];

    let fft = FftPlanner::<f32>::new().plan_fft_inverse(frame_size);
    let mut buf = vec![Complex::new(0.0f32, 0.0); frame_size];
    let scale = 1.0 / frame_size as f32;

    for (m, frame) in spec.frames.iter().enumerate() {
        // Rebuild the conjugate-symmetric upper half of the spectrum.
        buf[..frame.len()].copy_from_slice(frame);
        for k in frame.len()..frame_size {
            buf[k] = frame[frame_size - k].conj();
        }
        fft.process(&mut buf);
        let start = m * hop;
        for i in 0..frame_size {
            let w = window[i] as f64;
            acc[start + i] += (buf[i].re * scale) as f64 * w;
            norm[start + i] += w * w;
        }
    }

    if 2 * spec.pad >= span {
        return Err(Error::InvalidInput(format!(
            "spectrogram spans {span} samples but trims {} from each end",
            spec.pad
        )));
    }
    let out: Vec<f32> = (spec.pad..span - spec.pad)
        .map(|i| {
            if norm[i] > 1e-8 {
                (acc[i] / norm[i]) as f32
            } else {
                0.0
            }
        })
        .collect();

    AudioClip::new(out, spec.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{snr_db, StftParams, WindowKind};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    fn tone(freq: f64, rate: u32, n: usize, amp: f32) -> AudioClip {
        let samples = (0..n)
            .map(|i| amp * (TAU * freq * i as f64 / rate as f64).sin() as f32)
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn reflect_index_bounces() {
        // n = 5 -> pattern ... 2 1 [0 1 2 3 4] 3 2 ...
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(0, 5), 0);
        assert_eq!(reflect_index(4, 5), 4);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(9, 5), 1);
    }

    #[test]
    fn tone_peaks_at_expected_bin() {
        // 1 kHz at 16 kHz with frame 1024 -> bin 64
        let clip = tone(1000.0, 16000, 16000, 0.5);
        let spec = stft(&clip, &StftParams::default()).unwrap();
        for frame in &spec.frames[2..spec.frames.len() - 2] {
            let peak = frame
                .iter()
                .enumerate()
                .skip(1)
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap()
                .0;
            assert_eq!(peak, 64);
        }
    }

    #[test]
    fn zero_signal_all_zero_coefficients() {
        let clip = AudioClip::new(vec![0.0; 4096], 16000).unwrap();
        let spec = stft(&clip, &StftParams::default()).unwrap();
        assert!(spec.frames.iter().flatten().all(|c| c.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert!(back.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn frame_count_matches_grid() {
        let p = StftParams::default();

        // Hop-aligned input: grid covers it exactly.
        let clip = AudioClip::new(vec![0.1; 4096], 16000).unwrap();
        let spec = stft(&clip, &p).unwrap();
        assert_eq!(spec.num_frames(), 1 + 4096 / 256);
        assert_eq!(istft(&spec).unwrap().len(), 4096);

        // 16000 % 256 = 128, so the grid rounds up to the next hop.
        let clip = AudioClip::new(vec![0.1; 16000], 16000).unwrap();
        let spec = stft(&clip, &p).unwrap();
        assert_eq!(spec.num_frames(), 1 + (16000 + 128) / 256);
        let back = istft(&spec).unwrap();
        assert_eq!(back.len(), 16000 + 128);
    }

    #[test]
    fn short_clip_rejected() {
        let clip = AudioClip::new(vec![0.1; 512], 16000).unwrap();
        assert!(matches!(
            stft(&clip, &StftParams::default()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn round_trip_snr_above_40db() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let n = rng.gen_range(1024..20000);
            let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-0.8f32..0.8)).collect();
            let clip = AudioClip::new(samples, 16000).unwrap();
            let spec = stft(&clip, &StftParams::default()).unwrap();
            let back = istft(&spec).unwrap();
            assert!(back.len() >= clip.len());
            let snr = snr_db(&clip.samples, &back.samples);
            assert!(snr > 40.0, "round trip SNR {snr} dB");
        }
    }

    #[test]
    fn linearity_in_amplitude() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<f32> = (0..4000).map(|_| rng.gen_range(-0.4f32..0.4)).collect();
        let clip = AudioClip::new(samples.clone(), 16000).unwrap();
        let scaled = AudioClip::new(samples.iter().map(|s| s * 0.5).collect(), 16000).unwrap();
        let a = stft(&clip, &StftParams::default()).unwrap();
        let b = stft(&scaled, &StftParams::default()).unwrap();
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            for (ca, cb) in fa.iter().zip(fb) {
                let expect = ca * 0.5;
                assert!((expect - cb).norm() <= 1e-6 * ca.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn parseval_consistency_per_frame() {
        let clip = tone(700.0, 16000, 8000, 0.6);
        let p = StftParams::default();
        let spec = stft(&clip, &p).unwrap();
        let window = p.window.samples(p.frame_size);
        let pad = p.frame_size / 2;
        let padded = reflect_padded(&clip.samples, pad, pad);
        let f = p.frame_size as f64;
        for (m, frame) in spec.frames.iter().enumerate().take(spec.num_frames() - 1) {
            let time_energy: f64 = (0..p.frame_size)
                .map(|i| {
                    let v = (padded[m * p.hop + i] * window[i]) as f64;
                    v * v
                })
                .sum();
            let mut freq_energy =
                (frame[0].norm_sqr() as f64 + frame[p.frame_size / 2].norm_sqr() as f64) / f;
            for c in &frame[1..p.frame_size / 2] {
                freq_energy += 2.0 * c.norm_sqr() as f64 / f;
            }
            assert!(
                (time_energy - freq_energy).abs() <= 1e-4 * time_energy.max(1e-9),
                "frame {m}: {time_energy} vs {freq_energy}"
            );
        }
    }

    #[test]
    fn nola_violation_is_a_config_error() {
        let clip = tone(500.0, 16000, 4096, 0.3);
        let p = StftParams {
            frame_size: 1024,
            hop: 1024,
            window: WindowKind::Hann,
        };
        let spec = stft(&clip, &p).unwrap();
        assert!(matches!(istft(&spec), Err(Error::Config(_))));

        // Rectangular window at full hop tiles perfectly.
        let p = StftParams {
            frame_size: 1024,
            hop: 1024,
            window: WindowKind::Rect,
        };
        let spec = stft(&clip, &p).unwrap();
        let back = istft(&spec).unwrap();
        assert!(snr_db(&clip.samples, &back.samples) > 40.0);
    }

    #[test]
    fn single_frame_windowed_sinusoid_reconstructs() {
        let p = StftParams::default();
        let n = p.frame_size;
        let window = p.window.samples(n);
        let base = tone(16000.0 / 64.0, 16000, n, 0.7); // integral number of cycles
        let windowed: Vec<f32> = base
            .samples
            .iter()
            .zip(&window)
            .map(|(s, w)| s * w)
            .collect();

        // Single-frame spectrogram of the windowed sinusoid, built the way
        // `stft` frames a signal (analysis window applied before the FFT).
        let mut buf: Vec<Complex<f32>> = windowed
            .iter()
            .zip(&window)
            .map(|(&s, &w)| Complex::new(s * w, 0.0))
            .collect();
        FftPlanner::<f32>::new()
            .plan_fft_forward(n)
            .process(&mut buf);
        let spec = Spectrogram {
            frames: vec![buf[..n / 2 + 1].to_vec()],
            frame_size: n,
            hop: p.hop,
            window: p.window,
            sample_rate: 16000,
            pad: 0,
        };
        let back = istft(&spec).unwrap();
        assert_eq!(back.len(), n);
        // Window compensation divides out the squared window; compare where
        // it is comfortably nonzero.
        for i in 0..n {
            if window[i] * window[i] > 1e-3 {
                assert!(
                    (back.samples[i] - windowed[i]).abs() < 1e-3,
                    "sample {i}: {} vs {}",
                    back.samples[i],
                    windowed[i]
                );
            }
        }
    }
}
