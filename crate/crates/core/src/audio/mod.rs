//! Audio primitives shared by both trigger families: WAV I/O, STFT/ISTFT,
//! phase-vocoder time stretching, resampling, and a few measurement helpers.

mod analysis;
mod stft;
mod vocoder;
mod wav;

pub use analysis::{dominant_frequency, rms, snr_db, spectral_centroid};
pub use stft::{istft, stft, Spectrogram};
pub use vocoder::{pitch_shift_factor, resample, time_stretch};
pub use wav::{load_wav, save_wav};

use crate::error::{Error, Result};

/// A mono time-domain signal. Samples are dimensionless amplitudes with a
/// nominal range of [-1, 1]; synthesis operations hard-clip back into range.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("audio clip must be non-empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(
                "audio clip contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
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
}

/// Analysis window shape used by [`stft`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
    Hamming,
    Rect,
}

impl WindowKind {
    /// Periodic window of length `n`.
    pub fn samples(self, n: usize) -> Vec<f32> {
        use std::f64::consts::TAU;
        (0..n)
            .map(|i| {
                let x = TAU * i as f64 / n as f64;
                let w = match self {
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Hamming => 0.54 - 0.46 * x.cos(),
                    WindowKind::Rect => 1.0,
                };
                w as f32
            })
            .collect()
    }
}

/// Frame/hop/window triple shared wherever a short-time transform is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub frame_size: usize,
    pub hop: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    fn default() -> Self {
        // Standard speech-analysis settings at 16 kHz.
        Self {
            frame_size: 1024,
            hop: 256,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() || self.frame_size < 4 {
            return Err(Error::Config(format!(
                "frame_size must be a power of two >= 4, got {}",
                self.frame_size
            )));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(Error::Config(format!(
                "hop must satisfy 0 < hop <= frame_size, got hop={} frame_size={}",
                self.hop, self.frame_size
            )));
        }
        Ok(())
    }
}

/// Hard-clip samples into [-1, 1] and return the peak overage that was
/// removed (0.0 when nothing clipped).
pub fn clip_guard(samples: &mut [f32]) -> f32 {
    let mut overage = 0.0f32;
    for s in samples.iter_mut() {
        let a = s.abs();
        if a > 1.0 {
            overage = overage.max(a - 1.0);
            *s = s.signum();
        }
    }
    overage
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_rejects_empty_and_nonfinite() {
        assert!(AudioClip::new(vec![], 16000).is_err());
        assert!(AudioClip::new(vec![0.0], 0).is_err());
        assert!(AudioClip::new(vec![f32::NAN], 16000).is_err());
        assert!(AudioClip::new(vec![0.5, -0.5], 16000).is_ok());
    }

    #[test]
    fn clip_guard_reports_overage() {
        let mut s = vec![0.5, -1.5, 2.0];
        let over = clip_guard(&mut s);
        assert_eq!(s, vec![0.5, -1.0, 1.0]);
        assert!((over - 1.0).abs() < 1e-6);

        let mut t = vec![0.1, -0.9];
        assert_eq!(clip_guard(&mut t), 0.0);
    }

    #[test]
    fn stft_params_validation() {
        assert!(StftParams::default().validate().is_ok());
        assert!(StftParams {
            frame_size: 1000,
            hop: 256,
            window: WindowKind::Hann
        }
        .validate()
        .is_err());
        assert!(StftParams {
            frame_size: 1024,
            hop: 0,
            window: WindowKind::Hann
        }
        .validate()
        .is_err());
        assert!(StftParams {
            frame_size: 1024,
            hop: 2048,
            window: WindowKind::Hann
        }
        .validate()
        .is_err());
    }
}
