//! Pitch trigger: boost the pitch of the whole clip, find its
//! highest-energy segment, and mix a short high-pitched tone in at that
//! position so the host audio masks it.

use serde::{Deserialize, Serialize};

use crate::audio::{clip_guard, pitch_shift_factor, rms, AudioClip, StftParams};
use crate::error::{Error, Result};

/// Below this host-segment RMS the tone is scaled against a fixed floor
/// instead, so silent inputs still receive a nonzero trigger.
pub const RMS_FLOOR: f64 = 1e-4;

/// The injected tone: a faded sine whose level is tied to the host segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HighPitchSpec {
    pub frequency_hz: f64,
    pub duration_ms: f64,
    /// Tone RMS relative to the host-segment RMS.
    pub amplitude_ratio: f64,
    /// Raised-cosine fade applied at both ends.
    pub fade_ms: f64,
}

impl Default for HighPitchSpec {
    fn default() -> Self {
        Self {
            frequency_hz: 6000.0,
            duration_ms: 100.0,
            amplitude_ratio: 0.5,
            fade_ms: 5.0,
        }
    }
}

impl HighPitchSpec {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let nyquist = sample_rate as f64 / 2.0;
        if !(self.frequency_hz > 0.0 && self.frequency_hz < nyquist) {
            return Err(Error::InvalidInput(format!(
                "tone frequency {} Hz outside (0, {nyquist}) at rate {sample_rate}",
                self.frequency_hz
            )));
        }
        if self.duration_ms <= 0.0 {
            return Err(Error::InvalidInput("tone duration must be positive".into()));
        }
        if self.amplitude_ratio < 0.0 || !self.amplitude_ratio.is_finite() {
            return Err(Error::InvalidInput(
                "amplitude ratio must be non-negative".into(),
            ));
        }
        if self.fade_ms < 0.0 {
            return Err(Error::InvalidInput("fade must be non-negative".into()));
        }
        Ok(())
    }
}

/// Where the tone goes relative to the located segment: at its end index
/// (the locator's return value) or at its start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertPosition {
    #[default]
    SegmentEnd,
    SegmentStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PbsmConfig {
    /// Pitch-shift step in semitones.
    pub semitones: u32,
    /// High-amplitude window length in milliseconds.
    pub segment_ms: f64,
    pub signal: HighPitchSpec,
    pub stft: StftParams,
    pub insert_at: InsertPosition,
}

impl Default for PbsmConfig {
    fn default() -> Self {
        Self {
            semitones: 5,
            segment_ms: 100.0,
            signal: HighPitchSpec::default(),
            stft: StftParams::default(),
            insert_at: InsertPosition::SegmentEnd,
        }
    }
}

impl PbsmConfig {
    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        if self.segment_ms <= 0.0 {
            return Err(Error::InvalidInput(
                "segment length must be positive".into(),
            ));
        }
        self.signal.validate(sample_rate)?;
        self.stft.validate()
    }

    pub fn segment_samples(&self, sample_rate: u32) -> usize {
        ((self.segment_ms / 1000.0) * sample_rate as f64)
            .round()
            .max(1.0) as usize
    }
}

/// Pitch-shift factor for a semitone step: `2^(n/12)`.
pub fn semitone_factor(semitones: u32) -> f64 {
    2.0f64.powf(semitones as f64 / 12.0)
}

/// Raise the clip's pitch by `semitones` while keeping its duration within
/// one hop of the input.
pub fn pitch_shift(clip: &AudioClip, semitones: u32, params: &StftParams) -> Result<AudioClip> {
    pitch_shift_factor(clip, semitone_factor(semitones), params)
}

/// End index `T` of the length-`window_len` window with the largest sum of
/// absolute amplitudes; the first window wins ties. Runs in O(n) on prefix
/// sums.
pub fn locate_max_energy(clip: &AudioClip, window_len: usize) -> Result<usize> {
    let n = clip.len();
    if window_len == 0 || window_len > n {
        return Err(Error::InvalidInput(format!(
            "window of {window_len} samples invalid for clip of {n}"
        )));
    }
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0f64);
    let mut acc = 0.0f64;
    for &s in &clip.samples {
        acc += s.abs() as f64;
        prefix.push(acc);
    }
    let mut best_start = 0usize;
    let mut best_sum = f64::NEG_INFINITY;
    for start in 0..=(n - window_len) {
        let sum = prefix[start + window_len] - prefix[start];
        if sum > best_sum {
            best_sum = sum;
            best_start = start;
        }
    }
    Ok(best_start + window_len)
}

/// Synthesize the tone described by `spec` with RMS equal to
/// `spec.amplitude_ratio * target_rms`.
pub fn synthesize_high_pitch(
    spec: &HighPitchSpec,
    sample_rate: u32,
    target_rms: f64,
) -> Result<AudioClip> {
    spec.validate(sample_rate)?;
    let n = ((spec.duration_ms / 1000.0) * sample_rate as f64)
        .round()
        .max(1.0) as usize;
    let fade = (((spec.fade_ms / 1000.0) * sample_rate as f64).round() as usize).min(n / 2);

    let mut samples: Vec<f32> = (0..n)
        .map(|i| {
            let phase = std::f64::consts::TAU * spec.frequency_hz * i as f64 / sample_rate as f64;
            let mut v = phase.sin();
            if i < fade {
                v *= raised_cosine(i, fade);
            }
            if i >= n - fade {
                v *= raised_cosine(n - 1 - i, fade);
            }
            v as f32
        })
        .collect();

    let want = spec.amplitude_ratio * target_rms;
    let have = rms(&samples);
    let gain = if want <= 0.0 || have <= 1e-12 {
        0.0
    } else {
        want / have
    };
    for s in &mut samples {
        *s = (*s as f64 * gain) as f32;
    }
    clip_guard(&mut samples);
    AudioClip::new(samples, sample_rate)
}

fn raised_cosine(i: usize, fade: usize) -> f64 {
    // 0 at the boundary sample, approaching 1 over `fade` samples.
    0.5 - 0.5 * (std::f64::consts::PI * i as f64 / fade as f64).cos()
}

/// Mix `h` into `clip` starting at sample `at`; everything outside the
/// insertion window is copied through untouched, and the result is
/// hard-clipped to [-1, 1].
pub fn inject_signal(clip: &AudioClip, h: &AudioClip, at: usize) -> Result<AudioClip> {
    if h.is_empty() {
        return Err(Error::InvalidInput(
            "injected signal must be non-empty".into(),
        ));
    }
    if at + h.len() > clip.len() {
        return Err(Error::InvalidInput(format!(
            "injection at {at} of {} samples overruns clip of {}",
            h.len(),
            clip.len()
        )));
    }
    let mut samples = clip.samples.clone();
    for (i, &v) in h.samples.iter().enumerate() {
        samples[at + i] += v;
    }
    clip_guard(&mut samples[at..at + h.len()]);
    AudioClip::new(samples, clip.sample_rate)
}

/// Everything `apply_pbsm` measured along the way; the poisoner records it
/// per file and the CLI prints it.
#[derive(Debug, Clone)]
pub struct PbsmOutcome {
    pub output: AudioClip,
    /// End index of the located max-energy segment (on the boosted signal).
    pub segment_end: usize,
    /// Sample index where the tone insertion starts, after clamping.
    pub insertion_index: usize,
    pub host_rms: f64,
    pub tone_rms: f64,
    pub peak_overage: f32,
}

/// Full pitch trigger: boost, locate, synthesize, inject.
pub fn apply_pbsm(clip: &AudioClip, cfg: &PbsmConfig) -> Result<AudioClip> {
    Ok(apply_pbsm_detailed(clip, cfg)?.output)
}

pub fn apply_pbsm_detailed(clip: &AudioClip, cfg: &PbsmConfig) -> Result<PbsmOutcome> {
    cfg.validate(clip.sample_rate)?;
    let boosted = pitch_shift(clip, cfg.semitones, &cfg.stft)?;

    let seg_len = cfg.segment_samples(clip.sample_rate);
    let segment_end = locate_max_energy(&boosted, seg_len)?;
    let host_rms = rms(&boosted.samples[segment_end - seg_len..segment_end]).max(RMS_FLOOR);

    let tone = synthesize_high_pitch(&cfg.signal, clip.sample_rate, host_rms)?;
    if tone.len() > boosted.len() {
        return Err(Error::InvalidInput(format!(
            "tone of {} samples longer than clip of {}",
            tone.len(),
            boosted.len()
        )));
    }
    let preferred = match cfg.insert_at {
        InsertPosition::SegmentEnd => segment_end,
        InsertPosition::SegmentStart => segment_end - seg_len,
    };
    let insertion_index = preferred.min(boosted.len() - tone.len());

    let tone_rms = rms(&tone.samples);
    let mut samples = boosted.samples;
    for (i, &v) in tone.samples.iter().enumerate() {
        samples[insertion_index + i] += v;
    }
    let peak_overage = clip_guard(&mut samples);
    let output = AudioClip::new(samples, clip.sample_rate)?;

    Ok(PbsmOutcome {
        output,
        segment_end,
        insertion_index,
        host_rms,
        tone_rms,
        peak_overage,
    })
}

/// Ablation variant: the pitch boost alone, no tone. Used to build the
/// trigger-filtering defense test set.
pub fn apply_pitch_only(clip: &AudioClip, cfg: &PbsmConfig) -> Result<AudioClip> {
    cfg.validate(clip.sample_rate)?;
    pitch_shift(clip, cfg.semitones, &cfg.stft)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{dominant_frequency, snr_db};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::TAU;

    fn tone_clip(freq: f64, rate: u32, n: usize, amp: f32) -> AudioClip {
        let samples = (0..n)
            .map(|i| amp * (TAU * freq * i as f64 / rate as f64).sin() as f32)
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    /// Harmonic stack with decaying partials, crudely shaped like a vowel.
    fn utterance(rate: u32, n: usize) -> AudioClip {
        let f0 = 180.0;
        let samples: Vec<f32> = (0..n)
            .map(|i| {
                let t = i as f64 / rate as f64;
                let env = (TAU * 1.3 * t).sin().abs();
                let mut v = 0.0;
                for k in 1..=8 {
                    v += (TAU * f0 * k as f64 * t).sin() / (k as f64 * k as f64);
                }
                (0.4 * env * v) as f32
            })
            .collect();
        AudioClip::new(samples, rate).unwrap()
    }

    #[test]
    fn semitone_factor_values() {
        assert_eq!(semitone_factor(0), 1.0);
        assert!((semitone_factor(12) - 2.0).abs() < 1e-12);
        assert!((semitone_factor(5) - 1.3348398541700344).abs() < 1e-12);
    }

    #[test]
    fn pitch_shift_scales_tone_frequency() {
        let clip = tone_clip(440.0, 16000, 16000, 0.5);
        let out = pitch_shift(&clip, 5, &StftParams::default()).unwrap();
        let f = dominant_frequency(&out);
        let expect = 440.0 * semitone_factor(5);
        assert!((f - expect).abs() / expect < 0.02, "{f} vs {expect}");
        assert!((out.len() as i64 - 16000).unsigned_abs() <= 256);
    }

    #[test]
    fn zero_semitones_is_identity_within_tolerance() {
        let clip = utterance(16000, 16000);
        let out = pitch_shift(&clip, 0, &StftParams::default()).unwrap();
        let snr = snr_db(&clip.samples, &out.samples);
        assert!(snr > 40.0, "SNR {snr}");
    }

    #[test]
    fn locator_hand_case() {
        let clip = AudioClip::new(vec![0.0, 0.0, 1.0, 1.0, 0.0, 0.0], 16000).unwrap();
        assert_eq!(locate_max_energy(&clip, 2).unwrap(), 4);
    }

    #[test]
    fn locator_tie_breaks_on_first_window() {
        let clip = AudioClip::new(vec![0.25; 100], 16000).unwrap();
        for l in [1usize, 7, 100] {
            assert_eq!(locate_max_energy(&clip, l).unwrap(), l);
        }
    }

    #[test]
    fn locator_rejects_oversized_window() {
        let clip = AudioClip::new(vec![0.1; 10], 16000).unwrap();
        assert!(locate_max_energy(&clip, 11).is_err());
        assert!(locate_max_energy(&clip, 0).is_err());
    }

    #[test]
    fn locator_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let n = rng.gen_range(8..500);
            let l = rng.gen_range(1..=n);
            let samples: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            let clip = AudioClip::new(samples, 16000).unwrap();
            let fast = locate_max_energy(&clip, l).unwrap();
            let brute = brute_force_locate(&clip.samples, l);
            assert_eq!(fast, brute);
        }
    }

    pub(crate) fn brute_force_locate(samples: &[f32], l: usize) -> usize {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for start in 0..=(samples.len() - l) {
            let sum: f64 = samples[start..start + l]
                .iter()
                .map(|s| s.abs() as f64)
                .sum();
            if sum > best.0 {
                best = (sum, start);
            }
        }
        best.1 + l
    }

    #[test]
    fn tone_synthesis_duration_and_rms() {
        let spec = HighPitchSpec::default();
        let t = synthesize_high_pitch(&spec, 16000, 0.1).unwrap();
        assert_eq!(t.len(), 1600);
        let got = rms(&t.samples);
        assert!((got - 0.05).abs() / 0.05 < 0.01, "rms {got}");
    }

    #[test]
    fn zero_ratio_gives_silent_tone() {
        let spec = HighPitchSpec {
            amplitude_ratio: 0.0,
            ..Default::default()
        };
        let t = synthesize_high_pitch(&spec, 16000, 0.1).unwrap();
        assert!(t.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn nyquist_tone_rejected() {
        let spec = HighPitchSpec {
            frequency_hz: 8000.0,
            ..Default::default()
        };
        assert!(synthesize_high_pitch(&spec, 16000, 0.1).is_err());
    }

    #[test]
    fn injection_is_local_and_additive() {
        let clip = AudioClip::new(vec![0.0; 1000], 16000).unwrap();
        let h = tone_clip(1000.0, 16000, 100, 0.3);
        let out = inject_signal(&clip, &h, 200).unwrap();
        assert_eq!(&out.samples[200..300], &h.samples[..]);
        assert!(out.samples[..200].iter().all(|&s| s == 0.0));
        assert!(out.samples[300..].iter().all(|&s| s == 0.0));

        // Subtracting the shifted tone recovers the host where nothing clipped.
        let host = tone_clip(300.0, 16000, 1000, 0.4);
        let mixed = inject_signal(&host, &h, 500).unwrap();
        for i in 0..1000 {
            let recovered = if (500..600).contains(&i) {
                mixed.samples[i] - h.samples[i - 500]
            } else {
                mixed.samples[i]
            };
            assert!((recovered - host.samples[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn injection_clips_to_unit_range() {
        let clip = AudioClip::new(vec![0.9; 100], 16000).unwrap();
        let h = AudioClip::new(vec![0.9; 10], 16000).unwrap();
        let out = inject_signal(&clip, &h, 0).unwrap();
        assert!(out.samples[..10].iter().all(|&s| s == 1.0));
        assert!(out.samples[10..].iter().all(|&s| s == 0.9));
    }

    #[test]
    fn injection_rejects_empty_and_overrun() {
        let clip = AudioClip::new(vec![0.0; 100], 16000).unwrap();
        let h = AudioClip::new(vec![0.1; 50], 16000).unwrap();
        assert!(inject_signal(&clip, &h, 60).is_err());
        let empty = AudioClip {
            samples: vec![],
            sample_rate: 16000,
        };
        assert!(inject_signal(&clip, &empty, 0).is_err());
    }

    #[test]
    fn full_trigger_shifts_pitch_and_embeds_tone() {
        let clip = utterance(16000, 16000);
        let cfg = PbsmConfig::default();
        let outcome = apply_pbsm_detailed(&clip, &cfg).unwrap();

        let ratio = dominant_frequency(&outcome.output) / dominant_frequency(&clip);
        let expect = semitone_factor(5);
        assert!((ratio - expect).abs() / expect < 0.02, "ratio {ratio}");

        // The tone is exactly the difference against the pitch-only variant.
        let boosted = apply_pitch_only(&clip, &cfg).unwrap();
        let start = outcome.insertion_index;
        let tone_len = 1600;
        for i in 0..boosted.len() {
            let diff = (outcome.output.samples[i] - boosted.samples[i]).abs();
            if i < start || i >= start + tone_len {
                assert!(diff == 0.0, "unexpected change at {i}");
            }
        }
        let burst = AudioClip::new(
            outcome.output.samples[start..start + tone_len]
                .iter()
                .zip(&boosted.samples[start..start + tone_len])
                .map(|(a, b)| a - b)
                .collect(),
            16000,
        )
        .unwrap();
        let f = dominant_frequency(&burst);
        assert!((f - 6000.0).abs() / 6000.0 < 0.01, "burst at {f} Hz");
    }

    #[test]
    fn silence_degenerate_case() {
        let clip = AudioClip::new(vec![0.0; 16000], 16000).unwrap();
        let cfg = PbsmConfig::default();
        let outcome = apply_pbsm_detailed(&clip, &cfg).unwrap();
        // Tie-break puts the segment first; the tone rides on the RMS floor.
        assert_eq!(outcome.segment_end, cfg.segment_samples(16000));
        assert_eq!(outcome.host_rms, RMS_FLOOR);
        let expect = RMS_FLOOR * cfg.signal.amplitude_ratio;
        assert!((outcome.tone_rms - expect).abs() / expect < 0.01);
        let out_rms = rms(&outcome.output.samples);
        assert!(out_rms > 0.0 && out_rms < 10.0 * expect);
    }

    #[test]
    fn neutral_configuration_is_identity_within_tolerance() {
        let clip = utterance(16000, 8000);
        let cfg = PbsmConfig {
            semitones: 0,
            signal: HighPitchSpec {
                amplitude_ratio: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let once = apply_pbsm(&clip, &cfg).unwrap();
        let twice = apply_pbsm(&once, &cfg).unwrap();
        let snr = snr_db(&clip.samples, &twice.samples);
        assert!(snr > 40.0, "SNR {snr}");
    }

    #[test]
    fn pitch_only_equals_trigger_with_silent_tone() {
        let clip = utterance(16000, 8000);
        let cfg = PbsmConfig {
            signal: HighPitchSpec {
                amplitude_ratio: 0.0,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = apply_pitch_only(&clip, &cfg).unwrap();
        let b = apply_pbsm(&clip, &cfg).unwrap();
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn pitch_factor_sweep_within_two_percent() {
        for np in [1u32, 3, 5, 7] {
            let clip = tone_clip(440.0, 16000, 12000, 0.5);
            let out = pitch_shift(&clip, np, &StftParams::default()).unwrap();
            let ratio = dominant_frequency(&out) / 440.0;
            let expect = semitone_factor(np);
            assert!(
                ratio >= 0.98 * expect && ratio <= 1.02 * expect,
                "np={np} ratio={ratio} expect={expect}"
            );
        }
    }
}
