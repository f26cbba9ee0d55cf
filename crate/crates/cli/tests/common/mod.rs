//! Shared fixtures for CLI and acceptance tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use speechpoison_core::audio::{save_wav, AudioClip};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_speechpoison")
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(bin());
    cmd.args(args);
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr_str(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Synthetic utterance, deterministic in (class, variant); class-dependent
/// fundamental with a handful of decaying harmonics.
pub fn utterance(class: usize, variant: usize, n: usize) -> AudioClip {
    let rate = 16000u32;
    let f0 = 150.0 + 22.0 * class as f64 + 3.0 * variant as f64;
    let samples: Vec<f32> = (0..n)
        .map(|i| {
            let t = i as f64 / rate as f64;
            let env = (TAU * (1.1 + 0.2 * variant as f64) * t).sin().abs();
            let mut v = 0.0;
            for k in 1..=6 {
                v += (TAU * f0 * k as f64 * t).sin() / (k * k) as f64;
            }
            (0.35 * env * v) as f32
        })
        .collect();
    AudioClip::new(samples, rate).unwrap()
}

pub fn tone(freq: f64, n: usize, amp: f32) -> AudioClip {
    let samples = (0..n)
        .map(|i| amp * (TAU * freq * i as f64 / 16000.0).sin() as f32)
        .collect();
    AudioClip::new(samples, 16000).unwrap()
}

/// Ten classes ("left" is class 4), `clips_per_class` utterances each.
/// Returns the manifest CSV path.
pub fn toy_corpus(dir: &Path, clips_per_class: usize) -> PathBuf {
    let wav_dir = dir.join("wavs");
    std::fs::create_dir_all(&wav_dir).unwrap();
    let mut csv = String::from("sample_id,path,label\n");
    for class in 0..10 {
        for variant in 0..clips_per_class {
            let id = format!("c{class}_v{variant}");
            let path = wav_dir.join(format!("{id}.wav"));
            save_wav(&utterance(class, variant, 8000), &path).unwrap();
            csv.push_str(&format!("{id},{},{class}\n", path.display()));
        }
    }
    let manifest = dir.join("manifest.csv");
    std::fs::write(&manifest, csv).unwrap();
    manifest
}

pub fn pbsm_plan_file(dir: &Path, rate: f64, target: usize, seed: u64) -> PathBuf {
    let text = format!(
        r#"
trigger = "pbsm"
mode = "all_to_one"
targets = [{target}]
rates = [{rate}]
seed = {seed}

[pbsm]
semitones = 5
segment_ms = 100.0

[pbsm.signal]
frequency_hz = 6000.0
duration_ms = 100.0
amplitude_ratio = 0.5
"#
    );
    let path = dir.join(format!("plan_{rate}_{target}_{seed}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}

/// 1-D embedding fixture at positions {0, 1, 5, 6}.
pub fn line_embeddings(dir: &Path) -> PathBuf {
    let path = dir.join("line.csv");
    std::fs::write(&path, "id,v0\ns0,0\ns1,1\ns2,5\ns3,6\n").unwrap();
    path
}

pub fn dir_bytes(dir: &Path, skip: &[&str]) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_file() && !skip.contains(&name.as_str()) {
            map.insert(name, std::fs::read(&path).unwrap());
        }
    }
    map
}
