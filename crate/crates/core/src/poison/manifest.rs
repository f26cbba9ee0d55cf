//! Corpus manifests: the benign input listing and the poisoned output
//! listing with per-row provenance.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// One labeled source sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub path: PathBuf,
    pub label: usize,
}

/// A labeled audio corpus. Labels are dense class indices in
/// `0..num_classes`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub num_classes: usize,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>, num_classes: usize) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidInput("manifest has no entries".into()));
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::Format(format!(
                    "duplicate sample id `{}`",
                    e.sample_id
                )));
            }
            if e.label >= num_classes {
                return Err(Error::Format(format!(
                    "sample `{}` has label {} but num_classes is {num_classes}",
                    e.sample_id, e.label
                )));
            }
        }
        Ok(Self {
            entries,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Load a manifest from CSV `sample_id,path,label`. The class count is taken
/// as `max(label) + 1`.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    let expect = ["sample_id", "path", "label"];
    if headers.iter().ne(expect) {
        return Err(Error::Format(format!(
            "{}: expected header `sample_id,path,label`",
            path.display()
        )));
    }
    let mut entries = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let label: usize = record[2].parse().map_err(|_| {
            Error::Format(format!("{}: bad label `{}`", path.display(), &record[2]))
        })?;
        entries.push(ManifestEntry {
            sample_id: record[0].to_string(),
            path: PathBuf::from(&record[1]),
            label,
        });
    }
    let num_classes = entries.iter().map(|e| e.label).max().map_or(0, |m| m + 1);
    DatasetManifest::new(entries, num_classes)
}

/// Which partition a row belongs to. Poisoned subsets are 1-based to match
/// the `__p<i>` file suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    Benign,
    Poisoned(usize),
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Subset::Benign => write!(f, "benign"),
            Subset::Poisoned(i) => write!(f, "poisoned_{i}"),
        }
    }
}

impl std::str::FromStr for Subset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "benign" {
            return Ok(Subset::Benign);
        }
        if let Some(i) = s.strip_prefix("poisoned_") {
            let i: usize = i
                .parse()
                .map_err(|_| Error::Format(format!("bad subset `{s}`")))?;
            return Ok(Subset::Poisoned(i));
        }
        Err(Error::Format(format!("bad subset `{s}`")))
    }
}

/// One row of a built dataset: where the file lives, the label it will be
/// trained or evaluated with, and how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedEntry {
    pub sample_id: String,
    pub path: PathBuf,
    /// Assigned label (the training/expected label after poisoning).
    pub label: usize,
    pub ground_truth: usize,
    pub subset: Subset,
    pub excluded_from_asr: bool,
    /// Applied trigger parameters as JSON, empty for benign rows.
    pub trigger_meta: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoisonedManifest {
    pub entries: Vec<PoisonedEntry>,
    pub num_classes: usize,
    /// Sampling provenance, recorded as a `#` comment line in the CSV.
    pub rng_algorithm: String,
    pub seed: u64,
}

impl PoisonedManifest {
    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "sample_id",
                "path",
                "label",
                "ground_truth",
                "subset",
                "excluded_from_asr",
                "trigger_meta_json",
            ])
            .map_err(|e| Error::Format(e.to_string()))?;
        for e in &self.entries {
            let meta = e
                .trigger_meta
                .as_ref()
                .map(|m| m.to_string())
                .unwrap_or_default();
            writer
                .write_record([
                    e.sample_id.as_str(),
                    &e.path.to_string_lossy(),
                    &e.label.to_string(),
                    &e.ground_truth.to_string(),
                    &e.subset.to_string(),
                    if e.excluded_from_asr { "true" } else { "false" },
                    &meta,
                ])
                .map_err(|e| Error::Format(e.to_string()))?;
        }
        let body = writer
            .into_inner()
            .map_err(|e| Error::Format(e.to_string()))?;
        let mut out = format!(
            "# rng_algorithm={} seed={} num_classes={}\n",
            self.rng_algorithm, self.seed, self.num_classes
        )
        .into_bytes();
        out.extend_from_slice(&body);
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn load_poisoned_manifest(path: impl AsRef<Path>) -> Result<PoisonedManifest> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;

    let mut rng_algorithm = String::new();
    let mut seed = 0u64;
    let mut num_classes_hint = None;
    let mut body = String::new();
    for line in raw.lines() {
        if let Some(comment) = line.strip_prefix('#') {
            for token in comment.split_whitespace() {
                if let Some(v) = token.strip_prefix("rng_algorithm=") {
                    rng_algorithm = v.to_string();
                } else if let Some(v) = token.strip_prefix("seed=") {
                    seed = v.parse().unwrap_or(0);
                } else if let Some(v) = token.strip_prefix("num_classes=") {
                    num_classes_hint = v.parse().ok();
                }
            }
        } else {
            body.push_str(line);
            body.push('\n');
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if record.len() != 7 {
            return Err(Error::Format(format!(
                "{}: expected 7 columns, got {}",
                path.display(),
                record.len()
            )));
        }
        let sample_id = record[0].to_string();
        if !seen.insert(sample_id.clone()) {
            return Err(Error::Format(format!(
                "{}: duplicate sample id `{sample_id}`",
                path.display()
            )));
        }
        let parse_usize = |field: &str, what: &str| -> Result<usize> {
            field
                .parse()
                .map_err(|_| Error::Format(format!("{}: bad {what} `{field}`", path.display())))
        };
        let trigger_meta = if record[6].is_empty() {
            None
        } else {
            Some(serde_json::from_str(&record[6]).map_err(|e| {
                Error::Format(format!("{}: bad trigger_meta_json: {e}", path.display()))
            })?)
        };
        entries.push(PoisonedEntry {
            sample_id,
            path: PathBuf::from(&record[1]),
            label: parse_usize(&record[2], "label")?,
            ground_truth: parse_usize(&record[3], "ground_truth")?,
            subset: record[4].parse()?,
            excluded_from_asr: match &record[5] {
                "true" => true,
                "false" => false,
                other => {
                    return Err(Error::Format(format!(
                        "{}: bad excluded_from_asr `{other}`",
                        path.display()
                    )))
                }
            },
            trigger_meta,
        });
    }
    let num_classes = num_classes_hint.unwrap_or_else(|| {
        entries
            .iter()
            .map(|e| e.label.max(e.ground_truth))
            .max()
            .map_or(0, |m| m + 1)
    });
    Ok(PoisonedManifest {
        entries,
        num_classes,
        rng_algorithm,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_load_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        std::fs::write(&path, "sample_id,path,label\na,/x/a.wav,0\nb,/x/b.wav,2\n").unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.num_classes, 3);

        std::fs::write(&path, "sample_id,path,label\na,/x/a.wav,0\na,/x/b.wav,1\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Format(_))));

        std::fs::write(&path, "id,file,class\na,/x/a.wav,0\n").unwrap();
        assert!(matches!(load_manifest(&path), Err(Error::Format(_))));
    }

    #[test]
    fn subset_display_round_trip() {
        for s in [Subset::Benign, Subset::Poisoned(1), Subset::Poisoned(12)] {
            let text = s.to_string();
            assert_eq!(text.parse::<Subset>().unwrap(), s);
        }
        assert!("poisoned_".parse::<Subset>().is_err());
        assert!("garbage".parse::<Subset>().is_err());
    }

    #[test]
    fn poisoned_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let m = PoisonedManifest {
            entries: vec![
                PoisonedEntry {
                    sample_id: "a".into(),
                    path: "/x/a.wav".into(),
                    label: 0,
                    ground_truth: 0,
                    subset: Subset::Benign,
                    excluded_from_asr: false,
                    trigger_meta: None,
                },
                PoisonedEntry {
                    sample_id: "b__p1".into(),
                    path: "/out/b__p1.wav".into(),
                    label: 4,
                    ground_truth: 1,
                    subset: Subset::Poisoned(1),
                    excluded_from_asr: true,
                    trigger_meta: Some(serde_json::json!({"trigger": "pbsm", "semitones": 5})),
                },
            ],
            num_classes: 10,
            rng_algorithm: "chacha8".into(),
            seed: 42,
        };
        m.save_csv(&path).unwrap();
        let loaded = load_poisoned_manifest(&path).unwrap();
        assert_eq!(loaded, m);
    }
}
