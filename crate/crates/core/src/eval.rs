//! Metrics over externally produced prediction files: benign accuracy and
//! attack success rate, overall, per target (multi-backdoor) and per
//! ground-truth class (all-to-all). Every fraction is kept as an exact
//! numerator/denominator pair.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poison::{AttackMode, DatasetManifest, PoisonPlan, PoisonedManifest, Subset};

/// `sample_id -> predicted label` read from CSV `sample_id,predicted_label`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionFile {
    rows: BTreeMap<String, usize>,
}

impl PredictionFile {
    pub fn from_rows(rows: impl IntoIterator<Item = (String, usize)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (id, label) in rows {
            if map.insert(id.clone(), label).is_some() {
                return Err(Error::Format(format!("duplicate prediction for `{id}`")));
            }
        }
        Ok(Self { rows: map })
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.rows.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionFile> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().ne(["sample_id", "predicted_label"]) {
        return Err(Error::Format(format!(
            "{}: expected header `sample_id,predicted_label`",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let label: usize = record[1].parse().map_err(|_| {
            Error::Format(format!("{}: bad label `{}`", path.display(), &record[1]))
        })?;
        rows.push((record[0].to_string(), label));
    }
    PredictionFile::from_rows(rows)
}

/// An exact fraction with its value derived, never stored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub numerator: u64,
    pub denominator: u64,
}

impl Ratio {
    pub fn new(numerator: u64, denominator: u64) -> Self {
        debug_assert!(numerator <= denominator || denominator == 0);
        Self {
            numerator,
            denominator,
        }
    }

    pub fn value(&self) -> f64 {
        if self.denominator == 0 {
            0.0
        } else {
            self.numerator as f64 / self.denominator as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub benign_accuracy: Option<Ratio>,
    pub asr_overall: Option<Ratio>,
    /// Per-target fractions (all-to-one / multi-backdoor).
    pub asr_per_target: BTreeMap<usize, Ratio>,
    /// Per-ground-truth-class fractions (all-to-all).
    pub asr_per_class: BTreeMap<usize, Ratio>,
}

/// Fraction of manifest entries predicted as their label. Every manifest id
/// must be present in the predictions.
pub fn benign_accuracy(preds: &PredictionFile, manifest: &DatasetManifest) -> Result<Ratio> {
    let mut missing = Vec::new();
    let mut hits = 0u64;
    for entry in &manifest.entries {
        match preds.get(&entry.sample_id) {
            Some(label) => {
                if label == entry.label {
                    hits += 1;
                }
            }
            None => missing.push(entry.sample_id.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePredictions { missing });
    }
    Ok(Ratio::new(hits, manifest.entries.len() as u64))
}

/// Attack success over a built attack test set. Rows flagged
/// `excluded_from_asr` contribute to neither numerator nor denominator.
pub fn attack_success_rate(
    preds: &PredictionFile,
    attack_manifest: &PoisonedManifest,
    plan: &PoisonPlan,
) -> Result<MetricsReport> {
    let mut missing = Vec::new();
    let mut overall = (0u64, 0u64);
    let mut per_target: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    let mut per_class: BTreeMap<usize, (u64, u64)> = BTreeMap::new();

    for entry in &attack_manifest.entries {
        let backdoor = match entry.subset {
            Subset::Poisoned(i) => i,
            Subset::Benign => continue,
        };
        if entry.excluded_from_asr {
            continue;
        }
        let predicted = match preds.get(&entry.sample_id) {
            Some(p) => p,
            None => {
                missing.push(entry.sample_id.clone());
                continue;
            }
        };

        match plan.mode {
            AttackMode::AllToOne | AttackMode::CleanLabel => {
                let target = plan.targets[backdoor - 1];
                let hit = (predicted == target) as u64;
                overall.0 += hit;
                overall.1 += 1;
                let t = per_target.entry(target).or_insert((0, 0));
                t.0 += hit;
                t.1 += 1;
            }
            AttackMode::AllToAll => {
                let expected = (entry.ground_truth + 1) % attack_manifest.num_classes;
                let hit = (predicted == expected) as u64;
                overall.0 += hit;
                overall.1 += 1;
                let c = per_class.entry(entry.ground_truth).or_insert((0, 0));
                c.0 += hit;
                c.1 += 1;
            }
        }
    }
    if !missing.is_empty() {
        return Err(Error::IncompletePredictions { missing });
    }

    Ok(MetricsReport {
        benign_accuracy: None,
        asr_overall: Some(Ratio::new(overall.0, overall.1)),
        asr_per_target: per_target
            .into_iter()
            .map(|(t, (n, d))| (t, Ratio::new(n, d)))
            .collect(),
        asr_per_class: per_class
            .into_iter()
            .map(|(c, (n, d))| (c, Ratio::new(n, d)))
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Csv,
    JsonLines,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::JsonLines),
            other => Err(Error::InvalidInput(format!(
                "unknown report format `{other}`"
            ))),
        }
    }
}

/// Render with stable field ordering; fractions carry 4 decimals plus their
/// raw counts.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let mut rows: Vec<(String, Ratio)> = Vec::new();
    if let Some(ba) = report.benign_accuracy {
        rows.push(("benign_accuracy".into(), ba));
    }
    if let Some(asr) = report.asr_overall {
        rows.push(("asr_overall".into(), asr));
    }
    for (target, r) in &report.asr_per_target {
        rows.push((format!("asr_target_{target}"), *r));
    }
    for (class, r) in &report.asr_per_class {
        rows.push((format!("asr_class_{class}"), *r));
    }

    match format {
        ReportFormat::Text => rows
            .iter()
            .map(|(name, r)| {
                format!(
                    "{name} {:.4} ({}/{})\n",
                    r.value(),
                    r.numerator,
                    r.denominator
                )
            })
            .collect(),
        ReportFormat::Csv => {
            let mut out = String::from("metric,value,numerator,denominator\n");
            for (name, r) in &rows {
                out.push_str(&format!(
                    "{name},{:.4},{},{}\n",
                    r.value(),
                    r.numerator,
                    r.denominator
                ));
            }
            out
        }
        ReportFormat::JsonLines => {
            let mut out = String::new();
            if let Some(ba) = report.benign_accuracy {
                out.push_str(&json_line("benign_accuracy", None, ba));
            }
            if let Some(asr) = report.asr_overall {
                out.push_str(&json_line("asr_overall", None, asr));
            }
            for (target, r) in &report.asr_per_target {
                out.push_str(&json_line("asr_target", Some(("target", *target)), *r));
            }
            for (class, r) in &report.asr_per_class {
                out.push_str(&json_line("asr_class", Some(("class", *class)), *r));
            }
            out
        }
    }
}

fn json_line(metric: &str, key: Option<(&str, usize)>, r: Ratio) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("metric".into(), metric.into());
    if let Some((name, value)) = key {
        obj.insert(name.into(), value.into());
    }
    obj.insert("numerator".into(), r.numerator.into());
    obj.insert("denominator".into(), r.denominator.into());
    obj.insert("value".into(), r.value().into());
    format!("{}\n", serde_json::Value::Object(obj))
}

/// Rebuild a report from its json-lines rendering.
pub fn parse_json_lines(text: &str) -> Result<MetricsReport> {
    let mut report = MetricsReport::default();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("bad json line: {e}")))?;
        let ratio = Ratio::new(
            v["numerator"]
                .as_u64()
                .ok_or_else(|| Error::Format("missing numerator".into()))?,
            v["denominator"]
                .as_u64()
                .ok_or_else(|| Error::Format("missing denominator".into()))?,
        );
        match v["metric"].as_str() {
            Some("benign_accuracy") => report.benign_accuracy = Some(ratio),
            Some("asr_overall") => report.asr_overall = Some(ratio),
            Some("asr_target") => {
                let t = v["target"]
                    .as_u64()
                    .ok_or_else(|| Error::Format("missing target".into()))?;
                report.asr_per_target.insert(t as usize, ratio);
            }
            Some("asr_class") => {
                let c = v["class"]
                    .as_u64()
                    .ok_or_else(|| Error::Format("missing class".into()))?;
                report.asr_per_class.insert(c as usize, ratio);
            }
            other => {
                return Err(Error::Format(format!("unknown metric {other:?}")));
            }
        }
    }
    Ok(report)
}
