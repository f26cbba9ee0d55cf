//! Timbre trigger: pick maximally separated reference timbres from speaker
//! embeddings, then convert victim audio toward each of them. Embedding
//! extraction and neural conversion are external tools; this module consumes
//! their file formats and ships a deterministic builtin converter so the
//! whole pipeline runs offline.

mod convert;

pub use convert::{convert_voice, ConversionBackend};

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One embedding vector per speaker, all of a common dimension.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub speaker_ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingSet {
    pub fn new(speaker_ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if speaker_ids.len() != vectors.len() {
            return Err(Error::InvalidInput(
                "ids and vectors differ in length".into(),
            ));
        }
        if speaker_ids.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 speakers, got {}",
                speaker_ids.len()
            )));
        }
        let mut seen = HashSet::new();
        for id in &speaker_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Format(format!("duplicate speaker id `{id}`")));
            }
        }
        let d = vectors[0].len();
        if d == 0 {
            return Err(Error::InvalidInput(
                "embedding dimension must be >= 1".into(),
            ));
        }
        for (id, v) in speaker_ids.iter().zip(&vectors) {
            if v.len() != d {
                return Err(Error::Format(format!(
                    "speaker `{id}` has dimension {}, expected {d}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!(
                    "speaker `{id}` has non-finite values"
                )));
            }
        }
        Ok(Self {
            speaker_ids,
            vectors,
        })
    }

    pub fn num_speakers(&self) -> usize {
        self.speaker_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

/// Load embeddings from CSV with header `id,v0,...,v{d-1}`.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.is_empty() || &headers[0] != "id" {
        return Err(Error::Format(format!(
            "{}: first column must be `id`, got `{}`",
            path.display(),
            headers.iter().next().unwrap_or("")
        )));
    }
    for (i, name) in headers.iter().skip(1).enumerate() {
        if name != format!("v{i}") {
            return Err(Error::Format(format!(
                "{}: column {} must be `v{i}`, got `{name}`",
                path.display(),
                i + 1
            )));
        }
    }

    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let id = record.get(0).unwrap_or("").to_string();
        let mut v = Vec::with_capacity(record.len().saturating_sub(1));
        for field in record.iter().skip(1) {
            let x: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: non-numeric value `{field}` for speaker `{id}`",
                    path.display()
                ))
            })?;
            v.push(x);
        }
        ids.push(id);
        vectors.push(v);
    }
    EmbeddingSet::new(ids, vectors)
}

/// Pairwise l2 distances between speakers: symmetric, zero diagonal.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    pub entries: Vec<Vec<f64>>,
    pub speaker_ids: Vec<String>,
}

impl SimilarityMatrix {
    pub fn size(&self) -> usize {
        self.speaker_ids.len()
    }

    /// Check the metric-distance invariants: symmetry, zero diagonal,
    /// non-negative entries, and the triangle inequality within 1e-9.
    pub fn validate(&self) -> Result<()> {
        let k = self.size();
        for i in 0..k {
            if self.entries[i].len() != k {
                return Err(Error::InvalidInput(format!("row {i} is not length {k}")));
            }
            if self.entries[i][i] != 0.0 {
                return Err(Error::InvalidInput(format!("nonzero diagonal at {i}")));
            }
            for j in 0..k {
                let d = self.entries[i][j];
                if !(d.is_finite() && d >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "bad distance at ({i},{j}): {d}"
                    )));
                }
                if d != self.entries[j][i] {
                    return Err(Error::InvalidInput(format!("asymmetry at ({i},{j})")));
                }
            }
        }
        for i in 0..k {
            for j in 0..k {
                for l in 0..k {
                    if self.entries[i][j] > self.entries[i][l] + self.entries[l][j] + 1e-9 {
                        return Err(Error::InvalidInput(format!(
                            "triangle inequality violated at ({i},{j}) via {l}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "id")?;
        for id in &self.speaker_ids {
            write!(out, ",{id}")?;
        }
        writeln!(out)?;
        for (i, id) in self.speaker_ids.iter().enumerate() {
            write!(out, "{id}")?;
            for j in 0..self.size() {
                write!(out, ",{}", self.entries[i][j])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn similarity_matrix(embeddings: &EmbeddingSet) -> SimilarityMatrix {
    let k = embeddings.num_speakers();
    let mut entries = vec![vec![0.0f64; k]; k];
    for (i, a) in embeddings.vectors.iter().enumerate() {
        for (j, b) in embeddings.vectors.iter().enumerate().skip(i + 1) {
            let d = l2_distance(a, b);
            entries[i][j] = d;
            entries[j][i] = d;
        }
    }
    SimilarityMatrix {
        entries,
        speaker_ids: embeddings.speaker_ids.clone(),
    }
}

fn l2_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// How "distance from the selected set" is scored during greedy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionObjective {
    /// Farthest-first traversal: maximize the minimum distance to the set.
    #[default]
    MaxMin,
    /// Maximize the total distance to the set.
    MaxSum,
}

/// Greedily pick `m` well-separated speakers: seed with the globally most
/// distant pair, then repeatedly add the candidate scoring highest against
/// the current set. Ties break toward the smaller index. Returns ids in
/// selection order.
pub fn greedy_select(sim: &SimilarityMatrix, m: usize) -> Result<Vec<String>> {
    greedy_select_with(sim, m, SelectionObjective::MaxMin)
}

pub fn greedy_select_with(
    sim: &SimilarityMatrix,
    m: usize,
    objective: SelectionObjective,
) -> Result<Vec<String>> {
    let k = sim.size();
    if m < 2 || m > k {
        return Err(Error::InvalidInput(format!(
            "selection size must satisfy 2 <= m <= {k}, got {m}"
        )));
    }

    // Seed: the most distant pair, lexicographically first on ties.
    let mut seed = (0usize, 1usize);
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            if sim.entries[i][j] > best {
                best = sim.entries[i][j];
                seed = (i, j);
            }
        }
    }

    let mut selected = vec![seed.0, seed.1];
    let mut in_set = vec![false; k];
    in_set[seed.0] = true;
    in_set[seed.1] = true;

    // Incremental per-candidate score against the selected set.
    let mut score: Vec<f64> = (0..k)
        .map(|c| match objective {
            SelectionObjective::MaxMin => sim.entries[c][seed.0].min(sim.entries[c][seed.1]),
            SelectionObjective::MaxSum => sim.entries[c][seed.0] + sim.entries[c][seed.1],
        })
        .collect();

    while selected.len() < m {
        let mut pick = None;
        let mut pick_score = f64::NEG_INFINITY;
        for c in 0..k {
            if !in_set[c] && score[c] > pick_score {
                pick_score = score[c];
                pick = Some(c);
            }
        }
        let pick = pick.expect("m <= k leaves at least one candidate");
        in_set[pick] = true;
        selected.push(pick);
        for (c, s) in score.iter_mut().enumerate() {
            match objective {
                SelectionObjective::MaxMin => *s = s.min(sim.entries[c][pick]),
                SelectionObjective::MaxSum => *s += sim.entries[c][pick],
            }
        }
    }

    Ok(selected
        .into_iter()
        .map(|i| sim.speaker_ids[i].clone())
        .collect())
}

/// Parameters for one timbre conversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimbreTransform {
    pub timbre_id: String,
    /// Spectral-envelope frequency-warp factor, within [0.7, 1.4].
    pub warp_alpha: f64,
    pub pitch_offset_semitones: i32,
    pub backend: ConversionBackend,
}

pub const WARP_ALPHA_RANGE: (f64, f64) = (0.7, 1.4);

impl TimbreTransform {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = WARP_ALPHA_RANGE;
        if !(self.warp_alpha >= lo && self.warp_alpha <= hi) {
            return Err(Error::InvalidInput(format!(
                "warp_alpha {} outside [{lo}, {hi}]",
                self.warp_alpha
            )));
        }
        Ok(())
    }
}

/// A `(warp_alpha, pitch_offset)` slot from a transform table.
pub type TransformSlot = (f64, i32);

/// Load a transform table: CSV with header `warp_alpha,pitch_offset`.
pub fn load_transform_table(path: impl AsRef<Path>) -> Result<Vec<TransformSlot>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() != 2 || &headers[0] != "warp_alpha" || &headers[1] != "pitch_offset" {
        return Err(Error::Format(format!(
            "{}: expected header `warp_alpha,pitch_offset`",
            path.display()
        )));
    }
    let mut slots = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        let alpha: f64 = record[0].parse().map_err(|_| {
            Error::Format(format!(
                "{}: bad warp_alpha `{}`",
                path.display(),
                &record[0]
            ))
        })?;
        let offset: i32 = record[1].parse().map_err(|_| {
            Error::Format(format!(
                "{}: bad pitch_offset `{}`",
                path.display(),
                &record[1]
            ))
        })?;
        slots.push((alpha, offset));
    }
    Ok(slots)
}

/// One distinct transform per selected timbre. Defaults spread `warp_alpha`
/// evenly over [0.8, 1.25] and alternate the pitch offset between -2 and +2.
pub fn assign_transforms(
    selected: &[String],
    slots: Option<&[TransformSlot]>,
    backend: &ConversionBackend,
) -> Result<Vec<TimbreTransform>> {
    if selected.is_empty() {
        return Err(Error::InvalidInput("no timbres selected".into()));
    }
    let m = selected.len();
    let slots: Vec<TransformSlot> = match slots {
        Some(table) => {
            if table.len() < m {
                return Err(Error::Config(format!(
                    "transform table has {} slots but {m} timbres were selected",
                    table.len()
                )));
            }
            table[..m].to_vec()
        }
        None => (0..m)
            .map(|i| {
                let alpha = if m == 1 {
                    0.8
                } else {
                    0.8 + i as f64 * (1.25 - 0.8) / (m as f64 - 1.0)
                };
                let offset = if i % 2 == 0 { -2 } else { 2 };
                (alpha, offset)
            })
            .collect(),
    };

    let mut seen = HashSet::new();
    for &(alpha, offset) in &slots {
        if !seen.insert((alpha.to_bits(), offset)) {
            return Err(Error::Config(format!(
                "duplicate transform slot (warp_alpha={alpha}, pitch_offset={offset})"
            )));
        }
    }

    let transforms: Vec<TimbreTransform> = selected
        .iter()
        .zip(&slots)
        .map(|(id, &(alpha, offset))| TimbreTransform {
            timbre_id: id.clone(),
            warp_alpha: alpha,
            pitch_offset_semitones: offset,
            backend: backend.clone(),
        })
        .collect();
    for t in &transforms {
        t.validate()?;
    }
    Ok(transforms)
}
