//! Experience memory: hashed term-frequency embeddings, outcome feedback,
//! cosine retrieval and a line-delimited JSON store.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::decision::MetaAction;
use crate::error::MemoryError;
use crate::negotiation::Severity;

pub const DEFAULT_DIM: usize = 256;
const SCHEMA: &str = "codrive-memory";
const VERSION: u32 = 1;

pub const NEGATIVE_FEEDBACK: &str = "Your action has intensified the conflict; similar actions should be avoided.";
pub const IMPROVED_FEEDBACK: &str = "Your action has eased the conflict; similar actions are recommended.";
pub const MAINTAINED_FEEDBACK: &str = "Your action maintained safety; similar actions are acceptable.";
pub const HELD_FEEDBACK: &str = "Your action kept the conflict from intensifying; similar actions are acceptable.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Stamp {
    pub episode: u64,
    pub step: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: u64,
    pub scenario_text: String,
    pub conflict_text: String,
    pub action: MetaAction,
    pub feedback_text: String,
    pub valence: Valence,
    /// Unit-norm embedding of the scenario and conflict texts.
    pub embedding: Vec<f64>,
    pub created_at: Stamp,
}

/// Lowercase, punctuation to spaces, whitespace collapsed.
pub fn normalize(text: &str) -> String {
    let mapped: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() { c.to_ascii_lowercase() } else { ' ' })
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

// 64-bit FNV-1a; stable across platforms and toolchains.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Bucket a token lands in.
pub fn token_bucket(token: &str, dim: usize) -> usize {
    (fnv1a(token.as_bytes()) % dim as u64) as usize
}

pub fn embed(text: &str, dim: usize) -> Result<Vec<f64>, MemoryError> {
    let norm = normalize(text);
    if norm.is_empty() {
        return Err(MemoryError::EmptyText);
    }
    let mut v = vec![0.0; dim];
    for tok in norm.split(' ') {
        v[token_bucket(tok, dim)] += 1.0;
    }
    let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= len;
    }
    Ok(v)
}

/// Dot product; equals cosine similarity for unit vectors.
pub fn similarity(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn joined(scene: &str, conflict: &str) -> String {
    format!("{scene}\n{conflict}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
    dim: usize,
}

/// Append-only experience store.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryStore {
    dim: usize,
    records: Vec<MemoryRecord>,
}

impl MemoryStore {
    pub fn new(dim: usize) -> Self {
        Self { dim, records: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn records(&self) -> &[MemoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    fn next_id(&self) -> u64 {
        self.records.last().map_or(0, |r| r.id + 1)
    }

    pub fn append(
        &mut self,
        scenario_text: &str,
        conflict_text: &str,
        action: MetaAction,
        feedback_text: &str,
        valence: Valence,
        created_at: Stamp,
    ) -> Result<&MemoryRecord, MemoryError> {
        if feedback_text.trim().is_empty() {
            return Err(MemoryError::EmptyText);
        }
        let embedding = embed(&joined(scenario_text, conflict_text), self.dim)?;
        self.records.push(MemoryRecord {
            id: self.next_id(),
            scenario_text: scenario_text.to_string(),
            conflict_text: conflict_text.to_string(),
            action,
            feedback_text: feedback_text.to_string(),
            valence,
            embedding,
            created_at,
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Up to `k` records, most similar first, newer first on ties.
    pub fn retrieve(&self, scene: &str, conflict: &str, k: usize) -> Vec<(f64, &MemoryRecord)> {
        if k == 0 || self.records.is_empty() {
            return Vec::new();
        }
        let Ok(q) = embed(&joined(scene, conflict), self.dim) else { return Vec::new() };
        let mut scored: Vec<(f64, &MemoryRecord)> = self.records.iter().map(|r| (similarity(&q, &r.embedding), r)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.id.cmp(&a.1.id)));
        scored.truncate(k);
        scored
    }

    pub fn persist(&self, path: &Path) -> Result<(), MemoryError> {
        let tmp = path.with_extension("jsonl.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            let header = Header { schema: SCHEMA.to_string(), version: VERSION, dim: self.dim };
            serde_json::to_writer(&mut w, &header).map_err(std::io::Error::from)?;
            w.write_all(b"\n")?;
            for r in &self.records {
                serde_json::to_writer(&mut w, r).map_err(std::io::Error::from)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MemoryError> {
        let mut lines = BufReader::new(File::open(path)?).lines();
        let first = lines.next().ok_or_else(|| MemoryError::Header("file is empty".into()))??;
        let header: Header = serde_json::from_str(&first).map_err(|e| MemoryError::Header(e.to_string()))?;
        if header.schema != SCHEMA || header.version != VERSION {
            return Err(MemoryError::Header(format!("unsupported schema {} v{}", header.schema, header.version)));
        }
        if header.dim == 0 {
            return Err(MemoryError::Header("dimension must be positive".into()));
        }
        let mut store = Self::new(header.dim);
        for (index, line) in lines.enumerate() {
            let line = line?;
            let corrupt = |reason: String| MemoryError::Corrupt { index, reason };
            let r: MemoryRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
            if r.embedding.len() != header.dim {
                return Err(corrupt(format!("embedding has {} entries, expected {}", r.embedding.len(), header.dim)));
            }
            if store.records.last().is_some_and(|prev| r.id <= prev.id) {
                return Err(corrupt("ids are not increasing".into()));
            }
            store.records.push(r);
        }
        Ok(store)
    }

    /// Loads `path` if it exists, otherwise starts empty.
    pub fn open_or_new(path: &Path, dim: usize) -> Result<Self, MemoryError> {
        if path.exists() {
            let store = Self::load(path)?;
            if store.dim != dim {
                return Err(MemoryError::Dimension { expected: dim, found: store.dim });
            }
            Ok(store)
        } else {
            Ok(Self::new(dim))
        }
    }
}

/// Feedback for an action given the ego's worst severity when it was
/// chosen and at the end of its decision period.
pub fn feedback(before: Severity, after: Severity) -> (Valence, &'static str) {
    if after.rank() > before.rank() {
        (Valence::Negative, NEGATIVE_FEEDBACK)
    } else if after.rank() < before.rank() {
        (Valence::Positive, IMPROVED_FEEDBACK)
    } else if after == Severity::NoDanger {
        (Valence::Positive, MAINTAINED_FEEDBACK)
    } else {
        (Valence::Positive, HELD_FEEDBACK)
    }
}

pub fn augment<'a>(
    store: &'a mut MemoryStore,
    prev_scene: &str,
    prev_conflicts: &str,
    action: MetaAction,
    before: Severity,
    after: Severity,
    stamp: Stamp,
) -> Result<&'a MemoryRecord, MemoryError> {
    let (valence, text) = feedback(before, after);
    store.append(prev_scene, prev_conflicts, action, text, valence, stamp)
}

/// One-paragraph rendering for a prompt's experience section.
pub fn render_memory(r: &MemoryRecord) -> String {
    let flat = |s: &str| s.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join(" ");
    format!(
        "In the scene \"{}\" with negotiation \"{}\" the action was `{}`. Feedback: {}",
        flat(&r.scenario_text),
        flat(&r.conflict_text),
        r.action.name(),
        r.feedback_text
    )
}
