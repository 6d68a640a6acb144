//! Knowledge base: historical plans, navigation records, landmark
//! descriptions and static web entries, retrieved by TF-IDF cosine.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::planner::{ExecutionLog, Plan};
use crate::text::tokenize;
use crate::world::VisibleObject;

pub const DEFAULT_K: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KnowledgeKind {
    HistoricalPlan,
    NavigationRecord,
    LandmarkDescription,
    WebInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub kind: KnowledgeKind,
    pub text: String,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Simulation tick at creation.
    #[serde(default)]
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEntry {
    pub entry: KnowledgeEntry,
    pub score: f64,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal line {line}: {source}")]
    Decode { line: usize, source: serde_json::Error },
    #[error("entry {0:?} has empty text")]
    EmptyText(String),
}

/// Entries keyed by id, optionally mirrored to an append-only NDJSON journal.
#[derive(Debug, Default)]
pub struct KnowledgeStore {
    entries: BTreeMap<String, KnowledgeEntry>,
    journal: Option<PathBuf>,
}

impl KnowledgeStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a journal and replays it; later lines replace
    /// earlier ones with the same id.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let e: KnowledgeEntry =
                    serde_json::from_str(&line).map_err(|source| KnowledgeError::Decode { line: i + 1, source })?;
                entries.insert(e.id.clone(), e);
            }
        }
        Ok(Self { entries, journal: Some(path) })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&KnowledgeEntry> {
        self.entries.get(id)
    }

    pub fn entries(&self) -> impl Iterator<Item = &KnowledgeEntry> {
        self.entries.values()
    }

    /// Inserts or replaces entries by id and appends them to the journal.
    pub fn ingest(&mut self, entries: impl IntoIterator<Item = KnowledgeEntry>) -> Result<(), KnowledgeError> {
        let entries: Vec<KnowledgeEntry> = entries.into_iter().collect();
        if let Some(e) = entries.iter().find(|e| e.text.trim().is_empty()) {
            return Err(KnowledgeError::EmptyText(e.id.clone()));
        }
        if let Some(path) = &self.journal {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut buf = String::new();
            for e in &entries {
                buf.push_str(&serde_json::to_string(e).expect("entry serializes"));
                buf.push('\n');
            }
            f.write_all(buf.as_bytes())?;
        }
        for e in entries {
            self.entries.insert(e.id.clone(), e);
        }
        Ok(())
    }

    /// Top-`k` entries by TF-IDF cosine against `instruction` plus
    /// `perception`. Zero-score entries are dropped; ties go to the smaller id.
    pub fn retrieve(&self, instruction: &str, perception: &str, k: usize) -> Vec<ScoredEntry> {
        let docs: Vec<(&KnowledgeEntry, BTreeMap<String, f64>)> =
            self.entries.values().map(|e| (e, term_counts(&entry_text(e)))).collect();
        let n = docs.len() as f64;
        let mut df: BTreeMap<&str, f64> = BTreeMap::new();
        for (_, tf) in &docs {
            for t in tf.keys() {
                *df.entry(t.as_str()).or_default() += 1.0;
            }
        }
        let idf = |t: &str| df.get(t).map(|d| ((1.0 + n) / (1.0 + d)).ln() + 1.0);
        let weigh = |tf: &BTreeMap<String, f64>| -> BTreeMap<String, f64> {
            tf.iter().filter_map(|(t, c)| idf(t).map(|w| (t.clone(), c * w))).collect()
        };
        let query = weigh(&term_counts(&format!("{instruction} {perception}")));
        let q_norm = norm(&query);
        if q_norm == 0.0 {
            return vec![];
        }
        let mut scored: Vec<ScoredEntry> = docs
            .iter()
            .filter_map(|(e, tf)| {
                let d = weigh(tf);
                let dot: f64 = query.iter().filter_map(|(t, w)| d.get(t).map(|v| v * w)).sum();
                let score = dot / (q_norm * norm(&d));
                (score > 0.0).then(|| ScoredEntry { entry: (*e).clone(), score })
            })
            .collect();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.entry.id.cmp(&b.entry.id)));
        scored.truncate(k);
        scored
    }

    /// Appends a historical_plan entry describing a finished mission.
    pub fn record_outcome(
        &mut self,
        instruction: &str,
        plan: Option<&Plan>,
        logs: &[ExecutionLog],
        succeeded: bool,
        tick: u64,
    ) -> Result<KnowledgeEntry, KnowledgeError> {
        let prefix = format!("hist-{tick:08}-");
        let n = self.entries.keys().filter(|id| id.starts_with(&prefix)).count();
        let steps = plan.map_or_else(|| "none".to_string(), Plan::summary);
        let text = format!(
            "instruction: {instruction}; plan: {steps}; outcome: {}; attempts: {}",
            if succeeded { "succeeded" } else { "failed" },
            logs.len().max(1)
        );
        let mut tags: BTreeSet<String> = plan
            .map(|p| p.steps.iter().map(|s| s.tool.clone()).collect())
            .unwrap_or_default();
        tags.insert(if succeeded { "succeeded" } else { "failed" }.to_string());
        let entry = KnowledgeEntry {
            id: format!("{prefix}{n}"),
            kind: KnowledgeKind::HistoricalPlan,
            text,
            tags: tags.into_iter().collect(),
            created_at: tick,
        };
        self.ingest([entry.clone()])?;
        Ok(entry)
    }
}

fn entry_text(e: &KnowledgeEntry) -> String {
    let mut s = e.text.clone();
    for t in &e.tags {
        s.push(' ');
        s.push_str(t);
    }
    s
}

fn term_counts(text: &str) -> BTreeMap<String, f64> {
    let mut tf = BTreeMap::new();
    for t in tokenize(text) {
        *tf.entry(t).or_insert(0.0) += 1.0;
    }
    tf
}

fn norm(v: &BTreeMap<String, f64>) -> f64 {
    v.values().map(|x| x * x).sum::<f64>().sqrt()
}

/// Text summary of what the camera currently sees: the visible objects' tags
/// in frame order.
pub fn perception_summary(objects: &[VisibleObject]) -> String {
    objects.iter().flat_map(|o| o.tags().map(str::to_string)).collect::<Vec<_>>().join(" ")
}
