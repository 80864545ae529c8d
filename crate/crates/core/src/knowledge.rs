//! Conservation-suggestion library and lexical retrieval.
//!
//! Records are loaded from a line-delimited JSON file (one flat object per
//! line). Retrieval scores records by weighted token overlap with a query
//! built from a participant profile.

use crate::types::Resource;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;
use thiserror::Error;

pub const APPLIANCE_WEIGHT: u32 = 3;
pub const BEHAVIOR_WEIGHT: u32 = 2;
pub const BODY_WEIGHT: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FrequencyReduction,
    DurationControl,
    TemperatureAdjustment,
    BehaviorModeChange,
    MonitoringFeedback,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::FrequencyReduction,
        Strategy::DurationControl,
        Strategy::TemperatureAdjustment,
        Strategy::BehaviorModeChange,
        Strategy::MonitoringFeedback,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::FrequencyReduction => "frequency_reduction",
            Strategy::DurationControl => "duration_control",
            Strategy::TemperatureAdjustment => "temperature_adjustment",
            Strategy::BehaviorModeChange => "behavior_mode_change",
            Strategy::MonitoringFeedback => "monitoring_feedback",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown strategy `{s}`"))
    }
}

/// One structured conservation tip.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuggestionRecord {
    pub id: String,
    pub behavior_type: String,
    pub appliance: String,
    pub strategy: Strategy,
    pub resource: Resource,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("cannot read library: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate record id `{id}` (line {line})")]
    DuplicateId { id: String, line: usize },
}

/// Lowercase alphanumeric tokens.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
}

fn token_set<'a, I: IntoIterator<Item = &'a str>>(fields: I) -> BTreeSet<String> {
    fields.into_iter().flat_map(tokens).collect()
}

#[derive(Debug, Clone)]
struct IndexedRecord {
    record: SuggestionRecord,
    appliance: BTreeSet<String>,
    behavior: BTreeSet<String>,
    body: BTreeSet<String>,
}

/// Immutable record library.
#[derive(Debug, Clone, Default)]
pub struct Library {
    records: Vec<IndexedRecord>,
    by_id: HashMap<String, usize>,
}

/// Suggestion library shipped with the crate.
pub const BUNDLED_LIBRARY: &str = include_str!("../data/library.jsonl");

impl Library {
    pub fn bundled() -> Library {
        Library::from_reader(BUNDLED_LIBRARY.as_bytes()).expect("bundled library parses")
    }

    pub fn from_records(records: Vec<SuggestionRecord>) -> Result<Self, KnowledgeError> {
        let mut lib = Library::default();
        for (i, record) in records.into_iter().enumerate() {
            lib.push(record, i + 1)?;
        }
        Ok(lib)
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, KnowledgeError> {
        let mut lib = Library::default();
        for (i, line) in reader.lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SuggestionRecord =
                serde_json::from_str(&line).map_err(|e| KnowledgeError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            lib.push(record, line_no)?;
        }
        Ok(lib)
    }

    pub fn from_str_lines(text: &str) -> Result<Self, KnowledgeError> {
        Self::from_reader(text.as_bytes())
    }

    fn push(&mut self, record: SuggestionRecord, line: usize) -> Result<(), KnowledgeError> {
        if record.id.trim().is_empty() {
            return Err(KnowledgeError::Parse { line, message: "empty id".into() });
        }
        if record.text.trim().is_empty() {
            return Err(KnowledgeError::Parse { line, message: "empty text".into() });
        }
        if self.by_id.contains_key(&record.id) {
            return Err(KnowledgeError::DuplicateId { id: record.id, line });
        }
        let indexed = IndexedRecord {
            appliance: token_set([record.appliance.as_str()]),
            behavior: token_set([record.behavior_type.as_str()]),
            body: token_set([record.text.as_str()]),
            record,
        };
        self.by_id.insert(indexed.record.id.clone(), self.records.len());
        self.records.push(indexed);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SuggestionRecord> {
        self.by_id.get(id).map(|&i| &self.records[i].record)
    }

    pub fn records(&self) -> impl Iterator<Item = &SuggestionRecord> {
        self.records.iter().map(|r| &r.record)
    }

    /// Relevance of `id` to `query`; `None` for an unknown id.
    pub fn score(&self, id: &str, query: &ProfileQuery) -> Option<u32> {
        let q = query.index();
        self.by_id.get(id).map(|&i| score_indexed(&self.records[i], &q))
    }

    /// Up to `k` records of `resource`, by descending score then ascending id.
    pub fn retrieve_top_k(
        &self,
        query: &ProfileQuery,
        resource: Resource,
        k: usize,
    ) -> Vec<ScoredRecord> {
        if k == 0 {
            return Vec::new();
        }
        let q = query.index();
        let mut scored: Vec<ScoredRecord> = self
            .records
            .iter()
            .filter(|r| r.record.resource == resource)
            .map(|r| ScoredRecord { score: score_indexed(r, &q), record: r.record.clone() })
            .collect();
        scored.sort_by(|a, b| b.score.cmp(&a.score).then_with(|| a.record.id.cmp(&b.record.id)));
        scored.truncate(k);
        scored
    }
}

/// Load a library file.
pub fn load_library(path: impl AsRef<Path>) -> Result<Library, KnowledgeError> {
    let file = std::fs::File::open(path)?;
    let lib = Library::from_reader(std::io::BufReader::new(file))?;
    log::info!("loaded {} suggestion records", lib.len());
    Ok(lib)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecord {
    pub score: u32,
    pub record: SuggestionRecord,
}

/// Retrieval query derived from a participant profile.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileQuery {
    pub appliances: Vec<String>,
    pub behavior_tags: Vec<String>,
    pub keywords: Vec<String>,
}

struct QueryIndex {
    appliance: BTreeSet<String>,
    behavior: BTreeSet<String>,
    keywords: BTreeSet<String>,
}

impl ProfileQuery {
    fn index(&self) -> QueryIndex {
        QueryIndex {
            appliance: token_set(self.appliances.iter().map(String::as_str)),
            behavior: token_set(self.behavior_tags.iter().map(String::as_str)),
            keywords: token_set(self.keywords.iter().map(String::as_str)),
        }
    }
}

fn score_indexed(r: &IndexedRecord, q: &QueryIndex) -> u32 {
    let shared = |a: &BTreeSet<String>, b: &BTreeSet<String>| a.intersection(b).count() as u32;
    APPLIANCE_WEIGHT * shared(&q.appliance, &r.appliance)
        + BEHAVIOR_WEIGHT * shared(&q.behavior, &r.behavior)
        + BODY_WEIGHT * shared(&q.keywords, &r.body)
}

/// Behaviour tag conventionally associated with an appliance name.
pub fn behavior_tag_for(appliance: &str) -> &'static str {
    let a = appliance.to_lowercase();
    if a.contains("air conditioner") || a.contains("fan") {
        "cooling"
    } else if a.contains("heater") || a.contains("blanket") {
        "heating"
    } else if a.contains("lamp") || a.contains("light") {
        "lighting"
    } else if a.contains("computer") || a.contains("laptop") || a.contains("monitor") {
        "computing"
    } else if a.contains("kettle") || a.contains("cooker") {
        "cooking"
    } else if a.contains("dryer") || a.contains("straightener") {
        "grooming"
    } else if a.contains("charger") {
        "charging"
    } else if a.contains("shower") {
        "showering"
    } else {
        "general"
    }
}
