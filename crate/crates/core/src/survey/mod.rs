//! Blind reader studies: survey assembly, response logs and their statistics.

pub mod gamma;
pub mod http;
pub mod service;
pub mod stats;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use service::{make_survey, SurveyDefinition, SurveyItem, SurveyStore};
pub use stats::{
    accuracy_breakdown, build_table, chi_squared_test, survey_stats, Accuracy, ChiSquared, ContingencyTable,
    StatsReport, TableMode,
};

/// A rater's answer. Stored in logs as 0, 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Judgment {
    Synthetic = 0,
    Real = 1,
    Indeterminable = 2,
}

impl Judgment {
    pub const ALL: [Judgment; 3] = [Judgment::Synthetic, Judgment::Real, Judgment::Indeterminable];

    pub fn code(self) -> u8 {
        self as u8
    }

    /// Parses the API spelling: `real`, `synthetic` or `indeterminable`.
    pub fn from_label(s: &str) -> Option<Judgment> {
        match s {
            "real" => Some(Judgment::Real),
            "synthetic" => Some(Judgment::Synthetic),
            "indeterminable" => Some(Judgment::Indeterminable),
            _ => None,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Judgment::Real => "real",
            Judgment::Synthetic => "synthetic",
            Judgment::Indeterminable => "indeterminable",
        }
    }
}

impl TryFrom<u8> for Judgment {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            0 => Ok(Judgment::Synthetic),
            1 => Ok(Judgment::Real),
            2 => Ok(Judgment::Indeterminable),
            _ => Err(format!("judgment must be 0, 1 or 2, got {v}")),
        }
    }
}

impl From<Judgment> for u8 {
    fn from(j: Judgment) -> u8 {
        j.code()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truth {
    Real,
    Synthetic,
}

/// One line of a response log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub survey_id: String,
    pub rater_id: String,
    pub item_id: String,
    pub judgment: Judgment,
    pub rationale: Option<String>,
    pub ts: String,
}

/// A response joined with the ground truth of its item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub survey_id: String,
    pub rater_id: String,
    pub item_id: String,
    pub truth: Truth,
    pub judgment: Judgment,
    pub rationale: Option<String>,
    pub timestamp: String,
}

impl SurveyRecord {
    /// Indeterminable answers are never correct.
    pub fn is_correct(&self) -> bool {
        matches!(
            (self.truth, self.judgment),
            (Truth::Real, Judgment::Real) | (Truth::Synthetic, Judgment::Synthetic)
        )
    }
}

pub type TruthMap = BTreeMap<String, Truth>;

pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<LogLine>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(path, format!("line {}", n + 1), e.to_string()))?;
        out.push(parsed);
    }
    Ok(out)
}

pub fn read_truth(path: impl AsRef<Path>) -> Result<TruthMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::malformed(path, "truth", e.to_string()))
}

pub fn write_truth(path: impl AsRef<Path>, truth: &TruthMap) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(truth).expect("truth serializes");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Joins log lines with ground truth. Every item must be known.
pub fn join_records(lines: &[LogLine], truth: &TruthMap) -> Result<Vec<SurveyRecord>> {
    lines
        .iter()
        .map(|l| {
            let t = truth.get(&l.item_id).ok_or_else(|| {
                Error::malformed("truth", "item_id", format!("no ground truth for item {}", l.item_id))
            })?;
            Ok(SurveyRecord {
                survey_id: l.survey_id.clone(),
                rater_id: l.rater_id.clone(),
                item_id: l.item_id.clone(),
                truth: *t,
                judgment: l.judgment,
                rationale: l.rationale.clone(),
                timestamp: l.ts.clone(),
            })
        })
        .collect()
}

/// Reads a response log and its truth file into records.
pub fn load_records(log: impl AsRef<Path>, truth: impl AsRef<Path>) -> Result<Vec<SurveyRecord>> {
    let truth_map = read_truth(truth)?;
    join_records(&read_log(log)?, &truth_map)
}
