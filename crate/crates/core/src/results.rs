//! Versioned JSON-lines results file.
//!
//! The first line is `{"format":"crossrsa-results/1"}`; every following
//! non-empty line is one record tagged by `kind` (`rsa` or `ceiling`).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binio::FormatError;
use crate::error::{Error, Result};
use crate::neuro::Species;
use crate::nn::{LayerName, Rule};
use crate::stats::{BootstrapCI, NoiseCeiling};

pub const RESULTS_FORMAT: &str = "crossrsa-results/1";

/// Whether a value was computed by this pipeline or supplied from elsewhere
/// (for example literal values from another study).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordSource {
    Computed,
    Imported,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<BootstrapCI>,
    /// Rule label (`BP`, ..., `Random`) or an external model label.
    pub condition: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub layer: String,
    pub region: String,
    pub species: Species,
    pub stimulus_set: String,
    pub source: RecordSource,
    /// False when the scored checkpoint carried no FC weights.
    #[serde(default = "yes")]
    pub has_fc1: bool,
}

impl RsaResult {
    pub fn rule(&self) -> Option<Rule> {
        self.condition.parse().ok()
    }

    pub fn is_fc_layer(&self) -> bool {
        self.layer.parse::<LayerName>().is_ok_and(LayerName::is_fc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeilingRecord {
    pub region: String,
    pub species: Species,
    pub stimulus_set: String,
    #[serde(flatten)]
    pub ceiling: NoiseCeiling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ResultRecord {
    Rsa(RsaResult),
    Ceiling(CeilingRecord),
}

#[derive(Serialize, Deserialize)]
struct FormatLine {
    format: String,
}

pub fn encode_results(records: &[ResultRecord]) -> String {
    let mut out = serde_json::to_string(&FormatLine { format: RESULTS_FORMAT.into() }).expect("serialises");
    out.push('\n');
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialise"));
        out.push('\n');
    }
    out
}

pub fn decode_results(text: &str) -> Result<Vec<ResultRecord>, FormatError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or_else(|| FormatError::Header("empty results file".into()))?;
    let head: FormatLine =
        serde_json::from_str(first).map_err(|e| FormatError::Header(format!("line 1: {e}")))?;
    if head.format != RESULTS_FORMAT {
        return Err(FormatError::BadMagic { expected: RESULTS_FORMAT.into(), found: head.format });
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let rec: ResultRecord =
            serde_json::from_str(line).map_err(|e| FormatError::Schema(format!("line {}: {e}", i + 1)))?;
        if let ResultRecord::Rsa(r) = &rec {
            if !(r.rho.is_finite() && (-1.0..=1.0).contains(&r.rho)) {
                return Err(FormatError::Schema(format!("line {}: rho {} outside [-1, 1]", i + 1, r.rho)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_results(records: &[ResultRecord], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path.as_ref(), encode_results(records)).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRecord>> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
    Ok(decode_results(&text)?)
}

/// The RSA records of a file, in order.
pub fn rsa_records(records: &[ResultRecord]) -> Vec<&RsaResult> {
    records
        .iter()
        .filter_map(|r| match r {
            ResultRecord::Rsa(x) => Some(x),
            ResultRecord::Ceiling(_) => None,
        })
        .collect()
}
