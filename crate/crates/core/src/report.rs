//! Check records shared by the verification drivers.

use serde::{Deserialize, Serialize};

/// How a residual is compared against its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    /// pass iff `residual < tolerance`
    #[serde(rename = "lt")]
    Below,
    /// pass iff `residual <= tolerance`; used for exact-zero checks
    #[serde(rename = "le")]
    AtMost,
    /// pass iff `residual > tolerance`; used for non-vanishing guards
    #[serde(rename = "gt")]
    Above,
}

impl Comparison {
    pub fn passes(self, residual: f64, tolerance: f64) -> bool {
        match self {
            Comparison::Below => residual < tolerance,
            Comparison::AtMost => residual <= tolerance,
            Comparison::Above => residual > tolerance,
        }
    }
}

/// One named residual-vs-tolerance comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub anchor: String,
    pub residual: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CheckRecord {
    pub fn new(
        name: &str,
        anchor: &str,
        residual: f64,
        tolerance: f64,
        comparison: Comparison,
    ) -> Self {
        // NaN compares false either way, so it always fails
        Self {
            name: name.into(),
            anchor: anchor.into(),
            residual,
            tolerance,
            comparison,
            passed: comparison.passes(residual, tolerance),
            note: None,
        }
    }

    pub fn below(name: &str, anchor: &str, residual: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, residual, tolerance, Comparison::Below)
    }

    pub fn at_most(name: &str, anchor: &str, residual: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, residual, tolerance, Comparison::AtMost)
    }

    pub fn above(name: &str, anchor: &str, residual: f64, tolerance: f64) -> Self {
        Self::new(name, anchor, residual, tolerance, Comparison::Above)
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// A failing record for a computation that could not be carried out.
    pub fn failed(
        name: &str,
        anchor: &str,
        tolerance: f64,
        comparison: Comparison,
        why: impl Into<String>,
    ) -> Self {
        Self {
            name: name.into(),
            anchor: anchor.into(),
            residual: f64::NAN,
            tolerance,
            comparison,
            passed: false,
            note: Some(why.into()),
        }
    }

    /// Keeps the worse of two records for the same check.
    pub fn worst(self, other: Self) -> Self {
        if !other.passed && self.passed {
            return other;
        }
        if !self.passed && other.passed {
            return self;
        }
        let worse = match self.comparison {
            Comparison::Above => other.residual < self.residual,
            _ => other.residual > self.residual,
        };
        if worse || other.residual.is_nan() {
            other
        } else {
            self
        }
    }
}

/// Folds a stream of per-sample records for one check into a single record.
pub fn merge_records(records: impl IntoIterator<Item = CheckRecord>) -> Option<CheckRecord> {
    records.into_iter().reduce(CheckRecord::worst)
}
