//! Agreement scoring between a predicted annotation and a gold annotation of
//! the same token sequence.
//!
//! Comparison is per unit on tag bases only; ditto suffixes never influence
//! matching, and the reserved `UNK` tag always scores as a mismatch even if
//! the gold side carries it too. Reports merge additively so streams can be
//! scored in parallel and combined.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::AnnotatedStream;
use crate::mapping::UNKNOWN_TAG;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("streams carry different schemes: predicted {predicted}, gold {gold}")]
    SchemeMismatch { predicted: String, gold: String },
    #[error("token sequences diverge at unit {index}: predicted {predicted:?}, gold {gold:?}")]
    TokenMismatch {
        index: usize,
        predicted: String,
        gold: String,
    },
    #[error(
        "streams diverge at unit {index}: predicted has {predicted_len} units, gold has {gold_len}"
    )]
    LengthMismatch {
        index: usize,
        predicted_len: usize,
        gold_len: usize,
    },
}

/// Per-gold-tag tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TagScore {
    /// Units whose gold tag is this tag.
    pub support: u64,
    /// Of those, units whose predicted tag matched.
    pub correct: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EvaluationReport {
    pub total_units: u64,
    pub matches: u64,
    /// Gold tag base → tally.
    pub per_tag: BTreeMap<String, TagScore>,
    /// (gold tag base, predicted tag base) → count.
    pub confusion: BTreeMap<(String, String), u64>,
}

impl EvaluationReport {
    /// Fraction of units whose predicted tag matched; 1.0 for an empty
    /// report.
    pub fn accuracy(&self) -> f64 {
        if self.total_units == 0 {
            1.0
        } else {
            self.matches as f64 / self.total_units as f64
        }
    }

    /// Adds another report's tallies into this one.
    pub fn merge(&mut self, other: &EvaluationReport) {
        self.total_units += other.total_units;
        self.matches += other.matches;
        for (tag, score) in &other.per_tag {
            let e = self.per_tag.entry(tag.clone()).or_default();
            e.support += score.support;
            e.correct += score.correct;
        }
        for (key, n) in &other.confusion {
            *self.confusion.entry(key.clone()).or_insert(0) += n;
        }
    }
}

/// Scores `predicted` against `gold`. Both streams must carry the same
/// scheme and identical token sequences; the error names the first unit
/// where they diverge.
pub fn evaluate(
    predicted: &AnnotatedStream,
    gold: &AnnotatedStream,
) -> Result<EvaluationReport, EvalError> {
    if predicted.scheme != gold.scheme {
        return Err(EvalError::SchemeMismatch {
            predicted: predicted.scheme.to_string(),
            gold: gold.scheme.to_string(),
        });
    }
    let common = predicted.len().min(gold.len());
    for i in 0..common {
        if predicted.units[i].tokens != gold.units[i].tokens {
            return Err(EvalError::TokenMismatch {
                index: i,
                predicted: predicted.units[i].surface(),
                gold: gold.units[i].surface(),
            });
        }
    }
    if predicted.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            index: common,
            predicted_len: predicted.len(),
            gold_len: gold.len(),
        });
    }

    let mut report = EvaluationReport::default();
    for (p, g) in predicted.units.iter().zip(&gold.units) {
        let pred = p.tag.base.as_str();
        let gold_tag = g.tag.base.as_str();
        let matched = pred == gold_tag && pred != UNKNOWN_TAG;
        report.total_units += 1;
        if matched {
            report.matches += 1;
        }
        let e = report.per_tag.entry(gold_tag.to_string()).or_default();
        e.support += 1;
        if matched {
            e.correct += 1;
        }
        *report
            .confusion
            .entry((gold_tag.to_string(), pred.to_string()))
            .or_insert(0) += 1;
    }
    Ok(report)
}

/// Serializes a report: key-value summary, blank line, then the confusion
/// matrix as sorted TSV.
pub fn write_report(report: &EvaluationReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("total_units={}\n", report.total_units));
    out.push_str(&format!("matches={}\n", report.matches));
    out.push_str(&format!("accuracy={:.6}\n", report.accuracy()));
    out.push('\n');
    out.push_str("gold\tpredicted\tcount\n");
    for ((gold, pred), n) in &report.confusion {
        out.push_str(&format!("{gold}\t{pred}\t{n}\n"));
    }
    out
}
