//! Metric suite: BLEU with bootstrap confidence intervals, fact-level
//! content-selection and hallucination scoring, fact-count breakdowns,
//! fact-density statistics, and preference-vote statistics.

mod bleu;
mod prf;
mod stats;

use std::collections::BTreeSet;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use bleu::{
    bleu_by_fact_count, bootstrap_ci, corpus_bleu, corpus_bleu_n, sentence_bleu, FactCountRow,
};
pub use prf::{content_prf, hallucination_prf, Prf};
pub use stats::{
    aggregate_preferences, chi_square_one_way, regularized_gamma_q, PreferenceItem,
    PreferenceSummary,
};

use crate::error::{Error, Result};

/// One expressed fact in a manual annotation: which slot, and whether the
/// expressed value matches the structured input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpressedFact {
    pub slot: String,
    pub correct: bool,
}

/// Manual annotation of one system output: the fact slots it expresses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactMentionAnnotation {
    pub id: u64,
    pub system: String,
    pub expressed: Vec<ExpressedFact>,
}

impl FactMentionAnnotation {
    /// Expressed slots as a set (identity is the slot name).
    pub fn expressed_slots(&self) -> BTreeSet<String> {
        self.expressed.iter().map(|e| e.slot.clone()).collect()
    }

    pub fn expressed_pairs(&self) -> Vec<(String, bool)> {
        self.expressed
            .iter()
            .map(|e| (e.slot.clone(), e.correct))
            .collect()
    }
}

/// Read annotations from JSON lines, rejecting duplicate slots within one
/// annotation (the expressed set is a true set).
pub fn read_annotations(path: &Path) -> Result<Vec<FactMentionAnnotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let ann: FactMentionAnnotation = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, lineno + 1, format!("bad annotation: {e}")))?;
        let mut seen = BTreeSet::new();
        for e in &ann.expressed {
            if !seen.insert(e.slot.as_str()) {
                return Err(Error::data(
                    path,
                    lineno + 1,
                    format!("duplicate expressed slot {}", e.slot),
                ));
            }
        }
        out.push(ann);
    }
    Ok(out)
}

/// Read preference items from JSON lines.
pub fn read_preferences(path: &Path) -> Result<Vec<PreferenceItem>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let item: PreferenceItem = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, lineno + 1, format!("bad preference item: {e}")))?;
        out.push(item);
    }
    Ok(out)
}

/// Mean expressed-fact count and mean hypothesis token length over an
/// annotated sample. An empty sample is an error, not a zero.
pub fn fact_density(
    annotations: &[FactMentionAnnotation],
    hypotheses: &[Vec<String>],
) -> Result<(f64, f64)> {
    if annotations.is_empty() || annotations.len() != hypotheses.len() {
        return Err(Error::Invalid(format!(
            "need a nonempty aligned sample ({} annotations, {} hypotheses)",
            annotations.len(),
            hypotheses.len()
        )));
    }
    let n = annotations.len() as f64;
    let facts: usize = annotations.iter().map(|a| a.expressed.len()).sum();
    let tokens: usize = hypotheses.iter().map(|h| h.len()).sum();
    Ok((facts as f64 / n, tokens as f64 / n))
}

/// Per-system metric bundle written by the eval command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    pub instances: usize,
    /// Corpus BLEU on the 0-100 scale.
    pub bleu: f64,
    /// 95% bootstrap interval, widened if needed to contain the point
    /// estimate.
    pub bleu_ci: (f64, f64),
    pub bootstrap_samples: usize,
    pub seed: u64,
    /// Content selection against reference-expressed facts, when
    /// annotations for both the system and the reference are available.
    pub content: Option<Prf>,
    /// Hallucination view against the structured input facts.
    pub hallucination: Option<Prf>,
    pub mean_facts_per_sentence: Option<f64>,
    pub mean_sentence_length: Option<f64>,
    pub by_fact_count: Vec<FactCountRow>,
}

impl EvalReport {
    /// Clamp the interval so it contains the point estimate (percentile
    /// intervals on tiny corpora can otherwise exclude it).
    pub fn normalize_interval(&mut self) {
        self.bleu_ci.0 = self.bleu_ci.0.min(self.bleu);
        self.bleu_ci.1 = self.bleu_ci.1.max(self.bleu);
    }
}
