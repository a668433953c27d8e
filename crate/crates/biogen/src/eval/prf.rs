//! Set-based precision, recall and F1 over fact slots.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Precision/recall/F1 triple, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(overlap: usize, system: usize, gold: usize) -> Prf {
        // Conventions: an empty system set scores precision 1 against an
        // empty gold set and 0 otherwise; an empty gold set means there is
        // nothing to recall, so recall is 1.
        let precision = if system == 0 {
            if gold == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            overlap as f64 / system as f64
        };
        let recall = if gold == 0 {
            1.0
        } else {
            overlap as f64 / gold as f64
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            precision,
            recall,
            f1,
        }
    }
}

/// Content selection score of a system fact set against a gold fact set.
/// Fact identity is the slot name; both operands are true sets.
pub fn content_prf(system_facts: &BTreeSet<String>, gold_facts: &BTreeSet<String>) -> Prf {
    let overlap = system_facts.intersection(gold_facts).count();
    Prf::from_counts(overlap, system_facts.len(), gold_facts.len())
}

/// Hallucination score of expressed facts against the structured input.
/// An expressed-but-incorrect value still occupies a slot in the system set
/// but never counts toward the overlap; duplicate slots collapse to their
/// first annotation.
pub fn hallucination_prf(
    system_expressed: &[(String, bool)],
    input_facts: &BTreeSet<String>,
) -> Prf {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut correct: BTreeSet<&str> = BTreeSet::new();
    for (slot, ok) in system_expressed {
        if seen.insert(slot.as_str()) && *ok {
            correct.insert(slot.as_str());
        }
    }
    let overlap = correct
        .iter()
        .filter(|s| input_facts.contains(**s))
        .count();
    Prf::from_counts(overlap, seen.len(), input_facts.len())
}
