//! Structured input records: slots, facts, and fact/sentence instances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The default slot schema: the fifteen most frequent person slots, in
/// descending corpus frequency.
pub const DEFAULT_SLOTS: [&str; 15] = [
    "TITLE",
    "SEX_OR_GENDER",
    "DATE_OF_BIRTH",
    "OCCUPATION",
    "CITIZENSHIP",
    "DATE_OF_DEATH",
    "PLACE_OF_BIRTH",
    "EDUCATED_AT",
    "SPORTS_TEAM",
    "PLACE_OF_DEATH",
    "POSITION_HELD",
    "PARTICIPANT_OF",
    "POLITICAL_PARTY",
    "AWARD_RECEIVED",
    "SPORT",
];

/// The title slot name, always linearized first.
pub const TITLE_SLOT: &str = "TITLE";

/// A validated slot name: nonempty, uppercase ASCII letters, digits and
/// underscores.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Slot(String);

impl Slot {
    pub fn new(name: &str) -> Result<Slot> {
        if name.is_empty() {
            return Err(Error::Invalid("empty slot name".into()));
        }
        let ok = name
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_');
        if !ok {
            return Err(Error::Invalid(format!(
                "slot name {name:?} must be uppercase ASCII with underscores"
            )));
        }
        Ok(Slot(name.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for Slot {
    type Error = Error;
    fn try_from(value: String) -> Result<Slot> {
        Slot::new(&value)
    }
}

impl From<Slot> for String {
    fn from(slot: Slot) -> String {
        slot.0
    }
}

/// An ordered set of unique slot names.
#[derive(Debug, Clone)]
pub struct SlotSchema {
    slots: Vec<Slot>,
}

impl SlotSchema {
    pub fn new(names: &[&str]) -> Result<SlotSchema> {
        let mut slots = Vec::with_capacity(names.len());
        for name in names {
            let slot = Slot::new(name)?;
            if slots.contains(&slot) {
                return Err(Error::Invalid(format!("duplicate slot {name} in schema")));
            }
            slots.push(slot);
        }
        Ok(SlotSchema { slots })
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn contains(&self, slot: &Slot) -> bool {
        self.slots.contains(slot)
    }
}

impl Default for SlotSchema {
    fn default() -> Self {
        SlotSchema::new(&DEFAULT_SLOTS).expect("default schema is valid")
    }
}

/// One slot-value fact. Values are token sequences produced by the corpus
/// tokenizer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub slot: Slot,
    pub value_tokens: Vec<String>,
}

impl Fact {
    pub fn new(slot: &str, value_tokens: &[&str]) -> Result<Fact> {
        Ok(Fact {
            slot: Slot::new(slot)?,
            value_tokens: value_tokens.iter().map(|t| t.to_string()).collect(),
        })
    }
}

/// An entity's title plus its ordered facts. The title is a fact in its own
/// right (slot `TITLE`) but is stored separately because delexicalization and
/// template filling treat it specially.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactRecord {
    pub title_tokens: Vec<String>,
    pub facts: Vec<Fact>,
}

impl FactRecord {
    pub fn new(title_tokens: Vec<String>, facts: Vec<Fact>) -> FactRecord {
        FactRecord {
            title_tokens,
            facts,
        }
    }

    /// Total fact count, counting the title as one fact.
    pub fn fact_count(&self) -> usize {
        self.facts.len() + 1
    }

    /// First fact with the given slot name, if any.
    pub fn fact(&self, slot: &str) -> Option<&Fact> {
        self.facts.iter().find(|f| f.slot.as_str() == slot)
    }

    pub fn has_slot(&self, slot: &str) -> bool {
        self.fact(slot).is_some()
    }
}

/// A fact record paired with its tokenized reference sentence. `id` is the
/// stable instance id assigned at ingestion (the line index of the raw file)
/// and keeps hypotheses, references and annotations aligned.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiographyInstance {
    pub id: u64,
    pub record: FactRecord,
    pub sentence_tokens: Vec<String>,
}

/// Flatten a record into the input token sequence: the `TITLE` slot token and
/// title tokens first, then each fact's slot token followed by its value
/// tokens, in record order.
///
/// Fails if the title or any fact value is empty; the sequence must stay
/// unambiguously decodable into (slot, values) pairs.
pub fn linearize(record: &FactRecord) -> Result<Vec<String>> {
    if record.title_tokens.is_empty() {
        return Err(Error::Invalid("record has an empty title".into()));
    }
    let mut out = Vec::with_capacity(
        2 + record.title_tokens.len()
            + record
                .facts
                .iter()
                .map(|f| 1 + f.value_tokens.len())
                .sum::<usize>(),
    );
    out.push(TITLE_SLOT.to_string());
    out.extend(record.title_tokens.iter().cloned());
    for fact in &record.facts {
        if fact.value_tokens.is_empty() {
            return Err(Error::Invalid(format!(
                "fact {} has an empty value",
                fact.slot
            )));
        }
        out.push(fact.slot.as_str().to_string());
        out.extend(fact.value_tokens.iter().cloned());
    }
    Ok(out)
}
