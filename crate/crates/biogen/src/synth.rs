//! Deterministic synthetic corpora for examples and tests.
//!
//! Instances come from a fixed fact-to-sentence grammar, so the mapping
//! from facts to text is exact and fact recall of generated sentences can
//! be measured mechanically (a fact counts as realized when all of its
//! value tokens appear in the sentence).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{BiographyInstance, Fact, FactRecord};

const FIRST_NAMES: [&str; 20] = [
    "anna", "boris", "carla", "derek", "elena", "farid", "greta", "henrik", "ines", "jonas",
    "karin", "luca", "marta", "nikos", "olga", "pavel", "rosa", "sven", "talia", "viktor",
];
const LAST_NAMES: [&str; 20] = [
    "abrams", "bell", "cortes", "duval", "eriksen", "fuentes", "gallo", "hansen", "ivanov",
    "jensen", "kovacs", "lindgren", "moreau", "novak", "oliveira", "petrov", "quint", "rossi",
    "sato", "weber",
];
const OCCUPATIONS: [&str; 12] = [
    "painter",
    "cricketer",
    "squash player",
    "composer",
    "actor",
    "engineer",
    "racing driver",
    "novelist",
    "sprinter",
    "architect",
    "jazz musician",
    "chess player",
];
const COUNTRIES: [&str; 10] = [
    "finland",
    "chile",
    "norway",
    "portugal",
    "austria",
    "greece",
    "estonia",
    "japan",
    "kenya",
    "uruguay",
];
const SPORTS: [&str; 8] = [
    "tennis", "squash", "cricket", "chess", "golf", "handball", "rowing", "fencing",
];

fn words(text: &str) -> Vec<String> {
    text.split(' ').map(String::from).collect()
}

/// A random record with the slots this grammar realizes.
fn sample_record(rng: &mut ChaCha8Rng) -> FactRecord {
    let title = vec![
        FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())].to_string(),
        LAST_NAMES[rng.random_range(0..LAST_NAMES.len())].to_string(),
    ];
    let occupation = OCCUPATIONS[rng.random_range(0..OCCUPATIONS.len())];
    let country = COUNTRIES[rng.random_range(0..COUNTRIES.len())];
    let year = rng.random_range(1900..2000).to_string();
    FactRecord::new(
        title,
        vec![
            Fact {
                slot: crate::corpus::Slot::new("OCCUPATION").unwrap(),
                value_tokens: words(occupation),
            },
            Fact {
                slot: crate::corpus::Slot::new("CITIZENSHIP").unwrap(),
                value_tokens: words(country),
            },
            Fact {
                slot: crate::corpus::Slot::new("DATE_OF_BIRTH").unwrap(),
                value_tokens: vec![year],
            },
        ],
    )
}

/// The deterministic grammar: every fact is realized, in a fixed frame.
fn realize(record: &FactRecord) -> Vec<String> {
    let mut out = record.title_tokens.clone();
    out.extend(words("was a"));
    out.extend(record.fact("OCCUPATION").unwrap().value_tokens.clone());
    out.push("from".into());
    out.extend(record.fact("CITIZENSHIP").unwrap().value_tokens.clone());
    out.extend(words("born in"));
    out.extend(record.fact("DATE_OF_BIRTH").unwrap().value_tokens.clone());
    out.push(".".into());
    out
}

/// `n` instances from the deterministic fact-realization grammar, with
/// distinct records.
pub fn grammar_corpus(n: usize, seed: u64) -> Vec<BiographyInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let record = sample_record(&mut rng);
        let key = format!("{record:?}");
        if !seen.insert(key) {
            continue;
        }
        let sentence_tokens = realize(&record);
        out.push(BiographyInstance {
            id: out.len() as u64,
            record,
            sentence_tokens,
        });
    }
    out
}

/// Raw-format JSON lines for the ingestion pipeline: six facts per entity
/// (title included) and sentences inside the default length filters. Some
/// entities carry a death date so the baseline exercises both copulas.
pub fn raw_corpus_jsonl(n: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lines = String::new();
    for _ in 0..n {
        let first = FIRST_NAMES[rng.random_range(0..FIRST_NAMES.len())];
        let last = LAST_NAMES[rng.random_range(0..LAST_NAMES.len())];
        let occupation = OCCUPATIONS[rng.random_range(0..OCCUPATIONS.len())];
        let country = COUNTRIES[rng.random_range(0..COUNTRIES.len())];
        let sport = SPORTS[rng.random_range(0..SPORTS.len())];
        let year = rng.random_range(1900..1980);
        let day = rng.random_range(1..29);
        let month = rng.random_range(1..13);
        let sex = if rng.random_range(0..2) == 0 { "male" } else { "female" };
        let dead = rng.random_range(0..3) == 0;

        let mut facts = vec![
            ("SEX_OR_GENDER", sex.to_string()),
            ("DATE_OF_BIRTH", format!("{day:02}/{month:02}/{year}")),
            ("OCCUPATION", occupation.to_string()),
            ("CITIZENSHIP", country.to_string()),
            ("SPORT", sport.to_string()),
        ];
        if dead {
            facts.push(("DATE_OF_DEATH", format!("{:04}-01-01", year + 60)));
        }
        let verb = if dead { "was" } else { "is" };
        let sentence = format!(
            "{first} {last} (born {year}) {verb} a {occupation} from {country} who plays {sport} professionally."
        );
        let facts_json: Vec<String> = facts
            .iter()
            .map(|(s, v)| format!(r#"{{"slot": "{s}", "value": "{v}"}}"#))
            .collect();
        lines.push_str(&format!(
            r#"{{"title": "{first} {last}", "facts": [{}], "sentence": "{sentence}"}}"#,
            facts_json.join(", ")
        ));
        lines.push('\n');
    }
    lines
}

/// Fraction of a record's facts whose value tokens all appear in `tokens`
/// (the title is not counted).
pub fn fact_recall(record: &FactRecord, tokens: &[String]) -> f64 {
    if record.facts.is_empty() {
        return 1.0;
    }
    let hit = record
        .facts
        .iter()
        .filter(|f| f.value_tokens.iter().all(|v| tokens.contains(v)))
        .count();
    hit as f64 / record.facts.len() as f64
}

/// Mean fact recall over aligned records and generated sentences.
pub fn mean_fact_recall(records: &[&FactRecord], generations: &[Vec<String>]) -> f64 {
    assert_eq!(records.len(), generations.len());
    let sum: f64 = records
        .iter()
        .zip(generations)
        .map(|(r, g)| fact_recall(r, g))
        .sum();
    sum / records.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grammar_corpus_is_deterministic_and_distinct() {
        let a = grammar_corpus(50, 9);
        let b = grammar_corpus(50, 9);
        assert_eq!(a, b);
        let keys: std::collections::HashSet<String> =
            a.iter().map(|i| format!("{:?}", i.record)).collect();
        assert_eq!(keys.len(), 50);
    }

    #[test]
    fn realized_sentences_have_full_recall() {
        for inst in grammar_corpus(20, 3) {
            assert_eq!(fact_recall(&inst.record, &inst.sentence_tokens), 1.0);
        }
    }

    #[test]
    fn recall_counts_partial_expression() {
        let inst = &grammar_corpus(1, 1)[0];
        // Drop the year: 2 of 3 facts remain realized.
        let truncated: Vec<String> = inst.sentence_tokens
            [..inst.sentence_tokens.len() - 2]
            .to_vec();
        let r = fact_recall(&inst.record, &truncated);
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn raw_corpus_parses_and_survives_default_filters() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(&path, raw_corpus_jsonl(40, 4)).unwrap();
        let instances = crate::corpus::read_raw_instances(&path).unwrap();
        assert_eq!(instances.len(), 40);
        for inst in &instances {
            assert!(inst.record.fact_count() >= 6);
            let len = inst.sentence_tokens.len();
            assert!((10..=37).contains(&len), "sentence length {len}");
        }
    }
}
