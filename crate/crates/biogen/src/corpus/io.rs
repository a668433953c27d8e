//! Reading raw fact/sentence pairs and writing prepared splits.
//!
//! Raw input is JSON lines, one object per instance:
//! `{"title": "...", "facts": [{"slot": "...", "value": "..."}], "sentence": "..."}`.
//! Strings are tokenized at ingestion and date values are normalized to ISO
//! form, so everything downstream works on token sequences. Prepared splits
//! are written in tokenized form with the stable instance id.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::record::{BiographyInstance, Fact, FactRecord, Slot};
use super::tokenize::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Deserialize)]
struct RawFact {
    slot: String,
    value: String,
}

#[derive(Debug, Deserialize)]
struct RawInstance {
    title: String,
    facts: Vec<RawFact>,
    sentence: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct PreparedInstance {
    id: u64,
    title: Vec<String>,
    facts: Vec<Fact>,
    sentence: Vec<String>,
}

/// Rewrite a `dd/mm/yyyy` value to ISO `yyyy-mm-dd`. Anything that does not
/// look like a plausible day/month/year triple is returned unchanged.
pub fn normalize_date_value(value: &str) -> String {
    let parts: Vec<&str> = value.trim().split('/').collect();
    if parts.len() == 3 {
        if let (Ok(d), Ok(m), Ok(y)) = (
            parts[0].parse::<u32>(),
            parts[1].parse::<u32>(),
            parts[2].parse::<u32>(),
        ) {
            if (1..=31).contains(&d) && (1..=12).contains(&m) && parts[2].len() == 4 {
                return format!("{y:04}-{m:02}-{d:02}");
            }
        }
    }
    value.to_string()
}

/// Read raw instances, assigning ids from the (0-based) line index. Blank
/// lines are skipped but keep their line number so ids stay stable.
pub fn read_raw_instances(path: &Path) -> Result<Vec<BiographyInstance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawInstance = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, lineno + 1, format!("bad instance JSON: {e}")))?;
        let mut facts = Vec::with_capacity(raw.facts.len());
        for f in raw.facts {
            let slot = Slot::new(&f.slot)
                .map_err(|e| Error::data(path, lineno + 1, e.to_string()))?;
            let value_tokens = tokenize(&normalize_date_value(&f.value));
            if value_tokens.is_empty() {
                return Err(Error::data(
                    path,
                    lineno + 1,
                    format!("fact {} has an empty value", slot),
                ));
            }
            facts.push(Fact { slot, value_tokens });
        }
        let title_tokens = tokenize(&raw.title);
        if title_tokens.is_empty() {
            return Err(Error::data(path, lineno + 1, "empty title"));
        }
        let sentence_tokens = tokenize(&raw.sentence);
        if sentence_tokens.is_empty() {
            return Err(Error::data(path, lineno + 1, "empty sentence"));
        }
        out.push(BiographyInstance {
            id: lineno as u64,
            record: FactRecord::new(title_tokens, facts),
            sentence_tokens,
        });
    }
    Ok(out)
}

/// Write a prepared split as JSON lines of tokenized instances.
pub fn write_instances(path: &Path, instances: &[BiographyInstance]) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut body = String::new();
    for inst in instances {
        let row = PreparedInstance {
            id: inst.id,
            title: inst.record.title_tokens.clone(),
            facts: inst.record.facts.clone(),
            sentence: inst.sentence_tokens.clone(),
        };
        body.push_str(&serde_json::to_string(&row).expect("instances serialize"));
        body.push('\n');
    }
    file.write_all(body.as_bytes())
        .map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Read a prepared split back.
pub fn read_instances(path: &Path) -> Result<Vec<BiographyInstance>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: PreparedInstance = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, lineno + 1, format!("bad instance JSON: {e}")))?;
        out.push(BiographyInstance {
            id: row.id,
            record: FactRecord::new(row.title, row.facts),
            sentence_tokens: row.sentence,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn date_normalization() {
        assert_eq!(normalize_date_value("16/04/1927"), "1927-04-16");
        assert_eq!(normalize_date_value("08/01/1906"), "1906-01-08");
        // Not a plausible date: left alone.
        assert_eq!(normalize_date_value("32/04/1927"), "32/04/1927");
        assert_eq!(normalize_date_value("16/13/1927"), "16/13/1927");
        assert_eq!(normalize_date_value("1985-09-03"), "1985-09-03");
        assert_eq!(normalize_date_value("a/b/c"), "a/b/c");
    }

    #[test]
    fn raw_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(
            &path,
            concat!(
                r#"{"title": "Bob Cortner", "facts": [{"slot": "DATE_OF_BIRTH", "value": "16/04/1927"}, {"slot": "OCCUPATION", "value": "formula one driver"}], "sentence": "Bob Cortner was a driver."}"#,
                "\n"
            ),
        )
        .unwrap();
        let instances = read_raw_instances(&path).unwrap();
        assert_eq!(instances.len(), 1);
        let inst = &instances[0];
        assert_eq!(inst.id, 0);
        assert_eq!(inst.record.title_tokens, vec!["bob", "cortner"]);
        assert_eq!(
            inst.record.facts[0].value_tokens,
            vec!["1927-04-16".to_string()]
        );
        assert_eq!(
            inst.record.facts[1].value_tokens,
            vec!["formula", "one", "driver"]
        );
        assert_eq!(
            inst.sentence_tokens,
            vec!["bob", "cortner", "was", "a", "driver", "."]
        );

        let out = dir.path().join("split.jsonl");
        write_instances(&out, &instances).unwrap();
        assert_eq!(read_instances(&out).unwrap(), instances);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(
            &path,
            "{\"title\": \"ok\", \"facts\": [], \"sentence\": \"fine one.\"}\nnot json\n",
        )
        .unwrap();
        let err = read_raw_instances(&path).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn bad_slot_name_is_a_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.jsonl");
        std::fs::write(
            &path,
            r#"{"title": "x", "facts": [{"slot": "occupation", "value": "y"}], "sentence": "z."}"#,
        )
        .unwrap();
        assert!(read_raw_instances(&path).is_err());
    }
}
