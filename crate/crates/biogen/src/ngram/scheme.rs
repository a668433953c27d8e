//! Templating schemes for the language-model sparsity benchmark.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::BiographyInstance;

/// How much fact-value templating to apply before language modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplatingScheme {
    /// Raw sentence text.
    None,
    /// Entity-name tokens become `TITLE_{i}`.
    Title,
    /// Every fact-value token becomes `SLOT_{i}`, title included.
    Full,
}

impl std::str::FromStr for TemplatingScheme {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(TemplatingScheme::None),
            "title" => Ok(TemplatingScheme::Title),
            "full" => Ok(TemplatingScheme::Full),
            other => Err(crate::error::Error::Invalid(format!(
                "unknown templating scheme {other:?} (expected none|title|full)"
            ))),
        }
    }
}

impl std::fmt::Display for TemplatingScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TemplatingScheme::None => "none",
            TemplatingScheme::Title => "title",
            TemplatingScheme::Full => "full",
        })
    }
}

/// Rewrite a sentence under a templating scheme. Matching is per-token:
/// value token `i` of a fact claims every sentence token equal to it, with
/// earlier facts (title first) winning conflicts and the leftmost value
/// index winning within a fact.
pub fn apply_scheme(instance: &BiographyInstance, scheme: TemplatingScheme) -> Vec<String> {
    fn claim(map: &mut HashMap<String, String>, tokens: &[String], slot: &str) {
        for (i, tok) in tokens.iter().enumerate() {
            map.entry(tok.clone()).or_insert_with(|| format!("{slot}_{i}"));
        }
    }
    let mut map: HashMap<String, String> = HashMap::new();
    match scheme {
        TemplatingScheme::None => return instance.sentence_tokens.clone(),
        TemplatingScheme::Title => {
            claim(&mut map, &instance.record.title_tokens, "TITLE");
        }
        TemplatingScheme::Full => {
            claim(&mut map, &instance.record.title_tokens, "TITLE");
            for fact in &instance.record.facts {
                claim(&mut map, &fact.value_tokens, fact.slot.as_str());
            }
        }
    }
    instance
        .sentence_tokens
        .iter()
        .map(|t| map.get(t).cloned().unwrap_or_else(|| t.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Fact, FactRecord};

    fn instance() -> BiographyInstance {
        BiographyInstance {
            id: 0,
            record: FactRecord::new(
                vec!["mathias".into(), "tuomi".into()],
                vec![
                    Fact::new("OCCUPATION", &["squash", "player"]).unwrap(),
                    Fact::new("CITIZENSHIP", &["finland"]).unwrap(),
                ],
            ),
            sentence_tokens: [
                "mathias", "tuomi", "is", "a", "squash", "player", "from", "finland", ".",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    #[test]
    fn none_leaves_text_raw() {
        let inst = instance();
        assert_eq!(
            apply_scheme(&inst, TemplatingScheme::None),
            inst.sentence_tokens
        );
    }

    #[test]
    fn title_templating_replaces_only_title_tokens() {
        let got = apply_scheme(&instance(), TemplatingScheme::Title);
        assert_eq!(
            got,
            vec![
                "TITLE_0", "TITLE_1", "is", "a", "squash", "player", "from", "finland", "."
            ]
        );
    }

    #[test]
    fn full_templating_replaces_all_fact_values() {
        let got = apply_scheme(&instance(), TemplatingScheme::Full);
        assert_eq!(
            got,
            vec![
                "TITLE_0",
                "TITLE_1",
                "is",
                "a",
                "OCCUPATION_0",
                "OCCUPATION_1",
                "from",
                "CITIZENSHIP_0",
                "."
            ]
        );
    }

    #[test]
    fn earlier_fact_wins_shared_tokens() {
        let mut inst = instance();
        inst.record.facts.push(Fact::new("SPORT", &["squash"]).unwrap());
        let got = apply_scheme(&inst, TemplatingScheme::Full);
        assert!(got.contains(&"OCCUPATION_0".to_string()));
        assert!(!got.iter().any(|t| t.starts_with("SPORT_")));
    }
}
