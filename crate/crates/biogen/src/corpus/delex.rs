//! Title delexicalization with templated copy actions.
//!
//! Entity names form a long tail of rare tokens, so sentence and input
//! occurrences of title tokens are rewritten to copy tokens `TITLE0`,
//! `TITLE1`, ... which are filled back in after generation.

use std::collections::HashMap;

use super::record::BiographyInstance;

/// The i-th copy token.
pub fn copy_token(i: usize) -> String {
    format!("TITLE{i}")
}

/// Parse a copy token back into its index.
pub fn parse_copy_token(token: &str) -> Option<usize> {
    token.strip_prefix("TITLE")?.parse().ok()
}

/// Map from title token to copy index: the leftmost title position wins when
/// a token repeats inside the title, and positions at or beyond the budget
/// `k` stay literal.
fn title_copy_map(title_tokens: &[String], k: usize) -> HashMap<&String, usize> {
    let mut map = HashMap::new();
    for (i, tok) in title_tokens.iter().take(k).enumerate() {
        map.entry(tok).or_insert(i);
    }
    map
}

fn apply_copy_map(tokens: &[String], map: &HashMap<&String, usize>) -> Vec<String> {
    tokens
        .iter()
        .map(|t| match map.get(t) {
            Some(&i) => copy_token(i),
            None => t.clone(),
        })
        .collect()
}

/// Replace title-token occurrences with copy tokens in both the sentence and
/// the record's title, so the linearized input and the target sentence share
/// copy tokens. `k` is the copy-token budget; title tokens past it are kept
/// literal.
pub fn delexicalize_title(instance: &BiographyInstance, k: usize) -> BiographyInstance {
    let map = title_copy_map(&instance.record.title_tokens, k);
    let mut out = instance.clone();
    out.sentence_tokens = apply_copy_map(&instance.sentence_tokens, &map);
    out.record.title_tokens = apply_copy_map(&instance.record.title_tokens, &map);
    out
}

/// Fill copy tokens back in: `TITLE{i}` becomes title token `i` (dropped when
/// `i` is out of range). Unknown-token placeholders in the initial region of
/// the sequence — before the first token that is neither an unknown nor a
/// copy token — are filled with the first title token; later unknowns are
/// left intact.
pub fn relexicalize(tokens: &[String], title_tokens: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(tokens.len());
    let mut initial = true;
    for tok in tokens {
        if let Some(i) = parse_copy_token(tok) {
            if let Some(t) = title_tokens.get(i) {
                out.push(t.clone());
            }
            continue;
        }
        if tok == super::vocab::UNK {
            if initial {
                if let Some(t) = title_tokens.first() {
                    out.push(t.clone());
                }
            } else {
                out.push(tok.clone());
            }
            continue;
        }
        initial = false;
        out.push(tok.clone());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::record::{Fact, FactRecord};
    use proptest::prelude::*;

    fn instance(title: &[&str], sentence: &[&str]) -> BiographyInstance {
        BiographyInstance {
            id: 0,
            record: FactRecord::new(
                title.iter().map(|s| s.to_string()).collect(),
                vec![Fact::new("OCCUPATION", &["writer"]).unwrap()],
            ),
            sentence_tokens: sentence.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn words(tokens: &[&str]) -> Vec<String> {
        tokens.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn sentence_and_title_share_copy_tokens() {
        let inst = instance(
            &["mathias", "tuomi"],
            &["mathias", "tuomi", ",", "(", "born", "1985", ")"],
        );
        let got = delexicalize_title(&inst, 4);
        assert_eq!(
            got.sentence_tokens,
            words(&["TITLE0", "TITLE1", ",", "(", "born", "1985", ")"])
        );
        assert_eq!(got.record.title_tokens, words(&["TITLE0", "TITLE1"]));
    }

    #[test]
    fn absent_title_token_leaves_sentence_unchanged() {
        let inst = instance(&["ada"], &["a", "famous", "writer"]);
        let got = delexicalize_title(&inst, 4);
        assert_eq!(got.sentence_tokens, inst.sentence_tokens);
    }

    #[test]
    fn budget_bounds_copy_tokens() {
        let inst = instance(&["a", "b", "c", "d", "e"], &["e", "a"]);
        let got = delexicalize_title(&inst, 4);
        // The fifth title token is beyond the budget and stays literal.
        assert_eq!(got.sentence_tokens, words(&["e", "TITLE0"]));
        assert_eq!(
            got.record.title_tokens,
            words(&["TITLE0", "TITLE1", "TITLE2", "TITLE3", "e"])
        );
    }

    #[test]
    fn duplicate_title_tokens_use_leftmost_index() {
        let inst = instance(&["bo", "bo"], &["bo", "said", "bo"]);
        let got = delexicalize_title(&inst, 4);
        assert_eq!(got.sentence_tokens, words(&["TITLE0", "said", "TITLE0"]));
        let back = relexicalize(&got.sentence_tokens, &inst.record.title_tokens);
        assert_eq!(back, inst.sentence_tokens);
    }

    #[test]
    fn relexicalize_substitutes_copy_tokens() {
        let got = relexicalize(
            &words(&["TITLE0", "TITLE1", "was", "a", "writer"]),
            &words(&["ada", "lovelace"]),
        );
        assert_eq!(got, words(&["ada", "lovelace", "was", "a", "writer"]));
    }

    #[test]
    fn initial_unknown_filled_with_first_title_token() {
        let got = relexicalize(
            &words(&["<unk>", "(", "born", "1927", ")"]),
            &words(&["bob", "cortner"]),
        );
        assert_eq!(got, words(&["bob", "(", "born", "1927", ")"]));
    }

    #[test]
    fn non_initial_unknown_left_intact() {
        let toks = words(&["the", "<unk>", "prize"]);
        assert_eq!(relexicalize(&toks, &words(&["ada"])), toks);
    }

    #[test]
    fn unknown_after_copy_token_is_still_initial() {
        let got = relexicalize(
            &words(&["TITLE0", "<unk>", "was", "<unk>"]),
            &words(&["ada", "lovelace"]),
        );
        assert_eq!(got, words(&["ada", "ada", "was", "<unk>"]));
    }

    #[test]
    fn out_of_range_copy_token_dropped() {
        let got = relexicalize(&words(&["TITLE3", "lived"]), &words(&["ada"]));
        assert_eq!(got, words(&["lived"]));
    }

    proptest! {
        // Round trip: delexicalize then relexicalize restores the sentence
        // whenever the title fits in the budget and no unknowns appear.
        #[test]
        fn delex_relex_round_trip(
            title_len in 1usize..=4,
            sent in proptest::collection::vec(0usize..8, 1..20),
            seed in 0u64..1000,
        ) {
            let pool = ["anna", "brix", "cole", "dara", "evan", "was", "a", "the"];
            let title: Vec<&str> = (0..title_len)
                .map(|i| pool[((seed as usize) + i * 3) % 5])
                .collect();
            let sentence: Vec<&str> = sent.iter().map(|&i| pool[i]).collect();
            let inst = instance(&title, &sentence);
            let delexed = delexicalize_title(&inst, 4);
            let back = relexicalize(&delexed.sentence_tokens, &inst.record.title_tokens);
            prop_assert_eq!(back, inst.sentence_tokens);
        }
    }
}
