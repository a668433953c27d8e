//! Plain-text n-gram model listing for diffing and external inspection.
//!
//! Format, one entry per line after `#` header lines:
//!
//! ```text
//! order <TAB> tokens space-joined <TAB> log10 prob <TAB> log10 backoff
//! ```
//!
//! The probability column is empty for context-only entries and the backoff
//! column is empty for entries that are not contexts. Entries are sorted by
//! order, then token strings, so two models diff cleanly. Floats use
//! shortest round-trip formatting; reloading reproduces probabilities to
//! within floating-point rounding of the log10 conversion (~1e-15 relative).

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{Discounts, LmVocab, NGramModel};
use crate::error::{Error, Result};

impl NGramModel {
    /// Write the model as a text listing. `header` lines are embedded as
    /// comments after the format header.
    pub fn save(&self, path: &Path, header: &[String]) -> Result<()> {
        let mut body = String::new();
        body.push_str("# biogen ngram-lm v1\n");
        body.push_str(&format!("# order\t{}\n", self.order));
        if !self.fallback_orders.is_empty() {
            let list: Vec<String> = self.fallback_orders.iter().map(|o| o.to_string()).collect();
            body.push_str(&format!("# fallback_orders\t{}\n", list.join(",")));
        }
        for line in header {
            body.push_str(&format!("# {line}\n"));
        }
        body.push_str("# columns: order\tngram\tlog10_prob\tlog10_backoff\n");

        for o in 1..=self.order {
            // Merge prob and backoff entries of this order into one sorted map.
            let mut rows: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
            for (gram, &p) in &self.probs[o - 1] {
                rows.entry(self.gram_string(gram)).or_default().0 = Some(p.log10());
            }
            if o < self.order {
                for (ctx, &b) in &self.backoffs[o - 1] {
                    rows.entry(self.gram_string(ctx)).or_default().1 = Some(b.log10());
                }
            }
            for (gram, (p, b)) in rows {
                let p = p.map(|v| format!("{v}")).unwrap_or_default();
                let b = b.map(|v| format!("{v}")).unwrap_or_default();
                body.push_str(&format!("{o}\t{gram}\t{p}\t{b}\n"));
            }
        }
        std::fs::write(path, body).map_err(|e| Error::io(path.to_path_buf(), e))
    }

    fn gram_string(&self, gram: &[u32]) -> String {
        gram.iter()
            .map(|&id| self.vocab.tokens[id as usize].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Load a model previously written by [`NGramModel::save`].
    pub fn load(path: &Path) -> Result<NGramModel> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
        let mut order = 0usize;
        let mut fallback_orders = Vec::new();
        let mut entries: Vec<(usize, Vec<String>, Option<f64>, Option<f64>)> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path.to_path_buf(), e))?;
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("order\t") {
                    order = v
                        .trim()
                        .parse()
                        .map_err(|_| Error::data(path, lineno + 1, "bad order"))?;
                } else if let Some(v) = rest.strip_prefix("fallback_orders\t") {
                    for part in v.split(',') {
                        fallback_orders.push(
                            part.trim()
                                .parse()
                                .map_err(|_| Error::data(path, lineno + 1, "bad fallback order"))?,
                        );
                    }
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 4 {
                return Err(Error::data(path, lineno + 1, "expected 4 columns"));
            }
            let o: usize = cols[0]
                .parse()
                .map_err(|_| Error::data(path, lineno + 1, "bad entry order"))?;
            let tokens: Vec<String> = cols[1].split(' ').map(String::from).collect();
            let parse_opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::data(path, lineno + 1, "bad float"))
                }
            };
            entries.push((o, tokens, parse_opt(cols[2])?, parse_opt(cols[3])?));
        }
        if order < 2 {
            return Err(Error::data(path, 0, "missing or bad order header"));
        }

        let mut vocab = LmVocab::new();
        let mut probs = vec![std::collections::HashMap::new(); order];
        let mut backoffs = vec![std::collections::HashMap::new(); order - 1];
        for (o, tokens, p, b) in entries {
            if o == 0 || o > order || tokens.len() != o {
                return Err(Error::data(
                    path,
                    0,
                    format!("entry of length {} at order {o}", tokens.len()),
                ));
            }
            let ids: Box<[u32]> = tokens.iter().map(|t| vocab.intern(t)).collect();
            if let Some(p) = p {
                probs[o - 1].insert(ids.clone(), 10f64.powf(p));
            }
            if let Some(b) = b {
                if o == order {
                    return Err(Error::data(path, 0, "top-order entry cannot back off"));
                }
                backoffs[o - 1].insert(ids, 10f64.powf(b));
            }
        }
        Ok(NGramModel {
            order,
            vocab,
            probs,
            backoffs,
            discounts: vec![
                Discounts {
                    d1: f64::NAN,
                    d2: f64::NAN,
                    d3: f64::NAN
                };
                order
            ],
            fallback_orders,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::train_lm;
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn save_load_round_trip_preserves_scores() {
        let corpus: Vec<Vec<String>> = [
            vec!["a", "b", "a", "c"],
            vec!["b", "c", "a"],
            vec!["a", "b"],
        ]
        .iter()
        .map(|r| r.iter().map(|s| s.to_string()).collect())
        .collect();
        let model = train_lm(&corpus, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.tsv");
        model.save(&path, &["scheme=none".into()]).unwrap();
        let loaded = NGramModel::load(&path).unwrap();
        assert_eq!(loaded.order(), 3);
        let ctxs: Vec<Vec<String>> = vec![
            vec![],
            vec!["a".into()],
            vec!["a".into(), "b".into()],
            vec!["zzz".into()],
        ];
        for ctx in &ctxs {
            for w in ["a", "b", "c", "zzz", "</s>"] {
                assert_relative_eq!(
                    loaded.prob(ctx, w),
                    model.prob(ctx, w),
                    max_relative = 1e-12
                );
            }
        }
        assert_relative_eq!(
            loaded.perplexity(&corpus),
            model.perplexity(&corpus),
            max_relative = 1e-12
        );
    }

    #[test]
    fn listing_is_sorted_and_parseable() {
        let corpus: Vec<Vec<String>> =
            vec![vec!["b".into(), "a".into()], vec!["a".into(), "b".into()]];
        let model = train_lm(&corpus, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lm.tsv");
        model.save(&path, &[]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut last: Option<(usize, String)> = None;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            let cols: Vec<&str> = line.split('\t').collect();
            assert_eq!(cols.len(), 4);
            let key = (cols[0].parse::<usize>().unwrap(), cols[1].to_string());
            if let Some(prev) = &last {
                assert!(*prev < key, "{prev:?} !< {key:?}");
            }
            last = Some(key);
        }
    }
}
