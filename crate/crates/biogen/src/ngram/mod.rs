//! Interpolated modified Kneser-Ney n-gram language modelling and perplexity,
//! plus the templating schemes used to benchmark task sparsity.
//!
//! Training follows the usual three-discount formulation: the highest order
//! keeps raw counts, lower orders use continuation counts (except n-grams
//! anchored at the start marker, which nothing can precede), and per-order
//! discounts come from the count-of-counts statistics. Probabilities are
//! precomputed into prob/backoff tables, so scoring is a longest-suffix walk
//! and every conditional distribution sums to one by construction.

mod io;
mod scheme;

use std::collections::HashMap;

pub use scheme::{apply_scheme, TemplatingScheme};

use crate::error::{Error, Result};

/// Start marker; context-only, never predicted.
pub const BOS: &str = "<s>";
/// End marker; scored like a regular token.
pub const LM_EOS: &str = "</s>";
/// Unknown-token bucket for out-of-vocabulary words.
pub const LM_UNK: &str = "<unk>";

const BOS_ID: u32 = 0;
const EOS_ID: u32 = 1;
const UNK_ID: u32 = 2;

/// Absolute discount used when the count-of-counts statistics at an order
/// are too degenerate to estimate the modified discounts.
const FALLBACK_DISCOUNT: f64 = 0.75;

#[derive(Debug, Clone, Default)]
struct LmVocab {
    id_of: HashMap<String, u32>,
    tokens: Vec<String>,
}

impl LmVocab {
    fn new() -> LmVocab {
        let mut v = LmVocab::default();
        for tok in [BOS, LM_EOS, LM_UNK] {
            v.intern(tok);
        }
        v
    }

    fn intern(&mut self, token: &str) -> u32 {
        if let Some(&id) = self.id_of.get(token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.id_of.insert(token.to_string(), id);
        self.tokens.push(token.to_string());
        id
    }

    fn id(&self, token: &str) -> u32 {
        self.id_of.get(token).copied().unwrap_or(UNK_ID)
    }

    /// Prediction vocabulary: everything except the start marker.
    fn prediction_size(&self) -> usize {
        self.tokens.len() - 1
    }
}

type Gram = Box<[u32]>;

/// Per-order discount triple (D1, D2, D3+).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts {
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Discounts {
    fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.d1,
            2 => self.d2,
            _ => self.d3,
        }
    }
}

/// Estimate (D1, D2, D3+) from count-of-counts `n[k] = |{g : c(g) = k}|`.
/// Falls back to absolute discounting at 0.75 when the statistics are
/// degenerate (n1 or n2 zero, or a discount escapes its valid range).
fn estimate_discounts(n: [u64; 4]) -> (Discounts, bool) {
    let fallback = Discounts {
        d1: FALLBACK_DISCOUNT,
        d2: FALLBACK_DISCOUNT,
        d3: FALLBACK_DISCOUNT,
    };
    if n[0] == 0 || n[1] == 0 {
        return (fallback, true);
    }
    let y = n[0] as f64 / (n[0] as f64 + 2.0 * n[1] as f64);
    let d = |k: usize| k as f64 - (k + 1) as f64 * y * n[k] as f64 / n[k - 1] as f64;
    let (d1, d2, d3) = (d(1), d(2), d(3));
    let valid = d1.is_finite()
        && d2.is_finite()
        && d3.is_finite()
        && (0.0..=1.0).contains(&d1)
        && (0.0..=2.0).contains(&d2)
        && (0.0..=3.0).contains(&d3);
    if valid {
        (Discounts { d1, d2, d3 }, false)
    } else {
        (fallback, true)
    }
}

/// Interpolated modified Kneser-Ney model with precomputed probability and
/// backoff tables.
#[derive(Debug, Clone)]
pub struct NGramModel {
    order: usize,
    vocab: LmVocab,
    /// `probs[o - 1]`: interpolated probability of each observed o-gram
    /// (unigrams cover the whole prediction vocabulary).
    probs: Vec<HashMap<Gram, f64>>,
    /// `backoffs[len - 1]`: backoff weight of each observed context of that
    /// length.
    backoffs: Vec<HashMap<Gram, f64>>,
    discounts: Vec<Discounts>,
    /// Orders whose discounts fell back to absolute discounting.
    fallback_orders: Vec<usize>,
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    /// Orders that used the 0.75 fallback discount; callers should surface
    /// these as warnings.
    pub fn fallback_orders(&self) -> &[usize] {
        &self.fallback_orders
    }

    pub fn discounts(&self) -> &[Discounts] {
        &self.discounts
    }

    /// Size of the prediction vocabulary (training types plus the unknown
    /// bucket and the end marker).
    pub fn vocab_size(&self) -> usize {
        self.vocab.prediction_size()
    }

    /// Tokens of the prediction vocabulary.
    pub fn prediction_tokens(&self) -> impl Iterator<Item = &str> {
        self.vocab
            .tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| *i as u32 != BOS_ID)
            .map(|(_, t)| t.as_str())
    }

    fn map_context(&self, context: &[String]) -> Vec<u32> {
        let keep = self.order - 1;
        let skip = context.len().saturating_sub(keep);
        context[skip..].iter().map(|t| self.vocab.id(t)).collect()
    }

    fn prob_ids(&self, context: &[u32], word: u32) -> f64 {
        let mut ctx = context;
        let mut weight = 1.0;
        loop {
            let mut key: Vec<u32> = Vec::with_capacity(ctx.len() + 1);
            key.extend_from_slice(ctx);
            key.push(word);
            if let Some(&p) = self.probs[ctx.len()].get(key.as_slice()) {
                return weight * p;
            }
            if ctx.is_empty() {
                // Unigram table covers the entire prediction vocabulary, so
                // the only way to get here is a non-predictable id (BOS).
                return 0.0;
            }
            if let Some(&b) = self.backoffs[ctx.len() - 1].get(ctx) {
                weight *= b;
            }
            ctx = &ctx[1..];
        }
    }

    /// Interpolated probability of `word` after `context`. Out-of-vocabulary
    /// tokens map to the unknown bucket and the context is truncated to the
    /// most recent `order - 1` tokens.
    pub fn prob(&self, context: &[String], word: &str) -> f64 {
        let ctx = self.map_context(context);
        self.prob_ids(&ctx, self.vocab.id(word))
    }

    /// Natural-log probability; see [`NGramModel::prob`].
    pub fn log_prob(&self, context: &[String], word: &str) -> f64 {
        self.prob(context, word).ln()
    }

    /// Score one sentence: the sum of log probabilities of each token plus
    /// the end marker, with start markers as initial context only. Returns
    /// (log prob sum, scored token count).
    pub fn score_sentence(&self, sentence: &[String]) -> (f64, usize) {
        let mut padded: Vec<u32> = vec![BOS_ID; self.order - 1];
        padded.extend(sentence.iter().map(|t| self.vocab.id(t)));
        padded.push(EOS_ID);
        let mut total = 0.0;
        for pos in (self.order - 1)..padded.len() {
            let ctx = &padded[pos.saturating_sub(self.order - 1)..pos];
            total += self.prob_ids(ctx, padded[pos]).ln();
        }
        (total, sentence.len() + 1)
    }

    /// Corpus perplexity: `exp(-sum of log probs / scored tokens)`, scoring
    /// the end-of-sentence marker but not the start markers.
    pub fn perplexity(&self, sentences: &[Vec<String>]) -> f64 {
        let mut log_sum = 0.0;
        let mut tokens = 0usize;
        for s in sentences {
            let (lp, n) = self.score_sentence(s);
            log_sum += lp;
            tokens += n;
        }
        (-log_sum / tokens.max(1) as f64).exp()
    }
}

/// Train an interpolated modified Kneser-Ney model of the given order.
pub fn train_lm(sentences: &[Vec<String>], order: usize) -> Result<NGramModel> {
    if sentences.is_empty() {
        return Err(Error::Invalid("training corpus is empty".into()));
    }
    if order < 2 {
        return Err(Error::Invalid("order must be at least 2".into()));
    }

    let mut vocab = LmVocab::new();
    let id_sentences: Vec<Vec<u32>> = sentences
        .iter()
        .map(|s| s.iter().map(|t| vocab.intern(t)).collect())
        .collect();

    // Raw counts per order: windows ending at each scored position.
    let mut raw: Vec<HashMap<Gram, u64>> = vec![HashMap::new(); order];
    for sent in &id_sentences {
        let mut padded: Vec<u32> = vec![BOS_ID; order - 1];
        padded.extend_from_slice(sent);
        padded.push(EOS_ID);
        for pos in (order - 1)..padded.len() {
            for o in 1..=order {
                let gram: Gram = padded[pos + 1 - o..=pos].into();
                *raw[o - 1].entry(gram).or_insert(0) += 1;
            }
        }
    }

    // Modified counts: the top order keeps raw counts; below it, the count
    // of an n-gram is the number of distinct tokens preceding it, except for
    // n-grams anchored at the start marker where nothing can precede.
    let mut modified: Vec<HashMap<Gram, u64>> = Vec::with_capacity(order);
    for o in 1..=order {
        if o == order {
            modified.push(raw[o - 1].clone());
            continue;
        }
        let mut table: HashMap<Gram, u64> = HashMap::new();
        for gram in raw[o].keys() {
            let suffix = &gram[1..];
            if suffix[0] != BOS_ID {
                *table.entry(suffix.into()).or_insert(0) += 1;
            }
        }
        for (gram, &count) in &raw[o - 1] {
            if gram[0] == BOS_ID {
                table.insert(gram.clone(), count);
            }
        }
        modified.push(table);
    }

    // Per-order discounts from count-of-counts.
    let mut discounts = Vec::with_capacity(order);
    let mut fallback_orders = Vec::new();
    for (o, table) in modified.iter().enumerate() {
        let mut n = [0u64; 4];
        for &c in table.values() {
            if (1..=4).contains(&c) {
                n[(c - 1) as usize] += 1;
            }
        }
        let (d, fell_back) = estimate_discounts(n);
        if fell_back {
            fallback_orders.push(o + 1);
        }
        discounts.push(d);
    }

    // Context totals and discount mass.
    struct ContextStats {
        total: u64,
        mass: f64,
    }
    let mut context_stats: Vec<HashMap<Gram, ContextStats>> = Vec::with_capacity(order);
    for (o, table) in modified.iter().enumerate() {
        let mut stats: HashMap<Gram, ContextStats> = HashMap::new();
        for (gram, &count) in table {
            let ctx: Gram = gram[..gram.len() - 1].into();
            let entry = stats.entry(ctx).or_insert(ContextStats {
                total: 0,
                mass: 0.0,
            });
            entry.total += count;
            entry.mass += discounts[o].for_count(count);
        }
        context_stats.push(stats);
    }

    // Interpolated probabilities, bottom-up. The unigram table covers the
    // entire prediction vocabulary so unseen words keep positive mass.
    let v_pred = vocab.prediction_size() as f64;
    let empty: Gram = Box::from([] as [u32; 0]);
    let unigram_stats = &context_stats[0][&empty];
    let gamma_1 = unigram_stats.mass / unigram_stats.total as f64;

    let mut probs: Vec<HashMap<Gram, f64>> = vec![HashMap::new(); order];
    for id in 0..vocab.tokens.len() as u32 {
        if id == BOS_ID {
            continue;
        }
        let gram: Gram = Box::from([id]);
        let count = modified[0].get(&gram).copied().unwrap_or(0);
        let disc = (count as f64 - discounts[0].for_count(count)).max(0.0)
            / unigram_stats.total as f64;
        probs[0].insert(gram, disc + gamma_1 / v_pred);
    }
    for o in 2..=order {
        let mut table = HashMap::with_capacity(modified[o - 1].len());
        for (gram, &count) in &modified[o - 1] {
            let ctx: Gram = gram[..gram.len() - 1].into();
            let stats = &context_stats[o - 1][&ctx];
            let disc = (count as f64 - discounts[o - 1].for_count(count)) / stats.total as f64;
            let gamma = stats.mass / stats.total as f64;
            let lower = probs[o - 2][&Gram::from(&gram[1..])];
            table.insert(gram.clone(), disc + gamma * lower);
        }
        probs[o - 1] = table;
    }

    // Backoff weights per context length.
    let mut backoffs: Vec<HashMap<Gram, f64>> = vec![HashMap::new(); order - 1];
    for o in 2..=order {
        for (ctx, stats) in &context_stats[o - 1] {
            backoffs[o - 2].insert(ctx.clone(), stats.mass / stats.total as f64);
        }
    }

    Ok(NGramModel {
        order,
        vocab,
        probs,
        backoffs,
        discounts,
        fallback_orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sents(rows: &[&[&str]]) -> Vec<Vec<String>> {
        rows.iter()
            .map(|r| r.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    fn words(row: &[&str]) -> Vec<String> {
        row.iter().map(|s| s.to_string()).collect()
    }

    /// Literal-translation oracle: recompute the interpolated probability
    /// straight from the count tables and the textbook equations, without
    /// the precomputed prob/backoff tables used by the implementation.
    mod oracle {
        use std::collections::{BTreeMap, BTreeSet};

        pub struct KnOracle {
            pub order: usize,
            // modified counts per order, keyed by token strings
            pub counts: Vec<BTreeMap<Vec<String>, u64>>,
            pub discounts: Vec<(f64, f64, f64)>,
            pub vocab: BTreeSet<String>,
        }

        impl KnOracle {
            pub fn train(sentences: &[Vec<String>], order: usize) -> KnOracle {
                let mut raw: Vec<BTreeMap<Vec<String>, u64>> = vec![BTreeMap::new(); order];
                let mut vocab: BTreeSet<String> = BTreeSet::new();
                vocab.insert("</s>".into());
                vocab.insert("<unk>".into());
                for s in sentences {
                    for t in s {
                        vocab.insert(t.clone());
                    }
                    let mut padded: Vec<String> = vec!["<s>".into(); order - 1];
                    padded.extend(s.iter().cloned());
                    padded.push("</s>".into());
                    for pos in (order - 1)..padded.len() {
                        for o in 1..=order {
                            let g = padded[pos + 1 - o..=pos].to_vec();
                            *raw[o - 1].entry(g).or_insert(0) += 1;
                        }
                    }
                }
                let mut counts = vec![BTreeMap::new(); order];
                counts[order - 1] = raw[order - 1].clone();
                for o in (1..order).rev() {
                    let mut table: BTreeMap<Vec<String>, u64> = BTreeMap::new();
                    for g in raw[o].keys() {
                        let suffix = g[1..].to_vec();
                        if suffix[0] != "<s>" {
                            *table.entry(suffix).or_insert(0) += 1;
                        }
                    }
                    for (g, &c) in &raw[o - 1] {
                        if g[0] == "<s>" {
                            table.insert(g.clone(), c);
                        }
                    }
                    counts[o - 1] = table;
                }
                let mut discounts = Vec::new();
                for table in &counts {
                    let n: Vec<u64> = (1..=4)
                        .map(|k| table.values().filter(|&&c| c == k).count() as u64)
                        .collect();
                    if n[0] == 0 || n[1] == 0 {
                        discounts.push((0.75, 0.75, 0.75));
                        continue;
                    }
                    let y = n[0] as f64 / (n[0] as f64 + 2.0 * n[1] as f64);
                    let d = |k: usize| {
                        k as f64 - (k + 1) as f64 * y * n[k] as f64 / n[k - 1] as f64
                    };
                    let (d1, d2, d3) = (d(1), d(2), d(3));
                    let ok = d1.is_finite()
                        && d2.is_finite()
                        && d3.is_finite()
                        && (0.0..=1.0).contains(&d1)
                        && (0.0..=2.0).contains(&d2)
                        && (0.0..=3.0).contains(&d3);
                    discounts.push(if ok { (d1, d2, d3) } else { (0.75, 0.75, 0.75) });
                }
                KnOracle {
                    order,
                    counts,
                    discounts,
                    vocab,
                }
            }

            fn discount(&self, o: usize, c: u64) -> f64 {
                let (d1, d2, d3) = self.discounts[o - 1];
                match c {
                    0 => 0.0,
                    1 => d1,
                    2 => d2,
                    _ => d3,
                }
            }

            /// p(word | context) with context already truncated.
            pub fn prob(&self, context: &[String], word: &str) -> f64 {
                let o = context.len() + 1;
                let table = &self.counts[o - 1];
                let total: u64 = table
                    .iter()
                    .filter(|(g, _)| &g[..o - 1] == context)
                    .map(|(_, &c)| c)
                    .sum();
                let lower = if o == 1 {
                    1.0 / self.vocab.len() as f64
                } else {
                    self.prob(&context[1..], word)
                };
                if total == 0 {
                    return lower;
                }
                let mut key = context.to_vec();
                key.push(word.to_string());
                let count = table.get(&key).copied().unwrap_or(0);
                let mass: f64 = table
                    .iter()
                    .filter(|(g, _)| &g[..o - 1] == context)
                    .map(|(_, &c)| self.discount(o, c))
                    .sum();
                let gamma = mass / total as f64;
                (count as f64 - self.discount(o, count)).max(0.0) / total as f64 + gamma * lower
            }
        }
    }

    #[test]
    fn hand_derived_bigram_case() {
        // Single sentence [a, b]: every count is 1, so both orders fall back
        // to the 0.75 discount. Worked by hand: p1(b) = 0.25/3 + 0.75/4 =
        // 13/48, and p(b|a) = 0.25 + 0.75 * 13/48 = 29/64.
        let model = train_lm(&sents(&[&["a", "b"]]), 2).unwrap();
        assert_eq!(model.fallback_orders(), &[1, 2]);
        assert_relative_eq!(model.prob(&[], "b"), 13.0 / 48.0, epsilon = 1e-12);
        assert_relative_eq!(
            model.prob(&words(&["a"]), "b"),
            29.0 / 64.0,
            epsilon = 1e-12
        );
        // Same value from the independent textbook oracle.
        let oracle = oracle::KnOracle::train(&sents(&[&["a", "b"]]), 2);
        assert_relative_eq!(
            model.prob(&words(&["a"]), "b"),
            oracle.prob(&words(&["a"]), "b"),
            epsilon = 1e-12
        );
        // Perplexity of the training sentence: all three scored tokens get
        // 29/64, so perplexity is 64/29.
        assert_relative_eq!(
            model.perplexity(&sents(&[&["a", "b"]])),
            64.0 / 29.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn matches_oracle_on_varied_corpora() {
        let corpora: Vec<Vec<Vec<String>>> = vec![
            sents(&[&["a", "b", "a", "b", "c"], &["b", "c"], &["a", "b"]]),
            sents(&[
                &["the", "cat", "sat"],
                &["the", "cat", "ran"],
                &["the", "dog", "sat"],
                &["a", "dog", "ran", "far"],
            ]),
        ];
        for corpus in &corpora {
            for order in [2usize, 3] {
                let model = train_lm(corpus, order).unwrap();
                let oracle = oracle::KnOracle::train(corpus, order);
                let mut vocab: Vec<String> =
                    model.prediction_tokens().map(String::from).collect();
                vocab.push("zzz-oov".into()); // exercises the unk path
                for ctx in [
                    vec![],
                    words(&["a"]),
                    words(&["the"]),
                    words(&["the", "cat"]),
                    words(&["zzz-oov"]),
                ] {
                    if ctx.len() + 1 > order {
                        continue;
                    }
                    for w in &vocab {
                        let got = model.prob(&ctx, w);
                        let mapped_ctx: Vec<String> = ctx
                            .iter()
                            .map(|t| {
                                if oracle.vocab.contains(t) || t == "<s>" {
                                    t.clone()
                                } else {
                                    "<unk>".to_string()
                                }
                            })
                            .collect();
                        let mapped_w = if oracle.vocab.contains(w) {
                            w.clone()
                        } else {
                            "<unk>".to_string()
                        };
                        let want = oracle.prob(&mapped_ctx, &mapped_w);
                        assert_relative_eq!(got, want, epsilon = 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn distributions_sum_to_one() {
        let corpus = sents(&[
            &["a", "b", "a", "b", "c"],
            &["b", "c", "d"],
            &["a", "b", "d", "c"],
            &["c", "a"],
        ]);
        let model = train_lm(&corpus, 3).unwrap();
        let vocab: Vec<String> = model.prediction_tokens().map(String::from).collect();
        for ctx in [
            vec![],
            words(&["a"]),
            words(&["b"]),
            words(&["unseen-context"]),
            words(&["a", "b"]),
            words(&["b", "c"]),
            words(&["x", "y"]),
        ] {
            let sum: f64 = vocab.iter().map(|w| model.prob(&ctx, w)).sum();
            assert!((sum - 1.0).abs() < 1e-6, "ctx {ctx:?}: sum {sum}");
        }
    }

    #[test]
    fn distinct_tokens_give_uniform_continuations() {
        let model = train_lm(&sents(&[&["q", "w", "e", "r"]]), 2).unwrap();
        let p: Vec<f64> = ["q", "w", "e", "r"]
            .iter()
            .map(|t| model.prob(&[], t))
            .collect();
        for v in &p {
            assert_relative_eq!(*v, p[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn unk_has_positive_probability_everywhere() {
        let model = train_lm(&sents(&[&["a", "b"], &["b", "c"]]), 3).unwrap();
        assert!(model.prob(&words(&["zzz", "yyy"]), "never-seen") > 0.0);
        assert!(model.prob(&[], LM_UNK) > 0.0);
    }

    #[test]
    fn backoff_reaches_unigram_floor() {
        let model = train_lm(&sents(&[&["a", "b", "c"]]), 3).unwrap();
        let unigram = model.prob(&[], "never-seen");
        let in_unseen_ctx = model.prob(&words(&["zzz", "yyy"]), "never-seen");
        assert_relative_eq!(unigram, in_unseen_ctx, epsilon = 1e-12);
    }

    #[test]
    fn perplexity_of_uniform_model_is_vocab_size() {
        // A model trained on all-distinct unigrams has a uniform unigram
        // distribution, but smoothing keeps it from being exactly 1/V. A
        // direct check instead: scoring a corpus whose per-token probability
        // is constant p gives perplexity 1/p.
        let corpus = sents(&[&["a", "b"]]);
        let model = train_lm(&corpus, 2).unwrap();
        let ppl = model.perplexity(&corpus);
        assert_relative_eq!(ppl, 64.0 / 29.0, epsilon = 1e-12);
        assert!(ppl > 1.0);
    }

    #[test]
    fn perplexity_invariant_under_sentence_permutation() {
        let corpus = sents(&[&["a", "b", "c"], &["b", "c"], &["c", "a", "b"]]);
        let model = train_lm(&corpus, 3).unwrap();
        let eval = sents(&[&["a", "b"], &["c", "b", "a"], &["b"]]);
        let mut reversed = eval.clone();
        reversed.reverse();
        assert_relative_eq!(
            model.perplexity(&eval),
            model.perplexity(&reversed),
            epsilon = 1e-12
        );
    }

    #[test]
    fn tiny_order_and_empty_corpus_rejected() {
        assert!(train_lm(&sents(&[&["a"]]), 1).is_err());
        assert!(train_lm(&[], 5).is_err());
    }
}
