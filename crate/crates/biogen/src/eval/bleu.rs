//! Corpus-level BLEU with uniform 1- to 4-gram weights and bootstrap
//! confidence intervals.
//!
//! Sentences shorter than the maximum n-gram order are right-padded with a
//! reserved pad symbol before counting; the pad symbol can never match a
//! real token (but does match itself, so identical corpora always score
//! 100). No smoothing is applied: a zero higher-order precision zeroes the
//! whole geometric mean. Scores are on the 0-100 scale.

use std::collections::HashMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A token or the reserved pad filler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Tok<'a> {
    Real(&'a str),
    Pad,
}

fn padded<'a>(sentence: &'a [String], min_len: usize) -> Vec<Tok<'a>> {
    let mut toks: Vec<Tok<'a>> = sentence.iter().map(|t| Tok::Real(t.as_str())).collect();
    while toks.len() < min_len {
        toks.push(Tok::Pad);
    }
    toks
}

fn ngram_counts<'a, 'b>(tokens: &'b [Tok<'a>], n: usize) -> HashMap<&'b [Tok<'a>], u64> {
    let mut counts: HashMap<&'b [Tok<'a>], u64> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU over aligned hypothesis/reference pairs with n-gram orders
/// 1..=`max_n` at uniform weights.
pub fn corpus_bleu_n(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
    max_n: usize,
) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::Invalid(format!(
            "{} hypotheses against {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if hypotheses.is_empty() {
        return Err(Error::Invalid("empty corpus".into()));
    }
    if max_n == 0 {
        return Err(Error::Invalid("max_n must be positive".into()));
    }

    let mut matches = vec![0u64; max_n];
    let mut totals = vec![0u64; max_n];
    let mut hyp_len = 0u64;
    let mut ref_len = 0u64;

    for (hyp, re) in hypotheses.iter().zip(references) {
        let hyp = padded(hyp, max_n);
        let re = padded(re, max_n);
        hyp_len += hyp.len() as u64;
        ref_len += re.len() as u64;
        for n in 1..=max_n {
            let ref_counts = ngram_counts(&re, n);
            for (gram, count) in ngram_counts(&hyp, n) {
                let clip = ref_counts.get(gram).copied().unwrap_or(0);
                matches[n - 1] += count.min(clip);
                totals[n - 1] += count;
            }
        }
    }

    let mut log_precision_sum = 0.0;
    for n in 0..max_n {
        if matches[n] == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (matches[n] as f64 / totals[n] as f64).ln();
    }
    let geometric = (log_precision_sum / max_n as f64).exp();

    let brevity = if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    Ok(100.0 * brevity * geometric)
}

/// Corpus BLEU at the standard order of 4.
pub fn corpus_bleu(hypotheses: &[Vec<String>], references: &[Vec<String>]) -> Result<f64> {
    corpus_bleu_n(hypotheses, references, 4)
}

/// Sentence-level BLEU: the corpus score of a single pair.
pub fn sentence_bleu(hypothesis: &[String], reference: &[String]) -> Result<f64> {
    corpus_bleu(
        std::slice::from_ref(&hypothesis.to_vec()),
        std::slice::from_ref(&reference.to_vec()),
    )
}

/// Percentile bootstrap interval for corpus BLEU: resample sentence pairs
/// with replacement `samples` times and take the empirical `level` interval
/// (nearest rank). Deterministic for a fixed seed.
pub fn bootstrap_ci(
    hypotheses: &[Vec<String>],
    references: &[Vec<String>],
    samples: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64)> {
    if hypotheses.len() != references.len() || hypotheses.is_empty() {
        return Err(Error::Invalid("need a nonempty aligned corpus".into()));
    }
    if !(0.0..1.0).contains(&level) || level <= 0.0 {
        return Err(Error::Invalid(format!("bad confidence level {level}")));
    }
    let n = hypotheses.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scores = Vec::with_capacity(samples);
    let mut hyp_sample: Vec<Vec<String>> = Vec::with_capacity(n);
    let mut ref_sample: Vec<Vec<String>> = Vec::with_capacity(n);
    for _ in 0..samples {
        hyp_sample.clear();
        ref_sample.clear();
        for _ in 0..n {
            let i = rng.random_range(0..n);
            hyp_sample.push(hypotheses[i].clone());
            ref_sample.push(references[i].clone());
        }
        scores.push(corpus_bleu(&hyp_sample, &ref_sample)?);
    }
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok((percentile(&scores, tail), percentile(&scores, 1.0 - tail)))
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if p <= 0.0 {
        return sorted[0];
    }
    let rank = (p * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// One row of the BLEU-vs-fact-count breakdown.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FactCountRow {
    pub fact_count: usize,
    pub instances: usize,
    pub bleu: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// Set when the group is smaller than the configured minimum and the
    /// score should not be trusted.
    pub small_group: bool,
}

/// Group aligned (fact count, hypothesis, reference) triples by fact count
/// and score each group separately.
pub fn bleu_by_fact_count(
    items: &[(usize, Vec<String>, Vec<String>)],
    min_group: usize,
    samples: usize,
    seed: u64,
) -> Result<Vec<FactCountRow>> {
    let mut groups: std::collections::BTreeMap<usize, (Vec<Vec<String>>, Vec<Vec<String>>)> =
        std::collections::BTreeMap::new();
    for (count, hyp, re) in items {
        let entry = groups.entry(*count).or_default();
        entry.0.push(hyp.clone());
        entry.1.push(re.clone());
    }
    let mut rows = Vec::with_capacity(groups.len());
    for (fact_count, (hyps, refs)) in groups {
        let bleu = corpus_bleu(&hyps, &refs)?;
        let (ci_lo, ci_hi) = bootstrap_ci(&hyps, &refs, samples, 0.95, seed ^ fact_count as u64)?;
        rows.push(FactCountRow {
            fact_count,
            instances: hyps.len(),
            bleu,
            ci_lo,
            ci_hi,
            small_group: hyps.len() < min_group,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sent(tokens: &[&str]) -> Vec<String> {
        tokens.iter().map(|s| s.to_string()).collect()
    }

    /// Brute-force oracle: enumerate n-grams as joined strings and apply the
    /// BLEU definition directly. Kept deliberately naive and separate from
    /// the implementation above.
    fn oracle_bleu(hyps: &[Vec<String>], refs: &[Vec<String>]) -> f64 {
        let pad = |s: &[String]| -> Vec<String> {
            let mut v: Vec<String> = s.iter().map(|t| format!("w:{t}")).collect();
            while v.len() < 4 {
                v.push(format!("p:{}", "pad"));
            }
            v
        };
        let mut c = 0.0;
        let mut r = 0.0;
        let mut precisions = Vec::new();
        for n in 1..=4usize {
            let mut num = 0.0;
            let mut den = 0.0;
            for (h, g) in hyps.iter().zip(refs) {
                let h = pad(h);
                let g = pad(g);
                if n == 1 {
                    c += h.len() as f64;
                    r += g.len() as f64;
                }
                let grams = |s: &[String]| -> Vec<String> {
                    (0..s.len() + 1 - n).map(|i| s[i..i + n].join(" ")).collect()
                };
                let hg = grams(&h);
                let gg = grams(&g);
                for gram in hg.iter().collect::<std::collections::BTreeSet<_>>() {
                    let hc = hg.iter().filter(|x| x == &gram).count();
                    let gc = gg.iter().filter(|x| x == &gram).count();
                    num += hc.min(gc) as f64;
                }
                den += hg.len() as f64;
            }
            precisions.push(num / den);
        }
        if precisions.iter().any(|&p| p == 0.0) {
            return 0.0;
        }
        let gm = (precisions.iter().map(|p| p.ln()).sum::<f64>() / 4.0).exp();
        let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
        100.0 * bp * gm
    }

    #[test]
    fn identical_corpora_score_100() {
        let refs = vec![sent(&["a", "b", "c", "d", "e"]), sent(&["x", "y"])];
        assert_relative_eq!(corpus_bleu(&refs, &refs).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_four_gram_precision_zeroes_the_score() {
        // p1 = 3/4, p2 = 2/3, p3 = 1/2, p4 = 0.
        let hyp = vec![sent(&["a", "b", "c", "d"])];
        let re = vec![sent(&["a", "b", "c", "e"])];
        assert_eq!(corpus_bleu(&hyp, &re).unwrap(), 0.0);
        assert_eq!(oracle_bleu(&hyp, &re), 0.0);
    }

    #[test]
    fn brevity_penalty_on_short_hypothesis() {
        // All n-gram precisions are 1; only the brevity penalty bites:
        // exp(1 - 5/4) = 0.7788...
        let hyp = vec![sent(&["a", "b", "c", "d"])];
        let re = vec![sent(&["a", "b", "c", "d", "e"])];
        let got = corpus_bleu(&hyp, &re).unwrap();
        assert_relative_eq!(got, oracle_bleu(&hyp, &re), epsilon = 1e-9);
        assert_relative_eq!(got, 100.0 * (1.0f64 - 5.0 / 4.0).exp(), epsilon = 1e-9);
    }

    #[test]
    fn matches_oracle_on_mixed_corpus() {
        let hyps = vec![
            sent(&["the", "cat", "sat", "on", "the", "mat"]),
            sent(&["a", "b"]),
            sent(&["x", "y", "z", "w", "v"]),
        ];
        let refs = vec![
            sent(&["the", "cat", "sat", "on", "a", "mat"]),
            sent(&["a", "b"]),
            sent(&["x", "y", "z", "q", "v", "u"]),
        ];
        assert_relative_eq!(
            corpus_bleu(&hyps, &refs).unwrap(),
            oracle_bleu(&hyps, &refs),
            epsilon = 1e-9
        );
    }

    #[test]
    fn short_identical_pairs_still_score_100() {
        // Padding applies to both sides, and pad matches pad.
        let refs = vec![sent(&["hi"])];
        assert_relative_eq!(corpus_bleu(&refs, &refs).unwrap(), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn pad_never_matches_a_real_token() {
        let hyp = vec![sent(&["a"])];
        let re = vec![sent(&["a", "b", "c", "d"])];
        // Hypothesis pads to [a PAD PAD PAD]; only "a" matches.
        let got = corpus_bleu(&hyp, &re).unwrap();
        assert_eq!(got, 0.0); // no bigram match: (a, PAD) != (a, b)
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let hyp = vec![sent(&["a"])];
        assert!(corpus_bleu(&hyp, &[]).is_err());
    }

    #[test]
    fn permutation_invariance() {
        let hyps = vec![sent(&["a", "b", "c", "d"]), sent(&["e", "f", "g", "h"])];
        let refs = vec![sent(&["a", "b", "c", "x"]), sent(&["e", "f", "g", "h"])];
        let a = corpus_bleu(&hyps, &refs).unwrap();
        let hyps_r: Vec<_> = hyps.iter().rev().cloned().collect();
        let refs_r: Vec<_> = refs.iter().rev().cloned().collect();
        let b = corpus_bleu(&hyps_r, &refs_r).unwrap();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn bootstrap_degenerate_on_constant_data() {
        let refs = vec![sent(&["a", "b", "c", "d"]); 5];
        let (lo, hi) = bootstrap_ci(&refs, &refs, 200, 0.95, 7).unwrap();
        assert_eq!((lo, hi), (100.0, 100.0));
    }

    #[test]
    fn bootstrap_deterministic_per_seed() {
        let hyps = vec![
            sent(&["a", "b", "c", "d"]),
            sent(&["e", "f", "g", "h"]),
            sent(&["i", "j", "k", "l"]),
        ];
        let refs = vec![
            sent(&["a", "b", "c", "d"]),
            sent(&["e", "f", "x", "h"]),
            sent(&["i", "j", "k", "l"]),
        ];
        let a = bootstrap_ci(&hyps, &refs, 100, 0.95, 42).unwrap();
        let b = bootstrap_ci(&hyps, &refs, 100, 0.95, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_matches_exhaustive_enumeration_on_three_pairs() {
        // With 3 pairs there are 3^3 = 27 equally likely resamples. The
        // sampled percentile bounds must land on atoms adjacent to the exact
        // distribution's percentile bounds.
        let hyps = vec![
            sent(&["a", "b", "c", "d"]),
            sent(&["a", "b", "c", "d"]),
            sent(&["x", "y", "z", "w"]),
        ];
        let refs = vec![
            sent(&["a", "b", "c", "d"]),
            sent(&["a", "b", "x", "d"]),
            sent(&["x", "q", "z", "w"]),
        ];
        let mut atoms = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let hs = vec![hyps[i].clone(), hyps[j].clone(), hyps[k].clone()];
                    let rs = vec![refs[i].clone(), refs[j].clone(), refs[k].clone()];
                    atoms.push(corpus_bleu(&hs, &rs).unwrap());
                }
            }
        }
        atoms.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let exact_lo = atoms[((0.025 * 27.0) as f64).ceil().max(1.0) as usize - 1];
        let exact_hi = atoms[((0.975 * 27.0) as f64).ceil() as usize - 1];
        let (lo, hi) = bootstrap_ci(&hyps, &refs, 2000, 0.95, 11).unwrap();
        // Allow one atom of discretization either way.
        let near = |x: f64, target: f64| {
            let pos = atoms.iter().position(|&a| (a - target).abs() < 1e-12).unwrap();
            let lo_ok = pos > 0 && (atoms[pos - 1] - x).abs() < 1e-12;
            let hi_ok = pos + 1 < atoms.len() && (atoms[pos + 1] - x).abs() < 1e-12;
            (x - target).abs() < 1e-12 || lo_ok || hi_ok
        };
        assert!(near(lo, exact_lo), "lo {lo} vs exact {exact_lo}");
        assert!(near(hi, exact_hi), "hi {hi} vs exact {exact_hi}");
    }

    #[test]
    fn fact_count_single_group_equals_corpus_bleu() {
        let hyps = vec![sent(&["a", "b", "c", "d"]), sent(&["e", "f", "g", "h"])];
        let refs = vec![sent(&["a", "b", "c", "d"]), sent(&["e", "f", "g", "x"])];
        let items: Vec<_> = hyps
            .iter()
            .zip(&refs)
            .map(|(h, r)| (6usize, h.clone(), r.clone()))
            .collect();
        let rows = bleu_by_fact_count(&items, 5, 50, 3).unwrap();
        assert_eq!(rows.len(), 1);
        assert_relative_eq!(
            rows[0].bleu,
            corpus_bleu(&hyps, &refs).unwrap(),
            epsilon = 1e-12
        );
        assert!(rows[0].small_group);
    }

    #[test]
    fn fact_count_groups_score_independently() {
        let perfect = sent(&["a", "b", "c", "d"]);
        let items = vec![
            (6usize, perfect.clone(), perfect.clone()),
            (6, perfect.clone(), perfect.clone()),
            (8, perfect.clone(), perfect.clone()),
        ];
        let rows = bleu_by_fact_count(&items, 1, 20, 5).unwrap();
        assert_eq!(rows.len(), 2);
        for row in rows {
            assert_relative_eq!(row.bleu, 100.0, epsilon = 1e-9);
            assert!(!row.small_group);
        }
    }

    /// Hand-built two-group case checked against per-group oracle scores.
    #[test]
    fn fact_count_matches_per_group_oracle() {
        let g1_h = vec![sent(&["a", "b", "c", "d"]), sent(&["a", "b", "c", "e"])];
        let g1_r = vec![sent(&["a", "b", "c", "d"]), sent(&["a", "b", "c", "d"])];
        let g2_h = vec![sent(&["p", "q", "r", "s", "t"])];
        let g2_r = vec![sent(&["p", "q", "r", "s", "u"])];
        let mut items = Vec::new();
        for (h, r) in g1_h.iter().zip(&g1_r) {
            items.push((5usize, h.clone(), r.clone()));
        }
        for (h, r) in g2_h.iter().zip(&g2_r) {
            items.push((7usize, h.clone(), r.clone()));
        }
        let rows = bleu_by_fact_count(&items, 1, 20, 5).unwrap();
        assert_relative_eq!(rows[0].bleu, oracle_bleu(&g1_h, &g1_r), epsilon = 1e-9);
        assert_relative_eq!(rows[1].bleu, oracle_bleu(&g2_h, &g2_r), epsilon = 1e-9);
    }
}
