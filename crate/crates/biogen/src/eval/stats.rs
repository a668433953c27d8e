//! Preference-vote aggregation and the one-way chi-square test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One crowd comparison: votes name the preferred system of `pair`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceItem {
    pub id: u64,
    pub pair: [String; 2],
    pub votes: Vec<String>,
}

/// Per-item majorities plus the overall agreement rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PreferenceSummary {
    /// Majority label per item; `None` marks a tie.
    pub majorities: Vec<Option<String>>,
    pub ties: usize,
    /// Mean fraction of votes that match their item's majority, over items
    /// that have one (0 when every item is tied).
    pub agreement: f64,
}

/// Majority vote per item. Ties are flagged and excluded from both the
/// majority tallies and the agreement rate.
pub fn aggregate_preferences(votes_per_item: &[Vec<String>]) -> Result<PreferenceSummary> {
    if votes_per_item.iter().any(|v| v.is_empty()) {
        return Err(Error::Invalid("every item needs at least one vote".into()));
    }
    let mut majorities = Vec::with_capacity(votes_per_item.len());
    let mut ties = 0;
    let mut agreement_sum = 0.0;
    let mut agreement_n = 0usize;
    for votes in votes_per_item {
        let mut counts: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
        for v in votes {
            *counts.entry(v.as_str()).or_insert(0) += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        let leaders: Vec<&str> = counts
            .iter()
            .filter(|(_, &c)| c == best)
            .map(|(&l, _)| l)
            .collect();
        if leaders.len() == 1 {
            majorities.push(Some(leaders[0].to_string()));
            agreement_sum += best as f64 / votes.len() as f64;
            agreement_n += 1;
        } else {
            majorities.push(None);
            ties += 1;
        }
    }
    let agreement = if agreement_n == 0 {
        0.0
    } else {
        agreement_sum / agreement_n as f64
    };
    Ok(PreferenceSummary {
        majorities,
        ties,
        agreement,
    })
}

/// One-way chi-square test against a uniform split of the total. Returns the
/// statistic and the upper-tail p-value at `k - 1` degrees of freedom.
pub fn chi_square_one_way(observed: &[u64]) -> Result<(f64, f64)> {
    if observed.len() < 2 {
        return Err(Error::Invalid("need at least 2 cells".into()));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::Invalid("all-zero counts".into()));
    }
    let expected = total as f64 / observed.len() as f64;
    let statistic: f64 = observed
        .iter()
        .map(|&o| {
            let d = o as f64 - expected;
            d * d / expected
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    let p = regularized_gamma_q(dof / 2.0, statistic / 2.0)?;
    Ok((statistic, p))
}

/// Upper regularized incomplete gamma Q(a, x) = Γ(a, x) / Γ(a), via the
/// usual series (x < a + 1) / continued-fraction (x >= a + 1) split.
pub fn regularized_gamma_q(a: f64, x: f64) -> Result<f64> {
    if a <= 0.0 || x < 0.0 {
        return Err(Error::Numeric(format!("gamma_q out of domain: a={a} x={x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_p_series(a, x))
    } else {
        Ok(gamma_q_cf(a, x))
    }
}

const GAMMA_EPS: f64 = 1e-15;
const GAMMA_ITERS: usize = 500;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut term = sum;
    for _ in 0..GAMMA_ITERS {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * GAMMA_EPS {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_cf(a: f64, x: f64) -> f64 {
    const FPMIN: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=GAMMA_ITERS {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < GAMMA_EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Lanczos approximation of ln Γ(z) for z > 0.
fn ln_gamma(z: f64) -> f64 {
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    const G: f64 = 7.0;
    if z < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * z).sin()).ln() - ln_gamma(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = COEFFS[0];
    for (i, &c) in COEFFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn uniform_counts_give_zero_statistic_and_p_one() {
        let (stat, p) = chi_square_one_way(&[50, 50]).unwrap();
        assert_eq!(stat, 0.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn paper_style_preference_split_is_significant() {
        let (_, p) = chi_square_one_way(&[61, 21]).unwrap();
        assert!(p < 0.05, "p = {p}");
    }

    #[test]
    fn ten_zero_matches_gamma_oracle() {
        let (stat, p) = chi_square_one_way(&[10, 0]).unwrap();
        assert_eq!(stat, 10.0);
        // Frozen from the independent chi-square CDF below.
        assert_relative_eq!(p, 0.001565402258002549, epsilon = 1e-9);
        let oracle = 1.0 - ChiSquared::new(1.0).unwrap().cdf(10.0);
        assert_relative_eq!(p, oracle, epsilon = 1e-10);
    }

    #[test]
    fn p_values_match_statrs_across_dofs() {
        for k in 2..8usize {
            for &stat in &[0.5f64, 1.0, 3.7, 12.0, 25.0] {
                let counts: Vec<u64> = vec![10; k];
                let (_, _) = chi_square_one_way(&counts).unwrap();
                let p = regularized_gamma_q((k as f64 - 1.0) / 2.0, stat / 2.0).unwrap();
                let oracle = 1.0 - ChiSquared::new(k as f64 - 1.0).unwrap().cdf(stat);
                assert_relative_eq!(p, oracle, epsilon = 1e-9, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn p_decreases_with_skew() {
        let mut last = f64::INFINITY;
        for d in 0..=50u64 {
            let (_, p) = chi_square_one_way(&[50 + d, 50 - d]).unwrap();
            assert!(p <= last + 1e-15, "d={d}: {p} > {last}");
            last = p;
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(chi_square_one_way(&[5]).is_err());
        assert!(chi_square_one_way(&[0, 0]).is_err());
    }

    #[test]
    fn majority_and_agreement() {
        let votes = vec![vec!["A".to_string(), "A".into(), "B".into()]];
        let summary = aggregate_preferences(&votes).unwrap();
        assert_eq!(summary.majorities, vec![Some("A".to_string())]);
        assert_relative_eq!(summary.agreement, 2.0 / 3.0);
    }

    #[test]
    fn unanimous_votes_agree_fully() {
        let votes = vec![
            vec!["A".to_string(), "A".into()],
            vec!["B".to_string(), "B".into(), "B".into()],
        ];
        let summary = aggregate_preferences(&votes).unwrap();
        assert_eq!(summary.ties, 0);
        assert_relative_eq!(summary.agreement, 1.0);
    }

    #[test]
    fn ties_flagged_and_excluded() {
        let votes = vec![
            vec!["A".to_string(), "B".into()],
            vec!["A".to_string(), "A".into(), "B".into()],
        ];
        let summary = aggregate_preferences(&votes).unwrap();
        assert_eq!(summary.majorities[0], None);
        assert_eq!(summary.ties, 1);
        assert_relative_eq!(summary.agreement, 2.0 / 3.0);
    }

    #[test]
    fn empty_vote_list_is_an_error() {
        assert!(aggregate_preferences(&[vec![]]).is_err());
    }
}
