//! Dataset filtering, slot-frequency ordering, and the train/dev/test split.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::record::{BiographyInstance, Slot, TITLE_SLOT};
use crate::error::{Error, Result};

/// Filtering and splitting knobs. Defaults mirror the reference corpus:
/// sentences of 10-37 tokens, at least 6 facts, the 15 most frequent slots,
/// and an 80/10/10 split.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub min_len: usize,
    pub max_len: usize,
    pub min_facts: usize,
    pub top_k_slots: usize,
    pub split_ratios: [f64; 3],
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            min_len: 10,
            max_len: 37,
            min_facts: 6,
            top_k_slots: 15,
            split_ratios: [0.8, 0.1, 0.1],
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_len > self.max_len {
            return Err(Error::Invalid(format!(
                "min_len {} exceeds max_len {}",
                self.min_len, self.max_len
            )));
        }
        if self.min_facts < 1 {
            return Err(Error::Invalid("min_facts must be at least 1".into()));
        }
        let sum: f64 = self.split_ratios.iter().sum();
        if self.split_ratios.iter().any(|&r| r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "split ratios {:?} must be positive and sum to 1",
                self.split_ratios
            )));
        }
        Ok(())
    }
}

/// Per-slot frequency table. Ordering is descending count with lexicographic
/// tie-breaks, which is also the fact order used for linearization.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SlotTable {
    entries: Vec<(Slot, u64)>,
}

impl SlotTable {
    pub fn from_counts(counts: HashMap<Slot, u64>) -> SlotTable {
        let mut entries: Vec<(Slot, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        SlotTable { entries }
    }

    /// Count instances mentioning each slot (the title counts as a `TITLE`
    /// fact on every instance; repeated slots count once per occurrence).
    pub fn count(instances: &[BiographyInstance]) -> SlotTable {
        let mut counts: HashMap<Slot, u64> = HashMap::new();
        let title = Slot::new(TITLE_SLOT).expect("TITLE is a valid slot");
        for inst in instances {
            *counts.entry(title.clone()).or_insert(0) += 1;
            for fact in &inst.record.facts {
                *counts.entry(fact.slot.clone()).or_insert(0) += 1;
            }
        }
        SlotTable::from_counts(counts)
    }

    pub fn entries(&self) -> &[(Slot, u64)] {
        &self.entries
    }

    pub fn count_of(&self, slot: &Slot) -> u64 {
        self.entries
            .iter()
            .find(|(s, _)| s == slot)
            .map(|(_, c)| *c)
            .unwrap_or(0)
    }

    /// The `k` most frequent slots.
    pub fn top_k(&self, k: usize) -> Vec<Slot> {
        self.entries.iter().take(k).map(|(s, _)| s.clone()).collect()
    }

    /// Rank for ordering facts: unseen slots go last, alphabetically.
    fn rank_key(&self, slot: &Slot) -> (std::cmp::Reverse<u64>, Slot) {
        (std::cmp::Reverse(self.count_of(slot)), slot.clone())
    }

    /// Stable-sort a record's facts by descending slot frequency, ties broken
    /// by slot name. Repeated slots keep their source order.
    pub fn order_facts(&self, instance: &mut BiographyInstance) {
        instance
            .record
            .facts
            .sort_by_key(|f| self.rank_key(&f.slot));
    }
}

/// Counts of what the filters kept and dropped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FilterStats {
    pub input: usize,
    pub kept: usize,
    pub dropped_short: usize,
    pub dropped_long: usize,
    pub dropped_few_facts: usize,
}

/// A filtered, ordered, split dataset together with the slot table that
/// fixes linearization order.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub train: Vec<BiographyInstance>,
    pub dev: Vec<BiographyInstance>,
    pub test: Vec<BiographyInstance>,
    pub slot_table: SlotTable,
    pub stats: FilterStats,
}

impl PreparedDataset {
    pub fn split(&self, name: &str) -> Option<&[BiographyInstance]> {
        match name {
            "train" => Some(&self.train),
            "dev" => Some(&self.dev),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Nearest-rank percentiles of sentence token counts. `lo` and `hi` are
/// fractions in `[0, 1]`; the returned bounds are the lengths at those ranks.
pub fn compute_length_percentiles(
    raw: &[BiographyInstance],
    lo: f64,
    hi: f64,
) -> Result<(usize, usize)> {
    if raw.is_empty() {
        return Err(Error::Invalid("no instances to take percentiles of".into()));
    }
    if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo >= hi {
        return Err(Error::Invalid(format!(
            "percentile bounds ({lo}, {hi}) must satisfy 0 <= lo < hi <= 1"
        )));
    }
    let mut lengths: Vec<usize> = raw.iter().map(|i| i.sentence_tokens.len()).collect();
    lengths.sort_unstable();
    Ok((nearest_rank(&lengths, lo), nearest_rank(&lengths, hi)))
}

fn nearest_rank(sorted: &[usize], p: f64) -> usize {
    if p <= 0.0 {
        return sorted[0];
    }
    let n = sorted.len() as f64;
    let rank = (p * n).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Largest-remainder split sizes: each size differs from the exact ratio
/// product by less than 1.
fn split_sizes(n: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = ratios.iter().map(|r| r * n as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|&e| e.floor() as usize).collect();
    let mut leftover = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in &order {
        if leftover == 0 {
            break;
        }
        sizes[i] += 1;
        leftover -= 1;
    }
    [sizes[0], sizes[1], sizes[2]]
}

/// Filter, shuffle and split raw instances.
///
/// Facts are first restricted to the `top_k_slots` most frequent slots
/// (counted over the raw collection); instances are then dropped when the
/// sentence length falls outside `[min_len, max_len]` or fewer than
/// `min_facts` facts remain (the title counts as one). Survivors are
/// shuffled by a generator seeded with `cfg.seed` and partitioned by the
/// split ratios. The slot table persisted for linearization ordering is
/// re-counted on the train portion only, and every split's facts are ordered
/// by it.
pub fn prepare_dataset(raw: Vec<BiographyInstance>, cfg: &DatasetConfig) -> Result<PreparedDataset> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::Invalid("raw dataset is empty".into()));
    }

    let mut stats = FilterStats {
        input: raw.len(),
        ..FilterStats::default()
    };

    let raw_table = SlotTable::count(&raw);
    let keep_slots = raw_table.top_k(cfg.top_k_slots);

    let mut kept: Vec<BiographyInstance> = Vec::new();
    for mut inst in raw {
        inst.record.facts.retain(|f| keep_slots.contains(&f.slot));
        let len = inst.sentence_tokens.len();
        if len < cfg.min_len {
            stats.dropped_short += 1;
        } else if len > cfg.max_len {
            stats.dropped_long += 1;
        } else if inst.record.fact_count() < cfg.min_facts {
            stats.dropped_few_facts += 1;
        } else {
            kept.push(inst);
        }
    }
    stats.kept = kept.len();
    if kept.is_empty() {
        return Err(Error::Invalid(format!(
            "all {} instances were filtered out (short {}, long {}, too few facts {})",
            stats.input, stats.dropped_short, stats.dropped_long, stats.dropped_few_facts
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    kept.shuffle(&mut rng);

    let [n_train, n_dev, _] = split_sizes(kept.len(), &cfg.split_ratios);
    let mut train: Vec<BiographyInstance> = kept.drain(..n_train).collect();
    let mut dev: Vec<BiographyInstance> = kept.drain(..n_dev).collect();
    let mut test = kept;

    let slot_table = SlotTable::count(&train);
    for inst in train.iter_mut().chain(dev.iter_mut()).chain(test.iter_mut()) {
        slot_table.order_facts(inst);
    }

    Ok(PreparedDataset {
        train,
        dev,
        test,
        slot_table,
        stats,
    })
}
