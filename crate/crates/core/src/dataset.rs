//! Implicit-feedback interaction data: dense re-indexing, per-user train/test
//! split and item popularity.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// One rating event after dense re-indexing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

/// Maps dense indices back to the identifiers found in the source file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    pub users: Vec<u64>,
    pub items: Vec<u64>,
}

impl IdMap {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }
}

/// Raw ratings plus the id maps used to re-index them.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTable {
    pub records: Vec<RatingRecord>,
    pub ids: IdMap,
}

/// An un-indexed rating as it appears in a source file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRating {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: Option<i64>,
}

impl RatingTable {
    /// Re-indexes users and items densely in ascending order of their raw ids.
    pub fn from_raw(raw: &[RawRating]) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut users = BTreeMap::new();
        let mut items = BTreeMap::new();
        for r in raw {
            if !r.rating.is_finite() {
                return Err(Error::config("rating", "ratings must be finite"));
            }
            users.insert(r.user, 0u32);
            items.insert(r.item, 0u32);
        }
        for (dense, v) in users.values_mut().enumerate() {
            *v = dense as u32;
        }
        for (dense, v) in items.values_mut().enumerate() {
            *v = dense as u32;
        }
        let records = raw
            .iter()
            .map(|r| RatingRecord {
                user: users[&r.user],
                item: items[&r.item],
                rating: r.rating,
                timestamp: r.timestamp,
            })
            .collect();
        Ok(RatingTable {
            records,
            ids: IdMap {
                users: users.into_keys().collect(),
                items: items.into_keys().collect(),
            },
        })
    }
}

/// Counts of what the split had to discard.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    /// Users in the index space without any interaction.
    pub excluded_users: usize,
    /// Test pairs whose item never occurs in the training split.
    pub dropped_test_items: usize,
    /// Repeated (user, item) pairs collapsed into one interaction.
    pub duplicate_pairs: usize,
}

/// Per-user positive item sets for training and test.
///
/// Item lists are sorted and duplicate free; train and test are disjoint per
/// user. The un-interacted set of a user is the complement of its training
/// positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    train: Vec<Vec<u32>>,
    test: Vec<Vec<u32>>,
}

impl InteractionDataset {
    /// Builds a dataset from explicit per-user lists, validating every invariant.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        mut train: Vec<Vec<u32>>,
        mut test: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if train.len() != num_users || test.len() != num_users {
            return Err(Error::config("num_users", "per-user lists do not match the user count"));
        }
        for (tr, te) in train.iter_mut().zip(test.iter_mut()) {
            for list in [&mut *tr, &mut *te] {
                list.sort_unstable();
                let before = list.len();
                list.dedup();
                if list.len() != before {
                    return Err(Error::config("split", "duplicate item in a user's split"));
                }
                if let Some(&last) = list.last() {
                    if last as usize >= num_items {
                        return Err(Error::IndexOutOfRange {
                            what: "item",
                            index: last as usize,
                            len: num_items,
                        });
                    }
                }
            }
            if te.iter().any(|i| tr.binary_search(i).is_ok()) {
                return Err(Error::config("split", "train and test overlap"));
            }
            if tr.is_empty() && !te.is_empty() {
                return Err(Error::config("split", "user has test items but no training items"));
            }
        }
        if train.iter().all(Vec::is_empty) {
            return Err(Error::EmptyDataset);
        }
        Ok(InteractionDataset { num_users, num_items, train, test })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn train_items(&self, user: usize) -> &[u32] {
        &self.train[user]
    }

    pub fn test_items(&self, user: usize) -> &[u32] {
        &self.test[user]
    }

    /// Test positives of every user, indexed by user.
    pub fn test_sets(&self) -> &[Vec<u32>] {
        &self.test
    }

    pub fn num_train(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn num_test(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn is_train_positive(&self, user: usize, item: u32) -> bool {
        self.train[user].binary_search(&item).is_ok()
    }

    pub fn is_test_positive(&self, user: usize, item: u32) -> bool {
        self.test[user].binary_search(&item).is_ok()
    }

    /// Items the user has not interacted with in training, ascending.
    pub fn uninteracted(&self, user: usize) -> Vec<u32> {
        let pos = &self.train[user];
        let mut out = Vec::with_capacity(self.num_items - pos.len());
        let mut next = pos.iter().peekable();
        for i in 0..self.num_items as u32 {
            if next.peek() == Some(&&i) {
                next.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    /// All training (user, item) pairs in user-major order.
    pub fn train_pairs(&self) -> Vec<(u32, u32)> {
        self.train
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u as u32, i)))
            .collect()
    }
}

/// Converts ratings to implicit positives and splits each user's items at random.
///
/// Every rated pair is a positive regardless of the rating value. A user with
/// `n` interactions keeps `round(split_ratio * n)` of them for training, but
/// never fewer than one. Test items that end up with no training interaction
/// anywhere are dropped and counted.
pub fn to_implicit_and_split(
    records: &[RatingRecord],
    num_users: usize,
    num_items: usize,
    split_ratio: f64,
    seed: u64,
) -> Result<(InteractionDataset, SplitReport)> {
    if !(split_ratio > 0.0 && split_ratio < 1.0) {
        return Err(Error::config("split_ratio", "must be in (0, 1)"));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut per_user: Vec<Vec<u32>> = vec![Vec::new(); num_users];
    for r in records {
        let u = r.user as usize;
        if u >= num_users {
            return Err(Error::IndexOutOfRange { what: "user", index: u, len: num_users });
        }
        if r.item as usize >= num_items {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: r.item as usize,
                len: num_items,
            });
        }
        per_user[u].push(r.item);
    }

    let mut report = SplitReport::default();
    let mut rng = rng::stream(seed, rng::SPLIT);
    let mut train = Vec::with_capacity(num_users);
    let mut test = Vec::with_capacity(num_users);
    for mut items in per_user {
        items.sort_unstable();
        let before = items.len();
        items.dedup();
        report.duplicate_pairs += before - items.len();
        if items.is_empty() {
            report.excluded_users += 1;
            train.push(Vec::new());
            test.push(Vec::new());
            continue;
        }
        items.shuffle(&mut rng);
        let n = items.len();
        let n_train = (libm::round(split_ratio * n as f64) as usize).clamp(1, n);
        let mut te = items.split_off(n_train);
        items.sort_unstable();
        te.sort_unstable();
        train.push(items);
        test.push(te);
    }

    let mut seen = vec![false; num_items];
    for items in &train {
        for &i in items {
            seen[i as usize] = true;
        }
    }
    for te in &mut test {
        let before = te.len();
        te.retain(|&i| seen[i as usize]);
        report.dropped_test_items += before - te.len();
    }

    Ok((InteractionDataset::from_parts(num_users, num_items, train, test)?, report))
}

/// Training-split item popularity and its hot/cold partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopularityProfile {
    pub pop: Vec<u32>,
    pub pop_max: u32,
    pub hot_quantile: f64,
    /// Hot items ordered by descending popularity, ties by ascending index.
    pub hot_items: Vec<u32>,
    hot: Vec<bool>,
}

impl PopularityProfile {
    pub fn is_hot(&self, item: u32) -> bool {
        self.hot[item as usize]
    }

    pub fn num_items(&self) -> usize {
        self.pop.len()
    }
}

/// Counts training interactions per item and marks the top `hot_quantile`
/// fraction of items with non-zero popularity as hot.
///
/// The hot set has exactly `ceil(hot_quantile * n_active)` items, where
/// `n_active` counts items seen in training; equal counts are broken by
/// ascending item index.
pub fn popularity_profile(dataset: &InteractionDataset, hot_quantile: f64) -> Result<PopularityProfile> {
    if !(hot_quantile > 0.0 && hot_quantile < 1.0) {
        return Err(Error::config("hot_quantile", "must be in (0, 1)"));
    }
    let mut pop = vec![0u32; dataset.num_items()];
    for u in 0..dataset.num_users() {
        for &i in dataset.train_items(u) {
            pop[i as usize] += 1;
        }
    }
    let pop_max = pop.iter().copied().max().unwrap_or(0);
    if pop_max == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut active: Vec<u32> = (0..pop.len() as u32).filter(|&i| pop[i as usize] > 0).collect();
    active.sort_by(|&a, &b| pop[b as usize].cmp(&pop[a as usize]).then(a.cmp(&b)));
    // The epsilon keeps products such as 0.15 * 100 = 15.000000000000002 from rounding up.
    let n_hot = (libm::ceil(hot_quantile * active.len() as f64 - 1e-9) as usize).clamp(1, active.len());
    active.truncate(n_hot);
    let mut hot = vec![false; pop.len()];
    for &i in &active {
        hot[i as usize] = true;
    }
    Ok(PopularityProfile { pop, pop_max, hot_quantile, hot_items: active, hot })
}
