//! Top-k ranking metrics, popularity-bias rates, FPR/FNR, MSE and partial AUC.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::{InteractionDataset, PopularityProfile};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::model::FactorModel;
use crate::rng;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub user: usize,
    /// Highest score first.
    pub items: Vec<u32>,
}

/// The `k` highest-scored items outside the user's training positives.
/// Equal scores are ordered by ascending item index.
pub fn topk(model: &FactorModel, dataset: &InteractionDataset, user: usize, k: usize) -> Result<RecommendationList> {
    if user >= dataset.num_users() || user >= model.num_users() {
        return Err(Error::IndexOutOfRange { what: "user", index: user, len: dataset.num_users() });
    }
    if model.num_items() != dataset.num_items() {
        return Err(Error::config("model", "item count differs from the dataset"));
    }
    let mut scores = Vec::new();
    model.user_scores(user, &mut scores);
    let mut cand: Vec<(f64, u32)> = (0..dataset.num_items() as u32)
        .filter(|&i| !dataset.is_train_positive(user, i))
        .map(|i| (scores[i as usize], i))
        .collect();
    let order = |a: &(f64, u32), b: &(f64, u32)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        if k > 0 {
            cand.select_nth_unstable_by(k - 1, order);
        }
        cand.truncate(k);
    }
    cand.sort_unstable_by(order);
    Ok(RecommendationList { user, items: cand.into_iter().map(|(_, i)| i).collect() })
}

pub fn recommend_all(model: &FactorModel, dataset: &InteractionDataset, k: usize) -> Result<Vec<RecommendationList>> {
    (0..dataset.num_users()).map(|u| topk(model, dataset, u, k)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ndcg: f64,
    /// Users with a non-empty test set.
    pub users: usize,
}

/// Precision, recall, F1 and NDCG at `k`, averaged over users whose test set
/// is non-empty. `test_sets` is indexed by user and must be sorted.
pub fn ranking_metrics<T: AsRef<[u32]>>(rec_lists: &[RecommendationList], test_sets: &[T], k: usize) -> Result<RankingMetrics> {
    if k == 0 {
        return Err(Error::config("k", "must be at least 1"));
    }
    let mut sum = [0.0; 4];
    let mut users = 0;
    for rec in rec_lists {
        if rec.items.len() > k {
            return Err(Error::config("k", "recommendation list longer than k"));
        }
        let test = test_sets.get(rec.user).map(AsRef::as_ref).unwrap_or(&[]);
        if test.is_empty() {
            continue;
        }
        users += 1;
        let mut hits = 0usize;
        let mut dcg = 0.0;
        for (pos, item) in rec.items.iter().enumerate() {
            if test.binary_search(item).is_ok() {
                hits += 1;
                dcg += 1.0 / libm::log2(pos as f64 + 2.0);
            }
        }
        let idcg: f64 = (0..k.min(test.len())).map(|p| 1.0 / libm::log2(p as f64 + 2.0)).sum();
        let p = hits as f64 / k as f64;
        let r = hits as f64 / test.len() as f64;
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        sum[0] += p;
        sum[1] += r;
        sum[2] += f1;
        sum[3] += dcg / idcg;
    }
    let n = users.max(1) as f64;
    Ok(RankingMetrics { precision: sum[0] / n, recall: sum[1] / n, f1: sum[2] / n, ndcg: sum[3] / n, users })
}

/// Popularity-bias rates over pooled (user, item) pairs.
///
/// `uhr` and `ucr` divide by the recommended hot/cold count; `uhr_alt` and
/// `ucr_alt` divide by the held-out hot/cold count instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasMetrics {
    pub ohr: f64,
    pub ocr: f64,
    pub uhr: f64,
    pub ucr: f64,
    pub uhr_alt: f64,
    pub ucr_alt: f64,
    /// Names of rates whose denominator was zero (reported as 0).
    pub zero_denominators: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Counts {
    rec: usize,
    rec_miss: usize,
    test: usize,
    test_miss: usize,
}

pub fn bias_metrics<T: AsRef<[u32]>>(
    rec_lists: &[RecommendationList],
    test_sets: &[T],
    profile: &PopularityProfile,
) -> BiasMetrics {
    // Index 0 is hot, 1 is cold.
    let mut c = [Counts::default(); 2];
    for rec in rec_lists {
        let test = test_sets.get(rec.user).map(AsRef::as_ref).unwrap_or(&[]);
        for &i in &rec.items {
            let g = &mut c[usize::from(!profile.is_hot(i))];
            g.rec += 1;
            if test.binary_search(&i).is_err() {
                g.rec_miss += 1;
            }
        }
        for &i in test {
            let g = &mut c[usize::from(!profile.is_hot(i))];
            g.test += 1;
            if !rec.items.contains(&i) {
                g.test_miss += 1;
            }
        }
    }
    let mut zero = Vec::new();
    let mut rate = |num: usize, den: usize, name: &str| {
        if den == 0 {
            zero.push(String::from(name));
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let [hot, cold] = c;
    BiasMetrics {
        ohr: rate(hot.rec_miss, hot.rec, "ohr"),
        ocr: rate(cold.rec_miss, cold.rec, "ocr"),
        uhr: rate(hot.test_miss, hot.rec, "uhr"),
        ucr: rate(cold.test_miss, cold.rec, "ucr"),
        uhr_alt: rate(hot.test_miss, hot.test, "uhr_alt"),
        ucr_alt: rate(cold.test_miss, cold.test, "ucr_alt"),
        zero_denominators: zero,
    }
}

/// Pooled list-level FPR `|S_Rec - S_Test| / |S_Rec|` and FNR
/// `|S_Test - S_Rec| / |S_Test|`.
pub fn fpr_fnr<T: AsRef<[u32]>>(rec_lists: &[RecommendationList], test_sets: &[T]) -> Result<(f64, f64)> {
    let (mut rec, mut fp, mut test, mut fnn) = (0usize, 0usize, 0usize, 0usize);
    for r in rec_lists {
        let t = test_sets.get(r.user).map(AsRef::as_ref).unwrap_or(&[]);
        rec += r.items.len();
        fp += r.items.iter().filter(|i| t.binary_search(i).is_err()).count();
        test += t.len();
        fnn += t.iter().filter(|i| !r.items.contains(i)).count();
    }
    if test == 0 {
        return Err(Error::UndefinedMetric("fnr"));
    }
    if rec == 0 {
        return Err(Error::UndefinedMetric("fpr"));
    }
    Ok((fp as f64 / rec as f64, fnn as f64 / test as f64))
}

/// Mean of `(p - y)^2`.
pub fn mean_squared_error(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedMetric("mse"));
    }
    Ok(pairs.iter().map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MseResult {
    pub mse: f64,
    pub points: usize,
    /// Users whose scores had zero variance and were left out.
    pub skipped_users: usize,
}

/// Per user, scores over the un-interacted items are z-scored and passed
/// through a sigmoid. Test positives carry label 1 and an equal-size seeded
/// sample of the remaining un-interacted items carries label 0.
pub fn mse_metric(model: &FactorModel, dataset: &InteractionDataset, seed: u64) -> Result<MseResult> {
    let mut r = rng::stream(seed, rng::EVAL);
    let mut scores = Vec::new();
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for u in 0..dataset.num_users() {
        let test = dataset.test_items(u);
        if test.is_empty() {
            continue;
        }
        model.user_scores(u, &mut scores);
        let pool = dataset.uninteracted(u);
        let n = pool.len() as f64;
        let mean = pool.iter().map(|&i| scores[i as usize]).sum::<f64>() / n;
        let var = pool.iter().map(|&i| (scores[i as usize] - mean) * (scores[i as usize] - mean)).sum::<f64>() / n;
        if !(var > 0.0) {
            skipped += 1;
            continue;
        }
        let sd = libm::sqrt(var);
        let predict = |i: u32| sigmoid((scores[i as usize] - mean) / sd);
        pairs.extend(test.iter().map(|&i| (predict(i), 1.0)));
        let unlabeled: Vec<u32> = pool.iter().copied().filter(|&i| !dataset.is_test_positive(u, i)).collect();
        let take = test.len().min(unlabeled.len());
        pairs.extend(index::sample(&mut r, unlabeled.len(), take).into_iter().map(|j| (predict(unlabeled[j]), 0.0)));
    }
    Ok(MseResult { mse: mean_squared_error(&pairs)?, points: pairs.len(), skipped_users: skipped })
}

/// Partial AUC against the top `max(1, floor(gamma * |neg|))` negatives.
/// Equal scores count one half.
pub fn partial_auc(pos_scores: &[f64], neg_scores: &[f64], gamma: f64) -> Result<f64> {
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return Err(Error::UndefinedMetric("pauc"));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::config("gamma", "must be in (0, 1]"));
    }
    let keep = ((gamma * neg_scores.len() as f64) as usize).max(1);
    let mut neg = neg_scores.to_vec();
    neg.sort_unstable_by(|a, b| b.total_cmp(a));
    neg.truncate(keep);
    let mut wins = 0.0;
    for &p in pos_scores {
        for &n in &neg {
            wins += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(wins / (pos_scores.len() * neg.len()) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    /// FPR range for the per-user partial AUC; `None` skips it.
    pub pauc_gamma: Option<f64>,
    /// Seed for the label-0 sample of the MSE metric.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { pauc_gamma: Some(0.006), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub ndcg: f64,
    pub ohr: f64,
    pub ocr: f64,
    pub uhr: f64,
    pub ucr: f64,
    pub uhr_alt: f64,
    pub ucr_alt: f64,
    pub fpr: f64,
    pub fnr: f64,
    pub mse: f64,
    pub pauc: Option<f64>,
    pub evaluated_users: usize,
    pub mse_skipped_users: usize,
    pub zero_denominators: Vec<String>,
}

/// Per-user partial AUC of test positives against the remaining
/// un-interacted items, averaged over users with both.
pub fn mean_partial_auc(model: &FactorModel, dataset: &InteractionDataset, gamma: f64) -> Result<f64> {
    let mut scores = Vec::new();
    let (mut sum, mut users) = (0.0, 0usize);
    for u in 0..dataset.num_users() {
        let test = dataset.test_items(u);
        if test.is_empty() {
            continue;
        }
        model.user_scores(u, &mut scores);
        let pos: Vec<f64> = test.iter().map(|&i| scores[i as usize]).collect();
        let neg: Vec<f64> = (0..dataset.num_items() as u32)
            .filter(|&i| !dataset.is_train_positive(u, i) && !dataset.is_test_positive(u, i))
            .map(|i| scores[i as usize])
            .collect();
        if neg.is_empty() {
            continue;
        }
        sum += partial_auc(&pos, &neg, gamma)?;
        users += 1;
    }
    if users == 0 {
        return Err(Error::UndefinedMetric("pauc"));
    }
    Ok(sum / users as f64)
}

/// Every metric at each cut-off in `ks`. MSE and pAUC do not depend on `k`
/// and are computed once.
pub fn evaluate(
    model: &FactorModel,
    dataset: &InteractionDataset,
    profile: &PopularityProfile,
    ks: &[usize],
    options: &EvalOptions,
) -> Result<Vec<EvalReport>> {
    let mse = mse_metric(model, dataset, options.seed)?;
    let pauc = options.pauc_gamma.map(|g| mean_partial_auc(model, dataset, g)).transpose()?;
    let max_k = ks.iter().copied().max().unwrap_or(0);
    let full = recommend_all(model, dataset, max_k)?;
    let tests = dataset.test_sets();
    ks.iter()
        .map(|&k| {
            let recs: Vec<RecommendationList> = full
                .iter()
                .map(|r| RecommendationList { user: r.user, items: r.items[..k.min(r.items.len())].to_vec() })
                .collect();
            let rank = ranking_metrics(&recs, tests, k)?;
            let bias = bias_metrics(&recs, tests, profile);
            let (fpr, fnr) = fpr_fnr(&recs, tests)?;
            Ok(EvalReport {
                schema_version: REPORT_SCHEMA_VERSION,
                k,
                precision: rank.precision,
                recall: rank.recall,
                f1: rank.f1,
                ndcg: rank.ndcg,
                ohr: bias.ohr,
                ocr: bias.ocr,
                uhr: bias.uhr,
                ucr: bias.ucr,
                uhr_alt: bias.uhr_alt,
                ucr_alt: bias.ucr_alt,
                fpr,
                fnr,
                mse: mse.mse,
                pauc,
                evaluated_users: rank.users,
                mse_skipped_users: mse.skipped_users,
                zero_denominators: bias.zero_denominators,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::popularity_profile;
    use alloc::vec;
    use approx::assert_abs_diff_eq;

    fn rl(user: usize, items: &[u32]) -> RecommendationList {
        RecommendationList { user, items: items.to_vec() }
    }

    #[test]
    fn topk_orders_by_score_then_index() {
        let ds = InteractionDataset::from_parts(1, 6, vec![vec![5]], vec![vec![]]).unwrap();
        let mut m = FactorModel::zeros(1, 6, 1).unwrap();
        m.user_mut(0)[0] = 1.0;
        for i in 0..6 {
            m.item_mut(i)[0] = i as f64;
        }
        assert_eq!(topk(&m, &ds, 0, 3).unwrap().items, vec![4, 3, 2]);
        assert_eq!(topk(&m, &ds, 0, 50).unwrap().items, vec![4, 3, 2, 1, 0]);
        m.item_mut(1)[0] = 3.0;
        assert_eq!(topk(&m, &ds, 0, 3).unwrap().items, vec![4, 1, 3]);
        assert!(topk(&m, &ds, 0, 0).unwrap().items.is_empty());
        assert!(topk(&m, &ds, 1, 3).is_err());
    }

    #[test]
    fn perfect_and_empty_lists() {
        let tests = vec![vec![1u32, 2, 3]];
        let perfect = ranking_metrics(&[rl(0, &[1, 2, 3])], &tests, 3).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1, perfect.ndcg), (1.0, 1.0, 1.0, 1.0));
        let none = ranking_metrics(&[rl(0, &[4, 5, 6])], &tests, 3).unwrap();
        assert_eq!((none.precision, none.recall, none.f1, none.ndcg), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn ndcg_hand_computed() {
        let tests = vec![vec![10u32, 30]];
        let m = ranking_metrics(&[rl(0, &[10, 20, 30])], &tests, 3).unwrap();
        let dcg = 1.0 + 1.0 / 4f64.log2();
        let idcg = 1.0 + 1.0 / 3f64.log2();
        assert_abs_diff_eq!(m.ndcg, dcg / idcg, epsilon = 1e-12);
        assert_abs_diff_eq!(m.ndcg, 0.9197, epsilon = 1e-4);
        assert_abs_diff_eq!(m.precision, 2.0 / 3.0, epsilon = 1e-15);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn users_without_test_are_skipped() {
        let tests = vec![vec![1u32], vec![]];
        let m = ranking_metrics(&[rl(0, &[1]), rl(1, &[2])], &tests, 1).unwrap();
        assert_eq!(m.users, 1);
        assert_eq!(m.precision, 1.0);
    }

    fn profile_with_hot(hot: &[u32], n: u32) -> PopularityProfile {
        // Hot items get two users, everything else one.
        let mut train = vec![(0..n).collect::<Vec<_>>(), hot.to_vec()];
        train[1].sort_unstable();
        let ds = InteractionDataset::from_parts(2, n as usize, train, vec![vec![], vec![]]).unwrap();
        let q = hot.len() as f64 / n as f64;
        let p = popularity_profile(&ds, q).unwrap();
        assert_eq!(p.hot_items.len(), hot.len());
        p
    }

    #[test]
    fn bias_hand_enumerated() {
        let profile = profile_with_hot(&[0, 1], 6);
        let tests = vec![vec![0u32, 4]];
        // Hot recs {0, 1}: 1 is unliked so OHR = 1/2.
        let b = bias_metrics(&[rl(0, &[0, 1, 2])], &tests, &profile);
        assert_eq!(b.ohr, 0.5);
        assert_eq!(b.ocr, 1.0);
        assert_eq!(b.uhr, 0.0);
        assert_eq!(b.ucr, 1.0);
        assert_eq!(b.ucr_alt, 1.0);
        assert!(b.zero_denominators.is_empty());
        let all_hit = bias_metrics(&[rl(0, &[0, 4])], &tests, &profile);
        assert_eq!((all_hit.ohr, all_hit.ocr), (0.0, 0.0));
        let no_hot = bias_metrics(&[rl(0, &[2, 3])], &tests, &profile);
        assert_eq!(no_hot.ohr, 0.0);
        assert!(no_hot.zero_denominators.iter().any(|z| z == "ohr"));
    }

    #[test]
    fn fpr_fnr_counting() {
        let tests = vec![vec![0u32, 1, 2, 3], vec![10, 11, 12, 13]];
        let recs = [rl(0, &[0, 1, 20, 21, 22]), rl(1, &[10, 11, 23, 24, 25])];
        let (fpr, fnr) = fpr_fnr(&recs, &tests).unwrap();
        assert_abs_diff_eq!(fpr, 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(fnr, 0.5, epsilon = 1e-15);
        assert_eq!(fpr_fnr(&[rl(0, &[0, 1, 2, 3])], &tests[..1]).unwrap(), (0.0, 0.0));
        assert_eq!(fpr_fnr(&[rl(0, &[9])], &tests[..1]).unwrap(), (1.0, 1.0));
        let empty: Vec<Vec<u32>> = vec![vec![]];
        assert_eq!(fpr_fnr(&[rl(0, &[9])], &empty), Err(Error::UndefinedMetric("fnr")));
    }

    #[test]
    fn mse_arithmetic() {
        let m = mean_squared_error(&[(0.9, 1.0), (0.2, 0.0), (0.6, 1.0), (0.3, 0.0)]).unwrap();
        assert_abs_diff_eq!(m, 0.075, epsilon = 1e-15);
        assert_eq!(mean_squared_error(&[(1.0, 1.0), (0.0, 0.0)]).unwrap(), 0.0);
        assert_eq!(mean_squared_error(&[(0.5, 1.0), (0.5, 0.0)]).unwrap(), 0.25);
    }

    #[test]
    fn mse_skips_constant_users() {
        let ds = InteractionDataset::from_parts(1, 5, vec![vec![0]], vec![vec![1]]).unwrap();
        let m = FactorModel::zeros(1, 5, 2).unwrap();
        assert_eq!(mse_metric(&m, &ds, 0), Err(Error::UndefinedMetric("mse")));
    }

    #[test]
    fn pauc_examples() {
        assert_eq!(partial_auc(&[0.9], &[0.1, 0.8], 1.0).unwrap(), 1.0);
        assert_eq!(partial_auc(&[0.5], &[0.1, 0.8], 0.5).unwrap(), 0.0);
        assert_eq!(partial_auc(&[0.3], &[0.3], 1.0).unwrap(), 0.5);
        // floor(0.01 * 2) = 0 is raised to one negative.
        assert_eq!(partial_auc(&[0.5], &[0.1, 0.8], 0.01).unwrap(), 0.0);
        assert!(partial_auc(&[], &[0.1], 1.0).is_err());
        assert!(partial_auc(&[0.1], &[0.1], 0.0).is_err());
    }
}
