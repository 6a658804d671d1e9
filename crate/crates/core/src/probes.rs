//! Synthetic validators: a bias-variance decomposition on polynomial
//! regression, the binary squared-loss identity, and enumerable toy ranking
//! instances for checking the sampling rule against the surrogate pAUC
//! derivative.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::aucns::{empirical_cdf, posterior_tn, prior_tn};
use crate::error::{Error, Result};
use crate::math::{log_sigmoid, sigmoid};
use crate::rng::StreamRng;

/// Polynomial regression world: `y = f*(x) + noise`, `x ~ U[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticRegressionWorld {
    /// Coefficients of `f*`, constant term first.
    pub coefficients: Vec<f64>,
    pub noise_sigma: f64,
    /// Degree of the fitted polynomial.
    pub degree: usize,
    pub num_datasets: usize,
    pub dataset_size: usize,
    /// Evenly spaced held-out inputs on `[-1, 1]`, endpoints included.
    pub grid_points: usize,
    pub seed: u64,
}

impl SyntheticRegressionWorld {
    pub fn validate(&self) -> Result<()> {
        if self.coefficients.is_empty() {
            return Err(Error::config("coefficients", "need at least one coefficient"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma", "must be finite and >= 0"));
        }
        if self.num_datasets < 100 {
            return Err(Error::config("num_datasets", "must be at least 100"));
        }
        if self.dataset_size < 10 {
            return Err(Error::config("dataset_size", "must be at least 10"));
        }
        if self.degree + 1 > self.dataset_size {
            return Err(Error::config("degree", "more coefficients than data points"));
        }
        if self.grid_points < 2 {
            return Err(Error::config("grid_points", "must be at least 2"));
        }
        Ok(())
    }

    pub fn truth(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }

    pub fn grid(&self) -> Vec<f64> {
        let g = self.grid_points;
        (0..g).map(|k| -1.0 + 2.0 * k as f64 / (g - 1) as f64).collect()
    }
}

fn horner(coefficients: &[f64], x: f64) -> f64 {
    coefficients.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceResult {
    pub mse: f64,
    pub bias_sq: f64,
    pub variance: f64,
    pub noise: f64,
    /// `|mse - (bias_sq + variance + noise)| / mse`.
    pub residual: f64,
    /// Datasets redrawn because the least-squares system was singular.
    pub resampled: usize,
}

const SINGULAR_RATIO: f64 = 1e-12;
const MAX_RESAMPLES: usize = 1000;

/// Least-squares polynomial fit, or `None` when the design is singular.
pub fn fit_polynomial(xs: &[f64], ys: &[f64], degree: usize) -> Option<Vec<f64>> {
    let a = DMatrix::from_fn(xs.len(), degree + 1, |i, j| libm::pow(xs[i], j as f64));
    let b = DVector::from_column_slice(ys);
    let svd = a.svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min / max < SINGULAR_RATIO {
        return None;
    }
    svd.solve(&b, 0.0).ok().map(|c| c.iter().copied().collect())
}

/// Fits the capacity-limited model on `num_datasets` fresh datasets and
/// decomposes its held-out error on the grid. Every dataset gets its own
/// noisy labels on the grid.
pub fn bias_variance_probe(world: &SyntheticRegressionWorld, rng: &mut StreamRng) -> Result<BiasVarianceResult> {
    world.validate()?;
    let grid = world.grid();
    let truth: Vec<f64> = grid.iter().map(|&x| world.truth(x)).collect();
    let input = Uniform::new_inclusive(-1.0, 1.0).map_err(|e| Error::Numerical(alloc::format!("{e}")))?;
    let noise = Normal::new(0.0, world.noise_sigma).map_err(|e| Error::Numerical(alloc::format!("{e}")))?;

    let g = grid.len();
    // Welford accumulators per grid point for the predictions.
    let mut mean = alloc::vec![0.0; g];
    let mut m2 = alloc::vec![0.0; g];
    let (mut sq_err, mut sq_noise) = (0.0, 0.0);
    let mut resampled = 0;
    let mut xs = alloc::vec![0.0; world.dataset_size];
    let mut ys = alloc::vec![0.0; world.dataset_size];

    for d in 0..world.num_datasets {
        let coef = loop {
            for (x, y) in xs.iter_mut().zip(ys.iter_mut()) {
                *x = input.sample(rng);
                *y = world.truth(*x) + noise.sample(rng);
            }
            if let Some(c) = fit_polynomial(&xs, &ys, world.degree) {
                break c;
            }
            resampled += 1;
            if resampled > MAX_RESAMPLES {
                return Err(Error::Numerical("least-squares fit stays singular".into()));
            }
        };
        let n = (d + 1) as f64;
        for k in 0..g {
            let pred = horner(&coef, grid[k]);
            let label = truth[k] + noise.sample(rng);
            sq_err += (pred - label) * (pred - label);
            sq_noise += (label - truth[k]) * (label - truth[k]);
            let delta = pred - mean[k];
            mean[k] += delta / n;
            m2[k] += delta * (pred - mean[k]);
        }
    }
    let total = (world.num_datasets * g) as f64;
    let mse = sq_err / total;
    let noise_term = sq_noise / total;
    let bias_sq = (0..g).map(|k| (mean[k] - truth[k]) * (mean[k] - truth[k])).sum::<f64>() / g as f64;
    let variance = m2.iter().sum::<f64>() / total;
    let residual = if mse > 0.0 { (mse - (bias_sq + variance + noise_term)).abs() / mse } else { 0.0 };
    Ok(BiasVarianceResult { mse, bias_sq, variance, noise: noise_term, residual, resampled })
}

/// Both sides of `mean((g - y)^2) = (#FP + #FN) / n` for binary predictions
/// and labels.
pub fn prop2_identity_check(predictions: &[bool], labels: &[bool]) -> Result<(f64, f64)> {
    if predictions.len() != labels.len() {
        return Err(Error::config("labels", "length differs from predictions"));
    }
    if predictions.is_empty() {
        return Err(Error::config("predictions", "must not be empty"));
    }
    let n = predictions.len() as f64;
    let lhs = predictions
        .iter()
        .zip(labels)
        .map(|(&g, &y)| {
            let d = f64::from(u8::from(g)) - f64::from(u8::from(y));
            d * d
        })
        .sum::<f64>()
        / n;
    let fp = predictions.iter().zip(labels).filter(|&(&g, &y)| g && !y).count();
    let fn_ = predictions.iter().zip(labels).filter(|&(&g, &y)| !g && y).count();
    Ok((lhs, (fp + fn_) as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrueLabel {
    TrueNegative,
    FalseNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyItem {
    pub score: f64,
    pub label: TrueLabel,
    pub popularity: u32,
}

/// A user small enough to enumerate: known positives and unlabeled items
/// whose hidden label is kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRankingInstance {
    pub positives: Vec<f64>,
    pub unlabeled: Vec<ToyItem>,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub epsilon_prior: f64,
}

pub const TOY_MAX_ITEMS: usize = 20;

impl ToyRankingInstance {
    pub fn validate(&self) -> Result<()> {
        if self.positives.is_empty() {
            return Err(Error::config("positives", "need at least one positive"));
        }
        if self.unlabeled.is_empty() {
            return Err(Error::config("unlabeled", "need at least one unlabeled item"));
        }
        if self.positives.len() + self.unlabeled.len() > TOY_MAX_ITEMS {
            return Err(Error::config("unlabeled", "toy instances hold at most 20 items"));
        }
        if self.unlabeled.iter().all(|i| i.popularity == 0) {
            return Err(Error::DegenerateDataset("maximum popularity is zero".into()));
        }
        if !(0.5..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must be in [0.5, 1]"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must be in (0, 1]"));
        }
        Ok(())
    }

    /// A random instance: 1 to 6 positives, up to 20 items in total,
    /// `alpha` in `[0.55, 0.95]` and `gamma` from `{0.25, 0.5, 1}`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let n_pos = rng.random_range(1..=6);
        let n_unl = rng.random_range(1..=TOY_MAX_ITEMS - n_pos);
        let positives = (0..n_pos).map(|_| rng.random_range(-2.0..3.0)).collect();
        let unlabeled = (0..n_unl)
            .map(|_| ToyItem {
                score: rng.random_range(-3.0..2.0),
                label: if rng.random_bool(0.2) { TrueLabel::FalseNegative } else { TrueLabel::TrueNegative },
                popularity: rng.random_range(1..=50),
            })
            .collect();
        ToyRankingInstance {
            positives,
            unlabeled,
            alpha: rng.random_range(0.55..=0.95),
            beta: rng.random_range(0.0..1.0),
            gamma: [0.25, 0.5, 1.0][rng.random_range(0..3)],
            epsilon_prior: 0.01,
        }
    }

    fn sorted_unlabeled_scores(&self) -> Vec<f64> {
        let mut s: Vec<f64> = self.unlabeled.iter().map(|i| i.score).collect();
        s.sort_by(f64::total_cmp);
        s
    }

    /// `P(TN | x)` for unlabeled item `idx`.
    pub fn posterior(&self, idx: usize) -> Result<f64> {
        let item = &self.unlabeled[idx];
        let pop_max = self.unlabeled.iter().map(|i| i.popularity).max().unwrap_or(0);
        let cdf = empirical_cdf(&self.sorted_unlabeled_scores(), item.score)?;
        let tau = prior_tn(item.popularity, pop_max, self.beta, self.epsilon_prior)?;
        posterior_tn(cdf, self.alpha, tau)
    }

    /// Size of the top-ranked negative set for a candidate: the candidate is
    /// excluded, so at most `|D^-| - 1` items remain.
    pub fn top_set_size(&self) -> usize {
        let n = self.unlabeled.len();
        (libm::floor(self.gamma * n as f64) as usize).max(1).min(n - 1)
    }

    /// Indices of the top-ranked unlabeled items other than `idx`; equal
    /// scores keep index order.
    pub fn top_set(&self, idx: usize) -> Vec<usize> {
        let mut others: Vec<usize> = (0..self.unlabeled.len()).filter(|&j| j != idx).collect();
        others.sort_by(|&a, &b| self.unlabeled[b].score.total_cmp(&self.unlabeled[a].score).then(a.cmp(&b)));
        others.truncate(self.top_set_size());
        others
    }

    /// Surrogate pAUC `sum ln sigma(g+ - g-) / (|D+| |N|)` with the candidate
    /// scored `z` and treated as a true negative inside `N`.
    pub fn surrogate_if_negative(&self, idx: usize, z: f64) -> f64 {
        let top = self.top_set(idx);
        let norm = self.norm(top.len());
        let mut total = 0.0;
        for &p in &self.positives {
            total += log_sigmoid(p - z);
            for &j in &top {
                total += log_sigmoid(p - self.unlabeled[j].score);
            }
        }
        total / norm
    }

    /// Surrogate pAUC with the candidate scored `z` and treated as an extra
    /// positive.
    pub fn surrogate_if_positive(&self, idx: usize, z: f64) -> f64 {
        let top = self.top_set(idx);
        let norm = self.norm(top.len());
        let mut total = 0.0;
        for &j in &top {
            let s = self.unlabeled[j].score;
            total += log_sigmoid(z - s);
            for &p in &self.positives {
                total += log_sigmoid(p - s);
            }
        }
        total / norm
    }

    fn norm(&self, top: usize) -> f64 {
        (self.positives.len() * top.max(1)) as f64
    }

    /// Piecewise derivative of the surrogate pAUC with respect to the
    /// candidate's score, as `(if true negative, if false negative)`.
    pub fn surrogate_derivative(&self, idx: usize) -> (f64, f64) {
        let z = self.unlabeled[idx].score;
        let top = self.top_set(idx);
        let norm = self.norm(top.len());
        let tn: f64 = self.positives.iter().map(|&p| 1.0 - sigmoid(p - z)).sum();
        let fn_: f64 = top.iter().map(|&j| 1.0 - sigmoid(z - self.unlabeled[j].score)).sum();
        (-tn / norm, fn_ / norm)
    }

    /// Exact `delta_plus` and `delta_minus` sums of the sampling rule.
    pub fn exact_deltas(&self, idx: usize) -> (f64, f64) {
        let z = self.unlabeled[idx].score;
        let plus = self.positives.iter().map(|&p| 1.0 - sigmoid(p - z)).sum();
        let minus = self.top_set(idx).iter().map(|&j| 1.0 - sigmoid(z - self.unlabeled[j].score)).sum();
        (plus, minus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaucRuleVerdict {
    pub rule_choice: usize,
    pub oracle_choice: usize,
    pub agree: bool,
    pub rule_objectives: Vec<f64>,
    /// Expected surrogate pAUC gain from lowering each candidate's score by one.
    pub oracle_gains: Vec<f64>,
}

fn first_argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Compares the sampling rule built from exact delta sums with the argmax of
/// the expected surrogate pAUC gain, taken from the piecewise derivative
/// weighted by the same posterior.
pub fn pauc_rule_oracle(instance: &ToyRankingInstance) -> Result<PaucRuleVerdict> {
    instance.validate()?;
    let n = instance.unlabeled.len();
    let mut rule = Vec::with_capacity(n);
    let mut oracle = Vec::with_capacity(n);
    for idx in 0..n {
        let p = instance.posterior(idx)?;
        let (plus, minus) = instance.exact_deltas(idx);
        rule.push(plus * p - minus * (1.0 - p));
        let (d_tn, d_fn) = instance.surrogate_derivative(idx);
        // A unit decrement of the score changes pAUC by minus the derivative.
        oracle.push(p * -d_tn + (1.0 - p) * -d_fn);
    }
    let rule_choice = first_argmax(&rule);
    let oracle_choice = first_argmax(&oracle);
    Ok(PaucRuleVerdict { rule_choice, oracle_choice, agree: rule_choice == oracle_choice, rule_objectives: rule, oracle_gains: oracle })
}

/// The rule with Monte-Carlo deltas as used in training: `n_mc` positives and
/// `n_mc` unlabeled items drawn uniformly, scaled by `|D+|` and
/// `gamma |D^-|`. Returns the chosen candidate index.
pub fn pauc_rule_monte_carlo<R: Rng + ?Sized>(instance: &ToyRankingInstance, n_mc: usize, rng: &mut R) -> Result<usize> {
    instance.validate()?;
    if n_mc == 0 {
        return Err(Error::config("n_mc", "must be at least 1"));
    }
    let n = instance.unlabeled.len();
    let pos: Vec<f64> = (0..n_mc).map(|_| instance.positives[rng.random_range(0..instance.positives.len())]).collect();
    let neg: Vec<f64> = (0..n_mc).map(|_| instance.unlabeled[rng.random_range(0..n)].score).collect();
    let mut objectives = Vec::with_capacity(n);
    for idx in 0..n {
        let z = instance.unlabeled[idx].score;
        let p = instance.posterior(idx)?;
        let plus = instance.positives.len() as f64 * crate::aucns::info_plus(&pos, z);
        let minus = instance.gamma * n as f64 * crate::aucns::info_minus(&neg, z);
        objectives.push(plus * p - minus * (1.0 - p));
    }
    Ok(first_argmax(&objectives))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    pub analytic_tn: f64,
    pub numeric_tn: f64,
    pub analytic_fn: f64,
    pub numeric_fn: f64,
    pub max_relative_error: f64,
}

pub const FD_STEP: f64 = 1e-5;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Central finite differences of both surrogate branches against the
/// piecewise derivative at the candidate's current score.
pub fn surrogate_gradient_check(instance: &ToyRankingInstance, candidate: usize) -> Result<GradientCheck> {
    instance.validate()?;
    if candidate >= instance.unlabeled.len() {
        return Err(Error::IndexOutOfRange { what: "candidate", index: candidate, len: instance.unlabeled.len() });
    }
    let z = instance.unlabeled[candidate].score;
    let h = FD_STEP;
    let numeric_tn = (instance.surrogate_if_negative(candidate, z + h) - instance.surrogate_if_negative(candidate, z - h)) / (2.0 * h);
    let numeric_fn = (instance.surrogate_if_positive(candidate, z + h) - instance.surrogate_if_positive(candidate, z - h)) / (2.0 * h);
    let (analytic_tn, analytic_fn) = instance.surrogate_derivative(candidate);
    let max_relative_error = relative_error(analytic_tn, numeric_tn).max(relative_error(analytic_fn, numeric_fn));
    Ok(GradientCheck { analytic_tn, numeric_tn, analytic_fn, numeric_fn, max_relative_error })
}
