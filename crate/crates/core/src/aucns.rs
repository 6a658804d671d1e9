//! Partial-AUC-optimal negative sampling.
//!
//! For a candidate `x` with score `x_hat` the sampler maximises
//!
//! ```text
//! delta_plus(x) * P(TN | x) - delta_minus(x) * (1 - P(TN | x))
//! ```
//!
//! where `delta_plus` measures how much pushing `x` down helps the user's
//! positives, `delta_minus` how much it would hurt if `x` were actually liked,
//! and `P(TN | x)` combines the model's own ranking of `x` (empirical CDF of its
//! score among the user's un-interacted items, trusted with confidence
//! `alpha`) with a popularity prior of concentration `beta`.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PopularityProfile;
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::model::FactorModel;
use crate::sampler::SamplerContext;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Confidence in the model's ranking, in `[0.5, 1]`.
    pub alpha: f64,
    /// Concentration of the popularity prior, `>= 0`.
    pub beta: f64,
    /// Upper end of the false-positive-rate range, in `(0, 1]`.
    pub gamma: f64,
    /// Monte-Carlo draws for each of the two delta estimates.
    pub n_mc: usize,
    /// Size of the candidate set drawn per positive.
    pub m_candidates: usize,
    /// The prior is clipped to `[epsilon_prior, 1 - epsilon_prior]`.
    pub epsilon_prior: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig { alpha: 0.75, beta: 0.01, gamma: 0.006, n_mc: 5, m_candidates: 4, epsilon_prior: 0.01 }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", "must be in [0.5, 1]"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be finite and >= 0"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", "must be in (0, 1]"));
        }
        if self.n_mc == 0 {
            return Err(Error::config("n_mc", "must be at least 1"));
        }
        if self.m_candidates == 0 {
            return Err(Error::config("m_candidates", "must be at least 1"));
        }
        if !(self.epsilon_prior > 0.0 && self.epsilon_prior < 0.5) {
            return Err(Error::config("epsilon_prior", "must be in (0, 0.5)"));
        }
        Ok(())
    }
}

/// Everything computed for one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub item: u32,
    pub score: f64,
    pub cdf: f64,
    pub tau_neg: f64,
    pub posterior_tn: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub objective: f64,
}

/// Fraction of `sorted_scores` that are `<= x_hat`, by binary search.
pub fn empirical_cdf(sorted_scores: &[f64], x_hat: f64) -> Result<f64> {
    if sorted_scores.is_empty() {
        return Err(Error::sampler("empirical CDF over an empty score set"));
    }
    let below = sorted_scores.partition_point(|&s| s <= x_hat);
    Ok(below as f64 / sorted_scores.len() as f64)
}

/// Prior probability that an item is a true negative:
/// `clip((pop / pop_max)^beta, eps, 1 - eps)`.
pub fn prior_tn(pop: u32, pop_max: u32, beta: f64, epsilon_prior: f64) -> Result<f64> {
    if pop_max == 0 {
        return Err(Error::DegenerateDataset("maximum popularity is zero".into()));
    }
    if pop > pop_max {
        return Err(Error::config("pop", "item popularity exceeds the maximum"));
    }
    let ratio = f64::from(pop) / f64::from(pop_max);
    Ok(libm::pow(ratio, beta).clamp(epsilon_prior, 1.0 - epsilon_prior))
}

const POSTERIOR_TOLERANCE: f64 = 1e-9;
const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Posterior `P(TN | x)` from the CDF value of the candidate's score, the
/// ranking confidence `alpha` and the prior `tau_neg`.
pub fn posterior_tn(cdf: f64, alpha: f64, tau_neg: f64) -> Result<f64> {
    let tau_pos = 1.0 - tau_neg;
    let slope = 1.0 - 2.0 * alpha;
    let num = alpha * tau_neg + slope * cdf * tau_neg;
    let den = alpha * tau_neg + (1.0 - alpha) * tau_pos + slope * cdf * (tau_neg - tau_pos);
    if den <= DENOMINATOR_FLOOR {
        return Err(Error::Numerical(alloc::format!(
            "posterior denominator {den:e} (cdf {cdf}, alpha {alpha}, tau_neg {tau_neg})"
        )));
    }
    let p = num / den;
    if !(-POSTERIOR_TOLERANCE..=1.0 + POSTERIOR_TOLERANCE).contains(&p) {
        return Err(Error::Numerical(alloc::format!(
            "posterior {p} outside [0, 1] (cdf {cdf}, alpha {alpha}, tau_neg {tau_neg})"
        )));
    }
    Ok(p.clamp(0.0, 1.0))
}

/// Mean of `1 - sigma(s - x_hat)` over positive scores `s`.
pub fn info_plus(positive_scores: &[f64], x_hat: f64) -> f64 {
    positive_scores.iter().map(|&s| 1.0 - sigmoid(s - x_hat)).sum::<f64>() / positive_scores.len() as f64
}

/// Mean of `1 - sigma(x_hat - s)` over negative scores `s`.
pub fn info_minus(negative_scores: &[f64], x_hat: f64) -> f64 {
    negative_scores.iter().map(|&s| 1.0 - sigmoid(x_hat - s)).sum::<f64>() / negative_scores.len() as f64
}

/// Exact `sum over positives of 1 - sigma(s - x_hat)`.
pub fn delta_plus_exact(positive_scores: &[f64], x_hat: f64) -> f64 {
    positive_scores.iter().map(|&s| 1.0 - sigmoid(s - x_hat)).sum()
}

/// Exact `sum over the given negatives of 1 - sigma(x_hat - s)`.
pub fn delta_minus_exact(negative_scores: &[f64], x_hat: f64) -> f64 {
    negative_scores.iter().map(|&s| 1.0 - sigmoid(x_hat - s)).sum()
}

/// Monte-Carlo `delta_plus`: `|I_u^+|` times the mean over `n_mc` positives
/// drawn uniformly with replacement.
pub fn delta_plus<R: Rng + ?Sized>(
    model: &FactorModel,
    user: usize,
    positives: &[u32],
    x_hat: f64,
    n_mc: usize,
    rng: &mut R,
) -> Result<f64> {
    if positives.is_empty() {
        return Err(Error::sampler("user has no training positives"));
    }
    let scores = draw_scores(model, user, positives, n_mc, rng);
    Ok(positives.len() as f64 * info_plus(&scores, x_hat))
}

/// Monte-Carlo `delta_minus`: `gamma * |I_u^-|` times the mean over `n_mc`
/// un-interacted items drawn uniformly with replacement.
pub fn delta_minus<R: Rng + ?Sized>(
    model: &FactorModel,
    user: usize,
    pool: &[u32],
    x_hat: f64,
    n_mc: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<f64> {
    if pool.is_empty() {
        return Err(Error::sampler("user has no un-interacted items"));
    }
    let scores = draw_scores(model, user, pool, n_mc, rng);
    Ok(gamma * pool.len() as f64 * info_minus(&scores, x_hat))
}

fn draw_scores<R: Rng + ?Sized>(model: &FactorModel, user: usize, from: &[u32], n: usize, rng: &mut R) -> Vec<f64> {
    (0..n)
        .map(|_| model.score_unchecked(user, from[rng.random_range(0..from.len())] as usize))
        .collect()
}

/// Per-user sorted scores of the un-interacted items, rebuilt once per epoch
/// so the CDF lookup is a binary search.
#[derive(Debug, Clone, Default)]
pub struct ScoreSnapshot {
    offsets: Vec<usize>,
    scores: Vec<f64>,
}

impl ScoreSnapshot {
    /// `pools[u]` is user `u`'s un-interacted item list.
    pub fn build(model: &FactorModel, pools: &[Vec<u32>]) -> Self {
        let mut snapshot = ScoreSnapshot::default();
        snapshot.rebuild(model, pools);
        snapshot
    }

    pub fn rebuild(&mut self, model: &FactorModel, pools: &[Vec<u32>]) {
        self.offsets.clear();
        self.scores.clear();
        self.offsets.push(0);
        for (u, pool) in pools.iter().enumerate() {
            let start = self.scores.len();
            self.scores.extend(pool.iter().map(|&i| model.score_unchecked(u, i as usize)));
            self.scores[start..].sort_unstable_by(f64::total_cmp);
            self.offsets.push(self.scores.len());
        }
    }

    pub fn user(&self, u: usize) -> &[f64] {
        &self.scores[self.offsets[u]..self.offsets[u + 1]]
    }
}

/// Prior `tau_neg` of every item, computed once per run.
#[derive(Debug, Clone)]
pub struct PriorTable {
    tau_neg: Vec<f64>,
}

impl PriorTable {
    pub fn new(profile: &PopularityProfile, config: &SamplerConfig) -> Result<Self> {
        let tau_neg = profile
            .pop
            .iter()
            .map(|&p| prior_tn(p, profile.pop_max, config.beta, config.epsilon_prior))
            .collect::<Result<_>>()?;
        Ok(PriorTable { tau_neg })
    }

    pub fn get(&self, item: u32) -> f64 {
        self.tau_neg[item as usize]
    }
}

/// The proposed sampler with its per-run prior table and per-epoch score
/// snapshot.
#[derive(Debug, Clone)]
pub struct AucnsSampler {
    config: SamplerConfig,
    priors: PriorTable,
    snapshot: ScoreSnapshot,
}

impl AucnsSampler {
    pub fn new(profile: &PopularityProfile, config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        Ok(AucnsSampler { priors: PriorTable::new(profile, &config)?, config, snapshot: ScoreSnapshot::default() })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn snapshot(&self) -> &ScoreSnapshot {
        &self.snapshot
    }

    /// Re-sorts every user's un-interacted scores under the current model.
    pub fn begin_epoch(&mut self, model: &FactorModel, pools: &[Vec<u32>]) {
        self.snapshot.rebuild(model, pools);
    }

    pub fn select<R: Rng + ?Sized>(&self, ctx: &SamplerContext<'_>, model: &FactorModel, rng: &mut R) -> Result<u32> {
        select_with(ctx, model, &self.snapshot, &self.config, |i| Ok(self.priors.get(i)), rng)
    }

    pub fn evaluate<R: Rng + ?Sized>(
        &self,
        ctx: &SamplerContext<'_>,
        model: &FactorModel,
        rng: &mut R,
    ) -> Result<Vec<CandidateEvaluation>> {
        let mut out = Vec::with_capacity(self.config.m_candidates);
        for_each_candidate(ctx, model, &self.snapshot, &self.config, |i| Ok(self.priors.get(i)), rng, |e| out.push(e))?;
        Ok(out)
    }
}

/// Draws `m_candidates` items uniformly from the pool and returns the one
/// with the largest objective; ties go to the earliest draw.
///
/// The `n_mc` positives and negatives used for the delta estimates are drawn
/// once per call and shared by every candidate. `snapshot` provides the
/// sorted score population for the CDF.
pub fn aucns_select<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    model: &FactorModel,
    profile: &PopularityProfile,
    snapshot: &ScoreSnapshot,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<u32> {
    select_with(ctx, model, snapshot, config, profile_prior(profile, config), rng)
}

/// Same draws as [`aucns_select`], returning every candidate's evaluation in
/// draw order.
pub fn aucns_evaluate<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    model: &FactorModel,
    profile: &PopularityProfile,
    snapshot: &ScoreSnapshot,
    config: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<CandidateEvaluation>> {
    let mut out = Vec::with_capacity(config.m_candidates);
    for_each_candidate(ctx, model, snapshot, config, profile_prior(profile, config), rng, |e| out.push(e))?;
    Ok(out)
}

fn profile_prior<'a>(profile: &'a PopularityProfile, config: &'a SamplerConfig) -> impl Fn(u32) -> Result<f64> + 'a {
    move |i| prior_tn(profile.pop[i as usize], profile.pop_max, config.beta, config.epsilon_prior)
}

fn select_with<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    model: &FactorModel,
    snapshot: &ScoreSnapshot,
    config: &SamplerConfig,
    prior: impl Fn(u32) -> Result<f64>,
    rng: &mut R,
) -> Result<u32> {
    if ctx.candidate_pool.is_empty() {
        return Err(Error::sampler("empty candidate pool"));
    }
    if config.m_candidates == 1 {
        return Ok(ctx.draw_uniform(rng));
    }
    let mut best: Option<(f64, u32)> = None;
    for_each_candidate(ctx, model, snapshot, config, prior, rng, |e| {
        if best.is_none_or(|(obj, _)| e.objective > obj) {
            best = Some((e.objective, e.item));
        }
    })?;
    Ok(best.map(|(_, item)| item).expect("at least one candidate"))
}

fn for_each_candidate<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    model: &FactorModel,
    snapshot: &ScoreSnapshot,
    config: &SamplerConfig,
    prior: impl Fn(u32) -> Result<f64>,
    rng: &mut R,
    mut visit: impl FnMut(CandidateEvaluation),
) -> Result<()> {
    if ctx.candidate_pool.is_empty() {
        return Err(Error::sampler("empty candidate pool"));
    }
    if ctx.positives.is_empty() {
        return Err(Error::sampler("user has no training positives"));
    }
    let sorted = snapshot.user(ctx.user);
    let candidates: Vec<u32> = (0..config.m_candidates).map(|_| ctx.draw_uniform(rng)).collect();
    let pos_scores = draw_scores(model, ctx.user, ctx.positives, config.n_mc, rng);
    let neg_scores = draw_scores(model, ctx.user, ctx.candidate_pool, config.n_mc, rng);
    let n_pos = ctx.positives.len() as f64;
    let n_pool = ctx.candidate_pool.len() as f64;
    let pos_exp = SharedExp::new(&pos_scores);
    let neg_exp = SharedExp::new(&neg_scores);
    for item in candidates {
        let score = model.score_unchecked(ctx.user, item as usize);
        let cdf = empirical_cdf(sorted, score)?;
        let tau_neg = prior(item)?;
        let posterior = posterior_tn(cdf, config.alpha, tau_neg)?;
        let (delta_plus, delta_minus) = match (pos_exp.as_ref(), neg_exp.as_ref(), bounded(score)) {
            (Some(p), Some(n), true) => {
                let x = libm::exp(score);
                (n_pos * p.mean_above(x), config.gamma * n_pool * n.mean_below(x))
            }
            _ => (n_pos * info_plus(&pos_scores, score), config.gamma * n_pool * info_minus(&neg_scores, score)),
        };
        visit(CandidateEvaluation {
            item,
            score,
            cdf,
            tau_neg,
            posterior_tn: posterior,
            delta_plus,
            delta_minus,
            objective: delta_plus * posterior - delta_minus * (1.0 - posterior),
        });
    }
    Ok(())
}

const EXP_BOUND: f64 = 300.0;

fn bounded(score: f64) -> bool {
    score.abs() <= EXP_BOUND
}

/// `e^s` of the drawn scores, so every candidate needs one exponential:
/// `sigma(x_hat - s) = e^x_hat / (e^x_hat + e^s)`.
struct SharedExp(Vec<f64>);

impl SharedExp {
    fn new(scores: &[f64]) -> Option<Self> {
        scores.iter().all(|&s| bounded(s)).then(|| SharedExp(scores.iter().map(|&s| libm::exp(s)).collect()))
    }

    /// Mean of `sigma(x_hat - s)` given `x = e^x_hat`.
    fn mean_above(&self, x: f64) -> f64 {
        self.0.iter().map(|&e| x / (x + e)).sum::<f64>() / self.0.len() as f64
    }

    /// Mean of `sigma(s - x_hat)` given `x = e^x_hat`.
    fn mean_below(&self, x: f64) -> f64 {
        self.0.iter().map(|&e| e / (x + e)).sum::<f64>() / self.0.len() as f64
    }
}
