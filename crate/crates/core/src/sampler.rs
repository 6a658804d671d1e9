//! Baseline negative samplers: uniform, popularity-proportional and
//! rank-weighted dynamic sampling.

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::PopularityProfile;
use crate::error::{Error, Result};
use crate::model::FactorModel;

/// Sampler names accepted in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Rns,
    Pns,
    Dns,
    Aucns,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Rns => "rns",
            SamplerKind::Pns => "pns",
            SamplerKind::Dns => "dns",
            SamplerKind::Aucns => "aucns",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "rns" => Some(SamplerKind::Rns),
            "pns" => Some(SamplerKind::Pns),
            "dns" => Some(SamplerKind::Dns),
            "aucns" => Some(SamplerKind::Aucns),
            _ => None,
        }
    }
}

/// What a sampler sees for one training positive.
#[derive(Debug, Clone, Copy)]
pub struct SamplerContext<'a> {
    pub user: usize,
    pub positive_item: u32,
    /// The user's un-interacted items, ascending.
    pub candidate_pool: &'a [u32],
    /// The user's training positives, ascending.
    pub positives: &'a [u32],
}

impl SamplerContext<'_> {
    fn check(&self) -> Result<()> {
        if self.candidate_pool.is_empty() {
            return Err(Error::sampler("empty candidate pool"));
        }
        Ok(())
    }

    pub fn draw_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        self.candidate_pool[rng.random_range(0..self.candidate_pool.len())]
    }
}

/// Uniform draw from the candidate pool.
pub fn rns_sample<R: Rng + ?Sized>(ctx: &SamplerContext<'_>, rng: &mut R) -> Result<u32> {
    ctx.check()?;
    Ok(ctx.draw_uniform(rng))
}

pub const PNS_EXPONENT: f64 = 0.75;
pub const PNS_ZERO_WEIGHT: f64 = 1e-6;

/// Global `pop^0.75` weights; items with zero popularity get a tiny weight so
/// they stay reachable.
#[derive(Debug, Clone)]
pub struct PopularityWeights {
    weights: Vec<f64>,
    index: WeightedIndex<f64>,
}

impl PopularityWeights {
    pub fn new(profile: &PopularityProfile) -> Result<Self> {
        let weights: Vec<f64> = profile
            .pop
            .iter()
            .map(|&p| if p == 0 { PNS_ZERO_WEIGHT } else { libm::pow(f64::from(p), PNS_EXPONENT) })
            .collect();
        let index = WeightedIndex::new(&weights)
            .map_err(|e| Error::DegenerateDataset(alloc::format!("popularity weights: {e}")))?;
        Ok(PopularityWeights { weights, index })
    }

    pub fn weight(&self, item: u32) -> f64 {
        self.weights[item as usize]
    }
}

const PNS_MAX_REJECTIONS: usize = 64;

/// Draws from the pool with probability proportional to `pop^0.75`,
/// renormalised over the pool.
///
/// Rejection against the global distribution is exact for the renormalised
/// target; after repeated rejections it falls back to an explicit table over
/// the pool, which is equally exact.
pub fn pns_sample<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    weights: &PopularityWeights,
    rng: &mut R,
) -> Result<u32> {
    ctx.check()?;
    for _ in 0..PNS_MAX_REJECTIONS {
        let item = weights.index.sample(rng) as u32;
        if ctx.positives.binary_search(&item).is_err() {
            return Ok(item);
        }
    }
    let local: Vec<f64> = ctx.candidate_pool.iter().map(|&i| weights.weight(i)).collect();
    let index = WeightedIndex::new(&local).map_err(|e| Error::sampler(alloc::format!("pns: {e}")))?;
    Ok(ctx.candidate_pool[index.sample(rng)])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DnsConfig {
    pub candidates: usize,
    /// Take the top-scored candidate instead of sampling by linear rank weights.
    pub argmax: bool,
}

impl Default for DnsConfig {
    fn default() -> Self {
        DnsConfig { candidates: 16, argmax: false }
    }
}

impl DnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidates == 0 {
            return Err(Error::config("dns.candidates", "must be at least 1"));
        }
        Ok(())
    }
}

/// Dynamic negative sampling.
///
/// Draws `candidates` items uniformly, ranks them by current score (equal
/// scores keep draw order) and samples with weights `c, c-1, ..., 1` from the
/// highest score down.
pub fn dns_sample<R: Rng + ?Sized>(
    ctx: &SamplerContext<'_>,
    model: &FactorModel,
    config: &DnsConfig,
    rng: &mut R,
) -> Result<u32> {
    ctx.check()?;
    config.validate()?;
    let c = config.candidates;
    if c == 1 {
        return Ok(ctx.draw_uniform(rng));
    }
    let mut drawn: Vec<(f64, u32)> = (0..c)
        .map(|_| {
            let item = ctx.draw_uniform(rng);
            (model.score_unchecked(ctx.user, item as usize), item)
        })
        .collect();
    // Stable sort keeps earlier draws ahead on ties.
    drawn.sort_by(|a, b| b.0.total_cmp(&a.0));
    if config.argmax {
        return Ok(drawn[0].1);
    }
    let total = c * (c + 1) / 2;
    let mut r = rng.random_range(0..total);
    for (rank, &(_, item)) in drawn.iter().enumerate() {
        let w = c - rank;
        if r < w {
            return Ok(item);
        }
        r -= w;
    }
    unreachable!("rank weights sum to the drawn total")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{popularity_profile, InteractionDataset};
    use crate::rng;
    use alloc::vec;

    fn ctx<'a>(pool: &'a [u32], positives: &'a [u32]) -> SamplerContext<'a> {
        SamplerContext { user: 0, positive_item: positives.first().copied().unwrap_or(0), candidate_pool: pool, positives }
    }

    #[test]
    fn rns_singleton_and_empty() {
        let mut r = rng::stream(1, rng::SAMPLER);
        assert_eq!(rns_sample(&ctx(&[7], &[0]), &mut r).unwrap(), 7);
        assert!(rns_sample(&ctx(&[], &[0]), &mut r).is_err());
    }

    #[test]
    fn rns_two_items_is_fair() {
        let mut r = rng::stream(2, rng::SAMPLER);
        let n = 100_000;
        let hits = (0..n).filter(|_| rns_sample(&ctx(&[3, 9], &[0]), &mut r).unwrap() == 3).count();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    fn profile_with(pops: &[usize]) -> PopularityProfile {
        let users = pops.iter().copied().max().unwrap().max(1);
        let mut train = vec![Vec::new(); users];
        for (item, &p) in pops.iter().enumerate() {
            for list in train.iter_mut().take(p) {
                list.push(item as u32);
            }
        }
        let ds = InteractionDataset::from_parts(users, pops.len(), train, vec![Vec::new(); users]).unwrap();
        popularity_profile(&ds, 0.5).unwrap()
    }

    #[test]
    fn pns_ratio_matches_power_law() {
        // Items: 0 is the user's positive, 1 has pop 16, 2 has pop 1.
        let profile = profile_with(&[4, 16, 1]);
        let w = PopularityWeights::new(&profile).unwrap();
        let mut r = rng::stream(3, rng::SAMPLER);
        let n = 100_000;
        let a = (0..n).filter(|_| pns_sample(&ctx(&[1, 2], &[0]), &w, &mut r).unwrap() == 1).count();
        let p = a as f64 / n as f64;
        // 16^0.75 = 8, so P(a) = 8/9.
        let expected = 8.0 / 9.0;
        let sd = libm::sqrt(expected * (1.0 - expected) / n as f64);
        assert!((p - expected).abs() < 3.0 * sd, "p = {p}");
    }

    #[test]
    fn pns_equal_pops_is_uniform() {
        let profile = profile_with(&[2, 2, 2]);
        let w = PopularityWeights::new(&profile).unwrap();
        let mut r = rng::stream(4, rng::SAMPLER);
        let n = 100_000;
        let a = (0..n).filter(|_| pns_sample(&ctx(&[1, 2], &[0]), &w, &mut r).unwrap() == 1).count();
        assert!((a as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn pns_zero_pop_item_is_reachable() {
        let profile = profile_with(&[3, 0]);
        let w = PopularityWeights::new(&profile).unwrap();
        let mut r = rng::stream(5, rng::SAMPLER);
        // Item 0 is a positive, so the fallback table must return item 1.
        assert_eq!(pns_sample(&ctx(&[1], &[0]), &w, &mut r).unwrap(), 1);
        assert!(w.weight(1) > 0.0);
    }

    fn model_with_item_scores(scores: &[f64]) -> FactorModel {
        let mut m = FactorModel::zeros(1, scores.len(), 1).unwrap();
        m.user_mut(0)[0] = 1.0;
        for (i, &s) in scores.iter().enumerate() {
            m.item_mut(i)[0] = s;
        }
        m
    }

    #[test]
    fn dns_single_candidate() {
        let m = model_with_item_scores(&[0.0, 1.0, 2.0]);
        let cfg = DnsConfig { candidates: 1, argmax: false };
        let mut r1 = rng::stream(6, rng::SAMPLER);
        let mut r2 = rng::stream(6, rng::SAMPLER);
        let pool = [1, 2];
        assert_eq!(
            dns_sample(&ctx(&pool, &[0]), &m, &cfg, &mut r1).unwrap(),
            rns_sample(&ctx(&pool, &[0]), &mut r2).unwrap()
        );
    }

    #[test]
    fn dns_two_candidates_prefers_high_two_thirds() {
        // The two draws are distinct half the time, and then the high item wins
        // with weight 2/3. Otherwise both draws are the same item.
        let m = model_with_item_scores(&[0.0, 5.0, -5.0]);
        let cfg = DnsConfig { candidates: 2, argmax: false };
        let mut r = rng::stream(7, rng::SAMPLER);
        let n = 100_000;
        let high = (0..n).filter(|_| dns_sample(&ctx(&[1, 2], &[0]), &m, &cfg, &mut r).unwrap() == 1).count();
        let p = high as f64 / n as f64;
        let expected = 0.25 + 0.5 * (2.0 / 3.0);
        assert!((p - expected).abs() < 0.01, "p = {p}");
    }

    #[test]
    fn dns_equal_scores_is_uniform() {
        let m = model_with_item_scores(&[0.0, 1.0, 1.0, 1.0, 1.0]);
        let cfg = DnsConfig::default();
        let mut r = rng::stream(8, rng::SAMPLER);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[dns_sample(&ctx(&[1, 2, 3, 4], &[0]), &m, &cfg, &mut r).unwrap() as usize] += 1;
        }
        for c in &counts[1..] {
            assert!((*c as f64 / n as f64 - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn dns_argmax_takes_best() {
        let m = model_with_item_scores(&[0.0, 5.0, -5.0, 1.0]);
        let cfg = DnsConfig { candidates: 64, argmax: true };
        let mut r = rng::stream(9, rng::SAMPLER);
        assert_eq!(dns_sample(&ctx(&[1, 2, 3], &[0]), &m, &cfg, &mut r).unwrap(), 1);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in [SamplerKind::Rns, SamplerKind::Pns, SamplerKind::Dns, SamplerKind::Aucns] {
            assert_eq!(SamplerKind::from_name(k.name()), Some(k));
        }
        assert_eq!(SamplerKind::from_name("fair"), None);
    }
}
