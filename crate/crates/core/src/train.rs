//! BPR training loop with a pluggable negative sampler.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::aucns::{AucnsSampler, SamplerConfig};
use crate::dataset::{InteractionDataset, PopularityProfile};
use crate::error::{Error, Result};
use crate::model::{init_model, BprBatch, FactorModel};
use crate::rng::{self, StreamRng};
use crate::sampler::{dns_sample, pns_sample, rns_sample, DnsConfig, PopularityWeights, SamplerContext, SamplerKind};

/// Step decay: the learning rate is multiplied by `factor` at the start of
/// each listed (0-based) epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub factor: f64,
    pub epochs: Vec<usize>,
}

impl LrDecay {
    pub fn none() -> Self {
        LrDecay { factor: 1.0, epochs: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub lr_decay: LrDecay,
    pub l2_reg: f64,
    /// Pairs per optimizer step; their gradients are summed.
    pub batch_size: usize,
    pub epochs: usize,
    /// Set by the caller; experiment configs carry a single top-level seed.
    #[serde(skip)]
    pub seed: u64,
    pub sampler: SamplerKind,
    pub aucns: SamplerConfig,
    pub dns: DnsConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 8,
            learning_rate: 0.1,
            lr_decay: LrDecay { factor: 0.1, epochs: alloc::vec![20, 60, 80] },
            l2_reg: 1e-4,
            batch_size: 128,
            epochs: 100,
            seed: 0,
            sampler: SamplerKind::Aucns,
            aucns: SamplerConfig::default(),
            dns: DnsConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("train.dim", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be finite and > 0"));
        }
        if !(self.lr_decay.factor > 0.0 && self.lr_decay.factor.is_finite()) {
            return Err(Error::config("train.lr_decay.factor", "must be finite and > 0"));
        }
        if !(self.l2_reg >= 0.0 && self.l2_reg.is_finite()) {
            return Err(Error::config("train.l2_reg", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        self.aucns.validate()?;
        self.dns.validate()
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.lr_decay.epochs.iter().filter(|&&e| e <= epoch).count();
        self.learning_rate * libm::pow(self.lr_decay.factor, decays as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    /// Fraction of this epoch's negatives that are hot items.
    pub sampled_hot_rate: f64,
    /// Fraction of this epoch's negatives that are held-out test positives.
    pub sampled_fn_rate: f64,
}

/// Counts over every sampled negative of a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerTelemetry {
    pub sampled: u64,
    pub hot: u64,
    pub test_positive: u64,
}

impl SamplerTelemetry {
    pub fn popular_rate(&self) -> f64 {
        ratio(self.hot, self.sampled)
    }

    pub fn false_negative_rate(&self) -> f64 {
        ratio(self.test_positive, self.sampled)
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FactorModel,
    pub log: Vec<EpochLog>,
    pub telemetry: SamplerTelemetry,
}

/// Sampler state for one run.
pub enum NegativeSampler {
    Rns,
    Pns(PopularityWeights),
    Dns(DnsConfig),
    Aucns(AucnsSampler),
}

impl NegativeSampler {
    pub fn new(kind: SamplerKind, profile: &PopularityProfile, aucns: SamplerConfig, dns: DnsConfig) -> Result<Self> {
        aucns.validate()?;
        dns.validate()?;
        Ok(match kind {
            SamplerKind::Rns => NegativeSampler::Rns,
            SamplerKind::Pns => NegativeSampler::Pns(PopularityWeights::new(profile)?),
            SamplerKind::Dns => NegativeSampler::Dns(dns),
            SamplerKind::Aucns => NegativeSampler::Aucns(AucnsSampler::new(profile, aucns)?),
        })
    }

    /// Refreshes state that is held fixed for an epoch.
    pub fn begin_epoch(&mut self, model: &FactorModel, pools: &[Vec<u32>]) {
        if let NegativeSampler::Aucns(s) = self {
            s.begin_epoch(model, pools);
        }
    }

    pub fn sample(&self, ctx: &SamplerContext<'_>, model: &FactorModel, rng: &mut StreamRng) -> Result<u32> {
        match self {
            NegativeSampler::Rns => rns_sample(ctx, rng),
            NegativeSampler::Pns(w) => pns_sample(ctx, w, rng),
            NegativeSampler::Dns(cfg) => dns_sample(ctx, model, cfg, rng),
            NegativeSampler::Aucns(s) => s.select(ctx, model, rng),
        }
    }
}

pub fn train(dataset: &InteractionDataset, profile: &PopularityProfile, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(dataset, profile, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    dataset: &InteractionDataset,
    profile: &PopularityProfile,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if dataset.num_train() == 0 {
        return Err(Error::EmptyDataset);
    }
    if profile.num_items() != dataset.num_items() {
        return Err(Error::config("profile", "item count differs from the dataset"));
    }
    let mut model = init_model(dataset.num_users(), dataset.num_items(), config.dim, config.seed)?;
    let pools: Vec<Vec<u32>> = (0..dataset.num_users()).map(|u| dataset.uninteracted(u)).collect();
    let mut sampler = NegativeSampler::new(config.sampler, profile, config.aucns, config.dns)?;
    let mut shuffle_rng = rng::stream(config.seed, rng::SHUFFLE);
    let mut sampler_rng = rng::stream(config.seed, rng::SAMPLER);

    let mut pairs = dataset.train_pairs();
    let mut batch = BprBatch::new(config.dim, config.batch_size);
    let mut log = Vec::with_capacity(config.epochs);
    let mut telemetry = SamplerTelemetry::default();

    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch);
        pairs.shuffle(&mut shuffle_rng);
        sampler.begin_epoch(&model, &pools);
        let mut loss_sum = 0.0;
        let mut epoch_counts = SamplerTelemetry::default();
        for (step, &(u, pos)) in pairs.iter().enumerate() {
            let user = u as usize;
            let ctx = SamplerContext {
                user,
                positive_item: pos,
                candidate_pool: &pools[user],
                positives: dataset.train_items(user),
            };
            let neg = sampler.sample(&ctx, &model, &mut sampler_rng).map_err(|e| at(epoch, step, e))?;
            epoch_counts.sampled += 1;
            epoch_counts.hot += u64::from(profile.is_hot(neg));
            epoch_counts.test_positive += u64::from(dataset.is_test_positive(user, neg));
            loss_sum += batch.push(&model, user, pos as usize, neg as usize, config.l2_reg).map_err(|e| at(epoch, step, e))?;
            if batch.len() == config.batch_size || step + 1 == pairs.len() {
                batch.apply(&mut model, lr).map_err(|e| at(epoch, step, e))?;
            }
        }
        telemetry.sampled += epoch_counts.sampled;
        telemetry.hot += epoch_counts.hot;
        telemetry.test_positive += epoch_counts.test_positive;
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / pairs.len() as f64,
            learning_rate: lr,
            sampled_hot_rate: epoch_counts.popular_rate(),
            sampled_fn_rate: epoch_counts.false_negative_rate(),
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { model, log, telemetry })
}

fn at(epoch: usize, step: usize, e: Error) -> Error {
    match e {
        Error::Numerical(reason) => Error::Training { epoch, step, reason },
        Error::Sampler(reason) => Error::Sampler(format!("epoch {epoch}, step {step}: {reason}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{popularity_profile, to_implicit_and_split, RatingRecord};
    use rand::Rng;

    fn synthetic(seed: u64) -> (InteractionDataset, PopularityProfile) {
        let mut r = rng::stream(seed, "synthetic");
        let mut recs = Vec::new();
        for user in 0..40u32 {
            for item in 0..60u32 {
                // Users prefer items sharing their parity; low item ids are popular.
                let p = if (user + item) % 2 == 0 { 0.5 } else { 0.08 } * (1.0 - f64::from(item) / 90.0);
                if r.random_bool(p) {
                    recs.push(RatingRecord { user, item, rating: 1.0, timestamp: None });
                }
            }
        }
        let (ds, _) = to_implicit_and_split(&recs, 40, 60, 0.8, seed).unwrap();
        let profile = popularity_profile(&ds, 0.15).unwrap();
        (ds, profile)
    }

    fn small(kind: SamplerKind) -> TrainConfig {
        TrainConfig { dim: 8, epochs: 12, batch_size: 16, lr_decay: LrDecay::none(), sampler: kind, ..TrainConfig::default() }
    }

    #[test]
    fn zero_epochs_rejected() {
        let (ds, profile) = synthetic(1);
        let cfg = TrainConfig { epochs: 0, ..small(SamplerKind::Rns) };
        assert!(matches!(train(&ds, &profile, &cfg), Err(Error::Config { field: "train.epochs", .. })));
    }

    #[test]
    fn schedule_matches_step_decay() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.learning_rate_at(0), 0.1);
        assert_eq!(cfg.learning_rate_at(19), 0.1);
        assert!((cfg.learning_rate_at(20) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate_at(59) - 0.01).abs() < 1e-15);
        assert!((cfg.learning_rate_at(60) - 0.001).abs() < 1e-15);
        assert!((cfg.learning_rate_at(99) - 0.0001).abs() < 1e-15);
    }

    #[test]
    fn every_sampler_trains_and_is_deterministic() {
        let (ds, profile) = synthetic(2);
        for kind in [SamplerKind::Rns, SamplerKind::Pns, SamplerKind::Dns, SamplerKind::Aucns] {
            let cfg = small(kind);
            let a = train(&ds, &profile, &cfg).unwrap();
            let b = train(&ds, &profile, &cfg).unwrap();
            assert_eq!(a.model, b.model, "{kind:?}");
            assert_eq!(a.log, b.log);
            assert_eq!(a.log.len(), 12);
            assert!(a.log.last().unwrap().mean_loss < a.log[0].mean_loss, "{kind:?}");
            assert_eq!(a.telemetry.sampled, 12 * ds.num_train() as u64);
        }
    }

    #[test]
    fn seed_changes_the_model() {
        let (ds, profile) = synthetic(3);
        let a = train(&ds, &profile, &small(SamplerKind::Rns)).unwrap();
        let b = train(&ds, &profile, &TrainConfig { seed: 9, ..small(SamplerKind::Rns) }).unwrap();
        assert_ne!(a.model, b.model);
    }

    #[test]
    fn callback_sees_every_epoch() {
        let (ds, profile) = synthetic(4);
        let mut seen = Vec::new();
        train_with(&ds, &profile, &small(SamplerKind::Rns), |e| seen.push(e.epoch)).unwrap();
        assert_eq!(seen, (0..12).collect::<Vec<_>>());
    }
}
