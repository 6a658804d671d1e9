use aucns_core::aucns::{empirical_cdf, posterior_tn, prior_tn, AucnsSampler, SamplerConfig};
use aucns_core::dataset::{popularity_profile, to_implicit_and_split, InteractionDataset, RatingRecord};
use aucns_core::metrics::{
    bias_metrics, fpr_fnr, partial_auc, ranking_metrics, RecommendationList,
};
use aucns_core::model::{init_model, FactorModel};
use aucns_core::rng;
use aucns_core::sampler::{dns_sample, pns_sample, rns_sample, DnsConfig, PopularityWeights, SamplerContext};
use aucns_core::train::{train, TrainConfig};
use aucns_core::sampler::SamplerKind;
use proptest::prelude::*;

fn records(pairs: &[(u32, u32)]) -> Vec<RatingRecord> {
    pairs.iter().map(|&(user, item)| RatingRecord { user, item, rating: 1.0, timestamp: None }).collect()
}

/// Random dataset with `nu` users and `ni` items; every user holds at least
/// one and at most `ni - 1` training items.
fn dataset() -> impl Strategy<Value = InteractionDataset> {
    (2usize..12, 4usize..30).prop_flat_map(|(nu, ni)| {
        let user = (proptest::collection::btree_set(0..ni as u32, 1..ni), proptest::collection::btree_set(0..ni as u32, 0..4));
        proptest::collection::vec(user, nu).prop_map(move |users| {
            let (train, test): (Vec<Vec<u32>>, Vec<Vec<u32>>) = users
                .into_iter()
                .map(|(tr, te)| {
                    let te: Vec<u32> = te.difference(&tr).copied().collect();
                    (tr.into_iter().collect(), te)
                })
                .unzip();
            InteractionDataset::from_parts(nu, ni, train, test).unwrap()
        })
    })
}

fn random_model(ds: &InteractionDataset, seed: u64) -> FactorModel {
    init_model(ds.num_users(), ds.num_items(), 3, seed).unwrap()
}

fn rec_lists(ds: &InteractionDataset, seed: u64, k: usize) -> Vec<RecommendationList> {
    let m = random_model(ds, seed);
    aucns_core::metrics::recommend_all(&m, ds, k).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_non_increasing_in_cdf(alpha in 0.5001f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let p_lo = posterior_tn(lo, alpha, 0.5).unwrap();
        let p_hi = posterior_tn(hi, alpha, 0.5).unwrap();
        prop_assert!(p_hi <= p_lo + 1e-12);
        prop_assert!((0.0..=1.0).contains(&p_lo));
    }

    #[test]
    fn posterior_limits(cdf in 0.0f64..=1.0, tau in 0.01f64..=0.99) {
        prop_assert!((posterior_tn(cdf, 0.5, tau).unwrap() - tau).abs() < 1e-9);
        prop_assert!(posterior_tn(1.0, 1.0, tau).unwrap().abs() < 1e-9);
    }

    #[test]
    fn prior_is_a_probability(pop in 0u32..1000, extra in 0u32..1000, beta in 0.0f64..3.0) {
        let tau = prior_tn(pop, pop + extra + 1, beta, 0.01).unwrap();
        prop_assert!((0.01..=0.99).contains(&tau));
    }

    #[test]
    fn cdf_in_unit_interval(mut scores in proptest::collection::vec(-10.0f64..10.0, 1..50), x in -12.0f64..12.0) {
        scores.sort_by(f64::total_cmp);
        let c = empirical_cdf(&scores, x).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
    }

    #[test]
    fn samplers_never_return_positives(ds in dataset(), seed in any::<u64>()) {
        let profile = popularity_profile(&ds, 0.15).unwrap();
        let model = random_model(&ds, seed);
        let weights = PopularityWeights::new(&profile).unwrap();
        let pools: Vec<Vec<u32>> = (0..ds.num_users()).map(|u| ds.uninteracted(u)).collect();
        let mut aucns = AucnsSampler::new(&profile, SamplerConfig::default()).unwrap();
        aucns.begin_epoch(&model, &pools);
        let mut r = rng::stream(seed, "sampler");
        for u in 0..ds.num_users() {
            let ctx = SamplerContext {
                user: u,
                positive_item: ds.train_items(u)[0],
                candidate_pool: &pools[u],
                positives: ds.train_items(u),
            };
            for _ in 0..5 {
                let picks = [
                    rns_sample(&ctx, &mut r).unwrap(),
                    pns_sample(&ctx, &weights, &mut r).unwrap(),
                    dns_sample(&ctx, &model, &DnsConfig::default(), &mut r).unwrap(),
                    dns_sample(&ctx, &model, &DnsConfig { candidates: 4, argmax: true }, &mut r).unwrap(),
                    aucns.select(&ctx, &model, &mut r).unwrap(),
                ];
                for i in picks {
                    prop_assert!(!ds.is_train_positive(u, i));
                    prop_assert!((i as usize) < ds.num_items());
                }
            }
        }
    }

    #[test]
    fn samplers_are_deterministic_in_the_stream(ds in dataset(), seed in any::<u64>()) {
        let profile = popularity_profile(&ds, 0.15).unwrap();
        let model = random_model(&ds, seed);
        let weights = PopularityWeights::new(&profile).unwrap();
        let pools: Vec<Vec<u32>> = (0..ds.num_users()).map(|u| ds.uninteracted(u)).collect();
        let mut aucns = AucnsSampler::new(&profile, SamplerConfig::default()).unwrap();
        aucns.begin_epoch(&model, &pools);
        let run = || {
            let mut r = rng::stream(seed, "sampler");
            let mut out = Vec::new();
            for u in 0..ds.num_users() {
                let ctx = SamplerContext { user: u, positive_item: ds.train_items(u)[0], candidate_pool: &pools[u], positives: ds.train_items(u) };
                out.push(rns_sample(&ctx, &mut r).unwrap());
                out.push(pns_sample(&ctx, &weights, &mut r).unwrap());
                out.push(dns_sample(&ctx, &model, &DnsConfig::default(), &mut r).unwrap());
                out.push(aucns.select(&ctx, &model, &mut r).unwrap());
            }
            out
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn popularity_sums_to_training_size(ds in dataset()) {
        let p = popularity_profile(&ds, 0.15).unwrap();
        prop_assert_eq!(p.pop.iter().map(|&c| c as usize).sum::<usize>(), ds.num_train());
        prop_assert!(p.pop.iter().all(|&c| c <= p.pop_max));
        let active = p.pop.iter().filter(|&&c| c > 0).count() as f64;
        let target = (0.15 * active).ceil();
        prop_assert!((p.hot_items.len() as f64 - target).abs() <= 1.0);
        // Every hot item is at least as popular as every other item.
        let min_hot = p.hot_items.iter().map(|&i| p.pop[i as usize]).min().unwrap();
        for i in 0..ds.num_items() as u32 {
            if !p.is_hot(i) {
                prop_assert!(p.pop[i as usize] <= min_hot);
            }
        }
    }

    #[test]
    fn topk_lists_are_well_formed(ds in dataset(), seed in any::<u64>(), k in 1usize..10) {
        for list in rec_lists(&ds, seed, k) {
            let pool = ds.uninteracted(list.user);
            prop_assert_eq!(list.items.len(), k.min(pool.len()));
            let mut sorted = list.items.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), list.items.len());
            prop_assert!(list.items.iter().all(|&i| !ds.is_train_positive(list.user, i)));
        }
    }

    #[test]
    fn metrics_ignore_user_order(ds in dataset(), seed in any::<u64>(), k in 1usize..6, rot in 0usize..12) {
        let profile = popularity_profile(&ds, 0.15).unwrap();
        let recs = rec_lists(&ds, seed, k);
        let mut shuffled = recs.clone();
        let n = shuffled.len();
        shuffled.rotate_left(rot % n);
        shuffled.reverse();
        match (ranking_metrics(&recs, ds.test_sets(), k), ranking_metrics(&shuffled, ds.test_sets(), k)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.precision - b.precision).abs() < 1e-12);
                prop_assert!((a.recall - b.recall).abs() < 1e-12);
                prop_assert!((a.f1 - b.f1).abs() < 1e-12);
                prop_assert!((a.ndcg - b.ndcg).abs() < 1e-12);
                for v in [a.precision, a.recall, a.f1, a.ndcg] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
            }
            (a, b) => prop_assert_eq!(a.is_err(), b.is_err()),
        }
        prop_assert_eq!(bias_metrics(&recs, ds.test_sets(), &profile), bias_metrics(&shuffled, ds.test_sets(), &profile));
        let (a, b) = (fpr_fnr(&recs, ds.test_sets()), fpr_fnr(&shuffled, ds.test_sets()));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }
    }

    #[test]
    fn hot_false_positive_share_equals_ohr(ds in dataset(), seed in any::<u64>(), k in 1usize..6) {
        let profile = popularity_profile(&ds, 0.15).unwrap();
        let recs = rec_lists(&ds, seed, k);
        let b = bias_metrics(&recs, ds.test_sets(), &profile);
        let mut hot_rec = 0usize;
        let mut hot_fp = 0usize;
        for r in &recs {
            for &i in r.items.iter().filter(|&&i| profile.is_hot(i)) {
                hot_rec += 1;
                hot_fp += usize::from(!ds.is_test_positive(r.user, i));
            }
        }
        if hot_rec == 0 {
            prop_assert!(b.zero_denominators.iter().any(|z| z == "ohr"));
        } else {
            prop_assert_eq!(b.ohr, hot_fp as f64 / hot_rec as f64);
        }
        for v in [b.ohr, b.ocr, b.uhr_alt, b.ucr_alt] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn pauc_bounded_and_monotone_in_separation(
        pos in proptest::collection::vec(-5.0f64..5.0, 1..20),
        neg in proptest::collection::vec(-5.0f64..5.0, 1..40),
        gamma in 0.01f64..=1.0,
    ) {
        let v = partial_auc(&pos, &neg, gamma).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        let lifted: Vec<f64> = pos.iter().map(|p| p + 20.0).collect();
        prop_assert_eq!(partial_auc(&lifted, &neg, gamma).unwrap(), 1.0);
    }

    #[test]
    fn split_is_seeded_and_disjoint(seed in any::<u64>(), nu in 2u32..8, ni in 5u32..40) {
        let pairs: Vec<(u32, u32)> = (0..nu).flat_map(|u| (0..ni).filter(move |i| (i + u) % 3 != 0).map(move |i| (u, i))).collect();
        let recs = records(&pairs);
        let (a, ra) = to_implicit_and_split(&recs, nu as usize, ni as usize, 0.8, seed).unwrap();
        let (b, rb) = to_implicit_and_split(&recs, nu as usize, ni as usize, 0.8, seed).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(ra, rb);
        for u in 0..a.num_users() {
            prop_assert!(!a.train_items(u).is_empty());
            for i in a.test_items(u) {
                prop_assert!(a.train_items(u).binary_search(i).is_err());
            }
        }
    }
}

#[test]
fn split_ratio_is_close_to_eighty_percent() {
    let (nu, ni) = (200u32, 300u32);
    let pairs: Vec<(u32, u32)> = (0..nu).flat_map(|u| (0..ni).filter(move |i| (i * 7 + u) % 5 == 0).map(move |i| (u, i))).collect();
    let (ds, report) = to_implicit_and_split(&records(&pairs), nu as usize, ni as usize, 0.8, 4).unwrap();
    let total = ds.num_train() + ds.num_test() + report.dropped_test_items;
    let share = ds.num_train() as f64 / total as f64;
    assert!((share - 0.8).abs() <= 0.01, "train share {share}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let pairs: Vec<(u32, u32)> = (0..30u32).flat_map(|u| (0..40u32).filter(move |i| (i * 3 + u) % 4 == 0).map(move |i| (u, i))).collect();
    let (ds, _) = to_implicit_and_split(&records(&pairs), 30, 40, 0.8, 1).unwrap();
    let profile = popularity_profile(&ds, 0.15).unwrap();
    for kind in [SamplerKind::Rns, SamplerKind::Pns, SamplerKind::Dns, SamplerKind::Aucns] {
        let cfg = TrainConfig { epochs: 3, sampler: kind, seed: 9, ..TrainConfig::default() };
        let a = train(&ds, &profile, &cfg).unwrap();
        let b = train(&ds, &profile, &cfg).unwrap();
        assert_eq!(a.model, b.model, "{}", kind.name());
        assert_eq!(a.telemetry, b.telemetry);
    }
}

#[test]
fn regularisation_alone_shrinks_factors() {
    // Positive and negative are the same item, so the margin is always zero
    // and the ranking term contributes nothing to the net update.
    let mut model = init_model(1, 2, 4, 3).unwrap();
    let mut last = model.squared_norm();
    for _ in 0..50 {
        let mut batch = aucns_core::model::BprBatch::new(4, 1);
        batch.push(&model, 0, 0, 0, 0.1).unwrap();
        batch.apply(&mut model, 0.05).unwrap();
        let norm = model.squared_norm();
        assert!(norm < last, "{norm} >= {last}");
        last = norm;
    }
}
