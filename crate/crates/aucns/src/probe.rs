//! Numerical probes with JSON verdicts.

use std::fmt;
use std::str::FromStr;

use aucns_core::probes::{
    bias_variance_probe, pauc_rule_monte_carlo, pauc_rule_oracle, prop2_identity_check, surrogate_gradient_check,
    SyntheticRegressionWorld, ToyRankingInstance,
};
use aucns_core::rng;
use serde_json::{json, Value};

use crate::error::Result;

pub const TOY_INSTANCES: usize = 200;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const RESIDUAL_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbeName {
    BiasVariance,
    Prop2,
    PaucRule,
    Gradient,
}

impl ProbeName {
    pub const ALL: [ProbeName; 4] = [ProbeName::BiasVariance, ProbeName::Prop2, ProbeName::PaucRule, ProbeName::Gradient];

    pub fn name(self) -> &'static str {
        match self {
            ProbeName::BiasVariance => "bias-variance",
            ProbeName::Prop2 => "prop2",
            ProbeName::PaucRule => "pauc-rule",
            ProbeName::Gradient => "gradient",
        }
    }
}

impl fmt::Display for ProbeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProbeName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ProbeName::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown probe `{s}` (expected bias-variance, prop2, pauc-rule or gradient)"))
    }
}

/// A quadratic truth fitted by straight lines, so all three terms are
/// non-trivial.
pub fn default_world(num_datasets: usize, seed: u64) -> SyntheticRegressionWorld {
    SyntheticRegressionWorld {
        coefficients: vec![0.2, -0.8, 1.5],
        noise_sigma: 0.3,
        degree: 1,
        num_datasets,
        dataset_size: 50,
        grid_points: 41,
        seed,
    }
}

pub fn run_probe(name: ProbeName, seed: u64) -> Result<Value> {
    Ok(match name {
        ProbeName::BiasVariance => {
            let world = default_world(10_000, seed);
            let r = bias_variance_probe(&world, &mut rng::stream(seed, "bias-variance"))?;
            json!({
                "probe": name.name(),
                "pass": r.residual < RESIDUAL_TOLERANCE,
                "tolerance": RESIDUAL_TOLERANCE,
                "world": world,
                "result": r,
            })
        }
        ProbeName::Prop2 => {
            let mut exact = 0;
            for bits in 0u32..256 {
                let g: Vec<bool> = (0..4).map(|k| bits >> k & 1 == 1).collect();
                let y: Vec<bool> = (4..8).map(|k| bits >> k & 1 == 1).collect();
                let (lhs, rhs) = prop2_identity_check(&g, &y)?;
                exact += usize::from(lhs == rhs);
            }
            json!({ "probe": name.name(), "pass": exact == 256, "patterns": 256, "exact": exact })
        }
        ProbeName::PaucRule => {
            let mut r = rng::stream(seed, "pauc-rule");
            let (mut exact, mut mc) = (0, 0);
            for _ in 0..TOY_INSTANCES {
                let t = ToyRankingInstance::random(&mut r);
                let v = pauc_rule_oracle(&t)?;
                exact += usize::from(v.agree);
                mc += usize::from(pauc_rule_monte_carlo(&t, 5, &mut r)? == v.oracle_choice);
            }
            json!({
                "probe": name.name(),
                "pass": exact == TOY_INSTANCES,
                "instances": TOY_INSTANCES,
                "exact_agreement": exact,
                "monte_carlo_agreement": mc,
            })
        }
        ProbeName::Gradient => {
            let mut r = rng::stream(seed, "gradient");
            let mut worst: f64 = 0.0;
            let mut checks = 0;
            for _ in 0..TOY_INSTANCES {
                let t = ToyRankingInstance::random(&mut r);
                for c in 0..t.unlabeled.len() {
                    worst = worst.max(surrogate_gradient_check(&t, c)?.max_relative_error);
                    checks += 1;
                }
            }
            json!({
                "probe": name.name(),
                "pass": worst < GRADIENT_TOLERANCE,
                "tolerance": GRADIENT_TOLERANCE,
                "checks": checks,
                "max_relative_error": worst,
            })
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for p in ProbeName::ALL {
            assert_eq!(p.name().parse::<ProbeName>().unwrap(), p);
        }
        assert!("bias".parse::<ProbeName>().is_err());
    }

    #[test]
    fn cheap_probes_pass() {
        for p in [ProbeName::Prop2, ProbeName::PaucRule, ProbeName::Gradient] {
            let v = run_probe(p, 0).unwrap();
            assert_eq!(v["pass"], true, "{v}");
        }
    }
}
