//! Matrix-factorization encoder and the pairwise BPR update.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::{dot, sigmoid, softplus};
use crate::rng;

/// User and item embeddings; `score(u, i)` is their dot product.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    num_users: usize,
    num_items: usize,
    dim: usize,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
}

impl FactorModel {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        Ok(FactorModel {
            num_users,
            num_items,
            dim,
            user_factors: vec![0.0; num_users * dim],
            item_factors: vec![0.0; num_items * dim],
        })
    }

    /// Wraps row-major factor matrices.
    pub fn from_factors(
        num_users: usize,
        num_items: usize,
        dim: usize,
        user_factors: Vec<f64>,
        item_factors: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be at least 1"));
        }
        if user_factors.len() != num_users * dim || item_factors.len() != num_items * dim {
            return Err(Error::config("factors", "matrix sizes do not match the header"));
        }
        if user_factors.iter().chain(&item_factors).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite factor entry".into()));
        }
        Ok(FactorModel { num_users, num_items, dim, user_factors, item_factors })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_factors(&self) -> &[f64] {
        &self.user_factors
    }

    pub fn item_factors(&self) -> &[f64] {
        &self.item_factors
    }

    #[inline]
    pub fn user(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    #[inline]
    pub fn item(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_factors[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_factors[i * self.dim..(i + 1) * self.dim]
    }

    /// Preference score `g(u, i)`.
    pub fn score(&self, u: usize, i: usize) -> Result<f64> {
        if u >= self.num_users {
            return Err(Error::IndexOutOfRange { what: "user", index: u, len: self.num_users });
        }
        if i >= self.num_items {
            return Err(Error::IndexOutOfRange { what: "item", index: i, len: self.num_items });
        }
        Ok(self.score_unchecked(u, i))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, u: usize, i: usize) -> f64 {
        dot(self.user(u), self.item(i))
    }

    /// Scores of one user against every item, written into `out`.
    pub fn user_scores(&self, u: usize, out: &mut Vec<f64>) {
        let p = self.user(u);
        out.clear();
        out.extend(self.item_factors.chunks_exact(self.dim).map(|q| dot(p, q)));
    }

    pub fn squared_norm(&self) -> f64 {
        self.user_factors.iter().chain(&self.item_factors).map(|v| v * v).sum()
    }
}

/// Draws every entry i.i.d. from `N(0, (0.1 / sqrt(dim))^2)`.
pub fn init_model(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<FactorModel> {
    let mut model = FactorModel::zeros(num_users, num_items, dim)?;
    let normal = Normal::new(0.0, 0.1 / libm::sqrt(dim as f64))
        .map_err(|_| Error::config("dim", "invalid initializer scale"))?;
    let mut rng = rng::stream(seed, rng::INIT);
    fill(&mut model.user_factors, &normal, &mut rng);
    fill(&mut model.item_factors, &normal, &mut rng);
    Ok(model)
}

fn fill<R: Rng>(dst: &mut [f64], dist: &Normal<f64>, rng: &mut R) {
    for v in dst {
        *v = dist.sample(rng);
    }
}

/// `-ln sigma(g(u,pos) - g(u,neg)) + l2 * (|p_u|^2 + |q_pos|^2 + |q_neg|^2)`.
pub fn bpr_loss(model: &FactorModel, u: usize, pos: usize, neg: usize, l2_reg: f64) -> f64 {
    let (p, qp, qn) = (model.user(u), model.item(pos), model.item(neg));
    let margin = dot(p, qp) - dot(p, qn);
    softplus(-margin) + l2_reg * (dot(p, p) + dot(qp, qp) + dot(qn, qn))
}

/// Writes the loss gradient with respect to `p_u`, `q_pos`, `q_neg` into the
/// three slices and returns the loss.
pub fn bpr_gradient(
    model: &FactorModel,
    u: usize,
    pos: usize,
    neg: usize,
    l2_reg: f64,
    grad_user: &mut [f64],
    grad_pos: &mut [f64],
    grad_neg: &mut [f64],
) -> f64 {
    let (p, qp, qn) = (model.user(u), model.item(pos), model.item(neg));
    let margin = dot(p, qp) - dot(p, qn);
    // d/dm of softplus(-m) is -(1 - sigma(m)) = -sigma(-m)
    let c = sigmoid(-margin);
    let two_l2 = 2.0 * l2_reg;
    for k in 0..p.len() {
        grad_user[k] = -c * (qp[k] - qn[k]) + two_l2 * p[k];
        grad_pos[k] = -c * p[k] + two_l2 * qp[k];
        grad_neg[k] = c * p[k] + two_l2 * qn[k];
    }
    softplus(-margin) + l2_reg * (dot(p, p) + dot(qp, qp) + dot(qn, qn))
}

/// One SGD step on a single (user, positive, negative) triple; returns the
/// pre-step loss.
pub fn bpr_step(
    model: &mut FactorModel,
    u: usize,
    pos: usize,
    neg: usize,
    learning_rate: f64,
    l2_reg: f64,
) -> Result<f64> {
    let mut batch = BprBatch::new(model.dim(), 1);
    let loss = batch.push(model, u, pos, neg, l2_reg)?;
    batch.apply(model, learning_rate)?;
    Ok(loss)
}

/// Gradients of a mini-batch evaluated at the same parameters and applied as
/// one summed update.
#[derive(Debug, Clone)]
pub struct BprBatch {
    dim: usize,
    triples: Vec<(u32, u32, u32)>,
    grads: Vec<f64>,
}

impl BprBatch {
    pub fn new(dim: usize, capacity: usize) -> Self {
        BprBatch {
            dim,
            triples: Vec::with_capacity(capacity),
            grads: Vec::with_capacity(capacity * 3 * dim),
        }
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn push(&mut self, model: &FactorModel, u: usize, pos: usize, neg: usize, l2_reg: f64) -> Result<f64> {
        if u >= model.num_users() || pos >= model.num_items() || neg >= model.num_items() {
            return Err(Error::IndexOutOfRange {
                what: "bpr triple",
                index: u.max(pos).max(neg),
                len: model.num_items().max(model.num_users()),
            });
        }
        let d = self.dim;
        let start = self.grads.len();
        self.grads.resize(start + 3 * d, 0.0);
        let (gu, rest) = self.grads[start..].split_at_mut(d);
        let (gp, gn) = rest.split_at_mut(d);
        let loss = bpr_gradient(model, u, pos, neg, l2_reg, gu, gp, gn);
        if !loss.is_finite() || self.grads[start..].iter().any(|g| !g.is_finite()) {
            return Err(Error::Numerical(format!(
                "non-finite gradient for user {u}, positive {pos}, negative {neg}"
            )));
        }
        self.triples.push((u as u32, pos as u32, neg as u32));
        Ok(loss)
    }

    /// Applies `params -= lr * sum(grads)` and clears the batch.
    pub fn apply(&mut self, model: &mut FactorModel, learning_rate: f64) -> Result<()> {
        let d = self.dim;
        for (t, &(u, pos, neg)) in self.triples.iter().enumerate() {
            let g = &self.grads[t * 3 * d..(t + 1) * 3 * d];
            axpy(model.user_mut(u as usize), -learning_rate, &g[..d]);
            axpy(model.item_mut(pos as usize), -learning_rate, &g[d..2 * d]);
            axpy(model.item_mut(neg as usize), -learning_rate, &g[2 * d..]);
        }
        for &(u, pos, neg) in &self.triples {
            let bad = model.user(u as usize).iter().chain(model.item(pos as usize)).chain(model.item(neg as usize));
            if bad.into_iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!("parameters of user {u} became non-finite")));
            }
        }
        self.triples.clear();
        self.grads.clear();
        Ok(())
    }
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
