//! Biased matrix factorization trained by stochastic gradient descent.
//!
//! `r̂ = μ + b_u + b_i + q_iᵀ p_u`, updated once per training rating per epoch in
//! `(user, item)` order.

use rand_distr::{Distribution as _, Normal};

use super::ratings::Ratings;
use crate::seed::keyed_rng;

const INIT_STD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdParams {
    pub factors: usize,
    pub epochs: usize,
    pub learn_rate: f64,
    pub reg: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct FunkSvdModel {
    mu: f64,
    user_bias: Vec<f64>,
    item_bias: Vec<f64>,
    user_factors: Vec<f64>,
    item_factors: Vec<f64>,
    factors: usize,
    /// Training MAE after each epoch.
    pub epoch_mae: Vec<f64>,
}

impl FunkSvdModel {
    pub fn fit(ratings: &Ratings, params: &SvdParams) -> Self {
        let f = params.factors;
        let mut rng = keyed_rng(params.seed, b"funk_svd");
        let normal = Normal::new(0.0, INIT_STD).expect("positive std");
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal.sample(&mut rng)).collect() };
        let user_factors = draw(ratings.n_users() * f);
        let item_factors = draw(ratings.n_items() * f);
        let mut model = Self {
            mu: ratings.global_mean,
            user_bias: vec![0.0; ratings.n_users()],
            item_bias: vec![0.0; ratings.n_items()],
            user_factors,
            item_factors,
            factors: f,
            epoch_mae: Vec::with_capacity(params.epochs),
        };
        let (lr, reg) = (params.learn_rate, params.reg);
        for _ in 0..params.epochs {
            for (u, rated) in ratings.by_user.iter().enumerate() {
                for &(i, r) in rated {
                    let err = r - model.raw(u, i);
                    model.user_bias[u] += lr * (err - reg * model.user_bias[u]);
                    model.item_bias[i] += lr * (err - reg * model.item_bias[i]);
                    let (pu, qi) = (u * f, i * f);
                    for k in 0..f {
                        let puf = model.user_factors[pu + k];
                        let qif = model.item_factors[qi + k];
                        model.user_factors[pu + k] += lr * (err * qif - reg * puf);
                        model.item_factors[qi + k] += lr * (err * puf - reg * qif);
                    }
                }
            }
            model.epoch_mae.push(model.training_mae(ratings));
        }
        model
    }

    fn raw(&self, u: usize, i: usize) -> f64 {
        let f = self.factors;
        let dot: f64 = self.user_factors[u * f..(u + 1) * f]
            .iter()
            .zip(&self.item_factors[i * f..(i + 1) * f])
            .map(|(a, b)| a * b)
            .sum();
        self.mu + self.user_bias[u] + self.item_bias[i] + dot
    }

    fn training_mae(&self, ratings: &Ratings) -> f64 {
        let mut total = 0.0;
        for (u, rated) in ratings.by_user.iter().enumerate() {
            for &(i, r) in rated {
                total += (r - self.raw(u, i)).abs();
            }
        }
        total / ratings.len().max(1) as f64
    }

    /// Unclamped estimate; items without training feedback have no learned factors.
    pub fn estimate(&self, ratings: &Ratings, user: usize, item: usize) -> Option<f64> {
        if ratings.by_item[item].is_empty() {
            return None;
        }
        Some(self.raw(user, item))
    }
}
