//! Basic user- and item-based k-nearest-neighbor rating prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ratings::{co_rated, Ratings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    /// `1 / (msd + 1)` over co-rated entries.
    Msd,
    /// Pearson correlation of the co-rated entries centered on their own means.
    Pearson,
}

impl Similarity {
    pub fn between(self, a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
        let pairs = co_rated(a, b);
        match self {
            Similarity::Msd => msd(&pairs),
            Similarity::Pearson => pearson(&pairs),
        }
    }
}

pub(crate) fn msd(pairs: &[(f64, f64)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let msd = pairs.iter().map(|(x, y)| (x - y).powi(2)).sum::<f64>() / pairs.len() as f64;
    1.0 / (msd + 1.0)
}

pub(crate) fn pearson(pairs: &[(f64, f64)]) -> f64 {
    if pairs.len() < 2 {
        return 0.0;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut num, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for (x, y) in pairs {
        num += (x - mx) * (y - my);
        sx += (x - mx).powi(2);
        sy += (y - my).powi(2);
    }
    let den = (sx * sy).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[derive(Debug, Clone)]
pub struct KnnModel {
    pub(crate) user_based: bool,
    pub(crate) k: usize,
    /// Dense similarity matrix between users (user-based) or items (item-based).
    sim: Vec<f64>,
    dim: usize,
}

impl KnnModel {
    pub fn fit(ratings: &Ratings, user_based: bool, k: usize, similarity: Similarity) -> Self {
        let rows = if user_based { &ratings.by_user } else { &ratings.by_item };
        let dim = rows.len();
        let sim: Vec<f64> = (0..dim)
            .into_par_iter()
            .flat_map_iter(|a| {
                (0..dim).map(move |b| {
                    if a == b {
                        0.0
                    } else {
                        similarity.between(&rows[a], &rows[b])
                    }
                })
            })
            .collect();
        Self {
            user_based,
            k,
            sim,
            dim,
        }
    }

    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        self.sim[a * self.dim + b]
    }

    /// Weighted mean of the k most similar positively correlated neighbors, if any.
    pub fn estimate(&self, ratings: &Ratings, user: usize, item: usize) -> Option<f64> {
        let (anchor, peers) = if self.user_based {
            (user, &ratings.by_item[item])
        } else {
            (item, &ratings.by_user[user])
        };
        let mut neighbors: Vec<(f64, usize, f64)> = peers
            .iter()
            .filter(|(other, _)| *other != anchor)
            .map(|&(other, w)| (self.similarity(anchor, other), other, w))
            .filter(|(s, _, _)| *s > 0.0)
            .collect();
        if neighbors.is_empty() {
            return None;
        }
        neighbors.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        neighbors.truncate(self.k);
        let (num, den) = neighbors
            .iter()
            .fold((0.0, 0.0), |(n, d), (s, _, w)| (n + s * w, d + s));
        Some(num / den)
    }
}
