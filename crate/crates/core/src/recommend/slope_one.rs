//! Weighted Slope One.

use super::ratings::Ratings;

#[derive(Debug, Clone)]
pub struct SlopeOneModel {
    /// `dev[j * n + i]`: summed `r_j − r_i` over users that rated both.
    dev: Vec<f64>,
    card: Vec<u32>,
    n: usize,
}

impl SlopeOneModel {
    pub fn fit(ratings: &Ratings) -> Self {
        let n = ratings.n_items();
        let mut dev = vec![0.0; n * n];
        let mut card = vec![0u32; n * n];
        for rated in &ratings.by_user {
            for &(j, rj) in rated {
                for &(i, ri) in rated {
                    if i != j {
                        dev[j * n + i] += rj - ri;
                        card[j * n + i] += 1;
                    }
                }
            }
        }
        Self { dev, card, n }
    }

    /// `Σ_i (dev_ji + r_ui)·c_ji / Σ_i c_ji` over the user's rated items with `c_ji > 0`.
    pub fn estimate(&self, ratings: &Ratings, user: usize, item: usize) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for &(i, r) in &ratings.by_user[user] {
            if i == item {
                continue;
            }
            let c = self.card[item * self.n + i];
            if c == 0 {
                continue;
            }
            let c = c as f64;
            let mean_dev = self.dev[item * self.n + i] / c;
            num += (mean_dev + r) * c;
            den += c;
        }
        (den > 0.0).then(|| num / den)
    }
}
