//! Genre distributions of user profiles and recommendation lists.
//!
//! Both the target distribution (from the user's preference items) and the realized
//! distribution (from a list) use the same per-genre weighted average of `p(g|i)`:
//!
//! ```text
//! raw(g) = Σ_i 1(g ∈ i) · w_i · p(g|i) / Σ_i 1(g ∈ i) · w_i
//! ```
//!
//! The per-genre denominator means `raw` is not a probability vector, so it is
//! renormalized before any divergence is taken. The raw values stay available on the
//! returned [`Distribution`].

use crate::error::{Error, Result};
use crate::model::GenreSet;

const SUM_TOLERANCE: f64 = 1e-9;

/// Probability mass over a fixed genre universe.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    probs: Vec<f64>,
    raw: Option<Vec<f64>>,
}

impl Distribution {
    /// Wraps an explicit probability vector, checking non-negativity and normalization.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config(
                "distribution entries must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::Config(format!("distribution sums to {sum}, not 1")));
        }
        Ok(Self { probs, raw: None })
    }

    pub fn uniform(n_genres: usize) -> Self {
        Self {
            probs: vec![1.0 / n_genres as f64; n_genres],
            raw: None,
        }
    }

    pub(crate) fn from_raw(raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::NoGenreMass);
        }
        let probs = raw.iter().map(|r| r / total).collect();
        Ok(Self { probs, raw: Some(raw) })
    }

    pub(crate) fn from_probs_unchecked(probs: Vec<f64>) -> Self {
        Self { probs, raw: None }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Pre-normalization values, when this distribution was built from weighted items.
    pub fn raw(&self) -> Option<&[f64]> {
        self.raw.as_deref()
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, genre: usize) -> f64 {
        self.probs[genre]
    }
}

/// Smoothing factor mixing the realized distribution with the target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingParams {
    pub alpha: f64,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self { alpha: 0.01 }
    }
}

impl SmoothingParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Config(format!("smoothing alpha {alpha} outside [0, 1]")));
        }
        Ok(Self { alpha })
    }
}

/// `p(g|i)`: uniform share of an item's genres.
pub fn genre_prob(item: &GenreSet, genre: usize) -> f64 {
    if item.contains(genre) {
        1.0 / item.len() as f64
    } else {
        0.0
    }
}

/// Running numerators and denominators of the per-genre weighted average.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreMass {
    num: Vec<f64>,
    den: Vec<f64>,
}

impl GenreMass {
    pub fn new(n_genres: usize) -> Self {
        Self {
            num: vec![0.0; n_genres],
            den: vec![0.0; n_genres],
        }
    }

    pub fn add(&mut self, item: &GenreSet, weight: f64) {
        let share = 1.0 / item.len() as f64;
        for &g in item.as_slice() {
            self.num[g] += weight * share;
            self.den[g] += weight;
        }
    }

    /// Raw value of one genre.
    pub fn raw_at(&self, genre: usize) -> f64 {
        if self.den[genre] > 0.0 {
            self.num[genre] / self.den[genre]
        } else {
            0.0
        }
    }

    /// Raw value of one genre as if `item` with `weight` had been added.
    pub fn raw_with(&self, genre: usize, item: &GenreSet, weight: f64) -> f64 {
        if item.contains(genre) {
            let num = self.num[genre] + weight * (1.0 / item.len() as f64);
            let den = self.den[genre] + weight;
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        } else {
            self.raw_at(genre)
        }
    }

    pub fn raw(&self) -> Vec<f64> {
        (0..self.num.len()).map(|g| self.raw_at(g)).collect()
    }

    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num.is_empty()
    }

    pub fn to_distribution(&self) -> Result<Distribution> {
        Distribution::from_raw(self.raw())
    }
}

/// Target distribution `p(·|u)` of a user's preference items with their feedback weights.
pub fn target_distribution(prefs: &[(&GenreSet, f64)], n_genres: usize) -> Result<Distribution> {
    let mut mass = GenreMass::new(n_genres);
    for (genres, w) in prefs {
        mass.add(genres, *w);
    }
    mass.to_distribution()
}

/// Realized distribution `q(·|u)` of a list, weighted by predicted weights.
pub fn realized_distribution(list: &[(&GenreSet, f64)], n_genres: usize) -> Result<Distribution> {
    target_distribution(list, n_genres)
}

/// `q̃ = (1 − α)·q + α·p`.
pub fn smooth(q: &Distribution, p: &Distribution, s: SmoothingParams) -> Result<Distribution> {
    check_same_len(q, p)?;
    let probs = q
        .probs
        .iter()
        .zip(&p.probs)
        .map(|(qg, pg)| (1.0 - s.alpha) * qg + s.alpha * pg)
        .collect();
    Ok(Distribution::from_probs_unchecked(probs))
}

pub(crate) fn check_same_len(a: &Distribution, b: &Distribution) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::UniverseMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}
