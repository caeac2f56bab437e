//! Relevance/calibration trade-off objectives and their personalized weights.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::distribution::{realized_distribution, Distribution, SmoothingParams};
use super::divergence::Divergence;
use crate::error::{Error, Result};
use crate::model::{CandidateItem, GenreSet};

/// How the trade-off weight λ is chosen for a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaPolicy {
    Constant(f64),
    /// One minus the normalized variance of the target distribution.
    Var,
    /// Share of the genre universe touched by the user's preferences.
    Cgr,
}

impl LambdaPolicy {
    /// The eleven constants `0.0, 0.1, …, 1.0` followed by `Var` and `Cgr`.
    pub fn default_grid() -> Vec<LambdaPolicy> {
        let mut grid: Vec<_> = (0..=10).map(|k| LambdaPolicy::Constant(k as f64 / 10.0)).collect();
        grid.push(LambdaPolicy::Var);
        grid.push(LambdaPolicy::Cgr);
        grid
    }

    pub fn label(&self) -> String {
        match self {
            LambdaPolicy::Constant(v) => {
                let short = format!("{v:.1}");
                if short.parse::<f64>().ok() == Some(*v) {
                    short
                } else {
                    v.to_string()
                }
            }
            LambdaPolicy::Var => "VAR".into(),
            LambdaPolicy::Cgr => "CGR".into(),
        }
    }

    /// Resolves λ for one user.
    pub fn resolve(&self, p: &Distribution, touched_genres: usize) -> f64 {
        match *self {
            LambdaPolicy::Constant(v) => v,
            LambdaPolicy::Var => lambda_var(p),
            LambdaPolicy::Cgr => lambda_cgr(touched_genres, p.len()),
        }
    }
}

impl fmt::Display for LambdaPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl Serialize for LambdaPolicy {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(&self.label())
    }
}

impl<'de> Deserialize<'de> for LambdaPolicy {
    /// Accepts a label (`"0.3"`, `"var"`, `"cgr"`) or a bare number.
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Number(f64),
            Label(String),
        }
        let text = match Repr::deserialize(de)? {
            Repr::Number(v) => v.to_string(),
            Repr::Label(s) => s,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(LambdaPolicy::Var),
            "cgr" => Ok(LambdaPolicy::Cgr),
            other => {
                let v: f64 = other
                    .parse()
                    .map_err(|_| Error::Config(format!("unknown lambda policy {s:?}")))?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::Config(format!("lambda {v} outside [0, 1]")));
                }
                Ok(LambdaPolicy::Constant(v))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Balance {
    Lin,
    Log,
}

impl Balance {
    pub const ALL: [Balance; 2] = [Balance::Lin, Balance::Log];

    pub fn label(self) -> &'static str {
        match self {
            Balance::Lin => "LIN",
            Balance::Log => "LOG",
        }
    }
}

impl fmt::Display for Balance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Balance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lin" | "linear" => Ok(Balance::Lin),
            "log" | "logarithmic" => Ok(Balance::Log),
            other => Err(Error::Config(format!("unknown balance {other:?}"))),
        }
    }
}

/// One point of the post-processing grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeOffSpec {
    pub balance: Balance,
    pub divergence: Divergence,
    pub lambda: LambdaPolicy,
    pub smoothing: SmoothingParams,
    /// Base of the logarithm in the LOG balance.
    pub log_base: f64,
}

impl TradeOffSpec {
    pub fn new(balance: Balance, divergence: Divergence, lambda: LambdaPolicy) -> Self {
        Self {
            balance,
            divergence,
            lambda,
            smoothing: SmoothingParams::default(),
            log_base: std::f64::consts::E,
        }
    }
}

/// Global mean and per-item biases of the training feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasParams {
    pub mu: f64,
    pub alpha_b: f64,
    pub sigma: f64,
    pub item_bias: HashMap<String, f64>,
}

impl BiasParams {
    pub const DEFAULT_ALPHA: f64 = 0.01;
    pub const DEFAULT_SIGMA: f64 = 0.01;

    pub fn new(mu: f64) -> Self {
        Self {
            mu,
            alpha_b: Self::DEFAULT_ALPHA,
            sigma: Self::DEFAULT_SIGMA,
            item_bias: HashMap::new(),
        }
    }

    /// Computes `μ` and every `b_i` from `(item, weight)` training feedback.
    pub fn fit<'a, I>(feedback: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        Self::fit_with(feedback, Self::DEFAULT_ALPHA, Self::DEFAULT_SIGMA)
    }

    pub fn fit_with<'a, I>(feedback: I, alpha_b: f64, sigma: f64) -> Self
    where
        I: IntoIterator<Item = (&'a str, f64)>,
    {
        let mut per_item: HashMap<&str, Vec<f64>> = HashMap::new();
        let (mut total, mut count) = (0.0, 0usize);
        for (item, w) in feedback {
            per_item.entry(item).or_default().push(w);
            total += w;
            count += 1;
        }
        let mut bp = Self::new(if count > 0 { total / count as f64 } else { 0.0 });
        bp.alpha_b = alpha_b;
        bp.sigma = sigma;
        bp.item_bias = per_item
            .into_iter()
            .map(|(item, ws)| (item.to_string(), item_bias(&ws, &bp)))
            .collect();
        bp
    }

    /// `b_i`, or 0 for items without training feedback.
    pub fn item_bias_of(&self, item_id: &str) -> f64 {
        self.item_bias.get(item_id).copied().unwrap_or(0.0)
    }
}

/// An entry of a list under evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ListItem<'a> {
    pub item_id: &'a str,
    pub genres: &'a GenreSet,
    pub weight: f64,
}

/// `Sim(L)`: sum of predicted weights.
pub fn relevance_sum(list: &[CandidateItem]) -> f64 {
    list.iter().map(|c| c.predicted_weight).sum()
}

/// Personalized λ from the normalized variance of `p`.
pub fn lambda_var(p: &Distribution) -> f64 {
    let n = p.len() as f64;
    let mp = p.probs().iter().sum::<f64>() / n;
    let spread: f64 = p.probs().iter().map(|v| (v - mp).powi(2)).sum();
    (1.0 - spread / n).clamp(0.0, 1.0)
}

/// Personalized λ as the fraction of genres present in the user's preferences.
pub fn lambda_cgr(touched_genres: usize, universe_len: usize) -> f64 {
    (touched_genres as f64 / universe_len as f64).clamp(0.0, 1.0)
}

/// `b_i = Σ(w − μ) / (α + |W(i)|)`.
pub fn item_bias(weights: &[f64], bp: &BiasParams) -> f64 {
    if weights.is_empty() {
        return 0.0;
    }
    let dev: f64 = weights.iter().map(|w| w - bp.mu).sum();
    dev / (bp.alpha_b + weights.len() as f64)
}

/// `b̂_u(L) = Σ(ŵ − μ − b_i) / (σ + |L|)`.
pub fn user_bias(list: &[CandidateItem], bp: &BiasParams) -> f64 {
    let dev: f64 = list
        .iter()
        .map(|c| c.predicted_weight - bp.mu - bp.item_bias_of(&c.item_id))
        .sum();
    dev / (bp.sigma + list.len() as f64)
}

/// `sign(t) · log_b(|t| + 1) + bias`, with `sign(0) = 0`.
pub fn log_balance(t: f64, bias: f64, log_base: f64) -> f64 {
    let magnitude = (t.abs() + 1.0).ln() / log_base.ln();
    let signed = if t > 0.0 {
        magnitude
    } else if t < 0.0 {
        -magnitude
    } else {
        0.0
    };
    signed + bias
}

fn miscalibration(list: &[ListItem<'_>], p: &Distribution, spec: &TradeOffSpec) -> Result<f64> {
    let pairs: Vec<(&GenreSet, f64)> = list.iter().map(|e| (e.genres, e.weight)).collect();
    let q = realized_distribution(&pairs, p.len())?;
    spec.divergence.calibration(p, &q, spec.smoothing)
}

/// `(1 − λ)·Sim(L) − λ·F(p, q̃(L))`.
pub fn tradeoff_lin(lambda: f64, list: &[ListItem<'_>], p: &Distribution, spec: &TradeOffSpec) -> Result<f64> {
    let sim: f64 = list.iter().map(|e| e.weight).sum();
    let f = miscalibration(list, p, spec)?;
    Ok((1.0 - lambda) * sim - lambda * f)
}

/// Logarithmic balance of [`tradeoff_lin`] plus the list's user bias.
pub fn tradeoff_log(
    lambda: f64,
    list: &[ListItem<'_>],
    p: &Distribution,
    spec: &TradeOffSpec,
    bp: &BiasParams,
) -> Result<f64> {
    let t = tradeoff_lin(lambda, list, p, spec)?;
    let dev: f64 = list.iter().map(|e| e.weight - bp.mu - bp.item_bias_of(e.item_id)).sum();
    let bias = dev / (bp.sigma + list.len() as f64);
    Ok(log_balance(t, bias, spec.log_base))
}

/// The objective selected by `spec.balance`.
pub fn tradeoff(
    lambda: f64,
    list: &[ListItem<'_>],
    p: &Distribution,
    spec: &TradeOffSpec,
    bp: &BiasParams,
) -> Result<f64> {
    match spec.balance {
        Balance::Lin => tradeoff_lin(lambda, list, p, spec),
        Balance::Log => tradeoff_log(lambda, list, p, spec, bp),
    }
}
