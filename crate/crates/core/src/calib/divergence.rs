//! Miscalibration measures between a target and a realized genre distribution.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::distribution::{check_same_len, smooth, Distribution, SmoothingParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    /// Kullback-Leibler, base 2.
    Kl,
    /// Hellinger, scaled to `[0, 2]`.
    He,
    /// Pearson χ².
    Chi,
}

impl Divergence {
    pub const ALL: [Divergence; 3] = [Divergence::Kl, Divergence::He, Divergence::Chi];

    pub fn label(self) -> &'static str {
        match self {
            Divergence::Kl => "KL",
            Divergence::He => "HE",
            Divergence::Chi => "CHI",
        }
    }

    /// Evaluates the measure on already prepared vectors (`q` is `q̃` for KL and χ²).
    pub fn between(self, p: &Distribution, q: &Distribution) -> Result<f64> {
        check_same_len(p, q)?;
        match self {
            Divergence::Kl => kl(p.probs(), q.probs()),
            Divergence::He => Ok(hellinger(p.probs(), q.probs())),
            Divergence::Chi => chi_square(p.probs(), q.probs()),
        }
    }

    /// Miscalibration of an unsmoothed realized distribution `q` against `p`.
    ///
    /// KL and χ² are taken against `q̃`; Hellinger uses `q` as is.
    pub fn calibration(self, p: &Distribution, q: &Distribution, s: SmoothingParams) -> Result<f64> {
        match self {
            Divergence::He => self.between(p, q),
            Divergence::Kl | Divergence::Chi => self.between(p, &smooth(q, p, s)?),
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Divergence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Divergence::Kl),
            "he" | "hellinger" => Ok(Divergence::He),
            "chi" | "chi2" => Ok(Divergence::Chi),
            other => Err(Error::Config(format!("unknown divergence {other:?}"))),
        }
    }
}

/// `Σ p·log₂(p/q̃)`, with `0·log(0/x) = 0`.
pub fn kl(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (g, (&pg, &qg)) in p.iter().zip(q).enumerate() {
        if pg == 0.0 {
            continue;
        }
        if qg == 0.0 {
            return Err(Error::ZeroSupport { genre: g });
        }
        acc += pg * (pg / qg).log2();
    }
    Ok(acc.max(0.0))
}

/// `sqrt(2·Σ(√p − √q)²)`.
pub fn hellinger(p: &[f64], q: &[f64]) -> f64 {
    let s: f64 = p
        .iter()
        .zip(q)
        .map(|(pg, qg)| {
            let d = pg.sqrt() - qg.sqrt();
            d * d
        })
        .sum();
    (2.0 * s).sqrt()
}

/// `Σ (p − q̃)²/q̃`, where terms with `p = q̃ = 0` vanish.
pub fn chi_square(p: &[f64], q: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (g, (&pg, &qg)) in p.iter().zip(q).enumerate() {
        if qg == 0.0 {
            if pg == 0.0 {
                continue;
            }
            return Err(Error::ZeroSupport { genre: g });
        }
        let d = pg - qg;
        acc += d * d / qg;
    }
    Ok(acc)
}
