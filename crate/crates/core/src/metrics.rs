//! Per-user and per-system list quality: AP, prefix-averaged calibration error and
//! prefix-averaged miscalibration.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calib::{smooth, Distribution, Divergence, GenreMass, SmoothingParams};
use crate::error::{Error, Result};
use crate::ingest::{csv_err, csv_writer, expect_header, flush, line_of, open_csv, write_row};
use crate::model::GenreSet;
use crate::selector::RankedList;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationConfig {
    pub n: usize,
    pub eval_divergence: Divergence,
    #[serde(with = "alpha")]
    pub smoothing: SmoothingParams,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            n: 10,
            eval_divergence: Divergence::Kl,
            smoothing: SmoothingParams::default(),
        }
    }
}

impl EvaluationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("evaluation depth must be at least 1".into()));
        }
        SmoothingParams::new(self.smoothing.alpha).map(|_| ())
    }
}

/// Serializes the smoothing parameters as the bare α.
mod alpha {
    use super::SmoothingParams;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &SmoothingParams, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_f64(s.alpha)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<SmoothingParams, D::Error> {
        let a = f64::deserialize(de)?;
        SmoothingParams::new(a).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEvaluation {
    pub user_id: String,
    pub ap: f64,
    pub ace: f64,
    pub rmc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemEvaluation {
    pub map_mean: f64,
    pub mace_mean: f64,
    pub mrmc_mean: f64,
}

/// `Σ_{k≤n} rel(k)·precision@k / min(n, |relevant|)`; 0 without relevant items.
pub fn average_precision(ranked: &[&str], relevant: &HashSet<&str>, n: usize) -> Result<f64> {
    if ranked.len() < n {
        return Err(Error::ListTooShort { len: ranked.len(), n });
    }
    if relevant.is_empty() || n == 0 {
        return Ok(0.0);
    }
    let (mut hits, mut total) = (0usize, 0.0);
    for (k, item) in ranked[..n].iter().enumerate() {
        if relevant.contains(item) {
            hits += 1;
            total += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(total / n.min(relevant.len()) as f64)
}

/// Smoothed realized distributions of the prefixes of length `1..=n`.
pub fn prefix_distributions(
    list: &[(&GenreSet, f64)],
    p: &Distribution,
    n: usize,
    smoothing: SmoothingParams,
) -> Result<Vec<Distribution>> {
    if list.len() < n {
        return Err(Error::ListTooShort { len: list.len(), n });
    }
    let mut mass = GenreMass::new(p.len());
    list[..n]
        .iter()
        .map(|(genres, w)| {
            mass.add(genres, *w);
            smooth(&mass.to_distribution()?, p, smoothing)
        })
        .collect()
}

/// Mean over prefixes of the mean absolute per-genre gap between `p` and `q̃@k`.
pub fn ace(prefixes: &[Distribution], p: &Distribution) -> f64 {
    if prefixes.is_empty() {
        return 0.0;
    }
    let g = p.len() as f64;
    let total: f64 = prefixes
        .iter()
        .map(|q| p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>() / g)
        .sum();
    total / prefixes.len() as f64
}

/// Mean over prefixes of `divergence(p, q̃@k)`.
pub fn rmc(prefixes: &[Distribution], p: &Distribution, divergence: Divergence) -> Result<f64> {
    if prefixes.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for q in prefixes {
        total += divergence.between(p, q)?;
    }
    Ok(total / prefixes.len() as f64)
}

/// Evaluates one user's final list against their test items and target distribution.
pub fn evaluate_user(
    ranked: &RankedList,
    genres: &HashMap<String, GenreSet>,
    relevant: &HashSet<&str>,
    p: &Distribution,
    cfg: &EvaluationConfig,
) -> Result<UserEvaluation> {
    let ids: Vec<&str> = ranked.items.iter().map(|c| c.item_id.as_str()).collect();
    let ap = average_precision(&ids, relevant, cfg.n)?;
    let pairs: Vec<(&GenreSet, f64)> = ranked
        .items
        .iter()
        .map(|c| {
            genres
                .get(&c.item_id)
                .map(|g| (g, c.predicted_weight))
                .ok_or_else(|| Error::UnknownItem(c.item_id.clone()))
        })
        .collect::<Result<_>>()?;
    let prefixes = prefix_distributions(&pairs, p, cfg.n, cfg.smoothing)?;
    Ok(UserEvaluation {
        user_id: ranked.user_id.clone(),
        ap,
        ace: ace(&prefixes, p),
        rmc: rmc(&prefixes, p, cfg.eval_divergence)?,
    })
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Mean over users within each repetition, then over repetitions.
pub fn aggregate(repetitions: &[Vec<UserEvaluation>]) -> Result<SystemEvaluation> {
    if repetitions.is_empty() || repetitions.iter().any(Vec::is_empty) {
        return Err(Error::EmptyAggregate);
    }
    let per_rep: Vec<SystemEvaluation> = repetitions
        .iter()
        .map(|users| {
            // sum in user-id order so the fold does not depend on input order
            let mut sorted: Vec<&UserEvaluation> = users.iter().collect();
            sorted.sort_by(|a, b| a.user_id.cmp(&b.user_id));
            SystemEvaluation {
                map_mean: mean(sorted.iter().map(|u| u.ap)),
                mace_mean: mean(sorted.iter().map(|u| u.ace)),
                mrmc_mean: mean(sorted.iter().map(|u| u.rmc)),
            }
        })
        .collect();
    Ok(aggregate_repetitions(&per_rep))
}

/// Mean of per-repetition system values.
pub fn aggregate_repetitions(per_rep: &[SystemEvaluation]) -> SystemEvaluation {
    let mut sorted = per_rep.to_vec();
    sorted.sort_by(|a, b| {
        a.map_mean
            .total_cmp(&b.map_mean)
            .then(a.mace_mean.total_cmp(&b.mace_mean))
            .then(a.mrmc_mean.total_cmp(&b.mrmc_mean))
    });
    SystemEvaluation {
        map_mean: mean(sorted.iter().map(|s| s.map_mean)),
        mace_mean: mean(sorted.iter().map(|s| s.mace_mean)),
        mrmc_mean: mean(sorted.iter().map(|s| s.mrmc_mean)),
    }
}

const USER_HEADER: [&str; 4] = ["user_id", "ap", "ace", "rmc"];

/// Writes `user_id,ap,ace,rmc`, users in id order.
pub fn write_user_evaluations(path: &Path, evals: &[UserEvaluation]) -> Result<()> {
    let mut sorted: Vec<&UserEvaluation> = evals.iter().collect();
    sorted.sort_by(|a, b| a.user_id.cmp(&b.user_id));
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, USER_HEADER)?;
    for e in sorted {
        write_row(
            &mut w,
            path,
            [
                e.user_id.clone(),
                e.ap.to_string(),
                e.ace.to_string(),
                e.rmc.to_string(),
            ],
        )?;
    }
    flush(w, path)
}

pub fn read_user_evaluations(path: &Path) -> Result<Vec<UserEvaluation>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut rdr = open_csv(path, b',', true, None)?;
    expect_header(&mut rdr, path, &USER_HEADER)?;
    let mut out: BTreeMap<String, UserEvaluation> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse()
                .map_err(|_| Error::malformed(path, line, format!("unparseable {}", USER_HEADER[i])))
        };
        let e = UserEvaluation {
            user_id: rec[0].to_string(),
            ap: num(1)?,
            ace: num(2)?,
            rmc: num(3)?,
        };
        if out.insert(e.user_id.clone(), e).is_some() {
            return Err(Error::malformed(path, line, "duplicate user"));
        }
    }
    Ok(out.into_values().collect())
}
