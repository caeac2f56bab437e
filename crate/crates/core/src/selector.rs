//! Top-N list construction by greedy maximization of the trade-off objective.
//!
//! [`greedy_select`] keeps running genre sums so each candidate is scored in `O(|G|)`.
//! [`greedy_step_certificate`] and [`brute_force_select`] re-evaluate every list from
//! scratch through [`crate::calib::tradeoff`] and serve as independent checks.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use crate::calib::{
    chi_square, hellinger, kl, log_balance, tradeoff, Balance, BiasParams, Distribution, Divergence, GenreMass,
    ListItem, TradeOffSpec,
};
use crate::error::{Error, Result};
use crate::ingest::{csv_err, csv_writer, expect_header, flush, line_of, open_csv, write_row};
use crate::model::{CandidateItem, GenreSet};
use crate::recommend::CandidateList;

/// Candidates larger than this are refused by the exhaustive oracle.
pub const BRUTE_FORCE_MAX_CANDIDATES: usize = 20;
pub const BRUTE_FORCE_MAX_N: usize = 5;

const CERTIFICATE_RTOL: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct SelectionCandidate {
    pub item: CandidateItem,
    pub genres: GenreSet,
}

#[derive(Debug, Clone)]
pub struct SelectionProblem<'a> {
    pub user_id: String,
    /// In candidate-list order: descending weight, then ascending item id.
    pub candidates: Vec<SelectionCandidate>,
    pub p: Distribution,
    pub spec: TradeOffSpec,
    pub bias: &'a BiasParams,
    pub n: usize,
    pub lambda: f64,
}

impl<'a> SelectionProblem<'a> {
    /// Attaches genre sets to a candidate list.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        list: &CandidateList,
        genres: &HashMap<String, GenreSet>,
        p: Distribution,
        spec: TradeOffSpec,
        bias: &'a BiasParams,
        n: usize,
        lambda: f64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("list length must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
        }
        let candidates = list
            .items
            .iter()
            .map(|c| {
                let g = genres
                    .get(&c.item_id)
                    .ok_or_else(|| Error::UnknownItem(c.item_id.clone()))?;
                Ok(SelectionCandidate {
                    item: c.clone(),
                    genres: g.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            user_id: list.user_id.clone(),
            candidates,
            p,
            spec,
            bias,
            n,
            lambda,
        })
    }

    fn target_len(&self) -> usize {
        self.n.min(self.candidates.len())
    }

    /// Objective of the candidates at `indices`, evaluated from scratch.
    pub fn objective(&self, indices: &[usize]) -> Result<f64> {
        let list: Vec<ListItem<'_>> = indices
            .iter()
            .map(|&i| {
                let c = &self.candidates[i];
                ListItem {
                    item_id: &c.item.item_id,
                    genres: &c.genres,
                    weight: c.item.predicted_weight,
                }
            })
            .collect();
        tradeoff(self.lambda, &list, &self.p, &self.spec, self.bias)
    }
}

/// Final list of one user, in selection order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub user_id: String,
    pub items: Vec<CandidateItem>,
    /// Objective of the prefix after each step.
    pub objective_trace: Vec<f64>,
}

/// Running sums of the selected prefix.
struct PrefixState {
    mass: GenreMass,
    sim: f64,
    bias_dev: f64,
    len: usize,
    q: Vec<f64>,
    scratch: Vec<f64>,
}

impl PrefixState {
    fn new(n_genres: usize) -> Self {
        Self {
            mass: GenreMass::new(n_genres),
            sim: 0.0,
            bias_dev: 0.0,
            len: 0,
            q: vec![0.0; n_genres],
            scratch: vec![0.0; n_genres],
        }
    }

    fn push(&mut self, c: &SelectionCandidate, item_bias: f64, mu: f64) {
        self.mass.add(&c.genres, c.item.predicted_weight);
        self.sim += c.item.predicted_weight;
        self.bias_dev += c.item.predicted_weight - mu - item_bias;
        self.len += 1;
    }

    /// Objective of the prefix extended by `c`.
    fn score_with(&mut self, prob: &SelectionProblem<'_>, c: &SelectionCandidate, item_bias: f64) -> Result<f64> {
        let w = c.item.predicted_weight;
        for g in 0..self.q.len() {
            self.q[g] = self.mass.raw_with(g, &c.genres, w);
        }
        let total: f64 = self.q.iter().sum();
        if total <= 0.0 {
            return Err(Error::NoGenreMass);
        }
        for v in &mut self.q {
            *v /= total;
        }
        let p = prob.p.probs();
        let alpha = prob.spec.smoothing.alpha;
        let f = match prob.spec.divergence {
            Divergence::He => hellinger(p, &self.q),
            kind => {
                for ((out, q), pg) in self.scratch.iter_mut().zip(&self.q).zip(p) {
                    *out = (1.0 - alpha) * q + alpha * pg;
                }
                if kind == Divergence::Kl {
                    kl(p, &self.scratch)?
                } else {
                    chi_square(p, &self.scratch)?
                }
            }
        };
        let lambda = prob.lambda;
        let lin = (1.0 - lambda) * (self.sim + w) - lambda * f;
        Ok(match prob.spec.balance {
            Balance::Lin => lin,
            Balance::Log => {
                let bias = (self.bias_dev + w - prob.bias.mu - item_bias) / (prob.bias.sigma + (self.len + 1) as f64);
                log_balance(lin, bias, prob.spec.log_base)
            }
        })
    }
}

/// Appends, `N` times, the remaining candidate that maximizes the objective of the extended list.
///
/// Ties go to the higher predicted weight, then the smaller item id, which is candidate-list order.
pub fn greedy_select(prob: &SelectionProblem<'_>) -> Result<RankedList> {
    if prob.candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let biases: Vec<f64> = prob
        .candidates
        .iter()
        .map(|c| prob.bias.item_bias_of(&c.item.item_id))
        .collect();
    let mut state = PrefixState::new(prob.p.len());
    let mut taken = vec![false; prob.candidates.len()];
    let mut items = Vec::with_capacity(prob.target_len());
    let mut trace = Vec::with_capacity(prob.target_len());
    for _ in 0..prob.target_len() {
        let mut best: Option<(f64, usize)> = None;
        for (idx, c) in prob.candidates.iter().enumerate() {
            if taken[idx] {
                continue;
            }
            let value = state.score_with(prob, c, biases[idx])?;
            if best.is_none_or(|(b, _)| value > b) {
                best = Some((value, idx));
            }
        }
        let (value, idx) = best.expect("a candidate remains while below target length");
        taken[idx] = true;
        state.push(&prob.candidates[idx], biases[idx], prob.bias.mu);
        items.push(prob.candidates[idx].item.clone());
        trace.push(value);
    }
    Ok(RankedList {
        user_id: prob.user_id.clone(),
        items,
        objective_trace: trace,
    })
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CERTIFICATE_RTOL * a.abs().max(b.abs()).max(1.0)
}

/// Replays every greedy step from scratch and checks the appended item was the best remaining
/// candidate under the documented tie-break.
pub fn greedy_step_certificate(prob: &SelectionProblem<'_>, ranked: &RankedList) -> bool {
    if ranked.items.len() != prob.target_len() || ranked.objective_trace.len() != ranked.items.len() {
        return false;
    }
    let position: HashMap<&str, usize> = prob
        .candidates
        .iter()
        .enumerate()
        .map(|(i, c)| (c.item.item_id.as_str(), i))
        .collect();
    let mut prefix: Vec<usize> = Vec::new();
    let mut used = HashSet::new();
    for (step, item) in ranked.items.iter().enumerate() {
        let Some(&chosen) = position.get(item.item_id.as_str()) else {
            return false;
        };
        if !used.insert(chosen) {
            return false;
        }
        let mut scores = Vec::new();
        for idx in 0..prob.candidates.len() {
            if prefix.contains(&idx) {
                continue;
            }
            prefix.push(idx);
            let value = prob.objective(&prefix);
            prefix.pop();
            match value {
                Ok(v) => scores.push((idx, v)),
                Err(_) => return false,
            }
        }
        let best = scores.iter().map(|(_, v)| *v).fold(f64::NEG_INFINITY, f64::max);
        // first near-maximal candidate in list order wins the tie-break
        let Some(&(winner, value)) = scores.iter().find(|(_, v)| close(*v, best)) else {
            return false;
        };
        if winner != chosen || !close(value, ranked.objective_trace[step]) {
            return false;
        }
        prefix.push(chosen);
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustiveOptimum {
    /// Item ids of the best subset, sorted.
    pub items: Vec<String>,
    pub value: f64,
}

/// Evaluates every size-`n` subset; ties go to the lexicographically smallest id tuple.
pub fn brute_force_select(prob: &SelectionProblem<'_>) -> Result<ExhaustiveOptimum> {
    let m = prob.candidates.len();
    if m == 0 {
        return Err(Error::EmptyCandidates);
    }
    if m > BRUTE_FORCE_MAX_CANDIDATES || prob.n > BRUTE_FORCE_MAX_N {
        return Err(Error::InstanceTooLarge {
            candidates: m,
            n: prob.n,
        });
    }
    let k = prob.target_len();
    let mut best: Option<ExhaustiveOptimum> = None;
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        let value = prob.objective(&combo)?;
        let mut ids: Vec<String> = combo.iter().map(|&i| prob.candidates[i].item.item_id.clone()).collect();
        ids.sort();
        let better = match &best {
            None => true,
            Some(b) => value > b.value || (value == b.value && ids < b.items),
        };
        if better {
            best = Some(ExhaustiveOptimum { items: ids, value });
        }
        // next combination in lexicographic index order
        let mut pos = k;
        while pos > 0 && combo[pos - 1] == m - k + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        combo[pos - 1] += 1;
        for j in pos..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
    Ok(best.expect("at least one subset"))
}

/// Writes `user_id,rank,item_id,predicted_weight,objective_after_step`.
pub fn write_ranked_lists(path: &Path, lists: &BTreeMap<String, RankedList>) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(
        &mut w,
        path,
        ["user_id", "rank", "item_id", "predicted_weight", "objective_after_step"],
    )?;
    for list in lists.values() {
        for (k, (item, obj)) in list.items.iter().zip(&list.objective_trace).enumerate() {
            write_row(
                &mut w,
                path,
                [
                    list.user_id.clone(),
                    (k + 1).to_string(),
                    item.item_id.clone(),
                    item.predicted_weight.to_string(),
                    obj.to_string(),
                ],
            )?;
        }
    }
    flush(w, path)
}

pub fn read_ranked_lists(path: &Path) -> Result<BTreeMap<String, RankedList>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut rdr = open_csv(path, b',', true, None)?;
    expect_header(
        &mut rdr,
        path,
        &["user_id", "rank", "item_id", "predicted_weight", "objective_after_step"],
    )?;
    let mut rows: BTreeMap<String, Vec<(usize, CandidateItem, f64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let num = |field: &str, what: &str| -> Result<f64> {
            field
                .parse()
                .map_err(|_| Error::malformed(path, line, format!("unparseable {what}")))
        };
        let rank: usize = rec[1]
            .parse()
            .map_err(|_| Error::malformed(path, line, "unparseable rank"))?;
        let item = CandidateItem::new(&rec[2], num(&rec[3], "predicted_weight")?);
        let obj = num(&rec[4], "objective_after_step")?;
        rows.entry(rec[0].to_string()).or_default().push((rank, item, obj));
    }
    Ok(rows
        .into_iter()
        .map(|(user, mut entries)| {
            entries.sort_by_key(|e| e.0);
            let (items, trace) = entries.into_iter().map(|(_, i, o)| (i, o)).unzip();
            (
                user.clone(),
                RankedList {
                    user_id: user,
                    items,
                    objective_trace: trace,
                },
            )
        })
        .collect())
}
