//! Decision protocol: error and miscalibration coefficients relative to precision, and the
//! system with the lowest total.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use crate::calib::{Balance, Divergence};
use crate::error::{Error, Result};
use crate::ingest::{csv_err, csv_writer, flush, line_of, open_csv, write_row};
use crate::metrics::{aggregate_repetitions, SystemEvaluation};

/// One evaluated system combination.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SystemId {
    pub recommender: String,
    pub divergence: Divergence,
    pub balance: Balance,
    /// Trade-off weight label; absent when the system aggregates over all weights.
    pub lambda: Option<String>,
}

impl SystemId {
    pub fn new(
        recommender: impl Into<String>,
        divergence: Divergence,
        balance: Balance,
        lambda: Option<String>,
    ) -> Self {
        Self {
            recommender: recommender.into(),
            divergence,
            balance,
            lambda,
        }
    }

    /// `DIV-BAL-recommender`, with `@λ` appended when present.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SystemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            self.divergence.label(),
            self.balance.label(),
            self.recommender
        )?;
        if let Some(l) = &self.lambda {
            write!(f, "@{l}")?;
        }
        Ok(())
    }
}

impl PartialOrd for SystemId {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SystemId {
    /// Orders by label, the tie-break of [`decide`].
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.label().cmp(&other.label()).then_with(|| {
            (&self.recommender, self.divergence, self.balance, &self.lambda).cmp(&(
                &other.recommender,
                other.divergence,
                other.balance,
                &other.lambda,
            ))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolRow {
    pub system: SystemId,
    pub cce: f64,
    pub cmc: f64,
    pub s: f64,
}

impl ProtocolRow {
    pub fn new(system: SystemId, cce: f64, cmc: f64) -> Self {
        Self {
            system,
            cce,
            cmc,
            s: performance(cce, cmc),
        }
    }

    pub fn from_evaluation(system: SystemId, eval: &SystemEvaluation) -> Result<Self> {
        Ok(Self::new(system, cce(eval)?, cmc(eval)?))
    }
}

fn coefficient(numerator: f64, map: f64) -> Result<f64> {
    if map <= 0.0 {
        return Err(Error::ZeroPrecision);
    }
    Ok(numerator / map)
}

/// `MACE / MAP`.
pub fn cce(eval: &SystemEvaluation) -> Result<f64> {
    coefficient(eval.mace_mean, eval.map_mean)
}

/// `MRMC / MAP`.
pub fn cmc(eval: &SystemEvaluation) -> Result<f64> {
    coefficient(eval.mrmc_mean, eval.map_mean)
}

pub fn performance(cce: f64, cmc: f64) -> f64 {
    cce + cmc
}

/// The system with the smallest `s`; equal values go to the smaller label.
pub fn decide<'a, I>(scores: I) -> Result<(SystemId, f64)>
where
    I: IntoIterator<Item = (&'a SystemId, f64)>,
{
    scores
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)))
        .map(|(id, s)| (id.clone(), s))
        .ok_or(Error::NoSystems)
}

pub fn decide_rows(rows: &[ProtocolRow]) -> Result<(SystemId, f64)> {
    decide(rows.iter().map(|r| (&r.system, r.s)))
}

/// One line of `metrics.csv`: a system's user-averaged values in one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub system: SystemId,
    pub repetition: usize,
    pub eval: SystemEvaluation,
}

pub const METRICS_HEADER: [&str; 8] = [
    "recommender",
    "divergence",
    "balance",
    "lambda",
    "repetition",
    "map",
    "mace",
    "mrmc",
];

pub const DECISION_HEADER: [&str; 7] = ["recommender", "divergence", "balance", "lambda", "cce", "cmc", "s"];

fn system_key(id: &SystemId) -> (String, &'static str, &'static str, String) {
    (
        id.recommender.clone(),
        id.divergence.label(),
        id.balance.label(),
        id.lambda.clone().unwrap_or_default(),
    )
}

/// Writes metrics rows sorted by `(recommender, divergence, balance, lambda, repetition)`.
pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut sorted: Vec<&MetricsRow> = rows.iter().collect();
    sorted.sort_by(|a, b| (system_key(&a.system), a.repetition).cmp(&(system_key(&b.system), b.repetition)));
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, METRICS_HEADER)?;
    for r in sorted {
        write_row(
            &mut w,
            path,
            [
                r.system.recommender.clone(),
                r.system.divergence.label().to_string(),
                r.system.balance.label().to_string(),
                r.system.lambda.clone().unwrap_or_default(),
                r.repetition.to_string(),
                r.eval.map_mean.to_string(),
                r.eval.mace_mean.to_string(),
                r.eval.mrmc_mean.to_string(),
            ],
        )?;
    }
    flush(w, path)
}

/// Protocol rows from per-repetition metrics, averaging repetitions per system.
///
/// Systems whose coefficients are undefined are returned separately with the reason.
pub fn rows_from_metrics(rows: &[MetricsRow]) -> (Vec<ProtocolRow>, Vec<(SystemId, Error)>) {
    let mut grouped: BTreeMap<SystemId, Vec<SystemEvaluation>> = BTreeMap::new();
    for r in rows {
        grouped.entry(r.system.clone()).or_default().push(r.eval);
    }
    let (mut ok, mut failed) = (Vec::new(), Vec::new());
    for (id, evals) in grouped {
        match ProtocolRow::from_evaluation(id.clone(), &aggregate_repetitions(&evals)) {
            Ok(row) => ok.push(row),
            Err(e) => failed.push((id, e)),
        }
    }
    (ok, failed)
}

/// Writes the decision rows sorted by system key, then a `# winner` comment line.
pub fn write_decision(path: &Path, rows: &[ProtocolRow], winner: Option<&(SystemId, f64)>) -> Result<()> {
    let mut sorted: Vec<&ProtocolRow> = rows.iter().collect();
    sorted.sort_by(|a, b| system_key(&a.system).cmp(&system_key(&b.system)));
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, DECISION_HEADER)?;
    for r in sorted {
        write_row(
            &mut w,
            path,
            [
                r.system.recommender.clone(),
                r.system.divergence.label().to_string(),
                r.system.balance.label().to_string(),
                r.system.lambda.clone().unwrap_or_default(),
                r.cce.to_string(),
                r.cmc.to_string(),
                r.s.to_string(),
            ],
        )?;
    }
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    if let Some((id, s)) = winner {
        writeln!(inner, "# winner,{id},{s}").map_err(|e| Error::io(path, e))?;
    }
    inner.flush().map_err(|e| Error::io(path, e))
}

/// Scores read by `decide`: either from a metrics file or from a decision file.
#[derive(Debug)]
pub enum DecisionInput {
    /// Computed rows, satisfying `s = cce + cmc`.
    Computed(Vec<ProtocolRow>, Vec<(SystemId, Error)>),
    /// Given `s` per system, e.g. transcribed tables where `cce`/`cmc` may be blank.
    Scores(Vec<(SystemId, f64)>),
}

/// Reads metrics or decision CSV, recognized by its header.
pub fn read_decision_input(path: &Path) -> Result<DecisionInput> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut rdr = open_csv(path, b',', true, Some(b'#'))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let is = |expected: &[&str]| header.iter().map(String::as_str).eq(expected.iter().copied());
    let metrics = if is(&METRICS_HEADER) {
        true
    } else if is(&DECISION_HEADER) {
        false
    } else {
        return Err(Error::malformed(
            path,
            1,
            format!(
                "expected header {:?} or {:?}, found {:?}",
                METRICS_HEADER.join(","),
                DECISION_HEADER.join(","),
                header.join(",")
            ),
        ));
    };
    let width = header.len();
    let mut metric_rows = Vec::new();
    let mut scores = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        if rec.len() != width {
            return Err(Error::malformed(
                path,
                line,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let field = |i: usize| rec[i].trim();
        let bad = |i: usize| Error::malformed(path, line, format!("unparseable {} {:?}", header[i], field(i)));
        let divergence: Divergence = field(1).parse().map_err(|_| bad(1))?;
        let balance: Balance = field(2).parse().map_err(|_| bad(2))?;
        let lambda = Some(field(3)).filter(|l| !l.is_empty()).map(str::to_string);
        let id = SystemId::new(field(0), divergence, balance, lambda);
        let num = |i: usize| -> Result<Option<f64>> {
            let f = field(i);
            if f.is_empty() {
                return Ok(None);
            }
            f.parse::<f64>()
                .map(Some)
                .map_err(|_| Error::malformed(path, line, format!("unparseable {} {f:?}", header[i])))
        };
        if metrics {
            let repetition: usize = field(4).parse().map_err(|_| bad(4))?;
            let req = |i: usize| num(i)?.ok_or_else(|| Error::malformed(path, line, format!("missing {}", header[i])));
            metric_rows.push(MetricsRow {
                system: id,
                repetition,
                eval: SystemEvaluation {
                    map_mean: req(5)?,
                    mace_mean: req(6)?,
                    mrmc_mean: req(7)?,
                },
            });
        } else {
            let s = match (num(6)?, num(4)?, num(5)?) {
                (Some(s), _, _) => s,
                (None, Some(c), Some(m)) => performance(c, m),
                _ => return Err(Error::malformed(path, line, "row needs s or both cce and cmc")),
            };
            scores.push((id, s));
        }
    }
    Ok(if metrics {
        let (rows, failed) = rows_from_metrics(&metric_rows);
        DecisionInput::Computed(rows, failed)
    } else {
        DecisionInput::Scores(scores)
    })
}

/// Pivot of `s` values: one line per divergence/balance pair, one column per recommender
/// (and weight, when present); the winner is starred.
pub fn render_table(scores: &[(SystemId, f64)], winner: Option<&SystemId>) -> String {
    let column = |id: &SystemId| match &id.lambda {
        Some(l) => format!("{}@{l}", id.recommender),
        None => id.recommender.clone(),
    };
    let mut columns: Vec<String> = scores.iter().map(|(id, _)| column(id)).collect();
    columns.sort();
    columns.dedup();
    let mut lines: BTreeMap<(Divergence, Balance), BTreeMap<String, String>> = BTreeMap::new();
    for (id, s) in scores {
        let star = if winner == Some(id) { "*" } else { "" };
        lines
            .entry((id.divergence, id.balance))
            .or_default()
            .insert(column(id), format!("{s:.2}{star}"));
    }
    let width = columns.iter().map(String::len).max().unwrap_or(0).max(10);
    let mut out = format!("{:<10} {:<7}", "Divergence", "Balance");
    for c in &columns {
        out.push_str(&format!(" {c:>width$}"));
    }
    out.push('\n');
    for ((div, bal), cells) in &lines {
        out.push_str(&format!("{:<10} {:<7}", div.label(), bal.label()));
        for c in &columns {
            out.push_str(&format!(" {:>width$}", cells.get(c).map(String::as_str).unwrap_or("-")));
        }
        out.push('\n');
    }
    out
}
