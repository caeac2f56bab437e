//! Experiment orchestration over an output directory.
//!
//! Each stage reads the files written by the previous one, so a full run and the same
//! stages executed one by one produce identical outputs:
//!
//! ```text
//! data/interactions.csv, data/genres.csv        preprocess
//! rep{r}/split.csv                              preprocess
//! rep{r}/candidates/{recommender}.csv           recommend
//! rep{r}/lists/{recommender}/{combination}.csv  postprocess
//! rep{r}/users/{recommender}/{combination}.csv  evaluate
//! metrics.csv                                   evaluate
//! decision.csv, decision.txt                    decide
//! manifest.json                                 run_all
//! ```

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calib::{
    target_distribution, Balance, BiasParams, Distribution, Divergence, LambdaPolicy, SmoothingParams, TradeOffSpec,
};
use crate::error::{Error, Result};
use crate::ingest::{
    load_generic_csv, load_movielens, load_tasteprofile, preprocess, split, Domain, InteractionTable, PreprocessConfig,
    SplitDataset,
};
use crate::metrics::{aggregate, evaluate_user, write_user_evaluations, EvaluationConfig};
use crate::model::GenreSet;
use crate::protocol::{
    decide, decide_rows, read_decision_input, render_table, write_decision, write_metrics, DecisionInput, MetricsRow,
    SystemId,
};
use crate::recommend::{
    candidates, load_external_predictions, read_candidates, train, write_candidates, Algorithm, CandidateList,
    RecommenderConfig,
};
use crate::seed::{keyed_seed, repetition_seed};
use crate::selector::{greedy_select, read_ranked_lists, write_ranked_lists, RankedList, SelectionProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub domain: Domain,
    /// Ratings (movie), listening triplets (song) or generic interactions CSV.
    pub interactions: PathBuf,
    /// Movie catalog (movie), genre annotations (song) or generic genres CSV.
    pub genres: PathBuf,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            domain: Domain::Generic,
            interactions: PathBuf::from("interactions.csv"),
            genres: PathBuf::from("genres.csv"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TradeOffConfig {
    /// Smoothing α used by the selection objective.
    pub smoothing: f64,
    pub log_base: f64,
    pub alpha_b: f64,
    pub sigma: f64,
}

impl Default for TradeOffConfig {
    fn default() -> Self {
        Self {
            smoothing: SmoothingParams::default().alpha,
            log_base: std::f64::consts::E,
            alpha_b: BiasParams::DEFAULT_ALPHA,
            sigma: BiasParams::DEFAULT_SIGMA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub preprocess: PreprocessConfig,
    pub recommenders: Vec<RecommenderConfig>,
    pub divergences: Vec<Divergence>,
    pub balances: Vec<Balance>,
    pub lambdas: Vec<LambdaPolicy>,
    pub repetitions: usize,
    /// Final list length.
    pub n: usize,
    /// Candidates handed from each recommender to post-processing.
    pub candidate_size: usize,
    pub eval: EvaluationConfig,
    pub tradeoff: TradeOffConfig,
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            preprocess: PreprocessConfig::default(),
            recommenders: [
                Algorithm::UserKnn,
                Algorithm::ItemKnn,
                Algorithm::SlopeOne,
                Algorithm::FunkSvd,
            ]
            .into_iter()
            .map(RecommenderConfig::new)
            .collect(),
            divergences: Divergence::ALL.to_vec(),
            balances: vec![Balance::Lin, Balance::Log],
            lambdas: LambdaPolicy::default_grid(),
            repetitions: 3,
            n: 10,
            candidate_size: 100,
            eval: EvaluationConfig::default(),
            tradeoff: TradeOffConfig::default(),
            seed: 42,
            jobs: 0,
        }
    }
}

impl ExperimentConfig {
    /// Parses a TOML file; relative dataset paths are resolved against its directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.dataset.interactions, &mut cfg.dataset.genres] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for r in &mut cfg.recommenders {
            if let Some(p) = r.predictions_path.as_mut().filter(|p| p.is_relative()) {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.recommenders.is_empty()
            || self.divergences.is_empty()
            || self.balances.is_empty()
            || self.lambdas.is_empty()
        {
            return Err(Error::Config("every grid axis needs at least one value".into()));
        }
        if self.repetitions < 1 || self.n < 1 || self.candidate_size < 1 {
            return Err(Error::Config(
                "repetitions, n and candidate_size must be at least 1".into(),
            ));
        }
        self.preprocess.validate()?;
        self.eval.validate()?;
        SmoothingParams::new(self.tradeoff.smoothing)?;
        if !(self.tradeoff.log_base > 0.0 && self.tradeoff.log_base != 1.0) {
            return Err(Error::Config(format!("invalid log base {}", self.tradeoff.log_base)));
        }
        let lambda_labels: HashSet<String> = self.lambdas.iter().map(LambdaPolicy::label).collect();
        if lambda_labels.len() != self.lambdas.len() {
            return Err(Error::Config("duplicate lambda policy".into()));
        }
        let mut labels = HashSet::new();
        for r in &self.recommenders {
            r.validate()?;
            if !labels.insert(dir_name(&r.label())) {
                return Err(Error::Config(format!("duplicate recommender label {}", r.label())));
            }
        }
        Ok(())
    }

    /// SHA-256 of the configuration, ignoring the thread count.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.jobs = 0;
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        format!("{:x}", Sha256::digest(json))
    }

    /// Every `(recommender, divergence, balance, λ)` in grid order.
    pub fn combinations(&self) -> Vec<Combination> {
        let mut out = Vec::new();
        for r in &self.recommenders {
            for &divergence in &self.divergences {
                for &balance in &self.balances {
                    for &lambda in &self.lambdas {
                        out.push(Combination {
                            recommender: r.label(),
                            divergence,
                            balance,
                            lambda,
                        });
                    }
                }
            }
        }
        out
    }

    fn spec(&self, c: &Combination) -> TradeOffSpec {
        let mut spec = TradeOffSpec::new(c.balance, c.divergence, c.lambda);
        spec.smoothing = SmoothingParams {
            alpha: self.tradeoff.smoothing,
        };
        spec.log_base = self.tradeoff.log_base;
        spec
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Combination {
    pub recommender: String,
    pub divergence: Divergence,
    pub balance: Balance,
    pub lambda: LambdaPolicy,
}

impl Combination {
    pub fn system(&self) -> SystemId {
        SystemId::new(
            &self.recommender,
            self.divergence,
            self.balance,
            Some(self.lambda.label()),
        )
    }

    fn file_name(&self) -> String {
        format!(
            "{}-{}-{}.csv",
            self.divergence.label(),
            self.balance.label(),
            self.lambda.label()
        )
    }
}

fn dir_name(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "+-_.".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// File locations inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn interactions(&self) -> PathBuf {
        self.root.join("data").join("interactions.csv")
    }

    pub fn genres(&self) -> PathBuf {
        self.root.join("data").join("genres.csv")
    }

    fn rep(&self, r: usize) -> PathBuf {
        self.root.join(format!("rep{r}"))
    }

    pub fn split(&self, r: usize) -> PathBuf {
        self.rep(r).join("split.csv")
    }

    pub fn candidates(&self, r: usize, recommender: &str) -> PathBuf {
        self.rep(r)
            .join("candidates")
            .join(format!("{}.csv", dir_name(recommender)))
    }

    pub fn lists(&self, r: usize, c: &Combination) -> PathBuf {
        self.rep(r)
            .join("lists")
            .join(dir_name(&c.recommender))
            .join(c.file_name())
    }

    pub fn user_evaluations(&self, r: usize, c: &Combination) -> PathBuf {
        self.rep(r)
            .join("users")
            .join(dir_name(&c.recommender))
            .join(c.file_name())
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn decision(&self) -> PathBuf {
        self.root.join("decision.csv")
    }

    pub fn decision_table(&self) -> PathBuf {
        self.root.join("decision.txt")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput(path.to_path_buf()))
    }
}

/// Runs `f` on a pool of `jobs` threads (0 = all cores).
pub fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// A combination that failed in some stage of some repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub repetition: usize,
    pub combination: Combination,
    pub error: String,
}

/// Outcome of a stage: what it wrote and which combinations failed.
#[derive(Debug, Default)]
pub struct StageReport {
    pub outputs: Vec<PathBuf>,
    pub failures: Vec<Failure>,
}

impl StageReport {
    fn fail_all(&mut self, cfg: &ExperimentConfig, r: usize, recommender: &str, e: &Error) {
        for c in cfg.combinations().into_iter().filter(|c| c.recommender == recommender) {
            self.failures.push(Failure {
                repetition: r,
                combination: c,
                error: e.to_string(),
            });
        }
    }
}

fn load_raw(cfg: &DatasetConfig) -> Result<(Vec<crate::ingest::RawInteraction>, Vec<crate::model::ItemGenres>)> {
    match cfg.domain {
        Domain::Movie => load_movielens(&cfg.interactions, &cfg.genres),
        Domain::Song => load_tasteprofile(&cfg.interactions, &cfg.genres),
        Domain::Generic => load_generic_csv(&cfg.interactions, &cfg.genres),
    }
}

fn split_config(cfg: &ExperimentConfig, r: usize) -> PreprocessConfig {
    PreprocessConfig {
        seed: repetition_seed(cfg.seed, r),
        ..cfg.preprocess.clone()
    }
}

/// Cleans the dataset and writes one split per repetition.
pub fn preprocess_stage(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageReport> {
    let table = preprocess(load_raw(&cfg.dataset)?, &cfg.preprocess, cfg.dataset.domain)?;
    let mut report = StageReport::default();
    let (interactions, genres) = (layout.interactions(), layout.genres());
    create_parent(&interactions)?;
    table.write_generic_csv(&interactions, &genres)?;
    report.outputs.extend([interactions, genres]);
    for r in 0..cfg.repetitions {
        let path = layout.split(r);
        create_parent(&path)?;
        split(&table, &split_config(cfg, r)).write_manifest(&path)?;
        report.outputs.push(path);
    }
    Ok(report)
}

pub fn load_table(layout: &Layout) -> Result<InteractionTable> {
    let (interactions, genres) = (layout.interactions(), layout.genres());
    require(&interactions)?;
    require(&genres)?;
    let (raw, items) = load_generic_csv(&interactions, &genres)?;
    InteractionTable::from_parts(raw, items)
}

/// Per-user inputs of post-processing and evaluation.
#[derive(Debug, Clone)]
pub struct UserProfile {
    pub p: Distribution,
    pub touched_genres: usize,
    pub test_items: HashSet<String>,
}

/// Everything derived from one repetition's split.
pub struct Repetition {
    pub index: usize,
    pub split: SplitDataset,
    pub genre_sets: HashMap<String, GenreSet>,
    pub users: BTreeMap<String, UserProfile>,
    pub bias: BiasParams,
}

impl Repetition {
    pub fn load(cfg: &ExperimentConfig, layout: &Layout, table: &InteractionTable, r: usize) -> Result<Self> {
        let path = layout.split(r);
        require(&path)?;
        let split = SplitDataset::read_manifest(table, &path, split_config(cfg, r).seed)?;
        Self::new(cfg, table, split, r)
    }

    pub fn new(cfg: &ExperimentConfig, table: &InteractionTable, split: SplitDataset, r: usize) -> Result<Self> {
        let genre_sets = table.genre_sets();
        let n_genres = table.genre_universe.len();
        let mut test_items: HashMap<&str, HashSet<String>> = HashMap::new();
        for t in &split.test.interactions {
            test_items.entry(&t.user_id).or_default().insert(t.item_id.clone());
        }
        let mut users = BTreeMap::new();
        for (user, rows) in split.train.by_user() {
            let prefs: Vec<(&GenreSet, f64)> = rows.iter().map(|r| (&genre_sets[&r.item_id], r.weight)).collect();
            let p = target_distribution(&prefs, n_genres)?;
            let touched: HashSet<usize> = prefs.iter().flat_map(|(g, _)| g.as_slice().iter().copied()).collect();
            users.insert(
                user.to_string(),
                UserProfile {
                    p,
                    touched_genres: touched.len(),
                    test_items: test_items.remove(user).unwrap_or_default(),
                },
            );
        }
        let bias = BiasParams::fit_with(
            split.train.interactions.iter().map(|r| (r.item_id.as_str(), r.weight)),
            cfg.tradeoff.alpha_b,
            cfg.tradeoff.sigma,
        );
        Ok(Self {
            index: r,
            split,
            genre_sets,
            users,
            bias,
        })
    }
}

fn recommender_candidates(
    cfg: &ExperimentConfig,
    rec: &RecommenderConfig,
    table: &InteractionTable,
    rep: &Repetition,
) -> Result<BTreeMap<String, CandidateList>> {
    if rec.algorithm == Algorithm::External {
        let path = rec.predictions_path.as_deref().expect("validated");
        require(path)?;
        return load_external_predictions(path, cfg.candidate_size, &rep.split.train);
    }
    let rec_cfg = RecommenderConfig {
        seed: keyed_seed(split_config(cfg, rep.index).seed, rec.label().as_bytes()),
        candidate_size: cfg.candidate_size,
        ..rec.clone()
    };
    let model = train(&rep.split.train, &rec_cfg)?;
    let by_user = rep.split.train.by_user();
    let lists: Vec<(String, CandidateList)> = by_user
        .par_iter()
        .map(|(user, rows)| {
            let seen: HashSet<&str> = rows.iter().map(|r| r.item_id.as_str()).collect();
            candidates(&model, user, table, &seen, cfg.candidate_size).map(|l| (user.to_string(), l))
        })
        .collect::<Result<_>>()?;
    Ok(lists.into_iter().collect())
}

/// Trains every recommender per repetition and writes its candidate lists.
pub fn recommend_stage(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageReport> {
    let table = load_table(layout)?;
    let mut report = StageReport::default();
    for r in 0..cfg.repetitions {
        let rep = Repetition::load(cfg, layout, &table, r)?;
        for rec in &cfg.recommenders {
            let path = layout.candidates(r, &rec.label());
            let written = recommender_candidates(cfg, rec, &table, &rep).and_then(|lists| {
                create_parent(&path)?;
                write_candidates(&path, &lists)
            });
            match written {
                Ok(()) => report.outputs.push(path),
                Err(e) => report.fail_all(cfg, r, &rec.label(), &e),
            }
        }
    }
    Ok(report)
}

/// Greedy lists of every user for one combination.
pub fn select_lists(
    cfg: &ExperimentConfig,
    rep: &Repetition,
    candidates: &BTreeMap<String, CandidateList>,
    c: &Combination,
) -> Result<BTreeMap<String, RankedList>> {
    let spec = cfg.spec(c);
    let lists: Vec<Option<RankedList>> = candidates
        .par_iter()
        .map(|(user, list)| {
            let Some(profile) = rep.users.get(user) else {
                return Err(Error::UnknownUser(user.clone()));
            };
            if list.is_empty() {
                return Ok(None);
            }
            let lambda = c.lambda.resolve(&profile.p, profile.touched_genres);
            let prob = SelectionProblem::new(list, &rep.genre_sets, profile.p.clone(), spec, &rep.bias, cfg.n, lambda)?;
            greedy_select(&prob).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(lists.into_iter().flatten().map(|l| (l.user_id.clone(), l)).collect())
}

fn for_each_recommender<F>(cfg: &ExperimentConfig, report: &mut StageReport, r: usize, mut f: F)
where
    F: FnMut(&RecommenderConfig, &mut StageReport) -> Result<()>,
{
    for rec in &cfg.recommenders {
        if let Err(e) = f(rec, report) {
            report.fail_all(cfg, r, &rec.label(), &e);
        }
    }
}

/// Post-processes every candidate file into calibrated lists, one file per combination.
pub fn postprocess_stage(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageReport> {
    let table = load_table(layout)?;
    let mut report = StageReport::default();
    let combos = cfg.combinations();
    for r in 0..cfg.repetitions {
        let rep = Repetition::load(cfg, layout, &table, r)?;
        for_each_recommender(cfg, &mut report, r, |rec, report| {
            let lists = if rec.algorithm == Algorithm::External {
                recommender_candidates(cfg, rec, &table, &rep)?
            } else {
                read_candidates(&layout.candidates(r, &rec.label()))?
            };
            let label = rec.label();
            let results: Vec<(Combination, Result<PathBuf>)> = combos
                .par_iter()
                .filter(|c| c.recommender == label)
                .map(|c| {
                    let path = layout.lists(r, c);
                    let res = select_lists(cfg, &rep, &lists, c).and_then(|ranked| {
                        create_parent(&path)?;
                        write_ranked_lists(&path, &ranked)
                    });
                    (c.clone(), res.map(|()| path))
                })
                .collect();
            collect_results(report, r, results);
            Ok(())
        });
    }
    Ok(report)
}

fn collect_results(report: &mut StageReport, r: usize, results: Vec<(Combination, Result<PathBuf>)>) {
    for (c, res) in results {
        match res {
            Ok(path) => report.outputs.push(path),
            Err(e) => report.failures.push(Failure {
                repetition: r,
                combination: c,
                error: e.to_string(),
            }),
        }
    }
}

/// Evaluates every list file and writes `metrics.csv`.
pub fn evaluate_stage(cfg: &ExperimentConfig, layout: &Layout) -> Result<StageReport> {
    let table = load_table(layout)?;
    let mut report = StageReport::default();
    let combos = cfg.combinations();
    let mut metrics: Vec<MetricsRow> = Vec::new();
    for r in 0..cfg.repetitions {
        let rep = Repetition::load(cfg, layout, &table, r)?;
        let results: Vec<(Combination, Result<(PathBuf, MetricsRow)>)> = combos
            .par_iter()
            .map(|c| (c.clone(), evaluate_combination(cfg, layout, &rep, c)))
            .collect();
        for (c, res) in results {
            match res {
                Ok((path, row)) => {
                    report.outputs.push(path);
                    metrics.push(row);
                }
                Err(e) => report.failures.push(Failure {
                    repetition: r,
                    combination: c,
                    error: e.to_string(),
                }),
            }
        }
    }
    if metrics.is_empty() {
        let reason = report.failures.first().map(|f| f.error.clone()).unwrap_or_default();
        return Err(Error::Config(format!("no combination could be evaluated: {reason}")));
    }
    let path = layout.metrics();
    create_parent(&path)?;
    write_metrics(&path, &metrics)?;
    report.outputs.push(path);
    Ok(report)
}

fn evaluate_combination(
    cfg: &ExperimentConfig,
    layout: &Layout,
    rep: &Repetition,
    c: &Combination,
) -> Result<(PathBuf, MetricsRow)> {
    let lists = read_ranked_lists(&layout.lists(rep.index, c))?;
    let evals = lists
        .par_iter()
        .map(|(user, ranked)| {
            let profile = rep.users.get(user).ok_or_else(|| Error::UnknownUser(user.clone()))?;
            let relevant: HashSet<&str> = profile.test_items.iter().map(String::as_str).collect();
            evaluate_user(ranked, &rep.genre_sets, &relevant, &profile.p, &cfg.eval)
        })
        .collect::<Result<Vec<_>>>()?;
    let eval = aggregate(std::slice::from_ref(&evals))?;
    let path = layout.user_evaluations(rep.index, c);
    create_parent(&path)?;
    write_user_evaluations(&path, &evals)?;
    Ok((
        path,
        MetricsRow {
            system: c.system(),
            repetition: rep.index,
            eval,
        },
    ))
}

/// Winner of a decision run and the systems that could not be scored.
#[derive(Debug)]
pub struct Decision {
    pub winner: SystemId,
    pub s: f64,
    pub table: String,
    pub undefined: Vec<(SystemId, Error)>,
}

/// Applies the protocol to a metrics or decision CSV and writes the decision files.
pub fn decide_stage(input: &Path, layout: &Layout) -> Result<Decision> {
    let decision_path = layout.decision();
    create_parent(&decision_path)?;
    let (winner, s, table, undefined) = match read_decision_input(input)? {
        DecisionInput::Computed(rows, undefined) => {
            let (winner, s) = decide_rows(&rows)?;
            write_decision(&decision_path, &rows, Some(&(winner.clone(), s)))?;
            let scores: Vec<(SystemId, f64)> = rows.iter().map(|r| (r.system.clone(), r.s)).collect();
            let table = render_table(&scores, Some(&winner));
            (winner, s, table, undefined)
        }
        DecisionInput::Scores(scores) => {
            let (winner, s) = decide(scores.iter().map(|(id, s)| (id, *s)))?;
            let table = render_table(&scores, Some(&winner));
            let mut text = String::from("recommender,divergence,balance,lambda,cce,cmc,s\n");
            for (id, v) in &scores {
                text.push_str(&format!(
                    "{},{},{},{},,,{v}\n",
                    id.recommender,
                    id.divergence.label(),
                    id.balance.label(),
                    id.lambda.clone().unwrap_or_default()
                ));
            }
            text.push_str(&format!("# winner,{winner},{s}\n"));
            fs::write(&decision_path, text).map_err(|e| Error::io(&decision_path, e))?;
            (winner, s, table, Vec::new())
        }
    };
    let table = format!("{table}\nwinner: {winner} (s = {s})\n");
    let table_path = layout.decision_table();
    fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    Ok(Decision {
        winner,
        s,
        table,
        undefined,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinationRecord {
    pub repetition: usize,
    pub recommender: String,
    pub divergence: String,
    pub balance: String,
    pub lambda: String,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WinnerRecord {
    pub system: String,
    pub s: f64,
}

/// Record of a full run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub jobs: usize,
    pub combinations: Vec<CombinationRecord>,
    pub outputs: Vec<PathBuf>,
    pub stage_seconds: BTreeMap<String, f64>,
    pub winner: Option<WinnerRecord>,
}

impl RunManifest {
    pub fn done(&self) -> usize {
        self.combinations.iter().filter(|c| c.status == "done").count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }
}

/// A resumable pipeline step.
pub type Stage = fn(&ExperimentConfig, &Layout) -> Result<StageReport>;

/// Runs every stage in order and records the outcome of every combination.
pub fn run_all(cfg: &ExperimentConfig, layout: &Layout) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(&layout.root).map_err(|e| Error::io(&layout.root, e))?;
    with_pool(cfg.jobs, || {
        let mut seconds = BTreeMap::new();
        let mut reports = Vec::new();
        let stages: [(&str, Stage); 4] = [
            ("preprocess", preprocess_stage),
            ("recommend", recommend_stage),
            ("postprocess", postprocess_stage),
            ("evaluate", evaluate_stage),
        ];
        for (name, stage) in stages {
            let start = Instant::now();
            reports.push(stage(cfg, layout)?);
            seconds.insert(name.to_string(), start.elapsed().as_secs_f64());
        }
        let start = Instant::now();
        let decision = decide_stage(&layout.metrics(), layout)?;
        seconds.insert("decide".to_string(), start.elapsed().as_secs_f64());

        let mut combinations = Vec::new();
        for r in 0..cfg.repetitions {
            for c in cfg.combinations() {
                let error = reports
                    .iter()
                    .flat_map(|rep| &rep.failures)
                    .find(|f| f.repetition == r && f.combination == c)
                    .map(|f| f.error.clone())
                    .or_else(|| {
                        decision
                            .undefined
                            .iter()
                            .find(|(id, _)| *id == c.system())
                            .map(|(_, e)| e.to_string())
                    });
                combinations.push(CombinationRecord {
                    repetition: r,
                    recommender: c.recommender.clone(),
                    divergence: c.divergence.label().into(),
                    balance: c.balance.label().into(),
                    lambda: c.lambda.label(),
                    status: if error.is_some() { "failed" } else { "done" }.into(),
                    error,
                });
            }
        }
        let mut outputs: Vec<PathBuf> = reports.into_iter().flat_map(|r| r.outputs).collect();
        outputs.extend([layout.decision(), layout.decision_table(), layout.manifest()]);
        let manifest = RunManifest {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            jobs: cfg.jobs,
            combinations,
            outputs,
            stage_seconds: seconds,
            winner: Some(WinnerRecord {
                system: decision.winner.label(),
                s: decision.s,
            }),
        };
        manifest.write(&layout.manifest())?;
        Ok(manifest)
    })?
}
