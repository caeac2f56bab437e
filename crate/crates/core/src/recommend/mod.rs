//! Candidate generation: predicted weights for every unknown item of a user.
//!
//! Built-in recommenders are trained on the training split; anything else enters through
//! an external predictions CSV.

mod funk_svd;
mod knn;
mod ratings;
mod slope_one;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use funk_svd::{FunkSvdModel, SvdParams};
pub use knn::{KnnModel, Similarity};
pub use ratings::Ratings;
pub use slope_one::SlopeOneModel;

use crate::error::{Error, Result};
use crate::ingest::{csv_err, csv_writer, expect_header, flush, line_of, open_csv, write_row, InteractionTable};
use crate::model::CandidateItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    UserKnn,
    ItemKnn,
    SlopeOne,
    FunkSvd,
    External,
}

impl Algorithm {
    pub fn default_label(self) -> &'static str {
        match self {
            Algorithm::UserKnn => "User-KNN",
            Algorithm::ItemKnn => "Item-KNN",
            Algorithm::SlopeOne => "Slope-One",
            Algorithm::FunkSvd => "SVD",
            Algorithm::External => "External",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.default_label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommenderConfig {
    pub algorithm: Algorithm,
    /// Name used in reports; defaults to the algorithm's label.
    pub label: Option<String>,
    pub k_neighbors: usize,
    /// Defaults to MSD for user KNN and Pearson for item KNN.
    pub similarity: Option<Similarity>,
    pub factors: usize,
    pub epochs: usize,
    pub learn_rate: f64,
    pub reg: f64,
    /// Clamping range for predictions; derived from the training weights when absent.
    pub rating_bounds: Option<(f64, f64)>,
    pub candidate_size: usize,
    pub predictions_path: Option<PathBuf>,
    pub seed: u64,
}

impl Default for RecommenderConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::UserKnn,
            label: None,
            k_neighbors: 30,
            similarity: None,
            factors: 50,
            epochs: 50,
            learn_rate: 0.005,
            reg: 0.01,
            rating_bounds: None,
            candidate_size: 100,
            predictions_path: None,
            seed: 0,
        }
    }
}

impl RecommenderConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            ..Default::default()
        }
    }

    pub fn label(&self) -> String {
        self.label
            .clone()
            .unwrap_or_else(|| self.algorithm.default_label().to_string())
    }

    pub fn similarity(&self) -> Similarity {
        self.similarity.unwrap_or(match self.algorithm {
            Algorithm::ItemKnn => Similarity::Pearson,
            _ => Similarity::Msd,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_neighbors < 1 {
            return Err(Error::Config("k_neighbors must be at least 1".into()));
        }
        if self.candidate_size < 1 {
            return Err(Error::Config("candidate_size must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.rating_bounds {
            if lo >= hi {
                return Err(Error::Config(format!("rating bounds ({lo}, {hi}) are empty")));
            }
        }
        if self.algorithm == Algorithm::External && self.predictions_path.is_none() {
            return Err(Error::Config("external recommender needs predictions_path".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Estimator {
    Knn(KnnModel),
    SlopeOne(SlopeOneModel),
    FunkSvd(FunkSvdModel),
}

/// A trained recommender able to score any `(user, item)` of its training universe.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    ratings: Ratings,
    estimator: Estimator,
    bounds: (f64, f64),
}

pub fn train(train_table: &InteractionTable, cfg: &RecommenderConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if train_table.is_empty() {
        return Err(Error::Config("cannot train on an empty table".into()));
    }
    let ratings = Ratings::new(train_table);
    let estimator = match cfg.algorithm {
        Algorithm::UserKnn => Estimator::Knn(KnnModel::fit(&ratings, true, cfg.k_neighbors, cfg.similarity())),
        Algorithm::ItemKnn => Estimator::Knn(KnnModel::fit(&ratings, false, cfg.k_neighbors, cfg.similarity())),
        Algorithm::SlopeOne => Estimator::SlopeOne(SlopeOneModel::fit(&ratings)),
        Algorithm::FunkSvd => Estimator::FunkSvd(FunkSvdModel::fit(
            &ratings,
            &SvdParams {
                factors: cfg.factors,
                epochs: cfg.epochs,
                learn_rate: cfg.learn_rate,
                reg: cfg.reg,
                seed: cfg.seed,
            },
        )),
        Algorithm::External => return Err(Error::ExternalNotTrainable),
    };
    let bounds = cfg.rating_bounds.unwrap_or_else(|| ratings.observed_bounds());
    Ok(TrainedModel {
        ratings,
        estimator,
        bounds,
    })
}

impl TrainedModel {
    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    pub fn ratings(&self) -> &Ratings {
        &self.ratings
    }

    /// Training MAE per epoch, for factor models.
    pub fn epoch_mae(&self) -> Option<&[f64]> {
        match &self.estimator {
            Estimator::FunkSvd(m) => Some(&m.epoch_mae),
            _ => None,
        }
    }

    /// Clamped prediction with cold fallbacks.
    ///
    /// Items without any training feedback fall back to the user's mean; a model that
    /// cannot form an estimate otherwise (no usable neighbors) falls back to the global mean.
    pub fn predict(&self, user_id: &str, item_id: &str) -> Result<f64> {
        let u = *self
            .ratings
            .user_index
            .get(user_id)
            .ok_or_else(|| Error::UnknownUser(user_id.to_string()))?;
        let i = *self
            .ratings
            .item_index
            .get(item_id)
            .ok_or_else(|| Error::UnknownItem(item_id.to_string()))?;
        Ok(self.predict_index(u, i))
    }

    fn predict_index(&self, u: usize, i: usize) -> f64 {
        let est = if self.ratings.by_item[i].is_empty() {
            Some(self.ratings.user_mean[u])
        } else {
            match &self.estimator {
                Estimator::Knn(m) => m.estimate(&self.ratings, u, i),
                Estimator::SlopeOne(m) => m.estimate(&self.ratings, u, i).or(Some(self.ratings.user_mean[u])),
                Estimator::FunkSvd(m) => m.estimate(&self.ratings, u, i),
            }
        };
        let raw = est.filter(|v| v.is_finite()).unwrap_or(self.ratings.global_mean);
        raw.clamp(self.bounds.0, self.bounds.1)
    }
}

/// A user's scored candidates, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateList {
    pub user_id: String,
    pub items: Vec<CandidateItem>,
}

impl CandidateList {
    /// Orders by `(−weight, item_id)` and keeps the first `n`.
    pub fn from_scored(user_id: impl Into<String>, mut items: Vec<CandidateItem>, n: usize) -> Result<Self> {
        let user_id = user_id.into();
        items.sort_by(CandidateItem::rank_cmp);
        for pair in items.windows(2) {
            if pair[0].item_id == pair[1].item_id {
                return Err(Error::DuplicateInteraction {
                    user: user_id,
                    item: pair[0].item_id.clone(),
                });
            }
        }
        if items.iter().any(|c| !c.predicted_weight.is_finite()) {
            return Err(Error::Config(format!("non-finite predicted weight for user {user_id}")));
        }
        items.truncate(n);
        Ok(Self { user_id, items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Scores every catalog item outside the user's training set and keeps the top `n`.
pub fn candidates(
    model: &TrainedModel,
    user_id: &str,
    catalog: &InteractionTable,
    train_items_of_user: &HashSet<&str>,
    n: usize,
) -> Result<CandidateList> {
    let mut scored = Vec::new();
    for item_id in catalog.items.keys() {
        if train_items_of_user.contains(item_id.as_str()) {
            continue;
        }
        scored.push(CandidateItem::new(item_id.clone(), model.predict(user_id, item_id)?));
    }
    CandidateList::from_scored(user_id, scored, n)
}

/// Reads `user_id,item_id,predicted_weight` and keeps each user's top `candidate_size` rows.
///
/// Rows for the user's own training items are skipped; items outside the catalog are errors.
pub fn load_external_predictions(
    path: &Path,
    candidate_size: usize,
    train: &InteractionTable,
) -> Result<BTreeMap<String, CandidateList>> {
    let mut train_items: HashMap<&str, HashSet<&str>> = HashMap::new();
    for r in &train.interactions {
        train_items.entry(&r.user_id).or_default().insert(&r.item_id);
    }
    let mut rdr = open_csv(path, b',', true, None)?;
    expect_header(&mut rdr, path, &["user_id", "item_id", "predicted_weight"])?;
    let mut per_user: BTreeMap<String, Vec<CandidateItem>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let (user, item) = (rec[0].trim(), rec[1].trim());
        let w: f64 = rec[2]
            .trim()
            .parse()
            .map_err(|_| Error::malformed(path, line, format!("unparseable weight {:?}", &rec[2])))?;
        if !w.is_finite() {
            return Err(Error::malformed(path, line, "non-finite predicted weight"));
        }
        if !train.items.contains_key(item) {
            return Err(Error::malformed(
                path,
                line,
                format!("item {item} is not in the genre catalog"),
            ));
        }
        if !seen.insert((user.to_string(), item.to_string())) {
            return Err(Error::malformed(
                path,
                line,
                format!("duplicate prediction for ({user}, {item})"),
            ));
        }
        if train_items.get(user).is_some_and(|s| s.contains(item)) {
            continue;
        }
        per_user
            .entry(user.to_string())
            .or_default()
            .push(CandidateItem::new(item, w));
    }
    per_user
        .into_iter()
        .map(|(u, items)| CandidateList::from_scored(u.clone(), items, candidate_size).map(|l| (u, l)))
        .collect()
}

/// Writes `user_id,item_id,predicted_weight,rank` for every list, users in order.
pub fn write_candidates(path: &Path, lists: &BTreeMap<String, CandidateList>) -> Result<()> {
    let mut w = csv_writer(path)?;
    write_row(&mut w, path, ["user_id", "item_id", "predicted_weight", "rank"])?;
    for list in lists.values() {
        for (rank, c) in list.items.iter().enumerate() {
            write_row(
                &mut w,
                path,
                [
                    list.user_id.clone(),
                    c.item_id.clone(),
                    c.predicted_weight.to_string(),
                    (rank + 1).to_string(),
                ],
            )?;
        }
    }
    flush(w, path)
}

pub fn read_candidates(path: &Path) -> Result<BTreeMap<String, CandidateList>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut rdr = open_csv(path, b',', true, None)?;
    expect_header(&mut rdr, path, &["user_id", "item_id", "predicted_weight", "rank"])?;
    let mut per_user: BTreeMap<String, Vec<CandidateItem>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = line_of(&rec);
        let w: f64 = rec[2]
            .parse()
            .map_err(|_| Error::malformed(path, line, "unparseable predicted_weight"))?;
        per_user
            .entry(rec[0].to_string())
            .or_default()
            .push(CandidateItem::new(&rec[1], w));
    }
    per_user
        .into_iter()
        .map(|(u, items)| {
            let n = items.len();
            CandidateList::from_scored(u.clone(), items, n).map(|l| (u, l))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::RawInteraction;
    use crate::model::ItemGenres;
    use std::fs;
    use tempfile::TempDir;

    fn table(rows: &[(&str, &str, f64)], items: &[&str]) -> InteractionTable {
        InteractionTable::from_parts(
            rows.iter().map(|(u, i, w)| RawInteraction::new(*u, *i, *w)).collect(),
            items.iter().map(|i| ItemGenres::new(*i, ["G"])).collect(),
        )
        .unwrap()
    }

    fn bounded(algorithm: Algorithm) -> RecommenderConfig {
        RecommenderConfig {
            rating_bounds: Some((1.0, 5.0)),
            ..RecommenderConfig::new(algorithm)
        }
    }

    #[test]
    fn slope_one_hand_example() {
        let t = table(&[("u1", "A", 1.0), ("u1", "B", 1.5), ("u2", "A", 2.0)], &["A", "B"]);
        let m = train(&t, &bounded(Algorithm::SlopeOne)).unwrap();
        assert_close!(m.predict("u2", "B").unwrap(), 2.5, 1e-12);
    }

    #[test]
    fn predictions_are_clamped() {
        let t = table(
            &[("u1", "A", 5.0), ("u1", "B", 1.0), ("u2", "A", 1.0), ("u2", "C", 5.0)],
            &["A", "B", "C"],
        );
        for alg in [
            Algorithm::UserKnn,
            Algorithm::ItemKnn,
            Algorithm::SlopeOne,
            Algorithm::FunkSvd,
        ] {
            let m = train(&t, &bounded(alg)).unwrap();
            for u in ["u1", "u2"] {
                for i in ["A", "B", "C"] {
                    let p = m.predict(u, i).unwrap();
                    assert!((1.0..=5.0).contains(&p), "{alg:?} {u} {i} {p}");
                }
            }
        }
        // slope one extrapolates to 1 + (1 − 5) = −3 for (u2, B) before clamping
        let m = train(&t, &bounded(Algorithm::SlopeOne)).unwrap();
        assert_eq!(m.predict("u2", "B").unwrap(), 1.0);
    }

    #[test]
    fn knn_without_neighbors_uses_global_mean() {
        // u3 shares no items with anyone, so no user has positive similarity with u3
        let t = table(
            &[("u1", "A", 4.0), ("u1", "B", 5.0), ("u2", "A", 4.0), ("u3", "C", 3.0)],
            &["A", "B", "C"],
        );
        let m = train(&t, &bounded(Algorithm::UserKnn)).unwrap();
        let global = (4.0 + 5.0 + 4.0 + 3.0) / 4.0;
        assert_eq!(m.predict("u3", "B").unwrap(), global);
    }

    #[test]
    fn knn_k1_duplicate_profile_reproduces_neighbor() {
        // u2 duplicates u1 exactly on u1's items and also rated X; u3 is further away
        let t = table(
            &[
                ("u1", "A", 4.0),
                ("u1", "B", 2.0),
                ("u2", "A", 4.0),
                ("u2", "B", 2.0),
                ("u2", "X", 3.5),
                ("u3", "A", 1.0),
                ("u3", "B", 5.0),
                ("u3", "X", 1.0),
            ],
            &["A", "B", "X"],
        );
        let cfg = RecommenderConfig {
            k_neighbors: 1,
            ..bounded(Algorithm::UserKnn)
        };
        let m = train(&t, &cfg).unwrap();
        assert_eq!(m.predict("u1", "X").unwrap(), 3.5);
    }

    #[test]
    fn unknown_user_and_external_training_fail() {
        let t = table(&[("u1", "A", 4.0)], &["A"]);
        let m = train(&t, &bounded(Algorithm::UserKnn)).unwrap();
        assert!(matches!(m.predict("nobody", "A"), Err(Error::UnknownUser(_))));
        let cfg = RecommenderConfig {
            predictions_path: Some("p.csv".into()),
            ..RecommenderConfig::new(Algorithm::External)
        };
        assert!(matches!(train(&t, &cfg), Err(Error::ExternalNotTrainable)));
    }

    #[test]
    fn funk_svd_is_deterministic_per_seed() {
        let rows: Vec<(String, String, f64)> = (0..20)
            .flat_map(|u| (0..10).map(move |i| (format!("u{u}"), format!("i{i}"), 1.0 + ((u * 7 + i * 3) % 5) as f64)))
            .collect();
        let refs: Vec<(&str, &str, f64)> = rows.iter().map(|(u, i, w)| (u.as_str(), i.as_str(), *w)).collect();
        let items: Vec<String> = (0..10).map(|i| format!("i{i}")).collect();
        let item_refs: Vec<&str> = items.iter().map(String::as_str).collect();
        let t = table(&refs, &item_refs);
        let cfg = RecommenderConfig {
            factors: 5,
            epochs: 10,
            ..bounded(Algorithm::FunkSvd)
        };
        let a = train(&t, &cfg).unwrap();
        let b = train(&t, &cfg).unwrap();
        assert_eq!(a.predict("u3", "i4").unwrap(), b.predict("u3", "i4").unwrap());
        let mae = a.epoch_mae().unwrap();
        assert_eq!(mae.len(), 10);
        assert!(mae[9] <= mae[0]);
    }

    #[test]
    fn candidate_generation_excludes_train_and_truncates() {
        let t = table(
            &[("u1", "A", 4.0), ("u2", "A", 4.0), ("u2", "B", 5.0), ("u2", "C", 3.0)],
            &["A", "B", "C", "D"],
        );
        let m = train(&t, &bounded(Algorithm::ItemKnn)).unwrap();
        let train_u1: HashSet<&str> = ["A"].into_iter().collect();
        let list = candidates(&m, "u1", &t, &train_u1, 100).unwrap();
        assert_eq!(list.len(), 3);
        assert!(list.items.iter().all(|c| c.item_id != "A"));
        let short = candidates(&m, "u1", &t, &train_u1, 2).unwrap();
        assert_eq!(short.items[..], list.items[..2]);
    }

    #[test]
    fn from_scored_breaks_ties_by_item_id() {
        let l = CandidateList::from_scored(
            "u",
            vec![CandidateItem::new("z", 3.0), CandidateItem::new("a", 3.0)],
            10,
        )
        .unwrap();
        assert_eq!(l.items[0].item_id, "a");
    }

    #[test]
    fn external_predictions() {
        let dir = TempDir::new().unwrap();
        let items: Vec<String> = (0..250).map(|i| format!("i{i:03}")).collect();
        let item_refs: Vec<&str> = items.iter().map(String::as_str).collect();
        let t = table(&[("u1", "i000", 4.0)], &item_refs);
        let mut body = String::from("user_id,item_id,predicted_weight\n");
        for (k, i) in items.iter().enumerate() {
            body.push_str(&format!("u1,{i},{}\n", 1.0 + k as f64 / 100.0));
        }
        let p = dir.path().join("pred.csv");
        fs::write(&p, &body).unwrap();
        let lists = load_external_predictions(&p, 100, &t).unwrap();
        assert_eq!(lists["u1"].len(), 100);
        assert_eq!(lists["u1"].items[0].item_id, "i249");

        let bad = dir.path().join("bad.csv");
        fs::write(&bad, "user_id,item_id,predicted_weight\nu1,nope,3\n").unwrap();
        assert!(matches!(
            load_external_predictions(&bad, 100, &t),
            Err(Error::Malformed { line: 2, .. })
        ));

        fs::write(&bad, "user_id,item_id,predicted_weight\nu1,i001,3\nu1,i001,4\n").unwrap();
        assert!(matches!(
            load_external_predictions(&bad, 100, &t),
            Err(Error::Malformed { line: 3, .. })
        ));

        fs::write(&bad, "user_id,item_id,predicted_weight\nu1,i001\n").unwrap();
        assert!(matches!(
            load_external_predictions(&bad, 100, &t),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn candidates_csv_round_trip() {
        let dir = TempDir::new().unwrap();
        let mut lists = BTreeMap::new();
        lists.insert(
            "u1".to_string(),
            CandidateList::from_scored(
                "u1",
                vec![CandidateItem::new("a", 4.25), CandidateItem::new("b", 1.0 / 3.0)],
                5,
            )
            .unwrap(),
        );
        let p = dir.path().join("c.csv");
        write_candidates(&p, &lists).unwrap();
        assert_eq!(read_candidates(&p).unwrap(), lists);
        assert!(matches!(
            read_candidates(&dir.path().join("none.csv")),
            Err(Error::MissingInput(_))
        ));
    }
}
