//! Dataset loading, cleaning/filtering and per-user train/test splitting.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GenreSet, GenreUniverse, ItemGenres};
use crate::seed::keyed_rng;

const NO_GENRES: &str = "(no genres listed)";

#[derive(Debug, Clone, PartialEq)]
pub struct RawInteraction {
    pub user_id: String,
    pub item_id: String,
    pub weight: f64,
}

impl RawInteraction {
    pub fn new(user_id: impl Into<String>, item_id: impl Into<String>, weight: f64) -> Self {
        Self {
            user_id: user_id.into(),
            item_id: item_id.into(),
            weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Movie,
    Song,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessConfig {
    pub rating_cut: f64,
    pub min_profile_size: usize,
    pub min_item_interactions: usize,
    pub min_play_count: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            rating_cut: 4.0,
            min_profile_size: 30,
            min_item_interactions: 3,
            min_play_count: 3.0,
            train_fraction: 0.7,
            seed: 42,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} outside (0, 1)",
                self.train_fraction
            )));
        }
        if self.rating_cut < 0.0 || self.min_play_count < 0.0 {
            return Err(Error::Config("thresholds must be non-negative".into()));
        }
        Ok(())
    }

    /// Number of training interactions for a profile of `n` items.
    pub fn train_size(&self, n: usize) -> usize {
        // The epsilon keeps exact products such as 0.7·30 from flooring to 20.
        ((self.train_fraction * n as f64) + 1e-9).floor() as usize
    }
}

/// Preprocessed dataset: users, genre-annotated items and their interactions.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionTable {
    pub users: BTreeSet<String>,
    pub items: BTreeMap<String, ItemGenres>,
    /// Sorted by `(user_id, item_id)`.
    pub interactions: Vec<RawInteraction>,
    pub genre_universe: GenreUniverse,
}

impl InteractionTable {
    /// Builds a table from already filtered parts, validating its invariants.
    pub fn from_parts(interactions: Vec<RawInteraction>, items: Vec<ItemGenres>) -> Result<Self> {
        let mut catalog = BTreeMap::new();
        for item in items {
            if item.genres.is_empty() {
                return Err(Error::Config(format!("item {} has no genres", item.item_id)));
            }
            catalog.entry(item.item_id.clone()).or_insert(item);
        }
        let universe = GenreUniverse::new(catalog.values().flat_map(|i| i.genres.iter().cloned()));
        let mut seen = HashSet::new();
        for r in &interactions {
            if !catalog.contains_key(&r.item_id) {
                return Err(Error::UnknownItem(r.item_id.clone()));
            }
            if !seen.insert((r.user_id.as_str(), r.item_id.as_str())) {
                return Err(Error::DuplicateInteraction {
                    user: r.user_id.clone(),
                    item: r.item_id.clone(),
                });
            }
        }
        let mut interactions = interactions;
        interactions.sort_by(|a, b| (&a.user_id, &a.item_id).cmp(&(&b.user_id, &b.item_id)));
        let users = interactions.iter().map(|r| r.user_id.clone()).collect();
        Ok(Self {
            users,
            items: catalog,
            interactions,
            genre_universe: universe,
        })
    }

    /// Same catalog and universe, different interactions.
    fn with_interactions(&self, mut interactions: Vec<RawInteraction>) -> Self {
        interactions.sort_by(|a, b| (&a.user_id, &a.item_id).cmp(&(&b.user_id, &b.item_id)));
        Self {
            users: interactions.iter().map(|r| r.user_id.clone()).collect(),
            items: self.items.clone(),
            interactions,
            genre_universe: self.genre_universe.clone(),
        }
    }

    /// Interactions grouped per user, in item order.
    pub fn by_user(&self) -> BTreeMap<&str, Vec<&RawInteraction>> {
        let mut out: BTreeMap<&str, Vec<&RawInteraction>> = BTreeMap::new();
        for r in &self.interactions {
            out.entry(r.user_id.as_str()).or_default().push(r);
        }
        out
    }

    /// Genre index sets of every catalog item.
    pub fn genre_sets(&self) -> HashMap<String, GenreSet> {
        self.items
            .iter()
            .map(|(id, item)| {
                let set = self
                    .genre_universe
                    .genre_set(&item.genres)
                    .expect("universe covers every catalog genre");
                (id.clone(), set)
            })
            .collect()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    /// Writes the canonical interchange CSV pair.
    pub fn write_generic_csv(&self, interactions_path: &Path, genres_path: &Path) -> Result<()> {
        let mut w = csv_writer(interactions_path)?;
        write_row(&mut w, interactions_path, ["user_id", "item_id", "weight"])?;
        for r in &self.interactions {
            let weight = r.weight.to_string();
            write_row(
                &mut w,
                interactions_path,
                [r.user_id.as_str(), r.item_id.as_str(), weight.as_str()],
            )?;
        }
        flush(w, interactions_path)?;

        let mut w = csv_writer(genres_path)?;
        write_row(&mut w, genres_path, ["item_id", "genres"])?;
        for (id, item) in &self.items {
            let genres = item.genres.iter().cloned().collect::<Vec<_>>().join("|");
            write_row(&mut w, genres_path, [id.as_str(), genres.as_str()])?;
        }
        flush(w, genres_path)
    }
}

/// Per-user random train/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: InteractionTable,
    pub test: InteractionTable,
    pub seed: u64,
}

impl SplitDataset {
    /// Writes `user_id,item_id,fold`, sorted by user then item.
    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        let mut rows: Vec<(&str, &str, &str)> = self
            .train
            .interactions
            .iter()
            .map(|r| (r.user_id.as_str(), r.item_id.as_str(), "train"))
            .chain(
                self.test
                    .interactions
                    .iter()
                    .map(|r| (r.user_id.as_str(), r.item_id.as_str(), "test")),
            )
            .collect();
        rows.sort();
        let mut w = csv_writer(path)?;
        write_row(&mut w, path, ["user_id", "item_id", "fold"])?;
        for (u, i, f) in rows {
            write_row(&mut w, path, [u, i, f])?;
        }
        flush(w, path)
    }

    /// Rebuilds a split of `table` from a manifest written by [`SplitDataset::write_manifest`].
    pub fn read_manifest(table: &InteractionTable, path: &Path, seed: u64) -> Result<Self> {
        let mut weights: HashMap<(&str, &str), f64> = HashMap::new();
        for r in &table.interactions {
            weights.insert((r.user_id.as_str(), r.item_id.as_str()), r.weight);
        }
        let mut rdr = open_csv(path, b',', true, None)?;
        expect_header(&mut rdr, path, &["user_id", "item_id", "fold"])?;
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = line_of(&rec);
            let (u, i) = (&rec[0], &rec[1]);
            let w = *weights
                .get(&(u, i))
                .ok_or_else(|| Error::malformed(path, line, format!("({u}, {i}) not in the interaction table")))?;
            let r = RawInteraction::new(u, i, w);
            match &rec[2] {
                "train" => train.push(r),
                "test" => test.push(r),
                other => return Err(Error::malformed(path, line, format!("unknown fold {other:?}"))),
            }
        }
        Ok(Self {
            train: table.with_interactions(train),
            test: table.with_interactions(test),
            seed,
        })
    }
}

pub(crate) fn open_csv(
    path: &Path,
    delimiter: u8,
    has_headers: bool,
    comment: Option<u8>,
) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(has_headers)
        .comment(comment)
        .flexible(comment.is_some())
        .from_reader(file))
}

pub(crate) fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::malformed(path, line, format!("{kind:?}")),
    }
}

pub(crate) fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map(|p| p.line()).unwrap_or(0)
}

pub(crate) fn expect_header(rdr: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?;
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(Error::malformed(
            path,
            1,
            format!("expected header {:?}, found {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub(crate) fn parse_weight(path: &Path, line: u64, field: &str) -> Result<f64> {
    let w: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::malformed(path, line, format!("unparseable weight {field:?}")))?;
    if !w.is_finite() || w < 0.0 {
        return Err(Error::malformed(
            path,
            line,
            format!("weight {w} must be finite and non-negative"),
        ));
    }
    Ok(w)
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

pub(crate) fn write_row<I, T>(w: &mut csv::Writer<File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| csv_err(path, e))
}

pub(crate) fn flush(w: csv::Writer<File>, path: &Path) -> Result<()> {
    let mut inner = w.into_inner().map_err(|e| Error::io(path, e.into_error()))?;
    inner.flush().map_err(|e| Error::io(path, e))
}

fn split_genres(field: &str, sep: char) -> BTreeSet<String> {
    field
        .split(sep)
        .map(str::trim)
        .filter(|g| !g.is_empty())
        .map(str::to_string)
        .collect()
}

/// MovieLens `ratings.csv` + `movies.csv`.
pub fn load_movielens(ratings_path: &Path, movies_path: &Path) -> Result<(Vec<RawInteraction>, Vec<ItemGenres>)> {
    let mut rdr = open_csv(ratings_path, b',', true, None)?;
    expect_header(&mut rdr, ratings_path, &["userId", "movieId", "rating", "timestamp"])?;
    let mut interactions = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(ratings_path, e))?;
        let line = line_of(&rec);
        let weight = parse_weight(ratings_path, line, &rec[2])?;
        interactions.push(RawInteraction::new(rec[0].trim(), rec[1].trim(), weight));
    }

    let mut rdr = open_csv(movies_path, b',', true, None)?;
    expect_header(&mut rdr, movies_path, &["movieId", "title", "genres"])?;
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(movies_path, e))?;
        let field = rec[2].trim();
        if field.is_empty() || field == NO_GENRES {
            continue;
        }
        items.push(ItemGenres {
            item_id: rec[0].trim().to_string(),
            genres: split_genres(field, '|'),
        });
    }
    Ok((interactions, items))
}

/// Taste Profile play-count triplets + tab-separated genre annotations.
pub fn load_tasteprofile(
    triplets_path: &Path,
    genre_annotations_path: &Path,
) -> Result<(Vec<RawInteraction>, Vec<ItemGenres>)> {
    let mut rdr = open_csv(triplets_path, b'\t', false, None)?;
    let mut interactions = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(triplets_path, e))?;
        let line = line_of(&rec);
        if rec.len() != 3 {
            return Err(Error::malformed(
                triplets_path,
                line,
                format!("expected 3 fields, found {}", rec.len()),
            ));
        }
        let weight = parse_weight(triplets_path, line, &rec[2])?;
        interactions.push(RawInteraction::new(rec[0].trim(), rec[1].trim(), weight));
    }

    let mut rdr = open_csv(genre_annotations_path, b'\t', false, Some(b'#'))?;
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(genre_annotations_path, e))?;
        let line = line_of(&rec);
        if !(2..=3).contains(&rec.len()) {
            return Err(Error::malformed(
                genre_annotations_path,
                line,
                format!("expected 2 or 3 fields, found {}", rec.len()),
            ));
        }
        let genres: BTreeSet<String> = rec
            .iter()
            .skip(1)
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .map(str::to_string)
            .collect();
        if genres.is_empty() {
            return Err(Error::malformed(
                genre_annotations_path,
                line,
                "annotation without a genre",
            ));
        }
        items.push(ItemGenres {
            item_id: rec[0].trim().to_string(),
            genres,
        });
    }
    Ok((interactions, items))
}

/// Canonical interchange format: `user_id,item_id,weight` + `item_id,genres`.
pub fn load_generic_csv(
    interactions_path: &Path,
    genres_path: &Path,
) -> Result<(Vec<RawInteraction>, Vec<ItemGenres>)> {
    let mut rdr = open_csv(interactions_path, b',', true, None)?;
    expect_header(&mut rdr, interactions_path, &["user_id", "item_id", "weight"])?;
    let mut interactions = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(interactions_path, e))?;
        let line = line_of(&rec);
        let weight = parse_weight(interactions_path, line, &rec[2])?;
        interactions.push(RawInteraction::new(rec[0].trim(), rec[1].trim(), weight));
    }

    let mut rdr = open_csv(genres_path, b',', true, None)?;
    expect_header(&mut rdr, genres_path, &["item_id", "genres"])?;
    let mut items = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(genres_path, e))?;
        let genres = split_genres(&rec[1], '|');
        if genres.is_empty() {
            return Err(Error::malformed(genres_path, line_of(&rec), "empty genres field"));
        }
        items.push(ItemGenres {
            item_id: rec[0].trim().to_string(),
            genres,
        });
    }
    Ok((interactions, items))
}

/// Cleans and filters raw data into an [`InteractionTable`].
///
/// Order: drop genre-less items, apply the domain's weight cut, then alternate the
/// item-popularity and profile-size filters until neither removes anything.
pub fn preprocess(
    raw: (Vec<RawInteraction>, Vec<ItemGenres>),
    cfg: &PreprocessConfig,
    domain: Domain,
) -> Result<InteractionTable> {
    cfg.validate()?;
    let (interactions, items) = raw;
    let mut catalog: BTreeMap<String, ItemGenres> = BTreeMap::new();
    for item in items.into_iter().filter(|i| !i.genres.is_empty()) {
        catalog.entry(item.item_id.clone()).or_insert(item);
    }

    let cut = match domain {
        Domain::Movie => Some(cfg.rating_cut),
        Domain::Song => Some(cfg.min_play_count),
        Domain::Generic => None,
    };
    let mut kept: Vec<RawInteraction> = interactions
        .into_iter()
        .filter(|r| catalog.contains_key(&r.item_id))
        .filter(|r| cut.is_none_or(|c| r.weight >= c))
        .collect();

    let mut seen = HashSet::new();
    for r in &kept {
        if !seen.insert((r.user_id.as_str(), r.item_id.as_str())) {
            return Err(Error::DuplicateInteraction {
                user: r.user_id.clone(),
                item: r.item_id.clone(),
            });
        }
    }

    loop {
        let before = kept.len();
        let mut item_counts: HashMap<&str, usize> = HashMap::new();
        for r in &kept {
            *item_counts.entry(r.item_id.as_str()).or_default() += 1;
        }
        let popular: HashSet<String> = item_counts
            .into_iter()
            .filter(|(_, c)| *c >= cfg.min_item_interactions)
            .map(|(i, _)| i.to_string())
            .collect();
        kept.retain(|r| popular.contains(&r.item_id));

        let mut user_counts: HashMap<&str, usize> = HashMap::new();
        for r in &kept {
            *user_counts.entry(r.user_id.as_str()).or_default() += 1;
        }
        let active: HashSet<String> = user_counts
            .into_iter()
            .filter(|(_, c)| *c >= cfg.min_profile_size)
            .map(|(u, _)| u.to_string())
            .collect();
        kept.retain(|r| active.contains(&r.user_id));

        if kept.len() == before {
            break;
        }
    }

    if kept.is_empty() {
        return Err(Error::DatasetExhausted);
    }
    let used: HashSet<&str> = kept.iter().map(|r| r.item_id.as_str()).collect();
    let surviving: Vec<ItemGenres> = catalog
        .into_values()
        .filter(|i| used.contains(i.item_id.as_str()))
        .collect();
    InteractionTable::from_parts(kept, surviving)
}

/// Splits every user's interactions with a generator keyed on `(cfg.seed, user_id)`.
pub fn split(table: &InteractionTable, cfg: &PreprocessConfig) -> SplitDataset {
    let by_user = table.by_user();
    let parts: Vec<(Vec<RawInteraction>, Vec<RawInteraction>)> = by_user
        .par_iter()
        .map(|(user, rows)| {
            // rows arrive sorted by item id, so the shuffle input is order-independent
            let mut rows: Vec<RawInteraction> = rows.iter().map(|r| (*r).clone()).collect();
            let mut rng = keyed_rng(cfg.seed, user.as_bytes());
            rows.shuffle(&mut rng);
            let n_train = cfg.train_size(rows.len());
            let test = rows.split_off(n_train);
            (rows, test)
        })
        .collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (tr, te) in parts {
        train.extend(tr);
        test.extend(te);
    }
    SplitDataset {
        train: table.with_interactions(train),
        test: table.with_interactions(test),
        seed: cfg.seed,
    }
}
