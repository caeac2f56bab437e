//! Shared domain primitives: genre labels, per-item genre sets and scored candidates.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// Ordered list of every genre label known to a dataset.
///
/// Genres are addressed by their position in this list everywhere else in the crate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreUniverse {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl GenreUniverse {
    /// Builds a universe from arbitrary labels; duplicates collapse and order is lexicographic.
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let sorted: BTreeSet<String> = labels.into_iter().map(Into::into).collect();
        let labels: Vec<String> = sorted.into_iter().collect();
        let index = labels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
        Self { labels, index }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    /// Maps labels to a [`GenreSet`], returning the first label that is not in the universe.
    pub fn genre_set<'a, I>(&self, labels: I) -> Result<GenreSet, &'a str>
    where
        I: IntoIterator<Item = &'a String>,
    {
        let mut idx = Vec::new();
        for l in labels {
            idx.push(self.index_of(l).ok_or(l.as_str())?);
        }
        Ok(GenreSet::new(idx))
    }
}

/// Sorted, duplicate-free genre indices of a single item.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct GenreSet(Vec<usize>);

impl GenreSet {
    pub fn new(mut genres: Vec<usize>) -> Self {
        genres.sort_unstable();
        genres.dedup();
        Self(genres)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, genre: usize) -> bool {
        self.0.binary_search(&genre).is_ok()
    }
}

/// An item and its genre labels as read from a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemGenres {
    pub item_id: String,
    pub genres: BTreeSet<String>,
}

impl ItemGenres {
    pub fn new<I, S>(item_id: impl Into<String>, genres: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            item_id: item_id.into(),
            genres: genres.into_iter().map(Into::into).collect(),
        }
    }
}

/// One candidate item with the recommender's predicted weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateItem {
    pub item_id: String,
    pub predicted_weight: f64,
}

impl CandidateItem {
    pub fn new(item_id: impl Into<String>, predicted_weight: f64) -> Self {
        Self {
            item_id: item_id.into(),
            predicted_weight,
        }
    }

    /// Ordering used for candidate lists: descending weight, then ascending item id.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .predicted_weight
            .total_cmp(&self.predicted_weight)
            .then_with(|| self.item_id.cmp(&other.item_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn universe_is_sorted_and_deduplicated() {
        let u = GenreUniverse::new(["Rock", "Pop", "Rock", "Blues"]);
        assert_eq!(u.labels(), &["Blues", "Pop", "Rock"]);
        assert_eq!(u.index_of("Pop"), Some(1));
        assert_eq!(u.index_of("Samba"), None);
    }

    #[test]
    fn genre_set_reports_unknown_label() {
        let u = GenreUniverse::new(["Pop"]);
        let labels = vec!["Pop".to_string(), "Jazz".to_string()];
        assert_eq!(u.genre_set(&labels), Err("Jazz"));
    }

    #[test]
    fn candidate_order_breaks_ties_by_id() {
        let mut v = [
            CandidateItem::new("b", 3.0),
            CandidateItem::new("a", 3.0),
            CandidateItem::new("c", 4.0),
        ];
        v.sort_by(CandidateItem::rank_cmp);
        let ids: Vec<_> = v.iter().map(|c| c.item_id.as_str()).collect();
        assert_eq!(ids, ["c", "a", "b"]);
    }
}
