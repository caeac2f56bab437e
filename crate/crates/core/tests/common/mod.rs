//! Synthetic inputs shared by the integration suites.

#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal};

use calibrec::calib::{target_distribution, Distribution};
use calibrec::model::{CandidateItem, GenreSet};
use calibrec::recommend::CandidateList;

pub const GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// Writes MovieLens-format `ratings.csv` and `movies.csv` with genre-driven tastes.
///
/// Every user likes two or three genres and mostly rates movies from them, so profiles
/// have a skewed genre distribution and ratings above the cut concentrate on liked genres.
pub fn write_movielens(dir: &Path, n_users: usize, n_items: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let quality = Normal::new(0.0, 0.5).unwrap();
    let noise = Normal::new(0.0, 0.7).unwrap();

    let mut movies = String::from("movieId,title,genres\n");
    let mut item_genres: Vec<Vec<usize>> = Vec::with_capacity(n_items);
    let mut item_quality = Vec::with_capacity(n_items);
    let mut by_genre: Vec<Vec<usize>> = vec![Vec::new(); GENRES.len()];
    for i in 0..n_items {
        let k = rng.gen_range(1..=3);
        let mut gs: Vec<usize> = (0..GENRES.len())
            .collect::<Vec<_>>()
            .choose_multiple(&mut rng, k)
            .copied()
            .collect();
        gs.sort_unstable();
        for &g in &gs {
            by_genre[g].push(i);
        }
        let names: Vec<&str> = gs.iter().map(|&g| GENRES[g]).collect();
        writeln!(movies, "{},\"Movie {i}, part {}\",{}", i + 1, i % 3, names.join("|")).unwrap();
        item_genres.push(gs);
        item_quality.push(quality.sample(&mut rng));
    }

    let mut ratings = String::from("userId,movieId,rating,timestamp\n");
    for u in 0..n_users {
        let n_likes = rng.gen_range(2..=3);
        let likes: Vec<usize> = (0..GENRES.len())
            .collect::<Vec<_>>()
            .choose_multiple(&mut rng, n_likes)
            .copied()
            .collect();
        let size = rng.gen_range(45..=90).min(n_items);
        let mut seen = vec![false; n_items];
        let mut picked = Vec::with_capacity(size);
        while picked.len() < size {
            let i = if rng.gen_bool(0.7) {
                let g = likes[rng.gen_range(0..likes.len())];
                by_genre[g][rng.gen_range(0..by_genre[g].len())]
            } else {
                rng.gen_range(0..n_items)
            };
            if !seen[i] {
                seen[i] = true;
                picked.push(i);
            }
        }
        for i in picked {
            let liked = item_genres[i].iter().any(|g| likes.contains(g));
            let raw: f64 = 3.2 + if liked { 1.0 } else { -0.3 } + item_quality[i] + noise.sample(&mut rng);
            let rating = ((raw.clamp(0.5, 5.0)) * 2.0).round() / 2.0;
            writeln!(ratings, "{},{},{rating:.1},{}", u + 1, i + 1, 1_000_000 + u * 1000 + i).unwrap();
        }
    }

    let (r, m) = (dir.join("ratings.csv"), dir.join("movies.csv"));
    fs::write(&r, ratings).unwrap();
    fs::write(&m, movies).unwrap();
    (r, m)
}

/// Random probability vector of length `n` with some exact zeros.
pub fn random_distribution(rng: &mut impl Rng, n: usize, zero_prob: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n)
            .map(|_| {
                if rng.gen_bool(zero_prob) {
                    0.0
                } else {
                    rng.gen_range(0.0..1.0)
                }
            })
            .collect();
        let total: f64 = v.iter().sum();
        if total > 0.0 {
            return v.into_iter().map(|x| x / total).collect();
        }
    }
}

/// Random non-empty genre set over `n_genres` genres with at most `max_len` entries.
pub fn random_genre_set(rng: &mut impl Rng, n_genres: usize, max_len: usize) -> GenreSet {
    let k = rng.gen_range(1..=max_len.min(n_genres));
    let all: Vec<usize> = (0..n_genres).collect();
    GenreSet::new(all.choose_multiple(rng, k).copied().collect())
}

/// Inputs of one random selection problem: a candidate list, its genres and a target.
pub struct RandomInstance {
    pub list: CandidateList,
    pub genres: HashMap<String, GenreSet>,
    pub p: Distribution,
}

/// Candidates with weights in `[1, 5]` and a target drawn from a random preference profile.
pub fn random_instance(rng: &mut impl Rng, n_candidates: usize, n_genres: usize) -> RandomInstance {
    let mut genres = HashMap::new();
    let mut items = Vec::with_capacity(n_candidates);
    for i in 0..n_candidates {
        let id = format!("c{i:03}");
        genres.insert(id.clone(), random_genre_set(rng, n_genres, 3));
        items.push(CandidateItem::new(id, rng.gen_range(1.0..5.0)));
    }
    let list = CandidateList::from_scored("u", items, n_candidates).unwrap();
    let profile: Vec<(GenreSet, f64)> = (0..rng.gen_range(3..12))
        .map(|_| (random_genre_set(rng, n_genres, 3), rng.gen_range(1.0..5.0)))
        .collect();
    let pairs: Vec<(&GenreSet, f64)> = profile.iter().map(|(g, w)| (g, *w)).collect();
    let p = target_distribution(&pairs, n_genres).unwrap();
    RandomInstance { list, genres, p }
}
