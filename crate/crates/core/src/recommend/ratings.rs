use std::collections::HashMap;

use crate::ingest::InteractionTable;

/// Index-based view of a training table shared by every built-in recommender.
#[derive(Debug, Clone)]
pub struct Ratings {
    pub(crate) users: Vec<String>,
    pub(crate) items: Vec<String>,
    pub(crate) user_index: HashMap<String, usize>,
    pub(crate) item_index: HashMap<String, usize>,
    /// Per user, `(item, weight)` sorted by item index.
    pub(crate) by_user: Vec<Vec<(usize, f64)>>,
    /// Per item, `(user, weight)` sorted by user index.
    pub(crate) by_item: Vec<Vec<(usize, f64)>>,
    pub(crate) global_mean: f64,
    pub(crate) user_mean: Vec<f64>,
    pub(crate) min_weight: f64,
    pub(crate) max_weight: f64,
}

impl Ratings {
    /// Indexes every catalog item, including items without training feedback.
    pub fn new(table: &InteractionTable) -> Self {
        let users: Vec<String> = table.users.iter().cloned().collect();
        let items: Vec<String> = table.items.keys().cloned().collect();
        let user_index: HashMap<String, usize> = users.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let item_index: HashMap<String, usize> = items.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
        let mut by_user = vec![Vec::new(); users.len()];
        let mut by_item = vec![Vec::new(); items.len()];
        let (mut total, mut min_weight, mut max_weight) = (0.0, f64::INFINITY, f64::NEG_INFINITY);
        for r in &table.interactions {
            let u = user_index[&r.user_id];
            let i = item_index[&r.item_id];
            by_user[u].push((i, r.weight));
            by_item[i].push((u, r.weight));
            total += r.weight;
            min_weight = min_weight.min(r.weight);
            max_weight = max_weight.max(r.weight);
        }
        for list in by_user.iter_mut().chain(by_item.iter_mut()) {
            list.sort_by_key(|(k, _)| *k);
        }
        let n = table.interactions.len().max(1) as f64;
        let global_mean = total / n;
        let user_mean = by_user
            .iter()
            .map(|rs| {
                if rs.is_empty() {
                    global_mean
                } else {
                    rs.iter().map(|(_, w)| w).sum::<f64>() / rs.len() as f64
                }
            })
            .collect();
        Self {
            users,
            items,
            user_index,
            item_index,
            by_user,
            by_item,
            global_mean,
            user_mean,
            min_weight,
            max_weight,
        }
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn len(&self) -> usize {
        self.by_user.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Default clamping range: `[min(1, lowest), highest]` of the observed weights.
    pub fn observed_bounds(&self) -> (f64, f64) {
        let lo = self.min_weight.min(1.0);
        let hi = if self.max_weight > lo {
            self.max_weight
        } else {
            lo + 1.0
        };
        (lo, hi)
    }
}

/// Co-rated pairs of two sorted `(key, weight)` lists.
pub(crate) fn co_rated(a: &[(usize, f64)], b: &[(usize, f64)]) -> Vec<(f64, f64)> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push((a[i].1, b[j].1));
                i += 1;
                j += 1;
            }
        }
    }
    out
}
