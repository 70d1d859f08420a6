//! Exact brute-force Euclidean nearest-neighbor search over the rows of a
//! matrix. Ties in distance are broken by row index so results are
//! deterministic.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn dist(&self) -> f64 {
        self.dist_sq.sqrt()
    }
}

fn cmp_neighbor(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.dist_sq
        .total_cmp(&b.dist_sq)
        .then(a.index.cmp(&b.index))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BruteForceIndex {
    points: Array2<f64>,
}

impl BruteForceIndex {
    pub fn new(points: Array2<f64>) -> Self {
        Self { points }
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    fn all_distances(&self, query: &[f64]) -> Vec<Neighbor> {
        debug_assert_eq!(query.len(), self.dim());
        self.points
            .outer_iter()
            .enumerate()
            .map(|(index, row)| Neighbor {
                index,
                dist_sq: dist_sq(row, query),
            })
            .collect()
    }

    /// The `k` nearest rows to `query`, sorted by (distance, index).
    pub fn k_nearest(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let k = k.min(self.len());
        if k == 0 {
            return Vec::new();
        }
        let mut all = self.all_distances(query);
        if k < all.len() {
            all.select_nth_unstable_by(k - 1, cmp_neighbor);
            all.truncate(k);
        }
        all.sort_unstable_by(cmp_neighbor);
        all
    }

    /// Every row sorted by distance to `query`.
    pub fn sorted_all(&self, query: &[f64]) -> Vec<Neighbor> {
        let mut all = self.all_distances(query);
        all.sort_unstable_by(cmp_neighbor);
        all
    }

    /// Distance from `query` to its `k`-th nearest row (1-based).
    pub fn kth_distance(&self, query: &[f64], k: usize) -> f64 {
        assert!(k >= 1 && k <= self.len(), "k out of range");
        let mut all = self.all_distances(query);
        let (_, kth, _) = all.select_nth_unstable_by(k - 1, cmp_neighbor);
        kth.dist()
    }
}

pub fn dist_sq(row: ArrayView1<'_, f64>, query: &[f64]) -> f64 {
    row.iter()
        .zip(query)
        .map(|(a, b)| {
            let d = a - b;
            d * d
        })
        .sum()
}
