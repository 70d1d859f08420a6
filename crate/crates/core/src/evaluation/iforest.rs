//! Isolation forest anomaly score (random axis-aligned splits on subsamples,
//! score `2^(-E[h(x)] / c(psi))`, larger = more anomalous).

use crate::error::{LocusError, Result};
use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Average unsuccessful-search path length in a binary search tree of `n`
/// nodes.
pub fn c_factor(n: usize) -> f64 {
    match n {
        0 | 1 => 0.0,
        2 => 1.0,
        _ => {
            let m = (n - 1) as f64;
            2.0 * (m.ln() + EULER_GAMMA) - 2.0 * m / n as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsolationForestSpec {
    pub n_trees: usize,
    pub subsample: usize,
}

impl Default for IsolationForestSpec {
    fn default() -> Self {
        Self { n_trees: 100, subsample: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationForest {
    trees: Vec<Tree>,
    psi: usize,
}

impl IsolationForest {
    pub fn fit(x: ArrayView2<'_, f64>, spec: &IsolationForestSpec, seed: u64) -> Result<Self> {
        let n = x.nrows();
        if n == 0 {
            return Err(LocusError::EmptySplit("isolation forest training".into()));
        }
        if spec.n_trees == 0 || spec.subsample == 0 {
            return Err(LocusError::invalid("isolation forest needs n_trees >= 1 and subsample >= 1"));
        }
        let psi = spec.subsample.min(n);
        let max_depth = (psi as f64).log2().ceil().max(0.0) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trees = (0..spec.n_trees)
            .map(|_| {
                let rows = sample(&mut rng, n, psi).into_vec();
                let mut nodes = Vec::new();
                grow(x, rows, 0, max_depth, &mut rng, &mut nodes);
                Tree { nodes }
            })
            .collect();
        Ok(Self { trees, psi })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn score(&self, x: &[f64]) -> f64 {
        let mean_path = self.trees.iter().map(|t| path_length(t, x)).sum::<f64>() / self.trees.len() as f64;
        let c = c_factor(self.psi);
        if c == 0.0 {
            return 0.5;
        }
        2f64.powf(-mean_path / c)
    }
}

fn grow(
    x: ArrayView2<'_, f64>,
    rows: Vec<usize>,
    depth: usize,
    max_depth: usize,
    rng: &mut ChaCha8Rng,
    nodes: &mut Vec<Node>,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf { size: rows.len() });
    if depth >= max_depth || rows.len() <= 1 {
        return id;
    }
    let splittable: Vec<(usize, f64, f64)> = (0..x.ncols())
        .filter_map(|j| {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(x[[r, j]]), hi.max(x[[r, j]]))
            });
            (hi > lo).then_some((j, lo, hi))
        })
        .collect();
    if splittable.is_empty() {
        return id;
    }
    let (feature, lo, hi) = splittable[rng.random_range(0..splittable.len())];
    let value = rng.random_range(lo..hi);
    let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| x[[i, feature]] < value);
    let left = grow(x, l, depth + 1, max_depth, rng, nodes);
    let right = grow(x, r, depth + 1, max_depth, rng, nodes);
    nodes[id] = Node::Split { feature, value, left, right };
    id
}

fn path_length(tree: &Tree, x: &[f64]) -> f64 {
    let mut id = 0;
    let mut depth = 0.0;
    loop {
        match &tree.nodes[id] {
            Node::Leaf { size } => return depth + c_factor(*size),
            Node::Split { feature, value, left, right } => {
                id = if x[*feature] < *value { *left } else { *right };
                depth += 1.0;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    fn cloud(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, 2), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn c_factor_values() {
        assert_eq!(c_factor(1), 0.0);
        assert_eq!(c_factor(2), 1.0);
        // 2 (ln 255 + gamma) - 2 * 255/256
        assert!((c_factor(256) - 10.244_770_920_119_917).abs() < 1e-12);
    }

    #[test]
    fn outlier_scores_higher_than_duplicated_point() {
        let mut x = cloud(400, 3);
        for i in 0..200 {
            x[[i, 0]] = 0.1;
            x[[i, 1]] = -0.2;
        }
        let f = IsolationForest::fit(x.view(), &IsolationForestSpec::default(), 11).unwrap();
        let dup = f.score(&[0.1, -0.2]);
        let outlier = f.score(&[10.0, 10.0]);
        assert!(outlier > dup, "outlier {outlier} dup {dup}");
        assert!(dup.is_finite() && outlier.is_finite());
    }

    #[test]
    fn deterministic_given_seed() {
        let x = cloud(300, 1);
        let a = IsolationForest::fit(x.view(), &IsolationForestSpec::default(), 5).unwrap();
        let b = IsolationForest::fit(x.view(), &IsolationForestSpec::default(), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.score(&[0.3, 2.0]), b.score(&[0.3, 2.0]));
    }

    #[test]
    fn more_trees_reduce_seed_variance() {
        let x = cloud(500, 2);
        let probe = [1.5, -0.5];
        let sd = |n_trees: usize| {
            let s: Vec<f64> = (0..10)
                .map(|seed| {
                    let spec = IsolationForestSpec { n_trees, subsample: 256 };
                    IsolationForest::fit(x.view(), &spec, seed).unwrap().score(&probe)
                })
                .collect();
            let m = s.iter().sum::<f64>() / 10.0;
            (s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 9.0).sqrt()
        };
        assert!(sd(100) < sd(1));
    }

    #[test]
    fn constant_data_gives_finite_scores() {
        let x = Array2::from_elem((50, 3), 1.0);
        let f = IsolationForest::fit(x.view(), &IsolationForestSpec::default(), 0).unwrap();
        assert!(f.score(&[1.0, 1.0, 1.0]).is_finite());
    }
}
