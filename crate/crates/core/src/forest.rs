//! Bagged CART regression trees with variance-reduction splits.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy)]
pub struct RandomForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub mtry: usize,
    pub bootstrap: bool,
    pub seed: RngSeed,
}

impl RandomForestConfig {
    /// Conventional regression-forest defaults for `q` features.
    pub fn default_for(q: usize, seed: RngSeed) -> Self {
        Self {
            n_trees: 100,
            min_leaf: 5,
            mtry: (q / 3).max(1),
            bootstrap: true,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, row: &[f64]) -> f64 {
        // the root is pushed last during recursive construction
        let mut at = self.nodes.len() - 1;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct RandomForestModel {
    trees: Vec<Tree>,
    n_features: usize,
}

impl RandomForestModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Result<DVector<f64>> {
        if z.ncols() != self.n_features {
            return Err(Error::DimensionMismatch(format!(
                "forest was trained on {} features, got {}",
                self.n_features,
                z.ncols()
            )));
        }
        let mut out = DVector::zeros(z.nrows());
        let mut row = vec![0.0; self.n_features];
        for i in 0..z.nrows() {
            for j in 0..self.n_features {
                row[j] = z[(i, j)];
            }
            let sum: f64 = self.trees.iter().map(|t| t.predict_row(&row)).sum();
            out[i] = sum / self.trees.len() as f64;
        }
        Ok(out)
    }
}

struct TreeBuilder<'a> {
    z: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn build(&mut self, indices: &mut [usize], rng: &mut impl Rng) -> usize {
        let m = indices.len();
        let sum: f64 = indices.iter().map(|&i| self.y[i]).sum();
        let mean = sum / m as f64;

        if m < 2 * self.min_leaf {
            return self.push(Node::Leaf(mean));
        }

        let q = self.z.ncols();
        let mut features: Vec<usize> = (0..q).collect();
        if self.mtry < q {
            for i in 0..self.mtry {
                let j = rng.random_range(i..q);
                features.swap(i, j);
            }
            features.truncate(self.mtry);
        }

        // best split maximizes sum_L^2/m_L + sum_R^2/m_R; ties broken by
        // (value, response) sort order so the result does not depend on
        // the order training rows arrived in
        let mut best: Option<(f64, usize, f64, usize)> = None; // (score, feature, threshold, left_count)
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(m);
        for &f in &features {
            pairs.clear();
            pairs.extend(indices.iter().map(|&i| (self.z[(i, f)], self.y[i])));
            pairs.sort_by(|a, b| a.partial_cmp(b).expect("finite training data"));
            let mut left_sum = 0.0;
            for i in 0..m - 1 {
                left_sum += pairs[i].1;
                let left_cnt = i + 1;
                let right_cnt = m - left_cnt;
                if left_cnt < self.min_leaf || right_cnt < self.min_leaf {
                    continue;
                }
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / left_cnt as f64
                    + right_sum * right_sum / right_cnt as f64;
                if best.is_none_or(|(s, ..)| score > s) {
                    let threshold = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                    best = Some((score, f, threshold, left_cnt));
                }
            }
        }

        let Some((_, feature, threshold, _)) = best else {
            return self.push(Node::Leaf(mean));
        };

        let split_at = partition(indices, |i| self.z[(i, feature)] < threshold);
        let (left_idx, right_idx) = indices.split_at_mut(split_at);
        let left = self.build(left_idx, rng);
        let right = self.build(right_idx, rng);
        self.push(Node::Split {
            feature,
            threshold,
            left,
            right,
        })
    }

    fn push(&mut self, node: Node) -> usize {
        self.nodes.push(node);
        self.nodes.len() - 1
    }
}

fn partition(indices: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut store = 0;
    for i in 0..indices.len() {
        if pred(indices[i]) {
            indices.swap(store, i);
            store += 1;
        }
    }
    store
}

pub fn train_random_forest(
    z: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &RandomForestConfig,
) -> Result<RandomForestModel> {
    let (n, q) = z.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "features have {n} rows but response has {} entries",
            y.len()
        )));
    }
    if config.n_trees == 0 || config.min_leaf == 0 {
        return Err(Error::InvalidParameter(
            "n_trees and min_leaf must be at least 1".into(),
        ));
    }
    if config.mtry == 0 || config.mtry > q {
        return Err(Error::InvalidParameter(format!(
            "mtry must lie in 1..={q}, got {}",
            config.mtry
        )));
    }
    if n < 2 * config.min_leaf {
        return Err(Error::InvalidParameter(format!(
            "need at least {} training rows, got {n}",
            2 * config.min_leaf
        )));
    }

    let trees = (0..config.n_trees)
        .map(|t| {
            // one independent stream per tree so tree order is irrelevant
            let mut rng = config.seed.child(t as u64).rng();
            let mut indices: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut builder = TreeBuilder {
                z,
                y,
                min_leaf: config.min_leaf,
                mtry: config.mtry,
                nodes: Vec::new(),
            };
            let root = builder.build(&mut indices, &mut rng);
            debug_assert_eq!(root, builder.nodes.len() - 1);
            Tree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(RandomForestModel {
        trees,
        n_features: q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{sample_standard_normal, RngSeed};
    use approx::assert_abs_diff_eq;

    fn config(n_trees: usize, min_leaf: usize, mtry: usize, bootstrap: bool) -> RandomForestConfig {
        RandomForestConfig {
            n_trees,
            min_leaf,
            mtry,
            bootstrap,
            seed: RngSeed::new(99, 0),
        }
    }

    #[test]
    fn constant_target_gives_constant_forest() {
        let z = DMatrix::from_fn(40, 2, |i, j| (i * 2 + j) as f64);
        let y = DVector::from_element(40, 7.5);
        let model = train_random_forest(&z, &y, &config(10, 5, 1, true)).unwrap();
        let pred = model.predict(&z).unwrap();
        assert!(pred.iter().all(|p| (p - 7.5).abs() < 1e-12));
    }

    #[test]
    fn single_tree_recovers_perfect_separator() {
        // Z1 in {0,1} perfectly separates y in {0,10}
        let z = DMatrix::from_fn(20, 1, |i, _| (i % 2) as f64);
        let y = DVector::from_fn(20, |i, _| if i % 2 == 0 { 0.0 } else { 10.0 });
        let model = train_random_forest(&z, &y, &config(1, 1, 1, false)).unwrap();

        // exhaustive single-split oracle: best threshold minimizes SSE
        let mut best = (f64::INFINITY, 0.0);
        for cut in [-0.5, 0.5, 1.5] {
            let (mut ls, mut lc, mut rs, mut rc) = (0.0, 0usize, 0.0, 0usize);
            for i in 0..20 {
                if z[(i, 0)] < cut {
                    ls += y[i];
                    lc += 1;
                } else {
                    rs += y[i];
                    rc += 1;
                }
            }
            if lc == 0 || rc == 0 {
                continue;
            }
            let sse: f64 = (0..20)
                .map(|i| {
                    let m = if z[(i, 0)] < cut {
                        ls / lc as f64
                    } else {
                        rs / rc as f64
                    };
                    (y[i] - m).powi(2)
                })
                .sum();
            if sse < best.0 {
                best = (sse, cut);
            }
        }
        assert_abs_diff_eq!(best.1, 0.5, epsilon = 1e-12);

        let probe = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let pred = model.predict(&probe).unwrap();
        assert_abs_diff_eq!(pred[0], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(pred[1], 10.0, epsilon = 1e-12);
    }

    #[test]
    fn same_seed_is_deterministic() {
        let z1 = sample_standard_normal(RngSeed::new(3, 0), 60);
        let z2 = sample_standard_normal(RngSeed::new(3, 1), 60);
        let z = DMatrix::from_fn(60, 2, |i, j| if j == 0 { z1[i] } else { z2[i] });
        let y = DVector::from_fn(60, |i, _| z1[i] + z2[i] * z2[i]);
        let cfg = config(25, 3, 1, true);
        let a = train_random_forest(&z, &y, &cfg).unwrap();
        let b = train_random_forest(&z, &y, &cfg).unwrap();
        assert_eq!(a.predict(&z).unwrap(), b.predict(&z).unwrap());
    }

    #[test]
    fn row_permutation_invariant_without_bootstrap() {
        let z1 = sample_standard_normal(RngSeed::new(6, 0), 50);
        let z2 = sample_standard_normal(RngSeed::new(6, 1), 50);
        let y0 = sample_standard_normal(RngSeed::new(6, 2), 50);
        let z = DMatrix::from_fn(50, 2, |i, j| if j == 0 { z1[i] } else { z2[i] });
        let y = DVector::from_fn(50, |i, _| z1[i] + 0.3 * y0[i]);

        // reverse the training rows
        let z_rev = DMatrix::from_fn(50, 2, |i, j| z[(49 - i, j)]);
        let y_rev = DVector::from_fn(50, |i, _| y[49 - i]);

        let cfg = config(10, 5, 2, false);
        let a = train_random_forest(&z, &y, &cfg).unwrap();
        let b = train_random_forest(&z_rev, &y_rev, &cfg).unwrap();
        let probe = DMatrix::from_fn(20, 2, |i, j| if j == 0 { z1[i] } else { z2[i] });
        let pa = a.predict(&probe).unwrap();
        let pb = b.predict(&probe).unwrap();
        for i in 0..20 {
            assert_abs_diff_eq!(pa[i], pb[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn identical_rows_yield_constant_model_not_error() {
        let z = DMatrix::from_element(30, 2, 1.0);
        let y = DVector::from_fn(30, |i, _| i as f64);
        let model = train_random_forest(&z, &y, &config(5, 2, 1, false)).unwrap();
        let pred = model.predict(&z).unwrap();
        let mean = (0..30).sum::<usize>() as f64 / 30.0;
        assert!(pred.iter().all(|p| (p - mean).abs() < 1e-9));
    }

    #[test]
    fn config_validation() {
        let z = DMatrix::from_element(10, 2, 1.0);
        let y = DVector::zeros(10);
        assert!(train_random_forest(&z, &y, &config(0, 1, 1, true)).is_err());
        assert!(train_random_forest(&z, &y, &config(1, 1, 3, true)).is_err());
        assert!(train_random_forest(&z, &y, &config(1, 6, 1, true)).is_err());
    }
}
