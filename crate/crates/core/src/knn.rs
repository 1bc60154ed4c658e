//! Nearest-neighbour (Kozachenko–Leonenko, k = 1) differential entropy.
//!
//! Used only as an independent cross-check of the resubstitution estimator.
//! The bias decays like `O(n^{-1/ℓ})` for densities with a bounded support.

use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, LieGroupModel, MAX_DIM};
use crate::smoothing::unit_ball_volume;

pub const MIN_SAMPLES: usize = 1000;

const LEAF: usize = 12;

struct Node {
    lo: usize,
    hi: usize,
    dim: usize,
    split: f64,
    children: Option<(usize, usize)>,
}

/// Static kd-tree over points of `R^dim`.
struct KdTree<'a> {
    points: &'a [[f64; MAX_DIM]],
    dim: usize,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    fn build(points: &'a [[f64; MAX_DIM]], dim: usize) -> Self {
        let mut tree = KdTree {
            points,
            dim,
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        tree.build_node(0, points.len());
        tree
    }

    fn build_node(&mut self, lo: usize, hi: usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            lo,
            hi,
            dim: 0,
            split: 0.0,
            children: None,
        });
        if hi - lo <= LEAF {
            return id;
        }
        let points = self.points;
        let dim = (0..self.dim)
            .max_by(|&a, &b| {
                let spread = |d: usize| {
                    let (mn, mx) = self.order[lo..hi]
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(mn, mx), &i| {
                            (mn.min(points[i][d]), mx.max(points[i][d]))
                        });
                    mx - mn
                };
                spread(a).total_cmp(&spread(b))
            })
            .unwrap_or(0);
        let mid = lo + (hi - lo) / 2;
        self.order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| points[a][dim].total_cmp(&points[b][dim]));
        let split = points[self.order[mid]][dim];
        let left = self.build_node(lo, mid);
        let right = self.build_node(mid, hi);
        let node = &mut self.nodes[id];
        node.dim = dim;
        node.split = split;
        node.children = Some((left, right));
        id
    }

    fn sq_dist(&self, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> f64 {
        (0..self.dim).map(|d| (a[d] - b[d]) * (a[d] - b[d])).sum()
    }

    /// Squared distance to the nearest point at positive distance.
    fn nearest(&self, q: &[f64; MAX_DIM]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(0, q, &mut best);
        best
    }

    fn search(&self, id: usize, q: &[f64; MAX_DIM], best: &mut f64) {
        let node = &self.nodes[id];
        match node.children {
            None => {
                for &i in &self.order[node.lo..node.hi] {
                    let d = self.sq_dist(q, &self.points[i]);
                    if d > 0.0 && d < *best {
                        *best = d;
                    }
                }
            }
            Some((left, right)) => {
                let diff = q[node.dim] - node.split;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                if diff * diff <= *best {
                    self.search(far, q, best);
                }
            }
        }
    }
}

/// Distance from each point to its nearest distinct neighbour.
pub fn nearest_neighbor_distances(points: &[[f64; MAX_DIM]], dim: usize) -> Vec<f64> {
    let tree = KdTree::build(points, dim);
    points.iter().map(|p| tree.nearest(p).sqrt()).collect()
}

/// Entropy in chart coordinates, `H_{n-1} + log V_ℓ + (ℓ/n) Σ log ε_i`.
pub fn knn_entropy_euclidean(points: &[[f64; MAX_DIM]], dim: usize) -> Result<f64> {
    let n = points.len();
    if n < MIN_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, got: n });
    }
    let eps = nearest_neighbor_distances(points, dim);
    let log_sum: f64 = eps.iter().map(|e| e.ln()).sum();
    // ψ(n) - ψ(1) is the harmonic number H_{n-1}
    let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
    Ok(harmonic + unit_ball_volume(dim).ln() + dim as f64 * log_sum / n as f64)
}

/// Differential entropy with respect to Haar measure of the law of `exp(X)`,
/// estimated from samples `X` in one log chart.
///
/// The chart estimate is corrected by `-E[log j(X)]`, since the Haar density
/// of `exp(X)` is the chart density times `j(X)`.
pub fn knn_entropy_oracle(samples: &[AlgebraVector]) -> Result<f64> {
    let Some(first) = samples.first() else {
        return Err(Error::InsufficientSamples { needed: MIN_SAMPLES, got: 0 });
    };
    let model = first.model();
    if let Some(x) = samples.iter().find(|x| x.model() != model) {
        return Err(Error::ModelMismatch { left: model, right: x.model() });
    }
    let points: Vec<[f64; MAX_DIM]> = samples.iter().map(|x| *x.raw()).collect();
    let chart = knn_entropy_euclidean(&points, model.dim())?;
    let correction = if matches!(model, LieGroupModel::Abelian(_) | LieGroupModel::Heisenberg3) {
        0.0
    } else {
        let mut total = 0.0;
        for x in samples {
            total += x.chart_jacobian()?.ln();
        }
        total / samples.len() as f64
    };
    Ok(chart - correction)
}
