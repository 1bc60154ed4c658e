//! Brute-force references shared by the integration tests. None of these
//! reuse the library's search, pruning or dynamic-programming code.
#![allow(dead_code)]

use std::collections::BTreeMap;

use liescale::{AlgebraVector, FinSuppMeasure, GroupElement, LieGroupModel, RngStream};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

pub fn q(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn sl2(entries: [i64; 4]) -> GroupElement {
    GroupElement::from_exact(LieGroupModel::SL2R, entries.iter().map(|&v| q(v)).collect()).unwrap()
}

/// `{[[1,2],[0,1]], [[1,0],[2,1]]}` with weight ½ each; generates a free semigroup.
pub fn sanov_pair() -> FinSuppMeasure {
    FinSuppMeasure::uniform(LieGroupModel::SL2R, vec![sl2([1, 2, 0, 1]), sl2([1, 0, 2, 1])]).unwrap()
}

pub fn exact_key(g: &GroupElement) -> Vec<BigRational> {
    g.exact().expect("exact element").to_vec()
}

/// Law of an exact measure as a map from matrix entries to weight.
pub fn exact_law(mu: &FinSuppMeasure) -> BTreeMap<Vec<BigRational>, BigRational> {
    let w = mu.exact_weights().expect("exact weights");
    mu.atoms().iter().zip(w).map(|(g, p)| (exact_key(g), p.clone())).collect()
}

/// Minimum over all pairs, no pruning.
pub fn brute_min_distance(elements: &[GroupElement]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..elements.len() {
        for j in i + 1..elements.len() {
            best = best.min(elements[i].distance(&elements[j]).unwrap().lower_bound());
        }
    }
    best
}

/// All words of length `n` in the atoms, multiplied out left to right.
pub fn all_products(mu: &FinSuppMeasure, n: usize) -> Vec<GroupElement> {
    let mut out = vec![mu.model().identity()];
    for _ in 0..n {
        out = out.iter().flat_map(|g| mu.atoms().iter().map(move |h| g.multiply(h).unwrap())).collect();
    }
    out
}

/// Law of `γ_1⋯γ_η` where `η` is the first time the summed cost reaches
/// `threshold`, by depth-first enumeration of every path.
pub fn renewal_law_by_paths(
    mu: &FinSuppMeasure,
    costs: &[BigRational],
    threshold: &BigRational,
) -> (BTreeMap<Vec<BigRational>, BigRational>, BigRational) {
    fn walk(
        mu: &FinSuppMeasure,
        w: &[BigRational],
        costs: &[BigRational],
        threshold: &BigRational,
        g: GroupElement,
        spent: BigRational,
        p: BigRational,
        steps: usize,
        law: &mut BTreeMap<Vec<BigRational>, BigRational>,
        mean_time: &mut BigRational,
    ) {
        if &spent >= threshold {
            *law.entry(exact_key(&g)).or_insert_with(BigRational::zero) += p.clone();
            *mean_time += p * q(steps as i64);
            return;
        }
        for (i, h) in mu.atoms().iter().enumerate() {
            let next = g.multiply(h).unwrap();
            walk(mu, w, costs, threshold, next, &spent + &costs[i], &p * &w[i], steps + 1, law, mean_time);
        }
    }
    let w = mu.exact_weights().unwrap().to_vec();
    let mut law = BTreeMap::new();
    let mut mean_time = BigRational::zero();
    walk(mu, &w, costs, threshold, mu.model().identity(), BigRational::zero(), BigRational::one(), 0, &mut law, &mut mean_time);
    (law, mean_time)
}

fn chart_coords(g: &GroupElement) -> Vec<f64> {
    g.log().unwrap().coords().to_vec()
}

/// `1 / |det d/dY log(exp(X)⁻¹ exp(X + Y))|` at `Y = 0` by central differences.
///
/// The determinant is the chart density of Haar measure at `X`; its
/// reciprocal is the density of the pushed-forward Lebesgue measure.
pub fn fd_jacobian(x: &AlgebraVector) -> f64 {
    let model = x.model();
    let l = model.dim();
    let base = x.exp().inverse();
    let h = 1e-5;
    let mut m = vec![vec![0.0; l]; l];
    for j in 0..l {
        let shifted = |t: f64| {
            let mut c = x.coords().to_vec();
            c[j] += t;
            chart_coords(&base.multiply(&AlgebraVector::new(model, &c).unwrap().exp()).unwrap())
        };
        let (p, n) = (shifted(h), shifted(-h));
        for i in 0..l {
            m[i][j] = (p[i] - n[i]) / (2.0 * h);
        }
    }
    1.0 / det(m).abs()
}

fn det(mut m: Vec<Vec<f64>>) -> f64 {
    let n = m.len();
    let mut d = 1.0;
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        if p != c {
            m.swap(p, c);
            d = -d;
        }
        d *= m[c][c];
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    d
}

/// Volume-ratio estimate of the chart Jacobian at `x`.
///
/// The set `exp(X)·exp(B_ρ)` has the Haar volume of `B_ρ` (Jacobian ≈ 1 at
/// the identity). Its chart volume is estimated by hit-or-miss sampling in a
/// ball of radius `inflate·ρ` around `X`, and `j(X)` is chart volume over Haar
/// volume. Returns `(estimate, standard error)`.
pub fn hit_or_miss_jacobian(x: &AlgebraVector, rho: f64, inflate: f64, n: usize, seed: u64) -> (f64, f64) {
    let model = x.model();
    let l = model.dim();
    let inv = x.exp().inverse();
    let outer = inflate * rho;
    let mut rng = RngStream::new(seed, 0);
    let mut hits = 0usize;
    let mut drawn = 0usize;
    let mut edge = 0.0f64;
    while drawn < n {
        let d: Vec<f64> = (0..l).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        if d.iter().map(|v| v * v).sum::<f64>() > 1.0 {
            continue;
        }
        drawn += 1;
        let c: Vec<f64> = x.coords().iter().zip(&d).map(|(&v, &e)| v + outer * e).collect();
        let rel = inv.multiply(&AlgebraVector::new(model, &c).unwrap().exp()).unwrap();
        if rel.log().unwrap().norm() < rho {
            hits += 1;
            edge = edge.max(d.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    assert!(edge < 0.98, "the translated ball reaches the sampling boundary");
    let p = hits as f64 / n as f64;
    let ratio = (outer / rho).powi(l as i32);
    let j = p * ratio;
    let rel_se = ((1.0 - p) / (p * n as f64)).sqrt();
    (j, j * rel_se)
}
