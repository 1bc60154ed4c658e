//! Finitely supported probability measures on a group model.
//!
//! Atoms are kept distinct and in a canonical order: lexicographic on the
//! exact rational entries when every atom is exact, lexicographic on the
//! floating entries otherwise. Exact atoms merge on equality; float atoms
//! merge when their distance is below [`DEDUP_TOL`].

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lie::{rational_to_f64, Distance, GroupElement, LieGroupModel};
use crate::rng::RngStream;

pub const DEFAULT_SUPPORT_CAP: usize = 1 << 20;
pub const DEDUP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    Exact(BigRational),
    Float(f64),
}

impl Weight {
    pub fn value(&self) -> f64 {
        match self {
            Weight::Exact(q) => rational_to_f64(q),
            Weight::Float(v) => *v,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FinSuppMeasure {
    model: LieGroupModel,
    atoms: Vec<GroupElement>,
    weights: Vec<f64>,
    exact_weights: Option<Vec<BigRational>>,
    cap: usize,
}

struct Entry {
    element: GroupElement,
    weight: f64,
    exact: Option<BigRational>,
}

impl FinSuppMeasure {
    /// Builds a probability measure; coinciding atoms are merged.
    pub fn new(model: LieGroupModel, atoms: Vec<GroupElement>, weights: Vec<Weight>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "need matching nonempty atom and weight lists, got {} and {}",
                atoms.len(),
                weights.len()
            )));
        }
        if let Some(g) = atoms.iter().find(|g| g.model() != model) {
            return Err(Error::ModelMismatch { left: model, right: g.model() });
        }
        let all_exact = weights.iter().all(|w| matches!(w, Weight::Exact(_)));
        if all_exact {
            let mut sum = BigRational::zero();
            for w in &weights {
                let Weight::Exact(q) = w else { unreachable!() };
                if *q <= BigRational::zero() {
                    return Err(Error::InvalidMeasure(format!("nonpositive weight {q}")));
                }
                sum += q;
            }
            if !sum.is_one() {
                return Err(Error::InvalidMeasure(format!("weights sum to {sum}, not 1")));
            }
        } else {
            let mut sum = 0.0;
            for w in &weights {
                let v = w.value();
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::InvalidMeasure(format!("nonpositive weight {v}")));
                }
                sum += v;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidMeasure(format!("weights sum to {sum}, not 1")));
            }
        }
        let entries = atoms
            .into_iter()
            .zip(weights)
            .map(|(element, w)| Entry {
                weight: w.value(),
                exact: match w {
                    Weight::Exact(q) if all_exact => Some(q),
                    _ => None,
                },
                element,
            })
            .collect();
        Self::collect(model, entries, DEFAULT_SUPPORT_CAP)
    }

    /// Uniform measure with exact weights `1/K`.
    pub fn uniform(model: LieGroupModel, atoms: Vec<GroupElement>) -> Result<Self> {
        let k = atoms.len();
        if k == 0 {
            return Err(Error::InvalidMeasure("no atoms".into()));
        }
        let w = BigRational::new(BigInt::one(), BigInt::from(k));
        Self::new(model, atoms, vec![Weight::Exact(w); k])
    }

    pub fn dirac(g: GroupElement) -> Self {
        let model = g.model();
        Self::new(model, vec![g], vec![Weight::Exact(BigRational::one())]).expect("a point mass is valid")
    }

    /// Replaces the support cap used by convolutions of this measure.
    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn model(&self) -> LieGroupModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[GroupElement] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn exact_weights(&self) -> Option<&[BigRational]> {
        self.exact_weights.as_deref()
    }

    /// True when every atom carries exact entries.
    pub fn has_exact_atoms(&self) -> bool {
        self.atoms.iter().all(|g| g.is_exact())
    }

    /// Exact total mass when available, otherwise the float sum.
    pub fn total_mass(&self) -> Weight {
        match &self.exact_weights {
            Some(ws) => Weight::Exact(ws.iter().fold(BigRational::zero(), |acc, w| acc + w)),
            None => Weight::Float(self.weights.iter().sum()),
        }
    }

    pub(crate) fn cumulative_weights(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    pub fn sample_index(&self, cumulative: &[f64], rng: &mut RngStream) -> usize {
        rng.categorical(cumulative)
    }

    fn collect(model: LieGroupModel, entries: Vec<Entry>, cap: usize) -> Result<Self> {
        let exact_weights = entries.iter().all(|e| e.exact.is_some());
        let merged = if entries.iter().all(|e| e.element.is_exact()) {
            merge_exact(entries, cap)?
        } else {
            merge_float(entries, cap)?
        };
        let weights = merged
            .iter()
            .map(|e| match &e.exact {
                Some(q) if exact_weights => rational_to_f64(q),
                _ => e.weight,
            })
            .collect();
        let exact = if exact_weights {
            Some(merged.iter().map(|e| e.exact.clone().expect("exact weight")).collect())
        } else {
            None
        };
        Ok(Self {
            model,
            atoms: merged.into_iter().map(|e| e.element).collect(),
            weights,
            exact_weights: exact,
            cap,
        })
    }
}

fn add_weight(into: &mut Entry, from: Entry) {
    into.weight += from.weight;
    into.exact = match (into.exact.take(), from.exact) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
}

fn merge_exact(entries: Vec<Entry>, cap: usize) -> Result<Vec<Entry>> {
    let mut map: BTreeMap<crate::lie::ExactRepr, Entry> = BTreeMap::new();
    for e in entries {
        let key = e.element.exact_repr().expect("exact element").clone();
        match map.get_mut(&key) {
            Some(slot) => add_weight(slot, e),
            None => {
                map.insert(key, e);
                if map.len() > cap {
                    return Err(Error::SupportOverflow { count: map.len(), cap });
                }
            }
        }
    }
    Ok(map.into_values().collect())
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn merge_float(mut entries: Vec<Entry>, cap: usize) -> Result<Vec<Entry>> {
    entries.sort_by(|a, b| lex_cmp(a.element.entries(), b.element.entries()));
    let mut reps: Vec<Entry> = Vec::new();
    for e in entries {
        let x0 = e.element.entries()[0];
        let window = 4.0 * (1.0 + e.element.frobenius_norm()) * DEDUP_TOL;
        let mut target = None;
        for (idx, r) in reps.iter().enumerate().rev() {
            if x0 - r.element.entries()[0] > window {
                break;
            }
            let d = r.element.distance(&e.element)?;
            if d.is_exact() && d.lower_bound() < DEDUP_TOL {
                target = Some(idx);
                break;
            }
        }
        match target {
            Some(idx) => add_weight(&mut reps[idx], e),
            None => {
                reps.push(e);
                if reps.len() > cap {
                    return Err(Error::SupportOverflow { count: reps.len(), cap });
                }
            }
        }
    }
    Ok(reps)
}

/// `μ * ν`: law of `g·h` for independent `g ~ μ`, `h ~ ν`.
pub fn convolve(mu: &FinSuppMeasure, nu: &FinSuppMeasure) -> Result<FinSuppMeasure> {
    if mu.model != nu.model {
        return Err(Error::ModelMismatch { left: mu.model, right: nu.model });
    }
    let cap = mu.cap.min(nu.cap);
    let exact = mu.exact_weights.as_ref().zip(nu.exact_weights.as_ref());
    let mut entries = Vec::with_capacity(mu.len() * nu.len());
    for (i, g) in mu.atoms.iter().enumerate() {
        for (j, h) in nu.atoms.iter().enumerate() {
            entries.push(Entry {
                element: g.mul_unchecked(h),
                weight: mu.weights[i] * nu.weights[j],
                exact: exact.map(|(a, b)| &a[i] * &b[j]),
            });
        }
    }
    FinSuppMeasure::collect(mu.model, entries, cap)
}

/// `μ^{*n}` for `n ≥ 1`.
pub fn convolution_power(mu: &FinSuppMeasure, n: usize) -> Result<FinSuppMeasure> {
    if n == 0 {
        return Err(Error::InvalidArgument("convolution power needs n >= 1".into()));
    }
    let mut acc = mu.clone();
    for _ in 1..n {
        acc = convolve(&acc, mu)?;
    }
    Ok(acc)
}

fn h(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Shannon entropy in nats. Equal exact weights are grouped before summing.
pub fn shannon_entropy(mu: &FinSuppMeasure) -> f64 {
    if mu.len() == 1 {
        return 0.0;
    }
    match &mu.exact_weights {
        Some(ws) => {
            let mut groups: BTreeMap<&BigRational, usize> = BTreeMap::new();
            for w in ws {
                *groups.entry(w).or_default() += 1;
            }
            groups.into_iter().map(|(w, c)| c as f64 * h(rational_to_f64(w))).sum()
        }
        None => mu.weights.iter().map(|&p| h(p)).sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeparationReport {
    pub n: usize,
    pub m_n: Distance,
    /// `-(1/n) log M_n`; an upper bound when `m_n` is the far sentinel.
    pub s_n: f64,
    pub s_n_is_bound: bool,
    pub pair_count: u64,
    pub union_size: usize,
}

/// Minimum pairwise distance of a set of distinct elements.
///
/// Returns the far sentinel for fewer than two elements. Pairs are pruned by
/// their first matrix entry: `|h - g|_F ≤ |g|_F (e^{c d(g,h)} - 1)`.
pub fn min_pairwise_distance(model: LieGroupModel, elements: &[GroupElement]) -> Result<Distance> {
    let radius = model.chart_radius();
    if elements.len() < 2 {
        return Ok(Distance::AtLeast(radius));
    }
    let mut order: Vec<usize> = (0..elements.len()).collect();
    order.sort_by(|&a, &b| elements[a].entries()[0].total_cmp(&elements[b].entries()[0]));
    let c = model.frobenius_scale();
    let mut best: Option<Distance> = None;
    for (pos, &i) in order.iter().enumerate() {
        let gi = &elements[i];
        let bound = best.map_or(f64::INFINITY, |d| d.lower_bound());
        let window = if model.is_abelian() {
            bound
        } else {
            gi.frobenius_norm() * (c * bound.min(radius)).exp_m1() * (1.0 + 1e-9) + 1e-15
        };
        for &j in &order[pos + 1..] {
            let gj = &elements[j];
            if gj.entries()[0] - gi.entries()[0] > window {
                break;
            }
            let d = gi.distance(gj)?;
            best = Some(best.map_or(d, |b| b.min(d)));
        }
    }
    Ok(best.unwrap_or(Distance::AtLeast(radius)))
}

fn report(n: usize, union_size: usize, m_n: Distance) -> SeparationReport {
    let s_n = -m_n.lower_bound().ln() / n as f64;
    SeparationReport {
        n,
        m_n,
        s_n,
        s_n_is_bound: !m_n.is_exact(),
        pair_count: (union_size as u64) * (union_size as u64).saturating_sub(1) / 2,
        union_size,
    }
}

/// Separation reports for `n = 1..=n_max` over `∪_{i≤n} supp(μ^{*i})`, including `i = 0`.
pub fn separation_rates(mu: &FinSuppMeasure, n_max: usize) -> Result<Vec<SeparationReport>> {
    if n_max == 0 {
        return Err(Error::InvalidArgument("separation rate needs n >= 1".into()));
    }
    let model = mu.model;
    let mut union = FinSuppMeasure::dirac(model.identity()).with_cap(mu.cap);
    let mut power = union.clone();
    let mut out = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        power = convolve(&power, mu)?;
        let entries = union
            .atoms
            .iter()
            .chain(power.atoms.iter())
            .map(|g| Entry {
                element: g.clone(),
                weight: 1.0,
                exact: None,
            })
            .collect();
        union = FinSuppMeasure::collect(model, entries, mu.cap)?;
        let m = min_pairwise_distance(model, &union.atoms)?;
        out.push(report(n, union.len(), m));
    }
    Ok(out)
}

pub fn separation_rate(mu: &FinSuppMeasure, n: usize) -> Result<SeparationReport> {
    Ok(*separation_rates(mu, n)?.last().expect("n >= 1"))
}

/// Estimate of `S_μ = limsup S_n`: the maximum over the computed range.
pub fn separation_exponent_estimate(reports: &[SeparationReport]) -> f64 {
    reports.iter().map(|r| r.s_n).fold(f64::NEG_INFINITY, f64::max)
}

/// `H(μ^{*k})` for `k = 1..=n`.
pub fn convolution_entropies(mu: &FinSuppMeasure, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut acc = mu.clone();
    for k in 1..=n {
        if k > 1 {
            acc = convolve(&acc, mu)?;
        }
        out.push(shannon_entropy(&acc));
    }
    Ok(out)
}

/// `min_{1≤k≤n} H(μ^{*k})/k`, an upper bound for the random walk entropy.
pub fn rw_entropy_estimate(mu: &FinSuppMeasure, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument("random walk entropy needs n >= 1".into()));
    }
    Ok(convolution_entropies(mu, n)?
        .iter()
        .enumerate()
        .map(|(k, hk)| hk / (k + 1) as f64)
        .fold(f64::INFINITY, f64::min))
}
