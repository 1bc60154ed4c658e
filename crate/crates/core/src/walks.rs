//! Random walks stopped at deterministic or renewal times.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::{entropy_at_scale, EntropyEstimate};
use crate::error::{Error, Result};
use crate::lie::{rational_to_f64, Distance, ExactRepr, GroupElement};
use crate::measure::{convolution_power, min_pairwise_distance, rw_entropy_estimate, separation_rates, FinSuppMeasure, Weight};
use crate::rng::RngStream;
use crate::smoothing::SmoothingKernel;

#[derive(Debug, Clone, PartialEq)]
pub enum StoppingKind {
    /// `η_n = L_n`.
    Deterministic(Vec<usize>),
    /// `η_n` is the first `k` with `cost(γ_1) + … + cost(γ_k) ≥ thresholds[n]`.
    /// `costs[i]` belongs to atom `i` of the measure in its canonical order.
    Renewal { costs: Vec<BigRational>, thresholds: Vec<BigRational> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingTimeSpec {
    pub kind: StoppingKind,
    /// Largest number of steps any path may take.
    pub cap: usize,
}

impl StoppingTimeSpec {
    pub fn deterministic(schedule: Vec<usize>, cap: usize) -> Self {
        Self { kind: StoppingKind::Deterministic(schedule), cap }
    }

    pub fn renewal(costs: Vec<BigRational>, thresholds: Vec<BigRational>, cap: usize) -> Self {
        Self { kind: StoppingKind::Renewal { costs, thresholds }, cap }
    }

    pub fn schedule_len(&self) -> usize {
        match &self.kind {
            StoppingKind::Deterministic(s) => s.len(),
            StoppingKind::Renewal { thresholds, .. } => thresholds.len(),
        }
    }

    fn validate(&self, mu: &FinSuppMeasure, n: usize) -> Result<()> {
        if n >= self.schedule_len() {
            return Err(Error::InvalidArgument(format!("index {n} is past the schedule of length {}", self.schedule_len())));
        }
        if let StoppingKind::Renewal { costs, .. } = &self.kind {
            if costs.len() != mu.len() {
                return Err(Error::InvalidArgument(format!("{} costs for {} atoms", costs.len(), mu.len())));
            }
            if costs.iter().any(|c| !c.is_positive()) {
                return Err(Error::InvalidArgument("renewal costs must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Prob {
    Exact(BigRational),
    Float(f64),
}

impl Prob {
    fn mul(&self, w: &Prob) -> Prob {
        match (self, w) {
            (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a * b),
            _ => Prob::Float(self.value() * w.value()),
        }
    }

    fn add(&mut self, w: Prob) {
        *self = match (std::mem::replace(self, Prob::Float(0.0)), w) {
            (Prob::Exact(a), Prob::Exact(b)) => Prob::Exact(a + b),
            (a, b) => Prob::Float(a.value() + b.value()),
        }
    }

    fn value(&self) -> f64 {
        match self {
            Prob::Exact(q) => rational_to_f64(q),
            Prob::Float(v) => *v,
        }
    }

    fn into_weight(self) -> Weight {
        match self {
            Prob::Exact(q) => Weight::Exact(q),
            Prob::Float(v) => Weight::Float(v),
        }
    }
}

fn atom_probs(mu: &FinSuppMeasure) -> Vec<Prob> {
    match mu.exact_weights() {
        Some(ws) => ws.iter().cloned().map(Prob::Exact).collect(),
        None => mu.weights().iter().copied().map(Prob::Float).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct StoppedWalkLaw {
    pub law: FinSuppMeasure,
    /// Number of step sequences, before merging.
    pub n_paths: u128,
    /// `(η value, probability)` in increasing order of `η`.
    pub time_distribution: Vec<(usize, Weight)>,
    pub expected_time: Weight,
}

impl StoppedWalkLaw {
    pub fn expected_time_f64(&self) -> f64 {
        self.expected_time.value()
    }
}

fn expectation(dist: &[(usize, Weight)]) -> Weight {
    if dist.iter().all(|(_, w)| matches!(w, Weight::Exact(_))) {
        let mut acc = BigRational::zero();
        for (t, w) in dist {
            let Weight::Exact(q) = w else { unreachable!() };
            acc += q * BigRational::from_integer(BigInt::from(*t));
        }
        Weight::Exact(acc)
    } else {
        Weight::Float(dist.iter().map(|(t, w)| *t as f64 * w.value()).sum())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum ElementKey {
    Exact(ExactRepr),
    Float(Vec<u64>),
}

fn key_of(g: &GroupElement) -> ElementKey {
    match g.exact_repr() {
        Some(e) => ElementKey::Exact(e.clone()),
        None => ElementKey::Float(g.entries().iter().map(|v| v.to_bits()).collect()),
    }
}

struct PathState {
    element: GroupElement,
    prob: Prob,
    paths: u128,
}

/// Exact law of `q_{η_n}` for the `n`-th entry of the schedule.
///
/// Renewal times are enumerated step by step; paths that reach the same
/// element with the same accumulated cost are merged.
pub fn stopped_law(mu: &FinSuppMeasure, spec: &StoppingTimeSpec, n: usize) -> Result<StoppedWalkLaw> {
    spec.validate(mu, n)?;
    match &spec.kind {
        StoppingKind::Deterministic(schedule) => {
            let l = schedule[n];
            if l > spec.cap {
                return Err(Error::CapExceeded { cap: spec.cap });
            }
            let law = if l == 0 {
                FinSuppMeasure::dirac(mu.model().identity())
            } else {
                convolution_power(mu, l)?
            };
            let one = if mu.exact_weights().is_some() { Weight::Exact(BigRational::one()) } else { Weight::Float(1.0) };
            let time_distribution = vec![(l, one)];
            Ok(StoppedWalkLaw {
                law,
                n_paths: (mu.len() as u128).saturating_pow(l as u32),
                expected_time: expectation(&time_distribution),
                time_distribution,
            })
        }
        StoppingKind::Renewal { costs, thresholds } => renewal_law(mu, costs, &thresholds[n], spec.cap),
    }
}

fn renewal_law(mu: &FinSuppMeasure, costs: &[BigRational], threshold: &BigRational, cap: usize) -> Result<StoppedWalkLaw> {
    let probs = atom_probs(mu);
    let one = match probs[0] {
        Prob::Exact(_) => Prob::Exact(BigRational::one()),
        Prob::Float(_) => Prob::Float(1.0),
    };
    let mut stopped: Vec<(GroupElement, Prob)> = Vec::new();
    let mut times: Vec<(usize, Weight)> = Vec::new();
    let mut n_paths = 0u128;
    let mut alive: BTreeMap<(ElementKey, BigRational), PathState> = BTreeMap::new();
    let e = mu.model().identity();
    if BigRational::zero() >= *threshold {
        stopped.push((e, one.clone()));
        times.push((0, one.into_weight()));
        n_paths = 1;
    } else {
        alive.insert((key_of(&e), BigRational::zero()), PathState { element: e, prob: one, paths: 1 });
    }
    let mut step = 0;
    while !alive.is_empty() {
        if step == cap {
            return Err(Error::CapExceeded { cap });
        }
        step += 1;
        let mut next: BTreeMap<(ElementKey, BigRational), PathState> = BTreeMap::new();
        let mut stopped_mass: Option<Prob> = None;
        for ((_, cost), state) in alive {
            for (i, g) in mu.atoms().iter().enumerate() {
                let element = state.element.mul_unchecked(g);
                let prob = state.prob.mul(&probs[i]);
                let c = &cost + &costs[i];
                if c >= *threshold {
                    n_paths = n_paths.saturating_add(state.paths);
                    match &mut stopped_mass {
                        Some(m) => m.add(prob.clone()),
                        None => stopped_mass = Some(prob.clone()),
                    }
                    stopped.push((element, prob));
                } else {
                    let key = (key_of(&element), c);
                    match next.get_mut(&key) {
                        Some(s) => {
                            s.prob.add(prob);
                            s.paths = s.paths.saturating_add(state.paths);
                        }
                        None => {
                            next.insert(key, PathState { element, prob, paths: state.paths });
                            if next.len() > mu.cap() {
                                return Err(Error::SupportOverflow { count: next.len(), cap: mu.cap() });
                            }
                        }
                    }
                }
            }
        }
        if let Some(m) = stopped_mass {
            times.push((step, m.into_weight()));
        }
        if stopped.len() > mu.cap() {
            return Err(Error::SupportOverflow { count: stopped.len(), cap: mu.cap() });
        }
        alive = next;
    }
    let (atoms, weights): (Vec<_>, Vec<_>) = stopped.into_iter().map(|(g, p)| (g, p.into_weight())).unzip();
    let law = FinSuppMeasure::new(mu.model(), atoms, weights)?.with_cap(mu.cap());
    Ok(StoppedWalkLaw { law, n_paths, expected_time: expectation(&times), time_distribution: times })
}

/// Law of `η_n` alone, by dynamic programming over accumulated cost.
///
/// Never enumerates group elements, so it reaches far larger thresholds than
/// [`stopped_law`].
pub fn stopping_time_distribution(mu: &FinSuppMeasure, spec: &StoppingTimeSpec, n: usize) -> Result<Vec<(usize, Weight)>> {
    spec.validate(mu, n)?;
    let exact = mu.exact_weights().is_some();
    let (costs, threshold) = match &spec.kind {
        StoppingKind::Deterministic(schedule) => {
            if schedule[n] > spec.cap {
                return Err(Error::CapExceeded { cap: spec.cap });
            }
            let one = if exact { Weight::Exact(BigRational::one()) } else { Weight::Float(1.0) };
            return Ok(vec![(schedule[n], one)]);
        }
        StoppingKind::Renewal { costs, thresholds } => (costs, &thresholds[n]),
    };
    let probs = atom_probs(mu);
    // atoms with equal cost act identically on the time
    let mut by_cost: BTreeMap<&BigRational, Prob> = BTreeMap::new();
    for (c, p) in costs.iter().zip(probs) {
        match by_cost.get_mut(c) {
            Some(q) => q.add(p),
            None => {
                by_cost.insert(c, p);
            }
        }
    }
    let one = if exact { Prob::Exact(BigRational::one()) } else { Prob::Float(1.0) };
    if BigRational::zero() >= *threshold {
        return Ok(vec![(0, one.into_weight())]);
    }
    let mut alive: BTreeMap<BigRational, Prob> = BTreeMap::from([(BigRational::zero(), one)]);
    let mut out = Vec::new();
    let mut step = 0;
    while !alive.is_empty() {
        if step == spec.cap {
            return Err(Error::CapExceeded { cap: spec.cap });
        }
        step += 1;
        let mut next: BTreeMap<BigRational, Prob> = BTreeMap::new();
        let mut stopped: Option<Prob> = None;
        for (acc, p) in &alive {
            for (c, q) in &by_cost {
                let total = acc + *c;
                let mass = p.mul(q);
                if total >= *threshold {
                    match &mut stopped {
                        Some(s) => s.add(mass),
                        None => stopped = Some(mass),
                    }
                } else {
                    match next.get_mut(&total) {
                        Some(s) => s.add(mass),
                        None => {
                            next.insert(total, mass);
                        }
                    }
                }
            }
        }
        if let Some(s) = stopped {
            out.push((step, s.into_weight()));
        }
        alive = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpRow {
    pub index: usize,
    pub expected_time: f64,
    /// `P[|η - L| ≥ εL]`.
    pub tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub epsilon: f64,
    pub rows: Vec<LdpRow>,
    /// Slope of `log tail` against `L` over the rows with a positive tail.
    pub slope: Option<f64>,
    pub slope_std_error: Option<f64>,
    pub delta_hat: Option<f64>,
    /// Fewer than two positive tails: nothing deviates, the bound holds trivially.
    pub degenerate: bool,
    pub passes: bool,
}

/// Exact tails `P[|η_n - L_n| ≥ ε L_n]` and a fitted decay rate `δ̂`.
///
/// Passes when the fitted slope is negative with two standard errors to
/// spare (with only two positive tails, when the slope is negative).
pub fn ldp_check(mu: &FinSuppMeasure, spec: &StoppingTimeSpec, epsilon: f64, indices: &[usize]) -> Result<LdpReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let eps_q = BigRational::from_f64(epsilon).ok_or_else(|| Error::InvalidArgument("epsilon is not finite".into()))?;
    let rows = indices
        .par_iter()
        .map(|&n| {
            let dist = stopping_time_distribution(mu, spec, n)?;
            let expected = expectation(&dist);
            let tail = match &expected {
                Weight::Exact(l) => {
                    let limit = &eps_q * l;
                    let mut acc = BigRational::zero();
                    for (t, w) in &dist {
                        let dev = (BigRational::from_integer(BigInt::from(*t)) - l).abs();
                        if dev >= limit {
                            if let Weight::Exact(q) = w {
                                acc += q;
                            }
                        }
                    }
                    rational_to_f64(&acc)
                }
                Weight::Float(l) => dist
                    .iter()
                    .filter(|(t, _)| (*t as f64 - l).abs() >= epsilon * l)
                    .map(|(_, w)| w.value())
                    .sum(),
            };
            Ok(LdpRow { index: n, expected_time: expected.value(), tail })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.tail > 0.0).map(|r| (r.expected_time, r.tail.ln())).collect();
    if pts.len() < 2 {
        return Ok(LdpReport { epsilon, rows, slope: None, slope_std_error: None, delta_hat: None, degenerate: true, passes: true });
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::InvalidArgument("LDP fit needs at least two distinct expected times".into()));
    }
    let slope = sxy / sxx;
    let se = (pts.len() > 2).then(|| {
        let ssr: f64 = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    });
    let passes = slope < 0.0 && se.is_none_or(|s| slope + 2.0 * s < 0.0);
    Ok(LdpReport {
        epsilon,
        rows,
        slope: Some(slope),
        slope_std_error: se,
        delta_hat: Some(-slope),
        degenerate: false,
        passes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessOptions {
    /// `ε` in `M_{⌈(1+ε)L_n⌉}`.
    pub epsilon: f64,
    /// `c_G` in the scale `c_G M / a`.
    pub c_g: f64,
    /// Depth of the estimate of the random walk entropy.
    pub h_mu_depth: usize,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        Self { epsilon: 0.1, c_g: 1.0, h_mu_depth: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessRow {
    pub n: usize,
    pub l_n: f64,
    pub r_n: f64,
    /// `M_{⌈(1+ε)L_n⌉}` (a lower bound when it is the far sentinel).
    pub m_bound: f64,
    pub r_theorem: f64,
    pub h_est: f64,
    pub std_error: f64,
    pub bias_budget: f64,
    pub h_mu_ln: f64,
    pub deficit: f64,
    /// True when the smoothed atoms of the stopped law have disjoint supports.
    pub exact_split: bool,
}

impl HarnessRow {
    /// `deficit ≥ -(4·std_error + bias_budget)`.
    pub fn within_tolerance(&self) -> bool {
        self.deficit >= -(4.0 * self.std_error + self.bias_budget)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub rows: Vec<HarnessRow>,
    pub s: f64,
    pub max_separation_exponent: f64,
    pub h_mu: f64,
    pub warnings: Vec<String>,
}

/// `1.1 · max S_k` over the separation range the harness consults.
pub fn default_rate(mu: &FinSuppMeasure, spec: &StoppingTimeSpec, indices: &[usize], epsilon: f64) -> Result<f64> {
    let mut k_max = 1usize;
    for &n in indices {
        let law = stopped_law(mu, spec, n)?;
        k_max = k_max.max(((1.0 + epsilon) * law.expected_time_f64()).ceil() as usize);
    }
    let reps = separation_rates(mu, k_max)?;
    Ok(1.1 * reps.iter().map(|r| r.s_n).fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest `r` whose kernel constant `r^{-ℓ} C` stays finite.
fn radius_floor(dim: usize) -> f64 {
    10f64.powf(-250.0 / dim as f64)
}

/// For each schedule index: `H_a(q_{η_n}; r_n)` at `r_n = e^{-S L_n}` against `h_μ L_n`.
///
/// Row `i` draws from `rng.derive(i)`.
#[allow(clippy::too_many_arguments)]
pub fn theorem_harness(
    mu: &FinSuppMeasure,
    spec: &StoppingTimeSpec,
    a: f64,
    s: f64,
    indices: &[usize],
    n_samples: usize,
    rng: &RngStream,
    opts: &HarnessOptions,
) -> Result<HarnessReport> {
    let model = mu.model();
    let laws = indices.iter().map(|&n| stopped_law(mu, spec, n)).collect::<Result<Vec<_>>>()?;
    let k_of = |law: &StoppedWalkLaw| ((1.0 + opts.epsilon) * law.expected_time_f64()).ceil().max(1.0) as usize;
    let k_max = laws.iter().map(k_of).max().unwrap_or(1);
    let separations = separation_rates(mu, k_max)?;
    let s_max = separations.iter().map(|r| r.s_n).fold(f64::NEG_INFINITY, f64::max);
    let mut warnings = Vec::new();
    if s <= s_max {
        warnings.push(format!("S = {s} does not exceed the largest computed separation exponent {s_max}"));
    }
    let h_mu = rw_entropy_estimate(mu, opts.h_mu_depth)?;
    // large scales at small n would leave the chart; they are pulled just inside it
    let r_cap = if model.is_abelian() { f64::INFINITY } else { model.chart_radius() / a * (1.0 - 1e-9) };
    let clamped: Vec<usize> = laws
        .iter()
        .zip(indices)
        .filter(|(law, _)| (-s * law.expected_time_f64()).exp() > r_cap)
        .map(|(_, &n)| n)
        .collect();
    if !clamped.is_empty() {
        warnings.push(format!("r_n clamped to the chart limit {r_cap} for rows {clamped:?}"));
    }
    let rows = laws
        .par_iter()
        .zip(indices.par_iter())
        .enumerate()
        .map(|(row, (law, &n))| {
            let l_n = law.expected_time_f64();
            let r_n = (-s * l_n).exp().max(radius_floor(model.dim())).min(r_cap);
            let m_bound = separations[k_of(law) - 1].m_n.lower_bound();
            let kernel = SmoothingKernel::new(model, a, r_n)?;
            let est: EntropyEstimate = entropy_at_scale(&law.law, &kernel, n_samples, &rng.derive(row as u64))?;
            let support_gap = min_pairwise_distance(model, law.law.atoms())?;
            let exact_split = match support_gap {
                Distance::Exact(d) | Distance::AtLeast(d) => d > 2.0 * kernel.support_radius(),
            };
            let h_mu_ln = h_mu * l_n;
            Ok(HarnessRow {
                n,
                l_n,
                r_n,
                m_bound,
                r_theorem: opts.c_g * m_bound / a,
                h_est: est.value,
                std_error: est.std_error,
                bias_budget: est.bias_budget,
                h_mu_ln,
                deficit: est.value - h_mu_ln,
                exact_split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HarnessReport { rows, s, max_separation_exponent: s_max, h_mu, warnings })
}
