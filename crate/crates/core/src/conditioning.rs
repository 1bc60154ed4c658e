//! Discrete posteriors, conditional traces and the trace witness.
//!
//! For a discrete `g ~ μ` observed through `y = g·s`, the regular conditional
//! law of `g` given `y` is the posterior `w_i ∝ p_i ρ(g_i⁻¹ y)` on the atoms.
//! All conditional quantities below are exact functions of that posterior,
//! averaged by Monte Carlo over the observation.

use serde::{Deserialize, Serialize};

use crate::entropy::{EntropyEstimate, MixtureIndex};
use crate::error::{Error, Result};
use crate::lie::{raw_exp, raw_inv, raw_log, raw_mul, GroupElement, MAX_DIM};
use crate::measure::FinSuppMeasure;
use crate::rng::{mc_moments, run_chunks, pairwise_reduce, Moments, RngStream};
use crate::smoothing::SmoothingKernel;

/// Trace of the covariance of `log(g0⁻¹ g)` for `g ~ μ`.
pub fn trace_about(g0: &GroupElement, mu: &FinSuppMeasure) -> Result<f64> {
    if g0.model() != mu.model() {
        return Err(Error::ModelMismatch { left: g0.model(), right: mu.model() });
    }
    let inv = g0.inverse();
    let mut logs = Vec::with_capacity(mu.len());
    let mut bad = Vec::new();
    for (i, g) in mu.atoms().iter().enumerate() {
        match inv.mul_unchecked(g).log() {
            Ok(x) => logs.push(*x.raw()),
            Err(_) => bad.push(i),
        }
    }
    if !bad.is_empty() {
        return Err(Error::OutsideChart {
            model: mu.model(),
            detail: format!("atoms {bad:?} are outside the chart around the anchor"),
        });
    }
    Ok(weighted_trace(mu.model().dim(), logs.iter().zip(mu.weights().iter().copied())))
}

/// `Σ w |X - X̄|²` for weights summing to one, computed about the mean.
fn weighted_trace<'a>(dim: usize, items: impl Iterator<Item = (&'a [f64; MAX_DIM], f64)> + Clone) -> f64 {
    let mut mean = [0.0; MAX_DIM];
    for (x, w) in items.clone() {
        for d in 0..dim {
            mean[d] += w * x[d];
        }
    }
    items
        .map(|(x, w)| w * (0..dim).map(|d| (x[d] - mean[d]).powi(2)).sum::<f64>())
        .sum()
}

/// Posterior law of the atom index given one observation.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorWeights {
    pub observation: GroupElement,
    /// `(atom index, weight)` for the atoms with positive weight, in index order.
    pub entries: Vec<(usize, f64)>,
    pub n_atoms: usize,
}

impl PosteriorWeights {
    pub fn dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_atoms];
        for &(i, w) in &self.entries {
            out[i] = w;
        }
        out
    }
}

fn normalized(mut contributions: Vec<(usize, f64)>) -> Option<Vec<(usize, f64)>> {
    let total: f64 = contributions.iter().map(|c| c.1).sum();
    if !(total > 0.0) {
        return None;
    }
    contributions.sort_by_key(|c| c.0);
    contributions.iter_mut().for_each(|c| c.1 /= total);
    Some(contributions)
}

pub fn posterior_given_smoothed(mu: &FinSuppMeasure, k: &SmoothingKernel, y: &GroupElement) -> Result<PosteriorWeights> {
    if y.model() != mu.model() {
        return Err(Error::ModelMismatch { left: mu.model(), right: y.model() });
    }
    let index = MixtureIndex::new(mu, k)?;
    let entries = normalized(index.contributions(y.raw())).ok_or(Error::ZeroDensityObservation)?;
    Ok(PosteriorWeights { observation: y.clone(), entries, n_atoms: mu.len() })
}

/// Draws `y = g_i s` and returns `(y, posterior entries)`.
fn observe(
    mu: &FinSuppMeasure,
    k: &SmoothingKernel,
    index: &MixtureIndex,
    cumulative: &[f64],
    s: &mut RngStream,
) -> Result<([f64; MAX_DIM], Vec<(usize, f64)>)> {
    let i = s.categorical(cumulative);
    let z = k.sample_kernel(s);
    let y = raw_mul(mu.model(), mu.atoms()[i].raw(), z.exp().raw());
    let post = normalized(index.contributions_given_source(&y, i, k.density_at_log(&z))).ok_or(Error::ZeroDensityObservation)?;
    Ok((y, post))
}

/// Posterior trace about the observation, and the largest `|log(y⁻¹ g_j)|`
/// over the posterior support.
fn trace_about_observation(mu: &FinSuppMeasure, y: &[f64; MAX_DIM], post: &[(usize, f64)]) -> Result<(f64, f64)> {
    let model = mu.model();
    let dim = model.dim();
    let y_inv = raw_inv(model, y);
    let mut logs = Vec::with_capacity(post.len());
    let mut max_norm = 0.0f64;
    for &(j, w) in post {
        let x = raw_log(model, &raw_mul(model, &y_inv, mu.atoms()[j].raw())).ok_or_else(|| Error::OutsideChart {
            model,
            detail: format!("atom {j} has no logarithm relative to the observation"),
        })?;
        max_norm = max_norm.max(crate::lie::norm(&x[..dim]));
        logs.push((x, w));
    }
    if !model.is_abelian() && max_norm >= model.chart_radius() {
        return Err(Error::OutsideChart {
            model,
            detail: format!("posterior atom at distance {max_norm} from the observation"),
        });
    }
    Ok((weighted_trace(dim, logs.iter().map(|(x, w)| (x, *w))), max_norm))
}

fn conditional_trace_impl(
    mu: &FinSuppMeasure,
    k2: &SmoothingKernel,
    n_samples: usize,
    rng: &RngStream,
    witness_radius: Option<f64>,
) -> Result<EntropyEstimate> {
    let index = MixtureIndex::new(mu, k2)?;
    let cumulative = mu.cumulative_weights();
    let m = mc_moments(n_samples, rng, |s| {
        let (y, post) = observe(mu, k2, &index, &cumulative, s)?;
        let (t, max_norm) = trace_about_observation(mu, &y, &post)?;
        if let Some(radius) = witness_radius {
            if max_norm > radius * (1.0 + 1e-12) {
                return Err(Error::WitnessViolation { norm: max_norm, radius });
            }
        }
        Ok(t)
    })?;
    Ok(EntropyEstimate::from_moments(&m, 0.0))
}

/// `E_y[tr_y(g | y)]` for `y = g·s₂`, `s₂` drawn from `k2`.
pub fn conditional_trace(mu: &FinSuppMeasure, k2: &SmoothingKernel, n_samples: usize, rng: &RngStream) -> Result<EntropyEstimate> {
    conditional_trace_impl(mu, k2, n_samples, rng, None)
}

/// Number of inner draws used per observation by
/// [`conditional_entropy_given_smoothed`].
pub fn inner_sample_count(n_outer: usize) -> usize {
    ((n_outer as f64).sqrt().ceil() as usize).max(1)
}

/// `H(g s₁ | g s₂)`: for each observation `y = g·s₂` the entropy of the
/// conditional mixture `Σ w_j(y) g_j s₁` is estimated by resubstitution with
/// [`inner_sample_count`] draws, and the results are averaged over `y`.
pub fn conditional_entropy_given_smoothed(
    mu: &FinSuppMeasure,
    k1: &SmoothingKernel,
    k2: &SmoothingKernel,
    n_samples: usize,
    rng: &RngStream,
) -> Result<EntropyEstimate> {
    if k1.model() != mu.model() {
        return Err(Error::ModelMismatch { left: mu.model(), right: k1.model() });
    }
    let model = mu.model();
    let index = MixtureIndex::new(mu, k2)?;
    let cumulative = mu.cumulative_weights();
    let inverses: Vec<[f64; MAX_DIM]> = mu.atoms().iter().map(|g| raw_inv(model, g.raw())).collect();
    let n_inner = inner_sample_count(n_samples);
    let m = mc_moments(n_samples, rng, |s| {
        let (_, post) = observe(mu, k2, &index, &cumulative, s)?;
        let mut cum = Vec::with_capacity(post.len());
        let mut acc = 0.0;
        for &(_, w) in &post {
            acc += w;
            cum.push(acc);
        }
        let mut inner = Moments::default();
        for _ in 0..n_inner {
            let j = post[s.categorical(&cum)].0;
            let x = raw_mul(model, mu.atoms()[j].raw(), k1.sample_group(s).raw());
            let d: f64 = post
                .iter()
                .map(|&(i, w)| w * k1.density_of_relative(&raw_mul(model, &inverses[i], &x)))
                .sum();
            if !(d > 0.0) {
                return Err(Error::DegenerateDensity("conditional mixture density vanished".into()));
            }
            inner.push(-d.ln());
        }
        Ok(inner.mean)
    })?;
    Ok(EntropyEstimate::from_moments(&m, k1.normalizing_error()))
}

/// Lower bound for the trace at scale `radius`, certified by one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceWitness {
    pub t: f64,
    pub radius: f64,
    pub scheme: String,
    pub std_error: f64,
}

/// Witness for `tr(g; 2ar)`: condition on `y = g·s_{a,2r}` and anchor at
/// `h = y`. Every posterior atom is checked to lie within `2ar` of `h`.
pub fn trace_at_scale_witness(mu: &FinSuppMeasure, a: f64, r: f64, n_samples: usize, rng: &RngStream) -> Result<TraceWitness> {
    let k2 = SmoothingKernel::new(mu.model(), a, 2.0 * r)?;
    let radius = k2.support_radius();
    let est = conditional_trace_impl(mu, &k2, n_samples, rng, Some(radius))?;
    let scale = radius * radius;
    Ok(TraceWitness {
        t: est.value / scale,
        radius,
        scheme: format!("observation g*s(a={a}, r={}), anchor at the observation", 2.0 * r),
        std_error: est.std_error / scale,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceProductReport {
    pub epsilon: f64,
    /// `tr_e(ab)`.
    pub lhs: f64,
    /// `tr_e(a) + tr_e(b)`.
    pub rhs: f64,
    pub residual: f64,
    pub std_error: f64,
    pub cubic_constant: f64,
    pub bound: f64,
    pub passes: bool,
}

/// Unit vectors to the vertices of the icosahedron. Averages over them
/// integrate polynomials of degree at most 5 on the sphere exactly.
fn icosahedron() -> [[f64; 3]; 12] {
    let phi = 0.5 * (1.0 + 5f64.sqrt());
    let n = (1.0 + phi * phi).sqrt();
    let (u, v) = (1.0 / n, phi / n);
    let mut out = [[0.0; 3]; 12];
    let mut k = 0;
    for s1 in [-1.0, 1.0] {
        for s2 in [-1.0, 1.0] {
            out[k] = [0.0, s1 * u, s2 * v];
            out[k + 1] = [s1 * u, s2 * v, 0.0];
            out[k + 2] = [s2 * v, 0.0, s1 * u];
            k += 3;
        }
    }
    out
}

fn random_rotation(s: &mut RngStream) -> [[f64; 3]; 3] {
    use rand::Rng;
    use rand_distr::StandardNormal;
    let mut q = [0.0f64; 4];
    loop {
        for v in q.iter_mut() {
            *v = s.sample(StandardNormal);
        }
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-12 {
            q.iter_mut().for_each(|v| *v /= n);
            break;
        }
    }
    let [w, x, y, z] = q;
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
        [2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
        [2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

/// Compares `tr_e(ab)` with `tr_e(a) + tr_e(b)` for `a ~ μ_a` and `b ~ s_{a,r}`.
///
/// With `X = log a`, `Y = log b` and `log(ab) = X + Y + E`, the residual is
/// `2 E[(X + Y)·E] + E|E|² - 2 E[X + Y]·E[E] - |E[E]|²`, since the
/// variances of `X` and `Y` are known exactly and `E[Y] = 0`. Each outer
/// sample draws a radius from the kernel and a random rotation of the
/// icosahedron, and averages over all atoms and the twelve directions.
pub fn trace_product_check(
    mu_a: &FinSuppMeasure,
    k: &SmoothingKernel,
    n_samples: usize,
    rng: &RngStream,
    cubic_constant: f64,
) -> Result<TraceProductReport> {
    let model = mu_a.model();
    if k.model() != model {
        return Err(Error::ModelMismatch { left: model, right: k.model() });
    }
    let identity = model.identity();
    let tr_a = trace_about(&identity, mu_a)?;
    let tr_b = k.kernel_trace();
    let logs: Vec<[f64; MAX_DIM]> = mu_a.atoms().iter().map(|g| Ok(*g.log()?.raw())).collect::<Result<_>>()?;
    let max_log = logs.iter().map(|x| crate::lie::norm(&x[..model.dim()])).fold(0.0, f64::max);
    let epsilon = max_log.max(k.support_radius());
    let bound = cubic_constant * epsilon.powi(3);
    let report = |residual: f64, std_error: f64| TraceProductReport {
        epsilon,
        lhs: tr_a + tr_b + residual,
        rhs: tr_a + tr_b,
        residual,
        std_error,
        cubic_constant,
        bound,
        passes: residual.abs() <= bound,
    };
    if model.is_abelian() {
        return Ok(report(0.0, 0.0));
    }
    if model.dim() != 3 {
        return Err(Error::InvalidArgument(format!("product check needs a 3-dimensional model, got {model}")));
    }
    let dim = 3;
    let weights = mu_a.weights();
    let mut x_bar = [0.0; 3];
    for (x, &w) in logs.iter().zip(weights) {
        for d in 0..dim {
            x_bar[d] += w * x[d];
        }
    }
    let atoms: Vec<[f64; MAX_DIM]> = mu_a.atoms().iter().map(|g| *g.raw()).collect();
    let design = icosahedron();
    let chunks = run_chunks(n_samples, rng, |s, len| {
        let mut lin = Moments::default();
        let mut e_sum = [0.0; 3];
        for _ in 0..len {
            let rho = k.sample_kernel(s).norm();
            let rot = random_rotation(s);
            let mut value = 0.0;
            let mut e_mean = [0.0; 3];
            for dir in &design {
                let mut y = [0.0; MAX_DIM];
                for d in 0..dim {
                    y[d] = rho * (rot[d][0] * dir[0] + rot[d][1] * dir[1] + rot[d][2] * dir[2]);
                }
                let b = raw_exp(model, &y);
                for ((a, x), &w) in atoms.iter().zip(&logs).zip(weights) {
                    let z = raw_log(model, &raw_mul(model, a, &b)).ok_or_else(|| Error::OutsideChart {
                        model,
                        detail: "product left the chart".into(),
                    })?;
                    let mut term = 0.0;
                    for d in 0..dim {
                        let e = z[d] - x[d] - y[d];
                        term += 2.0 * (x[d] + y[d] - x_bar[d]) * e + e * e;
                        e_mean[d] += w * e;
                    }
                    value += w * term;
                }
            }
            let nd = design.len() as f64;
            lin.push(value / nd);
            for d in 0..dim {
                e_sum[d] += e_mean[d] / nd;
            }
        }
        Ok((lin, e_sum))
    })?;
    let (lin, e_sum) = pairwise_reduce(chunks, (Moments::default(), [0.0; 3]), |(m1, e1), (m2, e2)| {
        (Moments::merge(m1, m2), [e1[0] + e2[0], e1[1] + e2[1], e1[2] + e2[2]])
    });
    let n = lin.n.max(1) as f64;
    let e_bar_sq: f64 = e_sum.iter().map(|e| (e / n).powi(2)).sum();
    Ok(report(lin.mean - e_bar_sq, lin.std_error()))
}
