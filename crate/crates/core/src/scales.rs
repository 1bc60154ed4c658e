//! Trace profiles over a range of scales and geometric scale selection.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conditioning::trace_at_scale_witness;
use crate::entropy::{entropy_at_scale, EntropyEstimate};
use crate::error::{Error, Result};
use crate::measure::FinSuppMeasure;
use crate::rng::RngStream;
use crate::smoothing::SmoothingKernel;

pub const MIN_GRID: usize = 8;

/// Samples `u ↦ tr(g; u)` on a strictly increasing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceProfile {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub a: f64,
    pub source: String,
}

impl TraceProfile {
    /// Validated constructor, also used for synthetic profiles.
    pub fn new(grid: Vec<f64>, values: Vec<f64>, std_errors: Vec<f64>, a: f64, source: impl Into<String>) -> Result<Self> {
        if grid.len() != values.len() || grid.len() != std_errors.len() {
            return Err(Error::InvalidArgument("profile columns have different lengths".into()));
        }
        if grid.first().is_some_and(|&u| !(u > 0.0)) || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("profile grid must be positive and strictly increasing".into()));
        }
        if values.iter().chain(&std_errors).any(|v| !(*v >= 0.0)) {
            return Err(Error::InvalidArgument("profile values and errors must be nonnegative".into()));
        }
        Ok(Self { grid, values, std_errors, a, source: source.into() })
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn mean_std_error(&self) -> f64 {
        self.std_errors.iter().sum::<f64>() / self.len().max(1) as f64
    }

    /// Trapezoid weights in `log u`; `log_integral = Σ w_j v_j`.
    pub fn log_weights(&self) -> Vec<f64> {
        let k = self.len();
        let mut w = vec![0.0; k];
        for j in 0..k.saturating_sub(1) {
            let h = (self.grid[j + 1] / self.grid[j]).ln();
            w[j] += 0.5 * h;
            w[j + 1] += 0.5 * h;
        }
        w
    }
}

/// `k` points from `lo` to `hi` in geometric progression, endpoints exact.
pub fn geometric_grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / (k - 1) as f64;
    (0..k)
        .map(|j| match j {
            0 => lo,
            j if j == k - 1 => hi,
            j => lo * (ratio * j as f64).exp(),
        })
        .collect()
}

/// Witness traces at `u = 2ar` for `r` on a geometric grid over `[r_lo, r_hi]`.
///
/// Grid point `j` uses the stream `rng.derive(j)`.
pub fn trace_profile(
    mu: &FinSuppMeasure,
    a: f64,
    r_lo: f64,
    r_hi: f64,
    grid_size: usize,
    n_samples: usize,
    rng: &RngStream,
) -> Result<TraceProfile> {
    if grid_size < MIN_GRID {
        return Err(Error::InvalidArgument(format!("grid_size {grid_size} is below {MIN_GRID}")));
    }
    if !(r_lo > 0.0 && r_lo < r_hi) {
        return Err(Error::InvalidArgument(format!("need 0 < r_lo < r_hi, got {r_lo} and {r_hi}")));
    }
    let model = mu.model();
    if !model.is_abelian() && !(2.0 * a * r_hi < model.chart_radius()) {
        return Err(Error::InvalidKernel(format!(
            "2a*r_hi = {} must be below the chart radius {}",
            2.0 * a * r_hi,
            model.chart_radius()
        )));
    }
    let rs = geometric_grid(r_lo, r_hi, grid_size);
    let witnesses = rs
        .par_iter()
        .enumerate()
        .map(|(j, &r)| trace_at_scale_witness(mu, a, r, n_samples, &rng.derive(j as u64)))
        .collect::<Result<Vec<_>>>()?;
    TraceProfile::new(
        witnesses.iter().map(|w| w.radius).collect(),
        witnesses.iter().map(|w| w.t).collect(),
        witnesses.iter().map(|w| w.std_error).collect(),
        a,
        format!("{} atoms on {model}", mu.len()),
    )
}

/// Trapezoid value of `∫ tr(g; u) du / u` over the grid, in `log u`.
pub fn log_integral(profile: &TraceProfile) -> f64 {
    profile.log_weights().iter().zip(&profile.values).map(|(w, v)| w * v).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    U,
    V,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSelection {
    pub scales: Vec<f64>,
    /// Profile value at each selected scale.
    pub values: Vec<f64>,
    pub a_factor: f64,
    pub m: usize,
    pub trace_sum: f64,
    pub branch: Branch,
    pub log_integral: f64,
    /// `log_integral / (4 log A)`.
    pub guarantee: f64,
    /// `max(0, guarantee - trace_sum)`; zero whenever the grid's log spacing is at most `log A`.
    pub slack: f64,
    pub max_log_spacing: f64,
}

impl ScaleSelection {
    pub fn spacing_holds(&self) -> bool {
        self.scales.windows(2).all(|w| w[1] >= self.a_factor * w[0])
    }
}

/// Picks scales `s_1 < … ` with `s_{i+1} ≥ A s_i` and large total trace.
///
/// With boundaries `b_k = u_1 A^{k-1}`, `k = 1..2m+1`, grid points are
/// bucketed into the intervals `[b_k, b_{k+1})` (the last one closed).
/// Odd intervals form `U`, even ones `V`; the family carrying the larger
/// share of the trapezoid sum is kept, and each of its nonempty intervals
/// contributes its argmax. A bucket's trapezoid weights total at most
/// `log A + max spacing`, so when the grid spacing is at most `log A` the
/// result satisfies `trace_sum ≥ log_integral / (4 log A)`.
pub fn select_scales(profile: &TraceProfile, a_factor: f64) -> Result<ScaleSelection> {
    if !(a_factor > 1.0) {
        return Err(Error::InvalidArgument(format!("A must exceed 1, got {a_factor}")));
    }
    let k = profile.len();
    if k < 2 {
        return Err(Error::RangeTooNarrow { ratio: 1.0, required: a_factor * a_factor });
    }
    let (u1, uk) = (profile.grid[0], profile.grid[k - 1]);
    let ratio = uk / u1;
    if !(ratio > a_factor * a_factor) {
        return Err(Error::RangeTooNarrow { ratio, required: a_factor * a_factor });
    }
    let log_a = a_factor.ln();
    let m = (ratio.ln() / (2.0 * log_a)).ceil() as usize;
    let mut bounds = Vec::with_capacity(2 * m + 1);
    bounds.push(u1);
    for i in 1..=2 * m {
        bounds.push(bounds[i - 1] * a_factor);
    }
    // bucket of each grid point, 0-based over the 2m intervals
    let bucket = |u: f64| bounds[1..2 * m].partition_point(|&b| b <= u);
    let weights = profile.log_weights();
    let mut family_mass = [0.0f64; 2];
    let mut best: Vec<Option<usize>> = vec![None; 2 * m];
    for j in 0..k {
        let b = bucket(profile.grid[j]);
        family_mass[b % 2] += weights[j] * profile.values[j];
        if best[b].is_none_or(|i| profile.values[j] > profile.values[i]) {
            best[b] = Some(j);
        }
    }
    let branch = if family_mass[0] >= family_mass[1] { Branch::U } else { Branch::V };
    let parity = if branch == Branch::U { 0 } else { 1 };
    let picks: Vec<usize> = (0..2 * m).filter(|b| b % 2 == parity).filter_map(|b| best[b]).collect();
    let scales: Vec<f64> = picks.iter().map(|&j| profile.grid[j]).collect();
    let values: Vec<f64> = picks.iter().map(|&j| profile.values[j]).collect();
    let trace_sum = values.iter().sum::<f64>();
    let integral = log_integral(profile);
    let guarantee = integral / (4.0 * log_a);
    let max_log_spacing = profile.grid.windows(2).map(|w| (w[1] / w[0]).ln()).fold(0.0, f64::max);
    Ok(ScaleSelection {
        scales,
        values,
        a_factor,
        m,
        trace_sum,
        branch,
        log_integral: integral,
        guarantee,
        slack: (guarantee - trace_sum).max(0.0),
        max_log_spacing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapProbe {
    pub r1: f64,
    pub r2: f64,
    pub gap: f64,
    pub std_error: f64,
    pub bias_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapOptions {
    pub grid_size: usize,
    pub probes_per_interval: usize,
    /// Fail unless the probed gap can reach this value within MC error.
    pub required_gap: Option<f64>,
    /// Constant in front of `e^{-a²/4} + a³ r₂` in the predicted bound.
    pub error_constant: f64,
    /// Constant in front of the predicted bound itself.
    pub trace_constant: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self { grid_size: 32, probes_per_interval: 4, required_gap: None, error_constant: 1.0, trace_constant: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub probes: Vec<GapProbe>,
    /// Smallest probed gap.
    pub c: f64,
    /// Standard error of the smallest probed gap.
    pub c_std_error: f64,
    pub c_bias_budget: f64,
    /// Number of dyadic steps, `⌈log₂(r₂/r₁)⌉ - 1`.
    pub n_dyadic: usize,
    pub predicted_bound: f64,
    pub profile: TraceProfile,
    pub selection: ScaleSelection,
}

/// Probes `H_a(g; r₁'|r₂')` for `r₁' ∈ [r₁, 2r₁]`, `r₂' ∈ [r₂/2, 2r₂]`, then
/// profiles the trace over `u ∈ [a r₁, 4 a r₂]` and selects scales.
///
/// Streams: entropy probe `i` uses `rng.derive(i)`, the profile uses
/// `rng.derive(1000)`.
pub fn entropy_gap_to_trace_sum(
    mu: &FinSuppMeasure,
    a: f64,
    r1: f64,
    r2: f64,
    a_factor: f64,
    n_samples: usize,
    rng: &RngStream,
    opts: &GapOptions,
) -> Result<GapReport> {
    if !(r1 > 0.0 && 4.0 * r1 < r2) {
        return Err(Error::InvalidArgument(format!(
            "probe ranges [r1, 2r1] and [r2/2, 2r2] must be disjoint, got r1 = {r1}, r2 = {r2}"
        )));
    }
    let p = opts.probes_per_interval.max(2);
    let lows = geometric_grid(r1, 2.0 * r1, p);
    let highs = geometric_grid(r2 / 2.0, 2.0 * r2, p);
    let model = mu.model();
    let estimates: Vec<EntropyEstimate> = lows
        .iter()
        .chain(&highs)
        .enumerate()
        .map(|(i, &r)| entropy_at_scale(mu, &SmoothingKernel::new(model, a, r)?, n_samples, &rng.derive(i as u64)))
        .collect::<Result<_>>()?;
    let mut probes = Vec::with_capacity(p * p);
    for (i, &lo) in lows.iter().enumerate() {
        for (j, &hi) in highs.iter().enumerate() {
            let g = estimates[i].minus(&estimates[p + j]);
            probes.push(GapProbe { r1: lo, r2: hi, gap: g.value, std_error: g.std_error, bias_budget: g.bias_budget });
        }
    }
    if let Some(bad) = probes.iter().find(|q| q.gap < -(4.0 * q.std_error + q.bias_budget)) {
        return Err(Error::HypothesisFailed(format!(
            "gap between r1' = {} and r2' = {} is {} (std error {})",
            bad.r1, bad.r2, bad.gap, bad.std_error
        )));
    }
    let worst = probes.iter().min_by(|x, y| x.gap.total_cmp(&y.gap)).copied().expect("at least four probes");
    if let Some(required) = opts.required_gap {
        if worst.gap + 4.0 * worst.std_error + worst.bias_budget < required {
            return Err(Error::HypothesisFailed(format!(
                "smallest probed gap {} at r1' = {}, r2' = {} is below the required {required}",
                worst.gap, worst.r1, worst.r2
            )));
        }
    }
    let n_dyadic = ((r2 / r1).log2().ceil() as usize).saturating_sub(1);
    let profile = trace_profile(mu, a, r1 / 2.0, 2.0 * r2, opts.grid_size, n_samples, &rng.derive(1000))?;
    let selection = select_scales(&profile, a_factor)?;
    let error = opts.error_constant * ((-a * a / 4.0).exp() + a.powi(3) * r2);
    let predicted_bound = opts.trace_constant * (worst.gap - n_dyadic as f64 * error) / (a * a * a_factor.ln());
    Ok(GapReport {
        probes,
        c: worst.gap,
        c_std_error: worst.std_error,
        c_bias_budget: worst.bias_budget,
        n_dyadic,
        predicted_bound,
        profile,
        selection,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{GroupElement, LieGroupModel};
    use crate::measure::Weight;

    fn synthetic(lo: f64, hi: f64, k: usize, f: impl Fn(f64) -> f64) -> TraceProfile {
        let grid = geometric_grid(lo, hi, k);
        let values = grid.iter().map(|&u| f(u)).collect();
        TraceProfile::new(grid, values, vec![0.0; k], 1.0, "synthetic").unwrap()
    }

    fn line(points: &[f64]) -> FinSuppMeasure {
        let m = LieGroupModel::Abelian(1);
        let atoms = points.iter().map(|&p| GroupElement::from_f64(m, &[p]).unwrap()).collect();
        let w = 1.0 / points.len() as f64;
        FinSuppMeasure::new(m, atoms, vec![Weight::Float(w); points.len()]).unwrap()
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = geometric_grid(0.3, 7.0, 9);
        assert_eq!((g[0], g[8]), (0.3, 7.0));
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn log_integral_closed_forms() {
        let e = std::f64::consts::E;
        let p = synthetic(0.5, 0.5 * e, 17, |_| 2.5);
        assert!((log_integral(&p) - 2.5).abs() < 1e-14);
        assert_eq!(log_integral(&synthetic(1.0, 9.0, 10, |_| 0.0)), 0.0);
    }

    #[test]
    fn constant_profile_selection() {
        for a in [1.5f64, 2.0, 4.0] {
            let p = synthetic(1.0, a.powi(4), 64, |_| 1.0);
            let s = select_scales(&p, a).unwrap();
            assert_eq!(s.m, 2);
            assert!(s.trace_sum >= 1.0 && s.trace_sum >= s.guarantee);
            assert!(s.spacing_holds());
            assert_eq!(s.slack, 0.0);
        }
    }

    #[test]
    fn spike_and_zero_profiles() {
        let grid = geometric_grid(1.0, 100.0, 40);
        let spike = grid[23];
        let p = synthetic(1.0, 100.0, 40, |u| if u == spike { 3.0 } else { 0.0 });
        let s = select_scales(&p, 2.0).unwrap();
        assert!(s.scales.contains(&spike));
        assert!(s.trace_sum >= s.guarantee);
        let z = select_scales(&synthetic(1.0, 100.0, 40, |_| 0.0), 2.0).unwrap();
        assert_eq!(z.trace_sum, 0.0);
        assert!(z.spacing_holds());
    }

    #[test]
    fn narrow_range_is_rejected() {
        let p = synthetic(1.0, 3.9, 10, |_| 1.0);
        assert!(matches!(select_scales(&p, 2.0), Err(Error::RangeTooNarrow { .. })));
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        assert!(TraceProfile::new(vec![1.0, 1.0], vec![0.0; 2], vec![0.0; 2], 1.0, "").is_err());
        assert!(TraceProfile::new(vec![1.0, 2.0], vec![0.0, -1.0], vec![0.0; 2], 1.0, "").is_err());
    }

    #[test]
    fn point_mass_profile_is_zero() {
        let p = trace_profile(&FinSuppMeasure::dirac(LieGroupModel::SO3.identity()), 2.0, 0.01, 0.1, 8, 500, &RngStream::new(1, 0)).unwrap();
        assert!(p.values.iter().all(|&v| v == 0.0));
        assert!(trace_profile(&line(&[0.0]), 2.0, 0.01, 0.1, 4, 500, &RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn two_atom_gap_and_selection() {
        let d = 0.4;
        let rep = entropy_gap_to_trace_sum(
            &line(&[0.0, d]),
            3.0,
            d / 16.0,
            d / 2.0,
            2.0,
            20_000,
            &RngStream::new(2, 0),
            &GapOptions { grid_size: 16, ..GapOptions::default() },
        )
        .unwrap();
        assert!(rep.c > 4.0 * rep.c_std_error + rep.c_bias_budget, "{:?}", rep.c);
        assert!(rep.selection.trace_sum > 0.0);
        assert!(rep.selection.spacing_holds());
        assert_eq!(rep.n_dyadic, 2);
    }

    #[test]
    fn point_mass_fails_positive_requirement() {
        let opts = GapOptions { grid_size: 8, required_gap: Some(0.2), ..GapOptions::default() };
        let r = entropy_gap_to_trace_sum(&line(&[0.0]), 2.0, 0.01, 0.1, 2.0, 5000, &RngStream::new(3, 0), &opts);
        assert!(matches!(r, Err(Error::HypothesisFailed(_))), "{r:?}");
    }
}
