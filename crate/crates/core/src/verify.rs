//! Property suites run by the `verify` command.
//!
//! Each check reports whether it passed and a margin: the distance to the
//! failing side of its inequality, in the units of the checked quantity.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::conditioning::{conditional_entropy_given_smoothed, conditional_trace, trace_about, trace_product_check};
use crate::entropy::{entropy_at_scale, kl_divergence, smoothed_entropy};
use crate::error::{Error, Result};
use crate::lie::{AlgebraVector, GroupElement, LieGroupModel};
use crate::measure::{convolution_power, convolve, separation_rates, shannon_entropy, FinSuppMeasure, Weight};
use crate::oracle::{conditional_trace_1d, entropy_1d, group_kernel_entropy, moments_1d, mixture_breakpoints};
use crate::quadrature::integrate;
use crate::rng::RngStream;
use crate::scales::{geometric_grid, log_integral, select_scales, TraceProfile};
use crate::smoothing::{sphere_area, SmoothingKernel};
use crate::walks::{ldp_check, stopped_law, stopping_time_distribution, StoppingTimeSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub margin: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `margin ≥ 0`.
    fn from_margin(name: &str, margin: f64, detail: String) -> Self {
        Self { name: name.into(), passed: margin >= 0.0, margin, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub n_samples: usize,
    /// Number of standard errors allowed on Monte-Carlo comparisons.
    pub sigma: f64,
    /// `K` in `|residual| ≤ K ε³` for products of small elements.
    pub cubic_constant: f64,
    /// Largest acceptable `K` in `H ≤ (ℓ/2) log(2πe tr / ℓ) + K ε`.
    pub max_entropy_constant: f64,
    /// Kernel under test on the configured model, `(model, a, r)`.
    pub kernel: Option<(LieGroupModel, f64, f64)>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 0, n_samples: 20_000, sigma: 4.0, cubic_constant: 10.0, max_entropy_constant: 10.0, kernel: None }
    }
}

impl VerifyOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("cubic_constant", self.cubic_constant), ("max_entropy_constant", self.max_entropy_constant)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be a nonnegative number, got {v}")));
            }
        }
        if self.n_samples < 100 {
            return Err(Error::InvalidArgument(format!("n_samples {} is below 100", self.n_samples)));
        }
        if let Some((model, a, r)) = self.kernel {
            SmoothingKernel::new(model, a, r)?;
        }
        Ok(())
    }
}

pub fn sanov_pair() -> FinSuppMeasure {
    let m = LieGroupModel::SL2R;
    let q = |v: i64| BigRational::from_integer(BigInt::from(v));
    let g = |e: [i64; 4]| GroupElement::from_exact(m, e.iter().map(|&v| q(v)).collect()).expect("unimodular");
    FinSuppMeasure::uniform(m, vec![g([1, 2, 0, 1]), g([1, 0, 2, 1])]).expect("two atoms")
}

pub fn line_measure(points: &[f64]) -> FinSuppMeasure {
    let m = LieGroupModel::Abelian(1);
    let atoms = points.iter().map(|&p| GroupElement::from_f64(m, &[p]).expect("finite")).collect();
    let w = 1.0 / points.len() as f64;
    FinSuppMeasure::new(m, atoms, vec![Weight::Float(w); points.len()]).expect("valid weights")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxEntropyCase {
    pub name: String,
    pub dim: usize,
    pub entropy: f64,
    pub trace: f64,
    /// `(ℓ/2) log(2πe tr / ℓ)`.
    pub bound: f64,
}

impl MaxEntropyCase {
    pub fn excess(&self) -> f64 {
        self.entropy - self.bound
    }
}

fn gaussian_bound(dim: usize, trace: f64) -> f64 {
    let l = dim as f64;
    0.5 * l * (2.0 * std::f64::consts::PI * std::f64::consts::E * trace / l).ln()
}

fn density_case(name: &str, f: impl Fn(f64) -> f64, breaks: &[f64]) -> MaxEntropyCase {
    let (_, _, var) = moments_1d(&f, breaks);
    MaxEntropyCase { name: name.into(), dim: 1, entropy: entropy_1d(&f, breaks), trace: var, bound: gaussian_bound(1, var) }
}

/// Twelve compactly supported densities on the line and eight smoothed
/// identity atoms with support radius `epsilon` on the group models.
pub fn max_entropy_cases(epsilon: f64) -> Vec<MaxEntropyCase> {
    use std::f64::consts::PI;
    let mut out = vec![
        density_case("uniform", |_| 1.0, &[0.0, 1.0]),
        density_case("triangular", |x: f64| 1.0 - x.abs(), &[-1.0, 0.0, 1.0]),
        density_case("epanechnikov", |x: f64| 0.75 * (1.0 - x * x), &[-1.0, 1.0]),
        density_case("cosine", |x: f64| PI / 4.0 * (PI * x / 2.0).cos(), &[-1.0, 1.0]),
        density_case("beta(2,2)", |x: f64| 6.0 * x * (1.0 - x), &[0.0, 1.0]),
        density_case("beta(2,5)", |x: f64| 30.0 * x * (1.0 - x).powi(4), &[0.0, 1.0]),
        density_case("truncated exponential", |x: f64| (-x).exp() / (1.0 - (-3f64).exp()), &[0.0, 3.0]),
        density_case("semicircle", |x: f64| 2.0 / PI * (1.0 - x * x).max(0.0).sqrt(), &[-1.0, 0.0, 1.0]),
    ];
    for a in [1.0, 2.0, 3.0] {
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), a, 1.0).expect("kernel");
        out.push(density_case(&format!("truncated gaussian a={a}"), |x: f64| k.radial_density(x.abs()), &[-a, 0.0, a]));
    }
    let k = SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 0.1).expect("kernel");
    let two_bump = |x: f64| 0.3 * k.radial_density(x.abs()) + 0.7 * k.radial_density((x - 0.25).abs());
    out.push(density_case("two-bump mixture", two_bump, &mixture_breakpoints(&[0.0, 0.25], 2.0, 0.1)));
    let atoms = [
        (LieGroupModel::Abelian(1), 2.0),
        (LieGroupModel::Abelian(2), 2.0),
        (LieGroupModel::Abelian(3), 2.0),
        (LieGroupModel::SO3, 2.0),
        (LieGroupModel::SO3, 3.0),
        (LieGroupModel::SL2R, 2.0),
        (LieGroupModel::SL2R, 3.0),
        (LieGroupModel::Heisenberg3, 2.0),
    ];
    for (model, a) in atoms {
        let k = SmoothingKernel::new(model, a, epsilon / a).expect("kernel inside the chart");
        let trace = k.kernel_trace();
        out.push(MaxEntropyCase {
            name: format!("smoothed identity on {model}, a={a}"),
            dim: model.dim(),
            entropy: group_kernel_entropy(&k),
            trace,
            bound: gaussian_bound(model.dim(), trace),
        });
    }
    out
}

/// Smallest `K ≥ 0` with `H ≤ bound + K ε` over the cases.
pub fn fitted_max_entropy_constant(cases: &[MaxEntropyCase], epsilon: f64) -> f64 {
    cases.iter().map(|c| c.excess() / epsilon).fold(0.0, f64::max)
}

fn kernel_checks(out: &mut Vec<Check>) {
    let mut worst_norm = 0.0f64;
    let mut worst_scaling = 0.0f64;
    let mut worst_trace = f64::INFINITY;
    let mut worst_maxent = f64::INFINITY;
    for l in 1..=3 {
        let model = LieGroupModel::Abelian(l);
        for a in [2.0, 3.0, 4.0, 6.0] {
            let unit = SmoothingKernel::new(model, a, 1.0).expect("kernel");
            for r in [0.01, 1.0] {
                let k = unit.rescaled(r).expect("kernel");
                let mass = integrate(|t| sphere_area(l) * t.powi(l as i32 - 1) * k.radial_density(t), 0.0, a * r, 1e-15, 1e-13);
                worst_norm = worst_norm.max((mass.value - 1.0).abs());
                let h = k.kernel_entropy().1;
                worst_scaling = worst_scaling.max((h - unit.kernel_entropy().1 - l as f64 * r.ln()).abs());
                let tr = k.kernel_trace();
                worst_trace = worst_trace.min(tr.min(l as f64 * r * r - tr));
                worst_maxent = worst_maxent.min(gaussian_bound(l, tr) - h);
            }
        }
    }
    out.push(Check::from_margin("kernel.normalization", 1e-8 - worst_norm, format!("max |mass - 1| = {worst_norm:.3e}")));
    out.push(Check::from_margin("kernel.entropy_scaling", 1e-8 - worst_scaling, format!("max deviation from l*log r = {worst_scaling:.3e}")));
    out.push(Check {
        name: "kernel.trace_range".into(),
        passed: worst_trace > 0.0,
        margin: worst_trace,
        detail: "0 < tr <= l r^2".into(),
    });
    out.push(Check::from_margin("kernel.gaussian_maximality", worst_maxent, "H(beta) <= (l/2) log(2 pi e tr / l)".into()));
}

fn lie_checks(out: &mut Vec<Check>, rng: &mut RngStream) {
    let mut worst_roundtrip = 0.0f64;
    let mut worst_invariance = 0.0f64;
    for model in [LieGroupModel::SL2R, LieGroupModel::SO3, LieGroupModel::Heisenberg3] {
        let draw = |rng: &mut RngStream, radius: f64| {
            let c: Vec<f64> = (0..3).map(|_| (2.0 * rng.uniform() - 1.0) * radius / 3f64.sqrt()).collect();
            AlgebraVector::new(model, &c).expect("three coordinates")
        };
        for _ in 0..300 {
            let x = draw(rng, 0.1);
            let back = x.exp().log().expect("inside the chart");
            let err = x.coords().iter().zip(back.coords()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            worst_roundtrip = worst_roundtrip.max(err);
            let (g, h, k) = (draw(rng, 0.1).exp(), draw(rng, 0.1).exp(), draw(rng, 0.3).exp());
            let d1 = g.distance(&h).expect("same model").lower_bound();
            let d2 = k.mul_unchecked(&g).distance(&k.mul_unchecked(&h)).expect("same model").lower_bound();
            worst_invariance = worst_invariance.max((d1 - d2).abs());
        }
    }
    out.push(Check::from_margin("lie.exp_log_roundtrip", 1e-9 - worst_roundtrip, format!("max error {worst_roundtrip:.3e}")));
    out.push(Check::from_margin("lie.left_invariance", 1e-9 - worst_invariance, format!("max error {worst_invariance:.3e}")));
}

fn measure_checks(out: &mut Vec<Check>, rng: &mut RngStream) -> Result<()> {
    let mu = sanov_pair();
    let mut worst = 0.0f64;
    let mut power = mu.clone();
    for k in 1..=8 {
        if k > 1 {
            power = convolve(&power, &mu)?;
        }
        worst = worst.max((shannon_entropy(&power) - k as f64 * 2f64.ln()).abs());
    }
    out.push(Check::from_margin("measure.free_walk_entropy", 1e-12 - worst, format!("max |H(mu^k) - k log 2| = {worst:.3e}")));

    let mut worst_sub = f64::INFINITY;
    for _ in 0..20 {
        let draw = |rng: &mut RngStream| {
            let n = 2 + (rng.uniform() * 4.0) as usize;
            let pts: Vec<GroupElement> = (0..n)
                .map(|_| GroupElement::from_exact(LieGroupModel::Abelian(1), vec![BigRational::from_integer(BigInt::from((rng.uniform() * 6.0) as i64))]).expect("integer"))
                .collect();
            FinSuppMeasure::uniform(LieGroupModel::Abelian(1), pts)
        };
        let (a, b) = (draw(rng)?, draw(rng)?);
        worst_sub = worst_sub.min(shannon_entropy(&a) + shannon_entropy(&b) - shannon_entropy(&convolve(&a, &b)?));
    }
    out.push(Check::from_margin("measure.entropy_subadditivity", worst_sub + 1e-12, "H(mu*nu) <= H(mu) + H(nu)".into()));

    let reps = separation_rates(&mu, 6)?;
    let monotone = reps.windows(2).all(|w| w[1].m_n.lower_bound() <= w[0].m_n.lower_bound());
    out.push(Check {
        name: "measure.separation_monotone".into(),
        passed: monotone,
        margin: if monotone { 0.0 } else { -1.0 },
        detail: format!("M_1..M_6 = {:?}", reps.iter().map(|r| r.m_n.lower_bound()).collect::<Vec<_>>()),
    });
    Ok(())
}

fn entropy_checks(out: &mut Vec<Check>, opts: &VerifyOptions, rng: &RngStream) -> Result<()> {
    let n = opts.n_samples;
    let s = opts.sigma;
    let line = LieGroupModel::Abelian(1);
    let k = SmoothingKernel::new(line, 3.0, 0.5)?;
    let est = smoothed_entropy(&FinSuppMeasure::dirac(line.identity()), &k, n, &rng.derive(0))?;
    let margin = s * est.std_error + est.bias_budget - (est.value - k.kernel_entropy().1).abs();
    out.push(Check::from_margin("entropy.point_mass", margin, format!("estimate {:.6} vs quadrature {:.6}", est.value, k.kernel_entropy().1)));

    let q4 = convolution_power(&sanov_pair(), 4)?;
    let ks = SmoothingKernel::new(LieGroupModel::SL2R, 2.0, 0.01)?;
    let est = entropy_at_scale(&q4, &ks, n, &rng.derive(1))?;
    let margin = s * est.std_error + est.bias_budget - (est.value - 4.0 * 2f64.ln()).abs();
    out.push(Check::from_margin("entropy.exact_split", margin, format!("H_a(q_4; 0.01) = {:.6}", est.value)));

    // D(ν‖Lebesgue) for ν = β_{2,1} is its entropy, which is at most log 4
    let kb = SmoothingKernel::new(line, 2.0, 1.0)?;
    let est = kl_divergence(|x: &f64| kb.radial_density(x.abs()), |_: &f64| 1.0, |r| kb.sample_kernel(r).coords()[0], n, &rng.derive(2))?;
    let margin = 4f64.ln() + s * est.std_error - est.value;
    out.push(Check::from_margin("entropy.kl_support_bound", margin, format!("D = {:.6}", est.value)));

    if let Some((model, a, r)) = opts.kernel {
        let kc = SmoothingKernel::new(model, a, r)?;
        let est = smoothed_entropy(&FinSuppMeasure::dirac(model.identity()), &kc, n, &rng.derive(3))?;
        let reference = group_kernel_entropy(&kc);
        let margin = s * est.std_error + est.bias_budget - (est.value - reference).abs();
        out.push(Check::from_margin(
            "entropy.configured_kernel",
            margin,
            format!("{model}, a={a}, r={r}: estimate {:.6} vs quadrature {reference:.6}", est.value),
        ));
    }
    Ok(())
}

fn conditioning_checks(out: &mut Vec<Check>, opts: &VerifyOptions, rng: &RngStream) -> Result<()> {
    let n = opts.n_samples;
    let s = opts.sigma;
    let line = LieGroupModel::Abelian(1);
    let (a, r2) = (3.0, 0.1);
    let mut worst_oracle = f64::INFINITY;
    let mut worst_total = f64::INFINITY;
    let mut worst_growth = f64::INFINITY;
    for (i, d) in [0.1, 0.2, 0.3].into_iter().enumerate() {
        let mu = line_measure(&[0.0, d]);
        let k2 = SmoothingKernel::new(line, a, r2)?;
        let est = conditional_trace(&mu, &k2, n, &rng.derive(10 + i as u64))?;
        let oracle = conditional_trace_1d(&[0.0, d], &[0.5, 0.5], a, r2);
        worst_oracle = worst_oracle.min(s * est.std_error - (est.value - oracle).abs());
        worst_total = worst_total.min(trace_about(&GroupElement::from_f64(line, &[d / 2.0])?, &mu)? - est.value);
        let k1 = SmoothingKernel::new(line, a, r2 / 2.0)?;
        let cond = conditional_entropy_given_smoothed(&mu, &k1, &k2, n / 4, &rng.derive(20 + i as u64))?;
        let gap = crate::oracle::gap_1d(&[0.0, d], &[0.5, 0.5], a, r2 / 2.0, r2);
        worst_growth = worst_growth.min(cond.value - gap - k1.kernel_entropy().1 + s * cond.std_error + cond.bias_budget);
    }
    out.push(Check::from_margin("conditioning.trace_oracle", worst_oracle, "conditional trace vs 1-D quadrature".into()));
    out.push(Check::from_margin("conditioning.total_variance", worst_total + 1e-15, "E tr(g|y) <= tr(g)".into()));
    out.push(Check::from_margin("conditioning.entropy_growth", worst_growth, "H(gs1|gs2) >= H_a(g;r1|r2) + H(s1)".into()));

    let m = LieGroupModel::SL2R;
    let product = |eps: f64| -> Result<_> {
        let x = AlgebraVector::new(m, &[eps, 0.0, 0.0])?.exp();
        let y = AlgebraVector::new(m, &[0.0, 0.0, eps])?.exp();
        let mu = FinSuppMeasure::new(m, vec![x, y], vec![Weight::Float(0.5); 2])?;
        trace_product_check(&mu, &SmoothingKernel::new(m, 2.0, eps / 2.0)?, n.min(8192), &rng.derive(30), opts.cubic_constant)
    };
    let (big, small) = (product(0.02)?, product(0.01)?);
    let margin = (big.bound - big.residual.abs()).min(small.bound - small.residual.abs());
    out.push(Check::from_margin("conditioning.product_cubic", margin, format!("residuals {:.3e}, {:.3e}", big.residual, small.residual)));
    out.push(Check::from_margin(
        "conditioning.product_decay",
        big.residual.abs() - 4.0 * small.residual.abs(),
        format!("ratio {:.2}", big.residual.abs() / small.residual.abs()),
    ));
    Ok(())
}

fn scale_checks(out: &mut Vec<Check>) -> Result<()> {
    let mut worst = f64::INFINITY;
    let mut spacing = true;
    for a_factor in [1.5f64, 2.0, 4.0] {
        let grid = geometric_grid(1.0, a_factor.powi(4) * 1.5, 64);
        let spike = grid[37];
        let shapes: [&dyn Fn(f64) -> f64; 3] = [
            &|_| 1.0,
            &|u| if u == spike { 2.0 } else { 0.0 },
            &|u: f64| (-(u.ln() - 0.5).powi(2) * 8.0).exp() + 0.5 * (-(u.ln() - 1.8).powi(2) * 8.0).exp(),
        ];
        for f in shapes {
            let values: Vec<f64> = grid.iter().map(|&u| f(u)).collect();
            let p = TraceProfile::new(grid.clone(), values, vec![0.0; grid.len()], 1.0, "synthetic")?;
            let sel = select_scales(&p, a_factor)?;
            worst = worst.min(sel.trace_sum - log_integral(&p) / (4.0 * a_factor.ln()));
            spacing &= sel.spacing_holds();
        }
    }
    out.push(Check::from_margin("scales.selection_guarantee", worst, "trace_sum >= log_integral / (4 log A)".into()));
    out.push(Check { name: "scales.spacing".into(), passed: spacing, margin: 0.0, detail: "s_{i+1} >= A s_i".into() });
    Ok(())
}

fn walk_checks(out: &mut Vec<Check>) -> Result<()> {
    let mu = sanov_pair();
    let q = |v: i64| BigRational::from_integer(BigInt::from(v));
    let spec = StoppingTimeSpec::renewal(vec![q(1), q(2)], vec![q(5)], 64);
    let law = stopped_law(&mu, &spec, 0)?;
    let exact_mass = law.law.total_mass() == Weight::Exact(BigRational::from_integer(BigInt::from(1)));
    let times_match = law.time_distribution == stopping_time_distribution(&mu, &spec, 0)?;
    out.push(Check {
        name: "walks.mass_conservation".into(),
        passed: exact_mass && times_match,
        margin: 0.0,
        detail: format!("{} atoms, E[eta] = {:.6}", law.law.len(), law.expected_time_f64()),
    });
    let thresholds: Vec<BigRational> = (8..=32).step_by(4).map(q).collect();
    let idx: Vec<usize> = (0..thresholds.len()).collect();
    let rep = ldp_check(&mu, &StoppingTimeSpec::renewal(vec![q(1), q(2)], thresholds, 64), 0.2, &idx)?;
    out.push(Check {
        name: "walks.ldp".into(),
        passed: rep.passes,
        margin: rep.delta_hat.unwrap_or(0.0),
        detail: format!("delta_hat = {:?}", rep.delta_hat),
    });
    Ok(())
}

/// Runs every suite. Check failures are reported, not returned as errors.
pub fn run_all(opts: &VerifyOptions) -> Result<VerifyReport> {
    opts.validate()?;
    let rng = RngStream::new(opts.seed, 0);
    let mut checks = Vec::new();
    kernel_checks(&mut checks);
    lie_checks(&mut checks, &mut rng.derive(100));
    measure_checks(&mut checks, &mut rng.derive(101))?;
    entropy_checks(&mut checks, opts, &rng.derive(102))?;
    conditioning_checks(&mut checks, opts, &rng.derive(103))?;
    scale_checks(&mut checks)?;
    walk_checks(&mut checks)?;
    let epsilon = 0.01;
    let cases = max_entropy_cases(epsilon);
    let k = fitted_max_entropy_constant(&cases, epsilon);
    let worst = cases.iter().map(MaxEntropyCase::excess).fold(f64::NEG_INFINITY, f64::max);
    checks.push(Check::from_margin(
        "entropy.max_entropy_family",
        opts.max_entropy_constant - k,
        format!("{} cases, largest excess {worst:.3e}, fitted K = {k:.3e}", cases.len()),
    ));
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, all_passed })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let rep = run_all(&VerifyOptions { n_samples: 5000, ..VerifyOptions::default() }).unwrap();
        for c in &rep.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(rep.all_passed);
    }

    #[test]
    fn negative_tolerance_is_rejected() {
        let opts = VerifyOptions { sigma: -1.0, ..VerifyOptions::default() };
        assert!(matches!(run_all(&opts), Err(Error::InvalidArgument(_))));
        let opts = VerifyOptions { kernel: Some((LieGroupModel::SL2R, 2.0, 0.3)), ..VerifyOptions::default() };
        assert!(matches!(run_all(&opts), Err(Error::InvalidKernel(_))));
    }

    #[test]
    fn max_entropy_family_has_twenty_cases() {
        let cases = max_entropy_cases(0.01);
        assert_eq!(cases.len(), 20);
        assert!(fitted_max_entropy_constant(&cases, 0.01) <= 10.0);
    }
}
