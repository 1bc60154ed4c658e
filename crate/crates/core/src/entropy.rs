//! Monte-Carlo entropy and KL estimators for smoothed discrete measures.
//!
//! The density of `g·s_{a,r}` for `g ~ μ` is the finite mixture
//! `Σ p_i ρ(g_i⁻¹ x)`, with `ρ` the Haar density of `s_{a,r}`, so entropies are
//! estimated by resubstitution: draw `x` from the mixture and average
//! `-log density(x)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{raw_inv, raw_mul, GroupElement, MAX_DIM};
use crate::measure::FinSuppMeasure;
use crate::rng::{mc_moments, Moments, RngStream};
use crate::smoothing::SmoothingKernel;

/// Constant multiplying `a·r` in the bias budget charged to the Haar
/// correction of non-abelian kernel entropies.
pub const DEFAULT_CHART_BIAS_CONSTANT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub bias_budget: f64,
}

impl EntropyEstimate {
    pub(crate) fn from_moments(m: &Moments, bias_budget: f64) -> Self {
        Self {
            value: m.mean,
            std_error: m.std_error(),
            n_samples: m.n as usize,
            bias_budget,
        }
    }

    /// `4·std_error + bias_budget`, the acceptance tolerance.
    pub fn tolerance(&self) -> f64 {
        4.0 * self.std_error + self.bias_budget
    }

    /// `self - other` for independent estimates.
    pub fn minus(&self, other: &EntropyEstimate) -> EntropyEstimate {
        EntropyEstimate {
            value: self.value - other.value,
            std_error: self.std_error.hypot(other.std_error),
            n_samples: self.n_samples.min(other.n_samples),
            bias_budget: self.bias_budget + other.bias_budget,
        }
    }
}

/// Atoms of a measure sorted by their first matrix entry, with cached
/// inverses, for neighbour-pruned mixture evaluation.
///
/// An atom `g` can only contribute at `x` when `|x_0 - g_0| ≤ |g|_F (e^{c·ar} - 1)`.
#[derive(Debug, Clone)]
pub struct MixtureIndex {
    kernel: SmoothingKernel,
    keys: Vec<f64>,
    atom_of: Vec<usize>,
    inverses: Vec<[f64; MAX_DIM]>,
    weights: Vec<f64>,
    weight_of: Vec<f64>,
    window: f64,
}

impl MixtureIndex {
    pub fn new(mu: &FinSuppMeasure, kernel: &SmoothingKernel) -> Result<Self> {
        let model = mu.model();
        if kernel.model() != model {
            return Err(Error::ModelMismatch { left: model, right: kernel.model() });
        }
        let mut order: Vec<usize> = (0..mu.len()).collect();
        order.sort_by(|&a, &b| mu.atoms()[a].entries()[0].total_cmp(&mu.atoms()[b].entries()[0]));
        let ar = kernel.support_radius();
        let window = if model.is_abelian() {
            ar * (1.0 + 1e-9) + 1e-15
        } else {
            let max_norm = mu.atoms().iter().map(|g| g.frobenius_norm()).fold(0.0, f64::max);
            max_norm * (model.frobenius_scale() * ar).exp_m1() * (1.0 + 1e-9) + 1e-15
        };
        Ok(Self {
            kernel: kernel.clone(),
            keys: order.iter().map(|&i| mu.atoms()[i].entries()[0]).collect(),
            inverses: order.iter().map(|&i| raw_inv(model, mu.atoms()[i].raw())).collect(),
            weights: order.iter().map(|&i| mu.weights()[i]).collect(),
            atom_of: order,
            weight_of: mu.weights().to_vec(),
            window,
        })
    }

    pub fn kernel(&self) -> &SmoothingKernel {
        &self.kernel
    }

    fn candidates(&self, x: &[f64; MAX_DIM]) -> std::ops::Range<usize> {
        let lo = self.keys.partition_point(|&k| k < x[0] - self.window);
        let hi = self.keys.partition_point(|&k| k <= x[0] + self.window);
        lo..hi
    }

    /// `(atom index, p_i ρ(g_i⁻¹ x))` for every atom with a positive contribution.
    pub(crate) fn contributions(&self, x: &[f64; MAX_DIM]) -> Vec<(usize, f64)> {
        let model = self.kernel.model();
        self.candidates(x)
            .filter_map(|s| {
                let d = self.kernel.density_of_relative(&raw_mul(model, &self.inverses[s], x));
                (d > 0.0).then(|| (self.atom_of[s], self.weights[s] * d))
            })
            .collect()
    }

    /// As [`Self::contributions`] for `x = g_source · s`, with the source
    /// atom's term given as `source_density = ρ(s)`. Recomputing `g⁻¹ x` in
    /// floating point loses about `|g|² ε` and swamps kernels of tiny radius.
    pub(crate) fn contributions_given_source(&self, x: &[f64; MAX_DIM], source: usize, source_density: f64) -> Vec<(usize, f64)> {
        let model = self.kernel.model();
        let mut out: Vec<(usize, f64)> = self
            .candidates(x)
            .filter(|&s| self.atom_of[s] != source)
            .filter_map(|s| {
                let d = self.kernel.density_of_relative(&raw_mul(model, &self.inverses[s], x));
                (d > 0.0).then(|| (self.atom_of[s], self.weights[s] * d))
            })
            .collect();
        if source_density > 0.0 {
            out.push((source, self.weight_of[source] * source_density));
        }
        out
    }

    pub(crate) fn density_given_source(&self, x: &[f64; MAX_DIM], source: usize, source_density: f64) -> f64 {
        let model = self.kernel.model();
        let others: f64 = self
            .candidates(x)
            .filter(|&s| self.atom_of[s] != source)
            .map(|s| self.weights[s] * self.kernel.density_of_relative(&raw_mul(model, &self.inverses[s], x)))
            .sum();
        others + self.weight_of[source] * source_density
    }

    pub(crate) fn density_raw(&self, x: &[f64; MAX_DIM]) -> f64 {
        let model = self.kernel.model();
        self.candidates(x)
            .map(|s| self.weights[s] * self.kernel.density_of_relative(&raw_mul(model, &self.inverses[s], x)))
            .sum()
    }

    pub fn density(&self, x: &GroupElement) -> f64 {
        self.density_raw(x.raw())
    }
}

/// `Σ_i p_i · group_density(k, g_i, x)`.
pub fn mixture_density(mu: &FinSuppMeasure, k: &SmoothingKernel, x: &GroupElement) -> Result<f64> {
    Ok(MixtureIndex::new(mu, k)?.density(x))
}

fn degenerate(x: &[f64; MAX_DIM]) -> Error {
    Error::DegenerateDensity(format!("mixture density vanished at {:?}", &x[..4]))
}

/// Resubstitution estimate of `H(g·s_{a,r})` for `g ~ μ`.
pub fn smoothed_entropy(mu: &FinSuppMeasure, k: &SmoothingKernel, n_samples: usize, rng: &RngStream) -> Result<EntropyEstimate> {
    let index = MixtureIndex::new(mu, k)?;
    let cumulative = mu.cumulative_weights();
    let model = mu.model();
    let m = mc_moments(n_samples, rng, |s| {
        let i = s.categorical(&cumulative);
        let y = k.sample_kernel(s);
        let x = raw_mul(model, mu.atoms()[i].raw(), y.exp().raw());
        let d = index.density_given_source(&x, i, k.density_at_log(&y));
        if !(d > 0.0) {
            return Err(degenerate(&x));
        }
        Ok(-d.ln())
    })?;
    Ok(EntropyEstimate::from_moments(&m, k.normalizing_error()))
}

/// `H_a(g; r) = H(g·s_{a,r}) - H(s_{a,r})` with the default chart bias constant.
pub fn entropy_at_scale(mu: &FinSuppMeasure, k: &SmoothingKernel, n_samples: usize, rng: &RngStream) -> Result<EntropyEstimate> {
    entropy_at_scale_with(mu, k, n_samples, rng, DEFAULT_CHART_BIAS_CONSTANT)
}

/// `H_a(g; r)`.
///
/// Abelian models subtract the quadrature value of `H(s_{a,r})`. Other
/// models evaluate `-log ρ(s)` on the same kernel draw that produced each
/// mixture sample, so both entropies come from one paired average, and
/// `chart_bias_constant · a·r` is added to the bias budget.
pub fn entropy_at_scale_with(
    mu: &FinSuppMeasure,
    k: &SmoothingKernel,
    n_samples: usize,
    rng: &RngStream,
    chart_bias_constant: f64,
) -> Result<EntropyEstimate> {
    let model = mu.model();
    if model.is_abelian() {
        let est = smoothed_entropy(mu, k, n_samples, rng)?;
        return Ok(EntropyEstimate {
            value: est.value - k.kernel_entropy().1,
            bias_budget: est.bias_budget + k.normalizing_error(),
            ..est
        });
    }
    let index = MixtureIndex::new(mu, k)?;
    let cumulative = mu.cumulative_weights();
    let m = mc_moments(n_samples, rng, |s| {
        let i = s.categorical(&cumulative);
        let y = k.sample_kernel(s);
        let x = raw_mul(model, mu.atoms()[i].raw(), y.exp().raw());
        let d0 = k.density_at_log(&y);
        let d = index.density_given_source(&x, i, d0);
        if !(d > 0.0) || !(d0 > 0.0) {
            return Err(degenerate(&x));
        }
        Ok(d0.ln() - d.ln())
    })?;
    let bias = 2.0 * k.normalizing_error() + chart_bias_constant * k.support_radius();
    Ok(EntropyEstimate::from_moments(&m, bias))
}

/// `H_a(g; r1 | r2) = H_a(g; r1) - H_a(g; r2)` from independent streams.
pub fn entropy_between_scales(
    mu: &FinSuppMeasure,
    a: f64,
    r1: f64,
    r2: f64,
    n_samples: usize,
    rng: &RngStream,
) -> Result<EntropyEstimate> {
    entropy_between_scales_with(mu, a, r1, r2, n_samples, rng, DEFAULT_CHART_BIAS_CONSTANT)
}

pub fn entropy_between_scales_with(
    mu: &FinSuppMeasure,
    a: f64,
    r1: f64,
    r2: f64,
    n_samples: usize,
    rng: &RngStream,
    chart_bias_constant: f64,
) -> Result<EntropyEstimate> {
    if !(r1 < r2) {
        return Err(Error::InvalidArgument(format!("need r1 < r2, got {r1} and {r2}")));
    }
    let k1 = SmoothingKernel::new(mu.model(), a, r1)?;
    let k2 = SmoothingKernel::new(mu.model(), a, r2)?;
    let e1 = entropy_at_scale_with(mu, &k1, n_samples, &rng.derive(1), chart_bias_constant)?;
    let e2 = entropy_at_scale_with(mu, &k2, n_samples, &rng.derive(2), chart_bias_constant)?;
    Ok(e1.minus(&e2))
}

/// KL divergence with the sign convention `D(ν‖μ) = -∫ log(dν/dμ) dν`,
/// estimated as the mean of `log μ(x) - log ν(x)` over `x ~ ν`.
///
/// With this sign `D(ν‖Haar)` is the differential entropy of `ν`.
pub fn kl_divergence<T, FN, FM, S>(
    nu_density: FN,
    mu_density: FM,
    sampler_nu: S,
    n_samples: usize,
    rng: &RngStream,
) -> Result<EntropyEstimate>
where
    FN: Fn(&T) -> f64 + Sync,
    FM: Fn(&T) -> f64 + Sync,
    S: Fn(&mut RngStream) -> T + Sync,
{
    let m = mc_moments(n_samples, rng, |s| {
        let x = sampler_nu(s);
        let (pn, pm) = (nu_density(&x), mu_density(&x));
        if !(pm > 0.0) {
            return Err(Error::DegenerateDensity("reference density vanished at a sample".into()));
        }
        if !(pn > 0.0) {
            return Err(Error::DegenerateDensity("sampled point has zero density under its own law".into()));
        }
        Ok(pm.ln() - pn.ln())
    })?;
    Ok(EntropyEstimate::from_moments(&m, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{AlgebraVector, LieGroupModel};
    use crate::measure::{convolution_power, shannon_entropy, Weight};
    use num_bigint::BigInt;
    use num_rational::BigRational;

    fn line(points: &[f64]) -> FinSuppMeasure {
        let m = LieGroupModel::Abelian(1);
        let atoms = points.iter().map(|&p| GroupElement::from_f64(m, &[p]).unwrap()).collect();
        let w = 1.0 / points.len() as f64;
        FinSuppMeasure::new(m, atoms, vec![Weight::Float(w); points.len()]).unwrap()
    }

    fn sanov() -> FinSuppMeasure {
        let m = LieGroupModel::SL2R;
        let q = |v: i64| BigRational::from_integer(BigInt::from(v));
        let g = |e: [i64; 4]| GroupElement::from_exact(m, e.iter().map(|&v| q(v)).collect()).unwrap();
        FinSuppMeasure::uniform(m, vec![g([1, 2, 0, 1]), g([1, 0, 2, 1])]).unwrap()
    }

    #[test]
    fn mixture_density_examples() {
        let mu = line(&[0.0, 1.0]);
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 0.1).unwrap();
        let x = GroupElement::from_f64(LieGroupModel::Abelian(1), &[0.05]).unwrap();
        let expected = 0.5 * k.algebra_density(&AlgebraVector::new(LieGroupModel::Abelian(1), &[0.05]).unwrap());
        assert!((mixture_density(&mu, &k, &x).unwrap() - expected).abs() < 1e-14);
        let single = line(&[0.3]);
        let c = single.atoms()[0].clone();
        assert_eq!(mixture_density(&single, &k, &x).unwrap(), k.group_density(&c, &x));
    }

    #[test]
    fn pruned_density_matches_full_sum() {
        let mu = convolution_power(&sanov(), 5).unwrap();
        let k = SmoothingKernel::new(LieGroupModel::SL2R, 2.0, 0.1).unwrap();
        let mut rng = RngStream::new(3, 0);
        for i in 0..mu.len() {
            let x = mu.atoms()[i].mul_unchecked(&k.sample_group(&mut rng));
            let full: f64 = mu.atoms().iter().zip(mu.weights()).map(|(g, p)| p * k.group_density(g, &x)).sum();
            assert_eq!(mixture_density(&mu, &k, &x).unwrap(), full);
        }
    }

    #[test]
    fn point_mass_entropy_matches_quadrature() {
        let m = LieGroupModel::Abelian(1);
        let k = SmoothingKernel::new(m, 3.0, 0.5).unwrap();
        let est = smoothed_entropy(&FinSuppMeasure::dirac(m.identity()), &k, 100_000, &RngStream::new(1, 0)).unwrap();
        assert!((est.value - k.kernel_entropy().1).abs() <= est.tolerance());
        let at_scale = entropy_at_scale(&FinSuppMeasure::dirac(m.identity()), &k, 100_000, &RngStream::new(1, 0)).unwrap();
        assert!(at_scale.value.abs() <= at_scale.tolerance());
    }

    #[test]
    fn separated_atoms_split_entropy() {
        let mu = line(&[0.0, 1.0, 2.5]);
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 0.1).unwrap();
        let est = smoothed_entropy(&mu, &k, 100_000, &RngStream::new(2, 0)).unwrap();
        let expected = shannon_entropy(&mu) + k.kernel_entropy().1;
        assert!((est.value - expected).abs() <= est.tolerance());
    }

    #[test]
    fn right_translation_invariance() {
        let k = SmoothingKernel::new(LieGroupModel::SO3, 2.0, 0.05).unwrap();
        let m = LieGroupModel::SO3;
        let a = AlgebraVector::new(m, &[0.1, 0.0, 0.0]).unwrap().exp();
        let b = AlgebraVector::new(m, &[0.0, 0.12, 0.03]).unwrap().exp();
        let t = AlgebraVector::new(m, &[0.4, -0.2, 0.9]).unwrap().exp();
        let mu = FinSuppMeasure::new(m, vec![a.clone(), b.clone()], vec![Weight::Float(0.5); 2]).unwrap();
        let shifted = FinSuppMeasure::new(
            m,
            vec![a.multiply(&t).unwrap(), b.multiply(&t).unwrap()],
            vec![Weight::Float(0.5); 2],
        )
        .unwrap();
        let e1 = smoothed_entropy(&mu, &k, 50_000, &RngStream::new(4, 0)).unwrap();
        let e2 = smoothed_entropy(&shifted, &k, 50_000, &RngStream::new(4, 1)).unwrap();
        assert!((e1.value - e2.value).abs() <= 4.0 * e1.std_error.hypot(e2.std_error) + e1.bias_budget + e2.bias_budget);
    }

    #[test]
    fn sanov_exact_split() {
        let q = convolution_power(&sanov(), 4).unwrap();
        let k = SmoothingKernel::new(LieGroupModel::SL2R, 2.0, 0.01).unwrap();
        let est = entropy_at_scale(&q, &k, 20_000, &RngStream::new(5, 0)).unwrap();
        assert!((est.value - 4.0 * 2f64.ln()).abs() <= est.tolerance());
        let e = entropy_at_scale(&FinSuppMeasure::dirac(LieGroupModel::SL2R.identity()), &k, 1000, &RngStream::new(5, 1)).unwrap();
        assert_eq!(e.value, 0.0);
    }

    #[test]
    fn between_scales_telescopes() {
        let mu = line(&[0.0, 0.3]);
        let rng = RngStream::new(6, 0);
        let a = 2.0;
        let e12 = entropy_between_scales(&mu, a, 0.05, 0.1, 50_000, &rng.derive(0)).unwrap();
        let e23 = entropy_between_scales(&mu, a, 0.1, 0.2, 50_000, &rng.derive(1)).unwrap();
        let e13 = entropy_between_scales(&mu, a, 0.05, 0.2, 50_000, &rng.derive(2)).unwrap();
        let combined = (e12.std_error.powi(2) + e23.std_error.powi(2) + e13.std_error.powi(2)).sqrt();
        assert!((e12.value + e23.value - e13.value).abs() <= 4.0 * combined + e12.bias_budget + e23.bias_budget + e13.bias_budget);
        assert!(entropy_between_scales(&mu, a, 0.2, 0.1, 10, &rng).is_err());
    }

    #[test]
    fn kl_of_identical_laws_is_zero() {
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 1.0).unwrap();
        let dens = |x: &f64| k.radial_density(x.abs());
        let est = kl_divergence(dens, dens, |s| k.sample_kernel(s).coords()[0], 10_000, &RngStream::new(7, 0)).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn kl_against_uniform_is_bounded_by_log_volume() {
        // ν = β_{2,1} on [-2, 2]; D(ν‖Lebesgue) = H(ν) ≤ log 4
        let k = SmoothingKernel::new(LieGroupModel::Abelian(1), 2.0, 1.0).unwrap();
        let est = kl_divergence(
            |x: &f64| k.radial_density(x.abs()),
            |_: &f64| 1.0,
            |s| k.sample_kernel(s).coords()[0],
            50_000,
            &RngStream::new(8, 0),
        )
        .unwrap();
        assert!(est.value <= 4f64.ln() + est.tolerance());
        assert!((est.value - k.kernel_entropy().1).abs() <= est.tolerance());
    }

    #[test]
    fn kl_reports_degenerate_reference() {
        let r = kl_divergence(|_: &f64| 1.0, |_: &f64| 0.0, |s| s.uniform(), 10, &RngStream::new(9, 0));
        assert!(matches!(r, Err(Error::DegenerateDensity(_))));
    }
}
