//! Truncated Gaussian smoothing kernels.
//!
//! `β_{a,r}` has density `f_{a,r}(x) = C_{a,r} e^{-|x|²/2r²}` on the ball
//! `|x| ≤ ar` of the Lie algebra and `s_{a,r} = exp(β_{a,r})` is its image in
//! the group. All radial integrals are reduced to `t = |x|/r ∈ [0, a]`, so
//! `C_{a,r} = r^{-ℓ} C_{a,1}` holds by construction.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lie::{raw_inv, raw_jacobian, raw_log, raw_mul, AlgebraVector, GroupElement, LieGroupModel, MAX_DIM};
use crate::quadrature::integrate;
use crate::rng::RngStream;

const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-13;

/// `Γ(l/2)` for small positive integers `l`.
pub(crate) fn gamma_half(l: usize) -> f64 {
    if l % 2 == 0 {
        (1..l / 2).map(|k| k as f64).product()
    } else {
        (0..(l - 1) / 2).map(|k| k as f64 + 0.5).product::<f64>() * std::f64::consts::PI.sqrt()
    }
}

/// Surface area of the unit sphere in `R^l`.
pub(crate) fn sphere_area(l: usize) -> f64 {
    2.0 * std::f64::consts::PI.powf(l as f64 / 2.0) / gamma_half(l)
}

/// Volume of the unit ball in `R^l`.
pub(crate) fn unit_ball_volume(l: usize) -> f64 {
    sphere_area(l) / l as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingKernel {
    model: LieGroupModel,
    a: f64,
    r: f64,
    /// `∫_0^a t^{ℓ-1} e^{-t²/2} dt`
    radial_mass: f64,
    radial_mass_error: f64,
    c_unit: f64,
    c: f64,
}

impl SmoothingKernel {
    /// Requires `a ≥ 1`, `r > 0` and, for non-abelian models, `a·r` below the
    /// chart radius. The abelian chart is global, so any `a·r` is accepted.
    pub fn new(model: LieGroupModel, a: f64, r: f64) -> Result<Self> {
        if !(a >= 1.0) || !a.is_finite() {
            return Err(Error::InvalidKernel(format!("a must be >= 1, got {a}")));
        }
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidKernel(format!("r must be positive, got {r}")));
        }
        if !model.is_abelian() && a * r >= model.chart_radius() {
            return Err(Error::InvalidKernel(format!(
                "a*r = {} must be below the chart radius {} of {model}",
                a * r,
                model.chart_radius()
            )));
        }
        let l = model.dim();
        let mass = integrate(|t| t.powi(l as i32 - 1) * (-0.5 * t * t).exp(), 0.0, a, QUAD_ABS, QUAD_REL);
        let c_unit = 1.0 / (sphere_area(l) * mass.value);
        Ok(Self {
            model,
            a,
            r,
            radial_mass: mass.value,
            radial_mass_error: mass.error,
            c_unit,
            c: c_unit * r.powi(-(l as i32)),
        })
    }

    pub fn model(&self) -> LieGroupModel {
        self.model
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Support radius `a·r`.
    pub fn support_radius(&self) -> f64 {
        self.a * self.r
    }

    /// Same `a`, new `r`.
    pub fn rescaled(&self, r: f64) -> Result<Self> {
        Self::new(self.model, self.a, r)
    }

    /// `C_{a,r}`.
    pub fn normalizing_constant(&self) -> f64 {
        self.c
    }

    /// Relative quadrature error of `C_{a,r}` (and absolute error of `log C`).
    pub fn normalizing_error(&self) -> f64 {
        self.radial_mass_error / self.radial_mass
    }

    /// `f_{a,r}(|x|)` as a function of the norm.
    pub fn radial_density(&self, norm: f64) -> f64 {
        if norm > self.a * self.r {
            0.0
        } else {
            let t = norm / self.r;
            self.c * (-0.5 * t * t).exp()
        }
    }

    pub fn algebra_density(&self, x: &AlgebraVector) -> f64 {
        self.radial_density(x.norm())
    }

    /// Rejection sampler from `N(0, r² I)` restricted to `|x| ≤ ar`.
    pub fn sample_kernel(&self, rng: &mut RngStream) -> AlgebraVector {
        let l = self.model.dim();
        let bound = self.a * self.a;
        loop {
            let mut c = [0.0; MAX_DIM];
            let mut sq = 0.0;
            for v in c.iter_mut().take(l) {
                let z: f64 = rng.sample(StandardNormal);
                *v = z;
                sq += z * z;
            }
            if sq <= bound {
                c.iter_mut().for_each(|v| *v *= self.r);
                return AlgebraVector::from_array(self.model, c);
            }
        }
    }

    pub fn sample_group(&self, rng: &mut RngStream) -> GroupElement {
        self.sample_kernel(rng).exp()
    }

    /// `((ℓ/2) log(2πe r²), H(β_{a,r}))`, the second by radial quadrature of `-f log f`.
    pub fn kernel_entropy(&self) -> (f64, f64) {
        let l = self.model.dim();
        let formula = 0.5 * l as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E * self.r * self.r).ln();
        let log_c = self.c.ln();
        let scale = sphere_area(l) * self.c_unit;
        let q = integrate(
            |t| {
                let f = (-0.5 * t * t).exp();
                -scale * t.powi(l as i32 - 1) * f * (log_c - 0.5 * t * t)
            },
            0.0,
            self.a,
            QUAD_ABS,
            QUAD_REL,
        );
        (formula, q.value)
    }

    /// Trace of the covariance of `β_{a,r}`.
    ///
    /// Integration by parts gives `∫ t^{ℓ+1} e^{-t²/2} = ℓ ∫ t^{ℓ-1} e^{-t²/2} - a^ℓ e^{-a²/2}`
    /// on `[0, a]`, so only the radial mass needs quadrature and the result
    /// stays below `ℓ r²`.
    pub fn kernel_trace(&self) -> f64 {
        let l = self.model.dim() as f64;
        let boundary = self.a.powf(l) * (-0.5 * self.a * self.a).exp();
        self.r * self.r * (l - boundary / self.radial_mass)
    }

    /// Density of `center · s_{a,r}` with respect to Haar measure at `x`.
    pub fn group_density(&self, center: &GroupElement, x: &GroupElement) -> f64 {
        if center.model() != self.model || x.model() != self.model {
            return 0.0;
        }
        let inv = raw_inv(self.model, center.raw());
        self.density_of_relative(&raw_mul(self.model, &inv, x.raw()))
    }

    /// Density of `s_{a,r}` at `exp(x)` for a drawn `x`, without a log round trip.
    pub(crate) fn density_at_log(&self, x: &AlgebraVector) -> f64 {
        if x.norm() > self.a * self.r * (1.0 + 1e-12) {
            return 0.0;
        }
        let t = x.norm() / self.r;
        self.c * (-0.5 * t * t).exp() * raw_jacobian(self.model, x.raw())
    }

    /// Density of `s_{a,r}` at the group element with entries `rel`.
    pub(crate) fn density_of_relative(&self, rel: &[f64; MAX_DIM]) -> f64 {
        match raw_log(self.model, rel) {
            Some(x) => {
                let n = crate::lie::norm(&x[..self.model.dim()]);
                // slack absorbs the rounding of log(exp(X)) at the support boundary
                if n > self.a * self.r * (1.0 + 1e-12) {
                    0.0
                } else {
                    let t = n / self.r;
                    self.c * (-0.5 * t * t).exp() * raw_jacobian(self.model, &x)
                }
            }
            None => 0.0,
        }
    }
}
