//! Deterministic quadrature references for one-dimensional mixtures and
//! kernel entropies on the group models.
//!
//! These share no code with the Monte-Carlo estimators beyond the kernel
//! constants, so they serve as independent checks of them.

use crate::lie::{raw_jacobian, LieGroupModel, MAX_DIM};
use crate::quadrature::{integrate, integrate_piecewise};
use crate::smoothing::{sphere_area, SmoothingKernel};

const ABS: f64 = 1e-13;
const REL: f64 = 1e-11;

fn h(f: f64) -> f64 {
    if f > 0.0 {
        -f * f.ln()
    } else {
        0.0
    }
}

fn sorted_breaks(mut pts: Vec<f64>) -> Vec<f64> {
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}

/// Breakpoints `x_i - ar, x_i, x_i + ar` of a one-dimensional smoothed mixture.
pub fn mixture_breakpoints(points: &[f64], a: f64, r: f64) -> Vec<f64> {
    sorted_breaks(points.iter().flat_map(|&x| [x - a * r, x, x + a * r]).collect())
}

fn kernel_1d(a: f64, r: f64) -> SmoothingKernel {
    SmoothingKernel::new(LieGroupModel::Abelian(1), a, r).expect("abelian kernel parameters")
}

/// `Σ p_i β_{a,r}(x - x_i)`.
pub fn mixture_density_1d<'a>(points: &'a [f64], weights: &'a [f64], a: f64, r: f64) -> impl Fn(f64) -> f64 + 'a {
    let k = kernel_1d(a, r);
    move |x| points.iter().zip(weights).map(|(&c, &p)| p * k.radial_density((x - c).abs())).sum()
}

/// `-∫ f log f` on consecutive breakpoints.
pub fn entropy_1d(f: impl Fn(f64) -> f64, breakpoints: &[f64]) -> f64 {
    integrate_piecewise(|x| h(f(x)), breakpoints, ABS, REL).value
}

/// `(mass, mean, variance)` of a density on consecutive breakpoints.
pub fn moments_1d(f: impl Fn(f64) -> f64, breakpoints: &[f64]) -> (f64, f64, f64) {
    let mass = integrate_piecewise(&f, breakpoints, ABS, REL).value;
    let mean = integrate_piecewise(|x| x * f(x), breakpoints, ABS, REL).value / mass;
    let var = integrate_piecewise(|x| (x - mean).powi(2) * f(x), breakpoints, ABS, REL).value / mass;
    (mass, mean, var)
}

/// `∫ f log(g / f)`, the divergence of `f` from `g` with the sign that makes
/// the divergence from Lebesgue measure equal to the entropy.
pub fn kl_1d(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, breakpoints: &[f64]) -> f64 {
    integrate_piecewise(
        |x| {
            let fx = f(x);
            if fx > 0.0 {
                fx * (g(x) / fx).ln()
            } else {
                0.0
            }
        },
        breakpoints,
        ABS,
        REL,
    )
    .value
}

/// `H(g s_{a,r})` for `g` uniform-or-weighted on `points ⊂ R`.
pub fn mixture_entropy_1d(points: &[f64], weights: &[f64], a: f64, r: f64) -> f64 {
    entropy_1d(mixture_density_1d(points, weights, a, r), &mixture_breakpoints(points, a, r))
}

/// `H_a(g; r) = H(g s_{a,r}) - H(s_{a,r})` on the line.
pub fn entropy_at_scale_1d(points: &[f64], weights: &[f64], a: f64, r: f64) -> f64 {
    mixture_entropy_1d(points, weights, a, r) - kernel_1d(a, r).kernel_entropy().1
}

/// `H_a(g; r1 | r2)` on the line.
pub fn gap_1d(points: &[f64], weights: &[f64], a: f64, r1: f64, r2: f64) -> f64 {
    entropy_at_scale_1d(points, weights, a, r1) - entropy_at_scale_1d(points, weights, a, r2)
}

/// `E_y[Var(g | y)]` for `y = g + s_{a,r2}`:
/// `∫ Σ_{i<j} p_i p_j f_i(y) f_j(y) (x_i - x_j)² / m(y) dy`.
pub fn conditional_trace_1d(points: &[f64], weights: &[f64], a: f64, r2: f64) -> f64 {
    let k = kernel_1d(a, r2);
    let integrand = |y: f64| {
        let f: Vec<f64> = points.iter().zip(weights).map(|(&c, &p)| p * k.radial_density((y - c).abs())).collect();
        let m: f64 = f.iter().sum();
        if m <= 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                acc += f[i] * f[j] * (points[i] - points[j]).powi(2);
            }
        }
        acc / m
    };
    integrate_piecewise(integrand, &mixture_breakpoints(points, a, r2), ABS, REL).value
}

/// `E[log j(X)]` for `X ~ β_{a,r}` on the algebra of `model`.
///
/// `j` is radial for the rotation group and depends on the direction for
/// `SL2R`, where the sphere average is done by nested quadrature.
pub fn mean_log_jacobian(model: LieGroupModel, a: f64, r: f64) -> f64 {
    let l = model.dim();
    let k = SmoothingKernel::new(model, a, r).expect("kernel parameters");
    let shell = |rho: f64| sphere_area(l) * rho.powi(l as i32 - 1) * k.radial_density(rho);
    let point = |v: [f64; 3]| {
        let mut x = [0.0; MAX_DIM];
        x[..3].copy_from_slice(&v);
        raw_jacobian(model, &x).ln()
    };
    let sphere_mean = |rho: f64| match model {
        LieGroupModel::Abelian(_) | LieGroupModel::Heisenberg3 => 0.0,
        LieGroupModel::SO3 => point([rho, 0.0, 0.0]),
        LieGroupModel::SL2R => {
            let inner = |z: f64| {
                let s = (1.0 - z * z).max(0.0).sqrt();
                integrate(
                    |phi| point([rho * s * phi.cos(), rho * s * phi.sin(), rho * z]),
                    0.0,
                    2.0 * std::f64::consts::PI,
                    1e-15,
                    1e-12,
                )
                .value
            };
            integrate(inner, -1.0, 1.0, 1e-15, 1e-12).value / (4.0 * std::f64::consts::PI)
        }
    };
    integrate(|rho| shell(rho) * sphere_mean(rho), 0.0, a * r, 1e-16, 1e-11).value
}

/// Haar entropy of `s_{a,r}`: `H(β_{a,r}) - E[log j]`.
pub fn group_kernel_entropy(k: &SmoothingKernel) -> f64 {
    k.kernel_entropy().1 - mean_log_jacobian(k.model(), k.a(), k.r())
}
