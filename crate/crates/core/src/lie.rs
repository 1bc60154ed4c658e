//! Matrix Lie group models with exponential/logarithm charts.
//!
//! Every model carries a fixed orthonormal basis of its Lie algebra; the
//! Euclidean norm of the coordinates in that basis is the inner product used
//! for distances, densities and traces.
//!
//! | model         | algebra coordinates | matrix of `X`                              | inner product      |
//! |---------------|---------------------|--------------------------------------------|--------------------|
//! | `Abelian(l)`  | `x ∈ R^l`           | (vector group, `exp` is the identity)      | Euclidean          |
//! | `SL2R`        | `(e, f, h)`         | `[[h/√2, e], [f, -h/√2]]`                  | `tr(XᵀY)`          |
//! | `SO3`         | `(ωx, ωy, ωz)`      | `[[0, -ωz, ωy], [ωz, 0, -ωx], [-ωy, ωx, 0]]` | `½ tr(XᵀY)`        |
//! | `Heisenberg3` | `(x, y, z)`         | `[[0, x, z], [0, 0, y], [0, 0, 0]]`        | `tr(XᵀY)`          |
//!
//! The left-invariant metric `d(g, h) = |log(g⁻¹h)|` is only realized inside
//! the log chart. Pairs further apart than `chart_radius` report
//! [`Distance::AtLeast`]. The abelian model has a global chart, so its
//! distances are always exact.
//!
//! Haar measure is normalized so that it agrees with Lebesgue measure on the
//! algebra at the identity. [`AlgebraVector::chart_jacobian`] returns the
//! density of `exp_*(Lebesgue)` with respect to Haar at `exp(X)`, i.e.
//! `1 / det((1 - e^{-ad X}) / ad X)`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported algebra dimension / matrix storage size.
pub const MAX_DIM: usize = 9;

const VALIDATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LieGroupModel {
    /// `R^l` under addition.
    Abelian(usize),
    SL2R,
    SO3,
    Heisenberg3,
}

impl LieGroupModel {
    pub fn abelian(dim: usize) -> Result<Self> {
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::InvalidArgument(format!(
                "abelian dimension must be in 1..={MAX_DIM}, got {dim}"
            )));
        }
        Ok(LieGroupModel::Abelian(dim))
    }

    /// Dimension `ℓ` of the Lie algebra.
    pub fn dim(self) -> usize {
        match self {
            LieGroupModel::Abelian(l) => l,
            LieGroupModel::SL2R | LieGroupModel::SO3 | LieGroupModel::Heisenberg3 => 3,
        }
    }

    /// Radius within which the principal logarithm is defined and injective.
    pub fn chart_radius(self) -> f64 {
        match self {
            LieGroupModel::Abelian(_) | LieGroupModel::Heisenberg3 => 1.0,
            LieGroupModel::SL2R => 0.5,
            LieGroupModel::SO3 => std::f64::consts::PI - 0.01,
        }
    }

    /// Side length of the matrix representation, `None` for the vector group.
    pub fn matrix_size(self) -> Option<usize> {
        match self {
            LieGroupModel::Abelian(_) => None,
            LieGroupModel::SL2R => Some(2),
            LieGroupModel::SO3 | LieGroupModel::Heisenberg3 => Some(3),
        }
    }

    /// Number of stored reals in a group element.
    pub fn repr_len(self) -> usize {
        match self.matrix_size() {
            Some(n) => n * n,
            None => self.dim(),
        }
    }

    pub fn is_abelian(self) -> bool {
        matches!(self, LieGroupModel::Abelian(_))
    }

    /// Ratio between the Frobenius norm of the matrix of `X` and `|X|`.
    pub(crate) fn frobenius_scale(self) -> f64 {
        match self {
            LieGroupModel::SO3 => std::f64::consts::SQRT_2,
            _ => 1.0,
        }
    }

    pub fn identity(self) -> GroupElement {
        let len = self.repr_len();
        let mut exact = vec![BigRational::zero(); len];
        if let Some(n) = self.matrix_size() {
            for i in 0..n {
                exact[i * n + i] = BigRational::one();
            }
        }
        GroupElement::from_exact_unchecked(self, exact.into())
    }
}

impl fmt::Display for LieGroupModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LieGroupModel::Abelian(l) => write!(f, "abelian({l})"),
            LieGroupModel::SL2R => write!(f, "sl2r"),
            LieGroupModel::SO3 => write!(f, "so3"),
            LieGroupModel::Heisenberg3 => write!(f, "heisenberg3"),
        }
    }
}

impl FromStr for LieGroupModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "sl2r" => Ok(LieGroupModel::SL2R),
            "so3" => Ok(LieGroupModel::SO3),
            "heisenberg3" => Ok(LieGroupModel::Heisenberg3),
            other => {
                let dim = other
                    .strip_prefix("abelian(")
                    .and_then(|rest| rest.strip_suffix(')'))
                    .and_then(|d| d.parse::<usize>().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown model '{s}'")))?;
                LieGroupModel::abelian(dim)
            }
        }
    }
}

/// Distance in the chart, or a lower bound for pairs beyond it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Distance {
    Exact(f64),
    AtLeast(f64),
}

impl Distance {
    pub fn lower_bound(self) -> f64 {
        match self {
            Distance::Exact(d) | Distance::AtLeast(d) => d,
        }
    }

    pub fn is_exact(self) -> bool {
        matches!(self, Distance::Exact(_))
    }

    /// The smaller of two distances; an exact value wins ties.
    pub fn min(self, other: Distance) -> Distance {
        let (a, b) = (self.lower_bound(), other.lower_bound());
        if a < b || (a == b && self.is_exact()) {
            self
        } else {
            other
        }
    }
}

/// Coordinates of an element of the Lie algebra in the model's fixed basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlgebraVector {
    model: LieGroupModel,
    coords: [f64; MAX_DIM],
}

impl AlgebraVector {
    pub fn new(model: LieGroupModel, coords: &[f64]) -> Result<Self> {
        if coords.len() != model.dim() {
            return Err(Error::InvalidArgument(format!(
                "{model} algebra vectors have {} coordinates, got {}",
                model.dim(),
                coords.len()
            )));
        }
        let mut c = [0.0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Self { model, coords: c })
    }

    pub(crate) fn from_array(model: LieGroupModel, coords: [f64; MAX_DIM]) -> Self {
        Self { model, coords }
    }

    pub fn zero(model: LieGroupModel) -> Self {
        Self {
            model,
            coords: [0.0; MAX_DIM],
        }
    }

    pub fn model(&self) -> LieGroupModel {
        self.model
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords[..self.model.dim()]
    }

    pub(crate) fn raw(&self) -> &[f64; MAX_DIM] {
        &self.coords
    }

    pub fn norm(&self) -> f64 {
        norm(self.coords())
    }

    pub fn scale(&self, t: f64) -> Self {
        let mut c = self.coords;
        c.iter_mut().for_each(|v| *v *= t);
        Self {
            model: self.model,
            coords: c,
        }
    }

    pub fn exp(&self) -> GroupElement {
        GroupElement::from_f64_unchecked(self.model, raw_exp(self.model, &self.coords))
    }

    /// Density of `exp_*(m_g)` with respect to Haar measure at `exp(X)`.
    pub fn chart_jacobian(&self) -> Result<f64> {
        let n = self.norm();
        if !self.model.is_abelian() && n >= self.model.chart_radius() {
            return Err(Error::OutsideChart {
                model: self.model,
                detail: format!("|X| = {n} >= chart radius {}", self.model.chart_radius()),
            });
        }
        Ok(raw_jacobian(self.model, &self.coords))
    }
}

/// Exact rational entries of a group element, in the same layout as the floats.
pub type ExactRepr = Arc<[BigRational]>;

/// A point of a matrix Lie group model.
///
/// `data` holds the row-major matrix (or the vector for the abelian model).
/// When `exact` is present, `data` is its entry-wise rounding to nearest.
#[derive(Debug, Clone)]
pub struct GroupElement {
    model: LieGroupModel,
    data: [f64; MAX_DIM],
    exact: Option<ExactRepr>,
}

impl PartialEq for GroupElement {
    fn eq(&self, other: &Self) -> bool {
        if self.model != other.model {
            return false;
        }
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => a == b,
            _ => self.data == other.data,
        }
    }
}

impl GroupElement {
    /// Builds an element from floating-point entries, checking the model's
    /// defining relations.
    pub fn from_f64(model: LieGroupModel, entries: &[f64]) -> Result<Self> {
        if entries.len() != model.repr_len() {
            return Err(invalid(model, format!("expected {} entries, got {}", model.repr_len(), entries.len())));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(invalid(model, "non-finite entry".into()));
        }
        let mut data = [0.0; MAX_DIM];
        data[..entries.len()].copy_from_slice(entries);
        validate_f64(model, &data)?;
        Ok(Self::from_f64_unchecked(model, data))
    }

    /// Builds an element from exact rational entries; relations are checked exactly.
    pub fn from_exact(model: LieGroupModel, entries: Vec<BigRational>) -> Result<Self> {
        if entries.len() != model.repr_len() {
            return Err(invalid(model, format!("expected {} entries, got {}", model.repr_len(), entries.len())));
        }
        validate_exact(model, &entries)?;
        Ok(Self::from_exact_unchecked(model, entries.into()))
    }

    pub(crate) fn from_f64_unchecked(model: LieGroupModel, data: [f64; MAX_DIM]) -> Self {
        Self {
            model,
            data,
            exact: None,
        }
    }

    pub(crate) fn from_exact_unchecked(model: LieGroupModel, exact: ExactRepr) -> Self {
        let mut data = [0.0; MAX_DIM];
        for (d, q) in data.iter_mut().zip(exact.iter()) {
            *d = rational_to_f64(q);
        }
        Self {
            model,
            data,
            exact: Some(exact),
        }
    }

    pub fn model(&self) -> LieGroupModel {
        self.model
    }

    pub fn entries(&self) -> &[f64] {
        &self.data[..self.model.repr_len()]
    }

    pub(crate) fn raw(&self) -> &[f64; MAX_DIM] {
        &self.data
    }

    pub fn exact(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    pub(crate) fn exact_repr(&self) -> Option<&ExactRepr> {
        self.exact.as_ref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Drops the exact representation, keeping the rounded entries.
    pub fn to_float(&self) -> Self {
        Self::from_f64_unchecked(self.model, self.data)
    }

    pub(crate) fn frobenius_norm(&self) -> f64 {
        norm(self.entries())
    }

    /// Group product `self · other`; exact when both operands are exact.
    pub fn multiply(&self, other: &GroupElement) -> Result<GroupElement> {
        check_same(self.model, other.model)?;
        Ok(self.mul_unchecked(other))
    }

    pub(crate) fn mul_unchecked(&self, other: &GroupElement) -> GroupElement {
        match (&self.exact, &other.exact) {
            (Some(a), Some(b)) => {
                Self::from_exact_unchecked(self.model, exact_mul(self.model, a, b).into())
            }
            _ => Self::from_f64_unchecked(self.model, raw_mul(self.model, &self.data, &other.data)),
        }
    }

    pub fn inverse(&self) -> GroupElement {
        match &self.exact {
            Some(a) => Self::from_exact_unchecked(self.model, exact_inv(self.model, a).into()),
            None => Self::from_f64_unchecked(self.model, raw_inv(self.model, &self.data)),
        }
    }

    /// Principal logarithm inside the chart.
    pub fn log(&self) -> Result<AlgebraVector> {
        let coords = raw_log(self.model, &self.data).ok_or_else(|| Error::OutsideChart {
            model: self.model,
            detail: "principal logarithm undefined".into(),
        })?;
        let x = AlgebraVector::from_array(self.model, coords);
        let n = x.norm();
        if !self.model.is_abelian() && n >= self.model.chart_radius() {
            return Err(Error::OutsideChart {
                model: self.model,
                detail: format!("|log g| = {n} >= chart radius {}", self.model.chart_radius()),
            });
        }
        Ok(x)
    }

    /// `log(self⁻¹ · other)`, computed exactly up to the final rounding when possible.
    pub fn log_between(&self, other: &GroupElement) -> Result<AlgebraVector> {
        check_same(self.model, other.model)?;
        self.inverse().mul_unchecked(other).log()
    }

    /// Left-invariant distance `|log(self⁻¹ · other)|`.
    pub fn distance(&self, other: &GroupElement) -> Result<Distance> {
        check_same(self.model, other.model)?;
        if let Some(far) = self.certainly_far(other) {
            return Ok(far);
        }
        let rel = self.inverse().mul_unchecked(other);
        Ok(chart_distance(self.model, &rel.data))
    }
}

impl GroupElement {
    /// Float test that skips exact arithmetic for pairs far outside the chart.
    ///
    /// `|exp(X) - I|_F ≤ e^{c|X|} - 1`, so a relative element further than
    /// that from the identity, after the rounding error of the float product,
    /// lies beyond the chart radius.
    fn certainly_far(&self, other: &GroupElement) -> Option<Distance> {
        if self.model.is_abelian() || self.exact.is_none() || other.exact.is_none() {
            return None;
        }
        let model = self.model;
        let inv = raw_inv(model, &self.data);
        let rel = raw_mul(model, &inv, &other.data);
        let n = model.repr_len();
        let size = model.matrix_size().expect("matrix model");
        let off: f64 = (0..n)
            .map(|k| {
                let id = if k % (size + 1) == 0 { 1.0 } else { 0.0 };
                (rel[k] - id).powi(2)
            })
            .sum::<f64>()
            .sqrt();
        let rounding = 32.0 * f64::EPSILON * norm(&inv[..n]) * norm(&other.data[..n]);
        let reach = (model.frobenius_scale() * model.chart_radius()).exp_m1() * (1.0 + 1e-9);
        (off - rounding > reach).then(|| Distance::AtLeast(model.chart_radius()))
    }
}

pub(crate) fn chart_distance(model: LieGroupModel, rel: &[f64; MAX_DIM]) -> Distance {
    let radius = model.chart_radius();
    match raw_log(model, rel) {
        Some(c) => {
            let n = norm(&c[..model.dim()]);
            if model.is_abelian() || n < radius {
                Distance::Exact(n)
            } else {
                Distance::AtLeast(radius)
            }
        }
        None => Distance::AtLeast(radius),
    }
}

fn check_same(a: LieGroupModel, b: LieGroupModel) -> Result<()> {
    if a != b {
        return Err(Error::ModelMismatch { left: a, right: b });
    }
    Ok(())
}

fn invalid(model: LieGroupModel, detail: String) -> Error {
    Error::InvalidElement { model, detail }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn rational_to_f64(q: &BigRational) -> f64 {
    q.to_f64().unwrap_or(f64::NAN)
}

fn validate_f64(model: LieGroupModel, m: &[f64; MAX_DIM]) -> Result<()> {
    match model {
        LieGroupModel::Abelian(_) => Ok(()),
        LieGroupModel::SL2R => {
            let det = m[0] * m[3] - m[1] * m[2];
            let scale = 1.0 + m[..4].iter().map(|x| x * x).sum::<f64>();
            if (det - 1.0).abs() > VALIDATION_TOL * scale {
                return Err(invalid(model, format!("det = {det}, expected 1")));
            }
            Ok(())
        }
        LieGroupModel::SO3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let dot: f64 = (0..3).map(|k| m[k * 3 + i] * m[k * 3 + j]).sum();
                    let target = if i == j { 1.0 } else { 0.0 };
                    if (dot - target).abs() > VALIDATION_TOL {
                        return Err(invalid(model, "matrix is not orthogonal".into()));
                    }
                }
            }
            if (det3(m) - 1.0).abs() > VALIDATION_TOL {
                return Err(invalid(model, "det != 1".into()));
            }
            Ok(())
        }
        LieGroupModel::Heisenberg3 => {
            let ok = [0usize, 4, 8].iter().all(|&i| (m[i] - 1.0).abs() <= VALIDATION_TOL)
                && [3usize, 6, 7].iter().all(|&i| m[i].abs() <= VALIDATION_TOL);
            if !ok {
                return Err(invalid(model, "matrix is not unit upper-triangular".into()));
            }
            Ok(())
        }
    }
}

fn validate_exact(model: LieGroupModel, m: &[BigRational]) -> Result<()> {
    let one = BigRational::one();
    match model {
        LieGroupModel::Abelian(_) => Ok(()),
        LieGroupModel::SL2R => {
            let det = &m[0] * &m[3] - &m[1] * &m[2];
            if det != one {
                return Err(invalid(model, format!("det = {det}, expected 1")));
            }
            Ok(())
        }
        LieGroupModel::SO3 => {
            for i in 0..3 {
                for j in 0..3 {
                    let dot = (0..3).fold(BigRational::zero(), |acc, k| acc + &m[k * 3 + i] * &m[k * 3 + j]);
                    let target = if i == j { one.clone() } else { BigRational::zero() };
                    if dot != target {
                        return Err(invalid(model, "matrix is not orthogonal".into()));
                    }
                }
            }
            let det = &m[0] * (&m[4] * &m[8] - &m[5] * &m[7]) - &m[1] * (&m[3] * &m[8] - &m[5] * &m[6])
                + &m[2] * (&m[3] * &m[7] - &m[4] * &m[6]);
            if det != one {
                return Err(invalid(model, "det != 1".into()));
            }
            Ok(())
        }
        LieGroupModel::Heisenberg3 => {
            let ok = [0usize, 4, 8].iter().all(|&i| m[i] == one) && [3usize, 6, 7].iter().all(|&i| m[i].is_zero());
            if !ok {
                return Err(invalid(model, "matrix is not unit upper-triangular".into()));
            }
            Ok(())
        }
    }
}

fn det3(m: &[f64; MAX_DIM]) -> f64 {
    m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) + m[2] * (m[3] * m[7] - m[4] * m[6])
}

pub(crate) fn raw_mul(model: LieGroupModel, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    match model.matrix_size() {
        None => {
            for i in 0..model.dim() {
                out[i] = a[i] + b[i];
            }
        }
        Some(n) => {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += a[i * n + k] * b[k * n + j];
                    }
                    out[i * n + j] = s;
                }
            }
        }
    }
    out
}

fn exact_mul(model: LieGroupModel, a: &[BigRational], b: &[BigRational]) -> Vec<BigRational> {
    match model.matrix_size() {
        None => a.iter().zip(b).map(|(x, y)| x + y).collect(),
        Some(n) => {
            let mut out = Vec::with_capacity(n * n);
            for i in 0..n {
                for j in 0..n {
                    let mut s = BigRational::zero();
                    for k in 0..n {
                        let (x, y) = (&a[i * n + k], &b[k * n + j]);
                        if !x.is_zero() && !y.is_zero() {
                            s += x * y;
                        }
                    }
                    out.push(s);
                }
            }
            out
        }
    }
}

pub(crate) fn raw_inv(model: LieGroupModel, m: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    match model {
        LieGroupModel::Abelian(l) => {
            for i in 0..l {
                out[i] = -m[i];
            }
        }
        LieGroupModel::SL2R => {
            let det = m[0] * m[3] - m[1] * m[2];
            out[0] = m[3] / det;
            out[1] = -m[1] / det;
            out[2] = -m[2] / det;
            out[3] = m[0] / det;
        }
        LieGroupModel::SO3 => {
            for i in 0..3 {
                for j in 0..3 {
                    out[i * 3 + j] = m[j * 3 + i];
                }
            }
        }
        LieGroupModel::Heisenberg3 => {
            let (a, b, c) = (m[1], m[5], m[2]);
            out[0] = 1.0;
            out[4] = 1.0;
            out[8] = 1.0;
            out[1] = -a;
            out[5] = -b;
            out[2] = a * b - c;
        }
    }
    out
}

fn exact_inv(model: LieGroupModel, m: &[BigRational]) -> Vec<BigRational> {
    match model {
        LieGroupModel::Abelian(_) => m.iter().map(|x| -x).collect(),
        LieGroupModel::SL2R => {
            let det = &m[0] * &m[3] - &m[1] * &m[2];
            vec![&m[3] / &det, -(&m[1] / &det), -(&m[2] / &det), &m[0] / &det]
        }
        LieGroupModel::SO3 => (0..9).map(|k| m[(k % 3) * 3 + k / 3].clone()).collect(),
        LieGroupModel::Heisenberg3 => {
            let one = BigRational::one();
            let zero = BigRational::zero();
            let (a, b, c) = (&m[1], &m[5], &m[2]);
            vec![
                one.clone(),
                -a.clone(),
                a * b - c,
                zero.clone(),
                one.clone(),
                -b.clone(),
                zero.clone(),
                zero,
                one,
            ]
        }
    }
}

/// `(cosh √δ, sinh √δ / √δ)`, analytically continued to `δ ≤ 0`.
fn cosh_sinhc(delta: f64) -> (f64, f64) {
    if delta.abs() < 1e-3 {
        let d = delta;
        let c = 1.0 + d * (1.0 / 2.0 + d * (1.0 / 24.0 + d * (1.0 / 720.0 + d * (1.0 / 40320.0 + d / 3628800.0))));
        let s = 1.0 + d * (1.0 / 6.0 + d * (1.0 / 120.0 + d * (1.0 / 5040.0 + d * (1.0 / 362880.0 + d / 39916800.0))));
        (c, s)
    } else if delta > 0.0 {
        let k = delta.sqrt();
        (k.cosh(), k.sinh() / k)
    } else {
        let k = (-delta).sqrt();
        (k.cos(), k.sin() / k)
    }
}

fn sl2_hat(x: &[f64; MAX_DIM]) -> [f64; 4] {
    let d = x[2] * std::f64::consts::FRAC_1_SQRT_2;
    [d, x[0], x[1], -d]
}

fn sl2_delta(x: &[f64; MAX_DIM]) -> f64 {
    0.5 * x[2] * x[2] + x[0] * x[1]
}

fn so3_hat(w: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    [0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0]
}

pub(crate) fn raw_exp(model: LieGroupModel, x: &[f64; MAX_DIM]) -> [f64; MAX_DIM] {
    let mut out = [0.0; MAX_DIM];
    match model {
        LieGroupModel::Abelian(l) => out[..l].copy_from_slice(&x[..l]),
        LieGroupModel::SL2R => {
            let m = sl2_hat(x);
            let (c, s) = cosh_sinhc(sl2_delta(x));
            out[0] = c + s * m[0];
            out[1] = s * m[1];
            out[2] = s * m[2];
            out[3] = c + s * m[3];
        }
        LieGroupModel::SO3 => {
            let theta = norm(&x[..3]);
            let (a, b) = if theta < 1e-4 {
                let t2 = theta * theta;
                (1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0)
            } else {
                (theta.sin() / theta, (1.0 - theta.cos()) / (theta * theta))
            };
            let k = so3_hat(x);
            let k2 = raw_mul(model, &k, &k);
            for i in 0..9 {
                out[i] = a * k[i] + b * k2[i];
            }
            out[0] += 1.0;
            out[4] += 1.0;
            out[8] += 1.0;
        }
        LieGroupModel::Heisenberg3 => {
            out[0] = 1.0;
            out[4] = 1.0;
            out[8] = 1.0;
            out[1] = x[0];
            out[5] = x[1];
            out[2] = x[2] + 0.5 * x[0] * x[1];
        }
    }
    out
}

/// Principal logarithm in algebra coordinates, `None` where it is undefined.
pub(crate) fn raw_log(model: LieGroupModel, m: &[f64; MAX_DIM]) -> Option<[f64; MAX_DIM]> {
    let mut out = [0.0; MAX_DIM];
    match model {
        LieGroupModel::Abelian(l) => out[..l].copy_from_slice(&m[..l]),
        LieGroupModel::SL2R => {
            let (p, q, r, s) = (m[0], m[1], m[2], m[3]);
            let t = 0.5 * (p + s);
            let half_diff = 0.5 * (p - s);
            // sinh²(√δ) for hyperbolic elements, -sin²(θ) for elliptic ones
            let w = half_diff * half_diff + q * r;
            let sinhc = if w > 0.0 {
                if t <= 0.0 {
                    return None;
                }
                let x = w.sqrt();
                if x < 1e-6 {
                    1.0 + w / 6.0
                } else {
                    x / x.asinh()
                }
            } else if w < 0.0 {
                let x = (-w).sqrt();
                let theta = x.atan2(t);
                if x < 1e-6 && t > 0.0 {
                    1.0 + w / 6.0
                } else {
                    let sc = x / theta;
                    if sc <= 0.0 || !sc.is_finite() {
                        return None;
                    }
                    sc
                }
            } else {
                if t <= 0.0 {
                    return None;
                }
                1.0
            };
            out[0] = q / sinhc;
            out[1] = r / sinhc;
            out[2] = std::f64::consts::SQRT_2 * half_diff / sinhc;
        }
        LieGroupModel::SO3 => {
            let c = 0.5 * (m[0] + m[4] + m[8] - 1.0);
            let v = [0.5 * (m[7] - m[5]), 0.5 * (m[2] - m[6]), 0.5 * (m[3] - m[1])];
            let s = norm(&v);
            if s < 1e-8 && c < 0.0 {
                return None;
            }
            let theta = s.atan2(c);
            let factor = if s < 1e-8 { 1.0 + s * s / 6.0 } else { theta / s };
            for i in 0..3 {
                out[i] = factor * v[i];
            }
        }
        LieGroupModel::Heisenberg3 => {
            out[0] = m[1];
            out[1] = m[5];
            out[2] = m[2] - 0.5 * m[1] * m[5];
        }
    }
    Some(out)
}

pub(crate) fn raw_jacobian(model: LieGroupModel, x: &[f64; MAX_DIM]) -> f64 {
    match model {
        LieGroupModel::Abelian(_) | LieGroupModel::Heisenberg3 => 1.0,
        LieGroupModel::SL2R => {
            let (_, s) = cosh_sinhc(sl2_delta(x));
            1.0 / (s * s)
        }
        LieGroupModel::SO3 => {
            let half = 0.5 * norm(&x[..3]);
            if half < 1e-4 {
                let t2 = 4.0 * half * half;
                1.0 + t2 / 12.0 + t2 * t2 / 240.0
            } else {
                let q = half / half.sin();
                q * q
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;

    fn q(n: i64) -> BigRational {
        BigRational::from_integer(BigInt::from(n))
    }

    fn sl2(e: [i64; 4]) -> GroupElement {
        GroupElement::from_exact(LieGroupModel::SL2R, e.iter().map(|&v| q(v)).collect()).unwrap()
    }

    #[test]
    fn far_prefilter_agrees_with_exact_path() {
        let gens = [sl2([1, 2, 0, 1]), sl2([1, 0, 2, 1]), sl2([2, 1, 1, 1]), sl2([1, 1, 0, 1])];
        let mut words = vec![LieGroupModel::SL2R.identity()];
        for _ in 0..4 {
            words = words.iter().flat_map(|w| gens.iter().map(move |g| w.multiply(g).unwrap())).collect();
        }
        // near pairs too: the unipotent [[1, 1/k], [0, 1]] against the identity
        let near: Vec<GroupElement> = (1..6)
            .map(|k| GroupElement::from_exact(LieGroupModel::SL2R, vec![q(1), BigRational::new(1.into(), (3 * k).into()), q(0), q(1)]).unwrap())
            .collect();
        words.extend(near);
        for g in words.iter().step_by(7) {
            for h in &words {
                let slow = chart_distance(LieGroupModel::SL2R, &g.inverse().mul_unchecked(h).data);
                assert_eq!(g.distance(h).unwrap(), slow);
            }
        }
    }

    /// Truncated power series of the matrix exponential with scaling and squaring.
    fn series_exp(n: usize, x: &[f64]) -> Vec<f64> {
        let scale = 2f64.powi(10);
        let a: Vec<f64> = x.iter().map(|v| v / scale).collect();
        let mut result = vec![0.0; n * n];
        let mut term = vec![0.0; n * n];
        for i in 0..n {
            result[i * n + i] = 1.0;
            term[i * n + i] = 1.0;
        }
        for k in 1..30 {
            let mut next = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    next[i * n + j] = (0..n).map(|l| term[i * n + l] * a[l * n + j]).sum::<f64>() / k as f64;
                }
            }
            term = next;
            for (r, t) in result.iter_mut().zip(&term) {
                *r += t;
            }
        }
        for _ in 0..10 {
            let mut sq = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    sq[i * n + j] = (0..n).map(|l| result[i * n + l] * result[l * n + j]).sum();
                }
            }
            result = sq;
        }
        result
    }

    #[test]
    fn identity_is_neutral() {
        for model in [LieGroupModel::SL2R, LieGroupModel::SO3, LieGroupModel::Heisenberg3, LieGroupModel::Abelian(2)] {
            let x = AlgebraVector::new(model, &vec![0.1; model.dim()]).unwrap();
            let h = x.exp();
            let p = model.identity().multiply(&h).unwrap();
            assert_eq!(p.entries(), h.entries());
        }
    }

    #[test]
    fn sl2_integer_product() {
        let p = sl2([1, 2, 0, 1]).multiply(&sl2([1, 0, 2, 1])).unwrap();
        assert_eq!(p, sl2([5, 2, 2, 1]));
        assert!(p.is_exact());
    }

    #[test]
    fn abelian_product_is_addition() {
        let m = LieGroupModel::Abelian(1);
        let g = GroupElement::from_f64(m, &[0.3]).unwrap();
        let h = GroupElement::from_f64(m, &[0.4]).unwrap();
        assert_eq!(g.multiply(&h).unwrap().entries(), &[0.3 + 0.4]);
    }

    #[test]
    fn model_mismatch_is_rejected() {
        let a = LieGroupModel::SL2R.identity();
        let b = LieGroupModel::SO3.identity();
        assert!(matches!(a.multiply(&b), Err(Error::ModelMismatch { .. })));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        for model in [LieGroupModel::SL2R, LieGroupModel::SO3, LieGroupModel::Heisenberg3] {
            let g = AlgebraVector::zero(model).exp();
            assert_eq!(g.entries(), model.identity().entries());
        }
    }

    #[test]
    fn sl2_nilpotent_exponential() {
        let t = 0.37;
        let g = AlgebraVector::new(LieGroupModel::SL2R, &[t, 0.0, 0.0]).unwrap().exp();
        assert_eq!(g.entries(), &[1.0, t, 0.0, 1.0]);
    }

    #[test]
    fn so3_quarter_turn_matches_series() {
        let x = AlgebraVector::new(LieGroupModel::SO3, &[0.0, 0.0, std::f64::consts::FRAC_PI_2]).unwrap();
        let g = x.exp();
        let expected = [0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        let series = series_exp(3, &so3_hat(x.raw()));
        for i in 0..9 {
            assert!((g.entries()[i] - expected[i]).abs() < 1e-15);
            assert!((g.entries()[i] - series[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn sl2_exp_matches_series() {
        for coords in [[0.1, -0.2, 0.3], [0.3, 0.2, 0.0], [-0.3, 0.25, 0.1]] {
            let x = AlgebraVector::new(LieGroupModel::SL2R, &coords).unwrap();
            let series = series_exp(2, &sl2_hat(x.raw()));
            for (a, b) in x.exp().entries().iter().zip(&series) {
                assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn log_special_cases() {
        let id = LieGroupModel::SO3.identity();
        assert_eq!(id.log().unwrap().coords(), &[0.0, 0.0, 0.0]);
        let m = LieGroupModel::Abelian(3);
        let g = GroupElement::from_f64(m, &[1.5, -2.0, 7.0]).unwrap();
        assert_eq!(g.log().unwrap().coords(), &[1.5, -2.0, 7.0]);
        let t = 0.01;
        let g = GroupElement::from_f64(LieGroupModel::SL2R, &[1.0, t, 0.0, 1.0]).unwrap();
        let x = g.log().unwrap();
        assert!((x.coords()[0] - t).abs() < 1e-15);
        assert!(x.coords()[1].abs() < 1e-15 && x.coords()[2].abs() < 1e-15);
    }

    #[test]
    fn log_outside_chart() {
        // -I has no real logarithm; diag(2, 1/2) has log norm ln 2 > 0.5
        let g = GroupElement::from_f64(LieGroupModel::SL2R, &[-1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(g.log(), Err(Error::OutsideChart { .. })));
        let g = GroupElement::from_f64(LieGroupModel::SL2R, &[2.0, 0.0, 0.0, 0.5]).unwrap();
        assert!(matches!(g.log(), Err(Error::OutsideChart { .. })));
        assert!(matches!(g.distance(&LieGroupModel::SL2R.identity()), Ok(Distance::AtLeast(_))));
    }

    #[test]
    fn distance_examples() {
        let m = LieGroupModel::Abelian(1);
        let a = GroupElement::from_f64(m, &[0.0]).unwrap();
        let b = GroupElement::from_f64(m, &[1.0]).unwrap();
        assert_eq!(a.distance(&b).unwrap(), Distance::Exact(1.0));
        assert_eq!(b.distance(&b).unwrap(), Distance::Exact(0.0));
        let g = GroupElement::from_f64(LieGroupModel::SL2R, &[1.0, 0.02, 0.0, 1.0]).unwrap();
        let d = LieGroupModel::SL2R.identity().distance(&g).unwrap();
        assert!((d.lower_bound() - 0.02).abs() < 1e-10 && d.is_exact());
    }

    #[test]
    fn invalid_elements_rejected() {
        assert!(GroupElement::from_f64(LieGroupModel::SL2R, &[1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(GroupElement::from_f64(LieGroupModel::SO3, &[1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).is_err());
        assert!(GroupElement::from_exact(LieGroupModel::Heisenberg3, (0..9).map(|_| q(0)).collect()).is_err());
    }

    #[test]
    fn jacobian_closed_forms() {
        assert_eq!(AlgebraVector::zero(LieGroupModel::SO3).chart_jacobian().unwrap(), 1.0);
        assert_eq!(AlgebraVector::zero(LieGroupModel::SL2R).chart_jacobian().unwrap(), 1.0);
        let x = AlgebraVector::new(LieGroupModel::Heisenberg3, &[0.3, -0.2, 0.5]).unwrap();
        assert_eq!(x.chart_jacobian().unwrap(), 1.0);
        let big = AlgebraVector::new(LieGroupModel::SL2R, &[0.6, 0.0, 0.0]).unwrap();
        assert!(big.chart_jacobian().is_err());
    }

    #[test]
    fn model_names_round_trip() {
        for m in [LieGroupModel::Abelian(4), LieGroupModel::SL2R, LieGroupModel::SO3, LieGroupModel::Heisenberg3] {
            assert_eq!(m.to_string().parse::<LieGroupModel>().unwrap(), m);
        }
        assert!("abelian(0)".parse::<LieGroupModel>().is_err());
        assert!("su2".parse::<LieGroupModel>().is_err());
    }
}
