//! Experiment configuration files.
//!
//! Numbers may be written as TOML integers or floats, or as strings. Integers
//! and `"p/q"` strings stay exact; decimals become the nearest double.

use std::str::FromStr;

use liescale::measure::Weight;
use liescale::walks::StoppingTimeSpec;
use liescale::{FinSuppMeasure, GroupElement, LieGroupModel, SmoothingKernel};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Int(i64),
    Float(f64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Exact(BigRational),
    Float(f64),
}

impl Scalar {
    pub fn to_f64(&self) -> f64 {
        match self {
            Scalar::Exact(q) => q.to_f64().unwrap_or(f64::NAN),
            Scalar::Float(v) => *v,
        }
    }
}

fn parse_rational(s: &str) -> Option<BigRational> {
    let (p, q) = match s.split_once('/') {
        Some((p, q)) => (p.trim(), q.trim()),
        None => (s, "1"),
    };
    let (p, q) = (BigInt::from_str(p).ok()?, BigInt::from_str(q).ok()?);
    (q != BigInt::from(0)).then(|| BigRational::new(p, q))
}

impl Number {
    pub fn resolve(&self, path: &str) -> Result<Scalar, CliError> {
        match self {
            Number::Int(i) => Ok(Scalar::Exact(BigRational::from_integer(BigInt::from(*i)))),
            Number::Float(v) => Ok(Scalar::Float(*v)),
            Number::Text(s) => {
                let s = s.trim();
                if let Some(q) = parse_rational(s) {
                    return Ok(Scalar::Exact(q));
                }
                s.parse::<f64>()
                    .map(Scalar::Float)
                    .map_err(|_| CliError::config(path, format!("'{s}' is neither an integer, a fraction p/q nor a decimal")))
            }
        }
    }

    fn exact(&self, path: &str) -> Result<BigRational, CliError> {
        match self.resolve(path)? {
            Scalar::Exact(q) => Ok(q),
            Scalar::Float(_) => Err(CliError::config(path, "must be exact: write an integer or a fraction \"p/q\"")),
        }
    }
}

impl From<i64> for Number {
    fn from(v: i64) -> Self {
        Number::Int(v)
    }
}

impl From<&str> for Number {
    fn from(v: &str) -> Self {
        Number::Text(v.into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureConfig {
    /// Row-major matrices, or vectors for the abelian models.
    pub generators: Vec<Vec<Number>>,
    /// Defaults to uniform.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Number>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub a: f64,
    pub scales: Vec<f64>,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { a: 2.0, scales: vec![0.01] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_samples: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self { n_samples: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeparationConfig {
    pub n_max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WalkKind {
    Deterministic,
    Renewal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkConfig {
    pub kind: WalkKind,
    /// Step counts `L_n` for deterministic times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<usize>,
    /// Per-generator costs for renewal times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub costs: Vec<Number>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub thresholds: Vec<Number>,
    pub cap: usize,
    pub a: f64,
    /// Rate in `r_n = exp(-S L_n)`; defaults to `1.1 · max S_k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "one")]
    pub c_g: f64,
    #[serde(default = "default_h_mu_depth")]
    pub h_mu_depth: usize,
    #[serde(default = "default_ldp_epsilon")]
    pub ldp_epsilon: f64,
}

fn default_epsilon() -> f64 {
    0.1
}

fn one() -> f64 {
    1.0
}

fn default_h_mu_depth() -> usize {
    8
}

fn default_ldp_epsilon() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceConfig {
    /// Scales `r` of the witnesses; each certifies radius `2ar`.
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub a_factor: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    /// When both are set, the entropy-gap probe over `[r1, r2]` also runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r2: Option<f64>,
}

fn default_grid() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub sigma: f64,
    pub cubic_constant: f64,
    pub max_entropy_constant: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = liescale::verify::VerifyOptions::default();
        Self { sigma: d.sigma, cubic_constant: d.cubic_constant, max_entropy_constant: d.max_entropy_constant }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    /// `abelian(l)`, `sl2r`, `so3` or `heisenberg3`.
    pub model: String,
    pub measure: MeasureConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub separation: Option<SeparationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk: Option<WalkConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub select: Option<SelectConfig>,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl Default for Config {
    /// The free pair `[[1,2],[0,1]]`, `[[1,0],[2,1]]` on `SL2R`.
    fn default() -> Self {
        let gen = |e: [i64; 4]| e.iter().map(|&v| Number::Int(v)).collect();
        Self {
            seed: 0,
            model: "sl2r".into(),
            measure: MeasureConfig { generators: vec![gen([1, 2, 0, 1]), gen([1, 0, 2, 1])], weights: None },
            kernel: KernelConfig::default(),
            mc: McConfig::default(),
            separation: Some(SeparationConfig { n_max: 6 }),
            walk: Some(WalkConfig {
                kind: WalkKind::Renewal,
                schedule: vec![],
                costs: vec![1.into(), 2.into()],
                thresholds: (2..=12).step_by(2).map(Number::Int).collect(),
                cap: 64,
                a: 2.0,
                s: None,
                epsilon: default_epsilon(),
                c_g: 1.0,
                h_mu_depth: default_h_mu_depth(),
                ldp_epsilon: default_ldp_epsilon(),
            }),
            trace: None,
            select: None,
            verify: VerifyConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::config("config", e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model(&self) -> Result<LieGroupModel, CliError> {
        LieGroupModel::from_str(&self.model).map_err(|e| CliError::config("model", e.to_string()))
    }

    pub fn measure(&self) -> Result<FinSuppMeasure, CliError> {
        let model = self.model()?;
        let m = &self.measure;
        if m.generators.is_empty() {
            return Err(CliError::config("measure.generators", "at least one generator is required"));
        }
        let mut atoms = Vec::with_capacity(m.generators.len());
        for (i, g) in m.generators.iter().enumerate() {
            let path = format!("measure.generators[{i}]");
            if g.len() != model.repr_len() {
                return Err(CliError::config(&path, format!("{model} needs {} entries, got {}", model.repr_len(), g.len())));
            }
            let entries = g
                .iter()
                .enumerate()
                .map(|(j, x)| x.resolve(&format!("{path}[{j}]")))
                .collect::<Result<Vec<_>, _>>()?;
            let element = if entries.iter().all(|e| matches!(e, Scalar::Exact(_))) {
                let exact = entries.into_iter().map(|e| match e {
                    Scalar::Exact(q) => q,
                    Scalar::Float(_) => unreachable!(),
                });
                GroupElement::from_exact(model, exact.collect())
            } else {
                GroupElement::from_f64(model, &entries.iter().map(Scalar::to_f64).collect::<Vec<_>>())
            };
            atoms.push(element.map_err(|e| CliError::config(&path, e.to_string()))?);
        }
        let result = match &m.weights {
            None => FinSuppMeasure::uniform(model, atoms),
            Some(w) => {
                if w.len() != atoms.len() {
                    return Err(CliError::config("measure.weights", format!("{} weights for {} generators", w.len(), atoms.len())));
                }
                let scalars = w
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x.resolve(&format!("measure.weights[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let all_exact = scalars.iter().all(|s| matches!(s, Scalar::Exact(_)));
                let weights = scalars
                    .into_iter()
                    .map(|s| match s {
                        Scalar::Exact(q) if all_exact => Weight::Exact(q),
                        other => Weight::Float(other.to_f64()),
                    })
                    .collect();
                FinSuppMeasure::new(model, atoms, weights)
            }
        };
        result.map_err(|e| CliError::config("measure", e.to_string()))
    }

    /// Kernels for `kernel.scales`, checked against the chart.
    pub fn kernels(&self) -> Result<Vec<SmoothingKernel>, CliError> {
        let model = self.model()?;
        if self.kernel.scales.is_empty() {
            return Err(CliError::config("kernel.scales", "at least one scale is required"));
        }
        self.kernel
            .scales
            .iter()
            .enumerate()
            .map(|(i, &r)| kernel_at(model, self.kernel.a, r, &format!("kernel.scales[{i}]")))
            .collect()
    }

    pub fn stopping_spec(&self, walk: &WalkConfig) -> Result<StoppingTimeSpec, CliError> {
        match walk.kind {
            WalkKind::Deterministic => {
                if walk.schedule.is_empty() {
                    return Err(CliError::config("walk.schedule", "deterministic times need a nonempty schedule"));
                }
                Ok(StoppingTimeSpec::deterministic(walk.schedule.clone(), walk.cap))
            }
            WalkKind::Renewal => {
                if walk.thresholds.is_empty() {
                    return Err(CliError::config("walk.thresholds", "renewal times need at least one threshold"));
                }
                let costs = walk
                    .costs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.exact(&format!("walk.costs[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let thresholds = walk
                    .thresholds
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.exact(&format!("walk.thresholds[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(StoppingTimeSpec::renewal(costs, thresholds, walk.cap))
            }
        }
    }

    /// Checks everything that does not need a command block.
    pub fn validate(&self) -> Result<(), CliError> {
        self.measure()?;
        self.kernels()?;
        if self.mc.n_samples == 0 {
            return Err(CliError::config("mc.n_samples", "must be positive"));
        }
        for (name, v) in [
            ("verify.sigma", self.verify.sigma),
            ("verify.cubic_constant", self.verify.cubic_constant),
            ("verify.max_entropy_constant", self.verify.max_entropy_constant),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(CliError::config(name, format!("tolerances must be nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn kernel_at(model: LieGroupModel, a: f64, r: f64, path: &str) -> Result<SmoothingKernel, CliError> {
    SmoothingKernel::new(model, a, r).map_err(|e| CliError::config(path, e.to_string()))
}
