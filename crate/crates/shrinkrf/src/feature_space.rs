//! Random-feature families: parameter sampling, bounded feature evaluation,
//! and closed-form kernels where they exist.
//!
//! A family is a prior over parameters `w` together with a feature map
//! `psi(x; w)` bounded by 1 in absolute value. Products of features at two
//! inputs are unbiased estimates of the kernel, which is the only way the
//! learner in this crate ever touches the kernel. Families with a closed-form
//! kernel double as test oracles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// An input point: a fixed-dimension real vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Example {
    features: Vec<f64>,
}

impl Example {
    pub fn new(features: Vec<f64>) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::InvalidParameter("example dimension must be >= 1".into()));
        }
        if !features.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "example coordinates".into(),
            });
        }
        Ok(Self { features })
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }
}

/// A sampled feature parameter. The payload shape is family-specific.
#[derive(Debug, Clone, PartialEq)]
pub enum Weight {
    /// Direction plus phase offset, for the cosine family.
    Cosine { direction: Vec<f64>, phase: f64 },
    /// Direction only, for neuron-style families.
    Neuron { direction: Vec<f64> },
    /// The constant family carries no parameters.
    Unit,
}

/// Flat, config- and checkpoint-facing description of a family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub id: String,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

/// A random-feature family: sampleable parameter prior plus bounded feature map.
///
/// Every family guarantees `|evaluate| <= 1` for all sampled weights and all
/// inputs. `cosine-rff` and `sign-neuron` admit closed-form kernels and serve
/// as oracles in tests; `tanh-neuron` does not. `const-one` is a degenerate
/// diagnostic family whose feature map is identically 1.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureFamily {
    /// `psi(x; (w, b)) = cos(w.x + b)` with `w ~ N(0, I/sigma^2)`,
    /// `b ~ Unif[0, 2pi)`. Kernel: `0.5 * exp(-|x1-x2|^2 / (2 sigma^2))`.
    CosineRff { dim: usize, sigma: f64 },
    /// `psi(x; w) = sign(w.x)` with `w ~ N(0, I)` and `sign(0) := +1`.
    /// Kernel: `1 - 2 theta / pi` with `theta` the angle between inputs.
    SignNeuron { dim: usize },
    /// `psi(x; w) = tanh(w.x)` with `w ~ N(0, I)`. No closed-form kernel.
    TanhNeuron { dim: usize },
    /// `psi == 1`. Kernel is identically 1.
    ConstOne { dim: usize },
}

impl FeatureFamily {
    pub fn from_spec(spec: &FamilySpec) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::Config("family dim must be >= 1".into()));
        }
        let needs_sigma = spec.id == "cosine-rff";
        match (&spec.sigma, needs_sigma) {
            (None, true) => {
                return Err(Error::Config("cosine-rff requires sigma > 0".into()));
            }
            (Some(_), false) => {
                return Err(Error::Config(format!(
                    "family {} takes no sigma parameter",
                    spec.id
                )));
            }
            _ => {}
        }
        match spec.id.as_str() {
            "cosine-rff" => {
                let sigma = spec.sigma.unwrap();
                if !(sigma > 0.0) || !sigma.is_finite() {
                    return Err(Error::Config("cosine-rff requires sigma > 0".into()));
                }
                Ok(FeatureFamily::CosineRff { dim: spec.dim, sigma })
            }
            "sign-neuron" => Ok(FeatureFamily::SignNeuron { dim: spec.dim }),
            "tanh-neuron" => Ok(FeatureFamily::TanhNeuron { dim: spec.dim }),
            "const-one" => Ok(FeatureFamily::ConstOne { dim: spec.dim }),
            other => Err(Error::Config(format!(
                "unknown family id {other:?}; expected one of cosine-rff, sign-neuron, tanh-neuron, const-one"
            ))),
        }
    }

    pub fn to_spec(&self) -> FamilySpec {
        match self {
            FeatureFamily::CosineRff { dim, sigma } => FamilySpec {
                id: "cosine-rff".into(),
                dim: *dim,
                sigma: Some(*sigma),
            },
            FeatureFamily::SignNeuron { dim } => FamilySpec {
                id: "sign-neuron".into(),
                dim: *dim,
                sigma: None,
            },
            FeatureFamily::TanhNeuron { dim } => FamilySpec {
                id: "tanh-neuron".into(),
                dim: *dim,
                sigma: None,
            },
            FeatureFamily::ConstOne { dim } => FamilySpec {
                id: "const-one".into(),
                dim: *dim,
                sigma: None,
            },
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            FeatureFamily::CosineRff { .. } => "cosine-rff",
            FeatureFamily::SignNeuron { .. } => "sign-neuron",
            FeatureFamily::TanhNeuron { .. } => "tanh-neuron",
            FeatureFamily::ConstOne { .. } => "const-one",
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            FeatureFamily::CosineRff { dim, .. }
            | FeatureFamily::SignNeuron { dim }
            | FeatureFamily::TanhNeuron { dim }
            | FeatureFamily::ConstOne { dim } => *dim,
        }
    }

    pub fn has_exact_kernel(&self) -> bool {
        !matches!(self, FeatureFamily::TanhNeuron { .. })
    }

    /// Draw one parameter from the family prior.
    pub fn sample_weight(&self, rng: &mut RngStream) -> Weight {
        match self {
            FeatureFamily::CosineRff { dim, sigma } => {
                let direction = (0..*dim).map(|_| rng.normal() / sigma).collect();
                let phase = rng.uniform_in(0.0, std::f64::consts::TAU);
                Weight::Cosine { direction, phase }
            }
            FeatureFamily::SignNeuron { dim } | FeatureFamily::TanhNeuron { dim } => Weight::Neuron {
                direction: rng.normal_vec(*dim),
            },
            FeatureFamily::ConstOne { .. } => Weight::Unit,
        }
    }

    /// Evaluate `psi(x; w)`. Always in `[-1, 1]`.
    pub fn evaluate(&self, w: &Weight, x: &Example) -> Result<f64> {
        match (self, w) {
            (FeatureFamily::CosineRff { .. }, Weight::Cosine { direction, phase }) => {
                Ok((dot(direction, x.features())? + phase).cos())
            }
            (FeatureFamily::SignNeuron { .. }, Weight::Neuron { direction }) => {
                let d = dot(direction, x.features())?;
                // sign(0) := +1 keeps the map total; measure-zero event.
                Ok(if d >= 0.0 { 1.0 } else { -1.0 })
            }
            (FeatureFamily::TanhNeuron { .. }, Weight::Neuron { direction }) => {
                Ok(dot(direction, x.features())?.tanh())
            }
            (FeatureFamily::ConstOne { dim }, Weight::Unit) => {
                if x.dim() != *dim {
                    return Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: x.dim(),
                    });
                }
                Ok(1.0)
            }
            _ => Err(Error::FamilyMismatch {
                family: self.id().into(),
            }),
        }
    }

    /// Closed-form kernel `E_w[psi(x1;w) psi(x2;w)]`, when the family has one.
    ///
    /// Returns `Ok(None)` for families without a closed form (`tanh-neuron`).
    pub fn exact_kernel(&self, x1: &Example, x2: &Example) -> Result<Option<f64>> {
        self.check_dim(x1)?;
        self.check_dim(x2)?;
        match self {
            FeatureFamily::CosineRff { sigma, .. } => {
                let d2: f64 = x1
                    .features()
                    .iter()
                    .zip(x2.features())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                Ok(Some(0.5 * (-d2 / (2.0 * sigma * sigma)).exp()))
            }
            FeatureFamily::SignNeuron { .. } => {
                let n1 = norm(x1.features());
                let n2 = norm(x2.features());
                if n1 == 0.0 || n2 == 0.0 {
                    return Err(Error::ZeroVectorAngle);
                }
                let cos_theta = (dot(x1.features(), x2.features())? / (n1 * n2)).clamp(-1.0, 1.0);
                let theta = cos_theta.acos();
                Ok(Some(1.0 - 2.0 * theta / std::f64::consts::PI))
            }
            FeatureFamily::TanhNeuron { .. } => Ok(None),
            FeatureFamily::ConstOne { .. } => Ok(Some(1.0)),
        }
    }

    /// Same as [`exact_kernel`](Self::exact_kernel) but failing when the
    /// family has no closed form.
    pub fn require_exact_kernel(&self, x1: &Example, x2: &Example) -> Result<f64> {
        self.exact_kernel(x1, x2)?.ok_or_else(|| Error::KernelUnavailable {
            family: self.id().into(),
        })
    }

    /// Monte-Carlo kernel estimate from `n` fresh weights; unbiased for the
    /// exact kernel.
    pub fn monte_carlo_kernel(
        &self,
        x1: &Example,
        x2: &Example,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidParameter("monte_carlo_kernel needs n >= 1".into()));
        }
        let mut sum = 0.0;
        for _ in 0..n {
            let w = self.sample_weight(rng);
            sum += self.evaluate(&w, x1)? * self.evaluate(&w, x2)?;
        }
        Ok(sum / n as f64)
    }

    fn check_dim(&self, x: &Example) -> Result<()> {
        if x.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.dim(),
            });
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
