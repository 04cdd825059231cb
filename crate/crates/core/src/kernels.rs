//! Covariance functions for every emulator variant.
//!
//! The composite model covariance is
//!
//! ```text
//! K_eta((x1,t1),(x2,t2)) = sigma1^2 K_x^phi(x1,x2)
//!                        + sigma2^2 K_x^delta(x1,x2) K_t(t1,t2)
//! ```
//!
//! where the input factors are stationary squared-exponential kernels and the
//! fidelity factor `K_t` is deliberately non-stationary: both fidelity kernel
//! options satisfy `K_t(t, 0) = 0`, so the discrepancy process vanishes at the
//! exact limit `t = 0`, and `K_t(t, t) > 0` whenever any component of `t` is
//! positive, so every inexact run carries discrepancy variance.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Squared-exponential kernel `exp(-sum_s w_s (u_s - v_s)^2)`.
///
/// Equals 1 iff `u == v`; strictly positive everywhere.
pub fn se_kernel(u: &[f64], v: &[f64], weights: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "se_kernel arguments have lengths {}, {}, {}",
            u.len(),
            v.len(),
            weights.len()
        )));
    }
    Ok(se_unchecked(u, v, weights))
}

#[inline]
pub(crate) fn se_unchecked(u: &[f64], v: &[f64], weights: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..u.len() {
        let d = u[i] - v[i];
        s += weights[i] * (d * d);
    }
    (-s).exp()
}

/// First non-stationary fidelity kernel:
///
/// ```text
/// K_t(t1,t2) = exp{-sum_r theta_r (t1r-t2r)^2} - exp{-sum_r theta_r t1r^2}
///            - exp{-sum_r theta_r t2r^2} + 1
/// ```
///
/// This is `Cov[kappa(t1) - kappa(0), kappa(t2) - kappa(0)]` for a
/// unit-variance SE process `kappa`, hence positive semi-definite, zero
/// whenever either argument is the exact limit `0`, and smooth with
/// interactions across fidelity coordinates.
pub fn kernel1_t(t1: &[f64], t2: &[f64], theta: &[f64]) -> Result<f64> {
    if t1.len() != t2.len() || t1.len() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel1_t arguments have lengths {}, {}, {}",
            t1.len(),
            t2.len(),
            theta.len()
        )));
    }
    Ok(kernel1_unchecked(t1, t2, theta))
}

#[inline]
pub(crate) fn kernel1_unchecked(t1: &[f64], t2: &[f64], theta: &[f64]) -> f64 {
    let (mut s12, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for r in 0..t1.len() {
        let d = t1[r] - t2[r];
        s12 += theta[r] * (d * d);
        s1 += theta[r] * (t1[r] * t1[r]);
        s2 += theta[r] * (t2[r] * t2[r]);
    }
    (-s12).exp() - (-s1).exp() - (-s2).exp() + 1.0
}

/// Second non-stationary fidelity kernel:
///
/// ```text
/// K_t(t1,t2) = [sum_r theta_r min(t1r,t2r)^{l_r}]^l
/// ```
///
/// A multi-parameter generalization of Brownian-motion covariance. The
/// exponents encode the error-decay rates of the underlying numerical method;
/// `l = l_r = 2` by default.
pub fn kernel2_t(t1: &[f64], t2: &[f64], theta: &[f64], l_r: &[f64], l: f64) -> Result<f64> {
    if t1.len() != t2.len() || t1.len() != theta.len() || t1.len() != l_r.len() {
        return Err(Error::DimensionMismatch(format!(
            "kernel2_t arguments have lengths {}, {}, {}, {}",
            t1.len(),
            t2.len(),
            theta.len(),
            l_r.len()
        )));
    }
    Ok(kernel2_unchecked(t1, t2, theta, l_r, l))
}

#[inline]
pub(crate) fn kernel2_unchecked(t1: &[f64], t2: &[f64], theta: &[f64], l_r: &[f64], l: f64) -> f64 {
    let mut s = 0.0;
    for r in 0..t1.len() {
        s += theta[r] * t1[r].min(t2[r]).powf(l_r[r]);
    }
    s.powf(l)
}

/// Single-fidelity Brownian-type kernel `min(t1, t2)^l`.
pub fn twy_t(t1: f64, t2: f64, l: f64) -> f64 {
    t1.min(t2).powf(l)
}

/// How a fidelity vector is collapsed to a scalar for the single-fidelity
/// baseline kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityAggregation {
    /// Arithmetic mean of the components.
    Arith,
    /// Geometric mean `(prod t_r)^{1/q}`.
    Geom,
}

/// Collapses a fidelity vector to a scalar.
///
/// In `geom` mode a zero component yields 0 (the limit value of the
/// geometric mean).
pub fn aggregate_fidelity(t: &[f64], mode: FidelityAggregation) -> f64 {
    debug_assert!(!t.is_empty());
    match mode {
        FidelityAggregation::Arith => t.iter().sum::<f64>() / t.len() as f64,
        FidelityAggregation::Geom => {
            let prod: f64 = t.iter().product();
            prod.powf(1.0 / t.len() as f64)
        }
    }
}

/// The emulator variants handled by this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmulatorKind {
    /// Stationary SE GP over the concatenated `(x, t)` coordinates: fidelity
    /// parameters treated as ordinary inputs.
    StandardGp,
    /// Stationary SE GP over `x` alone, trained on single-fidelity runs.
    HighFidelityGp,
    /// Discrepancy kernel `min(s1, s2)^l` on arithmetically aggregated
    /// fidelities.
    TwyArith,
    /// Discrepancy kernel `min(s1, s2)^l` on geometrically aggregated
    /// fidelities.
    TwyGeom,
    /// Composite model with the four-term SE-difference fidelity kernel.
    ConfigK1,
    /// Composite model with the bracketed-min-sum fidelity kernel.
    ConfigK2,
}

impl EmulatorKind {
    /// All variants, in benchmark reporting order.
    pub const ALL: [EmulatorKind; 6] = [
        EmulatorKind::StandardGp,
        EmulatorKind::HighFidelityGp,
        EmulatorKind::TwyArith,
        EmulatorKind::TwyGeom,
        EmulatorKind::ConfigK1,
        EmulatorKind::ConfigK2,
    ];

    /// Kebab-case name used by the CLI and result files.
    pub fn as_str(self) -> &'static str {
        match self {
            EmulatorKind::StandardGp => "standard-gp",
            EmulatorKind::HighFidelityGp => "high-fidelity-gp",
            EmulatorKind::TwyArith => "twy-arith",
            EmulatorKind::TwyGeom => "twy-geom",
            EmulatorKind::ConfigK1 => "config-k1",
            EmulatorKind::ConfigK2 => "config-k2",
        }
    }

    /// Whether the model carries the `sigma2^2 K_x^delta K_t` discrepancy
    /// term (and therefore the `alpha` weights and a fidelity kernel).
    pub fn has_discrepancy(self) -> bool {
        !matches!(self, EmulatorKind::StandardGp | EmulatorKind::HighFidelityGp)
    }

    /// The aggregation used by the single-fidelity baseline kernels.
    pub fn aggregation(self) -> Option<FidelityAggregation> {
        match self {
            EmulatorKind::TwyArith => Some(FidelityAggregation::Arith),
            EmulatorKind::TwyGeom => Some(FidelityAggregation::Geom),
            _ => None,
        }
    }
}

impl fmt::Display for EmulatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmulatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmulatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = EmulatorKind::ALL.iter().map(|k| k.as_str()).collect();
                Error::InvalidArgument(format!("unknown model {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Every covariance hyperparameter plus the mean coefficients.
///
/// Which fields are in play depends on the [`EmulatorKind`]; unused vector
/// blocks must be empty and an unused `sigma2_sq` must be 0 (checked by
/// [`KernelParams::validate`]). `beta` stays empty until a fit supplies it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    /// Mean coefficients for the regression basis (length `m`, or empty).
    pub beta: Vec<f64>,
    /// Input weights of the limit-surface kernel `K_x^phi` (length `p`).
    pub gamma: Vec<f64>,
    /// Input weights of the discrepancy kernel `K_x^delta` (length `p`).
    pub alpha: Vec<f64>,
    /// Fidelity weights of `K_t` (length `q`). For `standard-gp` these are
    /// the SE weights of the fidelity coordinates.
    pub theta: Vec<f64>,
    /// Variance of the limit-surface process.
    pub sigma1_sq: f64,
    /// Variance scale of the discrepancy process.
    pub sigma2_sq: f64,
    /// Outer exponent of the Brownian-type kernels (`twy-*`, `config-k2`).
    pub l: f64,
    /// Per-coordinate exponents of the second fidelity kernel (length `q`
    /// for `config-k2`, empty otherwise).
    pub l_r: Vec<f64>,
}

impl KernelParams {
    /// Unit-weight starting values appropriate for `model` at the given
    /// dimensions.
    pub fn defaults(model: EmulatorKind, p: usize, q: usize) -> KernelParams {
        let has_delta = model.has_discrepancy();
        let uses_theta = matches!(model, EmulatorKind::StandardGp | EmulatorKind::ConfigK1 | EmulatorKind::ConfigK2);
        KernelParams {
            beta: Vec::new(),
            gamma: vec![1.0; p],
            alpha: if has_delta { vec![1.0; p] } else { Vec::new() },
            theta: if uses_theta { vec![1.0; q] } else { Vec::new() },
            sigma1_sq: 1.0,
            sigma2_sq: if has_delta { 1.0 } else { 0.0 },
            l: 2.0,
            l_r: if model == EmulatorKind::ConfigK2 { vec![2.0; q] } else { Vec::new() },
        }
    }

    /// Checks that exactly the parameter blocks used by `model` are present,
    /// correctly sized, and positive.
    pub fn validate(&self, model: EmulatorKind, p: usize, q: usize) -> Result<()> {
        let block = |name: &str, v: &[f64], want: usize| -> Result<()> {
            if v.len() != want {
                return Err(Error::InvalidArgument(format!(
                    "{model}: {name} has length {}, expected {want}",
                    v.len()
                )));
            }
            if let Some(bad) = v.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
                return Err(Error::InvalidArgument(format!("{model}: {name} entry {bad} must be positive")));
            }
            Ok(())
        };
        block("gamma", &self.gamma, p)?;
        if !(self.sigma1_sq > 0.0 && self.sigma1_sq.is_finite()) {
            return Err(Error::InvalidArgument(format!("{model}: sigma1_sq {} must be positive", self.sigma1_sq)));
        }
        if model.has_discrepancy() {
            block("alpha", &self.alpha, p)?;
            // sigma2_sq = 0 is permitted as the degenerate no-discrepancy
            // limit (the composite collapses to the limit-surface GP).
            if !(self.sigma2_sq >= 0.0 && self.sigma2_sq.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{model}: sigma2_sq {} must be nonnegative",
                    self.sigma2_sq
                )));
            }
        } else {
            block("alpha", &self.alpha, 0)?;
            if self.sigma2_sq != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{model} has no discrepancy term; sigma2_sq must be 0, got {}",
                    self.sigma2_sq
                )));
            }
        }
        match model {
            EmulatorKind::StandardGp | EmulatorKind::ConfigK1 => block("theta", &self.theta, q)?,
            EmulatorKind::ConfigK2 => {
                block("theta", &self.theta, q)?;
                block("l_r", &self.l_r, q)?;
            }
            _ => block("theta", &self.theta, 0)?,
        }
        if model != EmulatorKind::ConfigK2 {
            block("l_r", &self.l_r, 0)?;
        }
        if matches!(model, EmulatorKind::TwyArith | EmulatorKind::TwyGeom | EmulatorKind::ConfigK2)
            && !(self.l > 0.0 && self.l.is_finite())
        {
            return Err(Error::InvalidArgument(format!("{model}: exponent l {} must be positive", self.l)));
        }
        Ok(())
    }
}

/// Full model covariance between two runs `(x1, t1)` and `(x2, t2)`.
///
/// This is the scalar reference implementation; matrix assembly routes
/// through cached per-dimension distance tables but must agree with this
/// function to machine precision.
pub fn composite_kernel(
    model: EmulatorKind,
    params: &KernelParams,
    x1: &[f64],
    t1: &[f64],
    x2: &[f64],
    t2: &[f64],
) -> Result<f64> {
    if x1.len() != x2.len() || t1.len() != t2.len() {
        return Err(Error::DimensionMismatch(format!(
            "point dimensions disagree: x {} vs {}, t {} vs {}",
            x1.len(),
            x2.len(),
            t1.len(),
            t2.len()
        )));
    }
    params.validate(model, x1.len(), t1.len())?;
    let value = match model {
        EmulatorKind::StandardGp => {
            let kx = se_unchecked(x1, x2, &params.gamma);
            let kt = se_unchecked(t1, t2, &params.theta);
            params.sigma1_sq * kx * kt
        }
        EmulatorKind::HighFidelityGp => params.sigma1_sq * se_unchecked(x1, x2, &params.gamma),
        EmulatorKind::TwyArith | EmulatorKind::TwyGeom => {
            let mode = model.aggregation().unwrap();
            let s1 = aggregate_fidelity(t1, mode);
            let s2 = aggregate_fidelity(t2, mode);
            params.sigma1_sq * se_unchecked(x1, x2, &params.gamma)
                + params.sigma2_sq * se_unchecked(x1, x2, &params.alpha) * twy_t(s1, s2, params.l)
        }
        EmulatorKind::ConfigK1 => {
            params.sigma1_sq * se_unchecked(x1, x2, &params.gamma)
                + params.sigma2_sq
                    * se_unchecked(x1, x2, &params.alpha)
                    * kernel1_unchecked(t1, t2, &params.theta)
        }
        EmulatorKind::ConfigK2 => {
            params.sigma1_sq * se_unchecked(x1, x2, &params.gamma)
                + params.sigma2_sq
                    * se_unchecked(x1, x2, &params.alpha)
                    * kernel2_unchecked(t1, t2, &params.theta, &params.l_r, params.l)
        }
    };
    Ok(value)
}
