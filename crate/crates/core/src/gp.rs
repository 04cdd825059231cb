//! Covariance assembly, factorization, log-likelihood, and prediction.
//!
//! Everything here goes through one Cholesky factorization of the training
//! covariance; no matrix inverse is ever formed explicitly. Solves against
//! the factor are two triangular substitutions, and predictive variances use
//! the forward substitution alone (`var = k** - ||L^-1 k*||^2`).

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{aggregate_fidelity, composite_kernel, twy_t, EmulatorKind, KernelParams};

/// Natural log of 2*pi, used by the likelihood constant.
pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Assembles the full `n x n` training covariance `K_eta` entry by entry via
/// the scalar [`composite_kernel`].
///
/// This is the reference route: simple, obviously faithful to the kernel
/// definitions, and the yardstick the cached fast path used by inference is
/// tested against. Fine for occasional use; fitting loops use the cached
/// route internally.
pub fn assemble_covariance(data: &Dataset, params: &KernelParams, model: EmulatorKind) -> Result<DMatrix<f64>> {
    params.validate(model, data.p(), data.q())?;
    let n = data.n();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = composite_kernel(model, params, data.x(i), data.t(i), data.x(j), data.t(j))?;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Cholesky factorization with jitter escalation
// ---------------------------------------------------------------------------

/// Lower-triangular Cholesky factor of a covariance matrix, together with the
/// diagonal jitter that made the factorization succeed and the
/// log-determinant of the jittered matrix.
#[derive(Debug, Clone)]
pub struct CovFactorization {
    n: usize,
    /// Row-major `n x n`; entries above the diagonal are zero.
    l: Vec<f64>,
    /// Nonnegative value added to every diagonal entry before factorization.
    pub jitter: f64,
    /// `log det(Sigma + jitter*I)`, i.e. twice the sum of log diagonal
    /// entries of the factor.
    pub log_det: f64,
}

impl CovFactorization {
    /// Matrix order.
    pub fn n(&self) -> usize {
        self.n
    }

    /// The factor as a dense lower-triangular matrix.
    pub fn lower(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| if j <= i { self.l[i * self.n + j] } else { 0.0 })
    }

    /// Solves `L z = b` in place (forward substitution).
    pub fn forward_solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let row = &self.l[i * n..i * n + i];
            let s: f64 = row.iter().zip(&b[..i]).map(|(a, c)| a * c).sum();
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `L' x = b` in place (back substitution).
    pub fn back_solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        for i in (0..n).rev() {
            let mut s = 0.0;
            for k in (i + 1)..n {
                s += self.l[k * n + i] * b[k];
            }
            b[i] = (b[i] - s) / self.l[i * n + i];
        }
    }

    /// Solves `(L L') x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        self.forward_solve_in_place(b);
        self.back_solve_in_place(b);
    }

    /// Solves `(L L') x = b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.as_slice().to_vec();
        self.solve_in_place(&mut x);
        DVector::from_vec(x)
    }

    /// Quadratic form `v' Sigma^-1 v` computed as `||L^-1 v||^2`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let mut z = v.to_vec();
        self.forward_solve_in_place(&mut z);
        z.iter().map(|e| e * e).sum()
    }
}

/// Attempts an in-place Cholesky of a row-major symmetric matrix with
/// `extra` added to the diagonal; returns the row-major factor and the
/// log-determinant, or `None` when a pivot does not exceed `pivot_floor`.
///
/// `pivot_floor = 0` accepts any positive pivot (covariance factorization);
/// a relative floor catches exact rank deficiency that cancellation would
/// otherwise leave at a tiny positive value (basis Gram matrices).
fn try_cholesky(a: &[f64], n: usize, extra: f64, pivot_floor: f64) -> Option<(Vec<f64>, f64)> {
    let mut l = vec![0.0; n * n];
    let mut log_det = 0.0;
    for j in 0..n {
        let s: f64 = l[j * n..j * n + j].iter().map(|e| e * e).sum();
        let d = a[j * n + j] + extra - s;
        if !(d > pivot_floor) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[j * n + j] = ljj;
        log_det += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let (head, tail) = l.split_at(i * n);
            let s: f64 = head[j * n..j * n + j].iter().zip(&tail[..j]).map(|(a, b)| a * b).sum();
            l[i * n + j] = (a[i * n + j] - s) / ljj;
        }
    }
    Some((l, log_det))
}

/// Factors a row-major symmetric matrix under the jitter policy: first try
/// jitter 0, then `1e-10 * mean(diag)` escalating by factors of 10 up to
/// `1e-4 * mean(diag)`.
pub(crate) fn factor_flat(a: &[f64], n: usize) -> Result<CovFactorization> {
    debug_assert_eq!(a.len(), n * n);
    let mean_diag = (0..n).map(|i| a[i * n + i]).sum::<f64>() / n as f64;
    let mut jitters = vec![0.0];
    if mean_diag > 0.0 && mean_diag.is_finite() {
        let mut j = 1e-10 * mean_diag;
        let cap = 1e-4 * mean_diag;
        while j <= cap * (1.0 + 1e-12) {
            jitters.push(j);
            j *= 10.0;
        }
    }
    for &jitter in &jitters {
        if let Some((l, log_det)) = try_cholesky(a, n, jitter, 0.0) {
            return Ok(CovFactorization { n, l, jitter, log_det });
        }
    }
    Err(Error::SingularCovariance(describe_singular(a, n, mean_diag)))
}

/// Builds the failure message, naming a (near-)identical row pair when one
/// exists — the typical culprit is a duplicated design point.
fn describe_singular(a: &[f64], n: usize, mean_diag: f64) -> String {
    let tol = 1e-10 * mean_diag.abs().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            let close = (0..n).all(|k| (a[i * n + k] - a[j * n + k]).abs() <= tol);
            if close {
                return format!(
                    "matrix is singular beyond the maximum jitter; rows {i} and {j} are \
                     (near-)identical — likely duplicated design points"
                );
            }
        }
    }
    "matrix could not be factored at the maximum jitter of 1e-4 * mean(diag)".to_string()
}

/// Factors a symmetric positive (semi-)definite matrix under the jitter
/// policy. See [`factor_flat`] for the escalation schedule.
pub fn cholesky_factor(sigma: &DMatrix<f64>) -> Result<CovFactorization> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            n,
            sigma.ncols()
        )));
    }
    let scale = sigma.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in (i + 1)..n {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-8 * scale.max(1.0) {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i},{j}): {} vs {}",
                    sigma[(i, j)],
                    sigma[(j, i)]
                )));
            }
        }
    }
    // Row-major and column-major layouts coincide for a symmetric matrix.
    factor_flat(sigma.as_slice(), n)
}

// ---------------------------------------------------------------------------
// Cached covariance assembly for fitting loops
// ---------------------------------------------------------------------------

/// Precomputed per-dimension distance tables for one dataset and model.
///
/// Hyperparameter search evaluates the covariance at many parameter values
/// over a fixed dataset; everything that does not depend on the weights —
/// squared input differences, squared fidelities, `min(t1r,t2r)^{l_r}`
/// tables, aggregated-fidelity kernels — is computed once here. The fill
/// methods mirror the scalar [`composite_kernel`] arithmetic operation for
/// operation so the two routes agree bit for bit.
pub(crate) struct CovWorkspace {
    n: usize,
    model: EmulatorKind,
    /// Per input dimension `s`: row-major `(x_is - x_js)^2`.
    dx2: Vec<Vec<f64>>,
    /// Per fidelity dimension `r`: row-major `(t_ir - t_jr)^2`
    /// (standard-gp and the four-term kernel).
    dt2: Vec<Vec<f64>>,
    /// Per run, per fidelity dimension: `t_ir^2` (four-term kernel).
    tsq: Vec<f64>,
    /// Per fidelity dimension `r`: row-major `min(t_ir, t_jr)^{l_r}`
    /// (bracketed-min-sum kernel; exponents fixed at construction).
    minpow: Vec<Vec<f64>>,
    /// Row-major `min(s_i, s_j)^l` over aggregated fidelities
    /// (single-fidelity baseline kernels; `l` fixed at construction).
    aggmin: Vec<f64>,
    scratch_a: Vec<f64>,
    scratch_b: Vec<f64>,
}

impl CovWorkspace {
    /// Builds the tables needed by `model`. Exponents (`params.l`,
    /// `params.l_r`) are read here and must not change across later fills;
    /// weight and variance parameters are supplied per fill.
    pub(crate) fn new(data: &Dataset, model: EmulatorKind, params: &KernelParams) -> CovWorkspace {
        let (n, p, q) = (data.n(), data.p(), data.q());
        let pair_table = |f: &dyn Fn(usize, usize) -> f64| -> Vec<f64> {
            let mut m = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = f(i, j);
                    m[i * n + j] = v;
                    m[j * n + i] = v;
                }
            }
            m
        };
        let dx2: Vec<Vec<f64>> = (0..p)
            .map(|s| {
                pair_table(&|i, j| {
                    let d = data.x(i)[s] - data.x(j)[s];
                    d * d
                })
            })
            .collect();
        let mut dt2 = Vec::new();
        let mut tsq = Vec::new();
        let mut minpow = Vec::new();
        let mut aggmin = Vec::new();
        match model {
            EmulatorKind::StandardGp => {
                dt2 = fidelity_diff_tables(data, &pair_table);
            }
            EmulatorKind::HighFidelityGp => {}
            EmulatorKind::TwyArith | EmulatorKind::TwyGeom => {
                let mode = model.aggregation().unwrap();
                let s: Vec<f64> = (0..n).map(|i| aggregate_fidelity(data.t(i), mode)).collect();
                aggmin = pair_table(&|i, j| twy_t(s[i], s[j], params.l));
            }
            EmulatorKind::ConfigK1 => {
                dt2 = fidelity_diff_tables(data, &pair_table);
                tsq = (0..n)
                    .flat_map(|i| data.t(i).iter().map(|t| t * t).collect::<Vec<_>>())
                    .collect();
            }
            EmulatorKind::ConfigK2 => {
                minpow = (0..q)
                    .map(|r| pair_table(&|i, j| data.t(i)[r].min(data.t(j)[r]).powf(params.l_r[r])))
                    .collect();
            }
        }
        CovWorkspace {
            n,
            model,
            dx2,
            dt2,
            tsq,
            minpow,
            aggmin,
            scratch_a: vec![0.0; n * n],
            scratch_b: vec![0.0; n * n],
        }
    }

    /// Fills `out` (row-major `n x n`) with `exp(-sum_s w_s dx2_s)`.
    pub(crate) fn se_x_into(&self, weights: &[f64], out: &mut [f64]) {
        let n = self.n;
        debug_assert_eq!(weights.len(), self.dx2.len());
        for i in 0..n {
            for j in i..n {
                let idx = i * n + j;
                let mut s = 0.0;
                for (w, table) in weights.iter().zip(&self.dx2) {
                    s += w * table[idx];
                }
                out[idx] = (-s).exp();
            }
        }
        mirror_upper(out, n);
    }

    /// Fills `out` with the model's fidelity kernel `K_t` at weights `theta`
    /// (ignored by the single-fidelity baselines, whose table is fixed).
    pub(crate) fn kt_into(&self, params: &KernelParams, out: &mut [f64]) {
        let n = self.n;
        match self.model {
            EmulatorKind::StandardGp => {
                // SE factor over the fidelity coordinates.
                for i in 0..n {
                    for j in i..n {
                        let idx = i * n + j;
                        let mut s = 0.0;
                        for (w, table) in params.theta.iter().zip(&self.dt2) {
                            s += w * table[idx];
                        }
                        out[idx] = (-s).exp();
                    }
                }
                mirror_upper(out, n);
            }
            EmulatorKind::HighFidelityGp => out.fill(1.0),
            EmulatorKind::TwyArith | EmulatorKind::TwyGeom => out.copy_from_slice(&self.aggmin),
            EmulatorKind::ConfigK1 => {
                let q = self.dt2.len();
                let edge: Vec<f64> = (0..n)
                    .map(|i| {
                        let mut s = 0.0;
                        for r in 0..q {
                            s += params.theta[r] * self.tsq[i * q + r];
                        }
                        (-s).exp()
                    })
                    .collect();
                for i in 0..n {
                    for j in i..n {
                        let idx = i * n + j;
                        let mut s = 0.0;
                        for (w, table) in params.theta.iter().zip(&self.dt2) {
                            s += w * table[idx];
                        }
                        out[idx] = (-s).exp() - edge[i] - edge[j] + 1.0;
                    }
                }
                mirror_upper(out, n);
            }
            EmulatorKind::ConfigK2 => {
                for i in 0..n {
                    for j in i..n {
                        let idx = i * n + j;
                        let mut s = 0.0;
                        for (w, table) in params.theta.iter().zip(&self.minpow) {
                            s += w * table[idx];
                        }
                        out[idx] = s.powf(params.l);
                    }
                }
                mirror_upper(out, n);
            }
        }
    }

    /// Fills `out` with the full training covariance at `params`, matching
    /// [`assemble_covariance`] bit for bit.
    pub(crate) fn sigma_into(&mut self, params: &KernelParams, out: &mut [f64]) {
        let n = self.n;
        match self.model {
            EmulatorKind::StandardGp => {
                self.se_x_into(&params.gamma, out);
                let mut kt = std::mem::take(&mut self.scratch_a);
                self.kt_into(params, &mut kt);
                for idx in 0..n * n {
                    out[idx] = (params.sigma1_sq * out[idx]) * kt[idx];
                }
                self.scratch_a = kt;
            }
            EmulatorKind::HighFidelityGp => {
                self.se_x_into(&params.gamma, out);
                for v in out.iter_mut() {
                    *v *= params.sigma1_sq;
                }
            }
            _ => {
                let mut kphi = std::mem::take(&mut self.scratch_a);
                let mut kdelta = std::mem::take(&mut self.scratch_b);
                self.se_x_into(&params.gamma, &mut kphi);
                self.se_x_into(&params.alpha, &mut kdelta);
                self.kt_into(params, out);
                for idx in 0..n * n {
                    out[idx] = params.sigma1_sq * kphi[idx] + (params.sigma2_sq * kdelta[idx]) * out[idx];
                }
                self.scratch_a = kphi;
                self.scratch_b = kdelta;
            }
        }
    }

    /// Convenience wrapper allocating the output buffer.
    pub(crate) fn sigma_flat(&mut self, params: &KernelParams) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        self.sigma_into(params, &mut out);
        out
    }
}

fn fidelity_diff_tables(data: &Dataset, pair_table: &dyn Fn(&dyn Fn(usize, usize) -> f64) -> Vec<f64>) -> Vec<Vec<f64>> {
    (0..data.q())
        .map(|r| {
            pair_table(&|i, j| {
                let d = data.t(i)[r] - data.t(j)[r];
                d * d
            })
        })
        .collect()
}

fn mirror_upper(buf: &mut [f64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            buf[j * n + i] = buf[i * n + j];
        }
    }
}

// ---------------------------------------------------------------------------
// Log-likelihood
// ---------------------------------------------------------------------------

/// Infers the regression basis from the length of a fitted `beta`.
///
/// Lengths 1, `1+p`, and `1+p+q` are distinct for valid dimensions, so a
/// `beta` identifies its basis unambiguously; an empty `beta` means a zero
/// mean. Any other length is a dimension error.
pub(crate) fn basis_from_beta(beta_len: usize, p: usize, q: usize) -> Result<Option<BasisSpec>> {
    if beta_len == 0 {
        Ok(None)
    } else if beta_len == 1 {
        Ok(Some(BasisSpec::Constant))
    } else if beta_len == 1 + p {
        Ok(Some(BasisSpec::LinearInX))
    } else if beta_len == 1 + p + q {
        Ok(Some(BasisSpec::LinearInXT))
    } else {
        Err(Error::DimensionMismatch(format!(
            "beta has length {beta_len}; expected 0 (zero mean), 1, 1+p={}, or 1+p+q={}",
            1 + p,
            1 + p + q
        )))
    }
}

/// Gaussian log-likelihood of the data under the model at `params`:
///
/// ```text
/// -(n/2) log(2 pi) - (1/2) log det Sigma - (1/2) (y-F beta)' Sigma^-1 (y-F beta)
/// ```
///
/// The `2 pi` constant is included so reported values are comparable across
/// tools. The basis is inferred from `params.beta` (see the length rules of
/// the crate: 1 = constant, 1+p = linear in x, 1+p+q = linear in x and t;
/// empty means a zero mean). Factorization follows the jitter policy.
pub fn log_likelihood(data: &Dataset, params: &KernelParams, model: EmulatorKind) -> Result<f64> {
    params.validate(model, data.p(), data.q())?;
    let n = data.n();
    let mut ws = CovWorkspace::new(data, model, params);
    let sigma = ws.sigma_flat(params);
    let factor = factor_flat(&sigma, n)?;
    let resid = residual(data, params)?;
    let quad = factor.quad_form(&resid);
    Ok(-0.5 * (n as f64) * LN_2PI - 0.5 * factor.log_det - 0.5 * quad)
}

/// `y - F beta` under the basis inferred from `beta` (or `y` for zero mean).
fn residual(data: &Dataset, params: &KernelParams) -> Result<Vec<f64>> {
    let mut resid = data.y().to_vec();
    if let Some(basis) = basis_from_beta(params.beta.len(), data.p(), data.q())? {
        let f = basis.matrix(data);
        let beta = DVector::from_column_slice(&params.beta);
        let mean = &f * &beta;
        for i in 0..data.n() {
            resid[i] -= mean[i];
        }
    }
    Ok(resid)
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Which predictive variance to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UqMode {
    /// Conditional variance with the mean coefficients held fixed.
    PlugIn,
    /// Adds the variance inflation from estimating the mean coefficients by
    /// generalized least squares:
    /// `u' (F' Sigma^-1 F)^-1 u` with `u = f(x*) - F' Sigma^-1 k*`.
    BasisAdjusted,
}

/// Predictive mean, variance, and central 95% interval at one test point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveDistribution {
    pub mean: f64,
    /// Nonnegative; tiny negative values from cancellation are clamped to 0.
    pub variance: f64,
    /// `mean -+ 1.96 * sqrt(variance)`.
    pub interval95: (f64, f64),
}

impl PredictiveDistribution {
    pub(crate) fn new(mean: f64, variance: f64) -> PredictiveDistribution {
        let variance = variance.max(0.0);
        let half = 1.96 * variance.sqrt();
        PredictiveDistribution { mean, variance, interval95: (mean - half, mean + half) }
    }

    /// Whether a value lies inside the 95% interval.
    pub fn covers(&self, value: f64) -> bool {
        value >= self.interval95.0 && value <= self.interval95.1
    }
}

/// A fitted GP predictor: one factorization of the training covariance plus
/// the solves shared by every test point.
///
/// Build once per (data, params) pair and reuse across test points; the
/// convenience function [`predict`] wraps this for one-off calls.
#[derive(Debug, Clone)]
pub struct Predictor {
    model: EmulatorKind,
    params: KernelParams,
    basis: BasisSpec,
    data: Dataset,
    factor: CovFactorization,
    /// `Sigma^-1 (y - F beta)` with the supplied beta (zeros if absent).
    alpha_plug: Vec<f64>,
    /// Beta used for the plug-in mean (supplied, or zeros).
    beta_plug: DVector<f64>,
    /// GLS estimate `(F' Sigma^-1 F)^-1 F' Sigma^-1 y`.
    beta_gls: DVector<f64>,
    /// `Sigma^-1 (y - F beta_gls)`.
    alpha_gls: Vec<f64>,
    /// `Sigma^-1 F`, one column per basis function.
    kinv_f: DMatrix<f64>,
    /// Cholesky factor of `F' Sigma^-1 F`.
    fkf_factor: CovFactorization,
}

impl Predictor {
    /// Factors the training covariance and precomputes the mean solves.
    ///
    /// `basis` defaults to the basis inferred from `params.beta` when one is
    /// present, else to the model default. A supplied nonempty `params.beta`
    /// must match the basis length.
    pub fn fit(data: &Dataset, params: &KernelParams, model: EmulatorKind, basis: Option<BasisSpec>) -> Result<Predictor> {
        params.validate(model, data.p(), data.q())?;
        let basis = match basis {
            Some(b) => b,
            None => basis_from_beta(params.beta.len(), data.p(), data.q())?.unwrap_or(BasisSpec::default_for(model)),
        };
        let m = basis.m(data.p(), data.q());
        if !params.beta.is_empty() && params.beta.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "beta has length {}, basis {basis:?} needs {m}",
                params.beta.len()
            )));
        }
        let n = data.n();
        if n < m {
            return Err(Error::Estimation(format!(
                "n = {n} training runs cannot identify {m} basis coefficients"
            )));
        }
        let mut ws = CovWorkspace::new(data, model, params);
        let sigma = ws.sigma_flat(params);
        let factor = factor_flat(&sigma, n)?;

        let f = basis.matrix(data);
        let y = DVector::from_column_slice(data.y());

        // G = L^-1 F and z = L^-1 y share the forward substitution.
        let mut g = DMatrix::zeros(n, m);
        for c in 0..m {
            let mut col: Vec<f64> = f.column(c).iter().copied().collect();
            factor.forward_solve_in_place(&mut col);
            g.column_mut(c).copy_from_slice(&col);
        }
        let mut z: Vec<f64> = y.as_slice().to_vec();
        factor.forward_solve_in_place(&mut z);
        let zv = DVector::from_column_slice(&z);

        // F' Sigma^-1 F = G'G, factored without jitter and with a relative
        // pivot floor: near-singularity here means the basis is genuinely
        // unidentifiable and should fail rather than be masked.
        let gtg = g.transpose() * &g;
        let gram_floor = 1e-12 * (0..m).map(|c| gtg[(c, c)]).sum::<f64>() / m as f64;
        let fkf_factor = match try_cholesky(gtg.as_slice(), m, 0.0, gram_floor) {
            Some((l, log_det)) => CovFactorization { n: m, l, jitter: 0.0, log_det },
            None => {
                return Err(Error::Estimation(
                    "F' Sigma^-1 F is singular (rank-deficient basis); use a smaller basis".into(),
                ))
            }
        };
        let beta_gls = {
            let rhs = g.transpose() * &zv;
            fkf_factor.solve_vec(&rhs)
        };

        let beta_plug = if params.beta.is_empty() {
            DVector::zeros(m)
        } else {
            DVector::from_column_slice(&params.beta)
        };
        let solve_alpha = |beta: &DVector<f64>| -> Vec<f64> {
            let resid = &y - &f * beta;
            let mut a = resid.as_slice().to_vec();
            factor.solve_in_place(&mut a);
            a
        };
        let alpha_plug = solve_alpha(&beta_plug);
        let alpha_gls = solve_alpha(&beta_gls);

        // Sigma^-1 F column by column through the factor.
        let mut kinv_f = DMatrix::zeros(n, m);
        for c in 0..m {
            let mut col: Vec<f64> = f.column(c).iter().copied().collect();
            factor.solve_in_place(&mut col);
            kinv_f.column_mut(c).copy_from_slice(&col);
        }

        Ok(Predictor {
            model,
            params: params.clone(),
            basis,
            data: data.clone(),
            factor,
            alpha_plug,
            beta_plug,
            beta_gls,
            alpha_gls,
            kinv_f,
            fkf_factor,
        })
    }

    /// Predicts the limiting-fidelity response `phi(x*) = eta(x*, 0)`.
    pub fn predict(&self, x_star: &[f64], uq: UqMode) -> Result<PredictiveDistribution> {
        self.predict_at(x_star, &vec![0.0; self.data.q()], uq)
    }

    /// Predicts `eta` at an arbitrary `(x*, t*)`.
    pub fn predict_at(&self, x_star: &[f64], t_star: &[f64], uq: UqMode) -> Result<PredictiveDistribution> {
        let (n, _p, _q) = (self.data.n(), self.data.p(), self.data.q());
        let mut k_star = vec![0.0; n];
        for i in 0..n {
            k_star[i] =
                composite_kernel(self.model, &self.params, self.data.x(i), self.data.t(i), x_star, t_star)?;
        }
        let prior = composite_kernel(self.model, &self.params, x_star, t_star, x_star, t_star)?;
        let f_star = self.basis.row(x_star, t_star);

        let (beta, alpha) = match uq {
            UqMode::PlugIn => (&self.beta_plug, &self.alpha_plug),
            UqMode::BasisAdjusted => (&self.beta_gls, &self.alpha_gls),
        };
        let mut mean = f_star.dot(beta);
        for i in 0..n {
            mean += k_star[i] * alpha[i];
        }

        let mut variance = prior - self.factor.quad_form(&k_star);
        if uq == UqMode::BasisAdjusted {
            // u = f(x*) - F' Sigma^-1 k*
            let mut u = vec![0.0; f_star.len()];
            for c in 0..f_star.len() {
                let mut dot = 0.0;
                for i in 0..n {
                    dot += self.kinv_f[(i, c)] * k_star[i];
                }
                u[c] = f_star[c] - dot;
            }
            variance += self.fkf_factor.quad_form(&u);
        }
        Ok(PredictiveDistribution::new(mean, variance))
    }

    /// Jitter used when factoring the training covariance.
    pub fn jitter(&self) -> f64 {
        self.factor.jitter
    }

    /// The GLS mean-coefficient estimate.
    pub fn beta_gls(&self) -> &DVector<f64> {
        &self.beta_gls
    }

    /// The basis in use.
    pub fn basis(&self) -> BasisSpec {
        self.basis
    }

    /// The model kind.
    pub fn model(&self) -> EmulatorKind {
        self.model
    }

    /// The kernel parameters the predictor was built with.
    pub fn params(&self) -> &KernelParams {
        &self.params
    }
}

/// One-off prediction of `phi(x*)`: builds a [`Predictor`] and evaluates it
/// at a single point. Looping over many test points should build the
/// predictor once instead.
pub fn predict(
    data: &Dataset,
    params: &KernelParams,
    model: EmulatorKind,
    x_star: &[f64],
    uq: UqMode,
) -> Result<PredictiveDistribution> {
    Predictor::fit(data, params, model, None)?.predict(x_star, uq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    use crate::seeds::derive_rng;

    fn random_dataset(p: usize, q: usize, n: usize, tag: u64) -> Dataset {
        let mut rng = derive_rng(1234, &[tag]);
        let inputs: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>()).collect();
        let fidelities: Vec<f64> = (0..n * q).map(|_| 0.9 * rng.random::<f64>() + 0.05).collect();
        let outputs: Vec<f64> = (0..n).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
        Dataset::new(p, q, inputs, fidelities, outputs).unwrap()
    }

    fn random_params(model: EmulatorKind, p: usize, q: usize, rng: &mut impl Rng) -> KernelParams {
        let mut params = KernelParams::defaults(model, p, q);
        for g in params.gamma.iter_mut() {
            *g = 3.0 * rng.random::<f64>() + 0.05;
        }
        for a in params.alpha.iter_mut() {
            *a = 3.0 * rng.random::<f64>() + 0.05;
        }
        for t in params.theta.iter_mut() {
            *t = 3.0 * rng.random::<f64>() + 0.05;
        }
        params.sigma1_sq = 2.0 * rng.random::<f64>() + 0.1;
        if model.has_discrepancy() {
            params.sigma2_sq = 2.0 * rng.random::<f64>() + 0.1;
        }
        params
    }

    #[test]
    fn factor_identity() {
        let f = cholesky_factor(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.jitter, 0.0);
        assert_eq!(f.log_det, 0.0);
        assert_eq!(f.lower(), DMatrix::identity(4, 4));
    }

    #[test]
    fn factor_known_log_det() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let f = cholesky_factor(&m).unwrap();
        assert_eq!(f.jitter, 0.0);
        assert_relative_eq!(f.log_det, 3.0f64.ln(), max_relative = 1e-14);
    }

    #[test]
    fn factor_rank_deficient_needs_jitter() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = cholesky_factor(&m).unwrap();
        assert!(f.jitter > 0.0);
        let j = f.jitter;
        // det(Sigma + jI) = (1+j)^2 - 1 = j(2+j). The trailing pivot comes
        // from a cancellation of order eps/j, so the comparison cannot be
        // tighter than ~1e-6 relative on the pivot.
        assert_relative_eq!(f.log_det, (j * (2.0 + j)).ln(), max_relative = 1e-5);
    }

    #[test]
    fn factor_failure_names_duplicate_rows() {
        // Indefinite, so no jitter in the ladder rescues it; rows 0 and 1
        // are identical.
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, -1.0]);
        let err = cholesky_factor(&m).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rows 0 and 1"), "{msg}");
    }

    #[test]
    fn factor_reconstructs_matrix() {
        let mut rng = derive_rng(1234, &[9]);
        let a = DMatrix::from_fn(6, 6, |_, _| rng.random::<f64>() - 0.5);
        let spd = &a * a.transpose() + DMatrix::identity(6, 6);
        let f = cholesky_factor(&spd).unwrap();
        let l = f.lower();
        let back = &l * l.transpose();
        assert_relative_eq!(back, spd, max_relative = 1e-10);
    }

    #[test]
    fn solves_match_nalgebra() {
        let mut rng = derive_rng(1234, &[10]);
        let a = DMatrix::from_fn(5, 5, |_, _| rng.random::<f64>() - 0.5);
        let spd = &a * a.transpose() + DMatrix::identity(5, 5);
        let f = cholesky_factor(&spd).unwrap();
        let b = DVector::from_fn(5, |_, _| rng.random::<f64>());
        let x = f.solve_vec(&b);
        assert_relative_eq!(&spd * &x, b, max_relative = 1e-10);
    }

    #[test]
    fn assembled_covariance_is_symmetric_with_config_diagonal() {
        let mut rng = derive_rng(1234, &[11]);
        let data = random_dataset(2, 2, 12, 0);
        for model in [EmulatorKind::ConfigK1, EmulatorKind::ConfigK2] {
            let params = random_params(model, 2, 2, &mut rng);
            let sigma = assemble_covariance(&data, &params, model).unwrap();
            assert_eq!(sigma, sigma.transpose());
            for i in 0..data.n() {
                let kt = match model {
                    EmulatorKind::ConfigK1 => {
                        crate::kernels::kernel1_t(data.t(i), data.t(i), &params.theta).unwrap()
                    }
                    _ => crate::kernels::kernel2_t(data.t(i), data.t(i), &params.theta, &params.l_r, params.l)
                        .unwrap(),
                };
                assert_relative_eq!(
                    sigma[(i, i)],
                    params.sigma1_sq + params.sigma2_sq * kt,
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn duplicate_rows_degenerate_entry() {
        // Two identical (x, t) rows: the off-diagonal equals the diagonal.
        let data = Dataset::new_unchecked(1, 1, vec![0.4, 0.4], vec![0.5, 0.5], vec![1.0, 1.0]);
        let params = KernelParams::defaults(EmulatorKind::ConfigK2, 1, 1);
        let sigma = assemble_covariance(&data, &params, EmulatorKind::ConfigK2).unwrap();
        assert_eq!(sigma[(0, 1)], sigma[(0, 0)]);
    }

    #[test]
    fn workspace_matches_reference_assembly_exactly() {
        let mut rng = derive_rng(1234, &[12]);
        for (tag, model) in EmulatorKind::ALL.into_iter().enumerate() {
            let data = random_dataset(3, 2, 10, 100 + tag as u64);
            let params = random_params(model, 3, 2, &mut rng);
            let reference = assemble_covariance(&data, &params, model).unwrap();
            let mut ws = CovWorkspace::new(&data, model, &params);
            let fast = ws.sigma_flat(&params);
            for i in 0..10 {
                for j in 0..10 {
                    assert_eq!(fast[i * 10 + j], reference[(i, j)], "model {model} entry ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn covariances_factor_under_jitter_policy() {
        // Random parameter draws and datasets across all models.
        let mut rng = derive_rng(1234, &[13]);
        for round in 0..200 {
            let model = EmulatorKind::ALL[round % 6];
            let p = 1 + (round % 3);
            let q = 1 + (round % 2);
            let n = 5 + (round % 26);
            let data = random_dataset(p, q, n, 200 + round as u64);
            let params = random_params(model, p, q, &mut rng);
            let sigma = assemble_covariance(&data, &params, model).unwrap();
            cholesky_factor(&sigma).unwrap_or_else(|e| panic!("model {model} round {round}: {e}"));
        }
    }

    #[test]
    fn log_likelihood_single_point_constant() {
        // n=1, Sigma=[1], y=0, constant basis with beta=0:
        // -(1/2) log(2 pi).
        let data = Dataset::new(1, 1, vec![0.5], vec![0.5], vec![0.0]).unwrap();
        let mut params = KernelParams::defaults(EmulatorKind::StandardGp, 1, 1);
        params.beta = vec![0.0];
        let ll = log_likelihood(&data, &params, EmulatorKind::StandardGp).unwrap();
        assert_relative_eq!(ll, -0.9189385332046727, max_relative = 1e-14);
    }

    #[test]
    fn log_likelihood_variance_scaling_identity() {
        // Zero residual: scaling both variances by c changes the value by
        // -(n/2) log c.
        let data = Dataset::new(
            1,
            1,
            vec![0.1, 0.4, 0.6, 0.9],
            vec![0.2, 0.4, 0.6, 0.8],
            vec![0.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let mut rng = derive_rng(1234, &[14]);
        let mut params = random_params(EmulatorKind::ConfigK2, 1, 1, &mut rng);
        params.beta = vec![0.0, 0.0, 0.0];
        let base = log_likelihood(&data, &params, EmulatorKind::ConfigK2).unwrap();
        let c = 3.7;
        params.sigma1_sq *= c;
        params.sigma2_sq *= c;
        let scaled = log_likelihood(&data, &params, EmulatorKind::ConfigK2).unwrap();
        assert_relative_eq!(scaled - base, -2.0 * c.ln(), max_relative = 1e-9);
    }

    #[test]
    fn quadratic_form_matches_explicit_inverse() {
        let mut rng = derive_rng(1234, &[15]);
        for n in [3usize, 8, 20] {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
            let spd = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            let f = cholesky_factor(&spd).unwrap();
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let via_solves = f.quad_form(&v);
            let inv = spd.clone().try_inverse().unwrap();
            let vv = DVector::from_column_slice(&v);
            let explicit = (inv * &vv).dot(&vv);
            assert_relative_eq!(via_solves, explicit, max_relative = 1e-8);
        }
    }

    fn toy_fitted_predictor(model: EmulatorKind) -> (Dataset, Predictor) {
        let data = random_dataset(2, 1, 10, 300);
        let mut rng = derive_rng(1234, &[16]);
        let params = random_params(model, 2, 1, &mut rng);
        let pred = Predictor::fit(&data, &params, model, None).unwrap();
        (data, pred)
    }

    #[test]
    fn predictor_interpolates_training_points() {
        let (data, pred) = toy_fitted_predictor(EmulatorKind::ConfigK2);
        assert_eq!(pred.jitter(), 0.0);
        for i in 0..data.n() {
            let d = pred.predict_at(data.x(i), data.t(i), UqMode::PlugIn).unwrap();
            let scale = data.y()[i].abs().max(1.0);
            assert_abs_diff_eq!(d.mean, data.y()[i], epsilon = 1e-6 * scale);
            assert!(d.variance < 1e-8 * pred.params().sigma1_sq, "variance {}", d.variance);
        }
    }

    #[test]
    fn basis_adjusted_variance_dominates_plug_in() {
        let (_, pred) = toy_fitted_predictor(EmulatorKind::ConfigK1);
        let mut rng = derive_rng(1234, &[17]);
        for _ in 0..50 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let plug = pred.predict(&x, UqMode::PlugIn).unwrap();
            let adjusted = pred.predict(&x, UqMode::BasisAdjusted).unwrap();
            assert!(adjusted.variance >= plug.variance - 1e-12);
        }
    }

    #[test]
    fn zero_discrepancy_reduces_to_plain_gp() {
        // sigma2^2 = 0 collapses the composite to the K_x^phi GP.
        let data = random_dataset(2, 1, 9, 301);
        let mut k2 = KernelParams::defaults(EmulatorKind::ConfigK2, 2, 1);
        k2.sigma2_sq = 0.0;
        k2.gamma = vec![1.4, 0.6];
        let mut plain = KernelParams::defaults(EmulatorKind::HighFidelityGp, 2, 1);
        plain.gamma = k2.gamma.clone();
        let pred_k2 = Predictor::fit(&data, &k2, EmulatorKind::ConfigK2, Some(BasisSpec::LinearInX)).unwrap();
        let pred_plain =
            Predictor::fit(&data, &plain, EmulatorKind::HighFidelityGp, Some(BasisSpec::LinearInX)).unwrap();
        let mut rng = derive_rng(1234, &[18]);
        for _ in 0..20 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let a = pred_k2.predict(&x, UqMode::BasisAdjusted).unwrap();
            let b = pred_plain.predict(&x, UqMode::BasisAdjusted).unwrap();
            assert_relative_eq!(a.mean, b.mean, max_relative = 1e-10);
            assert_relative_eq!(a.variance, b.variance, epsilon = 1e-12, max_relative = 1e-8);
        }
    }

    #[test]
    fn rank_deficient_basis_is_reported() {
        // Fidelity columns are constant for the single-fidelity baseline, so
        // the x-and-t basis is collinear with the intercept.
        let n = 8;
        let mut rng = derive_rng(1234, &[19]);
        let inputs: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>()).collect();
        let fidelities = vec![0.5; n];
        let outputs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let data = Dataset::new(2, 1, inputs, fidelities, outputs).unwrap();
        let params = KernelParams::defaults(EmulatorKind::HighFidelityGp, 2, 1);
        let err = Predictor::fit(&data, &params, EmulatorKind::HighFidelityGp, Some(BasisSpec::LinearInXT))
            .unwrap_err();
        assert!(matches!(err, Error::Estimation(_)), "{err}");
    }

    #[test]
    fn interval_is_mean_plus_minus_1_96_sd() {
        let d = PredictiveDistribution::new(2.0, 4.0);
        assert_eq!(d.interval95, (2.0 - 3.92, 2.0 + 3.92));
        assert!(d.covers(2.0));
        assert!(!d.covers(6.0));
    }
}
