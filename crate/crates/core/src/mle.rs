//! Maximum-likelihood estimation of the kernel hyperparameters.
//!
//! The mean coefficients are never searched over: at every objective
//! evaluation `beta` is profiled out in closed form by generalized least
//! squares, leaving only the positive kernel parameters, which are optimized
//! in log space by the bounded quasi-Newton routine in [`crate::optimize`].
//! Multiple restarts perturb an informed initialization obtained by first
//! fitting a plain GP on the inputs alone.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand_distr::{Distribution, Normal};

use crate::basis::BasisSpec;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::gp::{factor_flat, CovWorkspace, LN_2PI};
use crate::kernels::{se_kernel, EmulatorKind, KernelParams};
use crate::optimize::{minimize, OptimOptions};
use crate::seeds::derive_rng;

/// Options for [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleOptions {
    /// Number of optimizer starts: the first uses the informed
    /// initialization, the rest perturb it log-normally (sd 0.5).
    pub restarts: usize,
    /// Outer iteration cap per start.
    pub max_iter: usize,
    /// Gradient-norm convergence tolerance (log-space coordinates).
    pub tolerance: f64,
    /// Seed for the restart perturbations.
    pub seed: u64,
    /// Regression basis; defaults per model (see
    /// [`BasisSpec::default_for`]).
    pub basis: Option<BasisSpec>,
    /// Outer exponent for the Brownian-type kernels (fixed, not optimized).
    pub l: f64,
    /// Per-coordinate exponents for the bracketed-min-sum kernel (fixed);
    /// `None` means 2 everywhere.
    pub l_r: Option<Vec<f64>>,
}

impl Default for MleOptions {
    fn default() -> Self {
        MleOptions { restarts: 5, max_iter: 200, tolerance: 1e-5, seed: 0, basis: None, l: 2.0, l_r: None }
    }
}

/// Outcome of [`fit_mle`].
#[derive(Debug, Clone)]
pub struct MleResult {
    /// Optimized parameters, `beta` filled with the GLS estimate at the
    /// optimum.
    pub params: KernelParams,
    /// Profiled log-likelihood at the optimum.
    pub log_likelihood: f64,
    /// Basis used for the mean.
    pub basis: BasisSpec,
    /// Number of starts run.
    pub restarts: usize,
    /// Convergence flag per start; the reported optimum is the best
    /// converged one.
    pub converged: Vec<bool>,
    /// Whether the informed initialization had to fall back to unit weights
    /// because the responses were (numerically) constant.
    pub degenerate_init: bool,
}

/// Result of [`init_alpha`].
#[derive(Debug, Clone)]
pub struct AlphaInit {
    /// Fitted SE weights of the input-only GP (length p, positive).
    pub weights: Vec<f64>,
    /// True when the responses were constant and the weights fell back to 1.
    pub degenerate: bool,
}

/// Log-space position of each parameter block for one model.
struct ParamLayout {
    model: EmulatorKind,
    p: usize,
    q: usize,
    l: f64,
    l_r: Vec<f64>,
}

impl ParamLayout {
    fn new(model: EmulatorKind, p: usize, q: usize, options: &MleOptions) -> ParamLayout {
        let l_r = if model == EmulatorKind::ConfigK2 {
            options.l_r.clone().unwrap_or_else(|| vec![2.0; q])
        } else {
            Vec::new()
        };
        ParamLayout { model, p, q, l: options.l, l_r }
    }

    /// Number of optimized coordinates.
    fn dim(&self) -> usize {
        let (p, q) = (self.p, self.q);
        match self.model {
            EmulatorKind::StandardGp => p + q + 1,
            EmulatorKind::HighFidelityGp => p + 1,
            EmulatorKind::TwyArith | EmulatorKind::TwyGeom => 2 * p + 2,
            EmulatorKind::ConfigK1 | EmulatorKind::ConfigK2 => 2 * p + q + 2,
        }
    }

    /// Log-space coordinates -> kernel parameters (beta left empty).
    fn unpack(&self, z: &[f64]) -> KernelParams {
        debug_assert_eq!(z.len(), self.dim());
        let (p, q) = (self.p, self.q);
        let exp = |s: &[f64]| s.iter().map(|v| v.exp()).collect::<Vec<f64>>();
        let mut params = KernelParams {
            beta: Vec::new(),
            gamma: exp(&z[..p]),
            alpha: Vec::new(),
            theta: Vec::new(),
            sigma1_sq: 0.0,
            sigma2_sq: 0.0,
            l: self.l,
            l_r: self.l_r.clone(),
        };
        match self.model {
            EmulatorKind::StandardGp => {
                params.theta = exp(&z[p..p + q]);
                params.sigma1_sq = z[p + q].exp();
            }
            EmulatorKind::HighFidelityGp => {
                params.sigma1_sq = z[p].exp();
            }
            EmulatorKind::TwyArith | EmulatorKind::TwyGeom => {
                params.alpha = exp(&z[p..2 * p]);
                params.sigma1_sq = z[2 * p].exp();
                params.sigma2_sq = z[2 * p + 1].exp();
            }
            EmulatorKind::ConfigK1 | EmulatorKind::ConfigK2 => {
                params.alpha = exp(&z[p..2 * p]);
                params.theta = exp(&z[2 * p..2 * p + q]);
                params.sigma1_sq = z[2 * p + q].exp();
                params.sigma2_sq = z[2 * p + q + 1].exp();
            }
        }
        params
    }

    /// Informed starting point in log space.
    fn initial(&self, weights: &[f64], var_y: f64) -> Vec<f64> {
        let ln_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
        let ln_var = var_y.max(1e-8).ln();
        let mut z = Vec::with_capacity(self.dim());
        z.extend_from_slice(&ln_w);
        match self.model {
            EmulatorKind::StandardGp => {
                z.extend(std::iter::repeat(0.0).take(self.q)); // theta = 1
                z.push(ln_var);
            }
            EmulatorKind::HighFidelityGp => z.push(ln_var),
            EmulatorKind::TwyArith | EmulatorKind::TwyGeom => {
                z.extend_from_slice(&ln_w); // alpha = weights
                z.push(ln_var);
                z.push(ln_var + 0.1f64.ln()); // sigma2^2 = 0.1 var(y)
            }
            EmulatorKind::ConfigK1 | EmulatorKind::ConfigK2 => {
                z.extend_from_slice(&ln_w);
                z.extend(std::iter::repeat(0.0).take(self.q));
                z.push(ln_var);
                z.push(ln_var + 0.1f64.ln());
            }
        }
        z
    }
}

/// Profiled negative log-likelihood evaluator over a fixed dataset.
struct Objective<'d> {
    ws: CovWorkspace,
    f: DMatrix<f64>,
    y: Vec<f64>,
    n: usize,
    m: usize,
    layout: &'d ParamLayout,
    sigma_buf: Vec<f64>,
}

impl<'d> Objective<'d> {
    fn new(data: &Dataset, layout: &'d ParamLayout, basis: BasisSpec) -> Objective<'d> {
        let template = layout.unpack(&vec![0.0; layout.dim()]);
        Objective {
            ws: CovWorkspace::new(data, layout.model, &template),
            f: basis.matrix(data),
            y: data.y().to_vec(),
            n: data.n(),
            m: basis.m(data.p(), data.q()),
            layout,
            sigma_buf: vec![0.0; data.n() * data.n()],
        }
    }

    /// Profiled log-likelihood and GLS beta at `z`; `None` when the
    /// covariance (or the basis Gram matrix) cannot be factored.
    fn profile(&mut self, z: &[f64]) -> Option<(f64, DVector<f64>)> {
        let params = self.layout.unpack(z);
        let (n, m) = (self.n, self.m);
        let mut sigma = std::mem::take(&mut self.sigma_buf);
        self.ws.sigma_into(&params, &mut sigma);
        // Smooth kernels drive the covariance toward singularity along the
        // over-smoothed ridge of the likelihood, where log-det and the
        // quadratic form are numerically meaningless and their noise can
        // fake unbounded improvement. A fixed relative nugget caps the
        // condition number so the objective stays smooth and honest; it is
        // far below anything the estimates resolve.
        let tau = 1e-8 * diag_mean(&sigma, n);
        for i in 0..n {
            sigma[i * n + i] += tau;
        }
        let factor = factor_flat(&sigma, n).ok();
        self.sigma_buf = sigma;
        let factor = factor?;

        // G = L^-1 F, zv = L^-1 y.
        let mut g = DMatrix::zeros(n, m);
        for c in 0..m {
            let mut col: Vec<f64> = self.f.column(c).iter().copied().collect();
            factor.forward_solve_in_place(&mut col);
            g.column_mut(c).copy_from_slice(&col);
        }
        let mut zy = self.y.clone();
        factor.forward_solve_in_place(&mut zy);

        let gtg = g.transpose() * &g;
        let gram = crate::gp::cholesky_factor(&gtg).ok()?;
        if gram.jitter > 0.0 {
            // A Gram matrix that needs jitter is rank-deficient in disguise.
            return None;
        }
        let zv = DVector::from_column_slice(&zy);
        let beta = gram.solve_vec(&(g.transpose() * &zv));
        let resid = zv - g * &beta;
        let quad = resid.norm_squared();
        let ll = -0.5 * (n as f64) * LN_2PI - 0.5 * factor.log_det - 0.5 * quad;
        Some((ll, beta))
    }

    fn neg_log_likelihood(&mut self, z: &[f64]) -> f64 {
        match self.profile(z) {
            Some((ll, _)) => -ll,
            None => f64::INFINITY,
        }
    }
}

/// Mean of the diagonal of a row-major `n` by `n` matrix.
fn diag_mean(a: &[f64], n: usize) -> f64 {
    (0..n).map(|i| a[i * n + i]).sum::<f64>() / n as f64
}

/// Variance of the responses (sample variance, n-1 denominator).
fn response_variance(y: &[f64]) -> f64 {
    let n = y.len();
    if n < 2 {
        return 0.0;
    }
    let mean = y.iter().sum::<f64>() / n as f64;
    y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64
}

/// Initialization for the discrepancy weights: fits a plain SE-kernel GP on
/// `(x -> y)`, ignoring the fidelity columns, and returns its weight vector.
/// The same vector initializes `gamma`; `theta` starts at 1, `sigma1^2` at
/// `var(y)` and `sigma2^2` at `0.1 var(y)`.
///
/// The auxiliary fit carries an estimated nugget: ignoring the fidelity
/// columns turns the fidelity effect into scatter in `x` alone, and a
/// noise-free interpolator can only absorb scatter by collapsing its
/// length scales toward white noise — weights around `e^16` that every
/// restart seeded from them inherits. With the nugget soaking up the
/// scatter the weights track the trend the model actually wants.
///
/// Constant responses cannot identify weights; they yield unit weights with
/// the `degenerate` flag set.
pub fn init_alpha(data: &Dataset) -> Result<AlphaInit> {
    if data.n() < 3 {
        return Err(Error::InvalidData(format!(
            "initialization needs at least 3 runs, got {}",
            data.n()
        )));
    }
    let var_y = response_variance(data.y());
    let mean_y = data.y().iter().sum::<f64>() / data.n() as f64;
    if var_y <= 1e-12 * mean_y.mul_add(mean_y, 1.0) {
        return Ok(AlphaInit { weights: vec![1.0; data.p()], degenerate: true });
    }
    let (n, p) = (data.n(), data.p());
    // Coordinates: [ln weights (p), ln nugget ratio]; the amplitude and the
    // constant mean are profiled out in closed form.
    let y = DVector::from_column_slice(data.y());
    let ones = DVector::from_element(n, 1.0);
    let mut nll = |z: &[f64]| -> f64 {
        let weights: Vec<f64> = z[..p].iter().map(|v| v.exp()).collect();
        let nugget = z[p].exp();
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let k = se_kernel(data.x(i), data.x(j), &weights).expect("row lengths agree");
                c[(i, j)] = k;
                c[(j, i)] = k;
            }
            c[(i, i)] += nugget;
        }
        let chol = match Cholesky::new(c) {
            Some(chol) => chol,
            None => return f64::INFINITY,
        };
        let ci_y = chol.solve(&y);
        let ci_one = chol.solve(&ones);
        let denom = ones.dot(&ci_one);
        if denom <= 0.0 {
            return f64::INFINITY;
        }
        let quad = y.dot(&ci_y) - ones.dot(&ci_y).powi(2) / denom;
        if quad <= 0.0 {
            return f64::INFINITY;
        }
        let log_det: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        0.5 * (n as f64) * (quad / n as f64).ln() + 0.5 * log_det
    };
    let mut z0 = vec![0.0; p + 1];
    z0[p] = 0.01f64.ln();
    let mut lower = vec![-16.0; p + 1];
    let mut upper = vec![16.0; p + 1];
    lower[p] = 1e-8f64.ln();
    upper[p] = 1e2f64.ln();
    let opt = OptimOptions { max_iter: 100, g_tol: 1e-4, ..OptimOptions::default() };
    let outcome = minimize(&mut nll, &z0, &lower, &upper, &opt);
    // A huge weight is the white-noise corner in disguise; keep starts on
    // scales the real fit can move away from.
    let weights: Vec<f64> = outcome.x[..p].iter().map(|v| v.clamp(-6.0, 6.0).exp()).collect();
    Ok(AlphaInit { weights, degenerate: false })
}

/// Multi-start maximum-likelihood fit.
///
/// Deterministic for fixed `(data, options)`: restart perturbations come
/// from a generator derived from `options.seed`. The reported optimum is
/// the converged start with the highest profiled log-likelihood; an
/// estimation error listing per-start outcomes is returned when no start
/// converges.
pub fn fit_mle(data: &Dataset, model: EmulatorKind, options: &MleOptions) -> Result<MleResult> {
    let basis = options.basis.unwrap_or_else(|| BasisSpec::default_for(model));
    let m = basis.m(data.p(), data.q());
    if data.n() < m {
        return Err(Error::Estimation(format!(
            "n = {} runs cannot identify {m} basis coefficients",
            data.n()
        )));
    }
    if options.restarts == 0 {
        return Err(Error::InvalidArgument("restarts must be at least 1".into()));
    }
    let init = init_alpha(data)?;
    let var_y = response_variance(data.y()).max(1e-8);
    let layout = ParamLayout::new(model, data.p(), data.q(), options);
    // Fixed exponents still need to be positive.
    layout.unpack(&vec![0.0; layout.dim()]).validate(model, data.p(), data.q())?;
    let mut objective = Objective::new(data, &layout, basis);
    let z0 = layout.initial(&init.weights, var_y);
    let d = layout.dim();
    let lower = vec![-16.0; d];
    let upper = vec![16.0; d];
    let opt = OptimOptions {
        max_iter: options.max_iter,
        g_tol: options.tolerance,
        ..OptimOptions::default()
    };

    let mut converged = Vec::with_capacity(options.restarts);
    let mut best: Option<(f64, Vec<f64>)> = None;
    for restart in 0..options.restarts {
        let start: Vec<f64> = if restart == 0 {
            z0.clone()
        } else {
            let mut rng = derive_rng(options.seed, &[restart as u64]);
            let noise = Normal::new(0.0, 0.5).unwrap();
            z0.iter().map(|v| v + noise.sample(&mut rng)).collect()
        };
        let outcome = minimize(
            &mut |z: &[f64]| objective.neg_log_likelihood(z),
            &start,
            &lower,
            &upper,
            &opt,
        );
        converged.push(outcome.converged);
        if outcome.converged && outcome.f.is_finite() {
            let better = match &best {
                Some((f, _)) => outcome.f < *f,
                None => true,
            };
            if better {
                best = Some((outcome.f, outcome.x.clone()));
            }
        }
    }
    let (_, z_best) = best.ok_or_else(|| {
        Error::Estimation(format!(
            "no start converged for {model} (flags {converged:?}); try more restarts or looser tolerance"
        ))
    })?;
    let (ll, beta) = objective
        .profile(&z_best)
        .ok_or_else(|| Error::Estimation(format!("optimum for {model} lost factorizability")))?;
    let mut params = layout.unpack(&z_best);
    params.beta = beta.as_slice().to_vec();
    Ok(MleResult {
        params,
        log_likelihood: ll,
        basis,
        restarts: options.restarts,
        converged,
        degenerate_init: init.degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::{assemble_covariance, cholesky_factor, log_likelihood, Predictor, UqMode};
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn lhd_like_inputs(n: usize, p: usize, tag: u64) -> Vec<f64> {
        let mut rng = derive_rng(77, &[tag]);
        (0..n * p).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn init_alpha_flags_constant_responses() {
        let data = Dataset::new(
            2,
            1,
            lhd_like_inputs(6, 2, 0),
            vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7],
            vec![5.0; 6],
        )
        .unwrap();
        let init = init_alpha(&data).unwrap();
        assert!(init.degenerate);
        assert_eq!(init.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn init_alpha_prefers_the_active_dimension() {
        let n = 40;
        let inputs = lhd_like_inputs(n, 2, 1);
        let mut rng = derive_rng(77, &[2]);
        let fidelities: Vec<f64> = (0..n).map(|_| 0.8 * rng.random::<f64>() + 0.1).collect();
        let outputs: Vec<f64> = (0..n)
            .map(|i| (6.0 * inputs[i * 2]).sin() + 0.01 * inputs[i * 2 + 1])
            .collect();
        let data = Dataset::new(2, 1, inputs, fidelities, outputs).unwrap();
        let init = init_alpha(&data).unwrap();
        assert!(!init.degenerate);
        assert_eq!(init.weights.len(), 2);
        assert!(init.weights.iter().all(|w| *w > 0.0));
        assert!(
            init.weights[0] > init.weights[1],
            "weights {:?} should favor x1",
            init.weights
        );
    }

    #[test]
    fn fitted_likelihood_dominates_truth() {
        // Simulate a standard GP with known parameters and check the fitted
        // optimum is at least as likely as the generating parameters.
        let n = 60;
        let (p, q) = (2usize, 1usize);
        let inputs = lhd_like_inputs(n, p, 3);
        let mut rng = derive_rng(77, &[4]);
        let fidelities: Vec<f64> = (0..n).map(|_| 0.8 * rng.random::<f64>() + 0.1).collect();
        let mut truth = KernelParams::defaults(EmulatorKind::StandardGp, p, q);
        truth.gamma = vec![2.0, 2.0];
        truth.theta = vec![1.0];
        truth.sigma1_sq = 1.0;
        let shell = Dataset::new(p, q, inputs.clone(), fidelities.clone(), vec![0.0; n]).unwrap();
        let sigma = assemble_covariance(&shell, &truth, EmulatorKind::StandardGp).unwrap();
        let factor = cholesky_factor(&sigma).unwrap();
        let xi: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lower = factor.lower();
        let outputs: Vec<f64> = (0..n)
            .map(|i| (0..=i).map(|j| lower[(i, j)] * xi[j]).sum())
            .collect();
        let data = Dataset::new(p, q, inputs, fidelities, outputs).unwrap();

        let options = MleOptions { restarts: 3, basis: Some(BasisSpec::Constant), ..MleOptions::default() };
        let fit = fit_mle(&data, EmulatorKind::StandardGp, &options).unwrap();
        let mut truth_with_mean = truth.clone();
        truth_with_mean.beta = vec![0.0];
        let ll_truth = log_likelihood(&data, &truth_with_mean, EmulatorKind::StandardGp).unwrap();
        assert!(
            fit.log_likelihood >= ll_truth - 1e-6,
            "fitted {} vs truth {}",
            fit.log_likelihood,
            ll_truth
        );
    }

    #[test]
    fn fitted_predictor_interpolates() {
        // Five points from y = x: whatever weights the optimizer picks, the
        // noise-free GP interpolates its training data.
        let xs = [0.05, 0.3, 0.5, 0.7, 0.95];
        let data = Dataset::new(
            1,
            1,
            xs.to_vec(),
            vec![0.2, 0.35, 0.5, 0.65, 0.8],
            xs.to_vec(),
        )
        .unwrap();
        let options = MleOptions { restarts: 2, basis: Some(BasisSpec::Constant), ..MleOptions::default() };
        let fit = fit_mle(&data, EmulatorKind::StandardGp, &options).unwrap();
        let pred = Predictor::fit(&data, &fit.params, EmulatorKind::StandardGp, Some(fit.basis)).unwrap();
        for i in 0..data.n() {
            let d = pred.predict_at(data.x(i), data.t(i), UqMode::PlugIn).unwrap();
            assert_abs_diff_eq!(d.mean, data.y()[i], epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let n = 20;
        let inputs = lhd_like_inputs(n, 2, 5);
        let mut rng = derive_rng(77, &[6]);
        let fidelities: Vec<f64> = (0..n * 1).map(|_| 0.8 * rng.random::<f64>() + 0.1).collect();
        let outputs: Vec<f64> = (0..n).map(|i| inputs[i * 2] + 0.3 * (5.0 * inputs[i * 2 + 1]).cos()).collect();
        let data = Dataset::new(2, 1, inputs, fidelities, outputs).unwrap();
        let options = MleOptions { restarts: 2, seed: 42, ..MleOptions::default() };
        let a = fit_mle(&data, EmulatorKind::ConfigK2, &options).unwrap();
        let b = fit_mle(&data, EmulatorKind::ConfigK2, &options).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.log_likelihood, b.log_likelihood);
        assert_eq!(a.converged, b.converged);
    }
}
