//! Bounded quasi-Newton minimization with numerical gradients.
//!
//! A plain limited-memory BFGS with box projection and a weak-Wolfe line
//! search: hyperparameter surfaces here are smooth but their analytic
//! gradients are not worth maintaining, so gradients come from central
//! differences. The optimizer is deterministic: same objective, start, and
//! options give the same iterates.

/// Options for [`minimize`].
#[derive(Debug, Clone)]
pub struct OptimOptions {
    /// Maximum outer iterations.
    pub max_iter: usize,
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Converged when the infinity norm of the projected gradient drops
    /// below this.
    pub g_tol: f64,
    /// Converged when two consecutive accepted steps each improve the
    /// objective by less than `f_tol * (1 + |f|)`.
    pub f_tol: f64,
    /// Absolute step for central-difference gradients.
    pub grad_step: f64,
    /// Cap on the displacement a single line search may take. Keeps one
    /// over-eager search from tunneling across an interior optimum into a
    /// distant degenerate basin; marching somewhere far still happens, but
    /// one gradient refresh at a time.
    pub max_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            max_iter: 200,
            memory: 8,
            g_tol: 1e-5,
            f_tol: 1e-10,
            grad_step: 1e-5,
            max_step: 2.0,
        }
    }
}

/// Result of a [`minimize`] run.
#[derive(Debug, Clone)]
pub struct OptimOutcome {
    /// Best point found (always within bounds).
    pub x: Vec<f64>,
    /// Objective value at `x`.
    pub f: f64,
    /// Outer iterations executed.
    pub iterations: usize,
    /// Whether a convergence test fired (as opposed to hitting `max_iter`
    /// or stalling in the line search).
    pub converged: bool,
    /// Total objective evaluations, gradient stencils included.
    pub evaluations: usize,
}

/// Central-difference gradient `(f(x + h e_i) - f(x - h e_i)) / (2h)`.
pub fn central_diff_gradient(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let up = f(&probe);
        probe[i] = x[i] - step;
        let down = f(&probe);
        probe[i] = x[i];
        g[i] = (up - down) / (2.0 * step);
    }
    g
}

fn clamp_vec(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

/// Infinity norm of the gradient with components pointing out of the box at
/// an active bound zeroed — the first-order optimality measure for box
/// constraints.
fn projected_grad_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut norm = 0.0f64;
    for i in 0..x.len() {
        let active_low = x[i] <= lower[i] && g[i] > 0.0;
        let active_high = x[i] >= upper[i] && g[i] < 0.0;
        if !(active_low || active_high) {
            norm = norm.max(g[i].abs());
        }
    }
    norm
}

/// Minimizes `f` over the box `[lower, upper]` starting from `x0`.
///
/// Non-finite objective values are treated as "worse than anything" by the
/// backtracking line search, so an objective may signal an infeasible
/// region that way without poisoning the search.
pub fn minimize(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &OptimOptions,
) -> OptimOutcome {
    let d = x0.len();
    assert_eq!(lower.len(), d, "lower bound dimension mismatch");
    assert_eq!(upper.len(), d, "upper bound dimension mismatch");
    let mut evaluations = 0usize;
    let eval = |f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], count: &mut usize| -> f64 {
        *count += 1;
        f(x)
    };

    let mut x = x0.to_vec();
    clamp_vec(&mut x, lower, upper);
    let mut fx = eval(f, &x, &mut evaluations);
    let mut g = central_diff_gradient(f, &x, opts.grad_step);
    evaluations += 2 * d;

    // Curvature pairs, most recent last.
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut small_steps = 0usize;

    for _ in 0..opts.max_iter {
        if projected_grad_norm(&x, &g, lower, upper) < opts.g_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // Two-loop recursion for the quasi-Newton direction -H g.
        let mut dir: Vec<f64> = g.iter().map(|v| -v).collect();
        let k = s_hist.len();
        let mut alphas = vec![0.0; k];
        for idx in (0..k).rev() {
            let rho = 1.0 / dot(&y_hist[idx], &s_hist[idx]);
            let a = rho * dot(&s_hist[idx], &dir);
            alphas[idx] = a;
            axpy(-a, &y_hist[idx], &mut dir);
        }
        if k > 0 {
            let last = k - 1;
            let scale = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
            if scale.is_finite() && scale > 0.0 {
                for v in dir.iter_mut() {
                    *v *= scale;
                }
            }
        }
        for idx in 0..k {
            let rho = 1.0 / dot(&y_hist[idx], &s_hist[idx]);
            let b = rho * dot(&y_hist[idx], &dir);
            axpy(alphas[idx] - b, &s_hist[idx], &mut dir);
        }
        if !dir.iter().all(|v| v.is_finite()) || dot(&dir, &g) >= 0.0 {
            // Degenerate curvature: fall back to steepest descent.
            dir = g.iter().map(|v| -v).collect();
            s_hist.clear();
            y_hist.clear();
        }

        // Weak-Wolfe line search on the projected path
        // x(step) = clamp(x + step * dir): bisection shrinks steps that
        // fail the Armijo decrease, doubling grows steps whose new slope is
        // still too negative. The curvature condition keeps s.y positive so
        // the quasi-Newton memory stays usable; a plain Armijo backtracker
        // stalls in curved valleys because its pairs get rejected.
        let (c1, c2) = (1e-4, 0.9);
        let dir_norm = norm2(&dir);
        if !(dir_norm > 0.0) || !dir_norm.is_finite() {
            break;
        }
        let step_cap = opts.max_step / dir_norm;
        let mut lo = 0.0f64;
        let mut hi = f64::INFINITY;
        // Raw steepest-descent directions carry the gradient's arbitrary
        // scale; a unit displacement is the standard first trial for them.
        // Scaled quasi-Newton directions earn the natural step of 1.
        let mut step = if s_hist.is_empty() { (1.0 / dir_norm).min(1.0) } else { 1.0 };
        step = step.min(step_cap);
        // Best Armijo-passing trial seen, kept in case no trial also
        // satisfies the curvature condition.
        let mut chosen: Option<(Vec<f64>, f64, Vec<f64>)> = None;
        let mut probe = vec![0.0; d];
        for _ in 0..50 {
            for i in 0..d {
                probe[i] = x[i] + step * dir[i];
            }
            clamp_vec(&mut probe, lower, upper);
            let moved: f64 = probe.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
            if moved == 0.0 {
                hi = step;
                step = 0.5 * (lo + hi);
                if step < 1e-20 {
                    break;
                }
                continue;
            }
            let candidate = eval(f, &probe, &mut evaluations);
            // Armijo decrease against the actual (projected) displacement.
            let slope: f64 = (0..d).map(|i| g[i] * (probe[i] - x[i])).sum();
            if candidate.is_finite() && candidate <= fx + c1 * slope.min(0.0) && candidate < fx {
                let gn = central_diff_gradient(f, &probe, opts.grad_step);
                evaluations += 2 * d;
                let new_slope: f64 = (0..d).map(|i| gn[i] * (probe[i] - x[i])).sum();
                let better = chosen.as_ref().map_or(true, |(_, cf, _)| candidate < *cf);
                if better {
                    chosen = Some((probe.clone(), candidate, gn));
                }
                if new_slope >= c2 * slope || step >= step_cap {
                    break;
                }
                lo = step;
            } else {
                hi = step;
            }
            step = if hi.is_finite() { 0.5 * (lo + hi) } else { (2.0 * step).min(step_cap) };
            if step < 1e-20 {
                break;
            }
        }
        let accepted = chosen.is_some();
        let (x_new, f_new, g_next) = match chosen {
            Some((cx, cf, cg)) => (cx, cf, Some(cg)),
            None => (x.clone(), fx, None),
        };
        if !accepted {
            if !s_hist.is_empty() {
                // The quasi-Newton direction went bad (e.g. after a sharp
                // curvature change); drop the memory and retry the
                // iteration as plain steepest descent before giving up.
                s_hist.clear();
                y_hist.clear();
                continue;
            }
            // Even steepest descent made no progress; report convergence
            // only if the projected gradient is already small.
            converged = projected_grad_norm(&x, &g, lower, upper) < opts.g_tol * 10.0;
            break;
        }

        let g_new = g_next.expect("accepted trial always carries its gradient");
        let s: Vec<f64> = (0..d).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..d).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm2(&s) * norm2(&y) {
            s_hist.push(s);
            y_hist.push(y);
            if s_hist.len() > opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
            }
        }

        let improvement = fx - f_new;
        x = x_new.clone();
        fx = f_new;
        g = g_new;
        // A single microscopic step can be a line-search artifact; two in a
        // row mean the objective has genuinely flattened out.
        if improvement <= opts.f_tol * (1.0 + fx.abs()) {
            small_steps += 1;
            if small_steps >= 2 {
                converged = true;
                break;
            }
        } else {
            small_steps = 0;
        }
    }
    if projected_grad_norm(&x, &g, lower, upper) < opts.g_tol {
        converged = true;
    }
    OptimOutcome { x, f: fx, iterations, converged, evaluations }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for i in 0..y.len() {
        y[i] += a * x[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gradient_matches_analytic_on_cubic() {
        let mut f = |x: &[f64]| x[0].powi(3) + 2.0 * x[0] * x[1] + x[1].powi(2);
        let x = [0.7, -0.3];
        let g = central_diff_gradient(&mut f, &x, 1e-5);
        assert_abs_diff_eq!(g[0], 3.0 * 0.7f64.powi(2) + 2.0 * -0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 2.0 * 0.7 + 2.0 * -0.3, epsilon = 1e-8);
    }

    #[test]
    fn gradient_richardson_consistency() {
        let mut f = |x: &[f64]| (x[0] * 1.3).sin() * (-x[1]).exp() + x[2].powi(2);
        let x = [0.4, 0.9, -0.2];
        let coarse = central_diff_gradient(&mut f, &x, 1e-4);
        let fine = central_diff_gradient(&mut f, &x, 5e-5);
        for i in 0..3 {
            let denom = fine[i].abs().max(1e-8);
            assert!((coarse[i] - fine[i]).abs() / denom < 1e-4);
        }
    }

    #[test]
    fn minimizes_quadratic_bowl() {
        let target = [1.5, -0.5, 3.0];
        let mut f = |x: &[f64]| {
            (0..3).map(|i| (i as f64 + 1.0) * (x[i] - target[i]).powi(2)).sum::<f64>()
        };
        let out = minimize(&mut f, &[0.0, 0.0, 0.0], &[-10.0; 3], &[10.0; 3], &OptimOptions::default());
        assert!(out.converged);
        for i in 0..3 {
            assert_abs_diff_eq!(out.x[i], target[i], epsilon = 1e-4);
        }
    }

    #[test]
    fn minimizes_rosenbrock() {
        let mut f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = OptimOptions { max_iter: 500, ..OptimOptions::default() };
        let out = minimize(&mut f, &[-1.2, 1.0], &[-2.0, -2.0], &[2.0, 2.0], &opts);
        assert!(out.f < 1e-6, "f = {}", out.f);
        assert_abs_diff_eq!(out.x[0], 1.0, epsilon = 1e-2);
        assert_abs_diff_eq!(out.x[1], 1.0, epsilon = 1e-2);
    }

    #[test]
    fn respects_active_bounds() {
        let mut f = |x: &[f64]| (x[0] + 5.0).powi(2);
        let out = minimize(&mut f, &[4.0], &[0.0], &[10.0], &OptimOptions::default());
        assert!(out.converged);
        assert_eq!(out.x[0], 0.0);
    }

    #[test]
    fn deterministic_iterates() {
        let mut f1 = |x: &[f64]| (x[0] - 0.3).powi(4) + (x[1] + 1.1).powi(2);
        let mut f2 = |x: &[f64]| (x[0] - 0.3).powi(4) + (x[1] + 1.1).powi(2);
        let a = minimize(&mut f1, &[2.0, 2.0], &[-5.0; 2], &[5.0; 2], &OptimOptions::default());
        let b = minimize(&mut f2, &[2.0, 2.0], &[-5.0; 2], &[5.0; 2], &OptimOptions::default());
        assert_eq!(a.x, b.x);
        assert_eq!(a.f, b.f);
        assert_eq!(a.evaluations, b.evaluations);
    }

    #[test]
    fn infinite_regions_are_avoided() {
        // Objective undefined (infinite) left of x = 0.5; minimum at the
        // boundary of the finite region from the feasible side.
        let mut f = |x: &[f64]| if x[0] < 0.5 { f64::INFINITY } else { (x[0] - 0.2).powi(2) };
        let out = minimize(&mut f, &[3.0], &[-10.0], &[10.0], &OptimOptions::default());
        assert!(out.f.is_finite());
        assert!(out.x[0] >= 0.5);
        assert!(out.x[0] < 0.51, "x = {}", out.x[0]);
    }
}
