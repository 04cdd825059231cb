//! Mean-function regression bases.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::kernels::EmulatorKind;

/// Regression basis `f(x, t)` for the GP mean `f(x, t)' * beta`.
///
/// The default for multi-fidelity emulators is [`BasisSpec::LinearInXT`]:
/// since predictions are taken at `t = 0`, the fidelity columns vanish there
/// and the fitted fidelity slopes absorb the first-order bias of running at
/// `t > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisSpec {
    /// Intercept only: `f = [1]`, `m = 1`.
    Constant,
    /// Intercept and input main effects: `f = [1, x]`, `m = 1 + p`.
    LinearInX,
    /// Intercept, input, and fidelity main effects: `f = [1, x, t]`,
    /// `m = 1 + p + q`.
    LinearInXT,
}

impl BasisSpec {
    /// Number of basis functions for the given dimensions.
    pub fn m(self, p: usize, q: usize) -> usize {
        match self {
            BasisSpec::Constant => 1,
            BasisSpec::LinearInX => 1 + p,
            BasisSpec::LinearInXT => 1 + p + q,
        }
    }

    /// Evaluates the basis at one point.
    pub fn row(self, x: &[f64], t: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.m(x.len(), t.len()));
        out[0] = 1.0;
        match self {
            BasisSpec::Constant => {}
            BasisSpec::LinearInX => {
                out.as_mut_slice()[1..1 + x.len()].copy_from_slice(x);
            }
            BasisSpec::LinearInXT => {
                out.as_mut_slice()[1..1 + x.len()].copy_from_slice(x);
                out.as_mut_slice()[1 + x.len()..].copy_from_slice(t);
            }
        }
        out
    }

    /// Stacks the basis rows of every run into the `n x m` regression matrix.
    pub fn matrix(self, data: &Dataset) -> DMatrix<f64> {
        let m = self.m(data.p(), data.q());
        DMatrix::from_fn(data.n(), m, |i, j| {
            if j == 0 {
                1.0
            } else if j <= data.p() && self != BasisSpec::Constant {
                data.x(i)[j - 1]
            } else {
                data.t(i)[j - 1 - data.p()]
            }
        })
    }

    /// Default basis for each emulator.
    ///
    /// The single-fidelity baseline trains on runs that all share one
    /// fidelity, so a `t` column would duplicate the intercept; it drops the
    /// fidelity block. Every multi-fidelity emulator uses the full basis.
    pub fn default_for(model: EmulatorKind) -> BasisSpec {
        match model {
            EmulatorKind::HighFidelityGp => BasisSpec::LinearInX,
            _ => BasisSpec::LinearInXT,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_layout_matches_m() {
        let x = [0.2, 0.4];
        let t = [0.1];
        assert_eq!(BasisSpec::Constant.row(&x, &t).as_slice(), &[1.0]);
        assert_eq!(BasisSpec::LinearInX.row(&x, &t).as_slice(), &[1.0, 0.2, 0.4]);
        assert_eq!(BasisSpec::LinearInXT.row(&x, &t).as_slice(), &[1.0, 0.2, 0.4, 0.1]);
    }

    #[test]
    fn fidelity_columns_vanish_at_limit() {
        let row = BasisSpec::LinearInXT.row(&[0.3], &[0.0, 0.0]);
        assert_eq!(row.as_slice(), &[1.0, 0.3, 0.0, 0.0]);
    }

    #[test]
    fn matrix_stacks_rows() {
        let d = Dataset::new(2, 1, vec![0.1, 0.2, 0.3, 0.4], vec![0.5, 0.25], vec![1.0, 2.0]).unwrap();
        let f = BasisSpec::LinearInXT.matrix(&d);
        assert_eq!(f.nrows(), 2);
        assert_eq!(f.ncols(), 4);
        for i in 0..2 {
            let expect = BasisSpec::LinearInXT.row(d.x(i), d.t(i));
            assert_eq!(f.row(i).transpose(), expect);
        }
    }

    #[test]
    fn defaults_per_model() {
        assert_eq!(BasisSpec::default_for(EmulatorKind::HighFidelityGp), BasisSpec::LinearInX);
        assert_eq!(BasisSpec::default_for(EmulatorKind::ConfigK2), BasisSpec::LinearInXT);
        assert_eq!(BasisSpec::default_for(EmulatorKind::StandardGp), BasisSpec::LinearInXT);
    }
}
