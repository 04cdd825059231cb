//! Prediction-quality metrics shared by the benchmark and the comparison.

use serde::{Deserialize, Serialize};

/// One predictive summary at a test input, whichever inference produced it.
#[derive(Debug, Clone, Copy)]
pub struct Prediction {
    pub mean: f64,
    /// Standard error (predictive standard deviation).
    pub std_err: f64,
    /// 95% interval bounds.
    pub lo95: f64,
    pub hi95: f64,
}

/// Test MSE, empirical 95% coverage, and average standard error over a
/// test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean squared prediction error of the posterior/plug-in mean.
    pub mse: f64,
    /// Fraction of test points whose truth lies inside the 95% interval.
    pub coverage: f64,
    /// Mean predictive standard deviation.
    pub avg_std_err: f64,
}

/// Computes the three metrics against the exact responses.
///
/// `mse = (1/N) sum (mean_j - truth_j)^2`,
/// `coverage = (1/N) sum 1{lo_j <= truth_j <= hi_j}`,
/// `avg_std_err = (1/N) sum std_err_j`.
pub fn evaluate(truth: &[f64], predictions: &[Prediction]) -> Metrics {
    assert_eq!(truth.len(), predictions.len(), "one prediction per test point");
    assert!(!truth.is_empty(), "metrics need at least one test point");
    let n = truth.len() as f64;
    let mut sq = 0.0;
    let mut inside = 0usize;
    let mut se = 0.0;
    for (y, pred) in truth.iter().zip(predictions) {
        let err = pred.mean - y;
        sq += err * err;
        if pred.lo95 <= *y && *y <= pred.hi95 {
            inside += 1;
        }
        se += pred.std_err;
    }
    Metrics { mse: sq / n, coverage: inside as f64 / n, avg_std_err: se / n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn three_point_fixture_matches_hand_computation() {
        // truth:   1.0   2.0   3.0
        // mean:    1.5   2.0   2.0
        // errors:  0.5   0.0  -1.0  ->  mse = (0.25 + 0 + 1) / 3 = 5/12
        // se:      0.1   0.2   0.3  ->  avg = 0.2
        // intervals: [1.2, 1.8] misses 1.0; [1.6, 2.4] covers 2.0;
        //            [1.4, 2.6] misses 3.0 -> coverage = 1/3
        let truth = [1.0, 2.0, 3.0];
        let preds = [
            Prediction { mean: 1.5, std_err: 0.1, lo95: 1.2, hi95: 1.8 },
            Prediction { mean: 2.0, std_err: 0.2, lo95: 1.6, hi95: 2.4 },
            Prediction { mean: 2.0, std_err: 0.3, lo95: 1.4, hi95: 2.6 },
        ];
        let m = evaluate(&truth, &preds);
        assert_abs_diff_eq!(m.mse, 5.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.coverage, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.avg_std_err, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn boundary_points_count_as_covered() {
        let truth = [2.0];
        let preds = [Prediction { mean: 2.0, std_err: 0.0, lo95: 2.0, hi95: 2.0 }];
        assert_eq!(evaluate(&truth, &preds).coverage, 1.0);
    }
}
