//! Model diagnostics: predicted probabilities, deviance residuals, the
//! residual-distribution estimator used for QQ plots, outlier flagging, and
//! prediction-error metrics against a known truth.
//!
//! The deviance residual of an observation is
//! `d_i = sign(y_i - p_i) sqrt(-2 [(1-y_i) log(1-p_i) + y_i log p_i])`.
//! Its distribution is estimated by placing, for every observation, mass
//! `p_i / n` at `+sqrt(-2 log p_i)` (the residual it would have if `y_i = 1`)
//! and mass `(1 - p_i) / n` at `-sqrt(-2 log(1 - p_i))`; quantiles of this
//! step distribution give cutoffs and theoretical QQ positions.

use crate::error::{Error, Result};
use crate::fit::FitResult;
use crate::funcbasis::{self, BasisMatrix, CurveSet};
use crate::loss;
use serde::{Deserialize, Serialize};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before
/// taking logs, so saturated fits give large finite residuals.
const PROB_CLAMP: f64 = 1e-12;

/// Residuals, cutoffs, flags, and QQ plotting data for one fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub probs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub cutoff_low: f64,
    pub cutoff_high: f64,
    pub outlier_flags: Vec<u8>,
    /// `(theoretical quantile, sorted empirical residual)` pairs at plotting
    /// positions `(i - 0.5) / n`.
    pub qq_pairs: Vec<(f64, f64)>,
    /// Observations whose probability had to be clamped away from 0 or 1.
    pub clamped: Vec<bool>,
}

/// Deviance residuals plus clamping warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct DevianceResiduals {
    pub values: Vec<f64>,
    pub clamped: Vec<bool>,
}

/// Predicted success probabilities `F(alpha + ⟨X_i, beta⟩)`, clamped into
/// the open unit interval.
pub fn predict_probs(fit: &FitResult, basis: &BasisMatrix, curves: &CurveSet) -> Result<Vec<f64>> {
    let scores = funcbasis::project(curves, basis)?;
    if scores.ncols() != fit.coeffs.len() {
        return Err(Error::InvalidDimension(format!(
            "fit has {} coefficients but the basis has dimension {}",
            fit.coeffs.len(),
            scores.ncols()
        )));
    }
    let b = nalgebra::DVector::from_column_slice(&fit.coeffs);
    let t = scores * b;
    Ok(t
        .iter()
        .map(|&ti| loss::logistic(fit.alpha + ti).clamp(1e-15, 1.0 - 1e-15))
        .collect())
}

/// Signed deviance residuals; probabilities at 0 or 1 are clamped and the
/// affected entries marked.
pub fn deviance_residuals(responses: &[u8], probs: &[f64]) -> Result<DevianceResiduals> {
    if responses.len() != probs.len() {
        return Err(Error::InvalidDimension(format!(
            "{} responses for {} probabilities",
            responses.len(),
            probs.len()
        )));
    }
    let mut values = Vec::with_capacity(probs.len());
    let mut clamped = Vec::with_capacity(probs.len());
    for (&y, &p) in responses.iter().zip(probs) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        clamped.push(pc != p);
        let d = if y == 1 {
            (-2.0 * pc.ln()).sqrt()
        } else {
            -(-2.0 * (1.0 - pc).ln()).sqrt()
        };
        values.push(d);
    }
    Ok(DevianceResiduals { values, clamped })
}

/// Step distribution of the deviance residuals: sorted support points with
/// cumulative masses normalized to 1.
struct ResidualDistribution {
    points: Vec<f64>,
    cum: Vec<f64>,
}

impl ResidualDistribution {
    fn build(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("empty probability vector".into()));
        }
        let n = probs.len() as f64;
        let mut mass: Vec<(f64, f64)> = Vec::with_capacity(2 * probs.len());
        for &p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
            }
            let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            mass.push(((-2.0 * pc.ln()).sqrt(), pc / n));
            mass.push((-(-2.0 * (1.0 - pc).ln()).sqrt(), (1.0 - pc) / n));
        }
        mass.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let total: f64 = mass.iter().map(|m| m.1).sum();
        let mut points = Vec::with_capacity(mass.len());
        let mut cum = Vec::with_capacity(mass.len());
        let mut acc = 0.0;
        for (d, m) in mass {
            acc += m;
            points.push(d);
            cum.push(acc / total);
        }
        Ok(ResidualDistribution { points, cum })
    }

    /// Right-continuous CDF value at `d`.
    fn eval(&self, d: f64) -> f64 {
        match self.points.partition_point(|&p| p <= d) {
            0 => 0.0,
            idx => self.cum[idx - 1],
        }
    }

    /// Generalized inverse: the smallest support point with CDF at least
    /// `level`.
    fn quantile(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let idx = self.cum.partition_point(|&c| c < level - 1e-12);
        self.points[idx.min(self.points.len() - 1)]
    }
}

/// Estimated distribution function of the deviance residuals evaluated
/// at `d`.
pub fn fhat_d(d: f64, probs: &[f64]) -> Result<f64> {
    Ok(ResidualDistribution::build(probs)?.eval(d))
}

/// Builds the full residual report: residuals, quantile cutoffs at the given
/// levels, outlier flags, and QQ plotting pairs.
pub fn flag_outliers(responses: &[u8], probs: &[f64], levels: (f64, f64)) -> Result<ResidualReport> {
    if !(0.0..=1.0).contains(&levels.0) || !(0.0..=1.0).contains(&levels.1) || levels.0 > levels.1 {
        return Err(Error::Domain(format!(
            "invalid quantile levels ({}, {})",
            levels.0, levels.1
        )));
    }
    let res = deviance_residuals(responses, probs)?;
    let dist = ResidualDistribution::build(probs)?;
    let cutoff_low = dist.quantile(levels.0);
    let cutoff_high = dist.quantile(levels.1);
    let outlier_flags: Vec<u8> = res
        .values
        .iter()
        .map(|&d| u8::from(d < cutoff_low || d > cutoff_high))
        .collect();

    let n = res.values.len();
    let mut sorted = res.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let qq_pairs: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, &emp)| (dist.quantile((i as f64 + 0.5) / n as f64), emp))
        .collect();

    Ok(ResidualReport {
        probs: probs.to_vec(),
        residuals: res.values,
        cutoff_low,
        cutoff_high,
        outlier_flags,
        qq_pairs,
        clamped: res.clamped,
    })
}

fn check_truth_inputs(
    fit: &FitResult,
    beta0: &[f64],
    test_curves: &CurveSet,
    w: &[f64],
) -> Result<()> {
    let g = test_curves.grid.len();
    if fit.slope.len() != g || beta0.len() != g {
        return Err(Error::IncompatibleGrid(format!(
            "slope ({}), truth ({}) and test grid ({g}) sizes differ",
            fit.slope.len(),
            beta0.len()
        )));
    }
    if w.len() != test_curves.n_curves() {
        return Err(Error::InvalidDimension(format!(
            "{} weights for {} test curves",
            w.len(),
            test_curves.n_curves()
        )));
    }
    Ok(())
}

/// True and fitted linear predictors for every test curve, both by
/// trapezoid quadrature on the common grid.
fn predictor_pairs(
    fit: &FitResult,
    alpha0: f64,
    beta0: &[f64],
    test_curves: &CurveSet,
) -> Vec<(f64, f64)> {
    let qw = test_curves.grid.trapezoid_weights();
    let g = test_curves.grid.len();
    let v = &test_curves.values;
    (0..test_curves.n_curves())
        .map(|i| {
            let mut t0 = alpha0;
            let mut t1 = fit.alpha;
            for gi in 0..g {
                let x = v[(i, gi)] * qw[gi];
                t0 += x * beta0[gi];
                t1 += x * fit.slope[gi];
            }
            (t0, t1)
        })
        .collect()
}

/// Weighted mean squared difference between true and fitted success
/// probabilities on a test set; the per-replication PMSE summand when the
/// weights are 1.
pub fn pi_p_hat(
    fit: &FitResult,
    alpha0: f64,
    beta0: &[f64],
    test_curves: &CurveSet,
    w: &[f64],
) -> Result<f64> {
    check_truth_inputs(fit, beta0, test_curves, w)?;
    let n = test_curves.n_curves();
    let total: f64 = predictor_pairs(fit, alpha0, beta0, test_curves)
        .iter()
        .zip(w)
        .map(|(&(t0, t1), &wi)| {
            let diff = loss::logistic(t0) - loss::logistic(t1);
            wi * diff * diff
        })
        .sum();
    Ok(total / n as f64)
}

/// Weighted mean squared difference between true and fitted linear
/// predictors; dominates [`pi_p_hat`] since the link is 1-Lipschitz.
pub fn pi_tilde_hat(
    fit: &FitResult,
    alpha0: f64,
    beta0: &[f64],
    test_curves: &CurveSet,
    w: &[f64],
) -> Result<f64> {
    check_truth_inputs(fit, beta0, test_curves, w)?;
    let n = test_curves.n_curves();
    let total: f64 = predictor_pairs(fit, alpha0, beta0, test_curves)
        .iter()
        .zip(w)
        .map(|(&(t0, t1), &wi)| wi * (t0 - t1) * (t0 - t1))
        .sum();
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcbasis::{fourier_design, Grid};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dummy_fit(alpha: f64, coeffs: Vec<f64>, slope: Vec<f64>) -> FitResult {
        let k = coeffs.len();
        FitResult {
            alpha,
            coeffs,
            k,
            objective: 0.0,
            weights_used: vec![],
            gradient_norm: 0.0,
            iterations: 0,
            converged: true,
            rbic: 0.0,
            slope,
        }
    }

    #[test]
    fn predict_zero_fit_gives_half() {
        let grid = Grid::equispaced(20).unwrap();
        let basis = fourier_design(&grid, 3).unwrap();
        let curves = CurveSet::new(grid.clone(), DMatrix::from_element(5, 20, 0.7)).unwrap();
        let fit = dummy_fit(0.0, vec![0.0; 3], vec![0.0; 20]);
        let p = predict_probs(&fit, &basis, &curves).unwrap();
        assert!(p.iter().all(|&x| x == 0.5));
        // an enormous intercept saturates without overflow and stays below 1
        let big = dummy_fit(800.0, vec![0.0; 3], vec![0.0; 20]);
        let p = predict_probs(&big, &basis, &curves).unwrap();
        assert!(p.iter().all(|&x| x < 1.0 && x > 0.999 && x.is_finite()));
    }

    #[test]
    fn predict_agrees_with_objective_predictor() {
        let grid = Grid::equispaced(30).unwrap();
        let basis = fourier_design(&grid, 4).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let curves = CurveSet::new(
            grid.clone(),
            DMatrix::from_fn(8, 30, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let coeffs = vec![0.4, -0.3, 0.2, 0.1];
        let fit = dummy_fit(0.25, coeffs.clone(), vec![0.0; 30]);
        let p = predict_probs(&fit, &basis, &curves).unwrap();
        let scores = funcbasis::project(&curves, &basis).unwrap();
        for i in 0..8 {
            let t: f64 = 0.25 + (0..4).map(|j| scores[(i, j)] * coeffs[j]).sum::<f64>();
            assert_abs_diff_eq!(p[i], loss::logistic(t), epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_values() {
        let res = deviance_residuals(&[1, 0], &[0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(res.values[0], 1.1774100225154747, epsilon = 1e-12);
        assert_abs_diff_eq!(res.values[1], -1.1774100225154747, epsilon = 1e-12);
        assert!(!res.clamped[0]);
        // a perfectly predicted response has residual approaching 0
        let perfect = deviance_residuals(&[1], &[1.0 - 1e-9]).unwrap();
        assert!(perfect.values[0].abs() < 1e-4);
        assert!(!perfect.clamped[0]);
        // p exactly 1 clamps with a warning
        let clamped = deviance_residuals(&[0], &[1.0]).unwrap();
        assert!(clamped.clamped[0]);
        assert!(clamped.values[0] < -7.0 && clamped.values[0].is_finite());
        assert!(deviance_residuals(&[1], &[1.3]).is_err());
    }

    #[test]
    fn fhat_d_single_observation_jumps() {
        let probs = [0.5];
        let d0 = 1.1774100225154747;
        assert_abs_diff_eq!(fhat_d(-d0 - 1e-9, &probs).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fhat_d(-d0, &probs).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fhat_d(d0 - 1e-9, &probs).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(fhat_d(d0, &probs).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fhat_d(100.0, &probs).unwrap(), 1.0, epsilon = 1e-15);
        assert!(fhat_d(0.0, &[]).is_err());
    }

    #[test]
    fn fhat_d_monotone_with_unit_range() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let probs: Vec<f64> = (0..40).map(|_| rng.random_range(0.01..0.99)).collect();
        let dist = ResidualDistribution::build(&probs).unwrap();
        let mut prev = 0.0;
        for i in 0..=1000 {
            let d = -8.0 + i as f64 * 0.016;
            let v = dist.eval(d);
            assert!((0.0..=1.0).contains(&v));
            assert!(v + 1e-15 >= prev, "not monotone at {d}");
            prev = v;
        }
        assert_eq!(dist.eval(-9.0), 0.0);
        assert_abs_diff_eq!(dist.eval(9.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn flags_and_qq() {
        // perfectly fitted sample: residuals near zero, nothing flagged
        let responses: Vec<u8> = (0..20).map(|i| u8::from(i % 2 == 0)).collect();
        let probs: Vec<f64> = responses
            .iter()
            .map(|&y| if y == 1 { 0.999 } else { 0.001 })
            .collect();
        let report = flag_outliers(&responses, &probs, (0.005, 0.995)).unwrap();
        assert!(report.outlier_flags.iter().all(|&f| f == 0));

        // extreme levels flag nothing either
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let responses: Vec<u8> = (0..30).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
        let probs: Vec<f64> = (0..30).map(|_| rng.random_range(0.05..0.95)).collect();
        let report = flag_outliers(&responses, &probs, (0.0, 1.0)).unwrap();
        assert!(report.outlier_flags.iter().all(|&f| f == 0));
        assert_eq!(report.cutoff_low, f64::NEG_INFINITY);

        // QQ pairs are monotone in both coordinates
        let report = flag_outliers(&responses, &probs, (0.005, 0.995)).unwrap();
        for w in report.qq_pairs.windows(2) {
            assert!(w[1].0 >= w[0].0 - 1e-15);
            assert!(w[1].1 >= w[0].1 - 1e-15);
        }
        // flags match the cutoff rule
        for (i, &d) in report.residuals.iter().enumerate() {
            let should = d < report.cutoff_low || d > report.cutoff_high;
            assert_eq!(report.outlier_flags[i] == 1, should);
        }
    }

    #[test]
    fn misclassified_point_flagged() {
        // one response contradicting a confident probability sticks out
        let mut responses = vec![1u8; 40];
        let mut probs = vec![0.8; 40];
        responses[7] = 0;
        probs[7] = 0.995; // y = 0 despite near-certain prediction
        let report = flag_outliers(&responses, &probs, (0.01, 0.99)).unwrap();
        assert_eq!(report.outlier_flags[7], 1);
        assert_eq!(report.outlier_flags.iter().filter(|&&f| f == 1).count(), 1);
    }

    #[test]
    fn pi_metrics() {
        let grid = Grid::equispaced(50).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let curves = CurveSet::new(
            grid.clone(),
            DMatrix::from_fn(25, 50, |_, _| rng.random_range(-1.0..1.0)),
        )
        .unwrap();
        let beta0: Vec<f64> = grid.points().iter().map(|t| (2.0 * t).sin()).collect();
        let w = vec![1.0; 25];

        // fit equal to truth: both metrics vanish
        let exact = dummy_fit(0.3, vec![], beta0.clone());
        assert_abs_diff_eq!(pi_p_hat(&exact, 0.3, &beta0, &curves, &w).unwrap(), 0.0);
        assert_abs_diff_eq!(pi_tilde_hat(&exact, 0.3, &beta0, &curves, &w).unwrap(), 0.0);

        // intercept-only discrepancy delta: pi_tilde = delta^2 exactly
        let delta = 0.7;
        let shifted = dummy_fit(0.3 + delta, vec![], beta0.clone());
        assert_abs_diff_eq!(
            pi_tilde_hat(&shifted, 0.3, &beta0, &curves, &w).unwrap(),
            delta * delta,
            epsilon = 1e-12
        );

        // domination on arbitrary fits
        for trial in 0..5 {
            let slope: Vec<f64> = grid
                .points()
                .iter()
                .map(|t| (trial as f64 + 1.0) * (3.0 * t).cos())
                .collect();
            let fit = dummy_fit(-0.4 + 0.3 * trial as f64, vec![], slope);
            let p = pi_p_hat(&fit, 0.3, &beta0, &curves, &w).unwrap();
            let pt = pi_tilde_hat(&fit, 0.3, &beta0, &curves, &w).unwrap();
            assert!(p <= pt + 1e-15, "{p} > {pt}");
        }

        // grid mismatch
        let other = CurveSet::new(Grid::equispaced(40).unwrap(), DMatrix::zeros(3, 40)).unwrap();
        assert!(pi_p_hat(&exact, 0.3, &beta0, &other, &vec![1.0; 3]).is_err());
    }
}
