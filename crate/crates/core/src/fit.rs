//! Weighted M-estimation of the functional logistic coefficients and
//! robust selection of the basis dimension.
//!
//! For a fixed basis of dimension `k` the estimator minimizes
//!
//! ```text
//! L_n(alpha, b) = (1/n) Σ_i phi(y_i, alpha + x_i' b) w(X_i)
//! ```
//!
//! over `(alpha, b)`, where `x_i` are the projected scores and `w` the
//! covariate weights. The optimizer warm-starts at the classical deviance
//! fit (damped Newton on the convex weighted log-likelihood) and then runs
//! BFGS with backtracking line search on the robust objective using the
//! analytic gradient. The dimension is chosen as the first local minimum of
//! `RBIC(k) = L_n + k log(n)/n` over an `n`-driven range.

use crate::error::{Error, Result};
use crate::funcbasis::{self, BasisFamily, BasisMatrix, LabeledSample};
use crate::loss::{self, LossSpec};
use crate::weights::{self, WeightSpec};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Coefficients beyond this magnitude with a non-vanishing gradient are
/// treated as quasi-complete separation.
const RUNAWAY_NORM: f64 = 1e6;

/// Seed base for the optional perturbed restarts, so identical inputs give
/// bit-identical fits.
const RESTART_SEED: u64 = 0x46554e4c4f474954;

/// Fitting configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub loss: LossSpec,
    pub weights: WeightSpec,
    pub basis_family: BasisFamily,
    /// Inclusive `(k_min, k_max)` scan range; derived from `n` when absent.
    pub k_range: Option<(usize, usize)>,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Random restarts perturbing the warm start, beyond the warm start
    /// itself.
    pub n_starts: usize,
}

impl FitConfig {
    pub fn new(loss: LossSpec, weights: WeightSpec, basis_family: BasisFamily) -> Self {
        FitConfig {
            loss,
            weights,
            basis_family,
            k_range: None,
            grad_tol: 1e-8,
            max_iter: 200,
            n_starts: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.weights.validate()?;
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if let (BasisFamily::BSpline { order }, Some((k_min, _))) = (self.basis_family, self.k_range)
        {
            if k_min < order {
                return Err(Error::InvalidDimension(format!(
                    "k_min = {k_min} is below the spline order {order}"
                )));
            }
        }
        if let Some((k_min, k_max)) = self.k_range {
            if k_min == 0 || k_max < k_min {
                return Err(Error::InvalidDimension(format!(
                    "invalid k range ({k_min}, {k_max})"
                )));
            }
        }
        Ok(())
    }

    /// Scan range for the basis dimension: the configured one, or
    /// `max(ceil(n^{1/5}/2), 4) ..= floor(8 + 2 n^{1/5})` raised to the
    /// spline order when needed.
    pub fn k_bounds(&self, n: usize) -> Result<(usize, usize)> {
        let (mut k_min, k_max) = match self.k_range {
            Some(r) => r,
            None => {
                let root = (n as f64).powf(0.2);
                let k_min = ((root / 2.0).ceil() as usize).max(4);
                let k_max = (8.0 + 2.0 * root).floor() as usize;
                (k_min, k_max)
            }
        };
        if let BasisFamily::BSpline { order } = self.basis_family {
            k_min = k_min.max(order);
        }
        if k_max < k_min {
            return Err(Error::InvalidDimension(format!(
                "empty k range ({k_min}, {k_max})"
            )));
        }
        Ok((k_min, k_max))
    }
}

/// One fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub coeffs: Vec<f64>,
    pub k: usize,
    /// Value of the weighted objective at the optimum.
    pub objective: f64,
    pub weights_used: Vec<f64>,
    /// Final gradient norm on the internally standardized score scale that
    /// the optimizer worked on.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub rbic: f64,
    /// The slope curve `Σ_j b_j B_j` evaluated on the training grid.
    pub slope: Vec<f64>,
}

/// RBIC trace entry from a dimension scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbicPoint {
    pub k: usize,
    pub rbic: f64,
    pub converged: bool,
}

/// Empirical weighted objective `(1/n) Σ phi(y_i, alpha + x_i' b) w_i`.
///
/// Dimensions must agree and weights must be nonnegative.
pub fn objective(
    sample: &LabeledSample,
    scores: &DMatrix<f64>,
    alpha: f64,
    coeffs: &[f64],
    loss: LossSpec,
    w: &[f64],
) -> f64 {
    let n = sample.len();
    assert_eq!(scores.nrows(), n);
    assert_eq!(scores.ncols(), coeffs.len());
    assert_eq!(w.len(), n);
    let b = DVector::from_column_slice(coeffs);
    let t = scores * b;
    let mut total = 0.0;
    for i in 0..n {
        if w[i] != 0.0 {
            total += w[i] * loss::phi(loss, sample.responses[i], alpha + t[i]);
        }
    }
    total / n as f64
}

/// Analytic gradient of [`objective`] in `(alpha, b)`; the first component
/// is `(1/n) Σ w_i Psi_i` and component `j >= 1` is `(1/n) Σ w_i Psi_i x_ij`.
pub fn gradient(
    sample: &LabeledSample,
    scores: &DMatrix<f64>,
    alpha: f64,
    coeffs: &[f64],
    loss: LossSpec,
    w: &[f64],
) -> Vec<f64> {
    let n = sample.len();
    assert_eq!(scores.nrows(), n);
    assert_eq!(scores.ncols(), coeffs.len());
    assert_eq!(w.len(), n);
    let k = coeffs.len();
    let b = DVector::from_column_slice(coeffs);
    let t = scores * b;
    let mut g = vec![0.0; k + 1];
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let s = w[i] * loss::score(loss, sample.responses[i], alpha + t[i]);
        g[0] += s;
        for j in 0..k {
            g[j + 1] += s * scores[(i, j)];
        }
    }
    for v in &mut g {
        *v /= n as f64;
    }
    g
}

/// `RBIC(k) = L_n + k log(n) / n` for a fitted model.
pub fn rbic(result: &FitResult, n: usize) -> f64 {
    rbic_value(result.objective, result.k, n)
}

fn rbic_value(objective: f64, k: usize, n: usize) -> f64 {
    objective + k as f64 * (n as f64).ln() / n as f64
}

/// Per-column centering and scaling of the active (non-constant) score
/// columns, computed on the positively weighted rows.
struct Standardized {
    z: DMatrix<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    active: Vec<usize>,
}

fn standardize(scores: &DMatrix<f64>, w: &[f64]) -> Standardized {
    let n = scores.nrows();
    let k = scores.ncols();
    let wsum: f64 = w.iter().sum();
    let mut means = vec![0.0; k];
    let mut sds = vec![0.0; k];
    let mut active = Vec::new();
    for j in 0..k {
        let mut m = 0.0;
        for i in 0..n {
            m += w[i] * scores[(i, j)];
        }
        m /= wsum;
        let mut v = 0.0;
        for i in 0..n {
            let d = scores[(i, j)] - m;
            v += w[i] * d * d;
        }
        v /= wsum;
        means[j] = m;
        sds[j] = v.sqrt();
        if sds[j] > 1e-12 * (1.0 + m.abs()) {
            active.push(j);
        }
    }
    let mut z = DMatrix::zeros(n, active.len());
    for (aj, &j) in active.iter().enumerate() {
        for i in 0..n {
            z[(i, aj)] = (scores[(i, j)] - means[j]) / sds[j];
        }
    }
    Standardized {
        z,
        means,
        sds,
        active,
    }
}

/// The optimization problem over `theta = (alpha, b_active)` on the
/// standardized design.
struct Problem<'a> {
    y: &'a [u8],
    z: &'a DMatrix<f64>,
    w: &'a [f64],
    loss: LossSpec,
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.z.ncols();
        let b = theta.rows(1, p).into_owned();
        let mut t = self.z * b;
        t.add_scalar_mut(theta[0]);
        t
    }

    fn value(&self, theta: &DVector<f64>) -> f64 {
        let t = self.linear_predictor(theta);
        let mut total = 0.0;
        for i in 0..self.n() {
            if self.w[i] != 0.0 {
                total += self.w[i] * loss::phi(self.loss, self.y[i], t[i]);
            }
        }
        total / self.n() as f64
    }

    fn grad(&self, theta: &DVector<f64>) -> DVector<f64> {
        let t = self.linear_predictor(theta);
        let p = self.z.ncols();
        let mut g = DVector::zeros(p + 1);
        for i in 0..self.n() {
            if self.w[i] == 0.0 {
                continue;
            }
            let s = self.w[i] * loss::score(self.loss, self.y[i], t[i]);
            g[0] += s;
            for j in 0..p {
                g[j + 1] += s * self.z[(i, j)];
            }
        }
        g / self.n() as f64
    }

    /// Damped Newton on the convex weighted deviance; the classical fit
    /// used as warm start.
    fn irls_deviance(&self, max_iter: usize, tol: f64) -> Result<DVector<f64>> {
        let p = self.z.ncols();
        let n = self.n() as f64;
        let mut theta = DVector::zeros(p + 1);
        let dev = |theta: &DVector<f64>| -> f64 {
            let t = self.linear_predictor(theta);
            (0..self.n())
                .filter(|&i| self.w[i] != 0.0)
                .map(|i| self.w[i] * loss::deviance(self.y[i], t[i]))
                .sum::<f64>()
                / n
        };
        let mut f = dev(&theta);
        for _ in 0..max_iter.max(50) {
            // a weighted deviance this small means the positively weighted
            // responses are perfectly classified, so no finite minimizer
            // exists
            if f < 1e-8 && theta.amax() > 0.0 {
                return Err(Error::Separation(
                    "responses are perfectly separated by the fitted predictor".into(),
                ));
            }
            let t = self.linear_predictor(&theta);
            let mut g = DVector::zeros(p + 1);
            let mut h = DMatrix::zeros(p + 1, p + 1);
            for i in 0..self.n() {
                if self.w[i] == 0.0 {
                    continue;
                }
                let prob = loss::logistic(t[i]);
                let r = self.w[i] * (prob - f64::from(self.y[i]));
                let wi = self.w[i] * (prob * (1.0 - prob)).max(1e-10);
                let mut xi = DVector::zeros(p + 1);
                xi[0] = 1.0;
                for j in 0..p {
                    xi[j + 1] = self.z[(i, j)];
                }
                g += r * &xi;
                h += wi * &xi * xi.transpose();
            }
            g /= n;
            h /= n;
            if g.norm() <= tol {
                return Ok(theta);
            }
            let chol = nalgebra::Cholesky::new(h)
                .ok_or_else(|| Error::Collinear("singular weighted information matrix".into()))?;
            let delta = chol.solve(&(-&g));
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..60 {
                let cand = &theta + step * &delta;
                let fc = dev(&cand);
                if fc.is_finite() && fc <= f {
                    theta = cand;
                    f = fc;
                    improved = true;
                    break;
                }
                step *= 0.5;
            }
            if theta.amax() > RUNAWAY_NORM {
                return Err(Error::Separation(
                    "coefficients diverged in the deviance fit (quasi-complete separation)".into(),
                ));
            }
            if !improved {
                return Ok(theta); // stationary to line-search precision
            }
        }
        if self.grad(&theta).norm() > tol.max(1e-6) && theta.amax() > 1e3 {
            return Err(Error::Separation(
                "deviance fit did not stabilize; responses may be separated".into(),
            ));
        }
        Ok(theta)
    }

    /// BFGS with Armijo backtracking; returns `(theta, grad_norm, iters,
    /// converged)`. Convergence is judged at `grad_tol`, but iteration
    /// continues toward a tighter polish target so reported coefficients sit
    /// well inside the tolerance.
    fn bfgs(
        &self,
        start: DVector<f64>,
        grad_tol: f64,
        max_iter: usize,
    ) -> Result<(DVector<f64>, f64, usize, bool)> {
        let polish_tol = (grad_tol * 1e-3).max(1e-13);
        let p = start.len();
        let mut theta = start;
        let mut f = self.value(&theta);
        let mut g = self.grad(&theta);
        let mut hinv = DMatrix::<f64>::identity(p, p);
        for iter in 0..max_iter {
            let gnorm = g.norm();
            if gnorm <= polish_tol {
                return Ok((theta, gnorm, iter, true));
            }
            let mut dir = -(&hinv * &g);
            if dir.dot(&g) >= 0.0 {
                hinv = DMatrix::identity(p, p);
                dir = -g.clone();
            }
            let slope = dir.dot(&g);
            let mut step = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let cand = &theta + step * &dir;
                let fc = self.value(&cand);
                if fc.is_finite() && fc <= f + 1e-4 * step * slope {
                    accepted = Some((cand, fc));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, fc)) = accepted else {
                // no decrease along a descent direction: numerically at a
                // stationary point
                return Ok((theta, gnorm, iter, gnorm <= grad_tol));
            };
            let gc = self.grad(&cand);
            let s = &cand - &theta;
            let yv = &gc - &g;
            let sy = s.dot(&yv);
            if sy > 1e-12 * s.norm() * yv.norm() {
                let rho = 1.0 / sy;
                let hy = &hinv * &yv;
                let yhy = yv.dot(&hy);
                // BFGS inverse update
                hinv += (sy + yhy) * rho * rho * (&s * s.transpose())
                    - rho * (&hy * s.transpose() + &s * hy.transpose());
            }
            theta = cand;
            f = fc;
            g = gc;
            if theta.amax() > RUNAWAY_NORM {
                return Err(Error::Separation(
                    "coefficients diverged in the robust fit (quasi-complete separation)".into(),
                ));
            }
        }
        let gnorm = g.norm();
        Ok((theta, gnorm, max_iter, gnorm <= grad_tol))
    }
}

/// Fits the weighted M-estimator for a fixed basis.
pub fn fit_fixed_k(
    sample: &LabeledSample,
    basis: &BasisMatrix,
    config: &FitConfig,
) -> Result<FitResult> {
    fit_fixed_k_with(sample, basis, config, None)
}

/// As [`fit_fixed_k`], optionally reusing precomputed covariate weights
/// (the functional-boxplot weights do not depend on `k`).
pub(crate) fn fit_fixed_k_with(
    sample: &LabeledSample,
    basis: &BasisMatrix,
    config: &FitConfig,
    precomputed_weights: Option<&[f64]>,
) -> Result<FitResult> {
    config.validate()?;
    let n = sample.len();
    let k = basis.k;
    if n <= k + 1 {
        return Err(Error::InvalidDimension(format!(
            "need n > k + 1, got n = {n}, k = {k}"
        )));
    }

    let scores = funcbasis::project(&sample.curves, basis)?;
    let w = match precomputed_weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::InvalidDimension(format!(
                    "{} precomputed weights for {} observations",
                    w.len(),
                    n
                )));
            }
            w.to_vec()
        }
        None => weights::compute_weights(sample, &scores, &config.weights)?,
    };

    let mut have = [false, false];
    for i in 0..n {
        if w[i] > 0.0 {
            have[sample.responses[i] as usize] = true;
        }
    }
    if !have[0] || !have[1] {
        return Err(Error::Separation(
            "only one response class has positive weight".into(),
        ));
    }

    let std = standardize(&scores, &w);
    let problem = Problem {
        y: &sample.responses,
        z: &std.z,
        w: &w,
        loss: config.loss,
    };

    // classical warm start on the convex deviance
    let warm = problem.irls_deviance(config.max_iter, config.grad_tol.min(1e-10))?;

    let mut starts = vec![warm.clone()];
    if config.n_starts > 0 {
        let mut rng = ChaCha12Rng::seed_from_u64(RESTART_SEED ^ (k as u64));
        let spread = 0.5 * (1.0 + warm.amax());
        for _ in 0..config.n_starts {
            let noise = DVector::from_fn(warm.len(), |_, _| {
                spread * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            starts.push(&warm + noise);
        }
    }

    let mut best: Option<(DVector<f64>, f64, usize, bool, f64)> = None;
    for start in starts {
        let (theta, gnorm, iters, converged) =
            problem.bfgs(start, config.grad_tol, config.max_iter)?;
        let value = problem.value(&theta);
        let better = match &best {
            None => true,
            Some((_, _, _, best_conv, best_val)) => {
                (converged && !best_conv) || (converged == *best_conv && value < *best_val)
            }
        };
        if better {
            best = Some((theta, gnorm, iters, converged, value));
        }
    }
    let (theta, gradient_norm, iterations, converged, _) = best.unwrap();

    // undo the standardization
    let mut coeffs = vec![0.0; k];
    let mut alpha = theta[0];
    for (aj, &j) in std.active.iter().enumerate() {
        coeffs[j] = theta[aj + 1] / std.sds[j];
        alpha -= theta[aj + 1] * std.means[j] / std.sds[j];
    }

    let objective_value = objective(sample, &scores, alpha, &coeffs, config.loss, &w);
    let slope = funcbasis::evaluate_slope(&coeffs, basis)?;
    Ok(FitResult {
        alpha,
        coeffs,
        k,
        objective: objective_value,
        weights_used: w,
        gradient_norm,
        iterations,
        converged,
        rbic: rbic_value(objective_value, k, n),
        slope,
    })
}

/// Index of the first strict local minimum in an RBIC sequence scanned in
/// ascending `k`; plateaus continue the scan and a strictly decreasing
/// sequence selects the last entry.
fn first_local_min(rbics: &[f64]) -> usize {
    for i in 0..rbics.len().saturating_sub(1) {
        if rbics[i] < rbics[i + 1] {
            return i;
        }
    }
    rbics.len() - 1
}

fn with_k_context(k: usize, e: Error) -> Error {
    match e {
        Error::Separation(m) => Error::Separation(format!("at k = {k}: {m}")),
        Error::Collinear(m) => Error::Collinear(format!("at k = {k}: {m}")),
        Error::InvalidDimension(m) => Error::InvalidDimension(format!("at k = {k}: {m}")),
        other => Error::InvalidInput(format!("fit at k = {k} failed: {other}")),
    }
}

/// Scans the dimension range, fitting ascending `k`, and returns the fit at
/// the first local RBIC minimum together with the scanned trace.
pub fn select_k_trace(
    sample: &LabeledSample,
    config: &FitConfig,
) -> Result<(FitResult, Vec<RbicPoint>)> {
    config.validate()?;
    let n = sample.len();
    let (k_min, k_max) = config.k_bounds(n)?;

    // boxplot weights ignore the basis, so hoist them out of the scan
    let hoisted: Option<Vec<f64>> = match config.weights {
        WeightSpec::FunctionalBoxplotHR { factor } => {
            let flags = weights::fbplot_outliers(&sample.curves, factor)?;
            Some(flags.iter().map(|&f| 1.0 - f64::from(f)).collect())
        }
        WeightSpec::Unit => Some(vec![1.0; n]),
        WeightSpec::MahalanobisHR { .. } => None,
    };

    let mut fits: Vec<FitResult> = Vec::new();
    let mut trace: Vec<RbicPoint> = Vec::new();
    for k in k_min..=k_max {
        let basis = funcbasis::design(&sample.curves.grid, k, config.basis_family)
            .map_err(|e| with_k_context(k, e))?;
        let fit = fit_fixed_k_with(sample, &basis, config, hoisted.as_deref())
            .map_err(|e| with_k_context(k, e))?;
        trace.push(RbicPoint {
            k,
            rbic: fit.rbic,
            converged: fit.converged,
        });
        fits.push(fit);
        let rbics: Vec<f64> = fits.iter().map(|f| f.rbic).collect();
        let at = first_local_min(&rbics);
        if at + 1 < fits.len() {
            // rbic rose after `at`: first local minimum found
            return Ok((fits.swap_remove(at), trace));
        }
    }
    let rbics: Vec<f64> = fits.iter().map(|f| f.rbic).collect();
    let at = first_local_min(&rbics);
    Ok((fits.swap_remove(at), trace))
}

/// Fits with the basis dimension chosen by the first local minimum of RBIC.
pub fn select_k(sample: &LabeledSample, config: &FitConfig) -> Result<FitResult> {
    select_k_trace(sample, config).map(|(fit, _)| fit)
}
