//! Synthetic data generation and the contamination study harness.
//!
//! Clean samples follow the functional logistic model with a Gaussian
//! process covariate built from the first `n_terms` cosine eigenfunctions
//! (`Var(xi_j) = j^{-2}`) and the slope
//! `beta_0 = 0.3 phi_1 + Σ_{j>=2} 4 (-1)^{j+1} j^{-2} phi_j`, intercept 0.
//! Five contamination schemes replace a fraction of the sample with
//! misclassified and/or high-leverage observations. The harness runs
//! replicated studies across estimators, accumulating intercept bias,
//! trimmed slope metrics and probability mean squared errors.
//!
//! All randomness flows through counter-based streams keyed by
//! `(seed, replication, role)`, so results do not depend on the parallel
//! schedule.

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::fit::{self, FitConfig};
use crate::funcbasis::{self, BasisFamily, CurveSet, Grid, LabeledSample};
use crate::loss::{self, LossSpec};
use crate::weights::WeightSpec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

const ROLE_TRAIN: u64 = 0;
const ROLE_CONTAMINATE: u64 = 1;
const ROLE_TEST: u64 = 2;

fn substream(seed: u64, replication: u64, role: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(replication * 4 + role);
    rng
}

/// Clean-sample generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    /// Truncation order of the Karhunen-Loève expansion.
    pub n_terms: usize,
    pub grid_size: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(n: usize, seed: u64) -> Self {
        GeneratorSpec {
            n,
            n_terms: 50,
            grid_size: 100,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 10 {
            return Err(Error::InvalidInput(format!(
                "generator needs n >= 10, got {}",
                self.n
            )));
        }
        if self.n_terms < 1 {
            return Err(Error::InvalidInput("n_terms must be at least 1".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidInput("grid_size must be at least 2".into()));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::equispaced(self.grid_size)
    }
}

/// Contamination scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    C0,
    C1,
    C2,
    C3,
    C4,
    C5,
}

impl Scheme {
    pub fn parse(name: &str) -> Option<Scheme> {
        match name.to_ascii_uppercase().as_str() {
            "C0" => Some(Scheme::C0),
            "C1" => Some(Scheme::C1),
            "C2" => Some(Scheme::C2),
            "C3" => Some(Scheme::C3),
            "C4" => Some(Scheme::C4),
            "C5" => Some(Scheme::C5),
            _ => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Scheme::C0 => "C0",
            Scheme::C1 => "C1",
            Scheme::C2 => "C2",
            Scheme::C3 => "C3",
            Scheme::C4 => "C4",
            Scheme::C5 => "C5",
        }
    }
}

/// A contamination scheme with its rate and magnitude parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scheme: Scheme,
    pub epsilon: f64,
    /// Slope multiplier of the leverage contamination (scheme C2).
    pub m: f64,
    /// Level of the mean-shift contaminations (schemes C3-C5).
    pub mu_level: f64,
}

impl ScenarioSpec {
    pub fn clean() -> Self {
        ScenarioSpec {
            scheme: Scheme::C0,
            epsilon: 0.0,
            m: 4.0,
            mu_level: 25.0,
        }
    }

    pub fn new(scheme: Scheme, epsilon: f64) -> Self {
        ScenarioSpec {
            scheme,
            epsilon: if scheme == Scheme::C0 { 0.0 } else { epsilon },
            m: 4.0,
            mu_level: 25.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "contamination rate must be in [0, 0.5], got {}",
                self.epsilon
            )));
        }
        if self.scheme == Scheme::C0 && self.epsilon != 0.0 {
            return Err(Error::InvalidInput(
                "scenario C0 is clean; epsilon must be 0".into(),
            ));
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        if self.scheme == Scheme::C0 {
            "C0".to_string()
        } else {
            format!("{}_{:.2}", self.scheme.label(), self.epsilon)
        }
    }
}

/// Coefficients of the true slope in the cosine basis (index 0 is the
/// constant term): `b_1 = 0.3`, `b_j = 4 (-1)^{j+1} j^{-2}` for `j >= 2`.
pub fn true_beta_coeffs(n_terms: usize) -> Vec<f64> {
    (1..=n_terms)
        .map(|j| {
            if j == 1 {
                0.3
            } else {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                4.0 * sign / (j * j) as f64
            }
        })
        .collect()
}

/// The true slope evaluated on a grid.
pub fn true_beta(grid: &Grid, n_terms: usize) -> Result<Vec<f64>> {
    let basis = funcbasis::fourier_design(grid, n_terms)?;
    funcbasis::evaluate_slope(&true_beta_coeffs(n_terms), &basis)
}

fn gen_clean_with(spec: &GeneratorSpec, rng: &mut ChaCha12Rng) -> Result<(LabeledSample, DMatrix<f64>)> {
    spec.validate()?;
    let grid = spec.grid()?;
    let basis = funcbasis::fourier_design(&grid, spec.n_terms)?;
    let b0 = true_beta_coeffs(spec.n_terms);

    let mut scores = DMatrix::zeros(spec.n, spec.n_terms);
    for i in 0..spec.n {
        for j in 0..spec.n_terms {
            let sd = 1.0 / (j + 1) as f64;
            scores[(i, j)] = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
        }
    }
    let values = &scores * &basis.evals;
    let responses: Vec<u8> = (0..spec.n)
        .map(|i| {
            let eta: f64 = (0..spec.n_terms).map(|j| scores[(i, j)] * b0[j]).sum();
            u8::from(rng.random::<f64>() < loss::logistic(eta))
        })
        .collect();
    let curves = CurveSet::new(grid, values)?;
    Ok((LabeledSample::new(curves, responses)?, scores))
}

/// Draws a clean sample; returns it together with the exact basis scores of
/// every curve (row `i` holds `xi_{i1} .. xi_{i n_terms}`).
pub fn gen_clean(spec: &GeneratorSpec) -> Result<(LabeledSample, DMatrix<f64>)> {
    let mut rng = substream(spec.seed, 0, ROLE_TRAIN);
    gen_clean_with(spec, &mut rng)
}

/// A contaminated sample with the exact scores of every row (contaminated
/// rows included) and the number of replaced observations.
#[derive(Debug, Clone)]
pub struct Contaminated {
    pub sample: LabeledSample,
    pub scores: DMatrix<f64>,
    pub n_out: usize,
}

fn contaminate_with(
    sample: &LabeledSample,
    scores: &DMatrix<f64>,
    scenario: &ScenarioSpec,
    spec: &GeneratorSpec,
    rng: &mut ChaCha12Rng,
) -> Result<Contaminated> {
    scenario.validate()?;
    let n = sample.len();
    let n_out = (scenario.epsilon * n as f64).floor() as usize;
    let mut out = Contaminated {
        sample: sample.clone(),
        scores: scores.clone(),
        n_out,
    };
    if scenario.scheme == Scheme::C0 || n_out == 0 {
        // requested rate below one observation: nothing to replace
        out.n_out = 0;
        return Ok(out);
    }

    let grid = spec.grid()?;
    let basis = funcbasis::fourier_design(&grid, spec.n_terms)?;
    let b0 = true_beta_coeffs(spec.n_terms);
    let g = grid.len();
    let misclassified = |eta: f64| u8::from(eta < 0.0);

    for i in (n - n_out)..n {
        let mut row = vec![0.0; spec.n_terms];
        let mut step: Option<(f64, f64)> = None; // (signed level, threshold)
        match scenario.scheme {
            Scheme::C0 => unreachable!(),
            Scheme::C1 => {
                // inflated covariance: scores ~ N(0, 25 j^-2)
                for (j, r) in row.iter_mut().enumerate() {
                    let sd = 5.0 / (j + 1) as f64;
                    *r = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
            }
            Scheme::C2 => {
                // tight cloud around m * beta_0
                for (j, r) in row.iter_mut().enumerate() {
                    let sd = 0.1 / (j + 1) as f64;
                    *r = scenario.m * b0[j]
                        + sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
            }
            Scheme::C3 | Scheme::C4 => {
                for (j, r) in row.iter_mut().enumerate() {
                    let sd = 1.0 / (j + 1) as f64;
                    *r = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
                let sign = if scenario.scheme == Scheme::C4 && rng.random::<f64>() < 0.5 {
                    -1.0
                } else {
                    1.0
                };
                // constant shift lives on the first (constant) basis function
                row[0] += sign * scenario.mu_level;
            }
            Scheme::C5 => {
                for (j, r) in row.iter_mut().enumerate() {
                    let sd = 1.0 / (j + 1) as f64;
                    *r = sd * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng);
                }
                let b_sign = if rng.random::<f64>() < 0.5 { 1.0 } else { -1.0 };
                let threshold: f64 = rng.random::<f64>();
                let level = scenario.mu_level * b_sign;
                // exact basis scores of the step 1{T < t}:
                // <1{T<.}, phi_1> = 1 - T and
                // <1{T<.}, phi_j> = -sqrt(2) sin((j-1) pi T) / ((j-1) pi)
                row[0] += level * (1.0 - threshold);
                for j in 1..spec.n_terms {
                    let freq = j as f64 * std::f64::consts::PI;
                    row[j] += level * (-(2f64.sqrt()) * (freq * threshold).sin() / freq);
                }
                step = Some((level, threshold));
            }
        }

        let eta: f64 = (0..spec.n_terms).map(|j| row[j] * b0[j]).sum();
        let label = if scenario.scheme == Scheme::C2 {
            0
        } else {
            misclassified(eta)
        };

        // curve values on the grid
        match step {
            None => {
                for gi in 0..g {
                    let v: f64 = (0..spec.n_terms).map(|j| row[j] * basis.evals[(j, gi)]).sum();
                    out.sample.curves.values[(i, gi)] = v;
                }
            }
            Some((level, threshold)) => {
                // the smooth part uses the pre-step scores; the step is added
                // pointwise since it lies outside the basis span
                for gi in 0..g {
                    let mut smooth = 0.0;
                    for j in 0..spec.n_terms {
                        let step_score = if j == 0 {
                            level * (1.0 - threshold)
                        } else {
                            let freq = j as f64 * std::f64::consts::PI;
                            level * (-(2f64.sqrt()) * (freq * threshold).sin() / freq)
                        };
                        smooth += (row[j] - step_score) * basis.evals[(j, gi)];
                    }
                    let t = grid.points()[gi];
                    out.sample.curves.values[(i, gi)] =
                        smooth + if threshold < t { level } else { 0.0 };
                }
            }
        }
        for j in 0..spec.n_terms {
            out.scores[(i, j)] = row[j];
        }
        out.sample.responses[i] = label;
    }
    Ok(out)
}

/// Replaces the last `floor(epsilon n)` observations with scheme-specific
/// contaminated ones. A rate below one observation is a no-op (`n_out = 0`).
pub fn contaminate(
    sample: &LabeledSample,
    scores: &DMatrix<f64>,
    scenario: &ScenarioSpec,
    spec: &GeneratorSpec,
) -> Result<Contaminated> {
    let mut rng = substream(spec.seed, 0, ROLE_CONTAMINATE);
    contaminate_with(sample, scores, scenario, spec, &mut rng)
}

/// Trimmed integrated squared bias and trimmed MISE of slope estimates on a
/// common grid, dropping the `q` first and last grid points.
pub fn trimmed_metrics(estimates: &[Vec<f64>], truth: &[f64], q: usize) -> Result<(f64, f64)> {
    let m = truth.len();
    if 2 * q >= m {
        return Err(Error::InvalidInput(format!(
            "trim q = {q} leaves no interior points on a {m}-point grid"
        )));
    }
    if estimates.is_empty() {
        return Err(Error::InvalidInput("no slope estimates to summarize".into()));
    }
    for e in estimates {
        if e.len() != m {
            return Err(Error::InvalidDimension(format!(
                "estimate on {} points but truth on {m}",
                e.len()
            )));
        }
    }
    let n_r = estimates.len() as f64;
    let interior = (m - 2 * q) as f64;
    let mut bias2 = 0.0;
    let mut mise = 0.0;
    for s in q..m - q {
        let mean_est: f64 = estimates.iter().map(|e| e[s]).sum::<f64>() / n_r;
        let d = mean_est - truth[s];
        bias2 += d * d;
        mise += estimates
            .iter()
            .map(|e| {
                let r = e[s] - truth[s];
                r * r
            })
            .sum::<f64>()
            / n_r;
    }
    Ok((bias2 / interior, mise / interior))
}

/// One estimator entry for [`run_study`]: a label plus its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub label: String,
    pub config: FitConfig,
}

impl EstimatorSpec {
    pub fn new(label: &str, config: FitConfig) -> Self {
        EstimatorSpec {
            label: label.to_string(),
            config,
        }
    }
}

/// The six estimators compared in the contamination study: classical and
/// bounded-loss fits, each unweighted and with the two hard-rejection
/// weighting schemes, all on cubic splines.
pub fn study_estimators(seed: u64) -> Vec<EstimatorSpec> {
    let spline = BasisFamily::BSpline { order: 4 };
    let ch = LossSpec::ch_default();
    let cl = LossSpec::Classical;
    vec![
        EstimatorSpec::new("CL", FitConfig::new(cl, WeightSpec::Unit, spline)),
        EstimatorSpec::new("M", FitConfig::new(ch, WeightSpec::Unit, spline)),
        EstimatorSpec::new("WCL-HR", FitConfig::new(cl, WeightSpec::mahalanobis_hr(seed), spline)),
        EstimatorSpec::new("WM-HR", FitConfig::new(ch, WeightSpec::mahalanobis_hr(seed), spline)),
        EstimatorSpec::new("WCL-FBB", FitConfig::new(cl, WeightSpec::fbplot_hr(), spline)),
        EstimatorSpec::new("WM-FBB", FitConfig::new(ch, WeightSpec::fbplot_hr(), spline)),
    ]
}

/// Aggregated metrics of one estimator under one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub label: String,
    pub alpha_bias: f64,
    pub alpha_sd: f64,
    pub bias2_trim: f64,
    pub mise_trim: f64,
    pub pmse: f64,
    /// Replications whose fit failed; excluded from the averages above.
    pub failures: usize,
    /// Wall-clock seconds spent fitting; informational only and excluded
    /// from serialized study outputs to keep them deterministic.
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Study results for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioSpec,
    pub estimators: Vec<EstimatorReport>,
}

/// Full study results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationReport {
    pub n_r: usize,
    pub seed: u64,
    pub scenarios: Vec<ScenarioReport>,
}

struct RepMetrics {
    alpha: f64,
    slope: Vec<f64>,
    pmse: f64,
    secs: f64,
}

/// Runs the replication study: per replication, a contaminated training
/// sample and a fresh clean test sample are generated from substreams keyed
/// by `(seed, replication)`, every estimator is fitted with its dimension
/// chosen by RBIC, and intercept bias, trimmed slope metrics and PMSE are
/// accumulated. Fit failures are counted and excluded.
pub fn run_study(
    scenarios: &[ScenarioSpec],
    estimators: &[EstimatorSpec],
    spec: &GeneratorSpec,
    n_r: usize,
) -> Result<ReplicationReport> {
    spec.validate()?;
    if n_r == 0 {
        return Err(Error::InvalidInput("need at least one replication".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    let grid = spec.grid()?;
    let beta0 = true_beta(&grid, spec.n_terms)?;
    let q = (grid.len() as f64 * 0.05).floor() as usize;

    let mut report = ReplicationReport {
        n_r,
        seed: spec.seed,
        scenarios: Vec::with_capacity(scenarios.len()),
    };

    for scenario in scenarios {
        // replications are independent; results are collected in replication
        // order so aggregation does not depend on the schedule
        let outcomes: Vec<Vec<std::result::Result<RepMetrics, Error>>> = (0..n_r)
            .into_par_iter()
            .map(|rep| {
                let rep = rep as u64;
                let run = || -> Result<Vec<std::result::Result<RepMetrics, Error>>> {
                    let mut train_rng = substream(spec.seed, rep, ROLE_TRAIN);
                    let (clean, clean_scores) = gen_clean_with(spec, &mut train_rng)?;
                    let mut cont_rng = substream(spec.seed, rep, ROLE_CONTAMINATE);
                    let train =
                        contaminate_with(&clean, &clean_scores, scenario, spec, &mut cont_rng)?;
                    let mut test_rng = substream(spec.seed, rep, ROLE_TEST);
                    let (test, _) = gen_clean_with(spec, &mut test_rng)?;
                    let unit = vec![1.0; test.len()];
                    Ok(estimators
                        .iter()
                        .map(|est| {
                            let started = std::time::Instant::now();
                            fit::select_k(&train.sample, &est.config).and_then(|fit| {
                                let pmse = diagnostics::pi_p_hat(
                                    &fit,
                                    0.0,
                                    &beta0,
                                    &test.curves,
                                    &unit,
                                )?;
                                Ok(RepMetrics {
                                    alpha: fit.alpha,
                                    slope: fit.slope,
                                    pmse,
                                    secs: started.elapsed().as_secs_f64(),
                                })
                            })
                        })
                        .collect())
                };
                // a data-generation failure poisons every estimator in the
                // replication
                run().unwrap_or_else(|e| {
                    estimators
                        .iter()
                        .map(|_| Err(Error::InvalidInput(format!("replication setup: {e}"))))
                        .collect()
                })
            })
            .collect();

        let mut est_reports = Vec::with_capacity(estimators.len());
        for (ei, est) in estimators.iter().enumerate() {
            let mut alphas = Vec::new();
            let mut slopes = Vec::new();
            let mut pmses = Vec::new();
            let mut failures = 0usize;
            let mut runtime = 0.0;
            for rep_outcome in &outcomes {
                match &rep_outcome[ei] {
                    Ok(m) => {
                        alphas.push(m.alpha);
                        slopes.push(m.slope.clone());
                        pmses.push(m.pmse);
                        runtime += m.secs;
                    }
                    Err(_) => failures += 1,
                }
            }
            let cnt = alphas.len();
            if cnt == 0 {
                return Err(Error::InvalidInput(format!(
                    "estimator {} failed in every replication of {}",
                    est.label,
                    scenario.label()
                )));
            }
            let mean = alphas.iter().sum::<f64>() / cnt as f64;
            let sd = if cnt > 1 {
                (alphas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (cnt - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            let (bias2_trim, mise_trim) = trimmed_metrics(&slopes, &beta0, q)?;
            est_reports.push(EstimatorReport {
                label: est.label.clone(),
                alpha_bias: mean,
                alpha_sd: sd,
                bias2_trim,
                mise_trim,
                pmse: pmses.iter().sum::<f64>() / cnt as f64,
                failures,
                runtime_s: runtime,
            });
        }
        report.scenarios.push(ScenarioReport {
            scenario: *scenario,
            estimators: est_reports,
        });
    }
    Ok(report)
}

impl ReplicationReport {
    /// Copy with runtimes cleared, for determinism comparisons.
    pub fn without_runtimes(&self) -> ReplicationReport {
        let mut r = self.clone();
        for sc in &mut r.scenarios {
            for est in &mut sc.estimators {
                est.runtime_s = 0.0;
            }
        }
        r
    }
}
