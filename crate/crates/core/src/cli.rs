//! Command-line front end: fit models on CSV data, run contamination
//! studies, and produce residual diagnostics as plot-ready files.
//!
//! Input format: the curves file is numeric CSV whose first row holds the
//! grid points and each later row one curve; the responses file holds one
//! 0/1 value per line. Outputs carry the configuration hash and seed so
//! identical invocations produce identical bytes.
//!
//! Exit codes: 0 success, 2 input problem, 3 separation, 4 non-convergence
//! (best iterate still written).

use crate::diagnostics::{self, ResidualReport};
use crate::error::Error;
use crate::fit::{self, FitConfig, FitResult, RbicPoint};
use crate::funcbasis::{self, BasisFamily, CurveSet, Grid, LabeledSample};
use crate::loss::LossSpec;
use crate::simlab::{self, GeneratorSpec, ScenarioSpec, Scheme};
use crate::weights::WeightSpec;
use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_SEPARATION: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

/// Robust scalar-on-function logistic regression.
#[derive(Debug, Parser)]
#[command(name = "funlogit", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model to curves and binary responses from CSV files.
    Fit(FitArgs),
    /// Run a replicated contamination study.
    Simulate(SimulateArgs),
    /// Residual diagnostics for a previous fit.
    Diagnose(DiagnoseArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Loss family: classical | ch
    #[arg(long, default_value = "ch")]
    pub loss: String,
    /// Tuning constant of the ch loss.
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Weighting: unit | mahalanobis-hr | fbplot-hr
    #[arg(long, default_value = "mahalanobis-hr")]
    pub weights: String,
    /// Basis family: bspline | fourier
    #[arg(long, default_value = "bspline")]
    pub basis: String,
    /// Spline order (cubic = 4).
    #[arg(long, default_value_t = 4)]
    pub order: usize,
    /// Fixed basis dimension, skipping the RBIC scan.
    #[arg(long, conflicts_with_all = ["k_min", "k_max"])]
    pub k: Option<usize>,
    #[arg(long, requires = "k_max")]
    pub k_min: Option<usize>,
    #[arg(long, requires = "k_min")]
    pub k_max: Option<usize>,
    /// Gradient-norm convergence tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub grad_tol: f64,
    /// Optimizer iteration cap per start.
    #[arg(long, default_value_t = 200)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Curves CSV: first row grid points, then one curve per row.
    #[arg(long)]
    pub curves: PathBuf,
    /// Responses CSV: one 0/1 per line.
    #[arg(long)]
    pub responses: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed for the weight-direction sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Output format for tabular files: csv | json
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Comma-separated scenario names from C0..C5.
    #[arg(long, default_value = "C0")]
    pub scenario: String,
    /// Contamination rate for the non-clean scenarios.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Training (and test) sample size.
    #[arg(long, default_value_t = 300)]
    pub n: usize,
    /// Number of replications.
    #[arg(long = "n-reps", default_value_t = 100)]
    pub n_reps: usize,
    /// Master seed (required: studies must be reproducible).
    #[arg(long)]
    pub seed: u64,
    /// Comma-separated estimator labels.
    #[arg(long, default_value = "CL,M,WCL-HR,WM-HR,WCL-FBB,WM-FBB")]
    pub estimators: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// fit.json produced by the fit command.
    #[arg(long)]
    pub fit: PathBuf,
    #[arg(long)]
    pub curves: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    /// Lower flagging level.
    #[arg(long, default_value_t = 0.005)]
    pub level_low: f64,
    /// Upper flagging level.
    #[arg(long, default_value_t = 0.995)]
    pub level_high: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "csv")]
    pub format: String,
}

/// Command failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

fn input_err(message: impl Into<String>) -> CliError {
    CliError {
        code: EXIT_INPUT,
        message: message.into(),
    }
}

fn from_core(e: Error) -> CliError {
    let code = match e {
        Error::Separation(_) => EXIT_SEPARATION,
        _ => EXIT_INPUT,
    };
    CliError {
        code,
        message: e.to_string(),
    }
}

/// Full round-trip decimal so golden files are stable across platforms.
fn fmt_num(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if x == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents)
        .map_err(|e| input_err(format!("cannot write {}: {e}", path.display())))
}

fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("config serializes");
    let digest = Sha256::digest(json.as_bytes());
    let mut hex = String::with_capacity(16);
    for byte in digest.iter().take(8) {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// Reads a numeric CSV as rows of f64 with their 1-based line numbers.
fn read_numeric_rows(path: &Path) -> Result<Vec<(u64, Vec<f64>)>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| input_err(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| input_err(format!("{}: {e}", path.display())))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut row = Vec::with_capacity(record.len());
        for field in record.iter() {
            let value: f64 = field.parse().map_err(|_| {
                input_err(format!(
                    "{} line {line}: '{field}' is not a number",
                    path.display()
                ))
            })?;
            row.push(value);
        }
        rows.push((line, row));
    }
    Ok(rows)
}

fn read_curves(path: &Path) -> Result<CurveSet, CliError> {
    let rows = read_numeric_rows(path)?;
    if rows.len() < 2 {
        return Err(input_err(format!(
            "{}: need a grid row and at least one curve row",
            path.display()
        )));
    }
    let (grid_line, grid_points) = &rows[0];
    let grid = Grid::new(grid_points.clone())
        .map_err(|e| input_err(format!("{} line {grid_line}: {e}", path.display())))?;
    let g = grid.len();
    let n = rows.len() - 1;
    let mut values = DMatrix::zeros(n, g);
    for (i, (line, row)) in rows[1..].iter().enumerate() {
        if row.len() != g {
            return Err(input_err(format!(
                "{} line {line}: expected {g} fields, found {}",
                path.display(),
                row.len()
            )));
        }
        for (gi, &v) in row.iter().enumerate() {
            values[(i, gi)] = v;
        }
    }
    CurveSet::new(grid, values).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn read_responses(path: &Path) -> Result<Vec<u8>, CliError> {
    let rows = read_numeric_rows(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (line, row) in rows {
        if row.len() != 1 {
            return Err(input_err(format!(
                "{} line {line}: expected a single 0/1 value",
                path.display()
            )));
        }
        let v = row[0];
        if v == 0.0 || v == 1.0 {
            out.push(v as u8);
        } else {
            return Err(input_err(format!(
                "{} line {line}: response must be 0 or 1, got {v}",
                path.display()
            )));
        }
    }
    Ok(out)
}

impl ModelArgs {
    fn loss_spec(&self) -> Result<LossSpec, CliError> {
        match self.loss.as_str() {
            "classical" => Ok(LossSpec::Classical),
            "ch" => Ok(LossSpec::CrouxHaesbroeck { c: self.c }),
            other => Err(input_err(format!(
                "unknown loss '{other}' (expected classical | ch)"
            ))),
        }
    }

    fn weight_spec(&self, seed: u64) -> Result<WeightSpec, CliError> {
        match self.weights.as_str() {
            "unit" => Ok(WeightSpec::Unit),
            "mahalanobis-hr" => Ok(WeightSpec::mahalanobis_hr(seed)),
            "fbplot-hr" => Ok(WeightSpec::fbplot_hr()),
            other => Err(input_err(format!(
                "unknown weights '{other}' (expected unit | mahalanobis-hr | fbplot-hr)"
            ))),
        }
    }

    fn basis_family(&self) -> Result<BasisFamily, CliError> {
        match self.basis.as_str() {
            "bspline" => Ok(BasisFamily::BSpline { order: self.order }),
            "fourier" => Ok(BasisFamily::Fourier),
            other => Err(input_err(format!(
                "unknown basis '{other}' (expected bspline | fourier)"
            ))),
        }
    }

    fn fit_config(&self, seed: u64) -> Result<FitConfig, CliError> {
        let mut config = FitConfig::new(self.loss_spec()?, self.weight_spec(seed)?, self.basis_family()?);
        config.k_range = match (self.k, self.k_min, self.k_max) {
            (Some(k), _, _) => Some((k, k)),
            (None, Some(lo), Some(hi)) => Some((lo, hi)),
            (None, None, None) => None,
            _ => return Err(input_err("--k-min and --k-max must be given together")),
        };
        config.grad_tol = self.grad_tol;
        config.max_iter = self.max_iter;
        config.validate().map_err(from_core)?;
        Ok(config)
    }
}

/// Serialized form of a fit, written as `fit.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct FitDocument {
    pub config_sha256: String,
    pub seed: u64,
    pub loss: LossSpec,
    pub weights: WeightSpec,
    pub basis: BasisFamily,
    pub k: usize,
    pub alpha: f64,
    pub coeffs: Vec<f64>,
    pub grid: Vec<f64>,
    pub slope: Vec<f64>,
    pub objective: f64,
    pub rbic: f64,
    pub rbic_trace: Vec<RbicPoint>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub weights_used: Vec<f64>,
}

impl FitDocument {
    /// Reconstructs the in-memory fit result.
    pub fn to_fit_result(&self) -> FitResult {
        FitResult {
            alpha: self.alpha,
            coeffs: self.coeffs.clone(),
            k: self.k,
            objective: self.objective,
            weights_used: self.weights_used.clone(),
            gradient_norm: self.gradient_norm,
            iterations: self.iterations,
            converged: self.converged,
            rbic: self.rbic,
            slope: self.slope.clone(),
        }
    }
}

#[derive(Serialize)]
struct FitConfigEcho<'a> {
    command: &'static str,
    loss: &'a LossSpec,
    weights: &'a WeightSpec,
    basis: &'a BasisFamily,
    k_range: Option<(usize, usize)>,
    seed: u64,
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let curves = read_curves(&args.curves)?;
    let responses = read_responses(&args.responses)?;
    if responses.len() != curves.n_curves() {
        return Err(input_err(format!(
            "{} curves but {} responses",
            curves.n_curves(),
            responses.len()
        )));
    }
    let sample = LabeledSample::new(curves, responses).map_err(from_core)?;
    let config = args.model.fit_config(args.seed)?;
    let hash = config_hash(&FitConfigEcho {
        command: "fit",
        loss: &config.loss,
        weights: &config.weights,
        basis: &config.basis_family,
        k_range: config.k_range,
        seed: args.seed,
    });

    let (result, trace) = fit::select_k_trace(&sample, &config).map_err(from_core)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| input_err(format!("cannot create {}: {e}", args.out.display())))?;
    let doc = FitDocument {
        config_sha256: hash.clone(),
        seed: args.seed,
        loss: config.loss,
        weights: config.weights,
        basis: config.basis_family,
        k: result.k,
        alpha: result.alpha,
        coeffs: result.coeffs.clone(),
        grid: sample.curves.grid.points().to_vec(),
        slope: result.slope.clone(),
        objective: result.objective,
        rbic: result.rbic,
        rbic_trace: trace,
        gradient_norm: result.gradient_norm,
        iterations: result.iterations,
        converged: result.converged,
        weights_used: result.weights_used.clone(),
    };
    let json = serde_json::to_string_pretty(&doc).expect("fit document serializes");
    write_file(&args.out.join("fit.json"), &json)?;

    let mut beta = format!("# config={hash} seed={}\nt,beta_hat\n", args.seed);
    for (t, b) in sample.curves.grid.points().iter().zip(&result.slope) {
        let _ = writeln!(beta, "{},{}", fmt_num(*t), fmt_num(*b));
    }
    write_file(&args.out.join("beta_hat.csv"), &beta)?;

    if !result.converged {
        return Err(CliError {
            code: EXIT_NONCONVERGENCE,
            message: format!(
                "fit did not converge (gradient norm {:.3e}); best iterate written to {}",
                result.gradient_norm,
                args.out.display()
            ),
        });
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateManifest {
    config_sha256: String,
    seed: u64,
    n: usize,
    n_reps: usize,
    n_terms: usize,
    grid_size: usize,
    scenarios: Vec<ScenarioSpec>,
    estimators: Vec<simlab::EstimatorSpec>,
}

fn parse_scenarios(names: &str, epsilon: f64) -> Result<Vec<ScenarioSpec>, CliError> {
    let mut out = Vec::new();
    for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let scheme = Scheme::parse(name)
            .ok_or_else(|| input_err(format!("unknown scenario '{name}' (expected C0..C5)")))?;
        let spec = ScenarioSpec::new(scheme, epsilon);
        spec.validate().map_err(from_core)?;
        out.push(spec);
    }
    if out.is_empty() {
        return Err(input_err("no scenarios given"));
    }
    Ok(out)
}

fn select_estimators(names: &str, seed: u64) -> Result<Vec<simlab::EstimatorSpec>, CliError> {
    let all = simlab::study_estimators(seed);
    let mut out = Vec::new();
    for name in names.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let est = all
            .iter()
            .find(|e| e.label.eq_ignore_ascii_case(name))
            .ok_or_else(|| {
                input_err(format!(
                    "unknown estimator '{name}' (expected one of CL, M, WCL-HR, WM-HR, WCL-FBB, WM-FBB)"
                ))
            })?;
        out.push(est.clone());
    }
    if out.is_empty() {
        return Err(input_err("no estimators given"));
    }
    Ok(out)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let scenarios = parse_scenarios(&args.scenario, args.epsilon)?;
    let estimators = select_estimators(&args.estimators, args.seed)?;
    let spec = GeneratorSpec::new(args.n, args.seed);
    let manifest = SimulateManifest {
        config_sha256: String::new(),
        seed: args.seed,
        n: args.n,
        n_reps: args.n_reps,
        n_terms: spec.n_terms,
        grid_size: spec.grid_size,
        scenarios: scenarios.clone(),
        estimators: estimators.clone(),
    };
    let hash = config_hash(&manifest);
    let manifest = SimulateManifest {
        config_sha256: hash.clone(),
        ..manifest
    };

    let report = simlab::run_study(&scenarios, &estimators, &spec, args.n_reps).map_err(from_core)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| input_err(format!("cannot create {}: {e}", args.out.display())))?;
    write_file(
        &args.out.join("manifest.json"),
        &serde_json::to_string_pretty(&manifest).expect("manifest serializes"),
    )?;

    if args.format == "json" {
        #[derive(Serialize)]
        struct ReportDocument<'a> {
            config_sha256: &'a str,
            seed: u64,
            report: simlab::ReplicationReport,
        }
        let doc = ReportDocument {
            config_sha256: &hash,
            seed: args.seed,
            report: report.without_runtimes(),
        };
        write_file(
            &args.out.join("report.json"),
            &serde_json::to_string_pretty(&doc).expect("report serializes"),
        )?;
    } else {
        let mut csv = format!(
            "# config={hash} seed={}\nscenario,estimator,alpha_bias,alpha_sd,bias2_trim,mise_trim,pmse,failures\n",
            args.seed
        );
        for sc in &report.scenarios {
            for est in &sc.estimators {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{},{},{}",
                    sc.scenario.label(),
                    est.label,
                    fmt_num(est.alpha_bias),
                    fmt_num(est.alpha_sd),
                    fmt_num(est.bias2_trim),
                    fmt_num(est.mise_trim),
                    fmt_num(est.pmse),
                    est.failures
                );
            }
        }
        write_file(&args.out.join("report.csv"), &csv)?;
    }
    // timing is informational and deliberately kept out of the files
    for sc in &report.scenarios {
        for est in &sc.estimators {
            eprintln!(
                "{} {}: {:.1}s over {} replications",
                sc.scenario.label(),
                est.label,
                est.runtime_s,
                args.n_reps
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseSummary {
    config_sha256: String,
    fit_config_sha256: String,
    seed: u64,
    levels: (f64, f64),
    cutoff_low: f64,
    cutoff_high: f64,
    n_flagged: usize,
    n_clamped: usize,
}

pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<(), CliError> {
    let doc: FitDocument = {
        let text = std::fs::read_to_string(&args.fit)
            .map_err(|e| input_err(format!("cannot read {}: {e}", args.fit.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| input_err(format!("{}: {e}", args.fit.display())))?
    };
    let curves = read_curves(&args.curves)?;
    let responses = read_responses(&args.responses)?;
    if responses.len() != curves.n_curves() {
        return Err(input_err(format!(
            "{} curves but {} responses",
            curves.n_curves(),
            responses.len()
        )));
    }
    if curves.grid.points() != doc.grid.as_slice() {
        return Err(input_err(
            "curves grid does not match the grid recorded in fit.json",
        ));
    }

    let basis = funcbasis::design(&curves.grid, doc.k, doc.basis).map_err(from_core)?;
    let fit = doc.to_fit_result();
    let probs = diagnostics::predict_probs(&fit, &basis, &curves).map_err(from_core)?;
    let report: ResidualReport =
        diagnostics::flag_outliers(&responses, &probs, (args.level_low, args.level_high))
            .map_err(from_core)?;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| input_err(format!("cannot create {}: {e}", args.out.display())))?;
    let hash = config_hash(&(
        "diagnose",
        &doc.config_sha256,
        args.level_low,
        args.level_high,
    ));

    if args.format == "json" {
        #[derive(Serialize)]
        struct ResidualsDocument<'a> {
            config_sha256: &'a str,
            seed: u64,
            report: &'a ResidualReport,
        }
        let wrapped = ResidualsDocument {
            config_sha256: &hash,
            seed: doc.seed,
            report: &report,
        };
        write_file(
            &args.out.join("residuals.json"),
            &serde_json::to_string_pretty(&wrapped).expect("report serializes"),
        )?;
    } else {
        let mut res = format!("# config={hash} seed={}\nindex,y,p_hat,d,flag\n", doc.seed);
        for i in 0..responses.len() {
            let _ = writeln!(
                res,
                "{},{},{},{},{}",
                i,
                responses[i],
                fmt_num(report.probs[i]),
                fmt_num(report.residuals[i]),
                report.outlier_flags[i]
            );
        }
        write_file(&args.out.join("residuals.csv"), &res)?;

        let mut qq = format!("# config={hash} seed={}\ntheoretical,empirical\n", doc.seed);
        for (t, e) in &report.qq_pairs {
            let _ = writeln!(qq, "{},{}", fmt_num(*t), fmt_num(*e));
        }
        write_file(&args.out.join("qq.csv"), &qq)?;
    }

    let summary = DiagnoseSummary {
        config_sha256: hash,
        fit_config_sha256: doc.config_sha256.clone(),
        seed: doc.seed,
        levels: (args.level_low, args.level_high),
        cutoff_low: report.cutoff_low,
        cutoff_high: report.cutoff_high,
        n_flagged: report.outlier_flags.iter().filter(|&&f| f == 1).count(),
        n_clamped: report.clamped.iter().filter(|&&c| c).count(),
    };
    write_file(
        &args.out.join("diagnose.json"),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(())
}

/// Dispatches a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Diagnose(args) => cmd_diagnose(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
