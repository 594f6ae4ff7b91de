//! Seeded experiment drivers: exact bound sweeps over (θ, α, n) grids,
//! Monte-Carlo contamination studies and asymptotic-covariance diagnostics,
//! plus CSV/JSON report emission.
//!
//! Trial `t` of cell `c` draws its data from the stream
//! `derive_seed(seed, [c, t])`; every α in the grid is fitted on the same
//! draw. Trials may run on any number of threads but records and aggregates
//! are assembled in (cell, trial) order, so reports are bit-identical across
//! thread counts.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::bound::{self, rows, scaled_inverse_information, single_observation_sandwich, BoundReport};
use crate::error::{check_alpha, Error, Result};
use crate::estimation::{fit_counts, mle_from_counts, EstimatorFn, FitOptions};
use crate::model::{
    mixture_pmf, product_extend, sample_iid, ContaminationSpec, ParametricFamily, Pmf,
    DEFAULT_BUDGET,
};
use crate::numeric::CompensatedSum;
use crate::rng;

/// Relative tolerance of the α = 0 asymptotic check.
pub const ASYMPTOTIC_TOL: f64 = 0.10;

fn serialize_family<S: Serializer>(f: &ParametricFamily, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&f.name())
}

/// Grids and settings shared by all studies.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(serialize_with = "serialize_family")]
    pub family: ParametricFamily,
    /// True parameters θ*, one grid point per entry.
    pub thetas: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub ns: Vec<usize>,
    pub epsilons: Vec<f64>,
    pub delta: Option<Pmf>,
    pub trials: usize,
    pub seed: u64,
    /// Estimators for the bound sweep (see [`EstimatorFn::from_name`]).
    pub estimators: Vec<String>,
    pub budget: u64,
    pub fit: FitOptions,
}

impl ExperimentConfig {
    pub fn new(family: ParametricFamily) -> Self {
        Self {
            family,
            thetas: Vec::new(),
            alphas: Vec::new(),
            ns: Vec::new(),
            epsilons: vec![0.0],
            delta: None,
            trials: 1,
            seed: 0,
            estimators: vec!["sample_mean".into()],
            budget: DEFAULT_BUDGET,
            fit: FitOptions::default(),
        }
    }

    /// The Bernoulli grid used for the bound sweep when none is given.
    pub fn default_bound_sweep() -> Self {
        let mut c = Self::new(ParametricFamily::bernoulli());
        c.thetas = [0.2, 0.3, 0.5, 0.8].iter().map(|t| vec![*t]).collect();
        c.alphas = vec![0.0, 0.25, 0.5, 1.0, 2.0];
        c.ns = (1..=8).collect();
        c
    }

    fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Validation(format!("{what} grid is empty")));
        if self.thetas.is_empty() {
            return empty("theta");
        }
        if self.alphas.is_empty() {
            return empty("alpha");
        }
        if self.ns.is_empty() {
            return empty("n");
        }
        if self.epsilons.is_empty() {
            return empty("epsilon");
        }
        if self.trials == 0 {
            return Err(Error::Validation("trials must be at least 1".into()));
        }
        for theta in &self.thetas {
            self.family.check_domain(theta)?;
        }
        for &alpha in &self.alphas {
            check_alpha(alpha)?;
        }
        if self.ns.contains(&0) {
            return Err(Error::Validation("sample sizes must be at least 1".into()));
        }
        for &eps in &self.epsilons {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::Validation(format!("epsilon = {eps} must lie in [0, 1)")));
            }
        }
        self.fit.validate()
    }
}

/// One fitted estimate in a Monte-Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub cell: usize,
    pub trial: usize,
    /// Seed of the data stream; `derive_seed(config.seed, [cell, trial])`.
    pub seed: u64,
    pub estimator: String,
    pub alpha: f64,
    pub epsilon: f64,
    pub n: usize,
    /// NaN entries when the fit failed.
    pub theta_hat: Vec<f64>,
    pub converged: bool,
}

/// Per-(cell, estimator) summary over converged trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub cell: usize,
    pub theta: Vec<f64>,
    pub epsilon: f64,
    pub n: usize,
    pub estimator: String,
    pub alpha: f64,
    pub count: usize,
    pub fail_count: usize,
    pub mean: Vec<f64>,
    pub bias: Vec<f64>,
    /// Population variance (divisor = count) per component.
    pub variance: Vec<f64>,
    /// Mean squared Euclidean error against θ*.
    pub mse: f64,
}

impl Aggregate {
    /// Standard error of each component of the mean.
    pub fn standard_error(&self) -> Vec<f64> {
        self.variance.iter().map(|v| (v / self.count as f64).sqrt()).collect()
    }
}

/// One row of the asymptotic-covariance diagnostic. All matrices are scaled
/// by n.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticRow {
    pub cell: usize,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
    pub count: usize,
    pub fail_count: usize,
    /// n · Monte-Carlo covariance of the fitted estimates.
    pub mc_covariance: Vec<Vec<f64>>,
    /// n · [Iₙ⁽ᵅ⁾]⁻¹.
    pub inverse_information: Vec<Vec<f64>>,
    /// [G₁ K₁⁻¹ G₁]⁻¹.
    pub sandwich: Vec<Vec<f64>>,
    /// Outcome of the α = 0 check against the inverse Fisher information;
    /// `None` for informational rows.
    pub check: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    BoundSweep,
    Contamination,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub study: StudyKind,
    pub config: ExperimentConfig,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rows: Vec<BoundReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub records: Vec<TrialRecord>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub aggregates: Vec<Aggregate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<DiagnosticRow>,
    pub version: String,
    /// Not written to files, so emitted reports stay byte-identical.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl Report {
    fn new(study: StudyKind, config: &ExperimentConfig) -> Self {
        Self {
            study,
            config: config.clone(),
            rows: Vec::new(),
            records: Vec::new(),
            aggregates: Vec::new(),
            diagnostics: Vec::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            wall_clock_secs: 0.0,
        }
    }

    /// Looks up the aggregate for a cell and estimator name.
    pub fn aggregate(&self, cell: usize, estimator: &str) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.cell == cell && a.estimator == estimator)
    }
}

/// Estimator label used in Monte-Carlo reports.
pub fn bhhj_label(alpha: f64) -> String {
    format!("bhhj({alpha})")
}

fn cell_label(theta: &[f64], alpha: f64, n: usize) -> String {
    format!(" (cell theta={theta:?}, alpha={alpha}, n={n})")
}

/// Exact generalized-bound table over θ × α × n × estimator, in that
/// nesting order.
pub fn run_bound_sweep(config: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    config.validate()?;
    if config.estimators.is_empty() {
        return Err(Error::Validation("no estimators given".into()));
    }
    let estimators = config
        .estimators
        .iter()
        .map(|name| EstimatorFn::from_name(name, &config.family))
        .collect::<Result<Vec<_>>>()?;

    let mut report = Report::new(StudyKind::BoundSweep, config);
    for theta in &config.thetas {
        for &alpha in &config.alphas {
            for &n in &config.ns {
                let joint = product_extend(&config.family, n)?.with_budget(config.budget);
                for est in &estimators {
                    let row = bound::bound_gap(&joint, est, theta, alpha).map_err(|e| match e {
                        Error::BudgetExceeded { outcomes, budget, .. } => Error::BudgetExceeded {
                            outcomes,
                            budget,
                            cell: cell_label(theta, alpha, n),
                        },
                        other => other,
                    })?;
                    report.rows.push(row);
                }
            }
        }
    }
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

struct Cell {
    theta: Vec<f64>,
    n: usize,
    epsilon: f64,
}

fn mc_cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for theta in &config.thetas {
        for &n in &config.ns {
            for &epsilon in &config.epsilons {
                cells.push(Cell {
                    theta: theta.clone(),
                    n,
                    epsilon,
                });
            }
        }
    }
    cells
}

/// (label, α) pairs fitted on every draw: the MLE, then BHHJ per α.
fn mc_estimators(config: &ExperimentConfig) -> Vec<(String, f64)> {
    let mut out = vec![("mle".to_string(), 0.0)];
    out.extend(config.alphas.iter().map(|&a| (bhhj_label(a), a)));
    out
}

/// Runs every trial of every cell and returns records in (cell, trial,
/// estimator) order.
fn simulate(config: &ExperimentConfig, cells: &[Cell]) -> Result<Vec<TrialRecord>> {
    let estimators = mc_estimators(config);
    let k = config.family.dim();
    let mut records = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        let source = match (&config.delta, cell.epsilon) {
            (_, 0.0) => config.family.pmf(&cell.theta)?,
            (Some(delta), e) => mixture_pmf(&config.family, &cell.theta, &ContaminationSpec::new(e, delta.clone())?)?,
            (None, e) => {
                return Err(Error::Validation(format!(
                    "epsilon = {e} needs a contamination distribution (delta)"
                )))
            }
        };
        let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..config.trials)
            .into_par_iter()
            .map(|t| {
                let seed = rng::derive_seed(config.seed, &[c as u64, t as u64]);
                let data = sample_iid(&source, cell.n, seed)?;
                let counts = config.family.counts(&data)?;
                let fit_options = FitOptions {
                    seed: rng::mix(seed, 1),
                    ..config.fit.clone()
                };
                estimators
                    .iter()
                    .enumerate()
                    .map(|(i, (label, alpha))| {
                        let fit = if i == 0 {
                            mle_from_counts(&config.family, &counts)
                        } else {
                            fit_counts(&config.family, &counts, *alpha, &fit_options)
                        };
                        let (theta_hat, converged) = match fit {
                            Ok(f) => (f.theta_hat, true),
                            Err(Error::NonConvergence(_)) => (vec![f64::NAN; k], false),
                            Err(e) => return Err(e),
                        };
                        Ok(TrialRecord {
                            cell: c,
                            trial: t,
                            seed,
                            estimator: label.clone(),
                            alpha: *alpha,
                            epsilon: cell.epsilon,
                            n: cell.n,
                            theta_hat,
                            converged,
                        })
                    })
                    .collect()
            })
            .collect();
        for r in per_trial {
            records.extend(r?);
        }
    }
    Ok(records)
}

/// Summaries per (cell, estimator) in trial order. Fails only when every
/// trial of some (cell, estimator) failed.
pub fn aggregate_records(config: &ExperimentConfig, records: &[TrialRecord]) -> Result<Vec<Aggregate>> {
    let cells = mc_cells(config);
    let k = config.family.dim();
    let mut out = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for (label, alpha) in mc_estimators(config) {
            let fits: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.cell == c && r.estimator == label)
                .collect();
            let used: Vec<&[f64]> = fits.iter().filter(|r| r.converged).map(|r| r.theta_hat.as_slice()).collect();
            let fail_count = fits.len() - used.len();
            if used.is_empty() {
                return Err(Error::NonConvergence(format!(
                    "all {} trials of {label} failed{}",
                    fits.len(),
                    cell_label(&cell.theta, alpha, cell.n)
                )));
            }
            let count = used.len() as f64;
            let mean: Vec<f64> = (0..k)
                .map(|i| {
                    let mut s = CompensatedSum::default();
                    used.iter().for_each(|t| s.add(t[i]));
                    s.value() / count
                })
                .collect();
            let variance: Vec<f64> = (0..k)
                .map(|i| {
                    let mut s = CompensatedSum::default();
                    used.iter().for_each(|t| s.add((t[i] - mean[i]).powi(2)));
                    s.value() / count
                })
                .collect();
            let mut sq = CompensatedSum::default();
            for t in &used {
                sq.add(t.iter().zip(&cell.theta).map(|(a, b)| (a - b).powi(2)).sum());
            }
            out.push(Aggregate {
                cell: c,
                theta: cell.theta.clone(),
                epsilon: cell.epsilon,
                n: cell.n,
                estimator: label,
                alpha,
                count: used.len(),
                fail_count,
                bias: mean.iter().zip(&cell.theta).map(|(m, t)| m - t).collect(),
                mean,
                variance,
                mse: sq.value() / count,
            });
        }
    }
    Ok(out)
}

/// Monte-Carlo bias, variance and MSE of the MLE and the BHHJ fits under
/// (1 − ε) p_θ* + ε δ, for every (θ*, n, ε) cell and α.
pub fn run_contamination_study(config: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    config.validate()?;
    let cells = mc_cells(config);
    let mut report = Report::new(StudyKind::Contamination, config);
    report.records = simulate(config, &cells)?;
    report.aggregates = aggregate_records(config, &report.records)?;
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Compares n · Cov(θ̂_α) from clean-model simulation with n·[Iₙ⁽ᵅ⁾]⁻¹
/// and [G₁K₁⁻¹G₁]⁻¹. Only α = 0 rows carry a pass/fail check (against the
/// inverse Fisher information, relative tolerance [`ASYMPTOTIC_TOL`]).
pub fn run_asymptotic_diagnostic(config: &ExperimentConfig) -> Result<Report> {
    let started = Instant::now();
    if config.epsilons.iter().any(|&e| e != 0.0) {
        return Err(Error::Validation(
            "the asymptotic diagnostic runs on the clean model; epsilon must be 0".into(),
        ));
    }
    let mut clean = config.clone();
    clean.epsilons = vec![0.0];
    clean.validate()?;
    let cells = mc_cells(&clean);
    let mut report = Report::new(StudyKind::Asymptotic, &clean);
    report.records = simulate(&clean, &cells)?;
    report.aggregates = aggregate_records(&clean, &report.records)?;

    let k = clean.family.dim();
    for (c, cell) in cells.iter().enumerate() {
        for &alpha in &clean.alphas {
            let label = bhhj_label(alpha);
            let fits: Vec<&[f64]> = report
                .records
                .iter()
                .filter(|r| r.cell == c && r.estimator == label && r.converged)
                .map(|r| r.theta_hat.as_slice())
                .collect();
            let agg = report.aggregate(c, &label).expect("aggregate exists");
            let nf = cell.n as f64;
            let mc = DMatrix::from_fn(k, k, |i, j| {
                let mut s = CompensatedSum::default();
                fits.iter()
                    .for_each(|t| s.add((t[i] - agg.mean[i]) * (t[j] - agg.mean[j])));
                nf * s.value() / fits.len() as f64
            });
            let inv_info = scaled_inverse_information(&clean.family, &cell.theta, alpha, cell.n)?;
            let sandwich = single_observation_sandwich(&clean.family, &cell.theta, alpha)?;
            let check = (alpha == 0.0).then(|| {
                let fisher_inv = clean
                    .family
                    .fisher_closed_form(&cell.theta)
                    .and_then(|f| crate::numeric::spd_inverse(&f));
                match fisher_inv {
                    Ok(target) => (0..k).all(|i| {
                        (mc[(i, i)] - target[(i, i)]).abs() <= ASYMPTOTIC_TOL * target[(i, i)]
                    }),
                    Err(_) => false,
                }
            });
            report.diagnostics.push(DiagnosticRow {
                cell: c,
                theta: cell.theta.clone(),
                alpha,
                n: cell.n,
                count: agg.count,
                fail_count: agg.fail_count,
                mc_covariance: rows(&mc),
                inverse_information: rows(&inv_info),
                sandwich: rows(&sandwich),
                check,
            });
        }
    }
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => Err(Error::Validation(format!(
                "unsupported format {other:?} (expected csv or json)"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Json => "json",
        })
    }
}

/// 17 significant digits.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format_float(*v)).collect::<Vec<_>>().join(";")
}

fn join_matrix(m: &[Vec<f64>]) -> String {
    join(&m.concat())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn render_csv(report: &Report) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    match report.study {
        StudyKind::BoundSweep => {
            w.write_record([
                "family", "theta", "alpha", "n", "estimator", "cov", "bound", "gap", "min_eig", "psd",
                "tangency_residual",
            ])
            .map_err(csv_error)?;
            for r in &report.rows {
                w.write_record([
                    r.family.clone(),
                    join(&r.theta),
                    format_float(r.alpha),
                    r.n.to_string(),
                    r.estimator.clone(),
                    join_matrix(&r.covariance),
                    join_matrix(&r.bound),
                    join_matrix(&r.gap),
                    format_float(r.min_gap_eigenvalue),
                    r.psd.to_string(),
                    format_float(r.tangency_residual),
                ])
                .map_err(csv_error)?;
            }
        }
        StudyKind::Contamination => {
            let labels: Vec<String> = mc_estimators(&report.config).into_iter().map(|(l, _)| l).collect();
            let mut header = vec!["cell".to_string(), "theta".into(), "epsilon".into(), "n".into()];
            for l in &labels {
                for stat in ["bias", "var", "mse", "fail_count"] {
                    header.push(format!("{l}_{stat}"));
                }
            }
            w.write_record(&header).map_err(csv_error)?;
            for (c, cell) in mc_cells(&report.config).iter().enumerate() {
                let mut row = vec![c.to_string(), join(&cell.theta), format_float(cell.epsilon), cell.n.to_string()];
                for l in &labels {
                    let a = report
                        .aggregate(c, l)
                        .ok_or_else(|| Error::Validation(format!("missing aggregate for {l} in cell {c}")))?;
                    row.extend([join(&a.bias), join(&a.variance), format_float(a.mse), a.fail_count.to_string()]);
                }
                w.write_record(&row).map_err(csv_error)?;
            }
        }
        StudyKind::Asymptotic => {
            w.write_record([
                "cell",
                "theta",
                "alpha",
                "n",
                "count",
                "fail_count",
                "n_mc_cov",
                "n_inverse_information",
                "sandwich",
                "check",
            ])
            .map_err(csv_error)?;
            for d in &report.diagnostics {
                w.write_record([
                    d.cell.to_string(),
                    join(&d.theta),
                    format_float(d.alpha),
                    d.n.to_string(),
                    d.count.to_string(),
                    d.fail_count.to_string(),
                    join_matrix(&d.mc_covariance),
                    join_matrix(&d.inverse_information),
                    join_matrix(&d.sandwich),
                    d.check.map_or_else(String::new, |c| c.to_string()),
                ])
                .map_err(csv_error)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Renders a report as CSV or pretty-printed JSON. Non-finite numbers are
/// written as `null` in JSON.
pub fn render_report(report: &Report, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| Error::Io(e.to_string())),
    }
}

pub fn emit_report(report: &Report, path: &Path, format: ReportFormat) -> Result<()> {
    let text = render_report(report, format)?;
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}
