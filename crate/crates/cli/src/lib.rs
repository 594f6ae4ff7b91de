//! Command-line front end. `parse_and_dispatch` is the whole program; the
//! binary only forwards `std::env::args`.
//!
//! Exit codes: 0 success, 1 invalid input (the message names the flag),
//! 2 computational failure (ill-conditioning, enumeration budget,
//! non-convergence, failed self-test or asymptotic check).

pub mod selftest;
pub mod spec;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use acrlb_core::bound::{bound_gap, generalized_crlb};
use acrlb_core::estimation::{fit_bhhj, EstimatorFn, FitOptions};
use acrlb_core::experiments::{
    render_report, run_asymptotic_diagnostic, run_bound_sweep, run_contamination_study,
    ExperimentConfig, ReportFormat,
};
use acrlb_core::geometry::{alpha_fisher_matrix, bhhj_divergence, eguchi_fd_metric, escort, kl_divergence};
use acrlb_core::model::{
    budget_from_env, mixture_pmf, product_extend, sample_iid, ContaminationSpec, BUDGET_ENV,
};
use acrlb_core::{Error, ParametricFamily, Pmf};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use crate::spec::{load_model_spec, validate_probabilities, ModelSpec};

#[derive(Debug, Parser)]
#[command(name = "acrlb", version, about = "Alpha-Fisher geometry, generalized Cramer-Rao bounds and BHHJ estimation on finite models")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Write output to this file instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Alpha-Fisher metric matrix at theta.
    Metric {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long, value_enum, default_value_t = MetricMethod::Exact)]
        method: MetricMethod,
        /// Finite-difference step for --method eguchi.
        #[arg(long)]
        step: Option<f64>,
    },
    /// BHHJ divergence B(p, q) (Kullback-Leibler at alpha = 0).
    Divergence {
        #[arg(long, allow_hyphen_values = true)]
        p: String,
        #[arg(long, allow_hyphen_values = true)]
        q: String,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
    },
    /// Escort distribution p^(1-alpha) / sum p^(1-alpha).
    Escort {
        #[arg(long, allow_hyphen_values = true)]
        p: Option<String>,
        #[command(flatten)]
        model: OptionalModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
    },
    /// Generalized Cramer-Rao bound by exact enumeration.
    Bound {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long)]
        n: String,
        #[arg(long)]
        budget: Option<String>,
    },
    /// Escort covariance of an unbiased estimator against the bound.
    Gap {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        #[arg(long)]
        n: String,
        #[arg(long, default_value = "sample_mean")]
        estimator: String,
        #[arg(long)]
        budget: Option<String>,
    },
    /// BHHJ fit to given or simulated data.
    Fit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
        /// Observed outcome indices, comma-separated, or @FILE.
        #[arg(long)]
        data: Option<String>,
        /// Sample size when simulating instead of --data.
        #[arg(long)]
        n: Option<String>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Bound/gap table over theta x alpha x n grids.
    Sweep {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        #[arg(long)]
        n: Option<String>,
        /// Estimator name; repeat for several.
        #[arg(long)]
        estimator: Vec<String>,
        #[arg(long)]
        budget: Option<String>,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Monte-Carlo studies: contamination robustness or asymptotic covariance.
    Diagnose {
        #[arg(long, value_enum)]
        study: Study,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true, default_value = "0")]
        alpha: String,
        #[arg(long)]
        n: String,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[arg(long, default_value = "100")]
        trials: String,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run the built-in oracle checks.
    Selftest,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// builtin:bernoulli, builtin:categorical[:M], builtin:binomial:N, or a JSON spec file.
    #[arg(long)]
    model: String,
    /// Parameter vector(s): comma-separated entries, ';' between vectors.
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
}

#[derive(Debug, Args)]
struct OptionalModelArgs {
    #[arg(long)]
    model: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<String>,
}

#[derive(Debug, Args)]
struct SamplingArgs {
    #[arg(long, allow_hyphen_values = true)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<String>,
    #[arg(long)]
    seed: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MetricMethod {
    /// Closed form / exact expectation.
    Exact,
    /// Central differences of the divergence.
    Eguchi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    Contamination,
    Asymptotic,
}

/// Failure with its exit code and a one-line message.
#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(flag: &str, message: impl std::fmt::Display) -> CliError {
    CliError {
        code: 1,
        message: format!("{flag}: {message}"),
    }
}

/// Maps a library error to an exit code; input errors are attributed to
/// `flag`.
fn classify(flag: &str) -> impl Fn(Error) -> CliError + '_ {
    move |e| {
        if e.is_computational() {
            CliError {
                code: 2,
                message: format!("{}: {e}", e.kind()),
            }
        } else {
            invalid(flag, e)
        }
    }
}

fn parse_float(flag: &str, s: &str) -> CliResult<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| invalid(flag, format!("{:?} is not a number", s.trim())))?;
    if !v.is_finite() {
        return Err(invalid(flag, format!("{v} is not finite")));
    }
    Ok(v)
}

fn parse_floats(flag: &str, s: &str) -> CliResult<Vec<f64>> {
    s.split(',').map(|v| parse_float(flag, v)).collect()
}

fn parse_vectors(flag: &str, s: &str) -> CliResult<Vec<Vec<f64>>> {
    s.split(';')
        .filter(|v| !v.trim().is_empty())
        .map(|v| parse_floats(flag, v))
        .collect()
}

fn parse_counts(flag: &str, s: &str) -> CliResult<Vec<usize>> {
    s.split(',')
        .map(|v| {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| invalid(flag, format!("{:?} is not a positive integer", v.trim())))?;
            if n == 0 {
                return Err(invalid(flag, "must be at least 1"));
            }
            Ok(n)
        })
        .collect()
}

fn parse_single_count(flag: &str, s: &str) -> CliResult<usize> {
    match parse_counts(flag, s)?.as_slice() {
        [n] => Ok(*n),
        _ => Err(invalid(flag, "expected a single value")),
    }
}

fn parse_u64(flag: &str, s: &str) -> CliResult<u64> {
    s.trim()
        .parse()
        .map_err(|_| invalid(flag, format!("{:?} is not a non-negative integer", s.trim())))
}

fn parse_alphas(s: &str) -> CliResult<Vec<f64>> {
    let alphas = parse_floats("--alpha", s)?;
    for &a in &alphas {
        if a <= -1.0 {
            return Err(invalid("--alpha", format!("alpha = {a} is excluded (alpha must be > -1)")));
        }
    }
    Ok(alphas)
}

fn parse_alpha(s: &str) -> CliResult<f64> {
    match parse_alphas(s)?.as_slice() {
        [a] => Ok(*a),
        _ => Err(invalid("--alpha", "expected a single value")),
    }
}

fn parse_epsilons(s: &str) -> CliResult<Vec<f64>> {
    let eps = parse_floats("--epsilon", s)?;
    if let Some(e) = eps.iter().find(|e| !(0.0..1.0).contains(*e)) {
        return Err(invalid("--epsilon", format!("epsilon = {e} must lie in [0, 1)")));
    }
    Ok(eps)
}

fn parse_pmf(flag: &str, s: &str) -> CliResult<Pmf> {
    let v = parse_floats(flag, s)?;
    validate_probabilities(flag, &v).map_err(|e| invalid(flag, e))
}

fn resolve_budget(flag: &Option<String>) -> CliResult<u64> {
    match flag {
        Some(s) => parse_u64("--budget", s),
        None => budget_from_env().map_err(|e| invalid(BUDGET_ENV, e)),
    }
}

/// Resolves `--model`; a bare `builtin:categorical` takes m from the first
/// θ vector.
fn resolve_model(model: &str, theta: Option<&str>) -> CliResult<ModelSpec> {
    let builtin = |family: ParametricFamily| ModelSpec {
        family,
        theta: None,
        contamination: None,
    };
    let Some(name) = model.strip_prefix("builtin:") else {
        return load_model_spec(Path::new(model)).map_err(|e| invalid("--model", e));
    };
    let parts: Vec<&str> = name.split(':').collect();
    let size = |s: &str| -> CliResult<usize> {
        s.parse()
            .map_err(|_| invalid("--model", format!("{s:?} is not a positive integer")))
    };
    let family = match parts.as_slice() {
        ["bernoulli"] => ParametricFamily::bernoulli(),
        ["binomial", trials] => ParametricFamily::binomial(size(trials)?).map_err(|e| invalid("--model", e))?,
        ["categorical", m] => ParametricFamily::categorical(size(m)?).map_err(|e| invalid("--model", e))?,
        ["categorical"] => {
            let first = theta
                .map(|t| parse_vectors("--theta", t))
                .transpose()?
                .and_then(|v| v.into_iter().next())
                .ok_or_else(|| invalid("--model", "builtin:categorical needs :M or a --theta vector"))?;
            ParametricFamily::categorical(first.len() + 1).map_err(|e| invalid("--model", e))?
        }
        _ => {
            return Err(invalid(
                "--model",
                format!("unknown model {model:?} (expected builtin:bernoulli, builtin:categorical[:M], builtin:binomial:N or a spec file)"),
            ))
        }
    };
    Ok(builtin(family))
}

/// θ grid from `--theta` (or the spec file); for one-parameter families a
/// single comma-separated list is a grid of scalars.
fn theta_grid(spec: &ModelSpec, theta: Option<&str>) -> CliResult<Vec<Vec<f64>>> {
    let mut grid = match theta {
        Some(t) => parse_vectors("--theta", t)?,
        None => spec.theta.clone().map(|t| vec![t]).unwrap_or_default(),
    };
    if grid.is_empty() {
        return Err(invalid("--theta", "no parameter given"));
    }
    if spec.family.dim() == 1 && grid.len() == 1 && grid[0].len() > 1 {
        grid = grid[0].iter().map(|t| vec![*t]).collect();
    }
    for t in &grid {
        spec.family.check_domain(t).map_err(|e| invalid("--theta", e))?;
    }
    Ok(grid)
}

fn single_theta(spec: &ModelSpec, theta: Option<&str>) -> CliResult<Vec<f64>> {
    let grid = theta_grid(spec, theta)?;
    match <[Vec<f64>; 1]>::try_from(grid) {
        Ok([t]) => Ok(t),
        Err(_) => Err(invalid("--theta", "expected a single parameter vector")),
    }
}

/// Shortest round-trip form; exponent notation for tiny magnitudes.
fn fmt_num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",")
}

fn fmt_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| fmt_num(*v)).collect();
        let _ = writeln!(out, "{}", row.join(" "));
    }
    out
}

fn fmt_rows(m: &[Vec<f64>]) -> String {
    m.iter().map(|r| fmt_vec(r)).collect::<Vec<_>>().join(";")
}

fn parse_format(s: &str) -> CliResult<ReportFormat> {
    s.parse().map_err(|e| invalid("--format", e))
}

fn read_data(s: &str) -> CliResult<Vec<usize>> {
    let text = match s.strip_prefix('@') {
        Some(path) => std::fs::read_to_string(path).map_err(|e| invalid("--data", format!("{path}: {e}")))?,
        None => s.to_string(),
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<usize>()
                .map_err(|_| invalid("--data", format!("{t:?} is not an outcome index")))
        })
        .collect()
}

/// Contamination from `--epsilon`/`--delta`, falling back to the spec file.
fn contamination(spec: &ModelSpec, sampling: &SamplingArgs) -> CliResult<(Vec<f64>, Option<Pmf>)> {
    let epsilons = match &sampling.epsilon {
        Some(e) => parse_epsilons(e)?,
        None => vec![spec.contamination.as_ref().map_or(0.0, |c| c.epsilon())],
    };
    let delta = match &sampling.delta {
        Some(d) => Some(parse_pmf("--delta", d)?),
        None => spec.contamination.as_ref().map(|c| c.delta().clone()),
    };
    if let Some(d) = &delta {
        if d.len() != spec.family.outcomes() {
            return Err(invalid(
                "--delta",
                format!("has {} entries but {} has {} outcomes", d.len(), spec.family.name(), spec.family.outcomes()),
            ));
        }
    }
    if delta.is_none() && epsilons.iter().any(|&e| e > 0.0) {
        return Err(invalid("--delta", "required when --epsilon is positive"));
    }
    Ok((epsilons, delta))
}

fn run(cli: Cli) -> CliResult<(String, i32)> {
    let mut status = 0;
    let text = match cli.command {
        Command::Metric { model, alpha, method, step } => {
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let theta = single_theta(&spec, model.theta.as_deref())?;
            let alpha = parse_alpha(&alpha)?;
            if let Some(h) = step {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(invalid("--step", "must be positive"));
                }
            }
            let m = match method {
                MetricMethod::Exact => alpha_fisher_matrix(&spec.family, &theta, alpha),
                MetricMethod::Eguchi => eguchi_fd_metric(&spec.family, &theta, alpha, step),
            }
            .map_err(classify("--theta"))?;
            fmt_matrix(&m.entries)
        }
        Command::Divergence { p, q, alpha } => {
            let p = parse_pmf("--p", &p)?;
            let q = parse_pmf("--q", &q)?;
            if p.len() != q.len() {
                return Err(invalid("--q", format!("has {} entries, --p has {}", q.len(), p.len())));
            }
            let alpha = parse_alpha(&alpha)?;
            let d = if alpha == 0.0 {
                kl_divergence(&p, &q)
            } else {
                bhhj_divergence(&p, &q, alpha)
            }
            .map_err(classify("--q"))?;
            format!("{}\n", fmt_num(d))
        }
        Command::Escort { p, model, alpha } => {
            let alpha = parse_alpha(&alpha)?;
            let pmf = match (p, model.model) {
                (Some(p), None) => parse_pmf("--p", &p)?,
                (None, Some(m)) => {
                    let spec = resolve_model(&m, model.theta.as_deref())?;
                    let theta = single_theta(&spec, model.theta.as_deref())?;
                    spec.family.pmf(&theta).map_err(classify("--theta"))?
                }
                _ => return Err(invalid("--p", "give either --p or --model with --theta")),
            };
            let e = escort(&pmf, alpha).map_err(classify("--alpha"))?;
            format!("{}\n", fmt_vec(e.probs()))
        }
        Command::Bound { model, alpha, n, budget } => {
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let theta = single_theta(&spec, model.theta.as_deref())?;
            let alpha = parse_alpha(&alpha)?;
            let n = parse_single_count("--n", &n)?;
            let budget = resolve_budget(&budget)?;
            let joint = product_extend(&spec.family, n).map_err(classify("--n"))?.with_budget(budget);
            let b = generalized_crlb(&joint, &theta, alpha).map_err(classify("--theta"))?;
            fmt_matrix(&b)
        }
        Command::Gap { model, alpha, n, estimator, budget } => {
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let theta = single_theta(&spec, model.theta.as_deref())?;
            let alpha = parse_alpha(&alpha)?;
            let n = parse_single_count("--n", &n)?;
            let est = EstimatorFn::from_name(&estimator, &spec.family).map_err(|e| invalid("--estimator", e))?;
            let budget = resolve_budget(&budget)?;
            let joint = product_extend(&spec.family, n).map_err(classify("--n"))?.with_budget(budget);
            let r = bound_gap(&joint, &est, &theta, alpha).map_err(classify("--estimator"))?;
            format!(
                "cov={}\nbound={}\ngap={}\nmin_eig={}\npsd={}\ntangency_residual={}\n",
                fmt_rows(&r.covariance),
                fmt_rows(&r.bound),
                fmt_rows(&r.gap),
                fmt_num(r.min_gap_eigenvalue),
                r.psd,
                fmt_num(r.tangency_residual)
            )
        }
        Command::Fit { model, alpha, data, n, sampling } => {
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let alpha = parse_alpha(&alpha)?;
            let seed = sampling.seed.as_deref().map(|s| parse_u64("--seed", s)).transpose()?.unwrap_or(0);
            let observations = match data {
                Some(d) => {
                    if n.is_some() || sampling.epsilon.is_some() {
                        return Err(invalid("--data", "cannot be combined with sampling flags"));
                    }
                    read_data(&d)?
                }
                None => {
                    let theta = single_theta(&spec, model.theta.as_deref())?;
                    let n = n
                        .as_deref()
                        .ok_or_else(|| invalid("--data", "give observations, or --n to simulate"))?;
                    let n = parse_single_count("--n", n)?;
                    let (eps, delta) = contamination(&spec, &sampling)?;
                    let [eps] = eps[..] else {
                        return Err(invalid("--epsilon", "expected a single value"));
                    };
                    let source = match delta {
                        Some(d) if eps > 0.0 => {
                            let c = ContaminationSpec::new(eps, d).map_err(|e| invalid("--epsilon", e))?;
                            mixture_pmf(&spec.family, &theta, &c).map_err(classify("--delta"))?
                        }
                        _ => spec.family.pmf(&theta).map_err(classify("--theta"))?,
                    };
                    sample_iid(&source, n, seed).map_err(classify("--n"))?
                }
            };
            let options = FitOptions {
                seed,
                ..FitOptions::default()
            };
            let fit = fit_bhhj(&spec.family, &observations, alpha, &options).map_err(classify("--data"))?;
            format!(
                "theta_hat={}\nobjective={}\nresidual_norm={}\niterations={}\nconverged={}\nstart={}\n",
                fmt_vec(&fit.theta_hat),
                fmt_num(fit.objective),
                fmt_num(fit.gradient_norm),
                fit.iterations,
                fit.converged,
                fit.start_index
            )
        }
        Command::Sweep { model, alpha, n, estimator, budget, format } => {
            let format = parse_format(&format)?;
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let defaults = ExperimentConfig::default_bound_sweep();
            let mut config = ExperimentConfig::new(spec.family.clone());
            config.thetas = if model.theta.is_none() && spec.theta.is_none() && spec.family == defaults.family {
                defaults.thetas.clone()
            } else {
                theta_grid(&spec, model.theta.as_deref())?
            };
            config.alphas = alpha.as_deref().map(parse_alphas).transpose()?.unwrap_or(defaults.alphas);
            config.ns = n.as_deref().map(|s| parse_counts("--n", s)).transpose()?.unwrap_or(defaults.ns);
            if !estimator.is_empty() {
                for name in &estimator {
                    EstimatorFn::from_name(name, &spec.family).map_err(|e| invalid("--estimator", e))?;
                }
                config.estimators = estimator;
            }
            config.budget = resolve_budget(&budget)?;
            let report = run_bound_sweep(&config).map_err(classify("--theta"))?;
            log::info!("sweep: {} rows in {:.3}s", report.rows.len(), report.wall_clock_secs);
            render_report(&report, format).map_err(classify("--out"))?
        }
        Command::Diagnose { study, model, alpha, n, sampling, trials, format } => {
            let format = parse_format(&format)?;
            let spec = resolve_model(&model.model, model.theta.as_deref())?;
            let mut config = ExperimentConfig::new(spec.family.clone());
            config.thetas = theta_grid(&spec, model.theta.as_deref())?;
            config.alphas = parse_alphas(&alpha)?;
            config.ns = parse_counts("--n", &n)?;
            let (epsilons, delta) = contamination(&spec, &sampling)?;
            if study == Study::Asymptotic && epsilons.iter().any(|&e| e != 0.0) {
                return Err(invalid("--epsilon", "the asymptotic study runs on the clean model"));
            }
            config.epsilons = epsilons;
            config.delta = delta;
            config.trials = parse_single_count("--trials", &trials)?;
            config.seed = sampling.seed.as_deref().map(|s| parse_u64("--seed", s)).transpose()?.unwrap_or(0);
            let report = match study {
                Study::Contamination => run_contamination_study(&config),
                Study::Asymptotic => run_asymptotic_diagnostic(&config),
            }
            .map_err(classify("--theta"))?;
            log::info!("diagnose: {} records in {:.3}s", report.records.len(), report.wall_clock_secs);
            for d in &report.diagnostics {
                if d.check == Some(false) {
                    log::error!(
                        "asymptotic check failed: theta={:?} n={} n*cov={:?}",
                        d.theta, d.n, d.mc_covariance
                    );
                    status = 2;
                }
            }
            render_report(&report, format).map_err(classify("--out"))?
        }
        Command::Selftest => {
            let checks = selftest::run_all().map_err(classify("selftest"))?;
            let mut out = String::new();
            for c in &checks {
                if !c.passed() {
                    status = 2;
                }
                let _ = writeln!(
                    out,
                    "[{}] {} (worst {:e}, tolerance {:e})",
                    if c.passed() { "ok" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.tolerance
                );
            }
            out
        }
    };
    Ok((text, status))
}

fn write_output(out: &Option<PathBuf>, text: &str) -> CliResult<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| invalid("--out", format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code. Never panics on bad input.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            eprintln!("{}", text.lines().next().unwrap_or("invalid arguments"));
            return 1;
        }
    };
    let pool = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads: must be at least 1");
            return 1;
        }
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    };
    let pool = match pool {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: --threads: {e}");
            return 1;
        }
    };
    let out = cli.out.clone();
    let result = pool.install(|| run(cli)).and_then(|(text, status)| {
        write_output(&out, &text)?;
        Ok(status)
    });
    match result {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
