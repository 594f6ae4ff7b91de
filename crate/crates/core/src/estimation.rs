//! Maximum-likelihood and density-power (BHHJ) estimation.
//!
//! The BHHJ objective for data x₁…xₙ is
//!
//! ```text
//! l⁽ᵅ⁾(θ) = (1/n) Σᵢ ((1+α) p_θ(xᵢ)^α − 1)/α − Σₓ p_θ(x)^(1+α)
//! ```
//!
//! and reduces to the mean log-likelihood at α = 0. Its gradient is (1+α)
//! times the estimating-equation residual
//! (1/n) Σᵢ p^α s(θ; xᵢ) − E_θ[p^α s].
//!
//! Everything here depends on the data only through per-outcome counts, so
//! results do not depend on the order of the observations.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_alpha, Error, Result};
use crate::model::{FamilyKind, ParametricFamily, ProductModel};
use crate::numeric;
use crate::rng;

/// Optimizer settings for [`fit_bhhj`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Bound on the Euclidean norm of the estimating-equation residual.
    pub tolerance: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-10,
            starts: 5,
            seed: 0,
            max_halvings: 50,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.starts == 0 || self.max_halvings == 0 {
            return Err(Error::InvalidArgument("fit options must be positive".into()));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::InvalidArgument("fit tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub objective: f64,
    /// Norm of the estimating-equation residual at `theta_hat`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub start_index: usize,
    /// Objective at the start and after every accepted step.
    #[serde(skip)]
    pub objective_trace: Vec<f64>,
}

type EstimatorMap = Arc<dyn Fn(&[usize]) -> Vec<f64> + Send + Sync>;

/// A deterministic map from n-tuples of outcomes to parameter vectors.
#[derive(Clone)]
pub struct EstimatorFn {
    name: String,
    family: ParametricFamily,
    map: EstimatorMap,
}

impl fmt::Debug for EstimatorFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EstimatorFn")
            .field("name", &self.name)
            .field("family", &self.family.name())
            .finish()
    }
}

impl EstimatorFn {
    pub fn new(
        name: impl Into<String>,
        family: &ParametricFamily,
        map: impl Fn(&[usize]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            family: family.clone(),
            map: Arc::new(map),
        }
    }

    /// Mean of the observations scaled to θ: the sample mean for Bernoulli,
    /// mean successes per trial for binomial, and the empirical frequencies
    /// of the first m − 1 symbols for categorical. Unbiased for every
    /// built-in family.
    pub fn sample_mean(family: &ParametricFamily) -> Self {
        let kind = family.kind();
        let m = family.outcomes();
        Self::new("sample_mean", family, move |x| {
            let n = x.len() as f64;
            match kind {
                FamilyKind::Bernoulli => vec![x.iter().sum::<usize>() as f64 / n],
                FamilyKind::Binomial { trials } => {
                    vec![x.iter().sum::<usize>() as f64 / (n * trials as f64)]
                }
                FamilyKind::Categorical { .. } => {
                    let mut freq = vec![0.0; m - 1];
                    for &v in x {
                        if v < m - 1 {
                            freq[v] += 1.0;
                        }
                    }
                    freq.iter().map(|c| c / n).collect()
                }
            }
        })
    }

    /// θ̂ ≡ c regardless of the data.
    pub fn constant(family: &ParametricFamily, value: Vec<f64>) -> Result<Self> {
        if value.len() != family.dim() {
            return Err(Error::SupportMismatch {
                expected: family.dim(),
                actual: value.len(),
            });
        }
        Ok(Self::new("constant", family, move |_| value.clone()))
    }

    /// Looks up a built-in estimator: `sample_mean` (alias `frequencies`,
    /// `mle`) or `constant:<c1,c2,...>`.
    pub fn from_name(name: &str, family: &ParametricFamily) -> Result<Self> {
        match name {
            "sample_mean" | "frequencies" | "mle" => {
                let mut e = Self::sample_mean(family);
                e.name = name.to_string();
                Ok(e)
            }
            other => {
                if let Some(rest) = other.strip_prefix("constant:") {
                    let value = rest
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::InvalidArgument(format!("bad constant {rest:?}")))?;
                    let mut e = Self::constant(family, value)?;
                    e.name = other.to_string();
                    Ok(e)
                } else {
                    Err(Error::InvalidArgument(format!("unknown estimator {other:?}")))
                }
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> &ParametricFamily {
        &self.family
    }

    pub fn evaluate(&self, x: &[usize]) -> Vec<f64> {
        (self.map)(x)
    }
}

fn weights_from_counts(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n as f64).collect()
}

/// Objective and θ-gradient from empirical weights.
fn objective_and_gradient(
    family: &ParametricFamily,
    theta: &[f64],
    weights: &[f64],
    alpha: f64,
) -> Result<(f64, DVector<f64>)> {
    let p = family.pmf(theta)?;
    let s = family.score_matrix(theta)?;
    let k = family.dim();
    let probs = p.probs();

    let objective = if alpha == 0.0 {
        numeric::compensated_sum(
            weights
                .iter()
                .zip(probs)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, q)| w * q.ln()),
        )
    } else {
        let data_term = numeric::compensated_sum(
            weights
                .iter()
                .zip(probs)
                .filter(|(w, _)| **w > 0.0)
                .map(|(w, q)| w * ((1.0 + alpha) * q.powf(alpha) - 1.0) / alpha),
        );
        data_term - numeric::compensated_sum(probs.iter().map(|q| q.powf(1.0 + alpha)))
    };

    let residual = DVector::from_fn(k, |i, _| {
        numeric::compensated_sum(
            probs
                .iter()
                .zip(weights)
                .enumerate()
                .map(|(x, (q, w))| (w - q) * q.powf(alpha) * s[(x, i)]),
        )
    });
    Ok((objective, residual * (1.0 + alpha)))
}

/// BHHJ objective l⁽ᵅ⁾(θ); mean log-likelihood at α = 0.
pub fn bhhj_objective(
    family: &ParametricFamily,
    theta: &[f64],
    data: &[usize],
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let counts = family.counts(data)?;
    Ok(objective_and_gradient(family, theta, &weights_from_counts(&counts), alpha)?.0)
}

/// Analytic θ-gradient of [`bhhj_objective`].
pub fn bhhj_gradient(
    family: &ParametricFamily,
    theta: &[f64],
    data: &[usize],
    alpha: f64,
) -> Result<DVector<f64>> {
    check_alpha(alpha)?;
    let counts = family.counts(data)?;
    Ok(objective_and_gradient(family, theta, &weights_from_counts(&counts), alpha)?.1)
}

/// (1/n) Σᵢ p^α s(θ; xᵢ) − E_θ[p^α s].
pub fn estimating_residual(
    family: &ParametricFamily,
    theta: &[f64],
    data: &[usize],
    alpha: f64,
) -> Result<DVector<f64>> {
    Ok(bhhj_gradient(family, theta, data, alpha)? / (1.0 + alpha))
}

/// Ascent iterate: θ and its unconstrained image η are kept together so a
/// start that is already optimal is returned bit-for-bit.
struct Iterate {
    theta: Vec<f64>,
    eta: Vec<f64>,
    objective: f64,
    gradient: DVector<f64>,
}

/// Objective values closer than this many ulps are treated as equal when
/// accepting steps and ranking starts.
const ULPS: f64 = 4.0;

pub(crate) fn float_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= ULPS * f64::EPSILON * a.abs().max(b.abs()).max(1.0)
}

struct Ascent<'a> {
    family: &'a ParametricFamily,
    weights: Vec<f64>,
    alpha: f64,
    options: &'a FitOptions,
}

impl Ascent<'_> {
    fn evaluate(&self, theta: Vec<f64>, eta: Vec<f64>) -> Result<Iterate> {
        let (objective, gradient) =
            objective_and_gradient(self.family, &theta, &self.weights, self.alpha)?;
        Ok(Iterate {
            theta,
            eta,
            objective,
            gradient,
        })
    }

    fn residual_norm(&self, it: &Iterate) -> f64 {
        it.gradient.norm() / (1.0 + self.alpha)
    }

    /// Gradient with respect to the unconstrained coordinates.
    fn eta_gradient(&self, theta: &[f64], gradient: &DVector<f64>) -> DVector<f64> {
        self.family.unconstrained_jacobian(theta).transpose() * gradient
    }

    fn eta_gradient_at(&self, eta: &[f64]) -> Option<DVector<f64>> {
        let theta = self.family.from_unconstrained(eta);
        let (_, g) = objective_and_gradient(self.family, &theta, &self.weights, self.alpha).ok()?;
        Some(self.eta_gradient(&theta, &g))
    }

    /// Central differences of the analytic η-gradient, symmetrized.
    fn hessian(&self, eta: &[f64]) -> Option<DMatrix<f64>> {
        let k = eta.len();
        let mut h = DMatrix::zeros(k, k);
        for j in 0..k {
            let step = 1e-5 * (1.0 + eta[j].abs());
            let mut up = eta.to_vec();
            let mut dn = eta.to_vec();
            up[j] += step;
            dn[j] -= step;
            let col = (self.eta_gradient_at(&up)? - self.eta_gradient_at(&dn)?) / (2.0 * step);
            h.set_column(j, &col);
        }
        Some(numeric::symmetrize(&h))
    }

    fn direction(&self, it: &Iterate) -> DVector<f64> {
        let g = self.eta_gradient(&it.theta, &it.gradient);
        if let Some(h) = self.hessian(&it.eta) {
            if let Some(chol) = (-h).cholesky() {
                let d = chol.solve(&g);
                if d.iter().all(|v| v.is_finite()) && d.dot(&g) > 0.0 {
                    return d;
                }
            }
        }
        g
    }

    /// Safeguarded Newton ascent from one start.
    fn run(&self, start: Vec<f64>, start_index: usize) -> Result<FitResult> {
        let eta = self.family.to_unconstrained(&start);
        let mut it = self.evaluate(start, eta)?;
        let tol = self.options.tolerance;
        let mut iterations = 0;
        let mut trace = vec![it.objective];

        while iterations < self.options.max_iterations && self.residual_norm(&it) > tol {
            let d = self.direction(&it);
            let current_norm = self.residual_norm(&it);
            let mut step = 1.0;
            let mut next = None;
            for _ in 0..=self.options.max_halvings {
                let eta: Vec<f64> = it.eta.iter().zip(d.iter()).map(|(e, di)| e + step * di).collect();
                let theta = self.family.from_unconstrained(&eta);
                if self.family.check_domain(&theta).is_ok() {
                    let cand = self.evaluate(theta, eta)?;
                    let better = cand.objective > it.objective;
                    // At the optimum the objective is flat to rounding; accept
                    // such steps only when they shrink the residual.
                    let level = float_close(cand.objective, it.objective)
                        && self.residual_norm(&cand) < current_norm;
                    if better || level {
                        next = Some(cand);
                        break;
                    }
                }
                step *= 0.5;
            }
            iterations += 1;
            match next {
                Some(n) => {
                    trace.push(n.objective);
                    it = n;
                }
                None => break,
            }
        }

        let gradient_norm = self.residual_norm(&it);
        Ok(FitResult {
            objective: it.objective,
            gradient_norm,
            converged: gradient_norm <= tol,
            theta_hat: it.theta,
            iterations,
            start_index,
            objective_trace: trace,
        })
    }
}

/// Interior starting point: the MLE, or the MLE of half-count smoothed data
/// when some outcome is unobserved.
fn mle_start(family: &ParametricFamily, counts: &[usize]) -> Vec<f64> {
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let theta = family.closed_form_mle(&raw);
    if family.check_domain(&theta).is_ok() {
        return theta;
    }
    let smoothed: Vec<f64> = raw.iter().map(|c| c + 0.5).collect();
    family.closed_form_mle(&smoothed)
}

/// Maximizes the BHHJ objective by multi-start safeguarded Newton ascent in
/// unconstrained coordinates.
///
/// Start 0 is the MLE; the others perturb it in unconstrained coordinates
/// with streams derived from `options.seed`. The winner is the converged
/// start with the highest objective (ties within a few ulps go to the lower
/// start index).
pub fn fit_bhhj(
    family: &ParametricFamily,
    data: &[usize],
    alpha: f64,
    options: &FitOptions,
) -> Result<FitResult> {
    check_alpha(alpha)?;
    options.validate()?;
    let counts = family.counts(data)?;
    fit_counts(family, &counts, alpha, options)
}

pub(crate) fn fit_counts(
    family: &ParametricFamily,
    counts: &[usize],
    alpha: f64,
    options: &FitOptions,
) -> Result<FitResult> {
    let ascent = Ascent {
        family,
        weights: weights_from_counts(counts),
        alpha,
        options,
    };
    let base = mle_start(family, counts);
    let base_eta = family.to_unconstrained(&base);

    let starts: Vec<Vec<f64>> = (0..options.starts)
        .map(|s| {
            if s == 0 {
                return base.clone();
            }
            let mut r = rng::stream(rng::derive_seed(options.seed, &[s as u64]));
            let eta: Vec<f64> = base_eta.iter().map(|e| e + r.random_range(-1.5..1.5)).collect();
            family.from_unconstrained(&eta)
        })
        .collect();

    let results: Vec<Result<FitResult>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, start)| {
            if family.check_domain(&start).is_err() {
                return Err(Error::NonConvergence(format!("start {i} left the domain")));
            }
            ascent.run(start, i)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut last_err = None;
    let mut diagnostics = Vec::new();
    for r in results {
        match r {
            Ok(fit) if fit.converged => {
                let replace = match &best {
                    None => true,
                    Some(b) => fit.objective > b.objective && !float_close(fit.objective, b.objective),
                };
                if replace {
                    best = Some(fit);
                }
            }
            Ok(fit) => diagnostics.push(format!(
                "start {}: residual {:.3e} after {} iterations",
                fit.start_index, fit.gradient_norm, fit.iterations
            )),
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(b) => Ok(b),
        None => {
            if let Some(e @ Error::DomainViolation { .. }) = last_err {
                return Err(e);
            }
            Err(Error::NonConvergence(if diagnostics.is_empty() {
                "no start converged".into()
            } else {
                diagnostics.join("; ")
            }))
        }
    }
}

/// Maximum-likelihood fit from the closed form.
///
/// Fails with `NonConvergence` when the maximizer lies on the boundary of
/// the domain (some outcome never observed).
pub fn fit_mle(family: &ParametricFamily, data: &[usize]) -> Result<FitResult> {
    let counts = family.counts(data)?;
    mle_from_counts(family, &counts)
}

pub(crate) fn mle_from_counts(family: &ParametricFamily, counts: &[usize]) -> Result<FitResult> {
    let raw: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let theta = family.closed_form_mle(&raw);
    if family.check_domain(&theta).is_err() {
        return Err(Error::NonConvergence(format!(
            "maximum-likelihood estimate {theta:?} lies on the boundary of the domain"
        )));
    }
    let (objective, gradient) = objective_and_gradient(family, &theta, &weights_from_counts(counts), 0.0)?;
    Ok(FitResult {
        theta_hat: theta,
        objective,
        gradient_norm: gradient.norm(),
        iterations: 0,
        converged: true,
        start_index: 0,
        objective_trace: vec![objective],
    })
}

/// E_θ[θ̂] − θ by exhaustive enumeration of all n-tuples.
pub fn exact_bias(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
) -> Result<DVector<f64>> {
    let k = joint.base().dim();
    let tables = joint.tables(theta)?;
    let count = joint.enumerable_count()?;
    let n = joint.n();
    let sums = numeric::sum_over_with(
        count,
        k,
        || vec![0usize; n],
        |idx, x, out| {
            joint.decode(idx, x);
            let p = tables.log_p_of(x).exp();
            for (o, v) in out.iter_mut().zip(estimator.evaluate(x)) {
                *o = p * v;
            }
        },
    );
    Ok(DVector::from_fn(k, |i, _| sums[i] - theta[i]))
}
