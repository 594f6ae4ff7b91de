//! Finite-support parametric models.
//!
//! A [`ParametricFamily`] maps a parameter vector θ (an open subset of R^k)
//! to a strictly positive probability vector over a finite alphabet, and
//! ships the analytic Jacobian ∂p_θ(x)/∂θᵢ. [`ProductModel`] is the i.i.d.
//! extension over length-n tuples, evaluated in log space.

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Parameters closer than this to the domain boundary are rejected.
pub const DOMAIN_MARGIN: f64 = 1e-9;

/// Tolerance on `sum(p) == 1` for a valid [`Pmf`].
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Default cap on the number of joint outcomes materialized by enumeration.
pub const DEFAULT_BUDGET: u64 = 1 << 20;

/// Environment variable that overrides [`DEFAULT_BUDGET`].
pub const BUDGET_ENV: &str = "ACRLB_BUDGET";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    labels: Vec<String>,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        Self::with_labels((0..size).map(|i| i.to_string()).collect())
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        if labels.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "alphabet needs at least 2 symbols, got {}",
                labels.len()
            )));
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::InvalidArgument("alphabet labels must be distinct".into()));
        }
        Ok(Self { labels })
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

/// A strictly positive probability vector.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPmf(format!(
                "need at least 2 entries, got {}",
                probs.len()
            )));
        }
        if let Some((i, v)) = probs.iter().enumerate().find(|(_, v)| !v.is_finite() || **v <= 0.0) {
            return Err(Error::InvalidPmf(format!(
                "entry {i} is {v}; all probabilities must be strictly positive"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidPmf(format!("entries sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Normalizes positive weights into a pmf.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn expect(&self, values: &[f64]) -> f64 {
        self.0.iter().zip(values).map(|(p, v)| p * v).sum()
    }

    pub(crate) fn check_same_support(&self, other: &Pmf) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::SupportMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(())
    }
}

impl AsRef<[f64]> for Pmf {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FamilyKind {
    /// p_θ(x) = θˣ(1−θ)¹⁻ˣ on {0, 1}.
    Bernoulli,
    /// Full simplex in mixture coordinates: p = (θ₁, …, θ_{m−1}, 1 − Σθ).
    Categorical { m: usize },
    /// Number of successes in `trials` Bernoulli(θ) draws.
    Binomial { trials: usize },
}

/// A built-in finite-support family with analytic derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricFamily {
    kind: FamilyKind,
    alphabet: Alphabet,
}

impl ParametricFamily {
    pub fn bernoulli() -> Self {
        Self {
            kind: FamilyKind::Bernoulli,
            alphabet: Alphabet::new(2).expect("two symbols"),
        }
    }

    pub fn categorical(m: usize) -> Result<Self> {
        Ok(Self {
            kind: FamilyKind::Categorical { m },
            alphabet: Alphabet::new(m)?,
        })
    }

    pub fn binomial(trials: usize) -> Result<Self> {
        if trials == 0 {
            return Err(Error::InvalidArgument("binomial needs at least one trial".into()));
        }
        Ok(Self {
            kind: FamilyKind::Binomial { trials },
            alphabet: Alphabet::new(trials + 1)?,
        })
    }

    pub fn from_kind(kind: FamilyKind) -> Result<Self> {
        match kind {
            FamilyKind::Bernoulli => Ok(Self::bernoulli()),
            FamilyKind::Categorical { m } => Self::categorical(m),
            FamilyKind::Binomial { trials } => Self::binomial(trials),
        }
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn name(&self) -> String {
        match self.kind {
            FamilyKind::Bernoulli => "bernoulli".into(),
            FamilyKind::Categorical { m } => format!("categorical{m}"),
            FamilyKind::Binomial { trials } => format!("binomial{trials}"),
        }
    }

    /// Parameter dimension k.
    pub fn dim(&self) -> usize {
        match self.kind {
            FamilyKind::Bernoulli | FamilyKind::Binomial { .. } => 1,
            FamilyKind::Categorical { m } => m - 1,
        }
    }

    /// Alphabet size m.
    pub fn outcomes(&self) -> usize {
        self.alphabet.size()
    }

    /// Smallest slack among the inequalities defining the open domain
    /// (negative outside).
    pub fn boundary_distance(&self, theta: &[f64]) -> f64 {
        match self.kind {
            FamilyKind::Bernoulli | FamilyKind::Binomial { .. } => {
                theta[0].min(1.0 - theta[0])
            }
            FamilyKind::Categorical { .. } => {
                let rest = 1.0 - theta.iter().sum::<f64>();
                theta.iter().cloned().fold(rest, f64::min)
            }
        }
    }

    pub fn check_domain(&self, theta: &[f64]) -> Result<()> {
        let violation = || Error::DomainViolation {
            family: self.name(),
            theta: theta.to_vec(),
            margin: DOMAIN_MARGIN,
        };
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) {
            return Err(violation());
        }
        if self.boundary_distance(theta) <= DOMAIN_MARGIN {
            return Err(violation());
        }
        Ok(())
    }

    /// Probabilities without domain validation; callers check first.
    fn probs(&self, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            FamilyKind::Bernoulli => vec![1.0 - theta[0], theta[0]],
            FamilyKind::Categorical { .. } => {
                let mut p = theta.to_vec();
                p.push(1.0 - theta.iter().sum::<f64>());
                p
            }
            FamilyKind::Binomial { trials } => {
                let (lt, l1t) = (theta[0].ln(), (-theta[0]).ln_1p());
                let mut log_choose = 0.0;
                (0..=trials)
                    .map(|x| {
                        if x > 0 {
                            log_choose += ((trials - x + 1) as f64).ln() - (x as f64).ln();
                        }
                        (log_choose + x as f64 * lt + (trials - x) as f64 * l1t).exp()
                    })
                    .collect()
            }
        }
    }

    /// Evaluates p_θ.
    pub fn pmf(&self, theta: &[f64]) -> Result<Pmf> {
        self.check_domain(theta)?;
        Pmf::new(self.probs(theta))
    }

    /// m×k matrix with entries ∂p_θ(x)/∂θᵢ.
    pub fn jacobian(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(theta)?;
        let m = self.outcomes();
        let k = self.dim();
        Ok(match self.kind {
            FamilyKind::Bernoulli => DMatrix::from_row_slice(2, 1, &[-1.0, 1.0]),
            FamilyKind::Categorical { .. } => DMatrix::from_fn(m, k, |x, i| {
                if x == m - 1 {
                    -1.0
                } else if x == i {
                    1.0
                } else {
                    0.0
                }
            }),
            FamilyKind::Binomial { .. } => {
                let p = self.probs(theta);
                let s = self.score_matrix_unchecked(theta, &p);
                DMatrix::from_fn(m, 1, |x, _| p[x] * s[(x, 0)])
            }
        })
    }

    /// m×k matrix whose row x is the score ∇_θ log p_θ(x).
    pub fn score_matrix(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(theta)?;
        let p = self.probs(theta);
        Ok(self.score_matrix_unchecked(theta, &p))
    }

    fn score_matrix_unchecked(&self, theta: &[f64], p: &[f64]) -> DMatrix<f64> {
        let m = self.outcomes();
        let k = self.dim();
        match self.kind {
            FamilyKind::Bernoulli => {
                DMatrix::from_row_slice(2, 1, &[-1.0 / (1.0 - theta[0]), 1.0 / theta[0]])
            }
            FamilyKind::Categorical { .. } => DMatrix::from_fn(m, k, |x, i| {
                if x == m - 1 {
                    -1.0 / p[m - 1]
                } else if x == i {
                    1.0 / p[x]
                } else {
                    0.0
                }
            }),
            FamilyKind::Binomial { trials } => DMatrix::from_fn(m, 1, |x, _| {
                x as f64 / theta[0] - (trials - x) as f64 / (1.0 - theta[0])
            }),
        }
    }

    /// Score s(θ; x) = ∇_θ log p_θ(x).
    pub fn score(&self, theta: &[f64], x: usize) -> Result<DVector<f64>> {
        let m = self.outcomes();
        if x >= m {
            return Err(Error::IndexOutOfRange { index: x, dim: m });
        }
        let s = self.score_matrix(theta)?;
        Ok(s.row(x).transpose())
    }

    /// Fisher information in closed form.
    pub fn fisher_closed_form(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(theta)?;
        Ok(match self.kind {
            FamilyKind::Bernoulli => {
                DMatrix::from_element(1, 1, 1.0 / (theta[0] * (1.0 - theta[0])))
            }
            FamilyKind::Binomial { trials } => {
                DMatrix::from_element(1, 1, trials as f64 / (theta[0] * (1.0 - theta[0])))
            }
            FamilyKind::Categorical { m } => {
                let last = 1.0 / (1.0 - theta.iter().sum::<f64>());
                DMatrix::from_fn(m - 1, m - 1, |i, j| {
                    if i == j {
                        1.0 / theta[i] + last
                    } else {
                        last
                    }
                })
            }
        })
    }

    /// Maximum-likelihood estimate from (possibly fractional) outcome
    /// counts. May lie on the boundary of the domain when some outcome is
    /// unobserved.
    pub fn closed_form_mle(&self, counts: &[f64]) -> Vec<f64> {
        let n: f64 = counts.iter().sum();
        match self.kind {
            FamilyKind::Bernoulli => vec![counts[1] / n],
            FamilyKind::Categorical { m } => counts[..m - 1].iter().map(|&c| c / n).collect(),
            FamilyKind::Binomial { trials } => {
                let total: f64 = counts.iter().enumerate().map(|(x, c)| x as f64 * c).sum();
                vec![total / (n * trials as f64)]
            }
        }
    }

    /// Unconstrained coordinates: log-odds, or multinomial log-odds against
    /// the last category.
    pub fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        match self.kind {
            FamilyKind::Bernoulli | FamilyKind::Binomial { .. } => {
                vec![(theta[0] / (1.0 - theta[0])).ln()]
            }
            FamilyKind::Categorical { .. } => {
                let last = 1.0 - theta.iter().sum::<f64>();
                theta.iter().map(|t| (t / last).ln()).collect()
            }
        }
    }

    pub fn from_unconstrained(&self, eta: &[f64]) -> Vec<f64> {
        match self.kind {
            FamilyKind::Bernoulli | FamilyKind::Binomial { .. } => {
                vec![1.0 / (1.0 + (-eta[0]).exp())]
            }
            FamilyKind::Categorical { .. } => {
                let shift = eta.iter().cloned().fold(0.0_f64, f64::max);
                let weights: Vec<f64> = eta.iter().map(|e| (e - shift).exp()).collect();
                let denom = (-shift).exp() + weights.iter().sum::<f64>();
                weights.iter().map(|w| w / denom).collect()
            }
        }
    }

    /// k×k matrix ∂θᵢ/∂ηⱼ of the unconstrained map.
    pub fn unconstrained_jacobian(&self, theta: &[f64]) -> DMatrix<f64> {
        let k = self.dim();
        DMatrix::from_fn(k, k, |i, j| {
            let delta = if i == j { 1.0 } else { 0.0 };
            match self.kind {
                FamilyKind::Bernoulli | FamilyKind::Binomial { .. } => theta[0] * (1.0 - theta[0]),
                FamilyKind::Categorical { .. } => theta[i] * (delta - theta[j]),
            }
        })
    }

    /// Per-outcome counts of a data set, validating every outcome.
    pub fn counts(&self, data: &[usize]) -> Result<Vec<usize>> {
        if data.is_empty() {
            return Err(Error::EmptyData);
        }
        let m = self.outcomes();
        let mut counts = vec![0usize; m];
        for &x in data {
            if x >= m {
                return Err(Error::IndexOutOfRange { index: x, dim: m });
            }
            counts[x] += 1;
        }
        Ok(counts)
    }
}

/// Evaluates p_θ.
pub fn pmf_eval(family: &ParametricFamily, theta: &[f64]) -> Result<Pmf> {
    family.pmf(theta)
}

/// Score s(θ; x).
pub fn score(family: &ParametricFamily, theta: &[f64], x: usize) -> Result<DVector<f64>> {
    family.score(theta, x)
}

/// Contamination (1 − ε) p_θ + ε δ.
#[derive(Debug, Clone, PartialEq)]
pub struct ContaminationSpec {
    epsilon: f64,
    delta: Pmf,
}

impl ContaminationSpec {
    pub fn new(epsilon: f64, delta: Pmf) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::Validation(format!(
                "contamination proportion epsilon = {epsilon} must lie in [0, 1)"
            )));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> &Pmf {
        &self.delta
    }
}

pub fn mixture_pmf(
    family: &ParametricFamily,
    theta: &[f64],
    spec: &ContaminationSpec,
) -> Result<Pmf> {
    let p = family.pmf(theta)?;
    p.check_same_support(&spec.delta)?;
    let eps = spec.epsilon;
    if eps == 0.0 {
        return Ok(p);
    }
    Pmf::new(
        p.probs()
            .iter()
            .zip(spec.delta.probs())
            .map(|(a, d)| (1.0 - eps) * a + eps * d)
            .collect(),
    )
}

/// Reads the enumeration budget from `ACRLB_BUDGET`, falling back to the
/// default when unset.
pub fn budget_from_env() -> Result<u64> {
    match std::env::var(BUDGET_ENV) {
        Ok(v) => v.trim().parse::<u64>().map_err(|_| {
            Error::Validation(format!("{BUDGET_ENV}={v:?} is not a non-negative integer"))
        }),
        Err(_) => Ok(DEFAULT_BUDGET),
    }
}

/// The i.i.d. extension of a family to length-n tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductModel {
    base: ParametricFamily,
    n: usize,
    budget: u64,
}

pub fn product_extend(family: &ParametricFamily, n: usize) -> Result<ProductModel> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    Ok(ProductModel {
        base: family.clone(),
        n,
        budget: DEFAULT_BUDGET,
    })
}

impl ProductModel {
    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn base(&self) -> &ParametricFamily {
        &self.base
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// mⁿ, saturating at `u128::MAX`.
    pub fn outcome_count(&self) -> u128 {
        let m = self.base.outcomes() as u128;
        (0..self.n).try_fold(1u128, |acc, _| acc.checked_mul(m)).unwrap_or(u128::MAX)
    }

    /// Number of joint outcomes, or `BudgetExceeded`.
    pub fn enumerable_count(&self) -> Result<usize> {
        let outcomes = self.outcome_count();
        if outcomes > self.budget as u128 {
            return Err(Error::BudgetExceeded {
                outcomes,
                budget: self.budget,
                cell: String::new(),
            });
        }
        Ok(outcomes as usize)
    }

    /// Writes the tuple with lexicographic rank `idx` (first coordinate most
    /// significant) into `out`.
    pub fn decode(&self, mut idx: usize, out: &mut [usize]) {
        let m = self.base.outcomes();
        for slot in out.iter_mut().rev() {
            *slot = idx % m;
            idx /= m;
        }
    }

    fn check_tuple(&self, x: &[usize]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::SupportMismatch {
                expected: self.n,
                actual: x.len(),
            });
        }
        let m = self.base.outcomes();
        if let Some(&bad) = x.iter().find(|&&v| v >= m) {
            return Err(Error::IndexOutOfRange { index: bad, dim: m });
        }
        Ok(())
    }

    pub fn joint_log_pmf(&self, theta: &[f64], x: &[usize]) -> Result<f64> {
        self.check_tuple(x)?;
        let tables = self.tables(theta)?;
        Ok(x.iter().map(|&v| tables.log_p[v]).sum())
    }

    pub fn joint_pmf(&self, theta: &[f64], x: &[usize]) -> Result<f64> {
        Ok(self.joint_log_pmf(theta, x)?.exp())
    }

    /// Σᵢ s(θ; xᵢ).
    pub fn joint_score(&self, theta: &[f64], x: &[usize]) -> Result<DVector<f64>> {
        self.check_tuple(x)?;
        let tables = self.tables(theta)?;
        let mut out = DVector::zeros(tables.k);
        tables.accumulate_score(x, out.as_mut_slice());
        Ok(out)
    }

    /// ∇_θ p(x) by the product rule, i.e. p(x) · joint score.
    pub fn joint_jacobian(&self, theta: &[f64], x: &[usize]) -> Result<DVector<f64>> {
        let p = self.joint_pmf(theta, x)?;
        Ok(self.joint_score(theta, x)? * p)
    }

    /// Per-symbol log-probabilities and scores used by enumeration.
    pub fn tables(&self, theta: &[f64]) -> Result<JointTables> {
        let p = self.base.pmf(theta)?;
        let s = self.base.score_matrix(theta)?;
        let k = self.base.dim();
        let m = self.base.outcomes();
        Ok(JointTables {
            m,
            n: self.n,
            k,
            log_p: p.probs().iter().map(|v| v.ln()).collect(),
            score: (0..m).flat_map(|x| (0..k).map(move |i| (x, i))).map(|(x, i)| s[(x, i)]).collect(),
        })
    }
}

/// Per-symbol quantities from which joint log-probabilities and scores are
/// assembled.
#[derive(Debug, Clone)]
pub struct JointTables {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub log_p: Vec<f64>,
    /// Row-major m×k.
    pub score: Vec<f64>,
}

impl JointTables {
    pub fn log_p_of(&self, x: &[usize]) -> f64 {
        x.iter().map(|&v| self.log_p[v]).sum()
    }

    /// Adds the joint score of `x` into `out`.
    pub fn accumulate_score(&self, x: &[usize], out: &mut [f64]) {
        for &v in x {
            for (o, s) in out.iter_mut().zip(&self.score[v * self.k..(v + 1) * self.k]) {
                *o += s;
            }
        }
    }

    /// Largest joint value of `weight · log p(x)` over all tuples.
    pub fn max_weighted_log_p(&self, weight: f64) -> f64 {
        let best = self
            .log_p
            .iter()
            .map(|l| weight * l)
            .fold(f64::NEG_INFINITY, f64::max);
        best * self.n as f64
    }
}

/// Three encodings of one tangent vector at p.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentRep {
    pub m_rep: Vec<f64>,
    pub e_rep: Vec<f64>,
    pub alpha_rep: Vec<f64>,
    pub alpha: f64,
}

impl TangentRep {
    /// Builds the e- and α-representations from an m-representation, which
    /// must sum to zero.
    pub fn from_m_rep(p: &Pmf, m_rep: Vec<f64>, alpha: f64) -> Result<Self> {
        crate::error::check_alpha(alpha)?;
        if m_rep.len() != p.len() {
            return Err(Error::SupportMismatch {
                expected: p.len(),
                actual: m_rep.len(),
            });
        }
        let total: f64 = m_rep.iter().sum();
        if total.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "m-representation sums to {total}, not 0"
            )));
        }
        let e_rep: Vec<f64> = m_rep.iter().zip(p.probs()).map(|(a, q)| a / q).collect();
        let alpha_rep = e_rep
            .iter()
            .zip(p.probs())
            .map(|(e, q)| q.powf(alpha) * e)
            .collect();
        Ok(Self {
            m_rep,
            e_rep,
            alpha_rep,
            alpha,
        })
    }
}

/// Representations of the coordinate basis vector ∂ᵢ (0-based `i`).
pub fn tangent_representations(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
    i: usize,
) -> Result<TangentRep> {
    let k = family.dim();
    if i >= k {
        return Err(Error::IndexOutOfRange { index: i, dim: k });
    }
    let p = family.pmf(theta)?;
    let jac = family.jacobian(theta)?;
    TangentRep::from_m_rep(&p, jac.column(i).iter().cloned().collect(), alpha)
}

/// Draws n i.i.d. outcomes from `pmf` using the stream keyed by `seed`.
pub fn sample_iid(pmf: &Pmf, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size must be at least 1".into()));
    }
    let dist = WeightedIndex::new(pmf.probs())
        .map_err(|e| Error::InvalidPmf(e.to_string()))?;
    let mut rng = rng::stream(seed);
    Ok((0..n).map(|_| dist.sample(&mut rng)).collect())
}
