//! The generalized Cramér–Rao bound and its equality diagnostics, evaluated
//! by exhaustive enumeration of the joint outcome space 𝒳ⁿ.
//!
//! For an estimator θ̂ unbiased under p_θ,
//!
//! ```text
//! Cov_esc[θ̂]  ⪰  (1 / Σ_y p_θ(y)^(1−α)) · [Gₙ⁽ᵅ⁾(θ)]⁻¹
//! ```
//!
//! where the covariance is taken under the joint escort distribution
//! ∝ p_θ(x)^(1−α) and Gₙ⁽ᵅ⁾ = E_θ[p^α ∇log p ∇log pᵀ] over the joint model.
//! Equality holds exactly when the centred estimator lies in the span of the
//! α-represented coordinate basis p^α ∂ᵢlog p.
//!
//! All quantities are computed under the clean model p_θ. Joint
//! probabilities are assembled in log space and every enumeration sum is
//! compensated and combined in a fixed block order.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_alpha, Error, Result};
use crate::estimation::{exact_bias, EstimatorFn};
use crate::geometry::{differential_norm, escort};
use crate::model::{ParametricFamily, Pmf, ProductModel};
use crate::numeric::{self, spd_inverse};

/// Bias norm above which [`bound_gap`] refuses an estimator.
pub const UNBIASED_TOL: f64 = 1e-10;

/// Gap size (max abs entry) at or below which the bound counts as attained.
pub const EQUALITY_TOL: f64 = 1e-10;

/// Joint-model matrices: Gₙ, Kₙ = Var_θ[p^α ∇log p] and Iₙ = Gₙ Kₙ⁻¹ Gₙ.
#[derive(Debug, Clone, PartialEq)]
pub struct JointMoments {
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub info: DMatrix<f64>,
}

fn unpack(values: &[f64], offset: usize, k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| values[offset + i * k + j])
}

fn check_estimator(joint: &ProductModel, estimator: &EstimatorFn) -> Result<()> {
    if estimator.family() != joint.base() {
        return Err(Error::InvalidArgument(format!(
            "estimator {} targets {}, not {}",
            estimator.name(),
            estimator.family().name(),
            joint.base().name()
        )));
    }
    Ok(())
}

/// Gₙ⁽ᵅ⁾, Kₙ⁽ᵅ⁾ and Iₙ⁽ᵅ⁾ by enumeration.
pub fn joint_alpha_matrices(joint: &ProductModel, theta: &[f64], alpha: f64) -> Result<JointMoments> {
    check_alpha(alpha)?;
    let tables = joint.tables(theta)?;
    let count = joint.enumerable_count()?;
    let k = tables.k;
    let n = joint.n();
    // Layout: G (k²) | E[p^α s] (k) | E[p^(2α) s sᵀ] (k²).
    let sums = numeric::sum_over_with(
        count,
        2 * k * k + k,
        || (vec![0usize; n], vec![0.0; k]),
        |idx, (x, s), out| {
            joint.decode(idx, x);
            s.iter_mut().for_each(|v| *v = 0.0);
            tables.accumulate_score(x, s);
            let lp = tables.log_p_of(x);
            let w1 = ((1.0 + alpha) * lp).exp();
            let w2 = ((1.0 + 2.0 * alpha) * lp).exp();
            for i in 0..k {
                for j in 0..k {
                    out[i * k + j] = w1 * s[i] * s[j];
                    out[k * k + k + i * k + j] = w2 * s[i] * s[j];
                }
                out[k * k + i] = w1 * s[i];
            }
        },
    );
    let g = numeric::symmetrize(&unpack(&sums, 0, k));
    let mean = DVector::from_fn(k, |i, _| sums[k * k + i]);
    let second = numeric::symmetrize(&unpack(&sums, k * k + k, k));
    let kmat = second - &mean * mean.transpose();
    let info = &g * spd_inverse(&kmat)? * &g;
    Ok(JointMoments {
        g,
        k: kmat,
        info: numeric::symmetrize(&info),
    })
}

/// Single-observation moments E[p^a], E[p^a s sᵀ], E[p^a s] for a = α, 2α.
#[derive(Debug, Clone)]
struct SingleMoments {
    c: f64,
    j1: DMatrix<f64>,
    mu: DVector<f64>,
    d: f64,
    j2: DMatrix<f64>,
    nu: DVector<f64>,
}

fn single_moments(family: &ParametricFamily, theta: &[f64], alpha: f64) -> Result<SingleMoments> {
    check_alpha(alpha)?;
    let p = family.pmf(theta)?;
    let s = family.score_matrix(theta)?;
    let k = family.dim();
    let probs = p.probs();
    let moment = |power: f64| {
        let w: Vec<f64> = probs.iter().map(|q| q.powf(1.0 + power)).collect();
        let scalar = numeric::compensated_sum(w.iter().cloned());
        let vector = DVector::from_fn(k, |i, _| {
            numeric::compensated_sum(w.iter().enumerate().map(|(x, wx)| wx * s[(x, i)]))
        });
        let matrix = DMatrix::from_fn(k, k, |i, j| {
            numeric::compensated_sum(w.iter().enumerate().map(|(x, wx)| wx * s[(x, i)] * s[(x, j)]))
        });
        (scalar, matrix, vector)
    };
    let (c, j1, mu) = moment(alpha);
    let (d, j2, nu) = moment(2.0 * alpha);
    Ok(SingleMoments { c, j1, mu, d, j2, nu })
}

/// (Gₙ, Kₙ) from single-observation moments via the i.i.d. factorization
///
/// ```text
/// Gₙ = n c^(n−1) J₁ + n(n−1) c^(n−2) μμᵀ
/// Kₙ = n d^(n−1) J₂ + n(n−1) d^(n−2) ννᵀ − n² c^(2(n−1)) μμᵀ
/// ```
///
/// with c = E[p^α], J₁ = E[p^α s sᵀ], μ = E[p^α s] and d, J₂, ν the same
/// with 2α. Independent of the enumeration path.
pub fn iid_factorized_moments(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
    n: usize,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    let sm = single_moments(family, theta, alpha)?;
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    let cross = |base: f64, v: &DVector<f64>| {
        if n >= 2 {
            v * v.transpose() * (pairs * base.powi(n as i32 - 2))
        } else {
            DMatrix::zeros(v.len(), v.len())
        }
    };
    let g = &sm.j1 * (nf * sm.c.powi(n as i32 - 1)) + cross(sm.c, &sm.mu);
    let k = &sm.j2 * (nf * sm.d.powi(n as i32 - 1)) + cross(sm.d, &sm.nu)
        - &sm.mu * sm.mu.transpose() * (nf * nf * sm.c.powi(2 * (n as i32 - 1)));
    Ok((g, k))
}

/// n·[Iₙ⁽ᵅ⁾]⁻¹ from the factorized moments, with the common factors
/// c^(n−1) and d^(n−1) carried in log space so large n does not underflow.
/// The result is infinite when (d / c²)^(n−1) overflows.
pub fn scaled_inverse_information(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
    n: usize,
) -> Result<DMatrix<f64>> {
    if n == 0 {
        return Err(Error::InvalidArgument("sample size n must be at least 1".into()));
    }
    let sm = single_moments(family, theta, alpha)?;
    let nf = n as f64;
    let pairs = nf * (nf - 1.0);
    // Gₙ = c^(n−1) Ĝ,  Kₙ = d^(n−1) K̃,  [Iₙ]⁻¹ = (d/c²)^(n−1) Ĝ⁻¹ K̃ Ĝ⁻¹.
    let g_hat = &sm.j1 * nf + &sm.mu * sm.mu.transpose() * (pairs / sm.c);
    let ratio = ((nf - 1.0) * (2.0 * sm.c.ln() - sm.d.ln())).exp();
    let k_tilde = &sm.j2 * nf + &sm.nu * sm.nu.transpose() * (pairs / sm.d)
        - &sm.mu * sm.mu.transpose() * (nf * nf * ratio);
    let g_inv = spd_inverse(&g_hat)?;
    let core = numeric::symmetrize(&(&g_inv * k_tilde * &g_inv));
    let scale = ((nf - 1.0) * (sm.d.ln() - 2.0 * sm.c.ln())).exp();
    Ok(core * (scale * nf))
}

/// [G₁ K₁⁻¹ G₁]⁻¹ = G₁⁻¹ K₁ G₁⁻¹ for one observation.
pub fn single_observation_sandwich(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
) -> Result<DMatrix<f64>> {
    let (g, k) = iid_factorized_moments(family, theta, alpha, 1)?;
    let g_inv = spd_inverse(&g)?;
    Ok(numeric::symmetrize(&(&g_inv * k * &g_inv)))
}

/// Σ_y p_θ(y)^(1−α) over 𝒳ⁿ together with Gₙ⁽ᵅ⁾.
fn escort_mass_and_metric(
    joint: &ProductModel,
    theta: &[f64],
    alpha: f64,
) -> Result<(f64, DMatrix<f64>)> {
    check_alpha(alpha)?;
    let tables = joint.tables(theta)?;
    let count = joint.enumerable_count()?;
    let k = tables.k;
    let n = joint.n();
    let sums = numeric::sum_over_with(
        count,
        1 + k * k,
        || (vec![0usize; n], vec![0.0; k]),
        |idx, (x, s), out| {
            joint.decode(idx, x);
            s.iter_mut().for_each(|v| *v = 0.0);
            tables.accumulate_score(x, s);
            let lp = tables.log_p_of(x);
            out[0] = ((1.0 - alpha) * lp).exp();
            let w = ((1.0 + alpha) * lp).exp();
            for i in 0..k {
                for j in 0..k {
                    out[1 + i * k + j] = w * s[i] * s[j];
                }
            }
        },
    );
    Ok((sums[0], numeric::symmetrize(&unpack(&sums, 1, k))))
}

/// (1 / Σ_y p_θ(y)^(1−α)) · [Gₙ⁽ᵅ⁾]⁻¹.
pub fn generalized_crlb(joint: &ProductModel, theta: &[f64], alpha: f64) -> Result<DMatrix<f64>> {
    let (mass, g) = escort_mass_and_metric(joint, theta, alpha)?;
    Ok(spd_inverse(&g)? / mass)
}

/// Escort mean and covariance of θ̂.
struct EscortMoments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

fn escort_moments(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
    alpha: f64,
) -> Result<EscortMoments> {
    check_alpha(alpha)?;
    check_estimator(joint, estimator)?;
    let tables = joint.tables(theta)?;
    let count = joint.enumerable_count()?;
    let k = tables.k;
    let n = joint.n();
    let e = 1.0 - alpha;
    let shift = tables.max_weighted_log_p(e);
    let weight = |x: &[usize]| (e * tables.log_p_of(x) - shift).exp();

    let first = numeric::sum_over_with(count, 1 + k, || vec![0usize; n], |idx, x, out| {
        joint.decode(idx, x);
        let w = weight(x);
        out[0] = w;
        for (o, v) in out[1..].iter_mut().zip(estimator.evaluate(x)) {
            *o = w * v;
        }
    });
    let mass = first[0];
    let mean = DVector::from_fn(k, |i, _| first[1 + i] / mass);

    let second = numeric::sum_over_with(count, k * k, || vec![0usize; n], |idx, x, out| {
        joint.decode(idx, x);
        let w = weight(x);
        let c: Vec<f64> = estimator.evaluate(x).iter().zip(mean.iter()).map(|(v, m)| v - m).collect();
        for i in 0..k {
            for j in 0..k {
                out[i * k + j] = w * c[i] * c[j];
            }
        }
    });
    let cov = numeric::symmetrize(&unpack(&second, 0, k)) / mass;
    Ok(EscortMoments { mean, cov })
}

/// Covariance of θ̂ under the joint escort distribution ∝ p_θ(x)^(1−α).
pub fn escort_covariance_exact(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
    alpha: f64,
) -> Result<DMatrix<f64>> {
    Ok(escort_moments(joint, estimator, theta, alpha)?.cov)
}

/// Ordinary covariance of θ̂ under p_θ (the α = 0 escort).
pub fn ordinary_covariance_exact(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
) -> Result<DMatrix<f64>> {
    escort_covariance_exact(joint, estimator, theta, 0.0)
}

/// Loewner comparison of the escort covariance against the bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub family: String,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub n: usize,
    pub estimator: String,
    pub covariance: Vec<Vec<f64>>,
    pub bound: Vec<Vec<f64>>,
    pub gap: Vec<Vec<f64>>,
    pub min_gap_eigenvalue: f64,
    pub psd: bool,
    pub tangency_residual: f64,
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
}

impl BoundReport {
    /// Largest absolute entry of the gap matrix.
    pub fn gap_size(&self) -> f64 {
        self.gap.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Whether the bound is attained within [`EQUALITY_TOL`].
    pub fn is_equality(&self) -> bool {
        self.gap_size() <= EQUALITY_TOL
    }
}

/// Tolerance 1e-10·(1 + ‖gap‖_F) for the PSD test.
pub fn psd_tolerance(gap: &DMatrix<f64>) -> f64 {
    1e-10 * (1.0 + gap.norm())
}

/// Gap = escort covariance − bound for an unbiased estimator.
pub fn bound_gap(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
    alpha: f64,
) -> Result<BoundReport> {
    check_estimator(joint, estimator)?;
    let bias = exact_bias(joint, estimator, theta)?;
    if bias.norm() > UNBIASED_TOL {
        return Err(Error::BiasedEstimator {
            bias_norm: bias.norm(),
        });
    }
    let cov = escort_covariance_exact(joint, estimator, theta, alpha)?;
    let bound = generalized_crlb(joint, theta, alpha)?;
    let gap = &cov - &bound;
    let min_eig = numeric::min_eigenvalue(&gap);
    let residual = tangency_residual(joint, estimator, theta, alpha)?;
    Ok(BoundReport {
        family: joint.base().name(),
        theta: theta.to_vec(),
        alpha,
        n: joint.n(),
        estimator: estimator.name().to_string(),
        covariance: rows(&cov),
        bound: rows(&bound),
        min_gap_eigenvalue: min_eig,
        psd: min_eig >= -psd_tolerance(&gap),
        gap: rows(&gap),
        tangency_residual: residual,
    })
}

/// Distance of the centred estimator from the α-tangent space of the joint
/// model.
///
/// Each component bᵢ = θ̂ᵢ − E_esc[θ̂ᵢ] is projected by weighted least
/// squares onto span{p^α ∂ⱼlog p}, with weights p^(1−α) (the weight p^(−α)
/// under E_p that defines α-tangency). The result is the escort-weighted
/// RMS residual sqrt(Σᵢ E_esc[rᵢ²]), computed directly from the residual
/// vectors rather than by subtracting variances.
pub fn tangency_residual(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
    alpha: f64,
) -> Result<f64> {
    let moments = escort_moments(joint, estimator, theta, alpha)?;
    let tables = joint.tables(theta)?;
    let count = joint.enumerable_count()?;
    let k = tables.k;
    let n = joint.n();
    let e = 1.0 - alpha;
    let shift = tables.max_weighted_log_p(e);
    let centred = |x: &[usize]| -> Vec<f64> {
        estimator
            .evaluate(x)
            .iter()
            .zip(moments.mean.iter())
            .map(|(v, m)| v - m)
            .collect()
    };

    // Normal equations: (Σ p^(1+α) s sᵀ) cᵢ = Σ p s bᵢ, both sides scaled
    // by the same exp(−shift).
    let normal = numeric::sum_over_with(
        count,
        1 + k * k + k * k,
        || (vec![0usize; n], vec![0.0; k]),
        |idx, (x, s), out| {
            joint.decode(idx, x);
            s.iter_mut().for_each(|v| *v = 0.0);
            tables.accumulate_score(x, s);
            let lp = tables.log_p_of(x);
            out[0] = (e * lp - shift).exp();
            let w = ((1.0 + alpha) * lp - shift).exp();
            let v = (lp - shift).exp();
            let b = centred(x);
            for i in 0..k {
                for j in 0..k {
                    out[1 + i * k + j] = w * s[i] * s[j];
                    // Column i of the right-hand side belongs to component i.
                    out[1 + k * k + j * k + i] = v * s[j] * b[i];
                }
            }
        },
    );
    let mass = normal[0];
    let gram = numeric::symmetrize(&unpack(&normal, 1, k));
    let rhs = unpack(&normal, 1 + k * k, k);
    let coeffs = spd_inverse(&gram)? * rhs;

    let resid = numeric::sum_over_with(
        count,
        1,
        || (vec![0usize; n], vec![0.0; k]),
        |idx, (x, s), out| {
            joint.decode(idx, x);
            s.iter_mut().for_each(|v| *v = 0.0);
            tables.accumulate_score(x, s);
            let lp = tables.log_p_of(x);
            let w = (e * lp - shift).exp();
            let pa = (alpha * lp).exp();
            let b = centred(x);
            let mut total = 0.0;
            for i in 0..k {
                let fit: f64 = (0..k).map(|j| pa * s[j] * coeffs[(j, i)]).sum();
                let r = b[i] - fit;
                total += r * r;
            }
            out[0] = w * total;
        },
    );
    Ok((resid[0] / mass).max(0.0).sqrt())
}

/// Both sides of the escort-variance identity on the full simplex:
/// lhs = V_esc[A], rhs = (1/Σ p^(1−α)) ∇E[A]ᵀ [G⁽ᵅ⁾]⁻¹ ∇E[A] with
/// ∂ᵢE[A] = A(i) − A(m−1) in mixture coordinates.
pub fn theorem1_check(p: &Pmf, a: &[f64], alpha: f64) -> Result<(f64, f64)> {
    check_alpha(alpha)?;
    let m = p.len();
    if a.len() != m {
        return Err(Error::SupportMismatch {
            expected: m,
            actual: a.len(),
        });
    }
    let esc = escort(p, alpha)?;
    let mean = numeric::compensated_sum(esc.probs().iter().zip(a).map(|(q, v)| q * v));
    let lhs = numeric::compensated_sum(
        esc.probs().iter().zip(a).map(|(q, v)| q * (v - mean) * (v - mean)),
    );

    let family = ParametricFamily::categorical(m)?;
    let theta = &p.probs()[..m - 1];
    let grad: Vec<f64> = a[..m - 1].iter().map(|v| v - a[m - 1]).collect();
    let norm = differential_norm(&family, theta, alpha, &grad)?;
    let mass = numeric::compensated_sum(p.probs().iter().map(|q| q.powf(1.0 - alpha)));
    Ok((lhs, norm / mass))
}

/// Outcome of the asymptotic-covariance identity check.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposition1Check {
    pub ordinary_cov: DMatrix<f64>,
    pub inverse_information: DMatrix<f64>,
    pub equality_config: bool,
}

impl Proposition1Check {
    /// ‖V_θ[θ̂] − [Iₙ]⁻¹‖_F.
    pub fn deviation(&self) -> f64 {
        (&self.ordinary_cov - &self.inverse_information).norm()
    }
}

/// Compares V_θ[θ̂] with [Iₙ⁽ᵅ⁾]⁻¹ = Gₙ⁻¹ Kₙ Gₙ⁻¹; the two agree whenever the
/// generalized bound is attained.
pub fn proposition1_check(
    joint: &ProductModel,
    estimator: &EstimatorFn,
    theta: &[f64],
    alpha: f64,
) -> Result<Proposition1Check> {
    let report = bound_gap(joint, estimator, theta, alpha)?;
    let ordinary_cov = ordinary_covariance_exact(joint, estimator, theta)?;
    let moments = joint_alpha_matrices(joint, theta, alpha)?;
    let g_inv = spd_inverse(&moments.g)?;
    let inverse_information = numeric::symmetrize(&(&g_inv * &moments.k * &g_inv));
    Ok(Proposition1Check {
        ordinary_cov,
        inverse_information,
        equality_config: report.is_equality(),
    })
}
