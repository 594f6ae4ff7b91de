//! Divergences and the Riemannian metrics they induce.
//!
//! The α-Fisher matrix of a family is
//!
//! ```text
//! g⁽ᵅ⁾ᵢⱼ(θ) = Σₓ p_θ(x)^(α−1) ∂ᵢp_θ(x) ∂ⱼp_θ(x) = E_θ[p^α ∂ᵢlog p ∂ⱼlog p]
//! ```
//!
//! which is the negated mixed second derivative of the density power
//! divergence at the diagonal. α = 0 is the Fisher–Rao metric and always
//! goes through the closed-form classical path. All logarithms are natural.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_alpha, Error, Result};
use crate::model::{ParametricFamily, Pmf, TangentRep};
use crate::numeric;

/// A k×k information matrix evaluated at (θ, α).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricMatrix {
    #[serde(serialize_with = "serialize_matrix")]
    pub entries: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub alpha: f64,
    pub family: String,
}

fn serialize_matrix<S: serde::Serializer>(m: &DMatrix<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().cloned().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

impl MetricMatrix {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        numeric::min_eigenvalue(&self.entries)
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        let scale = self.entries.amax().max(f64::MIN_POSITIVE);
        (&self.entries - self.entries.transpose()).amax() <= rel_tol * scale
    }

    pub fn inverse(&self) -> Result<DMatrix<f64>> {
        numeric::spd_inverse(&self.entries)
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A convex generator φ on (0, ∞) with its first two derivatives.
#[derive(Clone)]
pub struct BregmanGenerator {
    name: String,
    phi: ScalarFn,
    phi_prime: ScalarFn,
    phi_second: ScalarFn,
}

impl fmt::Debug for BregmanGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BregmanGenerator").field("name", &self.name).finish()
    }
}

impl BregmanGenerator {
    /// Custom generator; φ″ must be positive on (0, 1].
    pub fn new(
        name: impl Into<String>,
        phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi_prime: impl Fn(f64) -> f64 + Send + Sync + 'static,
        phi_second: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        let g = Self {
            name: name.into(),
            phi: Arc::new(phi),
            phi_prime: Arc::new(phi_prime),
            phi_second: Arc::new(phi_second),
        };
        // Spot-check convexity on (0, 1].
        for i in 1..=64 {
            let t = i as f64 / 64.0;
            let v = (g.phi_second)(t);
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "generator {}: phi''({t}) = {v} is not positive",
                    g.name
                )));
            }
        }
        Ok(g)
    }

    /// φ(t) = (t^(1+α) − t) / (α(1+α)), whose Bregman divergence is the
    /// density power divergence.
    pub fn density_power(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if alpha == 0.0 {
            return Err(Error::AlphaZero);
        }
        let c = alpha * (1.0 + alpha);
        Self::new(
            format!("density_power({alpha})"),
            move |t| (t.powf(1.0 + alpha) - t) / c,
            move |t| ((1.0 + alpha) * t.powf(alpha) - 1.0) / c,
            move |t| t.powf(alpha - 1.0),
        )
    }

    /// φ(t) = t log t, the Kullback–Leibler generator.
    pub fn kullback_leibler() -> Self {
        Self::new("kullback_leibler", |t| t * t.ln(), |t| t.ln() + 1.0, |t| 1.0 / t)
            .expect("t log t is convex")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn phi(&self, t: f64) -> f64 {
        (self.phi)(t)
    }

    pub fn phi_prime(&self, t: f64) -> f64 {
        (self.phi_prime)(t)
    }

    pub fn phi_second(&self, t: f64) -> f64 {
        (self.phi_second)(t)
    }
}

/// I(p, q) = Σ p log(p / q), in nats.
pub fn kl_divergence(p: &Pmf, q: &Pmf) -> Result<f64> {
    p.check_same_support(q)?;
    Ok(numeric::compensated_sum(
        p.probs().iter().zip(q.probs()).map(|(a, b)| a * (a / b).ln()),
    ))
}

/// Density power divergence B⁽ᵅ⁾(p, q) with data-side `p` and model-side
/// `q`:
///
/// ```text
/// Σₓ q^(1+α)/(1+α) − p q^α/α + p^(1+α)/(α(1+α))
/// ```
pub fn bhhj_divergence(p: &Pmf, q: &Pmf, alpha: f64) -> Result<f64> {
    p.check_same_support(q)?;
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return Err(Error::AlphaZero);
    }
    Ok(numeric::compensated_sum(p.probs().iter().zip(q.probs()).map(
        |(&a, &b)| {
            b.powf(1.0 + alpha) / (1.0 + alpha) - a * b.powf(alpha) / alpha
                + a.powf(1.0 + alpha) / (alpha * (1.0 + alpha))
        },
    )))
}

/// D_φ(p, q) = Σₓ φ(p) − φ(q) − φ′(q)(p − q).
pub fn bregman_divergence(p: &Pmf, q: &Pmf, gen: &BregmanGenerator) -> Result<f64> {
    p.check_same_support(q)?;
    Ok(numeric::compensated_sum(p.probs().iter().zip(q.probs()).map(
        |(&a, &b)| gen.phi(a) - gen.phi(b) - gen.phi_prime(b) * (a - b),
    )))
}

fn metric(family: &ParametricFamily, theta: &[f64], alpha: f64, entries: DMatrix<f64>) -> MetricMatrix {
    MetricMatrix {
        entries,
        theta: theta.to_vec(),
        alpha,
        family: family.name(),
    }
}

/// Fisher information E_θ[s sᵀ], via each family's closed form.
pub fn fisher_matrix(family: &ParametricFamily, theta: &[f64]) -> Result<MetricMatrix> {
    Ok(metric(family, theta, 0.0, family.fisher_closed_form(theta)?))
}

/// Σₓ w(p(x)) ∂p ∂pᵀ for a per-outcome weight on the Jacobian outer product.
fn weighted_jacobian_gram(
    family: &ParametricFamily,
    theta: &[f64],
    weight: impl Fn(f64) -> f64,
) -> Result<DMatrix<f64>> {
    let p = family.pmf(theta)?;
    let jac = family.jacobian(theta)?;
    let k = family.dim();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = numeric::compensated_sum(
                p.probs()
                    .iter()
                    .enumerate()
                    .map(|(x, &px)| weight(px) * jac[(x, i)] * jac[(x, j)]),
            );
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(g)
}

/// α-Fisher matrix Σₓ p^(α−1) ∂ᵢp ∂ⱼp; α = 0 returns [`fisher_matrix`].
pub fn alpha_fisher_matrix(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
) -> Result<MetricMatrix> {
    check_alpha(alpha)?;
    if alpha == 0.0 {
        return fisher_matrix(family, theta);
    }
    let g = weighted_jacobian_gram(family, theta, |p| p.powf(alpha - 1.0))?;
    Ok(metric(family, theta, alpha, g))
}

/// E_θ[p φ″(p) s sᵀ]: the metric of a general Bregman divergence.
///
/// The returned matrix carries `alpha = NaN` since it is not indexed by α.
pub fn bregman_fisher_matrix(
    family: &ParametricFamily,
    theta: &[f64],
    gen: &BregmanGenerator,
) -> Result<MetricMatrix> {
    let p = family.pmf(theta)?;
    let s = family.score_matrix(theta)?;
    let k = family.dim();
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v = numeric::compensated_sum(p.probs().iter().enumerate().map(|(x, &px)| {
                px * (px * gen.phi_second(px)) * s[(x, i)] * s[(x, j)]
            }));
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(metric(family, theta, f64::NAN, g))
}

/// Default central-difference step for coordinate value `t`.
pub fn default_fd_step(t: f64) -> f64 {
    (f64::EPSILON.cbrt() * (1.0 + t.abs())).max(1e-4)
}

/// Metric recovered numerically from the divergence itself:
/// −∂²/∂θᵢ∂θ′ⱼ D(p_θ, p_θ′) at θ′ = θ, by central mixed differences, with D
/// the density power divergence (Kullback–Leibler when α = 0).
///
/// `step = None` uses [`default_fd_step`] per coordinate.
pub fn eguchi_fd_metric(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
    step: Option<f64>,
) -> Result<MetricMatrix> {
    check_alpha(alpha)?;
    family.check_domain(theta)?;
    let k = family.dim();
    let steps: Vec<f64> = match step {
        Some(h) if h > 0.0 && h.is_finite() => vec![h; k],
        Some(h) => return Err(Error::InvalidArgument(format!("step {h} must be positive"))),
        None => theta.iter().map(|&t| default_fd_step(t)).collect(),
    };
    let hmax = steps.iter().cloned().fold(0.0, f64::max);
    let distance = family.boundary_distance(theta);
    if distance <= 2.0 * hmax {
        return Err(Error::StepTooLarge { step: hmax, distance });
    }

    let divergence = |a: &[f64], b: &[f64]| -> Result<f64> {
        let (p, q) = (family.pmf(a)?, family.pmf(b)?);
        if alpha == 0.0 {
            kl_divergence(&p, &q)
        } else {
            bhhj_divergence(&p, &q, alpha)
        }
    };
    let shifted = |i: usize, sign: f64| -> Vec<f64> {
        let mut t = theta.to_vec();
        t[i] += sign * steps[i];
        t
    };

    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            let (ip, im) = (shifted(i, 1.0), shifted(i, -1.0));
            let (jp, jm) = (shifted(j, 1.0), shifted(j, -1.0));
            let mixed = divergence(&ip, &jp)? - divergence(&ip, &jm)?
                - divergence(&im, &jp)?
                + divergence(&im, &jm)?;
            g[(i, j)] = -mixed / (4.0 * steps[i] * steps[j]);
        }
    }
    Ok(metric(family, theta, alpha, g))
}

/// Escort distribution p^(1−α) / Σ p^(1−α).
pub fn escort(p: &Pmf, alpha: f64) -> Result<Pmf> {
    if alpha == 0.0 {
        return Ok(p.clone());
    }
    let e = 1.0 - alpha;
    let logs: Vec<f64> = p.probs().iter().map(|v| e * v.ln()).collect();
    let shift = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - shift).exp()).collect();
    let total = numeric::compensated_sum(w.iter().cloned());
    Pmf::new(w.iter().map(|v| v / total).collect())
}

/// ⟨X, Y⟩_p = Σₓ X⁽ᵐ⁾(x) Y⁽ᵅ⁾(x).
pub fn metric_inner_product(x: &TangentRep, y: &TangentRep, p: &Pmf) -> Result<f64> {
    check_tangent(x, p)?;
    check_tangent(y, p)?;
    if x.alpha != y.alpha {
        return Err(Error::AlphaMismatch(x.alpha, y.alpha));
    }
    Ok(numeric::compensated_sum(
        x.m_rep.iter().zip(&y.alpha_rep).map(|(a, b)| a * b),
    ))
}

/// The same inner product written as E_p[X⁽ᵉ⁾ Y⁽ᵅ⁾].
pub fn metric_inner_product_expectation(x: &TangentRep, y: &TangentRep, p: &Pmf) -> Result<f64> {
    check_tangent(x, p)?;
    check_tangent(y, p)?;
    if x.alpha != y.alpha {
        return Err(Error::AlphaMismatch(x.alpha, y.alpha));
    }
    Ok(numeric::compensated_sum(
        p.probs()
            .iter()
            .zip(x.e_rep.iter().zip(&y.alpha_rep))
            .map(|(q, (a, b))| q * a * b),
    ))
}

fn check_tangent(t: &TangentRep, p: &Pmf) -> Result<()> {
    for len in [t.m_rep.len(), t.e_rep.len(), t.alpha_rep.len()] {
        if len != p.len() {
            return Err(Error::SupportMismatch {
                expected: p.len(),
                actual: len,
            });
        }
    }
    Ok(())
}

/// |E_p[p^(−α) a]|; zero exactly on α-representations of tangent vectors.
pub fn alpha_tangent_residual(a: &[f64], p: &Pmf, alpha: f64) -> Result<f64> {
    if a.len() != p.len() {
        return Err(Error::SupportMismatch {
            expected: p.len(),
            actual: a.len(),
        });
    }
    Ok(numeric::compensated_sum(
        p.probs().iter().zip(a).map(|(q, v)| q.powf(1.0 - alpha) * v),
    )
    .abs())
}

/// ‖(df)_p‖² = ∇fᵀ [G⁽ᵅ⁾]⁻¹ ∇f.
pub fn differential_norm(
    family: &ParametricFamily,
    theta: &[f64],
    alpha: f64,
    grad_f: &[f64],
) -> Result<f64> {
    if grad_f.len() != family.dim() {
        return Err(Error::SupportMismatch {
            expected: family.dim(),
            actual: grad_f.len(),
        });
    }
    let g = alpha_fisher_matrix(family, theta, alpha)?;
    let v = DVector::from_column_slice(grad_f);
    let w = numeric::spd_solve(&g.entries, &v)?;
    Ok(v.dot(&w).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tangent_representations;
    use approx::assert_relative_eq;

    fn pmf(v: &[f64]) -> Pmf {
        Pmf::new(v.to_vec()).unwrap()
    }

    #[test]
    fn kl_examples() {
        let p = pmf(&[0.5, 0.5]);
        let q = pmf(&[0.25, 0.75]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert_relative_eq!(kl_divergence(&p, &q).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 0.143841036225890, max_relative = 1e-12);
        assert!((kl_divergence(&p, &q).unwrap() - kl_divergence(&q, &p).unwrap()).abs() > 1e-3);
        assert!(kl_divergence(&p, &pmf(&[0.2, 0.3, 0.5])).is_err());
    }

    #[test]
    fn bhhj_examples() {
        let p = pmf(&[0.5, 0.5]);
        assert!(bhhj_divergence(&p, &p, 0.7).unwrap().abs() < 1e-15);
        let q = pmf(&[0.8, 0.2]);
        assert_relative_eq!(bhhj_divergence(&p, &q, 1.0).unwrap(), 0.09, max_relative = 1e-12);
        let q = pmf(&[0.25, 0.75]);
        let kl = kl_divergence(&p, &q).unwrap();
        assert!((bhhj_divergence(&p, &q, 1e-3).unwrap() - kl).abs() <= 0.01 * kl);
        assert_eq!(bhhj_divergence(&p, &q, 0.0), Err(Error::AlphaZero));
        assert!(matches!(bhhj_divergence(&p, &q, -1.0), Err(Error::AlphaExcluded(_))));
        assert!(bhhj_divergence(&p, &q, -0.5).unwrap() > 0.0);
    }

    #[test]
    fn bregman_generators() {
        let p = pmf(&[0.5, 0.5]);
        let q = pmf(&[0.8, 0.2]);
        let g1 = BregmanGenerator::density_power(1.0).unwrap();
        assert!(bregman_divergence(&p, &p, &g1).unwrap().abs() < 1e-16);
        assert_relative_eq!(bregman_divergence(&p, &q, &g1).unwrap(), 0.09, max_relative = 1e-12);

        let q = pmf(&[0.25, 0.75]);
        let kl = BregmanGenerator::kullback_leibler();
        assert_relative_eq!(
            bregman_divergence(&p, &q, &kl).unwrap(),
            kl_divergence(&p, &q).unwrap(),
            max_relative = 1e-12
        );
        assert!(BregmanGenerator::new("concave", |t| -t * t, |t| -2.0 * t, |_| -2.0).is_err());
    }

    #[test]
    fn fisher_examples() {
        let b = ParametricFamily::bernoulli();
        assert_eq!(fisher_matrix(&b, &[0.5]).unwrap().entries[(0, 0)], 4.0);
        assert_relative_eq!(fisher_matrix(&b, &[0.2]).unwrap().entries[(0, 0)], 6.25, max_relative = 1e-15);
        for t in [0.1, 0.3, 0.5, 0.9] {
            assert_eq!(
                alpha_fisher_matrix(&b, &[t], 0.0).unwrap().entries,
                fisher_matrix(&b, &[t]).unwrap().entries
            );
        }
    }

    #[test]
    fn alpha_fisher_examples() {
        let b = ParametricFamily::bernoulli();
        assert_relative_eq!(alpha_fisher_matrix(&b, &[0.5], 1.0).unwrap().entries[(0, 0)], 2.0, max_relative = 1e-15);
        let v = alpha_fisher_matrix(&b, &[0.3], 0.5).unwrap().entries[(0, 0)];
        assert_relative_eq!(v, 0.7f64.powf(-0.5) + 0.3f64.powf(-0.5), max_relative = 1e-14);
        assert_relative_eq!(v, 3.020970467684948, max_relative = 1e-12);
        assert!(matches!(alpha_fisher_matrix(&b, &[0.3], -1.0), Err(Error::AlphaExcluded(_))));
        assert!(alpha_fisher_matrix(&b, &[0.3], -0.5).is_ok());
    }

    #[test]
    fn bregman_fisher_examples() {
        let b = ParametricFamily::bernoulli();
        let g1 = BregmanGenerator::density_power(1.0).unwrap();
        assert_relative_eq!(bregman_fisher_matrix(&b, &[0.5], &g1).unwrap().entries[(0, 0)], 2.0, max_relative = 1e-14);
        let kl = BregmanGenerator::kullback_leibler();
        for t in [0.2, 0.5, 0.7] {
            assert_relative_eq!(
                bregman_fisher_matrix(&b, &[t], &kl).unwrap().entries[(0, 0)],
                fisher_matrix(&b, &[t]).unwrap().entries[(0, 0)],
                max_relative = 1e-13
            );
        }
        // Unit weight p·φ″(p) ≡ 1 only for φ″ = 1/t: a different generator
        // gives a different metric.
        let sq = BregmanGenerator::new("square", |t| t * t / 2.0, |t| t, |_| 1.0).unwrap();
        assert!(
            (bregman_fisher_matrix(&b, &[0.3], &sq).unwrap().entries[(0, 0)]
                - fisher_matrix(&b, &[0.3]).unwrap().entries[(0, 0)])
            .abs()
                > 1.0
        );
    }

    #[test]
    fn eguchi_examples() {
        let b = ParametricFamily::bernoulli();
        let g = eguchi_fd_metric(&b, &[0.5], 1.0, Some(1e-4)).unwrap();
        assert_relative_eq!(g.entries[(0, 0)], 2.0, max_relative = 1e-5);

        let c = ParametricFamily::categorical(3).unwrap();
        let fd = eguchi_fd_metric(&c, &[0.2, 0.3], 0.5, None).unwrap();
        let exact = alpha_fisher_matrix(&c, &[0.2, 0.3], 0.5).unwrap();
        assert!(numeric::max_relative_deviation(&fd.entries, &exact.entries) <= 1e-5);

        let fd0 = eguchi_fd_metric(&c, &[0.2, 0.3], 0.0, None).unwrap();
        let f0 = fisher_matrix(&c, &[0.2, 0.3]).unwrap();
        assert!(numeric::max_relative_deviation(&fd0.entries, &f0.entries) <= 1e-5);

        assert!(matches!(
            eguchi_fd_metric(&b, &[0.01], 1.0, Some(0.01)),
            Err(Error::StepTooLarge { .. })
        ));
        assert!(matches!(
            eguchi_fd_metric(&b, &[1.5], 1.0, None),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn escort_examples() {
        let p = pmf(&[0.7, 0.3]);
        assert_eq!(escort(&p, 0.0).unwrap(), p);
        let u = escort(&p, 1.0).unwrap();
        assert_relative_eq!(u.probs()[0], 0.5, max_relative = 1e-15);
        let e = escort(&p, 0.5).unwrap();
        assert_relative_eq!(e.probs()[0], 0.604356, epsilon = 1e-6);
        assert_relative_eq!(e.probs()[1], 0.395644, epsilon = 1e-6);
        let s = 0.7f64.sqrt() + 0.3f64.sqrt();
        assert_relative_eq!(e.probs()[0], 0.7f64.sqrt() / s, max_relative = 1e-14);
    }

    #[test]
    fn escort_fixed_points() {
        let uniform = Pmf::uniform(4).unwrap();
        let skewed = pmf(&[0.1, 0.2, 0.3, 0.4]);
        for alpha in [-0.5, 0.25, 1.0, 2.0] {
            let e = escort(&uniform, alpha).unwrap();
            for v in e.probs() {
                assert_relative_eq!(*v, 0.25, max_relative = 1e-14);
            }
            let e = escort(&skewed, alpha).unwrap();
            let moved = e.probs().iter().zip(skewed.probs()).any(|(a, b)| (a - b).abs() > 1e-6);
            assert!(moved, "alpha {alpha}");
        }
        assert_eq!(escort(&skewed, 0.0).unwrap(), skewed);
    }

    #[test]
    fn inner_product_examples() {
        let b = ParametricFamily::bernoulli();
        let p = b.pmf(&[0.5]).unwrap();
        let t = tangent_representations(&b, &[0.5], 1.0, 0).unwrap();
        assert_relative_eq!(metric_inner_product(&t, &t, &p).unwrap(), 2.0, max_relative = 1e-15);
        let zero = TangentRep::from_m_rep(&p, vec![0.0, 0.0], 1.0).unwrap();
        assert_eq!(metric_inner_product(&zero, &t, &p).unwrap(), 0.0);
        let other = tangent_representations(&b, &[0.5], 0.5, 0).unwrap();
        assert!(matches!(metric_inner_product(&t, &other, &p), Err(Error::AlphaMismatch(..))));
    }

    #[test]
    fn inner_product_reproduces_metric_entries() {
        let c = ParametricFamily::categorical(4).unwrap();
        let theta = [0.1, 0.35, 0.2];
        let p = c.pmf(&theta).unwrap();
        for alpha in [-0.5, 0.25, 1.0, 2.0] {
            let g = alpha_fisher_matrix(&c, &theta, alpha).unwrap();
            for i in 0..3 {
                let xi = tangent_representations(&c, &theta, alpha, i).unwrap();
                for j in 0..3 {
                    let yj = tangent_representations(&c, &theta, alpha, j).unwrap();
                    let a = metric_inner_product(&xi, &yj, &p).unwrap();
                    let b = metric_inner_product_expectation(&xi, &yj, &p).unwrap();
                    let sym = metric_inner_product(&yj, &xi, &p).unwrap();
                    assert_relative_eq!(a, g.entries[(i, j)], max_relative = 1e-12);
                    assert_relative_eq!(a, b, max_relative = 1e-12);
                    assert_relative_eq!(a, sym, max_relative = 1e-12);
                }
            }
        }
    }

    #[test]
    fn tangent_residual_examples() {
        let p = pmf(&[0.2, 0.5, 0.3]);
        let t = TangentRep::from_m_rep(&p, vec![0.4, -0.1, -0.3], 0.7).unwrap();
        assert!(alpha_tangent_residual(&t.alpha_rep, &p, 0.7).unwrap() <= 1e-12);
        assert_relative_eq!(alpha_tangent_residual(&[3.0; 3], &p, 0.0).unwrap(), 3.0, max_relative = 1e-14);

        // A − E_α[A] is always an α-representation.
        let a = [1.3, -0.4, 2.2];
        for alpha in [0.25, 0.5, 1.0, 2.0] {
            let esc = escort(&p, alpha).unwrap();
            let mean = esc.expect(&a);
            let centred: Vec<f64> = a.iter().map(|v| v - mean).collect();
            assert!(alpha_tangent_residual(&centred, &p, alpha).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn differential_norm_examples() {
        let b = ParametricFamily::bernoulli();
        assert_eq!(differential_norm(&b, &[0.5], 1.0, &[0.0]).unwrap(), 0.0);
        assert_relative_eq!(differential_norm(&b, &[0.5], 1.0, &[1.0]).unwrap(), 0.5, max_relative = 1e-14);
        let c = ParametricFamily::categorical(3).unwrap();
        let inv = alpha_fisher_matrix(&c, &[0.2, 0.3], 0.5).unwrap().inverse().unwrap();
        assert_relative_eq!(
            differential_norm(&c, &[0.2, 0.3], 0.5, &[1.0, 0.0]).unwrap(),
            inv[(0, 0)],
            max_relative = 1e-12
        );
    }

    #[test]
    fn metric_is_symmetric_positive_definite() {
        let c = ParametricFamily::categorical(4).unwrap();
        for alpha in [-0.5, 0.0, 0.25, 1.0, 2.0] {
            let g = alpha_fisher_matrix(&c, &[0.1, 0.2, 0.3], alpha).unwrap();
            assert!(g.is_symmetric(1e-10));
            assert!(g.min_eigenvalue() > 0.0);
        }
    }
}
