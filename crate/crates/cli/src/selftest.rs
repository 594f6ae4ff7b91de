//! Built-in oracle suites run by `acrlb selftest`.

use acrlb_core::bound::{iid_factorized_moments, joint_alpha_matrices, proposition1_check, theorem1_check};
use acrlb_core::estimation::EstimatorFn;
use acrlb_core::geometry::{alpha_fisher_matrix, eguchi_fd_metric};
use acrlb_core::model::product_extend;
use acrlb_core::numeric::max_relative_deviation;
use acrlb_core::{rng, ParametricFamily, Pmf, Result};
use rand::Rng;

pub struct Check {
    pub name: &'static str,
    pub worst: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

pub fn theta_grid(family: &ParametricFamily) -> Vec<Vec<f64>> {
    if family.dim() == 1 {
        [0.1, 0.3, 0.5, 0.7, 0.9].iter().map(|t| vec![*t]).collect()
    } else {
        vec![
            vec![0.2, 0.3],
            vec![0.1, 0.6],
            vec![1.0 / 3.0, 1.0 / 3.0],
            vec![0.5, 0.25],
            vec![0.15, 0.15],
        ]
    }
}

fn families() -> Vec<ParametricFamily> {
    vec![ParametricFamily::bernoulli(), ParametricFamily::categorical(3).expect("m = 3")]
}

fn eguchi() -> Result<Check> {
    let mut worst = 0.0_f64;
    for family in families() {
        for theta in theta_grid(&family) {
            for alpha in [0.25, 0.5, 1.0, 2.0] {
                let exact = alpha_fisher_matrix(&family, &theta, alpha)?;
                let fd = eguchi_fd_metric(&family, &theta, alpha, None)?;
                worst = worst.max(max_relative_deviation(&fd.entries, &exact.entries));
            }
        }
    }
    Ok(Check {
        name: "eguchi metric matches closed form",
        worst,
        tolerance: 1e-5,
    })
}

fn escort_identity() -> Result<Check> {
    let mut r = rng::stream(rng::derive_seed(0x5e1f, &[1]));
    let mut worst = 0.0_f64;
    for m in 2..=4 {
        for _ in 0..50 {
            let w: Vec<f64> = (0..m).map(|_| r.random_range(0.05..1.0)).collect();
            let p = Pmf::from_weights(&w)?;
            let a: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
            for alpha in [0.25, 0.5, 1.0, 2.0] {
                let (lhs, rhs) = theorem1_check(&p, &a, alpha)?;
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(f64::MIN_POSITIVE));
            }
        }
    }
    Ok(Check {
        name: "escort variance identity",
        worst,
        tolerance: 1e-10,
    })
}

fn factorization() -> Result<Check> {
    let mut worst = 0.0_f64;
    for family in families() {
        let theta = theta_grid(&family)[1].clone();
        let max_n = if family.dim() == 1 { 10 } else { 6 };
        for n in 1..=max_n {
            let joint = product_extend(&family, n)?;
            for alpha in [0.0, 0.5, 1.0] {
                let (g, k) = iid_factorized_moments(&family, &theta, alpha, n)?;
                let m = joint_alpha_matrices(&joint, &theta, alpha)?;
                worst = worst
                    .max(max_relative_deviation(&g, &m.g))
                    .max(max_relative_deviation(&k, &m.k));
            }
        }
    }
    Ok(Check {
        name: "i.i.d. factorization matches enumeration",
        worst,
        tolerance: 1e-10,
    })
}

fn asymptotic_identity() -> Result<Check> {
    let b = ParametricFamily::bernoulli();
    let mean = EstimatorFn::sample_mean(&b);
    let mut cells = Vec::new();
    for alpha in [0.5, 1.0, 2.0] {
        for n in 2..=8 {
            cells.push((0.5, alpha, n));
        }
    }
    for theta in [0.2, 0.5, 0.8] {
        for n in [2, 5, 10] {
            cells.push((theta, 0.0, n));
        }
    }
    let mut worst = 0.0_f64;
    for (theta, alpha, n) in cells {
        let joint = product_extend(&b, n)?;
        let c = proposition1_check(&joint, &mean, &[theta], alpha)?;
        worst = worst.max(c.deviation() / (1.0 + c.ordinary_cov.norm()));
    }
    Ok(Check {
        name: "covariance equals inverse information at equality",
        worst,
        tolerance: 1e-10,
    })
}

pub fn run_all() -> Result<Vec<Check>> {
    Ok(vec![eguchi()?, escort_identity()?, factorization()?, asymptotic_identity()?])
}
