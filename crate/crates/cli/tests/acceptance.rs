//! Acceptance criteria, one line each: `[PASS] Cn ...` or `[FAIL] Cn ...`.
//!
//! Runs without the libtest harness so the report is printed by a plain
//! `cargo test`. Exits nonzero when any criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use acrlb_core::bound::{
    bound_gap, iid_factorized_moments, joint_alpha_matrices, proposition1_check, tangency_residual,
    theorem1_check,
};
use acrlb_core::estimation::{bhhj_gradient, bhhj_objective, EstimatorFn};
use acrlb_core::experiments::{run_asymptotic_diagnostic, run_contamination_study, ExperimentConfig};
use acrlb_core::geometry::{
    alpha_fisher_matrix, bhhj_divergence, bregman_divergence, eguchi_fd_metric, kl_divergence,
    BregmanGenerator,
};
use acrlb_core::model::{product_extend, sample_iid};
use acrlb_core::numeric::max_relative_deviation;
use acrlb_core::{rng, ParametricFamily, Pmf};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bernoulli_grid() -> Vec<f64> {
    vec![0.1, 0.3, 0.5, 0.7, 0.9]
}

fn categorical_grid() -> Vec<Vec<f64>> {
    vec![
        vec![0.2, 0.3],
        vec![0.1, 0.6],
        vec![1.0 / 3.0, 1.0 / 3.0],
        vec![0.5, 0.25],
        vec![0.15, 0.15],
    ]
}

const ALPHAS: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn random_pmf(r: &mut impl Rng, m: usize) -> Pmf {
    let w: Vec<f64> = (0..m).map(|_| r.random_range(0.05..1.0)).collect();
    Pmf::from_weights(&w).unwrap()
}

fn c1_eguchi() -> Outcome {
    let b = ParametricFamily::bernoulli();
    let c = ParametricFamily::categorical(3).unwrap();
    let mut cases: Vec<(&ParametricFamily, Vec<f64>)> =
        bernoulli_grid().into_iter().map(|t| (&b, vec![t])).collect();
    cases.extend(categorical_grid().into_iter().map(|t| (&c, t)));
    let mut worst = 0.0_f64;
    for (family, theta) in &cases {
        for alpha in ALPHAS {
            let exact = alpha_fisher_matrix(family, theta, alpha).unwrap();
            let fd = eguchi_fd_metric(family, theta, alpha, None).unwrap();
            worst = worst.max(max_relative_deviation(&fd.entries, &exact.entries));
        }
    }
    outcome(worst <= 1e-5, format!("max rel deviation {worst:.3e} (tol 1e-5) over {} cells", cases.len() * 4))
}

fn c2_closed_form() -> Outcome {
    let b = ParametricFamily::bernoulli();
    let mut worst = 0.0_f64;
    let mut exact_at_zero = true;
    for t in bernoulli_grid() {
        for alpha in ALPHAS {
            let closed = t.powf(alpha - 1.0) + (1.0 - t).powf(alpha - 1.0);
            let g = alpha_fisher_matrix(&b, &[t], alpha).unwrap().entries[(0, 0)];
            worst = worst.max((g - closed).abs() / closed);
        }
        let g0 = alpha_fisher_matrix(&b, &[t], 0.0).unwrap().entries[(0, 0)];
        exact_at_zero &= g0 == 1.0 / (t * (1.0 - t));
    }
    outcome(
        worst <= 1e-12 && exact_at_zero,
        format!("max rel deviation {worst:.3e} (tol 1e-12); alpha=0 bit-exact: {exact_at_zero}"),
    )
}

fn c3_divergences() -> Outcome {
    let mut r = rng::stream(rng::derive_seed(2024, &[3]));
    let (mut half_sq, mut kl_ratio, mut bregman) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..20 {
        let m = 2 + i % 4;
        let p = random_pmf(&mut r, m);
        let q = random_pmf(&mut r, m);
        let b1 = bhhj_divergence(&p, &q, 1.0).unwrap();
        let sq: f64 = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0;
        half_sq = half_sq.max((b1 - sq).abs() / sq.max(1e-300));
        let kl = kl_divergence(&p, &q).unwrap();
        let small = bhhj_divergence(&p, &q, 1e-3).unwrap();
        kl_ratio = kl_ratio.max((small - kl).abs() / kl);
        for alpha in ALPHAS {
            let gen = BregmanGenerator::density_power(alpha).unwrap();
            let a = bregman_divergence(&p, &q, &gen).unwrap();
            let d = bhhj_divergence(&p, &q, alpha).unwrap();
            bregman = bregman.max((a - d).abs() / d.abs().max(1e-300));
        }
    }
    outcome(
        half_sq <= 1e-12 && kl_ratio <= 0.02 && bregman <= 1e-12,
        format!(
            "alpha=1 vs half squared distance {half_sq:.3e} (tol 1e-12); |B(1e-3)-KL|/KL {kl_ratio:.3e} (tol 0.02); bregman form {bregman:.3e} (tol 1e-12)"
        ),
    )
}

fn c4_escort_identity() -> Outcome {
    let mut r = rng::stream(rng::derive_seed(2024, &[4]));
    let mut worst = 0.0_f64;
    let mut count = 0;
    for m in 2..=4 {
        for _ in 0..50 {
            let p = random_pmf(&mut r, m);
            let a: Vec<f64> = (0..m).map(|_| r.random_range(-2.0..2.0)).collect();
            for alpha in ALPHAS {
                let (lhs, rhs) = theorem1_check(&p, &a, alpha).unwrap();
                worst = worst.max((lhs - rhs).abs() / lhs.abs());
                count += 1;
            }
        }
    }
    outcome(worst <= 1e-10, format!("max rel deviation {worst:.3e} (tol 1e-10) over {count} draws"))
}

fn c5_strict_inequality() -> Outcome {
    let b = ParametricFamily::bernoulli();
    let mean = EstimatorFn::sample_mean(&b);
    let gap = |theta: f64, alpha: f64, n: usize| {
        let joint = product_extend(&b, n).unwrap();
        bound_gap(&joint, &mean, &[theta], alpha).unwrap()
    };
    let (mut min_a, mut max_b, mut max_c) = (f64::INFINITY, 0.0_f64, 0.0_f64);
    for theta in [0.2, 0.3, 0.8] {
        for n in [2, 3, 5] {
            for alpha in [0.25, 0.5, 1.0] {
                min_a = min_a.min(gap(theta, alpha, n).gap[0][0]);
            }
            max_b = max_b.max(gap(theta, 0.0, n).gap_size());
        }
        for alpha in [-0.5, 0.0, 0.25, 0.5, 1.0, 2.0] {
            max_c = max_c.max(gap(theta, alpha, 1).gap_size());
        }
    }
    let r = gap(0.3, 0.5, 2);
    let (cov, bound, g) = (r.covariance[0][0], r.bound[0][0], r.gap[0][0]);
    let d_ok = (cov - 0.11956).abs() <= 1e-4 && (bound - 0.11106).abs() <= 1e-4 && (g - 0.00850).abs() <= 1e-4;
    outcome(
        min_a > 1e-4 && max_b <= 1e-12 && max_c <= 1e-12 && d_ok,
        format!(
            "(a) min gap {min_a:.4e} > 1e-4; (b) alpha=0 max |gap| {max_b:.2e}; (c) n=1 max |gap| {max_c:.2e}; (d) cov {cov:.5} bound {bound:.5} gap {g:.5}"
        ),
    )
}

fn c6_equality_iff_tangency() -> Outcome {
    let b = ParametricFamily::bernoulli();
    let mean = EstimatorFn::sample_mean(&b);
    let mut cells = 0;
    let mut mismatches = Vec::new();
    for theta in [0.2, 0.3, 0.8, 0.5] {
        for n in [1, 2, 3, 5] {
            let joint = product_extend(&b, n).unwrap();
            for alpha in [0.0, 0.25, 0.5, 1.0] {
                let r = bound_gap(&joint, &mean, &[theta], alpha).unwrap();
                let resid = tangency_residual(&joint, &mean, &[theta], alpha).unwrap();
                let equal = r.gap_size() <= 1e-10;
                let tangent = resid <= 1e-8;
                cells += 1;
                if equal != tangent {
                    mismatches.push(format!("(theta={theta}, alpha={alpha}, n={n})"));
                }
            }
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{} of {cells} cells disagree {}", mismatches.len(), mismatches.join(" ")),
    )
}

fn c7_asymptotic_identity() -> Outcome {
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
    for &(theta, alpha, n) in &cells {
        let joint = product_extend(&b, n).unwrap();
        let c = proposition1_check(&joint, &mean, &[theta], alpha).unwrap();
        worst = worst.max(c.deviation() / (1.0 + c.ordinary_cov.norm()));
    }
    let joint = product_extend(&b, 2).unwrap();
    let r = proposition1_check(&joint, &mean, &[0.5], 1.0).unwrap();
    let (v, inv) = (r.ordinary_cov[(0, 0)], r.inverse_information[(0, 0)]);
    let reference = (v - 0.125).abs() <= 1e-12 && (inv - 0.125).abs() <= 1e-12;
    outcome(
        worst <= 1e-10 && reference,
        format!("max scaled deviation {worst:.3e} (tol 1e-10) over {} cells; V={v} [I]^-1={inv} at (0.5, 1, 2)", cells.len()),
    )
}

fn c8_factorization() -> Outcome {
    let mut worst = 0.0_f64;
    let cases = [
        (ParametricFamily::bernoulli(), vec![0.3]),
        (ParametricFamily::categorical(3).unwrap(), vec![0.2, 0.3]),
    ];
    for (family, theta) in &cases {
        for n in 1..=10 {
            let joint = product_extend(family, n).unwrap();
            for alpha in [0.0, 0.5, 1.0] {
                let (g, k) = iid_factorized_moments(family, theta, alpha, n).unwrap();
                let m = joint_alpha_matrices(&joint, theta, alpha).unwrap();
                worst = worst
                    .max(max_relative_deviation(&g, &m.g))
                    .max(max_relative_deviation(&k, &m.k));
            }
        }
    }
    outcome(worst <= 1e-10, format!("max rel deviation {worst:.3e} (tol 1e-10)"))
}

fn c9_robustness() -> Outcome {
    let mut c = ExperimentConfig::new(ParametricFamily::bernoulli());
    c.thetas = vec![vec![0.2]];
    c.alphas = vec![0.0, 1.0];
    c.ns = vec![200];
    c.epsilons = vec![0.15];
    c.delta = Some(Pmf::new(vec![0.02, 0.98]).unwrap());
    c.trials = 500;
    c.seed = 20240901;
    let r = run_contamination_study(&c).unwrap();
    let a0 = r.aggregate(0, "bhhj(0)").unwrap();
    let a1 = r.aggregate(0, "bhhj(1)").unwrap();
    let (b0, b1) = (a0.bias[0].abs(), a1.bias[0].abs());
    let identical = r
        .records
        .iter()
        .filter(|t| t.estimator == "bhhj(1)")
        .zip(r.records.iter().filter(|t| t.estimator == "bhhj(0)"))
        .filter(|(x, y)| x.theta_hat == y.theta_hat)
        .count();
    outcome(
        b1 < b0 && a1.mse < a0.mse,
        format!(
            "|bias| alpha=1 {b1:.6e} vs alpha=0 {b0:.6e}; MSE {:.6e} vs {:.6e}; {identical}/500 fits bit-identical \
             (a two-point model contains every empirical distribution, so the BHHJ fit equals the MLE for every alpha)",
            a1.mse, a0.mse
        ),
    )
}

fn c10_classical_asymptotics() -> Outcome {
    let mut c = ExperimentConfig::new(ParametricFamily::bernoulli());
    c.thetas = vec![vec![0.3]];
    c.alphas = vec![0.0, 0.5];
    c.ns = vec![1000];
    c.trials = 2000;
    c.seed = 10;
    let r = run_asymptotic_diagnostic(&c).unwrap();
    let mle = r.aggregate(0, "mle").unwrap();
    let scaled = 1000.0 * mle.variance[0];
    let within = (scaled - 0.21).abs() <= 0.1 * 0.21;
    let table: Vec<String> = r
        .diagnostics
        .iter()
        .map(|d| {
            format!(
                "alpha={} n*cov={:.4} n*[I]^-1={:.4} sandwich={:.4}",
                d.alpha, d.mc_covariance[0][0], d.inverse_information[0][0], d.sandwich[0][0]
            )
        })
        .collect();
    outcome(
        within && r.diagnostics[0].check == Some(true),
        format!("n*Var(MLE) = {scaled:.4} vs 0.21 (tol 10%); {}", table.join("; ")),
    )
}

fn c11_gradient() -> Outcome {
    let mut r = rng::stream(rng::derive_seed(2024, &[11]));
    let families = [
        ParametricFamily::bernoulli(),
        ParametricFamily::categorical(3).unwrap(),
        ParametricFamily::categorical(4).unwrap(),
        ParametricFamily::binomial(5).unwrap(),
    ];
    let mut worst = 0.0_f64;
    for case in 0..100 {
        let family = &families[case % families.len()];
        let theta: Vec<f64> = loop {
            let p = random_pmf(&mut r, family.dim() + 1);
            let t = p.probs()[..family.dim()].to_vec();
            if family.boundary_distance(&t) > 0.05 {
                break t;
            }
        };
        let source = random_pmf(&mut r, family.outcomes());
        let n = r.random_range(5..60);
        let data = sample_iid(&source, n, r.random()).unwrap();
        let alpha = if case % 10 == 0 { 0.0 } else { r.random_range(-0.5..2.0) };
        let analytic = bhhj_gradient(family, &theta, &data, alpha).unwrap();
        let scale = analytic.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for i in 0..family.dim() {
            let h = 1e-5;
            let f = |d: f64| {
                let mut t = theta.clone();
                t[i] += d;
                bhhj_objective(family, &t, &data, alpha).unwrap()
            };
            // Richardson-extrapolated central difference.
            let d1 = (f(h) - f(-h)) / (2.0 * h);
            let d2 = (f(2.0 * h) - f(-2.0 * h)) / (4.0 * h);
            let fd = (4.0 * d1 - d2) / 3.0;
            worst = worst.max((fd - analytic[i]).abs() / scale.max(f64::MIN_POSITIVE));
        }
    }
    outcome(worst <= 1e-6, format!("max rel deviation {worst:.3e} (tol 1e-6) over 100 cases"))
}

fn run_cli(args: &[&str]) -> Vec<u8> {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out.csv");
    let status = Command::new(env!("CARGO_BIN_EXE_acrlb"))
        .args(args)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success(), "{args:?} exited with {status}");
    std::fs::read(&out).unwrap()
}

fn c12_determinism() -> Outcome {
    let sweep = ["sweep", "--model", "builtin:bernoulli", "--theta", "0.2,0.3,0.5", "--alpha", "0,0.5,1", "--n", "1,2,3,5,8"];
    let diagnose = [
        "diagnose", "--study", "contamination", "--model", "builtin:binomial:5", "--theta", "0.3", "--alpha", "0,0.5,1",
        "--n", "50", "--epsilon", "0,0.1", "--delta", "0.01,0.01,0.01,0.01,0.01,0.95", "--trials", "100", "--seed", "42",
    ];
    let asymptotic = [
        "diagnose", "--study", "asymptotic", "--model", "builtin:bernoulli", "--theta", "0.3", "--alpha", "0,0.5",
        "--n", "100", "--trials", "200", "--seed", "9",
    ];
    let mut mismatched = Vec::new();
    for (name, args) in [("sweep", &sweep[..]), ("diagnose contamination", &diagnose[..]), ("diagnose asymptotic", &asymptotic[..])] {
        let runs: Vec<Vec<u8>> = ["1", "1", "4", "8"]
            .iter()
            .map(|t| {
                let mut a = args.to_vec();
                a.extend(["--threads", t]);
                run_cli(&a)
            })
            .collect();
        if runs.iter().any(|r| r != &runs[0]) || runs[0].is_empty() {
            mismatched.push(name);
        }
    }
    outcome(
        mismatched.is_empty(),
        format!("byte-identical CSV across reruns and --threads 1/4/8; mismatches: {mismatched:?}"),
    )
}

type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("C1 eguchi oracle", Some(Duration::from_secs(1)), c1_eguchi),
        ("C2 closed-form metric", None, c2_closed_form),
        ("C3 divergence limits", None, c3_divergences),
        ("C4 escort variance identity", Some(Duration::from_secs(1)), c4_escort_identity),
        ("C5 strict inequality by enumeration", Some(Duration::from_secs(5)), c5_strict_inequality),
        ("C6 equality iff tangency", None, c6_equality_iff_tangency),
        ("C7 asymptotic covariance identity", None, c7_asymptotic_identity),
        ("C8 factorization oracle", None, c8_factorization),
        ("C9 robustness under contamination", Some(Duration::from_secs(30)), c9_robustness),
        ("C10 classical asymptotics", Some(Duration::from_secs(60)), c10_classical_asymptotics),
        ("C11 gradient check", None, c11_gradient),
        ("C12 determinism", None, c12_determinism),
    ];
    let mut failures = 0;
    for (name, limit, check) in criteria {
        let started = Instant::now();
        let o = check();
        let elapsed = started.elapsed();
        let in_time = limit.is_none_or(|l| elapsed < l);
        let pass = o.pass && in_time;
        if !pass {
            failures += 1;
        }
        let limit_text = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
        println!(
            "[{}] {name}: {} [{:.3}s{limit_text}]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
