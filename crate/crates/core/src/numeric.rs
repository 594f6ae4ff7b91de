//! Summation and dense linear algebra helpers shared by the geometry, bound
//! and estimation modules.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Largest condition number accepted before a symmetric solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Outcomes handled per work item in [`sum_over`].
const BLOCK: usize = 4096;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Compensated sum of a slice.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut acc = CompensatedSum::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sums `width` per-outcome terms over outcomes `0..count`.
///
/// `term(idx, out)` writes the terms of outcome `idx` into `out`. Outcomes are
/// split into fixed-size blocks that may run on any number of threads; block
/// partials are combined in block order, so the result does not depend on the
/// thread count.
pub fn sum_over<F>(count: usize, width: usize, term: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    sum_over_with(count, width, || (), |idx, _, out| term(idx, out))
}

/// [`sum_over`] with a per-block scratch value built by `scratch`.
pub fn sum_over_with<S, I, F>(count: usize, width: usize, scratch: I, term: F) -> Vec<f64>
where
    I: Fn() -> S + Sync,
    F: Fn(usize, &mut S, &mut [f64]) + Sync,
{
    let blocks = count.div_ceil(BLOCK);
    let partials: Vec<Vec<CompensatedSum>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![CompensatedSum::default(); width];
            let mut buf = vec![0.0; width];
            let mut state = scratch();
            let end = ((b + 1) * BLOCK).min(count);
            for idx in b * BLOCK..end {
                buf.iter_mut().for_each(|v| *v = 0.0);
                term(idx, &mut state, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    a.add(*v);
                }
            }
            acc
        })
        .collect();

    let mut total = vec![CompensatedSum::default(); width];
    for block in &partials {
        for (t, p) in total.iter_mut().zip(block) {
            t.add(p.sum);
            t.add(p.carry);
        }
    }
    total.iter().map(CompensatedSum::value).collect()
}

/// Ratio of extreme eigenvalues of a symmetric matrix (infinite if not PD).
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let eig = a.clone().symmetric_eigen().eigenvalues;
    let max = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 || !min.is_finite() || !max.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Smallest eigenvalue of the symmetric part of `a`.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = symmetrize(a);
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Inverse of a symmetric positive-definite matrix via Cholesky, refusing
/// matrices whose condition number exceeds [`MAX_CONDITION`].
pub fn spd_inverse(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(a);
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = symmetrize(a)
        .cholesky()
        .ok_or(Error::IllConditioned { condition })?;
    Ok(symmetrize(&chol.inverse()))
}

/// Solves `a x = b` for symmetric positive-definite `a` with the same guard.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let condition = condition_number(a);
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    let chol = symmetrize(a)
        .cholesky()
        .ok_or(Error::IllConditioned { condition })?;
    Ok(chol.solve(b))
}

/// `max |a - b| / max(|b|, tiny)` over matching entries.
pub fn max_relative_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b.iter())
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_cancelled_terms() {
        let values = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(values), 2.0);
        assert_eq!(values.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn sum_over_is_thread_count_independent() {
        let f = |i: usize, out: &mut [f64]| {
            out[0] = (i as f64 * 0.37).sin();
            out[1] = 1.0 / (1.0 + i as f64);
        };
        let serial = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sum_over(50_000, 2, f));
        let parallel = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sum_over(50_000, 2, f));
        assert_eq!(serial[0].to_bits(), parallel[0].to_bits());
        assert_eq!(serial[1].to_bits(), parallel[1].to_bits());
    }

    #[test]
    fn spd_inverse_rejects_singular() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(spd_inverse(&a), Err(Error::IllConditioned { .. })));
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(matches!(spd_inverse(&b), Err(Error::IllConditioned { .. })));
    }

    #[test]
    fn spd_inverse_matches_known_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let inv = spd_inverse(&a).unwrap();
        let id = &a * &inv;
        assert!((id - DMatrix::identity(2, 2)).norm() < 1e-14);
    }
}
