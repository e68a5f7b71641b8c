//! Small numeric helpers shared by the sampler and generators.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::{Error, Result};

/// Rows per reduction chunk. Fixed so parallel sums are bit-identical for any
/// worker count.
pub(crate) const CHUNK: usize = 2048;

/// Sum of `f(i)` over `0..n`, reduced in fixed-size chunks, in chunk order.
pub(crate) fn chunked_sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let partials: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(&f).sum())
        .collect();
    partials.into_iter().sum()
}

/// Vector-valued [`chunked_sum`]: `Σ_i f(i)` with each term of length `dim`.
pub(crate) fn chunked_vec_sum<F>(n: usize, dim: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let partials: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; dim];
            for i in c * CHUNK..((c + 1) * CHUNK).min(n) {
                f(i, &mut acc);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; dim];
    for p in partials {
        for (o, v) in out.iter_mut().zip(p) {
            *o += v;
        }
    }
    out
}

/// Cholesky factor of a symmetric positive definite matrix, retrying once with
/// `jitter_scale · trace/q` added to the diagonal.
pub(crate) fn cholesky_with_jitter(m: DMatrix<f64>, jitter_scale: f64) -> Result<Cholesky<f64, Dyn>> {
    match Cholesky::new(m.clone()) {
        Some(c) => Ok(c),
        None => {
            let q = m.nrows().max(1) as f64;
            let jitter = jitter_scale * m.trace().abs() / q;
            let mut m = m;
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
            Cholesky::new(m).ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
        }
    }
}

/// `mean + L^{-T} z` where `L L' = Q`: a draw from `N(mean, Q^{-1})`.
pub(crate) fn draw_from_precision(chol: &Cholesky<f64, Dyn>, mean: &DVector<f64>, z: DVector<f64>) -> DVector<f64> {
    let l = chol.l_dirty();
    let x = l
        .tr_solve_lower_triangular(&z)
        .expect("Cholesky factor has a nonzero diagonal");
    mean + x
}

/// Raw pointer view of a slice for writes to provably disjoint index sets
/// from several threads.
#[derive(Clone, Copy)]
pub(crate) struct DisjointSlice {
    ptr: *mut f64,
    len: usize,
}

unsafe impl Send for DisjointSlice {}
unsafe impl Sync for DisjointSlice {}

impl DisjointSlice {
    pub(crate) fn new(slice: &mut [f64]) -> Self {
        Self { ptr: slice.as_mut_ptr(), len: slice.len() }
    }

    /// # Safety
    /// No other thread may access index `i` concurrently, and the underlying
    /// slice must outlive every call.
    #[inline]
    pub(crate) unsafe fn sub(&self, i: usize, v: f64) {
        assert!(i < self.len);
        unsafe { *self.ptr.add(i) -= v };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_sum_matches_serial() {
        let n = 3 * CHUNK + 17;
        let f = |i: usize| (i as f64).sin();
        let serial: f64 = (0..n.div_ceil(CHUNK))
            .map(|c| (c * CHUNK..((c + 1) * CHUNK).min(n)).map(f).sum::<f64>())
            .sum();
        assert_eq!(chunked_sum(n, f), serial);
        let v = chunked_vec_sum(n, 2, |i, acc| {
            acc[0] += 1.0;
            acc[1] += i as f64;
        });
        assert_eq!(v, vec![n as f64, (n * (n - 1) / 2) as f64]);
    }

    #[test]
    fn precision_draw_has_expected_covariance_action() {
        let q = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let chol = cholesky_with_jitter(q.clone(), 1e-10).unwrap();
        let mean = DVector::from_vec(vec![1.0, -1.0]);
        // x - mean = L^{-T} z  =>  L' (x - mean) = z
        let z = DVector::from_vec(vec![0.3, -0.7]);
        let x = draw_from_precision(&chol, &mean, z.clone());
        let back = chol.l().transpose() * (x - mean);
        assert!((back - z).norm() < 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_with_jitter(m, 1e-10).is_ok());
        let neg = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]);
        assert!(cholesky_with_jitter(neg, 1e-10).is_err());
    }
}
