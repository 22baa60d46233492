//! Dense symmetric positive-semidefinite factorization in packed storage,
//! sized for exact Gaussian path simulation (thousands of grid points).
//!
//! The lower triangle is stored row-major: entry `(i, j)`, `j ≤ i`, lives
//! at `i·(i+1)/2 + j`. A LLᵀ factor of an `n`-point covariance then needs
//! `n(n+1)/2` doubles and row-contiguous access in the forward multiply.

use crate::error::{Error, Result};

/// Index of entry `(i, j)`, `j ≤ i`, in packed row-major lower storage.
#[inline]
pub fn packed_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

/// Lower-triangular factor `L` with `L·Lᵀ` equal to the supplied
/// symmetric positive-semidefinite matrix, in packed row-major storage.
///
/// Exactly singular covariances (a process pinned to zero at the origin,
/// repeated time points) are handled by a semidefinite pivoting rule:
/// a pivot within `±tol` of zero zeroes its whole column, where
/// `tol = 1e−14·trace/n`. Pivots below `−tol` mean the matrix is not
/// positive semidefinite at working precision; the factorization then
/// retries with diagonal jitter `1e−14·trace/n` and `1e−12·trace/n`
/// before failing.
#[derive(Debug, Clone)]
pub struct PackedCholesky {
    n: usize,
    l: Vec<f64>,
}

/// Outcome of one in-place factorization attempt.
enum Attempt {
    Done,
    /// Index and value of a pivot below `−tol`.
    NegativePivot(usize, f64),
}

impl PackedCholesky {
    /// Factor a packed symmetric PSD matrix (lower triangle, row-major).
    /// `packed.len()` must equal `n·(n+1)/2`.
    pub fn factor(packed: Vec<f64>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot factor an empty matrix"));
        }
        if packed.len() != n * (n + 1) / 2 {
            return Err(Error::invalid(format!(
                "packed length {} does not match n(n+1)/2 = {} for n = {n}",
                packed.len(),
                n * (n + 1) / 2
            )));
        }
        if let Some(bad) = packed.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "matrix entry at packed index {bad} is not finite"
            )));
        }
        let trace: f64 = (0..n).map(|i| packed[packed_index(i, i)]).sum();
        if trace < 0.0 {
            return Err(Error::numerical(format!(
                "matrix trace is negative ({trace}); covariance matrices have \
                 nonnegative diagonals"
            )));
        }
        let scale = (trace / n as f64).max(f64::MIN_POSITIVE);
        let tol = 1e-14 * scale;

        let mut last_failure = (0usize, 0.0f64);
        for &jitter_factor in &[0.0, 1e-14, 1e-12] {
            let mut work = packed.clone();
            if jitter_factor > 0.0 {
                let jitter = jitter_factor * scale;
                for i in 0..n {
                    work[packed_index(i, i)] += jitter;
                }
            }
            match Self::factor_in_place(&mut work, n, tol) {
                Attempt::Done => return Ok(Self { n, l: work }),
                Attempt::NegativePivot(i, d) => last_failure = (i, d),
            }
        }
        Err(Error::numerical(format!(
            "matrix is not positive semidefinite: pivot {} at index {} remains \
             negative beyond the {tol:.3e} tolerance even after diagonal jitter",
            last_failure.1, last_failure.0
        )))
    }

    /// Row-by-row (Banachiewicz) factorization, overwriting the packed
    /// lower triangle with `L`.
    fn factor_in_place(a: &mut [f64], n: usize, tol: f64) -> Attempt {
        for i in 0..n {
            let row_i = packed_index(i, 0);
            for j in 0..=i {
                let row_j = packed_index(j, 0);
                let mut sum = a[row_i + j];
                for k in 0..j {
                    sum -= a[row_i + k] * a[row_j + k];
                }
                if i == j {
                    if sum > tol {
                        a[row_i + j] = sum.sqrt();
                    } else if sum >= -tol {
                        // Semidefinite direction: zero pivot, zero column.
                        a[row_i + j] = 0.0;
                    } else {
                        return Attempt::NegativePivot(i, sum);
                    }
                } else {
                    let piv = a[row_j + j];
                    a[row_i + j] = if piv == 0.0 { 0.0 } else { sum / piv };
                }
            }
        }
        Attempt::Done
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `out = L·z`. Both slices must have length `n`. The dot products run
    /// in a fixed four-accumulator order, so results are identical on every
    /// platform and run.
    pub fn multiply(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.n, "input length must equal matrix size");
        assert_eq!(out.len(), self.n, "output length must equal matrix size");
        for i in 0..self.n {
            let row = &self.l[packed_index(i, 0)..packed_index(i, 0) + i + 1];
            out[i] = dot_unrolled(row, &z[..=i]);
        }
    }

    /// Entry `(i, j)` of the factor, `j ≤ i`.
    #[cfg(test)]
    fn entry(&self, i: usize, j: usize) -> f64 {
        self.l[packed_index(i, j)]
    }
}

/// Deterministic dot product with four independent accumulators combined
/// in a fixed order (faster than a serial loop, still bit-reproducible).
#[inline]
fn dot_unrolled(a: &[f64], b: &[f64]) -> f64 {
    let len = a.len().min(b.len());
    let mut acc = [0.0f64; 4];
    let chunks = len / 4;
    for c in 0..chunks {
        let base = 4 * c;
        acc[0] += a[base] * b[base];
        acc[1] += a[base + 1] * b[base + 1];
        acc[2] += a[base + 2] * b[base + 2];
        acc[3] += a[base + 3] * b[base + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..len {
        tail += a[k] * b[k];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}
