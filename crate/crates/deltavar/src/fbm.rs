//! Exact simulation of iterated-integral fractional Brownian motion.
//!
//! `J^m B^H` is the `m`-fold time integral of fractional Brownian motion
//! with Hurst exponent `H`; its covariance is evaluated in closed form by
//! [`crate::constants::iterated_fbm_covariance`]. Sampling is exact: the
//! covariance matrix on the requested grid is factored once (LLᵀ) and each
//! path is the factor applied to fresh standard normals, so the sampled
//! vector has exactly the target Gaussian law — no discretization error,
//! at cubic setup cost in the number of grid points.

use crate::constants::iterated_fbm_covariance;
use crate::error::{Error, Result};
use crate::findiff::GridFunction;
use crate::linalg::PackedCholesky;
use crate::rng::Replication;

/// Hard cap on exact-simulation grid sizes: the packed covariance of
/// `2^15` points already occupies ~4 GiB and a dense factorization beyond
/// that is impractical.
pub const MAX_EXACT_GRID: usize = 1 << 15;

/// Exact sampler for `J^m B^H` on a fixed uniform grid: factor once,
/// sample many.
pub struct IteratedFbmSampler {
    m: u32,
    hurst: f64,
    a: f64,
    b: f64,
    n_points: usize,
    factor: PackedCholesky,
}

impl IteratedFbmSampler {
    /// Build the sampler for the grid `t_k = a + k·(b−a)/(n_points−1)`.
    /// Requires `0 ≤ a < b` (the process starts from zero at time 0) and
    /// `2 ≤ n_points ≤ 2^15`.
    pub fn new(m: u32, hurst: f64, a: f64, b: f64, n_points: usize) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::invalid(format!(
                "simulation window must satisfy 0 ≤ a < b < ∞, got [{a}, {b}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::invalid("need at least 2 grid points"));
        }
        if n_points > MAX_EXACT_GRID {
            return Err(Error::invalid(format!(
                "exact simulation supports at most {MAX_EXACT_GRID} grid points, \
                 got {n_points} (the dense covariance factorization does not scale \
                 further)"
            )));
        }
        let h = (b - a) / (n_points - 1) as f64;
        let mut packed = Vec::with_capacity(n_points * (n_points + 1) / 2);
        for i in 0..n_points {
            let ti = a + i as f64 * h;
            for j in 0..=i {
                let tj = a + j as f64 * h;
                packed.push(iterated_fbm_covariance(m, hurst, ti, tj)?);
            }
        }
        let factor = PackedCholesky::factor(packed, n_points)?;
        Ok(Self {
            m,
            hurst,
            a,
            b,
            n_points,
            factor,
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Draw one exact path. Consumes exactly `n_points` normals from the
    /// replication stream, in grid order.
    pub fn sample(&self, rng: &mut Replication) -> Result<GridFunction> {
        let mut z = vec![0.0; self.n_points];
        rng.fill_standard_normal(&mut z);
        let mut out = vec![0.0; self.n_points];
        self.factor.multiply(&z, &mut out);
        GridFunction::new(out, self.a, self.b)
    }

    /// Draw one path and return its `order`-th forward differences at
    /// index stride `stride` (step `h·stride`), as a grid function over
    /// the difference start times. Requires `order > m` (so the returned
    /// sequence is the stationary differenced process) and a grid with at
    /// least one full stencil.
    pub fn sample_differences(
        &self,
        rng: &mut Replication,
        order: usize,
        stride: usize,
    ) -> Result<GridFunction> {
        if order as u64 <= self.m as u64 {
            return Err(Error::invalid(format!(
                "differences of order {order} of a {}-fold integrated path are not \
                 stationary; need order > m",
                self.m
            )));
        }
        if stride < 1 {
            return Err(Error::invalid("index stride must be at least 1"));
        }
        let span = order
            .checked_mul(stride)
            .filter(|&s| s < self.n_points)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "difference span order·stride = {order}·{stride} does not fit in \
                     {} grid points",
                    self.n_points
                ))
            })?;
        let path = self.sample(rng)?;
        let coeffs = crate::findiff::difference_coefficients(order)?;
        let count = self.n_points - span;
        let values: Vec<f64> = (0..count)
            .map(|k| crate::findiff::apply_stencil(path.values(), &coeffs, k, stride))
            .collect();
        if count < 2 {
            return Err(Error::invalid(
                "fewer than two difference values fit on the grid",
            ));
        }
        let h = path.h();
        GridFunction::new(values, self.a, self.a + (count - 1) as f64 * h)
    }
}
