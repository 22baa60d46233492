//! Grid functions on uniform partitions and the statistics built from
//! their higher-order forward differences: the Δ-power variation
//! `V_{q,M,s,N}` and a dyadic Hölder–Zygmund seminorm diagnostic, plus a
//! cumulative trapezoid integrator.
//!
//! Conventions fixed across the crate:
//!
//! - A grid of `len` points over `[a, b]` has `N = len − 1` intervals and
//!   step `h = (b − a)/N`. All statistics are indexed by intervals `N`.
//! - The `M`-th forward difference at grid index `k` is
//!   `Δ_h^M f(t_k) = Σ_{j=0}^{M} (−1)^{M−j} C(M,j) f[k+j]`, summed in
//!   ascending `j` order so results are bit-reproducible.

use crate::error::{Error, Result};
use crate::special::{binomial, KahanSum, MAX_BINOMIAL_N};

/// Real values sampled on a uniform one-dimensional grid over `[a, b]`.
///
/// Invariants (enforced at construction): at least two points, `b > a`,
/// all values finite. The step `h = (b − a)/(len − 1)` is derived from the
/// endpoints, never stored separately.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    values: Vec<f64>,
    a: f64,
    b: f64,
}

impl GridFunction {
    /// Wrap `values` as samples at `t_k = a + k·h` over `[a, b]`.
    pub fn new(values: Vec<f64>, a: f64, b: f64) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a grid function needs at least 2 points, got {}",
                values.len()
            )));
        }
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::invalid(format!(
                "grid endpoints must be finite with b > a, got a={a}, b={b}"
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "grid value at index {bad} is not finite"
            )));
        }
        Ok(Self { values, a, b })
    }

    /// Build from explicit sample times, inferring the endpoints from the
    /// first and last time.
    ///
    /// The times must be uniform: each `t_k` may deviate from
    /// `a + k·(b − a)/(N)` by at most `1e−9·(b − a)`.
    pub fn from_points(times: &[f64], values: &[f64]) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::InvalidData(format!(
                "time and value columns differ in length: {} vs {}",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidData(
                "a grid function needs at least 2 samples".into(),
            ));
        }
        let a = times[0];
        let b = *times.last().expect("nonempty");
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidData(format!(
                "sample times must be finite and increasing overall, got first={a}, last={b}"
            )));
        }
        let n = times.len() - 1;
        let h = (b - a) / n as f64;
        let tol = 1e-9 * (b - a);
        for (k, &t) in times.iter().enumerate() {
            let expected = a + k as f64 * h;
            if (t - expected).abs() > tol {
                return Err(Error::InvalidData(format!(
                    "sample times are not uniform: t[{k}] = {t} deviates from {expected} \
                     by more than {tol:e}"
                )));
            }
        }
        Self::new(values.to_vec(), a, b)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Number of grid points (`≥ 2`).
    pub fn n_points(&self) -> usize {
        self.values.len()
    }

    /// Number of grid intervals `N = n_points − 1` (`≥ 1`).
    pub fn n_intervals(&self) -> usize {
        self.values.len() - 1
    }

    /// Grid step `h = (b − a)/N`.
    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n_intervals() as f64
    }

    /// Sample time of index `k` (`t_k = a + k·h`).
    pub fn t(&self, k: usize) -> f64 {
        self.a + k as f64 * self.h()
    }

    /// Replace the values, keeping the grid. Lengths must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::invalid(format!(
                "replacement values have length {}, grid has {}",
                values.len(),
                self.values.len()
            )));
        }
        Self::new(values, self.a, self.b)
    }
}

/// Parameters of the Δ-power variation `V_{q,M,s,N}`.
///
/// `q ≥ 1` is the (integer) power, `order ≥ 1` the difference order `M`,
/// and `s > 0` the regularity exponent. The limit theorems additionally
/// assume `order > s`; the statistic itself is well defined without it,
/// so that inequality is not enforced here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationParams {
    pub q: u32,
    pub order: usize,
    pub s: f64,
}

impl VariationParams {
    pub fn new(q: u32, order: usize, s: f64) -> Result<Self> {
        let p = Self { q, order, s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(Error::invalid("power q must be a positive integer"));
        }
        if self.order < 1 {
            return Err(Error::invalid("difference order must be at least 1"));
        }
        if self.order > MAX_BINOMIAL_N as usize {
            return Err(Error::invalid(format!(
                "difference order {} exceeds the supported maximum {MAX_BINOMIAL_N}",
                self.order
            )));
        }
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::invalid(format!(
                "regularity exponent s must be positive and finite, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

/// Stencil coefficients of the `M`-th forward difference:
/// `coeffs[j] = (−1)^{M−j}·C(M,j)`, for `j = 0..=M`.
pub(crate) fn difference_coefficients(order: usize) -> Result<Vec<f64>> {
    if order < 1 {
        return Err(Error::invalid("difference order must be at least 1"));
    }
    if order > MAX_BINOMIAL_N as usize {
        return Err(Error::invalid(format!(
            "difference order {order} exceeds the supported maximum {MAX_BINOMIAL_N}"
        )));
    }
    let m = order as u32;
    (0..=m)
        .map(|j| {
            let sign = if (m - j) % 2 == 0 { 1.0 } else { -1.0 };
            Ok(sign * binomial(m, j)?)
        })
        .collect()
}

/// Apply a difference stencil starting at `start` with the given index
/// stride, in fixed ascending-`j` order.
#[inline]
pub(crate) fn apply_stencil(values: &[f64], coeffs: &[f64], start: usize, stride: usize) -> f64 {
    let mut acc = 0.0;
    for (j, &c) in coeffs.iter().enumerate() {
        acc += c * values[start + j * stride];
    }
    acc
}

/// `M`-th order forward difference `Δ_h^M f(t_k)`.
///
/// Errors: `order ≥ n_points` is an invalid parameter (the stencil cannot
/// fit on the grid at all); an otherwise valid order with
/// `k > n_points − 1 − order` is an index-out-of-range error.
pub fn forward_difference(f: &GridFunction, order: usize, k: usize) -> Result<f64> {
    if order >= f.n_points() {
        return Err(Error::invalid(format!(
            "difference order {order} needs at least {} grid points, got {}",
            order + 1,
            f.n_points()
        )));
    }
    let coeffs = difference_coefficients(order)?;
    let last = f.n_points() - 1 - order;
    if k > last {
        return Err(Error::IndexOutOfRange(format!(
            "difference start index {k} exceeds the last admissible index {last}"
        )));
    }
    Ok(apply_stencil(f.values(), &coeffs, k, 1))
}

/// Δ-power variation
/// `V_{q,M,s,N}(f) = (1/(b−a)) Σ_{k=0}^{N−M} h·|Δ_h^M f(t_k)/h^s|^q`.
///
/// Equivalently `(1/N) Σ_k |Δ_h^M f(t_k)/h^s|^q`; the sum has `N − M + 1`
/// terms but is normalized by `N`, matching the statistic whose limit
/// theory this crate reproduces. Terms are accumulated with compensated
/// summation, in ascending `k` order.
///
/// Requires `N > M` (at least two difference terms).
pub fn delta_power_variation(f: &GridFunction, p: &VariationParams) -> Result<f64> {
    p.validate()?;
    let n = f.n_intervals();
    if n <= p.order {
        return Err(Error::invalid(format!(
            "grid with N={n} intervals cannot support a power variation of difference \
             order M={}; need N > M",
            p.order
        )));
    }
    let coeffs = difference_coefficients(p.order)?;
    let inv_hs = f.h().powf(-p.s);
    let qi = p.q as i32;
    let mut sum = KahanSum::new();
    for k in 0..=(n - p.order) {
        let d = apply_stencil(f.values(), &coeffs, k, 1);
        sum.add((d.abs() * inv_hs).powi(qi));
    }
    Ok(sum.total() / n as f64)
}

/// Discrete Hölder–Zygmund seminorm estimate
/// `max_j (h·2^j)^{−s} · max_k |Δ_{h·2^j}^M f(t_k)|`,
/// the maximum over all dyadic step multiples `h' = h·2^j` that fit at
/// least one `M`-th difference on the grid.
///
/// A lower bound on the true seminorm `sup_{h'>0} (h')^{−s}‖Δ_{h'}^M f‖_∞`
/// (only dyadic steps are examined), intended as a path-regularity
/// diagnostic. Requires `0 < s < M` and at least `2M + 1` grid points.
pub fn hz_seminorm_estimate(f: &GridFunction, s: f64, order: usize) -> Result<f64> {
    if order < 1 || order > MAX_BINOMIAL_N as usize {
        return Err(Error::invalid(format!(
            "difference order must be in 1..={MAX_BINOMIAL_N}, got {order}"
        )));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid(format!(
            "regularity exponent s must be positive and finite, got {s}"
        )));
    }
    if (order as f64) <= s {
        return Err(Error::invalid(format!(
            "seminorm estimate needs difference order exceeding the exponent: \
             order={order}, s={s}"
        )));
    }
    if f.n_points() < 2 * order + 1 {
        return Err(Error::invalid(format!(
            "seminorm estimate needs at least {} grid points, got {}",
            2 * order + 1,
            f.n_points()
        )));
    }
    let coeffs = difference_coefficients(order)?;
    let n = f.n_intervals();
    let h = f.h();
    let mut best = 0.0f64;
    let mut stride = 1usize;
    while order * stride <= n {
        let mut max_abs = 0.0f64;
        for k in 0..=(n - order * stride) {
            max_abs = max_abs.max(apply_stencil(f.values(), &coeffs, k, stride).abs());
        }
        let hp = h * stride as f64;
        best = best.max(hp.powf(-s) * max_abs);
        stride *= 2;
    }
    Ok(best)
}

/// Cumulative trapezoid integral on the same grid:
/// `g(t_0) = 0`, `g(t_k) = Σ_{i<k} h·(f(t_i)+f(t_{i+1}))/2`.
pub fn cumulative_trapezoid(f: &GridFunction) -> Result<GridFunction> {
    let h = f.h();
    let v = f.values();
    let mut out = Vec::with_capacity(v.len());
    out.push(0.0);
    let mut acc = KahanSum::new();
    for k in 1..v.len() {
        acc.add(0.5 * h * (v[k - 1] + v[k]));
        out.push(acc.total());
    }
    GridFunction::new(out, f.a(), f.b())
}
