//! Deterministic random number generation.
//!
//! Every stochastic routine in this crate consumes a [`Replication`]
//! stream: ChaCha12 seeded with `seed_base.wrapping_add(replication)`.
//! Replication `r` of an experiment therefore reproduces bit-for-bit on
//! any platform, independent of thread scheduling, as long as each
//! replication draws only from its own stream.
//!
//! Normals are produced by applying the inverse normal CDF to a uniform
//! on the open interval (0, 1); with the fixed inverse-CDF evaluation in
//! [`crate::special`] this makes every Gaussian draw a pure function of
//! the stream position.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::special::inverse_normal_cdf;

/// A deterministic Gaussian/uniform stream for one replication.
pub struct Replication {
    rng: ChaCha12Rng,
}

impl Replication {
    /// Stream for replication `rep` of an experiment with base seed
    /// `seed_base`. Distinct replications use distinct (wrapping) seeds.
    pub fn new(seed_base: u64, rep: u64) -> Self {
        Self {
            rng: ChaCha12Rng::seed_from_u64(seed_base.wrapping_add(rep)),
        }
    }

    /// Uniform on the open interval (0, 1): takes the top 53 bits of one
    /// 64-bit word and centers on half-steps, so 0.0 and 1.0 are
    /// unreachable and the inverse normal CDF below never saturates.
    #[inline]
    pub fn uniform_open01(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
    }

    /// Standard normal draw via the inverse CDF.
    #[inline]
    pub fn standard_normal(&mut self) -> f64 {
        inverse_normal_cdf(self.uniform_open01())
    }

    /// Fill `out` with independent standard normals, in order.
    pub fn fill_standard_normal(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.standard_normal();
        }
    }
}
