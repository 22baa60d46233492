//! Shared numerical building blocks: compensated summation, exact binomial
//! coefficients, the standard-normal inverse CDF (a fixed rational
//! approximation, so Gaussian draws are bit-portable), Gauss–Legendre
//! quadrature rules, and a Kolmogorov–Smirnov test against the standard
//! normal law.

use crate::error::{Error, Result};

/// Largest difference/binomial order supported by the exact integer
/// binomial path. `C(128, 64)` still fits a `u128`; beyond that the
/// coefficients exceed what double precision can use meaningfully.
pub const MAX_BINOMIAL_N: u32 = 128;

/// Compensated (Kahan–Neumaier) accumulator for long sums.
///
/// Keeps a running compensation term so that summing up to ~10^7 values
/// loses no more than a few ulps, independent of ordering-induced
/// cancellation. The Neumaier variant also handles terms larger than the
/// running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact binomial coefficient `C(n, k)` as an `f64`.
///
/// Computed with the integer recurrence `C(n,k) = C(n,k−1)·(n−k+1)/k`
/// (each division is exact), then converted; for `n ≤ 128` every
/// intermediate fits in `u128`, so the result is the correctly rounded
/// value of the true integer.
pub fn binomial(n: u32, k: u32) -> Result<f64> {
    if n > MAX_BINOMIAL_N {
        return Err(Error::invalid(format!(
            "binomial coefficient order {n} exceeds the supported maximum {MAX_BINOMIAL_N}"
        )));
    }
    if k > n {
        return Ok(0.0);
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 1..=u128::from(k) {
        // Multiply before dividing; the running product is always an
        // exact binomial coefficient, so the division is exact.
        c = c * (u128::from(n) - j + 1) / j;
    }
    Ok(c as f64)
}

/// `n!` as an `f64` (exact for `n ≤ 22`, correctly rounded beyond).
pub fn factorial(n: u32) -> f64 {
    let mut f = 1.0;
    for i in 2..=u64::from(n) {
        f *= i as f64;
    }
    f
}

/// Standard-normal inverse CDF (quantile function) on `(0, 1)`.
///
/// Wichura's PPND16 rational approximation: three regimes (central,
/// tail, extreme tail), relative accuracy around 1e−15 over the full
/// domain. Implemented from the published coefficients rather than a
/// platform `erfinv` so that Gaussian draws derived from uniforms are
/// identical across platforms and compilers.
///
/// Out-of-domain inputs saturate: `p ≤ 0 → −∞`, `p ≥ 1 → +∞`.
pub fn inverse_normal_cdf(p: f64) -> f64 {
    if !(p > 0.0) {
        return f64::NEG_INFINITY;
    }
    if !(p < 1.0) {
        return f64::INFINITY;
    }

    const A: [f64; 8] = [
        3.387_132_872_796_366_608e0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34e0,
        4.630_337_846_156_545_295_9e0,
        5.769_497_221_460_691_405_5e0,
        3.647_848_324_763_204_605_04e0,
        1.270_458_252_452_368_382_58e0,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87e0,
        1.676_384_830_183_803_849_4e0,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2e0,
        5.463_784_911_164_114_369_9e0,
        1.784_826_539_917_291_335_8e0,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    #[inline]
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        // Horner evaluation from the highest-order coefficient down.
        c.iter().rev().fold(0.0, |acc, &ci| acc * r + ci)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = (-r.ln()).sqrt();
    let v = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

/// Complementary error function `erfc(x) = (2/√π)∫_x^∞ e^{−t²} dt`.
///
/// Cody's rational Chebyshev approximations (the SPECFUN `CALERF`
/// scheme): a central rational for `|x| ≤ 0.46875`, a scaled rational
/// times `e^{−x²}` up to `x = 4`, and the asymptotic rational beyond.
/// The Gaussian factor is computed with a split argument
/// (`x² = ⌊16x⌋²/256 + correction`) so its rounding error stays at one
/// ulp instead of growing like `x²·ε`. Relative accuracy is 1–2 ulp
/// across the domain; `erfc` underflows to zero near `x ≈ 26.6`.
fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x.is_infinite() {
        return if x < 0.0 { 2.0 } else { 0.0 };
    }
    let y = x.abs();

    if y <= 0.46875 {
        // erf(x) = x·R(x²); erfc = 1 − erf.
        const A: [f64; 5] = [
            3.161_123_743_870_565_6e0,
            1.138_641_541_510_501_56e2,
            3.774_852_376_853_020_21e2,
            3.209_377_589_138_469_47e3,
            1.857_777_061_846_031_53e-1,
        ];
        const B: [f64; 4] = [
            2.360_129_095_234_412_09e1,
            2.440_246_379_344_441_73e2,
            1.282_616_526_077_372_28e3,
            2.844_236_833_439_170_62e3,
        ];
        let z = y * y;
        let mut num = A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + A[i]) * z;
            den = (den + B[i]) * z;
        }
        return 1.0 - x * (num + A[3]) / (den + B[3]);
    }

    let scaled = if y <= 4.0 {
        const C: [f64; 9] = [
            5.641_884_969_886_700_89e-1,
            8.883_149_794_388_375_94e0,
            6.611_919_063_714_162_95e1,
            2.986_351_381_974_001_31e2,
            8.819_522_212_417_690_9e2,
            1.712_047_612_634_070_58e3,
            2.051_078_377_826_071_47e3,
            1.230_339_354_797_997_25e3,
            2.153_115_354_744_038_46e-8,
        ];
        const D: [f64; 8] = [
            1.574_492_611_070_983_47e1,
            1.176_939_508_913_124_99e2,
            5.371_811_018_620_098_58e2,
            1.621_389_574_566_690_19e3,
            3.290_799_235_733_459_63e3,
            4.362_619_090_143_247_16e3,
            3.439_367_674_143_721_64e3,
            1.230_339_354_803_749_42e3,
        ];
        let mut num = C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + C[i]) * y;
            den = (den + D[i]) * y;
        }
        (num + C[7]) / (den + D[7])
    } else {
        const P: [f64; 6] = [
            3.053_266_349_612_323_44e-1,
            3.603_448_999_498_044_39e-1,
            1.257_817_261_112_292_46e-1,
            1.608_378_514_874_227_66e-2,
            6.587_491_615_298_378_03e-4,
            1.631_538_713_730_209_78e-2,
        ];
        const Q: [f64; 5] = [
            2.568_520_192_289_822_42e0,
            1.872_952_849_923_460_47e0,
            5.279_051_029_514_284_12e-1,
            6.051_834_131_244_131_91e-2,
            2.335_204_976_268_691_85e-3,
        ];
        // 1/√π.
        const SQRPI: f64 = 5.641_895_835_477_562_87e-1;
        if y >= 1e17 {
            // 1/y² underflows the rational below; the asymptotic limit
            // of the scaled function is 1/(√π·y), which itself rounds
            // to an underflowing erfc after the Gaussian factor.
            SQRPI / y
        } else {
            let z = 1.0 / (y * y);
            let mut num = P[5] * z;
            let mut den = z;
            for i in 0..4 {
                num = (num + P[i]) * z;
                den = (den + Q[i]) * z;
            }
            (SQRPI - z * (num + P[4]) / (den + Q[4])) / y
        }
    };

    // exp(−y²) with the argument split into an exactly-representable
    // head and a small correction, so the result keeps full precision.
    let head = (16.0 * y).trunc() / 16.0;
    let del = (y - head) * (y + head);
    let gauss = (-head * head).exp() * (-del).exp();
    if x < 0.0 {
        2.0 - gauss * scaled
    } else {
        gauss * scaled
    }
}

/// Standard-normal CDF `Φ(x)`.
pub fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[−1, 1]`.
///
/// Newton iteration on the Legendre recurrence; nodes are returned in
/// ascending order. Exact for polynomials of degree `2n − 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root (from the upper end).
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x) by upward recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = (n as f64) * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Two-sided Kolmogorov–Smirnov test of `samples` against the standard
/// normal distribution.
///
/// Returns `(d, p)`: the KS statistic and an approximate p-value using
/// Stephens' finite-sample correction
/// `λ = (√n + 0.12 + 0.11/√n)·D` and the asymptotic series
/// `Q(λ) = 2 Σ_{k≥1} (−1)^{k−1} e^{−2k²λ²}`.
pub fn ks_test_standard_normal(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("Kolmogorov-Smirnov test needs at least one sample"));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("Kolmogorov-Smirnov samples must be finite"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values compare"));
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = standard_normal_cdf(x);
        let lo = cdf - i as f64 / nf;
        let hi = (i + 1) as f64 / nf - cdf;
        d = d.max(lo).max(hi);
    }
    let sqrt_n = nf.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for k in 1..=100u32 {
        let term = 2.0 * (-2.0 * f64::from(k * k) * lambda * lambda).exp();
        p += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    Ok((d, p.clamp(0.0, 1.0)))
}

/// Ordinary least squares fit `y ≈ slope·x + intercept`.
///
/// Returns `(slope, intercept, r_squared)`. With fewer than two points or
/// degenerate x the fit is undefined and an error is returned.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(
            "linear fit needs two equally long series with at least 2 points",
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 {
        return Err(Error::invalid("linear fit is degenerate: all x are equal"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((slope, intercept, r_squared))
}
