//! Shared numerical helpers: quadrature, normal tails, monotone cubic
//! interpolation, composition enumeration and seed derivation.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Standard normal upper tail `P{Z >= x}`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal cdf.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// `ln Γ(x)` re-exported so callers share one implementation.
pub fn ln_gamma_fn(x: f64) -> f64 {
    ln_gamma(x)
}

/// `ln C(n, k)`.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// Pmf of a multinomial draw `counts ~ M(n, p)`.
///
/// Small instances with an integer coefficient below 2⁵³ take an exact
/// product path (bit-exact for dyadic probabilities); larger ones fall back
/// to a scaled running product that cannot over- or underflow.
pub fn multinomial_pmf(counts: &[u64], n: u64, p: &[f64]) -> f64 {
    debug_assert_eq!(counts.iter().sum::<u64>(), n);
    if let Some(coef) = exact_multinomial_coefficient(counts, n) {
        let mut value = coef;
        for (&c, &pi) in counts.iter().zip(p) {
            if c == 0 {
                continue;
            }
            if pi == 0.0 {
                return 0.0;
            }
            value *= pi.powi(c as i32);
        }
        return value;
    }
    scaled_multinomial_pmf(counts, n, p)
}

/// `n! / Π c_i!` as an exactly representable f64, when it fits below 2⁵³.
fn exact_multinomial_coefficient(counts: &[u64], n: u64) -> Option<f64> {
    let mut coef: u128 = 1;
    let mut rem = n;
    for &c in counts {
        // C(rem, c) by the exact multiplicative loop
        let mut binom: u128 = 1;
        for i in 1..=c {
            binom = binom.checked_mul((rem - c + i) as u128)? / i as u128;
        }
        coef = coef.checked_mul(binom)?;
        rem -= c;
    }
    (coef <= (1u128 << 53)).then_some(coef as f64)
}

fn scaled_multinomial_pmf(counts: &[u64], n: u64, p: &[f64]) -> f64 {
    let mut value = 1.0f64;
    let mut exp2: i64 = 0;
    let mut rem = n;
    for (&c, &pi) in counts.iter().zip(p) {
        if c == 0 {
            continue;
        }
        if pi == 0.0 {
            return 0.0;
        }
        for j in 0..c {
            value *= (rem - j) as f64 * pi / (j + 1) as f64;
            if value > 1e280 {
                value *= 2f64.powi(-512);
                exp2 += 512;
            } else if value < 1e-280 {
                if value == 0.0 {
                    return 0.0;
                }
                value *= 2f64.powi(512);
                exp2 -= 512;
            }
        }
        rem -= c;
    }
    while exp2 != 0 && value != 0.0 && value.is_finite() {
        let step = exp2.clamp(-512, 512);
        value *= 2f64.powi(step as i32);
        exp2 -= step;
    }
    value
}

/// Number of compositions of `n` into `parts` non-negative parts,
/// `C(n + parts - 1, parts - 1)`, saturating at `u128::MAX`.
pub fn composition_count(n: u64, parts: u64) -> u128 {
    if parts == 0 {
        return 0;
    }
    let mut acc: u128 = 1;
    let k = (parts - 1) as u128;
    for i in 1..=k {
        acc = match acc.checked_mul(n as u128 + i) {
            Some(v) => v / i,
            None => return u128::MAX,
        };
    }
    acc
}

/// Visits every vector of `parts` non-negative integers summing to `n`.
pub fn for_each_composition<F: FnMut(&[u64])>(n: u64, parts: usize, mut visit: F) {
    assert!(parts >= 1);
    let mut buf = vec![0u64; parts];
    fn rec<F: FnMut(&[u64])>(buf: &mut [u64], idx: usize, left: u64, visit: &mut F) {
        if idx + 1 == buf.len() {
            buf[idx] = left;
            visit(buf);
            return;
        }
        for v in 0..=left {
            buf[idx] = v;
            rec(buf, idx + 1, left - v, visit);
        }
    }
    rec(&mut buf, 0, n, &mut visit);
}

/// Wilson 95% score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: u64, trials: u64) -> (f64, f64) {
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let phat = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (phat + z2 / (2.0 * n)) / denom;
    let half = z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided 97.5% Student-t quantile, good to ~1e-3 for df >= 2.
pub fn t_quantile_975(df: usize) -> f64 {
    const TABLE: [f64; 30] = [
        12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179,
        2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064,
        2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
    ];
    if df == 0 {
        return f64::INFINITY;
    }
    if df <= 30 {
        TABLE[df - 1]
    } else {
        // Cornish-Fisher style tail expansion toward 1.96.
        let z = 1.959_963_984_540_054_f64;
        let d = df as f64;
        z + (z * z * z + z) / (4.0 * d)
    }
}

/// Monotone cubic (Fritsch-Carlson) interpolant over a strictly increasing grid.
pub struct MonotoneCubic {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl MonotoneCubic {
    /// Builds the interpolant; `ys` must be non-decreasing.
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::CdfInversion {
                reason: "tabulation needs at least two nodes".into(),
            });
        }
        let n = xs.len();
        let mut secants = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let dx = xs[i + 1] - xs[i];
            if dx <= 0.0 {
                return Err(Error::CdfInversion {
                    reason: "abscissae not strictly increasing".into(),
                });
            }
            let dy = ys[i + 1] - ys[i];
            if dy < 0.0 {
                return Err(Error::CdfInversion {
                    reason: "tabulated cdf is decreasing".into(),
                });
            }
            secants[i] = dy / dx;
        }
        let mut slopes = vec![0.0; n];
        slopes[0] = secants[0];
        slopes[n - 1] = secants[n - 2];
        for i in 1..n - 1 {
            if secants[i - 1] * secants[i] <= 0.0 {
                slopes[i] = 0.0;
            } else {
                // harmonic mean keeps the interpolant monotone
                slopes[i] = 2.0 / (1.0 / secants[i - 1] + 1.0 / secants[i]);
            }
        }
        for i in 0..n - 1 {
            if secants[i] == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
            }
        }
        Ok(Self { xs, ys, slopes })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = match self
            .xs
            .binary_search_by(|v| v.partial_cmp(&x).expect("finite abscissa"))
        {
            Ok(i) => return self.ys[i],
            Err(i) => i - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (y0, y1) = (self.ys[i], self.ys[i + 1]);
        let (m0, m1) = (self.slopes[i] * h, self.slopes[i + 1] * h);
        let t2 = t * t;
        let t3 = t2 * t;
        y0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * (t3 - 2.0 * t2 + t)
            + y1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * (t3 - t2)
    }

    /// Solves `eval(x) = y` by bisection on the bracketing interval.
    pub fn invert(&self, y: f64) -> f64 {
        let n = self.xs.len();
        if y <= self.ys[0] {
            return self.xs[0];
        }
        if y >= self.ys[n - 1] {
            return self.xs[n - 1];
        }
        let i = self.ys.partition_point(|&v| v <= y) - 1;
        let (mut lo, mut hi) = (self.xs[i], self.xs[(i + 1).min(n - 1)]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// SplitMix64 step; used to derive independent sub-seeds from a master seed.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic sub-seed for a (master seed, lane) pair.
///
/// Replications further down derive independence through ChaCha streams,
/// so a single mixing level suffices here.
pub fn derive_seed(master: u64, lane: u64) -> u64 {
    splitmix64(master ^ splitmix64(lane))
}
