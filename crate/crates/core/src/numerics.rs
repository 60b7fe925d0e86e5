//! Small numerical helpers shared across modules: stable log-sum-exp,
//! bracketing root search, batch statistics, cubic Hermite interpolation and
//! counter-based seed derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};

/// `log(sum(exp(x_i)))` with the max-shift trick. Empty input gives `-inf`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let mut acc = LogSumExp::default();
    for &v in values {
        acc.push(v);
    }
    acc.value()
}

/// Streaming log-sum-exp accumulator. Merging two accumulators is
/// associative, so per-batch partial sums can be combined in any grouping.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    scaled: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            scaled: 0.0,
        }
    }
}

impl LogSumExp {
    #[inline]
    pub fn push(&mut self, x: f64) {
        if x == f64::NEG_INFINITY {
            return;
        }
        if x <= self.max {
            self.scaled += (x - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - x).exp() + 1.0;
            self.max = x;
        }
    }

    pub fn merge(&mut self, other: &LogSumExp) {
        if other.max == f64::NEG_INFINITY {
            return;
        }
        if other.max <= self.max {
            self.scaled += other.scaled * (other.max - self.max).exp();
        } else {
            self.scaled = self.scaled * (self.max - other.max).exp() + other.scaled;
            self.max = other.max;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            self.max + self.scaled.ln()
        }
    }
}

/// Result of a bracketing root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub iterations: usize,
    /// Final bracket width.
    pub width: f64,
}

/// Bisection for a continuous function with `f(lo)` and `f(hi)` of opposite
/// sign. Stops when the bracket is narrower than `tol`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(Root {
            x: lo,
            iterations: 0,
            width: 0.0,
        });
    }
    if f_hi == 0.0 {
        return Ok(Root {
            x: hi,
            iterations: 0,
            width: 0.0,
        });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::NonBracketing { lo, hi, f_lo, f_hi });
    }
    let lo_negative = f_lo < 0.0;
    let mut iterations = 0;
    while hi - lo > tol && iterations < max_iter {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        iterations += 1;
        if fm == 0.0 {
            return Ok(Root {
                x: mid,
                iterations,
                width: 0.0,
            });
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Root {
        x: 0.5 * (lo + hi),
        iterations,
        width: hi - lo,
    })
}

/// Mean and standard error (sample deviation / sqrt(n)) of batch estimates.
pub fn batch_mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Cubic Hermite interpolation on `[0, h]` at local coordinate `s = (x - x0)/h`.
#[inline]
pub fn hermite(v0: f64, d0: f64, v1: f64, d1: f64, h: f64, s: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let value = h00 * v0 + h10 * h * d0 + h01 * v1 + h11 * h * d1;
    let dh00 = 6.0 * s2 - 6.0 * s;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = -6.0 * s2 + 6.0 * s;
    let dh11 = 3.0 * s2 - 2.0 * s;
    let deriv = (dh00 * v0 + dh01 * v1) / h + dh10 * d0 + dh11 * d1;
    (value, deriv)
}

/// SplitMix64 finalizer; used to derive child seeds from labels.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a textual label plus index.
pub fn derive_seed(seed: u64, label: &str, index: u64) -> u64 {
    let mut h = splitmix64(seed);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index))
}

/// Counter-based generator: the stream id selects an independent ChaCha
/// keystream under the same key, so streams can be drawn in any order.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for one Monte Carlo batch: a fast xoshiro stream keyed by a
/// seed derived from `(seed, index)`.
pub fn batch_rng(seed: u64, index: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(derive_seed(seed, "batch", index))
}

/// Evenly spaced grid with `n` points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n)
                .map(|i| if i == n - 1 { hi } else { lo + step * i as f64 })
                .collect()
        }
    }
}

/// Least-squares slope of `log(err)` against `log(eps)`; entries with
/// non-positive error are skipped.
pub fn fitted_order(eps: &[f64], err: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = eps
        .iter()
        .zip(err)
        .filter(|(e, r)| **e > 0.0 && **r > 0.0)
        .map(|(e, r)| (e.ln(), r.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [-1.0, -2.0, -3.0];
        let direct = xs.iter().map(|x: &f64| x.exp()).sum::<f64>().ln();
        assert!((logsumexp(&xs) - direct).abs() < 1e-14);
    }

    #[test]
    fn logsumexp_survives_large_exponents() {
        let xs = [1000.0, 1000.0];
        assert!((logsumexp(&xs) - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn merge_is_order_independent() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 800.0).collect();
        let whole = logsumexp(&xs);
        let mut a = LogSumExp::default();
        let mut b = LogSumExp::default();
        for (i, &x) in xs.iter().enumerate() {
            if i % 3 == 0 {
                a.push(x)
            } else {
                b.push(x)
            }
        }
        let mut ab = a;
        ab.merge(&b);
        let mut ba = b;
        ba.merge(&a);
        assert!((ab.value() - whole).abs() < 1e-10);
        assert!((ba.value() - whole).abs() < 1e-10);
    }

    #[test]
    fn bisect_finds_sqrt2() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-12, 200).unwrap();
        assert!((r.x - 2f64.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn bisect_rejects_same_sign() {
        let r = bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 200);
        assert!(matches!(r, Err(Error::NonBracketing { .. })));
    }

    #[test]
    fn hermite_reproduces_cubic() {
        let f = |x: f64| 0.3 * x * x * x - x * x + 0.5 * x + 2.0;
        let df = |x: f64| 0.9 * x * x - 2.0 * x + 0.5;
        let (x0, h) = (0.4, 0.7);
        for k in 0..=10 {
            let s = k as f64 / 10.0;
            let (v, d) = hermite(f(x0), df(x0), f(x0 + h), df(x0 + h), h, s);
            assert!((v - f(x0 + s * h)).abs() < 1e-13);
            assert!((d - df(x0 + s * h)).abs() < 1e-12);
        }
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        use rand::Rng;
        let a: u64 = stream_rng(7, 1).random();
        let b: u64 = stream_rng(7, 2).random();
        let a2: u64 = stream_rng(7, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, a2);
        assert_ne!(derive_seed(1, "mc", 0), derive_seed(1, "mc", 1));
        assert_ne!(derive_seed(1, "mc", 0), derive_seed(1, "pde", 0));
    }

    #[test]
    fn fitted_order_of_linear_error_is_one() {
        let eps = [0.25, 0.125, 0.0625];
        let err: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        assert!((fitted_order(&eps, &err).unwrap() - 1.0).abs() < 1e-12);
    }
}
