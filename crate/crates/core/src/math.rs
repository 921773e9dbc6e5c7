//! Scalar math helpers shared by the tabular solvers and the network stack.
//!
//! Transcendental functions always go through `libm`, never `std`, so results
//! are bit-identical whether or not the `std` feature is enabled.

use alloc::vec::Vec;

/// Probabilities are clamped to this floor before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

/// `exp(x)` via libm.
#[inline(always)]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

/// `ln(x)` via libm.
#[inline(always)]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `tanh(x)` via libm.
#[inline(always)]
pub fn tanh(x: f64) -> f64 {
    libm::tanh(x)
}

/// `sqrt(x)` via libm.
#[inline(always)]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

/// `cos(x)` via libm.
#[inline(always)]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

/// `ln(max(p, LOG_FLOOR))`: keeps log-probabilities finite at zero mass.
#[inline(always)]
pub fn ln_floored(p: f64) -> f64 {
    ln(if p < LOG_FLOOR { LOG_FLOOR } else { p })
}

/// Standard normal draw by Box-Muller (the sine mate is discarded).
/// `u1` is mapped into (0, 1] so the logarithm stays finite.
pub fn sample_standard_normal(rng: &mut impl rand::Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    sqrt(-2.0 * ln(u1)) * cos(2.0 * core::f64::consts::PI * u2)
}

/// Shannon entropy `-sum_a p_a ln p_a` in nats. Zero entries contribute zero.
pub fn entropy(probs: &[f64]) -> f64 {
    let mut h = 0.0;
    for &p in probs {
        if p > 0.0 {
            h -= p * ln_floored(p);
        }
    }
    h
}

/// Softmax of `values / temperature` with max subtraction for stability.
///
/// `temperature` must be positive; callers wanting the greedy limit should
/// use [`argmax_low`] instead.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    debug_assert!(temperature > 0.0, "softmax temperature must be positive");
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = values
        .iter()
        .map(|&v| exp((v - max) / temperature))
        .collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

/// Index of the maximum entry; ties break toward the lowest index.
pub fn argmax_low(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Draw from a categorical distribution given a uniform sample `u in [0, 1)`.
///
/// Returns the first index whose cumulative mass exceeds `u`; accumulated
/// rounding slack falls onto the last index with positive mass.
pub fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            cum += p;
            last_positive = a;
            if u < cum {
                return a;
            }
        }
    }
    last_positive
}

/// Arithmetic mean; 0.0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Population standard deviation; 0.0 for fewer than two samples.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    sqrt(var)
}

/// Dot product over equal-length slices.
#[inline(always)]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Solves the dense system `A x = b` in place by Gaussian elimination with
/// partial pivoting; `a` is row-major `n x n`, the solution lands in `b`.
///
/// Used as an independent cross-check of iterative fixed-point solvers.
pub fn solve_dense(a: &mut [f64], b: &mut [f64]) -> crate::Result<()> {
    let n = b.len();
    debug_assert_eq!(a.len(), n * n);
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[pivot * n + col].abs() {
                pivot = row;
            }
        }
        if a[pivot * n + col].abs() < 1e-300 {
            return Err(crate::CoreError::invalid(
                "solve_dense",
                "matrix is singular to working precision",
            ));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = 1.0 / a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] * inv;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Ok(())
}

/// SplitMix64 step, used to derive independent seeds from a master seed.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for a named substream of `master`; distinct labels give decorrelated
/// streams, so adding a consumer never shifts existing ones.
pub fn substream_seed(master: u64, label: u64) -> u64 {
    splitmix64(master ^ label.wrapping_mul(0xA076_1D64_78BD_642F))
}
