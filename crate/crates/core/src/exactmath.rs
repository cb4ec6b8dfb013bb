//! Exact combinatorics behind spanning probabilities.
//!
//! If `k` labels are drawn uniformly with replacement from `n` linearly
//! independent vectors, the drawn set spans `R^n` exactly when every label
//! appears, so the spanning probability is the fraction of surjections:
//!
//! ```text
//!     p(n, k) = n! S(k, n) / n^k
//! ```
//!
//! where `S(k, n)` is a Stirling number of the second kind.

use std::sync::{Mutex, OnceLock};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Arbitrary-precision nonnegative integer.
pub type BigNatural = BigUint;

/// Arbitrary-precision rational, always kept in lowest terms.
pub type ExactRational = BigRational;

/// Above this draw count the float spanning probability is evaluated in
/// the log domain.
pub const LOG_DOMAIN_THRESHOLD: usize = 300;

/// Widest column the shared Stirling table will cache. Larger `n` is
/// computed with a rolling row.
const MAX_CACHED_WIDTH: usize = 64;

struct StirlingTable {
    width: usize,
    // rows[k][j] = S(k, j) for j in 0..=width
    rows: Vec<Vec<BigUint>>,
}

impl StirlingTable {
    fn new(width: usize) -> Self {
        let mut row0 = vec![BigUint::zero(); width + 1];
        row0[0] = BigUint::one();
        StirlingTable {
            width,
            rows: vec![row0],
        }
    }

    fn extend_to(&mut self, k: usize) {
        while self.rows.len() <= k {
            let prev = self.rows.last().expect("table has row 0");
            let next = next_row(prev, self.width);
            self.rows.push(next);
        }
    }
}

fn next_row(prev: &[BigUint], width: usize) -> Vec<BigUint> {
    let mut next = vec![BigUint::zero(); width + 1];
    for j in 1..=width {
        // S(k, j) = j S(k-1, j) + S(k-1, j-1)
        next[j] = &prev[j] * BigUint::from(j) + &prev[j - 1];
    }
    next
}

fn table() -> &'static Mutex<StirlingTable> {
    static TABLE: OnceLock<Mutex<StirlingTable>> = OnceLock::new();
    TABLE.get_or_init(|| Mutex::new(StirlingTable::new(16)))
}

/// Stirling number of the second kind `S(k, n)`: the number of ways to
/// partition `k` objects into `n` nonempty blocks. `S(0, 0) = 1` and
/// `S(k, n) = 0` whenever `k < n`.
pub fn stirling2(k: usize, n: usize) -> BigNatural {
    if n > k {
        return BigUint::zero();
    }
    if n == k {
        return BigUint::one();
    }
    if n == 0 {
        return BigUint::zero();
    }
    if n > MAX_CACHED_WIDTH {
        let mut row = vec![BigUint::zero(); n + 1];
        row[0] = BigUint::one();
        for _ in 0..k {
            row = next_row(&row, n);
        }
        return row[n].clone();
    }

    let mut guard = table().lock().unwrap_or_else(|e| e.into_inner());
    if n > guard.width {
        let width = (guard.width * 2).clamp(n, MAX_CACHED_WIDTH);
        *guard = StirlingTable::new(width);
    }
    guard.extend_to(k);
    guard.rows[k][n].clone()
}

pub fn factorial(n: usize) -> BigNatural {
    (1..=n).fold(BigUint::one(), |acc, i| acc * BigUint::from(i))
}

/// Number of length-`k` label sequences over `n` labels in which every
/// label appears: `n! S(k, n)`.
pub fn surjection_count(k: usize, n: usize) -> BigNatural {
    factorial(n) * stirling2(k, n)
}

/// Exact spanning probability `n! S(k, n) / n^k`, reduced.
///
/// # Panics
/// If `n == 0`.
pub fn span_prob_exact(n: usize, k: usize) -> ExactRational {
    assert!(n >= 1, "spanning probability needs n >= 1");
    let numer = BigInt::from(surjection_count(k, n));
    let denom = BigInt::from(BigUint::from(n).pow(k as u32));
    BigRational::new(numer, denom)
}

/// Exact probability that `k` draws fail to cover all `n` labels.
pub fn nonspan_prob_exact(n: usize, k: usize) -> ExactRational {
    BigRational::one() - span_prob_exact(n, k)
}

/// `ln(num / den)` from the leading 64 bits of each operand, so the
/// result keeps full relative precision even when both logs are large.
fn ln_ratio(num: &BigUint, den: &BigUint) -> f64 {
    let top = |x: &BigUint| {
        let shift = x.bits().saturating_sub(64);
        ((x >> shift).to_f64().expect("64-bit value"), shift as f64)
    };
    let (tn, sn) = top(num);
    let (td, sd) = top(den);
    (tn / td).ln() + (sn - sd) * std::f64::consts::LN_2
}

/// `num / den` as a correctly rounded double without reducing the fraction.
fn ratio_f64(num: BigUint, den: BigUint) -> f64 {
    BigRational::new_raw(BigInt::from(num), BigInt::from(den))
        .to_f64()
        .expect("finite ratio")
}

/// Floating spanning probability. Exactly rounded for `k <= 300`; above
/// that it is evaluated as `exp(ln(n! S(k, n)) - ln(n^k))`.
///
/// # Panics
/// If `n == 0`.
pub fn span_prob_float(n: usize, k: usize) -> f64 {
    assert!(n >= 1, "spanning probability needs n >= 1");
    if k < n {
        return 0.0;
    }
    let num = surjection_count(k, n);
    let den = BigUint::from(n).pow(k as u32);
    if k <= LOG_DOMAIN_THRESHOLD {
        return ratio_f64(num, den);
    }
    ln_ratio(&num, &den).exp().min(1.0)
}

/// Three-term inclusion-exclusion expansion
/// `1 - n((n-1)/n)^k + n(n-1)/2 ((n-2)/n)^k`.
pub fn span_prob_asymptotic(n: usize, k: usize) -> f64 {
    let nf = n as f64;
    let r1 = (nf - 1.0) / nf;
    let r2 = (nf - 2.0) / nf;
    let k = k as i32;
    1.0 - nf * r1.powi(k) + nf * (nf - 1.0) / 2.0 * r2.powi(k)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanSeriesResult {
    pub value: f64,
    /// Index of the last series term included.
    pub terms_used: usize,
    /// Upper bound on the discarded tail.
    pub truncation_bound: f64,
}

/// `n sum_{j > last} j r^j` with `r = (n-1)/n`, which majorizes the tail
/// of `sum_j j (1 - p(n, j))` because `1 - p(n, j) <= n r^j`.
fn geometric_tail(n: usize, last: usize) -> f64 {
    let nf = n as f64;
    let r = (nf - 1.0) / nf;
    let kk = last as f64;
    nf * r.powf(kk + 1.0) * ((kk + 1.0) - kk * r) / ((1.0 - r) * (1.0 - r))
}

/// Mean non-spanning sequence length `M_n`.
///
/// Sums `k (1 - p(n, k))` from `k = 2`, which is the convention that
/// reproduces the reference values `M_2 = 3.0`, `M_3 = 14.75`, ...;
/// terms with `2 <= k < n` have `p = 0` and contribute `k` each. Use
/// [`mean_nonspan_length_from`] to start the sum elsewhere.
pub fn mean_nonspan_length(n: usize, tol: f64) -> Result<SpanSeriesResult> {
    mean_nonspan_length_from(n, 2, tol)
}

/// `sum_{k >= first} k (1 - p(n, k))`, truncated once the geometric tail
/// majorant drops below `tol`.
pub fn mean_nonspan_length_from(n: usize, first: usize, tol: f64) -> Result<SpanSeriesResult> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "mean span length needs n >= 2, got {n}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 || tol.is_infinite() {
        return Err(Error::invalid(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let mut value = 0.0f64;
    let mut k = first;
    loop {
        let q = if k < n {
            1.0
        } else {
            let den = BigUint::from(n).pow(k as u32);
            ratio_f64(&den - surjection_count(k, n), den)
        };
        value += k as f64 * q;
        if k >= n {
            let tail = geometric_tail(n, k);
            if tail < tol {
                return Ok(SpanSeriesResult {
                    value,
                    terms_used: k,
                    truncation_bound: tail,
                });
            }
        }
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanRow {
    pub n: usize,
    pub k: usize,
    pub exact: ExactRational,
    pub p: f64,
}

/// Spanning probability rows for every `n` in `n_values` and
/// `k = 1..=k_max`, ordered by `(n, k)`.
pub fn spanning_table(n_values: &[usize], k_max: usize) -> Result<Vec<SpanRow>> {
    let mut ns = n_values.to_vec();
    ns.sort_unstable();
    ns.dedup();
    if ns.is_empty() {
        return Err(Error::invalid("no n values given"));
    }
    if ns[0] == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let n_max = *ns.last().expect("nonempty");
    if k_max < n_max {
        return Err(Error::invalid(format!(
            "kmax {k_max} is below the largest n {n_max}"
        )));
    }
    let mut rows = Vec::with_capacity(ns.len() * k_max);
    for &n in &ns {
        for k in 1..=k_max {
            rows.push(SpanRow {
                n,
                k,
                exact: span_prob_exact(n, k),
                p: span_prob_float(n, k),
            });
        }
    }
    Ok(rows)
}
