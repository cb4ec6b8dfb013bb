//! Controllability and observability when only one input (or output)
//! channel is available per step.
//!
//! A channel sequence `g(0..k)` over the columns `b_1..b_m` of `B` reaches
//! the vector set
//!
//! ```text
//!     { b_g(k-1), A b_g(k-2), ..., A^(k-1) b_g(0) }
//! ```
//!
//! and the system is random channel controllable (RCC) when every length-`n`
//! sequence that uses every channel at least once yields a set spanning
//! `R^n`. Random channel observability (RCO) is the same property for the
//! pair `(A^T, C^T)`.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exactmath::{factorial, span_prob_exact, stirling2};
use crate::linalg::{self, Matrix, RationalMatrix, Vector};
use crate::rng;

/// Default limit on the number of rank tests an enumeration may run.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Environment variable overriding [`DEFAULT_CAP`].
pub const CAP_ENV: &str = "RANDCHAN_CAP";

/// Enumeration cap from `RANDCHAN_CAP`, falling back to [`DEFAULT_CAP`].
pub fn cap_from_env() -> u64 {
    std::env::var(CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_CAP)
}

/// Rational copy of a system, used for proof-grade rank tests.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSystem {
    pub a: RationalMatrix,
    pub b: RationalMatrix,
    pub c: Option<RationalMatrix>,
}

/// `x(k+1) = A x(k) + B u(k)`, `y(k) = C x(k)`.
#[derive(Debug, Clone)]
pub struct LtiSystem {
    a: Matrix,
    b: Matrix,
    c: Option<Matrix>,
    exact: Option<ExactSystem>,
    a_singular: bool,
}

impl LtiSystem {
    pub fn new(a: Matrix, b: Matrix, c: Option<Matrix>) -> Result<Self> {
        check_dims(
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols(),
            c.as_ref().map(|c| (c.rows(), c.cols())),
        )?;
        let a_singular = linalg::rank(&a, linalg::DEFAULT_TOL) < a.rows();
        Ok(LtiSystem {
            a,
            b,
            c,
            exact: None,
            a_singular,
        })
    }

    /// Builds a system from rational data; the float matrices are the
    /// nearest doubles and the rational copy is kept for exact tests.
    pub fn from_exact(exact: ExactSystem) -> Result<Self> {
        check_dims(
            exact.a.rows(),
            exact.a.cols(),
            exact.b.rows(),
            exact.b.cols(),
            exact.c.as_ref().map(|c| (c.rows(), c.cols())),
        )?;
        let a = exact.a.to_float();
        let b = exact.b.to_float();
        let c = exact.c.as_ref().map(RationalMatrix::to_float);
        for m in std::iter::once(&a)
            .chain(std::iter::once(&b))
            .chain(c.iter())
        {
            if m.as_slice().iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid("entry does not fit in a double"));
            }
        }
        let a_singular = exact.a.rank() < exact.a.rows();
        Ok(LtiSystem {
            a,
            b,
            c,
            exact: Some(exact),
            a_singular,
        })
    }

    pub fn a(&self) -> &Matrix {
        &self.a
    }

    pub fn b(&self) -> &Matrix {
        &self.b
    }

    pub fn c(&self) -> Option<&Matrix> {
        self.c.as_ref()
    }

    pub fn exact(&self) -> Option<&ExactSystem> {
        self.exact.as_ref()
    }

    /// Rational copy, converting the float data exactly when the system
    /// was not built from rationals.
    pub fn exact_or_converted(&self) -> ExactSystem {
        self.exact.clone().unwrap_or_else(|| ExactSystem {
            a: RationalMatrix::from_float(&self.a),
            b: RationalMatrix::from_float(&self.b),
            c: self.c.as_ref().map(RationalMatrix::from_float),
        })
    }

    pub fn n(&self) -> usize {
        self.a.rows()
    }

    pub fn m(&self) -> usize {
        self.b.cols()
    }

    pub fn q(&self) -> Option<usize> {
        self.c.as_ref().map(Matrix::rows)
    }

    pub fn a_is_singular(&self) -> bool {
        self.a_singular
    }

    fn require_c(&self) -> Result<&Matrix> {
        self.c
            .as_ref()
            .ok_or_else(|| Error::invalid("system has no output matrix C"))
    }

    /// The dual system `(A^T, C^T, B^T)`.
    pub fn dual(&self) -> Result<LtiSystem> {
        let c = self.require_c()?;
        Ok(LtiSystem {
            a: self.a.transpose(),
            b: c.transpose(),
            c: Some(self.b.transpose()),
            exact: self.exact.as_ref().map(|e| ExactSystem {
                a: e.a.transpose(),
                b: e.c
                    .as_ref()
                    .expect("exact C present with float C")
                    .transpose(),
                c: Some(e.b.transpose()),
            }),
            a_singular: self.a_singular,
        })
    }

    fn side(&self, side: Side) -> Result<std::borrow::Cow<'_, LtiSystem>> {
        match side {
            Side::Input => Ok(std::borrow::Cow::Borrowed(self)),
            Side::Output => Ok(std::borrow::Cow::Owned(self.dual()?)),
        }
    }
}

fn check_dims(ar: usize, ac: usize, br: usize, bc: usize, c: Option<(usize, usize)>) -> Result<()> {
    if ar != ac || ar == 0 {
        return Err(Error::dims(format!(
            "A must be square and nonempty, got {ar}x{ac}"
        )));
    }
    if br != ar {
        return Err(Error::dims(format!("B has {br} rows, A has {ar}")));
    }
    if bc == 0 {
        return Err(Error::dims("B needs at least one column"));
    }
    if let Some((cr, cc)) = c {
        if cc != ar {
            return Err(Error::dims(format!("C has {cc} columns, A has {ar}")));
        }
        if cr == 0 {
            return Err(Error::dims("C needs at least one row"));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

/// Realized channel indices `g(0..k)`, stored 0-based.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct ChannelSequence {
    indices: Vec<usize>,
}

impl ChannelSequence {
    /// Sequence from 0-based indices, each below `channels`.
    pub fn new(indices: Vec<usize>, channels: usize) -> Result<Self> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= channels) {
            return Err(Error::ChannelOutOfRange {
                index: bad + 1,
                count: channels,
            });
        }
        Ok(ChannelSequence { indices })
    }

    /// Sequence from user-facing 1-based labels.
    pub fn from_one_based(labels: &[usize], channels: usize) -> Result<Self> {
        let mut indices = Vec::with_capacity(labels.len());
        for &l in labels {
            if l == 0 || l > channels {
                return Err(Error::ChannelOutOfRange {
                    index: l,
                    count: channels,
                });
            }
            indices.push(l - 1);
        }
        Ok(ChannelSequence { indices })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.indices.iter().map(|i| i + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

impl fmt::Display for ChannelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.one_based().iter().map(ToString::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl fmt::Debug for ChannelSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ChannelSequence{self}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckOptions {
    pub tol: f64,
    /// Use rational arithmetic; `tol` is then ignored.
    pub exact: bool,
    pub cap: u64,
}

impl Default for CheckOptions {
    fn default() -> Self {
        CheckOptions {
            tol: linalg::DEFAULT_TOL,
            exact: false,
            cap: DEFAULT_CAP,
        }
    }
}

impl CheckOptions {
    pub fn with_tol(tol: f64) -> Self {
        CheckOptions {
            tol,
            ..Default::default()
        }
    }
}

/// Answers "does the vector set reached by this sequence span `R^n`?".
trait SpanOracle: Sync {
    fn spans(&self, seq: &[usize]) -> bool;
}

struct FloatOracle {
    n: usize,
    tol: f64,
    // powers[j][i] = A^j b_i
    powers: Vec<Vec<Vector>>,
}

impl FloatOracle {
    fn new(sys: &LtiSystem, len: usize, tol: f64) -> Self {
        let mut powers: Vec<Vec<Vector>> = Vec::with_capacity(len);
        let mut current: Vec<Vector> = (0..sys.m()).map(|i| sys.b.column(i)).collect();
        for _ in 0..len {
            let next = current
                .iter()
                .map(|v| sys.a.mul_vec(v).expect("square A"))
                .collect();
            powers.push(std::mem::replace(&mut current, next));
        }
        FloatOracle {
            n: sys.n(),
            tol,
            powers,
        }
    }

    fn matrix(&self, seq: &[usize]) -> Matrix {
        let k = seq.len();
        let cols: Vec<Vector> = (0..k)
            .map(|j| self.powers[j][seq[k - 1 - j]].clone())
            .collect();
        Matrix::from_columns(self.n, &cols).expect("consistent column sizes")
    }
}

impl SpanOracle for FloatOracle {
    fn spans(&self, seq: &[usize]) -> bool {
        seq.len() >= self.n && linalg::rank(&self.matrix(seq), self.tol) == self.n
    }
}

struct ExactOracle {
    n: usize,
    powers: Vec<Vec<Vec<BigRational>>>,
}

impl ExactOracle {
    fn new(sys: &ExactSystem, len: usize) -> Self {
        let m = sys.b.cols();
        let mut powers = Vec::with_capacity(len);
        let mut current: Vec<Vec<BigRational>> = (0..m).map(|i| sys.b.column(i)).collect();
        for _ in 0..len {
            let next = current
                .iter()
                .map(|v| sys.a.mul_vec(v).expect("square A"))
                .collect();
            powers.push(std::mem::replace(&mut current, next));
        }
        ExactOracle {
            n: sys.a.rows(),
            powers,
        }
    }
}

impl SpanOracle for ExactOracle {
    fn spans(&self, seq: &[usize]) -> bool {
        let k = seq.len();
        if k < self.n {
            return false;
        }
        let cols: Vec<Vec<BigRational>> = (0..k)
            .map(|j| self.powers[j][seq[k - 1 - j]].clone())
            .collect();
        RationalMatrix::from_columns(self.n, &cols)
            .expect("consistent column sizes")
            .rank()
            == self.n
    }
}

fn oracle_for(sys: &LtiSystem, len: usize, opts: &CheckOptions) -> Box<dyn SpanOracle> {
    if opts.exact {
        Box::new(ExactOracle::new(&sys.exact_or_converted(), len))
    } else {
        Box::new(FloatOracle::new(sys, len, opts.tol))
    }
}

/// Whether the given sequence's vector set spans `R^n` (input side).
pub fn sequence_spans(
    sys: &LtiSystem,
    gamma: &ChannelSequence,
    opts: &CheckOptions,
) -> Result<bool> {
    check_sequence(gamma, sys.m())?;
    Ok(oracle_for(sys, gamma.len(), opts).spans(gamma.indices()))
}

/// Rank of the vector set reached by `gamma` (input side, float).
pub fn sequence_rank(sys: &LtiSystem, gamma: &ChannelSequence, tol: f64) -> Result<usize> {
    check_sequence(gamma, sys.m())?;
    let oracle = FloatOracle::new(sys, gamma.len(), tol);
    if gamma.is_empty() {
        return Ok(0);
    }
    Ok(linalg::rank(&oracle.matrix(gamma.indices()), tol))
}

fn check_sequence(gamma: &ChannelSequence, channels: usize) -> Result<()> {
    match gamma.indices().iter().find(|&&i| i >= channels) {
        Some(&bad) => Err(Error::ChannelOutOfRange {
            index: bad + 1,
            count: channels,
        }),
        None => Ok(()),
    }
}

fn controllability_matrix(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows();
    let mut cols = Vec::with_capacity(n * b.cols());
    let mut block: Vec<Vector> = (0..b.cols()).map(|i| b.column(i)).collect();
    for _ in 0..n {
        let next = block
            .iter()
            .map(|v| a.mul_vec(v).expect("square A"))
            .collect();
        cols.extend(std::mem::replace(&mut block, next));
    }
    Matrix::from_columns(n, &cols).expect("consistent column sizes")
}

fn exact_controllability_rank(a: &RationalMatrix, b: &RationalMatrix) -> usize {
    let n = a.rows();
    let mut cols = Vec::new();
    let mut block: Vec<Vec<BigRational>> = (0..b.cols()).map(|i| b.column(i)).collect();
    for _ in 0..n {
        let next = block
            .iter()
            .map(|v| a.mul_vec(v).expect("square A"))
            .collect();
        cols.extend(std::mem::replace(&mut block, next));
    }
    RationalMatrix::from_columns(n, &cols)
        .expect("consistent column sizes")
        .rank()
}

/// Kalman rank test `rank [B, AB, ..., A^(n-1) B] = n`.
pub fn kalman_controllable(sys: &LtiSystem, tol: f64) -> bool {
    linalg::rank(&controllability_matrix(&sys.a, &sys.b), tol) == sys.n()
}

pub fn kalman_controllable_exact(sys: &LtiSystem) -> bool {
    let e = sys.exact_or_converted();
    exact_controllability_rank(&e.a, &e.b) == sys.n()
}

/// Kalman observability, via controllability of `(A^T, C^T)`.
pub fn kalman_observable(sys: &LtiSystem, tol: f64) -> Result<bool> {
    Ok(kalman_controllable(&sys.dual()?, tol))
}

pub fn kalman_observable_exact(sys: &LtiSystem) -> Result<bool> {
    Ok(kalman_controllable_exact(&sys.dual()?))
}

pub const SINGULAR_A_WARNING: &str =
    "A is singular; the random channel theory assumes an invertible A";

#[derive(Debug, Clone, PartialEq)]
pub struct RcVerdict {
    pub holds: bool,
    /// First failing covering sequence, in time order.
    pub counterexample: Option<ChannelSequence>,
    pub sequences_tested: u64,
    pub warnings: Vec<String>,
}

/// Number of covering length-`len` sequences over `channels` labels.
fn covering_count(len: usize, channels: usize) -> BigUint {
    factorial(channels) * stirling2(len, channels)
}

fn check_cap(required: &BigUint, cap: u64) -> Result<()> {
    if *required > BigUint::from(cap) {
        return Err(Error::CapExceeded {
            required: required.to_u128().unwrap_or(u128::MAX),
            cap,
        });
    }
    Ok(())
}

/// Random channel controllability.
///
/// Covering sequences are generated depth first in lexicographic order of
/// the column tuple `(g(n-1), g(n-2), ..., g(0))`, i.e. the order the
/// vectors `b, Ab, A^2 b, ...` appear, so the reported counterexample is
/// the first failure in that order.
pub fn is_rcc(sys: &LtiSystem, tol: f64) -> Result<RcVerdict> {
    is_rcc_with(
        sys,
        &CheckOptions {
            tol,
            cap: cap_from_env(),
            exact: false,
        },
    )
}

pub fn is_rcc_with(sys: &LtiSystem, opts: &CheckOptions) -> Result<RcVerdict> {
    let n = sys.n();
    let m = sys.m();
    if m > n {
        return Err(Error::invalid(format!(
            "{m} channels cannot all appear in a length-{n} sequence"
        )));
    }
    check_cap(&covering_count(n, m), opts.cap)?;
    let oracle = oracle_for(sys, n, opts);

    // Work items: column-tuple prefixes that can still be completed.
    let depth = n.min(2);
    let prefixes = extendable_prefixes(n, m, depth);
    let results: Vec<(u64, Option<Vec<usize>>)> = prefixes
        .par_iter()
        .map(|prefix| {
            let mut cols = prefix.clone();
            let mask = prefix.iter().fold(0u64, |acc, &c| acc | 1 << c);
            let mut tested = 0;
            let mut first = None;
            covering_dfs(n, m, &mut cols, mask, &mut |cols| {
                tested += 1;
                let gamma: Vec<usize> = cols.iter().rev().copied().collect();
                if first.is_none() && !oracle.spans(&gamma) {
                    first = Some(gamma);
                }
            });
            (tested, first)
        })
        .collect();

    let sequences_tested = results.iter().map(|r| r.0).sum();
    let counterexample = results
        .into_iter()
        .find_map(|r| r.1)
        .map(|g| ChannelSequence { indices: g });
    let mut warnings = Vec::new();
    if sys.a_singular {
        warnings.push(SINGULAR_A_WARNING.to_string());
    }
    Ok(RcVerdict {
        holds: counterexample.is_none(),
        counterexample,
        sequences_tested,
        warnings,
    })
}

fn extendable_prefixes(n: usize, m: usize, depth: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for pos in 0..depth {
        let mut next = Vec::new();
        for p in &out {
            for c in 0..m {
                let mut q: Vec<usize> = p.clone();
                q.push(c);
                let seen = q.iter().fold(0u64, |acc, &x| acc | 1 << x).count_ones() as usize;
                if m - seen <= n - (pos + 1) {
                    next.push(q);
                }
            }
        }
        out = next;
    }
    out
}

fn covering_dfs(
    n: usize,
    m: usize,
    cols: &mut Vec<usize>,
    mask: u64,
    visit: &mut dyn FnMut(&[usize]),
) {
    if cols.len() == n {
        visit(cols);
        return;
    }
    let remaining = n - cols.len();
    for c in 0..m {
        let new_mask = mask | 1 << c;
        let still_missing = m - new_mask.count_ones() as usize;
        if still_missing > remaining - 1 {
            continue;
        }
        cols.push(c);
        covering_dfs(n, m, cols, new_mask, visit);
        cols.pop();
    }
}

/// Random channel observability: [`is_rcc`] on the dual pair.
pub fn is_rco(sys: &LtiSystem, tol: f64) -> Result<RcVerdict> {
    is_rcc(&sys.dual()?, tol)
}

pub fn is_rco_with(sys: &LtiSystem, opts: &CheckOptions) -> Result<RcVerdict> {
    is_rcc_with(&sys.dual()?, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub enum FractionValue {
    Exact(BigRational),
    Estimate { value: f64, stderr: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningFraction {
    pub k: usize,
    /// Number of channels sequences were drawn from.
    pub channels: usize,
    pub spanning: u64,
    /// `channels^k` for exact enumeration, the trial count otherwise.
    pub total: BigUint,
    pub value: FractionValue,
}

impl SpanningFraction {
    pub fn value_f64(&self) -> f64 {
        match &self.value {
            FractionValue::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            FractionValue::Estimate { value, .. } => *value,
        }
    }

    /// Unreduced formula value `m! S(k, m) / m^k` as (numerator, denominator).
    pub fn formula_parts(&self) -> (BigUint, BigUint) {
        let m = self.channels;
        (
            covering_count(self.k, m),
            BigUint::from(m).pow(self.k as u32),
        )
    }

    pub fn compare_with_formula(&self) -> FormulaComparison {
        let formula = span_prob_exact(self.channels, self.k);
        match &self.value {
            FractionValue::Exact(r) => match r.cmp(&formula) {
                std::cmp::Ordering::Equal => FormulaComparison::Equality,
                std::cmp::Ordering::Less => FormulaComparison::Strict,
                std::cmp::Ordering::Greater => FormulaComparison::Exceeds,
            },
            FractionValue::Estimate { value, stderr } => {
                let f = formula.to_f64().unwrap_or(f64::NAN);
                let band = 4.0 * stderr;
                if (value - f).abs() <= band {
                    FormulaComparison::Consistent
                } else if *value < f {
                    FormulaComparison::Strict
                } else {
                    FormulaComparison::Exceeds
                }
            }
        }
    }
}

/// How a spanning fraction relates to `m! S(k, m) / m^k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormulaComparison {
    Equality,
    Strict,
    Exceeds,
    /// Monte Carlo estimate within four standard errors of the formula.
    Consistent,
}

impl fmt::Display for FormulaComparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FormulaComparison::Equality => "equality",
            FormulaComparison::Strict => "strict",
            FormulaComparison::Exceeds => "exceeds",
            FormulaComparison::Consistent => "consistent",
        })
    }
}

/// Block of sequence indices handled per parallel work item.
const ENUM_BLOCK: u64 = 4096;

/// Exact fraction of all `channels^k` sequences whose vector set spans.
pub fn spanning_fraction_exact(
    sys: &LtiSystem,
    k: usize,
    side: Side,
    opts: &CheckOptions,
) -> Result<SpanningFraction> {
    let sys = sys.side(side)?;
    let m = sys.m();
    let total = BigUint::from(m).pow(k as u32);
    let exact_value = |spanning: u64, total: &BigUint| {
        FractionValue::Exact(BigRational::new(
            BigInt::from(spanning),
            BigInt::from(total.clone()),
        ))
    };
    if k < sys.n() {
        return Ok(SpanningFraction {
            k,
            channels: m,
            spanning: 0,
            value: exact_value(0, &total),
            total,
        });
    }
    check_cap(&total, opts.cap)?;
    let count = total.to_u64().expect("bounded by cap");
    let oracle = oracle_for(&sys, k, opts);
    let blocks = count.div_ceil(ENUM_BLOCK);
    let spanning: u64 = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let start = blk * ENUM_BLOCK;
            let end = (start + ENUM_BLOCK).min(count);
            let mut seq = vec![0usize; k];
            (start..end)
                .filter(|&idx| {
                    decode_sequence(idx, m, &mut seq);
                    oracle.spans(&seq)
                })
                .count() as u64
        })
        .sum();
    Ok(SpanningFraction {
        k,
        channels: m,
        spanning,
        value: exact_value(spanning, &total),
        total,
    })
}

/// Base-`m` digits of `idx`, most significant first.
fn decode_sequence(mut idx: u64, m: usize, seq: &mut [usize]) {
    for slot in seq.iter_mut().rev() {
        *slot = (idx % m as u64) as usize;
        idx /= m as u64;
    }
}

const MC_BATCH: u64 = 1024;

/// Monte Carlo spanning frequency over `trials` uniform sequences. Trial
/// `t` draws from stream `t` of `seed`.
pub fn spanning_fraction_mc(
    sys: &LtiSystem,
    k: usize,
    side: Side,
    trials: u64,
    seed: u64,
    tol: f64,
) -> Result<SpanningFraction> {
    if trials == 0 {
        return Err(Error::invalid("need at least one trial"));
    }
    let sys = sys.side(side)?;
    let m = sys.m();
    let spanning = if k < sys.n() {
        0
    } else {
        let oracle = FloatOracle::new(&sys, k, tol);
        let batches = trials.div_ceil(MC_BATCH);
        (0..batches)
            .into_par_iter()
            .map(|b| {
                let mut seq = vec![0usize; k];
                let mut hits = 0u64;
                for t in (b * MC_BATCH)..((b + 1) * MC_BATCH).min(trials) {
                    let mut r = rng::stream(seed, t);
                    for s in seq.iter_mut() {
                        *s = rng::uniform_index(&mut r, m);
                    }
                    if oracle.spans(&seq) {
                        hits += 1;
                    }
                }
                hits
            })
            .sum()
    };
    let p = spanning as f64 / trials as f64;
    let stderr = (p * (1.0 - p) / trials as f64).sqrt();
    Ok(SpanningFraction {
        k,
        channels: m,
        spanning,
        total: BigUint::from(trials),
        value: FractionValue::Estimate { value: p, stderr },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Steering {
    /// Scalar input applied on the active channel, `u(0..k)` in time order.
    pub inputs: Vec<f64>,
    /// `|x(k) - xf|` after running the inputs forward.
    pub residual: f64,
}

/// Min-norm inputs steering `x0` toward `xf` along `gamma`.
pub fn steer(
    sys: &LtiSystem,
    gamma: &ChannelSequence,
    x0: &[f64],
    xf: &[f64],
    tol: f64,
) -> Result<Steering> {
    let n = sys.n();
    if gamma.is_empty() {
        return Err(Error::invalid("steering needs at least one step"));
    }
    if x0.len() != n || xf.len() != n {
        return Err(Error::dims(format!(
            "states must have dimension {n}, got {} and {}",
            x0.len(),
            xf.len()
        )));
    }
    check_sequence(gamma, sys.m())?;
    let k = gamma.len();
    let oracle = FloatOracle::new(sys, k, tol);
    let reach = oracle.matrix(gamma.indices());
    let drift = linalg::krylov_column(&sys.a, x0, k)?;
    let target: Vec<f64> = xf.iter().zip(drift.iter()).map(|(f, d)| f - d).collect();
    let w = linalg::solve_min_norm(&reach, &target, tol)?;
    // column j carries u(k-1-j)
    let inputs: Vec<f64> = (0..k).map(|t| w[k - 1 - t]).collect();
    let states = run_schedule(sys, gamma, x0, &inputs)?;
    let last = states.last().expect("k >= 1 states");
    let residual = last.sub(&Vector::new(xf.to_vec())).norm();
    Ok(Steering { inputs, residual })
}

/// Runs `x(t+1) = A x(t) + b_g(t) u(t)` and returns `x(0..=k)`.
pub fn run_schedule(
    sys: &LtiSystem,
    gamma: &ChannelSequence,
    x0: &[f64],
    inputs: &[f64],
) -> Result<Vec<Vector>> {
    if inputs.len() != gamma.len() {
        return Err(Error::dims("one input per scheduled step"));
    }
    if x0.len() != sys.n() {
        return Err(Error::dims("initial state dimension"));
    }
    check_sequence(gamma, sys.m())?;
    let mut states = Vec::with_capacity(gamma.len() + 1);
    let mut x = Vector::new(x0.to_vec());
    for (&ch, &u) in gamma.indices().iter().zip(inputs) {
        let mut next = sys.a.mul_vec(&x)?;
        for i in 0..sys.n() {
            next[i] += sys.b.get(i, ch) * u;
        }
        states.push(std::mem::replace(&mut x, next));
    }
    states.push(x);
    Ok(states)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub x0: Vector,
    /// Output misfit `|O x0 - y|`.
    pub residual: f64,
}

/// Least-squares initial state from zero-input outputs
/// `y(j) = c_g(j) A^j x(0)`.
pub fn reconstruct_state(
    sys: &LtiSystem,
    gamma: &ChannelSequence,
    y_seq: &[f64],
    tol: f64,
) -> Result<Reconstruction> {
    let c = sys.require_c()?;
    if gamma.len() != y_seq.len() {
        return Err(Error::dims(format!(
            "{} channels for {} measurements",
            gamma.len(),
            y_seq.len()
        )));
    }
    check_sequence(gamma, c.rows())?;
    let n = sys.n();
    let at = sys.a.transpose();
    let rows: Vec<Vector> = gamma
        .indices()
        .iter()
        .enumerate()
        .map(|(j, &ch)| linalg::krylov_column(&at, &c.row(ch), j))
        .collect::<Result<_>>()?;
    let stack = Matrix::from_columns(n, &rows)?.transpose();
    let x0 = linalg::solve_min_norm(&stack, y_seq, tol)?;
    let fitted = stack.mul_vec(&x0)?;
    let residual = fitted.sub(&Vector::new(y_seq.to_vec())).norm();
    Ok(Reconstruction { x0, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Zero;

    fn sys(a: Matrix, b: &[&[f64]], c: Option<&[&[f64]]>) -> LtiSystem {
        let rows = |r: &[&[f64]]| {
            Matrix::from_rows(&r.iter().map(|x| x.to_vec()).collect::<Vec<_>>()).unwrap()
        };
        LtiSystem::new(a, rows(b), c.map(rows)).unwrap()
    }

    fn shared_channel(l: [f64; 3]) -> LtiSystem {
        sys(
            Matrix::diag(&l),
            &[&[0.0, 1.0], &[1.0, 0.0], &[1.0, 0.0]],
            None,
        )
    }

    fn overlapping_channels(l: [f64; 3]) -> LtiSystem {
        sys(
            Matrix::diag(&l),
            &[&[0.0, 1.0], &[1.0, 1.0], &[1.0, 0.0]],
            None,
        )
    }

    fn ratio(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn dimension_checks() {
        assert!(LtiSystem::new(Matrix::zeros(2, 3), Matrix::zeros(2, 1), None).is_err());
        assert!(LtiSystem::new(Matrix::identity(2), Matrix::zeros(3, 1), None).is_err());
        assert!(LtiSystem::new(Matrix::identity(2), Matrix::zeros(2, 0), None).is_err());
        assert!(LtiSystem::new(
            Matrix::identity(2),
            Matrix::zeros(2, 1),
            Some(Matrix::zeros(1, 3))
        )
        .is_err());
        let s = LtiSystem::new(Matrix::identity(2), Matrix::zeros(2, 1), None).unwrap();
        assert!(s.dual().is_err());
        assert!(!s.a_is_singular());
    }

    #[test]
    fn channel_sequence_labels() {
        let g = ChannelSequence::from_one_based(&[2, 2, 1], 2).unwrap();
        assert_eq!(g.indices(), &[1, 1, 0]);
        assert_eq!(g.to_string(), "(2,2,1)");
        assert!(matches!(
            ChannelSequence::from_one_based(&[0], 2),
            Err(Error::ChannelOutOfRange { index: 0, count: 2 })
        ));
        assert!(ChannelSequence::from_one_based(&[3], 2).is_err());
        assert!(ChannelSequence::new(vec![2], 2).is_err());
    }

    #[test]
    fn kalman_examples() {
        let diagonal = sys(
            Matrix::diag(&[2.0, 3.0, 5.0]),
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            None,
        );
        assert!(kalman_controllable(&diagonal, 1e-9));
        assert!(!kalman_controllable(&shared_channel([2.0, 3.0, 3.0]), 1e-9));
        assert!(kalman_controllable(&shared_channel([2.0, 3.0, 5.0]), 1e-9));
        let unreachable = sys(Matrix::diag(&[1.0, 2.0]), &[&[1.0], &[0.0]], None);
        assert!(!kalman_controllable(&unreachable, 1e-9));
        assert!(!kalman_controllable_exact(&unreachable));

        let obs = sys(
            Matrix::diag(&[2.0, 3.0]),
            &[&[1.0], &[1.0]],
            Some(&[&[1.0, 0.0], &[0.0, 1.0]]),
        );
        assert!(kalman_observable(&obs, 1e-9).unwrap());
        let blind = sys(
            Matrix::diag(&[2.0, 3.0]),
            &[&[1.0], &[1.0]],
            Some(&[&[0.0, 0.0]]),
        );
        assert!(!kalman_observable(&blind, 1e-9).unwrap());
        assert!(!kalman_observable_exact(&blind).unwrap());
    }

    #[test]
    fn covering_enumeration_counts() {
        for n in 1..=6usize {
            for m in 1..=n {
                let mut count = 0u64;
                let mut order = Vec::new();
                for p in extendable_prefixes(n, m, n.min(2)) {
                    let mask = p.iter().fold(0u64, |acc, &c| acc | 1 << c);
                    let mut cols = p.clone();
                    covering_dfs(n, m, &mut cols, mask, &mut |c| {
                        count += 1;
                        order.push(c.to_vec());
                    });
                }
                assert_eq!(BigUint::from(count), covering_count(n, m), "n={n} m={m}");
                assert!(order.windows(2).all(|w| w[0] < w[1]), "lexicographic order");
            }
        }
    }

    #[test]
    fn rcc_examples() {
        let diagonal = sys(
            Matrix::diag(&[2.0, 3.0, 5.0]),
            &[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]],
            None,
        );
        let v = is_rcc_with(&diagonal, &CheckOptions::default()).unwrap();
        assert!(v.holds);
        assert_eq!(v.sequences_tested, 6);

        let v = is_rcc_with(&shared_channel([2.0, 3.0, 5.0]), &CheckOptions::default()).unwrap();
        assert!(!v.holds);
        assert_eq!(v.counterexample.unwrap().one_based(), vec![2, 2, 1]);
        assert_eq!(v.sequences_tested, 6);

        let v = is_rcc_with(
            &overlapping_channels([2.0, 3.0, 5.0]),
            &CheckOptions::default(),
        )
        .unwrap();
        assert!(v.holds, "{v:?}");
    }

    #[test]
    fn rcc_exact_mode_matches() {
        let opts = CheckOptions {
            exact: true,
            ..Default::default()
        };
        assert!(
            is_rcc_with(&overlapping_channels([2.0, 3.0, 5.0]), &opts)
                .unwrap()
                .holds
        );
        let v = is_rcc_with(&shared_channel([2.0, 3.0, 5.0]), &opts).unwrap();
        assert_eq!(v.counterexample.unwrap().one_based(), vec![2, 2, 1]);
    }

    #[test]
    fn rcc_rejections_and_warnings() {
        let wide = sys(
            Matrix::identity(2),
            &[&[1.0, 0.0, 1.0], &[0.0, 1.0, 1.0]],
            None,
        );
        assert!(matches!(
            is_rcc(&wide, 1e-9),
            Err(Error::InvalidArgument(_))
        ));

        let big = LtiSystem::new(Matrix::identity(8), Matrix::identity(8), None).unwrap();
        let opts = CheckOptions {
            cap: 1000,
            ..Default::default()
        };
        assert!(matches!(
            is_rcc_with(&big, &opts),
            Err(Error::CapExceeded {
                required: 40320,
                cap: 1000
            })
        ));

        let zero_mode = sys(Matrix::diag(&[2.0, 0.0]), &[&[1.0, 0.0], &[0.0, 1.0]], None);
        let v = is_rcc(&zero_mode, 1e-9).unwrap();
        assert!(!v.holds);
        assert_eq!(v.warnings, vec![SINGULAR_A_WARNING.to_string()]);
    }

    #[test]
    fn rco_via_duality() {
        let b34 = [[0.0, 1.0], [1.0, 1.0], [1.0, 0.0]];
        let c: Vec<Vec<f64>> = (0..2)
            .map(|i| (0..3).map(|j| b34[j][i]).collect())
            .collect();
        let s = LtiSystem::new(
            Matrix::diag(&[2.0, 3.0, 5.0]),
            Matrix::identity(3),
            Some(Matrix::from_rows(&c).unwrap()),
        )
        .unwrap();
        assert!(is_rco(&s, 1e-9).unwrap().holds);

        let b33 = [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0]];
        let c: Vec<Vec<f64>> = (0..2)
            .map(|i| (0..3).map(|j| b33[j][i]).collect())
            .collect();
        let s = LtiSystem::new(
            Matrix::diag(&[2.0, 3.0, 5.0]),
            Matrix::identity(3),
            Some(Matrix::from_rows(&c).unwrap()),
        )
        .unwrap();
        assert!(!is_rco(&s, 1e-9).unwrap().holds);

        let s = LtiSystem::new(
            Matrix::diag(&[2.0, -1.0]),
            Matrix::identity(2),
            Some(Matrix::identity(2)),
        )
        .unwrap();
        assert!(is_rco(&s, 1e-9).unwrap().holds);
    }

    #[test]
    fn fraction_examples() {
        let diagonal =
            LtiSystem::new(Matrix::diag(&[2.0, 3.0, 5.0]), Matrix::identity(3), None).unwrap();
        let f =
            spanning_fraction_exact(&diagonal, 3, Side::Input, &CheckOptions::default()).unwrap();
        assert_eq!(f.spanning, 6);
        assert_eq!(f.total, BigUint::from(27u32));
        assert_eq!(f.value, FractionValue::Exact(ratio(6, 27)));
        assert_eq!(f.compare_with_formula(), FormulaComparison::Equality);

        let two = LtiSystem::new(Matrix::diag(&[2.0, 3.0]), Matrix::identity(2), None).unwrap();
        let f = spanning_fraction_exact(&two, 1, Side::Input, &CheckOptions::default()).unwrap();
        assert_eq!(f.value, FractionValue::Exact(BigRational::zero()));

        let f = spanning_fraction_exact(
            &shared_channel([2.0, 3.0, 5.0]),
            3,
            Side::Input,
            &CheckOptions::default(),
        )
        .unwrap();
        assert_eq!(f.compare_with_formula(), FormulaComparison::Strict);
        let (num, den) = f.formula_parts();
        assert_eq!((num, den), (BigUint::from(6u32), BigUint::from(8u32)));
    }

    #[test]
    fn fraction_cap() {
        let s = LtiSystem::new(Matrix::identity(3), Matrix::identity(3), None).unwrap();
        let opts = CheckOptions {
            cap: 100,
            ..Default::default()
        };
        assert!(matches!(
            spanning_fraction_exact(&s, 5, Side::Input, &opts),
            Err(Error::CapExceeded {
                required: 243,
                cap: 100
            })
        ));
        // short sequences never span and skip the cap
        assert!(spanning_fraction_exact(&s, 2, Side::Input, &opts).is_ok());
    }

    #[test]
    fn mc_short_sequences_are_zero() {
        let s = LtiSystem::new(Matrix::identity(3), Matrix::identity(3), None).unwrap();
        let f = spanning_fraction_mc(&s, 2, Side::Input, 100, 1, 1e-9).unwrap();
        assert_eq!(
            f.value,
            FractionValue::Estimate {
                value: 0.0,
                stderr: 0.0
            }
        );
        assert!(spanning_fraction_mc(&s, 2, Side::Input, 0, 1, 1e-9).is_err());
    }

    #[test]
    fn steering_examples() {
        let s = LtiSystem::new(Matrix::diag(&[2.0, 3.0]), Matrix::identity(2), None).unwrap();
        let g = ChannelSequence::from_one_based(&[1, 2], 2).unwrap();
        let r = steer(&s, &g, &[0.0, 0.0], &[2.0, 3.0], 1e-9).unwrap();
        assert!((r.inputs[0] - 1.0).abs() < 1e-12 && (r.inputs[1] - 3.0).abs() < 1e-12);
        assert!(r.residual < 1e-12);

        let r = steer(&s, &g, &[0.0, 0.0], &[0.0, 0.0], 1e-9).unwrap();
        assert_eq!(r.inputs, vec![0.0, 0.0]);
        assert_eq!(r.residual, 0.0);

        let shared = shared_channel([2.0, 3.0, 5.0]);
        let g = ChannelSequence::from_one_based(&[2, 2, 1], 2).unwrap();
        let r = steer(&shared, &g, &[0.0; 3], &[0.0, 1.0, -1.0], 1e-9).unwrap();
        assert!(r.residual > 0.5);

        assert!(steer(&s, &ChannelSequence::default(), &[0.0; 2], &[0.0; 2], 1e-9).is_err());
        assert!(steer(
            &s,
            &ChannelSequence::from_one_based(&[1], 2).unwrap(),
            &[0.0; 3],
            &[0.0; 2],
            1e-9
        )
        .is_err());
    }

    #[test]
    fn reconstruction_examples() {
        let s = LtiSystem::new(
            Matrix::diag(&[2.0, 3.0]),
            Matrix::identity(2),
            Some(Matrix::identity(2)),
        )
        .unwrap();
        let g = ChannelSequence::from_one_based(&[1, 2], 2).unwrap();
        let r = reconstruct_state(&s, &g, &[5.0, 21.0], 1e-9).unwrap();
        assert!((r.x0[0] - 5.0).abs() < 1e-12 && (r.x0[1] - 7.0).abs() < 1e-12);
        assert!(r.residual < 1e-12);

        let r = reconstruct_state(&s, &g, &[0.0, 0.0], 1e-9).unwrap();
        assert_eq!(r.x0.into_vec(), vec![0.0, 0.0]);

        assert!(reconstruct_state(&s, &g, &[1.0], 1e-9).is_err());
    }

    #[test]
    fn sequence_rank_of_counterexample() {
        let shared = shared_channel([2.0, 3.0, 5.0]);
        let g = ChannelSequence::from_one_based(&[2, 2, 1], 2).unwrap();
        assert_eq!(sequence_rank(&shared, &g, 1e-9).unwrap(), 2);
        assert!(!sequence_spans(&shared, &g, &CheckOptions::default()).unwrap());
    }
}
