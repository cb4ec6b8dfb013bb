//! Monte Carlo simulation of closed loops under random channel access.
//!
//! The scalar building block is the Bernoulli switching process
//!
//! ```text
//!     x(k+1) = a x(k)  with probability p
//!              b x(k)  with probability 1 - p
//! ```
//!
//! whose mean and second moment evolve by the multipliers
//! `m1 = p a + (1-p) b` and `m2 = p a^2 + (1-p) b^2`.
//!
//! Ensembles are split into fixed-size batches. Trial `t` always draws from
//! stream `t` of the master seed and batch accumulators are merged in batch
//! order, so results are bitwise identical for any thread count.

use rand_core::RngCore;
use rayon::prelude::*;

use crate::channels::LtiSystem;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::rng;

/// Magnitude above which a trajectory is clamped and flagged.
pub const OVERFLOW_LIMIT: f64 = 1e300;

const BATCH: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchProcessParams {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

impl SwitchProcessParams {
    pub fn new(a: f64, b: f64, p: f64) -> Result<Self> {
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::invalid("switch multipliers must be finite"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        Ok(SwitchProcessParams { a, b, p })
    }
}

/// `(p a + (1-p) b, p a^2 + (1-p) b^2)`.
pub fn moment_multipliers(params: &SwitchProcessParams) -> (f64, f64) {
    let SwitchProcessParams { a, b, p } = *params;
    (p * a + (1.0 - p) * b, p * a * a + (1.0 - p) * b * b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StabilityReport {
    pub mean_stable: bool,
    pub second_moment_stable: bool,
    /// `m1 < 0`: the mean alternates in sign.
    pub oscillatory_mean: bool,
}

pub fn stability_report(params: &SwitchProcessParams) -> StabilityReport {
    let (m1, m2) = moment_multipliers(params);
    StabilityReport {
        mean_stable: m1.abs() < 1.0,
        second_moment_stable: m2.abs() < 1.0,
        oscillatory_mean: m1 < 0.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Moment {
    First,
    Second,
}

/// Largest open-loop mode whose moment stays bounded when its channel is
/// one of `n` chosen uniformly: `n/(n-1)` for the mean and `sqrt(n/(n-1))`
/// for the second moment.
pub fn max_stable_mode(n: usize, moment: Moment) -> Result<f64> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "need at least two channels, got {n}"
        )));
    }
    let ratio = n as f64 / (n as f64 - 1.0);
    Ok(match moment {
        Moment::First => ratio,
        Moment::Second => ratio.sqrt(),
    })
}

/// Trajectory of the switching process for a given branch sequence;
/// `true` selects the `a` branch.
pub fn bernoulli_from_branches(
    params: &SwitchProcessParams,
    x0: f64,
    branches: &[bool],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(branches.len() + 1);
    let mut x = x0;
    out.push(x);
    for &take_a in branches {
        x *= if take_a { params.a } else { params.b };
        out.push(x);
    }
    out
}

fn draw_branches<R: RngCore>(rng: &mut R, p: f64, horizon: usize) -> Vec<bool> {
    (0..horizon).map(|_| rng::unit_f64(rng) < p).collect()
}

/// `x(0..=horizon)` of the switching process, drawing from stream 0 of
/// `seed`.
pub fn simulate_bernoulli(
    params: &SwitchProcessParams,
    x0: f64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut r = rng::stream(seed, 0);
    Ok(bernoulli_from_branches(
        params,
        x0,
        &draw_branches(&mut r, params.p, horizon),
    ))
}

/// Running first and second moments of a sample (Welford updates, merged
/// with Chan's pairwise formula).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct MomentAcc {
    n: f64,
    mean: f64,
    m2: f64,
    sq_mean: f64,
    sq_m2: f64,
    max_abs: f64,
}

impl MomentAcc {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
        let s = x * x;
        let ds = s - self.sq_mean;
        self.sq_mean += ds / self.n;
        self.sq_m2 += ds * (s - self.sq_mean);
        self.max_abs = self.max_abs.max(x.abs());
    }

    fn merge(&mut self, o: &MomentAcc) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.mean += d * o.n / n;
        let ds = o.sq_mean - self.sq_mean;
        self.sq_m2 += o.sq_m2 + ds * ds * self.n * o.n / n;
        self.sq_mean += ds * o.n / n;
        self.n = n;
        self.max_abs = self.max_abs.max(o.max_abs);
    }

    fn variance(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            self.m2 / (self.n - 1.0)
        }
    }

    fn sq_variance(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            self.sq_m2 / (self.n - 1.0)
        }
    }
}

/// Per-step sample moments of a scalar ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMoments {
    pub trials: u64,
    pub mean: Vec<f64>,
    pub mean_stderr: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub second_moment_stderr: Vec<f64>,
}

/// Ensemble of switching-process trajectories; trial `t` uses stream `t`.
pub fn bernoulli_ensemble(
    params: &SwitchProcessParams,
    x0: f64,
    horizon: usize,
    trials: u64,
    seed: u64,
) -> Result<ScalarMoments> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let batches: Vec<Vec<MomentAcc>> = (0..trials.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![MomentAcc::default(); horizon + 1];
            for t in (b * BATCH)..((b + 1) * BATCH).min(trials) {
                let mut r = rng::stream(seed, t);
                let traj =
                    bernoulli_from_branches(params, x0, &draw_branches(&mut r, params.p, horizon));
                for (a, x) in acc.iter_mut().zip(traj) {
                    a.push(x);
                }
            }
            acc
        })
        .collect();
    let acc = merge_in_order(batches, horizon + 1);
    let n = trials as f64;
    Ok(ScalarMoments {
        trials,
        mean: acc.iter().map(|a| a.mean).collect(),
        mean_stderr: acc.iter().map(|a| (a.variance() / n).sqrt()).collect(),
        second_moment: acc.iter().map(|a| a.sq_mean).collect(),
        second_moment_stderr: acc.iter().map(|a| (a.sq_variance() / n).sqrt()).collect(),
    })
}

fn merge_in_order(batches: Vec<Vec<MomentAcc>>, len: usize) -> Vec<MomentAcc> {
    let mut total = vec![MomentAcc::default(); len];
    for batch in &batches {
        for (t, b) in total.iter_mut().zip(batch) {
            t.merge(b);
        }
    }
    total
}

/// Which channels are active at each step.
#[derive(Debug, Clone, PartialEq)]
pub enum SchedulerSpec {
    /// Exactly one channel per step; uniform when `weights` is `None`.
    UniformSingle { weights: Option<Vec<f64>> },
    /// Each channel independently active with probability `p`.
    BernoulliPattern { p: f64 },
}

impl SchedulerSpec {
    pub fn validate(&self, channels: usize) -> Result<()> {
        match self {
            SchedulerSpec::UniformSingle { weights: None } => Ok(()),
            SchedulerSpec::UniformSingle { weights: Some(w) } => {
                if w.len() != channels {
                    return Err(Error::dims(format!(
                        "{} scheduler weights for {channels} channels",
                        w.len()
                    )));
                }
                if w.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::invalid("scheduler weights must lie in [0, 1]"));
                }
                let sum: f64 = w.iter().sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(Error::invalid(format!(
                        "scheduler weights sum to {sum}, not 1"
                    )));
                }
                Ok(())
            }
            SchedulerSpec::BernoulliPattern { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::invalid(format!(
                        "activity probability {p} outside [0, 1]"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Probability that channel `j` is active at a given step.
    pub fn activity(&self, j: usize, channels: usize) -> f64 {
        match self {
            SchedulerSpec::UniformSingle { weights: None } => 1.0 / channels as f64,
            SchedulerSpec::UniformSingle { weights: Some(w) } => w[j],
            SchedulerSpec::BernoulliPattern { p } => *p,
        }
    }

    fn draw<R: RngCore>(&self, rng: &mut R, channels: usize, out: &mut Vec<usize>) {
        out.clear();
        match self {
            SchedulerSpec::UniformSingle { weights: None } => {
                out.push(rng::uniform_index(rng, channels));
            }
            SchedulerSpec::UniformSingle { weights: Some(w) } => {
                let u = rng::unit_f64(rng);
                let mut cum = 0.0;
                let last = w.iter().rposition(|&p| p > 0.0).unwrap_or(0);
                let pick = w
                    .iter()
                    .position(|&p| {
                        cum += p;
                        u < cum
                    })
                    .map_or(last, |j| j.min(last));
                out.push(pick);
            }
            SchedulerSpec::BernoulliPattern { p } => {
                for j in 0..channels {
                    if rng::unit_f64(rng) < *p {
                        out.push(j);
                    }
                }
            }
        }
    }
}

/// Closed loop with per-channel state feedback: while channel `j` is
/// active its input is `u_j = k_j x`.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub system: LtiSystem,
    /// `m x n`; row `j` is the gain `k_j`.
    pub gains: Matrix,
    pub scheduler: SchedulerSpec,
    pub x0: Vector,
    pub horizon: usize,
}

impl SimConfig {
    pub fn new(
        system: LtiSystem,
        gains: Matrix,
        scheduler: SchedulerSpec,
        x0: Vector,
        horizon: usize,
    ) -> Result<Self> {
        let config = SimConfig {
            system,
            gains,
            scheduler,
            x0,
            horizon,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = (self.system.n(), self.system.m());
        if self.gains.rows() != m || self.gains.cols() != n {
            return Err(Error::dims(format!(
                "gains are {}x{}, expected {m}x{n}",
                self.gains.rows(),
                self.gains.cols()
            )));
        }
        if self.x0.dim() != n {
            return Err(Error::dims(format!(
                "x0 has dimension {}, expected {n}",
                self.x0.dim()
            )));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        self.scheduler.validate(m)
    }

    /// `b_j k_j` as an `n x n` matrix.
    fn feedback_term(&self, j: usize) -> Matrix {
        let n = self.system.n();
        let b = self.system.b();
        let mut out = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                out.set(r, c, b.get(r, j) * self.gains.get(j, c));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vector>,
    /// Active channels (0-based) applied between step `k` and `k+1`.
    pub schedule: Vec<Vec<usize>>,
    /// Some state exceeded [`OVERFLOW_LIMIT`] and was clamped.
    pub overflowed: bool,
}

struct ClosedLoop<'a> {
    config: &'a SimConfig,
    // A + b_j k_j for single-channel schedulers
    single: Vec<Matrix>,
    feedback: Vec<Matrix>,
}

impl<'a> ClosedLoop<'a> {
    fn new(config: &'a SimConfig) -> Self {
        let m = config.system.m();
        let feedback: Vec<Matrix> = (0..m).map(|j| config.feedback_term(j)).collect();
        let single = feedback
            .iter()
            .map(|f| config.system.a().add(f).expect("square terms"))
            .collect();
        ClosedLoop {
            config,
            single,
            feedback,
        }
    }

    fn step_matrix(&self, active: &[usize]) -> std::borrow::Cow<'_, Matrix> {
        match active {
            [j] => std::borrow::Cow::Borrowed(&self.single[*j]),
            _ => {
                let mut m = self.config.system.a().clone();
                for &j in active {
                    m = m.add(&self.feedback[j]).expect("square terms");
                }
                std::borrow::Cow::Owned(m)
            }
        }
    }

    fn run<R: RngCore>(&self, rng: &mut R) -> Trajectory {
        let cfg = self.config;
        let m = cfg.system.m();
        let mut states = Vec::with_capacity(cfg.horizon + 1);
        let mut schedule = Vec::with_capacity(cfg.horizon);
        let mut overflowed = false;
        let mut x = cfg.x0.clone();
        let mut active = Vec::with_capacity(m);
        for _ in 0..cfg.horizon {
            cfg.scheduler.draw(rng, m, &mut active);
            let mut next = self
                .step_matrix(&active)
                .mul_vec(&x)
                .expect("dimensions validated");
            for v in next.iter_mut() {
                if v.is_nan() || v.abs() > OVERFLOW_LIMIT {
                    overflowed = true;
                    *v = if *v < 0.0 {
                        -OVERFLOW_LIMIT
                    } else {
                        OVERFLOW_LIMIT
                    };
                }
            }
            states.push(std::mem::replace(&mut x, next));
            schedule.push(active.clone());
        }
        states.push(x);
        Trajectory {
            states,
            schedule,
            overflowed,
        }
    }
}

/// One closed-loop run drawing from stream 0 of `seed`.
pub fn simulate_closed_loop(config: &SimConfig, seed: u64) -> Result<Trajectory> {
    config.validate()?;
    Ok(ClosedLoop::new(config).run(&mut rng::stream(seed, 0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EnsembleOptions {
    /// Compute nearest-rank 5th, 50th and 95th percentiles.
    pub percentiles: bool,
    /// Number of leading trajectories to return verbatim.
    pub keep: usize,
}

/// Per-step, per-coordinate statistics of an ensemble. Indexing is
/// `[step][coordinate]`; overflowed trajectories are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trials: u64,
    pub trials_used: u64,
    pub overflowed: u64,
    pub mean: Vec<Vec<f64>>,
    /// Unbiased sample variance.
    pub variance: Vec<Vec<f64>>,
    pub mean_stderr: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub second_moment_stderr: Vec<Vec<f64>>,
    pub max_abs: Vec<Vec<f64>>,
    /// `[p05, p50, p95]`.
    pub percentiles: Option<Vec<Vec<[f64; 3]>>>,
    pub kept: Vec<Trajectory>,
}

impl EnsembleStats {
    pub fn steps(&self) -> usize {
        self.mean.len()
    }

    pub fn dim(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }
}

pub fn run_ensemble(config: &SimConfig, trials: u64, seed: u64) -> Result<EnsembleStats> {
    run_ensemble_with(config, trials, seed, &EnsembleOptions::default())
}

struct BatchResult {
    acc: Vec<MomentAcc>,
    overflowed: u64,
    // step-major samples of finite trajectories, for percentiles
    samples: Vec<Vec<f64>>,
    kept: Vec<Trajectory>,
}

pub fn run_ensemble_with(
    config: &SimConfig,
    trials: u64,
    seed: u64,
    opts: &EnsembleOptions,
) -> Result<EnsembleStats> {
    config.validate()?;
    if trials < 2 {
        return Err(Error::invalid("need at least two trials"));
    }
    let n = config.system.n();
    let steps = config.horizon + 1;
    let cells = steps * n;
    let looped = ClosedLoop::new(config);

    let batches: Vec<BatchResult> = (0..trials.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut out = BatchResult {
                acc: vec![MomentAcc::default(); cells],
                overflowed: 0,
                samples: if opts.percentiles {
                    vec![Vec::new(); cells]
                } else {
                    Vec::new()
                },
                kept: Vec::new(),
            };
            for t in (b * BATCH)..((b + 1) * BATCH).min(trials) {
                let traj = looped.run(&mut rng::stream(seed, t));
                if !traj.overflowed {
                    for (s, state) in traj.states.iter().enumerate() {
                        for (c, &x) in state.iter().enumerate() {
                            out.acc[s * n + c].push(x);
                            if opts.percentiles {
                                out.samples[s * n + c].push(x);
                            }
                        }
                    }
                } else {
                    out.overflowed += 1;
                }
                if (t as usize) < opts.keep {
                    out.kept.push(traj);
                }
            }
            out
        })
        .collect();

    let overflowed: u64 = batches.iter().map(|b| b.overflowed).sum();
    let trials_used = trials - overflowed;
    let kept: Vec<Trajectory> = batches
        .iter()
        .flat_map(|b| b.kept.iter().cloned())
        .collect();
    let percentiles = opts.percentiles.then(|| {
        (0..steps)
            .map(|s| {
                (0..n)
                    .map(|c| {
                        let mut all: Vec<f64> = batches
                            .iter()
                            .flat_map(|b| b.samples[s * n + c].iter().copied())
                            .collect();
                        all.sort_by(f64::total_cmp);
                        [5.0, 50.0, 95.0].map(|p| nearest_rank(&all, p))
                    })
                    .collect()
            })
            .collect()
    });
    let acc = merge_in_order(batches.into_iter().map(|b| b.acc).collect(), cells);
    let used = trials_used as f64;
    let grid = |f: &dyn Fn(&MomentAcc) -> f64| -> Vec<Vec<f64>> {
        (0..steps)
            .map(|s| (0..n).map(|c| f(&acc[s * n + c])).collect())
            .collect()
    };
    Ok(EnsembleStats {
        trials,
        trials_used,
        overflowed,
        mean: grid(&|a| if a.n > 0.0 { a.mean } else { f64::NAN }),
        variance: grid(&|a| if a.n > 1.0 { a.variance() } else { f64::NAN }),
        mean_stderr: grid(&|a| (a.variance() / used).sqrt()),
        second_moment: grid(&|a| if a.n > 0.0 { a.sq_mean } else { f64::NAN }),
        second_moment_stderr: grid(&|a| (a.sq_variance() / used).sqrt()),
        max_abs: grid(&|a| a.max_abs),
        percentiles,
        kept,
    })
}

/// Nearest-rank percentile of sorted data: the value at rank
/// `ceil(p/100 * N)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Per-coordinate switching parameters when the closed loop decouples:
/// `A` diagonal, `B = I` and gain `k_j` acting only on coordinate `j`.
/// Coordinate `j` then follows the switching process with `a = A_jj`
/// (channel idle), `b = A_jj + k_jj` (channel active) and `p` the
/// probability that channel `j` is idle.
pub fn decoupled_switch_params(config: &SimConfig) -> Option<Vec<SwitchProcessParams>> {
    let sys = &config.system;
    let n = sys.n();
    if sys.m() != n {
        return None;
    }
    let (a, b, k) = (sys.a(), sys.b(), &config.gains);
    for i in 0..n {
        for j in 0..n {
            let eye = if i == j { 1.0 } else { 0.0 };
            if i != j && (a.get(i, j) != 0.0 || k.get(i, j) != 0.0) {
                return None;
            }
            if b.get(i, j) != eye {
                return None;
            }
        }
    }
    (0..n)
        .map(|j| {
            let lambda = a.get(j, j);
            let idle = 1.0 - config.scheduler.activity(j, n);
            SwitchProcessParams::new(lambda, lambda + k.get(j, j), idle.clamp(0.0, 1.0)).ok()
        })
        .collect()
}

/// Slope of `ln y` against the step index by weighted least squares with
/// delta-method weights `(y / se)^2`. Steps with `y <= 0` or a zero or
/// non-finite standard error are skipped. `None` with fewer than two usable
/// steps.
pub fn log_slope(values: &[f64], stderrs: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64, f64)> = values
        .iter()
        .zip(stderrs)
        .enumerate()
        .filter(|(_, (y, se))| **y > 0.0 && y.is_finite() && **se > 0.0 && se.is_finite())
        .map(|(k, (y, se))| (k as f64, y.ln(), (y / se).powi(2)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let kbar = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ybar = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - kbar) * (p.1 - ybar)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - kbar).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapStats {
    pub count: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub mean_stderr: f64,
    pub variance_stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaitingTimeStats {
    pub trials: u64,
    pub per_channel: Vec<GapStats>,
}

/// Gaps between consecutive selections of each channel under uniform
/// single-channel access, pooled over `trials` runs of `horizon` steps.
pub fn waiting_time_stats(
    m: usize,
    trials: u64,
    horizon: usize,
    seed: u64,
) -> Result<WaitingTimeStats> {
    if m == 0 {
        return Err(Error::invalid("need at least one channel"));
    }
    // Power sums of the gaps: exact integers, so merge order is irrelevant.
    let sums: Vec<[u128; 5]> = (0..trials.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![[0u128; 5]; m];
            for t in (b * BATCH)..((b + 1) * BATCH).min(trials) {
                let mut r = rng::stream(seed, t);
                let mut last: Vec<Option<usize>> = vec![None; m];
                for step in 0..horizon {
                    let ch = rng::uniform_index(&mut r, m);
                    if let Some(prev) = last[ch] {
                        let g = (step - prev) as u128;
                        let s = &mut sums[ch];
                        s[0] += 1;
                        s[1] += g;
                        s[2] += g * g;
                        s[3] += g * g * g;
                        s[4] += g * g * g * g;
                    }
                    last[ch] = Some(step);
                }
            }
            sums
        })
        .reduce(
            || vec![[0u128; 5]; m],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for i in 0..5 {
                        x[i] += y[i];
                    }
                }
                a
            },
        );
    let per_channel = sums.iter().map(gap_stats).collect();
    Ok(WaitingTimeStats {
        trials,
        per_channel,
    })
}

fn gap_stats(s: &[u128; 5]) -> GapStats {
    let count = s[0] as u64;
    if count == 0 {
        return GapStats {
            count,
            mean: f64::NAN,
            variance: f64::NAN,
            mean_stderr: f64::NAN,
            variance_stderr: f64::NAN,
        };
    }
    let n = count as f64;
    let mean = s[1] as f64 / n;
    // central moments from exact power sums
    let c2 = (s[2] as f64 - s[1] as f64 * mean) / n;
    let c4 = (s[4] as f64 - 4.0 * mean * s[3] as f64 + 6.0 * mean * mean * s[2] as f64
        - 3.0 * mean.powi(3) * s[1] as f64)
        / n;
    let variance = if count > 1 {
        (c2 * n / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    GapStats {
        count,
        mean,
        variance,
        mean_stderr: (variance / n).sqrt(),
        variance_stderr: ((c4 - c2 * c2).max(0.0) / n).sqrt(),
    }
}
