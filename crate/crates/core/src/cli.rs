//! Command-line front end. [`run`] returns the process exit code:
//! 0 success, 1 I/O failure, 2 bad usage or input, 3 inexact steering,
//! 4 enumeration cap exceeded.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::channels::{
    self, cap_from_env, ChannelSequence, CheckOptions, FormulaComparison, FractionValue, LtiSystem,
    Side,
};
use crate::error::{Error, Result};
use crate::exactmath;
use crate::io::{fmt_rational, fmt_sig, fmt_sig_fixed, manifest_path, RunManifest, SystemFile};
use crate::linalg::DEFAULT_TOL;
use crate::simulate::{self, EnsembleOptions, SimConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INEXACT: i32 = 3;
pub const EXIT_CAP: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "randchan",
    version,
    about = "Linear systems with randomly accessed channels"
)]
struct Cli {
    /// Significant digits for printed floats (0 = shortest round-trip).
    #[arg(long, global = true, default_value_t = 9)]
    digits: usize,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Rcc,
    Rco,
    Kalman,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Input,
    Output,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Stirling number of the second kind S(k, n).
    Stirling {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        n: usize,
    },
    /// Probability that k uniform draws cover all n labels, for k = 1..=kmax.
    SpanProb {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long)]
        kmax: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Expected length-weighted non-spanning series for each n.
    MeanSpan {
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Random-channel controllability/observability or Kalman rank test.
    Check {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Rational arithmetic instead of floating point.
        #[arg(long)]
        exact: bool,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Fraction of length-k channel sequences whose vectors span.
    SpanFraction {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        k: usize,
        /// Enumerate all sequences.
        #[arg(long, conflicts_with = "trials", required_unless_present = "trials")]
        exact: bool,
        /// Monte Carlo sample size.
        #[arg(long, requires = "seed")]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value = "input")]
        side: SideArg,
        /// Rational rank tests during enumeration.
        #[arg(long)]
        rational: bool,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Minimum-norm inputs along a channel sequence (1-based labels).
    Steer {
        #[arg(long)]
        system: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        gamma: Vec<usize>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        x0: Vec<f64>,
        #[arg(
            long,
            value_delimiter = ',',
            required = true,
            allow_hyphen_values = true
        )]
        xf: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        /// Exit 3 when the residual exceeds this times (1 + |xf|).
        #[arg(long, default_value_t = 1e-8)]
        residual_tol: f64,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// One closed-loop trajectory as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-step ensemble statistics as CSV.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Add nearest-rank 5th/50th/95th percentile columns.
        #[arg(long)]
        percentiles: bool,
        /// Write the first `keep` trajectories to this CSV file.
        #[arg(long, requires = "keep")]
        trajectories: Option<PathBuf>,
        #[arg(long, requires = "trajectories")]
        keep: Option<usize>,
    },
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    // buffered so the command can run inside a thread pool
    let mut out: Vec<u8> = Vec::new();
    let result = match cli.threads {
        Some(0) => Err(Error::invalid("--threads must be positive")),
        Some(t) => match rayon::ThreadPoolBuilder::new().num_threads(t).build() {
            Ok(pool) => pool.install(|| execute(&cli, &mut out)),
            Err(e) => Err(Error::invalid(format!("thread pool: {e}"))),
        },
        None => execute(&cli, &mut out),
    };
    {
        let mut stdout = std::io::stdout().lock();
        let _ = stdout.write_all(&out);
        let _ = stdout.flush();
    }
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::CapExceeded { .. } => EXIT_CAP,
        Error::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let digits = cli.digits;
    match &cli.command {
        Command::Stirling { k, n } => {
            writeln!(out, "{}", exactmath::stirling2(*k, *n))?;
            Ok(EXIT_OK)
        }
        Command::SpanProb {
            n,
            kmax,
            format,
            out: path,
        } => {
            let rows = exactmath::spanning_table(n, *kmax)?;
            let mut sink = open_output(path.as_deref(), out)?;
            match format {
                Format::Json => {
                    let items: Vec<_> = rows
                        .iter()
                        .map(|r| {
                            json!({
                                "n": r.n, "k": r.k,
                                "p_exact": fmt_rational(&r.exact),
                                "p_float": r.p,
                            })
                        })
                        .collect();
                    writeln!(sink, "{}", serde_json::to_string_pretty(&items)?)?;
                }
                _ => {
                    writeln!(sink, "n,k,p_exact_num,p_exact_den,p_float")?;
                    for r in &rows {
                        writeln!(
                            sink,
                            "{},{},{},{},{}",
                            r.n,
                            r.k,
                            r.exact.numer(),
                            r.exact.denom(),
                            fmt_sig(r.p, digits)
                        )?;
                    }
                }
            }
            sink.flush()?;
            Ok(EXIT_OK)
        }
        Command::MeanSpan { n, tol, format } => {
            let results: Vec<_> = n
                .iter()
                .map(|&n| exactmath::mean_nonspan_length(n, *tol).map(|r| (n, r)))
                .collect::<Result<_>>()?;
            match format {
                Format::Json => {
                    let items: Vec<_> = results
                        .iter()
                        .map(|(n, r)| {
                            json!({
                                "n": n, "value": r.value,
                                "truncation_bound": r.truncation_bound,
                                "terms_used": r.terms_used,
                            })
                        })
                        .collect();
                    writeln!(out, "{}", serde_json::to_string_pretty(&items)?)?;
                }
                Format::Csv => {
                    writeln!(out, "n,value,truncation_bound,terms_used")?;
                    for (n, r) in &results {
                        writeln!(
                            out,
                            "{n},{},{},{}",
                            fmt_sig_fixed(r.value, digits),
                            fmt_sig(r.truncation_bound, 3),
                            r.terms_used
                        )?;
                    }
                }
                Format::Text => {
                    for (n, r) in &results {
                        writeln!(
                            out,
                            "n={n}: {} (tail bound {}, {} terms)",
                            fmt_sig_fixed(r.value, digits),
                            fmt_sig(r.truncation_bound, 3),
                            r.terms_used
                        )?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Check {
            system,
            mode,
            tol,
            exact,
            format,
        } => {
            let sys = SystemFile::load(system)?.to_system()?;
            cmd_check(&sys, *mode, *tol, *exact, *format, out)
        }
        Command::SpanFraction {
            system,
            k,
            exact,
            trials,
            seed,
            side,
            rational,
            tol,
            format,
        } => {
            let sys = SystemFile::load(system)?.to_system()?;
            let side = match side {
                SideArg::Input => Side::Input,
                SideArg::Output => Side::Output,
            };
            let frac = if *exact {
                let opts = CheckOptions {
                    tol: *tol,
                    exact: *rational,
                    cap: cap_from_env(),
                };
                channels::spanning_fraction_exact(&sys, *k, side, &opts)?
            } else {
                let trials = trials.expect("clap enforces --trials or --exact");
                let seed = seed.expect("clap enforces --seed with --trials");
                channels::spanning_fraction_mc(&sys, *k, side, trials, seed, *tol)?
            };
            print_fraction(&frac, digits, *format, out)?;
            Ok(EXIT_OK)
        }
        Command::Steer {
            system,
            gamma,
            x0,
            xf,
            tol,
            residual_tol,
            format,
        } => {
            let sys = SystemFile::load(system)?.to_system()?;
            let gamma = ChannelSequence::from_one_based(gamma, sys.m())?;
            let s = channels::steer(&sys, &gamma, x0, xf, *tol)?;
            let xf_norm = xf.iter().map(|v| v * v).sum::<f64>().sqrt();
            let exact = s.residual <= residual_tol * (1.0 + xf_norm);
            match format {
                Format::Json => writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&json!({
                        "gamma": gamma.one_based(),
                        "inputs": s.inputs,
                        "residual": s.residual,
                        "reached": exact,
                    }))?
                )?,
                _ => {
                    let u: Vec<String> = s.inputs.iter().map(|v| fmt_sig(*v, digits)).collect();
                    write!(
                        out,
                        "u = {}; residual {}",
                        u.join(", "),
                        fmt_sig(s.residual, 3)
                    )?;
                    writeln!(out, "{}", if exact { "" } else { "; target not reached" })?;
                }
            }
            Ok(if exact { EXIT_OK } else { EXIT_INEXACT })
        }
        Command::Simulate {
            config,
            seed,
            out: path,
        } => {
            let (cfg, input) = load_config(config)?;
            let traj = simulate::simulate_closed_loop(&cfg, *seed)?;
            let mut sink = open_output(path.as_deref(), out)?;
            let n = cfg.system.n();
            let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
            writeln!(sink, "step,{},active_channels", header.join(","))?;
            for (step, x) in traj.states.iter().enumerate() {
                let xs: Vec<String> = x.iter().map(|v| fmt_sig(*v, digits)).collect();
                let active = traj.schedule.get(step).map_or(String::new(), |a| {
                    a.iter()
                        .map(|j| (j + 1).to_string())
                        .collect::<Vec<_>>()
                        .join(";")
                });
                writeln!(sink, "{step},{},{active}", xs.join(","))?;
            }
            sink.flush()?;
            if traj.overflowed {
                eprintln!(
                    "warning: trajectory exceeded {:e} and was stopped",
                    simulate::OVERFLOW_LIMIT
                );
            }
            if let Some(path) = path {
                let mut m = RunManifest::new("simulate");
                m.param("config", config)
                    .param("seed", seed)
                    .param("digits", digits);
                m.input = Some(input);
                m.outputs.push(path.display().to_string());
                std::fs::write(manifest_path(path), m.to_json())?;
            }
            Ok(EXIT_OK)
        }
        Command::Ensemble {
            config,
            trials,
            seed,
            out: path,
            percentiles,
            trajectories,
            keep,
        } => {
            let (cfg, input) = load_config(config)?;
            let opts = EnsembleOptions {
                percentiles: *percentiles,
                keep: keep.unwrap_or(0),
            };
            let stats = simulate::run_ensemble_with(&cfg, *trials, *seed, &opts)?;
            let summary = ensemble_summary(&cfg, &stats, digits);
            {
                let mut sink = open_output(path.as_deref(), out)?;
                write_ensemble_csv(&stats, digits, &mut sink)?;
                sink.flush()?;
            }
            if let Some(tpath) = trajectories {
                let mut w = BufWriter::new(File::create(tpath)?);
                let n = cfg.system.n();
                let header: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
                writeln!(w, "trial,step,{},overflowed", header.join(","))?;
                for (t, traj) in stats.kept.iter().enumerate() {
                    for (step, x) in traj.states.iter().enumerate() {
                        let xs: Vec<String> = x.iter().map(|v| fmt_sig(*v, digits)).collect();
                        writeln!(w, "{t},{step},{},{}", xs.join(","), traj.overflowed as u8)?;
                    }
                }
                w.flush()?;
            }
            if let Some(path) = path {
                for line in &summary {
                    writeln!(out, "{line}")?;
                }
                let mut m = RunManifest::new("ensemble");
                m.param("config", config)
                    .param("trials", trials)
                    .param("seed", seed)
                    .param("percentiles", percentiles)
                    .param("keep", keep)
                    .param("digits", digits);
                m.input = Some(input);
                m.outputs.push(path.display().to_string());
                if let Some(t) = trajectories {
                    m.outputs.push(t.display().to_string());
                }
                m.notes = summary;
                std::fs::write(manifest_path(path), m.to_json())?;
            } else {
                for line in &summary {
                    eprintln!("{line}");
                }
            }
            Ok(EXIT_OK)
        }
    }
}

fn cmd_check(
    sys: &LtiSystem,
    mode: Mode,
    tol: f64,
    exact: bool,
    format: Format,
    out: &mut dyn Write,
) -> Result<i32> {
    let opts = CheckOptions {
        tol,
        exact,
        cap: cap_from_env(),
    };
    match mode {
        Mode::Rcc | Mode::Rco => {
            let (label, verdict) = if mode == Mode::Rcc {
                ("RCC", channels::is_rcc_with(sys, &opts)?)
            } else {
                ("RCO", channels::is_rco_with(sys, &opts)?)
            };
            if format == Format::Json {
                let v = json!({
                    "mode": label.to_lowercase(),
                    "holds": verdict.holds,
                    "counterexample": verdict.counterexample.as_ref().map(ChannelSequence::one_based),
                    "sequences_tested": verdict.sequences_tested,
                    "warnings": verdict.warnings,
                });
                writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
            } else {
                match &verdict.counterexample {
                    None => writeln!(
                        out,
                        "{label}: yes ({} sequences tested)",
                        verdict.sequences_tested
                    )?,
                    Some(g) => writeln!(
                        out,
                        "{label}: no; counterexample γ={g} ({} sequences tested)",
                        verdict.sequences_tested
                    )?,
                }
                for w in &verdict.warnings {
                    writeln!(out, "warning: {w}")?;
                }
            }
        }
        Mode::Kalman => {
            let controllable = if exact {
                channels::kalman_controllable_exact(sys)
            } else {
                channels::kalman_controllable(sys, tol)
            };
            let observable = match sys.c() {
                None => None,
                Some(_) if exact => Some(channels::kalman_observable_exact(sys)?),
                Some(_) => Some(channels::kalman_observable(sys, tol)?),
            };
            if format == Format::Json {
                let v = json!({ "controllable": controllable, "observable": observable });
                writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
            } else {
                let yn = |b: bool| if b { "yes" } else { "no" };
                writeln!(out, "controllable: {}", yn(controllable))?;
                if let Some(o) = observable {
                    writeln!(out, "observable: {}", yn(o))?;
                }
            }
        }
    }
    Ok(EXIT_OK)
}

fn print_fraction(
    frac: &channels::SpanningFraction,
    digits: usize,
    format: Format,
    out: &mut dyn Write,
) -> Result<()> {
    let (fnum, fden) = frac.formula_parts();
    let formula = exactmath::span_prob_float(frac.channels, frac.k);
    let cmp = frac.compare_with_formula();
    if format == Format::Json {
        let mut v = json!({
            "k": frac.k,
            "channels": frac.channels,
            "spanning": frac.spanning,
            "total": frac.total.to_string(),
            "formula_num": fnum.to_string(),
            "formula_den": fden.to_string(),
            "formula": formula,
            "comparison": cmp.to_string(),
        });
        match &frac.value {
            FractionValue::Exact(r) => v["value"] = json!(fmt_rational(r)),
            FractionValue::Estimate { value, stderr } => {
                v["value"] = json!(value);
                v["stderr"] = json!(stderr);
            }
        }
        writeln!(out, "{}", serde_json::to_string_pretty(&v)?)?;
        return Ok(());
    }
    let rel = match cmp {
        FormulaComparison::Equality => "=",
        FormulaComparison::Strict => "<",
        FormulaComparison::Exceeds => ">",
        FormulaComparison::Consistent => "~",
    };
    match &frac.value {
        FractionValue::Exact(_) => writeln!(
            out,
            "{}/{} {rel} formula {fnum}/{fden}: {cmp}",
            frac.spanning, frac.total
        )?,
        FractionValue::Estimate { value, stderr } => writeln!(
            out,
            "{}/{} = {} ± {} {rel} formula {}: {cmp}",
            frac.spanning,
            frac.total,
            fmt_sig(*value, digits),
            fmt_sig(*stderr, 3),
            fmt_sig(formula, digits)
        )?,
    }
    Ok(())
}

fn load_config(path: &Path) -> Result<(SimConfig, serde_json::Value)> {
    let text = std::fs::read_to_string(path)?;
    let cfg = crate::io::parse_sim_config(&text)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    Ok((cfg, value))
}

fn open_output<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn write_ensemble_csv(
    stats: &simulate::EnsembleStats,
    digits: usize,
    w: &mut dyn Write,
) -> Result<()> {
    let pct = stats.percentiles.as_ref();
    write!(w, "step,coord,mean,var")?;
    writeln!(w, "{}", if pct.is_some() { ",p05,p50,p95" } else { "" })?;
    for step in 0..stats.steps() {
        for coord in 0..stats.dim() {
            write!(
                w,
                "{step},{},{},{}",
                coord + 1,
                fmt_sig(stats.mean[step][coord], digits),
                fmt_sig(stats.variance[step][coord], digits)
            )?;
            if let Some(p) = pct {
                let [a, b, c] = p[step][coord];
                write!(
                    w,
                    ",{},{},{}",
                    fmt_sig(a, digits),
                    fmt_sig(b, digits),
                    fmt_sig(c, digits)
                )?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

fn ensemble_summary(
    cfg: &SimConfig,
    stats: &simulate::EnsembleStats,
    digits: usize,
) -> Vec<String> {
    let mut lines = vec![format!(
        "trials {} used {} overflowed {}",
        stats.trials, stats.trials_used, stats.overflowed
    )];
    if let Some(params) = simulate::decoupled_switch_params(cfg) {
        for (j, p) in params.iter().enumerate() {
            let (m1, m2) = simulate::moment_multipliers(p);
            let r = simulate::stability_report(p);
            let yn = |b: bool| if b { "yes" } else { "no" };
            lines.push(format!(
                "coord {}: a={} b={} p={} m1={} m2={} mean stable {} second moment stable {}",
                j + 1,
                fmt_sig(p.a, digits),
                fmt_sig(p.b, digits),
                fmt_sig(p.p, digits),
                fmt_sig(m1, digits),
                fmt_sig(m2, digits),
                yn(r.mean_stable),
                yn(r.second_moment_stable)
            ));
        }
    }
    lines
}
