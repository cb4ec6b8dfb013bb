//! JSON system and simulation files, run manifests and number formatting.
//!
//! A system file holds row-major nested arrays under `"A"`, `"B"` and an
//! optional `"C"`. Entries are JSON numbers or strings holding an exact
//! rational (`"3/7"`, `"-2"`, `"0.125"`):
//!
//! ```json
//! { "A": [[2, 0], [0, "1/3"]], "B": [[1], [1]], "C": [[1, 0]] }
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::channels::{ExactSystem, LtiSystem};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, RationalMatrix, Vector};
use crate::simulate::{SchedulerSpec, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum Entry {
    Number(f64),
    Text(String),
}

impl Entry {
    fn to_rational(&self) -> Result<BigRational> {
        match self {
            Entry::Number(x) => BigRational::from_float(*x)
                .ok_or_else(|| Error::Parse(format!("non-finite entry {x}"))),
            Entry::Text(s) => parse_rational(s),
        }
    }

    fn from_rational(r: &BigRational) -> Entry {
        match r.to_f64() {
            Some(x) if BigRational::from_float(x).as_ref() == Some(r) => Entry::Number(x),
            _ => Entry::Text(format!("{}/{}", r.numer(), r.denom())),
        }
    }
}

/// Parses `"p/q"`, an integer, or a plain decimal such as `"-0.125"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str(p.trim()).map_err(|_| bad())?;
        let q = BigInt::from_str(q.trim()).map_err(|_| bad())?;
        if q.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_part = if int.is_empty() || int == "-" || int == "+" {
            BigInt::zero()
        } else {
            BigInt::from_str(int).map_err(|_| bad())?
        };
        let scale = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = BigInt::from_str(frac).map_err(|_| bad())?;
        let magnitude = int_part.magnitude().clone();
        let value = BigRational::new(BigInt::from(magnitude) * &scale + frac_part, scale);
        return Ok(if negative { -value } else { value });
    }
    BigInt::from_str(s)
        .map(BigRational::from_integer)
        .map_err(|_| bad())
}

fn rational_matrix(name: &str, rows: &[Vec<Entry>]) -> Result<RationalMatrix> {
    let parsed: Vec<Vec<BigRational>> = rows
        .iter()
        .map(|r| r.iter().map(Entry::to_rational).collect())
        .collect::<Result<_>>()?;
    RationalMatrix::from_rows(&parsed).map_err(|e| Error::Parse(format!("{name}: {e}")))
}

fn entry_rows(m: &RationalMatrix) -> Vec<Vec<Entry>> {
    m.to_rows()
        .iter()
        .map(|r| r.iter().map(Entry::from_rational).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    #[serde(rename = "A")]
    a: Vec<Vec<Entry>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Entry>>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<Vec<Entry>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<BTreeMap<String, Vec<String>>>,
}

/// Parsed system file with exact entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemFile {
    pub a: RationalMatrix,
    pub b: RationalMatrix,
    pub c: Option<RationalMatrix>,
    pub name: Option<String>,
    pub labels: Option<BTreeMap<String, Vec<String>>>,
}

impl SystemFile {
    fn from_raw(raw: &RawSystem) -> Result<Self> {
        let file = SystemFile {
            a: rational_matrix("A", &raw.a)?,
            b: rational_matrix("B", &raw.b)?,
            c: raw
                .c
                .as_deref()
                .map(|c| rational_matrix("C", c))
                .transpose()?,
            name: raw.name.clone(),
            labels: raw.labels.clone(),
        };
        // surface dimension errors at load time
        file.to_system()?;
        Ok(file)
    }

    fn to_raw(&self) -> RawSystem {
        RawSystem {
            a: entry_rows(&self.a),
            b: entry_rows(&self.b),
            c: self.c.as_ref().map(entry_rows),
            name: self.name.clone(),
            labels: self.labels.clone(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        SystemFile::from_raw(&serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SystemFile::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_raw()).expect("plain data serializes")
    }

    pub fn to_system(&self) -> Result<LtiSystem> {
        LtiSystem::from_exact(ExactSystem {
            a: self.a.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawScheduler {
    UniformSingle {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    BernoulliPattern {
        p: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: RawSystem,
    gains: Vec<Vec<Entry>>,
    scheduler: RawScheduler,
    x0: Vec<Entry>,
    horizon: usize,
}

/// Simulation config file:
///
/// ```json
/// {
///   "system": { "A": [[3]], "B": [[1]] },
///   "gains": [[-2.7]],
///   "scheduler": { "kind": "uniform-single" },
///   "x0": [1],
///   "horizon": 30
/// }
/// ```
///
/// `scheduler` is `{"kind": "uniform-single", "weights": [...]}` (weights
/// optional) or `{"kind": "bernoulli-pattern", "p": 0.5}`.
pub fn parse_sim_config(text: &str) -> Result<SimConfig> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let system = SystemFile::from_raw(&raw.system)?.to_system()?;
    let gains = rational_matrix("gains", &raw.gains)?.to_float();
    let x0: Vec<f64> = raw
        .x0
        .iter()
        .map(|e| e.to_rational().map(|r| r.to_f64().unwrap_or(f64::NAN)))
        .collect::<Result<_>>()?;
    let scheduler = match raw.scheduler {
        RawScheduler::UniformSingle { weights } => SchedulerSpec::UniformSingle { weights },
        RawScheduler::BernoulliPattern { p } => SchedulerSpec::BernoulliPattern { p },
    };
    let gains = if raw.gains.is_empty() {
        Matrix::zeros(0, system.n())
    } else {
        gains
    };
    SimConfig::new(system, gains, scheduler, Vector::new(x0), raw.horizon)
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    parse_sim_config(&std::fs::read_to_string(path)?)
}

/// Everything needed to regenerate a run's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    /// Parsed contents of the input file, so the run does not depend on it
    /// staying unchanged on disk.
    pub input: Option<serde_json::Value>,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            parameters: BTreeMap::new(),
            input: None,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.parameters.insert(
            key.to_string(),
            serde_json::to_value(value).expect("serializable"),
        );
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data serializes") + "\n"
    }
}

/// Manifest path for an output file: `<out>.manifest.json`.
pub fn manifest_path(out: &Path) -> std::path::PathBuf {
    let mut name = out
        .file_name()
        .map(|s| s.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// `x` with `digits` significant digits, trailing zeros removed; switches
/// to exponent notation outside `1e-5 <= |x| < 10^digits`. `digits == 0`
/// prints the shortest representation that round-trips.
pub fn fmt_sig(x: f64, digits: usize) -> String {
    format_sig(x, digits, true)
}

/// Like [`fmt_sig`] but keeps trailing zeros.
pub fn fmt_sig_fixed(x: f64, digits: usize) -> String {
    format_sig(x, digits, false)
}

fn format_sig(x: f64, digits: usize, trim: bool) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if digits == 0 {
        return format!("{x}");
    }
    if x == 0.0 {
        return if trim || digits == 1 {
            "0".into()
        } else {
            format!("{:.*}", digits - 1, 0.0)
        };
    }
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let strip = |s: &str| -> String {
        if trim && s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if exp < -5 || exp >= digits as i32 {
        format!("{}e{}", strip(mantissa), exp)
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip(&format!("{:.*}", decimals, x))
    }
}

/// Exact rational as `p/q` (or `p` for integers).
pub fn fmt_rational(r: &BigRational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
