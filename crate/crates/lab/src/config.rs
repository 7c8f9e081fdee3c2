//! Experiment configs: `[section]` headers followed by `key = value` lines.
//!
//! ```text
//! # RP^2, even degrees
//! [manifold]
//! preset = rp_n(2)
//!
//! [sweep]
//! ell = 10..100 step 10
//!
//! [norms]
//! tube_R = 1
//! tol = 1e-8
//! ```
//!
//! Blank lines and text after `#` are ignored. Keys may repeat only where
//! noted (`generator`). See the README for every key.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::preset::{parse_matrix, Preset, PresetError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("[{section}] {key}: {message}")]
    Value { section: String, key: String, message: String },
    #[error("missing [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("unknown key [{section}] {key}")]
    UnknownKey { section: String, key: String },
    #[error(transparent)]
    Preset(#[from] PresetError),
}

/// One `key = value` entry with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Sections in file order of first appearance are not preserved; lookups
/// are by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub sections: BTreeMap<String, Vec<Entry>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut out = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::Syntax { line, message: "unterminated section header".into() })?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(ConfigError::Syntax { line, message: format!("bad section name {name:?}") });
                }
                out.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| ConfigError::Syntax { line, message: "expected key = value".into() })?;
            let key = key.trim();
            if key.is_empty() || !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return Err(ConfigError::Syntax { line, message: format!("bad key {key:?}") });
            }
            let section = current
                .clone()
                .ok_or_else(|| ConfigError::Syntax { line, message: "entry before any section".into() })?;
            out.sections.get_mut(&section).expect("section exists").push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line,
            });
        }
        Ok(out)
    }

    fn entries(&self, section: &str) -> &[Entry] {
        self.sections.get(section).map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn get(&self, section: &str, key: &str) -> Result<Option<&str>, ConfigError> {
        let mut found = None;
        for e in self.entries(section) {
            if e.key == key {
                if found.is_some() {
                    return Err(ConfigError::Syntax { line: e.line, message: format!("duplicate key {key}") });
                }
                found = Some(e.value.as_str());
            }
        }
        Ok(found)
    }

    fn all(&self, section: &str, key: &str) -> Vec<&str> {
        self.entries(section).iter().filter(|e| e.key == key).map(|e| e.value.as_str()).collect()
    }

    fn check_keys(&self, section: &str, allowed: &[&str]) -> Result<(), ConfigError> {
        for e in self.entries(section) {
            if !allowed.contains(&e.key.as_str()) {
                return Err(ConfigError::UnknownKey { section: section.into(), key: e.key.clone() });
            }
        }
        Ok(())
    }
}

fn value_err(section: &str, key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Value { section: section.into(), key: key.into(), message: message.into() }
}

fn parse_f64(section: &str, key: &str, s: &str) -> Result<f64, ConfigError> {
    let v: f64 = s.trim().parse().map_err(|_| value_err(section, key, format!("not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(value_err(section, key, "must be finite"));
    }
    Ok(v)
}

fn parse_u64(section: &str, key: &str, s: &str) -> Result<u64, ConfigError> {
    s.trim().parse().map_err(|_| value_err(section, key, format!("not a non-negative integer: {s:?}")))
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    s.split(',').map(|t| item(t.trim())).collect()
}

/// `a..b`, `a..b step s`, or `a, b, c`.
fn parse_int_range(section: &str, key: &str, s: &str) -> Result<Vec<u64>, ConfigError> {
    let s = s.trim();
    if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once("step") {
            Some((hi, step)) => (hi, parse_u64(section, key, step)?),
            None => (rest, 1),
        };
        let lo = parse_u64(section, key, lo)?;
        let hi = parse_u64(section, key, hi)?;
        if step == 0 {
            return Err(value_err(section, key, "step must be positive"));
        }
        if hi < lo {
            return Err(value_err(section, key, "empty range"));
        }
        if (hi - lo) / step > 100_000 {
            return Err(value_err(section, key, "range too long"));
        }
        return Ok((lo..=hi).step_by(step as usize).collect());
    }
    parse_list(s, |t| parse_u64(section, key, t))
}

/// Degrees to sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum Degrees {
    /// Degrees `k` as given.
    K(Vec<u64>),
    /// Sphere quotients: `k = ℓ·m`.
    Ell(Vec<u64>),
    /// `count` log-spaced target frequencies in `[lo, hi]`; each is rounded
    /// to the nearest admissible degree.
    Lambda { lo: f64, hi: f64, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeltaRule {
    /// `δ = 1/log λ`.
    Log,
    /// `δ = λ^{−1+ε}`.
    Power(f64),
    Constant(f64),
}

impl DeltaRule {
    pub fn delta(&self, lambda: f64) -> f64 {
        match *self {
            DeltaRule::Log => 1.0 / lambda.ln(),
            DeltaRule::Power(eps) => lambda.powf(eps - 1.0),
            DeltaRule::Constant(c) => c,
        }
    }
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DeltaRule::Log => write!(f, "log"),
            DeltaRule::Power(e) => write!(f, "power({e:?})"),
            DeltaRule::Constant(c) => write!(f, "constant({c:?})"),
        }
    }
}

/// How tube radii are scaled from the multipliers `R`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TubeScale {
    /// `R·λ^{−1/2}`.
    Lambda,
    /// `R·(λδ)^{−1/2}`.
    LambdaDelta,
    /// `R·c₁·(λδ)^{−1/2}`.
    Knapp,
}

impl fmt::Display for TubeScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TubeScale::Lambda => "lambda",
            TubeScale::LambdaDelta => "lambda_delta",
            TubeScale::Knapp => "knapp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Certificate {
    Window,
    Defect,
    Separation,
    OffDiagonal,
}

impl Certificate {
    pub fn name(&self) -> &'static str {
        match self {
            Certificate::Window => "window",
            Certificate::Defect => "defect",
            Certificate::Separation => "separation",
            Certificate::OffDiagonal => "off_diagonal",
        }
    }
}

/// Which default exponent targets a sweep is judged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSet {
    Auto,
    None,
    /// Only the `‖·‖₂/‖·‖₁` law.
    Ratio,
    /// Only the flat size laws.
    Size,
}

impl TargetSet {
    pub fn keeps(&self, name: &str) -> bool {
        match self {
            TargetSet::Auto => true,
            TargetSet::None => false,
            TargetSet::Ratio => name.starts_with("ratio"),
            TargetSet::Size => name.starts_with("size_law"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub degrees: Degrees,
    pub delta: DeltaRule,
    /// Accept `δ ≥ λ^{−1+ε}` instead of `δ ≥ 1/log λ`.
    pub weak_floor: Option<f64>,
    pub tube_r: Vec<f64>,
    pub tube_scale: TubeScale,
    pub tol: f64,
    pub rho: f64,
    pub c0: f64,
    pub require: Vec<Certificate>,
    pub out_dir: PathBuf,
    pub csv_name: String,
    pub targets: TargetSet,
}

pub const SECTIONS: &[&str] = &["manifold", "sweep", "delta", "norms", "flat", "certificates", "output"];

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        for name in raw.sections.keys() {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::UnknownKey { section: name.clone(), key: "*".into() });
            }
        }
        raw.check_keys("manifold", &["preset", "kind", "n", "basis", "generator"])?;
        raw.check_keys("sweep", &["k", "ell", "lambda", "count"])?;
        raw.check_keys("delta", &["rule", "epsilon", "value", "weak_floor"])?;
        raw.check_keys("norms", &["p", "tube_R", "tube_scale", "tol"])?;
        raw.check_keys("flat", &["rho", "c0"])?;
        raw.check_keys("certificates", &["require"])?;
        raw.check_keys("output", &["dir", "csv", "targets"])?;

        let preset = manifold(raw)?;

        let degrees = match (raw.get("sweep", "k")?, raw.get("sweep", "ell")?, raw.get("sweep", "lambda")?) {
            (Some(k), None, None) => Degrees::K(parse_int_range("sweep", "k", k)?),
            (None, Some(l), None) => Degrees::Ell(parse_int_range("sweep", "ell", l)?),
            (None, None, Some(l)) => {
                let (lo, hi) = l
                    .split_once("..")
                    .ok_or_else(|| value_err("sweep", "lambda", "expected lo..hi"))?;
                let lo = parse_f64("sweep", "lambda", lo)?;
                let hi = parse_f64("sweep", "lambda", hi)?;
                let count = raw
                    .get("sweep", "count")?
                    .map(|c| parse_u64("sweep", "count", c))
                    .transpose()?
                    .unwrap_or(8) as usize;
                if !(lo > 1.0 && hi >= lo) || count == 0 || count > 10_000 {
                    return Err(value_err("sweep", "lambda", "need 1 < lo ≤ hi and 1 ≤ count ≤ 10000"));
                }
                Degrees::Lambda { lo, hi, count }
            }
            (None, None, None) => return Err(ConfigError::Missing { section: "sweep".into(), key: "k".into() }),
            _ => return Err(value_err("sweep", "k", "give exactly one of k, ell, lambda")),
        };
        match &degrees {
            Degrees::K(v) | Degrees::Ell(v) if v.is_empty() || v.contains(&0) => {
                return Err(value_err("sweep", "k", "degrees must be positive and nonempty"))
            }
            _ => {}
        }

        let delta = match raw.get("delta", "rule")?.unwrap_or("log") {
            "log" => DeltaRule::Log,
            "power" => {
                let eps = parse_f64("delta", "epsilon", raw.get("delta", "epsilon")?.unwrap_or("0.5"))?;
                if !(eps > 0.0 && eps <= 1.0) {
                    return Err(value_err("delta", "epsilon", "must lie in (0, 1]"));
                }
                DeltaRule::Power(eps)
            }
            "constant" => {
                let v = raw
                    .get("delta", "value")?
                    .ok_or_else(|| ConfigError::Missing { section: "delta".into(), key: "value".into() })?;
                let v = parse_f64("delta", "value", v)?;
                if !(v > 0.0 && v <= 1.0) {
                    return Err(value_err("delta", "value", "must lie in (0, 1]"));
                }
                DeltaRule::Constant(v)
            }
            other => return Err(value_err("delta", "rule", format!("unknown rule {other:?}"))),
        };
        let weak_floor = raw
            .get("delta", "weak_floor")?
            .map(|s| parse_f64("delta", "weak_floor", s))
            .transpose()?;
        if let Some(e) = weak_floor {
            if !(e > 0.0 && e < 1.0) {
                return Err(value_err("delta", "weak_floor", "must lie in (0, 1)"));
            }
        }

        if let Some(p) = raw.get("norms", "p")? {
            let ps = parse_list(p, |t| parse_f64("norms", "p", t))?;
            if ps.is_empty() || ps.iter().any(|&q| q != 1.0 && q != 2.0 && q != 4.0) {
                return Err(value_err("norms", "p", "supported exponents are 1, 2, 4"));
            }
        }
        let tube_r = match raw.get("norms", "tube_R")? {
            Some(s) => parse_list(s, |t| parse_f64("norms", "tube_R", t))?,
            None => vec![1.0],
        };
        if tube_r.is_empty() || tube_r.iter().any(|&r| !(r > 0.0)) {
            return Err(value_err("norms", "tube_R", "radii multipliers must be positive"));
        }
        let tube_scale = match raw.get("norms", "tube_scale")? {
            None if preset.is_flat() => TubeScale::Knapp,
            None | Some("lambda") => TubeScale::Lambda,
            Some("lambda_delta") => TubeScale::LambdaDelta,
            Some("knapp") => TubeScale::Knapp,
            Some(other) => return Err(value_err("norms", "tube_scale", format!("unknown scale {other:?}"))),
        };
        if !preset.is_flat() && tube_scale != TubeScale::Lambda {
            return Err(value_err("norms", "tube_scale", "sphere quotients use tube_scale = lambda"));
        }
        let tol = parse_f64("norms", "tol", raw.get("norms", "tol")?.unwrap_or("1e-6"))?;
        if !(tol > 0.0 && tol < 1.0) {
            return Err(value_err("norms", "tol", "must lie in (0, 1)"));
        }
        let rho = parse_f64("flat", "rho", raw.get("flat", "rho")?.unwrap_or("0.5"))?;
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(value_err("flat", "rho", "must lie in (0, 1]"));
        }
        let c0 = parse_f64("flat", "c0", raw.get("flat", "c0")?.unwrap_or("0.25"))?;
        if !(c0 > 0.0) {
            return Err(value_err("flat", "c0", "must be positive"));
        }
        let mut require = Vec::new();
        for name in raw.get("certificates", "require")?.unwrap_or("window, defect").split(',') {
            let c = match name.trim() {
                "" => continue,
                "window" => Certificate::Window,
                "defect" => Certificate::Defect,
                "separation" => Certificate::Separation,
                "off_diagonal" => Certificate::OffDiagonal,
                other => return Err(value_err("certificates", "require", format!("unknown certificate {other:?}"))),
            };
            if !require.contains(&c) {
                require.push(c);
            }
        }
        require.sort();
        let out_dir = PathBuf::from(raw.get("output", "dir")?.unwrap_or("out"));
        let csv_name = raw.get("output", "csv")?.unwrap_or("results.csv").to_string();
        if csv_name.contains('/') || csv_name.is_empty() {
            return Err(value_err("output", "csv", "file name only"));
        }
        let targets = match raw.get("output", "targets")?.unwrap_or("auto") {
            "auto" => TargetSet::Auto,
            "none" => TargetSet::None,
            "ratio" => TargetSet::Ratio,
            "size" => TargetSet::Size,
            other => {
                return Err(value_err("output", "targets", format!("expected auto, none, ratio or size, got {other:?}")))
            }
        };
        Ok(ExperimentConfig {
            preset,
            degrees,
            delta,
            weak_floor,
            tube_r,
            tube_scale,
            tol,
            rho,
            c0,
            require,
            out_dir,
            csv_name,
            targets,
        })
    }
}

fn manifold(raw: &RawConfig) -> Result<Preset, ConfigError> {
    if let Some(p) = raw.get("manifold", "preset")? {
        if raw.get("manifold", "kind")?.is_some() {
            return Err(value_err("manifold", "kind", "give either preset or kind"));
        }
        return Ok(Preset::parse(p)?);
    }
    let kind = raw
        .get("manifold", "kind")?
        .ok_or_else(|| ConfigError::Missing { section: "manifold".into(), key: "preset".into() })?;
    let gens = raw.all("manifold", "generator");
    match kind {
        "sphere" => {
            let n = parse_u64("manifold", "n", raw.get("manifold", "n")?.unwrap_or(""))? as usize;
            let mats = gens
                .iter()
                .map(|g| parse_matrix(g).map_err(ConfigError::from))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Preset::custom_sphere(n, mats)?)
        }
        "flat" => {
            let basis = raw
                .get("manifold", "basis")?
                .ok_or_else(|| ConfigError::Missing { section: "manifold".into(), key: "basis".into() })?;
            let basis = parse_matrix(basis)?;
            let motions = gens
                .iter()
                .map(|g| crate::preset::parse_motion(g).map_err(ConfigError::from))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Preset::custom_flat(basis, motions)?)
        }
        other => Err(value_err("manifold", "kind", format!("expected sphere or flat, got {other:?}"))),
    }
}
