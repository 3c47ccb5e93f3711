//! Flat `key = value` configuration with one level of dotted sections.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, CliResult};

/// A recognised configuration key and the command-line flag that sets it.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub flag: &'static str,
    pub help: &'static str,
    /// Whether the key changes results; echoed keys are exactly these.
    pub echoed: bool,
    /// Boolean switch taking no value on the command line.
    pub switch: bool,
}

const fn key(key: &'static str, flag: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, flag, help, echoed: true, switch: false }
}

const fn runtime(key: &'static str, flag: &'static str, help: &'static str) -> KeySpec {
    KeySpec { key, flag, help, echoed: false, switch: false }
}

const fn switch(key: &'static str, flag: &'static str, help: &'static str, echoed: bool) -> KeySpec {
    KeySpec { key, flag, help, echoed, switch: true }
}

pub const COMMON: &[KeySpec] = &[
    key("seed", "seed", "run seed (required)"),
    key("trials", "trials", "Monte Carlo trials per grid point"),
    runtime("threads", "threads", "worker threads; RMTLAB_THREADS takes precedence"),
    runtime("output.dir", "out", "output directory"),
    runtime("output.prefix", "prefix", "file name stem"),
    switch("output.svg", "svg", "also write a log-log SVG plot", false),
];

pub const ENSEMBLE: &[KeySpec] = &[
    key("ensemble.n", "n", "matrix dimension"),
    key("ensemble.dist", "dist", "entry law: rademacher, gaussian or uniform"),
    key("ensemble.sparsity", "sparsity", "keep each entry with this probability"),
];

pub const EPS: &[KeySpec] = &[
    key("eps.lo", "eps-lo", "smallest eps of the geometric grid"),
    key("eps.hi", "eps-hi", "largest eps of the geometric grid"),
    key("eps.ratio", "eps-ratio", "ratio of the geometric grid"),
    key("eps.values", "eps", "explicit comma-separated eps grid"),
];

pub const GAP: &[KeySpec] = &[
    key("gap.i", "i", "lower eigenvalue index (1-based), default n/2"),
    key("gap.k", "k", "index offset k"),
    key("gap.variant", "variant", "index or min (minimum over all i)"),
];

pub const SV: &[KeySpec] = &[key("sv.k", "k", "order k of sigma_{n-k+1}")];

pub const RECT: &[KeySpec] = &[key("rect.extra", "extra", "extra rows N - n")];

pub const DELOC: &[KeySpec] = &[key("deloc.frac", "frac", "index-set size as a fraction of n")];

pub const DISTANCE: &[KeySpec] = &[key("distance.k", "k", "comma-separated codimensions")];

pub const RLOGD: &[KeySpec] = &[
    key("rlogd.vector", "vector", "comma-separated vector; omit for the box experiment"),
    key("lcd.l", "l", "level L"),
    key("lcd.alpha", "alpha", "alpha in (0, 1)"),
    key("lcd.theta_max", "theta-max", "largest dilation scanned (vector mode)"),
    key("box.base", "base", "inner radius N of the annulus"),
    key("box.kappa", "kappa", "outer ratio kappa"),
    key("box.d", "d", "box dimension"),
    key("box.n", "box-n", "dimension in the scale c0/(32 sqrt n), default d"),
    key("box.c0", "c0", "scale constant c0"),
    key("box.k_max", "k-max", "denominator threshold K"),
    switch("box.exhaustive", "exhaustive", "enumerate the whole box", true),
];

pub const THRESHOLD: &[KeySpec] = &[
    key("threshold.vector", "vector", "comma-separated vector of length n"),
    key("threshold.l", "l", "level L"),
    key("zeroed.k", "k", "removed rows k"),
    key("zeroed.d", "d", "width d of the random block"),
    key("zeroed.nu", "nu", "keep probability of block entries"),
    switch("threshold.exact", "exact", "enumerate every block (discrete laws)", true),
];

pub const VERIFY: &[KeySpec] = &[key("verify.suite", "suite", "suite name or all")];

pub const REPORT: &[KeySpec] = &[
    runtime("report.input", "input", "tail curve CSV"),
    key("report.predicted", "predicted", "reference exponent for the plot"),
];

/// Raw string values keyed by dotted name.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Config {
    values: BTreeMap<String, String>,
}

impl Config {
    /// Parse `key = value` lines. `[section]` headers prefix later keys with `section.`;
    /// `#` starts a comment.
    pub fn parse_text(text: &str) -> CliResult<Self> {
        let mut values = BTreeMap::new();
        let mut section: Option<String> = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|s| !s.is_empty() && !s.contains('.'))
                    .ok_or_else(|| CliError::config(format!("line {}: bad section header '{line}'", lineno + 1)))?;
                section = Some(name.to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if k.is_empty() {
                return Err(CliError::config(format!("line {}: empty key", lineno + 1)));
            }
            let full = match &section {
                Some(s) if k.contains('.') => {
                    return Err(CliError::config(format!("line {}: '{k}' nests below [{s}]", lineno + 1)))
                }
                Some(s) => format!("{s}.{k}"),
                None => k.to_string(),
            };
            if full.matches('.').count() > 1 {
                return Err(CliError::config(format!("line {}: '{full}' nests more than one level", lineno + 1)));
            }
            if values.insert(full.clone(), v.trim().to_string()).is_some() {
                return Err(CliError::config(format!("line {}: duplicate key '{full}'", lineno + 1)));
            }
        }
        Ok(Config { values })
    }

    /// The `config` object of a JSON summary written by an earlier run.
    pub fn parse_json(text: &str) -> CliResult<Self> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid JSON: {e}")))?;
        let obj = doc
            .get("config")
            .and_then(|c| c.as_object())
            .ok_or_else(|| CliError::config("JSON file has no 'config' object"))?;
        let mut values = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            values.insert(k.clone(), s);
        }
        Ok(Config { values })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::parse_json(&text)
        } else {
            Self::parse_text(&text)
        }
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.values.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.values.keys().map(String::as_str)
    }

    /// Reject keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[KeySpec]) -> CliResult<()> {
        match self.keys().find(|k| !allowed.iter().any(|s| s.key == *k)) {
            Some(k) => Err(CliError::config(format!("unknown key '{k}'"))),
            None => Ok(()),
        }
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> CliResult<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| CliError::config(format!("{key} = '{v}': {e}"))))
            .transpose()
    }

    pub fn or<T: FromStr>(&self, key: &str, default: T) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn required<T: FromStr>(&self, key: &str) -> CliResult<T>
    where
        T::Err: std::fmt::Display,
    {
        self.parsed(key)?.ok_or_else(|| CliError::config(format!("missing required key '{key}'")))
    }

    pub fn flag(&self, key: &str) -> CliResult<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "1" | "yes") => Ok(true),
            Some("false" | "0" | "no") => Ok(false),
            Some(v) => Err(CliError::config(format!("{key} = '{v}' is not a boolean"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<T>().map_err(|e| CliError::config(format!("{key}: '{s}': {e}"))))
                    .collect()
            })
            .transpose()
    }

    /// Keys that change results, as a JSON object of strings.
    pub fn echo(&self, specs: &[KeySpec]) -> serde_json::Value {
        let map: serde_json::Map<String, serde_json::Value> = self
            .values
            .iter()
            .filter(|(k, _)| specs.iter().any(|s| s.key == k.as_str() && s.echoed))
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::Value::Object(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_comments() {
        let c = Config::parse_text("seed = 7 # run\n[ensemble]\nn = 12\ndist=gaussian\n\n[eps]\nlo = 0.1\n").unwrap();
        assert_eq!(c.get("seed"), Some("7"));
        assert_eq!(c.get("ensemble.n"), Some("12"));
        assert_eq!(c.get("ensemble.dist"), Some("gaussian"));
        assert_eq!(c.get("eps.lo"), Some("0.1"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Config::parse_text("seed 7").is_err());
        assert!(Config::parse_text("a.b.c = 1").is_err());
        assert!(Config::parse_text("[a]\nb.c = 1").is_err());
        assert!(Config::parse_text("seed = 1\nseed = 2").is_err());
        assert!(Config::parse_text("[a.b]\nc = 1").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let c = Config::parse_text("seed = 1\nbogus = 2").unwrap();
        assert!(c.check_keys(COMMON).is_err());
        let c = Config::parse_text("seed = 1\ntrials = 2").unwrap();
        assert!(c.check_keys(COMMON).is_ok());
    }

    #[test]
    fn typed_access() {
        let c = Config::parse_text("trials = 12\nk = 1, 4,8\nx = nope\nsvg = yes").unwrap();
        assert_eq!(c.required::<u64>("trials").unwrap(), 12);
        assert_eq!(c.list::<usize>("k").unwrap(), Some(vec![1, 4, 8]));
        assert!(c.required::<u64>("x").is_err());
        assert!(c.required::<u64>("missing").is_err());
        assert_eq!(c.or("missing", 3u32).unwrap(), 3);
        assert!(c.flag("svg").unwrap());
    }

    #[test]
    fn json_round_trip() {
        let c = Config::parse_text("seed = 5\nensemble.n = 9\noutput.dir = /tmp").unwrap();
        let echo = c.echo(&[COMMON, ENSEMBLE].concat());
        let doc = serde_json::json!({ "config": echo });
        let back = Config::parse_json(&doc.to_string()).unwrap();
        assert_eq!(back.get("seed"), Some("5"));
        assert_eq!(back.get("ensemble.n"), Some("9"));
        assert_eq!(back.get("output.dir"), None);
    }
}
