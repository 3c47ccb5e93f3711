//! Subcommand execution. Each command turns a resolved configuration into output
//! files and a result object for the summary line.

use std::path::Path;

use serde_json::{json, Value};

use rmtlab::arithmetic::{rlogd_vector, threshold_gl, threshold_gl_exact, LcdParams};
use rmtlab::ensembles::ZeroedOutSpec;
use rmtlab::experiments::{
    default_eps_grid, fit_exponent, geometric_grid, run_distance_experiment, run_tail_experiment,
    box_rlogd_exhaustive, box_rlogd_experiment, BoxRlogdConfig, Statistic, TailCurve, TailPoint,
};
use rmtlab::{make_dist, DistKind, DistSpec, MatrixProfile, StreamKey};

use crate::config::{self, Config, KeySpec};
use crate::error::{CliError, CliResult};
use crate::output::OutputSet;
use crate::suites::{run_suite, SUITES};
use crate::svg;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    GapTail,
    SvTail,
    RectSv,
    Deloc,
    Distance,
    Rlogd,
    Threshold,
    Verify,
    Report,
}

pub const COMMANDS: &[Command] = &[
    Command::GapTail,
    Command::SvTail,
    Command::RectSv,
    Command::Deloc,
    Command::Distance,
    Command::Rlogd,
    Command::Threshold,
    Command::Verify,
    Command::Report,
];

const DIST_ONLY: &[KeySpec] = &[config::ENSEMBLE[1], config::ENSEMBLE[2]];

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::GapTail => "gap-tail",
            Command::SvTail => "sv-tail",
            Command::RectSv => "rect-sv",
            Command::Deloc => "deloc",
            Command::Distance => "distance",
            Command::Rlogd => "rlogd",
            Command::Threshold => "threshold",
            Command::Verify => "verify",
            Command::Report => "report",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        COMMANDS.iter().copied().find(|c| c.name() == name)
    }

    pub fn about(self) -> &'static str {
        match self {
            Command::GapTail => "tail of the eigenvalue gap lambda_{i+k} - lambda_i",
            Command::SvTail => "tail of the k-th smallest singular value",
            Command::RectSv => "tail of the least singular value of a tall matrix",
            Command::Deloc => "tail of the smallest eigenvector mass on a coordinate subset",
            Command::Distance => "tail of the distance from a random vector to a column span",
            Command::Rlogd => "log-regularised denominator of a vector, or its box experiment",
            Command::Threshold => "threshold function of a vector against the zeroed-out matrix",
            Command::Verify => "run invariant suites",
            Command::Report => "fit and plot an existing tail curve CSV",
        }
    }

    pub fn keys(self) -> Vec<KeySpec> {
        use config::*;
        let parts: Vec<&[KeySpec]> = match self {
            Command::GapTail => vec![COMMON, ENSEMBLE, EPS, GAP],
            Command::SvTail => vec![COMMON, ENSEMBLE, EPS, SV],
            Command::RectSv => vec![COMMON, ENSEMBLE, EPS, RECT],
            Command::Deloc => vec![COMMON, ENSEMBLE, EPS, DELOC],
            Command::Distance => vec![COMMON, ENSEMBLE, EPS, DISTANCE],
            Command::Rlogd => vec![COMMON, DIST_ONLY, RLOGD],
            Command::Threshold => vec![COMMON, DIST_ONLY, THRESHOLD],
            Command::Verify => vec![&COMMON[..1], &COMMON[2..5], VERIFY],
            Command::Report => vec![&COMMON[2..], REPORT],
        };
        parts.concat()
    }

    /// Whether the command draws random numbers and so needs an explicit seed.
    pub fn needs_seed(self) -> bool {
        !matches!(self, Command::Verify | Command::Report)
    }
}

/// Files and the result object of a finished command.
pub struct Outcome {
    pub files: OutputSet,
    pub result: Value,
    /// `verify` found a failing suite.
    pub failed: bool,
}

pub fn execute(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    match cmd {
        Command::GapTail => {
            let n = cfg.required::<usize>("ensemble.n")?;
            let k = cfg.or("gap.k", 1usize)?;
            let st = match cfg.get("gap.variant").unwrap_or("index") {
                "index" => Statistic::Gap { i: cfg.or("gap.i", (n / 2).max(1))?, k },
                "min" => Statistic::MinGap { k },
                v => return Err(CliError::config(format!("gap.variant = '{v}' must be index or min"))),
            };
            tail_command(cmd, cfg, st)
        }
        Command::SvTail => tail_command(cmd, cfg, Statistic::KthSv { k: cfg.or("sv.k", 1)? }),
        Command::RectSv => tail_command(cmd, cfg, Statistic::RectSv { extra: cfg.or("rect.extra", 1)? }),
        Command::Deloc => tail_command(cmd, cfg, Statistic::Deloc { frac: cfg.or("deloc.frac", 0.1)? }),
        Command::Distance => distance_command(cmd, cfg),
        Command::Rlogd => rlogd_command(cmd, cfg),
        Command::Threshold => threshold_command(cmd, cfg),
        Command::Verify => verify_command(cmd, cfg),
        Command::Report => report_command(cmd, cfg),
    }
}

fn dist(cfg: &Config) -> CliResult<DistSpec> {
    let base = DistSpec::from_name(cfg.get("ensemble.dist").unwrap_or("gaussian"))?;
    match cfg.parsed::<f64>("ensemble.sparsity")? {
        None => Ok(base),
        Some(mu) => Ok(make_dist(DistKind::Sparse { base: Box::new(base.kind), mu })?),
    }
}

fn eps_grid(cfg: &Config) -> CliResult<Vec<f64>> {
    if let Some(values) = cfg.list::<f64>("eps.values")? {
        return Ok(values);
    }
    if ["eps.lo", "eps.hi", "eps.ratio"].iter().all(|k| cfg.get(k).is_none()) {
        return Ok(default_eps_grid());
    }
    Ok(geometric_grid(cfg.or("eps.lo", 0.02)?, cfg.or("eps.hi", 0.8)?, cfg.or("eps.ratio", 1.5)?)?)
}

fn prefix(cmd: Command, cfg: &Config) -> String {
    cfg.get("output.prefix").unwrap_or(cmd.name()).to_string()
}

fn header(cmd: Command, cfg: &Config) -> serde_json::Map<String, Value> {
    let mut m = serde_json::Map::new();
    m.insert("command".into(), json!(cmd.name()));
    m.insert("version".into(), json!(VERSION));
    m.insert("config".into(), cfg.echo(&cmd.keys()));
    m
}

fn json_bytes(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serialisable");
    s.push('\n');
    s.into_bytes()
}

/// Fit summary of a curve against an optional predicted exponent.
fn fit_json(curve: &TailCurve, predicted: Option<f64>) -> (Value, Option<rmtlab::ExponentFit>) {
    match fit_exponent(curve) {
        Ok(f) => {
            let conforms = predicted.map(|p| f.conforms(p));
            (json!({ "fit": f, "predicted_exponent": predicted, "conforms": conforms }), Some(f))
        }
        Err(e) => (json!({ "fit": null, "fit_error": e.to_string(), "predicted_exponent": predicted }), None),
    }
}

fn tail_command(cmd: Command, cfg: &Config, st: Statistic) -> CliResult<Outcome> {
    let n = cfg.required::<usize>("ensemble.n")?;
    let seed = cfg.required::<u64>("seed")?;
    let trials = cfg.or("trials", 10_000u64)?;
    let profile = MatrixProfile::new(n, dist(cfg)?);
    let curve = run_tail_experiment(&st, &profile, trials, seed, &eps_grid(cfg)?)?;
    let predicted = st.predicted_exponent();
    let (fit, fitted) = fit_json(&curve, predicted);
    let stem = prefix(cmd, cfg);
    let mut doc = header(cmd, cfg);
    doc.insert("statistic".into(), json!(st));
    doc.insert("scale".into(), json!(curve.scale));
    doc.insert("rows".into(), json!(curve.points.len()));
    doc.extend(fit.as_object().cloned().unwrap_or_default());
    let mut files = OutputSet::new();
    files.add(format!("{stem}.csv"), curve.to_csv());
    files.add(format!("{stem}.json"), json_bytes(&Value::Object(doc)));
    if cfg.flag("output.svg")? {
        files.add(format!("{stem}.svg"), svg::render(&curve, fitted.as_ref(), predicted));
    }
    let result = json!({ "statistic": st.name(), "rows": curve.points.len(), "slope": fitted.as_ref().map(|f| f.slope) });
    Ok(Outcome { files, result, failed: false })
}

fn distance_command(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    let n = cfg.required::<usize>("ensemble.n")?;
    let seed = cfg.required::<u64>("seed")?;
    let trials = cfg.or("trials", 10_000u64)?;
    let ks = cfg.list::<usize>("distance.k")?.unwrap_or_else(|| vec![1]);
    let profile = MatrixProfile::new(n, dist(cfg)?);
    let curves = run_distance_experiment(&profile, &ks, trials, seed, &eps_grid(cfg)?)?;
    let stem = prefix(cmd, cfg);
    let svg_on = cfg.flag("output.svg")?;
    let mut files = OutputSet::new();
    let mut per_k = Vec::new();
    let mut slopes = Vec::new();
    for c in &curves {
        let predicted = Statistic::Distance { k: c.k }.predicted_exponent();
        let (fit, fitted) = fit_json(&c.subgaussian, predicted);
        let (control, _) = fit_json(&c.gaussian, predicted);
        files.add(format!("{stem}_k{}.csv", c.k), c.subgaussian.to_csv());
        files.add(format!("{stem}_k{}_gaussian.csv", c.k), c.gaussian.to_csv());
        if svg_on {
            files.add(format!("{stem}_k{}.svg", c.k), svg::render(&c.subgaussian, fitted.as_ref(), predicted));
        }
        slopes.push(json!({ "k": c.k, "slope": fitted.as_ref().map(|f| f.slope) }));
        per_k.push(json!({ "k": c.k, "scale": c.subgaussian.scale, "rows": c.subgaussian.points.len(), "subgaussian": fit, "gaussian": control }));
    }
    let mut doc = header(cmd, cfg);
    doc.insert("curves".into(), Value::Array(per_k));
    files.add(format!("{stem}.json"), json_bytes(&Value::Object(doc)));
    Ok(Outcome { files, result: json!({ "statistic": "distance", "fits": slopes }), failed: false })
}

fn rlogd_command(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    let d = dist(cfg)?;
    let seed = cfg.required::<u64>("seed")?;
    let mut params = LcdParams::new(cfg.or("lcd.l", 1.0)?, cfg.or("lcd.alpha", 0.5)?, cfg.or("lcd.theta_max", 100.0)?)?;
    params.seed = seed;
    let result = if let Some(v) = cfg.list::<f64>("rlogd.vector")? {
        let r = rlogd_vector(&v, &params, &d)?;
        json!({ "mode": "vector", "rlogd": r, "found": r.found() })
    } else {
        let box_d = cfg.or("box.d", 2usize)?;
        let bc = BoxRlogdConfig {
            base: cfg.or("box.base", 2i64)?,
            kappa: cfg.or("box.kappa", 2.0)?,
            d: box_d,
            n: cfg.or("box.n", box_d)?,
            c0: cfg.or("box.c0", 1.0)?,
            k_max: cfg.or("box.k_max", 10.0)?,
            lcd: params,
            trials: cfg.or("trials", 10_000u64)?,
            seed,
        };
        let rep = if cfg.flag("box.exhaustive")? { box_rlogd_exhaustive(&bc, &d)? } else { box_rlogd_experiment(&bc, &d)? };
        json!({ "mode": "box", "fraction": rep.fraction, "exhaustive": rep.exhaustive, "points": rep.points })
    };
    let mut doc = header(cmd, cfg);
    doc.insert("result".into(), result.clone());
    let mut files = OutputSet::new();
    files.add(format!("{}.json", prefix(cmd, cfg)), json_bytes(&Value::Object(doc)));
    Ok(Outcome { files, result, failed: false })
}

fn threshold_command(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    let v = cfg
        .list::<f64>("threshold.vector")?
        .ok_or_else(|| CliError::config("missing required key 'threshold.vector'"))?;
    let seed = cfg.required::<u64>("seed")?;
    let l = cfg.or("threshold.l", 1.0)?;
    let spec = ZeroedOutSpec {
        nu: cfg.or("zeroed.nu", rmtlab::ensembles::DEFAULT_NU)?,
        ..ZeroedOutSpec::new(v.len(), cfg.or("zeroed.k", 1)?, cfg.or("zeroed.d", 1)?, dist(cfg)?)
    };
    let result = if cfg.flag("threshold.exact")? {
        json!({ "method": "exact", "estimate": threshold_gl_exact(&v, l, &spec)? })
    } else {
        let est = threshold_gl(&v, l, &spec, cfg.or("trials", 10_000u64)?, StreamKey::new(seed))?;
        json!({ "method": "mc", "estimate": est.estimate, "lo": est.lo, "hi": est.hi, "trials": est.trials })
    };
    let mut doc = header(cmd, cfg);
    doc.insert("result".into(), result.clone());
    let mut files = OutputSet::new();
    files.add(format!("{}.json", prefix(cmd, cfg)), json_bytes(&Value::Object(doc)));
    Ok(Outcome { files, result, failed: false })
}

fn verify_command(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    let which = cfg.get("verify.suite").unwrap_or("all");
    let names: Vec<&str> = match which {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        s => return Err(CliError::config(format!("unknown suite '{s}'; expected one of {} or all", SUITES.join(", ")))),
    };
    let key = StreamKey::new(cfg.or("seed", 0u64)?);
    let outcomes = names.iter().map(|n| run_suite(n, key)).collect::<rmtlab::Result<Vec<_>>>()?;
    let failed = outcomes.iter().any(|o| !o.passed);
    let brief: Vec<Value> = outcomes
        .iter()
        .map(|o| json!({ "suite": o.suite, "cases": o.cases, "failures": o.failures, "passed": o.passed }))
        .collect();
    let mut files = OutputSet::new();
    if cfg.get("output.dir").is_some() {
        let mut doc = header(cmd, cfg);
        doc.insert("suites".into(), json!(outcomes));
        files.add(format!("{}.json", prefix(cmd, cfg)), json_bytes(&Value::Object(doc)));
    }
    Ok(Outcome { files, result: json!({ "suites": brief, "passed": !failed }), failed })
}

/// Read a CSV written by a tail command.
pub fn parse_curve_csv(text: &str, statistic: &str) -> CliResult<TailCurve> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| CliError::config("empty CSV"))?;
    if head.trim() != "eps,scale,successes,trials,p_hat,ci_lo,ci_hi" {
        return Err(CliError::config(format!("unexpected CSV header '{head}'")));
    }
    let mut scale = 1.0;
    let mut points = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || CliError::config(format!("CSV row {}: '{line}'", i + 2));
        if f.len() != 7 {
            return Err(bad());
        }
        let eps: f64 = f[0].parse().map_err(|_| bad())?;
        scale = f[1].parse().map_err(|_| bad())?;
        let successes: u64 = f[2].parse().map_err(|_| bad())?;
        let trials: u64 = f[3].parse().map_err(|_| bad())?;
        if successes > trials {
            return Err(bad());
        }
        points.push(TailPoint::new(eps, successes, trials));
    }
    let trials = points.first().map_or(0, |p| p.trials);
    Ok(TailCurve { statistic: statistic.to_string(), scale, trials, points })
}

fn report_command(cmd: Command, cfg: &Config) -> CliResult<Outcome> {
    let input = cfg.get("report.input").ok_or_else(|| CliError::config("missing required key 'report.input'"))?;
    let path = Path::new(input);
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let name = path.file_stem().map_or("curve".into(), |s| s.to_string_lossy().into_owned());
    let curve = parse_curve_csv(&text, &name)?;
    let predicted = cfg.parsed::<f64>("report.predicted")?;
    let (fit, fitted) = fit_json(&curve, predicted);
    let stem = prefix(cmd, cfg);
    let mut doc = header(cmd, cfg);
    doc.insert("rows".into(), json!(curve.points.len()));
    doc.extend(fit.as_object().cloned().unwrap_or_default());
    let mut files = OutputSet::new();
    files.add(format!("{stem}.json"), json_bytes(&Value::Object(doc)));
    if cfg.flag("output.svg")? {
        files.add(format!("{stem}.svg"), svg::render(&curve, fitted.as_ref(), predicted));
    }
    Ok(Outcome { files, result: json!({ "rows": curve.points.len(), "slope": fitted.map(|f| f.slope) }), failed: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let curve = TailCurve::from_values("gap", 0.5, &[0.1, 0.2, 0.4], &[0.01, 0.06, 0.15, 0.3]);
        let back = parse_curve_csv(&curve.to_csv(), "gap").unwrap();
        assert_eq!(back.points, curve.points);
        assert_eq!(back.scale, 0.5);
        assert!(parse_curve_csv("a,b\n", "x").is_err());
        assert!(parse_curve_csv("eps,scale,successes,trials,p_hat,ci_lo,ci_hi\n1,1,5,4,0,0,0\n", "x").is_err());
    }

    #[test]
    fn key_tables_have_unique_flags() {
        for c in COMMANDS {
            let keys = c.keys();
            for (i, a) in keys.iter().enumerate() {
                assert!(keys[i + 1..].iter().all(|b| b.flag != a.flag && b.key != a.key), "{} {}", c.name(), a.flag);
            }
        }
    }
}
