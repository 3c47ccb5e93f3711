//! Invariant suites run by `verify`. Each returns case and failure counts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use rmtlab::arithmetic::{level_set_containment_check, torus_norm};
use rmtlab::ensembles::{sample_zeroed_out, ZeroedOutSpec};
use rmtlab::experiments::{decoupling_check, interlace_gap_chain_check};
use rmtlab::geometry::{classify, spread_count, spread_lower_bound, SphereClass, SphereParams};
use rmtlab::smallball::{
    cosine_bounds_check, inequality_suite, levy_exact_discrete, levy_mc, paley_zygmund_check, CenterGrid,
    HansonWrightConfig, WeightedSum,
};
use rmtlab::spectral::{interlacing_check, restricted_column_select, SelectMode};
use rmtlab::{sample_symmetric, DistSpec, MatrixProfile, Result, StreamKey};

pub const SUITES: &[&str] = &[
    "cosine",
    "containment",
    "interlacing",
    "paley-zygmund",
    "torus-shift",
    "spread",
    "levy-oracle",
    "decoupling",
    "restricted",
    "chain",
    "inequalities",
];

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub cases: u64,
    pub failures: u64,
    /// Largest tolerated `failures / cases`.
    pub allowed_rate: f64,
    pub passed: bool,
    pub detail: serde_json::Value,
}

impl SuiteOutcome {
    fn new(suite: &str, cases: u64, failures: u64, allowed_rate: f64, detail: serde_json::Value) -> Self {
        let passed = failures as f64 <= allowed_rate * cases as f64;
        SuiteOutcome { suite: suite.to_string(), cases, failures, allowed_rate, passed, detail }
    }
}

pub fn builtin_dists() -> Vec<DistSpec> {
    vec![DistSpec::rademacher(), DistSpec::gaussian(), DistSpec::uniform()]
}

fn gaussian_matrix(rows: usize, cols: usize, key: StreamKey) -> DMatrix<f64> {
    let g = DistSpec::gaussian();
    let mut rng = key.rng();
    DMatrix::from_fn(rows, cols, |_, _| g.sample(&mut rng))
}

pub fn run_suite(name: &str, key: StreamKey) -> Result<SuiteOutcome> {
    let key = key.tagged(name);
    match name {
        "cosine" => cosine(),
        "containment" => containment(key),
        "interlacing" => interlacing(key),
        "paley-zygmund" => paley_zygmund(),
        "torus-shift" => torus_shift(key),
        "spread" => spread(key),
        "levy-oracle" => levy_oracle(key),
        "decoupling" => decoupling(key),
        "restricted" => restricted(key),
        "chain" => chain(key),
        "inequalities" => inequalities(key),
        other => Err(rmtlab::Error::InvalidParameter(format!("unknown suite '{other}'"))),
    }
}

fn cosine() -> Result<SuiteOutcome> {
    let points = 100_000u64;
    let ok = cosine_bounds_check(points as usize);
    Ok(SuiteOutcome::new("cosine", points, u64::from(!ok), 0.0, json!({ "range": [-2.0, 2.0] })))
}

fn containment(key: StreamKey) -> Result<SuiteOutcome> {
    let w = gaussian_matrix(8, 2, key.tagged("w"));
    let pairs = 10_000;
    let rep = level_set_containment_check(&w, 0.5, &DistSpec::rademacher(), pairs, key.tagged("pairs"))?;
    Ok(SuiteOutcome::new("containment", rep.pairs, rep.violations, 0.0, json!({ "max_ratio": rep.max_ratio })))
}

fn interlacing(key: StreamKey) -> Result<SuiteOutcome> {
    let dists = builtin_dists();
    let matrices = 10_000u64;
    let results = (0..matrices)
        .into_par_iter()
        .map(|t| {
            let k = key.child(t);
            let n = k.tagged("n").rng().random_range(2..=40usize);
            let profile = MatrixProfile::new(n, dists[(t % 3) as usize].clone());
            interlacing_check(&sample_symmetric(&profile, k)?).map(|r| (u64::from(!r.holds), r.max_violation))
        })
        .collect::<Result<Vec<_>>>()?;
    let failures = results.iter().map(|r| r.0).sum();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(SuiteOutcome::new("interlacing", matrices, failures, 0.0, json!({ "max_violation": worst })))
}

fn paley_zygmund() -> Result<SuiteOutcome> {
    let checks = builtin_dists().iter().map(paley_zygmund_check).collect::<Result<Vec<_>>>()?;
    let failures = checks.iter().filter(|c| !c.holds).count() as u64;
    Ok(SuiteOutcome::new("paley-zygmund", checks.len() as u64, failures, 0.0, json!(checks)))
}

fn torus_shift(key: StreamKey) -> Result<SuiteOutcome> {
    let cases = 100_000u64;
    let worst = (0..cases)
        .into_par_iter()
        .map(|t| {
            let mut rng = key.child(t).rng();
            let len = rng.random_range(1..=8usize);
            let x: Vec<f64> = (0..len).map(|_| rng.random_range(-50.0..50.0)).collect();
            let shifted: Vec<f64> = x.iter().map(|v| v + rng.random_range(-1000i64..=1000) as f64).collect();
            (torus_norm(&shifted) - torus_norm(&x)).abs()
        })
        .reduce(|| 0.0, f64::max);
    let failures = u64::from(worst > 1e-9);
    Ok(SuiteOutcome::new("torus-shift", cases, failures, 0.0, json!({ "max_difference": worst })))
}

fn spread(key: StreamKey) -> Result<SuiteOutcome> {
    let wanted = 10_000u64;
    let params = SphereParams::default();
    let g = DistSpec::gaussian();
    let (mut found, mut failures, mut drawn) = (0u64, 0u64, 0u64);
    while found < wanted {
        let mut rng = key.child(drawn).rng();
        drawn += 1;
        let n = rng.random_range(10..=200usize);
        let mut v: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let spikes = rng.random_range(0..=3usize);
        for _ in 0..spikes {
            let j = rng.random_range(0..n);
            v[j] *= rng.random_range(1.0..4.0) * (n as f64).sqrt() / 3.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        if classify(&v, params)?.0 != SphereClass::Incompressible {
            continue;
        }
        found += 1;
        if (spread_count(&v, params) as f64) < spread_lower_bound(n, params) {
            failures += 1;
        }
    }
    Ok(SuiteOutcome::new("spread", found, failures, 0.0, json!({ "drawn": drawn, "delta": params.delta, "rho": params.rho })))
}

/// Random weight vectors with `n <= 12` Rademacher coefficients, mixing integer and
/// generic weights. The Monte Carlo interval must cover the exact value in 93 of 100.
fn levy_oracle(key: StreamKey) -> Result<SuiteOutcome> {
    let dist = DistSpec::rademacher();
    let instances = 100u64;
    let mut misses = Vec::new();
    for t in 0..instances {
        let mut rng = key.child(t).rng();
        let n = rng.random_range(1..=12usize);
        let v: Vec<f64> = if t % 2 == 0 {
            (0..n).map(|_| rng.random_range(1..=3i32) as f64).collect()
        } else {
            (0..n).map(|_| rng.random_range(0.1..2.0)).collect()
        };
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let radius = rng.random_range(0.0..1.0) * norm;
        let exact = levy_exact_discrete(&v, &dist, radius, false)?.value;
        let sampler = WeightedSum { weights: &v, dist: &dist, symmetrized: false };
        let mc = levy_mc(&sampler, radius, 20_000, &CenterGrid::Auto, key.child(t).tagged("mc"))?;
        if !(mc.ci_low - 1e-12 <= exact && exact <= mc.ci_high + 1e-12) {
            misses.push(json!({ "instance": t, "exact": exact, "mc": mc.value, "ci": [mc.ci_low, mc.ci_high] }));
        }
    }
    let failures = misses.len() as u64;
    Ok(SuiteOutcome::new("levy-oracle", instances, failures, 0.07, json!({ "misses": misses })))
}

/// Twenty small zeroed-out instances with integer test vectors. The threshold sits
/// below the root mean square of `||M X||` so both sides are far from 0 and 1.
fn decoupling(key: StreamKey) -> Result<SuiteOutcome> {
    let instances = 20u64;
    let dists = [DistSpec::rademacher(), DistSpec::uniform()];
    let mut reports = Vec::new();
    let mut failures = 0;
    for t in 0..instances {
        let k0 = key.child(t);
        let mut rng = k0.tagged("shape").rng();
        let n = rng.random_range(8..=12usize);
        let k = rng.random_range(1..=2usize);
        let d = rng.random_range(2..=3usize);
        let spec = ZeroedOutSpec { nu: 0.5, ..ZeroedOutSpec::new(n, k, d, dists[(t % 2) as usize].clone()) };
        let x: Vec<f64> = (0..n)
            .map(|_| rng.random_range(1..=3i32) as f64 * if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let xv = DVector::from_column_slice(&x);
        let pilot = 2000u64;
        let mean_sq = (0..pilot)
            .map(|p| sample_zeroed_out(&spec, k0.tagged("pilot").child(p)).map(|z| (&z.matrix * &xv).norm_squared()))
            .sum::<Result<f64>>()?
            / pilot as f64;
        let s = 0.8 * mean_sq.sqrt();
        let rep = decoupling_check(&spec, &x, Some(s), 100_000, k0.tagged("check"))?;
        failures += u64::from(!rep.holds);
        reports.push(json!({ "n": n, "k": k, "d": d, "dist": spec.dist.name(), "lhs": rep.lhs.p_hat, "rhs": rep.rhs.p_hat, "slack": rep.slack, "holds": rep.holds }));
    }
    Ok(SuiteOutcome::new("decoupling", instances, failures, 0.0, json!(reports)))
}

fn restricted(key: StreamKey) -> Result<SuiteOutcome> {
    let instances = 200u64;
    let mut failures = 0;
    let mut worst = 0.0f64;
    for t in 0..instances {
        let mut rng = key.child(t).tagged("shape").rng();
        let k = rng.random_range(2..=5usize);
        let d = rng.random_range(k..=9usize);
        let l = rng.random_range(1..k);
        let w = gaussian_matrix(k, d, key.child(t));
        let sel = restricted_column_select(&w, l, SelectMode::Exhaustive)?;
        worst = worst.max(sel.ratio());
        failures += u64::from(sel.ratio() > 3.0);
    }
    Ok(SuiteOutcome::new("restricted", instances, failures, 0.01, json!({ "max_ratio": worst, "constant": 3.0 })))
}

fn chain(key: StreamKey) -> Result<SuiteOutcome> {
    let a = interlace_gap_chain_check(&MatrixProfile::new(8, DistSpec::gaussian()), 1, 0.5, 2000, key.child(0).raw())?;
    let b = interlace_gap_chain_check(&MatrixProfile::new(12, DistSpec::rademacher()), 3, 0.5, 1000, key.child(1).raw())?;
    let failures = a.failures() + b.failures();
    Ok(SuiteOutcome::new("chain", a.cases + b.cases, failures, 0.0, json!([a, b])))
}

fn inequalities(key: StreamKey) -> Result<SuiteOutcome> {
    let rep = inequality_suite(&builtin_dists(), &HansonWrightConfig::default(), key)?;
    let cases = rep.tails.len() as u64 + 1;
    let failures = rep.tails.iter().filter(|t| !t.holds).count() as u64 + u64::from(!rep.hanson_wright.holds);
    Ok(SuiteOutcome::new("inequalities", cases, failures, 0.0, json!(rep)))
}
