//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rmtlab::experiments::{fit_exponent, geometric_grid, run_distance_experiment, run_tail_experiment, Statistic};
use rmtlab::{DistSpec, MatrixProfile, StreamKey};
use rmtlab_cli::suites::run_suite;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = Box<dyn Fn() -> Verdict>;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

fn gap_exponent() -> Verdict {
    let n = 200;
    let eps = geometric_grid(0.05, 0.5, 1.2).unwrap();
    let st = Statistic::Gap { i: n / 2, k: 1 };
    let curve = run_tail_experiment(&st, &MatrixProfile::new(n, DistSpec::gaussian()), 10_000, 1, &eps).unwrap();
    match fit_exponent(&curve) {
        Ok(f) => verdict(
            f.slope >= 1.0 - 0.3,
            format!("slope {:.3} +/- {:.3} over {} points, need >= 0.7", f.slope, f.slope_ci, f.points),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn least_sv_exponent() -> Verdict {
    let eps = geometric_grid(0.05, 0.5, 1.2).unwrap();
    let profile = MatrixProfile::new(200, DistSpec::rademacher());
    let curve = run_tail_experiment(&Statistic::KthSv { k: 1 }, &profile, 10_000, 2, &eps).unwrap();
    match fit_exponent(&curve) {
        Ok(f) => verdict(
            (0.7..=1.3).contains(&f.slope),
            format!("slope {:.3} +/- {:.3} over {} points, need [0.7, 1.3]", f.slope, f.slope_ci, f.points),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn distance_scaling() -> Verdict {
    let eps = geometric_grid(0.02, 0.6, 1.1).unwrap();
    let profile = MatrixProfile::new(128, DistSpec::rademacher());
    let curves = run_distance_experiment(&profile, &[1, 4, 8], 20_000, 3, &eps).unwrap();
    let mut ok = true;
    let mut parts = Vec::new();
    for c in &curves {
        let k = c.k as f64;
        let slope = fit_exponent(&c.subgaussian).map(|f| f.slope).unwrap_or(f64::NAN);
        let chi = ChiSquared::new(k).unwrap();
        let covered = c
            .gaussian
            .points
            .iter()
            .filter(|p| {
                let t = p.eps * k.sqrt();
                let want = chi.cdf(t * t);
                p.ci_lo <= want && want <= p.ci_hi
            })
            .count();
        let share = covered as f64 / c.gaussian.points.len() as f64;
        ok &= slope >= 0.75 * k && share >= 0.9;
        parts.push(format!("k={} slope {:.3} (need >= {:.2}), chi cover {:.0}%", c.k, slope, 0.75 * k, 100.0 * share));
    }
    verdict(ok, parts.join("; "))
}

fn suite_verdict(names: &[&str]) -> Verdict {
    let key = StreamKey::new(0);
    let mut ok = true;
    let mut parts = Vec::new();
    for name in names {
        match run_suite(name, key) {
            Ok(o) => {
                ok &= o.passed;
                parts.push(format!("{} {}/{} failed", o.suite, o.failures, o.cases));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{name}: {e}"));
            }
        }
    }
    verdict(ok, parts.join("; "))
}

fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Verdict {
    let runs: &[&[&str]] = &[
        &["gap-tail", "--n", "30", "--dist", "rademacher", "--trials", "2000", "--seed", "11", "--svg"],
        &["gap-tail", "--n", "30", "--variant", "min", "--k", "3", "--trials", "1000", "--seed", "11"],
        &["sv-tail", "--n", "30", "--k", "2", "--trials", "2000", "--seed", "12"],
        &["rect-sv", "--n", "30", "--extra", "3", "--trials", "2000", "--seed", "13"],
        &["deloc", "--n", "30", "--frac", "0.2", "--trials", "1000", "--seed", "14"],
        &["distance", "--n", "40", "--k", "1,4", "--dist", "uniform", "--trials", "2000", "--seed", "15"],
        &["rlogd", "--d", "3", "--base", "2", "--k-max", "30", "--l", "0.05", "--dist", "rademacher", "--trials", "300", "--seed", "16"],
        &["threshold", "--vector", "1,2,0,1,0,0,1,0", "--k", "2", "--d", "2", "--nu", "0.5", "--dist", "rademacher", "--trials", "3000", "--seed", "17"],
        &["verify", "--suite", "decoupling", "--seed", "18"],
    ];
    let mut bad = Vec::new();
    let mut files = 0;
    for args in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "8"] {
            let dir = tempfile::tempdir().unwrap();
            let mut argv = vec!["rmtlab"];
            argv.extend_from_slice(args);
            argv.extend_from_slice(&["--threads", threads, "--out", dir.path().to_str().unwrap()]);
            let code = rmtlab_cli::run_with_output(argv, &mut std::io::sink());
            outputs.push((code, output_files(dir.path())));
        }
        files += outputs[0].1.len();
        if outputs[0].0 != 0 || outputs[0] != outputs[1] || outputs[0].1.is_empty() {
            bad.push(args[0]);
        }
    }
    verdict(bad.is_empty(), format!("{} commands, {files} files compared at 1 and 8 threads; mismatches: {bad:?}", runs.len()))
}

fn main() {
    // The thread count must come from the command lines under test.
    std::env::remove_var("RMTLAB_THREADS");
    let criteria: Vec<(&str, Option<Duration>, Check)> = vec![
        ("gap-tail exponent, gaussian n=200 k=1", Some(Duration::from_secs(300)), Box::new(gap_exponent)),
        ("least singular value tail, rademacher n=200", Some(Duration::from_secs(300)), Box::new(least_sv_exponent)),
        ("distance scaling, n=128 k in {1,4,8}", Some(Duration::from_secs(600)), Box::new(distance_scaling)),
        ("levy_mc vs exact oracle, 100 instances", None, Box::new(|| suite_verdict(&["levy-oracle"]))),
        (
            "hard invariant suites",
            None,
            Box::new(|| {
                suite_verdict(&["cosine", "containment", "interlacing", "paley-zygmund", "torus-shift", "spread"])
            }),
        ),
        ("decoupling inequality, 20 instances", None, Box::new(|| suite_verdict(&["decoupling"]))),
        ("restricted invertibility, 200 instances", None, Box::new(|| suite_verdict(&["restricted"]))),
        ("determinism across thread counts", None, Box::new(determinism)),
    ];
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let mut v = check();
        let took = start.elapsed();
        if let Some(b) = budget {
            if took > *b {
                v.passed = false;
                v.detail.push_str(&format!("; over the {}s budget", b.as_secs()));
            }
        }
        failed += usize::from(!v.passed);
        println!(
            "{} [{}] {name}: {} ({:.1}s)",
            if v.passed { "PASS" } else { "FAIL" },
            i + 1,
            v.detail,
            took.as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
