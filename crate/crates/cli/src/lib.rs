//! Batch front end for the `rmtlab` experiments and invariant suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod suites;
pub mod svg;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Arg, ArgAction, ArgMatches};
use serde_json::json;

use commands::{execute, Command, COMMANDS, VERSION};
use config::Config;
use error::{CliError, CliResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

fn cli() -> clap::Command {
    let mut app = clap::Command::new("rmtlab")
        .version(VERSION)
        .about("Monte Carlo tail experiments and invariant checks for random symmetric matrices")
        .subcommand_required(true);
    for &cmd in COMMANDS {
        let mut sub = clap::Command::new(cmd.name()).about(cmd.about()).arg(
            Arg::new("config").long("config").value_name("FILE").help("key = value file, or a JSON summary to re-run"),
        );
        for spec in cmd.keys() {
            let arg = Arg::new(spec.key).long(spec.flag).help(spec.help);
            sub = sub.arg(if spec.switch { arg.action(ArgAction::SetTrue) } else { arg.value_name("VALUE") });
        }
        app = app.subcommand(sub);
    }
    app
}

fn resolve(cmd: Command, m: &ArgMatches) -> CliResult<Config> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(p) => Config::load(&PathBuf::from(p))?,
        None => Config::default(),
    };
    for spec in cmd.keys() {
        if spec.switch {
            if m.get_flag(spec.key) {
                cfg.set(spec.key, "true");
            }
        } else if let Some(v) = m.get_one::<String>(spec.key) {
            cfg.set(spec.key, v.clone());
        }
    }
    cfg.check_keys(&cmd.keys())?;
    if cmd.needs_seed() && cfg.get("seed").is_none() {
        return Err(CliError::config("missing required key 'seed'"));
    }
    Ok(cfg)
}

/// Worker count: `RMTLAB_THREADS`, then the `threads` key, then all cores.
fn thread_count(cfg: &Config) -> CliResult<usize> {
    let from_env = std::env::var("RMTLAB_THREADS").ok().filter(|s| !s.trim().is_empty());
    let n = match from_env {
        Some(v) => v.trim().parse::<usize>().map_err(|e| CliError::config(format!("RMTLAB_THREADS = '{v}': {e}")))?,
        None => cfg.or("threads", std::thread::available_parallelism().map_or(1, |n| n.get()))?,
    };
    if n == 0 {
        return Err(CliError::config("thread count must be positive"));
    }
    Ok(n)
}

fn dispatch(cmd: Command, cfg: &Config) -> CliResult<(commands::Outcome, Vec<PathBuf>, usize)> {
    let threads = thread_count(cfg)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))?;
    let outcome = pool.install(|| execute(cmd, cfg))?;
    let dir = PathBuf::from(cfg.get("output.dir").unwrap_or("."));
    let written = if outcome.files.is_empty() { Vec::new() } else { outcome.files.commit(&dir)? };
    Ok((outcome, written, threads))
}

/// Run the command line `args` (including the program name) and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with_output(args, &mut std::io::stdout().lock())
}

/// Like [`run`], writing the summary line to `out` instead of standard output.
pub fn run_with_output<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match cli().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand required");
    let cmd = Command::from_name(name).expect("registered subcommand");
    let start = Instant::now();
    let res = resolve(cmd, sub).and_then(|cfg| dispatch(cmd, &cfg).map(|r| (cfg, r)));
    match res {
        Ok((cfg, (outcome, written, threads))) => {
            let status = if outcome.failed { "fail" } else { "ok" };
            let line = json!({
                "status": status,
                "command": cmd.name(),
                "version": VERSION,
                "config": cfg.echo(&cmd.keys()),
                "files": written.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "result": outcome.result,
                "threads": threads,
                "wall_time_s": start.elapsed().as_secs_f64(),
            });
            let _ = writeln!(out, "{line}");
            if outcome.failed {
                EXIT_VERIFY
            } else {
                EXIT_OK
            }
        }
        Err(e) => {
            eprintln!("rmtlab {}: {e}", cmd.name());
            let line = json!({ "status": "error", "command": cmd.name(), "version": VERSION, "message": e.to_string() });
            let _ = writeln!(out, "{line}");
            EXIT_CONFIG
        }
    }
}
