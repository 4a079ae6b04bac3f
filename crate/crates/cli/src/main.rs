//! curlvar: configuration-driven driver for cylindrical curl-curl ground
//! states.
//!
//! Usage: curlvar <check|solve|ray|reconstruct|certify> --config <path>
//!                [--out <dir>] [--seed <int>] [--refine <levels>]
//!
//! Exit codes: 0 all gates passed, 1 a gate failed, 2 error (bad usage,
//! config, numerics, or I/O; details as JSON on standard error).
//! CURLVAR_THREADS caps worker threads for multi-seed solves.

use std::path::PathBuf;
use std::process::ExitCode;

use curlvar::commands::{self, Command, Invocation};
use curlvar::config;
use curlvar::error::{error_json, CliError};

const USAGE: &str = "usage: curlvar <check|solve|ray|reconstruct|certify> \
--config <path> [--out <dir>] [--seed <int>] [--refine <levels>]";

struct Args {
    command: Command,
    config_path: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    refine: Option<usize>,
}

fn parse_args(argv: &[String]) -> Result<Args, CliError> {
    let mut it = argv.iter();
    let command_name = it
        .next()
        .ok_or_else(|| CliError::Usage(USAGE.into()))?;
    let command = Command::parse(command_name).ok_or_else(|| {
        CliError::Usage(format!("unknown command `{command_name}`; {USAGE}"))
    })?;
    let mut config_path = None;
    let mut out = None;
    let mut seed = None;
    let mut refine = None;
    while let Some(flag) = it.next() {
        let mut value = |name: &str| {
            it.next()
                .cloned()
                .ok_or_else(|| CliError::Usage(format!("{name} needs a value; {USAGE}")))
        };
        match flag.as_str() {
            "--config" => config_path = Some(PathBuf::from(value("--config")?)),
            "--out" => out = Some(PathBuf::from(value("--out")?)),
            "--seed" => {
                let raw = value("--seed")?;
                seed = Some(raw.parse::<u64>().map_err(|_| {
                    CliError::Usage(format!("--seed must be a nonnegative integer, got `{raw}`"))
                })?);
            }
            "--refine" => {
                let raw = value("--refine")?;
                refine = Some(raw.parse::<usize>().map_err(|_| {
                    CliError::Usage(format!("--refine must be a nonnegative integer, got `{raw}`"))
                })?);
            }
            other => {
                return Err(CliError::Usage(format!("unknown flag `{other}`; {USAGE}")));
            }
        }
    }
    let config_path =
        config_path.ok_or_else(|| CliError::Usage(format!("--config is required; {USAGE}")))?;
    Ok(Args {
        command,
        config_path,
        out,
        seed,
        refine,
    })
}

fn execute(argv: &[String]) -> Result<bool, CliError> {
    let args = parse_args(argv)?;
    let text = std::fs::read_to_string(&args.config_path).map_err(|e| {
        CliError::Config(format!("reading {}: {e}", args.config_path.display()))
    })?;
    let config = config::parse_config(&text)?;
    let out_dir = args
        .out
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let inv = Invocation {
        command: args.command,
        config,
        out_dir,
        seed: args.seed,
        refine: args.refine,
    };
    let outcome = commands::run(&inv)?;
    for gate in &outcome.gates {
        let status = if gate.passed { "pass" } else { "FAIL" };
        println!("gate {}: {} ({})", gate.name, status, gate.detail);
    }
    for path in &outcome.artifacts {
        println!("wrote {}", path.display());
    }
    Ok(outcome.all_passed())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    match execute(&argv) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            println!("status: gate failure");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(2)
        }
    }
}
