use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use smib_observer::config::{load_config, preset, RunConfig, PRESETS};
use smib_observer::report::compare_report;
use smib_observer::runner::{execute, load_reports};
use smib_observer::verify::{default_preset, run_suite, SUITES};

/// Synchronous generator state observation from PMU measurements.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Output directory; overrides the config's `[output] dir`.
    #[arg(long, global = true, env = "SMIB_OUT_DIR")]
    out: Option<PathBuf>,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario of a config file or preset once.
    Run { config: String },
    /// Run every entry of the config's `[sweep]` lists in parallel.
    Sweep { config: String },
    /// Run a named verification suite; exits nonzero when a check fails.
    Verify {
        suite: String,
        /// Config or preset supplying the scenario and sampling options.
        #[arg(long)]
        config: Option<String>,
    },
    /// Print the comparison table of all reports in a directory.
    Report { dir: PathBuf },
    /// List shipped presets, or print one.
    Presets { name: Option<String> },
}

fn out_dir(cli_out: &Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    cli_out.clone().unwrap_or_else(|| cfg.output.dir.clone())
}

fn run(cli: &Cli, config: &str, sweep: bool) -> anyhow::Result<ExitCode> {
    let cfg = load_config(config).with_context(|| format!("loading {config}"))?;
    let dir = out_dir(&cli.out, &cfg);
    let outputs = execute(&cfg, &dir, sweep)?;
    for o in &outputs {
        println!("wrote {} and {}", o.csv.display(), o.json.display());
    }
    let reports: Vec<_> = outputs.iter().map(|o| o.report.clone()).collect();
    print!("{}", compare_report(&reports));
    let mut ok = true;
    for r in &reports {
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("{}: {}", r.label, c.line());
            ok = false;
        }
    }
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn verify(suite: &str, config: Option<&str>) -> anyhow::Result<ExitCode> {
    if !SUITES.contains(&suite) {
        bail!("unknown suite `{suite}`; expected one of {}", SUITES.join(", "));
    }
    let source = config.unwrap_or_else(|| default_preset(suite));
    let cfg = load_config(source).with_context(|| format!("loading {source}"))?;
    let checks = run_suite(suite, &cfg)?;
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    println!("{suite}: {} checks, {failed} failed", checks.len());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn report(dir: &Path) -> anyhow::Result<ExitCode> {
    let reports = load_reports(dir)?;
    if reports.is_empty() {
        bail!("no *.report.json files in {}", dir.display());
    }
    print!("{}", compare_report(&reports));
    Ok(ExitCode::SUCCESS)
}

fn presets(name: Option<&str>) -> anyhow::Result<ExitCode> {
    match name {
        None => {
            for (n, _) in PRESETS {
                println!("{n}");
            }
        }
        Some(n) => match preset(n) {
            Some(text) => print!("{text}"),
            None => bail!("no preset named `{n}`"),
        },
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Run { config } => run(&cli, config, false),
        Command::Sweep { config } => run(&cli, config, true),
        Command::Verify { suite, config } => verify(suite, config.as_deref()),
        Command::Report { dir } => report(dir),
        Command::Presets { name } => presets(name.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
