//! Command-line runner for jumplab scenario files.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use jumplab::scenario::{
    load_config, run_scenario, scenario_files, RunOptions, ScenarioConfig, ESTIMATORS,
};
use jumplab::{RngStream, Simulator};

#[derive(Parser)]
#[command(name = "jumplab", version, about = "Monte Carlo experiments for jump-diffusion operators")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Fail when an estimate is uncertified.
    #[arg(long)]
    strict: bool,
    /// Report directory (overrides the config and JUMPLAB_OUT_DIR).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Record wall-clock times in the report.
    #[arg(long)]
    timing: bool,
    /// Also write this many sample paths from the experiment's start point.
    #[arg(long, value_name = "N")]
    dump_paths: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Parse and check a scenario file without simulating.
    Validate { config: PathBuf },
    /// Run every `*.toml` scenario in a directory.
    RunAll {
        dir: PathBuf,
        #[command(flatten)]
        args: RunArgs,
    },
    /// List built-in fields, kernels and estimators.
    ListBuiltins,
}

fn out_dir(args: &RunArgs, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    if let Some(o) = &cfg.run.output {
        return PathBuf::from(o);
    }
    std::env::var_os("JUMPLAB_OUT_DIR").map_or_else(|| PathBuf::from("reports"), PathBuf::from)
}

fn dump_paths(cfg: &ScenarioConfig, n: u64, dir: &Path) -> Result<()> {
    let sim = Simulator::new(cfg.operator.build()?, cfg.simulation.clone())?;
    let x0 = cfg.experiment.sample_points(cfg.operator.dim).remove(0);
    let paths = dir.join(format!("{}.paths", cfg.id));
    std::fs::create_dir_all(&paths)?;
    for i in 0..n {
        let p = sim.sample_path(&x0, RngStream::new(cfg.run.seed, cfg.run.first_stream + i))?;
        let file = std::fs::File::create(paths.join(format!("path_{i}.csv")))?;
        p.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// Runs one file and returns its exit status.
fn run_one(path: &Path, args: &RunArgs) -> Result<i32> {
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: invalid scenario", path.display());
            for err in &e.0 {
                eprintln!("  {err}");
            }
            return Ok(1);
        }
    };
    let report = run_scenario(
        &cfg,
        &RunOptions {
            timing: args.timing,
            strict: args.strict,
        },
    );
    let dir = out_dir(args, &cfg);
    let written = report
        .write(&dir)
        .with_context(|| format!("writing report to {}", dir.display()))?;
    if let Some(n) = args.dump_paths {
        dump_paths(&cfg, n, &dir)?;
    }
    print!("{}", report.summary());
    for w in written {
        println!("  wrote {}", w.display());
    }
    Ok(report.status())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("cannot size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let status = match run(cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    ExitCode::from(status as u8)
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Run { config, args } => run_one(&config, &args),
        Command::Validate { config } => match load_config(&config) {
            Ok(c) => {
                println!("{}: ok ({} estimator, params hash {})", config.display(), c.experiment.name(), c.params_hash());
                Ok(0)
            }
            Err(e) => {
                for err in &e.0 {
                    println!("{}: {err}", config.display());
                }
                Ok(1)
            }
        },
        Command::RunAll { dir, args } => {
            let files = scenario_files(&dir).with_context(|| format!("reading {}", dir.display()))?;
            if files.is_empty() {
                anyhow::bail!("no scenario files in {}", dir.display());
            }
            let mut worst = 0;
            for f in files {
                println!("== {}", f.display());
                worst = worst.max(run_one(&f, &args)?);
            }
            Ok(worst)
        }
        Command::ListBuiltins => {
            println!("diffusions: {}", jumplab::operator::DIFFUSIONS.join(", "));
            println!("drifts:     {}", jumplab::operator::DRIFTS.join(", "));
            println!("kernels:    {}", jumplab::kernel::KERNELS.join(", "));
            println!("estimators: {}", ESTIMATORS.join(", "));
            println!("domains:    ball, cube");
            println!("payoffs:    constant, linear, indicator, halfspace");
            Ok(0)
        }
    }
}
