use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wsn_sync::config::{ConfigError, ScenarioConfig};
use wsn_sync::report::{compare_protocols, write_outputs, RunReport};
use wsn_sync::sim::{run_scenario, SimError};

#[derive(Parser)]
#[command(name = "wsn-sync", version, about = "Hierarchical WSN clock synchronization simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Overrides {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replaces the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces the config's end time, in seconds.
    #[arg(long)]
    until: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write errors.csv, energy.csv, messages.csv, report.txt.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Run two scenarios on the same network and compare energy and traffic.
    Compare {
        config_a: PathBuf,
        config_b: PathBuf,
        #[command(flatten)]
        opts: Overrides,
    },
    /// Run one scenario over consecutive seeds and summarize accuracy.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seeds: u64,
        #[command(flatten)]
        opts: Overrides,
    },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(_) | SimError::Topology(_) | SimError::Mismatch(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load(path: &Path, opts: &Overrides) -> Result<ScenarioConfig, Failure> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(until) = opts.until {
        cfg.run.end_s = until;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, opts } => {
            let cfg = load(&config, &opts)?;
            let out = run_scenario(&cfg)?;
            let report = RunReport::from_output(&out);
            write_outputs(&out, &report, &opts.out)?;
            print!("{}", report.render());
        }
        Command::Compare {
            config_a,
            config_b,
            opts,
        } => {
            let a = load(&config_a, &opts)?;
            let b = load(&config_b, &opts)?;
            let (out_a, out_b, cmp) = compare_protocols(&a, &b)?;
            write_outputs(&out_a, &cmp.a, &opts.out.join("a"))?;
            write_outputs(&out_b, &cmp.b, &opts.out.join("b"))?;
            let text = cmp.render();
            fs::write(opts.out.join("comparison.txt"), &text)?;
            print!("{text}");
        }
        Command::Sweep { config, seeds, opts } => {
            let base = load(&config, &opts)?;
            fs::create_dir_all(&opts.out)?;
            let mut csv = fs::File::create(opts.out.join("sweep.csv"))?;
            writeln!(csv, "seed,convergence_ns,class,samples,mean_abs_ns,p99_abs_ns,max_abs_ns")?;
            for i in 0..seeds {
                let mut cfg = base.clone();
                cfg.seed = base.seed.wrapping_add(i);
                let report = RunReport::from_output(&run_scenario(&cfg)?);
                let conv = report.convergence.map_or(String::new(), |t| t.0.to_string());
                println!(
                    "seed {}: convergence {}",
                    cfg.seed,
                    report
                        .convergence
                        .map_or("none".to_string(), |t| format!("{:.3} s", t.as_secs_f64()))
                );
                for (class, st) in &report.errors {
                    writeln!(
                        csv,
                        "{},{},{},{},{:.3},{},{}",
                        cfg.seed, conv, class, st.samples, st.mean_abs_ns, st.p99_abs_ns, st.max_abs_ns
                    )?;
                    println!("  {class}: p99 {} ns, max {} ns", st.p99_abs_ns, st.max_abs_ns);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(2)
        }
    }
}
