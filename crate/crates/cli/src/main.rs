//! `sdbp-sim`: run SDBP link simulations from a TOML config.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use sdbp::exec::Exec;
use sdbp::experiment::{run_block, sweep_with_progress, write_artifacts, ExperimentSpec, ProgressLog};
use sdbp::signal::frame_len;
use sdbp::validate;

use sdbp_cli::config::{power_range, ConfigError, Resolved, RunConfig};

#[derive(Parser)]
#[command(name = "sdbp-sim", version, about = "Stochastic digital backpropagation link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the launch powers listed in the config.
    Simulate(RunArgs),
    /// Run a launch-power range, overriding the config's power list.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// First launch power in dBm.
        #[arg(long, allow_hyphen_values = true)]
        from: f64,
        /// Last launch power in dBm (inclusive).
        #[arg(long, allow_hyphen_values = true)]
        to: f64,
        /// Power step in dB.
        #[arg(long, default_value_t = 1.0)]
        step: f64,
    },
    /// Run the built-in numerical self-checks.
    Validate,
    /// Time one Monte Carlo block with sequential and parallel execution.
    Bench(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Override experiment.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override engine.workers (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override engine.output.
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// Print the resolved configuration and derived link quantities, then exit
    /// without simulating or writing anything.
    #[arg(long)]
    dry_run: bool,
}

enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

fn load(args: &RunArgs, powers: Option<Vec<f64>>) -> std::result::Result<(RunConfig, Resolved), Failure> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    if let Some(seed) = args.seed {
        let seed = i64::try_from(seed).map_err(|_| Failure::Config(anyhow::anyhow!("--seed {seed} is too large")))?;
        cfg.experiment.master_seed = Some(seed);
    }
    if let Some(w) = args.workers {
        cfg.engine.workers = Some(w as i64);
    }
    if let Some(o) = &args.output {
        cfg.engine.output = Some(o.display().to_string());
    }
    if let Some(p) = powers {
        cfg.experiment.powers = p.iter().map(|v| format!("{v} dBm")).collect();
    }
    let resolved = cfg.resolve()?;
    Ok((cfg.with_defaults()?, resolved))
}

fn print_plan(cfg: &RunConfig, spec: &ExperimentSpec) -> Result<()> {
    println!("{}", cfg.to_toml_string());
    let pulse = spec.pulse.build()?;
    let samples = frame_len(&pulse, spec.symbols_per_block);
    println!(
        "# frame: {} symbols/block, {} samples at {:.3} GS/s",
        spec.symbols_per_block,
        samples,
        spec.link.symbol_rate * spec.pulse.samples_per_symbol as f64 * 1e-9
    );
    println!("# power_dBm  step_km  segments  edfa1_dB  edfa2_dB");
    for &p in &spec.powers_dbm {
        let link = spec.link_at(p);
        let plan = link.step_plan()?;
        let step = plan.segments.iter().cloned().fold(0.0, f64::max);
        let (g1, g2) = link.amplifiers();
        let g2 = g2.map_or("-".to_string(), |a| format!("{:.3}", 10.0 * a.gain.log10()));
        println!(
            "{p:>11}  {step:>7.3}  {:>8}  {:>8.3}  {g2:>8}",
            plan.len(),
            10.0 * g1.gain.log10()
        );
    }
    Ok(())
}

fn run(resolved: &Resolved) -> Result<()> {
    let Resolved { spec, workers, output } = resolved;
    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let log_path = output.join("progress.jsonl");
    let log = ProgressLog::open(&log_path, spec)?;
    let resumed = log.completed().len();
    if resumed > 0 {
        eprintln!("resuming: {resumed} finished blocks found in {}", log_path.display());
    }
    let start = Instant::now();
    let exec = Exec::default();
    let result = exec.install(*workers, || sweep_with_progress(spec, exec, Some(&log)))?;
    write_artifacts(spec, &result, output)?;
    eprintln!("finished in {:.1} s", start.elapsed().as_secs_f64());
    print_table(&result.cells, output);
    Ok(())
}

fn print_table(cells: &[sdbp::experiment::CellResult], output: &Path) {
    println!("{:<10} {:>9} {:>9} {:>7} {:>11}", "detector", "power_dBm", "symbols", "errors", "ser");
    for c in cells {
        println!(
            "{:<10} {:>9} {:>9} {:>7} {:>11.3e}",
            c.detector.to_string(),
            c.power_dbm,
            c.symbols,
            c.errors,
            c.ser
        );
    }
    println!("artifacts written to {}", output.display());
}

fn bench(resolved: &Resolved) -> Result<()> {
    let spec = &resolved.spec;
    let power = spec.powers_dbm[0];
    println!("one block at {power} dBm, K = {}, N_p = {}", spec.symbols_per_block, spec.particles);
    for (name, exec) in [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)] {
        let start = Instant::now();
        let outcome = exec.install(resolved.workers, || run_block(spec, power, 0, exec))?;
        let errors: usize = outcome.counts.iter().map(|c| c.errors).sum();
        println!("{name:<10} {:>8.3} s  ({errors} symbol errors over all detectors)", start.elapsed().as_secs_f64());
    }
    Ok(())
}

fn execute(cli: Cli) -> std::result::Result<(), Failure> {
    let (args, powers) = match &cli.command {
        Command::Validate => {
            let report = validate::run_suite(None);
            print!("{}", report.table());
            return if report.all_passed() {
                Ok(())
            } else {
                Err(Failure::Runtime(anyhow::anyhow!("self-checks failed")))
            };
        }
        Command::Simulate(a) | Command::Bench(a) => (a, None),
        Command::Sweep { run, from, to, step } => {
            let p = power_range(*from, *to, *step).map_err(|e| Failure::Config(anyhow::anyhow!(e)))?;
            (run, Some(p))
        }
    };
    let (cfg, resolved) = load(args, powers)?;
    if args.dry_run {
        return print_plan(&cfg, &resolved.spec).map_err(Failure::Runtime);
    }
    match cli.command {
        Command::Bench(_) => bench(&resolved),
        _ => run(&resolved),
    }
    .map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
