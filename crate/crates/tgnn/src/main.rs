use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use tgnn::config::ExperimentConfig;
use tgnn::io;
use tgnn::pipeline::{sig, sweep, Axis, Options, Pipeline, Stage};
use tgnn_core::uq::MetricRow;

/// Theory-guided neural surrogate for transient Darcy flow in random media.
///
/// Worker threads default to the core count; set TGNN_WORKERS to cap them.
#[derive(Parser)]
#[command(name = "tgnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file, or a built-in preset such as desk/base or paper/base.
    #[arg(long, global = true, default_value = "desk/base")]
    config: String,
    /// Override a config key, e.g. --set collocation.interior=2000.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output root; each run lands in a subdirectory named by config hash.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    /// Master seed, replacing the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the stage plan without running anything.
    #[arg(long, global = true)]
    dry_run: bool,
    /// Fixed-order reductions (always on; recorded in the manifest).
    #[arg(long, global = true)]
    deterministic: bool,
    /// Build missing upstream stages.
    #[arg(long, global = true)]
    build_deps: bool,
    /// No progress output.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Eigenvalue and retained-energy table of the KLE.
    KleInspect,
    /// Monte Carlo reference ensemble with the finite-difference solver.
    Simulate,
    /// Labeled training data from reference simulations.
    GenData,
    /// Train the surrogate.
    Train,
    /// Monte Carlo moments through the surrogate and accuracy metrics.
    Uq,
    /// Fine-tune a composite surrogate at the configured target variance.
    Transfer,
    /// Plots and summary of a finished run.
    Report,
    /// Every stage, end to end.
    Run,
    /// One pipeline per value along an axis.
    Sweep {
        /// nc, r or variance
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Print the resolved configuration and its hash.
    ShowConfig,
}

fn main() {
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Ok(v) = std::env::var("TGNN_WORKERS") {
        let n: usize = v.parse().context("TGNN_WORKERS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    let mut sets = cli.set.clone();
    if let Some(s) = cli.seed {
        sets.push(format!("seed={s}"));
    }
    let cfg = ExperimentConfig::load(&cli.config, &sets)?;
    let opts = Options {
        out: cli.out.clone(),
        build_deps: cli.build_deps || matches!(cli.command, Command::Run),
        dry_run: cli.dry_run,
        deterministic: cli.deterministic,
        verbose: !cli.quiet,
    };
    let target = match &cli.command {
        Command::ShowConfig => {
            print!("{}", cfg.to_toml()?);
            println!("# hash {}", cfg.hash());
            return Ok(());
        }
        Command::Sweep { axis, values } => {
            let points = sweep(&cfg, *axis, values, &opts)?;
            println!("{:>12}  {:<16}  {:>12}  {:>12}  {:>12}  {:>12}", axis.name(), "config", "mean_rel_l2", "mean_r2", "var_rel_l2", "var_r2");
            for p in &points {
                match (&p.metrics, &p.error) {
                    (Some(m), _) => println!("{:>12}  {:<16}  {}", p.value, &p.config_hash[..16], row(m)),
                    (None, Some(e)) => println!("{:>12}  failed: {e}", p.value),
                    (None, None) => println!("{:>12}  planned", p.value),
                }
            }
            if points.iter().any(|p| p.error.is_some()) {
                anyhow::bail!("some sweep points failed");
            }
            return Ok(());
        }
        Command::KleInspect => Stage::Kle,
        Command::Simulate => Stage::Benchmark,
        Command::GenData => Stage::Data,
        Command::Train => Stage::Train,
        Command::Uq => Stage::Uq,
        Command::Transfer => Stage::Transfer,
        Command::Report | Command::Run => Stage::Report,
    };
    let mut p = Pipeline::new(cfg, opts)?;
    p.run(&[target])?;
    if cli.dry_run {
        return Ok(());
    }
    let dir = p.stage_dir(target)?;
    match cli.command {
        Command::KleInspect => {
            let rows = io::read_columns(&dir.join("kle_energy.csv"), "n", "energy")?;
            let (model, _) = p.kle_models()?;
            println!("{:>4}  {:>14}  {:>12}", "n", "eigenvalue", "energy");
            println!("{:>4}  {:>14}  {:>12}", 0, "", sig(0.0));
            for (m, (n, e)) in model.modes.iter().zip(rows.iter().skip(1)) {
                println!("{:>4}  {:>14}  {:>12}", n, sig(m.eigenvalue), sig(*e));
            }
            println!("retained {} modes, energy {}", model.len(), sig(model.energy_fraction));
        }
        Command::Train => {
            let history = io::read_history(&dir.join("history.csv"))?;
            if let Some((epoch, v)) = history.last() {
                println!("epoch {epoch}: loss {}", sig(v[0]));
            }
        }
        Command::Uq => {
            let table = p.metrics()?;
            println!("{:>5}  {:>12}  {:>12}  {:>12}  {:>12}", "step", "mean_rel_l2", "mean_r2", "var_rel_l2", "var_r2");
            for r in &table.rows {
                println!("{:>5}  {}", r.step, row(r));
            }
        }
        Command::Transfer => {
            let (before, after) = p.transfer_metrics()?;
            let step = p.cfg.uq.report_step;
            for (label, t) in [("before", before), ("after", after)] {
                if let Some(r) = t.at_step(step) {
                    println!("{label:>6} step {step}: {}", row(r));
                }
            }
        }
        Command::Report | Command::Run => {
            let s = p.summary()?;
            println!("{} ({})", s.name, &s.config_hash[..16]);
            let show = |v: Option<f64>| v.map_or("undefined".to_string(), sig);
            if let Some(m) = s.metrics {
                println!(
                    "step {}: mean rel L2 {}  mean R2 {}  variance rel L2 {}  variance R2 {}",
                    m.step,
                    show(m.mean_rel_l2),
                    show(m.mean_r2),
                    show(m.var_rel_l2),
                    show(m.var_r2)
                );
            }
            if let Some(t) = s.transfer {
                for (label, m) in [("before", t.before), ("after", t.after)] {
                    if let Some(m) = m {
                        println!("transfer {label} (variance {}): variance R2 {}", t.variance, show(m.var_r2));
                    }
                }
            }
        }
        _ => {}
    }
    println!("{}", dir.display());
    Ok(())
}

fn row(r: &MetricRow) -> String {
    format!(
        "{:>12}  {:>12}  {:>12}  {:>12}",
        sig(r.mean_rel_l2),
        sig(r.mean_r2),
        sig(r.var_rel_l2),
        sig(r.var_r2)
    )
}
