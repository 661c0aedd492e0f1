use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use presence_core::allocator::{forecast, pretrain};
use presence_core::harness::{
    compare, ingest_traces, oracle_table, prepare_traces, read_policies, run_experiment, simulate_with, sweep_users,
    write_csv, write_policies, write_run, RunOutput, TraceSet, EPOCH_COLUMNS,
};
use presence_core::SimConfig;

#[derive(Parser)]
#[command(
    name = "presence",
    version,
    about = "Presence-maximising allocation for CoMP mmWave VR networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML or JSON file with configuration keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set num_users=8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory.
    #[arg(long, default_value = "runs/latest")]
    out: PathBuf,
    /// Trace CSV (`user_id,slot,x_m,y_m`) used instead of synthetic traces.
    #[arg(long)]
    traces: Option<PathBuf>,
}

impl Common {
    fn config(&self) -> Result<SimConfig> {
        let base = match &self.config {
            Some(p) => SimConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
            None => SimConfig::default(),
        };
        Ok(base.with_overrides(&self.overrides)?)
    }

    fn traces(&self, cfg: &SimConfig) -> Result<Option<TraceSet>> {
        self.traces
            .as_ref()
            .map(|p| {
                ingest_traces(p, cfg.area_side_m, cfg.slot_duration_s)
                    .with_context(|| format!("reading traces {}", p.display()))
            })
            .transpose()
    }
}

#[derive(Subcommand)]
enum Command {
    /// Trajectory prediction only: per-user NRMSE over the run.
    Predict(Common),
    /// Pretrain the uplink and downlink policies and write checkpoints.
    Train(Common),
    /// Run one algorithm end to end.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Directory with `uplink.json` and `downlink.json` to use instead
        /// of pretraining.
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// All four algorithms on the same channel realisations.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Comma-separated user counts to sweep, each with its paired
        /// decoding capacity.
        #[arg(long, value_delimiter = ',')]
        users: Vec<usize>,
    },
    /// Reference checks against independent closed forms.
    Oracle {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Predict(c) => predict(&c),
        Command::Train(c) => train(&c),
        Command::Simulate { common, models } => simulate(&common, models.as_deref()),
        Command::Compare { common, users } => compare_cmd(&common, &users),
        Command::Oracle { seed } => oracle(seed),
    }
}

fn predict(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    let traces = prepare_traces(&cfg, c.traces(&cfg)?)?;
    let fc = forecast(&cfg, &traces)?;
    fs::create_dir_all(&c.out)?;
    let mut w = csv::Writer::from_path(c.out.join("nrmse.csv"))?;
    w.write_record(["user", "nrmse", "unnormalised"])?;
    for (i, e) in fc.nrmse.iter().enumerate() {
        w.write_record([i.to_string(), e.value.to_string(), e.unnormalised.to_string()])?;
        println!("user {i:>3}  nrmse {:.5}", e.value);
    }
    w.flush()?;
    let worst = fc.nrmse.iter().map(|e| e.value).fold(0.0, f64::max);
    println!(
        "max nrmse {worst:.5} over {} slots, {} retrains",
        traces.num_slots(),
        fc.retrains
    );
    Ok(())
}

fn train(c: &Common) -> Result<()> {
    let cfg = c.config()?;
    if !cfg.algorithm.is_learned() {
        bail!("algorithm {} has no policy to train", cfg.algorithm.name());
    }
    let (policies, epochs) = pretrain(&cfg, cfg.algorithm)?;
    write_policies(&policies, &c.out)?;
    write_csv(&EPOCH_COLUMNS, &epochs, fs::File::create(c.out.join("epochs.csv"))?)?;
    info!("wrote checkpoints under {}", c.out.join("models").display());
    Ok(())
}

fn print_summary(out: &RunOutput) {
    let s = &out.report.summary;
    println!(
        "{:<10} objective {:>9.5}  fop {:.4}  power {:.4}  cancelled ul/dl {}/{}  audit violations {}",
        s.algorithm.name(),
        s.objective.objective,
        s.objective.mean_fop,
        s.objective.mean_power_term,
        s.ul_cancelled,
        s.dl_cancelled,
        s.audit_violations.len()
    );
}

fn simulate(c: &Common, models: Option<&Path>) -> Result<()> {
    let cfg = c.config()?;
    let traces = c.traces(&cfg)?;
    let out = match models {
        Some(dir) => simulate_with(&cfg, traces, Some(read_policies(dir, cfg.algorithm)?))?,
        None => run_experiment(&cfg, traces)?,
    };
    write_run(&out, &c.out)?;
    print_summary(&out);
    Ok(())
}

fn write_comparison(runs: &[RunOutput], dir: &Path) -> Result<()> {
    for r in runs {
        write_run(r, &dir.join(r.report.summary.algorithm.name()))?;
        print_summary(r);
    }
    let summaries: Vec<_> = runs.iter().map(|r| &r.report.summary).collect();
    fs::write(dir.join("comparison.json"), serde_json::to_string_pretty(&summaries)?)?;
    Ok(())
}

fn compare_cmd(c: &Common, users: &[usize]) -> Result<()> {
    let cfg = c.config()?;
    if users.is_empty() {
        let runs = compare(&cfg, c.traces(&cfg)?)?;
        return write_comparison(&runs, &c.out);
    }
    if c.traces.is_some() {
        bail!("--users sweeps run on synthetic traces only");
    }
    for (n, runs) in sweep_users(&cfg, users)? {
        println!("N = {n}");
        write_comparison(&runs, &c.out.join(format!("n{n}")))?;
    }
    Ok(())
}

fn oracle(seed: u64) -> Result<()> {
    let rows = oracle_table(seed)?;
    println!(
        "{:<48} {:>6} {:>12} {:>10}  result",
        "check", "cases", "worst", "tolerance"
    );
    for r in &rows {
        println!(
            "{:<48} {:>6} {:>12.3e} {:>10.0e}  {}",
            r.name,
            r.cases,
            r.worst,
            r.tolerance,
            if r.pass() { "PASS" } else { "FAIL" }
        );
    }
    if rows.iter().any(|r| !r.pass()) {
        bail!("reference checks failed");
    }
    Ok(())
}
