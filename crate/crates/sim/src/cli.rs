//! Command-line driver.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swipt_core::config::SystemConfig;
use swipt_core::control::{solve_slot, SolverChoice};
use swipt_core::solvers::HarvestMode;

use crate::experiment::{run_experiment, SimError};
use crate::export::{export, ExportError, RecordError};
use crate::instances::instances;
use crate::summary::{ExperimentSummary, TimingSummary};

#[derive(Debug, Parser)]
#[command(name = "swipt", version, about = "Monte-Carlo runs of the SWIPT slot controller")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration laid over the shipped preset.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, env = "SWIPT_OUT_DIR", default_value = "swipt-out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value_t = 100)]
    pub trials: usize,
    /// Slots per trial.
    #[arg(long, global = true)]
    pub slots: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, global = true)]
    pub tradeoff: Option<f64>,
    /// Mean arrivals per slot, bits.
    #[arg(long, global = true)]
    pub arrival: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Battery,
    Batteryless,
}

impl From<ModeArg> for HarvestMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Battery => HarvestMode::Battery,
            ModeArg::Batteryless => HarvestMode::Batteryless,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One experiment.
    Run {
        #[arg(long, default_value = "sca")]
        solver: SolverChoice,
    },
    /// Every combination of trade-off, arrival rate and solver, one subdirectory each.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        tradeoffs: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "2,3")]
        arrivals: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "sca")]
        solvers: Vec<SolverChoice>,
    },
    /// The same channels and arrivals fed to several solvers.
    CompareSolvers {
        #[arg(long, value_delimiter = ',', default_value = "sdr-fp,sca")]
        solvers: Vec<SolverChoice>,
    },
    /// Objective and wall time of the KKT iteration against batteryless SCA on random slots.
    BenchKkt {
        #[arg(long, default_value_t = 50)]
        instances: usize,
    },
}

/// Preset or file, then the command-line overrides.
pub fn resolve_config(c: &Common) -> Result<SystemConfig, SimError> {
    let mut config = match &c.config {
        Some(path) => crate::config::load(path)?,
        None => crate::config::preset(),
    };
    if let Some(s) = c.seed {
        config.rng_seed = s;
    }
    if let Some(s) = c.slots {
        config.horizon = s;
    }
    if let Some(m) = c.mode {
        config.mode = m.into();
    }
    if let Some(v) = c.tradeoff {
        config.tradeoff = v;
    }
    if let Some(a) = c.arrival {
        config.mean_arrival = a;
    }
    config.validate().map_err(|e| SimError::Control(e.into()))?;
    Ok(config)
}

fn check_solver(solver: SolverChoice, mode: HarvestMode) -> Result<(), SimError> {
    if solver.supports(mode) {
        Ok(())
    } else {
        Err(SimError::Usage(format!("{solver} needs --mode batteryless")))
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(crate::export::format_float).unwrap_or_default()
}

fn write_table(path: &Path, rows: &[Vec<String>]) -> Result<(), SimError> {
    let wrap = |e: csv::Error| SimError::Export(ExportError::Records { path: path.into(), source: RecordError::Csv(e) });
    let mut w = csv::Writer::from_path(path).map_err(wrap)?;
    for row in rows {
        w.write_record(row).map_err(wrap)?;
    }
    w.flush().map_err(|e| wrap(e.into()))
}

fn one_line(label: &str, s: &ExperimentSummary, t: &TimingSummary) -> String {
    let violation: Vec<String> = s.users.iter().map(|u| fmt_opt(u.queue_violation)).collect();
    format!(
        "{label}: {} slots, tx power {} W ({} dBm), harvested {} W, Pr{{Q>=Q_th}} [{}], median solve {} s",
        s.num_records,
        fmt_opt(s.tx_power.watts),
        fmt_opt(s.tx_power.dbm),
        fmt_opt(s.harvested_power.watts),
        violation.join(", "),
        fmt_opt(t.median),
    )
}

fn run_one(config: &SystemConfig, solver: SolverChoice, trials: usize, dir: &Path) -> Result<(ExperimentSummary, TimingSummary), SimError> {
    check_solver(solver, config.mode)?;
    let out = run_experiment(config, solver, trials)?;
    export(dir, &out.records, &out.summary, &out.timing)?;
    Ok((out.summary, out.timing))
}

/// Runs a parsed command and returns the report lines.
pub fn execute(cli: &Cli) -> Result<Vec<String>, SimError> {
    let config = resolve_config(&cli.common)?;
    let out = &cli.common.out;
    let trials = cli.common.trials;
    let mut report = Vec::new();
    match &cli.command {
        Command::Run { solver } => {
            let (s, t) = run_one(&config, *solver, trials, out)?;
            report.push(one_line(solver.as_str(), &s, &t));
        }
        Command::Sweep { tradeoffs, arrivals, solvers } => {
            let mut rows = vec![["tradeoff", "arrival", "solver", "tx_power_w", "tx_power_dbm", "harvested_power_w", "harvested_power_dbm"]
                .iter()
                .map(|s| s.to_string())
                .chain((0..config.num_users).map(|k| format!("queue_violation_{k}")))
                .collect::<Vec<_>>()];
            for &v in tradeoffs {
                for &a in arrivals {
                    for &solver in solvers {
                        let c = SystemConfig { tradeoff: v, mean_arrival: a, ..config.clone() };
                        c.validate().map_err(|e| SimError::Control(e.into()))?;
                        let label = format!("v{v}-a{a}-{solver}");
                        let (s, t) = run_one(&c, solver, trials, &out.join(&label))?;
                        let mut row = vec![v.to_string(), a.to_string(), solver.to_string()];
                        row.extend([s.tx_power.watts, s.tx_power.dbm, s.harvested_power.watts, s.harvested_power.dbm].map(fmt_opt));
                        row.extend(s.users.iter().map(|u| fmt_opt(u.queue_violation)));
                        rows.push(row);
                        report.push(one_line(&label, &s, &t));
                    }
                }
            }
            write_table(&out.join("sweep.csv"), &rows)?;
        }
        Command::CompareSolvers { solvers } => {
            let mut rows = vec![["solver", "mean_objective", "tx_power_w", "harvested_power_w", "median_seconds"].map(String::from).to_vec()];
            for &solver in solvers {
                let (s, t) = run_one(&config, solver, trials, &out.join(solver.as_str()))?;
                rows.push(vec![
                    solver.to_string(),
                    fmt_opt(s.mean_objective),
                    fmt_opt(s.tx_power.watts),
                    fmt_opt(s.harvested_power.watts),
                    fmt_opt(t.median),
                ]);
                report.push(one_line(solver.as_str(), &s, &t));
            }
            write_table(&out.join("compare.csv"), &rows)?;
        }
        Command::BenchKkt { instances: count } => {
            let c = SystemConfig { mode: HarvestMode::Batteryless, ..config.clone() };
            std::fs::create_dir_all(out).map_err(|source| ExportError::Io { path: out.clone(), source })?;
            let mut rows = vec![[
                "instance",
                "sca_objective",
                "kkt_objective",
                "relative_gap",
                "sca_seconds",
                "kkt_seconds",
                "kkt_converged",
            ]
            .map(String::from)
            .to_vec()];
            let (mut sca_times, mut kkt_times, mut close) = (Vec::new(), Vec::new(), 0);
            for (i, inst) in instances(&c, *count, c.rng_seed).iter().enumerate() {
                let timed = |solver| {
                    let start = Instant::now();
                    let r = solve_slot(&inst.problem, &c, solver);
                    (r, start.elapsed().as_secs_f64())
                };
                let (sca, sca_s) = timed(SolverChoice::Sca);
                let (kkt, kkt_s) = timed(SolverChoice::Kkt);
                let sca_obj = sca.as_ref().ok().map(|o| o.objective);
                let kkt_obj = kkt.as_ref().ok().map(|o| o.objective);
                let gap = sca_obj.zip(kkt_obj).map(|(a, b)| (b - a).abs() / a.abs().max(1e-12));
                close += usize::from(gap.is_some_and(|g| g <= 0.01));
                sca_times.push(sca_s);
                kkt_times.push(kkt_s);
                rows.push(vec![
                    i.to_string(),
                    fmt_opt(sca_obj),
                    fmt_opt(kkt_obj),
                    fmt_opt(gap),
                    crate::export::format_float(sca_s),
                    crate::export::format_float(kkt_s),
                    kkt.as_ref().is_ok_and(|o| o.converged).to_string(),
                ]);
            }
            write_table(&out.join("bench_kkt.csv"), &rows)?;
            let sca_t = TimingSummary::from_seconds(SolverChoice::Sca, &sca_times);
            let kkt_t = TimingSummary::from_seconds(SolverChoice::Kkt, &kkt_times);
            let speedup = sca_t.median.zip(kkt_t.median).map(|(a, b)| a / b);
            report.push(format!(
                "bench-kkt: {close}/{count} within 1% of SCA, median {} s vs {} s, speed-up {}",
                fmt_opt(kkt_t.median),
                fmt_opt(sca_t.median),
                fmt_opt(speedup)
            ));
        }
    }
    Ok(report)
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
