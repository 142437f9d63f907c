use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use cisrl::agent::PolicyParams;
use cisrl::cis::{BackupTable, CisGrid};
use cisrl::harness::{self, ExperimentConfig, Mode};
use cisrl::Error;

#[derive(Parser)]
#[command(name = "cisrl", version, about = "Invariant-set guided PPO for a CSTR")]
struct Cli {
    /// JSON experiment configuration; missing keys take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config and $CISRL_OUT).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run seed. `train` and `run-online` default to the first configured
    /// seed, `suite` runs only this seed, `evaluate` samples its initial
    /// states with it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the grid invariant set and write `cis.grid`.
    ComputeCis,
    /// Build the backup table for a grid and write `backup.tbl`.
    BuildBackup {
        #[arg(long)]
        grid: PathBuf,
    },
    /// Train one policy offline; writes weights and a learning curve.
    Train {
        #[arg(long)]
        mode: Option<Mode>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Required for with_cis training.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Evaluate saved weights from in-set initial states.
    Evaluate {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        /// Initial states CSV (`c_A,T`); sampled from the grid when absent.
        #[arg(long)]
        states: Option<PathBuf>,
    },
    /// Run supervised online control with retraining.
    RunOnline {
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        backup: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Train and evaluate both modes over every budget and seed.
    Suite {
        /// Reuse an existing grid instead of recomputing it.
        #[arg(long)]
        grid: Option<PathBuf>,
    },
    /// Plot learning-curve CSVs into one SVG.
    ExportCurves {
        #[arg(required = true)]
        curves: Vec<PathBuf>,
        #[arg(long, default_value = "curves.svg")]
        svg: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Distinct exit codes per failure family. Usage errors exit with 2 from
/// the argument parser.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::InvalidConfig(_)) => 3,
        Some(Error::Io { .. }) => 4,
        Some(
            Error::Malformed(_)
            | Error::VersionMismatch { .. }
            | Error::Checksum { .. }
            | Error::ArchitectureMismatch { .. },
        ) => 5,
        Some(_) => 6,
        None => 1,
    }
}

fn out_dir(cli_out: Option<PathBuf>, cfg: &ExperimentConfig) -> anyhow::Result<PathBuf> {
    let dir = cli_out.unwrap_or_else(|| cfg.resolved_out_dir());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

fn load_grid(path: &Path) -> anyhow::Result<Arc<CisGrid>> {
    Ok(Arc::new(CisGrid::load(path)?))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.seeds[0]);
    match cli.cmd {
        Command::ComputeCis => {
            let out = out_dir(cli.out, &cfg)?;
            let report = harness::compute_cis(&cfg)?;
            log::info!(
                "kernel: {} sweeps, converged {}",
                report.sweeps,
                report.converged
            );
            let grid = report.into_converged()?;
            let path = out.join("cis.grid");
            grid.save(&path)?;
            println!("{} member cells -> {}", grid.member_count(), path.display());
        }
        Command::BuildBackup { grid } => {
            let out = out_dir(cli.out, &cfg)?;
            let grid = load_grid(&grid)?;
            let table = harness::compute_backup(&cfg, &grid)?;
            let path = out.join("backup.tbl");
            table.save(&path)?;
            println!("{} entries -> {}", table.len(), path.display());
        }
        Command::Train {
            mode,
            episodes,
            grid,
        } => {
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(n) = episodes {
                cfg.episodes = n;
            }
            cfg.validate()?;
            let out = out_dir(cli.out, &cfg)?;
            let grid = grid.as_deref().map(load_grid).transpose()?;
            let (params, summary) = harness::train_offline(&cfg, grid.as_ref(), seed)?;
            let tag = format!("{}_{}_{seed}", cfg.mode.label(), cfg.episodes);
            params.save(out.join(format!("{tag}.bin")))?;
            harness::write_curve_csv(out.join(format!("{tag}.csv")), &summary.scores)?;
            println!(
                "{} updates, final running average {:.1}, {:.1}s",
                summary.updates,
                summary.running_avg.last().copied().unwrap_or(f64::NAN),
                summary.wall_clock_secs
            );
        }
        Command::Evaluate {
            weights,
            grid,
            states,
        } => {
            let out = out_dir(cli.out, &cfg)?;
            let params = PolicyParams::load(&weights)?;
            let grid = load_grid(&grid)?;
            let states = match states {
                Some(p) => harness::load_states(p)?,
                None => {
                    let s = cli.seed.unwrap_or(cfg.test_seed);
                    harness::sample_initial_states(&grid, cfg.test_episodes, s)?
                }
            };
            let report = harness::evaluate(&params, &grid, cfg.cstr()?, &states, cfg.horizon)?;
            harness::write_eval_csv(out.join("eval.csv"), &report.failed)?;
            println!("failure rate {:.4} over {} episodes", report.failure_rate, states.len());
        }
        Command::RunOnline {
            weights,
            grid,
            backup,
            episodes,
        } => {
            if let Some(n) = episodes {
                cfg.online_episodes = n;
            }
            let out = out_dir(cli.out, &cfg)?;
            let params = PolicyParams::load(&weights)?;
            let grid = load_grid(&grid)?;
            let backup = Arc::new(BackupTable::load(&backup)?);
            let (params, report) = harness::run_online(&cfg, params, grid, backup, seed)?;
            let path = out.join("online.csv");
            let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
            report
                .write_csv(BufWriter::new(file))
                .map_err(|e| Error::io(&path, e))?;
            params.save(out.join("online_weights.bin"))?;
            println!(
                "{} failures, {} backup uses, {} retrain updates",
                report.failures(),
                report.backup_uses(),
                report.retrain_updates()
            );
        }
        Command::Suite { grid } => {
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            let out = out_dir(cli.out, &cfg)?;
            let grid = match grid {
                Some(p) => load_grid(&p)?,
                None => {
                    let g = harness::compute_cis(&cfg)?.into_converged()?;
                    g.save(out.join("cis.grid"))?;
                    Arc::new(g)
                }
            };
            let report = harness::run_experiment_suite(&cfg, &grid, Some(&out))?;
            println!("budget  with_cis  no_cis");
            for b in cfg.budgets() {
                println!(
                    "{b:>6}  {:>8.4}  {:>6.4}",
                    report.mean_failure_rate(Mode::WithCis, b).unwrap_or(f64::NAN),
                    report.mean_failure_rate(Mode::NoCis, b).unwrap_or(f64::NAN)
                );
            }
        }
        Command::ExportCurves { curves, svg } => {
            let series = curves
                .iter()
                .map(|p| {
                    let scores = harness::read_curve_csv(p)?;
                    let label = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                    Ok((
                        label.unwrap_or_default(),
                        harness::running_average(&scores, 100),
                    ))
                })
                .collect::<cisrl::Result<Vec<_>>>()?;
            let svg = match cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    dir.join(svg)
                }
                None => svg,
            };
            harness::write_curves_svg(&svg, &series)?;
            println!("{}", svg.display());
        }
    }
    Ok(())
}
