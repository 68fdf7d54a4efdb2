use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use tactile_door::tactile::standard_press_grid;
use tactile_door_harness::calibrate::{cmd_calibrate, load_profiles};
use tactile_door_harness::config::{default_document, Condition, RunConfig};
use tactile_door_harness::report::{cmd_report, render_table, RunInput};
use tactile_door_harness::runs::{cmd_eval, cmd_train, write_eval, write_eval_csv, Domain, EvalRequest, RunStatus};

#[derive(Parser)]
#[command(name = "tactile-door", version, about = "Tactile door-opening experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every condition and seed of a configuration.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train this seed only.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Single-worker mode with bit-identical outputs.
        #[arg(long)]
        deterministic: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
    },
    /// Evaluate the deterministic policy of a run directory.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "nominal")]
        domain: Domain,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Override the episode step budget.
        #[arg(long)]
        max_steps: Option<usize>,
        /// Evaluate on the observation layout of this condition.
        #[arg(long)]
        condition: Option<Condition>,
        /// Write the episode table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit binarization thresholds from pressing profiles.
    Calibrate {
        /// JSON list of profiles; the standard 3 × 4 grid when omitted.
        #[arg(long)]
        profiles: Option<PathBuf>,
        /// Take the array geometry from this run configuration.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build the comparison table and plot data from run directories.
    Report {
        /// Run directories, grouped by the condition in their manifests.
        runs: Vec<PathBuf>,
        /// Run directories reported as the tactile condition.
        #[arg(long)]
        tactile: Vec<PathBuf>,
        /// Run directories reported as the plain condition.
        #[arg(long)]
        plain: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the default configuration document.
    Schema,
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            workers,
            deterministic,
            out,
            episodes,
        } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(w) = workers {
                cfg.workers = w;
            }
            if let Some(e) = episodes {
                cfg.episodes = e;
            }
            if let Some(o) = out {
                cfg.output_dir = o;
            }
            cfg.validate()?;
            let out = cfg.output_dir.clone();
            info!("config hash {}", cfg.hash());
            cmd_train(&cfg, &out, deterministic, |run, status| {
                let what = match status {
                    RunStatus::Trained => "trained".to_string(),
                    RunStatus::Resumed(n) => format!("resumed after {n} episodes"),
                    RunStatus::AlreadyComplete => "already complete".to_string(),
                };
                info!("{} seed {}: {what}", run.condition, run.seed);
            })?;
            println!("{}", out.display());
        }
        Command::Eval {
            run,
            domain,
            episodes,
            seed,
            max_steps,
            condition,
            out,
        } => {
            let stats = cmd_eval(&EvalRequest {
                run: &run,
                domain,
                episodes,
                seed,
                max_steps,
                condition,
            })?;
            match out {
                Some(p) => write_eval_csv(&p, &stats)?,
                None => write_eval(&mut std::io::stdout().lock(), &stats)?,
            }
            // The condition only labels the row, which is not printed here.
            let row = tactile_door_harness::report::summarize(domain, Condition::Tactile, &stats);
            eprintln!(
                "{}: door angle {:.1}±{:.1}°, min/max {:.1}/{:.1}°, steps {:.1}±{:.1}, reward {:.1}±{:.1}",
                domain.label(),
                row.angle.mean,
                row.angle.std,
                row.angle_min,
                row.angle_max,
                row.steps.mean,
                row.steps.std,
                row.reward.mean,
                row.reward.std
            );
        }
        Command::Calibrate { profiles, config, out } => {
            let geometry = match &config {
                Some(p) => RunConfig::load(p)?.tactile.geometry,
                None => Default::default(),
            };
            let profiles = match &profiles {
                Some(p) => load_profiles(p).with_context(|| format!("reading {}", p.display()))?,
                None => standard_press_grid(&geometry),
            };
            let cal = cmd_calibrate(&geometry, &profiles, &out)?;
            println!("scale {} kappa {:?}", cal.scale, &cal.kappa[..cal.kappa.len() / 2]);
        }
        Command::Report {
            runs,
            tactile,
            plain,
            out,
        } => {
            let mut inputs: Vec<RunInput> = runs.into_iter().map(|dir| RunInput { dir, condition: None }).collect();
            inputs.extend(tactile.into_iter().map(|dir| RunInput {
                dir,
                condition: Some(Condition::Tactile),
            }));
            inputs.extend(plain.into_iter().map(|dir| RunInput {
                dir,
                condition: Some(Condition::Plain),
            }));
            if inputs.is_empty() {
                bail!("no run directories given");
            }
            let report = cmd_report(&inputs, &out)?;
            print!("{}", render_table(&report));
        }
        Command::Schema => print!("{}", default_document()),
    }
    Ok(())
}
