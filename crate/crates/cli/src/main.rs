//! Command-line front end for the workbench: scenario synthesis, stagewise
//! training, attacks, the defense, full experiment runs, and report checks.

use airmia_core::experiment::{
    self, ExperimentConfig, ExperimentKind, Overrides, Workbench,
};
use airmia_core::signal::{synth_scenario, ScenarioConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Default output root when `--out` is not given.
const OUT_ENV: &str = "AIRMIA_OUT";

#[derive(Parser)]
#[command(
    name = "airmia",
    about = "Membership inference attacks and defenses on simulated wireless signal classifiers",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunDirArg {
    /// Run directory holding the artifacts of previous stages.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a dataset from a scenario config file.
    Synth {
        /// Scenario config JSON (name, counts, SNRs); see `scenario.json` in
        /// any run directory for the schema.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output directory for dataset.csv and dataset_meta.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the target classifier inside a run directory.
    TrainTarget(RunDirArg),
    /// Train the adversary's surrogate classifier (single-provider setting).
    TrainSurrogate(RunDirArg),
    /// Train and evaluate the membership inference attack.
    Attack(RunDirArg),
    /// Train the shadow attack and run the score-perturbation defense.
    Defend(RunDirArg),
    /// Run a named experiment end to end.
    Run {
        /// One of: setting1-strong, setting1-weak, setting1-noisy,
        /// setting2-mia, setting2-defense.
        #[arg(long)]
        experiment: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Repeat over this many consecutive master seeds and aggregate.
        #[arg(long)]
        seeds: Option<usize>,
        /// Optional overrides JSON (scenario / training / solver replacements).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; defaults to $AIRMIA_OUT/<experiment>.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a finished run; exits nonzero if its thresholds fail.
    Report(RunDirArg),
}

fn default_out(experiment: &str) -> PathBuf {
    match std::env::var(OUT_ENV) {
        Ok(root) => PathBuf::from(root).join(experiment),
        Err(_) => PathBuf::from("runs").join(experiment),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Synth { config, seed, out } => {
            let json = std::fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let scenario = ScenarioConfig::from_json(&json)?;
            let dataset = synth_scenario(&scenario, seed)?;
            dataset.save(&out)?;
            println!(
                "wrote {} observations ({} splits) to {}",
                dataset.observations.len(),
                dataset.splits.len(),
                out.display()
            );
        }
        Command::TrainTarget(arg) => {
            let bench = Workbench::open(&arg.run)?;
            let dataset = bench.load_dataset()?;
            let (_, eval) = bench.train_target(&dataset)?;
            println!("target classifier accuracy: {:.4}", eval.accuracy);
        }
        Command::TrainSurrogate(arg) => {
            let bench = Workbench::open(&arg.run)?;
            let dataset = bench.load_dataset()?;
            let target = bench.load_target(&dataset)?;
            let (_, eval, agreement) = bench.train_surrogate(&dataset, &target)?;
            println!(
                "surrogate accuracy: {:.4}, paired agreement: {agreement:.4}",
                eval.accuracy
            );
        }
        Command::Attack(arg) => {
            let bench = Workbench::open(&arg.run)?;
            let dataset = bench.load_dataset()?;
            let target = bench.load_target(&dataset)?;
            let surrogate = if bench.config.experiment.name().starts_with("setting1") {
                Some(bench.load_surrogate()?)
            } else {
                None
            };
            let (_, eval) = bench.attack(&dataset, &target, surrogate.as_ref())?;
            println!("attack accuracy: {:.4}", eval.accuracy);
        }
        Command::Defend(arg) => {
            let bench = Workbench::open(&arg.run)?;
            let dataset = bench.load_dataset()?;
            let target = bench.load_target(&dataset)?;
            let mia = bench.load_mia()?;
            let mia_eval: experiment::EvalReport = serde_json::from_str(
                &std::fs::read_to_string(arg.run.join(experiment::artifacts::MIA_EVAL))?,
            )?;
            let (shadow, shadow_eval) = bench.train_shadow(&dataset, &target)?;
            let summary = bench.defend(
                &dataset,
                &target,
                &mia,
                &shadow,
                shadow_eval.accuracy,
                mia_eval.accuracy,
            )?;
            println!(
                "defense: shadow {:.4} -> {:.4}, adversary {:.4} -> {:.4}, convergence {:.4}",
                summary.shadow_accuracy_no_defense,
                summary.shadow_accuracy_with_defense,
                summary.mia_accuracy_no_defense,
                summary.mia_accuracy_with_defense,
                summary.convergence_rate,
            );
        }
        Command::Run {
            experiment: name,
            seed,
            seeds,
            config,
            out,
        } => {
            let kind: ExperimentKind = name.parse()?;
            let overrides: Overrides = match config {
                Some(path) => serde_json::from_str(
                    &std::fs::read_to_string(&path)
                        .with_context(|| format!("reading {}", path.display()))?,
                )?,
                None => Overrides::default(),
            };
            let config = ExperimentConfig {
                experiment: kind,
                seed,
                overrides,
            };
            let out = out.unwrap_or_else(|| default_out(kind.name()));
            match seeds {
                None | Some(1) => {
                    experiment::run(&config, &out)?;
                    println!("{}", experiment::report(&out)?.text);
                }
                Some(n) => {
                    let multi = experiment::run_multi(&config, &out, n)?;
                    println!(
                        "experiment {} over {} seeds (base {}):",
                        kind.name(),
                        n,
                        config.seed
                    );
                    for (name, stat) in &multi.stats {
                        println!("  {name}: {:.4} +- {:.4}", stat.mean, stat.std_dev);
                    }
                }
            }
        }
        Command::Report(arg) => {
            let summary = experiment::report(&arg.run)?;
            print!("{}", summary.text);
            if !summary.passed() {
                bail!("one or more threshold checks failed");
            }
        }
    }
    Ok(())
}
