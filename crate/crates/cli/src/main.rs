use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use marc_cli::commands::{eval_csv, FINAL_CHECKPOINT};
use marc_cli::{
    ablate, baseline, evaluate, graph_dump, init_logging, parse_aggregate_csv, render_svg, replay, rollout, train, CliError,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "marc", about = "Relational multi-agent actor-critic experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a run config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reuse a non-empty output directory.
        #[arg(long)]
        force: bool,
        /// Dotted config override, e.g. algo.alpha=0.05.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Greedy evaluation of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Entity count or grid size change, e.g. agents=3.
        #[arg(long = "env-override", value_name = "KEY=VALUE")]
        env_override: Vec<String>,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the evaluation CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a base config with one ablation axis changed.
    Ablate {
        #[arg(long)]
        preset: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render an aggregate CSV as an SVG learning curve.
    Plot {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "")]
        title: String,
    },
    /// Return statistics of uniform-random joint actions.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Record one greedy episode of a checkpoint, or replay a recorded one.
    Rollout {
        #[arg(long, required_unless_present = "replay", conflicts_with = "replay")]
        checkpoint: Option<PathBuf>,
        /// Directory of a recorded episode whose action log to replay.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long)]
        record: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Dump the relational graph of an agent's first observation.
    Graph {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        agent: usize,
    },
}

fn write_or_print(out: Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(&p, text).map_err(|source| CliError::Io {
            path: p.display().to_string(),
            source,
        }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            seed,
            out,
            force,
            set,
        } => {
            let mut run = RunConfig::load(&config)?;
            for s in &set {
                run = run.with_override(s)?;
            }
            if let Some(seed) = seed {
                run.seeds = vec![seed];
            }
            if let Some(out) = out {
                run.output = out;
            }
            let summary = train(&run, force)?;
            for s in &summary.seeds {
                if let Some(r) = s.evaluations.last() {
                    println!(
                        "seed {}: greedy return {:.4} ± {:.4}, success {:.3}, checkpoint {}",
                        s.seed,
                        r.mean_return,
                        r.std_return,
                        r.success,
                        s.dir.join(FINAL_CHECKPOINT).display()
                    );
                }
            }
            Ok(())
        }
        Command::Eval {
            checkpoint,
            env_override,
            episodes,
            seed,
            out,
        } => {
            let report = evaluate(&checkpoint, &env_override, episodes, seed)?;
            write_or_print(out, &eval_csv(&[report]))
        }
        Command::Ablate { preset, config, out } => {
            let run = ablate(&preset, &RunConfig::load(&config)?)?;
            run.validate()?;
            write_or_print(out, &run.to_toml())
        }
        Command::Plot { input, out, title } => {
            let text = std::fs::read_to_string(&input).map_err(|source| CliError::Io {
                path: input.display().to_string(),
                source,
            })?;
            let svg = render_svg(&parse_aggregate_csv(&text)?, &title)?;
            write_or_print(Some(out), &svg)
        }
        Command::Baseline { config, episodes, seed } => {
            let r = baseline(&RunConfig::load(&config)?, episodes, seed)?;
            println!(
                "{} episodes: mean return {:.4}, std {:.4}, success {:.3}, mean length {:.2}",
                r.episodes, r.mean_return, r.std_return, r.success, r.mean_length
            );
            Ok(())
        }
        Command::Rollout {
            checkpoint,
            replay: recorded,
            record,
            seed,
        } => {
            let episode = match (checkpoint, recorded) {
                (_, Some(dir)) => replay(&dir, &record)?,
                (Some(ckpt), None) => rollout(&ckpt, &record, seed)?,
                (None, None) => unreachable!("clap requires one of --checkpoint and --replay"),
            };
            println!(
                "{} steps, summed reward {:.4}, written to {}",
                episode.actions.len(),
                episode.total_reward(),
                record.display()
            );
            Ok(())
        }
        Command::Graph { config, seed, agent } => {
            print!("{}", graph_dump(&RunConfig::load(&config)?, seed, agent)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
