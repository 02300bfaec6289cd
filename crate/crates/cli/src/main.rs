use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use steer_cli::commands::{
    cmd_dataset, cmd_eval, cmd_simulate, cmd_train, read_config, DatasetOpts, EvalOpts, SessionSettings,
    SimulateOpts, TrainOpts,
};
use steer_cli::serve::{ServeOpts, Server, DEFAULT_QUEUE, DEFAULT_TICK_HZ};
use steer_cli::{CliError, CliResult};
use steer_core::{DropoutKind, Network};

#[derive(Parser)]
#[command(name = "steer", version, about = "Bayesian end-to-end steering with MC dropout")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Dataset {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Train a network on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        dropout: Option<DropoutKind>,
        /// Continue training from a checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Monte-Carlo evaluation: MUE and label-binned variance.
    Eval {
        /// Checkpoint to evaluate; repeat to compare models.
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Stochastic passes per input.
        #[arg(long = "T")]
        passes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Headless closed-loop run.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Track seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long = "T")]
        passes: Option<usize>,
        /// none | scripted:<perfect|corrective|constant=u>
        #[arg(long)]
        human: Option<String>,
        #[arg(long)]
        ticks: Option<u64>,
        #[arg(long)]
        force: bool,
    },
    /// Live session over WebSocket.
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8765")]
        bind: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long = "T")]
        passes: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_TICK_HZ)]
        tick_hz: f64,
        #[arg(long, default_value_t = DEFAULT_QUEUE)]
        queue: usize,
        #[arg(long)]
        max_ticks: Option<u64>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Dataset { config, out, seed, force } => {
            let (m, _) = cmd_dataset(&DatasetOpts { config, out, seed, force })?;
            println!(
                "wrote {} frames, labels in [{}, {}]",
                m.count, m.label_min, m.label_max
            );
        }
        Command::Train {
            data,
            out,
            config,
            seed,
            dropout,
            resume,
            force,
        } => {
            let (log, _) = cmd_train(&TrainOpts {
                data,
                out,
                config,
                seed,
                dropout,
                resume,
                force,
            })?;
            for e in &log.epochs {
                println!("epoch {} train_mse {} sgd_loss {}", e.epoch, e.train_mse, e.sgd_loss);
            }
        }
        Command::Eval {
            models,
            data,
            out,
            config,
            passes,
            seed,
            force,
        } => {
            let (rows, _) = cmd_eval(&EvalOpts {
                models,
                data,
                out,
                config,
                passes,
                seed,
                force,
            })?;
            for r in &rows {
                println!("{} ({}): MUE {} RMSE {}", r.name, r.dropout, r.mue, r.rmse);
            }
        }
        Command::Simulate {
            model,
            out,
            config,
            seed,
            kappa,
            passes,
            human,
            ticks,
            force,
        } => {
            let (outcome, _) = cmd_simulate(&SimulateOpts {
                model,
                out,
                config,
                seed,
                kappa,
                passes,
                human,
                ticks,
                force,
            })?;
            println!(
                "{} ticks, mean |cross-track| {} m, {:?}",
                outcome.records.len(),
                outcome.mean_abs_cross_track(),
                outcome.status
            );
        }
        Command::Serve {
            model,
            bind,
            config,
            seed,
            kappa,
            passes,
            tick_hz,
            queue,
            max_ticks,
        } => {
            let mut kv = read_config(config.as_deref())?;
            if let Some(s) = seed {
                kv.set("seed", s);
            }
            if let Some(k) = kappa {
                kv.set("kappa", k);
            }
            if let Some(t) = passes {
                kv.set("passes", t);
            }
            let settings = SessionSettings::from_kv(&kv)?;
            if !model.exists() {
                return Err(CliError::io(&model, std::io::ErrorKind::NotFound.into()));
            }
            let net = Network::load(&model)?;
            let server = Server::spawn(
                net,
                settings,
                &ServeOpts {
                    bind,
                    tick_hz,
                    queue,
                    max_ticks,
                },
            )?;
            eprintln!("serving on ws://{}", server.addr);
            server.wait()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
