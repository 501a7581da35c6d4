use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use rmab::api::{router, AppState};
use rmab::commands;
use rmab_core::history::DEFAULT_ROUNDS;
use rmab_core::rng::stream_rng;

#[derive(Parser)]
#[command(version, about = "Restless multi-armed bandit social-learning game")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an agent history and write it to a file.
    GenHistory {
        #[arg(long)]
        pc: f64,
        #[arg(long)]
        ni: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_ROUNDS)]
        rounds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo the optimal players and the agents; writes a CSV summary.
    Simulate {
        #[arg(long)]
        pc: f64,
        #[arg(long)]
        ni: usize,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replay windows of this history instead of generating one per run.
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify every (n_I, p_c) cell of a grid.
    Phase {
        #[arg(long, value_delimiter = ',', required = true)]
        pc_list: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        ni_list: Vec<usize>,
        #[arg(long, default_value_t = 2000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regress session payoffs on learning predictors.
    Analyze {
        #[arg(long)]
        logs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP game service.
    Serve {
        #[arg(long, env = "RMAB_LISTEN", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        /// Directory holding A.rmab..D.rmab; missing histories are generated there.
        #[arg(long, env = "RMAB_HISTORY_DIR")]
        history_dir: Option<PathBuf>,
        /// Finished session logs are written here.
        #[arg(long, env = "RMAB_LOG_DIR")]
        log_dir: Option<PathBuf>,
        /// Seeds histories and game seeds; drawn from OS entropy when absent.
        #[arg(long)]
        seed: Option<u64>,
        /// Expose environment parameters and accept explicit game seeds.
        #[arg(long, env = "RMAB_DEBUG")]
        debug: bool,
    },
}

fn write(out: &Path, text: &str) -> Result<()> {
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenHistory { pc, ni, seed, rounds, out } => {
            commands::gen_history(ni, pc, seed, rounds)?.save(&out).with_context(|| format!("writing {}", out.display()))
        }
        Command::Simulate { pc, ni, runs, seed, history, out } => {
            write(&out, &commands::simulate(ni, pc, runs, seed, history.as_deref())?)
        }
        Command::Phase { pc_list, ni_list, runs, seed, out } => {
            write(&out, &commands::phase(&ni_list, &pc_list, runs, seed)?)
        }
        Command::Analyze { logs, out } => write(&out, &commands::analyze(&logs)?),
        Command::Serve { listen, history_dir, log_dir, seed, debug } => {
            if let Some(d) = &log_dir {
                std::fs::create_dir_all(d)?;
            }
            if let Some(d) = &history_dir {
                std::fs::create_dir_all(d)?;
            }
            let seed = seed.unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0);
            let store = commands::load_store(history_dir.as_deref(), seed, DEFAULT_ROUNDS)?;
            let state = Arc::new(AppState::new(store, stream_rng(seed, 1), debug, log_dir));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(listen).await?;
                eprintln!("listening on {}", listener.local_addr()?);
                axum::serve(listener, router(state)).await?;
                Ok(())
            })
        }
    }
}
