use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use soundmem_core::context::ContextEvalConfig;
use soundmem_core::stats::ShapleyConfig;
use soundmem_server::commands::{self, ScoreTarget, SimulateArgs};
use soundmem_server::{router, PoolManifest, Service, ServiceConfig};

#[derive(Parser)]
#[command(name = "soundmem", version, about = "Sound memorability game service and analysis tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP game service.
    Serve {
        #[arg(long, env = "LISTEN_ADDR", default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, env = "AUDIO_DIR")]
        audio_dir: PathBuf,
        #[arg(long, env = "EVENT_LOG_PATH")]
        event_log: PathBuf,
        #[arg(long, env = "POOL_MANIFEST")]
        manifest: PathBuf,
        #[arg(long, default_value_t = 0x5EED)]
        seed: u64,
    },
    /// Generate a synthetic event log from planted participants.
    Simulate {
        /// Manifest whose ids form the pool.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Pool size when no manifest is given (ids s0000, s0001, ...).
        #[arg(long, default_value_t = 402)]
        n_sounds: usize,
        #[arg(long, default_value_t = 50)]
        games_per_sound: usize,
        #[arg(long, num_args = 2, default_values_t = [0.1, 0.9])]
        recall: Vec<f64>,
        #[arg(long, num_args = 2, default_values_t = [0.0, 0.4])]
        confuse: Vec<f64>,
        #[arg(long, default_value_t = 0.95)]
        p_vigilance: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Optional CSV of the planted parameters and ranks.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Extract the per-sound feature table.
    ExtractFeatures {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        audio_dir: PathBuf,
        /// High-level rating CSV to join.
        #[arg(long)]
        ratings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score sounds from an event log.
    Score {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split-half rank reliability of the scores.
    Reliability {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, default_value_t = 25)]
        splits: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte-Carlo Shapley feature importance.
    Shapley {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        /// normalized, m or c10.
        #[arg(long, default_value = "normalized")]
        target: ScoreTarget,
        /// ridge or svr.
        #[arg(long, default_value = "ridge")]
        regressor: String,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Context-length recall prediction grid.
    ContextEval {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score histograms.
    Report {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

async fn shutdown_signal() {
    let _ = tokio::signal::ctrl_c().await;
}

fn pool_ids(manifest: Option<&PathBuf>, n: usize) -> Result<Vec<String>> {
    match manifest {
        Some(path) => {
            let dir = path.parent().unwrap_or_else(|| std::path::Path::new("."));
            Ok(PoolManifest::from_file(path, dir)?.ids)
        }
        None => Ok((0..n).map(|i| format!("s{i:04}")).collect()),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Serve {
            listen,
            audio_dir,
            event_log,
            manifest,
            seed,
        } => {
            let manifest = PoolManifest::from_file(&manifest, &audio_dir)?;
            let cfg = ServiceConfig { seed, ..Default::default() };
            let svc = Arc::new(Service::open(manifest, Some(&event_log), cfg)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
                log::info!("listening on {listen}, logging to {}", event_log.display());
                axum::serve(listener, router(svc)).with_graceful_shutdown(shutdown_signal()).await?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
        Command::Simulate {
            manifest,
            n_sounds,
            games_per_sound,
            recall,
            confuse,
            p_vigilance,
            seed,
            out,
            truth,
        } => {
            let args = SimulateArgs {
                pool: pool_ids(manifest.as_ref(), n_sounds)?,
                games_per_sound,
                recall: (recall[0], recall[1]),
                confuse: (confuse[0], confuse[1]),
                p_vigilance,
                seed,
            };
            let n = commands::simulate(&args, &out, truth.as_deref())?;
            log::info!("wrote {n} simulated rounds to {}", out.display());
        }
        Command::ExtractFeatures {
            manifest,
            audio_dir,
            ratings,
            out,
        } => {
            let manifest = PoolManifest::from_file(&manifest, &audio_dir)?;
            let table = commands::extract_features(&manifest, ratings.as_deref(), &out)?;
            log::info!("{} sounds, {} columns, {} extraction failures", table.len(), table.columns().len(), table.errors.len());
        }
        Command::Score { events, out } => {
            let scores = commands::score(&events, &out)?;
            log::info!("scored {} sounds", scores.len());
        }
        Command::Reliability { events, splits, seed, out } => {
            let rel = commands::reliability(&events, splits, seed, &out)?;
            println!("memorability {:.4}, confusability {:.4}", rel.mean_memorability(), rel.mean_confusability());
        }
        Command::Shapley {
            features,
            scores,
            target,
            regressor,
            iterations,
            seed,
            out,
        } => {
            let cfg = ShapleyConfig {
                iterations,
                seed,
                regressor: commands::regressor_kind(&regressor)?,
                ..Default::default()
            };
            let report = commands::shapley(&features, &scores, target, &cfg, &out)?;
            for f in report.features.iter().take(10) {
                println!("{:<32} {:+.5}", f.feature, f.shapley_delta_r2);
            }
        }
        Command::ContextEval { events, features, seed, out } => {
            let cfg = ContextEvalConfig { seed, ..Default::default() };
            let grid = commands::context_eval(&events, &features, &cfg, &out)?;
            for row in &grid.rows {
                println!("{:<36} K={} {:.4}", row.feature_set.name(), row.k, row.holdout_accuracy);
            }
        }
        Command::Report { scores, bins, out } => commands::report(&scores, bins, &out)?,
    }
    Ok(())
}
