use std::path::PathBuf;
use std::process::ExitCode;

use adaas_server::{App, ServerConfig};
use clap::Parser;
use tracing::{error, info};

/// Anomaly-detection control server.
#[derive(Parser)]
#[command(name = "adaasd", version)]
struct Args {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Overrides `listen_addr` from the config file.
    #[arg(long)]
    listen: Option<std::net::SocketAddr>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "info".into()),
        )
        .init();
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(path) => match ServerConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                error!("{e}");
                return ExitCode::from(2);
            }
        },
        None => ServerConfig::default(),
    };
    if let Some(addr) = args.listen {
        cfg.listen_addr = addr;
    }

    let app = match tokio::task::spawn_blocking(move || App::start(&cfg).map(|a| (a, cfg))).await
    {
        Ok(Ok(v)) => v,
        Ok(Err(e)) => {
            error!("starting control server: {e}");
            return ExitCode::FAILURE;
        }
        Err(e) => {
            error!("{e}");
            return ExitCode::FAILURE;
        }
    };
    let (app, cfg) = app;
    let listener = match tokio::net::TcpListener::bind(cfg.listen_addr).await {
        Ok(l) => l,
        Err(e) => {
            error!("binding {}: {e}", cfg.listen_addr);
            return ExitCode::FAILURE;
        }
    };
    info!(addr = %cfg.listen_addr, "listening");
    let served = axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutting down");
        })
        .await;
    let control = app.control.clone();
    let _ = tokio::task::spawn_blocking(move || control.shutdown()).await;
    match served {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::FAILURE
        }
    }
}
