use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;
use oaifs_core::config::load_config;
use oaifs_service::{bind, run, AppState};
use tracing_subscriber::EnvFilter;

/// Serve a document root as an OAI-PMH repository.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Configuration file (`key = value` lines).
    #[arg(long)]
    config: PathBuf,
    /// Override listen_address (also settable through OAIFS_LISTEN).
    #[arg(long)]
    listen: Option<String>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    dump_config: bool,
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match serve(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("oaifs-serve: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn serve(args: Args) -> anyhow::Result<()> {
    let mut cfg = load_config(&args.config)?;
    cfg.apply_env_overrides();
    if let Some(listen) = args.listen {
        cfg.listen_address = listen;
        if !cfg.explicit_base_url {
            let base = format!("http://{}", cfg.listen_address);
            cfg.docroot.set_base_url(&base);
        }
    }
    if args.dump_config {
        print!("{}", cfg.dump());
        return Ok(());
    }

    let (listener, cfg) = bind(cfg)?;
    let state = Arc::new(AppState::new(cfg, false)?);
    // Harnesses that bind port 0 read the chosen address from this line.
    println!("listening on {}", state.config().listen_address);
    std::io::stdout().flush()?;

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        run(listener, state, shutdown_signal()).await
    })?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    tracing::info!("shutting down");
}
