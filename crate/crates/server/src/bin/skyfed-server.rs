use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skyfed_server::config::{NodeConfig, PortalConfig};

#[derive(Parser)]
#[command(name = "skyfed-server", about = "Run a skyfed archive node or the federation portal")]
struct Args {
    #[command(subcommand)]
    role: Role,
}

#[derive(Subcommand)]
enum Role {
    /// Serve one catalog store.
    Archive {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve the registry, cross-match, jobs and personal databases.
    Portal {
        #[arg(long)]
        config: PathBuf,
    },
}

async fn serve(bind: &str, router: axum::Router) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

fn run(args: Args) -> Result<(), String> {
    let (bind, router) = match args.role {
        Role::Archive { config } => {
            let c = NodeConfig::load(&config).map_err(|e| e.to_string())?;
            (c.bind.clone(), skyfed_server::node_router(&c).map_err(|e| e.to_string())?)
        }
        Role::Portal { config } => {
            let c = PortalConfig::load(&config).map_err(|e| e.to_string())?;
            (c.bind.clone(), skyfed_server::portal_router(&c).map_err(|e| e.to_string())?.0)
        }
    };
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(|e| e.to_string())?;
    rt.block_on(serve(&bind, router)).map_err(|e| format!("{bind}: {e}"))
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("skyfed-server: {e}");
            ExitCode::FAILURE
        }
    }
}
