use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use safelab_service::{router, SessionStore};

use crate::Failure;

#[derive(clap::Args)]
pub struct Args {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Address to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory of static client files served at `/`.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    /// Base seed for sessions created without one.
    #[arg(long)]
    seed: Option<u64>,
    /// Append-only session log; sessions in it are restored on start.
    #[arg(long, default_value = "sessions.jsonl")]
    log: PathBuf,
}

pub fn run(args: Args) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| Failure::Usage(format!("bad address: {e}")))?;
    if let Some(dir) = &args.static_dir {
        if !dir.is_dir() {
            return Err(Failure::Usage(format!("static dir {} does not exist", dir.display())));
        }
    }
    let store = SessionStore::new(args.seed)
        .and_then(|s| s.with_log(&args.log))
        .map_err(|e| Failure::Data(e.to_string()))?;
    let store = Arc::new(store);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Data(format!("cannot bind {addr}: {e}")))?;
        tracing::info!("listening on http://{addr} ({} sessions restored)", store.len());
        axum::serve(listener, router(store.clone(), args.static_dir.clone()))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
                tracing::info!("shutting down");
            })
            .await?;
        Ok::<(), Failure>(())
    })?;
    store.sync().map_err(|e| Failure::Data(e.to_string()))?;
    Ok(())
}
