use std::net::SocketAddr;

use clap::Parser;
use tracing_subscriber::EnvFilter;

/// Chart stylization service.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Address to listen on.
    #[arg(long, default_value = "127.0.0.1:7860")]
    bind: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt().with_env_filter(EnvFilter::from_default_env()).with_writer(std::io::stderr).init();
    let args = Args::parse();
    let listener = tokio::net::TcpListener::bind(args.bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    tokio::select! {
        r = vizstyle_service::serve(listener) => r,
        _ = tokio::signal::ctrl_c() => Ok(()),
    }
}
