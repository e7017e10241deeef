//! Command-line surface. Every command is a request to the service; without
//! `--server` an in-process service is started on a loopback port.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use vizstyle_client::Client;
use vizstyle_core::api::{
    ApiError, ErrorKind, GenerateRequest, InspectQuery, InspectStage, RegenRequest, RegenTarget, ValidateRequest,
};
use vizstyle_core::chart::Violation;
use vizstyle_core::workflow::{FlagOverrides, BACKEND_ENDPOINT_ENV};

#[derive(Parser, Debug)]
#[command(name = "vizstyle", version, about = "Turn plain charts into stylized images")]
pub struct Cli {
    /// Base URL of a running service; an in-process one is used otherwise.
    #[arg(long, global = true)]
    pub server: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the full pipeline and write the final image and run state.
    Generate(GenerateArgs),
    /// Regenerate a mark, the background or a masked region of a finished run.
    Regen(RegenArgs),
    /// Print the path and summary of one stage of a run.
    Inspect(InspectArgs),
    /// Check a config and list its marks without generating anything.
    Validate(ConfigArgs),
    /// Run the service in the foreground.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[command(flatten)]
    pub overrides: OverrideArgs,
}

#[derive(Args, Debug)]
pub struct OverrideArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// `mock`, `adapter`, or an adapter URL.
    #[arg(long)]
    pub backend: Option<String>,
    /// Write trace.jsonl (`--trace`, `--trace=false`).
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trace: Option<bool>,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Extra copy of the final image.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "vizstyle-run")]
    pub state: PathBuf,
}

#[derive(Args, Debug)]
#[command(group(ArgGroup::new("target").required(true).args(["mark", "background", "mask"])))]
pub struct RegenArgs {
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long)]
    pub mark: Option<usize>,
    #[arg(long)]
    pub background: bool,
    /// PNG mask; non-zero pixels are regenerated.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub prompt: Option<String>,
    #[arg(long)]
    pub strength: Option<f32>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// plain, sketch, synth, final or trace.
    pub stage: InspectStage,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:7860")]
    pub bind: SocketAddr,
}

fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

fn env_endpoint() -> Option<String> {
    std::env::var(BACKEND_ENDPOINT_ENV).ok().filter(|e| !e.trim().is_empty())
}

fn read_config(path: &Path) -> Result<serde_json::Value, ApiError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        let kind = if e.kind() == std::io::ErrorKind::NotFound { ErrorKind::NotFound } else { ErrorKind::Io };
        ApiError::new(kind, format!("{}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| ApiError {
        violations: vec![Violation { field: "config".into(), message: e.to_string() }],
        ..ApiError::new(ErrorKind::Validation, format!("{}: {e}", path.display()))
    })
}

impl OverrideArgs {
    fn flags(&self) -> FlagOverrides {
        FlagOverrides { seed: self.seed, backend: self.backend.clone(), trace: self.trace, endpoint: env_endpoint() }
    }
}

fn to_value<T: Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(v).expect("responses serialize")
}

async fn connect(server: Option<&str>) -> Result<Client, ApiError> {
    let base = match server {
        Some(url) => url.to_string(),
        None => {
            let (addr, _task) = vizstyle_service::spawn(SocketAddr::from((Ipv4Addr::LOCALHOST, 0)))
                .await
                .map_err(|e| ApiError::new(ErrorKind::Io, format!("cannot start local service: {e}")))?;
            format!("http://{addr}")
        }
    };
    Client::new(&base).map_err(|e| e.into_api_error())
}

/// Runs one command and returns the JSON printed on success.
pub async fn execute(cli: Cli) -> Result<serde_json::Value, ApiError> {
    if let Command::Serve(args) = &cli.command {
        let listener = tokio::net::TcpListener::bind(args.bind)
            .await
            .map_err(|e| ApiError::new(ErrorKind::Io, format!("cannot bind {}: {e}", args.bind)))?;
        eprintln!("listening on http://{}", listener.local_addr().map_err(|e| ApiError::new(ErrorKind::Io, e.to_string()))?);
        vizstyle_service::serve(listener).await.map_err(|e| ApiError::new(ErrorKind::Io, e.to_string()))?;
        return Ok(serde_json::Value::Null);
    }
    let client = connect(cli.server.as_deref()).await?;
    let result = match cli.command {
        Command::Generate(args) => {
            let req = GenerateRequest {
                config: read_config(&args.config.config)?,
                overrides: args.config.overrides.flags(),
                state_dir: absolute(&args.state),
                out: args.out.as_deref().map(absolute),
            };
            client.generate(&req).await.map(to_value)
        }
        Command::Regen(args) => {
            let target = match (args.mark, args.background, args.mask) {
                (Some(id), _, _) => RegenTarget::Mark { id },
                (_, true, _) => RegenTarget::Background,
                (_, _, Some(path)) => RegenTarget::Mask { path: absolute(&path) },
                _ => unreachable!("clap requires exactly one target"),
            };
            let req = RegenRequest {
                state_dir: absolute(&args.state),
                target,
                prompt: args.prompt,
                strength: args.strength,
                endpoint: env_endpoint(),
            };
            client.regen(&req).await.map(to_value)
        }
        Command::Inspect(args) => {
            let query = InspectQuery { state_dir: absolute(&args.state), stage: args.stage };
            client.inspect(&query).await.map(to_value)
        }
        Command::Validate(args) => {
            let req = ValidateRequest { config: read_config(&args.config)?, overrides: args.overrides.flags() };
            client.validate(&req).await.map(to_value)
        }
        Command::Serve(_) => unreachable!("handled above"),
    };
    result.map_err(|e| e.into_api_error())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("vizstyle").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn trace_flag_forms() {
        let flags = |extra: &[&str]| {
            let mut args = vec!["generate", "-c", "c.json"];
            args.extend_from_slice(extra);
            match parse(&args).command {
                Command::Generate(g) => g.config.overrides.trace,
                _ => unreachable!(),
            }
        };
        assert_eq!(flags(&[]), None);
        assert_eq!(flags(&["--trace"]), Some(true));
        assert_eq!(flags(&["--trace=false"]), Some(false));
    }

    #[test]
    fn regen_needs_exactly_one_target() {
        assert!(Cli::try_parse_from(["vizstyle", "regen", "--state", "d"]).is_err());
        assert!(Cli::try_parse_from(["vizstyle", "regen", "--state", "d", "--mark", "1", "--background"]).is_err());
        match parse(&["regen", "--state", "d", "--background", "--prompt", "tulips"]).command {
            Command::Regen(r) => assert!(r.background && r.mark.is_none()),
            _ => unreachable!(),
        }
    }

    #[test]
    fn inspect_stage_is_positional() {
        match parse(&["--server", "http://h:1", "inspect", "--state", "d", "synth"]).command {
            Command::Inspect(i) => assert_eq!(i.stage, InspectStage::Synth),
            _ => unreachable!(),
        }
    }
}
