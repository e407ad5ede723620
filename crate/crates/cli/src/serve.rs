use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use dbh_core::providers::ExternalEndpoint;
use dbh_core::service::{ProviderSelector, ServiceConfig};
use dbh_service::{parse_payload_size, Server, ServerConfig, ServerError};

use crate::{CliError, CliResult};

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Stream (NDJSON) listen address.
    #[arg(long, env = dbh_service::ENV_LISTEN, default_value = dbh_service::DEFAULT_LISTEN)]
    listen: String,
    /// HTTP listen address.
    #[arg(long, env = dbh_service::ENV_HTTP_LISTEN, default_value = dbh_service::DEFAULT_HTTP_LISTEN)]
    http_listen: String,
    #[arg(long, conflicts_with = "no_http")]
    no_stream: bool,
    #[arg(long)]
    no_http: bool,
    /// Largest accepted frame or request body, e.g. `32M`.
    #[arg(long, env = dbh_service::ENV_MAX_PAYLOAD, default_value = "32M", value_parser = payload_size)]
    max_payload: usize,
    /// `Access-Control-Allow-Origin` value for HTTP responses.
    #[arg(long)]
    cors_origin: Option<String>,
    #[arg(long)]
    oracle_dir: Option<PathBuf>,
    /// `host:port` of an upstream segmenter.
    #[arg(long)]
    external: Option<String>,
    /// Segment requests that name no provider use the baseline segmenter
    /// with this polarity.
    #[arg(long)]
    invert: bool,
}

fn payload_size(s: &str) -> Result<usize, String> {
    parse_payload_size(s).map_err(|e| e.to_string())
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = tokio::signal::ctrl_c() => {}
                    _ = term.recv() => {}
                }
            }
            Err(_) => {
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

fn server_error(e: ServerError) -> CliError {
    match e {
        ServerError::Bind { .. } | ServerError::Io(_) => CliError::Io(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

pub fn run_serve(args: &ServeArgs) -> CliResult {
    let config = ServerConfig {
        listen: (!args.no_stream).then(|| args.listen.clone()),
        http_listen: (!args.no_http).then(|| args.http_listen.clone()),
        max_payload: args.max_payload,
        cors_origin: args.cors_origin.clone(),
        service: ServiceConfig {
            oracle_dir: args.oracle_dir.clone(),
            external: args.external.clone().map(ExternalEndpoint::new),
            segment_default: ProviderSelector::Baseline { invert: args.invert, open_iterations: 1 },
        },
    };
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Io(e.to_string()))?;
    runtime.block_on(async {
        let server = Server::bind(config).await.map_err(server_error)?;
        let mut out = std::io::stdout().lock();
        if let Some(a) = server.tcp_addr() {
            let _ = writeln!(out, "listening stream {a}");
        }
        if let Some(a) = server.http_addr() {
            let _ = writeln!(out, "listening http {a}");
        }
        let _ = out.flush();
        drop(out);
        server.run(shutdown_signal()).await.map_err(server_error)
    })
}
