//! Network host for the measurement protocol.
//!
//! Two listeners share one read-only [`ServiceContext`]:
//!
//! * a raw TCP stream carrying newline-delimited JSON envelopes. Frames on a
//!   connection are answered strictly in order; separate connections are
//!   served concurrently.
//! * an HTTP listener with single-shot endpoints:
//!   `POST /v1/measure`, `POST /v1/segment`, `POST /v1/message` (one
//!   envelope in, one envelope out) and `GET /v1/health`.
//!
//! ```no_run
//! # async fn demo() -> Result<(), dbh_service::ServerError> {
//! let server = dbh_service::Server::bind(dbh_service::ServerConfig::default()).await?;
//! println!("tcp {:?} http {:?}", server.tcp_addr(), server.http_addr());
//! server.run(async { let _ = tokio::signal::ctrl_c().await; }).await
//! # }
//! ```

mod http;
mod stream;

use std::future::Future;
use std::net::SocketAddr;
use std::sync::Arc;

use dbh_core::service::{ServiceConfig, ServiceContext, DEFAULT_MAX_PAYLOAD};
use tokio::net::TcpListener;
use tokio::sync::watch;

pub use dbh_core::service::VERSION;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";
pub const DEFAULT_HTTP_LISTEN: &str = "127.0.0.1:7879";
pub const ENV_LISTEN: &str = "DBH_LISTEN";
pub const ENV_HTTP_LISTEN: &str = "DBH_HTTP_LISTEN";
pub const ENV_MAX_PAYLOAD: &str = "DBH_MAX_PAYLOAD";

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("{0} is not a valid payload size")]
    PayloadSize(String),
    #[error("invalid CORS origin {0:?}")]
    CorsOrigin(String),
    #[error("no listener configured")]
    NoListener,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// NDJSON stream listener; `None` disables it.
    pub listen: Option<String>,
    /// HTTP listener; `None` disables it.
    pub http_listen: Option<String>,
    /// Upper bound on one frame or request body, in bytes.
    pub max_payload: usize,
    /// Value for `Access-Control-Allow-Origin` on HTTP responses.
    pub cors_origin: Option<String>,
    pub service: ServiceConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: Some(DEFAULT_LISTEN.into()),
            http_listen: Some(DEFAULT_HTTP_LISTEN.into()),
            max_payload: DEFAULT_MAX_PAYLOAD,
            cors_origin: None,
            service: ServiceConfig::default(),
        }
    }
}

impl ServerConfig {
    /// Applies `DBH_LISTEN`, `DBH_HTTP_LISTEN` and `DBH_MAX_PAYLOAD` when set.
    pub fn with_env(mut self) -> Result<Self, ServerError> {
        if let Ok(v) = std::env::var(ENV_LISTEN) {
            self.listen = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_HTTP_LISTEN) {
            self.http_listen = Some(v);
        }
        if let Ok(v) = std::env::var(ENV_MAX_PAYLOAD) {
            self.max_payload = parse_payload_size(&v)?;
        }
        Ok(self)
    }
}

/// Byte count with an optional `k`, `m` or `g` suffix (powers of 1024).
pub fn parse_payload_size(s: &str) -> Result<usize, ServerError> {
    let t = s.trim().to_ascii_lowercase();
    let t = t.strip_suffix('b').unwrap_or(&t);
    let (digits, shift) = match t.chars().last() {
        Some('k') => (&t[..t.len() - 1], 10),
        Some('m') => (&t[..t.len() - 1], 20),
        Some('g') => (&t[..t.len() - 1], 30),
        _ => (t, 0),
    };
    digits
        .trim()
        .parse::<usize>()
        .ok()
        .and_then(|n| n.checked_mul(1usize << shift))
        .filter(|&n| n > 0)
        .ok_or_else(|| ServerError::PayloadSize(s.to_owned()))
}

async fn bind(addr: &str) -> Result<TcpListener, ServerError> {
    TcpListener::bind(addr).await.map_err(|source| ServerError::Bind { addr: addr.to_owned(), source })
}

/// Bound but not yet serving. Binding first lets callers learn the actual
/// ports (e.g. after asking for port 0) before traffic starts.
pub struct Server {
    tcp: Option<TcpListener>,
    http: Option<TcpListener>,
    ctx: Arc<ServiceContext>,
    max_payload: usize,
    cors_origin: Option<axum::http::HeaderValue>,
}

impl Server {
    pub async fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        if config.listen.is_none() && config.http_listen.is_none() {
            return Err(ServerError::NoListener);
        }
        let cors_origin = match &config.cors_origin {
            Some(o) => Some(axum::http::HeaderValue::from_str(o).map_err(|_| ServerError::CorsOrigin(o.clone()))?),
            None => None,
        };
        let tcp = match &config.listen {
            Some(a) => Some(bind(a).await?),
            None => None,
        };
        let http = match &config.http_listen {
            Some(a) => Some(bind(a).await?),
            None => None,
        };
        Ok(Self {
            tcp,
            http,
            ctx: Arc::new(ServiceContext::new(&config.service)),
            max_payload: config.max_payload,
            cors_origin,
        })
    }

    pub fn tcp_addr(&self) -> Option<SocketAddr> {
        self.tcp.as_ref().and_then(|l| l.local_addr().ok())
    }

    pub fn http_addr(&self) -> Option<SocketAddr> {
        self.http.as_ref().and_then(|l| l.local_addr().ok())
    }

    /// Serves until `shutdown` resolves, then stops accepting and waits for
    /// requests already being processed to be answered.
    pub async fn run(self, shutdown: impl Future<Output = ()> + Send + 'static) -> Result<(), ServerError> {
        let (tx, rx) = watch::channel(false);
        let mut tasks = tokio::task::JoinSet::new();
        if let Some(listener) = self.tcp {
            tasks.spawn(stream::serve(listener, self.ctx.clone(), self.max_payload, rx.clone()));
        }
        if let Some(listener) = self.http {
            let app = http::router(self.ctx.clone(), self.max_payload, self.cors_origin.clone());
            tasks.spawn(http::serve(listener, app, rx.clone()));
        }
        tokio::spawn(async move {
            shutdown.await;
            log::info!("shutdown requested; draining in-flight requests");
            let _ = tx.send(true);
        });
        let mut result = Ok(());
        while let Some(joined) = tasks.join_next().await {
            match joined {
                Ok(Err(e)) if result.is_ok() => result = Err(e),
                Err(e) if result.is_ok() => result = Err(ServerError::Io(std::io::Error::other(e))),
                _ => {}
            }
        }
        result
    }
}

/// Resolves once `rx` observes `true`, or its sender is gone.
pub(crate) async fn stopped(mut rx: watch::Receiver<bool>) {
    let _ = rx.wait_for(|stop| *stop).await;
}
