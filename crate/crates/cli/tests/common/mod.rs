#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dbh_core::service::{decode, encode, Message, ServiceConfig};
use dbh_service::{Server, ServerConfig};
use serde_json::Value;

pub const CAMERA: [&str; 6] = ["--focal-mm", "6", "--sensor-w-mm", "4.8", "--sensor-h-mm", "6.4"];

/// Numeric fields a measure response carries on success.
pub const NUMERIC_FIELDS: [&str; 8] =
    ["dbh_cm", "far_distance_m", "df_mm_per_px", "p_pixels", "breast_row", "h_far_px", "h_close_px", "alignment_iou"];

pub fn dbh() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dbh"))
}

pub fn run(args: &[&str]) -> Output {
    dbh().args(args).output().expect("spawn dbh")
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/errors").join(name)
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

/// Renders `<id>.far.png`, `<id>.close.png` and `<id>.truth.json` into `dir`.
pub fn synth(dir: &Path, id: &str, dbh_cm: f64, size: (u32, u32), extra: &[&str]) -> Value {
    let (w, h) = (size.0.to_string(), size.1.to_string());
    let dbh = dbh_cm.to_string();
    let mut args = vec!["synth", "--out", path_str(dir), "--id", id, "--dbh-cm", &dbh];
    args.extend(["--image-w-px", &w, "--image-h-px", &h]);
    args.extend(extra);
    let out = run(&args);
    assert!(out.status.success(), "synth failed: {}", stderr(&out));
    truth(dir, id)
}

pub fn truth(dir: &Path, id: &str) -> Value {
    let text = std::fs::read_to_string(dir.join(format!("{id}.truth.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// `dbh measure --format json` on a synthesized pair.
pub fn measure_json(dir: &Path, id: &str, extra: &[&str]) -> (Output, Value) {
    let far = dir.join(format!("{id}.far.png"));
    let close = dir.join(format!("{id}.close.png"));
    let mut args = vec!["measure", "--far", path_str(&far), "--close", path_str(&close)];
    args.extend(CAMERA);
    args.extend(["--displacement-m", "1.524", "--format", "json"]);
    args.extend(extra);
    let out = run(&args);
    let v = serde_json::from_str(stdout(&out).trim()).unwrap_or(Value::Null);
    (out, v)
}

/// Raw JSON numbers, so equality is textual and therefore bit-for-bit.
pub fn numeric_fields(v: &Value) -> Vec<(String, String)> {
    NUMERIC_FIELDS
        .iter()
        .map(|k| (k.to_string(), v.get(*k).map(|n| n.to_string()).unwrap_or_else(|| "missing".into())))
        .collect()
}

/// An in-process server on ephemeral ports, stopped on drop.
pub struct LocalServer {
    pub tcp: SocketAddr,
    pub http: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    runtime: Option<tokio::runtime::Runtime>,
    handle: Option<tokio::task::JoinHandle<Result<(), dbh_service::ServerError>>>,
}

impl LocalServer {
    pub fn start(service: ServiceConfig) -> Self {
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let config = ServerConfig {
            listen: Some("127.0.0.1:0".into()),
            http_listen: Some("127.0.0.1:0".into()),
            max_payload: dbh_core::service::DEFAULT_MAX_PAYLOAD,
            cors_origin: None,
            service,
        };
        let server = runtime.block_on(Server::bind(config)).unwrap();
        let (tcp, http) = (server.tcp_addr().unwrap(), server.http_addr().unwrap());
        let (stop, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = runtime.spawn(server.run(async move {
            let _ = rx.await;
        }));
        Self { tcp, http, stop: Some(stop), runtime: Some(runtime), handle: Some(handle) }
    }

    /// One request/response exchange on a fresh stream connection.
    pub fn exchange(&self, message: &Message) -> Message {
        exchange(self.tcp, message)
    }
}

impl Drop for LocalServer {
    fn drop(&mut self) {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        if let (Some(rt), Some(h)) = (self.runtime.take(), self.handle.take()) {
            let _ = rt.block_on(h);
        }
    }
}

pub fn exchange(addr: SocketAddr, message: &Message) -> Message {
    let mut stream = TcpStream::connect(addr).unwrap();
    stream.write_all(&encode(message)).unwrap();
    let mut reader = BufReader::new(stream);
    let mut line = Vec::new();
    reader.read_until(b'\n', &mut line).unwrap();
    decode(&line).unwrap()
}
