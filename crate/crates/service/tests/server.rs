use std::net::SocketAddr;
use std::time::Duration;

use dbh_core::providers::ExternalEndpoint;
use dbh_core::service::{
    decode, encode, HealthRequest, MeasureRequest, MeasureResponse, Message, ProviderSelector, ProviderState,
    ServiceConfig, ServiceContext,
};
use dbh_core::synth::{portrait_camera, SyntheticScene};
use dbh_core::ErrorCode;
use dbh_service::{Server, ServerConfig};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

struct Running {
    tcp: SocketAddr,
    http: SocketAddr,
    stop: oneshot::Sender<()>,
    handle: JoinHandle<Result<(), dbh_service::ServerError>>,
}

impl Running {
    async fn stop(self) {
        let _ = self.stop.send(());
        tokio::time::timeout(Duration::from_secs(30), self.handle).await.unwrap().unwrap().unwrap();
    }
}

async fn start(service: ServiceConfig, max_payload: usize) -> Running {
    let cfg = ServerConfig {
        listen: Some("127.0.0.1:0".into()),
        http_listen: Some("127.0.0.1:0".into()),
        max_payload,
        cors_origin: Some("*".into()),
        service,
    };
    let server = Server::bind(cfg).await.unwrap();
    let (tcp, http) = (server.tcp_addr().unwrap(), server.http_addr().unwrap());
    let (stop, rx) = oneshot::channel::<()>();
    let handle = tokio::spawn(server.run(async move {
        let _ = rx.await;
    }));
    Running { tcp, http, stop, handle }
}

async fn start_default() -> Running {
    start(ServiceConfig::default(), dbh_core::service::DEFAULT_MAX_PAYLOAD).await
}

fn pair_request(id: &str, dbh_cm: f64) -> (MeasureRequest, f64) {
    let mut scene = SyntheticScene::field_protocol(dbh_cm);
    scene.intrinsics = portrait_camera().with_image_size(1200, 1600).unwrap();
    let pair = scene.render_pair().unwrap();
    let req = MeasureRequest {
        request_id: id.into(),
        far_image: pair.far.to_png().unwrap(),
        close_image: pair.close.to_png().unwrap(),
        focal_length_mm: 6.0,
        sensor_width_mm: 4.8,
        sensor_height_mm: 6.4,
        displacement_m: scene.displacement.in_meters(),
        far_distance_m: Some(scene.far_distance.in_meters()),
        provider: ProviderSelector::Mask,
        breast_height_m: None,
    };
    (req, pair.truth.dbh_cm)
}

async fn exchange(stream: &mut BufReader<TcpStream>, message: &Message) -> Message {
    stream.get_mut().write_all(&encode(message)).await.unwrap();
    read_message(stream).await
}

async fn read_message(stream: &mut BufReader<TcpStream>) -> Message {
    let mut line = Vec::new();
    stream.read_until(b'\n', &mut line).await.unwrap();
    decode(&line).unwrap()
}

async fn connect(addr: SocketAddr) -> BufReader<TcpStream> {
    BufReader::new(TcpStream::connect(addr).await.unwrap())
}

struct HttpReply {
    status: u16,
    head: String,
    body: Vec<u8>,
}

async fn http(addr: SocketAddr, method: &str, path: &str, body: &[u8]) -> HttpReply {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let head = format!(
        "{method} {path} HTTP/1.1\r\nHost: {addr}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    s.write_all(head.as_bytes()).await.unwrap();
    s.write_all(body).await.unwrap();
    let mut raw = Vec::new();
    s.read_to_end(&mut raw).await.unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").unwrap();
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    HttpReply { status, head, body: raw[split + 4..].to_vec() }
}

fn measured(message: Message) -> MeasureResponse {
    match message {
        Message::MeasureResponse(r) => r,
        other => panic!("expected a measure response, got {other:?}"),
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn health_on_both_transports() {
    let server = start_default().await;
    let mut conn = connect(server.tcp).await;
    match exchange(&mut conn, &Message::HealthRequest(HealthRequest {})).await {
        Message::HealthResponse(h) => {
            assert_eq!(h.status, "ok");
            assert_eq!(h.version, dbh_service::VERSION);
        }
        other => panic!("{other:?}"),
    }
    let reply = http(server.http, "GET", "/v1/health", b"").await;
    assert_eq!(reply.status, 200);
    assert!(reply.head.to_ascii_lowercase().contains("access-control-allow-origin: *"));
    let v: serde_json::Value = serde_json::from_slice(&reply.body).unwrap();
    assert_eq!(v["status"], "ok");
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn measure_over_stream_matches_direct_call() {
    let server = start_default().await;
    let (req, truth) = pair_request("stream-1", 45.0);
    let direct = ServiceContext::default().handle_measure(&req);
    let mut conn = connect(server.tcp).await;
    let resp = measured(exchange(&mut conn, &Message::MeasureRequest(req)).await);
    assert!(resp.status.is_ok(), "{:?}", resp.status);
    assert_eq!(resp.request_id, "stream-1");
    let dbh = resp.dbh_cm.unwrap();
    assert!((dbh - truth).abs() / truth < 0.025, "{dbh} vs {truth}");
    assert_eq!(resp.dbh_cm.unwrap().to_bits(), direct.dbh_cm.unwrap().to_bits());
    assert_eq!(resp.far_distance_m.unwrap().to_bits(), direct.far_distance_m.unwrap().to_bits());
    assert_eq!(resp.df_mm_per_px.unwrap().to_bits(), direct.df_mm_per_px.unwrap().to_bits());
    assert_eq!(resp.masks, direct.masks);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_connections_keep_their_own_responses() {
    let server = start_default().await;
    let mut clients = Vec::new();
    for c in 0..6 {
        let addr = server.tcp;
        clients.push(tokio::spawn(async move {
            let mut conn = connect(addr).await;
            // Pipeline several frames before reading any reply.
            let dbhs = [30.0 + 5.0 * c as f64, 60.0 + 5.0 * c as f64, 90.0];
            let mut expected = Vec::new();
            for (k, dbh) in dbhs.iter().enumerate() {
                let (req, truth) = pair_request(&format!("c{c}-r{k}"), *dbh);
                conn.get_mut().write_all(&encode(&Message::MeasureRequest(req))).await.unwrap();
                expected.push((format!("c{c}-r{k}"), truth));
            }
            for (id, truth) in expected {
                let resp = measured(read_message(&mut conn).await);
                assert_eq!(resp.request_id, id);
                let dbh = resp.dbh_cm.unwrap();
                assert!((dbh - truth).abs() / truth < 0.025, "{id}: {dbh} vs {truth}");
            }
        }));
    }
    for c in clients {
        c.await.unwrap();
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn http_status_codes() {
    let server = start_default().await;
    let (req, _) = pair_request("h-1", 50.0);
    let ok = http(server.http, "POST", "/v1/measure", &serde_json::to_vec(&req).unwrap()).await;
    assert_eq!(ok.status, 200);
    let resp: MeasureResponse = serde_json::from_slice(&ok.body).unwrap();
    assert_eq!(resp.request_id, "h-1");
    assert!(resp.dbh_cm.is_some());

    let mut v = serde_json::to_value(&req).unwrap();
    v.as_object_mut().unwrap().remove("focal_length_mm");
    let missing = http(server.http, "POST", "/v1/measure", &serde_json::to_vec(&v).unwrap()).await;
    assert_eq!(missing.status, 400);
    let body: serde_json::Value = serde_json::from_slice(&missing.body).unwrap();
    assert_eq!(body["code"], "PROTOCOL");
    assert!(body["message"].as_str().unwrap().contains("focal_length_mm"));
    assert_eq!(body["request_id"], "h-1");

    let mut same = req.clone();
    same.close_image = same.far_image.clone();
    same.far_distance_m = None;
    let rejected = http(server.http, "POST", "/v1/measure", &serde_json::to_vec(&same).unwrap()).await;
    assert_eq!(rejected.status, 422);
    let resp: MeasureResponse = serde_json::from_slice(&rejected.body).unwrap();
    assert_eq!(resp.status.error_code(), Some(ErrorCode::NonApproaching));

    let mut oracle = req.clone();
    oracle.provider = ProviderSelector::Oracle;
    let unavailable = http(server.http, "POST", "/v1/measure", &serde_json::to_vec(&oracle).unwrap()).await;
    assert_eq!(unavailable.status, 503);
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn envelope_over_http() {
    let server = start_default().await;
    let (req, _) = pair_request("env-1", 40.0);
    let reply = http(server.http, "POST", "/v1/message", &encode(&Message::MeasureRequest(req))).await;
    assert_eq!(reply.status, 200);
    let resp = measured(decode(&reply.body).unwrap());
    assert_eq!(resp.request_id, "env-1");

    let reply = http(server.http, "POST", "/v1/message", br#"{"type":"foo","payload":{}}"#).await;
    assert_eq!(reply.status, 400);
    match decode(&reply.body).unwrap() {
        Message::Error(e) => assert_eq!(e.code, "UNSUPPORTED_TYPE"),
        other => panic!("{other:?}"),
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_and_truncated_frames() {
    let server = start(ServiceConfig::default(), 1024).await;
    let mut conn = connect(server.tcp).await;
    conn.get_mut().write_all(&vec![b'x'; 4096]).await.unwrap();
    conn.get_mut().write_all(b"\n").await.unwrap();
    match read_message(&mut conn).await {
        Message::Error(e) => assert_eq!(e.code, "FRAME"),
        other => panic!("{other:?}"),
    }

    let mut conn = connect(server.tcp).await;
    conn.get_mut().write_all(br#"{"type":"health_request","payload":{"request_id":"t"#).await.unwrap();
    conn.get_mut().shutdown().await.unwrap();
    match read_message(&mut conn).await {
        Message::Error(e) => assert_eq!(e.code, "FRAME"),
        other => panic!("{other:?}"),
    }
    server.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn external_provider_chains_to_another_server() {
    // The upstream segments rendered images (white trunk on black) with the baseline.
    let upstream = start(
        ServiceConfig {
            segment_default: ProviderSelector::Baseline { invert: true, open_iterations: 1 },
            ..ServiceConfig::default()
        },
        dbh_core::service::DEFAULT_MAX_PAYLOAD,
    )
    .await;
    let front = start(
        ServiceConfig { external: Some(ExternalEndpoint::new(upstream.tcp.to_string())), ..ServiceConfig::default() },
        dbh_core::service::DEFAULT_MAX_PAYLOAD,
    )
    .await;
    let (mut req, truth) = pair_request("ext-1", 55.0);
    let direct = ServiceContext::default().handle_measure(&req);
    req.provider = ProviderSelector::External;
    let mut conn = connect(front.tcp).await;
    let resp = measured(exchange(&mut conn, &Message::MeasureRequest(req)).await);
    assert!(resp.status.is_ok(), "{:?}", resp.status);
    let dbh = resp.dbh_cm.unwrap();
    assert!((dbh - truth).abs() / truth < 0.025);
    assert_eq!(dbh.to_bits(), direct.dbh_cm.unwrap().to_bits());

    match exchange(&mut conn, &Message::HealthRequest(HealthRequest {})).await {
        Message::HealthResponse(h) => {
            let ext = h.providers.iter().find(|p| p.name == "external").unwrap();
            assert_eq!(ext.state, ProviderState::Available);
        }
        other => panic!("{other:?}"),
    }
    drop(conn);
    front.stop().await;
    upstream.stop().await;
}

#[tokio::test(flavor = "multi_thread")]
async fn shutdown_answers_in_flight_requests() {
    let server = start_default().await;
    let mut conn = connect(server.tcp).await;
    let (req, _) = pair_request("late", 70.0);
    conn.get_mut().write_all(&encode(&Message::MeasureRequest(req))).await.unwrap();
    // Let the frame reach the server before asking it to stop.
    tokio::time::sleep(Duration::from_millis(50)).await;
    let Running { stop, handle, .. } = server;
    stop.send(()).unwrap();
    let resp = measured(read_message(&mut conn).await);
    assert_eq!(resp.request_id, "late");
    assert!(resp.status.is_ok());
    tokio::time::timeout(Duration::from_secs(30), handle).await.unwrap().unwrap().unwrap();
    let mut rest = Vec::new();
    conn.read_to_end(&mut rest).await.unwrap();
    assert!(rest.is_empty());
}
