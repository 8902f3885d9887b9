mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Stdio};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream as TokioStream;
use tokio::time::timeout;
use tokio_tungstenite::tungstenite::{self, Message};
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use common::Fixture;

const SCHEMA: &str = include_str!("../../../docs/session-messages.schema.json");

type Ws = WebSocketStream<MaybeTlsStream<TokioStream>>;

struct Server {
    child: Child,
    addr: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(fx: &Fixture, port: u16) -> Server {
    let mut child = common::bin()
        .current_dir(fx.path())
        .args(["--config", "tiny.json", "serve", "--checkpoint", "ck", "--observer", "data/observer.json"])
        .args(["--port", &port.to_string()])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("unexpected: {line}")).to_string();
    Server { child, addr }
}

async fn next(ws: &mut Ws) -> Value {
    let msg = timeout(Duration::from_secs(10), ws.next()).await.expect("message within 10 s");
    match msg.expect("stream open").expect("frame") {
        Message::Text(t) => serde_json::from_str(&t).unwrap(),
        other => panic!("unexpected frame {other:?}"),
    }
}

async fn next_of(ws: &mut Ws, kind: &str, seen: &mut Vec<Value>) -> Value {
    loop {
        let m = next(ws).await;
        seen.push(m.clone());
        if m["type"] == kind {
            return m;
        }
    }
}

async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[tokio::test(flavor = "multi_thread")]
async fn live_session_over_websocket() {
    let fx = Fixture::new();
    let server = start(&fx, 0);
    let url = format!("ws://{}/ws", server.addr);
    let (mut ws, _) = tokio_tungstenite::connect_async(&url).await.unwrap();
    let mut seen = Vec::new();

    let hello = next(&mut ws).await;
    assert_eq!(hello["type"], "hello");
    assert_eq!(hello["payload"]["joints"], 3);
    assert_eq!(hello["payload"]["profile"], "moderate");
    let config = next(&mut ws).await;
    assert_eq!(config["type"], "config");
    assert_eq!(config["payload"]["intent"], "A");
    let bound = config["payload"]["torque_bound"].as_f64().unwrap();
    assert!(bound > 0.0);
    seen.extend([hello, config]);

    // Only one client at a time.
    match tokio_tungstenite::connect_async(&url).await {
        Err(tungstenite::Error::Http(resp)) => assert_eq!(resp.status().as_u16(), 409),
        other => panic!("second client should be refused, got {:?}", other.map(|_| ())),
    }

    // A torque beyond the bound is clamped, echoed, and in force from the next state on.
    let first = next_of(&mut ws, "state", &mut seen).await;
    assert_eq!(first["payload"]["injected"], json!([0.0, 0.0, 0.0]));
    send(&mut ws, json!({"schema_version": 1, "t": 0, "type": "torque_cmd", "payload": {"joint": 1, "torque": 99.0}}))
        .await;
    let echo = next_of(&mut ws, "torque_cmd", &mut seen).await;
    assert_eq!(echo["payload"], json!({"joint": 1, "torque": bound}));
    let state = next_of(&mut ws, "state", &mut seen).await;
    assert_eq!(state["payload"]["injected"], json!([0.0, bound, 0.0]));
    assert!(state["t"].as_u64() > first["t"].as_u64());

    // Intent switch lands within one network tick.
    send(&mut ws, json!({"schema_version": 1, "t": 0, "type": "intent_cmd", "payload": {"intent": "B"}})).await;
    let per_network_tick = (config_rate(&seen, "fast_rate_hz") / config_rate(&seen, "network_rate_hz")).ceil() as usize;
    let mut switched = false;
    for _ in 0..per_network_tick {
        let s = next_of(&mut ws, "state", &mut seen).await;
        if s["payload"]["intent"] == "B" {
            switched = true;
            break;
        }
    }
    assert!(switched, "intent did not switch within {per_network_tick} fast ticks");

    // Bad input is answered with an error and the session keeps running.
    ws.send(Message::Text("not json".into())).await.unwrap();
    let err = next_of(&mut ws, "error", &mut seen).await;
    assert!(!err["payload"]["message"].as_str().unwrap().is_empty());
    send(&mut ws, json!({"schema_version": 1, "t": 0, "type": "intent_cmd", "payload": {"intent": "Z"}})).await;
    next_of(&mut ws, "error", &mut seen).await;
    next_of(&mut ws, "state", &mut seen).await;

    // Network-rate messages arrive too.
    next_of(&mut ws, "latent", &mut seen).await;
    next_of(&mut ws, "metrics", &mut seen).await;

    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for m in &seen {
        let errs: Vec<String> = validator.iter_errors(m).map(|e| e.to_string()).collect();
        assert!(errs.is_empty(), "{} does not match the schema: {errs:?}", m["type"]);
    }
    let sent = [
        json!({"schema_version": 1, "t": 0, "type": "torque_cmd", "payload": {"joint": 1, "torque": 99.0}}),
        json!({"schema_version": 1, "t": 0, "type": "intent_cmd", "payload": {"intent": "B"}}),
    ];
    assert!(sent.iter().all(|m| validator.is_valid(m)));
    let mut broken = state.clone();
    broken["payload"].as_object_mut().unwrap().remove("injected");
    assert!(!validator.is_valid(&broken));
    let mut broken = state.clone();
    broken["type"] = json!("bogus");
    assert!(!validator.is_valid(&broken));
    let mut broken = echo.clone();
    broken["payload"]["joint"] = json!("one");
    assert!(!validator.is_valid(&broken));
    let kinds: std::collections::BTreeSet<&str> = seen.iter().map(|m| m["type"].as_str().unwrap()).collect();
    for k in ["hello", "config", "state", "torque_cmd", "latent", "metrics", "error"] {
        assert!(kinds.contains(k), "no {k} message seen");
    }

    // After the client leaves, a new one can connect and is greeted again.
    ws.close(None).await.unwrap();
    drop(ws);
    let mut again = None;
    for _ in 0..50 {
        match tokio_tungstenite::connect_async(&url).await {
            Ok((ws, _)) => {
                again = Some(ws);
                break;
            }
            Err(_) => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    let mut ws = again.expect("reconnect after close");
    assert_eq!(next(&mut ws).await["type"], "hello");

    let resp = http_get(&server.addr, "/schema");
    assert!(resp.starts_with("HTTP/1.1 200"), "{resp}");
    assert!(resp.ends_with(SCHEMA), "served schema differs from docs/");
}

fn config_rate(seen: &[Value], key: &str) -> f64 {
    seen.iter().find(|m| m["type"] == "config").unwrap()["payload"][key].as_f64().unwrap()
}

#[test]
fn occupied_port_is_a_clean_error() {
    let fx = Fixture::new();
    let server = start(&fx, 0);
    let port = server.addr.rsplit(':').next().unwrap();
    let out = common::bin()
        .current_dir(fx.path())
        .args(["--config", "tiny.json", "serve", "--checkpoint", "ck", "--observer", "data/observer.json"])
        .args(["--port", port])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot bind"));
}

#[test]
fn missing_checkpoint_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = common::bin().current_dir(dir.path()).args(["serve", "--checkpoint", "nope", "--port", "0"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn corpus_messages_match_schema() {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/session_message");
    let mut n = 0;
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        let m: Value = serde_json::from_str(&std::fs::read_to_string(&p).unwrap()).unwrap();
        let errs: Vec<String> = validator.iter_errors(&m).map(|e| e.to_string()).collect();
        assert!(errs.is_empty(), "{}: {errs:?}", p.display());
        n += 1;
    }
    assert_eq!(n, 8);
}
