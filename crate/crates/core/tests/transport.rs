//! Wire format golden files and the controller service over TCP.
//!
//! Set `GBM_BLESS=1` to rewrite the golden files from the current encoder.

use std::path::PathBuf;
use std::time::Duration;

use gbm_core::engine::{AgentId, Layer, MessageClass, Origin, Payload};
use gbm_core::runtime::{CertAuthority, Envelope};
use gbm_core::sim::{AcmeWorld, ScenarioConfig};
use gbm_core::transport::{decode, encode, read_frame, serve_cos, CosConfig, CosHandle, Frame, FrameBody, MAX_FRAME};
use gbm_core::Value;
use tokio::io::AsyncWriteExt;
use tokio::net::TcpStream;

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/frames")
}

fn sample_frames() -> Vec<(&'static str, Frame)> {
    let cfg = ScenarioConfig::demo();
    let world = AcmeWorld::build(&cfg).unwrap();
    let ca = CertAuthority::deterministic(&cfg.ca_label);
    let inm = AgentId::new("InM", "store7", Layer::B);
    let buyer = AgentId::new("buyer", "store7", Layer::B);
    let mgr = AgentId::new("mgr7", "store7", Layer::M);
    let request = Payload::new("purchaseRequest", vec![Value::str("milk"), Value::Num(60.0)]);
    let env = Envelope {
        sender_triple: Some(inm.clone()),
        source: inm.clone(),
        receiver: buyer.clone(),
        payload: request.clone(),
        class: MessageClass::B,
        origin: Origin::Actor,
        hash_chain: world.tree.node("B").unwrap().chain(),
        seq: 7,
        sent_at: 12.5,
    };
    vec![
        ("adopt", Frame::new(FrameBody::Adopt { cert: ca.issue(&inm), law: "B".into(), pool: Some(1) })),
        ("send", Frame::new(FrameBody::Send { from: inm.clone(), to: buyer.clone(), payload: request.clone() })),
        ("envelope", Frame::new(FrameBody::Envelope(env))),
        (
            "examineReply",
            Frame::new(FrameBody::ExamineReply {
                agent: mgr.clone(),
                from: Some(buyer.clone()),
                property: "budget".into(),
                value: Value::Num(600.0),
            }),
        ),
        (
            "event",
            Frame::new(FrameBody::Event {
                agent: mgr,
                payload: Payload::new("lawBudget", vec![Value::Num(80.0)]),
                sender: Some(buyer),
                class: Some(MessageClass::M),
            }),
        ),
        ("ack", Frame::ack(Some(inm), Some(true))),
        ("error", Frame::error("unknown agent")),
    ]
}

#[test]
fn frames_match_golden_files_bit_for_bit() {
    let dir = golden_dir();
    let bless = std::env::var_os("GBM_BLESS").is_some();
    if bless {
        std::fs::create_dir_all(&dir).unwrap();
    }
    for (name, frame) in sample_frames() {
        let bytes = encode(&frame).unwrap();
        let path = dir.join(format!("{name}.frame"));
        if bless {
            std::fs::write(&path, &bytes).unwrap();
            let body: serde_json::Value = serde_json::from_slice(&bytes[4..]).unwrap();
            std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&body).unwrap() + "\n").unwrap();
        }
        let golden = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(bytes, golden, "{name} frame differs from its golden file");
        let (back, used) = decode(&golden).unwrap().unwrap();
        assert_eq!(used, golden.len());
        assert_eq!(back, frame);
    }
}

#[test]
fn golden_frames_cover_every_kind() {
    let names: Vec<&str> = sample_frames().iter().map(|(n, _)| *n).collect();
    assert_eq!(names, gbm_core::transport::frame::FRAME_KINDS);
}

async fn start() -> CosHandle {
    let cfg = CosConfig { listen: "127.0.0.1:0".into(), ..CosConfig::default() };
    serve_cos(&cfg).await.unwrap()
}

async fn next(stream: &mut TcpStream) -> Option<Frame> {
    tokio::time::timeout(Duration::from_secs(5), read_frame(stream)).await.expect("frame within 5 s").ok().flatten()
}

/// Reads until a frame satisfying `want` arrives.
async fn expect(stream: &mut TcpStream, want: impl Fn(&FrameBody) -> bool) -> Frame {
    loop {
        let f = next(stream).await.expect("connection open");
        if want(&f.body) {
            return f;
        }
    }
}

async fn write_raw(stream: &mut TcpStream, body: &[u8]) {
    stream.write_all(&(body.len() as u32).to_be_bytes()).await.unwrap();
    stream.write_all(body).await.unwrap();
}

async fn write(stream: &mut TcpStream, f: &Frame) {
    stream.write_all(&encode(f).unwrap()).await.unwrap();
}

#[tokio::test]
async fn adopt_send_and_delivery_over_tcp() {
    let cos = start().await;
    let ca = cos.hub.authority().clone();
    let inm = AgentId::new("InM", "store7", Layer::B);
    let buyer = AgentId::new("buyer", "store7", Layer::B);
    let mut s = TcpStream::connect(cos.addr).await.unwrap();

    write(&mut s, &Frame::new(FrameBody::Adopt { cert: ca.issue(&inm), law: "B".into(), pool: None })).await;
    let ack = next(&mut s).await.unwrap();
    assert_eq!(ack.body, FrameBody::Ack { agent: Some(inm.clone()), forwarded: None });
    write(&mut s, &Frame::new(FrameBody::Adopt { cert: ca.issue(&buyer), law: "buyer".into(), pool: None })).await;
    expect(&mut s, |b| matches!(b, FrameBody::Ack { agent: Some(a), .. } if *a == buyer)).await;

    let request = Payload::new("purchaseRequest", vec![Value::str("milk"), Value::Num(5.0)]);
    write(&mut s, &Frame::new(FrameBody::Send { from: inm.clone(), to: buyer.clone(), payload: request.clone() })).await;
    let delivered = expect(&mut s, |b| matches!(b, FrameBody::Event { .. })).await;
    match delivered.body {
        FrameBody::Event { agent, payload, sender, .. } => {
            assert_eq!(agent, buyer);
            assert_eq!(payload, request);
            assert_eq!(sender, Some(inm));
        }
        other => panic!("{other:?}"),
    }
    cos.shutdown();
}

#[tokio::test]
async fn forged_certificate_is_refused() {
    let cos = start().await;
    let other_ca = CertAuthority::deterministic("someone-else");
    let mut s = TcpStream::connect(cos.addr).await.unwrap();
    let inm = AgentId::new("InM", "store7", Layer::B);
    write(&mut s, &Frame::new(FrameBody::Adopt { cert: other_ca.issue(&inm), law: "B".into(), pool: None })).await;
    match next(&mut s).await.unwrap().body {
        FrameBody::Error { message } => assert!(message.starts_with("adoption refused"), "{message}"),
        other => panic!("{other:?}"),
    }
    cos.shutdown();
}

#[tokio::test]
async fn send_before_adopt_is_an_unknown_agent_and_connection_survives() {
    let cos = start().await;
    let mut s = TcpStream::connect(cos.addr).await.unwrap();
    let inm = AgentId::new("InM", "store7", Layer::B);
    let buyer = AgentId::new("buyer", "store7", Layer::B);
    write(&mut s, &Frame::new(FrameBody::Send { from: inm.clone(), to: buyer, payload: Payload::bare("ping") })).await;
    assert_eq!(next(&mut s).await.unwrap().body, FrameBody::Error { message: "unknown agent".into() });

    write_raw(&mut s, b"{not json").await;
    assert!(matches!(next(&mut s).await.unwrap().body, FrameBody::Error { message } if message.starts_with("malformed")));
    write_raw(&mut s, br#"{"v":1,"kind":"teleport"}"#).await;
    assert!(matches!(next(&mut s).await.unwrap().body, FrameBody::Error { message } if message.contains("teleport")));

    let ca = cos.hub.authority().clone();
    write(&mut s, &Frame::new(FrameBody::Adopt { cert: ca.issue(&inm), law: "B".into(), pool: None })).await;
    assert!(matches!(next(&mut s).await.unwrap().body, FrameBody::Ack { agent: Some(_), .. }));
    cos.shutdown();
}

#[tokio::test]
async fn oversize_frame_is_reported_and_closes() {
    let cos = start().await;
    let mut s = TcpStream::connect(cos.addr).await.unwrap();
    s.write_all(&((MAX_FRAME as u32) + 1).to_be_bytes()).await.unwrap();
    match next(&mut s).await.unwrap().body {
        FrameBody::Error { message } => assert!(message.contains("frame too large"), "{message}"),
        other => panic!("{other:?}"),
    }
    assert!(next(&mut s).await.is_none());
    cos.shutdown();
}

#[tokio::test]
async fn version_mismatch_is_reported_and_closes() {
    let cos = start().await;
    let mut s = TcpStream::connect(cos.addr).await.unwrap();
    write_raw(&mut s, br#"{"v":2,"kind":"ack"}"#).await;
    match next(&mut s).await.unwrap().body {
        FrameBody::Error { message } => assert!(message.contains("version"), "{message}"),
        other => panic!("{other:?}"),
    }
    assert!(next(&mut s).await.is_none());
    cos.shutdown();
}

#[tokio::test]
async fn health_is_served_by_the_gateway() {
    let cfg = CosConfig { listen: "127.0.0.1:0".into(), gateway: Some("127.0.0.1:0".into()), ..CosConfig::default() };
    let cos = serve_cos(&cfg).await.unwrap();
    let url = format!("http://{}/health", cos.gateway_addr.unwrap());
    let body: serde_json::Value = reqwest::get(&url).await.unwrap().json().await.unwrap();
    assert_eq!(body["status"], "ok");
    assert_eq!(body["protocol"], 1);
    assert_eq!(body["root"].as_str().unwrap().len(), 64);
    cos.shutdown();
}
