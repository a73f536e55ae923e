//! The manager gateway's HTTP and server-sent-event contract.
//!
//! Response bodies are compared with golden files after zeroing every `t`
//! field. Set `GBM_BLESS=1` to rewrite them.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use futures::StreamExt;
use gbm_core::engine::{AgentId, Layer, Payload};
use gbm_core::runtime::Record;
use gbm_core::transport::{serve_cos, CosConfig, CosHandle, Hub, TokenConfig};
use gbm_core::Value;
use serde_json::{json, Value as Json};

fn token(token: &str, manager: &str, branch: &str, role: &str) -> TokenConfig {
    TokenConfig { token: token.into(), manager: manager.into(), branch: branch.into(), role: role.into() }
}

fn config() -> CosConfig {
    CosConfig {
        listen: "127.0.0.1:0".into(),
        gateway: Some("127.0.0.1:0".into()),
        heartbeat_ms: 200,
        tokens: vec![
            token("op7", "mgr7", "store7", "operator"),
            token("obs7", "obs7", "store7", "observer"),
            token("op7b", "ops7", "store7", "operator"),
            token("op9", "mgr9", "store9", "operator"),
        ],
        ..CosConfig::default()
    }
}

fn b(name: &str, branch: &str) -> AgentId {
    AgentId::new(name, branch, Layer::B)
}

/// Adopts both branches' components and gives store7's buyer a budget of
/// 1000 and one filled order of 400.
fn populate(hub: &Arc<Hub>) {
    let ca = hub.authority().clone();
    for branch in ["store7", "store9"] {
        hub.adopt(&ca.issue(&b("InM", branch)), "B", None, None).unwrap();
        hub.adopt(&ca.issue(&b("buyer", branch)), "buyer", None, None).unwrap();
        hub.adopt(&ca.issue(&b("BuO", branch)), "B", None, None).unwrap();
    }
    hub.adopt(&ca.issue(&b("vendor1", "vendors")), "B", None, None).unwrap();
    let (inm, buyer, buo) = (b("InM", "store7"), b("buyer", "store7"), b("BuO", "store7"));
    hub.send(&buo, &buyer, Payload::new("budget", vec![Value::Num(1000.0)])).unwrap();
    hub.send(&inm, &buyer, Payload::new("purchaseRequest", vec![Value::str("milk"), Value::Num(60.0)])).unwrap();
    let po = Payload::new("PO", vec![Value::str("milk"), Value::Num(60.0), Value::Num(400.0)]);
    assert!(hub.send(&buyer, &b("vendor1", "vendors"), po).unwrap().forwarded);
}

async fn start() -> (CosHandle, String) {
    let cos = serve_cos(&config()).await.unwrap();
    populate(&cos.hub);
    let base = format!("http://{}", cos.gateway_addr.unwrap());
    (cos, base)
}

fn zero_times(v: &mut Json) {
    match v {
        Json::Object(m) => {
            for (k, x) in m.iter_mut() {
                if k == "t" {
                    *x = json!(0);
                } else {
                    zero_times(x);
                }
            }
        }
        Json::Array(a) => a.iter_mut().for_each(zero_times),
        _ => {}
    }
}

fn golden(name: &str, status: u16, mut body: Json) {
    zero_times(&mut body);
    let doc = json!({"status": status, "body": body});
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/gateway").join(format!("{name}.json"));
    if std::env::var_os("GBM_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n").unwrap();
    }
    let want: Json = serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap();
    assert_eq!(doc, want, "{name} differs from its golden file");
}

async fn post(base: &str, tok: &str, path: &str, body: Json) -> (u16, Json) {
    let r = reqwest::Client::new().post(format!("{base}{path}")).bearer_auth(tok).json(&body).send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

async fn get(base: &str, tok: Option<&str>, path: &str) -> (u16, Json) {
    let mut req = reqwest::Client::new().get(format!("{base}{path}"));
    if let Some(t) = tok {
        req = req.bearer_auth(t);
    }
    let r = req.send().await.unwrap();
    (r.status().as_u16(), r.json().await.unwrap())
}

fn target(name: &str, branch: &str) -> Json {
    serde_json::to_value(b(name, branch)).unwrap()
}

#[tokio::test]
async fn session_components_and_examine() {
    let (cos, base) = start().await;
    let (s, body) = get(&base, Some("op7"), "/v1/session").await;
    golden("session", s, body);
    let (s, body) = get(&base, Some("op7"), "/v1/components").await;
    golden("components", s, body);
    let (s, body) = post(&base, "op7", "/v1/examine", json!({"target": target("buyer", "store7"), "property": "budget"})).await;
    assert_eq!(body["value"].as_f64(), Some(600.0));
    golden("examine_budget", s, body);
    let (s, body) = post(&base, "op7", "/v1/examine", json!({"target": target("buyer", "store7"), "property": "POcount"})).await;
    assert_eq!((s, body["value"].as_f64()), (200, Some(1.0)));
    cos.shutdown();
}

#[tokio::test]
async fn denials_mirror_the_audit() {
    let (cos, base) = start().await;
    let (s, body) = post(&base, "obs7", "/v1/invoke", json!({"target": target("InM", "store7"), "operation": "remove"})).await;
    assert_eq!((s, body["reason"].as_str()), (403, Some("role")));
    golden("invoke_observer_denied", s, body);

    let (s, body) = post(&base, "op7", "/v1/examine", json!({"target": target("buyer", "store9"), "property": "budget"})).await;
    assert_eq!((s, body["reason"].as_str()), (403, Some("purview")));
    golden("examine_cross_branch_denied", s, body);

    let (s, body) = post(&base, "op7", "/v1/invoke", json!({"target": target("InM", "store7"), "operation": "remove"})).await;
    assert_eq!((s, body["reason"].as_str()), (403, Some("token")));
    golden("invoke_without_token_denied", s, body);

    let (s, body) = get(&base, None, "/v1/session").await;
    golden("unauthenticated", s, body);
    cos.shutdown();
}

#[tokio::test]
async fn coordination_through_two_sessions() {
    let (cos, base) = start().await;
    let inm = target("InM", "store7");
    let (s, body) = post(&base, "op7", "/v1/acquire", json!({"target": inm, "operation": "remove"})).await;
    golden("acquire_granted", s, body);
    let (s, body) = post(&base, "op7b", "/v1/acquire", json!({"target": inm, "operation": "remove"})).await;
    assert_eq!(body["holder"], serde_json::to_value(AgentId::new("mgr7", "store7", Layer::M)).unwrap());
    golden("acquire_refused", s, body);
    let (s, body) = post(&base, "op7", "/v1/invoke", json!({"target": inm, "operation": "remove"})).await;
    golden("invoke_remove_done", s, body);
    let (s, _) = post(&base, "op7b", "/v1/invoke", json!({"target": inm, "operation": "remove"})).await;
    assert_eq!(s, 403);

    let (s, body) = get(&base, Some("obs7"), "/v1/audit?kind=managerMsg&limit=3").await;
    assert_eq!(s, 200);
    assert_eq!(body["records"].as_array().unwrap().len(), 3);
    assert!(body["records"].as_array().unwrap().iter().all(|r| r["kind"] == "managerMsg"));
    golden("audit_manager_messages", s, body);
    cos.shutdown();
}

/// Reads the SSE stream until a `message` event arrives or `within` passes.
async fn first_message(
    stream: &mut (impl futures::Stream<Item = reqwest::Result<Vec<u8>>> + Unpin),
    within: Duration,
) -> Option<(Json, usize)> {
    let deadline = Instant::now() + within;
    let mut buf = String::new();
    let mut heartbeats = 0;
    while Instant::now() < deadline {
        let chunk = match tokio::time::timeout(deadline - Instant::now(), stream.next()).await {
            Ok(Some(Ok(c))) => c,
            _ => return None,
        };
        buf.push_str(&String::from_utf8_lossy(&chunk));
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            let event = block.lines().find_map(|l| l.strip_prefix("event:")).map(str::trim);
            let data = block.lines().find_map(|l| l.strip_prefix("data:")).map(str::trim);
            match (event, data) {
                (Some("message"), Some(d)) => return Some((serde_json::from_str(d).unwrap(), heartbeats)),
                (Some("heartbeat"), _) => heartbeats += 1,
                _ => {}
            }
        }
    }
    None
}

#[tokio::test]
async fn subscribed_low_budget_event_is_pushed_once() {
    let (cos, base) = start().await;
    let buyer = target("buyer", "store7");
    let (s, body) = post(&base, "op7", "/v1/subscribe", json!({"target": buyer, "event": "lawBudget"})).await;
    golden("subscribe", s, body);

    let resp = reqwest::Client::new().get(format!("{base}/v1/events")).bearer_auth("op7").send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let mut stream = Box::pin(resp.bytes_stream().map(|r| r.map(|b| b.to_vec())));

    let hub = cos.hub.clone();
    let (inm, buyer_id) = (b("InM", "store7"), b("buyer", "store7"));
    hub.send(&inm, &buyer_id, Payload::new("purchaseRequest", vec![Value::str("bread"), Value::Num(40.0)])).unwrap();
    let crossing = Payload::new("PO", vec![Value::str("bread"), Value::Num(40.0), Value::Num(550.0)]);
    let sent_at = Instant::now();
    assert!(hub.send(&buyer_id, &b("vendor1", "vendors"), crossing).unwrap().forwarded);

    let (msg, _) = first_message(&mut stream, Duration::from_secs(1)).await.expect("pushed within one second");
    assert!(sent_at.elapsed() <= Duration::from_secs(1));
    assert_eq!(msg["payload"]["kind"], "lawBudget");
    assert_eq!(msg["payload"]["args"][0].as_f64(), Some(50.0));
    assert_eq!(msg["sender"], buyer);
    let mut normalized = msg.clone();
    zero_times(&mut normalized);
    golden("event_law_budget", 200, normalized);
    assert!(first_message(&mut stream, Duration::from_millis(600)).await.is_none(), "exactly one emission");
    cos.shutdown();
}

/// Replays the same request matrix through the gateway and directly
/// against an identically configured hub; every outcome must agree.
#[tokio::test]
async fn gateway_adds_no_authority() {
    let (cos, base) = start().await;
    let direct = Hub::from_config(&config()).unwrap();
    populate(&direct);
    let managers = [("op7", "mgr7", "store7"), ("obs7", "obs7", "store7"), ("op9", "mgr9", "store9")];
    let targets = [b("InM", "store7"), b("buyer", "store7"), b("buyer", "store9"), b("BuO", "store9")];
    let requests = [
        ("examine", "budget"),
        ("examine", "inflow"),
        ("examine", "queueLength"),
        ("acquire", "remove"),
        ("invoke", "remove"),
        ("invoke", "resync"),
        ("release", "remove"),
        ("subscribe", "lawBudget"),
        ("subscribe", "secrets"),
    ];
    let mut compared = 0;
    for (tok, name, branch) in managers {
        let me = AgentId::new(name, branch, Layer::M);
        for t in &targets {
            for (form, arg) in requests {
                let (status, body) = post(&base, tok, &format!("/v1/{form}"), json!({"target": t, "name": arg})).await;
                let step = direct.send(&me, t, Payload::new(form, vec![Value::str(arg)])).unwrap();
                let reply = step.records.iter().find_map(|r| match r {
                    Record::Deliver { agent, payload, .. } if *agent == me => Some(payload.clone()),
                    _ => None,
                });
                let gateway_reply = body.get("reply").map(|r| serde_json::from_value::<Payload>(r.clone()).unwrap());
                assert_eq!(gateway_reply, reply, "{tok} {form}({arg}) -> {t:?}: {body}");
                assert_eq!(status == 403, reply.is_none() && body["status"] == "denied", "{tok} {form}({arg}) -> {t:?}: {body}");
                compared += 1;
            }
        }
    }
    assert_eq!(compared, 3 * 4 * 9);
    cos.shutdown();
}
