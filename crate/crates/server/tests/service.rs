use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message as WsMessage;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

use hyperchat_core::analytics::{report, SurveySet};
use hyperchat_core::lm::MockBackend;
use hyperchat_core::session::{Clock, Event, VirtualClock, WallClock};
use hyperchat_server::{router, AppState};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

async fn serve(dir: &Path, clock: Arc<dyn Clock>) -> (SocketAddr, tokio::task::JoinHandle<()>) {
    let state = AppState::open(dir.to_path_buf(), Arc::new(MockBackend), clock).unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let task = tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    (addr, task)
}

fn url(addr: SocketAddr, path: &str) -> String {
    format!("http://{addr}{path}")
}

async fn post(addr: SocketAddr, path: &str, body: Value) -> (u16, Value) {
    let resp = reqwest::Client::new().post(url(addr, path)).json(&body).send().await.unwrap();
    let status = resp.status().as_u16();
    (status, resp.json().await.unwrap_or(Value::Null))
}

async fn get(addr: SocketAddr, path: &str) -> (u16, String) {
    let resp = reqwest::get(url(addr, path)).await.unwrap();
    (resp.status().as_u16(), resp.text().await.unwrap())
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws")).await.unwrap().0
}

async fn send(ws: &mut Ws, frame: Value) {
    ws.send(WsMessage::Text(frame.to_string().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> Value {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("frame within 10 s").unwrap().unwrap();
        if let WsMessage::Text(t) = msg {
            return serde_json::from_str(t.as_str()).unwrap();
        }
    }
}

async fn recv_until(ws: &mut Ws, kind: &str) -> Vec<Value> {
    let mut seen = Vec::new();
    loop {
        let f = recv(ws).await;
        let done = f["type"] == kind;
        seen.push(f);
        if done {
            return seen;
        }
    }
}

async fn join(addr: SocketAddr, session: &str, who: &str, token: &str) -> (Ws, Value) {
    let mut ws = connect(addr).await;
    send(&mut ws, json!({"type": "join", "session": session, "participant": who, "token": token})).await;
    let first = recv(&mut ws).await;
    (ws, first)
}

fn people(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("p{i:02}")).collect()
}

#[tokio::test]
async fn rest_error_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _t) = serve(dir.path(), Arc::new(VirtualClock::new(0))).await;

    assert_eq!(get(addr, "/sessions/nope/results").await.0, 404);
    assert_eq!(post(addr, "/sessions/nope/start", json!(null)).await.0, 404);

    let (s, body) = post(addr, "/sessions", json!({"clock_mode": "virtual"})).await;
    assert_eq!(s, 422, "{body}");
    let (s, body) = post(addr, "/sessions", json!({"session_id": "big", "target_room_size": 9})).await;
    assert_eq!(s, 422);
    assert_eq!(body["error"], "invalid_config");
    assert_eq!(post(addr, "/sessions", json!({"session_id": "a b"})).await.0, 400);
    assert_eq!(post(addr, "/sessions", json!({"duration_s": "long"})).await.0, 400);

    let (s, body) = post(addr, "/sessions", json!({"session_id": "dup"})).await;
    assert_eq!(s, 201);
    assert_eq!(body["id"], "dup");
    assert!(body["join_token"].as_str().is_some_and(|t| !t.is_empty()));
    assert_eq!(post(addr, "/sessions", json!({"session_id": "dup"})).await.0, 409);

    // Nobody joined yet.
    assert_eq!(post(addr, "/sessions/dup/start", json!(null)).await.0, 409);
    assert_eq!(get(addr, "/sessions/dup/results").await.0, 409);
    assert_eq!(post(addr, "/sessions/dup/finalize", json!(null)).await.0, 409);
    let (s, _) = post(addr, "/sessions/dup/survey", json!([])).await;
    assert_eq!(s, 409);

    // Default config gets a generated id.
    let resp = reqwest::Client::new().post(url(addr, "/sessions")).send().await.unwrap();
    assert_eq!(resp.status().as_u16(), 201);
    let body: Value = resp.json().await.unwrap();
    assert_ne!(body["id"], "session");
    assert!(dir.path().join(format!("{}.events.jsonl", body["id"].as_str().unwrap())).exists());
}

#[tokio::test]
async fn full_session_over_websocket() {
    let dir = tempfile::tempdir().unwrap();
    let clock = VirtualClock::new(1_000);
    let (addr, _t) = serve(dir.path(), Arc::new(clock.clone())).await;

    let (s, created) = post(addr, "/sessions", json!({"session_id": "ws1", "question": "Which venue?", "rng_seed": 3})).await;
    assert_eq!(s, 201);
    let token = created["join_token"].as_str().unwrap().to_string();

    // Frames before join and bad tokens are answered with error frames.
    let mut stray = connect(addr).await;
    send(&mut stray, json!({"type": "message", "body": "hi"})).await;
    assert_eq!(recv(&mut stray).await["code"], "not_joined");
    send(&mut stray, json!({"type": "join", "session": "ws1", "participant": "p01", "token": "wrong"})).await;
    assert_eq!(recv(&mut stray).await["code"], "unauthorized");
    send(&mut stray, json!({"type": "join", "session": "nope", "participant": "p01", "token": token})).await;
    assert_eq!(recv(&mut stray).await["code"], "not_found");
    send(&mut stray, json!({"nonsense": true})).await;
    assert_eq!(recv(&mut stray).await["code"], "bad_frame");
    drop(stray);

    let names = people(10);
    let mut socks = Vec::new();
    for p in &names {
        let (ws, first) = join(addr, "ws1", p, &token).await;
        assert_eq!(first["type"], "joined");
        assert_eq!(first["phase"], "lobby");
        assert!(first["room"].is_null());
        socks.push(ws);
    }

    let (s, start) = post(addr, "/sessions/ws1/start", json!(null)).await;
    assert_eq!(s, 200, "{start}");
    let rooms = start["rooms"].as_array().unwrap();
    assert_eq!(rooms.len(), 2);
    assert_eq!(start["ring"].as_array().unwrap().len(), 2);
    assert_eq!(start["agents_enabled"], true);
    assert_eq!(post(addr, "/sessions/ws1/start", json!(null)).await.0, 409);

    // Everyone hears which room they are in.
    let mut room_of = Vec::new();
    for (ws, p) in socks.iter_mut().zip(&names) {
        let f = recv(ws).await;
        assert_eq!(f["type"], "joined");
        assert_eq!(f["phase"], "deliberating");
        let room = f["room"].as_u64().unwrap();
        assert!(f["roster"].as_array().unwrap().iter().any(|r| r == p.as_str()));
        assert_eq!(f["room_name"], format!("ThinkTank {}", room + 1));
        room_of.push(room);
    }

    // Late joins are refused.
    let (mut late, f) = join(addr, "ws1", "p99", &token).await;
    assert_eq!(f["type"], "error");
    assert_eq!(f["code"], "conflict");
    late.close(None).await.ok();

    for (i, ws) in socks.iter_mut().enumerate() {
        let body = if i % 2 == 0 { "PROPOSE(harbor hall, 3)" } else { "I lean SUPPORT(harbor hall, 1)" };
        send(ws, json!({"type": "message", "body": body})).await;
    }
    send(&mut socks[0], json!({"type": "message", "body": "   "})).await;

    // Wait until every room has delivered its five posts before finalizing.
    let mut seen: Vec<Vec<Value>> = Vec::new();
    for ws in socks.iter_mut() {
        let mut frames = Vec::new();
        while frames.iter().filter(|f: &&Value| f["type"] == "message").count() < 5 {
            frames.push(recv(ws).await);
        }
        seen.push(frames);
    }

    clock.advance_to(20_000);
    let (s, result) = post(addr, "/sessions/ws1/finalize", json!(null)).await;
    assert_eq!(s, 200, "{result}");
    assert_eq!(result["winner"]["label"], "harbor hall");
    assert_eq!(result["roster_size"], 10);

    for (i, ws) in socks.iter_mut().enumerate() {
        let mut frames = std::mem::take(&mut seen[i]);
        frames.extend(recv_until(ws, "session_end").await);
        let messages: Vec<&Value> = frames.iter().filter(|f| f["type"] == "message").collect();
        // Five people per room posted once each.
        assert_eq!(messages.len(), 5, "{frames:?}");
        for m in &messages {
            assert_eq!(m["room"].as_u64().unwrap(), room_of[i]);
            assert_eq!(m["author"]["kind"], "participant");
        }
        if i == 0 {
            assert!(frames.iter().any(|f| f["type"] == "error" && f["code"] == "bad_request"));
        }
        assert_eq!(frames.last().unwrap()["result"], result);
    }

    // Finalize is idempotent and results match.
    assert_eq!(post(addr, "/sessions/ws1/finalize", json!(null)).await.1, result);
    let (s, body) = get(addr, "/sessions/ws1/results").await;
    assert_eq!(s, 200);
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap(), result);

    // Transcript is the event log.
    let resp = reqwest::get(url(addr, "/sessions/ws1/transcript")).await.unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let events: Vec<Event> = resp.text().await.unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(events.first().unwrap().payload.kind(), "session_created");
    assert_eq!(events.last().unwrap().payload.kind(), "finalized");
    let on_disk = std::fs::read_to_string(dir.path().join("ws1.events.jsonl")).unwrap();
    assert_eq!(on_disk.lines().count(), events.len());

    let (s, metrics) = get(addr, "/sessions/ws1/metrics").await;
    assert_eq!(s, 200);
    let metrics: Value = serde_json::from_str(&metrics).unwrap();
    assert_eq!(metrics["messages_per_minute"]["n"], 10, "{metrics}");
    assert_eq!(metrics["per_participant"].as_object().unwrap().len(), 10);

    // Reconnecting with last_seen replays only newer room messages.
    let first_id = events
        .iter()
        .find_map(|e| match &e.payload {
            hyperchat_core::session::EventPayload::Message { message } if u64::from(message.room.0) == room_of[0] => Some(message.message_id.0),
            _ => None,
        })
        .unwrap();
    let mut again = connect(addr).await;
    send(&mut again, json!({"type": "join", "session": "ws1", "participant": "p01", "token": token, "last_seen": first_id})).await;
    let frames = recv_until(&mut again, "session_end").await;
    assert_eq!(frames[0]["type"], "joined");
    assert_eq!(frames[0]["phase"], "finalized");
    let replayed: Vec<u64> = frames.iter().filter(|f| f["type"] == "message").map(|f| f["message_id"].as_u64().unwrap()).collect();
    assert_eq!(replayed.len(), 4);
    assert!(replayed.iter().all(|id| *id > first_id));

    // Survey: JSON rows, CSV rows, overwrite, unknown participant.
    let rows: Vec<Value> = names
        .iter()
        .map(|p| json!({"participant": p, "question": "preferred_structure", "answer": "swarm_by_a_lot"}))
        .collect();
    let (s, body) = post(addr, "/sessions/ws1/survey", Value::Array(rows)).await;
    assert_eq!(s, 200);
    assert_eq!(body["stored"], 10);
    let csv = "participant,question,answer\np01,preferred_structure,chat_by_a_little\np02,felt_heard,no_preference\n";
    let resp = reqwest::Client::new()
        .post(url(addr, "/sessions/ws1/survey"))
        .header("content-type", "text/csv")
        .body(csv)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let (s, _) = post(addr, "/sessions/ws1/survey", json!([{"participant": "zz", "question": "felt_heard", "answer": "no_preference"}])).await;
    assert_eq!(s, 400);
    let (s, _) = post(addr, "/sessions/ws1/survey", json!([{"participant": "p01", "question": "felt_heard", "answer": "maybe"}])).await;
    assert_eq!(s, 400);

    let (s, stored) = get(addr, "/sessions/ws1/survey").await;
    assert_eq!(s, 200);
    let set = SurveySet::read_csv(stored.as_bytes()).unwrap();
    assert_eq!(set.len(), 11);
    let on_disk = SurveySet::read_csv(std::fs::File::open(dir.path().join("ws1.survey.csv")).unwrap()).unwrap();
    assert_eq!(on_disk, set);

    // The stored survey feeds the analysis.
    let rep = report(&events, &events, Some(&set)).unwrap();
    let summaries = rep.survey.unwrap();
    let pref = summaries.iter().find(|q| q.question == "preferred_structure").unwrap();
    assert_eq!(pref.n, 10);
    assert_eq!(pref.in_favor, 9);
}

#[tokio::test]
async fn restart_resumes_sessions_from_state_dir() {
    let dir = tempfile::tempdir().unwrap();
    let clock = VirtualClock::new(0);
    let token;
    {
        let (addr, task) = serve(dir.path(), Arc::new(clock.clone())).await;
        let (_, created) = post(addr, "/sessions", json!({"session_id": "keep", "target_room_size": 4})).await;
        token = created["join_token"].as_str().unwrap().to_string();
        for p in people(4) {
            let (_ws, f) = join(addr, "keep", &p, &token).await;
            assert_eq!(f["type"], "joined");
        }
        task.abort();
    }
    // Give the actor a moment to flush joins.
    tokio::time::sleep(Duration::from_millis(100)).await;

    let (addr, _t) = serve(dir.path(), Arc::new(clock.clone())).await;
    let (s, start) = post(addr, "/sessions/keep/start", json!(null)).await;
    assert_eq!(s, 200, "{start}");
    assert_eq!(start["rooms"][0]["members"].as_array().unwrap().len(), 4);
    assert_eq!(start["agents_enabled"], false);

    let (mut ws, f) = join(addr, "keep", "p02", &token).await;
    assert_eq!(f["phase"], "deliberating");
    send(&mut ws, json!({"type": "message", "body": "PROPOSE(green room, 2)"})).await;
    assert_eq!(recv(&mut ws).await["body"], "PROPOSE(green room, 2)");

    clock.advance_to(5_000);
    let (s, result) = post(addr, "/sessions/keep/finalize", json!(null)).await;
    assert_eq!(s, 200);
    assert_eq!(result["winner"]["label"], "green room");
    assert_eq!(result["roster_size"], 4);
}

#[tokio::test]
async fn session_ends_on_its_own_at_the_deadline() {
    let dir = tempfile::tempdir().unwrap();
    let clock: Arc<dyn Clock> = Arc::new(WallClock::new());
    let (addr, _t) = serve(dir.path(), clock).await;
    let (_, created) = post(addr, "/sessions", json!({"session_id": "short", "duration_s": 1})).await;
    let token = created["join_token"].as_str().unwrap().to_string();
    let mut socks = Vec::new();
    for p in people(4) {
        socks.push(join(addr, "short", &p, &token).await.0);
    }
    assert_eq!(post(addr, "/sessions/short/start", json!(null)).await.0, 200);
    send(&mut socks[0], json!({"type": "message", "body": "PROPOSE(tea, 3)"})).await;
    let frames = recv_until(&mut socks[3], "session_end").await;
    assert_eq!(frames.last().unwrap()["result"]["winner"]["label"], "tea");
    let (s, _) = get(addr, "/sessions/short/results").await;
    assert_eq!(s, 200);
}
