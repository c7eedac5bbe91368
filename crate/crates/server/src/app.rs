use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::ws::{Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot};

use hyperchat_core::analytics::{contribution_stats, SurveyResponse, SurveySet};
use hyperchat_core::config::{ClockMode, SessionConfig};
use hyperchat_core::ids::SessionId;
use hyperchat_core::lm::LanguageModel;
use hyperchat_core::session::log::{events_to_string, read_events, write_events};
use hyperchat_core::session::{Clock, Event, EventPayload, Session};

use crate::actor::{Command, SessionActor, StartInfo};
use crate::error::ApiError;
use crate::protocol::{ClientFrame, ServerFrame};

#[derive(Clone)]
struct SessionHandle {
    tx: mpsc::Sender<Command>,
}

pub struct AppState {
    sessions: RwLock<BTreeMap<String, SessionHandle>>,
    state_dir: PathBuf,
    model: Arc<dyn LanguageModel>,
    clock: Arc<dyn Clock>,
    next_conn: AtomicU64,
}

pub fn log_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.events.jsonl"))
}

fn token_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.token"))
}

fn survey_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.survey.csv"))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl AppState {
    /// Build the state and resume every session logged under `state_dir`.
    /// Must be called inside a Tokio runtime.
    pub fn open(state_dir: PathBuf, model: Arc<dyn LanguageModel>, clock: Arc<dyn Clock>) -> std::io::Result<Arc<AppState>> {
        std::fs::create_dir_all(&state_dir)?;
        let state = Arc::new(AppState { sessions: RwLock::new(BTreeMap::new()), state_dir, model, clock, next_conn: AtomicU64::new(0) });
        let mut logs: Vec<PathBuf> = std::fs::read_dir(&state.state_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".events.jsonl"))
            .collect();
        logs.sort();
        for path in logs {
            let id = path.file_name().unwrap().to_string_lossy().trim_end_matches(".events.jsonl").to_string();
            match state.resume(&id) {
                Ok(()) => tracing::info!(session = %id, "resumed session from log"),
                Err(err) => tracing::error!(session = %id, %err, "could not resume session"),
            }
        }
        Ok(state)
    }

    fn resume(&self, id: &str) -> Result<(), ApiError> {
        let events = read_events(&log_path(&self.state_dir, id)).map_err(|e| ApiError::Internal(e.to_string()))?;
        let session = Session::from_events(events).map_err(|e| ApiError::Internal(e.to_string()))?;
        let token = match std::fs::read_to_string(token_path(&self.state_dir, id)) {
            Ok(t) => t.trim().to_string(),
            Err(_) => {
                let t = uuid::Uuid::new_v4().simple().to_string();
                std::fs::write(token_path(&self.state_dir, id), &t).map_err(|e| ApiError::Internal(e.to_string()))?;
                t
            }
        };
        let survey = match std::fs::File::open(survey_path(&self.state_dir, id)) {
            Ok(f) => SurveySet::read_csv(f).map_err(|e| ApiError::Internal(e.to_string()))?,
            Err(_) => SurveySet::new(),
        };
        self.install(id, session, token, survey);
        Ok(())
    }

    fn install(&self, id: &str, session: Session, token: String, survey: SurveySet) {
        let tx = SessionActor::spawn(
            session,
            token,
            log_path(&self.state_dir, id),
            survey_path(&self.state_dir, id),
            survey,
            Arc::clone(&self.model),
            Arc::clone(&self.clock),
        );
        self.sessions.write().unwrap().insert(id.to_string(), SessionHandle { tx });
    }

    fn handle(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or_else(|| ApiError::NotFound(format!("session {id}")))
    }

    async fn ask<T>(&self, id: &str, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
        let handle = self.handle(id)?;
        let (tx, rx) = oneshot::channel();
        handle.tx.send(make(tx)).await.map_err(|_| ApiError::Internal("session task stopped".into()))?;
        rx.await.map_err(|_| ApiError::Internal("session task dropped the request".into()))
    }

    pub fn create(&self, mut config: SessionConfig) -> Result<Created, ApiError> {
        if config.clock_mode == ClockMode::Virtual {
            return Err(ApiError::Invalid("clock_mode virtual is only available in the simulator".into()));
        }
        if config.session_id.as_str().is_empty() || config.session_id == SessionConfig::default().session_id {
            config.session_id = SessionId::new(uuid::Uuid::new_v4().simple().to_string());
        }
        let id = config.session_id.to_string();
        if !valid_id(&id) {
            return Err(ApiError::BadRequest(format!("session id {id:?} must be 1-128 characters of [A-Za-z0-9_-]")));
        }
        let mut sessions = self.sessions.write().unwrap();
        if sessions.contains_key(&id) || log_path(&self.state_dir, &id).exists() {
            return Err(ApiError::Conflict(format!("session {id} already exists")));
        }
        let mut session = Session::create(config, self.clock.now_ms())?;
        let io = |e: std::io::Error| ApiError::Internal(e.to_string());
        write_events(&log_path(&self.state_dir, &id), &session.drain_new_events()).map_err(|e| ApiError::Internal(e.to_string()))?;
        let token = uuid::Uuid::new_v4().simple().to_string();
        std::fs::write(token_path(&self.state_dir, &id), &token).map_err(io)?;
        let tx = SessionActor::spawn(
            session,
            token.clone(),
            log_path(&self.state_dir, &id),
            survey_path(&self.state_dir, &id),
            SurveySet::new(),
            Arc::clone(&self.model),
            Arc::clone(&self.clock),
        );
        sessions.insert(id.clone(), SessionHandle { tx });
        Ok(Created { id, join_token: token })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Created {
    pub id: String,
    pub join_token: String,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/start", post(start_session))
        .route("/sessions/{id}/finalize", post(finalize_session))
        .route("/sessions/{id}/results", get(results))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/survey", post(submit_survey).get(survey_csv))
        .route("/ws", get(ws_upgrade))
        .with_state(state)
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let config: SessionConfig = if body.iter().all(u8::is_ascii_whitespace) {
        SessionConfig::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("config: {e}")))?
    };
    Ok((StatusCode::CREATED, Json(app.create(config)?)))
}

async fn start_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Json<StartInfo>, ApiError> {
    app.ask(&id, |reply| Command::Start { reply }).await?.map(Json)
}

async fn finalize_session(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let result = app.ask(&id, |reply| Command::Finalize { reply }).await??;
    Ok(Json(result).into_response())
}

async fn results(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let result = app.ask(&id, |reply| Command::Results { reply }).await??;
    Ok(Json(result).into_response())
}

async fn events_of(app: &AppState, id: &str) -> Result<Vec<Event>, ApiError> {
    app.ask(id, |reply| Command::Events { reply }).await
}

async fn transcript(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let events = events_of(&app, &id).await?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], events_to_string(&events)).into_response())
}

async fn metrics(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let events = events_of(&app, &id).await?;
    let duration = events
        .iter()
        .find_map(|e| match &e.payload {
            EventPayload::SessionCreated { config } => Some(f64::from(config.duration_s)),
            _ => None,
        })
        .unwrap_or(360.0);
    let stats = contribution_stats(&events, duration).map_err(|e| ApiError::Conflict(e.to_string()))?;
    Ok(Json(stats).into_response())
}

async fn submit_survey(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<Response, ApiError> {
    let is_csv = headers.get(header::CONTENT_TYPE).and_then(|v| v.to_str().ok()).is_some_and(|v| v.starts_with("text/csv"));
    let responses: Vec<SurveyResponse> = if is_csv {
        SurveySet::read_csv(body.as_ref()).map_err(|e| ApiError::BadRequest(e.to_string()))?.responses().collect()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::BadRequest(format!("survey: {e}")))?
    };
    let stored = app.ask(&id, |reply| Command::Survey { responses, reply }).await??;
    Ok(Json(serde_json::json!({ "stored": stored })).into_response())
}

async fn survey_csv(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let csv = app.ask(&id, |reply| Command::SurveyCsv { reply }).await?;
    Ok(([(header::CONTENT_TYPE, "text/csv")], csv).into_response())
}

async fn ws_upgrade(State(app): State<Arc<AppState>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| connection(app, socket))
}

async fn send_frame(sink: &mut (impl SinkExt<WsMessage> + Unpin), frame: &ServerFrame) -> bool {
    sink.send(WsMessage::Text(frame.to_text().into())).await.is_ok()
}

async fn connection(app: Arc<AppState>, socket: WebSocket) {
    let (mut sink, mut stream) = socket.split();

    // The first frame must be a join.
    let (session_id, participant, handle, conn) = loop {
        let Some(Ok(msg)) = stream.next().await else { return };
        let text = match msg {
            WsMessage::Text(t) => t,
            WsMessage::Close(_) => return,
            _ => continue,
        };
        let frame: ClientFrame = match serde_json::from_str(text.as_str()) {
            Ok(f) => f,
            Err(e) => {
                send_frame(&mut sink, &ServerFrame::error("bad_frame", e.to_string())).await;
                continue;
            }
        };
        let ClientFrame::Join { session, participant, token, last_seen } = frame else {
            send_frame(&mut sink, &ServerFrame::error("not_joined", "send a join frame first")).await;
            continue;
        };
        let handle = match app.handle(&session) {
            Ok(h) => h,
            Err(e) => {
                send_frame(&mut sink, &ServerFrame::error(e.code(), e.to_string())).await;
                continue;
            }
        };
        let conn = app.next_conn.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = mpsc::unbounded_channel();
        let own = tx.clone();
        let (reply, answer) = oneshot::channel();
        let cmd = Command::Join { participant: participant.clone(), token, last_seen, conn, tx, reply };
        if handle.tx.send(cmd).await.is_err() {
            return;
        }
        match answer.await {
            Ok(Ok(())) => break (session, participant, (handle, rx, own), conn),
            Ok(Err(e)) => {
                send_frame(&mut sink, &ServerFrame::error(e.code(), e.to_string())).await;
            }
            Err(_) => return,
        }
    };
    let (handle, mut rx, own) = handle;
    tracing::debug!(session = %session_id, %participant, "participant connected");

    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if !send_frame(&mut sink, &frame).await {
                break;
            }
        }
        let _ = sink.close().await;
    });

    // Errors for this connection go back through the writer to keep frame order.
    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            WsMessage::Text(t) => t,
            WsMessage::Close(_) => break,
            _ => continue,
        };
        let error = match serde_json::from_str::<ClientFrame>(text.as_str()) {
            Ok(ClientFrame::Message { body }) => {
                let (reply, answer) = oneshot::channel();
                if handle.tx.send(Command::Post { participant: participant.clone(), body, reply }).await.is_err() {
                    break;
                }
                match answer.await {
                    Ok(Ok(())) => None,
                    Ok(Err(e)) => Some(ServerFrame::error(e.code(), e.to_string())),
                    Err(_) => break,
                }
            }
            Ok(ClientFrame::Join { .. }) => Some(ServerFrame::error("already_joined", "this connection has already joined")),
            Err(e) => Some(ServerFrame::error("bad_frame", e.to_string())),
        };
        if let Some(frame) = error {
            let _ = own.send(frame);
        }
    }
    let _ = handle.tx.send(Command::Disconnect { participant: participant.clone(), conn }).await;
    writer.abort();
    tracing::debug!(session = %session_id, %participant, "participant disconnected");
}
