//! One task per session. It owns the engine, the log file and the live
//! connections; every mutation arrives as a [`Command`] or a job completion.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use tokio::sync::{mpsc, oneshot};

use hyperchat_core::analytics::{SurveyResponse, SurveySet};
use hyperchat_core::ids::{MessageId, ParticipantId, RoomId};
use hyperchat_core::lm::LanguageModel;
use hyperchat_core::partition::RoomPlan;
use hyperchat_core::preference::SessionResult;
use hyperchat_core::session::log::append_events;
use hyperchat_core::session::{Clock, Event, EventPayload, Job, JobOutput, Phase, Session, SessionError};

use crate::error::ApiError;
use crate::protocol::ServerFrame;

pub type ConnTx = mpsc::UnboundedSender<ServerFrame>;
type Reply<T> = oneshot::Sender<Result<T, ApiError>>;

#[derive(Debug, Clone, serde::Serialize)]
pub struct RoomInfo {
    pub room: RoomId,
    pub name: String,
    pub members: Vec<ParticipantId>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct StartInfo {
    pub rooms: Vec<RoomInfo>,
    /// Rooms in ring order; each hears from the one before it.
    pub ring: Vec<RoomId>,
    pub agents_enabled: bool,
    pub ends_at_ms: u64,
}

pub enum Command {
    Join { participant: ParticipantId, token: String, last_seen: Option<MessageId>, conn: u64, tx: ConnTx, reply: Reply<()> },
    Post { participant: ParticipantId, body: String, reply: Reply<()> },
    Disconnect { participant: ParticipantId, conn: u64 },
    Start { reply: Reply<StartInfo> },
    Finalize { reply: Reply<SessionResult> },
    Results { reply: Reply<SessionResult> },
    Events { reply: oneshot::Sender<Vec<Event>> },
    Survey { responses: Vec<SurveyResponse>, reply: Reply<usize> },
    SurveyCsv { reply: oneshot::Sender<String> },
}

pub struct SessionActor {
    session: Session,
    token: String,
    log_path: PathBuf,
    survey_path: PathBuf,
    survey: SurveySet,
    model: Arc<dyn LanguageModel>,
    clock: Arc<dyn Clock>,
    conns: BTreeMap<ParticipantId, BTreeMap<u64, ConnTx>>,
    finalize_waiters: Vec<Reply<SessionResult>>,
    job_tx: mpsc::UnboundedSender<JobOutput>,
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::InvalidConfig(c) => ApiError::Invalid(c.to_string()),
            SessionError::UnknownParticipant(_) | SessionError::EmptyBody | SessionError::UnknownRoom(_) => ApiError::BadRequest(e.to_string()),
            other => ApiError::Conflict(other.to_string()),
        }
    }
}

impl SessionActor {
    #[allow(clippy::too_many_arguments)]
    pub fn spawn(
        session: Session,
        token: String,
        log_path: PathBuf,
        survey_path: PathBuf,
        survey: SurveySet,
        model: Arc<dyn LanguageModel>,
        clock: Arc<dyn Clock>,
    ) -> mpsc::Sender<Command> {
        let (tx, rx) = mpsc::channel(1024);
        let (job_tx, job_rx) = mpsc::unbounded_channel();
        let actor = SessionActor {
            session,
            token,
            log_path,
            survey_path,
            survey,
            model,
            clock,
            conns: BTreeMap::new(),
            finalize_waiters: Vec::new(),
            job_tx,
        };
        tokio::spawn(actor.run(rx, job_rx));
        tx
    }

    fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    async fn run(mut self, mut rx: mpsc::Receiver<Command>, mut job_rx: mpsc::UnboundedReceiver<JobOutput>) {
        // A resumed session may have timers already due.
        let jobs = self.session.advance(self.now());
        self.spawn_jobs(jobs);
        self.flush();
        loop {
            let deadline = self.session.next_deadline();
            let wait = deadline.map(|t| Duration::from_millis(t.saturating_sub(self.now())));
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.handle(cmd),
                    None => break,
                },
                Some(out) = job_rx.recv() => {
                    let jobs = self.session.complete(out, self.now());
                    self.spawn_jobs(jobs);
                }
                _ = tokio::time::sleep(wait.unwrap_or_default()), if wait.is_some() => {
                    let jobs = self.session.advance(self.now());
                    self.spawn_jobs(jobs);
                }
            }
            self.flush();
        }
    }

    fn spawn_jobs(&self, jobs: Vec<Job>) {
        for job in jobs {
            let model = Arc::clone(&self.model);
            let tx = self.job_tx.clone();
            tokio::task::spawn_blocking(move || {
                let _ = tx.send(job.run(model.as_ref()));
            });
        }
    }

    /// Persist new events and deliver them to the right connections.
    fn flush(&mut self) {
        let events = self.session.drain_new_events();
        if events.is_empty() {
            return;
        }
        if let Err(err) = append_events(&self.log_path, &events) {
            tracing::error!(path = %self.log_path.display(), %err, "failed to append to event log");
        }
        for e in &events {
            match &e.payload {
                EventPayload::Message { message } | EventPayload::SurrogatePosted { message, .. } => {
                    let frame = ServerFrame::message(message);
                    let members = self.session.state().rooms.get(&message.room).map(|r| r.members.clone()).unwrap_or_default();
                    for member in &members {
                        self.send_to(member, &frame);
                    }
                }
                EventPayload::DeliberationStarted { .. } => {
                    let participants: Vec<ParticipantId> = self.conns.keys().cloned().collect();
                    for p in participants {
                        let frame = self.joined_frame(&p);
                        self.send_to(&p, &frame);
                    }
                }
                EventPayload::Finalized { result } => {
                    let frame = ServerFrame::SessionEnd { result: result.clone() };
                    let participants: Vec<ParticipantId> = self.conns.keys().cloned().collect();
                    for p in participants {
                        self.send_to(&p, &frame);
                    }
                    for w in self.finalize_waiters.drain(..) {
                        let _ = w.send(Ok(result.clone()));
                    }
                }
                _ => {}
            }
        }
    }

    fn send_to(&mut self, participant: &ParticipantId, frame: &ServerFrame) {
        if let Some(conns) = self.conns.get_mut(participant) {
            conns.retain(|_, tx| tx.send(frame.clone()).is_ok());
        }
    }

    fn joined_frame(&self, participant: &ParticipantId) -> ServerFrame {
        let state = self.session.state();
        let room = state.room_of(participant);
        let roster = match room {
            Some(r) => state.rooms[&r].members.iter().cloned().collect(),
            None => state.roster.iter().cloned().collect(),
        };
        ServerFrame::Joined {
            session: state.config.session_id.to_string(),
            room,
            room_name: room.map(RoomId::display_name),
            roster,
            phase: state.phase,
        }
    }

    fn handle(&mut self, cmd: Command) {
        let now = self.now();
        match cmd {
            Command::Join { participant, token, last_seen, conn, tx, reply } => {
                if token != self.token {
                    let _ = reply.send(Err(ApiError::Unauthorized));
                    return;
                }
                if let Err(e) = self.session.join(participant.clone(), now) {
                    let _ = reply.send(Err(e.into()));
                    return;
                }
                let _ = tx.send(self.joined_frame(&participant));
                let state = self.session.state();
                if let Some(room) = state.room_of(&participant) {
                    let after = last_seen.map(|m| m.0);
                    for m in state.rooms[&room].messages.iter().filter(|m| after.is_none_or(|a| m.message_id.0 > a)) {
                        let _ = tx.send(ServerFrame::message(m));
                    }
                }
                if let Some(result) = self.session.result() {
                    let _ = tx.send(ServerFrame::SessionEnd { result: result.clone() });
                }
                self.conns.entry(participant).or_default().insert(conn, tx);
                let _ = reply.send(Ok(()));
            }
            Command::Post { participant, body, reply } => {
                let r = self.session.post_message(&participant, &body, now).map(|(_, jobs)| self.spawn_jobs(jobs));
                let _ = reply.send(r.map_err(ApiError::from));
            }
            Command::Disconnect { participant, conn } => {
                if let Some(conns) = self.conns.get_mut(&participant) {
                    conns.remove(&conn);
                    if conns.is_empty() {
                        self.conns.remove(&participant);
                    }
                }
            }
            Command::Start { reply } => {
                let r = self.session.start(now).cloned();
                let _ = reply.send(r.map(|plan| self.start_info(&plan)).map_err(ApiError::from));
                let jobs = self.session.advance(now);
                self.spawn_jobs(jobs);
            }
            Command::Finalize { reply } => {
                if let Some(result) = self.session.result() {
                    let _ = reply.send(Ok(result.clone()));
                    return;
                }
                if self.session.phase() != Phase::Deliberating {
                    let _ = reply.send(Err(ApiError::Conflict(format!("cannot finalize in phase {:?}", self.session.phase()))));
                    return;
                }
                let jobs = self.session.begin_finalize(now);
                self.spawn_jobs(jobs);
                match self.session.result() {
                    Some(result) => {
                        let _ = reply.send(Ok(result.clone()));
                    }
                    None => self.finalize_waiters.push(reply),
                }
            }
            Command::Results { reply } => {
                let r = self.session.result().cloned().ok_or_else(|| ApiError::Conflict("session is not finalized".into()));
                let _ = reply.send(r);
            }
            Command::Events { reply } => {
                let _ = reply.send(self.session.events().to_vec());
            }
            Command::Survey { responses, reply } => {
                let _ = reply.send(self.store_survey(responses));
            }
            Command::SurveyCsv { reply } => {
                let mut buf = Vec::new();
                let _ = self.survey.write_csv(&mut buf);
                let _ = reply.send(String::from_utf8(buf).unwrap_or_default());
            }
        }
    }

    fn start_info(&self, plan: &RoomPlan) -> StartInfo {
        let state = self.session.state();
        StartInfo {
            rooms: plan
                .rooms
                .iter()
                .map(|r| RoomInfo { room: *r, name: r.display_name(), members: plan.members(*r).into_iter().collect() })
                .collect(),
            ring: state.topology.as_ref().map(|t| t.order.clone()).unwrap_or_default(),
            agents_enabled: state.agents_enabled(),
            ends_at_ms: state.end_at_ms().unwrap_or_default(),
        }
    }

    fn store_survey(&mut self, responses: Vec<SurveyResponse>) -> Result<usize, ApiError> {
        if self.session.phase() != Phase::Finalized {
            return Err(ApiError::Conflict("surveys open once the session is finalized".into()));
        }
        let roster = &self.session.state().roster;
        if let Some(r) = responses.iter().find(|r| !roster.contains(&r.participant)) {
            return Err(ApiError::BadRequest(format!("{} is not in this session", r.participant)));
        }
        let mut next = self.survey.clone();
        for r in responses.iter().cloned() {
            next.insert(r).map_err(|e| ApiError::BadRequest(e.to_string()))?;
        }
        let mut buf = Vec::new();
        next.write_csv(&mut buf).map_err(|e| ApiError::Internal(e.to_string()))?;
        std::fs::write(&self.survey_path, buf).map_err(|e| ApiError::Internal(e.to_string()))?;
        self.survey = next;
        Ok(responses.len())
    }
}
