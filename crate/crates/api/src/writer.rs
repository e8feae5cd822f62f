//! One writer thread per session. Commands arrive over a channel and are
//! applied one at a time; readers only ever see whole snapshots published
//! after the events are on disk.

use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use setpoint_core::session::{Clock, Decision, EventLog, ReportAck, Session, SessionError};
use setpoint_core::{ComfortType, OccupantId};
use tokio::sync::{oneshot, watch};

use crate::auth::Credentials;
use crate::ApiError;

/// Pause before retrying a timed close or open that failed.
const RETRY_MS: i64 = 1_000;

type Reply<T> = oneshot::Sender<Result<T, SessionError>>;

enum Command {
    OpenRound(Reply<()>),
    CloseRound(Reply<Decision>),
    Submit {
        occupant: OccupantId,
        comfort_type: ComfortType,
        reply: Reply<ReportAck>,
    },
}

pub struct SessionHandle {
    id: String,
    credentials: Credentials,
    commands: Mutex<Option<mpsc::Sender<Command>>>,
    snapshot: watch::Receiver<Arc<Session>>,
    thread: Mutex<Option<JoinHandle<()>>>,
}

impl SessionHandle {
    /// Start the writer. With `auto_advance` the writer opens a round right
    /// away and closes and reopens rounds at each deadline.
    pub fn spawn(
        session: Session,
        log: Option<EventLog>,
        credentials: Credentials,
        clock: Arc<dyn Clock>,
        auto_advance: bool,
    ) -> Self {
        let id = session.id().to_string();
        let (tx, rx) = mpsc::channel();
        let current = Arc::new(session);
        let (publish, snapshot) = watch::channel(current.clone());
        let mut writer = Writer {
            current,
            log,
            publish,
            clock,
            retry_at: i64::MIN,
        };
        let thread = std::thread::Builder::new()
            .name(format!("session-{}", &id[..id.len().min(8)]))
            .spawn(move || writer.run(rx, auto_advance))
            .expect("spawn session writer");
        Self {
            id,
            credentials,
            commands: Mutex::new(Some(tx)),
            snapshot,
            thread: Mutex::new(Some(thread)),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn credentials(&self) -> &Credentials {
        &self.credentials
    }

    /// The latest committed state.
    pub fn snapshot(&self) -> Arc<Session> {
        self.snapshot.borrow().clone()
    }

    /// Notified after each commit. Closed once the writer stops.
    pub fn subscribe(&self) -> watch::Receiver<Arc<Session>> {
        self.snapshot.clone()
    }

    pub async fn open_round(&self) -> Result<(), ApiError> {
        self.send(Command::OpenRound).await
    }

    pub async fn close_round(&self) -> Result<Decision, ApiError> {
        self.send(Command::CloseRound).await
    }

    pub async fn submit_report(
        &self,
        occupant: OccupantId,
        comfort_type: ComfortType,
    ) -> Result<ReportAck, ApiError> {
        self.send(|reply| Command::Submit {
            occupant,
            comfort_type,
            reply,
        })
        .await
    }

    async fn send<T>(&self, make: impl FnOnce(Reply<T>) -> Command) -> Result<T, ApiError> {
        let (reply, response) = oneshot::channel();
        let stopped = || {
            ApiError::new(
                axum::http::StatusCode::SERVICE_UNAVAILABLE,
                "shutting_down",
                "session is stopped",
            )
        };
        {
            let guard = self.commands.lock().expect("command lock");
            let tx = guard.as_ref().ok_or_else(stopped)?;
            tx.send(make(reply)).map_err(|_| stopped())?;
        }
        response
            .await
            .map_err(|_| stopped())?
            .map_err(ApiError::from)
    }

    /// Stop accepting commands, let queued ones finish and wait for the
    /// writer to exit. Open event streams end afterwards.
    pub fn stop(&self) {
        self.commands.lock().expect("command lock").take();
        if let Some(thread) = self.thread.lock().expect("thread lock").take() {
            let _ = thread.join();
        }
    }
}

impl Drop for SessionHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

struct Writer {
    current: Arc<Session>,
    log: Option<EventLog>,
    publish: watch::Sender<Arc<Session>>,
    clock: Arc<dyn Clock>,
    retry_at: i64,
}

impl Writer {
    fn run(&mut self, rx: mpsc::Receiver<Command>, auto_advance: bool) {
        if auto_advance && self.current.state().open_round().is_none() {
            self.advance();
        }
        loop {
            let deadline = auto_advance
                .then(|| self.current.state().open_round().map(|r| r.deadline_ms))
                .flatten();
            let command = match deadline {
                Some(d) => {
                    let wait = (d.max(self.retry_at) - self.clock.now_ms()).max(0) as u64;
                    match rx.recv_timeout(Duration::from_millis(wait)) {
                        Ok(c) => c,
                        Err(RecvTimeoutError::Timeout) => {
                            self.advance();
                            continue;
                        }
                        Err(RecvTimeoutError::Disconnected) => break,
                    }
                }
                None => match rx.recv() {
                    Ok(c) => c,
                    Err(_) => break,
                },
            };
            self.handle(command);
        }
    }

    fn handle(&mut self, command: Command) {
        let now = self.clock.now_ms();
        match command {
            Command::OpenRound(reply) => {
                let _ = reply.send(self.commit(|s| s.open_round(now).map(|_| ())));
            }
            Command::CloseRound(reply) => {
                let _ = reply.send(self.commit(|s| s.close_round(now).cloned()));
            }
            Command::Submit {
                occupant,
                comfort_type,
                reply,
            } => {
                let _ = reply.send(self.commit(|s| s.submit_report(&occupant, comfort_type, now)));
            }
        }
    }

    /// Close the open round if any, then open the next.
    fn advance(&mut self) {
        let now = self.clock.now_ms();
        if self.current.state().open_round().is_some() {
            if let Err(e) = self.commit(|s| s.close_round(now).map(|_| ())) {
                tracing::warn!(session = self.current.id(), error = %e, "timed close failed");
                self.retry_at = now + RETRY_MS;
                return;
            }
        }
        if let Err(e) = self.commit(|s| s.open_round(now).map(|_| ())) {
            tracing::warn!(session = self.current.id(), error = %e, "timed open failed");
            self.retry_at = now + RETRY_MS;
        }
    }

    /// Apply a command to a copy, persist its events, then publish. A failed
    /// write leaves the published state untouched.
    fn commit<T>(
        &mut self,
        f: impl FnOnce(&mut Session) -> Result<T, SessionError>,
    ) -> Result<T, SessionError> {
        let mut next = Session::clone(&self.current);
        let before = next.last_seq();
        let out = f(&mut next)?;
        if next.last_seq() != before {
            if let Some(log) = &mut self.log {
                log.append(next.events_after(before))?;
            }
            self.current = Arc::new(next);
            self.publish.send_replace(self.current.clone());
        }
        Ok(out)
    }
}
