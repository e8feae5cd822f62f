//! HTTP service for live sessions.
//!
//! Every session is owned by a single writer thread; handlers read committed
//! snapshots and send commands. Occupants authenticate with opaque bearer
//! tokens issued when the session is created, and the coordinator gets an
//! admin token for opening and closing rounds.

mod auth;
mod error;
mod routes;
mod views;
mod writer;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use rand::Rng;
use setpoint_core::session::{
    replay_file, Clock, EventLog, ReplayError, Session, SessionConfig, SessionError,
};
use thiserror::Error;

pub use auth::{bearer, Credentials, IssuedTokens, Viewer};
pub use error::ApiError;
pub use routes::router;
pub use views::{
    project, CreatedView, DecisionView, EventsView, LedgerView, RoundDetail, RoundView, SessionView,
};
pub use writer::SessionHandle;

/// Longest a long-poll request may wait.
pub const MAX_WAIT_MS: u64 = 60_000;

#[derive(Clone, Debug, Default)]
pub struct ApiConfig {
    /// Where event logs and token digests live. In-memory when `None`.
    pub data_dir: Option<PathBuf>,
    /// Close and reopen rounds at each deadline without an admin call.
    pub auto_advance: bool,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Replay { path: PathBuf, source: ReplayError },
    #[error("{path}: {source}")]
    Session { path: PathBuf, source: SessionError },
    #[error("{path}: no credentials file next to the log")]
    MissingCredentials { path: PathBuf },
}

pub struct AppState {
    config: ApiConfig,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
}

impl AppState {
    /// Build the state, resuming every session logged under `data_dir`.
    pub fn new(config: ApiConfig, clock: Arc<dyn Clock>) -> Result<Arc<Self>, StartupError> {
        let mut sessions = BTreeMap::new();
        if let Some(dir) = &config.data_dir {
            let io = |path: &Path, e: std::io::Error| StartupError::Io {
                path: path.to_path_buf(),
                message: e.to_string(),
            };
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
            let mut logs: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| io(dir, e))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            logs.sort();
            for path in logs {
                let Some(session) = replay_file(&path).map_err(|source| StartupError::Replay {
                    path: path.clone(),
                    source,
                })?
                else {
                    continue;
                };
                let creds_path = path.with_extension("credentials.json");
                let text = std::fs::read_to_string(&creds_path)
                    .map_err(|_| StartupError::MissingCredentials { path: path.clone() })?;
                let credentials: Credentials =
                    serde_json::from_str(&text).map_err(|e| StartupError::Io {
                        path: creds_path.clone(),
                        message: e.to_string(),
                    })?;
                let log = EventLog::open(&path).map_err(|source| StartupError::Session {
                    path: path.clone(),
                    source,
                })?;
                let id = session.id().to_string();
                tracing::info!(session = %id, events = session.last_seq(), "resumed session");
                let handle = SessionHandle::spawn(
                    session,
                    Some(log),
                    credentials,
                    clock.clone(),
                    config.auto_advance,
                );
                sessions.insert(id, Arc::new(handle));
            }
        }
        Ok(Arc::new(Self {
            config,
            clock,
            sessions: RwLock::new(sessions),
        }))
    }

    pub fn in_memory(clock: Arc<dyn Clock>) -> Arc<Self> {
        Self::new(ApiConfig::default(), clock).expect("no data dir to load")
    }

    pub fn create_session(
        &self,
        config: SessionConfig,
    ) -> Result<(Arc<SessionHandle>, IssuedTokens), ApiError> {
        let id = hex::encode(rand::rng().random::<[u8; 16]>());
        let session = Session::create(&id, config, self.clock.now_ms())?;
        let (credentials, tokens) = Credentials::issue(&session.config().occupancy);
        let log = match &self.config.data_dir {
            Some(dir) => {
                let path = dir.join(format!("{id}.jsonl"));
                let creds =
                    serde_json::to_string_pretty(&credentials).expect("credentials serialize");
                std::fs::write(path.with_extension("credentials.json"), creds)
                    .map_err(|e| ApiError::internal(format!("writing credentials: {e}")))?;
                let mut log = EventLog::open(&path)?;
                log.append(session.events())?;
                Some(log)
            }
            None => None,
        };
        tracing::info!(session = %id, occupants = session.config().occupancy.len(), "created session");
        let handle = Arc::new(SessionHandle::spawn(
            session,
            log,
            credentials,
            self.clock.clone(),
            self.config.auto_advance,
        ));
        self.sessions
            .write()
            .expect("session table lock")
            .insert(id, handle.clone());
        Ok((handle, tokens))
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session table lock").len()
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }

    /// Stop every writer once its queued commands are applied. Event logs
    /// are synced on each write, so nothing is left to flush afterwards.
    pub fn shutdown(&self) {
        let handles: Vec<_> = self
            .sessions
            .read()
            .expect("session table lock")
            .values()
            .cloned()
            .collect();
        for h in handles {
            h.stop();
        }
    }
}

/// Serve until `signal` resolves, then stop the session writers so open
/// event streams end and the server can drain.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    signal: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let app = router(state.clone());
    let stopper = state.clone();
    axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            signal.await;
            tokio::task::spawn_blocking(move || stopper.shutdown())
                .await
                .ok();
        })
        .await
}
