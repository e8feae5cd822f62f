use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use super::{ReplayError, Session, SessionError, SessionEvent};

/// Append-only JSON Lines event log, flushed after every write.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Open for appending. An interrupted final write is repaired first: a
    /// complete event gets its newline, a fragment is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, SessionError> {
        let path = path.as_ref().to_path_buf();
        let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", path.display()));
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        let mut body = Vec::new();
        file.seek(SeekFrom::Start(0)).map_err(io)?;
        file.read_to_end(&mut body).map_err(io)?;
        if body.last().is_some_and(|b| *b != b'\n') {
            let start = body.iter().rposition(|b| *b == b'\n').map_or(0, |p| p + 1);
            if serde_json::from_slice::<SessionEvent>(&body[start..]).is_ok() {
                file.write_all(b"\n").map_err(io)?;
            } else {
                file.set_len(start as u64).map_err(io)?;
            }
            file.sync_data().map_err(io)?;
        }
        Ok(Self { path, file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, events: &[SessionEvent]) -> Result<(), SessionError> {
        let mut buf = Vec::new();
        for event in events {
            serde_json::to_writer(&mut buf, event).expect("events serialize");
            buf.push(b'\n');
        }
        self.file
            .write_all(&buf)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| SessionError::Io(format!("{}: {e}", self.path.display())))
    }
}

/// Parse a log. A final line without a trailing newline that fails to parse
/// is treated as an interrupted write and dropped; any other bad line is an
/// error.
pub fn read_log(path: impl AsRef<Path>) -> Result<Vec<SessionEvent>, ReplayError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ReplayError::Io(format!("{}: {e}", path.display())))?;
    let mut reader = BufReader::new(file);
    let mut events: Vec<SessionEvent> = Vec::new();
    let mut line = String::new();
    let mut number = 0;
    loop {
        line.clear();
        let read = reader
            .read_line(&mut line)
            .map_err(|e| ReplayError::Io(format!("{}: {e}", path.display())))?;
        if read == 0 {
            break;
        }
        number += 1;
        let complete = line.ends_with('\n');
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<SessionEvent>(text) {
            Ok(event) => events.push(event),
            Err(_) if !complete => break,
            Err(e) => {
                return Err(ReplayError::Corrupt {
                    line: number,
                    after_seq: events.last().map_or(0, |e| e.seq),
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(events)
}

/// Rebuild a session from a log file; `None` when the log is empty.
pub fn replay_file(path: impl AsRef<Path>) -> Result<Option<Session>, ReplayError> {
    Session::replay(&read_log(path)?)
}
