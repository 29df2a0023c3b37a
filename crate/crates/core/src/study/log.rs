use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{AssignedTrial, StudyError};
use crate::gaze::HoverEvent;
use crate::model::{Choice, Rationale};

/// Every state change, one JSON object per line.
pub const EVENTS_FILE: &str = "events.jsonl";
/// Annotations only, for quick inspection.
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    SessionCreated {
        session_id: String,
        participant_id: String,
        created_at: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client_epoch_ms: Option<u64>,
        trials: Vec<AssignedTrial>,
    },
    Events {
        session_id: String,
        trial: usize,
        seq: u64,
        received_at: u64,
        events: Vec<HoverEvent>,
    },
    Annotation {
        session_id: String,
        trial: usize,
        choice: Choice,
        rationale: Rationale,
        at: u64,
    },
    SessionExpired {
        session_id: String,
        at: u64,
    },
}

/// Appends entries to the study directory, flushing before returning.
#[derive(Debug)]
pub struct LogWriter {
    dir: PathBuf,
    events: File,
    annotations: File,
}

impl LogWriter {
    pub fn open(dir: &Path) -> Result<Self, StudyError> {
        std::fs::create_dir_all(dir).map_err(log_err)?;
        let open = |name: &str| {
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(dir.join(name))
                .map_err(log_err)
        };
        Ok(LogWriter {
            dir: dir.to_owned(),
            events: open(EVENTS_FILE)?,
            annotations: open(ANNOTATIONS_FILE)?,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn append(&mut self, entry: &LogEntry) -> Result<(), StudyError> {
        let mut line = serde_json::to_vec(entry).map_err(|e| StudyError::Log(e.to_string()))?;
        line.push(b'\n');
        self.events.write_all(&line).map_err(log_err)?;
        self.events.flush().map_err(log_err)?;
        if matches!(entry, LogEntry::Annotation { .. }) {
            self.annotations.write_all(&line).map_err(log_err)?;
            self.annotations.flush().map_err(log_err)?;
        }
        Ok(())
    }

    /// Entries already on disk, oldest first.
    pub fn read_all(dir: &Path) -> Result<Vec<LogEntry>, StudyError> {
        let path = dir.join(EVENTS_FILE);
        if !path.exists() {
            return Ok(Vec::new());
        }
        let reader = BufReader::new(File::open(&path).map_err(log_err)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(log_err)?;
            if line.trim().is_empty() {
                continue;
            }
            let entry = serde_json::from_str(&line)
                .map_err(|e| StudyError::Log(format!("{}:{}: {e}", path.display(), i + 1)))?;
            out.push(entry);
        }
        Ok(out)
    }
}

fn log_err(e: std::io::Error) -> StudyError {
    StudyError::Log(e.to_string())
}
