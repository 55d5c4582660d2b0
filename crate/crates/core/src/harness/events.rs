use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::session::{Block, Condition, Session};
use crate::egg::{EggParameters, FeedbackGrade};
use crate::render::RenderedExplanation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedEgg {
    pub scenario_id: String,
    pub block: Block,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload", rename_all = "snake_case")]
pub enum Event {
    SessionStarted {
        condition: Condition,
        seed: u64,
        eggs: Vec<PlannedEgg>,
    },
    TrialSubmitted {
        scenario_id: String,
        index: u8,
        submitted: EggParameters,
    },
    FeedbackIssued {
        scenario_id: String,
        index: u8,
        cook_time_s: f64,
        grade: FeedbackGrade,
        within_explanation_range: bool,
    },
    ExplanationServed {
        scenario_id: String,
        explanation: RenderedExplanation,
        #[serde(default)]
        fallback: bool,
    },
    EggCompleted {
        scenario_id: String,
        success: bool,
    },
    DifficultyRated {
        scenario_id: String,
        rating: u8,
    },
    SessionCompleted {},
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub ts: DateTime<Utc>,
    pub session_id: String,
    pub seq: u64,
    pub event: String,
    #[serde(default)]
    pub payload: serde_json::Value,
}

impl LogLine {
    pub fn new(ts: DateTime<Utc>, session_id: &str, seq: u64, event: &Event) -> LogLine {
        let mut v = serde_json::to_value(event).expect("events serialize");
        let name = v["event"].as_str().expect("tagged event").to_string();
        let payload = v.get_mut("payload").map(serde_json::Value::take).unwrap_or_default();
        LogLine { ts, session_id: session_id.to_string(), seq, event: name, payload }
    }

    pub fn decode(&self) -> Result<Event, serde_json::Error> {
        serde_json::from_value(serde_json::json!({ "event": self.event, "payload": self.payload }))
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read session log: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("session log is empty")]
    Empty,
}

/// Rebuilds a session from log lines. Lines already applied (by `seq`)
/// are skipped, so feeding the same lines twice is harmless.
pub fn replay<'a>(lines: impl IntoIterator<Item = &'a LogLine>) -> Result<Session, LoadError> {
    let mut session: Option<Session> = None;
    for (i, line) in lines.into_iter().enumerate() {
        let corrupt = |message: String| LoadError::Corrupt { line: i + 1, message };
        let event = line.decode().map_err(|e| corrupt(e.to_string()))?;
        match session.as_mut() {
            None => session = Some(Session::from_start(line, &event).map_err(|e| corrupt(e.to_string()))?),
            Some(s) => s.apply(line, &event).map_err(|e| corrupt(e.to_string()))?,
        }
    }
    session.ok_or(LoadError::Empty)
}

/// Parses a log file. A final line without its newline that fails to
/// parse is treated as an interrupted write and dropped.
pub fn read_log(path: &Path) -> Result<Vec<LogLine>, LoadError> {
    let text = std::fs::read_to_string(path)?;
    let complete = text.ends_with('\n');
    let raw: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(raw.len());
    for (i, l) in raw.iter().enumerate() {
        if l.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LogLine>(l) {
            Ok(line) => out.push(line),
            Err(_) if i + 1 == raw.len() && !complete => {
                log::warn!("{}: dropping truncated final line", path.display());
            }
            Err(e) => return Err(LoadError::Corrupt { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(out)
}

pub fn load_session(path: &Path) -> Result<Session, LoadError> {
    replay(&read_log(path)?)
}

/// Append-only JSON-lines writer for one session.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    out: BufWriter<File>,
}

impl SessionLog {
    pub fn path_for(dir: &Path, session_id: &str) -> PathBuf {
        dir.join(format!("{session_id}.jsonl"))
    }

    pub fn open(dir: &Path, session_id: &str) -> std::io::Result<SessionLog> {
        let path = Self::path_for(dir, session_id);
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(SessionLog { path, out: BufWriter::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes and flushes the lines.
    pub fn append(&mut self, lines: &[LogLine]) -> std::io::Result<()> {
        for l in lines {
            serde_json::to_writer(&mut self.out, l)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()?;
        self.out.get_ref().sync_data()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_shape() {
        let ts = DateTime::parse_from_rfc3339("2024-01-01T00:00:00Z").unwrap().with_timezone(&Utc);
        let line = LogLine::new(ts, "s1", 3, &Event::EggCompleted { scenario_id: "emu".into(), success: true });
        let v = serde_json::to_value(&line).unwrap();
        assert_eq!(v["event"], "egg_completed");
        assert_eq!(v["payload"]["scenario_id"], "emu");
        assert_eq!(v["seq"], 3);
        assert_eq!(line.decode().unwrap(), Event::EggCompleted { scenario_id: "emu".into(), success: true });
        let done = LogLine::new(ts, "s1", 4, &Event::SessionCompleted {});
        assert_eq!(done.decode().unwrap(), Event::SessionCompleted {});
    }
}
