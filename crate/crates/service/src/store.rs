//! Session hosting with optimistic concurrency and an append-only journal.
//!
//! The journal (`journal.jsonl` in the data directory) holds one JSON object
//! per line: a `create` entry with the session's config, then one `answer`
//! entry per accepted answer carrying the version it produced. Replaying it
//! rebuilds every session. Finished sessions are also written to
//! `records.csv` in the dataset format.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use awareness_core::dataset::{
    save_records, summarize, DatasetError, SummaryOptions, SummaryReport,
};
use awareness_core::elicitation::{
    Answer, Gender, Phase, Question, SessionConfig, SessionRecord, SessionState,
};
use awareness_core::estimation::{estimate_record, RecordEstimate};
use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const RECORDS_FILE: &str = "records.csv";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no session with id `{0}`")]
    NotFound(String),
    #[error("stale version {submitted}; the session is at version {current}")]
    VersionConflict { current: u64, submitted: u64 },
    #[error(transparent)]
    Model(#[from] awareness_core::Error),
    #[error("storage: {0}")]
    Storage(String),
    #[error("journal line {line}: {reason}")]
    CorruptJournal { line: usize, reason: String },
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl From<DatasetError> for ServiceError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Model(m) => ServiceError::Model(m),
            other => ServiceError::Storage(other.to_string()),
        }
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionEnvelope {
    pub session_id: String,
    pub state: SessionState,
    /// Number of accepted answers.
    pub version: u64,
    pub gender: Option<Gender>,
    pub created_at: DateTime<Utc>,
    pub completed_at: Option<DateTime<Utc>>,
}

impl SessionEnvelope {
    pub fn record(&self) -> ServiceResult<SessionRecord> {
        let mut record = self
            .state
            .finalize(self.session_id.clone())?
            .with_gender(self.gender);
        record.created_at = Some(self.created_at);
        record.completed_at = self.completed_at;
        Ok(record)
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            session_id: self.session_id.clone(),
            version: self.version,
            phase: self.state.phase,
            question: self.state.current_question().ok(),
        }
    }
}

/// What a client needs to render the session's next step. `question` is
/// `None` once the session is finished.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub session_id: String,
    pub version: u64,
    pub phase: Phase,
    pub question: Option<Question>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub record: SessionRecord,
    pub beta_assumed: f64,
    pub estimate: RecordEstimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalEntry {
    Create {
        session_id: String,
        config: SessionConfig,
        #[serde(default)]
        gender: Option<Gender>,
        at: DateTime<Utc>,
    },
    Answer {
        session_id: String,
        version: u64,
        answer: Answer,
        at: DateTime<Utc>,
    },
}

pub struct SessionService {
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionEnvelope>>>>,
    completed: Mutex<Vec<SessionRecord>>,
    journal: Option<Mutex<File>>,
    data_dir: Option<PathBuf>,
    default_beta: f64,
}

impl SessionService {
    /// A service that keeps everything in memory.
    pub fn in_memory(default_beta: f64) -> Self {
        Self {
            sessions: RwLock::new(HashMap::new()),
            completed: Mutex::new(Vec::new()),
            journal: None,
            data_dir: None,
            default_beta,
        }
    }

    /// Opens (creating if needed) a data directory and replays its journal.
    pub fn open(data_dir: impl Into<PathBuf>, default_beta: f64) -> ServiceResult<Self> {
        let data_dir = data_dir.into();
        std::fs::create_dir_all(&data_dir)?;
        let journal_path = data_dir.join(JOURNAL_FILE);
        let mut service = Self::in_memory(default_beta);
        if journal_path.exists() {
            service.replay(&journal_path)?;
        }
        service.journal = Some(Mutex::new(
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&journal_path)?,
        ));
        service.data_dir = Some(data_dir);
        service.write_records(&service.completed.lock())?;
        Ok(service)
    }

    fn replay(&mut self, path: &Path) -> ServiceResult<()> {
        let text = std::fs::read_to_string(path)?;
        let mut offset = 0u64;
        for (i, line) in text.split_inclusive('\n').enumerate() {
            let complete = line.ends_with('\n');
            let entry: JournalEntry = match serde_json::from_str(line.trim()) {
                Ok(entry) => entry,
                Err(_) if line.trim().is_empty() => {
                    offset += line.len() as u64;
                    continue;
                }
                // A torn final write is truncated away.
                Err(_) if !complete => {
                    OpenOptions::new().write(true).open(path)?.set_len(offset)?;
                    break;
                }
                Err(e) => {
                    return Err(ServiceError::CorruptJournal {
                        line: i + 1,
                        reason: e.to_string(),
                    })
                }
            };
            offset += line.len() as u64;
            if !complete {
                OpenOptions::new()
                    .append(true)
                    .open(path)?
                    .write_all(b"\n")?;
            }
            let corrupt = |reason: String| ServiceError::CorruptJournal {
                line: i + 1,
                reason,
            };
            match entry {
                JournalEntry::Create {
                    session_id,
                    config,
                    gender,
                    at,
                } => {
                    let state = SessionState::start(config).map_err(|e| corrupt(e.to_string()))?;
                    let env = SessionEnvelope {
                        session_id: session_id.clone(),
                        state,
                        version: 0,
                        gender,
                        created_at: at,
                        completed_at: None,
                    };
                    self.sessions
                        .get_mut()
                        .insert(session_id, Arc::new(Mutex::new(env)));
                }
                JournalEntry::Answer {
                    session_id,
                    version,
                    answer,
                    at,
                } => {
                    let env = self
                        .sessions
                        .get_mut()
                        .get(&session_id)
                        .cloned()
                        .ok_or_else(|| corrupt(format!("unknown session `{session_id}`")))?;
                    let mut env = env.lock();
                    if version != env.version + 1 {
                        return Err(corrupt(format!("version {version} after {}", env.version)));
                    }
                    env.state
                        .submit(answer)
                        .map_err(|e| corrupt(e.to_string()))?;
                    env.version = version;
                    if env.state.is_terminal() {
                        env.completed_at = Some(at);
                        self.completed.get_mut().push(env.record()?);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn default_beta(&self) -> f64 {
        self.default_beta
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    fn append(&self, entry: &JournalEntry) -> ServiceResult<()> {
        if let Some(journal) = &self.journal {
            let mut line =
                serde_json::to_string(entry).map_err(|e| ServiceError::Storage(e.to_string()))?;
            line.push('\n');
            let mut file = journal.lock();
            file.write_all(line.as_bytes())?;
            file.sync_data()?;
        }
        Ok(())
    }

    fn write_records(&self, records: &[SessionRecord]) -> ServiceResult<()> {
        if let Some(dir) = &self.data_dir {
            save_records(&dir.join(RECORDS_FILE), records)?;
        }
        Ok(())
    }

    fn get(&self, id: &str) -> ServiceResult<Arc<Mutex<SessionEnvelope>>> {
        self.sessions
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(id.to_string()))
    }

    pub fn create(&self, config: SessionConfig, gender: Option<Gender>) -> ServiceResult<Snapshot> {
        let state = SessionState::start(config.clone())?;
        let session_id = uuid::Uuid::new_v4().to_string();
        let at = Utc::now();
        self.append(&JournalEntry::Create {
            session_id: session_id.clone(),
            config,
            gender,
            at,
        })?;
        let env = SessionEnvelope {
            session_id: session_id.clone(),
            state,
            version: 0,
            gender,
            created_at: at,
            completed_at: None,
        };
        let snapshot = env.snapshot();
        self.sessions
            .write()
            .insert(session_id, Arc::new(Mutex::new(env)));
        Ok(snapshot)
    }

    pub fn envelope(&self, id: &str) -> ServiceResult<SessionEnvelope> {
        Ok(self.get(id)?.lock().clone())
    }

    pub fn snapshot(&self, id: &str) -> ServiceResult<Snapshot> {
        Ok(self.get(id)?.lock().snapshot())
    }

    /// Applies `answer` if `version` is the session's current version.
    /// Nothing changes when it is rejected.
    pub fn answer(&self, id: &str, version: u64, answer: Answer) -> ServiceResult<Snapshot> {
        let env = self.get(id)?;
        let mut env = env.lock();
        if version != env.version {
            return Err(ServiceError::VersionConflict {
                current: env.version,
                submitted: version,
            });
        }
        let mut next = env.state.clone();
        next.submit(answer)?;
        let at = Utc::now();
        self.append(&JournalEntry::Answer {
            session_id: id.to_string(),
            version: version + 1,
            answer,
            at,
        })?;
        env.state = next;
        env.version += 1;
        if env.state.is_terminal() {
            env.completed_at = Some(at);
            let record = env.record()?;
            let mut completed = self.completed.lock();
            completed.push(record);
            self.write_records(&completed)?;
        }
        Ok(env.snapshot())
    }

    /// Falls back to the session's own `beta_assumed` when `beta` is unset.
    pub fn result(&self, id: &str, beta: Option<f64>) -> ServiceResult<SessionResult> {
        let record = self.get(id)?.lock().record()?;
        let beta_assumed = beta.unwrap_or(record.config.beta_assumed);
        let estimate = estimate_record(&record, beta_assumed)?;
        Ok(SessionResult {
            record,
            beta_assumed,
            estimate,
        })
    }

    /// Finished sessions in completion order.
    pub fn records(&self) -> Vec<SessionRecord> {
        self.completed.lock().clone()
    }

    pub fn summary(
        &self,
        beta: Option<f64>,
        options: SummaryOptions,
    ) -> ServiceResult<SummaryReport> {
        let records = self.records();
        Ok(summarize(
            &records,
            beta.unwrap_or(self.default_beta),
            options,
        )?)
    }
}
