//! In-memory sessions backed by an append-only event log.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use rand::Rng;
use safelab_core::acquisition::DEFAULT_BETA;
use safelab_core::agents::start_record;
use safelab_core::campaign::{block_seed, session_env};
use safelab_core::records::RecordKind;
use safelab_core::seed;
use safelab_core::{BlockState, ChoiceRecord, TaskConfig, TaskEnv};
use serde::{Deserialize, Serialize};

use crate::api::{BlockView, ChoiceOutcome, GridView, SessionView};
use crate::ServiceError;

/// One line of the session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Created { session_id: String, experiment: u8, seed: u64 },
    Choice { session_id: String, seq: u64, index: usize, records: Vec<ChoiceRecord> },
}

pub struct Session {
    id: String,
    experiment: u8,
    seed: u64,
    env: TaskEnv,
    block: BlockState,
    blocks_done: usize,
    total_score: f64,
    records: Vec<ChoiceRecord>,
    next_seq: u64,
    last_outcome: Option<ChoiceOutcome>,
}

impl Session {
    fn new(id: String, experiment: u8, seed: u64, base: &TaskEnv) -> Result<Self, ServiceError> {
        let env = session_env(base, seed)?;
        let block = env.make_block(0, block_seed(seed, 0))?;
        let records = vec![start_record(&block, &id, None)];
        Ok(Self { id, experiment, seed, env, block, blocks_done: 0, total_score: 0.0, records, next_seq: 0, last_outcome: None })
    }

    fn finished(&self) -> bool {
        self.blocks_done >= self.env.config().blocks
    }

    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.id.clone(),
            experiment: self.experiment,
            seed: self.seed,
            grid: GridView::from(self.env.domain()),
            blocks_total: self.env.config().blocks,
            blocks_done: self.blocks_done,
            total_score: self.total_score,
            next_seq: self.next_seq,
            finished: self.finished(),
            block: BlockView::of(&self.block, self.env.config().trials_per_block),
        }
    }

    pub fn records(&self) -> &[ChoiceRecord] {
        &self.records
    }

    /// Validate sequencing and either replay the cached outcome or play the choice.
    /// Returns the outcome and the records it appended (empty for a replay).
    fn submit(&mut self, index: usize, seq: Option<u64>) -> Result<(ChoiceOutcome, Vec<ChoiceRecord>), ServiceError> {
        if let Some(s) = seq {
            if s + 1 == self.next_seq {
                if let Some(prev) = self.last_outcome.as_ref().filter(|o| o.seq == s && o.index == index) {
                    return Ok((prev.clone(), Vec::new()));
                }
            }
            if s != self.next_seq {
                return Err(ServiceError::Conflict(format!("stale sequence number {s}, expected {}", self.next_seq)));
            }
        }
        if self.finished() {
            return Err(ServiceError::Conflict("session is finished".into()));
        }
        if index >= self.env.domain().len() {
            return Err(ServiceError::BadRequest(format!(
                "index {index} outside grid of {} points",
                self.env.domain().len()
            )));
        }

        // Same path as the simulated agents: features from the pre-choice
        // history, then one seeded step.
        let assessment = self.env.assess(&self.block, DEFAULT_BETA)?;
        let trial = self.block.choices_made() + 1;
        let noise_seed = TaskEnv::noise_seed(&self.block, trial);
        let y = self.env.step(&mut self.block, index, noise_seed)?;
        self.total_score += y;
        let mut appended = vec![ChoiceRecord {
            subject: self.id.clone(),
            block: self.block.index,
            trial,
            kind: RecordKind::Choice,
            condition: self.block.condition(),
            agent: None,
            chosen: index,
            y,
            status: self.block.status,
            start_index: self.block.start_index,
            threshold: self.block.threshold,
            features: Some(assessment.features),
        }];

        let status = self.block.status;
        let block_score = self.block.score;
        let mut next_block = None;
        if !status.is_active() {
            self.blocks_done += 1;
            if !self.finished() {
                let b = self.blocks_done;
                self.block = self.env.make_block(b, block_seed(self.seed, b))?;
                appended.push(start_record(&self.block, &self.id, None));
                next_block = Some(BlockView::of(&self.block, self.env.config().trials_per_block));
            }
        }
        self.records.extend(appended.iter().cloned());
        let outcome = ChoiceOutcome {
            seq: self.next_seq,
            index,
            y,
            status,
            block_score,
            total_score: self.total_score,
            trials_remaining: if status.is_active() {
                self.env.config().trials_per_block - self.block.choices_made()
            } else {
                0
            },
            blocks_done: self.blocks_done,
            finished: self.finished(),
            next_seq: self.next_seq + 1,
            next_block,
        };
        self.next_seq += 1;
        self.last_outcome = Some(outcome.clone());
        Ok((outcome, appended))
    }
}

struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    fn append(&mut self, event: &LogEvent) -> Result<(), ServiceError> {
        let mut line = serde_json::to_string(event).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

pub struct SessionStore {
    envs: [TaskEnv; 2],
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    log: Option<Mutex<EventLog>>,
    default_seed: Option<u64>,
    created: AtomicU64,
}

impl SessionStore {
    pub fn new(default_seed: Option<u64>) -> Result<Self, ServiceError> {
        Ok(Self {
            envs: [TaskEnv::new(TaskConfig::experiment1())?, TaskEnv::new(TaskConfig::experiment2())?],
            sessions: RwLock::new(HashMap::new()),
            log: None,
            default_seed,
            created: AtomicU64::new(0),
        })
    }

    /// Open (or create) the event log at `path`, replaying any sessions it holds.
    pub fn with_log(mut self, path: &Path) -> Result<Self, ServiceError> {
        if path.exists() {
            let reader = BufReader::new(File::open(path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let event: LogEvent = serde_json::from_str(&line)
                    .map_err(|e| ServiceError::Internal(format!("{}:{}: {e}", path.display(), i + 1)))?;
                self.replay(event)
                    .map_err(|e| ServiceError::Internal(format!("{}:{}: {e}", path.display(), i + 1)))?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        self.log = Some(Mutex::new(EventLog { path: path.to_path_buf(), file }));
        Ok(self)
    }

    fn replay(&self, event: LogEvent) -> Result<(), ServiceError> {
        match event {
            LogEvent::Created { session_id, experiment, seed } => {
                let session = Session::new(session_id.clone(), experiment, seed, self.env(experiment)?)?;
                self.created.fetch_add(1, Ordering::SeqCst);
                self.sessions.write().expect("poisoned").insert(session_id, Arc::new(Mutex::new(session)));
            }
            LogEvent::Choice { session_id, seq, index, records } => {
                let session = self.get(&session_id)?;
                let mut s = session.lock().expect("poisoned");
                let (_, appended) = s.submit(index, Some(seq))?;
                if appended != records {
                    return Err(ServiceError::Internal(format!(
                        "replayed choice {seq} of session {session_id} does not reproduce the logged records"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn log_path(&self) -> Option<PathBuf> {
        self.log.as_ref().map(|l| l.lock().expect("poisoned").path.clone())
    }

    /// Flush the log to stable storage.
    pub fn sync(&self) -> Result<(), ServiceError> {
        if let Some(log) = &self.log {
            log.lock().expect("poisoned").file.sync_all()?;
        }
        Ok(())
    }

    fn env(&self, experiment: u8) -> Result<&TaskEnv, ServiceError> {
        match experiment {
            1 => Ok(&self.envs[0]),
            2 => Ok(&self.envs[1]),
            other => Err(ServiceError::BadRequest(format!("unknown experiment {other} (expected 1 or 2)"))),
        }
    }

    fn log(&self, event: &LogEvent) -> Result<(), ServiceError> {
        match &self.log {
            Some(log) => log.lock().expect("poisoned").append(event),
            None => Ok(()),
        }
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        self.sessions
            .read()
            .expect("poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session '{id}'")))
    }

    pub fn create(&self, experiment: u8, seed: Option<u64>) -> Result<SessionView, ServiceError> {
        let env = self.env(experiment)?;
        let n = self.created.fetch_add(1, Ordering::SeqCst);
        let seed = match (seed, self.default_seed) {
            (Some(s), _) => s,
            (None, Some(base)) => seed::derive(base, &[n]),
            (None, None) => rand::rng().random(),
        };
        let mut sessions = self.sessions.write().expect("poisoned");
        let id = loop {
            let id = format!("{:032x}", rand::rng().random::<u128>());
            if !sessions.contains_key(&id) {
                break id;
            }
        };
        let session = Session::new(id.clone(), experiment, seed, env)?;
        let view = session.view();
        self.log(&LogEvent::Created { session_id: id.clone(), experiment, seed })?;
        sessions.insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn submit(&self, id: &str, index: usize, seq: Option<u64>) -> Result<ChoiceOutcome, ServiceError> {
        let session = self.get(id)?;
        let mut s = session.lock().expect("poisoned");
        let (outcome, appended) = s.submit(index, seq)?;
        if !appended.is_empty() {
            self.log(&LogEvent::Choice { session_id: id.to_string(), seq: outcome.seq, index, records: appended })?;
        }
        Ok(outcome)
    }

    pub fn state(&self, id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.get(id)?.lock().expect("poisoned").view())
    }

    pub fn records(&self, id: &str) -> Result<Vec<ChoiceRecord>, ServiceError> {
        Ok(self.get(id)?.lock().expect("poisoned").records().to_vec())
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
