//! Append-only session storage: one newline-delimited JSON file per session.
//! The first line describes the session, every further line adds one outcome.
//! Writers hold an exclusive lock on the file, readers a shared one.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::inference::DecisionPlan;
use crate::model::{Experiment, Outcome};
use crate::session::{analyze_session, AnalysisConfig, OutcomeRow, SessionSummary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Line {
    Created {
        session_id: String,
        n: usize,
        plan: DecisionPlan,
        config: AnalysisConfig,
        created: u64,
    },
    Outcome {
        experiment: u64,
        outcome: u64,
        #[serde(flatten)]
        row: OutcomeRow,
        at: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub session_id: String,
    /// Outcomes per experiment.
    pub n: usize,
    pub plan: DecisionPlan,
    pub config: AnalysisConfig,
    /// Complete experiments in order.
    pub experiments: Vec<Experiment>,
    /// Outcomes of the experiment currently being entered.
    pub pending: Vec<Outcome>,
    pub created: u64,
    pub updated: u64,
}

impl SessionRecord {
    pub fn summary(&self) -> Result<SessionSummary> {
        analyze_session(&self.experiments, &self.plan, &self.config)
    }

    /// 1-based index of the experiment that accepts the next outcome.
    pub fn open_experiment(&self) -> u64 {
        self.experiments.len() as u64 + 1
    }

    fn push(&mut self, o: Outcome) {
        self.pending.push(o);
        if self.pending.len() == self.n {
            let done = Experiment::new(std::mem::take(&mut self.pending)).expect("n >= 1");
            self.experiments.push(done);
        }
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn valid_id(id: &str) -> bool {
    id.len() == 16 && id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase())
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(SessionStore { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, id: &str) -> Result<PathBuf> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("session '{id}'")));
        }
        Ok(self.dir.join(format!("{id}.ndjson")))
    }

    fn open_existing(&self, id: &str, write: bool) -> Result<File> {
        let path = self.path(id)?;
        OpenOptions::new().read(true).append(write).open(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::NotFound(format!("session '{id}'")),
            _ => e.into(),
        })
    }

    pub fn create(&self, n: usize, plan: DecisionPlan, config: AnalysisConfig) -> Result<SessionRecord> {
        if n == 0 {
            return Err(Error::EmptyExperiment);
        }
        config.validate()?;
        let (id, mut file) = loop {
            let id = format!("{:016x}", rand::random::<u64>());
            match OpenOptions::new().write(true).create_new(true).open(self.dir.join(format!("{id}.ndjson"))) {
                Ok(f) => break (id, f),
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        };
        file.lock()?;
        let created = now();
        let line = Line::Created { session_id: id.clone(), n, plan, config, created };
        write_line(&mut file, &line)?;
        Ok(SessionRecord {
            session_id: id,
            n,
            plan,
            config,
            experiments: Vec::new(),
            pending: Vec::new(),
            created,
            updated: created,
        })
    }

    pub fn load(&self, id: &str) -> Result<SessionRecord> {
        let mut file = self.open_existing(id, false)?;
        file.lock_shared()?;
        read_record(&mut file)
    }

    /// Appends one outcome to experiment `experiment` (1-based), which must be
    /// the experiment currently open.
    pub fn append_outcome(&self, id: &str, experiment: u64, row: OutcomeRow) -> Result<SessionRecord> {
        let mut file = self.open_existing(id, true)?;
        file.lock()?;
        let mut rec = read_record(&mut file)?;
        let open = rec.open_experiment();
        if experiment == 0 {
            return Err(domain("experiments are numbered from 1"));
        }
        if experiment < open {
            return Err(Error::Conflict(format!("experiment {experiment} is already complete")));
        }
        if experiment > open {
            return Err(Error::Conflict(format!("experiment {open} is still open")));
        }
        let o = row.to_outcome()?;
        rec.config.check_outcome(&o)?;
        let at = now();
        let line = Line::Outcome { experiment, outcome: rec.pending.len() as u64 + 1, row, at };
        write_line(&mut file, &line)?;
        rec.push(o);
        rec.updated = at;
        Ok(rec)
    }

    pub fn list(&self) -> Result<Vec<String>> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().to_str().and_then(|s| s.strip_suffix(".ndjson")).map(str::to_string))
            .filter(|id| valid_id(id))
            .collect();
        ids.sort();
        Ok(ids)
    }
}

fn write_line(file: &mut File, line: &Line) -> Result<()> {
    let mut text = serde_json::to_string(line).map_err(|e| Error::Io(e.to_string()))?;
    text.push('\n');
    file.write_all(text.as_bytes())?;
    file.sync_data()?;
    Ok(())
}

fn read_record(file: &mut File) -> Result<SessionRecord> {
    file.seek(SeekFrom::Start(0))?;
    let mut lines = BufReader::new(Read::by_ref(file)).lines();
    let bad = |i: usize, m: String| Error::Parse { line: i as u64 + 1, message: m };
    let first = lines.next().ok_or_else(|| bad(0, "empty session file".into()))??;
    let mut rec = match serde_json::from_str(&first).map_err(|e| bad(0, e.to_string()))? {
        Line::Created { session_id, n, plan, config, created } => SessionRecord {
            session_id,
            n,
            plan,
            config,
            experiments: Vec::new(),
            pending: Vec::new(),
            created,
            updated: created,
        },
        Line::Outcome { .. } => return Err(bad(0, "session file does not start with its header".into())),
    };
    for (i, text) in lines.enumerate() {
        let text = text?;
        match serde_json::from_str(&text).map_err(|e| bad(i + 1, e.to_string()))? {
            Line::Outcome { experiment, outcome, row, at } => {
                if experiment != rec.open_experiment() || outcome != rec.pending.len() as u64 + 1 {
                    return Err(bad(i + 1, format!("outcome {experiment}/{outcome} out of sequence")));
                }
                rec.push(row.to_outcome().map_err(|e| bad(i + 1, e.to_string()))?);
                rec.updated = at;
            }
            Line::Created { .. } => return Err(bad(i + 1, "duplicate session header".into())),
        }
    }
    Ok(rec)
}
