//! Shared trial log for parallel workers.
//!
//! A study is a directory:
//!
//! ```text
//! meta.json      StudyMeta, written once
//! journal.jsonl  one JSON record per line, append-only
//! lock           advisory exclusive lock taken around every append
//! ```
//!
//! Journal records:
//!
//! ```text
//! {"op":"claim","id":3,"worker":"w0","params":{...},"ts":1712.5}
//! {"op":"finish","id":3,"state":"COMPLETE","objectives":[...],"aux":{...},"ts":1713.0}
//! ```
//!
//! Readers consume complete lines only. A trailing fragment left by a crash
//! is skipped with a warning once a later append terminates it.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::search::ObjectiveSpec;
use crate::space::{ParamAssignment, ParamValue};

pub const STORE_FORMAT_VERSION: u32 = 1;
/// Environment variable overriding the configured store path.
pub const STORE_ENV: &str = "HWNAS_STORE";
const META_FILE: &str = "meta.json";
const JOURNAL_FILE: &str = "journal.jsonl";
const LOCK_FILE: &str = "lock";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("study metadata mismatch: {0}")]
    MetaMismatch(String),
    #[error("unknown trial id {0}")]
    UnknownTrial(u64),
    #[error("trial {0} is already finished")]
    AlreadyFinished(u64),
    #[error("objective vector has {found} values, study has {expected}")]
    ObjectiveCount { expected: usize, found: usize },
    #[error("non-finite objective for COMPLETE trial {0}")]
    NonFinite(u64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("metadata: {0}")]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum TrialState {
    Running,
    Complete,
    Failed,
}

impl std::fmt::Display for TrialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrialState::Running => "RUNNING",
            TrialState::Complete => "COMPLETE",
            TrialState::Failed => "FAILED",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub worker_id: String,
    pub params: ParamAssignment,
    pub objectives: Option<Vec<f64>>,
    pub state: TrialState,
    /// Seconds since the Unix epoch.
    pub claimed_at: f64,
    pub finished_at: Option<f64>,
    pub aux: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyMeta {
    pub study_name: String,
    pub objectives: Vec<ObjectiveSpec>,
    pub space_digest: String,
    pub format_version: u32,
}

impl StudyMeta {
    pub fn new(study_name: &str, objectives: Vec<ObjectiveSpec>, space_digest: String) -> Self {
        Self { study_name: study_name.into(), objectives, space_digest, format_version: STORE_FORMAT_VERSION }
    }

    pub fn check_compatible(&self, requested: &StudyMeta) -> Result<(), StoreError> {
        if self.format_version != requested.format_version {
            return Err(StoreError::MetaMismatch(format!(
                "format version {} on disk, {} requested",
                self.format_version, requested.format_version
            )));
        }
        if self.study_name != requested.study_name {
            return Err(StoreError::MetaMismatch(format!(
                "study `{}` on disk, `{}` requested",
                self.study_name, requested.study_name
            )));
        }
        if self.objectives != requested.objectives {
            return Err(StoreError::MetaMismatch("objective list or order differs".into()));
        }
        if self.space_digest != requested.space_digest {
            return Err(StoreError::MetaMismatch("search space digest differs".into()));
        }
        Ok(())
    }
}

/// How a trial ended.
#[derive(Debug, Clone, PartialEq)]
pub enum TrialOutcome {
    Complete(Vec<f64>),
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum JournalRecord {
    Claim {
        id: u64,
        worker: String,
        params: ParamAssignment,
        ts: f64,
    },
    Finish {
        id: u64,
        state: TrialState,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        objectives: Option<Vec<f64>>,
        #[serde(default)]
        aux: BTreeMap<String, f64>,
        ts: f64,
    },
}

pub fn now_secs() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// In-memory view of a journal.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StudyState {
    records: BTreeMap<u64, TrialRecord>,
    /// COMPLETE trial ids in the order their results were appended.
    completion_order: Vec<u64>,
    next_id: u64,
}

impl StudyState {
    fn apply(&mut self, rec: JournalRecord) {
        match rec {
            JournalRecord::Claim { id, worker, params, ts } => {
                if self.records.contains_key(&id) {
                    log::warn!("journal: duplicate claim of trial {id} ignored");
                    return;
                }
                self.next_id = self.next_id.max(id + 1);
                self.records.insert(
                    id,
                    TrialRecord {
                        trial_id: id,
                        worker_id: worker,
                        params,
                        objectives: None,
                        state: TrialState::Running,
                        claimed_at: ts,
                        finished_at: None,
                        aux: BTreeMap::new(),
                    },
                );
            }
            JournalRecord::Finish { id, state, objectives, aux, ts } => {
                let Some(r) = self.records.get_mut(&id) else {
                    log::warn!("journal: result for unknown trial {id} ignored");
                    return;
                };
                if r.state != TrialState::Running || state == TrialState::Running {
                    log::warn!("journal: invalid transition of trial {id} to {state} ignored");
                    return;
                }
                if state == TrialState::Complete {
                    self.completion_order.push(id);
                }
                r.state = state;
                r.objectives = objectives;
                r.aux = aux;
                r.finished_at = Some(ts);
            }
        }
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// All records ordered by id.
    pub fn records(&self) -> impl Iterator<Item = &TrialRecord> {
        self.records.values()
    }

    pub fn get(&self, id: u64) -> Option<&TrialRecord> {
        self.records.get(&id)
    }

    /// COMPLETE trials in result order.
    pub fn completed_in_order(&self) -> impl Iterator<Item = &TrialRecord> {
        self.completion_order.iter().map(|id| &self.records[id])
    }

    pub fn count(&self, state: TrialState) -> usize {
        self.records.values().filter(|r| r.state == state).count()
    }

    /// RUNNING trials claimed within `window` of `now` (all of them when
    /// `window` is `None`).
    pub fn live_running(&self, now: f64, window: Option<Duration>) -> usize {
        self.records
            .values()
            .filter(|r| r.state == TrialState::Running)
            .filter(|r| window.is_none_or(|w| now - r.claimed_at <= w.as_secs_f64()))
            .count()
    }

    /// RUNNING trials claimed longer than `window` ago.
    pub fn stale(&self, now: f64, window: Duration) -> Vec<&TrialRecord> {
        self.records
            .values()
            .filter(|r| r.state == TrialState::Running && now - r.claimed_at > window.as_secs_f64())
            .collect()
    }
}

/// Filter for [`TrialLog::list`].
#[derive(Debug, Clone, Default)]
pub struct TrialFilter {
    pub state: Option<TrialState>,
    /// Keep trials whose objective `.0` (by index) is at least `.1`.
    pub min_objective: Option<(usize, f64)>,
}

impl TrialFilter {
    pub fn state(state: TrialState) -> Self {
        Self { state: Some(state), ..Self::default() }
    }

    fn keep(&self, r: &TrialRecord) -> bool {
        if self.state.is_some_and(|s| s != r.state) {
            return false;
        }
        if let Some((i, min)) = self.min_objective {
            return r.objectives.as_ref().and_then(|o| o.get(i)).is_some_and(|&v| v >= min);
        }
        true
    }
}

/// Operations shared by the file-backed and in-memory stores.
pub trait TrialLog {
    fn meta(&self) -> &StudyMeta;

    /// Atomically claim the next id if `COMPLETE + live RUNNING < budget`.
    /// `propose` picks the parameters from a fresh view of the log.
    fn claim_next(
        &mut self,
        worker_id: &str,
        budget: usize,
        propose: &mut dyn FnMut(u64, &StudyState) -> ParamAssignment,
    ) -> Result<Option<(u64, ParamAssignment)>, StoreError>;

    fn finish(&mut self, id: u64, outcome: TrialOutcome, aux: BTreeMap<String, f64>) -> Result<(), StoreError>;

    /// Up-to-date view of the log.
    fn state(&mut self) -> Result<&StudyState, StoreError>;

    /// Matching records ordered by id.
    fn list(&mut self, filter: &TrialFilter) -> Result<Vec<TrialRecord>, StoreError> {
        Ok(self.state()?.records().filter(|r| filter.keep(r)).cloned().collect())
    }
}

fn finish_record(
    meta: &StudyMeta,
    state: &StudyState,
    id: u64,
    outcome: TrialOutcome,
    mut aux: BTreeMap<String, f64>,
) -> Result<JournalRecord, StoreError> {
    match state.get(id) {
        None => return Err(StoreError::UnknownTrial(id)),
        Some(r) if r.state != TrialState::Running => return Err(StoreError::AlreadyFinished(id)),
        _ => {}
    }
    aux.retain(|k, v| {
        if !v.is_finite() {
            log::warn!("trial {id}: dropping non-finite aux value `{k}`");
        }
        v.is_finite()
    });
    let (state, objectives) = match outcome {
        TrialOutcome::Complete(obj) => {
            if obj.len() != meta.objectives.len() {
                return Err(StoreError::ObjectiveCount { expected: meta.objectives.len(), found: obj.len() });
            }
            if obj.iter().any(|v| !v.is_finite()) {
                return Err(StoreError::NonFinite(id));
            }
            (TrialState::Complete, Some(obj))
        }
        TrialOutcome::Failed(reason) => {
            log::warn!("trial {id} failed: {reason}");
            (TrialState::Failed, None)
        }
    };
    Ok(JournalRecord::Finish { id, state, objectives, aux, ts: now_secs() })
}

fn can_claim(state: &StudyState, budget: usize, window: Option<Duration>) -> bool {
    state.count(TrialState::Complete) + state.live_running(now_secs(), window) < budget
}

/// File-backed study. See the module docs for the layout.
#[derive(Debug)]
pub struct StudyHandle {
    dir: PathBuf,
    meta: StudyMeta,
    state: StudyState,
    offset: u64,
    /// RUNNING stubs older than this stop counting against the budget.
    pub stale_after: Option<Duration>,
}

/// Holds the advisory lock until dropped.
struct LockGuard(File);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = self.0.unlock();
    }
}

fn lock(dir: &Path) -> Result<LockGuard, StoreError> {
    let path = dir.join(LOCK_FILE);
    let f = OpenOptions::new().create(true).truncate(false).write(true).open(&path).map_err(io_err(&path))?;
    f.lock().map_err(io_err(&path))?;
    Ok(LockGuard(f))
}

impl StudyHandle {
    /// Create the study directory and header, or open an existing one and
    /// verify its metadata.
    pub fn open_or_create(path: impl AsRef<Path>, meta: &StudyMeta) -> Result<Self, StoreError> {
        let dir = path.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let stored = {
            let _guard = lock(&dir)?;
            let meta_path = dir.join(META_FILE);
            let stored = if meta_path.exists() {
                let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
                let on_disk: StudyMeta = serde_json::from_str(&text)?;
                on_disk.check_compatible(meta)?;
                on_disk
            } else {
                let tmp = dir.join(format!("{META_FILE}.tmp"));
                fs::write(&tmp, serde_json::to_string_pretty(meta)?).map_err(io_err(&tmp))?;
                fs::rename(&tmp, &meta_path).map_err(io_err(&meta_path))?;
                meta.clone()
            };
            let journal = dir.join(JOURNAL_FILE);
            OpenOptions::new().create(true).append(true).open(&journal).map_err(io_err(&journal))?;
            stored
        };
        let mut h = Self { dir, meta: stored, state: StudyState::default(), offset: 0, stale_after: None };
        h.refresh()?;
        Ok(h)
    }

    /// Open an existing study without checking metadata against a config.
    pub fn open_existing(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = path.as_ref().to_path_buf();
        let meta_path = dir.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
        let meta: StudyMeta = serde_json::from_str(&text)?;
        Self::open_or_create(dir, &meta)
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn journal_path(&self) -> PathBuf {
        self.dir.join(JOURNAL_FILE)
    }

    /// Read newly appended complete lines.
    pub fn refresh(&mut self) -> Result<(), StoreError> {
        let path = self.journal_path();
        let mut f = File::open(&path).map_err(io_err(&path))?;
        f.seek(SeekFrom::Start(self.offset)).map_err(io_err(&path))?;
        let mut buf = Vec::new();
        f.read_to_end(&mut buf).map_err(io_err(&path))?;
        let Some(end) = buf.iter().rposition(|&b| b == b'\n') else { return Ok(()) };
        for (i, line) in buf[..end].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            match serde_json::from_slice::<JournalRecord>(line) {
                Ok(rec) => self.state.apply(rec),
                Err(e) => log::warn!("journal {}: skipping unreadable line (+{i} after byte {}): {e}", path.display(), self.offset),
            }
        }
        self.offset += end as u64 + 1;
        Ok(())
    }

    fn append(&mut self, rec: &JournalRecord) -> Result<(), StoreError> {
        let path = self.journal_path();
        let mut f = OpenOptions::new().read(true).append(true).open(&path).map_err(io_err(&path))?;
        let len = f.metadata().map_err(io_err(&path))?.len();
        let mut line = Vec::new();
        if len > 0 {
            let mut last = [0u8];
            f.seek(SeekFrom::Start(len - 1)).map_err(io_err(&path))?;
            f.read_exact(&mut last).map_err(io_err(&path))?;
            if last[0] != b'\n' {
                line.push(b'\n');
            }
        }
        serde_json::to_writer(&mut line, rec)?;
        line.push(b'\n');
        f.write_all(&line).map_err(io_err(&path))?;
        f.sync_data().map_err(io_err(&path))?;
        Ok(())
    }
}

impl TrialLog for StudyHandle {
    fn meta(&self) -> &StudyMeta {
        &self.meta
    }

    fn claim_next(
        &mut self,
        worker_id: &str,
        budget: usize,
        propose: &mut dyn FnMut(u64, &StudyState) -> ParamAssignment,
    ) -> Result<Option<(u64, ParamAssignment)>, StoreError> {
        let _guard = lock(&self.dir)?;
        self.refresh()?;
        if !can_claim(&self.state, budget, self.stale_after) {
            return Ok(None);
        }
        let id = self.state.next_id();
        let params = propose(id, &self.state);
        let rec = JournalRecord::Claim { id, worker: worker_id.into(), params: params.clone(), ts: now_secs() };
        self.append(&rec)?;
        self.refresh()?;
        Ok(Some((id, params)))
    }

    fn finish(&mut self, id: u64, outcome: TrialOutcome, aux: BTreeMap<String, f64>) -> Result<(), StoreError> {
        let _guard = lock(&self.dir)?;
        self.refresh()?;
        let rec = finish_record(&self.meta, &self.state, id, outcome, aux)?;
        self.append(&rec)?;
        self.refresh()
    }

    fn state(&mut self) -> Result<&StudyState, StoreError> {
        self.refresh()?;
        Ok(&self.state)
    }
}

/// Store kept in memory; same semantics as [`StudyHandle`] for a single
/// process.
#[derive(Debug, Clone)]
pub struct InMemoryStudy {
    meta: StudyMeta,
    state: StudyState,
}

impl InMemoryStudy {
    pub fn new(meta: StudyMeta) -> Self {
        Self { meta, state: StudyState::default() }
    }
}

impl TrialLog for InMemoryStudy {
    fn meta(&self) -> &StudyMeta {
        &self.meta
    }

    fn claim_next(
        &mut self,
        worker_id: &str,
        budget: usize,
        propose: &mut dyn FnMut(u64, &StudyState) -> ParamAssignment,
    ) -> Result<Option<(u64, ParamAssignment)>, StoreError> {
        if !can_claim(&self.state, budget, None) {
            return Ok(None);
        }
        let id = self.state.next_id();
        let params = propose(id, &self.state);
        self.state.apply(JournalRecord::Claim { id, worker: worker_id.into(), params: params.clone(), ts: now_secs() });
        Ok(Some((id, params)))
    }

    fn finish(&mut self, id: u64, outcome: TrialOutcome, aux: BTreeMap<String, f64>) -> Result<(), StoreError> {
        let rec = finish_record(&self.meta, &self.state, id, outcome, aux)?;
        self.state.apply(rec);
        Ok(())
    }

    fn state(&mut self) -> Result<&StudyState, StoreError> {
        Ok(&self.state)
    }
}

fn param_cell(v: Option<&ParamValue>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn num_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per trial: `id, state, <params A–Z>, <objectives in study
/// order>, <aux A–Z>`. Missing values are empty cells.
pub fn export_csv(log: &mut dyn TrialLog, path: impl AsRef<Path>) -> Result<(), StoreError> {
    let objectives = log.meta().objectives.clone();
    let records: Vec<TrialRecord> = log.state()?.records().cloned().collect();
    write_records_csv(&records, &objectives, path)
}

/// [`export_csv`] for an explicit record list.
pub fn write_records_csv(
    records: &[TrialRecord],
    objectives: &[ObjectiveSpec],
    path: impl AsRef<Path>,
) -> Result<(), StoreError> {
    let mut params: Vec<&String> = records.iter().flat_map(|r| r.params.keys()).collect();
    params.sort();
    params.dedup();
    // objectives already have their own columns
    let mut aux: Vec<&String> =
        records.iter().flat_map(|r| r.aux.keys()).filter(|k| !objectives.iter().any(|o| &o.name == *k)).collect();
    aux.sort();
    aux.dedup();
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| StoreError::Io { path: path.into(), source: e.into() })?;
    let to_err = |e: csv::Error| StoreError::Io { path: path.into(), source: e.into() };
    let mut header = vec!["id".to_string(), "state".to_string()];
    header.extend(params.iter().map(|p| p.to_string()));
    header.extend(objectives.iter().map(|o| o.name.clone()));
    header.extend(aux.iter().map(|a| a.to_string()));
    w.write_record(&header).map_err(to_err)?;
    for r in records {
        let mut row = vec![r.trial_id.to_string(), r.state.to_string()];
        row.extend(params.iter().map(|p| param_cell(r.params.get(*p))));
        row.extend((0..objectives.len()).map(|i| num_cell(r.objectives.as_ref().map(|o| o[i]))));
        row.extend(aux.iter().map(|a| num_cell(r.aux.get(*a).copied())));
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| StoreError::Io { path: path.into(), source: e })?;
    Ok(())
}
