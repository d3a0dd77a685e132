//! Record store: an append-only JSON-lines event log plus a periodic
//! snapshot. Opening a data directory loads the snapshot and replays the log
//! entries written after it.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};
use crate::record::{NewRecord, Outcome, PatientRecord};

pub const SNAPSHOT_FORMAT: &str = "vdpt.store_snapshot.v1";
pub const LOG_FILE: &str = "records.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Event {
    Create { record: PatientRecord },
    Outcome { id: String, outcome: Outcome, at_ms: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoreState {
    pub records: Vec<PatientRecord>,
    pub next_id: u64,
    /// Log events folded into this state.
    pub applied: usize,
}

impl StoreState {
    fn position(&self, id: &str) -> Option<usize> {
        self.records.iter().position(|r| r.id == id)
    }

    /// Applies one event. Live writes and replay share this function.
    pub fn apply(&mut self, event: &Event) -> Result<()> {
        match event {
            Event::Create { record } => {
                if self.position(&record.id).is_some() {
                    return Err(ServiceError::CorruptLog {
                        line: self.applied + 1,
                        message: format!("duplicate record id `{}`", record.id),
                    });
                }
                self.records.push(record.clone());
                self.next_id += 1;
            }
            Event::Outcome { id, outcome, at_ms } => {
                let i = self.position(id).ok_or_else(|| ServiceError::NotFound(id.clone()))?;
                let r = &mut self.records[i];
                if r.outcome.is_some() {
                    return Err(ServiceError::OutcomeAlreadySet(id.clone()));
                }
                r.outcome = Some(*outcome);
                r.outcome_ms = Some(*at_ms);
            }
        }
        self.applied += 1;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    format: String,
    state: StoreState,
}

#[derive(Debug)]
struct Persistence {
    dir: PathBuf,
    log: File,
    snapshot_every: usize,
}

#[derive(Debug)]
pub struct Store {
    state: StoreState,
    index: HashMap<String, usize>,
    by_key: HashMap<String, String>,
    persistence: Option<Persistence>,
}

impl Store {
    pub fn in_memory() -> Self {
        Self::from_state(StoreState::default(), None)
    }

    fn from_state(state: StoreState, persistence: Option<Persistence>) -> Self {
        let mut store = Self {
            state,
            index: HashMap::new(),
            by_key: HashMap::new(),
            persistence,
        };
        for i in 0..store.state.records.len() {
            store.index_record(i);
        }
        store
    }

    fn index_record(&mut self, i: usize) {
        let r = &self.state.records[i];
        self.index.insert(r.id.clone(), i);
        if let Some(k) = &r.idempotency_key {
            self.by_key.insert(k.clone(), r.id.clone());
        }
    }

    /// Opens (creating if needed) a data directory. A torn final log line from
    /// an interrupted write is truncated away; any other malformed line is an
    /// error.
    pub fn open(dir: impl AsRef<Path>, snapshot_every: usize) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut state = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => {
                let snap: Snapshot = serde_json::from_str(&text)?;
                if snap.format != SNAPSHOT_FORMAT {
                    return Err(ServiceError::CorruptLog {
                        line: 0,
                        message: format!("snapshot format `{}`", snap.format),
                    });
                }
                snap.state
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => StoreState::default(),
            Err(e) => return Err(e.into()),
        };
        let log_path = dir.join(LOG_FILE);
        let mut log = OpenOptions::new().create(true).read(true).append(true).open(&log_path)?;
        let good_len = replay(&mut state, &log)?;
        if good_len < log.metadata()?.len() {
            log.set_len(good_len)?;
            log.seek(SeekFrom::End(0))?;
        }
        Ok(Self::from_state(
            state,
            Some(Persistence {
                dir,
                log,
                snapshot_every: snapshot_every.max(1),
            }),
        ))
    }

    pub fn state(&self) -> &StoreState {
        &self.state
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.state.records
    }

    pub fn get(&self, id: &str) -> Option<&PatientRecord> {
        self.index.get(id).map(|&i| &self.state.records[i])
    }

    pub fn find_by_key(&self, key: &str) -> Option<&PatientRecord> {
        self.by_key.get(key).and_then(|id| self.get(id))
    }

    fn commit(&mut self, event: Event) -> Result<()> {
        // a rejected event must never reach the log
        if let Event::Outcome { id, .. } = &event {
            let r = self.get(id).ok_or_else(|| ServiceError::NotFound(id.clone()))?;
            if r.outcome.is_some() {
                return Err(ServiceError::OutcomeAlreadySet(id.clone()));
            }
        }
        if let Some(p) = &mut self.persistence {
            let mut line = serde_json::to_string(&event)?;
            line.push('\n');
            p.log.write_all(line.as_bytes())?;
            p.log.sync_data()?;
        }
        self.state.apply(&event)?;
        if let Event::Create { .. } = event {
            self.index_record(self.state.records.len() - 1);
        }
        if let Some(p) = &self.persistence {
            if self.state.applied % p.snapshot_every == 0 {
                self.snapshot()?;
            }
        }
        Ok(())
    }

    /// Stores a new record, or returns the existing one when its
    /// idempotency key has been seen.
    pub fn create(&mut self, new: NewRecord) -> Result<PatientRecord> {
        if let Some(existing) = new.idempotency_key.as_deref().and_then(|k| self.find_by_key(k)) {
            return Ok(existing.clone());
        }
        let record = PatientRecord {
            id: format!("r{:06}", self.state.next_id + 1),
            created_ms: new.created_ms,
            features: new.features,
            clinician_prediction: new.clinician_prediction,
            outputs: new.outputs,
            outcome: None,
            outcome_ms: None,
            cohort: new.cohort,
            idempotency_key: new.idempotency_key,
        };
        self.commit(Event::Create { record: record.clone() })?;
        Ok(record)
    }

    pub fn set_outcome(&mut self, id: &str, outcome: Outcome, at_ms: u64) -> Result<PatientRecord> {
        self.commit(Event::Outcome {
            id: id.to_string(),
            outcome,
            at_ms,
        })?;
        Ok(self.get(id).expect("just updated").clone())
    }

    /// Writes the current state atomically (temp file, then rename).
    pub fn snapshot(&self) -> Result<()> {
        let Some(p) = &self.persistence else {
            return Ok(());
        };
        let tmp = p.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let snap = Snapshot {
            format: SNAPSHOT_FORMAT.into(),
            state: self.state.clone(),
        };
        fs::write(&tmp, serde_json::to_vec(&snap)?)?;
        fs::rename(&tmp, p.dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }
}

/// Folds log events after `state.applied` into `state`. Returns the byte
/// length of the valid prefix of the log.
fn replay(state: &mut StoreState, log: &File) -> Result<u64> {
    let mut reader = BufReader::new(log);
    reader.seek(SeekFrom::Start(0))?;
    let mut offset = 0u64;
    let mut line_no = 0usize;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        if !buf.ends_with('\n') {
            // torn write at the tail
            break;
        }
        line_no += 1;
        offset += n as u64;
        if line_no <= state.applied {
            continue;
        }
        let event: Event = serde_json::from_str(buf.trim_end()).map_err(|e| ServiceError::CorruptLog {
            line: line_no,
            message: e.to_string(),
        })?;
        state.apply(&event)?;
    }
    if line_no < state.applied {
        return Err(ServiceError::CorruptLog {
            line: line_no,
            message: format!("snapshot covers {} events but the log has {line_no}", state.applied),
        });
    }
    Ok(offset)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use vdpt_core::influence::{InfluenceConfig, InfluenceReport, REPORT_FORMAT};
    use vdpt_core::model::ModelKind;

    use super::*;
    use crate::record::{ClinicianPrediction, Explanation, ModelOutput, ModelOutputs};

    fn output(kind: ModelKind, p: f64) -> ModelOutput {
        let report = InfluenceReport {
            format: REPORT_FORMAT.into(),
            model: kind,
            instance_id: None,
            feature_names: vec!["a".into()],
            values: vec![0.25],
            test_label: u8::from(p >= 0.5),
            config: InfluenceConfig::default(),
            damping: 0.01,
            subsample_size: 10,
            cg_iterations: 3,
            cg_residual: 1e-9,
            cg_converged: true,
        };
        ModelOutput {
            probability: p,
            predicted_label: report.test_label,
            variance: None,
            confidence: None,
            explanation: Explanation {
                toward_mortality: crate::record::toward_mortality(&report),
                report,
            },
        }
    }

    fn new_record(i: u64, key: Option<&str>) -> NewRecord {
        NewRecord {
            created_ms: 1_000 + i,
            features: BTreeMap::from([("a".to_string(), i as f64 * 0.1)]),
            clinician_prediction: if i % 2 == 0 { ClinicianPrediction::Survive } else { ClinicianPrediction::Die },
            outputs: ModelOutputs {
                vdp: output(ModelKind::Vdp, 0.1 * (i % 10) as f64),
                mlp: output(ModelKind::Mlp, 0.7),
            },
            cohort: None,
            idempotency_key: key.map(str::to_string),
        }
    }

    fn populate(store: &mut Store, n: u64) {
        for i in 0..n {
            let r = store.create(new_record(i, None)).unwrap();
            if i % 3 == 0 {
                store.set_outcome(&r.id, Outcome::Died, 5_000 + i).unwrap();
            }
        }
    }

    #[test]
    fn replay_reconstructs_state() {
        for snapshot_every in [1, 4, 1000] {
            let dir = tempfile::tempdir().unwrap();
            let mut store = Store::open(dir.path(), snapshot_every).unwrap();
            populate(&mut store, 11);
            let before = store.state().clone();
            drop(store);
            let reopened = Store::open(dir.path(), snapshot_every).unwrap();
            assert_eq!(reopened.state(), &before);
            assert_eq!(reopened.get("r000004"), before.records.get(3));
        }
    }

    #[test]
    fn log_alone_reconstructs_state() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 2).unwrap();
        populate(&mut store, 7);
        let before = store.state().clone();
        drop(store);
        fs::remove_file(dir.path().join(SNAPSHOT_FILE)).unwrap();
        assert_eq!(Store::open(dir.path(), 2).unwrap().state(), &before);
    }

    #[test]
    fn writes_continue_after_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 3).unwrap();
        populate(&mut store, 4);
        drop(store);
        let mut store = Store::open(dir.path(), 3).unwrap();
        let r = store.create(new_record(9, None)).unwrap();
        assert_eq!(r.id, "r000005");
        let before = store.state().clone();
        drop(store);
        assert_eq!(Store::open(dir.path(), 3).unwrap().state(), &before);
    }

    #[test]
    fn torn_tail_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 1000).unwrap();
        populate(&mut store, 3);
        let before = store.state().clone();
        drop(store);
        let log = dir.path().join(LOG_FILE);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(br#"{"op":"create","rec"#).unwrap();
        drop(f);
        let mut store = Store::open(dir.path(), 1000).unwrap();
        assert_eq!(store.state(), &before);
        store.create(new_record(5, None)).unwrap();
        drop(store);
        assert_eq!(Store::open(dir.path(), 1000).unwrap().records().len(), 4);
    }

    #[test]
    fn corrupt_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 1000).unwrap();
        populate(&mut store, 2);
        drop(store);
        let mut f = OpenOptions::new().append(true).open(dir.path().join(LOG_FILE)).unwrap();
        f.write_all(b"not json\n").unwrap();
        drop(f);
        assert!(matches!(Store::open(dir.path(), 1000), Err(ServiceError::CorruptLog { .. })));
    }

    #[test]
    fn outcome_is_write_once() {
        let mut store = Store::in_memory();
        let r = store.create(new_record(0, None)).unwrap();
        store.set_outcome(&r.id, Outcome::Survived, 1).unwrap();
        assert!(matches!(
            store.set_outcome(&r.id, Outcome::Died, 2),
            Err(ServiceError::OutcomeAlreadySet(_))
        ));
        assert_eq!(store.get(&r.id).unwrap().outcome, Some(Outcome::Survived));
        assert!(matches!(store.set_outcome("r999999", Outcome::Died, 3), Err(ServiceError::NotFound(_))));
        assert_eq!(store.state().applied, 2);
    }

    #[test]
    fn rejected_events_never_reach_the_log() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 1000).unwrap();
        let r = store.create(new_record(0, None)).unwrap();
        store.set_outcome(&r.id, Outcome::Died, 1).unwrap();
        let _ = store.set_outcome(&r.id, Outcome::Survived, 2);
        let _ = store.set_outcome("missing", Outcome::Survived, 2);
        let lines = fs::read_to_string(dir.path().join(LOG_FILE)).unwrap().lines().count();
        assert_eq!(lines, 2);
    }

    #[test]
    fn idempotency_key_returns_existing_record() {
        let mut store = Store::in_memory();
        let a = store.create(new_record(0, Some("k1"))).unwrap();
        let b = store.create(new_record(1, Some("k1"))).unwrap();
        assert_eq!(a, b);
        assert_eq!(store.records().len(), 1);
        let c = store.create(new_record(1, Some("k2"))).unwrap();
        assert_ne!(a.id, c.id);
    }

    #[test]
    fn idempotency_survives_replay() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), 1000).unwrap();
        let a = store.create(new_record(0, Some("key"))).unwrap();
        drop(store);
        let mut store = Store::open(dir.path(), 1000).unwrap();
        assert_eq!(store.create(new_record(3, Some("key"))).unwrap(), a);
    }
}
