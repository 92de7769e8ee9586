//! Append-only preference memory.
//!
//! State is an event log: every record append and every feedback score is
//! one JSON line tagged with `event_kind`. Opening a store replays the log;
//! the live state is always equal to a replay of what has been written.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::domain::{utc_seconds, MemoryRecord, Origin, Score, TaskKind};
use crate::error::{Error, Result};

/// A user's score for a generated result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub result_id: String,
    pub user_id: String,
    pub task: TaskKind,
    pub score: Score,
    #[serde(with = "utc_seconds")]
    pub created_at: DateTime<Utc>,
}

/// One line of the memory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event_kind", rename_all = "snake_case")]
pub enum LogEvent {
    RecordAppended(MemoryRecord),
    FeedbackApplied(FeedbackEvent),
}

#[derive(Debug, Clone, PartialEq)]
enum Slot {
    Reserved,
    Committed { user_id: String, index: usize },
}

#[derive(Debug, Default)]
struct State {
    users: HashMap<String, Arc<Vec<MemoryRecord>>>,
    index: HashMap<String, Slot>,
}

impl State {
    fn committed(&self, record_id: &str) -> Option<(&str, usize)> {
        match self.index.get(record_id) {
            Some(Slot::Committed { user_id, index }) => Some((user_id.as_str(), *index)),
            _ => None,
        }
    }

    fn check_feedback(&self, event: &FeedbackEvent) -> Result<usize> {
        let (owner, index) = self
            .committed(&event.result_id)
            .ok_or_else(|| Error::UnknownResult(event.result_id.clone()))?;
        if owner != event.user_id {
            return Err(Error::UnknownResult(event.result_id.clone()));
        }
        let record = &self.users[owner][index];
        if record.origin == Origin::Bootstrap || record.user_score.is_some() {
            return Err(Error::AlreadyScored(event.result_id.clone()));
        }
        if record.task != event.task {
            return Err(Error::Invalid(format!(
                "feedback task {} does not match record task {}",
                event.task, record.task
            )));
        }
        Ok(index)
    }

    fn push(&mut self, record: MemoryRecord) {
        let records = self.users.entry(record.user_id.clone()).or_default();
        self.index.insert(
            record.record_id.clone(),
            Slot::Committed {
                user_id: record.user_id.clone(),
                index: records.len(),
            },
        );
        Arc::make_mut(records).push(record);
    }

    fn set_score(&mut self, user_id: &str, index: usize, score: Score) {
        let records = self.users.get_mut(user_id).expect("committed user exists");
        Arc::make_mut(records)[index].user_score = Some(score);
    }

    /// Applies one replayed event, enforcing the same rules as the live path.
    fn replay(&mut self, event: LogEvent) -> Result<()> {
        match event {
            LogEvent::RecordAppended(record) => {
                record.validate()?;
                if self.index.contains_key(&record.record_id) {
                    return Err(Error::DuplicateId(record.record_id));
                }
                self.push(record);
            }
            LogEvent::FeedbackApplied(event) => {
                let index = self.check_feedback(&event)?;
                self.set_score(&event.user_id, index, event.score);
            }
        }
        Ok(())
    }
}

struct LogFile {
    path: PathBuf,
    file: File,
    durable: bool,
}

impl LogFile {
    fn append(&mut self, event: &LogEvent) -> Result<()> {
        let mut line = serde_json::to_vec(event).map_err(|e| Error::Storage(e.to_string()))?;
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.flush())
            .map_err(|e| Error::Storage(format!("{}: {e}", self.path.display())))?;
        if self.durable {
            self.file
                .sync_data()
                .map_err(|e| Error::Storage(format!("{}: {e}", self.path.display())))?;
        }
        Ok(())
    }
}

/// Preference memory backed by an optional line-delimited log file.
///
/// Writers for one user are serialized; different users write
/// independently. Snapshots clone an `Arc` of the last committed list and
/// never observe a half-applied event.
pub struct MemoryStore {
    state: RwLock<State>,
    log: Option<Mutex<LogFile>>,
    user_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl MemoryStore {
    /// Store without persistence.
    pub fn in_memory() -> Self {
        MemoryStore {
            state: RwLock::new(State::default()),
            log: None,
            user_locks: Mutex::new(HashMap::new()),
        }
    }

    /// Opens (or creates) the log at `path` and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(path, true)
    }

    /// As [`MemoryStore::open`]; `durable = false` skips the per-append fsync.
    pub fn open_with(path: impl AsRef<Path>, durable: bool) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
        let state = replay_file(&path, &mut file)?;
        Ok(MemoryStore {
            state: RwLock::new(state),
            log: Some(Mutex::new(LogFile { path, file, durable })),
            user_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.log.as_ref().map(|l| l.lock().path.clone())
    }

    fn user_lock(&self, user_id: &str) -> Arc<Mutex<()>> {
        Arc::clone(self.user_locks.lock().entry(user_id.to_string()).or_default())
    }

    fn write(&self, event: &LogEvent) -> Result<()> {
        match &self.log {
            Some(log) => log.lock().append(event),
            None => Ok(()),
        }
    }

    pub fn append_record(&self, record: MemoryRecord) -> Result<()> {
        record.validate()?;
        let lock = self.user_lock(&record.user_id);
        let _guard = lock.lock();
        {
            let mut state = self.state.write();
            if state.index.contains_key(&record.record_id) {
                return Err(Error::DuplicateId(record.record_id));
            }
            state.index.insert(record.record_id.clone(), Slot::Reserved);
        }
        let event = LogEvent::RecordAppended(record);
        if let Err(err) = self.write(&event) {
            if let LogEvent::RecordAppended(record) = &event {
                self.state.write().index.remove(&record.record_id);
            }
            return Err(err);
        }
        let LogEvent::RecordAppended(record) = event else { unreachable!() };
        self.state.write().push(record);
        Ok(())
    }

    /// Folds a user score into a generated record. Each generated record
    /// accepts exactly one score; bootstrap records accept none.
    pub fn apply_feedback(&self, event: FeedbackEvent) -> Result<MemoryRecord> {
        let lock = self.user_lock(&event.user_id);
        let _guard = lock.lock();
        let index = self.state.read().check_feedback(&event)?;
        let log_event = LogEvent::FeedbackApplied(event.clone());
        self.write(&log_event)?;
        let mut state = self.state.write();
        state.set_score(&event.user_id, index, event.score);
        Ok(state.users[&event.user_id][index].clone())
    }

    /// All of a user's records in append order, with feedback folded in.
    pub fn snapshot(&self, user_id: &str) -> Arc<Vec<MemoryRecord>> {
        self.state
            .read()
            .users
            .get(user_id)
            .cloned()
            .unwrap_or_default()
    }

    pub fn get(&self, record_id: &str) -> Option<MemoryRecord> {
        let state = self.state.read();
        state
            .committed(record_id)
            .map(|(user, index)| state.users[user][index].clone())
    }

    /// Full state keyed by user, for comparisons and export.
    pub fn dump(&self) -> BTreeMap<String, Vec<MemoryRecord>> {
        self.state
            .read()
            .users
            .iter()
            .map(|(user, records)| (user.clone(), records.as_ref().clone()))
            .collect()
    }

    pub fn record_count(&self) -> usize {
        self.state.read().users.values().map(|r| r.len()).sum()
    }
}

/// Reads a log into a fresh state. A torn final line (no trailing newline,
/// undecodable) is treated as an interrupted write and cut off.
fn replay_file(path: &Path, file: &mut File) -> Result<State> {
    let storage = |e: std::io::Error| Error::Storage(format!("{}: {e}", path.display()));
    file.seek(SeekFrom::Start(0)).map_err(storage)?;
    let mut reader = BufReader::new(&*file);
    let mut state = State::default();
    let mut offset = 0u64;
    let mut line = String::new();
    let mut lineno = 0usize;
    let mut torn_at = None;
    loop {
        line.clear();
        let read = reader.read_line(&mut line).map_err(storage)?;
        if read == 0 {
            break;
        }
        lineno += 1;
        let complete = line.ends_with('\n');
        if line.trim().is_empty() {
            offset += read as u64;
            continue;
        }
        match serde_json::from_str::<LogEvent>(line.trim_end()) {
            Ok(event) => state.replay(event).map_err(|e| {
                Error::Storage(format!("{}:{lineno}: {e}", path.display()))
            })?,
            Err(_) if !complete => {
                torn_at = Some(offset);
                break;
            }
            Err(e) => return Err(Error::Storage(format!("{}:{lineno}: {e}", path.display()))),
        }
        offset += read as u64;
    }
    drop(reader);
    if let Some(at) = torn_at {
        log::warn!("{}: dropping torn final line at byte {at}", path.display());
        file.set_len(at).map_err(storage)?;
    }
    Ok(state)
}

/// Replays the log at `path` without opening it for writing.
pub fn replay_log(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<MemoryRecord>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Storage(format!("{}: {e}", path.display())))?;
    let mut state = State::default();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let event: LogEvent = serde_json::from_str(line)
            .map_err(|e| Error::Storage(format!("{}:{}: {e}", path.display(), n + 1)))?;
        state
            .replay(event)
            .map_err(|e| Error::Storage(format!("{}:{}: {e}", path.display(), n + 1)))?;
    }
    Ok(state
        .users
        .into_iter()
        .map(|(user, records)| (user, Arc::try_unwrap(records).unwrap_or_else(|a| a.as_ref().clone())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{now_utc, MediaKind, MediaRef};
    use proptest::prelude::*;

    fn record(id: &str, user: &str, origin: Origin) -> MemoryRecord {
        MemoryRecord {
            record_id: id.into(),
            user_id: user.into(),
            task: TaskKind::T2I,
            sample: MediaRef::new(MediaKind::Image, format!("{id}.png"), format!("hash-{id}")).unwrap(),
            vqa_score: Score::new(78.0).unwrap(),
            user_score: (origin == Origin::Bootstrap).then(|| Score::new(70.0).unwrap()),
            prompt_used: "a cat".into(),
            origin,
            created_at: now_utc(),
        }
    }

    fn feedback(id: &str, user: &str, score: f64) -> FeedbackEvent {
        FeedbackEvent {
            result_id: id.into(),
            user_id: user.into(),
            task: TaskKind::T2I,
            score: Score::new(score).unwrap(),
            created_at: now_utc(),
        }
    }

    #[test]
    fn append_and_duplicate() {
        let store = MemoryStore::in_memory();
        store.append_record(record("r1", "u", Origin::Generated)).unwrap();
        assert_eq!(store.snapshot("u").len(), 1);
        assert_eq!(
            store.append_record(record("r1", "u", Origin::Generated)),
            Err(Error::DuplicateId("r1".into()))
        );
        // ids are unique across users too
        assert!(store.append_record(record("r1", "v", Origin::Generated)).is_err());
        assert!(store.snapshot("nobody").is_empty());
    }

    #[test]
    fn feedback_rules() {
        let store = MemoryStore::in_memory();
        store.append_record(record("gen", "u", Origin::Generated)).unwrap();
        store.append_record(record("boot", "u", Origin::Bootstrap)).unwrap();
        let updated = store.apply_feedback(feedback("gen", "u", 85.0)).unwrap();
        assert_eq!(updated.user_score, Some(Score::new(85.0).unwrap()));
        assert_eq!(updated.vqa_score.value(), 78.0);
        assert_eq!(
            store.apply_feedback(feedback("gen", "u", 10.0)),
            Err(Error::AlreadyScored("gen".into()))
        );
        assert_eq!(
            store.apply_feedback(feedback("boot", "u", 10.0)),
            Err(Error::AlreadyScored("boot".into()))
        );
        assert_eq!(
            store.apply_feedback(feedback("nope", "u", 10.0)),
            Err(Error::UnknownResult("nope".into()))
        );
        assert_eq!(
            store.apply_feedback(feedback("gen", "someone-else", 10.0)),
            Err(Error::UnknownResult("gen".into()))
        );
        let snap = store.snapshot("u");
        assert_eq!(snap.len(), 2);
        assert_eq!(snap[0].user_score.unwrap().value(), 85.0);
    }

    #[test]
    fn reopen_recovers_records_and_feedback() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.log");
        {
            let store = MemoryStore::open(&path).unwrap();
            store.append_record(record("r1", "u", Origin::Generated)).unwrap();
            store.append_record(record("r2", "u", Origin::Bootstrap)).unwrap();
            store.apply_feedback(feedback("r1", "u", 90.0)).unwrap();
        }
        let reopened = MemoryStore::open(&path).unwrap();
        let snap = reopened.snapshot("u");
        assert_eq!(snap.len(), 2);
        assert_eq!(snap[0].user_score.unwrap().value(), 90.0);
        assert_eq!(reopened.apply_feedback(feedback("r1", "u", 1.0)), Err(Error::AlreadyScored("r1".into())));

        let text = std::fs::read_to_string(&path).unwrap();
        let kinds: Vec<String> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["event_kind"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(kinds, ["record_appended", "record_appended", "feedback_applied"]);
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.log");
        {
            let store = MemoryStore::open(&path).unwrap();
            store.append_record(record("r1", "u", Origin::Generated)).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"event_kind\":\"record_app").unwrap();
        drop(f);
        let store = MemoryStore::open(&path).unwrap();
        assert_eq!(store.snapshot("u").len(), 1);
        store.append_record(record("r2", "u", Origin::Generated)).unwrap();
        assert_eq!(replay_log(&path).unwrap()["u"].len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.log");
        std::fs::write(&path, "garbage\n").unwrap();
        assert!(matches!(MemoryStore::open(&path), Err(Error::Storage(_))));
    }

    #[test]
    fn snapshots_never_see_partial_state() {
        let store = Arc::new(MemoryStore::in_memory());
        let writer = {
            let store = Arc::clone(&store);
            std::thread::spawn(move || {
                for i in 0..500 {
                    store.append_record(record(&format!("r{i}"), "u", Origin::Generated)).unwrap();
                }
            })
        };
        let mut last = 0;
        while last < 500 {
            let snap = store.snapshot("u");
            assert!(snap.len() >= last);
            for (i, rec) in snap.iter().enumerate() {
                assert_eq!(rec.record_id, format!("r{i}"));
            }
            last = snap.len();
        }
        writer.join().unwrap();
    }

    #[derive(Debug, Clone)]
    enum Op {
        Append { user: u8, generated: bool },
        Feedback { target: usize, user: u8, score: u8 },
    }

    fn arb_op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u8..3, any::<bool>()).prop_map(|(user, generated)| Op::Append { user, generated }),
            (0usize..40, 0u8..3, 0u8..=100).prop_map(|(target, user, score)| Op::Feedback { target, user, score }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn replay_equals_live_state(ops in prop::collection::vec(arb_op(), 1..40)) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.log");
            let store = MemoryStore::open_with(&path, false).unwrap();
            let mut ids: Vec<String> = Vec::new();
            let mut scored = std::collections::HashSet::new();
            for op in ops {
                match op {
                    Op::Append { user, generated } => {
                        let id = format!("r{}", ids.len());
                        let origin = if generated { Origin::Generated } else { Origin::Bootstrap };
                        store.append_record(record(&id, &format!("u{user}"), origin)).unwrap();
                        ids.push(id);
                    }
                    Op::Feedback { target, user, score } => {
                        let id = ids.get(target).cloned().unwrap_or_else(|| "missing".into());
                        let result = store.apply_feedback(feedback(&id, &format!("u{user}"), score as f64));
                        if result.is_ok() {
                            prop_assert!(scored.insert(id), "second score accepted");
                        }
                    }
                }
            }
            prop_assert_eq!(replay_log(&path).unwrap(), store.dump());
        }
    }
}
