//! Append-only, line-delimited JSON record of every pair transition.
//!
//! Replaying the file and keeping the last entry per `doc_id` rebuilds the
//! pipeline state. A `run` line is appended whenever a process opens the
//! ledger for writing and carries the config hash the run was started with.
//! One writer at a time is enforced with an advisory lock on `<ledger>.lock`.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions, TryLockError};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stages::{CandidatePair, Status};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub doc_id: String,
    pub status: Status,
    pub payload: CandidatePair,
    pub updated_at: String,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Run { config_hash: String, started_at: String },
    Entry(LedgerEntry),
}

/// State rebuilt from a ledger file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LedgerState {
    pub entries: BTreeMap<String, LedgerEntry>,
    pub config_hash: Option<String>,
    pub runs: usize,
    pub lines: usize,
}

impl LedgerState {
    /// Current pairs in ascending `doc_id` order.
    pub fn pairs(&self) -> impl Iterator<Item = &CandidatePair> {
        self.entries.values().map(|e| &e.payload)
    }

    fn apply(&mut self, line: Line) {
        self.lines += 1;
        match line {
            Line::Run { config_hash, .. } => {
                self.config_hash = Some(config_hash);
                self.runs += 1;
            }
            Line::Entry(entry) => {
                self.entries.insert(entry.doc_id.clone(), entry);
            }
        }
    }
}

/// Replays a ledger without taking the lock. A final line cut short by a
/// crash is ignored; any other malformed line is an error.
pub fn replay(path: &Path) -> Result<LedgerState> {
    let mut state = LedgerState::default();
    let file = match File::open(path) {
        Ok(file) => file,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(state),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut reader = BufReader::new(file);
    let mut buffer = String::new();
    let mut line_no = 0;
    loop {
        buffer.clear();
        let read = reader.read_line(&mut buffer).map_err(|e| Error::io(path, e))?;
        if read == 0 {
            break;
        }
        line_no += 1;
        let complete = buffer.ends_with('\n');
        let text = buffer.trim();
        if text.is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(text) {
            Ok(line) => state.apply(line),
            Err(_) if !complete => {
                tracing::warn!(path = %path.display(), line = line_no, "ignoring truncated final ledger line");
            }
            Err(e) => {
                return Err(Error::Ledger(format!("{}:{line_no}: {e}", path.display())));
            }
        }
    }
    Ok(state)
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn lock_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".lock");
    PathBuf::from(name)
}

pub struct Ledger {
    path: PathBuf,
    file: File,
    _lock: File,
    state: LedgerState,
    writes: usize,
    crash_after: Option<usize>,
}

impl std::fmt::Debug for Ledger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ledger")
            .field("path", &self.path)
            .field("entries", &self.state.entries.len())
            .field("writes", &self.writes)
            .finish()
    }
}

impl Ledger {
    /// Locks, replays and opens the ledger for appending. A ledger last
    /// written under a different config hash is refused unless `force`.
    pub fn open(path: &Path, config_hash: &str, force: bool) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let lock_file_path = lock_path(path);
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&lock_file_path)
            .map_err(|e| Error::io(&lock_file_path, e))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(Error::LockHeld(lock_file_path)),
            Err(TryLockError::Error(e)) => return Err(Error::io(&lock_file_path, e)),
        }

        let state = replay(path)?;
        if let Some(previous) = &state.config_hash {
            if previous != config_hash && !force {
                return Err(Error::ConfigHashMismatch {
                    ledger: previous.clone(),
                    current: config_hash.to_string(),
                });
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut ledger = Self {
            path: path.to_path_buf(),
            file,
            _lock: lock,
            state,
            writes: 0,
            crash_after: None,
        };
        ledger.write_line(Line::Run {
            config_hash: config_hash.to_string(),
            started_at: now(),
        })?;
        Ok(ledger)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn state(&self) -> &LedgerState {
        &self.state
    }

    pub fn get(&self, doc_id: &str) -> Option<&CandidatePair> {
        self.state.entries.get(doc_id).map(|e| &e.payload)
    }

    pub fn pairs(&self) -> Vec<CandidatePair> {
        self.state.pairs().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.state.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.state.entries.is_empty()
    }

    /// Entries appended through this handle.
    pub fn writes(&self) -> usize {
        self.writes
    }

    /// Fault injection: the append that brings this handle's writes to `n`
    /// persists its entry, then reports [`Error::Interrupted`]. The caller is
    /// expected to stop dispatching, flush results already in flight (later
    /// appends succeed) and exit, as an orchestrator does on SIGTERM.
    pub fn crash_after(&mut self, n: usize) {
        self.crash_after = Some(n);
    }

    fn write_line(&mut self, line: Line) -> Result<()> {
        let mut bytes = serde_json::to_vec(&line)?;
        bytes.push(b'\n');
        self.file.write_all(&bytes).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))?;
        self.state.apply(line);
        Ok(())
    }

    pub fn append(&mut self, pair: &CandidatePair) -> Result<()> {
        let attempt_count = self
            .state
            .entries
            .get(&pair.doc_id)
            .map_or(1, |e| e.attempt_count + 1);
        self.write_line(Line::Entry(LedgerEntry {
            doc_id: pair.doc_id.clone(),
            status: pair.status,
            payload: pair.clone(),
            updated_at: now(),
            attempt_count,
        }))?;
        self.writes += 1;
        match self.crash_after {
            Some(limit) if self.writes == limit => Err(Error::Interrupted(self.writes)),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(id: &str, status: Status) -> CandidatePair {
        CandidatePair {
            status,
            ..CandidatePair::new(id, format!("text of {id}"))
        }
    }

    #[test]
    fn last_entry_wins_and_replay_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut ledger = Ledger::open(&path, "h1", false).unwrap();
        ledger.append(&pair("b", Status::Ingested)).unwrap();
        ledger.append(&pair("a", Status::Ingested)).unwrap();
        let mut done = pair("b", Status::Backtranslated);
        done.instruction = Some("Q".into());
        ledger.append(&done).unwrap();
        assert_eq!(ledger.get("b"), Some(&done));
        assert_eq!(ledger.state().entries["b"].attempt_count, 2);
        let in_memory = ledger.state().entries.clone();
        drop(ledger);

        let replayed = replay(&path).unwrap();
        assert_eq!(replayed.entries, in_memory);
        let ids: Vec<_> = replayed.pairs().map(|p| p.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(replayed.config_hash.as_deref(), Some("h1"));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 4);
    }

    #[test]
    fn second_writer_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let _first = Ledger::open(&path, "h", false).unwrap();
        assert!(matches!(Ledger::open(&path, "h", false), Err(Error::LockHeld(_))));
    }

    #[test]
    fn lock_is_released_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        drop(Ledger::open(&path, "h", false).unwrap());
        assert!(Ledger::open(&path, "h", false).is_ok());
    }

    #[test]
    fn config_hash_change_needs_force() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        drop(Ledger::open(&path, "old", false).unwrap());
        assert!(matches!(
            Ledger::open(&path, "new", false),
            Err(Error::ConfigHashMismatch { .. })
        ));
        drop(Ledger::open(&path, "new", true).unwrap());
        assert_eq!(replay(&path).unwrap().config_hash.as_deref(), Some("new"));
        assert!(Ledger::open(&path, "new", false).is_ok());
    }

    #[test]
    fn truncated_tail_is_ignored_but_corruption_is_not() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut ledger = Ledger::open(&path, "h", false).unwrap();
        ledger.append(&pair("a", Status::Ingested)).unwrap();
        drop(ledger);
        let mut file = OpenOptions::new().append(true).open(&path).unwrap();
        file.write_all(b"{\"kind\":\"entry\",\"doc_id\":\"b\",\"sta").unwrap();
        drop(file);
        assert_eq!(replay(&path).unwrap().entries.len(), 1);

        std::fs::write(&path, "garbage\n{\"kind\":\"run\",\"config_hash\":\"h\",\"started_at\":\"t\"}\n").unwrap();
        assert!(matches!(replay(&path), Err(Error::Ledger(_))));
    }

    #[test]
    fn crash_injection_persists_then_interrupts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.jsonl");
        let mut ledger = Ledger::open(&path, "h", false).unwrap();
        ledger.crash_after(2);
        ledger.append(&pair("a", Status::Ingested)).unwrap();
        assert!(matches!(ledger.append(&pair("b", Status::Ingested)), Err(Error::Interrupted(2))));
        ledger.append(&pair("c", Status::Ingested)).unwrap();
        drop(ledger);
        assert_eq!(replay(&path).unwrap().entries.len(), 3);
    }

    #[test]
    fn missing_file_replays_empty() {
        let state = replay(Path::new("/nonexistent/ledger.jsonl")).unwrap();
        assert!(state.entries.is_empty());
    }
}
