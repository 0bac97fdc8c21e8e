//! Persistent fraud-user blacklist.
//!
//! Stored as newline-delimited JSON events. Every commit appends the
//! entries it changed, stamped with a logical revision one above the
//! largest revision in the file. Loading folds the events into one entry
//! per user and rewrites the file when events were superseded. Provenance
//! only escalates: potential < detected < labeled.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Potential,
    Detected,
    Labeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub user_id: String,
    pub provenance: Provenance,
    /// Logical timestamp of the commit that last escalated this entry.
    pub revision: u64,
    /// Fraud ratio of the group that surfaced the user; potential entries only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_fraud_ratio: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Change {
    Added,
    Promoted,
    Unchanged,
}

/// Exclusive hold on a blacklist file, released on drop.
#[derive(Debug)]
struct Lock(PathBuf);

impl Lock {
    fn acquire(blacklist: &Path) -> Result<Self> {
        let mut name = blacklist.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Lock(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(blacklist.to_path_buf())),
            Err(e) => Err(CliError::io(format!("creating {}", path.display()), e)),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

#[derive(Debug)]
pub struct Blacklist {
    path: PathBuf,
    entries: BTreeMap<String, Entry>,
    revision: u64,
    pending: Vec<String>,
    _lock: Lock,
}

impl Blacklist {
    /// Locks and loads the blacklist at `path`, creating an empty one if
    /// the file does not exist.
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        }
        let lock = Lock::acquire(path)?;
        let (entries, n_events) = if path.exists() { read_events(path)? } else { (BTreeMap::new(), 0) };
        let revision = entries.values().map(|e| e.revision).max().unwrap_or(0);
        let list = Blacklist {
            path: path.to_path_buf(),
            entries,
            revision,
            pending: Vec::new(),
            _lock: lock,
        };
        if n_events > list.entries.len() {
            list.compact()?;
        }
        Ok(list)
    }

    /// Entries of the file at `path` without taking the lock.
    pub fn read(path: &Path) -> Result<BTreeMap<String, Entry>> {
        Ok(read_events(path)?.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn get(&self, user_id: &str) -> Option<&Entry> {
        self.entries.get(user_id)
    }

    pub fn count(&self, provenance: Provenance) -> usize {
        self.entries.values().filter(|e| e.provenance == provenance).count()
    }

    /// Records `user_id` with `provenance`, escalating an existing entry
    /// when the new provenance ranks higher. Takes effect on [`commit`](Self::commit).
    pub fn insert(&mut self, user_id: &str, provenance: Provenance, group_fraud_ratio: Option<f64>) -> Result<Change> {
        let revision = self.revision + 1;
        let ratio = if provenance == Provenance::Potential { group_fraud_ratio } else { None };
        let change = match self.entries.get(user_id) {
            Some(e) if e.provenance >= provenance => return Ok(Change::Unchanged),
            Some(_) => Change::Promoted,
            None => Change::Added,
        };
        let entry = Entry {
            user_id: user_id.to_string(),
            provenance,
            revision,
            group_fraud_ratio: ratio,
        };
        self.pending.push(serde_json::to_string(&entry)?);
        self.entries.insert(user_id.to_string(), entry);
        Ok(change)
    }

    /// Appends the pending events and advances the revision. A commit with
    /// no pending events leaves the file untouched.
    pub fn commit(&mut self) -> Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CliError::io(format!("opening {}", self.path.display()), e))?;
        let mut buf = self.pending.join("\n");
        buf.push('\n');
        f.write_all(buf.as_bytes())
            .and_then(|_| f.sync_all())
            .map_err(|e| CliError::io(format!("appending to {}", self.path.display()), e))?;
        self.pending.clear();
        self.revision += 1;
        Ok(())
    }

    /// Rewrites the file with one event per user, atomically.
    fn compact(&self) -> Result<()> {
        let mut tmp = self.path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let mut text = String::new();
        let mut ordered: Vec<&Entry> = self.entries.values().collect();
        ordered.sort_by(|a, b| a.revision.cmp(&b.revision).then_with(|| a.user_id.cmp(&b.user_id)));
        for e in ordered {
            text.push_str(&serde_json::to_string(e)?);
            text.push('\n');
        }
        fs::write(&tmp, text).map_err(|e| CliError::io(format!("writing {}", tmp.display()), e))?;
        fs::rename(&tmp, &self.path).map_err(|e| CliError::io(format!("replacing {}", self.path.display()), e))
    }
}

/// Folds the event log into the latest, highest-provenance entry per user.
fn read_events(path: &Path) -> Result<(BTreeMap<String, Entry>, usize)> {
    let file = File::open(path).map_err(|e| CliError::io(format!("opening {}", path.display()), e))?;
    let mut entries: BTreeMap<String, Entry> = BTreeMap::new();
    let mut n = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: Entry = serde_json::from_str(&line).map_err(|e| CliError::Blacklist {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        n += 1;
        match entries.get(&entry.user_id) {
            Some(old) if old.provenance >= entry.provenance => {}
            _ => {
                entries.insert(entry.user_id.clone(), entry);
            }
        }
    }
    Ok((entries, n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_every_entry() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        let snapshot: Vec<Entry> = {
            let mut bl = Blacklist::open(&path).unwrap();
            bl.insert("a", Provenance::Labeled, None).unwrap();
            bl.insert("b", Provenance::Potential, Some(0.8125)).unwrap();
            bl.commit().unwrap();
            bl.insert("c", Provenance::Detected, None).unwrap();
            bl.commit().unwrap();
            bl.entries.values().cloned().collect()
        };
        let bl = Blacklist::open(&path).unwrap();
        assert_eq!(bl.entries.values().cloned().collect::<Vec<_>>(), snapshot);
        assert_eq!(bl.revision(), 2);
        assert_eq!(Blacklist::read(&path).unwrap().len(), 3);
    }

    #[test]
    fn provenance_only_escalates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        let mut bl = Blacklist::open(&path).unwrap();
        assert_eq!(bl.insert("u", Provenance::Potential, Some(0.9)).unwrap(), Change::Added);
        bl.commit().unwrap();
        assert_eq!(bl.insert("u", Provenance::Potential, Some(0.75)).unwrap(), Change::Unchanged);
        assert_eq!(bl.insert("u", Provenance::Detected, None).unwrap(), Change::Promoted);
        bl.commit().unwrap();
        assert_eq!(bl.insert("u", Provenance::Potential, Some(0.9)).unwrap(), Change::Unchanged);
        assert_eq!(bl.insert("u", Provenance::Detected, None).unwrap(), Change::Unchanged);
        let e = bl.get("u").unwrap();
        assert_eq!((e.provenance, e.revision, e.group_fraud_ratio), (Provenance::Detected, 2, None));
    }

    #[test]
    fn superseded_events_are_compacted_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        {
            let mut bl = Blacklist::open(&path).unwrap();
            bl.insert("u", Provenance::Potential, Some(0.9)).unwrap();
            bl.insert("v", Provenance::Potential, Some(0.9)).unwrap();
            bl.commit().unwrap();
            bl.insert("u", Provenance::Labeled, None).unwrap();
            bl.commit().unwrap();
        }
        assert_eq!(fs::read_to_string(&path).unwrap().lines().count(), 3);
        let bl = Blacklist::open(&path).unwrap();
        assert_eq!(bl.len(), 2);
        drop(bl);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().last().unwrap().contains("\"labeled\""));
    }

    #[test]
    fn second_writer_is_refused_until_release() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        let first = Blacklist::open(&path).unwrap();
        assert!(matches!(Blacklist::open(&path), Err(CliError::Locked(_))));
        drop(first);
        Blacklist::open(&path).unwrap();
    }

    #[test]
    fn malformed_line_reports_its_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        fs::write(&path, "{\"user_id\":\"a\",\"provenance\":\"labeled\",\"revision\":1}\nnot json\n").unwrap();
        match Blacklist::open(&path) {
            Err(CliError::Blacklist { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_commit_leaves_file_absent() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bl.ndjson");
        let mut bl = Blacklist::open(&path).unwrap();
        bl.commit().unwrap();
        assert!(!path.exists());
        assert_eq!(bl.revision(), 0);
    }
}
