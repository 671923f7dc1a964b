//! Durable ledger: newline-delimited JSON records, fsync per write.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use super::ledger::{AnchorPolicy, Completion, LedgerBackend, LedgerEntry, LedgerState};
use super::types::{AnchorEntry, AnchorId, HashLink};
use super::AnchorError;

#[derive(Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
enum Record {
    Create {
        anchor_id: AnchorId,
    },
    Append {
        anchor_id: AnchorId,
        entry: AnchorEntry,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp: Option<u64>,
    },
}

pub struct FileLedger {
    path: PathBuf,
    state: LedgerState,
    // Every mutation holds this lock from check to fsync.
    file: Mutex<File>,
}

impl FileLedger {
    /// Opens or creates the log at `path` and replays it. A torn final line
    /// left by a crash is dropped; any other bad record is an error.
    pub fn open(path: impl AsRef<Path>, policy: AnchorPolicy) -> Result<FileLedger, AnchorError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)?;
        let state = LedgerState::new(policy);
        let valid_len = replay(&mut file, &state)?;
        if valid_len < file.metadata()?.len() {
            file.set_len(valid_len)?;
            file.sync_all()?;
        }
        Ok(FileLedger {
            path,
            state,
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write_record(file: &mut File, record: &Record) -> Result<(), AnchorError> {
        let mut line = serde_json::to_vec(record).map_err(|e| AnchorError::Io(e.to_string()))?;
        line.push(b'\n');
        file.write_all(&line)?;
        file.sync_data()?;
        Ok(())
    }
}

/// Returns the byte length of the valid prefix.
fn replay(file: &mut File, state: &LedgerState) -> Result<u64, AnchorError> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*file);
    let mut offset = 0u64;
    let mut line = String::new();
    let mut number = 0usize;
    loop {
        line.clear();
        let read = reader.read_line(&mut line)?;
        if read == 0 {
            return Ok(offset);
        }
        number += 1;
        let complete = line.ends_with('\n');
        let record: Record = match serde_json::from_str(line.trim_end()) {
            Ok(r) => r,
            Err(_) if !complete => return Ok(offset),
            Err(e) => return Err(AnchorError::Corrupt(format!("line {number}: {e}"))),
        };
        match record {
            Record::Create { anchor_id } => state
                .create(&anchor_id)
                .map_err(|e| AnchorError::Corrupt(format!("line {number}: {e}")))?,
            Record::Append {
                anchor_id,
                entry,
                timestamp,
            } => state
                .restore(&anchor_id, LedgerEntry { entry, timestamp })
                .map_err(|e| AnchorError::Corrupt(format!("line {number}: {e}")))?,
        }
        offset += read as u64;
    }
}

impl LedgerBackend for FileLedger {
    fn create(&self, anchor_id: &AnchorId) -> Result<(), AnchorError> {
        let mut file = self.file.lock();
        if self.state.contains(anchor_id) {
            return Err(AnchorError::AlreadyExists(anchor_id.to_string()));
        }
        Self::write_record(
            &mut file,
            &Record::Create {
                anchor_id: anchor_id.clone(),
            },
        )?;
        self.state.create(anchor_id)
    }

    fn submit(
        &self,
        anchor_id: &AnchorId,
        entry: AnchorEntry,
        expected_last: Option<HashLink>,
        done: Completion,
    ) {
        let result = {
            let mut file = self.file.lock();
            self.state
                .append_with(anchor_id, &entry, expected_last.as_ref(), |stored| {
                    Self::write_record(
                        &mut file,
                        &Record::Append {
                            anchor_id: anchor_id.clone(),
                            entry: stored.entry.clone(),
                            timestamp: stored.timestamp,
                        },
                    )
                })
        };
        done(result);
    }

    fn history(&self, anchor_id: &AnchorId) -> Result<Vec<LedgerEntry>, AnchorError> {
        self.state.history(anchor_id)
    }

    fn tail(&self, anchor_id: &AnchorId) -> Result<Option<HashLink>, AnchorError> {
        self.state.tail(anchor_id)
    }
}
