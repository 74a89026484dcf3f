use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use super::fault::FaultInjector;
use super::{RecordKind, Result, StoreError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct WalWrite {
    pub kind: RecordKind,
    pub id: String,
    pub version: u64,
    pub body: Value,
    pub blobs: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct WalEntry {
    pub seq: u64,
    pub writes: Vec<WalWrite>,
}

pub(crate) struct Wal {
    file: File,
    seq: u64,
    since_checkpoint: u64,
}

fn checksum(json: &[u8]) -> String {
    hex::encode(Sha256::digest(json))
}

fn decode_line(line: &[u8]) -> Option<WalEntry> {
    if line.len() < 66 || line[64] != b' ' {
        return None;
    }
    let (sum, json) = (&line[..64], &line[65..]);
    if checksum(json).as_bytes() != sum {
        return None;
    }
    serde_json::from_slice(json).ok()
}

impl Wal {
    /// Open the log, returning every intact entry. A torn final line is cut off.
    pub(crate) fn open(path: PathBuf) -> Result<(Wal, Vec<WalEntry>)> {
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let mut entries = Vec::new();
        let mut good_len = 0usize;
        let mut rest = &bytes[..];
        while !rest.is_empty() {
            let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
                break;
            };
            let line = &rest[..nl];
            match decode_line(line) {
                Some(entry) => entries.push(entry),
                None => {
                    if nl + 1 == rest.len() {
                        break;
                    }
                    return Err(StoreError::Corrupt(format!(
                        "log entry at byte {good_len} fails its checksum"
                    )));
                }
            }
            good_len += nl + 1;
            rest = &rest[nl + 1..];
        }

        let mut file = OpenOptions::new().create(true).read(true).write(true).truncate(false).open(&path)?;
        if good_len < bytes.len() {
            tracing::warn!(
                dropped = bytes.len() - good_len,
                "truncating torn tail of metadata log"
            );
            file.set_len(good_len as u64)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let since_checkpoint = entries.len() as u64;
        Ok((
            Wal {
                file,
                seq: 0,
                since_checkpoint,
            },
            entries,
        ))
    }

    pub(crate) fn set_seq(&mut self, seq: u64) {
        self.seq = seq;
    }

    pub(crate) fn seq(&self) -> u64 {
        self.seq
    }

    pub(crate) fn next_seq(&self) -> u64 {
        self.seq + 1
    }

    pub(crate) fn advance(&mut self, seq: u64) {
        self.seq = seq;
        self.since_checkpoint += 1;
    }

    pub(crate) fn entries_since_checkpoint(&self) -> u64 {
        self.since_checkpoint
    }

    pub(crate) fn append(&mut self, entry: &WalEntry, faults: &FaultInjector) -> Result<()> {
        let json = serde_json::to_vec(entry).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        let mut line = Vec::with_capacity(json.len() + 66);
        line.extend_from_slice(checksum(&json).as_bytes());
        line.push(b' ');
        line.extend_from_slice(&json);
        line.push(b'\n');

        let file = &mut self.file;
        faults.step_with(|| {
            let _ = file.write_all(&line[..line.len() / 2]);
        })?;
        self.file.write_all(&line)?;
        faults.step()?;
        self.file.sync_data()?;
        Ok(())
    }

    pub(crate) fn reset(&mut self) -> Result<()> {
        self.file.set_len(0)?;
        self.file.seek(SeekFrom::Start(0))?;
        self.file.sync_all()?;
        self.since_checkpoint = 0;
        Ok(())
    }
}
