//! Durable persistence: content-addressed media blobs plus versioned metadata
//! records committed atomically through a write-ahead log.
//!
//! On-disk layout under the data directory:
//!
//! - `blobs/<first-2-hex>/<hash>`: blob content, named by its SHA-256 digest.
//! - `blobs/<first-2-hex>/<hash>.type`: the media type the blob was stored as.
//! - `blobs/tmp/`: staging area for in-progress blob writes, cleared on open.
//! - `meta/wal.log`: one line per committed batch, `<sha256-of-json> <json>`.
//! - `meta/snapshot.json`: compacted record state, written atomically.
//! - `LOCK`: held exclusively by the process that owns the directory.
//!
//! A commit is visible only once its log line is complete and synced. Recovery
//! replays the snapshot, then every intact log line, and truncates a torn tail.

mod blob;
mod fault;
mod wal;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use fault::FaultPlan;
use fault::FaultInjector;
use wal::{Wal, WalEntry, WalWrite};

/// Blobs younger than this are never collected.
pub const DEFAULT_GC_WINDOW: Duration = Duration::from_secs(60 * 60);

/// Compact the log into a snapshot after this many batches.
const CHECKPOINT_EVERY: u64 = 4096;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage full")]
    StorageFull,
    #[error("blob content is empty")]
    EmptyContent,
    #[error("version conflict on {kind}/{id}: expected {expected}, found {found}")]
    VersionConflict {
        kind: RecordKind,
        id: String,
        expected: u64,
        found: u64,
    },
    #[error("commit references missing blob {0}")]
    MissingBlob(String),
    #[error("blob not found: {0}")]
    BlobNotFound(String),
    #[error("invalid blob hash {0:?}")]
    InvalidHash(String),
    #[error("data directory {0} is in use by another process")]
    Locked(PathBuf),
    #[error("corrupt metadata: {0}")]
    Corrupt(String),
    #[error("injected crash at step {0}")]
    InjectedCrash(u64),
    #[error("store is unusable after an injected crash")]
    Crashed,
    #[error("record decode failed for {kind}/{id}: {source}")]
    Decode {
        kind: RecordKind,
        id: String,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(err: io::Error) -> Self {
        if err.kind() == io::ErrorKind::StorageFull {
            StoreError::StorageFull
        } else {
            StoreError::Io(err)
        }
    }
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediaType {
    InkJson,
    Wav,
    Video,
    Png,
    Jpeg,
}

impl MediaType {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaType::InkJson => "ink-json",
            MediaType::Wav => "wav",
            MediaType::Video => "video",
            MediaType::Png => "png",
            MediaType::Jpeg => "jpeg",
        }
    }

    /// MIME type used when streaming the blob over HTTP.
    pub fn mime(self) -> &'static str {
        match self {
            MediaType::InkJson => "application/json",
            MediaType::Wav => "audio/wav",
            MediaType::Video => "application/octet-stream",
            MediaType::Png => "image/png",
            MediaType::Jpeg => "image/jpeg",
        }
    }

    pub fn is_image(self) -> bool {
        matches!(self, MediaType::Png | MediaType::Jpeg)
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MediaType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "ink-json" => MediaType::InkJson,
            "wav" => MediaType::Wav,
            "video" => MediaType::Video,
            "png" => MediaType::Png,
            "jpeg" => MediaType::Jpeg,
            other => return Err(format!("unknown media type {other:?}")),
        })
    }
}

/// A reference to stored blob content.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BlobRef {
    pub hash: String,
    pub media_type: MediaType,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecordKind {
    Lesson,
    Exercise,
    Session,
    Response,
    Annotation,
    ReviewState,
    Principal,
    /// Uniqueness claim on (exercise, student) taken by a submission.
    SubmissionClaim,
}

impl RecordKind {
    pub const ALL: [RecordKind; 8] = [
        RecordKind::Lesson,
        RecordKind::Exercise,
        RecordKind::Session,
        RecordKind::Response,
        RecordKind::Annotation,
        RecordKind::ReviewState,
        RecordKind::Principal,
        RecordKind::SubmissionClaim,
    ];
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RecordKind::Lesson => "lesson",
            RecordKind::Exercise => "exercise",
            RecordKind::Session => "session",
            RecordKind::Response => "response",
            RecordKind::Annotation => "annotation",
            RecordKind::ReviewState => "review-state",
            RecordKind::Principal => "principal",
            RecordKind::SubmissionClaim => "submission-claim",
        };
        f.write_str(s)
    }
}

/// A committed metadata record.
#[derive(Debug, Clone)]
pub struct Record {
    pub kind: RecordKind,
    pub id: String,
    pub version: u64,
    pub body: Arc<Value>,
    pub blobs: Arc<[String]>,
}

impl Record {
    pub fn decode<T: DeserializeOwned>(&self) -> Result<T> {
        T::deserialize(&*self.body).map_err(|source| StoreError::Decode {
            kind: self.kind,
            id: self.id.clone(),
            source,
        })
    }
}

/// One record write inside a commit. `expected_version` is the version the
/// writer last read; 0 means the record must not exist yet.
#[derive(Debug, Clone)]
pub struct RecordWrite {
    pub kind: RecordKind,
    pub id: String,
    pub expected_version: u64,
    pub body: Value,
    pub blobs: Vec<BlobRef>,
}

impl RecordWrite {
    pub fn new<T: Serialize>(kind: RecordKind, id: impl Into<String>, expected_version: u64, body: &T) -> Self {
        RecordWrite {
            kind,
            id: id.into(),
            expected_version,
            body: serde_json::to_value(body).expect("record bodies serialize to JSON"),
            blobs: Vec::new(),
        }
    }

    pub fn with_blobs(mut self, blobs: impl IntoIterator<Item = BlobRef>) -> Self {
        self.blobs.extend(blobs);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitReceipt {
    pub seq: u64,
    /// New version of each written record, in write order.
    pub versions: Vec<u64>,
}

#[derive(Debug, Default, Clone)]
pub struct StoreOptions {
    pub faults: Option<FaultPlan>,
}

#[derive(Debug)]
struct StoredRecord {
    version: u64,
    body: Arc<Value>,
    blobs: Arc<[String]>,
}

#[derive(Debug, Default)]
struct State {
    records: BTreeMap<(RecordKind, String), StoredRecord>,
}

impl State {
    fn apply(&mut self, write: WalWrite) {
        self.records.insert(
            (write.kind, write.id),
            StoredRecord {
                version: write.version,
                body: Arc::new(write.body),
                blobs: write.blobs.into(),
            },
        );
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    records: Vec<WalWrite>,
}

/// Handle to an opened data directory. Cheap to clone.
#[derive(Clone)]
pub struct Store {
    inner: Arc<Inner>,
}

struct Inner {
    root: PathBuf,
    state: RwLock<State>,
    wal: Mutex<Wal>,
    blob_gate: RwLock<()>,
    ids: Mutex<HashMap<RecordKind, u64>>,
    faults: FaultInjector,
    blob_tmp_counter: AtomicU64,
    _lock: File,
}

impl fmt::Debug for Store {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Store").field("root", &self.inner.root).finish()
    }
}

impl Store {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(root, StoreOptions::default())
    }

    pub fn open_with(root: impl AsRef<Path>, options: StoreOptions) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(root.join("meta"))?;
        fs::create_dir_all(root.join("blobs").join("tmp"))?;

        let lock = fs::OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join("LOCK"))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(StoreError::Locked(root)),
            Err(fs::TryLockError::Error(e)) => return Err(e.into()),
        }

        blob::clear_staging(&root)?;

        let mut state = State::default();
        let mut seq = 0;
        let snapshot_path = root.join("meta").join("snapshot.json");
        if snapshot_path.exists() {
            let snapshot: Snapshot = serde_json::from_slice(&fs::read(&snapshot_path)?)
                .map_err(|e| StoreError::Corrupt(format!("snapshot: {e}")))?;
            seq = snapshot.seq;
            for write in snapshot.records {
                state.apply(write);
            }
        }
        let (wal, entries) = Wal::open(root.join("meta").join("wal.log"))?;
        for entry in entries {
            if entry.seq <= seq {
                continue;
            }
            seq = entry.seq;
            for write in entry.writes {
                state.apply(write);
            }
        }
        let mut wal = wal;
        wal.set_seq(seq);

        let mut ids = HashMap::new();
        for (kind, id) in state.records.keys() {
            if let Ok(n) = id.parse::<u64>() {
                let slot = ids.entry(*kind).or_insert(0);
                *slot = (*slot).max(n);
            }
        }

        Ok(Store {
            inner: Arc::new(Inner {
                root,
                state: RwLock::new(state),
                wal: Mutex::new(wal),
                blob_gate: RwLock::new(()),
                ids: Mutex::new(ids),
                faults: FaultInjector::new(options.faults),
                blob_tmp_counter: AtomicU64::new(0),
                _lock: lock,
            }),
        })
    }

    pub fn root(&self) -> &Path {
        &self.inner.root
    }

    /// Next identifier for a numerically keyed kind. Monotonic for the life of
    /// the directory; gaps are possible when a commit fails.
    pub fn allocate_id(&self, kind: RecordKind) -> u64 {
        let mut ids = self.inner.ids.lock().unwrap();
        let slot = ids.entry(kind).or_insert(0);
        *slot += 1;
        *slot
    }

    pub fn put_blob(&self, content: &[u8], media_type: MediaType) -> Result<BlobRef> {
        self.inner.faults.check_alive()?;
        if content.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let hash = blob::digest(content);
        let _gate = self.inner.blob_gate.read().unwrap();
        let path = blob::path_for(&self.inner.root, &hash);
        if path.exists() {
            // Refresh the GC window for content that is being reused.
            File::options().write(true).open(&path)?.set_modified(SystemTime::now())?;
            return Ok(BlobRef { hash, media_type });
        }
        let n = self.inner.blob_tmp_counter.fetch_add(1, Ordering::Relaxed);
        blob::write_atomically(&self.inner.root, &hash, media_type, content, n, &self.inner.faults)?;
        Ok(BlobRef { hash, media_type })
    }

    pub fn blob_ref(&self, hash: &str) -> Result<Option<BlobRef>> {
        blob::validate_hash(hash)?;
        let path = blob::path_for(&self.inner.root, hash);
        if !path.exists() {
            return Ok(None);
        }
        let media_type = blob::read_media_type(&self.inner.root, hash)?;
        Ok(Some(BlobRef {
            hash: hash.to_string(),
            media_type,
        }))
    }

    pub fn read_blob(&self, hash: &str) -> Result<(BlobRef, Vec<u8>)> {
        let blob_ref = self
            .blob_ref(hash)?
            .ok_or_else(|| StoreError::BlobNotFound(hash.to_string()))?;
        match fs::read(blob::path_for(&self.inner.root, hash)) {
            Ok(bytes) => Ok((blob_ref, bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::BlobNotFound(hash.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn blob_exists(&self, hash: &str) -> bool {
        blob::validate_hash(hash).is_ok() && blob::path_for(&self.inner.root, hash).exists()
    }

    /// Number of blobs currently on disk.
    pub fn blob_count(&self) -> Result<usize> {
        Ok(blob::list(&self.inner.root)?.len())
    }

    pub fn get(&self, kind: RecordKind, id: &str) -> Option<Record> {
        let state = self.inner.state.read().unwrap();
        state.records.get(&(kind, id.to_string())).map(|r| Record {
            kind,
            id: id.to_string(),
            version: r.version,
            body: r.body.clone(),
            blobs: r.blobs.clone(),
        })
    }

    /// All committed records of one kind, ordered by id.
    pub fn scan(&self, kind: RecordKind) -> Vec<Record> {
        let state = self.inner.state.read().unwrap();
        state
            .records
            .range((kind, String::new())..)
            .take_while(|((k, _), _)| *k == kind)
            .map(|((k, id), r)| Record {
                kind: *k,
                id: id.clone(),
                version: r.version,
                body: r.body.clone(),
                blobs: r.blobs.clone(),
            })
            .collect()
    }

    /// Apply every write or none. Versions are checked and blobs resolved under
    /// the commit lock, so concurrent writers to one record serialize.
    pub fn commit(&self, writes: Vec<RecordWrite>) -> Result<CommitReceipt> {
        let faults = &self.inner.faults;
        faults.step()?;
        let mut wal = self.inner.wal.lock().unwrap();
        faults.check_alive()?;

        let mut entry_writes = Vec::with_capacity(writes.len());
        {
            let state = self.inner.state.read().unwrap();
            let mut pending: HashMap<(RecordKind, &str), u64> = HashMap::new();
            for write in &writes {
                let current = pending
                    .get(&(write.kind, write.id.as_str()))
                    .copied()
                    .or_else(|| state.records.get(&(write.kind, write.id.clone())).map(|r| r.version))
                    .unwrap_or(0);
                if current != write.expected_version {
                    return Err(StoreError::VersionConflict {
                        kind: write.kind,
                        id: write.id.clone(),
                        expected: write.expected_version,
                        found: current,
                    });
                }
                pending.insert((write.kind, write.id.as_str()), current + 1);
            }
            let _gate = self.inner.blob_gate.read().unwrap();
            for blob_ref in writes.iter().flat_map(|w| &w.blobs) {
                if !self.blob_exists(&blob_ref.hash) {
                    return Err(StoreError::MissingBlob(blob_ref.hash.clone()));
                }
            }
            for write in writes {
                let version = write.expected_version + 1;
                let mut hashes: Vec<String> = write.blobs.iter().map(|b| b.hash.clone()).collect();
                hashes.sort();
                hashes.dedup();
                // Later writes to the same record in one batch win.
                entry_writes.push(WalWrite {
                    kind: write.kind,
                    id: write.id,
                    version,
                    body: write.body,
                    blobs: hashes,
                });
            }
        }
        let versions = entry_writes.iter().map(|w| w.version).collect();

        let seq = wal.next_seq();
        let entry = WalEntry {
            seq,
            writes: entry_writes,
        };
        wal.append(&entry, faults)?;
        wal.advance(seq);

        {
            let mut state = self.inner.state.write().unwrap();
            for write in entry.writes {
                state.apply(write);
            }
        }
        faults.step()?;

        if wal.entries_since_checkpoint() >= CHECKPOINT_EVERY {
            self.checkpoint_locked(&mut wal)?;
        }
        Ok(CommitReceipt { seq, versions })
    }

    /// Write a snapshot of committed state and reset the log.
    pub fn checkpoint(&self) -> Result<()> {
        self.inner.faults.check_alive()?;
        let mut wal = self.inner.wal.lock().unwrap();
        self.checkpoint_locked(&mut wal)
    }

    fn checkpoint_locked(&self, wal: &mut Wal) -> Result<()> {
        let snapshot = {
            let state = self.inner.state.read().unwrap();
            Snapshot {
                seq: wal.seq(),
                records: state
                    .records
                    .iter()
                    .map(|((kind, id), r)| WalWrite {
                        kind: *kind,
                        id: id.clone(),
                        version: r.version,
                        body: (*r.body).clone(),
                        blobs: r.blobs.to_vec(),
                    })
                    .collect(),
            }
        };
        let meta = self.inner.root.join("meta");
        let tmp = meta.join("snapshot.json.tmp");
        let bytes = serde_json::to_vec(&snapshot).map_err(|e| StoreError::Corrupt(e.to_string()))?;
        blob::write_synced(&tmp, &bytes)?;
        fs::rename(&tmp, meta.join("snapshot.json"))?;
        blob::sync_dir(&meta)?;
        wal.reset()?;
        Ok(())
    }

    /// Remove blobs that no committed record references and whose last write
    /// is older than `window`.
    pub fn gc_orphans(&self, window: Duration) -> Result<usize> {
        self.inner.faults.check_alive()?;
        let _wal = self.inner.wal.lock().unwrap();
        let _gate = self.inner.blob_gate.write().unwrap();
        let referenced: HashSet<String> = {
            let state = self.inner.state.read().unwrap();
            state
                .records
                .values()
                .flat_map(|r| r.blobs.iter().cloned())
                .collect()
        };
        let cutoff = SystemTime::now().checked_sub(window).unwrap_or(SystemTime::UNIX_EPOCH);
        let mut removed = 0;
        for (hash, path) in blob::list(&self.inner.root)? {
            if referenced.contains(&hash) {
                continue;
            }
            let modified = fs::metadata(&path)?.modified()?;
            if window.is_zero() || modified < cutoff {
                blob::remove(&self.inner.root, &hash)?;
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Durable steps taken so far; only counted when a [`FaultPlan`] is set.
    pub fn fault_steps(&self) -> u64 {
        self.inner.faults.steps_taken()
    }

    /// Every blob hash referenced by a committed record.
    pub fn referenced_blobs(&self) -> HashSet<String> {
        let state = self.inner.state.read().unwrap();
        state
            .records
            .values()
            .flat_map(|r| r.blobs.iter().cloned())
            .collect()
    }
}
