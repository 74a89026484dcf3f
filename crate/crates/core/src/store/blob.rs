use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::fault::FaultInjector;
use super::{MediaType, Result, StoreError};

pub(crate) fn digest(content: &[u8]) -> String {
    hex::encode(Sha256::digest(content))
}

pub(crate) fn validate_hash(hash: &str) -> Result<()> {
    if hash.len() == 64 && hash.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
        Ok(())
    } else {
        Err(StoreError::InvalidHash(hash.to_string()))
    }
}

pub(crate) fn path_for(root: &Path, hash: &str) -> PathBuf {
    root.join("blobs").join(&hash[..2]).join(hash)
}

fn type_path_for(root: &Path, hash: &str) -> PathBuf {
    root.join("blobs").join(&hash[..2]).join(format!("{hash}.type"))
}

pub(crate) fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut file = File::create(path)?;
    file.write_all(bytes)?;
    file.sync_all()
}

pub(crate) fn sync_dir(dir: &Path) -> io::Result<()> {
    File::open(dir)?.sync_all()
}

pub(crate) fn write_atomically(
    root: &Path,
    hash: &str,
    media_type: MediaType,
    content: &[u8],
    n: u64,
    faults: &FaultInjector,
) -> Result<()> {
    let shard = root.join("blobs").join(&hash[..2]);
    fs::create_dir_all(&shard)?;
    let staging = root.join("blobs").join("tmp");

    let type_tmp = staging.join(format!("{hash}.{n}.type"));
    write_synced(&type_tmp, media_type.as_str().as_bytes())?;
    fs::rename(&type_tmp, type_path_for(root, hash))?;

    let tmp = staging.join(format!("{hash}.{n}"));
    faults.step_with(|| {
        let _ = fs::write(&tmp, &content[..content.len() / 2]);
    })?;
    write_synced(&tmp, content)?;
    faults.step()?;
    fs::rename(&tmp, path_for(root, hash))?;
    sync_dir(&shard)?;
    Ok(())
}

pub(crate) fn read_media_type(root: &Path, hash: &str) -> Result<MediaType> {
    let raw = fs::read_to_string(type_path_for(root, hash))?;
    raw.trim()
        .parse()
        .map_err(|e: String| StoreError::Corrupt(format!("blob {hash}: {e}")))
}

/// Every committed blob as (hash, path).
pub(crate) fn list(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for shard in fs::read_dir(root.join("blobs"))? {
        let shard = shard?;
        if shard.file_name() == "tmp" || !shard.file_type()?.is_dir() {
            continue;
        }
        for entry in fs::read_dir(shard.path())? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if validate_hash(&name).is_ok() {
                out.push((name, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub(crate) fn remove(root: &Path, hash: &str) -> Result<()> {
    fs::remove_file(path_for(root, hash))?;
    match fs::remove_file(type_path_for(root, hash)) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(()),
        Err(e) => Err(e.into()),
    }
}

pub(crate) fn clear_staging(root: &Path) -> Result<()> {
    for entry in fs::read_dir(root.join("blobs").join("tmp"))? {
        fs::remove_file(entry?.path())?;
    }
    Ok(())
}
