//! Content-addressed cache of per-split metric banks and distance tensors.
//!
//! An entry is a directory named by the cache key holding `bank/`,
//! `train.tensor`, `test.tensor` and a `SHA256SUMS` file listing every
//! other file. Entries are verified against their sums before use and are
//! published with a directory rename, so readers never see partial ones.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::data::DistanceTensor;
use crate::fsutil::write_atomic;
use crate::metrics::{load_bank, save_bank, TrainedMetric};

use super::ExperimentError;

const SUMS: &str = "SHA256SUMS";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct CacheEntry {
    pub bank: Vec<TrainedMetric>,
    pub train: DistanceTensor,
    pub test: DistanceTensor,
}

fn files_under(dir: &Path, prefix: &str, out: &mut Vec<(String, PathBuf)>) -> std::io::Result<()> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let name = format!("{prefix}{}", e.file_name().to_string_lossy());
        if e.file_type()?.is_dir() {
            files_under(&e.path(), &format!("{name}/"), out)?;
        } else if name != SUMS {
            out.push((name, e.path()));
        }
    }
    Ok(())
}

fn sums_text(dir: &Path) -> std::io::Result<String> {
    let mut files = Vec::new();
    files_under(dir, "", &mut files)?;
    let mut text = String::new();
    for (name, path) in files {
        text.push_str(&format!("{}  {name}\n", sha256_hex(&std::fs::read(path)?)));
    }
    Ok(text)
}

/// Loads entry `key` if present and intact. A corrupt entry is removed
/// and reported as a miss.
pub fn load(
    root: &Path,
    key: &str,
    train_ids: &[String],
    test_ids: &[String],
) -> Result<Option<CacheEntry>, ExperimentError> {
    let dir = root.join(key);
    if !dir.is_dir() {
        return Ok(None);
    }
    let verified = match (std::fs::read_to_string(dir.join(SUMS)), sums_text(&dir)) {
        (Ok(stored), Ok(actual)) => stored == actual,
        _ => false,
    };
    let entry = if verified { read_entry(&dir, train_ids, test_ids).ok() } else { None };
    if entry.is_none() {
        log::warn!("cache entry {key} failed verification; rebuilding");
        std::fs::remove_dir_all(&dir).map_err(|e| ExperimentError::io(&dir, e))?;
    }
    Ok(entry)
}

fn read_entry(dir: &Path, train_ids: &[String], test_ids: &[String]) -> Result<CacheEntry, ExperimentError> {
    let tensor = |name: &str, ids: &[String]| -> Result<DistanceTensor, ExperimentError> {
        let path = dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| ExperimentError::io(&path, e))?;
        Ok(DistanceTensor::read_from(bytes.as_slice(), ids.to_vec())?)
    };
    Ok(CacheEntry {
        bank: load_bank(&dir.join("bank"))?,
        train: tensor("train.tensor", train_ids)?,
        test: tensor("test.tensor", test_ids)?,
    })
}

/// Writes entry `key`; losing a publish race to an identical entry is
/// fine.
pub fn store(root: &Path, key: &str, entry: &CacheEntry) -> Result<(), ExperimentError> {
    let tmp = root.join(format!(".{key}.tmp{}", std::process::id()));
    let io = |p: &Path, e| ExperimentError::io(p, e);
    if tmp.exists() {
        std::fs::remove_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
    }
    std::fs::create_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
    save_bank(&tmp.join("bank"), &entry.bank)?;
    for (name, t) in [("train.tensor", &entry.train), ("test.tensor", &entry.test)] {
        let p = tmp.join(name);
        write_atomic(&p, &t.to_bytes()).map_err(|e| io(&p, e))?;
    }
    let sums = sums_text(&tmp).map_err(|e| io(&tmp, e))?;
    write_atomic(&tmp.join(SUMS), sums.as_bytes()).map_err(|e| io(&tmp, e))?;
    let dest = root.join(key);
    if std::fs::rename(&tmp, &dest).is_err() {
        std::fs::remove_dir_all(&tmp).map_err(|e| io(&tmp, e))?;
        if !dest.is_dir() {
            return Err(ExperimentError::Config(format!("could not publish cache entry {}", dest.display())));
        }
    }
    Ok(())
}
