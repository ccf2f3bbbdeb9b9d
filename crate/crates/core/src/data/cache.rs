use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_csv, CsvOptions, Dataset};
use crate::error::{Error, Result};
use crate::io::write_atomic;

const FORMAT: &str = "adbench-dataset";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    format: String,
    version: u32,
    source_sha256: String,
    dataset: Dataset,
}

/// Parsed-CSV cache: one JSON sidecar per (file content, parse options).
///
/// Files are named `<sha256>.json` where the hash covers the raw CSV bytes
/// followed by the JSON-encoded [`CsvOptions`].
pub struct DatasetCache {
    dir: PathBuf,
}

impl DatasetCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DatasetCache { dir: dir.into() }
    }

    pub fn key(bytes: &[u8], opts: &CsvOptions) -> String {
        let mut h = Sha256::new();
        h.update(bytes);
        h.update(serde_json::to_vec(opts).expect("options serialize"));
        hex::encode(h.finalize())
    }

    pub fn load(&self, path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let key = Self::key(&bytes, opts);
        let entry_path = self.dir.join(format!("{key}.json"));
        if let Ok(text) = std::fs::read_to_string(&entry_path) {
            match serde_json::from_str::<CacheEntry>(&text) {
                Ok(e) if e.format == FORMAT && e.version == VERSION && e.source_sha256 == key => {
                    return Ok(e.dataset)
                }
                _ => log::warn!("ignoring stale cache entry {}", entry_path.display()),
            }
        }
        let dataset = load_csv(path, opts)?;
        let entry = CacheEntry {
            format: FORMAT.into(),
            version: VERSION,
            source_sha256: key,
            dataset,
        };
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        write_atomic(&entry_path, serde_json::to_string(&entry)?.as_bytes())?;
        Ok(entry.dataset)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_load_hits_cache() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("toy.csv");
        std::fs::write(&csv, "a,label\n1,0\n2,0\n9,1\n").unwrap();
        let cache = DatasetCache::new(dir.path().join("cache"));
        let opts = CsvOptions::default();
        let first = cache.load(&csv, &opts).unwrap();
        let entries: Vec<_> = std::fs::read_dir(dir.path().join("cache")).unwrap().collect();
        assert_eq!(entries.len(), 1);
        let second = cache.load(&csv, &opts).unwrap();
        assert_eq!(first, second);
    }
}
