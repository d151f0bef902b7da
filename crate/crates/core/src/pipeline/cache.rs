use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hashing::file_hash;

/// Content-addressed store of stage outputs: `<root>/<stage>/<key>.json`.
#[derive(Debug, Clone)]
pub struct StageCache {
    root: PathBuf,
}

impl StageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn entry(&self, stage: &str, key: &str) -> PathBuf {
        self.root.join(stage).join(format!("{key}.json"))
    }

    /// Cached value for `key`, if present, decodable and accepted by `valid`.
    pub fn get<T: DeserializeOwned>(&self, stage: &str, key: &str, valid: impl Fn(&T) -> bool) -> Option<T> {
        let text = std::fs::read_to_string(self.entry(stage, key)).ok()?;
        let value: T = serde_json::from_str(&text).ok()?;
        valid(&value).then_some(value)
    }

    pub fn put<T: Serialize>(&self, stage: &str, key: &str, value: &T) -> Result<()> {
        let path = self.entry(stage, key);
        let dir = path.parent().expect("entry has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let tmp = path.with_extension(format!("json.tmp{}", std::process::id()));
        std::fs::write(&tmp, serde_json::to_vec(value)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }

    /// Returns the cached value or computes and stores it. The flag is true on a hit.
    pub fn get_or_compute<T, V, F>(&self, stage: &str, key: &str, valid: V, compute: F) -> Result<(T, bool)>
    where
        T: Serialize + DeserializeOwned,
        V: Fn(&T) -> bool,
        F: FnOnce() -> Result<T>,
    {
        if let Some(v) = self.get(stage, key, valid) {
            return Ok((v, true));
        }
        let v = compute()?;
        self.put(stage, key, &v)?;
        Ok((v, false))
    }
}

/// True when `path` exists and hashes to `hash`.
pub fn file_matches(path: &Path, hash: &str) -> bool {
    file_hash(path).map(|h| h == hash).unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_lookup_hits() {
        let dir = tempfile::tempdir().unwrap();
        let c = StageCache::new(dir.path());
        let (v, hit) = c.get_or_compute("s", "k", |_: &Vec<u32>| true, || Ok(vec![1, 2])).unwrap();
        assert_eq!((v, hit), (vec![1, 2], false));
        let (v, hit) = c
            .get_or_compute("s", "k", |_: &Vec<u32>| true, || panic!("must not recompute"))
            .unwrap();
        assert_eq!((v, hit), (vec![1, 2], true));
    }

    #[test]
    fn invalid_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let c = StageCache::new(dir.path());
        c.put("s", "k", &5u32).unwrap();
        let (v, hit) = c.get_or_compute("s", "k", |v: &u32| *v != 5, || Ok(6u32)).unwrap();
        assert_eq!((v, hit), (6, false));
    }
}
