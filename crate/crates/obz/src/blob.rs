//! Per-project blob buckets.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::RwLock;

use crate::error::{StoreError, StoreResult};

pub trait BlobStore: Send + Sync {
    fn create_bucket(&self, project_id: &str) -> StoreResult<()>;
    /// Last write wins.
    fn put(&self, project_id: &str, key: &str, bytes: &[u8]) -> StoreResult<()>;
    fn get(&self, project_id: &str, key: &str) -> StoreResult<Vec<u8>>;
    fn delete(&self, project_id: &str, key: &str) -> StoreResult<()>;
    fn exists(&self, project_id: &str, key: &str) -> StoreResult<bool>;
}

/// Keys are `/`-separated segments of `[A-Za-z0-9._-]`, none of them `.` or `..`,
/// so a key can never leave its project's bucket.
pub fn validate_key(key: &str) -> StoreResult<()> {
    let ok = !key.is_empty()
        && key.len() <= 512
        && key.split('/').all(|seg| {
            !seg.is_empty()
                && seg != "."
                && seg != ".."
                && seg.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-".contains(&b))
        });
    if ok {
        Ok(())
    } else {
        Err(StoreError::Invalid(format!("bad blob key {key:?}")))
    }
}

fn validate_bucket(project_id: &str) -> StoreResult<()> {
    if project_id.contains('/') {
        return Err(StoreError::Invalid(format!("bad project id {project_id:?}")));
    }
    validate_key(project_id)
}

/// `<root>/<project_id>/<key>`
pub struct FsBlobStore {
    root: PathBuf,
}

impl FsBlobStore {
    pub fn new(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(FsBlobStore { root })
    }

    fn path(&self, project_id: &str, key: &str) -> StoreResult<PathBuf> {
        validate_bucket(project_id)?;
        validate_key(key)?;
        Ok(self.root.join(project_id).join(key))
    }

    fn bucket(&self, project_id: &str) -> StoreResult<PathBuf> {
        validate_bucket(project_id)?;
        let dir = self.root.join(project_id);
        if !dir.is_dir() {
            return Err(StoreError::NotFound(format!("bucket {project_id}")));
        }
        Ok(dir)
    }
}

impl BlobStore for FsBlobStore {
    fn create_bucket(&self, project_id: &str) -> StoreResult<()> {
        validate_bucket(project_id)?;
        std::fs::create_dir_all(self.root.join(project_id))?;
        Ok(())
    }

    fn put(&self, project_id: &str, key: &str, bytes: &[u8]) -> StoreResult<()> {
        self.bucket(project_id)?;
        let path = self.path(project_id, key)?;
        let dir = path.parent().expect("blob path has a parent");
        std::fs::create_dir_all(dir)?;
        // rename is atomic, so readers see either the old or the new bytes
        let tmp = dir.join(format!(".{}.tmp-{}", uuid::Uuid::new_v4(), std::process::id()));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    fn get(&self, project_id: &str, key: &str) -> StoreResult<Vec<u8>> {
        self.bucket(project_id)?;
        let path = self.path(project_id, key)?;
        std::fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => StoreError::NotFound(format!("blob {key}")),
            _ => e.into(),
        })
    }

    fn delete(&self, project_id: &str, key: &str) -> StoreResult<()> {
        let path = self.path(project_id, key)?;
        match std::fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn exists(&self, project_id: &str, key: &str) -> StoreResult<bool> {
        Ok(self.path(project_id, key)?.is_file())
    }
}

#[derive(Default)]
pub struct MemoryBlobStore {
    buckets: RwLock<HashMap<String, HashMap<String, Vec<u8>>>>,
}

impl BlobStore for MemoryBlobStore {
    fn create_bucket(&self, project_id: &str) -> StoreResult<()> {
        validate_bucket(project_id)?;
        self.buckets.write().unwrap().entry(project_id.to_owned()).or_default();
        Ok(())
    }

    fn put(&self, project_id: &str, key: &str, bytes: &[u8]) -> StoreResult<()> {
        validate_key(key)?;
        let mut b = self.buckets.write().unwrap();
        let bucket = b
            .get_mut(project_id)
            .ok_or_else(|| StoreError::NotFound(format!("bucket {project_id}")))?;
        bucket.insert(key.to_owned(), bytes.to_vec());
        Ok(())
    }

    fn get(&self, project_id: &str, key: &str) -> StoreResult<Vec<u8>> {
        validate_key(key)?;
        let b = self.buckets.read().unwrap();
        b.get(project_id)
            .ok_or_else(|| StoreError::NotFound(format!("bucket {project_id}")))?
            .get(key)
            .cloned()
            .ok_or_else(|| StoreError::NotFound(format!("blob {key}")))
    }

    fn delete(&self, project_id: &str, key: &str) -> StoreResult<()> {
        if let Some(bucket) = self.buckets.write().unwrap().get_mut(project_id) {
            bucket.remove(key);
        }
        Ok(())
    }

    fn exists(&self, project_id: &str, key: &str) -> StoreResult<bool> {
        Ok(self
            .buckets
            .read()
            .unwrap()
            .get(project_id)
            .is_some_and(|b| b.contains_key(key)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_cannot_escape() {
        for bad in ["", "/abs", "a/../b", "..", "a//b", "a/./b", "sp ace", "a\\b"] {
            assert!(validate_key(bad).is_err(), "{bad:?}");
        }
        for good in ["image.obzt", "logs/abc-1/heatmaps/cdam.obzt", "a_b.C-9"] {
            validate_key(good).unwrap();
        }
    }

    #[test]
    fn fs_round_trip_and_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let s = FsBlobStore::new(dir.path()).unwrap();
        assert!(matches!(s.put("p", "k", b"x"), Err(StoreError::NotFound(_))));
        s.create_bucket("p").unwrap();
        s.put("p", "a/b.bin", b"one").unwrap();
        s.put("p", "a/b.bin", b"two").unwrap();
        assert_eq!(s.get("p", "a/b.bin").unwrap(), b"two");
        assert!(dir.path().join("p/a/b.bin").is_file());
        s.delete("p", "a/b.bin").unwrap();
        assert!(matches!(s.get("p", "a/b.bin"), Err(StoreError::NotFound(_))));
    }
}
