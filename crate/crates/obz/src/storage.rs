//! Authorization-aware facade over the metadata and blob stores.
//!
//! Every project-scoped call takes the caller's [`Principal`] and checks
//! ownership before touching data, so callers cannot reach another user's
//! records or bucket.

use std::path::Path;
use std::sync::Arc;

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::blob::{BlobStore, FsBlobStore};
use crate::error::{StoreError, StoreResult};
use crate::records::{
    now, ApiToken, FeatureKind, LogQuery, LogRecord, ProjectRecord, RefFeatureSet, TaskMode,
    UserRecord,
};
use crate::store::{JournalStore, MetadataStore};

/// An authenticated user.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Principal {
    pub user_id: String,
}

pub fn hash_token(raw: &str) -> String {
    hex::encode(Sha256::digest(raw.as_bytes()))
}

fn generate_token() -> String {
    let mut bytes = [0u8; 32];
    rand::rng().fill_bytes(&mut bytes);
    format!("obz_{}", hex::encode(bytes))
}

#[derive(Clone)]
pub struct Storage {
    meta: Arc<dyn MetadataStore>,
    blobs: Arc<dyn BlobStore>,
}

impl Storage {
    pub fn new(meta: Arc<dyn MetadataStore>, blobs: Arc<dyn BlobStore>) -> Self {
        Storage { meta, blobs }
    }

    /// File-backed default layout: `<root>/meta.jsonl` and `<root>/blobs/`.
    pub fn open_dir(root: impl AsRef<Path>) -> StoreResult<Self> {
        let root = root.as_ref();
        let meta = JournalStore::open(root.join("meta.jsonl"))?;
        let blobs = FsBlobStore::new(root.join("blobs"))?;
        Ok(Storage::new(Arc::new(meta), Arc::new(blobs)))
    }

    pub fn in_memory() -> Self {
        Storage::new(
            Arc::new(JournalStore::in_memory()),
            Arc::new(crate::blob::MemoryBlobStore::default()),
        )
    }

    pub fn metadata(&self) -> &dyn MetadataStore {
        self.meta.as_ref()
    }

    /// Creates the user if needed and returns a fresh raw token. Only the digest is stored.
    pub fn issue_token(&self, user_id: &str) -> StoreResult<String> {
        if user_id.is_empty() {
            return Err(StoreError::Invalid("empty user id".into()));
        }
        if self.meta.get_user(user_id)?.is_none() {
            self.meta.create_user(UserRecord {
                user_id: user_id.to_owned(),
                display_name: user_id.to_owned(),
                created_at: now(),
            })?;
        }
        let raw = generate_token();
        self.meta.insert_token(ApiToken {
            token_hash: hash_token(&raw),
            user_id: user_id.to_owned(),
            created_at: now(),
            revoked: false,
        })?;
        Ok(raw)
    }

    pub fn revoke_token(&self, raw: &str) -> StoreResult<()> {
        self.meta.revoke_token(&hash_token(raw))
    }

    pub fn authenticate(&self, raw: &str) -> StoreResult<Principal> {
        match self.meta.find_token(&hash_token(raw))? {
            Some(t) if !t.revoked => Ok(Principal { user_id: t.user_id }),
            _ => Err(StoreError::Unauthorized),
        }
    }

    pub fn list_tokens(&self, who: &Principal) -> StoreResult<Vec<ApiToken>> {
        self.meta.list_tokens(&who.user_id)
    }

    /// Revokes one of the caller's own tokens by digest. Someone else's digest reads as unknown.
    pub fn revoke_token_hash(&self, who: &Principal, token_hash: &str) -> StoreResult<()> {
        match self.meta.find_token(token_hash)? {
            Some(t) if t.user_id == who.user_id => self.meta.revoke_token(token_hash),
            _ => Err(StoreError::NotFound("token".into())),
        }
    }

    pub fn create_project(&self, who: &Principal, name: &str, task_mode: TaskMode) -> StoreResult<ProjectRecord> {
        let name = name.trim();
        if name.is_empty() {
            return Err(StoreError::Invalid("project name is empty".into()));
        }
        let project = ProjectRecord {
            project_id: uuid::Uuid::new_v4().to_string(),
            name: name.to_owned(),
            task_mode,
            created_at: now(),
            owner_user_id: who.user_id.clone(),
        };
        self.meta.create_project(project.clone())?;
        self.blobs.create_bucket(&project.project_id)?;
        Ok(project)
    }

    pub fn list_projects(&self, who: &Principal) -> StoreResult<Vec<ProjectRecord>> {
        self.meta.list_projects(&who.user_id)
    }

    /// The project, if it exists and `who` owns it.
    pub fn project(&self, who: &Principal, project_id: &str) -> StoreResult<ProjectRecord> {
        let p = self
            .meta
            .get_project(project_id)?
            .ok_or_else(|| StoreError::NotFound(format!("project {project_id}")))?;
        if p.owner_user_id != who.user_id {
            return Err(StoreError::Forbidden);
        }
        Ok(p)
    }

    pub fn put_blob(&self, who: &Principal, project_id: &str, key: &str, bytes: &[u8]) -> StoreResult<String> {
        self.project(who, project_id)?;
        self.blobs.put(project_id, key, bytes)?;
        Ok(key.to_owned())
    }

    pub fn get_blob(&self, who: &Principal, project_id: &str, key: &str) -> StoreResult<Vec<u8>> {
        self.project(who, project_id)?;
        self.blobs.get(project_id, key)
    }

    /// Cleanup path for blobs written by a request that failed before its record landed.
    pub(crate) fn delete_blob(&self, project_id: &str, key: &str) -> StoreResult<()> {
        self.blobs.delete(project_id, key)
    }

    pub fn blob_exists(&self, project_id: &str, key: &str) -> StoreResult<bool> {
        self.blobs.exists(project_id, key)
    }

    pub fn put_ref_set(&self, who: &Principal, set: RefFeatureSet) -> StoreResult<()> {
        self.project(who, &set.project_id)?;
        self.meta.put_ref_set(set)
    }

    pub fn ref_set(&self, who: &Principal, project_id: &str, kind: FeatureKind) -> StoreResult<Option<RefFeatureSet>> {
        self.project(who, project_id)?;
        self.meta.get_ref_set(project_id, kind)
    }

    pub fn insert_log(&self, who: &Principal, log: LogRecord) -> StoreResult<()> {
        self.project(who, &log.project_id)?;
        for key in log.blob_keys() {
            crate::blob::validate_key(key)?;
        }
        self.meta.insert_log(log)
    }

    pub fn query_logs(&self, who: &Principal, query: &LogQuery) -> StoreResult<Vec<LogRecord>> {
        self.project(who, &query.project_id)?;
        self.meta.query_logs(query)
    }

    pub fn get_log(&self, who: &Principal, log_id: &str) -> StoreResult<LogRecord> {
        let log = self
            .meta
            .get_log(log_id)?
            .ok_or_else(|| StoreError::NotFound(format!("log {log_id}")))?;
        self.project(who, &log.project_id)?;
        Ok(log)
    }

    /// Removes the record and every blob it references.
    pub fn delete_log(&self, who: &Principal, log_id: &str) -> StoreResult<LogRecord> {
        let log = self.get_log(who, log_id)?;
        let removed = self.meta.delete_log(log_id)?;
        for key in removed.blob_keys() {
            self.blobs.delete(&removed.project_id, key)?;
        }
        debug_assert_eq!(log.log_id, removed.log_id);
        Ok(removed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn revoked_token_never_authenticates() {
        let s = Storage::in_memory();
        let raw = s.issue_token("alice").unwrap();
        assert_eq!(s.authenticate(&raw).unwrap().user_id, "alice");
        s.revoke_token(&raw).unwrap();
        assert!(matches!(s.authenticate(&raw), Err(StoreError::Unauthorized)));
        assert!(matches!(s.authenticate("obz_bogus"), Err(StoreError::Unauthorized)));
    }

    #[test]
    fn tokens_listed_and_revoked_per_user() {
        let s = Storage::in_memory();
        let a1 = s.issue_token("alice").unwrap();
        let _a2 = s.issue_token("alice").unwrap();
        let b = s.issue_token("bob").unwrap();
        let alice = s.authenticate(&a1).unwrap();
        let bob = s.authenticate(&b).unwrap();
        assert_eq!(s.list_tokens(&alice).unwrap().len(), 2);
        assert!(matches!(s.revoke_token_hash(&bob, &hash_token(&a1)), Err(StoreError::NotFound(_))));
        assert!(s.authenticate(&a1).is_ok());
        s.revoke_token_hash(&alice, &hash_token(&a1)).unwrap();
        assert!(s.authenticate(&a1).is_err());
        assert!(s.list_tokens(&alice).unwrap().iter().any(|t| t.revoked));
    }

    #[test]
    fn raw_token_not_stored() {
        let s = Storage::in_memory();
        let raw = s.issue_token("alice").unwrap();
        assert!(s.metadata().find_token(&raw).unwrap().is_none());
        assert!(s.metadata().find_token(&hash_token(&raw)).unwrap().is_some());
    }

    #[test]
    fn blobs_isolated_between_users() {
        let s = Storage::in_memory();
        let a = s.authenticate(&s.issue_token("alice").unwrap()).unwrap();
        let b = s.authenticate(&s.issue_token("bob").unwrap()).unwrap();
        let pa = s.create_project(&a, "proj", TaskMode::Classification).unwrap();
        let data: Vec<u8> = (0..1 << 20).map(|i| (i * 31 % 251) as u8).collect();
        s.put_blob(&a, &pa.project_id, "big.bin", &data).unwrap();
        assert_eq!(s.get_blob(&a, &pa.project_id, "big.bin").unwrap(), data);
        assert!(matches!(s.get_blob(&b, &pa.project_id, "big.bin"), Err(StoreError::Forbidden)));
        assert!(matches!(s.put_blob(&b, &pa.project_id, "x", b"1"), Err(StoreError::Forbidden)));
        assert!(matches!(s.get_blob(&a, "missing", "big.bin"), Err(StoreError::NotFound(_))));
        // bob's project of the same name is fine
        s.create_project(&b, "proj", TaskMode::Classification).unwrap();
        assert!(matches!(s.create_project(&a, "proj", TaskMode::Classification), Err(StoreError::Conflict(_))));
    }
}
