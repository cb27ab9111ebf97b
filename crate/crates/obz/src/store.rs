//! Structured metadata: users, tokens, projects, reference sets and logs.
//!
//! [`JournalStore`] keeps every table in memory and persists mutations to an
//! append-only JSON-lines journal that is replayed on open. Several processes
//! may share one journal (the admin CLI issues tokens while the server runs):
//! appends take an exclusive file lock and readers pick up any tail they have
//! not yet applied before answering.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use obz_core::Timestamp;
use serde::{Deserialize, Serialize};

use crate::error::{StoreError, StoreResult};
use crate::records::{
    ApiToken, FeatureKind, LogQuery, LogRecord, ProjectRecord, RefFeatureSet, UserRecord,
};

pub trait MetadataStore: Send + Sync {
    fn create_user(&self, user: UserRecord) -> StoreResult<()>;
    fn get_user(&self, user_id: &str) -> StoreResult<Option<UserRecord>>;

    fn insert_token(&self, token: ApiToken) -> StoreResult<()>;
    fn find_token(&self, token_hash: &str) -> StoreResult<Option<ApiToken>>;
    fn revoke_token(&self, token_hash: &str) -> StoreResult<()>;
    fn list_tokens(&self, user_id: &str) -> StoreResult<Vec<ApiToken>>;

    /// Fails with `Conflict` when the owner already has a project of that name.
    fn create_project(&self, project: ProjectRecord) -> StoreResult<()>;
    fn get_project(&self, project_id: &str) -> StoreResult<Option<ProjectRecord>>;
    fn list_projects(&self, owner_user_id: &str) -> StoreResult<Vec<ProjectRecord>>;

    /// Inserts or replaces the reference set of `set.kind` for the project.
    fn put_ref_set(&self, set: RefFeatureSet) -> StoreResult<()>;
    fn get_ref_set(&self, project_id: &str, kind: FeatureKind) -> StoreResult<Option<RefFeatureSet>>;

    fn insert_log(&self, log: LogRecord) -> StoreResult<()>;
    fn get_log(&self, log_id: &str) -> StoreResult<Option<LogRecord>>;
    /// Matching records sorted by `(timestamp, log_id)`, then paged.
    fn query_logs(&self, query: &LogQuery) -> StoreResult<Vec<LogRecord>>;
    /// Removes and returns the record.
    fn delete_log(&self, log_id: &str) -> StoreResult<LogRecord>;
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Op {
    CreateUser { user: UserRecord },
    InsertToken { token: ApiToken },
    RevokeToken { token_hash: String },
    CreateProject { project: ProjectRecord },
    PutRefSet { set: Box<RefFeatureSet> },
    InsertLog { log: Box<LogRecord> },
    DeleteLog { log_id: String },
}

#[derive(Default)]
struct Tables {
    users: HashMap<String, UserRecord>,
    tokens: HashMap<String, ApiToken>,
    projects: HashMap<String, ProjectRecord>,
    project_names: BTreeSet<(String, String)>,
    ref_sets: HashMap<(String, FeatureKind), RefFeatureSet>,
    logs: HashMap<String, LogRecord>,
    log_index: BTreeSet<(String, Timestamp, String)>,
}

impl Tables {
    fn check(&self, op: &Op) -> StoreResult<()> {
        match op {
            Op::CreateUser { user } => {
                if self.users.contains_key(&user.user_id) {
                    return Err(StoreError::Conflict(format!("user {} exists", user.user_id)));
                }
            }
            Op::InsertToken { token } => {
                if !self.users.contains_key(&token.user_id) {
                    return Err(StoreError::NotFound(format!("user {}", token.user_id)));
                }
                if self.tokens.contains_key(&token.token_hash) {
                    return Err(StoreError::Conflict("token digest collision".into()));
                }
            }
            Op::RevokeToken { token_hash } => {
                if !self.tokens.contains_key(token_hash) {
                    return Err(StoreError::NotFound("token".into()));
                }
            }
            Op::CreateProject { project } => {
                if !self.users.contains_key(&project.owner_user_id) {
                    return Err(StoreError::NotFound(format!("user {}", project.owner_user_id)));
                }
                if self.projects.contains_key(&project.project_id) {
                    return Err(StoreError::Conflict(format!("project id {} exists", project.project_id)));
                }
                if self
                    .project_names
                    .contains(&(project.owner_user_id.clone(), project.name.clone()))
                {
                    return Err(StoreError::Conflict(format!("project name {:?} already used", project.name)));
                }
            }
            Op::PutRefSet { set } => {
                if !self.projects.contains_key(&set.project_id) {
                    return Err(StoreError::NotFound(format!("project {}", set.project_id)));
                }
                if set.feature_names.len() != set.matrix.cols() {
                    return Err(StoreError::Invalid("feature_names length does not match matrix columns".into()));
                }
            }
            Op::InsertLog { log } => {
                if !self.projects.contains_key(&log.project_id) {
                    return Err(StoreError::NotFound(format!("project {}", log.project_id)));
                }
                if self.logs.contains_key(&log.log_id) {
                    return Err(StoreError::Conflict(format!("log {} exists", log.log_id)));
                }
            }
            Op::DeleteLog { log_id } => {
                if !self.logs.contains_key(log_id) {
                    return Err(StoreError::NotFound(format!("log {log_id}")));
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, op: Op) -> Option<LogRecord> {
        match op {
            Op::CreateUser { user } => {
                self.users.insert(user.user_id.clone(), user);
            }
            Op::InsertToken { token } => {
                self.tokens.insert(token.token_hash.clone(), token);
            }
            Op::RevokeToken { token_hash } => {
                if let Some(t) = self.tokens.get_mut(&token_hash) {
                    t.revoked = true;
                }
            }
            Op::CreateProject { project } => {
                self.project_names
                    .insert((project.owner_user_id.clone(), project.name.clone()));
                self.projects.insert(project.project_id.clone(), project);
            }
            Op::PutRefSet { set } => {
                self.ref_sets.insert((set.project_id.clone(), set.kind), *set);
            }
            Op::InsertLog { log } => {
                self.log_index
                    .insert((log.project_id.clone(), log.timestamp, log.log_id.clone()));
                self.logs.insert(log.log_id.clone(), *log);
            }
            Op::DeleteLog { log_id } => {
                let log = self.logs.remove(&log_id)?;
                self.log_index
                    .remove(&(log.project_id.clone(), log.timestamp, log.log_id.clone()));
                return Some(log);
            }
        }
        None
    }
}

struct Inner {
    tables: Tables,
    /// Journal bytes already applied.
    offset: u64,
}

pub struct JournalStore {
    path: Option<PathBuf>,
    inner: RwLock<Inner>,
}

impl JournalStore {
    /// A store with no backing file; state lives as long as the value.
    pub fn in_memory() -> Self {
        JournalStore {
            path: None,
            inner: RwLock::new(Inner { tables: Tables::default(), offset: 0 }),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> StoreResult<Self> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut inner = Inner { tables: Tables::default(), offset: 0 };
        file.lock_shared()?;
        let res = catch_up(&mut inner, &file);
        file.unlock()?;
        res?;
        Ok(JournalStore { path: Some(path), inner: RwLock::new(inner) })
    }

    fn is_stale(&self, offset: u64) -> StoreResult<bool> {
        match &self.path {
            None => Ok(false),
            Some(p) => Ok(std::fs::metadata(p)?.len() != offset),
        }
    }

    fn read<T>(&self, f: impl FnOnce(&Tables) -> T) -> StoreResult<T> {
        {
            let inner = self.inner.read().expect("store lock poisoned");
            if !self.is_stale(inner.offset)? {
                return Ok(f(&inner.tables));
            }
        }
        let mut inner = self.inner.write().expect("store lock poisoned");
        if let Some(path) = &self.path {
            let file = File::open(path)?;
            file.lock_shared()?;
            let res = catch_up(&mut inner, &file);
            file.unlock()?;
            res?;
        }
        Ok(f(&inner.tables))
    }

    fn write(&self, op: Op) -> StoreResult<Option<LogRecord>> {
        let mut inner = self.inner.write().expect("store lock poisoned");
        let Some(path) = &self.path else {
            inner.tables.check(&op)?;
            return Ok(inner.tables.apply(op));
        };
        let mut file = OpenOptions::new().read(true).append(true).open(path)?;
        file.lock()?;
        let res = (|| {
            catch_up(&mut inner, &file)?;
            // drop a torn tail left by a crashed writer
            if file.metadata()?.len() != inner.offset {
                file.set_len(inner.offset)?;
            }
            inner.tables.check(&op)?;
            let mut line = serde_json::to_vec(&op).map_err(|e| StoreError::Corrupt(e.to_string()))?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
            inner.offset += line.len() as u64;
            Ok(inner.tables.apply(op))
        })();
        file.unlock()?;
        res
    }
}

/// Applies complete journal lines past `inner.offset`. A trailing line without a
/// newline is ignored.
fn catch_up(inner: &mut Inner, file: &File) -> StoreResult<()> {
    let mut f = file;
    f.seek(SeekFrom::Start(inner.offset))?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    let mut consumed = 0;
    while let Some(nl) = buf[consumed..].iter().position(|&b| b == b'\n') {
        let line = &buf[consumed..consumed + nl];
        if !line.is_empty() {
            let op: Op = serde_json::from_slice(line).map_err(|e| {
                StoreError::Corrupt(format!("journal entry at byte {}: {e}", inner.offset + consumed as u64))
            })?;
            inner.tables.apply(op);
        }
        consumed += nl + 1;
    }
    inner.offset += consumed as u64;
    Ok(())
}

impl MetadataStore for JournalStore {
    fn create_user(&self, user: UserRecord) -> StoreResult<()> {
        self.write(Op::CreateUser { user }).map(drop)
    }

    fn get_user(&self, user_id: &str) -> StoreResult<Option<UserRecord>> {
        self.read(|t| t.users.get(user_id).cloned())
    }

    fn insert_token(&self, token: ApiToken) -> StoreResult<()> {
        self.write(Op::InsertToken { token }).map(drop)
    }

    fn find_token(&self, token_hash: &str) -> StoreResult<Option<ApiToken>> {
        self.read(|t| t.tokens.get(token_hash).cloned())
    }

    fn revoke_token(&self, token_hash: &str) -> StoreResult<()> {
        self.write(Op::RevokeToken { token_hash: token_hash.to_owned() }).map(drop)
    }

    fn list_tokens(&self, user_id: &str) -> StoreResult<Vec<ApiToken>> {
        self.read(|t| {
            let mut out: Vec<ApiToken> =
                t.tokens.values().filter(|k| k.user_id == user_id).cloned().collect();
            out.sort_by(|a, b| (a.created_at, &a.token_hash).cmp(&(b.created_at, &b.token_hash)));
            out
        })
    }

    fn create_project(&self, project: ProjectRecord) -> StoreResult<()> {
        self.write(Op::CreateProject { project }).map(drop)
    }

    fn get_project(&self, project_id: &str) -> StoreResult<Option<ProjectRecord>> {
        self.read(|t| t.projects.get(project_id).cloned())
    }

    fn list_projects(&self, owner_user_id: &str) -> StoreResult<Vec<ProjectRecord>> {
        self.read(|t| {
            let mut v: Vec<_> = t
                .projects
                .values()
                .filter(|p| p.owner_user_id == owner_user_id)
                .cloned()
                .collect();
            v.sort_by(|a, b| a.name.cmp(&b.name));
            v
        })
    }

    fn put_ref_set(&self, set: RefFeatureSet) -> StoreResult<()> {
        self.write(Op::PutRefSet { set: Box::new(set) }).map(drop)
    }

    fn get_ref_set(&self, project_id: &str, kind: FeatureKind) -> StoreResult<Option<RefFeatureSet>> {
        self.read(|t| t.ref_sets.get(&(project_id.to_owned(), kind)).cloned())
    }

    fn insert_log(&self, log: LogRecord) -> StoreResult<()> {
        self.write(Op::InsertLog { log: Box::new(log) }).map(drop)
    }

    fn get_log(&self, log_id: &str) -> StoreResult<Option<LogRecord>> {
        self.read(|t| t.logs.get(log_id).cloned())
    }

    fn query_logs(&self, q: &LogQuery) -> StoreResult<Vec<LogRecord>> {
        if q.from > q.to {
            return Err(StoreError::Invalid("from is after to".into()));
        }
        self.read(|t| {
            let lo = (q.project_id.clone(), q.from, String::new());
            let hi = (q.project_id.clone(), q.to, String::new());
            t.log_index
                .range(lo..hi)
                .filter_map(|(_, _, id)| t.logs.get(id))
                .filter(|l| !q.outlier_only || l.is_outlier())
                .skip(q.offset)
                .take(q.limit.unwrap_or(usize::MAX))
                .cloned()
                .collect()
        })
    }

    fn delete_log(&self, log_id: &str) -> StoreResult<LogRecord> {
        self.write(Op::DeleteLog { log_id: log_id.to_owned() })?
            .ok_or_else(|| StoreError::NotFound(format!("log {log_id}")))
    }
}
