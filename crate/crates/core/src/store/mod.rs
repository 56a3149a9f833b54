//! Session persistence.
//!
//! Layout under the data directory:
//!
//! ```text
//! sessions/<id>.json   one document per session (schema_version = 1)
//! blobs/<sha256>       content-addressed media and JSON records
//! jobs/<id>.json       pipeline job records (written by the job engine)
//! ```
//!
//! Writes go through [`Store::update`], which holds a per-session mutex for
//! the whole load → modify → write cycle and replaces the document with an
//! atomic rename. Readers never observe a half-written file.

pub mod blob;
pub mod session;

use chrono::Utc;
use parking_lot::Mutex;
use serde::Serialize;
use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use blob::{sha256_hex, BlobRef, BlobStore, MediaKind};
pub use session::{
    AnalysisRef, Attachment, ChatMessage, PracticeRef, Role, Session, SessionSummary, Stage,
    SCHEMA_VERSION,
};

use crate::ids::new_id;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("illegal stage transition from {from} to {to}")]
    IllegalTransition { from: Stage, to: Stage },
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("cannot attach {kind} while session is in stage {stage}")]
    WrongStage { kind: &'static str, stage: Stage },
    #[error("content hash mismatch: expected {expected}, got {actual}")]
    HashMismatch { expected: String, actual: String },
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

/// Writes `bytes` to `path` through a temp file and rename in the same
/// directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("file"),
        new_id()
    ));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec_pretty(value)?;
    write_atomic(path, &bytes)?;
    Ok(())
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    sessions_dir: PathBuf,
    blobs: BlobStore,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        let sessions_dir = root.join("sessions");
        fs::create_dir_all(&sessions_dir)?;
        fs::create_dir_all(root.join("jobs"))?;
        let blobs = BlobStore::open(root.join("blobs"))?;
        Ok(Self {
            root,
            sessions_dir,
            blobs,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn jobs_dir(&self) -> PathBuf {
        self.root.join("jobs")
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    fn session_path(&self, id: &str) -> Result<PathBuf, StoreError> {
        if id.is_empty() || !id.bytes().all(|b| b.is_ascii_alphanumeric()) {
            return Err(StoreError::NotFound(format!("session {id}")));
        }
        Ok(self.sessions_dir.join(format!("{id}.json")))
    }

    fn lock_for(&self, id: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(())))
            .clone()
    }

    fn write_session(&self, session: &Session) -> Result<(), StoreError> {
        session.check_invariants().map_err(StoreError::Invalid)?;
        write_json_atomic(&self.session_path(&session.id)?, session)
    }

    pub fn create_session(&self, user_prompt: &str) -> Result<Session, StoreError> {
        let session = Session::new(new_id(), user_prompt.to_string(), Utc::now());
        let lock = self.lock_for(&session.id);
        let _guard = lock.lock();
        self.write_session(&session)?;
        Ok(session)
    }

    pub fn load_session(&self, id: &str) -> Result<Session, StoreError> {
        let path = self.session_path(id)?;
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("session {id}")))
            }
            Err(e) => return Err(e.into()),
        };
        let session: Session = serde_json::from_slice(&bytes)?;
        if session.deleted {
            return Err(StoreError::NotFound(format!("session {id}")));
        }
        Ok(session)
    }

    /// Non-deleted sessions ordered by creation time.
    pub fn list_sessions(&self) -> Result<Vec<SessionSummary>, StoreError> {
        let mut out = Vec::new();
        for s in self.all_sessions()? {
            if !s.deleted {
                out.push(s.summary());
            }
        }
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        Ok(out)
    }

    /// Every session file, deleted ones included.
    pub fn all_sessions(&self) -> Result<Vec<Session>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.sessions_dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let bytes = fs::read(&path)?;
            out.push(serde_json::from_slice::<Session>(&bytes)?);
        }
        Ok(out)
    }

    /// Serialized read-modify-write of one session. The closure sees the
    /// latest committed state; nothing is written if it fails.
    pub fn update<T>(
        &self,
        id: &str,
        f: impl FnOnce(&mut Session) -> Result<T, StoreError>,
    ) -> Result<(Session, T), StoreError> {
        let lock = self.lock_for(id);
        let _guard = lock.lock();
        let mut session = self.load_session(id)?;
        let out = f(&mut session)?;
        self.write_session(&session)?;
        Ok((session, out))
    }

    pub fn transition_stage(&self, id: &str, target: Stage) -> Result<Session, StoreError> {
        self.update(id, |s| apply_transition(s, target))
            .map(|(s, _)| s)
    }

    pub fn attach_artifact(&self, id: &str, attachment: Attachment) -> Result<Session, StoreError> {
        self.update(id, |s| apply_attachment(s, attachment))
            .map(|(s, _)| s)
    }

    pub fn set_user_prompt(&self, id: &str, prompt: &str) -> Result<Session, StoreError> {
        self.update(id, |s| {
            if s.stage != Stage::Setup {
                return Err(StoreError::WrongStage {
                    kind: "prompt",
                    stage: s.stage,
                });
            }
            s.user_prompt = prompt.to_string();
            Ok(())
        })
        .map(|(s, _)| s)
    }

    /// Appends chat messages, clamping timestamps so history stays
    /// non-decreasing even if the wall clock steps back.
    pub fn append_chat(&self, id: &str, messages: Vec<ChatMessage>) -> Result<Session, StoreError> {
        self.update(id, |s| {
            for mut m in messages {
                if m.content.is_empty() {
                    return Err(StoreError::Invalid("chat message content is empty".into()));
                }
                if let Some(last) = s.chat_history.last() {
                    if m.timestamp < last.timestamp {
                        m.timestamp = last.timestamp;
                    }
                }
                s.chat_history.push(m);
            }
            Ok(())
        })
        .map(|(s, _)| s)
    }

    /// Soft delete. Blobs stay until [`Store::collect_garbage`] is run.
    pub fn delete_session(&self, id: &str) -> Result<(), StoreError> {
        self.update(id, |s| {
            s.deleted = true;
            Ok(())
        })
        .map(|_| ())
    }

    /// Finds the live session holding a practice recording.
    pub fn find_practice(&self, practice_id: &str) -> Result<(Session, PracticeRef), StoreError> {
        for s in self.all_sessions()? {
            if s.deleted {
                continue;
            }
            if let Some(p) = s
                .practice_refs
                .iter()
                .find(|p| p.id == practice_id)
                .cloned()
            {
                return Ok((s, p));
            }
        }
        Err(StoreError::NotFound(format!("practice {practice_id}")))
    }

    /// Maintenance: removes blobs unreachable from any live session.
    /// JSON records are walked for nested `content_hash` fields. Returns the
    /// number of blobs removed.
    pub fn collect_garbage(&self) -> Result<usize, StoreError> {
        let mut reachable = HashSet::new();
        let mut pending: Vec<BlobRef> = Vec::new();
        for s in self.all_sessions()? {
            if s.deleted {
                continue;
            }
            let v = serde_json::to_value(&s)?;
            collect_refs(&v, &mut pending);
        }
        for entry in fs::read_dir(self.jobs_dir())? {
            let path = entry?.path();
            if let Ok(bytes) = fs::read(&path) {
                if let Ok(v) = serde_json::from_slice::<serde_json::Value>(&bytes) {
                    collect_refs(&v, &mut pending);
                }
            }
        }
        while let Some(r) = pending.pop() {
            if !reachable.insert(r.content_hash.clone()) {
                continue;
            }
            if r.media_kind == MediaKind::Json {
                if let Ok(bytes) = self.blobs.get(&r) {
                    if let Ok(v) = serde_json::from_slice::<serde_json::Value>(&bytes) {
                        collect_refs(&v, &mut pending);
                    }
                }
            }
        }
        let mut removed = 0;
        for hash in self.blobs.hashes()? {
            if !reachable.contains(&hash) {
                self.blobs.remove(&hash)?;
                removed += 1;
            }
        }
        Ok(removed)
    }
}

fn collect_refs(v: &serde_json::Value, out: &mut Vec<BlobRef>) {
    match v {
        serde_json::Value::Object(map) => {
            if map.contains_key("content_hash") && map.contains_key("media_kind") {
                if let Ok(r) = serde_json::from_value::<BlobRef>(v.clone()) {
                    out.push(r);
                }
            }
            for child in map.values() {
                collect_refs(child, out);
            }
        }
        serde_json::Value::Array(items) => items.iter().for_each(|i| collect_refs(i, out)),
        _ => {}
    }
}

pub fn apply_transition(s: &mut Session, target: Stage) -> Result<(), StoreError> {
    if !s.stage.can_transition_to(target) {
        return Err(StoreError::IllegalTransition {
            from: s.stage,
            to: target,
        });
    }
    match target {
        Stage::Generating => {
            if s.deck_ref.is_none() {
                return Err(StoreError::Precondition(
                    "a slide deck must be uploaded".into(),
                ));
            }
            if s.voice_profile_ref.is_none() {
                return Err(StoreError::Precondition(
                    "a voice sample must be uploaded".into(),
                ));
            }
        }
        Stage::Coaching => {
            if s.exemplar_ref.is_none() {
                return Err(StoreError::Precondition(
                    "the exemplar video has not been generated".into(),
                ));
            }
        }
        Stage::Setup => {}
    }
    s.stage = target;
    Ok(())
}

pub fn apply_attachment(s: &mut Session, attachment: Attachment) -> Result<(), StoreError> {
    if s.stage != attachment.allowed_stage() {
        return Err(StoreError::WrongStage {
            kind: attachment.kind(),
            stage: s.stage,
        });
    }
    match attachment {
        Attachment::Deck(r) => s.deck_ref = Some(r),
        Attachment::VoiceProfile(r) => s.voice_profile_ref = Some(r),
        Attachment::Exemplar(r) => {
            if let Some(old) = s.exemplar_ref.replace(r) {
                s.retired_exemplars.push(old);
            }
        }
        Attachment::Practice(p) => {
            if s.practice_refs.iter().any(|x| x.id == p.id) {
                return Err(StoreError::Invalid(format!(
                    "practice {} already attached",
                    p.id
                )));
            }
            s.practice_refs.push(p);
        }
        Attachment::Analysis(a) => {
            if !s.practice_refs.iter().any(|p| p.id == a.practice_id) {
                return Err(StoreError::Precondition(format!(
                    "practice {} is not part of this session",
                    a.practice_id
                )));
            }
            s.analysis_refs.push(a);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> (tempfile::TempDir, Store) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        (dir, store)
    }

    fn blob(store: &Store, kind: MediaKind) -> BlobRef {
        store.blobs().put(new_id().as_bytes(), kind).unwrap()
    }

    fn to_coaching(store: &Store, id: &str) {
        store
            .attach_artifact(id, Attachment::Deck(blob(store, MediaKind::Json)))
            .unwrap();
        store
            .attach_artifact(id, Attachment::VoiceProfile(blob(store, MediaKind::Json)))
            .unwrap();
        store.transition_stage(id, Stage::Generating).unwrap();
        store
            .attach_artifact(id, Attachment::Exemplar(blob(store, MediaKind::Json)))
            .unwrap();
        store.transition_stage(id, Stage::Coaching).unwrap();
    }

    #[test]
    fn create_session_starts_in_setup() {
        let (_d, store) = store();
        let s = store
            .create_session("English course presentation, non-specialist audience")
            .unwrap();
        assert_eq!(s.stage, Stage::Setup);
        assert!(s.chat_history.is_empty());
        assert_eq!(store.load_session(&s.id).unwrap(), s);
    }

    #[test]
    fn empty_prompt_accepted_and_ids_distinct() {
        let (_d, store) = store();
        let a = store.create_session("").unwrap();
        let b = store.create_session("").unwrap();
        assert_eq!(a.user_prompt, "");
        assert_ne!(a.id, b.id);
        assert_eq!(a.id.len(), 32);
    }

    #[test]
    fn skipping_a_stage_is_rejected() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        let err = store.transition_stage(&s.id, Stage::Coaching).unwrap_err();
        assert!(matches!(
            err,
            StoreError::IllegalTransition {
                from: Stage::Setup,
                to: Stage::Coaching
            }
        ));
        assert!(err.to_string().contains("setup") && err.to_string().contains("coaching"));
    }

    #[test]
    fn generating_requires_deck_and_voice() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        assert!(matches!(
            store.transition_stage(&s.id, Stage::Generating),
            Err(StoreError::Precondition(_))
        ));
        store
            .attach_artifact(&s.id, Attachment::Deck(blob(&store, MediaKind::Json)))
            .unwrap();
        assert!(matches!(
            store.transition_stage(&s.id, Stage::Generating),
            Err(StoreError::Precondition(_))
        ));
        store
            .attach_artifact(
                &s.id,
                Attachment::VoiceProfile(blob(&store, MediaKind::Json)),
            )
            .unwrap();
        assert_eq!(
            store
                .transition_stage(&s.id, Stage::Generating)
                .unwrap()
                .stage,
            Stage::Generating
        );
    }

    #[test]
    fn failed_generation_reverts_to_setup_without_exemplar() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        store
            .attach_artifact(&s.id, Attachment::Deck(blob(&store, MediaKind::Json)))
            .unwrap();
        store
            .attach_artifact(
                &s.id,
                Attachment::VoiceProfile(blob(&store, MediaKind::Json)),
            )
            .unwrap();
        store.transition_stage(&s.id, Stage::Generating).unwrap();
        let s = store.transition_stage(&s.id, Stage::Setup).unwrap();
        assert_eq!(s.stage, Stage::Setup);
        assert!(s.exemplar_ref.is_none());
    }

    #[test]
    fn attachments_are_stage_gated_and_ordered() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        let p1 = PracticeRef {
            id: new_id(),
            record: blob(&store, MediaKind::Json),
        };
        assert!(matches!(
            store.attach_artifact(&s.id, Attachment::Practice(p1.clone())),
            Err(StoreError::WrongStage { .. })
        ));
        to_coaching(&store, &s.id);
        let p2 = PracticeRef {
            id: new_id(),
            record: blob(&store, MediaKind::Json),
        };
        store
            .attach_artifact(&s.id, Attachment::Practice(p1.clone()))
            .unwrap();
        let s2 = store
            .attach_artifact(&s.id, Attachment::Practice(p2.clone()))
            .unwrap();
        assert_eq!(s2.practice_refs, vec![p1, p2]);
        // deck only in setup
        assert!(matches!(
            store.attach_artifact(&s.id, Attachment::Deck(blob(&store, MediaKind::Json))),
            Err(StoreError::WrongStage { .. })
        ));
    }

    #[test]
    fn analysis_must_reference_known_practice() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        to_coaching(&store, &s.id);
        let a = AnalysisRef {
            id: new_id(),
            practice_id: "nope".into(),
            record: blob(&store, MediaKind::Json),
        };
        assert!(store
            .attach_artifact(&s.id, Attachment::Analysis(a))
            .is_err());
    }

    #[test]
    fn unknown_id_is_not_found() {
        let (_d, store) = store();
        assert!(matches!(
            store.load_session("deadbeef"),
            Err(StoreError::NotFound(_))
        ));
        assert!(matches!(
            store.load_session("../etc"),
            Err(StoreError::NotFound(_))
        ));
    }

    #[test]
    fn hundred_sessions_listed_in_creation_order() {
        let (_d, store) = store();
        let mut expected = Vec::new();
        for i in 0..100 {
            expected.push(store.create_session(&format!("s{i}")).unwrap());
        }
        let mut oracle: Vec<_> = expected
            .iter()
            .map(|s| (s.created_at, s.id.clone()))
            .collect();
        oracle.sort();
        let listed: Vec<_> = store
            .list_sessions()
            .unwrap()
            .into_iter()
            .map(|s| (s.created_at, s.id))
            .collect();
        assert_eq!(listed, oracle);
    }

    #[test]
    fn soft_delete_hides_session_and_gc_reclaims_blobs() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        let r = blob(&store, MediaKind::Json);
        store
            .attach_artifact(&s.id, Attachment::Deck(r.clone()))
            .unwrap();
        let keep = store.create_session("y").unwrap();
        let kept = blob(&store, MediaKind::Png);
        store
            .attach_artifact(&keep.id, Attachment::Deck(kept.clone()))
            .unwrap();
        store.delete_session(&s.id).unwrap();
        assert!(store.load_session(&s.id).is_err());
        assert!(store.blobs().contains(&r.content_hash));
        let removed = store.collect_garbage().unwrap();
        assert!(removed >= 1);
        assert!(!store.blobs().contains(&r.content_hash));
        assert!(store.blobs().contains(&kept.content_hash));
    }

    #[test]
    fn chat_timestamps_clamped_non_decreasing() {
        let (_d, store) = store();
        let s = store.create_session("x").unwrap();
        let now = Utc::now();
        let earlier = now - chrono::Duration::seconds(10);
        let s = store
            .append_chat(
                &s.id,
                vec![
                    ChatMessage::user("a", now),
                    ChatMessage::coach("b", earlier),
                ],
            )
            .unwrap();
        assert_eq!(s.chat_history[1].timestamp, now);
        assert!(store
            .append_chat(&s.id, vec![ChatMessage::user("", now)])
            .is_err());
    }

    #[test]
    fn concurrent_updates_are_serialized() {
        let (_d, store) = store();
        let store = Arc::new(store);
        let s = store.create_session("x").unwrap();
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let store = store.clone();
                let id = s.id.clone();
                std::thread::spawn(move || {
                    for j in 0..10 {
                        store
                            .append_chat(
                                &id,
                                vec![ChatMessage::user(format!("{i}-{j}"), Utc::now())],
                            )
                            .unwrap();
                    }
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert_eq!(store.load_session(&s.id).unwrap().chat_history.len(), 80);
    }
}
