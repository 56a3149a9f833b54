//! Content-addressed blob directory.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};

use super::{write_atomic, StoreError};
use crate::ids::new_id;

/// Kind of media held by a blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Pptx,
    Png,
    Wav,
    Webm,
    M4a,
    Mp4,
    Json,
}

impl MediaKind {
    pub fn extension(self) -> &'static str {
        match self {
            MediaKind::Pptx => "pptx",
            MediaKind::Png => "png",
            MediaKind::Wav => "wav",
            MediaKind::Webm => "webm",
            MediaKind::M4a => "m4a",
            MediaKind::Mp4 => "mp4",
            MediaKind::Json => "json",
        }
    }

    pub fn mime(self) -> &'static str {
        match self {
            MediaKind::Pptx => {
                "application/vnd.openxmlformats-officedocument.presentationml.presentation"
            }
            MediaKind::Png => "image/png",
            MediaKind::Wav => "audio/wav",
            MediaKind::Webm => "audio/webm",
            MediaKind::M4a => "audio/mp4",
            MediaKind::Mp4 => "video/mp4",
            MediaKind::Json => "application/json",
        }
    }
}

/// Reference to stored bytes. The hash doubles as the on-disk file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub id: String,
    pub media_kind: MediaKind,
    pub byte_length: u64,
    pub content_hash: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone)]
pub struct BlobStore {
    dir: PathBuf,
}

impl BlobStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn put(&self, bytes: &[u8], media_kind: MediaKind) -> Result<BlobRef, StoreError> {
        if bytes.is_empty() {
            return Err(StoreError::Invalid("blob must not be empty".into()));
        }
        let content_hash = sha256_hex(bytes);
        let path = self.dir.join(&content_hash);
        if !path.exists() {
            write_atomic(&path, bytes)?;
        }
        Ok(BlobRef {
            id: new_id(),
            media_kind,
            byte_length: bytes.len() as u64,
            content_hash,
        })
    }

    /// Copies a file into the store without holding it twice in memory
    /// longer than needed.
    pub fn put_file(&self, path: &Path, media_kind: MediaKind) -> Result<BlobRef, StoreError> {
        let bytes = fs::read(path)?;
        self.put(&bytes, media_kind)
    }

    pub fn put_json<T: Serialize>(&self, value: &T) -> Result<BlobRef, StoreError> {
        let bytes = serde_json::to_vec_pretty(value)?;
        self.put(&bytes, MediaKind::Json)
    }

    /// Reads the blob and verifies length and digest.
    pub fn get(&self, blob: &BlobRef) -> Result<Vec<u8>, StoreError> {
        let path = self.path_of(blob);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::NotFound(format!("blob {}", blob.content_hash)))
            }
            Err(e) => return Err(e.into()),
        };
        verify(blob, &bytes)?;
        Ok(bytes)
    }

    pub fn get_json<T: DeserializeOwned>(&self, blob: &BlobRef) -> Result<T, StoreError> {
        let bytes = self.get(blob)?;
        Ok(serde_json::from_slice(&bytes)?)
    }

    pub fn path_of(&self, blob: &BlobRef) -> PathBuf {
        self.dir.join(&blob.content_hash)
    }

    pub fn contains(&self, hash: &str) -> bool {
        self.dir.join(hash).exists()
    }

    pub(crate) fn hashes(&self) -> Result<Vec<String>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if name.len() == 64 && name.bytes().all(|b| b.is_ascii_hexdigit()) {
                out.push(name);
            }
        }
        Ok(out)
    }

    pub(crate) fn remove(&self, hash: &str) -> Result<(), StoreError> {
        fs::remove_file(self.dir.join(hash))?;
        Ok(())
    }
}

pub fn verify(blob: &BlobRef, bytes: &[u8]) -> Result<(), StoreError> {
    let actual = sha256_hex(bytes);
    if bytes.len() as u64 != blob.byte_length || actual != blob.content_hash {
        return Err(StoreError::HashMismatch {
            expected: blob.content_hash.clone(),
            actual,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn put_get_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let blobs = BlobStore::open(dir.path()).unwrap();
        let r = blobs.put(b"hello", MediaKind::Json).unwrap();
        assert_eq!(r.byte_length, 5);
        assert_eq!(blobs.get(&r).unwrap(), b"hello");
    }

    #[test]
    fn altered_bytes_fail_verification() {
        let dir = tempfile::tempdir().unwrap();
        let blobs = BlobStore::open(dir.path()).unwrap();
        let r = blobs.put(b"original bytes", MediaKind::Wav).unwrap();
        std::fs::write(blobs.path_of(&r), b"original bytez").unwrap();
        assert!(matches!(
            blobs.get(&r),
            Err(StoreError::HashMismatch { .. })
        ));
    }

    #[test]
    fn empty_blob_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let blobs = BlobStore::open(dir.path()).unwrap();
        assert!(blobs.put(b"", MediaKind::Png).is_err());
    }
}
