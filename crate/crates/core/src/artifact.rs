//! Content-addressed blob store for pre-trained networks, offline datasets,
//! display media and environment profiles.
//!
//! Blobs live under `<root>/objects/<aa>/<bb>/<hex>` where `aa` and `bb` are
//! the first two byte pairs of the digest, next to a `<hex>.json` sidecar
//! holding the [`BlobMeta`]. Writes go through a temp file and an atomic
//! rename, so concurrent `put`s of the same content are harmless.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

const OBJECTS_DIR: &str = "objects";
const TMP_DIR: &str = "tmp";

/// Hash algorithm tag carried by every [`ContentId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum HashAlg {
    Sha256 = 1,
}

impl HashAlg {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(HashAlg::Sha256),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HashAlg::Sha256 => "sha256",
        }
    }
}

/// Identifies a blob by the digest of its bytes. Rendered as `sha256:<hex>`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentId {
    alg: HashAlg,
    digest: [u8; 32],
}

impl ContentId {
    pub fn of(bytes: &[u8]) -> Self {
        ContentId {
            alg: HashAlg::Sha256,
            digest: Sha256::digest(bytes).into(),
        }
    }

    pub fn from_parts(alg: HashAlg, digest: [u8; 32]) -> Self {
        ContentId { alg, digest }
    }

    pub fn alg(&self) -> HashAlg {
        self.alg
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.digest
    }

    pub fn hex(&self) -> String {
        hex::encode(self.digest)
    }

    /// True if `bytes` hash to this id.
    pub fn matches(&self, bytes: &[u8]) -> bool {
        match self.alg {
            HashAlg::Sha256 => Sha256::digest(bytes).as_slice() == self.digest,
        }
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.alg.name(), self.hex())
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({self})")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid content id {0:?}: expected sha256:<64 lowercase hex digits>")]
pub struct ParseContentIdError(pub String);

impl FromStr for ContentId {
    type Err = ParseContentIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseContentIdError(s.to_string());
        let (alg, hex_part) = s.split_once(':').ok_or_else(err)?;
        if alg != HashAlg::Sha256.name() || hex_part.len() != 64 || hex_part.bytes().any(|b| b.is_ascii_uppercase()) {
            return Err(err());
        }
        let mut digest = [0u8; 32];
        hex::decode_to_slice(hex_part, &mut digest).map_err(|_| err())?;
        Ok(ContentId::from_parts(HashAlg::Sha256, digest))
    }
}

impl Serialize for ContentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ContentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// What a blob holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaKind {
    Network,
    Dataset,
    Display,
    Profile,
}

impl MediaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MediaKind::Network => "network",
            MediaKind::Dataset => "dataset",
            MediaKind::Display => "display",
            MediaKind::Profile => "profile",
        }
    }
}

impl FromStr for MediaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "network" => Ok(MediaKind::Network),
            "dataset" => Ok(MediaKind::Dataset),
            "display" => Ok(MediaKind::Display),
            "profile" => Ok(MediaKind::Profile),
            other => Err(format!("unknown media kind {other:?}")),
        }
    }
}

/// Sidecar metadata. Fields are declared in key order so the serialized
/// JSON is canonical.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobMeta {
    /// Creation time, UTC seconds since the epoch.
    pub created: u64,
    pub kind: MediaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Byte length. Set by [`ArtifactStore::put`].
    pub len: u64,
}

impl BlobMeta {
    pub fn new(kind: MediaKind) -> Self {
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        BlobMeta {
            created,
            kind,
            label: None,
            len: 0,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrity {
    Ok,
    Corrupt,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("blob {0} not found")]
    NotFound(ContentId),
    #[error("blob {0} is corrupt: stored bytes no longer hash to its id")]
    Corrupt(ContentId),
    #[error("bad metadata for blob {id}: {source}")]
    Meta { id: ContentId, source: serde_json::Error },
    #[error("artifact store I/O error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Filesystem-backed content-addressed store.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    root: PathBuf,
}

impl ArtifactStore {
    /// Opens the store at `root`, creating the directory layout if needed.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [root.join(OBJECTS_DIR), root.join(TMP_DIR)] {
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        Ok(ArtifactStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Path of the blob file for `id`.
    pub fn blob_path(&self, id: &ContentId) -> PathBuf {
        let hex = id.hex();
        self.root.join(OBJECTS_DIR).join(&hex[0..2]).join(&hex[2..4]).join(&hex)
    }

    fn meta_path(&self, id: &ContentId) -> PathBuf {
        self.blob_path(id).with_extension("json")
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.blob_path(id).is_file()
    }

    /// Stores `bytes` and returns their id. Storing content that is already
    /// present is a no-op that keeps the original metadata.
    pub fn put(&self, bytes: &[u8], mut meta: BlobMeta) -> Result<ContentId, StoreError> {
        let id = ContentId::of(bytes);
        let blob_path = self.blob_path(&id);
        if blob_path.is_file() {
            return Ok(id);
        }
        let dir = blob_path.parent().expect("blob path has a parent");
        fs::create_dir_all(dir).map_err(io_err(dir))?;

        meta.len = bytes.len() as u64;
        let meta_json = serde_json::to_vec(&meta).map_err(|source| StoreError::Meta { id, source })?;
        // Sidecar first, so a visible blob always has its metadata.
        self.write_atomic(&self.meta_path(&id), &meta_json)?;
        self.write_atomic(&blob_path, bytes)?;
        Ok(id)
    }

    fn write_atomic(&self, dest: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let tmp_dir = self.root.join(TMP_DIR);
        let mut tmp = tempfile::NamedTempFile::new_in(&tmp_dir).map_err(io_err(&tmp_dir))?;
        tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
        tmp.as_file().sync_all().map_err(io_err(dest))?;
        tmp.persist(dest).map_err(|e| StoreError::Io {
            path: dest.to_path_buf(),
            source: e.error,
        })?;
        Ok(())
    }

    pub fn meta(&self, id: &ContentId) -> Result<BlobMeta, StoreError> {
        let path = self.meta_path(id);
        let raw = match fs::read(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(*id)),
            Err(e) => return Err(io_err(&path)(e)),
        };
        serde_json::from_slice(&raw).map_err(|source| StoreError::Meta { id: *id, source })
    }

    fn read_blob(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let path = self.blob_path(id);
        match fs::read(&path) {
            Ok(bytes) => Ok(bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(*id)),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    /// Reads a blob, checking that its bytes still hash to `id`.
    pub fn get(&self, id: &ContentId) -> Result<(Vec<u8>, BlobMeta), StoreError> {
        let bytes = self.read_blob(id)?;
        if !id.matches(&bytes) {
            return Err(StoreError::Corrupt(*id));
        }
        let meta = self.meta(id)?;
        Ok((bytes, meta))
    }

    pub fn verify(&self, id: &ContentId) -> Result<Integrity, StoreError> {
        let bytes = self.read_blob(id)?;
        Ok(if id.matches(&bytes) {
            Integrity::Ok
        } else {
            Integrity::Corrupt
        })
    }

    /// All blob ids present in the store, sorted.
    pub fn list(&self) -> Result<Vec<ContentId>, StoreError> {
        let mut ids = Vec::new();
        let objects = self.root.join(OBJECTS_DIR);
        for level1 in read_dir_sorted(&objects)? {
            for level2 in read_dir_sorted(&level1)? {
                for entry in read_dir_sorted(&level2)? {
                    let Some(name) = entry.file_name().and_then(|n| n.to_str()) else {
                        continue;
                    };
                    if let Ok(id) = format!("sha256:{name}").parse::<ContentId>() {
                        ids.push(id);
                    }
                }
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Blobs present in the store but absent from `referenced`. Nothing is
    /// deleted; this is an audit listing only.
    pub fn unreferenced(&self, referenced: &BTreeSet<ContentId>) -> Result<Vec<ContentId>, StoreError> {
        Ok(self.list()?.into_iter().filter(|id| !referenced.contains(id)).collect())
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>, StoreError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        out.push(entry.map_err(io_err(dir))?.path());
    }
    out.sort();
    Ok(out)
}
