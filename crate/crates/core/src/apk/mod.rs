//! APK container handling and the two static inputs pulled out of it: the
//! manifest (permissions) and the DEX type tables (class descriptors).

mod axml;
mod dex;

use std::fs::File;
use std::io::{Read, Seek};
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use axml::{decode_manifest, ManifestError, ManifestInfo};
pub use dex::{index_classes, normalize_descriptor, DexClassIndex, DexError, DEX_MAGIC_PREFIX};

pub const MANIFEST_ENTRY: &str = "AndroidManifest.xml";

#[derive(Error, Debug)]
pub enum ApkError {
    #[error("{0}: not a ZIP container ({1})")]
    NotZip(PathBuf, String),

    #[error("{0}: no AndroidManifest.xml entry")]
    MissingManifest(PathBuf),

    #[error("{0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),

    #[error("{0}: entry {1} could not be read: {2}")]
    Entry(PathBuf, String, String),
}

/// The parts of an APK the static analysis needs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApkArchive {
    pub path: PathBuf,
    /// Every entry of the container with its uncompressed size.
    pub entries: Vec<(String, u64)>,
    pub manifest_bytes: Vec<u8>,
    /// `classes.dex`, `classes2.dex`, ... in load order.
    pub dex_blobs: Vec<Vec<u8>>,
}

impl ApkArchive {
    pub fn is_executable(&self) -> bool {
        !self.dex_blobs.is_empty()
    }
}

/// Position of a top-level `classesN.dex` entry in the multidex load order,
/// or `None` for anything else.
fn dex_ordinal(name: &str) -> Option<u32> {
    let stem = name.strip_prefix("classes")?.strip_suffix(".dex")?;
    if stem.is_empty() {
        return Some(1);
    }
    match stem.parse::<u32>() {
        Ok(n) if n >= 2 && !stem.starts_with('0') => Some(n),
        _ => None,
    }
}

pub fn open_apk(path: impl AsRef<Path>) -> Result<ApkArchive, ApkError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ApkError::Io(path.to_path_buf(), e))?;
    read_apk(path, file)
}

/// Same as [`open_apk`] for an in-memory container; `path` is only used for
/// labelling.
pub fn open_apk_bytes(path: impl AsRef<Path>, bytes: &[u8]) -> Result<ApkArchive, ApkError> {
    read_apk(path.as_ref(), std::io::Cursor::new(bytes))
}

fn read_apk<R: Read + Seek>(path: &Path, reader: R) -> Result<ApkArchive, ApkError> {
    let mut zip = zip::ZipArchive::new(reader).map_err(|e| ApkError::NotZip(path.to_path_buf(), e.to_string()))?;

    let mut entries = Vec::with_capacity(zip.len());
    let mut manifest_bytes = None;
    let mut dex = Vec::new();

    for i in 0..zip.len() {
        let mut entry =
            zip.by_index(i).map_err(|e| ApkError::Entry(path.to_path_buf(), format!("#{i}"), e.to_string()))?;
        let name = entry.name().to_string();
        entries.push((name.clone(), entry.size()));

        let ordinal = dex_ordinal(&name);
        if name != MANIFEST_ENTRY && ordinal.is_none() {
            continue;
        }
        let mut buf = Vec::with_capacity(entry.size().min(64 << 20) as usize);
        entry.read_to_end(&mut buf).map_err(|e| ApkError::Entry(path.to_path_buf(), name.clone(), e.to_string()))?;
        match ordinal {
            Some(n) => dex.push((n, buf)),
            None => manifest_bytes = Some(buf),
        }
    }

    let manifest_bytes = manifest_bytes.ok_or_else(|| ApkError::MissingManifest(path.to_path_buf()))?;
    dex.sort_by_key(|(n, _)| *n);

    Ok(ApkArchive {
        path: path.to_path_buf(),
        entries,
        manifest_bytes,
        dex_blobs: dex.into_iter().map(|(_, b)| b).collect(),
    })
}
