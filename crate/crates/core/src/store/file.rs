use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde_json::Value;

use super::{DocumentStore, StoreError};

/// One JSON file per document under `root/<collection>/<id>.json`.
///
/// Writes go to a temporary file that is flushed (and fsynced when enabled)
/// before being renamed over the target, so a crash leaves either the old or
/// the new document, never a torn one.
pub struct FileStore {
    root: PathBuf,
    fsync: bool,
    counter: AtomicU64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Escapes everything outside `[A-Za-z0-9._-]` as `%XX`.
fn escape(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for b in name.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'_' | b'-' => out.push(b as char),
            b'.' if !out.is_empty() => out.push('.'),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

fn unescape(name: &str) -> Option<String> {
    let bytes = name.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = std::str::from_utf8(bytes.get(i + 1..i + 3)?).ok()?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

impl FileStore {
    pub fn open(root: impl AsRef<Path>, fsync: bool) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root).map_err(io_err(&root))?;
        Ok(Self {
            root,
            fsync,
            counter: AtomicU64::new(0),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, collection: &str) -> PathBuf {
        self.root.join(escape(collection))
    }

    fn path(&self, collection: &str, id: &str) -> PathBuf {
        self.dir(collection).join(format!("{}.json", escape(id)))
    }
}

impl DocumentStore for FileStore {
    fn put(&self, collection: &str, id: &str, doc: &Value) -> Result<(), StoreError> {
        let dir = self.dir(collection);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let target = self.path(collection, id);
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let tmp = dir.join(format!(".{}.{}.{n}.tmp", escape(id), std::process::id()));
        let bytes = serde_json::to_vec(doc).map_err(|source| StoreError::Serde {
            collection: collection.into(),
            id: id.into(),
            source,
        })?;
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&bytes).map_err(io_err(&tmp))?;
        if self.fsync {
            f.sync_all().map_err(io_err(&tmp))?;
        }
        drop(f);
        fs::rename(&tmp, &target).map_err(io_err(&target))?;
        if self.fsync {
            File::open(&dir).and_then(|d| d.sync_all()).map_err(io_err(&dir))?;
        }
        Ok(())
    }

    fn get(&self, collection: &str, id: &str) -> Result<Option<Value>, StoreError> {
        let path = self.path(collection, id);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|source| StoreError::Serde {
                    collection: collection.into(),
                    id: id.into(),
                    source,
                }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn delete(&self, collection: &str, id: &str) -> Result<bool, StoreError> {
        let path = self.path(collection, id);
        match fs::remove_file(&path) {
            Ok(()) => Ok(true),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(false),
            Err(e) => Err(io_err(&path)(e)),
        }
    }

    fn list(&self, collection: &str) -> Result<Vec<(String, Value)>, StoreError> {
        let dir = self.dir(collection);
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(io_err(&dir)(e)),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(io_err(&dir))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".json") {
                if let Some(id) = unescape(stem) {
                    ids.push(id);
                }
            }
        }
        ids.sort();
        let mut out = Vec::with_capacity(ids.len());
        for id in ids {
            // A concurrent delete between listing and reading is not an error.
            if let Some(v) = self.get(collection, &id)? {
                out.push((id, v));
            }
        }
        Ok(out)
    }
}
