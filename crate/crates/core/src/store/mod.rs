//! Document persistence.
//!
//! [`DocumentStore`] is a minimal collection/id/JSON-document interface with
//! three backends: [`FileStore`] (one file per document, atomic rename),
//! [`CouchStore`] (CouchDB-compatible HTTP database) and [`MemoryStore`].
//! [`EventStore`] builds the domain operations on top of any of them.

mod couch;
mod event;
mod file;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use parking_lot::RwLock;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

pub use couch::CouchStore;
pub use event::{
    EventStore, ExportItem, ExportManifest, OnlineMetrics, Page, PhotoQuery, RaceEvent, RaceEventSummary,
    StatusCounts, StoredEmbedding, DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE,
};
pub use file::FileStore;

use crate::config::StoreConfig;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("document {collection}/{id}: {source}")]
    Serde {
        collection: String,
        id: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("store backend: {0}")]
    Backend(String),
    #[error("unknown event {0}")]
    UnknownEvent(String),
    #[error("unknown photo {0}")]
    UnknownPhoto(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid: {0}")]
    Invalid(String),
}

pub trait DocumentStore: Send + Sync {
    /// Inserts or replaces a document. Visible to readers only once complete.
    fn put(&self, collection: &str, id: &str, doc: &Value) -> Result<(), StoreError>;

    fn get(&self, collection: &str, id: &str) -> Result<Option<Value>, StoreError>;

    /// Returns whether a document was removed.
    fn delete(&self, collection: &str, id: &str) -> Result<bool, StoreError>;

    /// Every document in a collection, ordered by id.
    fn list(&self, collection: &str) -> Result<Vec<(String, Value)>, StoreError>;
}

fn to_value<T: Serialize>(collection: &str, id: &str, doc: &T) -> Result<Value, StoreError> {
    serde_json::to_value(doc).map_err(|source| StoreError::Serde {
        collection: collection.into(),
        id: id.into(),
        source,
    })
}

fn from_value<T: DeserializeOwned>(collection: &str, id: &str, v: Value) -> Result<T, StoreError> {
    serde_json::from_value(v).map_err(|source| StoreError::Serde {
        collection: collection.into(),
        id: id.into(),
        source,
    })
}

/// Typed helpers over any [`DocumentStore`].
pub trait TypedStore {
    fn put_doc<T: Serialize>(&self, collection: &str, id: &str, doc: &T) -> Result<(), StoreError>;
    fn get_doc<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<Option<T>, StoreError>;
    fn list_docs<T: DeserializeOwned>(&self, collection: &str) -> Result<Vec<T>, StoreError>;
}

impl<S: DocumentStore + ?Sized> TypedStore for S {
    fn put_doc<T: Serialize>(&self, collection: &str, id: &str, doc: &T) -> Result<(), StoreError> {
        self.put(collection, id, &to_value(collection, id, doc)?)
    }

    fn get_doc<T: DeserializeOwned>(&self, collection: &str, id: &str) -> Result<Option<T>, StoreError> {
        self.get(collection, id)?
            .map(|v| from_value(collection, id, v))
            .transpose()
    }

    fn list_docs<T: DeserializeOwned>(&self, collection: &str) -> Result<Vec<T>, StoreError> {
        self.list(collection)?
            .into_iter()
            .map(|(id, v)| from_value(collection, &id, v))
            .collect()
    }
}

/// Volatile store for tests and dry runs.
#[derive(Default)]
pub struct MemoryStore {
    data: RwLock<BTreeMap<String, BTreeMap<String, Value>>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl DocumentStore for MemoryStore {
    fn put(&self, collection: &str, id: &str, doc: &Value) -> Result<(), StoreError> {
        self.data
            .write()
            .entry(collection.into())
            .or_default()
            .insert(id.into(), doc.clone());
        Ok(())
    }

    fn get(&self, collection: &str, id: &str) -> Result<Option<Value>, StoreError> {
        Ok(self.data.read().get(collection).and_then(|c| c.get(id)).cloned())
    }

    fn delete(&self, collection: &str, id: &str) -> Result<bool, StoreError> {
        Ok(self
            .data
            .write()
            .get_mut(collection)
            .is_some_and(|c| c.remove(id).is_some()))
    }

    fn list(&self, collection: &str) -> Result<Vec<(String, Value)>, StoreError> {
        Ok(self
            .data
            .read()
            .get(collection)
            .map(|c| c.iter().map(|(k, v)| (k.clone(), v.clone())).collect())
            .unwrap_or_default())
    }
}

pub fn open_store(config: &StoreConfig) -> Result<Arc<dyn DocumentStore>, StoreError> {
    Ok(match config {
        StoreConfig::File { path, fsync } => Arc::new(FileStore::open(path, *fsync)?),
        StoreConfig::Couch { url, database } => Arc::new(CouchStore::connect(url, database)?),
    })
}
