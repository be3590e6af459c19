use std::time::Duration;

use reqwest::blocking::{Client, Response};
use reqwest::{StatusCode, Url};
use serde::Deserialize;
use serde_json::{json, Value};

use super::{DocumentStore, StoreError};

const CONFLICT_RETRIES: usize = 5;

/// Client for a CouchDB-compatible database.
///
/// All collections share one database; a document's id is
/// `<collection>:<id>` and its payload sits under `body`.
pub struct CouchStore {
    client: Client,
    base: Url,
    database: String,
}

#[derive(Deserialize)]
struct AllDocs {
    rows: Vec<Row>,
}

#[derive(Deserialize)]
struct Row {
    id: String,
    #[serde(default)]
    doc: Option<Value>,
}

fn backend(e: impl std::fmt::Display) -> StoreError {
    StoreError::Backend(e.to_string())
}

fn doc_id(collection: &str, id: &str) -> Result<String, StoreError> {
    if collection.contains(':') {
        return Err(StoreError::Invalid(format!("collection name {collection:?} contains ':'")));
    }
    Ok(format!("{collection}:{id}"))
}

fn check(resp: Response) -> Result<Response, StoreError> {
    if resp.status().is_success() {
        Ok(resp)
    } else {
        let status = resp.status();
        Err(backend(format!("HTTP {status}: {}", resp.text().unwrap_or_default())))
    }
}

impl CouchStore {
    /// Connects and creates the database when missing.
    pub fn connect(url: &str, database: &str) -> Result<Self, StoreError> {
        let base = Url::parse(url).map_err(backend)?;
        let client = Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(backend)?;
        let store = Self {
            client,
            base,
            database: database.into(),
        };
        let resp = store.client.put(store.url(&[])).send().map_err(backend)?;
        if resp.status() != StatusCode::PRECONDITION_FAILED {
            check(resp)?;
        }
        Ok(store)
    }

    fn url(&self, segments: &[&str]) -> Url {
        let mut u = self.base.clone();
        {
            let mut p = u.path_segments_mut().expect("http base url");
            p.pop_if_empty().push(&self.database);
            for s in segments {
                p.push(s);
            }
        }
        u
    }

    fn fetch(&self, id: &str) -> Result<Option<Value>, StoreError> {
        let resp = self.client.get(self.url(&[id])).send().map_err(backend)?;
        if resp.status() == StatusCode::NOT_FOUND {
            return Ok(None);
        }
        check(resp)?.json().map(Some).map_err(backend)
    }
}

fn rev(doc: &Value) -> Option<String> {
    doc.get("_rev").and_then(Value::as_str).map(String::from)
}

impl DocumentStore for CouchStore {
    fn put(&self, collection: &str, id: &str, doc: &Value) -> Result<(), StoreError> {
        let key = doc_id(collection, id)?;
        for _ in 0..CONFLICT_RETRIES {
            let mut body = json!({ "collection": collection, "body": doc });
            if let Some(r) = self.fetch(&key)?.as_ref().and_then(rev) {
                body["_rev"] = Value::String(r);
            }
            let resp = self.client.put(self.url(&[&key])).json(&body).send().map_err(backend)?;
            if resp.status() == StatusCode::CONFLICT {
                continue;
            }
            check(resp)?;
            return Ok(());
        }
        Err(StoreError::Conflict(format!("{collection}/{id}: too many concurrent updates")))
    }

    fn get(&self, collection: &str, id: &str) -> Result<Option<Value>, StoreError> {
        Ok(self
            .fetch(&doc_id(collection, id)?)?
            .and_then(|mut d| d.get_mut("body").map(Value::take)))
    }

    fn delete(&self, collection: &str, id: &str) -> Result<bool, StoreError> {
        let key = doc_id(collection, id)?;
        for _ in 0..CONFLICT_RETRIES {
            let Some(r) = self.fetch(&key)?.as_ref().and_then(rev) else {
                return Ok(false);
            };
            let mut url = self.url(&[&key]);
            url.query_pairs_mut().append_pair("rev", &r);
            let resp = self.client.delete(url).send().map_err(backend)?;
            match resp.status() {
                StatusCode::CONFLICT => continue,
                StatusCode::NOT_FOUND => return Ok(false),
                _ => {
                    check(resp)?;
                    return Ok(true);
                }
            }
        }
        Err(StoreError::Conflict(format!("{collection}/{id}: too many concurrent updates")))
    }

    fn list(&self, collection: &str) -> Result<Vec<(String, Value)>, StoreError> {
        let prefix = doc_id(collection, "")?;
        let mut url = self.url(&["_all_docs"]);
        url.query_pairs_mut()
            .append_pair("include_docs", "true")
            .append_pair("startkey", &Value::String(prefix.clone()).to_string())
            .append_pair("endkey", &Value::String(format!("{prefix}\u{fff0}")).to_string());
        let all: AllDocs = check(self.client.get(url).send().map_err(backend)?)?
            .json()
            .map_err(backend)?;
        let mut out: Vec<(String, Value)> = all
            .rows
            .into_iter()
            .filter_map(|row| {
                let id = row.id.strip_prefix(&prefix)?.to_string();
                let body = row.doc?.get_mut("body").map(Value::take)?;
                Some((id, body))
            })
            .collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }
}
