#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};

use serde_json::Value;

pub fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_racelens"));
    c.env_remove("RACELENS_CONFIG")
        .env_remove("RACELENS_PORT")
        .env_remove("RACELENS_PROVIDER_ENDPOINT")
        .env_remove("RACELENS_STORE_PATH")
        .env_remove("RACELENS_TOKEN")
        .env("RUST_LOG", "warn");
    c
}

/// Runs the binary and returns its output.
pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn racelens")
}

/// Runs the binary, requires success and parses stdout as JSON.
pub fn run_json(args: &[&str]) -> Value {
    let out = run(args);
    assert!(
        out.status.success(),
        "racelens {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

pub fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

pub fn schema_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/schema")
}

/// Schema violations of `instance` against the published schema `name`.
pub fn schema_errors(name: &str, instance: &Value) -> Vec<String> {
    let path = schema_dir().join(format!("{name}.json"));
    let schema: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    validator.iter_errors(instance).map(|e| e.to_string()).collect()
}

pub fn assert_valid(name: &str, instance: &Value) {
    let errors = schema_errors(name, instance);
    assert!(errors.is_empty(), "{name}: {errors:?}\n{instance}");
}

/// A `racelens serve` child on an ephemeral port.
pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Server {
    pub fn start(store: &Path) -> Self {
        let mut child = bin()
            .args(["serve", "--store", path(store), "--port", "0"])
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .expect("spawn serve");
        let stdout = child.stdout.take().unwrap();
        let mut line = String::new();
        BufReader::new(stdout).read_line(&mut line).unwrap();
        let base = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected serve output: {line:?}"))
            .to_string();
        Self { child, base }
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    /// SIGKILL, no shutdown hooks.
    pub fn kill(mut self) {
        self.child.kill().unwrap();
        self.child.wait().unwrap();
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub fn get(client: &reqwest::blocking::Client, url: &str) -> (u16, Value) {
    let r = client.get(url).send().unwrap();
    (r.status().as_u16(), r.json().unwrap_or(Value::Null))
}

pub fn post(client: &reqwest::blocking::Client, url: &str, body: &Value) -> (u16, Value) {
    let r = client.post(url).json(body).send().unwrap();
    (r.status().as_u16(), r.json().unwrap_or(Value::Null))
}

/// Every page of a photo query, validating each page; panics on duplicates.
pub fn all_pages(client: &reqwest::blocking::Client, base: &str, event: &str, filter: &str, size: usize) -> Vec<String> {
    let mut ids = Vec::new();
    let mut page = 1;
    loop {
        let sep = if filter.is_empty() { "" } else { "&" };
        let (s, v) = get(client, &format!("{base}/events/{event}/photos?{filter}{sep}page={page}&page_size={size}"));
        assert_eq!(s, 200, "{filter}: {v}");
        assert_valid("photo_page", &v);
        ids.extend(v["items"].as_array().unwrap().iter().map(|p| p["photo_id"].as_str().unwrap().to_string()));
        if page >= v["total_pages"].as_u64().unwrap() as usize {
            assert_eq!(ids.len(), v["total"].as_u64().unwrap() as usize);
            return ids;
        }
        page += 1;
    }
}
