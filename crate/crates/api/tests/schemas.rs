//! The rendered schemas in docs/schema must match the types. Run with
//! `RACELENS_WRITE_SCHEMAS=1` to regenerate them.

mod common;

use std::collections::BTreeSet;

use racelens_api::schema::{published, render};

#[test]
fn published_schemas_are_current() {
    let dir = common::schema_dir();
    let write = std::env::var_os("RACELENS_WRITE_SCHEMAS").is_some();
    if write {
        std::fs::create_dir_all(&dir).unwrap();
    }
    let mut names = BTreeSet::new();
    for (name, schema) in published() {
        let path = dir.join(format!("{name}.json"));
        let text = render(&schema);
        if write {
            std::fs::write(&path, &text).unwrap();
        } else {
            let on_disk = std::fs::read_to_string(&path).unwrap_or_default();
            assert_eq!(on_disk, text, "{} is stale", path.display());
        }
        assert!(names.insert(format!("{name}.json")));
    }
    let present: BTreeSet<String> = std::fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(present, names, "unexpected files in {}", dir.display());
}
