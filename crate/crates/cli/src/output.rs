use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Map, Value};

use crate::config::SCHEMA_VERSION;

/// Output directory; every file lands via a temporary file and a rename.
#[derive(Debug, Clone)]
pub struct Output {
    dir: PathBuf,
}

impl Output {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf() })
    }

    #[cfg(test)]
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&self, name: &str, contents: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir)?;
        tmp.write_all(contents)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&path).map_err(|e| e.error)?;
        Ok(path)
    }

    pub fn write_json(&self, name: &str, value: &Value) -> std::io::Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// `{schema, command, status, metadata, ...body}`. The timestamp lives only
/// in `metadata`.
pub fn envelope(command: &str, status: &str, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("schema".into(), json!(SCHEMA_VERSION));
    map.insert("command".into(), json!(command));
    map.insert("status".into(), json!(status));
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    map.insert(
        "metadata".into(),
        json!({ "generated_at_unix": now, "tool_version": env!("CARGO_PKG_VERSION") }),
    );
    if let Value::Object(body) = body {
        for (k, v) in body {
            map.insert(k, v);
        }
    }
    Value::Object(map)
}

/// CSV with a header row; floats in shortest round-trip scientific form.
pub fn csv_table(header: &[&str], rows: &[Vec<Option<f64>>]) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .map(|x| x.map(|x| format!("{x:e}")).unwrap_or_default())
            .collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_replace_files_whole() {
        let dir = tempfile::tempdir().unwrap();
        let out = Output::create(&dir.path().join("a/b")).unwrap();
        out.write("x.txt", b"first").unwrap();
        out.write("x.txt", b"second").unwrap();
        assert_eq!(fs::read_to_string(out.dir().join("x.txt")).unwrap(), "second");
        let names: Vec<_> = fs::read_dir(out.dir()).unwrap().collect();
        assert_eq!(names.len(), 1);
    }

    #[test]
    fn envelope_keeps_body_and_header() {
        let v = envelope("front", "ok", json!({"speed": 0.5}));
        assert_eq!(v["schema"], 1);
        assert_eq!(v["command"], "front");
        assert_eq!(v["speed"], 0.5);
        assert!(v["metadata"]["generated_at_unix"].is_u64());
    }

    #[test]
    fn csv_leaves_missing_cells_empty() {
        let s = csv_table(&["a", "b"], &[vec![Some(1.5), None]]);
        assert_eq!(s, "a,b\n1.5e0,\n");
    }
}
