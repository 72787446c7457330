#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

pub fn schemas() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas")
}

pub fn wavefront(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wavefront"));
    cmd.args(args).env_remove("WAVEFRONT_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

/// Runs `command` on `config` with `--out dir` and returns the exit code.
pub fn run_in(command: &str, config: &Path, dir: &Path) -> (i32, String) {
    let out = wavefront(&[command, config.to_str().unwrap(), "--out", dir.to_str().unwrap()], &[]);
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

pub fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

pub fn validate(schema: &str, instance: &Value) -> Result<(), String> {
    let s = read_json(&schemas().join(format!("{schema}.schema.json")));
    let v = jsonschema::validator_for(&s).map_err(|e| e.to_string())?;
    let errors: Vec<String> = v.iter_errors(instance).map(|e| format!("{e} at {}", e.instance_path())).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors.join("; "))
    }
}

/// `v` without its wall-clock field.
pub fn without_timestamp(mut v: Value) -> Value {
    if let Some(m) = v.get_mut("metadata").and_then(Value::as_object_mut) {
        m.remove("generated_at_unix");
    }
    v
}

/// Every file under `dir`, JSON normalised, sorted by name.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let bytes = fs::read(&p).unwrap();
            let bytes = if name.ends_with(".json") {
                let v: Value = serde_json::from_slice(&bytes).unwrap();
                serde_json::to_vec(&without_timestamp(v)).unwrap()
            } else {
                bytes
            };
            (name, bytes)
        })
        .collect();
    files.sort();
    files
}

/// Nagumo speed `sqrt(2) (1/2 - a)` at `a = 1/4`.
pub fn nagumo_speed() -> f64 {
    2f64.sqrt() * 0.25
}
