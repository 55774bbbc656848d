//! Result envelopes and their JSON / CSV encodings.

use std::env;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

/// Environment variable naming the directory for relative `--out` paths.
pub const OUT_DIR_ENV: &str = "CHOWLA_OUT_DIR";

#[derive(Serialize)]
pub struct Meta {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Value,
    pub threads: usize,
    pub wall_time_seconds: f64,
}

/// A finished command: the JSON document and the rows of its CSV projection.
pub struct Artifact {
    pub document: Value,
    pub csv_rows: Vec<Value>,
}

impl Artifact {
    pub fn new(meta: Meta, result: Value, extras: Map<String, Value>, csv_rows: Vec<Value>) -> Self {
        let mut document = json!({ "meta": meta, "result": result });
        let obj = document.as_object_mut().expect("object literal");
        obj.extend(extras);
        Artifact { document, csv_rows }
    }
}

pub fn resolve(path: &Path) -> PathBuf {
    match env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() => Path::new(&dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes to `path` (CSV when it ends in `.csv`, JSON otherwise) or prints
/// JSON to stdout. Returns the path written.
pub fn emit(artifact: &Artifact, path: Option<&Path>) -> io::Result<Option<PathBuf>> {
    let Some(path) = path else {
        let mut out = io::stdout().lock();
        serde_json::to_writer_pretty(&mut out, &artifact.document)?;
        writeln!(out)?;
        return Ok(None);
    };
    let path = resolve(path);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let file = io::BufWriter::new(fs::File::create(&path)?);
    if is_csv {
        write_csv(file, &artifact.csv_rows)?;
    } else {
        let mut file = file;
        serde_json::to_writer_pretty(&mut file, &artifact.document)?;
        writeln!(file)?;
        file.flush()?;
    }
    Ok(Some(path))
}

fn flatten_into(prefix: &str, value: &Value, out: &mut Vec<(String, String)>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten_into(&key, v, out);
            }
        }
        Value::String(s) => out.push((prefix.to_string(), s.clone())),
        Value::Null => out.push((prefix.to_string(), String::new())),
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

/// One row per JSON value, nested objects flattened to dotted column names.
/// Columns come from the first row.
pub fn write_csv<W: Write>(w: W, rows: &[Value]) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let flat: Vec<Vec<(String, String)>> = rows
        .iter()
        .map(|r| {
            let mut cells = Vec::new();
            flatten_into("", r, &mut cells);
            cells
        })
        .collect();
    if let Some(first) = flat.first() {
        writer.write_record(first.iter().map(|(k, _)| k.as_str()))?;
        let header: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
        for row in &flat {
            let record: Vec<&str> = header
                .iter()
                .map(|h| row.iter().find(|(k, _)| k == h).map_or("", |(_, v)| v.as_str()))
                .collect();
            writer.write_record(record)?;
        }
    }
    writer.flush()?;
    Ok(())
}
