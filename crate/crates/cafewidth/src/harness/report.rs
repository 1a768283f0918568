//! Machine-readable run artifacts. Every command writes, under its own
//! output directory:
//!
//! * `result.json`  — deterministic result document (validated against
//!   the published schema before it is written);
//! * `manifest.json` — everything needed to replay the run exactly:
//!   config hash and full resolved config, command, seeds, flags,
//!   thread count, and format versions;
//! * `timing.json`  — wall-clock measurements, kept out of the result
//!   document so replays stay byte-identical;
//! * CSV series where a command produces one.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Identifier of the result document format.
pub const RESULT_SCHEMA_ID: &str = "cafewidth-result/1";

/// The published result-document schema (ships in `docs/`).
pub const RESULT_SCHEMA: &str = include_str!(concat!(
    env!("CARGO_MANIFEST_DIR"),
    "/../../docs/result.schema.json"
));

/// Top-level shape of every `result.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ResultEnvelope {
    pub schema: String,
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub reference: bool,
    pub result: Value,
}

impl ResultEnvelope {
    pub fn new(command: &str, config_sha256: &str, seeds: &[u64], reference: bool, result: Value) -> Self {
        ResultEnvelope {
            schema: RESULT_SCHEMA_ID.to_string(),
            command: command.to_string(),
            config_sha256: config_sha256.to_string(),
            seeds: seeds.to_vec(),
            reference,
            result,
        }
    }
}

// ---------------------------------------------------------------------------
// Minimal JSON-schema checker
// ---------------------------------------------------------------------------
//
// Supports the subset the published schema uses: `type`, `const`, `enum`,
// `required`, `properties`, `items`, and boolean `additionalProperties`.

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "boolean",
        Value::Number(n) => {
            if n.is_i64() || n.is_u64() {
                "integer"
            } else {
                "number"
            }
        }
        Value::String(_) => "string",
        Value::Array(_) => "array",
        Value::Object(_) => "object",
    }
}

fn check(schema: &Value, value: &Value, path: &str) -> std::result::Result<(), String> {
    let obj = match schema {
        Value::Object(o) => o,
        Value::Bool(true) => return Ok(()),
        Value::Bool(false) => return Err(format!("{path}: schema forbids any value")),
        _ => return Err(format!("{path}: malformed schema node")),
    };
    if let Some(expected) = obj.get("const") {
        if value != expected {
            return Err(format!("{path}: expected constant {expected}, got {value}"));
        }
    }
    if let Some(Value::Array(options)) = obj.get("enum") {
        if !options.contains(value) {
            return Err(format!("{path}: {value} not in enum"));
        }
    }
    if let Some(t) = obj.get("type") {
        let actual = type_name(value);
        let matches = |t: &Value| {
            t.as_str()
                .is_some_and(|t| t == actual || (t == "number" && actual == "integer"))
        };
        let ok = match t {
            Value::String(_) => matches(t),
            Value::Array(ts) => ts.iter().any(matches),
            _ => false,
        };
        if !ok {
            return Err(format!("{path}: expected type {t}, got {actual}"));
        }
    }
    if let Value::Object(map) = value {
        if let Some(Value::Array(required)) = obj.get("required") {
            for key in required {
                let key = key.as_str().unwrap_or_default();
                if !map.contains_key(key) {
                    return Err(format!("{path}: missing required field '{key}'"));
                }
            }
        }
        let props = obj.get("properties").and_then(Value::as_object);
        if let Some(props) = props {
            for (key, sub) in props {
                if let Some(v) = map.get(key) {
                    check(sub, v, &format!("{path}/{key}"))?;
                }
            }
        }
        if obj.get("additionalProperties") == Some(&Value::Bool(false)) {
            for key in map.keys() {
                if props.is_none_or(|p| !p.contains_key(key)) {
                    return Err(format!("{path}: unexpected field '{key}'"));
                }
            }
        }
    }
    if let (Value::Array(items), Some(item_schema)) = (value, obj.get("items")) {
        for (i, v) in items.iter().enumerate() {
            check(item_schema, v, &format!("{path}/{i}"))?;
        }
    }
    Ok(())
}

/// Validate a result document against the published schema.
pub fn validate_against_schema(doc: &Value) -> Result<()> {
    let schema: Value = serde_json::from_str(RESULT_SCHEMA)?;
    check(&schema, doc, "$").map_err(Error::InvalidConfig)
}

// ---------------------------------------------------------------------------
// Writers
// ---------------------------------------------------------------------------

/// Serialize deterministically: pretty JSON with object keys in the order
/// the `json!` literals define (maps use sorted keys) and a trailing
/// newline.
fn to_pretty(value: &Value) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_result(dir: &Path, envelope: &ResultEnvelope) -> Result<PathBuf> {
    let doc = serde_json::to_value(envelope)?;
    validate_against_schema(&doc)?;
    let path = dir.join("result.json");
    std::fs::write(&path, to_pretty(&doc)?)?;
    Ok(path)
}

/// Everything needed to replay this run byte-for-byte.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    config: &impl Serialize,
    config_sha256: &str,
    seeds: &[u64],
    reference: bool,
    threads: usize,
) -> Result<PathBuf> {
    let manifest = json!({
        "schema": "cafewidth-manifest/1",
        "command": command,
        "config_sha256": config_sha256,
        "config": serde_json::to_value(config)?,
        "seeds": seeds,
        "reference": reference,
        "threads": threads,
        "versions": {
            "cafewidth": env!("CARGO_PKG_VERSION"),
            "result_schema": RESULT_SCHEMA_ID,
            "checkpoint_format": "CAFW1",
            "dataset_format": "CAFD1",
        },
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, to_pretty(&manifest)?)?;
    Ok(path)
}

/// Wall-clock numbers, separated from the deterministic result document.
pub fn write_timing(dir: &Path, command: &str, wall_seconds: f64, details: Value) -> Result<PathBuf> {
    let timing = json!({
        "schema": "cafewidth-timing/1",
        "command": command,
        "wall_seconds": wall_seconds,
        "details": details,
    });
    let path = dir.join("timing.json");
    std::fs::write(&path, to_pretty(&timing)?)?;
    Ok(path)
}

/// Write one CSV series: a header row plus stringified records.
pub fn write_csv(dir: &Path, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut writer = csv::Writer::from_path(&path)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    writer
        .write_record(header)
        .and_then(|()| rows.iter().try_for_each(|row| writer.write_record(row)))
        .and_then(|()| writer.flush().map_err(csv::Error::from))
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(path)
}

/// Round-trippable JSON object from any serializable value.
pub fn to_object(value: &impl Serialize) -> Result<Map<String, Value>> {
    match serde_json::to_value(value)? {
        Value::Object(map) => Ok(map),
        other => Err(Error::InvalidConfig(format!(
            "expected a JSON object, got {}",
            type_name(&other)
        ))),
    }
}
