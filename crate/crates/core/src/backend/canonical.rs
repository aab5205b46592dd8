//! Canonical JSON and content-addressed request keys.

use serde_json::Value;

use super::protocol::{Payload, PROTOCOL_VERSION};
use crate::hashing::sha256_hex;

/// Serializes `value` with object keys sorted and floats normalized:
/// integral floats print as integers and other floats use the shortest
/// round-trip representation, so `4.5`, `4.50` and `45e-1` agree.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                let f = n.as_f64().unwrap_or(f64::NAN);
                if f == 0.0 {
                    out.push('0');
                } else if f.fract() == 0.0 && f.abs() < 9.0e15 {
                    out.push_str(&(f as i64).to_string());
                } else {
                    out.push_str(&format!("{f:?}"));
                }
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
    }
}

/// Key for an arbitrary JSON payload (`{"capability", "payload"}` form).
pub fn cache_key_value(value: &Value) -> String {
    let preimage = format!("{PROTOCOL_VERSION}\n{}", canonical_json(value));
    sha256_hex(preimage.as_bytes())
}

pub fn cache_key(payload: &Payload) -> String {
    let value = serde_json::to_value(payload).expect("payload serializes");
    cache_key_value(&value)
}
