//! Canonical JSON emission: keys sorted, floats at fixed 17-significant-digit
//! precision (bit-exact on reparse), non-finite floats as strings. Output is
//! byte-reproducible for a given value, which golden-file tests rely on.

use std::io::Write;
use std::path::Path;

use anyhow::Context;

fn push_float(out: &mut String, x: f64) {
    // serde_json numbers are always finite (non-finite floats become null
    // or, in our report builders, explicit strings before reaching here).
    debug_assert!(x.is_finite());
    out.push_str(&format!("{x:.16e}"));
}

fn push_value(out: &mut String, v: &serde_json::Value, indent: usize) {
    let pad = "  ".repeat(indent);
    let pad_in = "  ".repeat(indent + 1);
    match v {
        serde_json::Value::Null => out.push_str("null"),
        serde_json::Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else if let Some(u) = n.as_u64() {
                out.push_str(&u.to_string());
            } else {
                push_float(out, n.as_f64().unwrap_or(f64::NAN));
            }
        }
        serde_json::Value::String(s) => {
            out.push_str(&serde_json::to_string(s).expect("string serializes"))
        }
        serde_json::Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                out.push('\n');
                out.push_str(&pad_in);
                push_value(out, item, indent + 1);
                if i + 1 < items.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&pad);
            out.push(']');
        }
        serde_json::Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            // serde_json's default map is a BTreeMap, so iteration is
            // already key-sorted.
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                out.push('\n');
                out.push_str(&pad_in);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                push_value(out, item, indent + 1);
                if i + 1 < map.len() {
                    out.push(',');
                }
            }
            out.push('\n');
            out.push_str(&pad);
            out.push('}');
        }
    }
}

/// Renders a value as canonical JSON text (trailing newline included).
pub fn to_canonical_json(v: &serde_json::Value) -> String {
    let mut out = String::new();
    push_value(&mut out, v, 0);
    out.push('\n');
    out
}

/// Atomically writes canonical JSON: temp file in the target directory,
/// then rename.
pub fn write_canonical_json(path: &Path, v: &serde_json::Value) -> anyhow::Result<()> {
    let text = to_canonical_json(v);
    write_atomic(path, text.as_bytes())
}

/// Atomic file write via temp file + rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension(format!("tmp.{}", std::process::id()));
    {
        let mut f =
            std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
