//! Canonical JSON: sorted keys, two-space indent, trailing newline.

use serde::Serialize;

/// Encodes `value` canonically so identical values always produce identical bytes.
pub fn to_canonical_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled,
    // so round-tripping through Value sorts every object's keys.
    let value = serde_json::to_value(value)?;
    let mut out = serde_json::to_string_pretty(&value)?;
    out.push('\n');
    Ok(out)
}
