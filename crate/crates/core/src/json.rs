//! JSON interchange helpers shared by the CLI and the browser demo.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::Result;

/// Pretty JSON with a trailing newline. Struct fields keep declaration
/// order and floats use the shortest representation that round-trips.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = serde_json::to_string_pretty(value)?;
    out.push('\n');
    Ok(out)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    Ok(serde_json::from_str(text)?)
}
