//! Versioned JSON documents for fitted models.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "adbench-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document<T> {
    format: String,
    version: u32,
    kind: String,
    model: T,
}

pub fn model_to_json<T: Serialize>(kind: &str, model: &T) -> Result<String> {
    Ok(serde_json::to_string(&Document {
        format: MODEL_FORMAT.to_string(),
        version: MODEL_VERSION,
        kind: kind.to_string(),
        model,
    })?)
}

pub fn model_from_json<T: DeserializeOwned>(kind: &str, json: &str) -> Result<T> {
    let doc: Document<T> = serde_json::from_str(json)?;
    if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
        return Err(Error::invalid(format!(
            "unsupported model document {} v{}",
            doc.format, doc.version
        )));
    }
    if doc.kind != kind {
        return Err(Error::invalid(format!("expected a {kind} model, found {}", doc.kind)));
    }
    Ok(doc.model)
}

pub fn save_model<T: Serialize>(kind: &str, model: &T, path: &Path) -> Result<()> {
    crate::io::write_atomic(path, model_to_json(kind, model)?.as_bytes())
}

pub fn load_model<T: DeserializeOwned>(kind: &str, path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(kind, &text)
}
