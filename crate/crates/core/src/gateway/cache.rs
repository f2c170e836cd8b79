use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CacheKey, ChatRequest, ChatResponse};

/// Response store keyed by [`CacheKey`].
///
/// The disk layout is `{root}/{model_id}/{first two hex digits}/{digest}.json`;
/// each entry is written to a temporary file and renamed into place.
pub enum ResponseCache {
    Memory(Mutex<HashMap<(String, CacheKey), ChatResponse>>),
    Disk(PathBuf),
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: CacheKey,
    model_id: String,
    system_text: String,
    user_text: String,
    temperature: f64,
    max_output_tokens: u32,
    response: ChatResponse,
}

impl ResponseCache {
    pub fn memory() -> Self {
        Self::Memory(Mutex::new(HashMap::new()))
    }

    pub fn disk(root: impl Into<PathBuf>) -> Self {
        Self::Disk(root.into())
    }

    pub fn entry_path(root: &Path, model_id: &str, key: &CacheKey) -> PathBuf {
        let model_dir: String = model_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
            .collect();
        root.join(model_dir).join(&key.0[..2]).join(format!("{}.json", key.0))
    }

    pub fn get(&self, model_id: &str, key: &CacheKey) -> std::io::Result<Option<ChatResponse>> {
        match self {
            Self::Memory(map) => Ok(map.lock().expect("cache lock").get(&(model_id.to_string(), key.clone())).cloned()),
            Self::Disk(root) => {
                let path = Self::entry_path(root, model_id, key);
                match fs::read(&path) {
                    Ok(bytes) => {
                        let entry: Entry = serde_json::from_slice(&bytes)
                            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
                        Ok(Some(entry.response))
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
                    Err(e) => Err(e),
                }
            }
        }
    }

    pub fn put(&self, req: &ChatRequest, key: &CacheKey, response: &ChatResponse) -> std::io::Result<()> {
        match self {
            Self::Memory(map) => {
                map.lock()
                    .expect("cache lock")
                    .insert((req.model_id.clone(), key.clone()), response.clone());
                Ok(())
            }
            Self::Disk(root) => {
                let entry = Entry {
                    key: key.clone(),
                    model_id: req.model_id.clone(),
                    system_text: req.system_text.clone(),
                    user_text: req.user_text.clone(),
                    temperature: req.temperature,
                    max_output_tokens: req.max_output_tokens,
                    response: response.clone(),
                };
                let bytes = serde_json::to_vec_pretty(&entry)?;
                crate::io::write_atomic(&Self::entry_path(root, &req.model_id, key), &bytes)
            }
        }
    }
}
