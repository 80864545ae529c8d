//! Generation backend contract.
//!
//! A backend receives flat prompt fields plus a seed and returns flat
//! response fields. The `task` field selects what is being asked for; the
//! agent owns the field vocabulary, backends only have to honour it.

use std::collections::BTreeMap;
use thiserror::Error;

pub type Fields = BTreeMap<String, String>;

pub const TASK: &str = "task";
pub const TASK_SUMMARIZE: &str = "summarize_profile";
pub const TASK_GENERATE: &str = "generate_suggestions";
pub const TASK_RANK: &str = "rank_candidates";

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{backend} backend failed after {attempts} attempt(s): {message}")]
pub struct BackendError {
    pub backend: String,
    pub attempts: u32,
    pub retryable: bool,
    pub message: String,
}

pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, fields: &Fields, seed: u64) -> Result<Fields, BackendError>;
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for &B {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, fields: &Fields, seed: u64) -> Result<Fields, BackendError> {
        (**self).complete(fields, seed)
    }
}

impl<B: GenerationBackend + ?Sized> GenerationBackend for Box<B> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn complete(&self, fields: &Fields, seed: u64) -> Result<Fields, BackendError> {
        (**self).complete(fields, seed)
    }
}

pub(crate) fn field<'a>(fields: &'a Fields, key: &str) -> Option<&'a str> {
    fields.get(key).map(String::as_str)
}

pub(crate) fn missing(backend: &str, key: &str) -> BackendError {
    BackendError {
        backend: backend.to_string(),
        attempts: 1,
        retryable: false,
        message: format!("missing field `{key}`"),
    }
}
