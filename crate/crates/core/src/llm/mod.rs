//! Completion backends.
//!
//! [`CompletionBackend`] is the single seam between the engines and any
//! language model. Two implementations ship: a deterministic scripted backend
//! for offline runs and tests, and a chat-completion HTTP client. The API key
//! for live use comes exclusively from the `EHC_LLM_API_KEY` environment
//! variable — never from config files.

mod http;
mod script;

pub use http::{HttpBackend, HttpBackendConfig, HttpEmbedder, HttpEmbedderConfig, API_KEY_ENV};
pub use script::{MatchRule, Script, ScriptRule, ScriptedBackend};

use crate::error::Result;

/// A text-completion model. Implementations must be safe to call from
/// multiple threads (`&self` with interior mutability where needed).
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String>;
}

/// A backend bundled with the sampling parameters every call shares.
#[derive(Clone, Copy)]
pub struct Completer<'a> {
    pub backend: &'a dyn CompletionBackend,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl<'a> Completer<'a> {
    pub fn new(backend: &'a dyn CompletionBackend, max_tokens: u32, temperature: f64) -> Self {
        Self { backend, max_tokens, temperature }
    }

    pub fn complete(&self, prompt: &str) -> Result<String> {
        self.backend.complete(prompt, self.max_tokens, self.temperature)
    }
}
