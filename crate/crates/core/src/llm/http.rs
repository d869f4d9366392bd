//! HTTP completion and embedding clients.
//!
//! Both speak a chat-completion-style JSON protocol: a single POSTed object,
//! a JSON reply. Transient failures (transport errors, 5xx, 408, 429) are
//! retried with exponential backoff up to the configured budget; anything
//! else fails immediately. A 2xx reply whose body does not have the expected
//! shape is a protocol error and is never retried.
//!
//! The bearer credential is read from the `EHC_LLM_API_KEY` environment
//! variable only.

use std::time::Duration;

use serde_json::{json, Value};

use crate::embedding::{Embedder, EmbeddingVector};
use crate::error::{EhcError, Result};
use crate::llm::CompletionBackend;

/// Environment variable holding the bearer token for live backends.
pub const API_KEY_ENV: &str = "EHC_LLM_API_KEY";

const DEFAULT_RETRIES: u32 = 2;
const DEFAULT_BACKOFF_BASE_MS: u64 = 100;
const DEFAULT_TIMEOUT_MS: u64 = 30_000;
const BODY_EXCERPT_LEN: usize = 200;

/// Connection settings for the completion client.
#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Retries after the first try; total tries = retries + 1.
    pub retries: u32,
    /// First backoff delay; doubles per retry.
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
    /// Log request/response pairs to stderr.
    pub trace: bool,
}

impl HttpBackendConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            retries: DEFAULT_RETRIES,
            backoff_base_ms: DEFAULT_BACKOFF_BASE_MS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            trace: false,
        }
    }
}

/// Shared POST-with-retries engine.
struct HttpCore {
    client: reqwest::blocking::Client,
    api_key: Option<String>,
    retries: u32,
    backoff_base_ms: u64,
    trace: bool,
}

impl HttpCore {
    fn new(timeout_ms: u64, retries: u32, backoff_base_ms: u64, trace: bool) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(timeout_ms))
            .build()
            .map_err(|e| EhcError::Backend(format!("cannot build http client: {e}")))?;
        Ok(Self {
            client,
            api_key: std::env::var(API_KEY_ENV).ok(),
            retries,
            backoff_base_ms,
            trace,
        })
    }

    fn is_transient_status(status: u16) -> bool {
        status == 408 || status == 429 || (500..600).contains(&status)
    }

    fn excerpt(body: &str) -> String {
        if body.len() <= BODY_EXCERPT_LEN {
            body.to_owned()
        } else {
            let mut end = BODY_EXCERPT_LEN;
            while !body.is_char_boundary(end) {
                end -= 1;
            }
            format!("{}…", &body[..end])
        }
    }

    /// POSTs `body` to `endpoint`; retries transient failures with
    /// exponential backoff. Returns the parsed JSON of a 2xx reply.
    fn post_json(&self, endpoint: &str, body: &Value) -> Result<Value> {
        let total_tries = self.retries + 1;
        let mut last_failure = String::new();
        for attempt in 0..total_tries {
            if attempt > 0 {
                let delay = self.backoff_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            if self.trace {
                eprintln!("http POST {} attempt {}/{}: {}", endpoint, attempt + 1, total_tries, body);
            }
            let mut request = self.client.post(endpoint).json(body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Err(e) => {
                    last_failure = format!("transport error: {e}");
                }
                Ok(response) => {
                    let status = response.status().as_u16();
                    let text = response
                        .text()
                        .map_err(|e| EhcError::Backend(format!("error reading body: {e}")))?;
                    if self.trace {
                        eprintln!("http {} <- status {} body {}", endpoint, status, Self::excerpt(&text));
                    }
                    if (200..300).contains(&status) {
                        return serde_json::from_str(&text).map_err(|e| {
                            EhcError::Protocol(format!(
                                "response is not valid JSON: {e}; body: {}",
                                Self::excerpt(&text)
                            ))
                        });
                    }
                    let failure =
                        format!("status {status}; body: {}", Self::excerpt(&text));
                    if !Self::is_transient_status(status) {
                        return Err(EhcError::Backend(failure));
                    }
                    last_failure = failure;
                }
            }
        }
        Err(EhcError::Backend(format!(
            "giving up after {total_tries} tries: {last_failure}"
        )))
    }
}

/// Chat-completion client implementing [`CompletionBackend`].
pub struct HttpBackend {
    config: HttpBackendConfig,
    core: HttpCore,
}

impl HttpBackend {
    /// Builds the client; the API key (if any) is read from
    /// [`API_KEY_ENV`] once, here.
    pub fn new(config: HttpBackendConfig) -> Result<Self> {
        let core = HttpCore::new(
            config.timeout_ms,
            config.retries,
            config.backoff_base_ms,
            config.trace,
        )?;
        Ok(Self { config, core })
    }

    /// Overrides the credential (tests use this to avoid touching the
    /// process environment).
    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.core.api_key = key;
        self
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, prompt: &str, max_tokens: u32, temperature: f64) -> Result<String> {
        let body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": max_tokens,
            "temperature": temperature,
        });
        let reply = self.core.post_json(&self.config.endpoint, &body)?;
        reply
            .get("choices")
            .and_then(|c| c.get(0))
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| {
                EhcError::Protocol(format!(
                    "missing choices[0].message.content in reply: {}",
                    HttpCore::excerpt(&reply.to_string())
                ))
            })
    }
}

/// Connection settings for the embedding client.
#[derive(Debug, Clone)]
pub struct HttpEmbedderConfig {
    pub endpoint: String,
    pub model: String,
    /// Expected embedding dimensionality; replies of any other length are
    /// protocol errors.
    pub dim: usize,
    pub retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_ms: u64,
    pub trace: bool,
}

impl HttpEmbedderConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, dim: usize) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            dim,
            retries: DEFAULT_RETRIES,
            backoff_base_ms: DEFAULT_BACKOFF_BASE_MS,
            timeout_ms: DEFAULT_TIMEOUT_MS,
            trace: false,
        }
    }
}

/// External embedder speaking `{model, input}` → `{data: [{embedding: [...]}]}`.
pub struct HttpEmbedder {
    config: HttpEmbedderConfig,
    core: HttpCore,
}

impl HttpEmbedder {
    pub fn new(config: HttpEmbedderConfig) -> Result<Self> {
        let core = HttpCore::new(
            config.timeout_ms,
            config.retries,
            config.backoff_base_ms,
            config.trace,
        )?;
        Ok(Self { config, core })
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.core.api_key = key;
        self
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let body = json!({ "model": self.config.model, "input": text });
        let reply = self.core.post_json(&self.config.endpoint, &body)?;
        let values = reply
            .get("data")
            .and_then(|d| d.get(0))
            .and_then(|d| d.get("embedding"))
            .and_then(Value::as_array)
            .ok_or_else(|| {
                EhcError::Protocol(format!(
                    "missing data[0].embedding in reply: {}",
                    HttpCore::excerpt(&reply.to_string())
                ))
            })?
            .iter()
            .map(|v| {
                v.as_f64().ok_or_else(|| {
                    EhcError::Protocol("non-numeric embedding component".into())
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != self.config.dim {
            return Err(EhcError::Protocol(format!(
                "embedding has {} components, expected {}",
                values.len(),
                self.config.dim
            )));
        }
        Ok(EmbeddingVector::from_values(values))
    }

    fn dim(&self) -> usize {
        self.config.dim
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::{Arc, Mutex};

    /// Minimal canned-response HTTP/1.1 server. Serves `responses` in order,
    /// repeating the last one; records hit count and raw request texts.
    struct Stub {
        endpoint: String,
        hits: Arc<AtomicUsize>,
        requests: Arc<Mutex<Vec<String>>>,
    }

    fn serve(responses: Vec<(u16, String)>) -> Stub {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind stub server");
        let endpoint = format!("http://{}/v1/chat", listener.local_addr().unwrap());
        let hits = Arc::new(AtomicUsize::new(0));
        let requests = Arc::new(Mutex::new(Vec::new()));
        let thread_hits = Arc::clone(&hits);
        let thread_requests = Arc::clone(&requests);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(mut stream) = stream else { break };
                let mut buf = Vec::new();
                let mut chunk = [0u8; 4096];
                // Read headers, then the content-length body.
                let body_len = loop {
                    let n = match stream.read(&mut chunk) {
                        Ok(0) | Err(_) => break 0,
                        Ok(n) => n,
                    };
                    buf.extend_from_slice(&chunk[..n]);
                    if let Some(pos) = find_header_end(&buf) {
                        let headers = String::from_utf8_lossy(&buf[..pos]).to_string();
                        let need = content_length(&headers);
                        while buf.len() < pos + 4 + need {
                            let n = match stream.read(&mut chunk) {
                                Ok(0) | Err(_) => break,
                                Ok(n) => n,
                            };
                            buf.extend_from_slice(&chunk[..n]);
                        }
                        break need;
                    }
                };
                let _ = body_len;
                let index = thread_hits.fetch_add(1, Ordering::SeqCst);
                thread_requests
                    .lock()
                    .unwrap()
                    .push(String::from_utf8_lossy(&buf).to_string());
                let (status, body) = &responses[index.min(responses.len() - 1)];
                let reason = if *status == 200 { "OK" } else { "Error" };
                let reply = format!(
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            }
        });
        Stub { endpoint, hits, requests }
    }

    fn find_header_end(buf: &[u8]) -> Option<usize> {
        buf.windows(4).position(|w| w == b"\r\n\r\n")
    }

    fn content_length(headers: &str) -> usize {
        headers
            .lines()
            .find_map(|l| {
                let (name, value) = l.split_once(':')?;
                name.eq_ignore_ascii_case("content-length")
                    .then(|| value.trim().parse().ok())?
            })
            .unwrap_or(0)
    }

    fn fast_config(endpoint: &str) -> HttpBackendConfig {
        let mut config = HttpBackendConfig::new(endpoint, "test-model");
        config.backoff_base_ms = 1;
        config
    }

    #[test]
    fn happy_path_returns_first_choice_content() {
        let stub = serve(vec![(
            200,
            r#"{"choices":[{"message":{"role":"assistant","content":"the answer"}}]}"#.into(),
        )]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint))
            .unwrap()
            .with_api_key(Some("test-key".into()));
        let got = backend.complete("what is it?", 32, 0.0).unwrap();
        assert_eq!(got, "the answer");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 1);

        let requests = stub.requests.lock().unwrap();
        let body_start = requests[0].find("\r\n\r\n").unwrap() + 4;
        let body: serde_json::Value = serde_json::from_str(&requests[0][body_start..]).unwrap();
        assert_eq!(body["model"], "test-model");
        assert_eq!(body["messages"][0]["role"], "user");
        assert_eq!(body["messages"][0]["content"], "what is it?");
        assert_eq!(body["max_tokens"], 32);
        assert_eq!(body["temperature"], 0.0);
        assert!(requests[0].contains("authorization: Bearer test-key")
            || requests[0].contains("Authorization: Bearer test-key"));
    }

    #[test]
    fn persistent_500_fails_after_three_total_tries() {
        let stub = serve(vec![(500, r#"{"error":"overloaded"}"#.into())]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint)).unwrap();
        let err = backend.complete("x", 8, 0.0).unwrap_err();
        assert!(matches!(err, EhcError::Backend(_)), "{err}");
        let msg = err.to_string();
        assert!(msg.contains("3 tries"), "{msg}");
        assert!(msg.contains("500"), "{msg}");
        assert!(msg.contains("overloaded"), "{msg}");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn transient_failure_then_success_recovers() {
        let stub = serve(vec![
            (503, r#"{"error":"busy"}"#.into()),
            (200, r#"{"choices":[{"message":{"content":"ok"}}]}"#.into()),
        ]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint)).unwrap();
        assert_eq!(backend.complete("x", 8, 0.0).unwrap(), "ok");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn non_transient_status_fails_immediately() {
        let stub = serve(vec![(404, r#"{"error":"no such model"}"#.into())]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint)).unwrap();
        let err = backend.complete("x", 8, 0.0).unwrap_err();
        assert!(matches!(err, EhcError::Backend(_)));
        assert!(err.to_string().contains("404"));
        assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn malformed_reply_shape_is_a_protocol_error() {
        let stub = serve(vec![(200, r#"{"unexpected":"shape"}"#.into())]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint)).unwrap();
        let err = backend.complete("x", 8, 0.0).unwrap_err();
        assert!(matches!(err, EhcError::Protocol(_)), "{err}");
        assert_eq!(stub.hits.load(Ordering::SeqCst), 1, "protocol errors are not retried");
    }

    #[test]
    fn invalid_json_reply_is_a_protocol_error() {
        let stub = serve(vec![(200, "not json at all".into())]);
        let backend = HttpBackend::new(fast_config(&stub.endpoint)).unwrap();
        let err = backend.complete("x", 8, 0.0).unwrap_err();
        assert!(matches!(err, EhcError::Protocol(_)));
    }

    #[test]
    fn embedder_happy_path_and_dimension_check() {
        let stub = serve(vec![(200, r#"{"data":[{"embedding":[0.6,0.8]}]}"#.into())]);
        let mut config = HttpEmbedderConfig::new(&stub.endpoint, "embed-model", 2);
        config.backoff_base_ms = 1;
        let embedder = HttpEmbedder::new(config).unwrap();
        let v = embedder.embed("hello").unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);

        let stub = serve(vec![(200, r#"{"data":[{"embedding":[0.6,0.8,0.0]}]}"#.into())]);
        let mut config = HttpEmbedderConfig::new(&stub.endpoint, "embed-model", 2);
        config.backoff_base_ms = 1;
        let embedder = HttpEmbedder::new(config).unwrap();
        let err = embedder.embed("hello").unwrap_err();
        assert!(matches!(err, EhcError::Protocol(_)), "{err}");
    }
}
