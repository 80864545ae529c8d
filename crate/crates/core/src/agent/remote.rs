//! HTTP generation backend.
//!
//! POSTs `{model, fields, seed, max_length}` as JSON and expects
//! `{"fields": {...}}` back. Transient failures (timeouts, connection
//! errors, 429 and 5xx) are retried with capped exponential backoff.

use super::backend::{BackendError, Fields, GenerationBackend};
use serde::{Deserialize, Serialize};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

pub const ENV_URL: &str = "NUDGELAB_BACKEND_URL";
pub const ENV_MODEL: &str = "NUDGELAB_BACKEND_MODEL";
pub const ENV_KEY: &str = "NUDGELAB_BACKEND_KEY";

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub max_length: u32,
    pub max_attempts: u32,
    pub backoff_base: Duration,
    pub backoff_cap: Duration,
    pub max_in_flight: usize,
}

impl RemoteConfig {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        RemoteConfig {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            max_length: 1024,
            max_attempts: 4,
            backoff_base: Duration::from_millis(500),
            backoff_cap: Duration::from_secs(8),
            max_in_flight: 4,
        }
    }

    /// Endpoint, model and key from the environment; `None` without an endpoint.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var(ENV_URL).ok().filter(|s| !s.is_empty())?;
        let model = std::env::var(ENV_MODEL).unwrap_or_else(|_| "default".into());
        let mut cfg = RemoteConfig::new(url, model);
        cfg.api_key = std::env::var(ENV_KEY).ok().filter(|s| !s.is_empty());
        Some(cfg)
    }

    /// Delay before retry number `attempt` (1-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.backoff_base.saturating_mul(factor).min(self.backoff_cap)
    }
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    fields: &'a Fields,
    seed: u64,
    max_length: u32,
}

#[derive(Deserialize)]
struct Response {
    fields: Fields,
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

enum Failure {
    Transient(String),
    Fatal(String),
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate { free: Mutex::new(cfg.max_in_flight.max(1)), cv: Condvar::new() };
        RemoteBackend { cfg, agent, gate }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn attempt(&self, fields: &Fields, seed: u64) -> Result<Fields, Failure> {
        let body = Request { model: &self.cfg.model, fields, seed, max_length: self.cfg.max_length };
        let mut req = self.agent.post(&self.cfg.endpoint);
        if let Some(key) = &self.cfg.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(&body).map_err(|e| match e {
            ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                Failure::Transient(e.to_string())
            }
            other => Failure::Fatal(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if status >= 400 {
            return Err(Failure::Fatal(format!("HTTP {status}")));
        }
        let parsed: Response = resp
            .body_mut()
            .read_json()
            .map_err(|e| Failure::Fatal(format!("malformed response body: {e}")))?;
        Ok(parsed.fields)
    }
}

impl GenerationBackend for RemoteBackend {
    fn name(&self) -> &str {
        "remote"
    }

    fn complete(&self, fields: &Fields, seed: u64) -> Result<Fields, BackendError> {
        let _permit = self.gate.acquire();
        let max = self.cfg.max_attempts.max(1);
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(fields, seed) {
                Ok(out) => return Ok(out),
                Err(Failure::Fatal(message)) => {
                    return Err(BackendError { backend: self.name().into(), attempts, retryable: false, message })
                }
                Err(Failure::Transient(message)) => {
                    if attempts >= max {
                        return Err(BackendError { backend: self.name().into(), attempts, retryable: true, message });
                    }
                    log::warn!("remote backend attempt {attempts} failed: {message}; retrying");
                    std::thread::sleep(self.cfg.backoff(attempts));
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    /// Serve the given status/body pairs, one connection each.
    fn serve(replies: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                let mut s = stream;
                write!(
                    s,
                    "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/complete"), handle)
    }

    fn fast(url: String) -> RemoteConfig {
        let mut cfg = RemoteConfig::new(url, "m");
        cfg.backoff_base = Duration::from_millis(1);
        cfg.backoff_cap = Duration::from_millis(2);
        cfg.timeout = Duration::from_secs(5);
        cfg
    }

    #[test]
    fn round_trip_after_transient_failure() {
        let (url, server) = serve(vec![
            (503, "{}".into()),
            (200, r#"{"fields":{"ranking":"a,b"}}"#.into()),
        ]);
        let backend = RemoteBackend::new(fast(url));
        let mut f = Fields::new();
        f.insert("task".into(), "rank_candidates".into());
        let out = backend.complete(&f, 42).unwrap();
        assert_eq!(out["ranking"], "a,b");
        let bodies = server.join().unwrap();
        assert_eq!(bodies.len(), 2);
        let sent: serde_json::Value = serde_json::from_str(&bodies[1]).unwrap();
        assert_eq!(sent["seed"], 42);
        assert_eq!(sent["fields"]["task"], "rank_candidates");
        assert_eq!(sent["max_length"], 1024);
    }

    #[test]
    fn client_error_is_not_retried() {
        let (url, server) = serve(vec![(400, "{}".into())]);
        let err = RemoteBackend::new(fast(url)).complete(&Fields::new(), 0).unwrap_err();
        assert_eq!(err.attempts, 1);
        assert!(!err.retryable);
        server.join().unwrap();
    }

    #[test]
    fn retries_exhaust_with_metadata() {
        let (url, server) = serve(vec![(500, "{}".into()), (502, "{}".into())]);
        let mut cfg = fast(url);
        cfg.max_attempts = 2;
        let err = RemoteBackend::new(cfg).complete(&Fields::new(), 0).unwrap_err();
        assert_eq!(err.attempts, 2);
        assert!(err.retryable);
        server.join().unwrap();
    }

    #[test]
    fn backoff_is_capped() {
        let cfg = RemoteConfig::new("http://x", "m");
        assert_eq!(cfg.backoff(1), Duration::from_millis(500));
        assert_eq!(cfg.backoff(3), Duration::from_secs(2));
        assert_eq!(cfg.backoff(40), Duration::from_secs(8));
    }
}
