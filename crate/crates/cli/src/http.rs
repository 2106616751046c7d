//! OpenAI-compatible chat-completions backend.

use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use microswim_core::llm::ChatBackend;
use microswim_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const API_KEY_ENV: &str = "MICROSWIM_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub timeout_secs: u64,
    /// Retries after the first attempt on transport errors, 429 and 5xx.
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
    pub max_backoff_ms: u64,
    /// Shared across all sessions of a sweep when set.
    pub requests_per_minute: Option<u32>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4".into(),
            timeout_secs: 120,
            max_retries: 5,
            backoff_ms: 500,
            max_backoff_ms: 30_000,
            requests_per_minute: None,
        }
    }
}

/// Spaces requests at least `interval` apart across threads.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn per_minute(n: u32) -> Self {
        Self { interval: Duration::from_secs(60) / n.max(1), next: Mutex::new(Instant::now()) }
    }

    pub fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            thread::sleep(wait);
        }
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    cfg: HttpConfig,
    url: String,
    api_key: Option<String>,
    limiter: Option<Arc<RateLimiter>>,
}

enum Attempt {
    Done(String),
    Retry(String, Option<Duration>),
    Fatal(String),
}

impl HttpBackend {
    /// Reads the bearer token from `MICROSWIM_API_KEY`; without it no Authorization
    /// header is sent.
    pub fn new(cfg: HttpConfig, limiter: Option<Arc<RateLimiter>>) -> Self {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        Self::with_key(cfg, key, limiter)
    }

    pub fn with_key(cfg: HttpConfig, api_key: Option<String>, limiter: Option<Arc<RateLimiter>>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(cfg.timeout_secs)))
            .build()
            .into();
        let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
        Self { agent, cfg, url, api_key, limiter }
    }

    fn backoff(&self, retry: u32) -> Duration {
        let ms = self.cfg.backoff_ms.saturating_mul(1u64 << retry.min(20));
        Duration::from_millis(ms.min(self.cfg.max_backoff_ms))
    }

    fn attempt(&self, body: &str) -> Attempt {
        if let Some(l) = &self.limiter {
            l.acquire();
        }
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(k) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {k}"));
        }
        let mut resp = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(format!("transport error: {e}"), None),
        };
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading response body: {e}"), None),
        };
        match status {
            200..=299 => match extract_content(&text) {
                Some(c) => Attempt::Done(c),
                None => Attempt::Fatal(format!("response has no message content: {}", snippet(&text))),
            },
            401 | 403 => Attempt::Fatal(format!("HTTP {status}: authentication rejected")),
            429 | 500..=599 => Attempt::Retry(format!("HTTP {status}: {}", snippet(&text)), retry_after),
            _ => Attempt::Fatal(format!("HTTP {status}: {}", snippet(&text))),
        }
    }
}

fn snippet(s: &str) -> &str {
    let end = s.char_indices().nth(200).map_or(s.len(), |(i, _)| i);
    &s[..end]
}

fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.pointer("/choices/0/message/content")?.as_str().map(str::to_owned)
}

impl ChatBackend for HttpBackend {
    fn complete(&mut self, prompt: &str, temperature: f64) -> Result<String> {
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
        })
        .to_string();
        let mut retry = 0;
        loop {
            match self.attempt(&body) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(m) => return Err(Error::Backend(m)),
                Attempt::Retry(m, after) => {
                    if retry >= self.cfg.max_retries {
                        return Err(Error::Backend(format!("{m} (gave up after {} retries)", retry)));
                    }
                    thread::sleep(after.unwrap_or_else(|| self.backoff(retry)));
                    retry += 1;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"DOF 1 ROC +1"}}]}"#;
        assert_eq!(extract_content(body).as_deref(), Some("DOF 1 ROC +1"));
        assert_eq!(extract_content(r#"{"choices":[]}"#), None);
        assert_eq!(extract_content("not json"), None);
    }

    #[test]
    fn backoff_doubles_and_caps() {
        let cfg = HttpConfig { backoff_ms: 100, max_backoff_ms: 1000, ..HttpConfig::default() };
        let b = HttpBackend::with_key(cfg, None, None);
        let d: Vec<u64> = (0..6).map(|k| b.backoff(k).as_millis() as u64).collect();
        assert_eq!(d, vec![100, 200, 400, 800, 1000, 1000]);
    }

    #[test]
    fn limiter_spaces_requests() {
        let l = RateLimiter::per_minute(6000);
        let t = Instant::now();
        for _ in 0..4 {
            l.acquire();
        }
        assert!(t.elapsed() >= Duration::from_millis(29));
    }
}
