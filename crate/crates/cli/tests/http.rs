use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use microswim::http::{HttpBackend, HttpConfig};
use microswim_core::llm::ChatBackend;
use microswim_core::Error;

struct Captured {
    head: String,
    body: String,
}

/// Serve the canned `(status, body)` replies in order, one per connection.
fn stub(replies: Vec<(u16, &'static str)>) -> (String, Arc<Mutex<Vec<Captured>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = Arc::clone(&seen);
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Captured { head, body: String::from_utf8(buf).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, seen)
}

const OK: &str = r#"{"choices":[{"message":{"role":"assistant","content":"DOF 2 ROC -1"}}]}"#;

fn backend(url: String) -> HttpBackend {
    let cfg = HttpConfig { base_url: url, model: "test-model".into(), backoff_ms: 1, max_backoff_ms: 5, ..HttpConfig::default() };
    HttpBackend::with_key(cfg, Some("sk-test".into()), None)
}

#[test]
fn sends_single_user_message_with_bearer_token() {
    let (url, seen) = stub(vec![(200, OK)]);
    let reply = backend(url).complete("hello swimmer", 0.0).unwrap();
    assert_eq!(reply, "DOF 2 ROC -1");
    let seen = seen.lock().unwrap();
    let req = &seen[0];
    assert!(req.head.starts_with("POST /v1/chat/completions"));
    assert!(req.head.to_ascii_lowercase().contains("authorization: bearer sk-test"));
    let body: serde_json::Value = serde_json::from_str(&req.body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["messages"].as_array().unwrap().len(), 1);
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "hello swimmer");
}

#[test]
fn retries_server_errors_and_rate_limits() {
    let (url, seen) = stub(vec![(500, "{}"), (429, "{}"), (503, "{}"), (200, OK)]);
    assert_eq!(backend(url).complete("p", 0.0).unwrap(), "DOF 2 ROC -1");
    assert_eq!(seen.lock().unwrap().len(), 4);
}

#[test]
fn gives_up_after_max_retries() {
    let (url, seen) = stub(vec![(502, "{}"); 6]);
    let err = backend(url).complete("p", 0.0).unwrap_err();
    assert!(matches!(err, Error::Backend(_)));
    assert_eq!(seen.lock().unwrap().len(), 6);
}

#[test]
fn auth_failures_are_not_retried() {
    for status in [401, 403] {
        let (url, seen) = stub(vec![(status, r#"{"error":"nope"}"#), (200, OK)]);
        let err = backend(url).complete("p", 0.0).unwrap_err();
        assert!(err.to_string().contains(&status.to_string()));
        assert_eq!(seen.lock().unwrap().len(), 1);
    }
}

#[test]
fn missing_content_is_an_error() {
    let (url, _) = stub(vec![(200, r#"{"choices":[]}"#)]);
    assert!(matches!(backend(url).complete("p", 0.0), Err(Error::Backend(_))));
}

#[test]
fn unreachable_server_fails_after_retries() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = HttpConfig {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        backoff_ms: 1,
        max_backoff_ms: 2,
        max_retries: 2,
        ..HttpConfig::default()
    };
    let err = HttpBackend::with_key(cfg, None, None).complete("p", 0.0).unwrap_err();
    assert!(err.to_string().contains("gave up after 2 retries"), "{err}");
}
