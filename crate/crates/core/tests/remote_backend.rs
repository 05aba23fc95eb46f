use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use codrive_core::error::GatewayError;
use codrive_core::gateway::{build_backend, BackendConfig, BackendMode, ChatRequest};

struct Captured {
    head: String,
    body: serde_json::Value,
}

/// Serves one canned `(status, body)` per connection, in order, and reports
/// what each request looked like.
fn serve(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<Captured>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut head = String::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
                head.push_str(&line);
            }
            let mut buf = vec![0; length];
            reader.read_exact(&mut buf).unwrap();
            let _ = tx.send(Captured { head, body: serde_json::from_slice(&buf).unwrap() });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn config(url: &str, key_env: &str) -> BackendConfig {
    std::env::set_var(key_env, "secret-token");
    BackendConfig {
        endpoint: Some(url.to_string()),
        api_key_env: key_env.to_string(),
        retry_budget: 2,
        backoff: Duration::from_millis(5),
        ..BackendConfig::new(BackendMode::Remote)
    }
}

fn ok_body(text: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": text}}]}).to_string()
}

#[test]
fn sends_bearer_and_reads_content() {
    let (url, rx) = serve(vec![(200, ok_body("Decision: cruise"))]);
    let backend = build_backend(&config(&url, "CODRIVE_TEST_KEY_A")).unwrap();
    assert!(backend.is_remote());
    let reply = backend.chat(&ChatRequest::single("sys", "hello")).unwrap();
    assert_eq!(reply, "Decision: cruise");
    let req = rx.recv().unwrap();
    assert!(req.head.starts_with("POST /v1/chat/completions"));
    assert!(req.head.to_ascii_lowercase().contains("authorization: bearer secret-token"));
    assert_eq!(req.body["model"], "gpt-4o-mini");
    assert_eq!(req.body["messages"][0]["role"], "system");
    assert_eq!(req.body["messages"][1]["content"], "hello");
    assert_eq!(req.body["temperature"], 0.0);
}

#[test]
fn retries_server_errors() {
    let (url, rx) = serve(vec![(503, "{}".into()), (429, "{}".into()), (200, ok_body("fine"))]);
    let backend = build_backend(&config(&url, "CODRIVE_TEST_KEY_B")).unwrap();
    assert_eq!(backend.chat(&ChatRequest::single("s", "u")).unwrap(), "fine");
    assert_eq!(rx.try_iter().count(), 3);
}

#[test]
fn gives_up_after_budget() {
    let (url, _rx) = serve(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let backend = build_backend(&config(&url, "CODRIVE_TEST_KEY_C")).unwrap();
    let err = backend.chat(&ChatRequest::single("s", "u")).unwrap_err();
    assert!(matches!(err, GatewayError::Unavailable { attempts: 3, .. }), "{err}");
}

#[test]
fn client_errors_and_bad_bodies_are_fatal() {
    let (url, rx) = serve(vec![(401, "{}".into()), (200, "not json".into()), (200, "{\"choices\": []}".into())]);
    let backend = build_backend(&config(&url, "CODRIVE_TEST_KEY_D")).unwrap();
    for _ in 0..3 {
        let err = backend.chat(&ChatRequest::single("s", "u")).unwrap_err();
        assert!(matches!(err, GatewayError::Protocol(_)), "{err}");
    }
    // One request each: nothing was retried.
    assert_eq!(rx.try_iter().count(), 3);
}

#[test]
fn closed_port_is_unavailable() {
    let mut cfg = config("http://127.0.0.1:9/v1/chat/completions", "CODRIVE_TEST_KEY_E");
    cfg.retry_budget = 1;
    cfg.backoff = Duration::from_millis(1);
    let backend = build_backend(&cfg).unwrap();
    let err = backend.chat(&ChatRequest::single("s", "u")).unwrap_err();
    assert!(matches!(err, GatewayError::Unavailable { attempts: 2, .. }), "{err}");
}

#[test]
fn missing_key_is_a_config_error() {
    let mut cfg = config("http://127.0.0.1:9/", "CODRIVE_TEST_KEY_F");
    cfg.api_key_env = "CODRIVE_TEST_KEY_NEVER_SET".into();
    assert!(matches!(build_backend(&cfg), Err(GatewayError::Config(_))));
}
