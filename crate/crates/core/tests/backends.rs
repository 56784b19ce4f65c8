mod common;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use common::*;
use egur_core::backends::{
    price, Backend, BackendError, CompletionRequest, HttpBackend, HttpBackendConfig, LlmParams, PricingTable,
    ScriptedBackend,
};
use egur_core::semantics::ChatMessage;
use proptest::prelude::*;
use rust_decimal::Decimal;

const FIXTURE_REQUEST: &str = include_str!("fixtures/http/request.json");
const FIXTURE_RESPONSE: &str = include_str!("fixtures/http/response.json");

struct Seen {
    body: serde_json::Value,
    auth: Option<String>,
}

/// Serves one canned (status, body) per connection, in order, and
/// returns what each request carried.
fn serve(replies: Vec<(u16, String)>) -> (String, thread::JoinHandle<Vec<Seen>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let handle = thread::spawn(move || {
        let mut seen = Vec::new();
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap_or((line, ""));
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_owned()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            seen.push(Seen { body: serde_json::from_slice(&buf).unwrap(), auth });
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
        seen
    });
    (url, handle)
}

fn fixture_call(backend: &HttpBackend) -> Result<egur_core::backends::Completion, BackendError> {
    let messages = [ChatMessage::system("You are terse."), ChatMessage::user("What is 2+2?")];
    let params = LlmParams { temperature: 0.0, max_tokens: 256, thinking: true, thinking_budget: 128 };
    backend.complete(&CompletionRequest { messages: &messages, params: &params, partition: "", seed: 7 })
}

fn config(url: &str) -> HttpBackendConfig {
    let mut c = HttpBackendConfig::new(url, "qwen3-8b");
    c.retry_backoff_ms = 1;
    c.request_timeout_secs = 10.0;
    c.pricing = PricingTable::from_strs("3", "15").unwrap();
    c
}

#[test]
fn golden_exchange_round_trips() {
    let (url, server) = serve(vec![(200, FIXTURE_RESPONSE.to_owned())]);
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(&url);
    cfg.record_path = Some(dir.path().join("exchanges.jsonl"));
    let backend = HttpBackend::new(cfg).unwrap();
    let c = fixture_call(&backend).unwrap();
    assert_eq!(c.text, "2+2 is 4.\nFINAL ANSWER: 4");
    assert_eq!((c.input_tokens, c.output_tokens), (21, 9));
    let seen = server.join().unwrap();
    let golden: serde_json::Value = serde_json::from_str(FIXTURE_REQUEST).unwrap();
    assert_eq!(seen[0].body, golden);
    assert_eq!(seen[0].auth, None);
    let recorded = std::fs::read_to_string(dir.path().join("exchanges.jsonl")).unwrap();
    let line: serde_json::Value = serde_json::from_str(recorded.lines().next().unwrap()).unwrap();
    assert_eq!(line["request"], golden);
    assert_eq!(line["status"], 200);
}

#[test]
fn api_key_is_sent_as_bearer() {
    let (url, server) = serve(vec![(200, FIXTURE_RESPONSE.to_owned())]);
    let mut cfg = config(&url);
    cfg.api_key_env = Some("EGUR_TEST_BEARER_KEY".into());
    // Only this test reads this variable.
    std::env::set_var("EGUR_TEST_BEARER_KEY", "sk-test");
    let backend = HttpBackend::new(cfg).unwrap();
    fixture_call(&backend).unwrap();
    assert_eq!(server.join().unwrap()[0].auth.as_deref(), Some("Bearer sk-test"));
}

#[test]
fn server_errors_are_retried() {
    let (url, server) = serve(vec![(503, "{}".into()), (200, FIXTURE_RESPONSE.to_owned())]);
    let backend = HttpBackend::new(config(&url)).unwrap();
    assert_eq!(fixture_call(&backend).unwrap().output_tokens, 9);
    assert_eq!(server.join().unwrap().len(), 2);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, server) = serve(vec![(400, "{\"error\": \"bad\"}".into())]);
    let backend = HttpBackend::new(config(&url)).unwrap();
    let err = fixture_call(&backend).unwrap_err();
    assert!(matches!(err, BackendError::Status { status: 400, .. }));
    assert_eq!(server.join().unwrap().len(), 1);
}

#[test]
fn malformed_body_is_reported() {
    let (url, server) = serve(vec![(200, "{\"choices\": []}".into())]);
    let backend = HttpBackend::new(config(&url)).unwrap();
    assert!(matches!(fixture_call(&backend), Err(BackendError::Malformed(_))));
    server.join().unwrap();
}

#[test]
fn scripted_examples() {
    let b = ScriptedBackend::from_replies([("ok", 10, 5)], pricing());
    let msgs = [ChatMessage::user("hi")];
    let params = LlmParams::default();
    let req = CompletionRequest { messages: &msgs, params: &params, partition: "", seed: 0 };
    let c = b.complete(&req).unwrap();
    assert_eq!((c.text.as_str(), c.input_tokens, c.output_tokens), ("ok", 10, 5));
    let err = b.complete(&req).unwrap_err();
    assert!(err.to_string().contains("queue exhausted"));
}

#[test]
fn price_examples() {
    let t = PricingTable::from_strs("3.00", "15.00").unwrap();
    assert!(price(0, 0, &t).is_zero());
    assert_eq!(price(1_000_000, 0, &t), usd("3"));
    assert_eq!(price(12_345, 6_789, &t), usd("0.138870"));
}

proptest! {
    #[test]
    fn price_is_exact_and_linear(a in 0u64..10_000_000, b in 0u64..10_000_000, c in 0u64..10_000_000, rate in 0u32..100_000) {
        let rate = Decimal::new(i64::from(rate), 2).to_string();
        let t = PricingTable::from_strs(&rate, &rate).unwrap();
        prop_assert_eq!(price(a + b, c, &t), price(a, 0, &t) + price(b, c, &t));
        // Long-hand: tokens × rate / 10^6 in decimal.
        let want = Decimal::from(a + c) * rate.parse::<Decimal>().unwrap() / Decimal::from(1_000_000u64);
        prop_assert_eq!(price(a, c, &t).decimal(), want.normalize());
    }
}
