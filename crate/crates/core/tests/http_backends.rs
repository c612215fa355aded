use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use agentaudit::cache::ContentStore;
use agentaudit::http::{CallError, JsonClient, PostError, RetryPolicy};
use agentaudit::persona::{generate_reply, Generator, HttpChatGenerator, ModelEndpoint, PersonaError, RenderedPrompt, Strategy};
use agentaudit::stance::{RemoteStance, Stance, StanceBackend};
use agentaudit::toxscore::{PerspectiveScorer, ToxicityScorer};
use serde_json::{json, Value};

#[derive(Debug, Clone)]
struct Seen {
    path: String,
    headers: Vec<String>,
    body: Value,
}

/// Serves the scripted `(status, body)` responses in order, one per
/// connection, and records each request.
fn serve(script: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in script {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            let mut length = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut raw = vec![0; length];
            reader.read_exact(&mut raw).unwrap();
            log.lock().unwrap().push(Seen {
                path: request_line.split_whitespace().nth(1).unwrap_or("").to_string(),
                headers,
                body: serde_json::from_slice(&raw).unwrap_or(Value::Null),
            });
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

fn fast_retries(n: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries: n,
        base_delay_ms: 1,
        max_delay_ms: 5,
    }
}

fn prompt(text: &str) -> RenderedPrompt {
    RenderedPrompt {
        bytes: text.into(),
        template_id: Strategy::ZeroShot,
        thread_rendering: String::new(),
        content_hash: agentaudit::hashing::sha256_hex(text),
    }
}

fn endpoint(url: &str, max_retries: u32) -> ModelEndpoint {
    ModelEndpoint {
        base_url: Some(url.to_string()),
        max_retries,
        ..toml::from_str("model_id = \"m1\"\ntemperature = 0.3\nmax_tokens = 77").unwrap()
    }
}

#[test]
fn client_retries_server_errors_then_succeeds() {
    let (url, seen) = serve(vec![
        (503, "{}".into()),
        (500, "oops".into()),
        (200, r#"{"ok": 1}"#.into()),
    ]);
    let client = JsonClient::new(Duration::from_secs(5), 0.0, fast_retries(3));
    let d = client.post_json::<Value>(&url, &json!({"a": 1})).unwrap();
    assert_eq!(d.value, json!({"ok": 1}));
    assert_eq!(d.retries, 2);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_gives_up_after_budget() {
    let (url, seen) = serve(vec![(429, "slow down".into()); 3]);
    let client = JsonClient::new(Duration::from_secs(5), 0.0, fast_retries(2));
    let err = client.post_json::<Value>(&url, &json!({})).unwrap_err();
    assert!(matches!(err, PostError::Exhausted { attempts: 3, last: CallError::Rejected { status: 429, .. } }));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn auth_failures_are_not_retried() {
    let (url, seen) = serve(vec![(401, "bad key".into()), (200, "{}".into())]);
    let client = JsonClient::new(Duration::from_secs(5), 0.0, fast_retries(4));
    let err = client.post_json::<Value>(&url, &json!({})).unwrap_err();
    assert!(matches!(err, PostError::Fatal(CallError::Rejected { status: 401, .. })));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn malformed_json_is_a_decode_error() {
    let (url, _) = serve(vec![(200, "not json".into())]);
    let client = JsonClient::new(Duration::from_secs(5), 0.0, fast_retries(2));
    let err = client.post_json::<Value>(&url, &json!({})).unwrap_err();
    assert!(matches!(err, PostError::Fatal(CallError::Decode(_))));
}

#[test]
fn chat_generator_sends_decoding_params_and_key() {
    let (url, seen) = serve(vec![(200, r#"{"choices":[{"message":{"content":"hi there"}}]}"#.into())]);
    std::env::set_var("AGENTAUDIT_TEST_KEY", "sk-test");
    let mut ep = endpoint(&url, 0);
    ep.api_key_env = Some("AGENTAUDIT_TEST_KEY".into());
    let g = HttpChatGenerator::new(ep).unwrap();
    let d = g.complete(&prompt("say hi")).unwrap();
    assert_eq!(d.value, "hi there");
    let req = seen.lock().unwrap()[0].clone();
    assert_eq!(req.body["model"], "m1");
    assert_eq!(req.body["temperature"], 0.3);
    assert_eq!(req.body["max_tokens"], 77);
    assert_eq!(req.body["messages"][0]["content"], "say hi");
    assert!(req.headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
}

#[test]
fn missing_key_variable_is_a_config_error() {
    let mut ep = endpoint("http://127.0.0.1:9", 0);
    ep.api_key_env = Some("AGENTAUDIT_TEST_UNSET_KEY".into());
    assert!(matches!(HttpChatGenerator::new(ep), Err(PersonaError::Endpoint { .. })));
}

#[test]
fn failed_generation_is_recorded_and_retried_on_rerun() {
    let (url, seen) = serve(vec![(502, "".into()), (502, "".into()), (200, r#"{"text":"later"}"#.into())]);
    let dir = tempfile::tempdir().unwrap();
    let cache = ContentStore::open(dir.path()).unwrap();
    // zero retries with a real backoff policy, so each call is one request
    let g = HttpChatGenerator::new(endpoint(&url, 0)).unwrap();
    let p = prompt("q");
    let first = generate_reply(&g, &cache, "u", "p", &p).unwrap();
    assert!(first.is_failed());
    assert!(first.failure.as_deref().unwrap().contains("502"));
    assert!(cache.is_empty().unwrap());
    let second = generate_reply(&g, &cache, "u", "p", &p).unwrap();
    assert!(second.is_failed());
    let third = generate_reply(&g, &cache, "u", "p", &p).unwrap();
    assert_eq!(third.reply_text.as_deref(), Some("later"));
    let fourth = generate_reply(&g, &cache, "u", "p", &p).unwrap();
    assert!(fourth.cache_hit);
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn fatal_generation_aborts() {
    let (url, _) = serve(vec![(403, "quota".into())]);
    let dir = tempfile::tempdir().unwrap();
    let cache = ContentStore::open(dir.path()).unwrap();
    let g = HttpChatGenerator::new(endpoint(&url, 3)).unwrap();
    assert!(matches!(generate_reply(&g, &cache, "u", "p", &prompt("q")), Err(PersonaError::Fatal { .. })));
}

#[test]
fn remote_stance_reads_labels() {
    let (url, seen) = serve(vec![(200, r#"{"label": -1}"#.into()), (200, r#"{"label": 7}"#.into())]);
    let backend = RemoteStance::new(url.clone(), "clf", Some("tok".into()), Duration::from_secs(5), 0.0, fast_retries(0));
    assert_eq!(backend.classify("vote harris").unwrap(), Stance::Democrat);
    assert!(backend.classify("x").is_err());
    let log = seen.lock().unwrap();
    assert_eq!(log[0].body, json!({"text": "vote harris"}));
    assert!(log[0].headers.iter().any(|h| h.eq_ignore_ascii_case("authorization: Bearer tok")));
}

#[test]
fn perspective_scorer_reads_summary_score() {
    let (url, seen) = serve(vec![
        (429, "".into()),
        (200, r#"{"attributeScores":{"TOXICITY":{"summaryScore":{"value":0.8125}}}}"#.into()),
    ]);
    let scorer = PerspectiveScorer::new(&url, Some("k1"), Duration::from_secs(5), 0.0, fast_retries(1));
    assert_eq!(scorer.score("you fool").unwrap(), 0.8125);
    let log = seen.lock().unwrap();
    assert_eq!(log[1].path, "/?key=k1");
    assert_eq!(log[1].body["comment"]["text"], "you fool");
    assert!(log[1].body["requestedAttributes"].get("TOXICITY").is_some());
}
