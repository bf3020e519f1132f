use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use hc_edit::calibration::{build_null_table, CalibrationConfig};
use hc_edit::harness::SurrogateModel;
use hc_edit::multiple_testing::HcConfig;
use hc_edit::pipeline::{analyze, AnalyzeOptions, ThresholdSpec};
use hc_edit::provider::{
    fetch_logprobs, write_records, ContextPolicy, FileProvider, HttpProvider, LogprobProvider,
    ProviderDescriptor, TokenizedSentence,
};
use hc_edit::rng::substream;
use hc_edit::text_ingest::{segment, SegmentationConfig};
use hc_edit::Error;

#[derive(Debug, Clone)]
struct Seen {
    headers: Vec<(String, String)>,
    body: serde_json::Value,
}

type Handler = dyn Fn(usize, &serde_json::Value) -> (u16, String) + Send + Sync;

/// One-connection-at-a-time HTTP/1.1 server on a random local port.
struct MockServer {
    endpoint: String,
    seen: Arc<Mutex<Vec<Seen>>>,
}

impl MockServer {
    fn start(handler: Box<Handler>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let endpoint = format!("http://{}", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        let counter = AtomicUsize::new(0);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let n = counter.fetch_add(1, Ordering::SeqCst);
                serve_one(stream, n, &*handler, &log);
            }
        });
        MockServer { endpoint, seen }
    }

    fn requests(&self) -> Vec<Seen> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve_one(stream: TcpStream, n: usize, handler: &Handler, log: &Mutex<Vec<Seen>>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut line = String::new();
    reader.read_line(&mut line).unwrap();
    assert!(line.starts_with("POST /logprobs "), "{line}");
    let mut headers = Vec::new();
    loop {
        line.clear();
        reader.read_line(&mut line).unwrap();
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        let (k, v) = l.split_once(':').unwrap();
        headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
    }
    let len: usize = headers
        .iter()
        .find(|(k, _)| k == "content-length")
        .map(|(_, v)| v.parse().unwrap())
        .unwrap_or(0);
    let mut body = vec![0u8; len];
    reader.read_exact(&mut body).unwrap();
    let body: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let (status, reply) = handler(n, &body);
    log.lock().unwrap().push(Seen { headers, body });
    let mut stream = stream;
    write!(
        stream,
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    )
    .unwrap();
    stream.flush().unwrap();
}

/// A deterministic toy scorer: whitespace tokens, logprob depends on word
/// length, and a non-empty context lowers the first token's surprisal.
fn toy_logprobs(text: &str, context: Option<&str>) -> (Vec<String>, Vec<f64>) {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_string).collect();
    let mut logprobs: Vec<f64> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| -(0.37 * (t.len() % 7) as f64 + 0.011 * i as f64 + 0.5))
        .collect();
    if let (Some(c), Some(first)) = (context, logprobs.first_mut()) {
        if !c.is_empty() {
            *first *= 0.8;
        }
    }
    (tokens, logprobs)
}

fn toy_reply(model: &str, body: &serde_json::Value) -> String {
    let text = body["text"].as_str().unwrap();
    let (tokens, logprobs) = toy_logprobs(text, body["context"].as_str());
    serde_json::json!({"model_id": model, "tokens": tokens, "logprobs": logprobs}).to_string()
}

fn toy_server() -> MockServer {
    MockServer::start(Box::new(|_, body| (200, toy_reply("toy-lm", body))))
}

fn fast(provider: HttpProvider) -> HttpProvider {
    provider.with_retry(3, Duration::from_millis(5)).with_token(None)
}

const DOC: &str = "The first sentence has quite a few words in it for scoring. \
A second sentence follows the first with another dozen or so tokens here. \
Short one. The last sentence of the document is long enough to be tested too.";

#[test]
fn http_responses_replay_bit_identically_from_file() {
    let server = toy_server();
    let doc = segment("doc", DOC, &SegmentationConfig::default());
    let http = fast(HttpProvider::new(&server.endpoint));
    let live = fetch_logprobs(&doc, &http, ContextPolicy::None).unwrap();
    assert_eq!(live.len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("doc.logprobs.jsonl");
    write_records(&path, &live).unwrap();
    let file = FileProvider::open([&path]).unwrap();
    let replay = fetch_logprobs(&doc, &file, ContextPolicy::None).unwrap();
    assert_eq!(replay, live);
    for (a, b) in replay.iter().zip(&live) {
        let bits = |s: &TokenizedSentence| s.logprobs.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(a), bits(b));
    }
}

#[test]
fn file_and_http_analyses_are_byte_identical() {
    let server = toy_server();
    let rules = SegmentationConfig::default();
    let model = SurrogateModel::default();
    let mut rng = substream(1, 0);
    let calibration: Vec<TokenizedSentence> = (0..60)
        .flat_map(|d| {
            let doc = model.document(&format!("c{d}"), 20, 0.0, &mut rng);
            segment(&format!("c{d}"), &doc.text, &rules)
                .sentences
                .into_iter()
                .map(move |span| {
                    let (tokens, logprobs) = toy_logprobs(&span.text, None);
                    TokenizedSentence {
                        doc_id: format!("c{d}"),
                        sent_index: span.index,
                        tokens,
                        logprobs,
                        context_id: None,
                        model_id: "toy-lm".into(),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let table = build_null_table(calibration, CalibrationConfig::default()).unwrap();

    let text = model.document("target", 30, 0.0, &mut rng).text;
    let doc = segment("target", &text, &rules);
    let http = fast(HttpProvider::new(&server.endpoint)).with_expected_model(Some("toy-lm".into()));
    let records = fetch_logprobs(&doc, &http, ContextPolicy::None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("target.jsonl");
    write_records(&path, &records).unwrap();

    let thr = ThresholdSpec::user(2.5);
    let opts = AnalyzeOptions { hc: HcConfig::default() };
    let via_http = analyze(&doc, &http, &table, &thr, opts).unwrap().to_json().unwrap();
    let file = ProviderDescriptor::file(path.to_string_lossy())
        .with_model_id("toy-lm")
        .connect()
        .unwrap();
    let via_file = analyze(&doc, file.as_ref(), &table, &thr, opts).unwrap().to_json().unwrap();
    assert_eq!(via_http, via_file);
}

#[test]
fn preceding_sentence_context_is_sent_and_recorded() {
    let server = toy_server();
    let doc = segment("doc", DOC, &SegmentationConfig::default());
    let http = fast(HttpProvider::new(&server.endpoint));
    let out = fetch_logprobs(&doc, &http, ContextPolicy::PrecedingSentence).unwrap();
    let ids: Vec<Option<&str>> = out.iter().map(|s| s.context_id.as_deref()).collect();
    assert_eq!(ids, [None, Some("0"), Some("1"), Some("2")]);

    let mut contexts: Vec<(String, String)> = server
        .requests()
        .iter()
        .map(|r| {
            (
                r.body["text"].as_str().unwrap().to_string(),
                r.body["context"].as_str().unwrap().to_string(),
            )
        })
        .collect();
    contexts.sort();
    for span in &doc.sentences {
        let want = if span.index == 0 {
            String::new()
        } else {
            doc.sentences[span.index - 1].text.clone()
        };
        assert!(contexts.contains(&(span.text.clone(), want)));
    }
    // conditioning changes only the first token
    let plain = fetch_logprobs(&doc, &http, ContextPolicy::None).unwrap();
    assert_ne!(plain[1].logprobs[0], out[1].logprobs[0]);
    assert_eq!(plain[1].logprobs[1..], out[1].logprobs[1..]);
}

#[test]
fn no_context_sends_null() {
    let server = toy_server();
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    fetch_logprobs(&doc, &fast(HttpProvider::new(&server.endpoint)), ContextPolicy::None).unwrap();
    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert!(reqs[0].body["context"].is_null());
    assert_eq!(reqs[0].body["text"], "Only one sentence here.");
}

#[test]
fn bearer_token_is_attached() {
    let server = toy_server();
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    let http = fast(HttpProvider::new(&server.endpoint)).with_token(Some("s3cret".into()));
    fetch_logprobs(&doc, &http, ContextPolicy::None).unwrap();
    let reqs = server.requests();
    let auth = reqs[0].headers.iter().find(|(k, _)| k == "authorization");
    assert_eq!(auth.map(|(_, v)| v.as_str()), Some("Bearer s3cret"));

    let anonymous = toy_server();
    fetch_logprobs(&doc, &fast(HttpProvider::new(&anonymous.endpoint)), ContextPolicy::None).unwrap();
    assert!(anonymous.requests()[0].headers.iter().all(|(k, _)| k != "authorization"));
}

#[test]
fn transient_failures_are_retried() {
    let server = MockServer::start(Box::new(|n, body| {
        if n < 2 {
            (503, "busy".into())
        } else {
            (200, toy_reply("toy-lm", body))
        }
    }));
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    let out = fetch_logprobs(&doc, &fast(HttpProvider::new(&server.endpoint)), ContextPolicy::None).unwrap();
    assert_eq!(out[0].tokens.len(), 4);
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn persistent_failure_is_a_transport_error_after_three_attempts() {
    let server = MockServer::start(Box::new(|_, _| (500, "down".into())));
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    let err = fetch_logprobs(&doc, &fast(HttpProvider::new(&server.endpoint)), ContextPolicy::None).unwrap_err();
    match err {
        Error::Transport { sent_index, .. } => assert_eq!(sent_index, 0),
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let http = HttpProvider::new(&format!("http://127.0.0.1:{port}")).with_retry(2, Duration::from_millis(1));
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    assert!(matches!(
        fetch_logprobs(&doc, &http, ContextPolicy::None),
        Err(Error::Transport { .. })
    ));
}

#[test]
fn model_mismatch_and_bad_bodies_are_protocol_errors() {
    let server = toy_server();
    let doc = segment("doc", "Only one sentence here.", &SegmentationConfig::default());
    let http = fast(HttpProvider::new(&server.endpoint)).with_expected_model(Some("other-lm".into()));
    assert_eq!(http.model_id(), Some("other-lm"));
    assert!(matches!(
        fetch_logprobs(&doc, &http, ContextPolicy::None),
        Err(Error::Protocol(_))
    ));

    let garbage = MockServer::start(Box::new(|_, _| (200, "{\"tokens\": 3}".into())));
    assert!(matches!(
        fetch_logprobs(&doc, &fast(HttpProvider::new(&garbage.endpoint)), ContextPolicy::None),
        Err(Error::Protocol(_))
    ));

    let positive = MockServer::start(Box::new(|_, _| {
        (200, r#"{"model_id":"toy-lm","tokens":["a"],"logprobs":[0.5]}"#.into())
    }));
    assert!(matches!(
        fetch_logprobs(&doc, &fast(HttpProvider::new(&positive.endpoint)), ContextPolicy::None),
        Err(Error::DataIntegrity(_))
    ));
}

#[test]
fn results_follow_span_order() {
    let server = MockServer::start(Box::new(|n, body| {
        thread::sleep(Duration::from_millis((7 * n as u64) % 5));
        (200, toy_reply("toy-lm", body))
    }));
    let text: String = (0..24).map(|i| format!("Sentence number {i} is here. ")).collect();
    let doc = segment("doc", &text, &SegmentationConfig::default());
    let out = fetch_logprobs(&doc, &fast(HttpProvider::new(&server.endpoint)), ContextPolicy::None).unwrap();
    for (i, s) in out.iter().enumerate() {
        assert_eq!(s.sent_index, i);
        assert_eq!(s.tokens[2], i.to_string());
    }
}
