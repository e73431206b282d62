use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use inpars_core::gateway::{GatewayConfig, GatewayError, GenerationResult, HttpGateway, ModelGateway, ScorePair};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/http");

fn fixture(name: &str) -> String {
    std::fs::read_to_string(format!("{FIXTURES}/{name}")).unwrap().trim_end().to_string()
}

#[derive(Clone)]
enum Reply {
    Json(u16, String),
    /// Close the connection without answering.
    Hangup,
    /// Hold the connection open past any reasonable timeout.
    Stall(Duration),
}

#[derive(Debug, Clone)]
struct Recorded {
    method: String,
    path: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Recorded {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }
}

/// Serves the scripted replies in order, one per request, recording what
/// it received. Requests beyond the script get a 500.
struct MockServer {
    url: String,
    log: Arc<Mutex<Vec<Recorded>>>,
    _thread: JoinHandle<()>,
}

impl MockServer {
    fn start(script: Vec<Reply>) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}", listener.local_addr().unwrap());
        let log = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&log);
        let thread = std::thread::spawn(move || {
            let mut script = script.into_iter();
            for stream in listener.incoming() {
                let Ok(stream) = stream else { return };
                if serve(stream, &mut script, &sink).is_err() {
                    continue;
                }
            }
        });
        Self { url, log, _thread: thread }
    }

    fn requests(&self) -> Vec<Recorded> {
        self.log.lock().unwrap().clone()
    }

    fn config(&self) -> GatewayConfig {
        GatewayConfig {
            url: self.url.clone(),
            backoff_ms: 1,
            timeout_secs: 5,
            ..GatewayConfig::default()
        }
    }
}

fn serve(
    stream: TcpStream,
    script: &mut impl Iterator<Item = Reply>,
    log: &Mutex<Vec<Recorded>>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut out = stream;
    // Keep-alive: answer requests on this connection until the client closes.
    loop {
        let mut request_line = String::new();
        if reader.read_line(&mut request_line)? == 0 {
            return Ok(());
        }
        let mut parts = request_line.split_whitespace();
        let method = parts.next().unwrap_or_default().to_string();
        let path = parts.next().unwrap_or_default().to_string();
        let mut headers = Vec::new();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line)?;
            let line = line.trim_end();
            if line.is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let len: usize = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
            .map(|(_, v)| v.parse().unwrap())
            .unwrap_or(0);
        let mut body = vec![0u8; len];
        reader.read_exact(&mut body)?;
        log.lock().unwrap().push(Recorded {
            method,
            path,
            headers,
            body: String::from_utf8(body).unwrap(),
        });
        match script.next().unwrap_or(Reply::Json(500, "{}".into())) {
            Reply::Json(status, body) => {
                write!(
                    out,
                    "HTTP/1.1 {status} Scripted\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
                    body.len()
                )?;
                out.flush()?;
            }
            Reply::Hangup => return Ok(()),
            Reply::Stall(d) => {
                std::thread::sleep(d);
                return Ok(());
            }
        }
    }
}

fn ok(body: impl Into<String>) -> Reply {
    Reply::Json(200, body.into())
}

fn generate_prompt() -> &'static str {
    "Example 1:\nDocument: Caffeine crosses the placenta.\nGood Question:"
}

#[test]
fn generate_replays_recording() {
    let server = MockServer::start(vec![ok(fixture("generate_response.json"))]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    let got = gw.generate(generate_prompt(), 64, "Example").unwrap();
    let recorded: GenerationResult = serde_json::from_str(&fixture("generate_response.json")).unwrap();
    assert_eq!(got, recorded);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].method, "POST");
    assert_eq!(reqs[0].path, "/v1/generate");
    assert_eq!(reqs[0].body, fixture("generate_request.json"));
    assert!(reqs[0].header("content-type").unwrap().starts_with("application/json"));
    assert_eq!(reqs[0].header("authorization"), None);
}

#[test]
fn score_batch_replays_recording() {
    let server = MockServer::start(vec![ok(fixture("score_response.json"))]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    let pairs = [
        ScorePair { query: "caffeine pregnancy", document: "Caffeine crosses the placenta." },
        ScorePair { query: "gobi desert", document: "Caffeine crosses the placenta." },
        ScorePair { query: "credit score \"range\"", document: "Scores run from 300 to 850.\tTabbed." },
    ];
    let got: Vec<f64> = gw.score_batch(&pairs).unwrap().into_iter().map(|s| s.value()).collect();
    assert_eq!(got, [0.9871, 0.0123, -2.5]);
    let reqs = server.requests();
    assert_eq!(reqs[0].path, "/v1/score");
    assert_eq!(reqs[0].body, fixture("score_request.json"));
}

#[test]
fn single_score_goes_through_the_batch_endpoint() {
    let server = MockServer::start(vec![ok(r#"{"scores":[0.25]}"#)]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    assert_eq!(gw.score("q", "d").unwrap().value(), 0.25);
    let body: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
    assert_eq!(body, serde_json::json!({"pairs": [{"query": "q", "document": "d"}]}));
}

#[test]
fn text_is_sent_byte_for_byte() {
    let prompt = "  leading space, tab\there, emoji \u{1F600}, nul-free \u{7f} and \"quotes\" \\ \n\n";
    let server = MockServer::start(vec![ok(r#"{"text":"x"}"#)]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    gw.generate(prompt, 5, "\n\nStop").unwrap();
    let body: serde_json::Value = serde_json::from_str(&server.requests()[0].body).unwrap();
    assert_eq!(body["prompt"].as_str().unwrap(), prompt);
    assert_eq!(body["stop"].as_str().unwrap(), "\n\nStop");
    assert_eq!(body["greedy"], true);
    assert_eq!(body["max_new_tokens"], 5);
}

#[test]
fn bearer_token_is_passed_through() {
    let server = MockServer::start(vec![ok(r#"{"text":"x"}"#)]);
    let config = GatewayConfig {
        bearer_token: Some("s3cret".into()),
        ..server.config()
    };
    HttpGateway::new(&config).unwrap().generate("p", 1, "s").unwrap();
    assert_eq!(server.requests()[0].header("authorization"), Some("Bearer s3cret"));
}

#[test]
fn retries_transient_failures_until_success() {
    for failures in 0..4 {
        let mut script: Vec<Reply> = (0..failures)
            .map(|i| if i % 2 == 0 { Reply::Json(503, "busy".into()) } else { Reply::Json(429, "slow down".into()) })
            .collect();
        script.push(ok(r#"{"text":"fine"}"#));
        let server = MockServer::start(script);
        let gw = HttpGateway::new(&server.config()).unwrap();
        assert_eq!(gw.generate("p", 4, "s").unwrap().text, "fine");
        assert_eq!(server.requests().len(), failures + 1);
    }
}

#[test]
fn gives_up_after_max_attempts() {
    let server = MockServer::start(vec![Reply::Json(502, "bad gateway ".repeat(100)); 10]);
    let config = GatewayConfig { max_attempts: 3, ..server.config() };
    let err = HttpGateway::new(&config).unwrap().generate("p", 4, "s").unwrap_err();
    match err {
        GatewayError::Service { status, body } => {
            assert_eq!(status, 502);
            assert!(body.starts_with("bad gateway"));
            assert!(body.len() <= 200);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn backoff_doubles() {
    // Two failures with base 40ms wait at least 40 + 80 ms.
    let server = MockServer::start(vec![
        Reply::Json(500, "{}".into()),
        Reply::Json(500, "{}".into()),
        ok(r#"{"text":"x"}"#),
    ]);
    let config = GatewayConfig { backoff_ms: 40, ..server.config() };
    let gw = HttpGateway::new(&config).unwrap();
    let start = Instant::now();
    gw.generate("p", 1, "s").unwrap();
    assert!(start.elapsed() >= Duration::from_millis(120), "{:?}", start.elapsed());
}

#[test]
fn client_errors_are_not_retried() {
    let server = MockServer::start(vec![Reply::Json(400, r#"{"error":"prompt too long"}"#.into()), ok("{}")]);
    let err = HttpGateway::new(&server.config()).unwrap().generate("p", 1, "s").unwrap_err();
    assert_eq!(
        err,
        GatewayError::Service { status: 400, body: r#"{"error":"prompt too long"}"#.into() }
    );
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn hangups_are_transport_errors() {
    let server = MockServer::start(vec![Reply::Hangup, Reply::Hangup, ok(r#"{"text":"back"}"#)]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    assert_eq!(gw.generate("p", 1, "s").unwrap().text, "back");

    let server = MockServer::start(vec![Reply::Hangup; 4]);
    let config = GatewayConfig { max_attempts: 2, ..server.config() };
    let err = HttpGateway::new(&config).unwrap().generate("p", 1, "s").unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }), "{err:?}");
}

#[test]
fn timeouts_are_transport_errors() {
    let server = MockServer::start(vec![Reply::Stall(Duration::from_secs(3)); 2]);
    let config = GatewayConfig { max_attempts: 1, timeout_secs: 1, ..server.config() };
    let start = Instant::now();
    let err = HttpGateway::new(&config).unwrap().generate("p", 1, "s").unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 1, .. }), "{err:?}");
    assert!(start.elapsed() < Duration::from_secs(3));
}

#[test]
fn unreachable_server() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = GatewayConfig {
        url: format!("http://127.0.0.1:{port}"),
        max_attempts: 2,
        backoff_ms: 1,
        ..GatewayConfig::default()
    };
    let err = HttpGateway::new(&config).unwrap().score("q", "d").unwrap_err();
    assert!(matches!(err, GatewayError::Transport { attempts: 2, .. }), "{err:?}");
}

#[test]
fn malformed_responses_are_rejected() {
    let cases = [
        (r#"{"scores":[1.0]}"#, "expected 2 scores"),
        (r#"{"nope":true}"#, "invalid response"),
        ("not json", "invalid response"),
    ];
    for (body, needle) in cases {
        let server = MockServer::start(vec![ok(body)]);
        let gw = HttpGateway::new(&server.config()).unwrap();
        let pairs = [ScorePair { query: "a", document: "b" }, ScorePair { query: "c", document: "d" }];
        let err = gw.score_batch(&pairs).unwrap_err();
        assert!(err.to_string().contains(needle), "{err}");
        assert_eq!(server.requests().len(), 1);
    }
    let server = MockServer::start(vec![ok(r#"{"text":"x","token_logprobs":[0.5]}"#)]);
    let err = HttpGateway::new(&server.config()).unwrap().generate("p", 1, "s").unwrap_err();
    assert!(matches!(err, GatewayError::InvalidResponse(_)));
}

#[test]
fn invalid_requests_never_leave_the_process() {
    let server = MockServer::start(vec![]);
    let gw = HttpGateway::new(&server.config()).unwrap();
    assert!(matches!(gw.generate("", 1, "s"), Err(GatewayError::InvalidRequest(_))));
    assert!(matches!(gw.generate("p", 0, "s"), Err(GatewayError::InvalidRequest(_))));
    assert!(matches!(gw.score("", "d"), Err(GatewayError::InvalidRequest(_))));
    assert!(gw.score_batch(&[]).unwrap().is_empty());
    assert!(server.requests().is_empty());
    assert!(HttpGateway::new(&GatewayConfig { parallelism: 0, ..GatewayConfig::default() }).is_err());
}
