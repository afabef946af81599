use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::thread;

use bft_core::gateway::{ApiStyle, EndpointConfig, Gateway, LlmRequest, SamplingParams};
use serde_json::{json, Value};

struct Recorded {
    path: String,
    auth: Option<String>,
    body: Value,
}

/// Local server answering with `replies` in order; the last one repeats.
struct Server {
    url: String,
    requests: Arc<Mutex<Vec<Recorded>>>,
}

impl Server {
    fn start(replies: Vec<(u16, String)>) -> Self {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", server.server_addr().to_ip().unwrap());
        let requests = Arc::new(Mutex::new(Vec::new()));
        let log = requests.clone();
        let mut replies: VecDeque<_> = replies.into();
        thread::spawn(move || {
            for mut request in server.incoming_requests() {
                let mut body = String::new();
                request.as_reader().read_to_string(&mut body).unwrap();
                let auth = request
                    .headers()
                    .iter()
                    .find(|h| h.field.equiv("Authorization"))
                    .map(|h| h.value.to_string());
                log.lock().unwrap().push(Recorded {
                    path: request.url().to_string(),
                    auth,
                    body: serde_json::from_str(&body).unwrap_or(Value::Null),
                });
                let (status, text) = if replies.len() > 1 {
                    replies.pop_front().unwrap()
                } else {
                    replies.front().cloned().unwrap()
                };
                let response = tiny_http::Response::from_string(text).with_status_code(status);
                let _ = request.respond(response);
            }
        });
        Self { url, requests }
    }

    fn endpoint(&self, style: ApiStyle) -> EndpointConfig {
        EndpointConfig {
            base_url: self.url.clone(),
            model_name: "test-model".into(),
            api_style: style,
            retry_base_ms: 1,
            timeout_seconds: 5.0,
            ..EndpointConfig::default()
        }
    }

    fn paths(&self) -> Vec<String> {
        self.requests.lock().unwrap().iter().map(|r| r.path.clone()).collect()
    }
}

fn request(prompt: &str) -> LlmRequest {
    LlmRequest::new("r", prompt, SamplingParams::default())
}

#[test]
fn completion_style_round_trip() {
    let server = Server::start(vec![(200, json!({"choices": [{"text": " What is 2+2?"}]}).to_string())]);
    let gateway = Gateway::from_config("backward", server.endpoint(ApiStyle::Completion)).unwrap();
    let result = gateway.complete(&request("four"));
    assert_eq!(result.text(), Some(" What is 2+2?"));
    assert_eq!(result.attempts, 1);

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests[0].path, "/v1/completions");
    let body = &requests[0].body;
    assert_eq!(body["prompt"], "four");
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["temperature"], 1.0);
    assert_eq!(body["top_p"], 0.9);
    assert_eq!(body["max_tokens"], 1024);
}

#[test]
fn chat_style_and_bearer_key() {
    std::env::set_var("BFT_TEST_HTTP_KEY", "sekrit");
    let server = Server::start(vec![(
        200,
        json!({"choices": [{"message": {"role": "assistant", "content": "Score: 5"}}]}).to_string(),
    )]);
    let config = EndpointConfig {
        api_key_env: Some("BFT_TEST_HTTP_KEY".into()),
        ..server.endpoint(ApiStyle::Chat)
    };
    let gateway = Gateway::from_config("forward", config).unwrap();
    assert_eq!(gateway.complete(&request("rate this")).text(), Some("Score: 5"));
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests[0].path, "/v1/chat/completions");
    assert_eq!(requests[0].body["messages"][0]["content"], "rate this");
    assert_eq!(requests[0].auth.as_deref(), Some("Bearer sekrit"));
}

#[test]
fn server_errors_are_retried() {
    let ok = json!({"choices": [{"text": "fine"}]}).to_string();
    let server = Server::start(vec![(503, "busy".into()), (500, "oops".into()), (200, ok)]);
    let gateway = Gateway::from_config("backward", server.endpoint(ApiStyle::Completion)).unwrap();
    let result = gateway.complete(&request("x"));
    assert_eq!(result.text(), Some("fine"));
    assert_eq!(result.attempts, 3);
    assert_eq!(server.paths().len(), 3);
}

#[test]
fn bad_request_is_not_retried() {
    let server = Server::start(vec![(400, "bad".into())]);
    let gateway = Gateway::from_config("backward", server.endpoint(ApiStyle::Completion)).unwrap();
    let result = gateway.complete(&request("x"));
    assert!(result.failed);
    assert_eq!(result.attempts, 1);
    assert!(result.failure_reason.unwrap().contains("400"));
}

#[test]
fn invalid_json_is_malformed_and_retried() {
    let server = Server::start(vec![(200, "not json".into())]);
    let config = EndpointConfig {
        max_retries: 2,
        ..server.endpoint(ApiStyle::Completion)
    };
    let gateway = Gateway::from_config("backward", config).unwrap();
    let result = gateway.complete(&request("x"));
    assert!(result.failed);
    assert_eq!(result.attempts, 3);
}

#[test]
fn embeddings_are_reordered_by_index() {
    let body = json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0]},
        {"index": 0, "embedding": [1.0, 0.0]},
    ]});
    let server = Server::start(vec![(200, body.to_string())]);
    let gateway = Gateway::from_config("embedder", server.endpoint(ApiStyle::Completion)).unwrap();
    let vectors = gateway.embed(&["a".into(), "b".into()]).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    assert_eq!(server.paths(), ["/v1/embeddings"]);
}

#[test]
fn token_counts() {
    let server = Server::start(vec![
        (200, json!({"count": 7}).to_string()),
        (200, json!({"tokens": [1, 2, 3]}).to_string()),
    ]);
    let gateway = Gateway::from_config("tokenizer", server.endpoint(ApiStyle::Completion)).unwrap();
    assert_eq!(gateway.count_tokens("some text").unwrap(), 7);
    assert_eq!(gateway.count_tokens("more").unwrap(), 3);
}

#[test]
fn unreachable_endpoint_fails_after_retries() {
    let config = EndpointConfig {
        base_url: "http://127.0.0.1:9".into(),
        max_retries: 1,
        retry_base_ms: 1,
        timeout_seconds: 2.0,
        ..EndpointConfig::default()
    };
    let gateway = Gateway::from_config("backward", config).unwrap();
    let result = gateway.complete(&request("x"));
    assert!(result.failed);
    assert_eq!(result.attempts, 2);
}
