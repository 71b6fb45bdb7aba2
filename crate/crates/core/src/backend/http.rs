//! Chat-completions HTTP backend.
//!
//! Speaks the common chat-completions wire shape: one user message carrying
//! the rendered prompt, one choice back. The API key is read from the
//! `RUBRIC_RERANK_API_KEY` environment variable; endpoints that need no key
//! work with it unset.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, Completion, SampleKey, ScoringBackend};
use crate::rubric::PromptText;

/// Environment variable holding the backend API key.
pub const API_KEY_ENV: &str = "RUBRIC_RERANK_API_KEY";

pub struct HttpBackend {
    client: reqwest::Client,
    endpoint: String,
    model: String,
    temperature: f64,
    timeout: Duration,
    want_logprobs: bool,
    api_key: Option<String>,
}

impl HttpBackend {
    /// `endpoint` is the full chat-completions URL, e.g.
    /// `http://localhost:8000/v1/chat/completions`.
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        temperature: f64,
        timeout: Duration,
        want_logprobs: bool,
    ) -> Self {
        Self {
            client: reqwest::Client::new(),
            endpoint: endpoint.into(),
            model: model.into(),
            temperature,
            timeout,
            want_logprobs,
            api_key: std::env::var(API_KEY_ENV).ok(),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    n: u32,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    logprobs: bool,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Vec<TokenLogprob>,
}

#[derive(Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

fn parse_chat_response(body: &str) -> Result<Completion, BackendError> {
    let response: ChatResponse =
        serde_json::from_str(body).map_err(|e| BackendError::MalformedResponse {
            detail: format!("invalid JSON: {e}"),
        })?;
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| BackendError::MalformedResponse {
            detail: "response has no choices".into(),
        })?;
    let text = choice
        .message
        .content
        .ok_or_else(|| BackendError::MalformedResponse {
            detail: "choice has no message content".into(),
        })?;
    let token_logprobs = choice
        .logprobs
        .map(|lp| lp.content.into_iter().map(|t| t.logprob).collect());
    Ok(Completion {
        text,
        token_logprobs,
    })
}

#[async_trait]
impl ScoringBackend for HttpBackend {
    async fn complete(
        &self,
        prompt: &PromptText,
        _key: SampleKey<'_>,
    ) -> Result<Completion, BackendError> {
        let request = ChatRequest {
            model: &self.model,
            messages: [ChatMessage {
                role: "user",
                content: prompt.as_str(),
            }],
            temperature: self.temperature,
            n: 1,
            logprobs: self.want_logprobs,
        };
        let mut builder = self
            .client
            .post(&self.endpoint)
            .timeout(self.timeout)
            .json(&request);
        if let Some(key) = &self.api_key {
            builder = builder.bearer_auth(key);
        }
        let response = builder.send().await.map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout {
                    seconds: self.timeout.as_secs(),
                }
            } else {
                BackendError::Unreachable {
                    endpoint: self.endpoint.clone(),
                    detail: e.to_string(),
                }
            }
        })?;
        let status = response.status().as_u16();
        let body = response
            .text()
            .await
            .map_err(|e| BackendError::MalformedResponse {
                detail: e.to_string(),
            })?;
        match status {
            200 => parse_chat_response(&body),
            401 | 403 => Err(BackendError::AuthFailure {
                env_var: API_KEY_ENV,
            }),
            _ => Err(BackendError::Http {
                status,
                detail: body.chars().take(200).collect(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::{Read, Write};
    use std::net::TcpListener;

    #[test]
    fn request_body_has_the_expected_wire_shape() {
        let request = ChatRequest {
            model: "m",
            messages: [ChatMessage {
                role: "user",
                content: "the prompt",
            }],
            temperature: 1.0,
            n: 1,
            logprobs: false,
        };
        let json = serde_json::to_value(&request).unwrap();
        assert_eq!(json["model"], "m");
        assert_eq!(json["messages"][0]["role"], "user");
        assert_eq!(json["messages"][0]["content"], "the prompt");
        assert_eq!(json["n"], 1);
        // logprobs are omitted unless requested
        assert!(json.get("logprobs").is_none());
    }

    #[test]
    fn response_parsing_extracts_text_and_logprobs() {
        let body = r#"{
            "choices": [{
                "message": {"content": "<score>70</score>"},
                "logprobs": {"content": [{"logprob": -0.5}, {"logprob": -1.5}]}
            }]
        }"#;
        let completion = parse_chat_response(body).unwrap();
        assert_eq!(completion.text, "<score>70</score>");
        assert_eq!(completion.token_logprobs.unwrap(), vec![-0.5, -1.5]);

        assert!(matches!(
            parse_chat_response(r#"{"choices": []}"#),
            Err(BackendError::MalformedResponse { .. })
        ));
        assert!(matches!(
            parse_chat_response("not json"),
            Err(BackendError::MalformedResponse { .. })
        ));
    }

    /// Serve one canned HTTP response on a local socket.
    fn one_shot_server(status_line: &'static str, body: &'static str) -> String {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        std::thread::spawn(move || {
            if let Ok((mut stream, _)) = listener.accept() {
                let mut buf = [0u8; 8192];
                let _ = stream.read(&mut buf);
                let response = format!(
                    "HTTP/1.1 {status_line}\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                    body.len()
                );
                let _ = stream.write_all(response.as_bytes());
            }
        });
        format!("http://{addr}/v1/chat/completions")
    }

    fn test_prompt() -> PromptText {
        let rubric = crate::rubric::RelevanceRubric::new("def", "qt", "dt").unwrap();
        crate::rubric::render_prompt(&rubric, "q", "d").unwrap()
    }

    fn test_key() -> SampleKey<'static> {
        SampleKey {
            query_id: "q",
            doc_id: "d",
            sample_index: 0,
            attempt: 0,
        }
    }

    #[tokio::test]
    async fn rejected_auth_names_the_env_var() {
        let endpoint = one_shot_server("401 Unauthorized", "{}");
        let backend = HttpBackend::new(endpoint, "m", 0.0, Duration::from_secs(5), false)
            .with_api_key(Some("bad-key".into()));
        let err = backend.complete(&test_prompt(), test_key()).await.unwrap_err();
        match err {
            BackendError::AuthFailure { env_var } => assert_eq!(env_var, API_KEY_ENV),
            other => panic!("expected AuthFailure, got {other:?}"),
        }
        assert!(err.to_string().contains(API_KEY_ENV));
    }

    #[tokio::test]
    async fn successful_round_trip_over_a_socket() {
        let endpoint = one_shot_server(
            "200 OK",
            r#"{"choices":[{"message":{"content":"ok <score>55</score>"}}]}"#,
        );
        let backend = HttpBackend::new(endpoint, "m", 0.0, Duration::from_secs(5), false)
            .with_api_key(None);
        let completion = backend.complete(&test_prompt(), test_key()).await.unwrap();
        assert_eq!(completion.text, "ok <score>55</score>");
        assert!(completion.token_logprobs.is_none());
    }

    #[tokio::test]
    async fn unreachable_endpoint_is_not_retryable() {
        // Port 9 (discard) on localhost is almost certainly closed.
        let backend = HttpBackend::new(
            "http://127.0.0.1:9/v1/chat/completions",
            "m",
            0.0,
            Duration::from_secs(1),
            false,
        )
        .with_api_key(None);
        let err = backend.complete(&test_prompt(), test_key()).await.unwrap_err();
        assert!(matches!(err, BackendError::Unreachable { .. }));
        assert!(!err.is_retryable());
    }
}
