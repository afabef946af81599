use std::time::Duration;

use serde_json::{json, Value};

use super::{ApiStyle, CallError, EndpointConfig, FailureKind, SamplingParams, Transport};
use crate::error::Result;

/// OpenAI-compatible HTTP endpoint (`/completions`, `/chat/completions`,
/// `/embeddings`, `/tokenize`).
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    model: String,
    api_key: Option<String>,
    style: ApiStyle,
}

impl HttpTransport {
    pub fn new(config: &EndpointConfig) -> Result<Self> {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_seconds))
            .build();
        let api_key = match &config.api_key_env {
            Some(var) => match std::env::var(var) {
                Ok(key) if !key.is_empty() => Some(key),
                _ => {
                    tracing::warn!(variable = %var, "API key variable is unset; sending requests without credentials");
                    None
                }
            },
            None => None,
        };
        Ok(Self {
            agent,
            base_url: config.base_url.trim_end_matches('/').to_string(),
            model: config.model_name.clone(),
            api_key,
            style: config.api_style,
        })
    }

    fn post(&self, route: &str, body: Value) -> Result<Value, CallError> {
        let url = format!("{}/{route}", self.base_url);
        let mut request = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            request = request.set("Authorization", &format!("Bearer {key}"));
        }
        match request.send_json(body) {
            Ok(response) => {
                let text = response
                    .into_string()
                    .map_err(|e| CallError::new(FailureKind::Transport, e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| {
                    CallError::new(FailureKind::Malformed, format!("invalid JSON body: {e}"))
                })
            }
            Err(ureq::Error::Status(code, response)) => {
                let body = response.into_string().unwrap_or_default();
                let kind = if code >= 500 {
                    FailureKind::Server(code)
                } else {
                    FailureKind::Client(code)
                };
                Err(CallError::new(kind, truncate(&body, 200)))
            }
            Err(ureq::Error::Transport(transport)) => {
                let message = transport.to_string();
                let kind = if message.contains("timed out") || message.contains("Timeout") {
                    FailureKind::Timeout
                } else {
                    FailureKind::Transport
                };
                Err(CallError::new(kind, message))
            }
        }
    }
}

fn truncate(text: &str, max_chars: usize) -> String {
    text.chars().take(max_chars).collect()
}

fn malformed(what: &str) -> CallError {
    CallError::new(FailureKind::Malformed, format!("response lacks {what}"))
}

impl Transport for HttpTransport {
    fn complete(&self, prompt: &str, params: &SamplingParams) -> Result<String, CallError> {
        match self.style {
            ApiStyle::Completion => {
                let body = json!({
                    "model": self.model,
                    "prompt": prompt,
                    "temperature": params.temperature,
                    "top_p": params.top_p,
                    "max_tokens": params.max_new_tokens,
                });
                let reply = self.post("completions", body)?;
                reply["choices"][0]["text"]
                    .as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| malformed("choices[0].text"))
            }
            ApiStyle::Chat => {
                let body = json!({
                    "model": self.model,
                    "messages": [{"role": "user", "content": prompt}],
                    "temperature": params.temperature,
                    "top_p": params.top_p,
                    "max_tokens": params.max_new_tokens,
                });
                let reply = self.post("chat/completions", body)?;
                reply["choices"][0]["message"]["content"]
                    .as_str()
                    .map(str::to_owned)
                    .ok_or_else(|| malformed("choices[0].message.content"))
            }
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CallError> {
        let reply = self.post("embeddings", json!({"model": self.model, "input": texts}))?;
        let data = reply["data"].as_array().ok_or_else(|| malformed("data"))?;
        let mut indexed = Vec::with_capacity(data.len());
        for (position, item) in data.iter().enumerate() {
            let index = item["index"].as_u64().map(|i| i as usize).unwrap_or(position);
            let vector = item["embedding"]
                .as_array()
                .ok_or_else(|| malformed("data[].embedding"))?
                .iter()
                .map(|x| x.as_f64().ok_or_else(|| malformed("numeric embedding")))
                .collect::<Result<Vec<f64>, _>>()?;
            indexed.push((index, vector));
        }
        indexed.sort_by_key(|(index, _)| *index);
        Ok(indexed.into_iter().map(|(_, v)| v).collect())
    }

    fn count_tokens(&self, text: &str) -> Result<usize, CallError> {
        let reply = self.post("tokenize", json!({"model": self.model, "prompt": text}))?;
        if let Some(count) = reply["count"].as_u64() {
            return Ok(count as usize);
        }
        reply["tokens"]
            .as_array()
            .map(Vec::len)
            .ok_or_else(|| malformed("count or tokens"))
    }
}
