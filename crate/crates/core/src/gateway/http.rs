use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, BackendReply, CallError, ChatRequest};

/// OpenAI-compatible `POST /v1/chat/completions` client.
pub struct HttpBackend {
    url: String,
    api_key: Option<String>,
    model_name: String,
    agent: ureq::Agent,
}

impl HttpBackend {
    /// `endpoint` may be a bare base URL, a `/v1` base, or the full completions URL.
    pub fn new(endpoint: &str, api_key: Option<String>, model_name: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: completions_url(endpoint),
            api_key: api_key.filter(|k| !k.is_empty()),
            model_name: model_name.into(),
            agent: agent(timeout),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(timeout))
        .build()
        .into()
}

pub(crate) fn completions_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/chat/completions") {
        base.to_string()
    } else if base.ends_with("/v1") {
        format!("{base}/chat/completions")
    } else {
        format!("{base}/v1/chat/completions")
    }
}

/// POSTs a JSON body and returns `(status, body text)`.
pub(crate) fn post_json(
    agent: &ureq::Agent,
    url: &str,
    api_key: Option<&str>,
    body: &Value,
) -> Result<(u16, String), CallError> {
    let mut request = agent.post(url).header("Content-Type", "application/json");
    if let Some(key) = api_key {
        request = request.header("Authorization", format!("Bearer {key}"));
    }
    let mut response = request
        .send(body.to_string())
        .map_err(|e| CallError::Transport(e.to_string()))?;
    let status = response.status().as_u16();
    let text = response
        .body_mut()
        .read_to_string()
        .map_err(|e| CallError::Transport(e.to_string()))?;
    Ok((status, text))
}

pub(crate) fn request_body(model_name: &str, req: &ChatRequest) -> Value {
    let mut messages = Vec::with_capacity(2);
    // An empty system prompt is the no-prompt baseline: no system message at all.
    if !req.system_text.is_empty() {
        messages.push(json!({"role": "system", "content": req.system_text}));
    }
    messages.push(json!({"role": "user", "content": req.user_text}));
    json!({
        "model": model_name,
        "messages": messages,
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    })
}

pub(crate) fn parse_reply(body: &str) -> Result<BackendReply, CallError> {
    let v: Value = serde_json::from_str(body).map_err(|e| CallError::Malformed(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| CallError::Malformed("missing choices[0]".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| CallError::Malformed("missing choices[0].message.content".into()))?
        .to_string();
    let finish_reason = choice
        .get("finish_reason")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let completion_tokens = v.pointer("/usage/completion_tokens").and_then(Value::as_u64);
    Ok(BackendReply { text, completion_tokens, finish_reason })
}

impl Backend for HttpBackend {
    fn call(&self, req: &ChatRequest) -> Result<BackendReply, CallError> {
        let body = request_body(&self.model_name, req);
        let (status, text) = post_json(&self.agent, &self.url, self.api_key.as_deref(), &body)?;
        if !(200..300).contains(&status) {
            return Err(CallError::Status { code: status, body: text });
        }
        parse_reply(&text)
    }
}
