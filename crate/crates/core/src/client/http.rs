//! JSON-over-HTTP adapters.
//!
//! Chat requests use the common chat-completions shape: a model name, one user
//! message whose content holds the prompt text followed by each image as a
//! base64 PNG data URL, and `temperature: 0`. The reply text is read from
//! `choices[0].message.content`. Text-only requests carry no image parts.
//!
//! The classifier posts `{"inputs": text, "parameters": {"candidate_labels": [...]}}`
//! and expects `{"labels": [...], "scores": [...]}` ranked best first.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{ChatClient, ChatRequest, Classifier, ClientError};

/// Optional bearer token for every adapter.
pub const API_KEY_ENV: &str = "CURATE_API_KEY";

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .build()
        .into()
}

fn post_json(agent: &ureq::Agent, url: &str, body: &Value) -> Result<Value, ClientError> {
    let mut request = agent.post(url);
    if let Ok(key) = std::env::var(API_KEY_ENV) {
        request = request.header("authorization", format!("Bearer {key}"));
    }
    match request.send_json(body) {
        Ok(mut resp) => resp
            .body_mut()
            .read_json::<Value>()
            .map_err(|e| ClientError::Protocol(format!("reading reply: {e}"))),
        Err(ureq::Error::StatusCode(code)) if code == 429 || code >= 500 => {
            Err(ClientError::Transport(format!("HTTP {code}")))
        }
        Err(ureq::Error::StatusCode(code)) => Err(ClientError::Protocol(format!("HTTP {code}"))),
        Err(e) => Err(ClientError::Transport(e.to_string())),
    }
}

pub struct HttpChatClient {
    endpoint: String,
    model: String,
    agent: ureq::Agent,
}

impl HttpChatClient {
    pub fn new(endpoint: &str, model: &str, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            agent: agent(timeout),
        }
    }

    pub fn request_body(&self, req: &ChatRequest) -> Value {
        let mut content = vec![json!({"type": "text", "text": req.prompt})];
        for img in &req.images {
            let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_png());
            content.push(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")}
            }));
        }
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": content}],
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        let reply = post_json(&self.agent, &self.endpoint, &self.request_body(req))?;
        reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ClientError::Protocol("reply lacks choices[0].message.content".into()))
    }

    fn tag(&self) -> String {
        format!("{}@{}", self.model, self.endpoint)
    }
}

pub struct HttpClassifier {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpClassifier {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        Self {
            endpoint: endpoint.to_string(),
            agent: agent(timeout),
        }
    }
}

impl Classifier for HttpClassifier {
    fn rank(&self, text: &str, labels: &[&str]) -> Result<Vec<(String, f64)>, ClientError> {
        let body = json!({"inputs": text, "parameters": {"candidate_labels": labels}});
        let reply = post_json(&self.agent, &self.endpoint, &body)?;
        let names = reply
            .get("labels")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Protocol("reply lacks `labels`".into()))?;
        let scores = reply
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| ClientError::Protocol("reply lacks `scores`".into()))?;
        if names.len() != scores.len() || names.is_empty() {
            return Err(ClientError::Protocol("labels and scores differ in length".into()));
        }
        names
            .iter()
            .zip(scores)
            .map(|(n, s)| match (n.as_str(), s.as_f64()) {
                (Some(n), Some(s)) => Ok((n.to_string(), s)),
                _ => Err(ClientError::Protocol("non-string label or non-numeric score".into())),
            })
            .collect()
    }

    fn tag(&self) -> String {
        format!("classifier@{}", self.endpoint)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{Purpose, RequestContext};
    use crate::frame::Frame;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::mpsc;

    /// One-shot HTTP server: replies with `status` and `body`, hands back the request body.
    fn serve_once(status: u16, body: &'static str) -> (String, mpsc::Receiver<Value>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            tx.send(serde_json::from_slice(&buf).unwrap()).ok();
            let mut stream = stream;
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        });
        (url, rx)
    }

    fn req(images: Vec<Frame>) -> ChatRequest {
        ChatRequest {
            prompt: "Describe.".into(),
            images,
            context: RequestContext {
                video_id: "v".into(),
                purpose: Purpose::ClipCaption,
                inputs: vec![],
            },
        }
    }

    #[test]
    fn chat_wire_format() {
        let (url, rx) = serve_once(200, r#"{"choices":[{"message":{"role":"assistant","content":"GOOD"}}]}"#);
        let client = HttpChatClient::new(&url, "pllava-7b", Duration::from_secs(5));
        let out = client.complete(&req(vec![Frame::filled(2, 2, [9; 3])])).unwrap();
        assert_eq!(out, "GOOD");
        let sent = rx.recv().unwrap();
        assert_eq!(sent["model"], "pllava-7b");
        assert_eq!(sent["temperature"], 0);
        let content = sent["messages"][0]["content"].as_array().unwrap();
        assert_eq!(content[0]["text"], "Describe.");
        let url = content[1]["image_url"]["url"].as_str().unwrap();
        let png = base64::engine::general_purpose::STANDARD
            .decode(url.strip_prefix("data:image/png;base64,").unwrap())
            .unwrap();
        assert_eq!(&png[1..4], b"PNG");
    }

    #[test]
    fn text_only_request_has_no_images() {
        let client = HttpChatClient::new("http://unused", "m", Duration::from_secs(1));
        let body = client.request_body(&req(vec![]));
        assert_eq!(body["messages"][0]["content"].as_array().unwrap().len(), 1);
    }

    #[test]
    fn server_error_is_retryable() {
        let (url, _rx) = serve_once(503, "{}");
        let client = HttpChatClient::new(&url, "m", Duration::from_secs(5));
        assert!(client.complete(&req(vec![])).unwrap_err().is_retryable());
    }

    #[test]
    fn missing_content_is_protocol_error() {
        let (url, _rx) = serve_once(200, r#"{"choices":[]}"#);
        let client = HttpChatClient::new(&url, "m", Duration::from_secs(5));
        assert!(matches!(client.complete(&req(vec![])), Err(ClientError::Protocol(_))));
    }

    #[test]
    fn classifier_wire_format() {
        let (url, rx) = serve_once(200, r#"{"labels":["sports","people"],"scores":[0.9,0.1]}"#);
        let c = HttpClassifier::new(&url, Duration::from_secs(5));
        let ranked = c.rank("surfing", &["people", "sports"]).unwrap();
        assert_eq!(ranked[0], ("sports".to_string(), 0.9));
        let sent = rx.recv().unwrap();
        assert_eq!(sent["parameters"]["candidate_labels"][1], "sports");
    }
}
