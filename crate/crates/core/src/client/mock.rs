use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Deserialize;

use super::{ChatClient, ChatRequest, Classifier, ClientError, Purpose};

/// Canned answers for [`MockChatClient`].
///
/// `responses` keys are tried in order: the request digest, `"<video_id>:<purpose>"`,
/// `"*:<purpose>"`. `transport_failures` maps the same key forms to a number of
/// transport errors to raise before answering (`4294967295` = always fail).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    #[serde(default)]
    pub responses: HashMap<String, String>,
    #[serde(default)]
    pub transport_failures: HashMap<String, u32>,
}

impl MockFixture {
    pub fn load(path: &str) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }

    pub fn respond(mut self, key: impl Into<String>, text: impl Into<String>) -> Self {
        self.responses.insert(key.into(), text.into());
        self
    }

    pub fn fail(mut self, key: impl Into<String>, times: u32) -> Self {
        self.transport_failures.insert(key.into(), times);
        self
    }
}

/// Deterministic stand-in for every chat role.
///
/// Without a fixture entry it answers `GOOD` to screening prompts,
/// `CLIP[<digest prefix>]` to clip captioning, `R:<raw>` to refine and
/// `M:<c1>|<c2>|...` to compose.
#[derive(Debug, Default)]
pub struct MockChatClient {
    fixture: MockFixture,
    calls: AtomicUsize,
    failed: Mutex<HashMap<String, u32>>,
    log: Mutex<Vec<(String, Purpose)>>,
}

impl MockChatClient {
    pub fn new(fixture: MockFixture) -> Self {
        Self {
            fixture,
            ..Self::default()
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// `(video_id, purpose)` of every call, in call order.
    pub fn call_log(&self) -> Vec<(String, Purpose)> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn keys(req: &ChatRequest, digest: &str) -> [String; 3] {
        let purpose = req.context.purpose.as_str();
        [
            digest.to_string(),
            format!("{}:{purpose}", req.context.video_id),
            format!("*:{purpose}"),
        ]
    }
}

impl ChatClient for MockChatClient {
    fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.log
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push((req.context.video_id.clone(), req.context.purpose));
        let digest = req.digest();
        let keys = Self::keys(req, &digest);

        if let Some((key, &limit)) = keys
            .iter()
            .find_map(|k| self.fixture.transport_failures.get_key_value(k))
        {
            let mut failed = self.failed.lock().unwrap_or_else(|e| e.into_inner());
            let seen = failed.entry(key.clone()).or_insert(0);
            if *seen < limit {
                *seen += 1;
                return Err(ClientError::Transport(format!("scripted failure for {key}")));
            }
        }
        if let Some(text) = keys.iter().find_map(|k| self.fixture.responses.get(k)) {
            return Ok(text.clone());
        }
        let inputs = &req.context.inputs;
        Ok(match req.context.purpose {
            Purpose::DiversityAndText | Purpose::ContentVariation => "GOOD".to_string(),
            Purpose::ClipCaption => format!("CLIP[{}]", &digest[..12]),
            Purpose::Refine => format!("R:{}", inputs.first().map(String::as_str).unwrap_or("")),
            Purpose::Compose => format!("M:{}", inputs.join("|")),
        })
    }

    fn tag(&self) -> String {
        "mock".into()
    }
}

/// Keyword rules for [`MockClassifier`]: the first rule whose `contains`
/// appears (case-insensitively) in the text wins; otherwise `default`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockClassifier {
    #[serde(default)]
    pub rules: Vec<KeywordRule>,
    #[serde(default = "others")]
    pub default: String,
    /// Texts (exact) for which the classifier raises a transport error.
    #[serde(default)]
    pub fail_on: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct KeywordRule {
    pub contains: String,
    pub label: String,
}

fn others() -> String {
    "others".into()
}

impl Default for MockClassifier {
    fn default() -> Self {
        let rules = [
            ("surf", "sports"),
            ("football", "sports"),
            ("mountain", "scenery"),
            ("ocean", "scenery"),
            ("cook", "food"),
            ("dog", "animals"),
            ("cat ", "animals"),
            ("car", "transportation"),
            ("train", "transportation"),
            ("game", "gaming"),
            ("person", "people"),
            ("woman", "people"),
            ("man ", "people"),
        ]
        .into_iter()
        .map(|(c, l)| KeywordRule {
            contains: c.into(),
            label: l.into(),
        })
        .collect();
        Self {
            rules,
            default: others(),
            fail_on: Vec::new(),
        }
    }
}

impl MockClassifier {
    pub fn load(path: &str) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| e.to_string())
    }
}

impl Classifier for MockClassifier {
    fn rank(&self, text: &str, labels: &[&str]) -> Result<Vec<(String, f64)>, ClientError> {
        if self.fail_on.iter().any(|t| t == text) {
            return Err(ClientError::Transport("scripted classifier failure".into()));
        }
        let lower = text.to_lowercase();
        let top = self
            .rules
            .iter()
            .find(|r| lower.contains(&r.contains.to_lowercase()))
            .map(|r| r.label.clone())
            .unwrap_or_else(|| self.default.clone());
        let mut ranked = vec![(top.clone(), 1.0)];
        ranked.extend(labels.iter().filter(|l| **l != top).map(|l| (l.to_string(), 0.0)));
        Ok(ranked)
    }

    fn tag(&self) -> String {
        "mock-classifier".into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::RequestContext;

    fn req(video: &str, purpose: Purpose, inputs: &[&str]) -> ChatRequest {
        ChatRequest {
            prompt: "prompt".into(),
            images: vec![],
            context: RequestContext {
                video_id: video.into(),
                purpose,
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    #[test]
    fn default_contracts() {
        let m = MockChatClient::default();
        assert_eq!(m.complete(&req("v", Purpose::Refine, &["A. B."])).unwrap(), "R:A. B.");
        assert_eq!(m.complete(&req("v", Purpose::Compose, &["c1", "c2"])).unwrap(), "M:c1|c2");
        assert_eq!(m.complete(&req("v", Purpose::ContentVariation, &[])).unwrap(), "GOOD");
        let r = req("v", Purpose::ClipCaption, &[]);
        assert_eq!(m.complete(&r).unwrap(), format!("CLIP[{}]", &r.digest()[..12]));
        assert_eq!(m.calls(), 4);
    }

    #[test]
    fn key_precedence() {
        let r = req("v1", Purpose::ContentVariation, &[]);
        let m = MockChatClient::new(
            MockFixture::default()
                .respond("*:content_variation", "BAD")
                .respond("v1:content_variation", "GOOD")
                .respond(r.digest(), "Maybe"),
        );
        assert_eq!(m.complete(&r).unwrap(), "Maybe");
        assert_eq!(m.complete(&req("v1", Purpose::ContentVariation, &["x"])).unwrap(), "Maybe");
        let mut other = req("v2", Purpose::ContentVariation, &[]);
        other.prompt = "other prompt".into();
        assert_eq!(m.complete(&other).unwrap(), "BAD");
        other.context.video_id = "v1".into();
        assert_eq!(m.complete(&other).unwrap(), "GOOD");
    }

    #[test]
    fn scripted_failures_then_answer() {
        let m = MockChatClient::new(MockFixture::default().fail("v:refine", 2));
        let r = req("v", Purpose::Refine, &["x"]);
        assert!(m.complete(&r).is_err());
        assert!(m.complete(&r).is_err());
        assert_eq!(m.complete(&r).unwrap(), "R:x");
    }

    #[test]
    fn classifier_keyword_rules() {
        let c = MockClassifier::default();
        let ranked = c.rank("A man surfing a large wave", &["sports", "people"]).unwrap();
        assert_eq!(ranked[0].0, "sports");
    }
}
