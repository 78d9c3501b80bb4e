//! Multimodal-LLM quality screening over uniformly sampled frames.

use thiserror::Error;

use crate::client::{complete_with_retry, ChatRequest, Clients, ClientError, Purpose, RequestContext};
use crate::config::PipelineConfig;
use crate::frame::{sample_uniform, FrameSequence};
use crate::manifest::{FilterVerdict, Stage};
use crate::prompts::Prompts;

#[derive(Debug, Error, PartialEq)]
pub enum SemanticError {
    #[error("unparseable response: {0:?}")]
    Unparseable(String),
    #[error(transparent)]
    Client(#[from] ClientError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgement {
    Good,
    Bad,
}

impl Judgement {
    pub fn as_str(self) -> &'static str {
        match self {
            Judgement::Good => "GOOD",
            Judgement::Bad => "BAD",
        }
    }
}

/// The two screening questions, asked in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemanticCriterion {
    DiversityAndText,
    ContentVariation,
}

impl SemanticCriterion {
    pub const ORDER: [SemanticCriterion; 2] = [SemanticCriterion::DiversityAndText, SemanticCriterion::ContentVariation];

    pub fn name(self) -> &'static str {
        self.purpose().as_str()
    }

    pub fn purpose(self) -> Purpose {
        match self {
            SemanticCriterion::DiversityAndText => Purpose::DiversityAndText,
            SemanticCriterion::ContentVariation => Purpose::ContentVariation,
        }
    }

    pub fn prompt(self, prompts: &Prompts) -> &str {
        match self {
            SemanticCriterion::DiversityAndText => &prompts.diversity_and_text,
            SemanticCriterion::ContentVariation => &prompts.content_variation,
        }
    }
}

/// Finds the single uppercase whole-word verdict token in a reply.
///
/// Lowercase or mixed-case spellings do not count. A reply naming both tokens,
/// or neither, is unparseable.
pub fn parse_good_bad(response: &str) -> Result<Judgement, SemanticError> {
    let mut found: Option<Judgement> = None;
    for word in response.split(|c: char| !c.is_alphanumeric()) {
        let j = match word {
            "GOOD" => Judgement::Good,
            "BAD" => Judgement::Bad,
            _ => continue,
        };
        match found {
            Some(prev) if prev != j => return Err(SemanticError::Unparseable(response.to_string())),
            _ => found = Some(j),
        }
    }
    found.ok_or_else(|| SemanticError::Unparseable(response.to_string()))
}

/// Asks each criterion in order, stopping at the first BAD.
/// Any client or parse failure yields an error verdict, never a pass.
pub fn semantic_verdict(
    video_id: &str,
    seq: &FrameSequence,
    clients: &Clients,
    prompts: &Prompts,
    cfg: &PipelineConfig,
) -> FilterVerdict {
    let frames = match sample_uniform(seq, cfg.mllm_frames) {
        Ok(f) => f,
        Err(e) => return FilterVerdict::error(Stage::Semantic, e.to_string()),
    };
    let mut answers = Vec::new();
    for criterion in SemanticCriterion::ORDER {
        let req = ChatRequest {
            prompt: criterion.prompt(prompts).to_string(),
            images: frames.clone(),
            context: RequestContext {
                video_id: video_id.to_string(),
                purpose: criterion.purpose(),
                inputs: Vec::new(),
            },
        };
        let judgement = complete_with_retry(clients.mllm.as_ref(), &req, clients.retry, &clients.budget)
            .map_err(SemanticError::from)
            .and_then(|text| parse_good_bad(&text));
        match judgement {
            Ok(j) => answers.push(format!("{}: {}", criterion.name(), j.as_str())),
            Err(e) => {
                answers.push(format!("{}: {e}", criterion.name()));
                return FilterVerdict::error(Stage::Semantic, answers.join("; "));
            }
        }
        if judgement == Ok(Judgement::Bad) {
            return FilterVerdict::reject(Stage::Semantic, None, answers.join("; "));
        }
    }
    FilterVerdict::pass(Stage::Semantic, None, answers.join("; "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{MockChatClient, MockClassifier, MockFixture, RetryPolicy};
    use crate::frame::Frame;
    use crate::manifest::Outcome;
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn parses_tokens() {
        assert_eq!(parse_good_bad("GOOD"), Ok(Judgement::Good));
        assert_eq!(parse_good_bad("The video is static. BAD"), Ok(Judgement::Bad));
        assert_eq!(parse_good_bad("\u{201c}GOOD\u{201d}. GOOD."), Ok(Judgement::Good));
        assert!(parse_good_bad("good").is_err());
        assert!(parse_good_bad("GOODNESS").is_err());
        assert!(parse_good_bad("GOOD or BAD").is_err());
        assert!(parse_good_bad("Maybe").is_err());
    }

    fn seq() -> FrameSequence {
        let frames = (0..40).map(|i| Frame::filled(8, 8, [i as u8; 3])).collect();
        FrameSequence::new(8, 8, 4.0, frames).unwrap()
    }

    fn run(fixture: MockFixture) -> (FilterVerdict, Arc<MockChatClient>) {
        let mock = Arc::new(MockChatClient::new(fixture));
        let clients = Clients::uniform(
            mock.clone(),
            Arc::new(MockClassifier::default()),
            RetryPolicy {
                retries: 3,
                base_delay: Duration::from_millis(1),
            },
        );
        let v = semantic_verdict("vid", &seq(), &clients, &Prompts::default(), &PipelineConfig::default());
        (v, mock)
    }

    #[test]
    fn both_good_passes() {
        let (v, mock) = run(MockFixture::default());
        assert_eq!(v.outcome, Outcome::Pass);
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn second_bad_rejects() {
        let (v, _) = run(MockFixture::default().respond("vid:content_variation", "BAD"));
        assert_eq!(v.outcome, Outcome::Reject);
        assert!(v.detail.ends_with("content_variation: BAD"), "{}", v.detail);
    }

    #[test]
    fn first_bad_short_circuits() {
        let (v, mock) = run(MockFixture::default().respond("vid:diversity_and_text", "BAD"));
        assert_eq!(v.outcome, Outcome::Reject);
        assert_eq!(mock.calls(), 1);
        assert_eq!(mock.call_log()[0].1, Purpose::DiversityAndText);
    }

    #[test]
    fn unparseable_is_error() {
        let (v, _) = run(MockFixture::default().respond("*:diversity_and_text", "Maybe"));
        assert_eq!(v.outcome, Outcome::Error);
    }

    #[test]
    fn persistent_transport_failure_is_error_after_retries() {
        let (v, mock) = run(MockFixture::default().fail("vid:diversity_and_text", u32::MAX));
        assert_eq!(v.outcome, Outcome::Error);
        assert_eq!(mock.calls(), 4);
    }

    #[test]
    fn sends_configured_frame_count() {
        struct Count(std::sync::Mutex<Vec<usize>>);
        impl crate::client::ChatClient for Count {
            fn complete(&self, req: &ChatRequest) -> Result<String, ClientError> {
                self.0.lock().unwrap().push(req.images.len());
                Ok("GOOD".into())
            }
            fn tag(&self) -> String {
                "count".into()
            }
        }
        let counter = Arc::new(Count(Default::default()));
        let clients = Clients::uniform(counter.clone(), Arc::new(MockClassifier::default()), RetryPolicy {
            retries: 0,
            base_delay: Duration::ZERO,
        });
        semantic_verdict("v", &seq(), &clients, &Prompts::default(), &PipelineConfig::default());
        assert_eq!(*counter.0.lock().unwrap(), vec![8, 8]);
    }
}
