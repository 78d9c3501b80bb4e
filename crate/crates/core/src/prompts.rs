//! Default prompt templates. Each can be overridden from the config file.

use crate::config::PipelineConfig;

/// Screening prompt for visual diversity and text overlays.
pub const DIVERSITY_AND_TEXT: &str = include_str!("../prompts/diversity_and_text.txt");
/// Screening prompt for content variation.
pub const CONTENT_VARIATION: &str = include_str!("../prompts/content_variation.txt");
/// Clip captioning prompt sent with the frame grid.
pub const CLIP_CAPTION: &str = include_str!("../prompts/clip_caption.txt");
/// Rewrite prompt for single-clip videos; `{caption}` is replaced by the raw caption.
pub const REFINE: &str = include_str!("../prompts/refine.txt");
/// Merge prompt for multi-clip videos; `{captions}` is replaced by the labeled clip captions.
pub const COMPOSE: &str = include_str!("../prompts/compose.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct Prompts {
    pub diversity_and_text: String,
    pub content_variation: String,
    pub clip_caption: String,
    pub refine: String,
    pub compose: String,
}

impl Default for Prompts {
    fn default() -> Self {
        Self {
            diversity_and_text: DIVERSITY_AND_TEXT.to_string(),
            content_variation: CONTENT_VARIATION.to_string(),
            clip_caption: CLIP_CAPTION.trim_end().to_string(),
            refine: REFINE.trim_end().to_string(),
            compose: COMPOSE.trim_end().to_string(),
        }
    }
}

impl Prompts {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        let d = Self::default();
        let pick = |o: &Option<String>, default: String| o.clone().unwrap_or(default);
        Self {
            diversity_and_text: pick(&cfg.prompt_diversity, d.diversity_and_text),
            content_variation: pick(&cfg.prompt_variation, d.content_variation),
            clip_caption: pick(&cfg.prompt_clip_caption, d.clip_caption),
            refine: pick(&cfg.prompt_refine, d.refine),
            compose: pick(&cfg.prompt_compose, d.compose),
        }
    }

    pub fn render_refine(&self, raw: &str) -> String {
        self.refine.replace("{caption}", raw)
    }

    pub fn render_compose(&self, raws: &[String]) -> String {
        let listed: Vec<String> = raws
            .iter()
            .enumerate()
            .map(|(i, c)| format!("Clip {}: {}", i + 1, c.trim()))
            .collect();
        self.compose.replace("{captions}", &listed.join("\n"))
    }
}
