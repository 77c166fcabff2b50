//! Prompt for an instruction-following multimodal model acting as the
//! verdict producer, and parsing of its `Real` / `Fake` answer.

use super::DetectorError;
use crate::corpus::Label;

const SYSTEM_MESSAGE: &str = "Task description: some rumormongers use images from other events as illustrations of the current news event to make multimodal misinformation. Given a news caption and a news image, you are responsible for judging whether the given image is wrongly used in a different news context. You will be presented with a caption, an image, visual evidence, and textual evidence. You should use the following step-by-step instructions to derive your judgment:

Step 1 - Make a decision based on inconsistency between the caption and the image.
Step 2 - Make a judgement according to the inconsistency between the image and the visual evidence.
Step 3 - Make a judgement according to the inconsistency between the caption and the textual evidence.
Step 4 - According to the previous steps, you will first think out loud about your eventual conclusion, enumerating reasons why the image does or does not match the give caption. After thinking out loud, you should output either 'Real' or 'Fake' depending on whether you think the image is faithful to the caption.";

/// Placeholder for the claim image in the query block; the caller attaches
/// the image itself through its model API.
pub const IMAGE_PLACEHOLDER: &str = "<image>";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmPrompt {
    pub system: String,
    pub query: String,
}

impl LlmPrompt {
    /// System message and query as a single text.
    pub fn render(&self) -> String {
        format!("{}\n\n{}", self.system, self.query)
    }
}

/// Fills the query block. Visual evidence is passed as captions of the
/// evidence images; empty evidence renders as an empty section.
pub fn build_llm_verdict_prompt(caption: &str, textual_evidence: &[&str], visual_evidence: &[&str]) -> LlmPrompt {
    let query = format!(
        "{IMAGE_PLACEHOLDER}\nCaption: {caption}\nVisual Evidence: {}\nTextual Evidence: {}\nYour judgement:",
        visual_evidence.join("\n"),
        textual_evidence.join("\n"),
    );
    LlmPrompt { system: SYSTEM_MESSAGE.to_string(), query }
}

/// Maps the model's answer to a label: the last standalone `Real` or `Fake`
/// token wins (the answer follows the reasoning). Anything else is an error
/// and the claim stays unresolved.
pub fn parse_llm_verdict(response: &str) -> Result<Label, DetectorError> {
    response
        .split(|c: char| !c.is_alphanumeric())
        .rev()
        .find_map(|token| match token {
            "Real" => Some(Label::True),
            "Fake" => Some(Label::False),
            _ => None,
        })
        .ok_or_else(|| DetectorError::UnparseableVerdict(response.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prompt_contains_every_step() {
        let p = build_llm_verdict_prompt("A flood in Paris", &["Rivers rose."], &["A flooded street."]);
        for step in [
            "Step 1 - Make a decision based on inconsistency between the caption and the image.",
            "Step 2 - Make a judgement according to the inconsistency between the image and the visual evidence.",
            "Step 3 - Make a judgement according to the inconsistency between the caption and the textual evidence.",
            "Step 4 - According to the previous steps, you will first think out loud about your eventual conclusion",
        ] {
            assert!(p.system.contains(step), "missing {step}");
        }
        assert!(p.system.contains("output either 'Real' or 'Fake'"));
        assert!(p.query.starts_with("<image>\nCaption: A flood in Paris\n"));
        assert!(p.query.contains("Textual Evidence: Rivers rose."));
        assert!(p.query.ends_with("Your judgement:"));
    }

    #[test]
    fn empty_evidence_sections() {
        let p = build_llm_verdict_prompt("c", &[], &[]);
        assert!(p.query.contains("Visual Evidence: \nTextual Evidence: \n"));
    }

    #[test]
    fn parses_answers() {
        assert_eq!(parse_llm_verdict("Real").unwrap(), Label::True);
        assert_eq!(parse_llm_verdict("Fake").unwrap(), Label::False);
        assert_eq!(parse_llm_verdict("It looks Real at first, but... Fake.").unwrap(), Label::False);
        assert!(matches!(parse_llm_verdict("maybe"), Err(DetectorError::UnparseableVerdict(_))));
        assert!(parse_llm_verdict("Really fake").is_err());
    }
}
