use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

/// Backtranslation prompt for the backward (response → instruction) model.
pub const BACKTRANSLATION_TEMPLATE: &str = "[INST] Below is a candidate answer to a question or instruction from an user. Write the most likely question to which the text below would be a great answer.

<response>

Answer in the style of an AI Assistant. [/INST]";

/// Response rewriting prompt for the aligned model.
pub const REWRITE_TEMPLATE: &str = "[INST] Given the draft response to the provided question below, rewrite the draft to improve it, so it is a high quality response to the given question.

Draft Response: <response>

Question: <instruction>

Given the above question, rewrite the draft response to be an improvement over the draft response. It should be as similar as possible, copying text where possible, while making the flow more clear, useful, relevant and providing a direct answer to the question. It should be written to be impeccably tailored to the user\u{2019}s question as if written by an AI Assistant, without extraneous information, reflecting expert knowledge, and demonstrating a high-quality, engaging, and insightful answer. Try not to add new facts that are not already in the draft response. Return the rewritten response between [RES] and [/RES]. [/INST]";

/// Default 5-point additive scoring rubric for the forward model.
pub const SCORING_TEMPLATE: &str = "[INST] Below is an instruction from a user and a candidate response. Rate how well the response serves as a high-quality answer to the instruction, using an additive 5-point scale:
- Add 1 point if the response is relevant to the instruction and offers some related information, even if it is incomplete.
- Add a 2nd point if it addresses a substantial part of the instruction without fully resolving it.
- Add a 3rd point if it answers the basic elements of the instruction in a useful way.
- Add a 4th point if it is complete, well organized and written from the perspective of a helpful AI Assistant.
- Add a 5th point if it is an expert, accurate and focused answer with no irrelevant or promotional content.

Instruction: <instruction>

Response: <response>

Justify the total briefly. Conclude with the line: Score: <1-5> [/INST]";

fn placeholder_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<([a-z_]+)>").unwrap())
}

/// A prompt body with `<name>` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub body: String,
}

impl PromptTemplate {
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            body: body.into(),
        }
    }

    pub fn from_file(name: impl Into<String>, path: &Path) -> Result<Self> {
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(name, body))
    }

    pub fn backtranslation() -> Self {
        Self::new("backtranslation", BACKTRANSLATION_TEMPLATE)
    }

    pub fn scoring() -> Self {
        Self::new("scoring", SCORING_TEMPLATE)
    }

    pub fn rewrite() -> Self {
        Self::new("rewrite", REWRITE_TEMPLATE)
    }

    pub fn placeholders(&self) -> Vec<&str> {
        placeholder_regex()
            .captures_iter(&self.body)
            .map(|c| c.get(1).unwrap().as_str())
            .collect()
    }

    /// Substitutes every placeholder in one left-to-right pass. Substituted
    /// text is never rescanned, so values may contain placeholder-like text.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String> {
        let mut out = String::with_capacity(self.body.len() + values.iter().map(|(_, v)| v.len()).sum::<usize>());
        let mut last = 0;
        for caps in placeholder_regex().captures_iter(&self.body) {
            let whole = caps.get(0).unwrap();
            let key = caps.get(1).unwrap().as_str();
            let value = values
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Template {
                    template: self.name.clone(),
                    reason: format!("placeholder <{key}> has no value"),
                })?;
            out.push_str(&self.body[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.body[last..]);
        Ok(out)
    }
}

/// The three stage prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub backtranslation: PromptTemplate,
    pub scoring: PromptTemplate,
    pub rewrite: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        Self {
            backtranslation: PromptTemplate::backtranslation(),
            scoring: PromptTemplate::scoring(),
            rewrite: PromptTemplate::rewrite(),
        }
    }
}

fn require(what: &str, value: &str) -> Result<()> {
    if value.trim().is_empty() {
        Err(Error::Precondition(format!("{what} must be non-empty")))
    } else {
        Ok(())
    }
}

impl PromptSet {
    pub fn backtranslation_prompt(&self, response: &str) -> Result<String> {
        require("response text", response)?;
        self.backtranslation.render(&[("response", response)])
    }

    pub fn scoring_prompt(&self, instruction: &str, response: &str) -> Result<String> {
        require("instruction", instruction)?;
        require("response", response)?;
        self.scoring
            .render(&[("instruction", instruction), ("response", response)])
    }

    pub fn rewrite_prompt(&self, instruction: &str, draft: &str) -> Result<String> {
        require("instruction", instruction)?;
        require("draft response", draft)?;
        self.rewrite
            .render(&[("instruction", instruction), ("response", draft)])
    }
}

pub fn build_backtranslation_prompt(response_text: &str) -> Result<String> {
    PromptSet::default().backtranslation_prompt(response_text)
}

pub fn build_scoring_prompt(instruction: &str, response: &str) -> Result<String> {
    PromptSet::default().scoring_prompt(instruction, response)
}

pub fn build_rewrite_prompt(instruction: &str, draft_response: &str) -> Result<String> {
    PromptSet::default().rewrite_prompt(instruction, draft_response)
}
