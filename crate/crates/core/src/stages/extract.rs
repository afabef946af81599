//! Parsing of scoring and rewriting completions.

use std::sync::OnceLock;

use regex::Regex;

const RES_OPEN: &str = "[RES]";
const RES_CLOSE: &str = "[/RES]";

struct ScoreRules {
    labelled: Regex,
    fraction: Regex,
    leading: Regex,
}

fn score_rules() -> &'static ScoreRules {
    static RULES: OnceLock<ScoreRules> = OnceLock::new();
    RULES.get_or_init(|| ScoreRules {
        // E1: "score", optional punctuation/space, then a lone digit 1-5.
        labelled: Regex::new(r"(?i)score[\p{P}\s]*([1-5])(?:[^0-9]|$)").unwrap(),
        // E2: a lone digit 1-5, optional space, then "/5" or "out of 5".
        fraction: Regex::new(r"(?i)(?:^|[^0-9])([1-5])\s*(?:/\s*5|out\s+of\s+5)(?:[^0-9]|$)").unwrap(),
        // E3: the completion opens with a standalone digit 1-5.
        leading: Regex::new(r"^([1-5])(?:$|[^\w.,]|[.,](?:[^0-9]|$))").unwrap(),
    })
}

/// Extracts a 1–5 score; the first rule that matches decides. `None` marks
/// an invalid completion.
pub fn extract_score(completion: &str) -> Option<u8> {
    let rules = score_rules();
    let trimmed = completion.trim();
    [&rules.labelled, &rules.fraction, &rules.leading]
        .into_iter()
        .find_map(|rule| rule.captures(trimmed))
        .and_then(|caps| caps.get(1))
        .and_then(|digit| digit.as_str().parse().ok())
}

/// Text between the first `[RES]` and the next `[/RES]`, or everything after
/// `[RES]` when the block is never closed; trimmed.
pub fn extract_rewrite(completion: &str) -> Option<String> {
    let start = completion.find(RES_OPEN)? + RES_OPEN.len();
    let rest = &completion[start..];
    let body = match rest.find(RES_CLOSE) {
        Some(end) => &rest[..end],
        None => rest,
    };
    Some(body.trim().to_string())
}
