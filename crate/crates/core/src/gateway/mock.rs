//! In-process scripted endpoint used by tests and offline dry runs.
//!
//! A fixture is an ordered table of `(prompt pattern → action)` rules; the
//! first rule whose regex matches the prompt answers it. A rule may carry a
//! script of actions consumed one per matching call, the last action
//! repeating once the script runs out.
//!
//! ```json
//! {"rules": [
//!   {"match": "Below is a candidate answer", "template": "What is $1?"},
//!   {"match": "flaky", "script": [{"fail": "server"}, {"reply": "ok"}]}
//! ],
//!  "fallback": {"fail": "client"}}
//! ```

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{CallError, FailureKind, SamplingParams, Transport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Server,
    Timeout,
    Transport,
    Malformed,
    Client,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MockAction {
    /// Literal completion, returned byte for byte.
    Reply { reply: String },
    /// Completion with `$1`/`${name}` expanded from the rule's captures.
    Template { template: String },
    Fail {
        fail: MockFailure,
        #[serde(default)]
        message: Option<String>,
    },
}

impl MockAction {
    pub fn reply(text: impl Into<String>) -> Self {
        MockAction::Reply { reply: text.into() }
    }
    pub fn fail(kind: MockFailure) -> Self {
        MockAction::Fail {
            fail: kind,
            message: None,
        }
    }
    pub fn fail_server() -> Self {
        Self::fail(MockFailure::Server)
    }
    pub fn fail_client() -> Self {
        Self::fail(MockFailure::Client)
    }
    pub fn fail_malformed() -> Self {
        Self::fail(MockFailure::Malformed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<MockAction>>,
    #[serde(default)]
    pub delay_ms: u64,
}

impl MockRule {
    pub fn reply(pattern: &str, reply: &str) -> Self {
        Self {
            pattern: pattern.into(),
            reply: Some(reply.into()),
            template: None,
            script: None,
            delay_ms: 0,
        }
    }

    pub fn template(pattern: &str, template: &str) -> Self {
        Self {
            template: Some(template.into()),
            reply: None,
            ..Self::reply(pattern, "")
        }
    }

    pub fn scripted(pattern: &str, script: Vec<MockAction>) -> Self {
        Self {
            script: Some(script),
            reply: None,
            ..Self::reply(pattern, "")
        }
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    fn actions(&self) -> Result<Vec<MockAction>> {
        let mut actions = Vec::new();
        let mut given = 0;
        if let Some(reply) = &self.reply {
            actions.push(MockAction::reply(reply.clone()));
            given += 1;
        }
        if let Some(template) = &self.template {
            actions.push(MockAction::Template {
                template: template.clone(),
            });
            given += 1;
        }
        if let Some(script) = &self.script {
            actions.extend(script.iter().cloned());
            given += 1;
        }
        if given != 1 || actions.is_empty() {
            return Err(Error::Config(format!(
                "mock rule `{}` needs exactly one non-empty reply, template or script",
                self.pattern
            )));
        }
        Ok(actions)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Answer for prompts no rule matches; a 404 client error when absent.
    #[serde(default)]
    pub fallback: Option<MockAction>,
}

impl MockScript {
    pub fn single(rule: MockRule) -> Self {
        Self {
            rules: vec![rule],
            fallback: None,
        }
    }

    pub fn always_reply(text: &str) -> Self {
        Self::single(MockRule::reply("", text))
    }
}

struct CompiledRule {
    regex: Regex,
    actions: Vec<MockAction>,
    delay: Duration,
    hits: AtomicUsize,
}

/// Scripted [`Transport`] that also records what it was asked.
pub struct MockTransport {
    rules: Vec<CompiledRule>,
    fallback: Option<MockAction>,
    calls: AtomicUsize,
    successes: AtomicUsize,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Result<Self> {
        let rules = script
            .rules
            .iter()
            .map(|rule| {
                let regex = Regex::new(&rule.pattern).map_err(|err| {
                    Error::Config(format!("mock rule pattern `{}`: {err}", rule.pattern))
                })?;
                Ok(CompiledRule {
                    regex,
                    actions: rule.actions()?,
                    delay: Duration::from_millis(rule.delay_ms),
                    hits: AtomicUsize::new(0),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            rules,
            fallback: script.fallback,
            calls: AtomicUsize::new(0),
            successes: AtomicUsize::new(0),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let script: MockScript = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::new(script)
    }

    /// Every completion request received, including scripted failures.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Completion requests answered with text.
    pub fn successes(&self) -> usize {
        self.successes.load(Ordering::SeqCst)
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn prompts(&self) -> Vec<String> {
        self.prompts.lock().unwrap().clone()
    }

    /// Number of received prompts matching `pattern`.
    pub fn calls_matching(&self, pattern: &str) -> usize {
        let regex = Regex::new(pattern).expect("valid pattern");
        self.prompts
            .lock()
            .unwrap()
            .iter()
            .filter(|p| regex.is_match(p))
            .count()
    }

    fn answer(&self, prompt: &str) -> Result<String, CallError> {
        let Some(rule) = self.rules.iter().find(|r| r.regex.is_match(prompt)) else {
            return match &self.fallback {
                Some(action) => run_action(action, None, prompt),
                None => Err(CallError::new(
                    FailureKind::Client(404),
                    "no mock rule matches the prompt",
                )),
            };
        };
        let hit = rule.hits.fetch_add(1, Ordering::SeqCst);
        let action = &rule.actions[hit.min(rule.actions.len() - 1)];
        if !rule.delay.is_zero() {
            std::thread::sleep(rule.delay);
        }
        run_action(action, Some(&rule.regex), prompt)
    }
}

fn run_action(action: &MockAction, regex: Option<&Regex>, prompt: &str) -> Result<String, CallError> {
    match action {
        MockAction::Reply { reply } => Ok(reply.clone()),
        MockAction::Template { template } => {
            let mut out = String::new();
            match regex.and_then(|r| r.captures(prompt)) {
                Some(caps) => caps.expand(template, &mut out),
                None => out.push_str(template),
            }
            Ok(out)
        }
        MockAction::Fail { fail, message } => {
            let message = message.clone().unwrap_or_else(|| "scripted failure".into());
            let kind = match fail {
                MockFailure::Server => FailureKind::Server(503),
                MockFailure::Timeout => FailureKind::Timeout,
                MockFailure::Transport => FailureKind::Transport,
                MockFailure::Malformed => FailureKind::Malformed,
                MockFailure::Client => FailureKind::Client(400),
            };
            Err(CallError::new(kind, message))
        }
    }
}

impl Transport for MockTransport {
    fn complete(&self, prompt: &str, _params: &SamplingParams) -> Result<String, CallError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let outcome = self.answer(prompt);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if outcome.is_ok() {
            self.successes.fetch_add(1, Ordering::SeqCst);
        }
        outcome
    }

    /// Deterministic 8-dimensional byte-class profile of each text.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, CallError> {
        Ok(texts
            .iter()
            .map(|text| {
                let mut v = vec![0.0; 8];
                for b in text.bytes() {
                    v[(b % 8) as usize] += 1.0;
                }
                let total: f64 = v.iter().sum::<f64>().max(1.0);
                v.iter_mut().for_each(|x| *x /= total);
                v
            })
            .collect())
    }

    fn count_tokens(&self, text: &str) -> Result<usize, CallError> {
        Ok(text.split_whitespace().count())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn complete(mock: &MockTransport, prompt: &str) -> Result<String, CallError> {
        mock.complete(prompt, &SamplingParams::default())
    }

    #[test]
    fn first_matching_rule_wins() {
        let mock = MockTransport::new(MockScript {
            rules: vec![MockRule::reply("alpha", "A"), MockRule::reply("a", "generic")],
            fallback: None,
        })
        .unwrap();
        assert_eq!(complete(&mock, "alpha beta").unwrap(), "A");
        assert_eq!(complete(&mock, "gamma").unwrap(), "generic");
        let err = complete(&mock, "xyz").unwrap_err();
        assert_eq!(err.kind, FailureKind::Client(404));
        assert_eq!(mock.calls(), 3);
        assert_eq!(mock.successes(), 2);
    }

    #[test]
    fn templates_expand_captures() {
        let mock = MockTransport::new(MockScript::single(MockRule::template(
            r"ITEM-(?P<n>\d+)",
            "What is item ${n}?",
        )))
        .unwrap();
        assert_eq!(complete(&mock, "see ITEM-042 here").unwrap(), "What is item 042?");
    }

    #[test]
    fn literal_replies_keep_dollar_signs() {
        let mock = MockTransport::new(MockScript::always_reply("costs $1")).unwrap();
        assert_eq!(complete(&mock, "x").unwrap(), "costs $1");
    }

    #[test]
    fn scripts_repeat_their_last_action() {
        let mock = MockTransport::new(MockScript::single(MockRule::scripted(
            "",
            vec![MockAction::fail_server(), MockAction::reply("up")],
        )))
        .unwrap();
        assert!(complete(&mock, "x").is_err());
        assert_eq!(complete(&mock, "x").unwrap(), "up");
        assert_eq!(complete(&mock, "x").unwrap(), "up");
    }

    #[test]
    fn fixture_json_parses() {
        let json = r#"{
            "rules": [
                {"match": "^score", "script": [{"fail": "timeout"}, {"reply": "Score: 5"}]},
                {"match": "(\\w+)$", "template": "last=$1", "delay_ms": 1}
            ],
            "fallback": {"fail": "client", "message": "nope"}
        }"#;
        let script: MockScript = serde_json::from_str(json).unwrap();
        let mock = MockTransport::new(script).unwrap();
        assert_eq!(complete(&mock, "score").unwrap_err().kind, FailureKind::Timeout);
        assert_eq!(complete(&mock, "score").unwrap(), "Score: 5");
        assert_eq!(complete(&mock, "the end").unwrap(), "last=end");
        assert_eq!(complete(&mock, "").unwrap_err().message, "nope");
    }

    #[test]
    fn rule_without_action_is_rejected() {
        let rule = MockRule {
            pattern: "x".into(),
            reply: None,
            template: None,
            script: None,
            delay_ms: 0,
        };
        assert!(MockTransport::new(MockScript::single(rule)).is_err());
        let bad = MockRule::reply("(", "x");
        assert!(MockTransport::new(MockScript::single(bad)).is_err());
    }
}
