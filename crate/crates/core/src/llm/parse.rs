//! Turning a free-text negotiation message into a protocol action.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LlmError;
use crate::domain::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Accept,
    Counter,
    Pass,
}

/// A message reduced to what the pricing engine may see.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub intent: Intent,
    /// Always present for `Counter`; the last amount mentioned otherwise.
    pub rate: Option<Rate>,
}

impl ParsedTurn {
    pub fn counter(rate: f64) -> Self {
        ParsedTurn { intent: Intent::Counter, rate: Some(Rate::new(rate).expect("non-negative rate")) }
    }
}

static AMOUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\$\s?(\d{1,3}(?:,\d{3})+|\d+)(?:\.(\d{1,2}))?").expect("valid amount pattern"));

static ACCEPT: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\b(?:(?:i|we)(?:'ll|\s+will|\s+can|\s+do)?\s+accept|accepted|deal)\b").expect("valid accept pattern")
});

static PASS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\bpass\b").expect("valid pass pattern"));

// Words shortly before a keyword in the same clause flip its meaning.
const NEGATIONS: [&str; 11] =
    ["no", "not", "never", "cannot", "can't", "cant", "won't", "wont", "don't", "dont", "without"];

fn normalize(text: &str) -> String {
    text.replace(['\u{2019}', '\u{2018}'], "'").to_lowercase()
}

// Any of these earlier in the sentence makes the keyword hypothetical.
const CONDITIONALS: [&str; 3] = ["if", "unless", "once"];

fn words(text: &str) -> Vec<&str> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\'')).filter(|w| !w.is_empty()).collect()
}

/// Whether the keyword at `start` is negated within its clause or made
/// conditional anywhere earlier in its sentence.
fn negated(text: &str, start: usize) -> bool {
    let head = &text[..start];
    let sentence = words(&head[head.rfind(['.', '!', '?', ';', '\n']).map_or(0, |i| i + 1)..]);
    let clause = words(&head[head.rfind(['.', '!', '?', ';', '\n', ',']).map_or(0, |i| i + 1)..]);
    let window = &clause[clause.len().saturating_sub(5)..];
    window.iter().any(|w| NEGATIONS.contains(w) || w.ends_with("n't"))
        || sentence.iter().any(|w| CONDITIONALS.contains(w))
}

fn has_marker(re: &Regex, text: &str) -> bool {
    re.find_iter(text).any(|m| !negated(text, m.start()))
}

/// Every well-formed dollar amount in `text`, in order.
pub fn dollar_amounts(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    for caps in AMOUNT.captures_iter(text) {
        let whole = caps.get(0).expect("match");
        let rest = &text[whole.end()..];
        let mut next = rest.chars();
        let malformed = match next.next() {
            Some(c) if c.is_ascii_digit() => true,
            Some(',') | Some('.') => next.next().is_some_and(|c| c.is_ascii_digit()),
            _ => false,
        };
        if malformed {
            continue;
        }
        let int: f64 = caps[1].replace(',', "").parse().expect("digits");
        let cents = caps.get(2).map_or(0.0, |c| {
            let digits = c.as_str();
            let v: f64 = digits.parse().expect("digits");
            if digits.len() == 1 {
                v * 10.0
            } else {
                v
            }
        });
        out.push(int + cents / 100.0);
    }
    out
}

/// Classifies a message. Accept beats Pass beats Counter; a Counter takes
/// the last well-formed dollar amount.
pub fn parse_turn(text: &str) -> Result<ParsedTurn, LlmError> {
    let lowered = normalize(text);
    let last = dollar_amounts(text).last().copied();
    let rate = last.map(|v| Rate::new(v).expect("parsed amounts are non-negative"));
    if has_marker(&ACCEPT, &lowered) {
        return Ok(ParsedTurn { intent: Intent::Accept, rate });
    }
    if has_marker(&PASS, &lowered) {
        return Ok(ParsedTurn { intent: Intent::Pass, rate: None });
    }
    match rate {
        Some(_) => Ok(ParsedTurn { intent: Intent::Counter, rate }),
        None => Err(LlmError::Unparseable(text.chars().take(200).collect())),
    }
}
