//! Turns raw model output into a display label, a refusal, or unparsed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::normalize_label;
use crate::guidelines::Guideline;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "label", rename_all = "snake_case")]
pub enum Outcome {
    Label(String),
    Refusal,
    Unparsed,
}

impl Outcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            Outcome::Label(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rule {
    Exact,
    UniqueSubstring,
    RefusalPhrase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extraction {
    pub outcome: Outcome,
    /// Character range of the match within the normalized output.
    pub matched_span: Option<(usize, usize)>,
    pub rule: Option<Rule>,
}

/// Normalized refusal phrases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefusalPhrases(Vec<String>);

impl RefusalPhrases {
    pub fn new<I, S>(phrases: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        RefusalPhrases(
            phrases
                .into_iter()
                .map(|p| normalize_label(p.as_ref()))
                .filter(|p| !p.is_empty())
                .collect(),
        )
    }

    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn phrases(&self) -> &[String] {
        &self.0
    }
}

impl Default for RefusalPhrases {
    fn default() -> Self {
        Self::parse(crate::assets::REFUSAL_PHRASES)
    }
}

/// Lowercase, collapse whitespace, trim, strip trailing punctuation.
pub fn normalize_output(raw: &str) -> String {
    let collapsed = normalize_label(raw);
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || "”’»…".contains(c))
        .trim()
        .to_string()
}

pub fn detect_refusal(raw: &str, phrases: &RefusalPhrases) -> bool {
    let norm = normalize_output(raw);
    !norm.is_empty() && phrases.0.iter().any(|p| norm.contains(p.as_str()))
}

fn char_span(haystack: &str, byte_start: usize, needle: &str) -> (usize, usize) {
    let start = haystack[..byte_start].chars().count();
    (start, start + needle.chars().count())
}

/// Exact match, then a unique label substring, then refusal phrases.
pub fn extract_label(raw: &str, g: &Guideline, phrases: &RefusalPhrases) -> Extraction {
    let norm = normalize_output(raw);
    let labels: Vec<String> = g.display_labels().iter().map(|l| normalize_label(l)).collect();

    if let Some(pos) = labels.iter().position(|l| *l == norm) {
        return Extraction {
            outcome: Outcome::Label(g.display_labels()[pos].clone()),
            matched_span: Some((0, norm.chars().count())),
            rule: Some(Rule::Exact),
        };
    }

    let hits: Vec<(usize, usize)> = labels
        .iter()
        .enumerate()
        .filter_map(|(i, l)| norm.find(l.as_str()).map(|at| (i, at)))
        .collect();
    if let [(pos, at)] = hits[..] {
        return Extraction {
            outcome: Outcome::Label(g.display_labels()[pos].clone()),
            matched_span: Some(char_span(&norm, at, &labels[pos])),
            rule: Some(Rule::UniqueSubstring),
        };
    }

    if detect_refusal(raw, phrases) {
        return Extraction {
            outcome: Outcome::Refusal,
            matched_span: None,
            rule: Some(Rule::RefusalPhrase),
        };
    }
    Extraction {
        outcome: Outcome::Unparsed,
        matched_span: None,
        rule: None,
    }
}
