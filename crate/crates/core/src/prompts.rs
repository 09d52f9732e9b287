//! Guideline and task prompt rendering, wrapped per model family.
//!
//! All text uses LF line endings. Templates live under `assets/templates/`
//! and are filled in a single pass, so placeholder-looking text inside a
//! sentence or definition is never expanded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assets;
use crate::concepts::{ConceptScheme, SchemeError};
use crate::guidelines::Guideline;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("sentence text is empty")]
    EmptySentence,
    #[error("unknown model family {0:?} (expected llama2-chat, falcon-chat or chat-api)")]
    UnknownFamily(String),
    #[error("guideline {guideline} was built for scheme {expected:?}, got {found:?}")]
    SchemeMismatch {
        guideline: String,
        expected: String,
        found: String,
    },
    #[error(transparent)]
    Scheme(#[from] SchemeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "llama2-chat")]
    Llama2Chat,
    #[serde(rename = "falcon-chat")]
    FalconChat,
    #[serde(rename = "chat-api")]
    ChatApi,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 3] = [
        ModelFamily::Llama2Chat,
        ModelFamily::FalconChat,
        ModelFamily::ChatApi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Llama2Chat => "llama2-chat",
            ModelFamily::FalconChat => "falcon-chat",
            ModelFamily::ChatApi => "chat-api",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelFamily::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| PromptError::UnknownFamily(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// What is sent to a model: one text prompt, or chat messages.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Text(String),
    Messages(Vec<ChatMessage>),
}

impl Payload {
    /// Audit form: the text itself, or pretty JSON of the messages.
    pub fn to_audit_text(&self) -> String {
        match self {
            Payload::Text(t) => t.clone(),
            Payload::Messages(m) => {
                let mut s = serde_json::to_string_pretty(m).expect("messages serialize");
                s.push('\n');
                s
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub guideline_text: String,
    pub task_text: String,
    pub wrapped: Payload,
    pub model_family: ModelFamily,
}

/// Single-pass `{name}` substitution. Unknown placeholders are left as-is.
pub(crate) fn fill(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let name = &after[..close];
            values
                .iter()
                .find(|(k, _)| *k == name)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Header line, then `- {label}: {definition}` per display position.
/// Empty-definition variants keep the colon: `- {label}:`.
pub fn render_guideline_prompt(
    g: &Guideline,
    scheme: &ConceptScheme,
) -> Result<String, PromptError> {
    if g.scheme() != scheme.domain_name || g.labels() != scheme.labels.as_slice() {
        return Err(PromptError::SchemeMismatch {
            guideline: g.id().to_string(),
            expected: g.scheme().to_string(),
            found: scheme.domain_name.clone(),
        });
    }
    let definitions = scheme.definitions(g.def_set())?;
    let mut out = String::from(assets::GUIDELINE_HEADER);
    for (pos, label) in g.display_labels().iter().enumerate() {
        out.push_str("\n- ");
        out.push_str(label);
        out.push(':');
        if !g.variant().has_empty_definitions() {
            out.push(' ');
            out.push_str(&definitions[g.definition_index(pos)]);
        }
    }
    Ok(out)
}

pub fn render_task_prompt(sentence: &str, domain_token: &str) -> Result<String, PromptError> {
    if sentence.trim().is_empty() {
        return Err(PromptError::EmptySentence);
    }
    let domain_prefix = if domain_token.is_empty() {
        String::new()
    } else {
        format!("{domain_token} ")
    };
    Ok(fill(
        assets::TASK_TEMPLATE,
        &[("sentence", sentence), ("domain_prefix", &domain_prefix)],
    ))
}

/// Wraps with no falcon instruction text.
pub fn wrap(family: ModelFamily, prompt_g: &str, prompt_t: &str) -> Payload {
    wrap_with_instruction(family, None, prompt_g, prompt_t)
}

pub fn wrap_with_instruction(
    family: ModelFamily,
    falcon_instruction: Option<&str>,
    prompt_g: &str,
    prompt_t: &str,
) -> Payload {
    let template = match family {
        ModelFamily::Llama2Chat => assets::LLAMA2_TEMPLATE,
        ModelFamily::FalconChat => assets::FALCON_TEMPLATE,
        ModelFamily::ChatApi => assets::CHAT_API_TEMPLATE,
    };
    let instruction_prefix = match falcon_instruction {
        Some(i) if !i.is_empty() => format!("{i} "),
        _ => String::new(),
    };
    let text = fill(
        template,
        &[
            ("prompt_g", prompt_g),
            ("prompt_t", prompt_t),
            ("instruction_prefix", &instruction_prefix),
        ],
    );
    match family {
        ModelFamily::ChatApi => Payload::Messages(vec![ChatMessage::user(text)]),
        _ => Payload::Text(text),
    }
}

/// Renders both prompts for one sentence and wraps them for `family`.
pub fn build_prompt(
    g: &Guideline,
    scheme: &ConceptScheme,
    sentence: &str,
    family: ModelFamily,
) -> Result<PromptBundle, PromptError> {
    let guideline_text = render_guideline_prompt(g, scheme)?;
    let task_text = render_task_prompt(sentence, &scheme.domain_prompt_token)?;
    let wrapped = wrap_with_instruction(
        family,
        scheme.falcon_instruction.as_deref(),
        &guideline_text,
        &task_text,
    );
    Ok(PromptBundle {
        guideline_text,
        task_text,
        wrapped,
        model_family: family,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidelines::{counterfactual, empty_definitions, factual};
    use crate::permutation::Permutation;

    const CLASSIFY: &str = "Classify the text below into one of the categories listed above. Be concise and write only the category name.";

    #[test]
    fn factual_scientific_guideline() {
        let s = assets::scientific_scheme();
        let text = render_guideline_prompt(&factual(&s, "model-generated").unwrap(), &s).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "Consider the following concept categories:");
        assert!(lines[1].starts_with("- Background: A sentence that provides context,"));
        assert_eq!(lines.len(), 6);
    }

    #[test]
    fn empty_definition_lines_keep_colon() {
        let s = assets::financial_scheme();
        let g = empty_definitions(&factual(&s, "model-generated").unwrap()).unwrap();
        let text = render_guideline_prompt(&g, &s).unwrap();
        let expected = "Consider the following concept categories:\n- Financial:\n- Manufactured:\n- Intellectual:\n- Human:\n- Social and relationship:\n- Natural:";
        assert_eq!(text, expected);
    }

    #[test]
    fn counterfactual_swap_moves_definition() {
        let s = assets::scientific_scheme();
        let g = counterfactual(&s, "model-generated", Permutation::swap(5, 3, 4)).unwrap();
        let text = render_guideline_prompt(&g, &s).unwrap();
        assert!(text.contains("\n- Result: A sentence that summarizes the key takeaways,"));
        assert!(text.contains("\n- Conclusion: A sentence that presents the empirical findings,"));
    }

    #[test]
    fn task_prompt_domain_token() {
        let sci = render_task_prompt("Some sentence.", "Scientific").unwrap();
        assert_eq!(
            sci,
            format!("{CLASSIFY}\n\nText: Some sentence.\nScientific Concept:")
        );
        let fin = render_task_prompt("Some sentence.", "").unwrap();
        assert_eq!(fin.lines().last().unwrap(), "Concept:");
        assert!(matches!(
            render_task_prompt("", "x"),
            Err(PromptError::EmptySentence)
        ));
    }

    #[test]
    fn wrappers() {
        match wrap(ModelFamily::Llama2Chat, "G", "T") {
            Payload::Text(t) => assert_eq!(t, "[INST] G\n\nT [/INST]"),
            other => panic!("{other:?}"),
        }
        match wrap(ModelFamily::FalconChat, "G", "T") {
            Payload::Text(t) => assert_eq!(t, "User: G\n\nT\nFalcon:"),
            other => panic!("{other:?}"),
        }
        match wrap_with_instruction(ModelFamily::FalconChat, Some("Be brief."), "G", "T") {
            Payload::Text(t) => assert_eq!(t, "User: Be brief. G\n\nT\nFalcon:"),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            wrap(ModelFamily::ChatApi, "G", "T"),
            Payload::Messages(vec![ChatMessage::user("G\n\nT")])
        );
        assert!(matches!(
            "mistral".parse::<ModelFamily>(),
            Err(PromptError::UnknownFamily(_))
        ));
    }

    #[test]
    fn placeholders_in_input_are_not_expanded() {
        let t = render_task_prompt("a {domain_prefix} b {sentence}", "X").unwrap();
        assert!(t.contains("Text: a {domain_prefix} b {sentence}\nX Concept:"));
        assert_eq!(fill("{a}{b}{", &[("a", "{b}"), ("b", "1")]), "{b}1{");
    }

    #[test]
    fn scheme_mismatch_is_an_error() {
        let s = assets::scientific_scheme();
        let g = factual(&s, "model-generated").unwrap();
        assert!(matches!(
            render_guideline_prompt(&g, &assets::financial_scheme()),
            Err(PromptError::SchemeMismatch { .. })
        ));
    }

    #[test]
    fn distinct_guidelines_render_distinctly() {
        let s = assets::scientific_scheme();
        let mut seen = std::collections::HashSet::new();
        for k in [2, 3, 4, 5] {
            for p in crate::guidelines::enumerate_by_degree(&s, k).unwrap() {
                let g = counterfactual(&s, "model-generated", p).unwrap();
                assert!(seen.insert(render_guideline_prompt(&g, &s).unwrap()));
            }
        }
        let f = factual(&s, "model-generated").unwrap();
        assert!(seen.insert(render_guideline_prompt(&f, &s).unwrap()));
        assert!(seen.insert(render_guideline_prompt(&empty_definitions(&f).unwrap(), &s).unwrap()));
    }
}
