//! Concept schemes: ordered labels plus one or more aligned definition sets.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the definition set every shipped scheme carries.
pub const MODEL_GENERATED: &str = "model-generated";

#[derive(Debug, Error)]
pub enum SchemeError {
    #[error("scheme file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scheme record: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("scheme needs ≥2 labels (field `labels` has {0})")]
    TooFewLabels(usize),
    #[error("duplicate label {0:?} in field `labels`")]
    DuplicateLabel(String),
    #[error("empty label at index {0} in field `labels`")]
    EmptyLabel(usize),
    #[error("definition set length mismatch: `definition_sets.{set}` has {found} entries for {expected} labels")]
    MisalignedDefinitions {
        set: String,
        expected: usize,
        found: usize,
    },
    #[error("field `definition_sets` is empty")]
    NoDefinitionSets,
    #[error("alias {alias:?} in field `aliases` points at unknown label {target:?}")]
    DanglingAlias { alias: String, target: String },
    #[error("unknown definition set {0:?}")]
    UnknownDefinitionSet(String),
}

/// One invariant violation found by [`validate_scheme`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptScheme {
    pub domain_name: String,
    /// Text placed before `Concept:` in the task prompt; empty for none.
    pub domain_prompt_token: String,
    pub labels: Vec<String>,
    /// Set name to definitions aligned index-wise with `labels`.
    pub definition_sets: BTreeMap<String, Vec<String>>,
    /// Dataset-side label names mapped onto scheme labels.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub aliases: BTreeMap<String, String>,
    /// Text placed before the guideline in the falcon-chat wrapper.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub falcon_instruction: Option<String>,
}

/// Lowercase, trim and collapse internal whitespace.
pub fn normalize_label(label: &str) -> String {
    label
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl ConceptScheme {
    pub fn from_json(bytes: &[u8]) -> Result<Self, SchemeError> {
        let scheme: ConceptScheme = serde_json::from_slice(bytes)?;
        scheme.check()?;
        Ok(scheme)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn definitions(&self, set: &str) -> Result<&[String], SchemeError> {
        self.definition_sets
            .get(set)
            .map(Vec::as_slice)
            .ok_or_else(|| SchemeError::UnknownDefinitionSet(set.to_string()))
    }

    /// Index of `label`, matched after normalization.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        let wanted = normalize_label(label);
        self.labels
            .iter()
            .position(|l| normalize_label(l) == wanted)
    }

    /// Resolves a dataset label (possibly an alias) to its scheme index.
    pub fn resolve_label(&self, label: &str) -> Option<usize> {
        if let Some(i) = self.label_index(label) {
            return Some(i);
        }
        let wanted = normalize_label(label);
        self.aliases
            .iter()
            .find(|(alias, _)| normalize_label(alias) == wanted)
            .and_then(|(_, target)| self.label_index(target))
    }

    /// First invariant violation as a typed error.
    fn check(&self) -> Result<(), SchemeError> {
        if self.labels.len() < 2 {
            return Err(SchemeError::TooFewLabels(self.labels.len()));
        }
        let mut seen = HashMap::new();
        for (i, label) in self.labels.iter().enumerate() {
            let norm = normalize_label(label);
            if norm.is_empty() {
                return Err(SchemeError::EmptyLabel(i));
            }
            if seen.insert(norm, i).is_some() {
                return Err(SchemeError::DuplicateLabel(label.clone()));
            }
        }
        if self.definition_sets.is_empty() {
            return Err(SchemeError::NoDefinitionSets);
        }
        for (set, defs) in &self.definition_sets {
            if defs.len() != self.labels.len() {
                return Err(SchemeError::MisalignedDefinitions {
                    set: set.clone(),
                    expected: self.labels.len(),
                    found: defs.len(),
                });
            }
        }
        for (alias, target) in &self.aliases {
            if self.label_index(target).is_none() {
                return Err(SchemeError::DanglingAlias {
                    alias: alias.clone(),
                    target: target.clone(),
                });
            }
        }
        Ok(())
    }
}

pub fn load_scheme(path: impl AsRef<Path>) -> Result<ConceptScheme, SchemeError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| SchemeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    ConceptScheme::from_json(&bytes)
}

/// Lists every invariant violation; an empty report means the scheme is valid.
pub fn validate_scheme(scheme: &ConceptScheme) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: &str, message: String| {
        out.push(Violation {
            field: field.to_string(),
            message,
        })
    };
    if scheme.labels.len() < 2 {
        push(
            "labels",
            format!("scheme needs ≥2 labels, found {}", scheme.labels.len()),
        );
    }
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, label) in scheme.labels.iter().enumerate() {
        let norm = normalize_label(label);
        if norm.is_empty() {
            push("labels", format!("empty label at index {i}"));
            continue;
        }
        if let Some(first) = seen.insert(norm, i) {
            push(
                "labels",
                format!("duplicate label {label:?} at indices {first} and {i}"),
            );
        }
    }
    if scheme.definition_sets.is_empty() {
        push("definition_sets", "no definition sets".to_string());
    }
    for (set, defs) in &scheme.definition_sets {
        if defs.len() != scheme.labels.len() {
            push(
                &format!("definition_sets.{set}"),
                format!(
                    "definition set length mismatch: {} entries for {} labels",
                    defs.len(),
                    scheme.labels.len()
                ),
            );
        }
    }
    for (alias, target) in &scheme.aliases {
        if scheme.label_index(target).is_none() {
            push(
                &format!("aliases.{alias}"),
                format!("alias target {target:?} is not a label"),
            );
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn two_label() -> ConceptScheme {
        ConceptScheme {
            domain_name: "toy".into(),
            domain_prompt_token: String::new(),
            labels: vec!["A".into(), "B".into()],
            definition_sets: BTreeMap::from([(
                MODEL_GENERATED.to_string(),
                vec!["def a".into(), "def b".into()],
            )]),
            aliases: BTreeMap::new(),
            falcon_instruction: None,
        }
    }

    #[test]
    fn shipped_scientific_scheme() {
        let s = assets::scientific_scheme();
        assert_eq!(
            s.labels,
            ["Background", "Motivation", "Method", "Result", "Conclusion"]
        );
        assert_eq!(s.domain_prompt_token, "Scientific");
        assert_eq!(s.resolve_label("Objective"), Some(1));
        assert_eq!(s.resolve_label("results"), Some(3));
        assert!(validate_scheme(&s).is_empty());
    }

    #[test]
    fn shipped_financial_scheme() {
        let s = assets::financial_scheme();
        assert_eq!(
            s.labels,
            [
                "Financial",
                "Manufactured",
                "Intellectual",
                "Human",
                "Social and relationship",
                "Natural"
            ]
        );
        assert!(s.definitions(MODEL_GENERATED).is_ok());
        assert!(validate_scheme(&s).is_empty());
    }

    #[test]
    fn one_label_is_rejected() {
        let json = r#"{"domain_name":"x","domain_prompt_token":"","labels":["A"],
                       "definition_sets":{"model-generated":["a"]}}"#;
        let err = ConceptScheme::from_json(json.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("scheme needs ≥2 labels"), "{err}");
    }

    #[test]
    fn load_errors_are_distinct() {
        let dup = r#"{"domain_name":"x","domain_prompt_token":"","labels":["A","a "],
                      "definition_sets":{"m":["1","2"]}}"#;
        assert!(matches!(
            ConceptScheme::from_json(dup.as_bytes()),
            Err(SchemeError::DuplicateLabel(_))
        ));
        let mis = r#"{"domain_name":"x","domain_prompt_token":"","labels":["A","B"],
                      "definition_sets":{"m":["1"]}}"#;
        assert!(matches!(
            ConceptScheme::from_json(mis.as_bytes()),
            Err(SchemeError::MisalignedDefinitions { found: 1, .. })
        ));
        let bad = r#"{"domain_name":"x","labels":["A","B"]}"#;
        assert!(matches!(
            ConceptScheme::from_json(bad.as_bytes()),
            Err(SchemeError::Malformed(_))
        ));
        assert!(matches!(
            load_scheme("/nonexistent/scheme.json"),
            Err(SchemeError::Io { .. })
        ));
    }

    #[test]
    fn validate_reports_length_mismatch() {
        let mut s = assets::financial_scheme();
        s.definition_sets
            .get_mut(MODEL_GENERATED)
            .unwrap()
            .pop();
        let report = validate_scheme(&s);
        assert_eq!(report.len(), 1);
        assert!(report[0].message.contains("definition set length mismatch"));
    }

    #[test]
    fn validate_reports_duplicate_label() {
        let mut s = assets::financial_scheme();
        s.labels[5] = "Human".into();
        let report = validate_scheme(&s);
        assert_eq!(report.len(), 1);
        assert!(report[0].message.contains("duplicate label"));
    }

    #[test]
    fn normalization_collapses_whitespace() {
        assert_eq!(
            normalize_label("  Social   and\trelationship "),
            "social and relationship"
        );
        assert_eq!(two_label().label_index(" b"), Some(1));
    }

    #[test]
    fn load_is_deterministic() {
        let bytes = assets::SCIENTIFIC_SCHEME_JSON.as_bytes();
        assert_eq!(
            ConceptScheme::from_json(bytes).unwrap(),
            ConceptScheme::from_json(bytes).unwrap()
        );
    }
}
