//! Labeled sentence corpora, balanced sampling, and multi-annotator items.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concepts::ConceptScheme;

/// Annotators may pick at most this many labels per item.
pub const MAX_LABELS_PER_ANNOTATOR: usize = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: unknown label {label:?}")]
    UnknownLabel { line: usize, label: String },
    #[error("line {line}: empty text for {id:?}")]
    EmptyText { line: usize, id: String },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: record domain {found:?} does not match scheme {expected:?}")]
    DomainMismatch {
        line: usize,
        expected: String,
        found: String,
    },
    #[error("line {line}: annotator {annotator:?} gave {count} labels, at most 2 allowed")]
    TooManyLabels {
        line: usize,
        annotator: String,
        count: usize,
    },
    #[error("label {label:?} has {available} sentences, {needed} needed (short by {})", needed - available)]
    Insufficient {
        label: String,
        available: usize,
        needed: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub sentence_id: String,
    pub text: String,
    /// Scheme label after alias resolution.
    pub gold_label: String,
    pub source_doc: String,
    pub domain_name: String,
}

#[derive(Debug, Deserialize)]
struct SentenceLine {
    id: String,
    text: String,
    label: String,
    #[serde(default)]
    source: String,
    #[serde(default)]
    domain: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationItem {
    #[serde(rename = "id")]
    pub item_id: String,
    #[serde(default)]
    pub text: String,
    /// Annotator name to the labels they chose, in the order chosen.
    pub annotators: BTreeMap<String, Vec<String>>,
}

impl AnnotationItem {
    pub fn label_set(&self, annotator: &str) -> Option<BTreeSet<String>> {
        self.annotators
            .get(annotator)
            .map(|ls| ls.iter().cloned().collect())
    }

    /// First-listed label, used where a single label is needed.
    pub fn primary_label(&self, annotator: &str) -> Option<&str> {
        self.annotators
            .get(annotator)
            .and_then(|ls| ls.first())
            .map(String::as_str)
    }
}

fn open(path: &Path) -> Result<BufReader<std::fs::File>, CorpusError> {
    std::fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn lines(path: &Path) -> Result<Vec<(usize, String)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub fn parse_sentences(
    jsonl: &str,
    scheme: &ConceptScheme,
) -> Result<Vec<Sentence>, CorpusError> {
    let numbered = jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    sentences_from_lines(numbered, scheme)
}

fn sentences_from_lines(
    numbered: Vec<(usize, String)>,
    scheme: &ConceptScheme,
) -> Result<Vec<Sentence>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(numbered.len());
    for (line, text) in numbered {
        let rec: SentenceLine = serde_json::from_str(&text)
            .map_err(|source| CorpusError::Malformed { line, source })?;
        if let Some(domain) = &rec.domain {
            if !domain.is_empty() && domain != &scheme.domain_name {
                return Err(CorpusError::DomainMismatch {
                    line,
                    expected: scheme.domain_name.clone(),
                    found: domain.clone(),
                });
            }
        }
        if rec.text.trim().is_empty() {
            return Err(CorpusError::EmptyText { line, id: rec.id });
        }
        let idx = scheme
            .resolve_label(&rec.label)
            .ok_or_else(|| CorpusError::UnknownLabel {
                line,
                label: rec.label.clone(),
            })?;
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::DuplicateId { line, id: rec.id });
        }
        out.push(Sentence {
            sentence_id: rec.id,
            text: rec.text,
            gold_label: scheme.labels[idx].clone(),
            source_doc: rec.source,
            domain_name: scheme.domain_name.clone(),
        });
    }
    Ok(out)
}

pub fn load_sentences(
    path: impl AsRef<Path>,
    scheme: &ConceptScheme,
) -> Result<Vec<Sentence>, CorpusError> {
    sentences_from_lines(lines(path.as_ref())?, scheme)
}

/// Exactly `per_class` sentences per gold label, drawn without replacement
/// and shuffled, both by `seed`. Labels are visited in first-seen order.
pub fn balanced_sample(
    sentences: &[Sentence],
    per_class: usize,
    seed: u64,
) -> Result<Vec<Sentence>, CorpusError> {
    let mut by_label: Vec<(&str, Vec<&Sentence>)> = Vec::new();
    for s in sentences {
        match by_label.iter_mut().find(|(l, _)| *l == s.gold_label) {
            Some((_, group)) => group.push(s),
            None => by_label.push((&s.gold_label, vec![s])),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * by_label.len());
    for (label, group) in &by_label {
        if group.len() < per_class {
            return Err(CorpusError::Insufficient {
                label: label.to_string(),
                available: group.len(),
                needed: per_class,
            });
        }
        let mut picked = index::sample(&mut rng, group.len(), per_class).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| group[i].clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

pub fn parse_annotations(jsonl: &str) -> Result<Vec<AnnotationItem>, CorpusError> {
    let numbered = jsonl
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    annotations_from_lines(numbered)
}

fn annotations_from_lines(
    numbered: Vec<(usize, String)>,
) -> Result<Vec<AnnotationItem>, CorpusError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(numbered.len());
    for (line, text) in numbered {
        let item: AnnotationItem = serde_json::from_str(&text)
            .map_err(|source| CorpusError::Malformed { line, source })?;
        for (annotator, labels) in &item.annotators {
            let distinct: BTreeSet<&String> = labels.iter().collect();
            if labels.len() > MAX_LABELS_PER_ANNOTATOR || distinct.len() != labels.len() {
                return Err(CorpusError::TooManyLabels {
                    line,
                    annotator: annotator.clone(),
                    count: labels.len(),
                });
            }
        }
        if !seen.insert(item.item_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line,
                id: item.item_id,
            });
        }
        out.push(item);
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationItem>, CorpusError> {
    annotations_from_lines(lines(path.as_ref())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assets;

    fn sci_corpus() -> Vec<Sentence> {
        parse_sentences(assets::SCIENTIFIC_SENTENCES, &assets::scientific_scheme()).unwrap()
    }

    fn per_label(sample: &[Sentence]) -> BTreeMap<String, usize> {
        let mut m = BTreeMap::new();
        for s in sample {
            *m.entry(s.gold_label.clone()).or_default() += 1;
        }
        m
    }

    #[test]
    fn scientific_fixture_loads_balanced() {
        let c = sci_corpus();
        assert_eq!(c.len(), 500);
        assert!(per_label(&c).values().all(|&n| n == 100));
    }

    #[test]
    fn aliases_resolve() {
        let s = assets::scientific_scheme();
        let line = r#"{"id":"x","text":"We aim to.","label":"Objective","source":"d","domain":"scientific"}"#;
        assert_eq!(parse_sentences(line, &s).unwrap()[0].gold_label, "Motivation");
    }

    #[test]
    fn bad_records() {
        let s = assets::scientific_scheme();
        let banana = r#"{"id":"x","text":"t","label":"Banana"}"#;
        assert!(matches!(
            parse_sentences(banana, &s),
            Err(CorpusError::UnknownLabel { line: 1, .. })
        ));
        let empty = r#"{"id":"x","text":"  ","label":"Method"}"#;
        assert!(matches!(
            parse_sentences(empty, &s),
            Err(CorpusError::EmptyText { .. })
        ));
        let dup = "{\"id\":\"x\",\"text\":\"a\",\"label\":\"Method\"}\n{\"id\":\"x\",\"text\":\"b\",\"label\":\"Method\"}";
        assert!(matches!(
            parse_sentences(dup, &s),
            Err(CorpusError::DuplicateId { line: 2, .. })
        ));
        let wrong_domain = r#"{"id":"x","text":"a","label":"Method","domain":"financial"}"#;
        assert!(matches!(
            parse_sentences(wrong_domain, &s),
            Err(CorpusError::DomainMismatch { .. })
        ));
    }

    #[test]
    fn balanced_sample_shapes() {
        let c = sci_corpus();
        let s = balanced_sample(&c, 100, 3).unwrap();
        assert_eq!(s.len(), 500);
        assert!(per_label(&s).values().all(|&n| n == 100));

        let fin = parse_sentences(assets::FINANCIAL_SENTENCES, &assets::financial_scheme()).unwrap();
        let f = balanced_sample(&fin, 90, 3).unwrap();
        assert_eq!(f.len(), 540);
        assert!(per_label(&f).values().all(|&n| n == 90));

        let err = balanced_sample(&c, 101, 3).unwrap_err();
        assert!(err.to_string().contains("short by 1"), "{err}");
    }

    #[test]
    fn balanced_sample_seeding() {
        let c = sci_corpus();
        let ids = |seed| {
            balanced_sample(&c, 20, seed)
                .unwrap()
                .into_iter()
                .map(|s| s.sentence_id)
                .collect::<Vec<_>>()
        };
        assert_eq!(ids(11), ids(11));
        let a: BTreeSet<_> = ids(11).into_iter().collect();
        let b: BTreeSet<_> = ids(12).into_iter().collect();
        assert_ne!(a, b);
    }

    #[test]
    fn annotations() {
        let ok = r#"{"id":"1","text":"t","annotators":{"A1":["Financial"],"A2":["Financial","Human"],"A3":[]}}"#;
        let items = parse_annotations(ok).unwrap();
        assert_eq!(items[0].primary_label("A2"), Some("Financial"));
        assert_eq!(items[0].label_set("A3").unwrap().len(), 0);

        let three = r#"{"id":"1","text":"t","annotators":{"A1":["F","H","N"]}}"#;
        assert!(matches!(
            parse_annotations(three),
            Err(CorpusError::TooManyLabels { count: 3, .. })
        ));
        assert!(parse_annotations("").unwrap().is_empty());

        let fixture = parse_annotations(assets::FINANCIAL_ANNOTATIONS).unwrap();
        assert_eq!(fixture.len(), 60);
    }
}
