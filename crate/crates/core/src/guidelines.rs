//! Guideline construction: factual, empty-definition, out-of-dictionary and
//! counterfactual label/definition pairings derived from a [`ConceptScheme`].
//!
//! Display position `i` always shows label `i` of the scheme (or its OOD
//! substitute) and is paired with definition `assignment(i)`. A guideline is
//! counterfactual exactly when the assignment moves at least two points.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concepts::{normalize_label, ConceptScheme, SchemeError};
use crate::permutation::{permutations_with_degree, Permutation, PermutationError};

#[derive(Debug, Error)]
pub enum GuidelineError {
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Permutation(#[from] PermutationError),
    #[error("assignment covers {found} positions, scheme has {expected} labels")]
    SizeMismatch { expected: usize, found: usize },
    #[error("not counterfactual: assignment moves {0} points, at least 2 required")]
    NotCounterfactual(usize),
    #[error("{op} is not defined for a {variant} guideline")]
    WrongVariant { op: &'static str, variant: Variant },
    #[error("need {needed} OOD words, got {got}")]
    TooFewOodWords { needed: usize, got: usize },
    #[error("OOD word {0:?} is repeated")]
    DuplicateOodWord(String),
    #[error("OOD word {0:?} collides with a real label")]
    OodCollision(String),
    #[error("label {0:?} is not part of this guideline")]
    UnknownLabel(String),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error("guideline record {id}: {detail}")]
    BadRecord { id: String, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Factual,
    FactualEmpty,
    Ood,
    OodEmpty,
    Counterfactual,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Factual,
        Variant::FactualEmpty,
        Variant::Ood,
        Variant::OodEmpty,
        Variant::Counterfactual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Factual => "factual",
            Variant::FactualEmpty => "factual_empty",
            Variant::Ood => "ood",
            Variant::OodEmpty => "ood_empty",
            Variant::Counterfactual => "counterfactual",
        }
    }

    pub fn has_empty_definitions(self) -> bool {
        matches!(self, Variant::FactualEmpty | Variant::OodEmpty)
    }

    pub fn has_substitution(self) -> bool {
        matches!(self, Variant::Ood | Variant::OodEmpty)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

/// A concrete guideline over one scheme and definition set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Guideline {
    id: String,
    scheme: String,
    def_set: String,
    variant: Variant,
    /// Factual labels in scheme order.
    labels: Vec<String>,
    /// Labels shown in the prompt, one per position.
    display_labels: Vec<String>,
    assignment: Permutation,
    /// OOD word per label index, when substituted.
    substitution: Option<Vec<String>>,
    seed: Option<u64>,
}

impl Guideline {
    fn build(
        scheme: String,
        def_set: String,
        variant: Variant,
        labels: Vec<String>,
        assignment: Permutation,
        substitution: Option<Vec<String>>,
        seed: Option<u64>,
    ) -> Self {
        let display_labels = substitution.clone().unwrap_or_else(|| labels.clone());
        let mut g = Guideline {
            id: String::new(),
            scheme,
            def_set,
            variant,
            labels,
            display_labels,
            assignment,
            substitution,
            seed,
        };
        g.id = g.compute_id();
        g
    }

    fn compute_id(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            scheme: &'a str,
            def_set: &'a str,
            variant: Variant,
            degree: usize,
            display_labels: &'a [String],
            assignment: &'a [usize],
            labels: &'a [String],
            substitution: Option<&'a [String]>,
        }
        let key = Key {
            scheme: &self.scheme,
            def_set: &self.def_set,
            variant: self.variant,
            degree: self.degree(),
            display_labels: &self.display_labels,
            assignment: self.assignment.images(),
            labels: &self.labels,
            substitution: self.substitution.as_deref(),
        };
        let bytes = serde_json::to_vec(&key).expect("guideline key serializes");
        let digest = Sha256::digest(&bytes);
        format!("{}-{}", self.variant, &hex::encode(digest)[..12])
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scheme(&self) -> &str {
        &self.scheme
    }

    pub fn def_set(&self) -> &str {
        &self.def_set
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn degree(&self) -> usize {
        self.assignment.degree()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn display_labels(&self) -> &[String] {
        &self.display_labels
    }

    pub fn assignment(&self) -> &Permutation {
        &self.assignment
    }

    pub fn substitution(&self) -> Option<&[String]> {
        self.substitution.as_deref()
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    /// Definition index paired with display position `pos`.
    pub fn definition_index(&self, pos: usize) -> usize {
        self.assignment.apply(pos)
    }

    /// Display position carrying the definition of factual label `label_idx`.
    pub fn position_of_definition(&self, label_idx: usize) -> usize {
        self.assignment.inverse().apply(label_idx)
    }

    pub fn factual_index(&self, label: &str) -> Option<usize> {
        let wanted = normalize_label(label);
        self.labels.iter().position(|l| normalize_label(l) == wanted)
    }

    pub fn display_index(&self, label: &str) -> Option<usize> {
        let wanted = normalize_label(label);
        self.display_labels
            .iter()
            .position(|l| normalize_label(l) == wanted)
    }

    pub fn to_record(&self) -> GuidelineRecord {
        GuidelineRecord {
            guideline_id: self.id.clone(),
            scheme: self.scheme.clone(),
            def_set: self.def_set.clone(),
            variant: self.variant,
            degree: self.degree(),
            display_labels: self.display_labels.clone(),
            assignment: self.assignment.images().to_vec(),
            label_substitution: self.substitution.as_ref().map(|words| {
                self.labels
                    .iter()
                    .cloned()
                    .zip(words.iter().cloned())
                    .collect()
            }),
            seed: self.seed,
        }
    }
}

/// Wire form of a guideline, one object per entry of a guideline file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineRecord {
    pub guideline_id: String,
    pub scheme: String,
    pub def_set: String,
    pub variant: Variant,
    pub degree: usize,
    pub display_labels: Vec<String>,
    pub assignment: Vec<usize>,
    pub label_substitution: Option<BTreeMap<String, String>>,
    pub seed: Option<u64>,
}

impl GuidelineRecord {
    /// Rebuilds the guideline, checking every invariant and the stored id.
    pub fn into_guideline(self) -> Result<Guideline, GuidelineError> {
        let bad = |detail: String| GuidelineError::BadRecord {
            id: self.guideline_id.clone(),
            detail,
        };
        let assignment = Permutation::new(self.assignment.clone())
            .map_err(|e| bad(e.to_string()))?;
        if assignment.len() != self.display_labels.len() {
            return Err(bad("assignment and display_labels differ in length".into()));
        }
        let (labels, substitution) = match &self.label_substitution {
            None => (self.display_labels.clone(), None),
            Some(map) => {
                let mut labels = Vec::with_capacity(self.display_labels.len());
                for word in &self.display_labels {
                    let factual = map
                        .iter()
                        .find(|(_, w)| *w == word)
                        .map(|(l, _)| l.clone())
                        .ok_or_else(|| bad(format!("display label {word:?} not substituted")))?;
                    labels.push(factual);
                }
                if map.len() != labels.len() {
                    return Err(bad("substitution is not a bijection".into()));
                }
                (labels, Some(self.display_labels.clone()))
            }
        };
        let g = Guideline::build(
            self.scheme.clone(),
            self.def_set.clone(),
            self.variant,
            labels,
            assignment,
            substitution,
            self.seed,
        );
        check_variant(&g).map_err(|e| bad(e.to_string()))?;
        if g.degree() != self.degree {
            return Err(bad(format!(
                "degree field {} disagrees with assignment degree {}",
                self.degree,
                g.degree()
            )));
        }
        if g.id != self.guideline_id {
            return Err(bad(format!("id mismatch, contents hash to {}", g.id)));
        }
        Ok(g)
    }
}

fn check_variant(g: &Guideline) -> Result<(), GuidelineError> {
    let degree = g.degree();
    let ok = match g.variant {
        Variant::Factual | Variant::FactualEmpty => degree == 0 && g.substitution.is_none(),
        Variant::Ood | Variant::OodEmpty => degree == 0 && g.substitution.is_some(),
        Variant::Counterfactual => degree >= 2 && g.substitution.is_none(),
    };
    if ok {
        Ok(())
    } else {
        Err(GuidelineError::WrongVariant {
            op: "variant check",
            variant: g.variant,
        })
    }
}

/// Identity pairing: every label with its own definition.
pub fn factual(scheme: &ConceptScheme, def_set: &str) -> Result<Guideline, GuidelineError> {
    scheme.definitions(def_set)?;
    Ok(Guideline::build(
        scheme.domain_name.clone(),
        def_set.to_string(),
        Variant::Factual,
        scheme.labels.clone(),
        Permutation::identity(scheme.len()),
        None,
        None,
    ))
}

/// Same labels and pairing, every definition rendered empty.
pub fn empty_definitions(g: &Guideline) -> Result<Guideline, GuidelineError> {
    let variant = match g.variant {
        Variant::Factual => Variant::FactualEmpty,
        Variant::Ood => Variant::OodEmpty,
        other => {
            return Err(GuidelineError::WrongVariant {
                op: "empty_definitions",
                variant: other,
            })
        }
    };
    Ok(Guideline::build(
        g.scheme.clone(),
        g.def_set.clone(),
        variant,
        g.labels.clone(),
        g.assignment.clone(),
        g.substitution.clone(),
        g.seed,
    ))
}

/// Replaces the display labels of a factual guideline by the first `|C|` OOD
/// words, in order.
pub fn substitute_ood(g: &Guideline, ood_words: &[String]) -> Result<Guideline, GuidelineError> {
    if g.variant != Variant::Factual {
        return Err(GuidelineError::WrongVariant {
            op: "substitute_ood",
            variant: g.variant,
        });
    }
    let n = g.len();
    if ood_words.len() < n {
        return Err(GuidelineError::TooFewOodWords {
            needed: n,
            got: ood_words.len(),
        });
    }
    let mut seen = HashSet::new();
    for word in ood_words {
        let norm = normalize_label(word);
        if !seen.insert(norm.clone()) {
            return Err(GuidelineError::DuplicateOodWord(word.clone()));
        }
        if g.labels.iter().any(|l| normalize_label(l) == norm) {
            return Err(GuidelineError::OodCollision(word.clone()));
        }
    }
    Ok(Guideline::build(
        g.scheme.clone(),
        g.def_set.clone(),
        Variant::Ood,
        g.labels.clone(),
        g.assignment.clone(),
        Some(ood_words[..n].to_vec()),
        g.seed,
    ))
}

/// OOD substitution with the word order shuffled by `seed` before the first
/// `|C|` words are taken.
pub fn substitute_ood_seeded(
    g: &Guideline,
    ood_words: &[String],
    seed: u64,
) -> Result<Guideline, GuidelineError> {
    let mut words = ood_words.to_vec();
    words.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(substitute_ood(g, &words)?.with_seed(Some(seed)))
}

/// Restores factual labels from OOD display labels; the inverse of the
/// substitution applied by [`substitute_ood`].
pub fn undo_substitution(g: &Guideline) -> Vec<String> {
    g.display_labels
        .iter()
        .map(|d| remap_prediction(g, d).expect("display label belongs to guideline"))
        .collect()
}

/// Pairs label `i` with definition `assignment(i)`.
pub fn counterfactual(
    scheme: &ConceptScheme,
    def_set: &str,
    assignment: Permutation,
) -> Result<Guideline, GuidelineError> {
    scheme.definitions(def_set)?;
    if assignment.len() != scheme.len() {
        return Err(GuidelineError::SizeMismatch {
            expected: scheme.len(),
            found: assignment.len(),
        });
    }
    let degree = assignment.degree();
    if degree < 2 {
        return Err(GuidelineError::NotCounterfactual(degree));
    }
    Ok(Guideline::build(
        scheme.domain_name.clone(),
        def_set.to_string(),
        Variant::Counterfactual,
        scheme.labels.clone(),
        assignment,
        None,
        None,
    ))
}

/// Every permutation of the scheme's labels moving exactly `k` of them.
pub fn enumerate_by_degree(
    scheme: &ConceptScheme,
    k: usize,
) -> Result<Vec<Permutation>, GuidelineError> {
    Ok(permutations_with_degree(scheme.len(), k)?)
}

/// How counterfactual guidelines are drawn at one degree.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingStrategy {
    /// Uniform without replacement.
    #[default]
    Uniform,
    /// Greedy: each pick minimises how often its moved concepts were already
    /// moved, ties broken by a seeded shuffle.
    ConceptBalanced,
}

/// Draws `min(n, total)` distinct permutations moving exactly `k` labels.
pub fn sample_permutations(
    len: usize,
    k: usize,
    n: usize,
    seed: u64,
    strategy: SamplingStrategy,
) -> Result<Vec<Permutation>, GuidelineError> {
    if n == 0 {
        return Err(GuidelineError::EmptySample);
    }
    let population = permutations_with_degree(len, k)?;
    let take = n.min(population.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked: Vec<usize> = match strategy {
        SamplingStrategy::Uniform => {
            let mut idx = index::sample(&mut rng, population.len(), take).into_vec();
            idx.sort_unstable();
            idx
        }
        SamplingStrategy::ConceptBalanced => {
            let mut order: Vec<usize> = (0..population.len()).collect();
            order.shuffle(&mut rng);
            let mut moved_count = vec![0usize; len];
            let mut picked = Vec::with_capacity(take);
            let mut taken = vec![false; population.len()];
            for _ in 0..take {
                let best = order
                    .iter()
                    .copied()
                    .filter(|&i| !taken[i])
                    .min_by_key(|&i| {
                        population[i]
                            .moved_points()
                            .map(|p| moved_count[p])
                            .max()
                            .unwrap_or(0)
                    })
                    .expect("take <= population");
                taken[best] = true;
                for p in population[best].moved_points() {
                    moved_count[p] += 1;
                }
                picked.push(best);
            }
            picked.sort_unstable();
            picked
        }
    };
    Ok(picked.into_iter().map(|i| population[i].clone()).collect())
}

/// Samples `n` counterfactual guidelines of degree `k` (factual when `k = 0`).
pub fn sample_by_degree(
    scheme: &ConceptScheme,
    def_set: &str,
    k: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Guideline>, GuidelineError> {
    sample_by_degree_with(scheme, def_set, k, n, seed, SamplingStrategy::Uniform)
}

pub fn sample_by_degree_with(
    scheme: &ConceptScheme,
    def_set: &str,
    k: usize,
    n: usize,
    seed: u64,
    strategy: SamplingStrategy,
) -> Result<Vec<Guideline>, GuidelineError> {
    scheme.definitions(def_set)?;
    sample_permutations(scheme.len(), k, n, seed, strategy)?
        .into_iter()
        .map(|p| {
            let g = if p.is_identity() {
                factual(scheme, def_set)?
            } else {
                counterfactual(scheme, def_set, p)?
            };
            Ok(g.with_seed(Some(seed)))
        })
        .collect()
}

/// The display label whose assigned definition is the definition of
/// `factual_gold`: the answer a model following the guideline would give.
pub fn guideline_gold(g: &Guideline, factual_gold: &str) -> Result<String, GuidelineError> {
    let idx = g
        .factual_index(factual_gold)
        .ok_or_else(|| GuidelineError::UnknownLabel(factual_gold.to_string()))?;
    Ok(g.display_labels[g.position_of_definition(idx)].clone())
}

/// Maps a predicted display label back to its factual label. Only the OOD
/// substitution is undone; the counterfactual assignment is kept.
pub fn remap_prediction(g: &Guideline, predicted: &str) -> Result<String, GuidelineError> {
    let pos = g
        .display_index(predicted)
        .ok_or_else(|| GuidelineError::UnknownLabel(predicted.to_string()))?;
    Ok(g.labels[pos].clone())
}
