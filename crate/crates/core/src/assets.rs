//! Shipped data: concept schemes, OOD words, templates, refusal phrases,
//! fixture corpora and golden prompts. Everything is embedded at compile
//! time and can also be loaded from an `assets/` directory for checking.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use crate::concepts::{normalize_label, validate_scheme, ConceptScheme, Violation, MODEL_GENERATED};
use crate::corpus::{parse_annotations, parse_sentences};
use crate::guidelines::{counterfactual, empty_definitions, factual, Guideline};
use crate::permutation::Permutation;
use crate::prompts::{build_prompt, ModelFamily};

pub const SCIENTIFIC_SCHEME_JSON: &str = include_str!("../../../assets/schemes/scientific.json");
pub const FINANCIAL_SCHEME_JSON: &str = include_str!("../../../assets/schemes/financial.json");
pub const FINANCIAL_HUMAN_SCHEME_JSON: &str =
    include_str!("../../../assets/schemes/financial_human.json");
pub const OOD_WORDS: &str = include_str!("../../../assets/ood_words.txt");
pub const REFUSAL_PHRASES: &str = include_str!("../../../assets/refusal_phrases.txt");
pub const GUIDELINE_HEADER: &str = include_str!("../../../assets/templates/guideline_header.txt");
pub const TASK_TEMPLATE: &str = include_str!("../../../assets/templates/task.txt");
pub const LLAMA2_TEMPLATE: &str = include_str!("../../../assets/templates/llama2-chat.txt");
pub const FALCON_TEMPLATE: &str = include_str!("../../../assets/templates/falcon-chat.txt");
pub const CHAT_API_TEMPLATE: &str = include_str!("../../../assets/templates/chat-api.txt");
pub const SCIENTIFIC_SENTENCES: &str =
    include_str!("../../../assets/fixtures/scientific_sentences.jsonl");
pub const FINANCIAL_SENTENCES: &str =
    include_str!("../../../assets/fixtures/financial_sentences.jsonl");
pub const FINANCIAL_ANNOTATIONS: &str =
    include_str!("../../../assets/fixtures/financial_annotations.jsonl");

/// Minimum fixture sentences per label.
pub const MIN_FIXTURE_PER_LABEL: usize = 20;

pub const OOD_WORD_COUNT: usize = 10;

pub fn scientific_scheme() -> ConceptScheme {
    ConceptScheme::from_json(SCIENTIFIC_SCHEME_JSON.as_bytes()).expect("shipped scheme is valid")
}

pub fn financial_scheme() -> ConceptScheme {
    ConceptScheme::from_json(FINANCIAL_SCHEME_JSON.as_bytes()).expect("shipped scheme is valid")
}

/// Financial scheme with the additional `human` definition set.
pub fn financial_human_scheme() -> ConceptScheme {
    ConceptScheme::from_json(FINANCIAL_HUMAN_SCHEME_JSON.as_bytes())
        .expect("shipped scheme is valid")
}

pub fn parse_word_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn ood_words() -> Vec<String> {
    parse_word_list(OOD_WORDS)
}

/// The `assets/` directory of this checkout.
pub fn assets_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../assets")
}

/// One golden prompt: a guideline, a sentence and the scheme they render with.
#[derive(Debug, Clone)]
pub struct GoldenCase {
    pub name: &'static str,
    pub scheme_file: &'static str,
    pub sentence: &'static str,
    build: fn(&ConceptScheme) -> Guideline,
}

impl GoldenCase {
    pub fn guideline(&self, scheme: &ConceptScheme) -> Guideline {
        (self.build)(scheme)
    }

    /// Path of the golden file relative to the assets directory.
    pub fn path(&self, family: ModelFamily) -> String {
        format!("golden/{}/{}.txt", family.as_str(), self.name)
    }
}

const SCIENTIFIC_SENTENCE: &str =
    "Therefore, the phase transition can be classified as essentially driven by Coulomb interactions.";
const FINANCIAL_SENTENCE: &str =
    "Revenue from our coatings segment increased 6% to $4.2 billion in 2021.";

pub fn golden_cases() -> Vec<GoldenCase> {
    vec![
        GoldenCase {
            name: "scientific_factual",
            scheme_file: "scientific.json",
            sentence: SCIENTIFIC_SENTENCE,
            build: |s| factual(s, MODEL_GENERATED).expect("factual guideline"),
        },
        GoldenCase {
            name: "financial_factual_empty",
            scheme_file: "financial.json",
            sentence: FINANCIAL_SENTENCE,
            build: |s| {
                empty_definitions(&factual(s, MODEL_GENERATED).expect("factual guideline"))
                    .expect("empty-definition guideline")
            },
        },
        GoldenCase {
            name: "scientific_counterfactual_swap",
            scheme_file: "scientific.json",
            sentence: SCIENTIFIC_SENTENCE,
            build: |s| {
                counterfactual(s, MODEL_GENERATED, Permutation::swap(s.len(), 3, 4))
                    .expect("counterfactual guideline")
            },
        },
    ]
}

/// Renders every golden file: relative path → contents.
pub fn render_golden(schemes: &BTreeMap<String, ConceptScheme>) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for case in golden_cases() {
        let Some(scheme) = schemes.get(case.scheme_file) else {
            continue;
        };
        let g = case.guideline(scheme);
        for family in ModelFamily::ALL {
            let bundle =
                build_prompt(&g, scheme, case.sentence, family).expect("golden prompt renders");
            out.insert(case.path(family), bundle.wrapped.to_audit_text());
        }
    }
    out
}

/// Raw asset files as found on disk. Missing files are kept as `None` so
/// that verification can report them.
#[derive(Debug, Clone, Default)]
pub struct AssetBundle {
    pub root: PathBuf,
    pub schemes: BTreeMap<String, String>,
    pub ood_words: Option<String>,
    pub refusal_phrases: Option<String>,
    pub templates: BTreeMap<String, Option<String>>,
    pub fixtures: BTreeMap<String, Option<String>>,
    pub golden: BTreeMap<String, Option<String>>,
}

pub const SCHEME_FILES: [&str; 3] = ["scientific.json", "financial.json", "financial_human.json"];

/// Template file → placeholders it must contain.
pub const TEMPLATE_FILES: [(&str, &[&str]); 5] = [
    ("guideline_header.txt", &[]),
    ("task.txt", &["{sentence}", "{domain_prefix}"]),
    ("llama2-chat.txt", &["{prompt_g}", "{prompt_t}"]),
    ("falcon-chat.txt", &["{instruction_prefix}", "{prompt_g}", "{prompt_t}"]),
    ("chat-api.txt", &["{prompt_g}", "{prompt_t}"]),
];

/// Sentence fixture → scheme file it is labelled with.
pub const SENTENCE_FIXTURES: [(&str, &str); 2] = [
    ("scientific_sentences.jsonl", "scientific.json"),
    ("financial_sentences.jsonl", "financial.json"),
];

pub const ANNOTATION_FIXTURE: &str = "financial_annotations.jsonl";

impl AssetBundle {
    /// The bundle compiled into this library.
    pub fn embedded() -> Self {
        let some = |s: &str| Some(s.to_string());
        AssetBundle {
            root: assets_dir(),
            schemes: [
                ("scientific.json", SCIENTIFIC_SCHEME_JSON),
                ("financial.json", FINANCIAL_SCHEME_JSON),
                ("financial_human.json", FINANCIAL_HUMAN_SCHEME_JSON),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
            ood_words: some(OOD_WORDS),
            refusal_phrases: some(REFUSAL_PHRASES),
            templates: [
                ("guideline_header.txt", GUIDELINE_HEADER),
                ("task.txt", TASK_TEMPLATE),
                ("llama2-chat.txt", LLAMA2_TEMPLATE),
                ("falcon-chat.txt", FALCON_TEMPLATE),
                ("chat-api.txt", CHAT_API_TEMPLATE),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), some(v)))
            .collect(),
            fixtures: [
                ("scientific_sentences.jsonl", SCIENTIFIC_SENTENCES),
                ("financial_sentences.jsonl", FINANCIAL_SENTENCES),
                (ANNOTATION_FIXTURE, FINANCIAL_ANNOTATIONS),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), some(v)))
            .collect(),
            golden: Self::read_golden(&assets_dir()),
        }
    }

    /// Reads the bundle from `dir`. Only I/O on the directory itself fails;
    /// missing files surface later as violations.
    pub fn load(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let root = dir.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("{} is not a directory", root.display()),
            ));
        }
        let read = |rel: &str| std::fs::read_to_string(root.join(rel)).ok();
        let mut schemes = BTreeMap::new();
        for name in SCHEME_FILES {
            if let Some(text) = read(&format!("schemes/{name}")) {
                schemes.insert(name.to_string(), text);
            }
        }
        Ok(AssetBundle {
            schemes,
            ood_words: read("ood_words.txt"),
            refusal_phrases: read("refusal_phrases.txt"),
            templates: TEMPLATE_FILES
                .iter()
                .map(|(name, _)| (name.to_string(), read(&format!("templates/{name}"))))
                .collect(),
            fixtures: SENTENCE_FIXTURES
                .iter()
                .map(|(name, _)| *name)
                .chain([ANNOTATION_FIXTURE])
                .map(|name| (name.to_string(), read(&format!("fixtures/{name}"))))
                .collect(),
            golden: Self::read_golden(&root),
            root,
        })
    }

    fn read_golden(root: &Path) -> BTreeMap<String, Option<String>> {
        golden_cases()
            .iter()
            .flat_map(|case| ModelFamily::ALL.map(|f| case.path(f)))
            .map(|rel| {
                let text = std::fs::read_to_string(root.join(&rel)).ok();
                (rel, text)
            })
            .collect()
    }

    /// Writes freshly rendered golden files under `root`.
    pub fn write_golden(&self) -> std::io::Result<Vec<PathBuf>> {
        let schemes = self.parsed_schemes();
        let mut written = Vec::new();
        for (rel, text) in render_golden(&schemes) {
            let path = self.root.join(&rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, text)?;
            written.push(path);
        }
        Ok(written)
    }

    fn parsed_schemes(&self) -> BTreeMap<String, ConceptScheme> {
        self.schemes
            .iter()
            .filter_map(|(name, text)| {
                let scheme: ConceptScheme = serde_json::from_str(text).ok()?;
                validate_scheme(&scheme).is_empty().then(|| (name.clone(), scheme))
            })
            .collect()
    }
}

fn violation(field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

/// Checks every bundle invariant. An empty list means the assets are sound.
///
/// A scheme that fails validation is reported once; checks that depend on
/// it (fixtures, golden prompts) are skipped rather than reported again.
pub fn verify_assets(bundle: &AssetBundle) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut valid = BTreeMap::new();
    for name in SCHEME_FILES {
        let field = format!("schemes/{name}");
        let Some(text) = bundle.schemes.get(name) else {
            out.push(violation(field, "file missing"));
            continue;
        };
        let scheme: ConceptScheme = match serde_json::from_str(text) {
            Ok(s) => s,
            Err(e) => {
                out.push(violation(field, format!("malformed: {e}")));
                continue;
            }
        };
        let problems = validate_scheme(&scheme);
        if !problems.is_empty() {
            out.extend(
                problems
                    .into_iter()
                    .map(|v| violation(format!("{field}: {}", v.field), v.message)),
            );
            continue;
        }
        if !scheme.definition_sets.contains_key(MODEL_GENERATED) {
            out.push(violation(field, format!("no `{MODEL_GENERATED}` definition set")));
            continue;
        }
        valid.insert(name.to_string(), scheme);
    }

    match &bundle.ood_words {
        None => out.push(violation("ood_words.txt", "file missing")),
        Some(text) => {
            let words = parse_word_list(text);
            let mut seen = HashSet::new();
            let dupes: Vec<&String> = words
                .iter()
                .filter(|w| !seen.insert(normalize_label(w)))
                .collect();
            if !dupes.is_empty() {
                out.push(violation(
                    "ood_words.txt",
                    format!("duplicate words {dupes:?}"),
                ));
            } else if words.len() != OOD_WORD_COUNT {
                out.push(violation(
                    "ood_words.txt",
                    format!("expected {OOD_WORD_COUNT} words, found {}", words.len()),
                ));
            }
            for scheme in valid.values() {
                for w in &words {
                    if scheme.label_index(w).is_some() {
                        out.push(violation(
                            "ood_words.txt",
                            format!("{w:?} collides with a {} label", scheme.domain_name),
                        ));
                    }
                }
            }
        }
    }

    match &bundle.refusal_phrases {
        None => out.push(violation("refusal_phrases.txt", "file missing")),
        Some(text) if parse_word_list(text).is_empty() => {
            out.push(violation("refusal_phrases.txt", "no phrases"))
        }
        Some(_) => {}
    }

    for (name, required) in TEMPLATE_FILES {
        let field = format!("templates/{name}");
        match bundle.templates.get(name).and_then(Option::as_ref) {
            None => out.push(violation(field, "file missing")),
            Some(text) => {
                for p in required {
                    if !text.contains(p) {
                        out.push(violation(field.clone(), format!("missing placeholder {p}")));
                    }
                }
                if text.contains('\r') {
                    out.push(violation(field, "contains CR line endings"));
                }
            }
        }
    }

    for (name, scheme_file) in SENTENCE_FIXTURES {
        let field = format!("fixtures/{name}");
        let Some(text) = bundle.fixtures.get(name).and_then(Option::as_ref) else {
            out.push(violation(field, "file missing"));
            continue;
        };
        let Some(scheme) = valid.get(scheme_file) else {
            continue;
        };
        match parse_sentences(text, scheme) {
            Err(e) => out.push(violation(field, e.to_string())),
            Ok(sentences) => {
                let mut counts: BTreeMap<&str, usize> =
                    scheme.labels.iter().map(|l| (l.as_str(), 0)).collect();
                for s in &sentences {
                    *counts.get_mut(s.gold_label.as_str()).expect("resolved label") += 1;
                }
                let min = counts.values().copied().min().unwrap_or(0);
                let max = counts.values().copied().max().unwrap_or(0);
                if min < MIN_FIXTURE_PER_LABEL {
                    out.push(violation(
                        field,
                        format!("needs ≥{MIN_FIXTURE_PER_LABEL} sentences per label, counts {counts:?}"),
                    ));
                } else if min != max {
                    out.push(violation(field, format!("labels are unbalanced: {counts:?}")));
                }
            }
        }
    }

    match bundle.fixtures.get(ANNOTATION_FIXTURE).and_then(Option::as_ref) {
        None => out.push(violation(format!("fixtures/{ANNOTATION_FIXTURE}"), "file missing")),
        Some(text) => {
            if let Err(e) = parse_annotations(text) {
                out.push(violation(format!("fixtures/{ANNOTATION_FIXTURE}"), e.to_string()));
            }
        }
    }

    let templates_ok = TEMPLATE_FILES.iter().all(|(name, _)| {
        bundle.templates.get(*name).and_then(Option::as_ref).map(String::as_str)
            == Some(embedded_template(name))
    });
    if templates_ok {
        for (rel, expected) in render_golden(&valid) {
            match bundle.golden.get(&rel).and_then(Option::as_ref) {
                None => out.push(violation(rel, "golden file missing")),
                Some(found) if *found != expected => {
                    out.push(violation(rel, "does not match the rendered prompt"))
                }
                Some(_) => {}
            }
        }
    }
    out
}

/// Golden prompts are rendered with the compiled-in templates, so they are
/// only compared when the on-disk templates match those.
fn embedded_template(name: &str) -> &'static str {
    match name {
        "guideline_header.txt" => GUIDELINE_HEADER,
        "task.txt" => TASK_TEMPLATE,
        "llama2-chat.txt" => LLAMA2_TEMPLATE,
        "falcon-chat.txt" => FALCON_TEMPLATE,
        "chat-api.txt" => CHAT_API_TEMPLATE,
        _ => "",
    }
}
