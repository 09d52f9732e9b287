//! Probing whether language models follow concept guidelines: guideline
//! construction (factual, empty, out-of-dictionary, counterfactual), prompt
//! rendering, model backends, label extraction, scoring and agreement.

pub mod assets;
pub mod backends;
pub mod concepts;
pub mod corpus;
pub mod extraction;
pub mod guidelines;
pub mod metrics;
pub mod orchestrator;
pub mod permutation;
pub mod prompts;

pub use backends::{Backend, BackendConfig, BackendError, BackendKind, MockPolicy, ModelOutput};
pub use concepts::{load_scheme, ConceptScheme, SchemeError, Violation};
pub use corpus::{AnnotationItem, Sentence};
pub use extraction::{extract_label, Extraction, Outcome, RefusalPhrases};
pub use guidelines::{Guideline, GuidelineRecord, Variant};
pub use metrics::{EvalRecord, ScoreReport};
pub use permutation::Permutation;
pub use prompts::{ModelFamily, Payload, PromptBundle};
pub use orchestrator::{ExperimentConfig, Plan, RunManifest, RunOptions, RunSummary, VariantSpec};
