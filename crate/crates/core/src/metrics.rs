//! Accuracy with Wilson intervals, counterfactuality curves, correlation,
//! guideline adherence, refusal rates, and annotator agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{Extraction, Outcome};
use crate::guidelines::{Guideline, Variant};

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("no records to aggregate")]
    Empty,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("record references unknown guideline {0:?}")]
    DanglingGuideline(String),
    #[error("record gold label {label:?} is not in guideline {guideline}")]
    UnknownGold { guideline: String, label: String },
    #[error("guidelines span different label sets")]
    MixedSchemes,
}

/// One scored model response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sentence_id: String,
    pub guideline_id: String,
    pub variant: Variant,
    pub degree: usize,
    pub factual_gold: String,
    pub predicted: Extraction,
    /// Predicted label with any OOD substitution undone.
    pub predicted_factual: Option<String>,
    #[serde(default)]
    pub raw_text: String,
    #[serde(default)]
    pub request_hash: String,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub from_cache: bool,
}

impl EvalRecord {
    pub fn task_id(&self) -> String {
        task_id(&self.guideline_id, &self.sentence_id)
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_factual.as_deref() == Some(self.factual_gold.as_str())
    }

    pub fn is_refusal(&self) -> bool {
        self.predicted.outcome == Outcome::Refusal
    }

    pub fn is_unparsed(&self) -> bool {
        self.predicted.outcome == Outcome::Unparsed
    }
}

pub fn task_id(guideline_id: &str, sentence_id: &str) -> String {
    format!("{guideline_id}/{sentence_id}")
}

/// Success count over a total; merges associatively.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub hits: u64,
    pub total: u64,
}

impl Tally {
    pub fn of<'a>(records: impl IntoIterator<Item = &'a EvalRecord>, hit: impl Fn(&EvalRecord) -> bool) -> Self {
        records.into_iter().fold(Tally::default(), |mut t, r| {
            t.total += 1;
            t.hits += u64::from(hit(r));
            t
        })
    }

    pub fn merge(self, other: Tally) -> Tally {
        Tally {
            hits: self.hits + other.hits,
            total: self.total + other.total,
        }
    }

    pub fn rate(self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }
}

/// Proportion with a 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub successes: u64,
    pub n: u64,
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson_interval(successes: u64, n: u64, z: f64) -> (f64, f64) {
    assert!(n > 0 && successes <= n);
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    // the bounds bracket p analytically; rounding can nudge them past it
    ((center - half).clamp(0.0, p), (center + half).clamp(p, 1.0))
}

impl Estimate {
    pub fn from_tally(t: Tally) -> Result<Self, MetricError> {
        if t.total == 0 {
            return Err(MetricError::Empty);
        }
        let point = t.hits as f64 / t.total as f64;
        let (lo, hi) = wilson_interval(t.hits, t.total, Z_95);
        Ok(Estimate {
            successes: t.hits,
            n: t.total,
            point,
            lo: lo.min(point),
            hi: hi.max(point),
        })
    }
}

/// Correct iff the (OOD-remapped) prediction equals the factual gold label;
/// refusals and unparsed outputs count as incorrect.
pub fn accuracy(records: &[EvalRecord]) -> Result<Estimate, MetricError> {
    Estimate::from_tally(Tally::of(records, EvalRecord::is_correct))
}

pub fn refusal_rate(records: &[EvalRecord]) -> Result<f64, MetricError> {
    Tally::of(records, EvalRecord::is_refusal)
        .rate()
        .ok_or(MetricError::Empty)
}

pub fn unparsed_rate(records: &[EvalRecord]) -> Result<f64, MetricError> {
    Tally::of(records, EvalRecord::is_unparsed)
        .rate()
        .ok_or(MetricError::Empty)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub degree: usize,
    pub mean: f64,
    /// Population standard deviation across guidelines.
    pub std: f64,
    pub guidelines: usize,
}

fn counts_for_curve(v: Variant) -> bool {
    matches!(v, Variant::Factual | Variant::Counterfactual)
}

/// Mean and spread of per-guideline accuracy at each degree, over factual
/// (degree 0) and counterfactual records.
pub fn degree_curve(records: &[EvalRecord]) -> Result<Vec<CurvePoint>, MetricError> {
    let mut per_guideline: BTreeMap<(usize, &str), Tally> = BTreeMap::new();
    for r in records.iter().filter(|r| counts_for_curve(r.variant)) {
        let t = per_guideline
            .entry((r.degree, r.guideline_id.as_str()))
            .or_default();
        *t = t.merge(Tally {
            hits: u64::from(r.is_correct()),
            total: 1,
        });
    }
    if per_guideline.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut by_degree: BTreeMap<usize, Vec<Tally>> = BTreeMap::new();
    for ((degree, _), t) in per_guideline {
        by_degree.entry(degree).or_default().push(t);
    }
    Ok(by_degree
        .into_iter()
        .map(|(degree, tallies)| {
            let (mean, std) = mean_and_std(&tallies);
            CurvePoint {
                degree,
                mean,
                std,
                guidelines: tallies.len(),
            }
        })
        .collect())
}

/// Mean and population standard deviation of the tallies' rates. When all
/// tallies share a denominator the moments are formed in integers, so equal
/// rates give their exact common value and a spread of exactly zero.
fn mean_and_std(tallies: &[Tally]) -> (f64, f64) {
    let m = tallies.len() as u128;
    let total = tallies[0].total as u128;
    if tallies.iter().all(|t| t.total as u128 == total) {
        let hits: u128 = tallies.iter().map(|t| t.hits as u128).sum();
        // var = Σ(m·h_i − H)² / (m³·T²)
        let ss: u128 = tallies
            .iter()
            .map(|t| {
                let d = (m * t.hits as u128).abs_diff(hits);
                d * d
            })
            .sum();
        let mean = hits as f64 / (m * total) as f64;
        let var = ss as f64 / ((m * m * m) as f64 * (total * total) as f64);
        return (mean, var.sqrt());
    }
    let rates: Vec<f64> = tallies
        .iter()
        .map(|t| t.rate().expect("non-empty tally"))
        .collect();
    let n = rates.len() as f64;
    let mean = rates.iter().sum::<f64>() / n;
    let var = rates.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Product-moment correlation; `None` when either coordinate is constant.
pub fn pearson(points: &[(f64, f64)]) -> Result<Option<f64>, MetricError> {
    if points.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: points.len(),
        });
    }
    let constant = |f: fn(&(f64, f64)) -> f64| points.iter().all(|p| f(p) == f(&points[0]));
    if constant(|p| p.0) || constant(|p| p.1) {
        return Ok(None);
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)))
}

/// Rows: factual label `c_i` of the sentence. Columns: display position `j`
/// that the guideline paired with definition `d_i`. A cell is the fraction
/// of predictions equal to that display label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceMatrix {
    pub labels: Vec<String>,
    /// `None` where support is zero.
    pub values: Vec<Vec<Option<f64>>>,
    pub support: Vec<Vec<u64>>,
}

pub fn adherence_matrix(
    records: &[EvalRecord],
    guidelines: &HashMap<String, Guideline>,
) -> Result<AdherenceMatrix, MetricError> {
    let mut labels: Option<&[String]> = None;
    let mut adherent: Vec<Vec<u64>> = Vec::new();
    let mut support: Vec<Vec<u64>> = Vec::new();
    for r in records.iter().filter(|r| counts_for_curve(r.variant)) {
        let g = guidelines
            .get(&r.guideline_id)
            .ok_or_else(|| MetricError::DanglingGuideline(r.guideline_id.clone()))?;
        match labels {
            None => {
                labels = Some(g.labels());
                adherent = vec![vec![0; g.len()]; g.len()];
                support = vec![vec![0; g.len()]; g.len()];
            }
            Some(ls) if ls != g.labels() => return Err(MetricError::MixedSchemes),
            Some(_) => {}
        }
        let i = g
            .factual_index(&r.factual_gold)
            .ok_or_else(|| MetricError::UnknownGold {
                guideline: g.id().to_string(),
                label: r.factual_gold.clone(),
            })?;
        let j = g.position_of_definition(i);
        support[i][j] += 1;
        if r.predicted.outcome.label() == Some(g.display_labels()[j].as_str()) {
            adherent[i][j] += 1;
        }
    }
    let labels = labels.map(<[String]>::to_vec).unwrap_or_default();
    let values = support
        .iter()
        .zip(&adherent)
        .map(|(srow, arow)| {
            srow.iter()
                .zip(arow)
                .map(|(&s, &a)| (s > 0).then(|| a as f64 / s as f64))
                .collect()
        })
        .collect();
    Ok(AdherenceMatrix {
        labels,
        values,
        support,
    })
}

pub type LabelSet = BTreeSet<String>;

/// Size of the symmetric difference of two label sets.
pub fn disagreement_weight(a: &LabelSet, b: &LabelSet) -> usize {
    a.symmetric_difference(b).count()
}

fn distribution<'a>(sets: impl Iterator<Item = &'a LabelSet>) -> Vec<(&'a LabelSet, f64)> {
    let mut counts: BTreeMap<&LabelSet, usize> = BTreeMap::new();
    let mut n = 0;
    for s in sets {
        *counts.entry(s).or_default() += 1;
        n += 1;
    }
    counts
        .into_iter()
        .map(|(s, c)| (s, c as f64 / n as f64))
        .collect()
}

/// Weighted kappa `1 - D_o / D_e` over set-valued labels, with the
/// symmetric-difference size as disagreement and each annotator's own
/// distribution over label sets for the expected disagreement.
/// `None` when the expected disagreement is zero.
pub fn weighted_kappa(items: &[(LabelSet, LabelSet)]) -> Result<Option<f64>, MetricError> {
    if items.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: items.len(),
        });
    }
    let n = items.len() as f64;
    let observed = items
        .iter()
        .map(|(a, b)| disagreement_weight(a, b) as f64)
        .sum::<f64>()
        / n;
    let pa = distribution(items.iter().map(|(a, _)| a));
    let pb = distribution(items.iter().map(|(_, b)| b));
    let mut expected = 0.0;
    for (sa, wa) in &pa {
        for (sb, wb) in &pb {
            expected += wa * wb * disagreement_weight(sa, sb) as f64;
        }
    }
    if expected == 0.0 {
        return Ok(None);
    }
    Ok(Some(1.0 - observed / expected))
}

/// Cohen's kappa for single labels; `None` when chance agreement is 1.
pub fn cohen_kappa<S: AsRef<str>>(items: &[(S, S)]) -> Result<Option<f64>, MetricError> {
    if items.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: items.len(),
        });
    }
    let n = items.len() as f64;
    let mut ca: HashMap<&str, f64> = HashMap::new();
    let mut cb: HashMap<&str, f64> = HashMap::new();
    let mut agree = 0.0;
    for (a, b) in items {
        let (a, b) = (a.as_ref(), b.as_ref());
        *ca.entry(a).or_default() += 1.0;
        *cb.entry(b).or_default() += 1.0;
        if a == b {
            agree += 1.0;
        }
    }
    let po = agree / n;
    let pe: f64 = ca
        .iter()
        .map(|(k, na)| na / n * cb.get(k).copied().unwrap_or(0.0) / n)
        .sum();
    if (1.0 - pe).abs() <= f64::EPSILON {
        return Ok(None);
    }
    Ok(Some((po - pe) / (1.0 - pe)))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "labels", rename_all = "snake_case")]
pub enum Vote {
    Winner(String),
    /// Labels tied for the most votes, for adjudication.
    Tie(Vec<String>),
    /// Every annotator chose no label.
    NoLabels,
}

/// One vote per label per annotator; strict plurality wins.
pub fn majority_vote(sets: &[LabelSet]) -> Result<Vote, MetricError> {
    if sets.len() < 2 {
        return Err(MetricError::TooFew {
            needed: 2,
            got: sets.len(),
        });
    }
    let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
    for label in sets.iter().flatten() {
        *votes.entry(label).or_default() += 1;
    }
    let Some(&top) = votes.values().max() else {
        return Ok(Vote::NoLabels);
    };
    let leaders: Vec<String> = votes
        .into_iter()
        .filter(|&(_, v)| v == top)
        .map(|(l, _)| l.to_string())
        .collect();
    Ok(match <[String; 1]>::try_from(leaders) {
        Ok([one]) => Vote::Winner(one),
        Err(many) => Vote::Tie(many),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantScore {
    pub n: u64,
    pub accuracy: Estimate,
    pub refusal_rate: f64,
    pub unparsed_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidelineScore {
    pub guideline_id: String,
    pub variant: Variant,
    pub degree: usize,
    pub accuracy: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub n_records: u64,
    pub labels: Vec<String>,
    /// Accuracy of a uniform random classifier, `1 / |C|`.
    pub random_baseline: f64,
    pub accuracy: Estimate,
    pub per_variant: BTreeMap<Variant, VariantScore>,
    pub per_guideline: Vec<GuidelineScore>,
    pub degree_curve: Vec<CurvePoint>,
    /// Correlation of degree against mean accuracy; `null` when undefined.
    pub pearson_r: Option<f64>,
    pub adherence: AdherenceMatrix,
    pub refusal_rate: f64,
    pub unparsed_rate: f64,
}

pub fn score_records(
    records: &[EvalRecord],
    guidelines: &HashMap<String, Guideline>,
) -> Result<ScoreReport, MetricError> {
    if records.is_empty() {
        return Err(MetricError::Empty);
    }
    for r in records {
        if !guidelines.contains_key(&r.guideline_id) {
            return Err(MetricError::DanglingGuideline(r.guideline_id.clone()));
        }
    }
    let mut by_variant: BTreeMap<Variant, Vec<EvalRecord>> = BTreeMap::new();
    let mut by_guideline: BTreeMap<&str, Vec<EvalRecord>> = BTreeMap::new();
    for r in records {
        by_variant.entry(r.variant).or_default().push(r.clone());
        by_guideline
            .entry(r.guideline_id.as_str())
            .or_default()
            .push(r.clone());
    }
    let per_variant = by_variant
        .iter()
        .map(|(v, rs)| {
            Ok((
                *v,
                VariantScore {
                    n: rs.len() as u64,
                    accuracy: accuracy(rs)?,
                    refusal_rate: refusal_rate(rs)?,
                    unparsed_rate: unparsed_rate(rs)?,
                },
            ))
        })
        .collect::<Result<_, MetricError>>()?;
    let per_guideline = by_guideline
        .iter()
        .map(|(id, rs)| {
            Ok(GuidelineScore {
                guideline_id: id.to_string(),
                variant: rs[0].variant,
                degree: rs[0].degree,
                accuracy: accuracy(rs)?,
            })
        })
        .collect::<Result<_, MetricError>>()?;
    let degree_curve = match degree_curve(records) {
        Ok(c) => c,
        Err(MetricError::Empty) => Vec::new(),
        Err(e) => return Err(e),
    };
    let points: Vec<(f64, f64)> = degree_curve
        .iter()
        .map(|p| (p.degree as f64, p.mean))
        .collect();
    let pearson_r = match pearson(&points) {
        Ok(r) => r,
        Err(MetricError::TooFew { .. }) => None,
        Err(e) => return Err(e),
    };
    let adherence = adherence_matrix(records, guidelines)?;
    let labels = guidelines
        .get(&records[0].guideline_id)
        .map(|g| g.labels().to_vec())
        .unwrap_or_default();
    Ok(ScoreReport {
        n_records: records.len() as u64,
        random_baseline: 1.0 / labels.len().max(1) as f64,
        labels,
        accuracy: accuracy(records)?,
        per_variant,
        per_guideline,
        degree_curve,
        pearson_r,
        adherence,
        refusal_rate: refusal_rate(records)?,
        unparsed_rate: unparsed_rate(records)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Rule;
    use approx::assert_abs_diff_eq;

    fn set(labels: &[&str]) -> LabelSet {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn record(gold: &str, outcome: Outcome, factual: Option<&str>) -> EvalRecord {
        EvalRecord {
            sentence_id: "s".into(),
            guideline_id: "g".into(),
            variant: Variant::Factual,
            degree: 0,
            factual_gold: gold.into(),
            predicted: Extraction {
                outcome,
                matched_span: None,
                rule: Some(Rule::Exact),
            },
            predicted_factual: factual.map(String::from),
            raw_text: String::new(),
            request_hash: String::new(),
            latency_ms: 0,
            from_cache: false,
        }
    }

    fn hits(correct: usize, total: usize) -> Vec<EvalRecord> {
        (0..total)
            .map(|i| {
                let pred = if i < correct { "A" } else { "B" };
                record("A", Outcome::Label(pred.into()), Some(pred))
            })
            .collect()
    }

    #[test]
    fn accuracy_boundaries() {
        let all = accuracy(&hits(100, 100)).unwrap();
        assert_eq!(all.point, 1.0);
        assert_eq!(all.hi, 1.0);
        assert_eq!(accuracy(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn wilson_eighty_of_hundred() {
        let e = accuracy(&hits(80, 100)).unwrap();
        assert_abs_diff_eq!(e.point, 0.80);
        assert_abs_diff_eq!(e.lo, 0.711_170_834_406_841_1, epsilon = 1e-12);
        assert_abs_diff_eq!(e.hi, 0.866_633_066_668_967_6, epsilon = 1e-12);
    }

    #[test]
    fn refusals_are_incorrect() {
        let rs = vec![
            record("A", Outcome::Refusal, None),
            record("A", Outcome::Unparsed, None),
            record("A", Outcome::Label("A".into()), Some("A")),
        ];
        assert_abs_diff_eq!(accuracy(&rs).unwrap().point, 1.0 / 3.0);
        assert_abs_diff_eq!(refusal_rate(&rs).unwrap(), 1.0 / 3.0);
        assert_abs_diff_eq!(unparsed_rate(&rs).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn refusal_rate_arithmetic() {
        let rs: Vec<_> = (0..50)
            .map(|i| {
                if i < 29 {
                    record("A", Outcome::Refusal, None)
                } else {
                    record("A", Outcome::Label("A".into()), Some("A"))
                }
            })
            .collect();
        assert_abs_diff_eq!(refusal_rate(&rs).unwrap(), 0.58);
        assert_eq!(refusal_rate(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn tally_merge_matches_whole() {
        let rs = hits(37, 90);
        let whole = Tally::of(&rs, EvalRecord::is_correct);
        let merged = rs
            .chunks(7)
            .map(|c| Tally::of(c, EvalRecord::is_correct))
            .fold(Tally::default(), Tally::merge);
        assert_eq!(whole, merged);
    }

    #[test]
    fn curve_single_guideline_has_zero_std() {
        let mut rs = hits(3, 4);
        for r in &mut rs {
            r.variant = Variant::Counterfactual;
            r.degree = 2;
        }
        let c = degree_curve(&rs).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].std, 0.0);
        assert_abs_diff_eq!(c[0].mean, 0.75);
        assert_eq!(degree_curve(&[]), Err(MetricError::Empty));
    }

    #[test]
    fn pearson_cases() {
        let pts = [(0.0, 1.0), (2.0, 0.6), (3.0, 0.4), (4.0, 0.2), (5.0, 0.0)];
        assert_abs_diff_eq!(pearson(&pts).unwrap().unwrap(), -1.0, epsilon = 1e-12);
        assert_eq!(pearson(&[(0.0, 1.0), (1.0, 1.0)]).unwrap(), None);
        assert!(pearson(&[(0.0, 1.0)]).is_err());
    }

    #[test]
    fn disagreement_weights() {
        assert_eq!(disagreement_weight(&set(&["Financial"]), &set(&["Financial"])), 0);
        assert_eq!(
            disagreement_weight(&set(&["Financial", "Human"]), &set(&["Human"])),
            1
        );
        assert_eq!(
            disagreement_weight(&set(&["Financial"]), &set(&["Natural", "Human"])),
            3
        );
    }

    #[test]
    fn weighted_kappa_identical_and_degenerate() {
        let items = vec![
            (set(&["A"]), set(&["A"])),
            (set(&["B", "C"]), set(&["B", "C"])),
            (set(&[]), set(&[])),
        ];
        assert_eq!(weighted_kappa(&items).unwrap(), Some(1.0));
        let constant = vec![(set(&["A"]), set(&["A"])); 4];
        assert_eq!(weighted_kappa(&constant).unwrap(), None);
        assert!(weighted_kappa(&items[..1]).is_err());
    }

    #[test]
    fn weighted_kappa_hand_worked() {
        // D_o = (0 + 1 + 2 + 0 + 1 + 1) / 6 = 5/6.
        // Marginals: a = {A}:3, {A,B}:1, {B}:1, {}:1; b = {A}:2, {B}:2, {A,B}:1, {C}:1.
        // Summing d over all 36 (a_i, b_j) pairs gives 42, so D_e = 42/36.
        let items = vec![
            (set(&["A"]), set(&["A"])),
            (set(&["A", "B"]), set(&["A"])),
            (set(&["A"]), set(&["B"])),
            (set(&["B"]), set(&["B"])),
            (set(&[]), set(&["C"])),
            (set(&["A"]), set(&["A", "B"])),
        ];
        let expected = 1.0 - (5.0 / 6.0) / (42.0 / 36.0);
        assert_abs_diff_eq!(weighted_kappa(&items).unwrap().unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn cohen_kappa_cases() {
        let same: Vec<_> = ["A", "B", "A", "C"].iter().map(|l| (*l, *l)).collect();
        assert_eq!(cohen_kappa(&same).unwrap(), Some(1.0));
        // 20 (x,x), 5 (x,y), 10 (y,x), 15 (y,y): p_o = 0.7, p_e = 0.5.
        let mut table = Vec::new();
        table.extend(std::iter::repeat_n(("x", "x"), 20));
        table.extend(std::iter::repeat_n(("x", "y"), 5));
        table.extend(std::iter::repeat_n(("y", "x"), 10));
        table.extend(std::iter::repeat_n(("y", "y"), 15));
        assert_abs_diff_eq!(cohen_kappa(&table).unwrap().unwrap(), 0.4, epsilon = 1e-12);
        assert_eq!(cohen_kappa(&[("A", "A"), ("A", "A")]).unwrap(), None);
    }

    #[test]
    fn majority_votes() {
        assert_eq!(
            majority_vote(&[set(&["A"]), set(&["A"]), set(&["B"])]).unwrap(),
            Vote::Winner("A".into())
        );
        assert_eq!(
            majority_vote(&[set(&["A"]), set(&["B"]), set(&["C"])]).unwrap(),
            Vote::Tie(vec!["A".into(), "B".into(), "C".into()])
        );
        assert_eq!(
            majority_vote(&[set(&["A", "B"]), set(&["B"]), set(&["C"])]).unwrap(),
            Vote::Winner("B".into())
        );
        assert_eq!(majority_vote(&[set(&[]), set(&[])]).unwrap(), Vote::NoLabels);
        assert!(majority_vote(&[set(&["A"])]).is_err());
    }

    #[test]
    fn equal_rates_have_exact_moments() {
        let t = Tally { hits: 300, total: 500 };
        assert_eq!(mean_and_std(&[t; 10]), (0.6, 0.0));
        let (mean, std) = mean_and_std(&[Tally { hits: 1, total: 2 }, Tally { hits: 2, total: 2 }]);
        assert_eq!((mean, std), (0.75, 0.25));
        let (mean, _) = mean_and_std(&[Tally { hits: 1, total: 2 }, Tally { hits: 1, total: 4 }]);
        assert_eq!(mean, 0.375);
    }

    #[test]
    fn constant_points_have_no_correlation() {
        assert_eq!(pearson(&[(0.0, 0.6), (2.0, 0.6), (3.0, 0.6)]).unwrap(), None);
        assert_eq!(pearson(&[(1.0, 0.1), (1.0, 0.6)]).unwrap(), None);
    }
}
