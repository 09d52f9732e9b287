//! Inputs shared by the benchmarks.

use guideline_probe::metrics::LabelSet;

const LABELS: [&str; 6] = ["Financial", "Manufactured", "Intellectual", "Human", "Social", "Natural"];

/// `n` annotator pairs over six labels, each set holding zero to two labels.
/// Deterministic, with roughly half the pairs in agreement.
pub fn label_set_pairs(n: usize) -> Vec<(LabelSet, LabelSet)> {
    let set = |x: usize| -> LabelSet {
        (0..x % 3)
            .map(|j| LABELS[(x / 3 + j * 5) % LABELS.len()].to_string())
            .collect()
    };
    (0..n)
        .map(|i| {
            let a = set(i.wrapping_mul(7919) % 97);
            let b = if i % 2 == 0 { a.clone() } else { set(i.wrapping_mul(104_729) % 89) };
            (a, b)
        })
        .collect()
}
