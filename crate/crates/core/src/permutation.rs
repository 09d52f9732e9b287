//! Permutations over `0..n` and enumeration by number of moved points.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PermutationError {
    #[error("not a bijection over 0..{len}: {detail}")]
    NotBijective { len: usize, detail: String },
    #[error("no permutation moves exactly one point")]
    DegreeOne,
    #[error("degree {degree} exceeds the {len} available points")]
    DegreeTooLarge { degree: usize, len: usize },
}

/// A bijection `i -> self[i]` over `0..n`.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn new(images: Vec<usize>) -> Result<Self, PermutationError> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &v in &images {
            if v >= n {
                return Err(PermutationError::NotBijective {
                    len: n,
                    detail: format!("image {v} out of range"),
                });
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(PermutationError::NotBijective {
                    len: n,
                    detail: format!("image {v} repeated"),
                });
            }
        }
        Ok(Permutation(images))
    }

    /// Transposition of `a` and `b` over `0..n`.
    pub fn swap(n: usize, a: usize, b: usize) -> Self {
        let mut p = Self::identity(n);
        p.0.swap(a, b);
        p
    }

    /// Cyclic permutation `c[0] -> c[1] -> ... -> c[0]` over `0..n`.
    pub fn cycle(n: usize, c: &[usize]) -> Self {
        let mut p = Self::identity(n);
        for (i, &from) in c.iter().enumerate() {
            p.0[from] = c[(i + 1) % c.len()];
        }
        p
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Permutation(inv)
    }

    /// Number of indices with `p(i) != i`.
    pub fn degree(&self) -> usize {
        self.0.iter().enumerate().filter(|(i, v)| i != *v).count()
    }

    pub fn moved_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.0
            .iter()
            .enumerate()
            .filter(|(i, v)| i != *v)
            .map(|(i, _)| i)
    }

    pub fn is_identity(&self) -> bool {
        self.degree() == 0
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = PermutationError;

    fn try_from(v: Vec<usize>) -> Result<Self, Self::Error> {
        Permutation::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.0)
    }
}

pub fn check_degree(n: usize, k: usize) -> Result<(), PermutationError> {
    if k == 1 {
        return Err(PermutationError::DegreeOne);
    }
    if k > n {
        return Err(PermutationError::DegreeTooLarge { degree: k, len: n });
    }
    Ok(())
}

/// All permutations of `0..n` moving exactly `k` points, in lexicographic order.
///
/// Depth-first over positions, trying images in increasing order, pruning any
/// prefix that already has too many fixed points or too many moved points.
pub fn permutations_with_degree(n: usize, k: usize) -> Result<Vec<Permutation>, PermutationError> {
    check_degree(n, k)?;
    let mut out = Vec::new();
    let mut images = Vec::with_capacity(n);
    let mut used = vec![false; n];
    extend(n, k, 0, &mut images, &mut used, &mut out);
    Ok(out)
}

fn extend(
    n: usize,
    k: usize,
    moved: usize,
    images: &mut Vec<usize>,
    used: &mut [bool],
    out: &mut Vec<Permutation>,
) {
    let pos = images.len();
    if pos == n {
        if moved == k {
            out.push(Permutation(images.clone()));
        }
        return;
    }
    let fixed = pos - moved;
    let remaining = n - pos;
    for v in 0..n {
        if used[v] {
            continue;
        }
        let moves = usize::from(v != pos);
        if moved + moves > k || fixed + (1 - moves) > n - k {
            continue;
        }
        if moved + moves + (remaining - 1) < k {
            continue;
        }
        used[v] = true;
        images.push(v);
        extend(n, k, moved + moves, images, used, out);
        images.pop();
        used[v] = false;
    }
}

/// Number of permutations of `n` points moving exactly `k`: `C(n, k) * !k`.
pub fn count_with_degree(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    binomial(n, k) * subfactorial(k)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

fn subfactorial(k: usize) -> u128 {
    // !0 = 1, !1 = 0, !k = (k - 1)(!(k-1) + !(k-2))
    let (mut a, mut b) = (1u128, 0u128);
    if k == 0 {
        return a;
    }
    for i in 2..=k {
        let next = (i as u128 - 1) * (a + b);
        a = b;
        b = next;
    }
    b
}
