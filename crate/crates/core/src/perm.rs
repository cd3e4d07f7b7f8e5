//! Permutations of `[n]` in lexicographic order.
//!
//! Internally a permutation is 0-based: `eta[l]` is the server at sort
//! position `l` (position 0 holds the longest scaled queue). Text formats use
//! 1-based indices.

use std::fmt;

use crate::error::{Error, Result};

/// Largest `n` for which all `n!` permutations are enumerated (40,320 entries).
pub const ENUMERATION_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    /// Builds a permutation from 0-based indices, checking bijectivity.
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        let n = indices.len();
        let mut seen = vec![false; n];
        for &i in &indices {
            if i >= n || seen[i] {
                return Err(Error::InvalidPermutation(format!("{indices:?}")));
            }
            seen[i] = true;
        }
        Ok(Permutation(indices))
    }

    /// Builds a permutation from 1-based indices such as `[2, 1, 3]`.
    pub fn from_one_based(indices: &[usize]) -> Result<Self> {
        if indices.contains(&0) {
            return Err(Error::InvalidPermutation(format!("{indices:?}")));
        }
        Self::new(indices.iter().map(|&i| i - 1).collect())
    }

    pub(crate) fn from_vec_unchecked(indices: Vec<usize>) -> Self {
        debug_assert!(Self::new(indices.clone()).is_ok());
        Permutation(indices)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    /// Server at (0-based) sort position `position`.
    pub fn at(&self, position: usize) -> usize {
        self.0[position]
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }

    /// Lexicographic rank in `0..n!` (Lehmer code).
    pub fn rank(&self) -> usize {
        let n = self.0.len();
        let mut rank = 0;
        for i in 0..n {
            let smaller_after = self.0[i + 1..].iter().filter(|&&x| x < self.0[i]).count();
            rank += smaller_after * factorial(n - 1 - i);
        }
        rank
    }

    /// Advances to the next permutation in lexicographic order. Returns
    /// `false` (leaving `self` unchanged) when `self` is the last one.
    pub fn advance(&mut self) -> bool {
        let v = &mut self.0;
        if v.len() < 2 {
            return false;
        }
        let mut i = v.len() - 1;
        while i > 0 && v[i - 1] >= v[i] {
            i -= 1;
        }
        if i == 0 {
            return false;
        }
        let mut j = v.len() - 1;
        while v[j] <= v[i - 1] {
            j -= 1;
        }
        v.swap(i - 1, j);
        v[i..].reverse();
        true
    }
}

impl fmt::Display for Permutation {
    /// Space-separated, 1-based.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", i + 1)?;
        }
        Ok(())
    }
}

impl serde::Serialize for Permutation {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.0.iter().map(|i| i + 1))
    }
}

pub fn factorial(n: usize) -> usize {
    (1..=n).product()
}

/// Iterator over all permutations of `[n]` in lexicographic order.
pub struct AllPermutations {
    next: Option<Permutation>,
}

impl Iterator for AllPermutations {
    type Item = Permutation;

    fn next(&mut self) -> Option<Permutation> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        if succ.advance() {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// All permutations of `[n]`, rejecting `n` above [`ENUMERATION_LIMIT`].
pub fn all(n: usize) -> Result<AllPermutations> {
    if n > ENUMERATION_LIMIT {
        return Err(Error::Capacity {
            n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(AllPermutations {
        next: Some(Permutation::identity(n)),
    })
}
