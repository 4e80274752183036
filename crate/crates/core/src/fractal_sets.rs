//! Digit-restriction sets: deterministic subsets of `[0,1]` whose binary
//! expansions are concatenations of allowed `b`-bit blocks.
//!
//! Their Euclidean dimension is exactly `log₂|A| / b`, and their canonical
//! covers are unions of dyadic cells, so they line up with the cascade tree.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::cascade::DyadicIndex;
use crate::scalar::Real;
use crate::weights::parse_pairs;

pub const MAX_BLOCK: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SetError {
    #[error("block length must be in 1..={MAX_BLOCK}, got {0}")]
    BlockLength(u32),
    #[error("allowed word list is empty")]
    Empty,
    #[error("word '{word}' is not a {block}-bit binary string")]
    BadWord { word: String, block: u32 },
    #[error("cannot parse set description: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitRestrictionSet {
    block: u32,
    allowed: BTreeSet<u64>,
    /// `prefixes[r]`: the distinct `r`-bit prefixes of allowed words, `r < block`.
    prefixes: Vec<BTreeSet<u64>>,
}

impl DigitRestrictionSet {
    /// Builds the set from allowed words given as integers whose `block`
    /// low bits are read most significant first.
    pub fn new(block: u32, allowed: impl IntoIterator<Item = u64>) -> Result<Self, SetError> {
        if block == 0 || block > MAX_BLOCK {
            return Err(SetError::BlockLength(block));
        }
        let allowed: BTreeSet<u64> = allowed.into_iter().collect();
        if allowed.is_empty() {
            return Err(SetError::Empty);
        }
        if let Some(&bad) = allowed.iter().find(|&&w| w >> block != 0) {
            return Err(SetError::BadWord { word: format!("{bad:b}"), block });
        }
        let prefixes = (0..block)
            .map(|r| allowed.iter().map(|w| w >> (block - r)).collect())
            .collect();
        Ok(Self { block, allowed, prefixes })
    }

    /// Builds the set from binary strings such as `"00"`, `"11"`.
    pub fn from_words<S: AsRef<str>>(block: u32, words: &[S]) -> Result<Self, SetError> {
        let parsed = words
            .iter()
            .map(|w| {
                let w = w.as_ref().trim();
                if w.len() != block as usize || !w.bytes().all(|c| c == b'0' || c == b'1') {
                    return Err(SetError::BadWord { word: w.to_string(), block });
                }
                Ok(u64::from_str_radix(w, 2).expect("validated binary"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(block, parsed)
    }

    /// `[0,1]` itself.
    pub fn full() -> Self {
        Self::new(1, [0, 1]).expect("valid")
    }

    /// The single point `{0}`.
    pub fn point() -> Self {
        Self::new(1, [0]).expect("valid")
    }

    pub fn block(&self) -> u32 {
        self.block
    }

    pub fn allowed(&self) -> impl Iterator<Item = u64> + '_ {
        self.allowed.iter().copied()
    }

    pub fn allowed_count(&self) -> usize {
        self.allowed.len()
    }

    /// Exact Euclidean Hausdorff dimension `log₂|A| / b`.
    pub fn zeta0<T: Real>(&self) -> T {
        T::lit(self.allowed.len() as f64).log2() / T::lit(self.block as f64)
    }

    /// Whether the binary prefix of `cell` extends to an admissible expansion.
    pub fn admits(&self, cell: DyadicIndex) -> bool {
        let b = self.block;
        let full = cell.level / b;
        let rem = cell.level % b;
        let mask = (1u64 << b) - 1;
        for i in 0..full {
            let shift = cell.level - (i + 1) * b;
            if !self.allowed.contains(&((cell.index >> shift) & mask)) {
                return false;
            }
        }
        rem == 0 || self.prefixes[rem as usize].contains(&(cell.index & ((1u64 << rem) - 1)))
    }

    /// Canonical level-`n` dyadic cover, streamed in increasing index order.
    pub fn cover(&self, n: u32) -> Cover<'_> {
        Cover { set: self, target: n, stack: vec![DyadicIndex::ROOT] }
    }

    /// Number of cells in `cover(n)`, without enumerating them.
    pub fn cover_count(&self, n: u32) -> u64 {
        let full = n / self.block;
        let rem = n % self.block;
        let partial = if rem == 0 { 1 } else { self.prefixes[rem as usize].len() as u64 };
        (self.allowed.len() as u64).pow(full) * partial
    }

    /// Parses `set=digits b=2 allow=00,11`, `set=full` or `set=point`.
    pub fn parse(text: &str) -> Result<Self, SetError> {
        let pairs = parse_pairs(text).map_err(SetError::Parse)?;
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        match get("set").ok_or_else(|| SetError::Parse("missing set=".into()))? {
            "full" => Ok(Self::full()),
            "point" => Ok(Self::point()),
            "digits" => {
                let b = get("b")
                    .ok_or_else(|| SetError::Parse("missing b=".into()))?
                    .parse::<u32>()
                    .map_err(|e| SetError::Parse(format!("b: {e}")))?;
                let allow = get("allow").ok_or_else(|| SetError::Parse("missing allow=".into()))?;
                let words: Vec<&str> = allow.split(',').collect();
                Self::from_words(b, &words)
            }
            other => Err(SetError::Parse(format!("unknown set kind '{other}'"))),
        }
    }
}

impl fmt::Display for DigitRestrictionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.block as usize;
        let words: Vec<String> = self.allowed.iter().map(|w| format!("{w:0b$b}")).collect();
        write!(f, "set=digits b={} allow={}", self.block, words.join(","))
    }
}

/// Depth-first stream of the cells of a canonical cover.
pub struct Cover<'a> {
    set: &'a DigitRestrictionSet,
    target: u32,
    stack: Vec<DyadicIndex>,
}

impl Iterator for Cover<'_> {
    type Item = DyadicIndex;

    fn next(&mut self) -> Option<DyadicIndex> {
        while let Some(node) = self.stack.pop() {
            if node.level == self.target {
                return Some(node);
            }
            for child in [node.right(), node.left()] {
                if self.set.admits(child) {
                    self.stack.push(child);
                }
            }
        }
        None
    }
}
