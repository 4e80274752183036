//! Lazily generated cascade realizations on the dyadic tree.
//!
//! A realization never stores its weights. The weight of cell `(level, index)`
//! is regenerated from a keyed stream, so cells can be evaluated in any order
//! and on any thread with bit-identical results. Level-`n` masses are
//! `μₙ(I) = 2^{−n} ∏_{j<n} W_{I_j}`, where `I_j` runs over the ancestors of `I`
//! from the root `[0,1]` down to (but excluding) `I` itself.
//!
//! Every mass is built by the same chain `m ← m · W · ½` from the root, and
//! every sum over a subtree is `sum(left) + sum(right)`. Reductions are
//! therefore pairwise and independent of traversal order or thread count.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::rng::RandomStream;
use crate::scalar::Real;
use crate::weights::WeightModel;

pub const DEFAULT_MAX_LEVEL: u32 = 24;
/// Deepest level a dyadic point may be expressed at.
pub const MAX_POINT_LEVEL: u32 = 62;
/// Subtrees at least this deep are summed with `rayon::join`.
const PARALLEL_SUBTREE_DEPTH: u32 = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CascadeError {
    #[error("level {level} exceeds the realization's maximum level {max_level}")]
    DepthExceeded { level: u32, max_level: u32 },
    #[error("index {index} is out of range for level {level}")]
    IndexOutOfRange { level: u32, index: u64 },
    #[error("{0} is not a dyadic rational in [0, 1]")]
    NonDyadic(String),
    #[error("weight table has {got} entries, a depth-{depth} tree needs {need}")]
    TableSize { depth: u32, got: usize, need: usize },
}

/// The dyadic interval `[k·2^{−n}, (k+1)·2^{−n}]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DyadicIndex {
    pub level: u32,
    pub index: u64,
}

impl DyadicIndex {
    pub const ROOT: DyadicIndex = DyadicIndex { level: 0, index: 0 };

    pub fn new(level: u32, index: u64) -> Result<Self, CascadeError> {
        if level > MAX_POINT_LEVEL || index >> level != 0 {
            return Err(CascadeError::IndexOutOfRange { level, index });
        }
        Ok(Self { level, index })
    }

    pub fn parent(self) -> Option<Self> {
        (self.level > 0).then(|| Self { level: self.level - 1, index: self.index >> 1 })
    }

    pub fn left(self) -> Self {
        Self { level: self.level + 1, index: self.index << 1 }
    }

    pub fn right(self) -> Self {
        Self { level: self.level + 1, index: (self.index << 1) | 1 }
    }

    /// The ancestor at `level` (itself when `level == self.level`).
    pub fn ancestor(self, level: u32) -> Self {
        debug_assert!(level <= self.level);
        Self { level, index: self.index >> (self.level - level) }
    }

    pub fn width<T: Real>(self) -> T {
        T::lit(2.0).powi(-(self.level as i32))
    }

    pub fn left_endpoint<T: Real>(self) -> T {
        T::lit(self.index as f64) * self.width::<T>()
    }

    pub fn midpoint(self) -> DyadicPoint {
        DyadicPoint { level: self.level + 1, numerator: 2 * self.index + 1 }
    }

    pub fn left_point(self) -> DyadicPoint {
        DyadicPoint { level: self.level, numerator: self.index }
    }
}

/// The dyadic rational `numerator·2^{−level}` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct DyadicPoint {
    pub level: u32,
    pub numerator: u64,
}

impl DyadicPoint {
    pub const ZERO: DyadicPoint = DyadicPoint { level: 0, numerator: 0 };
    pub const ONE: DyadicPoint = DyadicPoint { level: 0, numerator: 1 };

    pub fn new(level: u32, numerator: u64) -> Result<Self, CascadeError> {
        if level > MAX_POINT_LEVEL || numerator > 1u64 << level {
            return Err(CascadeError::NonDyadic(format!("{numerator}/2^{level}")));
        }
        Ok(Self { level, numerator })
    }

    /// Exact conversion; rejects values outside `[0,1]` or not of the form `k/2^m` with `m ≤ 62`.
    pub fn from_f64(x: f64) -> Result<Self, CascadeError> {
        if !(0.0..=1.0).contains(&x) {
            return Err(CascadeError::NonDyadic(x.to_string()));
        }
        for level in 0..=MAX_POINT_LEVEL {
            let scaled = x * (1u64 << level) as f64;
            if scaled.fract() == 0.0 {
                return Ok(Self { level, numerator: scaled as u64 });
            }
        }
        Err(CascadeError::NonDyadic(x.to_string()))
    }

    /// Smallest level at which the point is a cell boundary.
    pub fn reduced(self) -> Self {
        if self.numerator == 0 {
            return Self::ZERO;
        }
        let shift = self.numerator.trailing_zeros().min(self.level);
        Self { level: self.level - shift, numerator: self.numerator >> shift }
    }

    pub fn value(self) -> f64 {
        self.numerator as f64 / (1u64 << self.level) as f64
    }

    /// The level-`n` cell containing the point, cells taken left-closed
    /// right-open except the last one.
    pub fn cell(self, n: u32) -> DyadicIndex {
        let index = if n >= self.level {
            self.numerator << (n - self.level)
        } else {
            self.numerator >> (self.level - n)
        };
        DyadicIndex { level: n, index: index.min((1u64 << n) - 1) }
    }
}

/// How the unresolved mass below the truncation depth is treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailMode {
    /// Replace the tail by its expectation 1.
    Mean,
    /// Multiply each level-`n` cell by the normalized total of its own
    /// depth-`m` subtree, i.e. report `μ_{n+m}(I)`.
    Subtree(u32),
}

/// Level-`n` cell together with its truncated mass `μₙ(I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMass<T> {
    pub index: DyadicIndex,
    pub mass: T,
}

#[derive(Debug, Clone)]
enum WeightSource<T> {
    Keyed { model: Arc<WeightModel<T>>, seed: u64 },
    /// Weights in heap order: level `j` index `k` at `2^j − 1 + k`.
    Table { weights: Arc<[T]>, depth: u32 },
}

/// One cascade realization, immutable once built.
#[derive(Debug, Clone)]
pub struct CascadeRealization<T> {
    source: WeightSource<T>,
    max_level: u32,
    tail: TailMode,
}

impl<T: Real> CascadeRealization<T> {
    pub fn new(model: WeightModel<T>, seed: u64) -> Self {
        Self::shared(Arc::new(model), seed)
    }

    /// Realization sharing a model with its siblings.
    pub fn shared(model: Arc<WeightModel<T>>, seed: u64) -> Self {
        Self {
            source: WeightSource::Keyed { model, seed },
            max_level: DEFAULT_MAX_LEVEL,
            tail: TailMode::Mean,
        }
    }

    /// A realization with explicitly supplied weights for levels `0..depth`,
    /// in heap order. Masses are available up to level `depth`.
    pub fn from_weight_table(weights: Vec<T>, depth: u32) -> Result<Self, CascadeError> {
        let need = (1usize << depth) - 1;
        if weights.len() != need {
            return Err(CascadeError::TableSize { depth, got: weights.len(), need });
        }
        Ok(Self {
            source: WeightSource::Table { weights: weights.into(), depth },
            max_level: depth,
            tail: TailMode::Mean,
        })
    }

    pub fn with_max_level(mut self, max_level: u32) -> Self {
        self.max_level = match self.source {
            WeightSource::Table { depth, .. } => max_level.min(depth),
            WeightSource::Keyed { .. } => max_level.min(MAX_POINT_LEVEL),
        };
        self
    }

    /// Tail mode. Ignored for weight tables, which have no deeper weights.
    pub fn with_tail(mut self, tail: TailMode) -> Self {
        if matches!(self.source, WeightSource::Keyed { .. }) {
            self.tail = tail;
        }
        self
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn tail(&self) -> TailMode {
        self.tail
    }

    pub fn seed(&self) -> Option<u64> {
        match self.source {
            WeightSource::Keyed { seed, .. } => Some(seed),
            WeightSource::Table { .. } => None,
        }
    }

    pub fn model(&self) -> Option<&WeightModel<T>> {
        match &self.source {
            WeightSource::Keyed { model, .. } => Some(model),
            WeightSource::Table { .. } => None,
        }
    }

    fn check_level(&self, level: u32) -> Result<(), CascadeError> {
        if level > self.max_level {
            Err(CascadeError::DepthExceeded { level, max_level: self.max_level })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn weight_raw(&self, cell: DyadicIndex) -> T {
        match &self.source {
            WeightSource::Keyed { model, seed } => {
                model.sample(&mut RandomStream::for_cell(*seed, cell.level, cell.index))
            }
            WeightSource::Table { weights, .. } => {
                weights[((1usize << cell.level) - 1) + cell.index as usize]
            }
        }
    }

    /// `W_I`.
    pub fn cell_weight(&self, cell: DyadicIndex) -> Result<T, CascadeError> {
        self.check_level(cell.level)?;
        if let WeightSource::Table { depth, .. } = self.source {
            if cell.level >= depth {
                return Err(CascadeError::DepthExceeded { level: cell.level, max_level: depth - 1 });
            }
        }
        Ok(self.weight_raw(cell))
    }

    #[inline]
    fn child_prefix(&self, node: DyadicIndex, prefix: T) -> T {
        prefix * self.weight_raw(node) * T::lit(0.5)
    }

    /// Product chain from `top` (with mass `prefix`) down to `cell`.
    fn chain_mass(&self, top: DyadicIndex, prefix: T, cell: DyadicIndex) -> T {
        (top.level..cell.level).fold(prefix, |m, j| self.child_prefix(cell.ancestor(j), m))
    }

    #[inline]
    fn leaf_value(&self, cell: DyadicIndex, prefix: T) -> T {
        match self.tail {
            TailMode::Mean => prefix,
            TailMode::Subtree(m) => {
                prefix * self.subtree_sum_raw(cell, T::one(), cell.level + m, TailMode::Mean)
            }
        }
    }

    /// `μₙ(I)`, including the tail factor when one is configured.
    pub fn mass(&self, cell: DyadicIndex) -> Result<T, CascadeError> {
        self.check_level(cell.level)?;
        let prefix = self.chain_mass(DyadicIndex::ROOT, T::one(), cell);
        Ok(self.leaf_value(cell, prefix))
    }

    /// Pairwise sum of the leaves at `target` below `node`, where `prefix`
    /// is the mass already accumulated at `node`.
    fn subtree_sum_raw(&self, node: DyadicIndex, prefix: T, target: u32, tail: TailMode) -> T {
        if node.level == target {
            return match tail {
                TailMode::Mean => prefix,
                TailMode::Subtree(_) => self.leaf_value(node, prefix),
            };
        }
        let child = self.child_prefix(node, prefix);
        if target - node.level >= PARALLEL_SUBTREE_DEPTH {
            let (l, r) = rayon::join(
                || self.subtree_sum_raw(node.left(), child, target, tail),
                || self.subtree_sum_raw(node.right(), child, target, tail),
            );
            l + r
        } else {
            self.subtree_sum_raw(node.left(), child, target, tail)
                + self.subtree_sum_raw(node.right(), child, target, tail)
        }
    }

    fn subtree_sum(&self, node: DyadicIndex, prefix: T, target: u32) -> T {
        self.subtree_sum_raw(node, prefix, target, self.tail)
    }

    /// `μₙ(I)` summed over the level-`n` descendants of `cell`, i.e. `μₙ(I)` for
    /// the interval `I` itself computed from its refinement.
    pub fn subtree_mass(&self, cell: DyadicIndex, n: u32) -> Result<T, CascadeError> {
        self.check_level(n)?;
        if n < cell.level {
            return Err(CascadeError::DepthExceeded { level: cell.level, max_level: n });
        }
        let prefix = self.chain_mass(DyadicIndex::ROOT, T::one(), cell);
        Ok(self.subtree_sum(cell, prefix, n))
    }

    /// `ℓₙ = μₙ[0,1]`.
    pub fn ell_n(&self, n: u32) -> Result<T, CascadeError> {
        self.check_level(n)?;
        Ok(self.subtree_sum(DyadicIndex::ROOT, T::one(), n))
    }

    /// Depth-first stream of all level-`n` cells in increasing index order.
    pub fn cells(&self, n: u32) -> Result<LevelStream<'_, T>, CascadeError> {
        self.check_level(n)?;
        Ok(CellStream::new(self, n, keep_all as fn(DyadicIndex) -> bool))
    }

    /// Depth-first stream of the level-`n` cells whose every ancestor (and
    /// the cell itself) satisfies `keep`; pruned subtrees are never generated.
    pub fn cells_where<F>(&self, n: u32, keep: F) -> Result<CellStream<'_, T, F>, CascadeError>
    where
        F: Fn(DyadicIndex) -> bool,
    {
        self.check_level(n)?;
        Ok(CellStream::new(self, n, keep))
    }

    /// Preorder stream of every kept node with level `≤ depth`. Within each
    /// level, nodes appear in increasing index order.
    pub fn nodes_where<F>(&self, depth: u32, keep: F) -> Result<CellStream<'_, T, F>, CascadeError>
    where
        F: Fn(DyadicIndex) -> bool,
    {
        self.check_level(depth)?;
        let mut stream = CellStream::new(self, depth, keep);
        stream.emit_all = true;
        Ok(stream)
    }

    /// All level-`n` masses with a pairwise summation tree, for repeated
    /// CDF queries.
    pub fn snapshot(&self, n: u32) -> Result<LevelSnapshot<T>, CascadeError> {
        self.check_level(n)?;
        let leaves: Vec<T> = CellStream::new(self, n, keep_all).map(|c| c.mass).collect();
        Ok(LevelSnapshot::from_leaves(n, leaves))
    }

    /// `Fₙ(x) = μₙ[0, x]`. Points finer than level `n` are interpolated
    /// linearly inside their level-`n` cell, which is exact for `μₙ`.
    pub fn cdf(&self, n: u32, x: DyadicPoint) -> Result<T, CascadeError> {
        self.check_level(n)?;
        let x = x.reduced();
        if x.level > n {
            let cell = x.cell(n);
            let left = self.cdf(n, cell.left_point())?;
            let frac = T::lit((x.numerator - (cell.index << (x.level - n))) as f64)
                * T::lit(2.0).powi(-((x.level - n) as i32));
            return Ok(left + self.mass(cell)? * frac);
        }
        let k = x.numerator << (n - x.level);
        if k == 1u64 << n {
            return self.ell_n(n);
        }
        let mut acc = T::zero();
        let mut node = DyadicIndex::ROOT;
        let mut prefix = T::one();
        for depth in 0..n {
            let child = self.child_prefix(node, prefix);
            if (k >> (n - 1 - depth)) & 1 == 1 {
                acc = acc + self.subtree_sum(node.left(), child, n);
                node = node.right();
            } else {
                node = node.left();
            }
            prefix = child;
        }
        Ok(acc)
    }

    /// `ρₙ(x, y) = |Fₙ(y) − Fₙ(x)|`.
    pub fn rho(&self, n: u32, x: DyadicPoint, y: DyadicPoint) -> Result<T, CascadeError> {
        if x.reduced() == y.reduced() {
            self.check_level(n)?;
            return Ok(T::zero());
        }
        Ok((self.cdf(n, y)? - self.cdf(n, x)?).abs())
    }

    /// `ρ(x,y) ∨ μₙ(Iₙ(x)) ∨ μₙ(Iₙ(y))`; strictly positive, also on the diagonal.
    pub fn rho_trunc(&self, n: u32, x: DyadicPoint, y: DyadicPoint) -> Result<T, CascadeError> {
        let r = self.rho(n, x, y)?;
        let mx = self.mass(x.cell(n))?;
        let my = self.mass(y.cell(n))?;
        Ok(r.max(mx).max(my))
    }

    /// Largest level-`n` cell mass.
    pub fn max_atom(&self, n: u32) -> Result<T, CascadeError> {
        Ok(self.cells(n)?.fold(T::zero(), |m, c| m.max(c.mass)))
    }

    /// `|ℓₙ − W_{[0,1]}(ℓ′_{n−1} + ℓ″_{n−1})/2| / ℓₙ`, where `ℓ′`, `ℓ″` are the
    /// totals of the two half-subtrees rescaled to `[0,1]`.
    pub fn recursion_check(&self, n: u32) -> Result<T, CascadeError> {
        self.check_level(n)?;
        if n == 0 {
            return Ok(T::zero());
        }
        let ell = self.ell_n(n)?;
        let left = self.subtree_sum(DyadicIndex::ROOT.left(), T::one(), n);
        let right = self.subtree_sum(DyadicIndex::ROOT.right(), T::one(), n);
        let recombined = self.weight_raw(DyadicIndex::ROOT) * (left + right) * T::lit(0.5);
        Ok((ell - recombined).abs() / ell)
    }
}

fn keep_all(_: DyadicIndex) -> bool {
    true
}

/// Lazy depth-first traversal yielding level-`n` cells left to right, with
/// `O(n)` memory.
/// [`CellStream`] over a whole level.
pub type LevelStream<'a, T> = CellStream<'a, T, fn(DyadicIndex) -> bool>;

pub struct CellStream<'a, T, F> {
    real: &'a CascadeRealization<T>,
    target: u32,
    keep: F,
    stack: Vec<(DyadicIndex, T)>,
    emit_all: bool,
}

impl<'a, T: Real, F: Fn(DyadicIndex) -> bool> CellStream<'a, T, F> {
    fn new(real: &'a CascadeRealization<T>, target: u32, keep: F) -> Self {
        let mut stack = Vec::with_capacity(target as usize + 2);
        if keep(DyadicIndex::ROOT) {
            stack.push((DyadicIndex::ROOT, T::one()));
        }
        Self { real, target, keep, stack, emit_all: false }
    }
}

impl<T: Real, F: Fn(DyadicIndex) -> bool> Iterator for CellStream<'_, T, F> {
    type Item = CellMass<T>;

    fn next(&mut self) -> Option<CellMass<T>> {
        while let Some((node, prefix)) = self.stack.pop() {
            if node.level < self.target {
                let child = self.real.child_prefix(node, prefix);
                let (l, r) = (node.left(), node.right());
                if (self.keep)(r) {
                    self.stack.push((r, child));
                }
                if (self.keep)(l) {
                    self.stack.push((l, child));
                }
            }
            if self.emit_all || node.level == self.target {
                return Some(CellMass { index: node, mass: self.real.leaf_value(node, prefix) });
            }
        }
        None
    }
}

/// Materialized level-`n` masses with pairwise partial sums.
#[derive(Debug, Clone)]
pub struct LevelSnapshot<T> {
    level: u32,
    /// `sums[d]` holds the `2^d` subtree sums at depth `d`; `sums[level]` are the leaves.
    sums: Vec<Vec<T>>,
}

impl<T: Real> LevelSnapshot<T> {
    fn from_leaves(level: u32, leaves: Vec<T>) -> Self {
        let mut sums = vec![leaves];
        for _ in 0..level {
            let below = sums.last().expect("non-empty");
            let above = below.chunks(2).map(|p| p[0] + p[1]).collect();
            sums.push(above);
        }
        sums.reverse();
        Self { level, sums }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn masses(&self) -> &[T] {
        &self.sums[self.level as usize]
    }

    pub fn mass(&self, index: u64) -> T {
        self.masses()[index as usize]
    }

    pub fn total(&self) -> T {
        self.sums[0][0]
    }

    /// `Fₙ(k·2^{−n})`, bit-identical to [`CascadeRealization::cdf`].
    pub fn cdf_at(&self, k: u64) -> T {
        let n = self.level;
        if k >= 1u64 << n {
            return self.total();
        }
        let mut acc = T::zero();
        let mut node = 0u64;
        for depth in 0..n {
            if (k >> (n - 1 - depth)) & 1 == 1 {
                acc = acc + self.sums[depth as usize + 1][(node << 1) as usize];
                node = (node << 1) | 1;
            } else {
                node <<= 1;
            }
        }
        acc
    }

    /// `Fₙ` at the midpoint of cell `k`.
    pub fn cdf_mid(&self, k: u64) -> T {
        self.cdf_at(k) + self.mass(k) * T::lit(0.5)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::LN_2;

    fn lognormal(seed: u64) -> CascadeRealization<f64> {
        CascadeRealization::new(WeightModel::lognormal(LN_2).unwrap(), seed)
    }

    fn flat() -> CascadeRealization<f64> {
        CascadeRealization::new(WeightModel::two_point(0.0).unwrap(), 1)
    }

    fn p(level: u32, k: u64) -> DyadicPoint {
        DyadicPoint::new(level, k).unwrap()
    }

    #[test]
    fn dyadic_index_navigation() {
        let i = DyadicIndex::new(3, 5).unwrap();
        assert_eq!(i.parent(), Some(DyadicIndex { level: 2, index: 2 }));
        assert_eq!(i.ancestor(0), DyadicIndex::ROOT);
        assert_eq!(i.left(), DyadicIndex { level: 4, index: 10 });
        assert_eq!(i.right(), DyadicIndex { level: 4, index: 11 });
        assert_eq!(i.left_endpoint::<f64>(), 0.625);
        assert!(DyadicIndex::new(2, 4).is_err());
        assert_eq!(DyadicIndex::ROOT.parent(), None);
    }

    #[test]
    fn dyadic_points() {
        assert_eq!(DyadicPoint::from_f64(0.375).unwrap(), p(3, 3));
        assert_eq!(DyadicPoint::from_f64(1.0 / 3.0).unwrap().level, 54);
        assert!(DyadicPoint::from_f64(1e-30).is_err());
        assert!(DyadicPoint::from_f64(1.5).is_err());
        assert_eq!(p(4, 8).reduced(), p(1, 1));
        assert_eq!(DyadicPoint::ONE.cell(3).index, 7);
        assert_eq!(p(2, 1).cell(3).index, 2);
        assert_eq!(p(3, 5).cell(1).index, 1);
    }

    #[test]
    fn degenerate_cascade_is_lebesgue() {
        let r = flat();
        for n in 0..8 {
            assert_eq!(r.ell_n(n).unwrap(), 1.0);
            assert_eq!(r.max_atom(n).unwrap(), 0.5f64.powi(n as i32));
            for c in r.cells(n).unwrap() {
                assert_eq!(c.mass, 0.5f64.powi(n as i32));
            }
        }
        assert_eq!(r.cdf(5, p(5, 11)).unwrap(), 11.0 / 32.0);
        assert_eq!(r.rho(5, p(3, 1), p(2, 3)).unwrap(), 0.625);
        assert_eq!(r.rho_trunc(1, DyadicPoint::ZERO, DyadicPoint::ONE).unwrap(), 1.0);
        assert_eq!(r.recursion_check(6).unwrap(), 0.0);
    }

    #[test]
    fn root_and_first_level() {
        let r = lognormal(3);
        assert_eq!(r.mass(DyadicIndex::ROOT).unwrap(), 1.0);
        assert_eq!(r.ell_n(0).unwrap(), 1.0);
        let w = r.cell_weight(DyadicIndex::ROOT).unwrap();
        assert_eq!(r.ell_n(1).unwrap(), w * 0.5 + w * 0.5);
        assert_eq!(r.recursion_check(1).unwrap(), 0.0);
    }

    #[test]
    fn weights_are_keyed_and_positive() {
        let r = lognormal(11);
        let i = DyadicIndex::new(7, 42).unwrap();
        let a = r.cell_weight(i).unwrap();
        let b = lognormal(11).cell_weight(i).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0);
        assert_ne!(a, lognormal(12).cell_weight(i).unwrap());
    }

    #[test]
    fn weight_sample_mean_at_one_level() {
        let r = lognormal(77).with_max_level(20);
        let n = 100_000u64;
        let ws: Vec<f64> = (0..n).map(|k| r.cell_weight(DyadicIndex { level: 17, index: k }).unwrap()).collect();
        let mean = ws.iter().sum::<f64>() / n as f64;
        let var = ws.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() <= 5.0 * (var / n as f64).sqrt());
    }

    #[test]
    fn depth_is_enforced() {
        let r = lognormal(1).with_max_level(6);
        assert!(matches!(r.ell_n(7), Err(CascadeError::DepthExceeded { .. })));
        assert!(r.mass(DyadicIndex::new(7, 0).unwrap()).is_err());
        assert!(r.cell_weight(DyadicIndex::new(7, 0).unwrap()).is_err());
        assert!(r.cdf(7, DyadicPoint::ONE).is_err());
    }

    #[test]
    fn mass_matches_stream_and_partition_additivity() {
        let r = lognormal(5);
        for n in [1, 4, 9] {
            let cells: Vec<_> = r.cells(n).unwrap().collect();
            assert_eq!(cells.len(), 1 << n);
            for c in cells.iter().step_by(3) {
                assert_eq!(r.mass(c.index).unwrap().to_bits(), c.mass.to_bits());
            }
            let ell = r.ell_n(n).unwrap();
            let seq: f64 = cells.iter().map(|c| c.mass).sum();
            assert!((seq - ell).abs() <= 1e-12 * ell);
            // children refine parents: μ_{n+1}(child) = μ_n(parent)·W_parent/2
            for c in cells.iter().take(8) {
                let w = r.cell_weight(c.index).unwrap();
                let kids = r.mass(c.index.left()).unwrap() + r.mass(c.index.right()).unwrap();
                assert!((kids - w * c.mass).abs() <= 1e-15 * kids);
            }
        }
    }

    #[test]
    fn cdf_endpoints_and_monotone() {
        let r = lognormal(9);
        let n = 8;
        assert_eq!(r.cdf(n, DyadicPoint::ZERO).unwrap(), 0.0);
        assert_eq!(r.cdf(n, DyadicPoint::ONE).unwrap(), r.ell_n(n).unwrap());
        let snap = r.snapshot(n).unwrap();
        let mut prev = 0.0;
        for k in 0..=(1u64 << n) {
            let f = r.cdf(n, p(n, k)).unwrap();
            assert_eq!(f.to_bits(), snap.cdf_at(k).to_bits(), "k={k}");
            assert!(f >= prev);
            prev = f;
        }
        assert_eq!(snap.total().to_bits(), r.ell_n(n).unwrap().to_bits());
    }

    #[test]
    fn cdf_interpolates_inside_cells() {
        let r = lognormal(21);
        let n = 4;
        let cell = DyadicIndex::new(4, 6).unwrap();
        let mid = r.cdf(n, cell.midpoint()).unwrap();
        let expect = r.cdf(n, cell.left_point()).unwrap() + 0.5 * r.mass(cell).unwrap();
        assert_eq!(mid, expect);
        assert_eq!(r.snapshot(n).unwrap().cdf_mid(6), expect);
    }

    #[test]
    fn rho_is_a_path_metric() {
        let r = lognormal(4);
        let n = 10;
        let (x, y, z) = (p(3, 1), p(5, 13), p(2, 3));
        let xy = r.rho(n, x, y).unwrap();
        let yz = r.rho(n, y, z).unwrap();
        let xz = r.rho(n, x, z).unwrap();
        assert!((xy + yz - xz).abs() <= 1e-14);
        assert_eq!(xy, r.rho(n, y, x).unwrap());
        assert_eq!(r.rho(n, x, x).unwrap(), 0.0);
        assert_eq!(r.rho(n, DyadicPoint::ZERO, DyadicPoint::ONE).unwrap(), r.ell_n(n).unwrap());
        let diag = r.rho_trunc(n, x, x).unwrap();
        assert_eq!(diag, r.mass(x.cell(n)).unwrap());
        assert!(r.rho_trunc(n, x, y).unwrap() >= xy);
    }

    #[test]
    fn recursion_identity_holds() {
        for seed in 0..20 {
            assert!(lognormal(seed).recursion_check(8).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn tail_mode_reports_deeper_mass() {
        let base = lognormal(8);
        let tailed = lognormal(8).with_tail(TailMode::Subtree(5));
        let cell = DyadicIndex::new(3, 2).unwrap();
        let deep = base.subtree_mass(cell, 8).unwrap();
        assert!((tailed.mass(cell).unwrap() - deep).abs() <= 1e-14);
        assert!((tailed.ell_n(3).unwrap() - base.ell_n(8).unwrap()).abs() <= 1e-13);
        assert!(tailed.recursion_check(3).unwrap() <= 1e-12);
    }

    #[test]
    fn interleaved_evaluation_is_bit_identical() {
        let r = lognormal(123);
        let n = 10;
        let seq: Vec<f64> = r.cells(n).unwrap().map(|c| c.mass).collect();
        let mut order: Vec<u64> = (0..(1u64 << n)).collect();
        // deterministic shuffle
        order.sort_by_key(|k| crate::rng::mix64(*k));
        for k in order {
            let m = lognormal(123).mass(DyadicIndex { level: n, index: k }).unwrap();
            assert_eq!(m.to_bits(), seq[k as usize].to_bits());
        }
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let par = pool.install(|| r.ell_n(18).unwrap());
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(par.to_bits(), one.install(|| r.ell_n(18).unwrap()).to_bits());
    }

    #[test]
    fn pruned_stream_visits_only_kept_subtrees() {
        let r = lognormal(2);
        let left_half = |c: DyadicIndex| c.level == 0 || c.ancestor(1).index == 0;
        let cells: Vec<_> = r.cells_where(5, left_half).unwrap().collect();
        assert_eq!(cells.len(), 16);
        assert!(cells.windows(2).all(|w| w[0].index.index < w[1].index.index));
        let half: f64 = cells.iter().map(|c| c.mass).sum();
        assert!((half - r.cdf(5, p(1, 1)).unwrap()).abs() <= 1e-15);
    }

    #[test]
    fn preorder_stream_matches_per_level_streams() {
        let r = lognormal(31);
        let all: Vec<_> = r.nodes_where(6, |_| true).unwrap().collect();
        assert_eq!(all.len(), (1 << 7) - 1);
        for n in 0..=6 {
            let level: Vec<_> = all.iter().filter(|c| c.index.level == n).copied().collect();
            let direct: Vec<_> = r.cells(n).unwrap().collect();
            assert_eq!(level, direct);
        }
    }

    #[test]
    fn weight_table_source() {
        let table = vec![2.0, 0.5, 1.5];
        let r = CascadeRealization::from_weight_table(table, 2).unwrap();
        assert_eq!(r.mass(DyadicIndex::new(1, 0).unwrap()).unwrap(), 1.0);
        assert_eq!(r.mass(DyadicIndex::new(2, 0).unwrap()).unwrap(), 0.25);
        assert_eq!(r.mass(DyadicIndex::new(2, 3).unwrap()).unwrap(), 0.75);
        assert_eq!(r.ell_n(2).unwrap(), 2.0);
        assert!(r.cell_weight(DyadicIndex::new(2, 0).unwrap()).is_err());
        assert!(CascadeRealization::from_weight_table(vec![1.0; 4], 2).is_err());
    }

    #[test]
    fn single_precision_cascade() {
        let r = CascadeRealization::<f32>::new(WeightModel::two_point(0.5).unwrap(), 9);
        let ell = r.ell_n(10).unwrap();
        let seq: f32 = r.cells(10).unwrap().map(|c| c.mass).sum();
        assert!((ell - seq).abs() <= 1e-4 * ell);
    }
}
