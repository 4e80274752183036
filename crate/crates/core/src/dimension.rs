//! Scaling-exponent estimators.
//!
//! The Euclidean estimate is the box-count slope of a canonical cover. The
//! quantum estimate uses the partition function
//! `Zₙ(s) = Σ_{I ∈ cover(n)} μₙ(I)^s`: its growth rate in `n` is
//! `ζ₀ − φ(s)` in expectation, so the critical `s` where the slope of
//! `log₂ Zₙ(s)` against `n` vanishes estimates `φ^{−1}(ζ₀)`.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cascade::{CascadeError, CascadeRealization, DyadicPoint};
use crate::fractal_sets::DigitRestrictionSet;
use crate::roots::{bisect, RootError};
use crate::scalar::Real;
use crate::stats::{linear_fit, slope, Summary};
use crate::weights::{WeightError, WeightModel};

pub const MAX_EUCLID_LEVEL: u32 = 30;
pub const DEFAULT_QUANTUM_TOL: f64 = 1e-3;
pub const QUANTUM_MAX_ITER: usize = 40;
/// Upper end of the critical-exponent search. The true exponent lies in
/// `[0,1]`; the extra room lets noisy estimates near 1 still bracket a root.
pub const QUANTUM_SEARCH_MAX: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DimensionError {
    #[error("need at least two block-aligned levels in [{n_min}, {n_max}] for block length {block}")]
    DegenerateRange { n_min: u32, n_max: u32, block: u32 },
    #[error("partition slope does not change sign on [0, {s_max}]: slope(0) = {slope_lo}, slope({s_max}) = {slope_hi}")]
    NoSignChange { slope_lo: f64, slope_hi: f64, s_max: f64 },
    #[error("no realizations supplied")]
    NoRealizations,
    #[error("every realization failed; first error: {0}")]
    AllFailed(String),
    #[error("exponent s = {0} outside [0, 1]")]
    ExponentRange(f64),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DimensionMethod {
    EuclidBoxcount,
    QuantumPartition,
}

/// How per-realization information is combined into one exponent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Root per realization, then mean ± stderr of the roots.
    #[default]
    MeanOfRoots,
    /// Root of the replicate-averaged slope; stderr still from the per-realization roots.
    RootOfMeanSlope,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DimensionEstimate<T> {
    pub value: T,
    pub stderr: T,
    pub levels: Vec<u32>,
    pub fit_r2: T,
    pub method: DimensionMethod,
    /// Realizations that produced a root (1 for Euclidean estimates).
    pub realizations: usize,
    /// Realizations whose slope did not change sign.
    pub failures: usize,
}

/// Block-aligned levels in `[n_min, n_max]`.
pub fn aligned_levels(set: &DigitRestrictionSet, n_min: u32, n_max: u32) -> Result<Vec<u32>, DimensionError> {
    let b = set.block();
    let levels: Vec<u32> = (n_min..=n_max).filter(|n| n % b == 0).collect();
    if n_min >= n_max || levels.len() < 2 {
        return Err(DimensionError::DegenerateRange { n_min, n_max, block: b });
    }
    Ok(levels)
}

/// Box-count slope of `log₂ cover_count(n)` against `n`.
pub fn euclid_dimension<T: Real>(
    set: &DigitRestrictionSet,
    n_min: u32,
    n_max: u32,
) -> Result<DimensionEstimate<T>, DimensionError> {
    let levels = aligned_levels(set, n_min, n_max.min(MAX_EUCLID_LEVEL))?;
    if n_max > MAX_EUCLID_LEVEL {
        return Err(DimensionError::DegenerateRange { n_min, n_max, block: set.block() });
    }
    let xs: Vec<T> = levels.iter().map(|&n| T::lit(n as f64)).collect();
    let ys: Vec<T> = levels.iter().map(|&n| T::lit(set.cover_count(n) as f64).log2()).collect();
    let fit = linear_fit(&xs, &ys).expect("at least two distinct levels");
    Ok(DimensionEstimate {
        value: fit.slope,
        stderr: fit.slope_stderr,
        levels,
        fit_r2: fit.r2,
        method: DimensionMethod::EuclidBoxcount,
        realizations: 1,
        failures: 0,
    })
}

fn power_sum<T: Real>(masses: &[T], s: T) -> T {
    if s.is_zero() {
        return T::lit(masses.len() as f64);
    }
    masses.iter().fold(T::zero(), |acc, &m| acc + m.powf(s))
}

/// `Zₙ(s) = Σ_{I ∈ cover(set, n)} μₙ(I)^s`, accumulated in index order.
pub fn partition_function<T: Real>(
    real: &CascadeRealization<T>,
    set: &DigitRestrictionSet,
    s: T,
    n: u32,
) -> Result<T, DimensionError> {
    if !(s >= T::zero() && s <= T::one()) {
        return Err(DimensionError::ExponentRange(s.to_f64_lossy()));
    }
    let masses: Vec<T> = real.cells_where(n, |c| set.admits(c))?.map(|c| c.mass).collect();
    Ok(power_sum(&masses, s))
}

/// Cover masses of one realization at a fixed list of levels, gathered in
/// a single traversal.
#[derive(Debug, Clone)]
pub struct PartitionProfile<T> {
    levels: Vec<u32>,
    masses: Vec<Vec<T>>,
}

impl<T: Real> PartitionProfile<T> {
    pub fn new(real: &CascadeRealization<T>, set: &DigitRestrictionSet, levels: &[u32]) -> Result<Self, DimensionError> {
        let depth = *levels.iter().max().ok_or(DimensionError::NoRealizations)?;
        let mut masses = vec![Vec::new(); levels.len()];
        let slot = |n: u32| levels.iter().position(|&l| l == n);
        for cell in real.nodes_where(depth, |c| set.admits(c))? {
            if let Some(i) = slot(cell.index.level) {
                masses[i].push(cell.mass);
            }
        }
        Ok(Self { levels: levels.to_vec(), masses })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn log2_z(&self, s: T) -> Vec<T> {
        self.masses.iter().map(|m| power_sum(m, s).log2()).collect()
    }

    fn xs(&self) -> Vec<T> {
        self.levels.iter().map(|&n| T::lit(n as f64)).collect()
    }

    /// Least-squares slope of `log₂ Zₙ(s)` against `n`.
    pub fn slope(&self, s: T) -> T {
        slope(&self.xs(), &self.log2_z(s))
    }

    pub fn fit_r2(&self, s: T) -> T {
        linear_fit(&self.xs(), &self.log2_z(s)).map(|f| f.r2).unwrap_or_else(T::one)
    }

    /// The `s` where the slope crosses zero.
    pub fn critical_exponent(&self, tol: T) -> Result<T, DimensionError> {
        critical_root(|s| self.slope(s), tol)
    }
}

/// Searches `[0, 1]`, or `[1, QUANTUM_SEARCH_MAX]` when the slope is still
/// positive at 1.
fn critical_root<T: Real>(f: impl Fn(T) -> T, tol: T) -> Result<T, DimensionError> {
    let (lo, hi) = if f(T::one()) > T::zero() {
        (T::one(), T::lit(QUANTUM_SEARCH_MAX))
    } else {
        (T::zero(), T::one())
    };
    bisect(|s| Ok::<_, std::convert::Infallible>(f(s)), lo, hi, tol, QUANTUM_MAX_ITER)
        .map(|r| r.root)
        .map_err(|e| match e {
            RootError::NoSignChange { .. } => DimensionError::NoSignChange {
                slope_lo: f(T::zero()).to_f64_lossy(),
                slope_hi: f(T::lit(QUANTUM_SEARCH_MAX)).to_f64_lossy(),
                s_max: QUANTUM_SEARCH_MAX,
            },
            other => DimensionError::AllFailed(other.to_string()),
        })
}

/// Critical partition exponent across replicate realizations.
pub fn quantum_dimension<T: Real>(
    reals: &[CascadeRealization<T>],
    set: &DigitRestrictionSet,
    n_min: u32,
    n_max: u32,
    tol: T,
    aggregation: Aggregation,
) -> Result<DimensionEstimate<T>, DimensionError> {
    if reals.is_empty() {
        return Err(DimensionError::NoRealizations);
    }
    let levels = aligned_levels(set, n_min, n_max)?;
    let profiles = reals
        .par_iter()
        .map(|r| PartitionProfile::new(r, set, &levels))
        .collect::<Result<Vec<_>, _>>()?;
    let outcomes: Vec<Result<T, DimensionError>> =
        profiles.par_iter().map(|p| p.critical_exponent(tol)).collect();

    let mut roots = Vec::new();
    let mut r2s = Vec::new();
    let mut first_error = None;
    for (p, o) in profiles.iter().zip(&outcomes) {
        match o {
            Ok(root) => {
                roots.push(*root);
                r2s.push(p.fit_r2(*root * T::lit(0.5)));
            }
            Err(e) => {
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let failures = reals.len() - roots.len();
    let spread = Summary::of(&roots);
    let value = match aggregation {
        Aggregation::MeanOfRoots => {
            if roots.is_empty() {
                return Err(DimensionError::AllFailed(first_error.unwrap_or_default()));
            }
            spread.mean
        }
        Aggregation::RootOfMeanSlope => {
            let count = T::lit(profiles.len() as f64);
            critical_root(|s| profiles.iter().map(|p| p.slope(s)).fold(T::zero(), |a, x| a + x) / count, tol)?
        }
    };
    let fit_r2 = if r2s.is_empty() { T::nan() } else { Summary::of(&r2s).mean };
    Ok(DimensionEstimate {
        value,
        stderr: if roots.is_empty() { T::nan() } else { spread.stderr },
        levels,
        fit_r2,
        method: DimensionMethod::QuantumPartition,
        realizations: roots.len(),
        failures,
    })
}

/// One `(n, s, log₂Zₙ(s), realization)` row of a partition table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PartitionRow<T> {
    pub n: u32,
    pub s: T,
    pub log2_z: T,
    pub realization_id: usize,
}

/// `log₂ Zₙ(s)` over a grid of `s`, per realization and level.
pub fn partition_table<T: Real>(
    reals: &[CascadeRealization<T>],
    set: &DigitRestrictionSet,
    levels: &[u32],
    s_grid: &[T],
) -> Result<Vec<PartitionRow<T>>, DimensionError> {
    let per_real = reals
        .par_iter()
        .enumerate()
        .map(|(id, r)| {
            let profile = PartitionProfile::new(r, set, levels)?;
            let mut rows = Vec::new();
            for &s in s_grid {
                for (&n, log2_z) in levels.iter().zip(profile.log2_z(s)) {
                    rows.push(PartitionRow { n, s, log2_z, realization_id: id });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>, DimensionError>>()?;
    Ok(per_real.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RhoMomentRow<T> {
    pub x: f64,
    pub y: f64,
    pub s: T,
    pub mean: T,
    pub stderr: T,
    pub ci95_hi: T,
    /// `8|x − y|^{φ(s)}`
    pub bound: T,
    /// Upper confidence limit at or below the bound.
    pub within_bound: bool,
    /// Lower confidence limit above the bound.
    pub violation: bool,
}

/// Monte Carlo `E[ρₙ(x,y)^s]` against the moment bound `8|x − y|^{φ(s)}`.
pub fn rho_moment_check<T: Real>(
    model: &WeightModel<T>,
    reals: &[CascadeRealization<T>],
    n: u32,
    s: T,
    pairs: &[(DyadicPoint, DyadicPoint)],
) -> Result<Vec<RhoMomentRow<T>>, DimensionError> {
    if !(s > T::zero() && s <= T::one()) {
        return Err(DimensionError::ExponentRange(s.to_f64_lossy()));
    }
    let phi = model.phi(s)?;
    pairs
        .iter()
        .map(|&(x, y)| {
            let samples = reals
                .par_iter()
                .map(|r| r.rho(n, x, y).map(|d| d.powf(s)))
                .collect::<Result<Vec<T>, _>>()?;
            let summary = Summary::of(&samples);
            let gap = T::lit((x.value() - y.value()).abs());
            let bound = T::lit(8.0) * if gap.is_zero() { T::zero() } else { gap.powf(phi) };
            Ok(RhoMomentRow {
                x: x.value(),
                y: y.value(),
                s,
                mean: summary.mean,
                stderr: summary.stderr,
                ci95_hi: summary.ci95_hi,
                bound,
                within_bound: summary.ci95_hi <= bound,
                violation: summary.ci95_lo > bound,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_seeds;
    use std::f64::consts::LN_2;

    fn pair_set() -> DigitRestrictionSet {
        DigitRestrictionSet::from_words(2, &["00", "11"]).unwrap()
    }

    fn flat(seed: u64) -> CascadeRealization<f64> {
        CascadeRealization::new(WeightModel::two_point(0.0).unwrap(), seed)
    }

    fn lognormals(count: usize) -> Vec<CascadeRealization<f64>> {
        let model = std::sync::Arc::new(WeightModel::lognormal(LN_2).unwrap());
        derive_seeds(7, count).into_iter().map(|s| CascadeRealization::shared(model.clone(), s)).collect()
    }

    #[test]
    fn euclid_examples() {
        let e = euclid_dimension::<f64>(&pair_set(), 2, 12).unwrap();
        assert_eq!(e.value, 0.5);
        assert_eq!(e.fit_r2, 1.0);
        assert_eq!(e.levels, vec![2, 4, 6, 8, 10, 12]);
        assert_eq!(euclid_dimension::<f64>(&DigitRestrictionSet::full(), 0, 20).unwrap().value, 1.0);
        let single = DigitRestrictionSet::from_words(2, &["01"]).unwrap();
        assert_eq!(euclid_dimension::<f64>(&single, 2, 12).unwrap().value, 0.0);
    }

    #[test]
    fn euclid_range_errors() {
        assert!(euclid_dimension::<f64>(&pair_set(), 2, 3).is_err());
        assert!(euclid_dimension::<f64>(&pair_set(), 5, 5).is_err());
        assert!(euclid_dimension::<f64>(&pair_set(), 2, 31).is_err());
    }

    #[test]
    fn degenerate_partition_function() {
        let full = DigitRestrictionSet::full();
        let r = flat(1);
        assert_eq!(partition_function(&r, &full, 1.0, 2).unwrap(), 1.0);
        let z = partition_function(&r, &full, 0.25, 6).unwrap();
        assert!((z - 2f64.powf(6.0 * 0.75)).abs() < 1e-12);
        let ln = &lognormals(1)[0];
        assert_eq!(partition_function(ln, &pair_set(), 0.0, 8).unwrap(), 16.0);
        assert!(partition_function(ln, &pair_set(), 1.5, 8).is_err());
    }

    #[test]
    fn partition_is_decreasing_in_s() {
        let r = &lognormals(1)[0];
        let set = pair_set();
        let zs: Vec<f64> = (0..=10).map(|i| partition_function(r, &set, i as f64 / 10.0, 10).unwrap()).collect();
        assert!(zs.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn profile_matches_direct_partition() {
        let r = &lognormals(1)[0];
        let set = pair_set();
        let profile = PartitionProfile::new(r, &set, &[4, 8]).unwrap();
        let direct = partition_function(r, &set, 0.4, 8).unwrap().log2();
        assert!((profile.log2_z(0.4)[1] - direct).abs() < 1e-14);
    }

    #[test]
    fn degenerate_quantum_equals_euclid() {
        let reals: Vec<_> = (0..3).map(flat).collect();
        let half = quantum_dimension(&reals, &pair_set(), 8, 16, 1e-3, Aggregation::MeanOfRoots).unwrap();
        assert_eq!(half.value, 0.5);
        let full =
            quantum_dimension(&reals, &DigitRestrictionSet::full(), 8, 16, 1e-3, Aggregation::MeanOfRoots).unwrap();
        assert_eq!(full.value, 1.0);
        assert_eq!(full.stderr, 0.0);
        let point =
            quantum_dimension(&reals, &DigitRestrictionSet::point(), 8, 16, 1e-3, Aggregation::MeanOfRoots).unwrap();
        assert_eq!(point.value, 0.0);
    }

    #[test]
    fn aggregations_agree_roughly() {
        let reals = lognormals(12);
        let a = quantum_dimension(&reals, &pair_set(), 8, 14, 1e-3, Aggregation::MeanOfRoots).unwrap();
        let b = quantum_dimension(&reals, &pair_set(), 8, 14, 1e-3, Aggregation::RootOfMeanSlope).unwrap();
        assert!((a.value - b.value).abs() < 0.05, "{} vs {}", a.value, b.value);
        assert!(a.fit_r2 >= 0.0 && a.fit_r2 <= 1.0);
        assert_eq!(a.realizations + a.failures, 12);
    }

    #[test]
    fn quantum_is_reproducible() {
        let a = quantum_dimension(&lognormals(5), &pair_set(), 8, 12, 1e-3, Aggregation::MeanOfRoots).unwrap();
        let b = quantum_dimension(&lognormals(5), &pair_set(), 8, 12, 1e-3, Aggregation::MeanOfRoots).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert!(quantum_dimension::<f64>(&[], &pair_set(), 8, 12, 1e-3, Aggregation::MeanOfRoots).is_err());
    }

    #[test]
    fn partition_table_shape() {
        let reals = lognormals(2);
        let rows = partition_table(&reals, &pair_set(), &[4, 6], &[0.0, 0.5]).unwrap();
        assert_eq!(rows.len(), 8);
        assert_eq!(rows[0].log2_z, 2.0);
        assert_eq!(rows[7].realization_id, 1);
    }

    #[test]
    fn rho_moment_degenerate_and_diagonal() {
        let model = WeightModel::two_point(0.0).unwrap();
        let reals: Vec<_> = (0..4).map(flat).collect();
        let pts = [
            (DyadicPoint::ZERO, DyadicPoint::new(2, 1).unwrap()),
            (DyadicPoint::new(3, 3).unwrap(), DyadicPoint::new(3, 3).unwrap()),
        ];
        let rows = rho_moment_check(&model, &reals, 8, 0.5, &pts).unwrap();
        assert_eq!(rows[0].mean, 0.5);
        assert!(rows[0].within_bound);
        assert_eq!(rows[1].mean, 0.0);
        assert!(rows[1].within_bound);
        assert!(rho_moment_check(&model, &reals, 8, 0.0, &pts).is_err());
    }
}
