//! Lower-bound machinery: a uniform probability measure on a set's cover,
//! its tilt by the cascade weights, and discrete energy integrals in the
//! Euclidean and cascade metrics.
//!
//! Energies are double sums over support cells. Distinct cells use the
//! distance between their midpoints; a cell paired with itself uses its own
//! width (Euclidean) or its own cascade mass (truncated cascade metric).

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cascade::{CascadeError, CascadeRealization, DyadicIndex};
use crate::fractal_sets::DigitRestrictionSet;
use crate::scalar::Real;
use crate::stats::Summary;
use crate::weights::{WeightError, WeightModel};

/// Largest support handled by the `O(N²)` energy sums.
pub const MAX_ENERGY_CELLS: usize = 4096;
/// Default max/min ratio below which an energy sequence counts as bounded.
pub const DEFAULT_BOUNDED_RATIO: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FrostmanError {
    #[error("support has {0} cells; energy sums are limited to {MAX_ENERGY_CELLS}")]
    TooManyCells(usize),
    #[error("tilt depth {depth} exceeds the measure's level {level}")]
    TiltDepth { depth: u32, level: u32 },
    #[error("{name} = {value} outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error("no realizations supplied")]
    NoRealizations,
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// A measure given by masses on cells of a single level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMeasure<T> {
    pub level: u32,
    /// `(index, mass)` in increasing index order.
    pub cells: Vec<(u64, T)>,
    pub total: T,
}

impl<T: Real> CellMeasure<T> {
    pub fn new(level: u32, mut cells: Vec<(u64, T)>) -> Self {
        cells.sort_by_key(|c| c.0);
        let total = cells.iter().fold(T::zero(), |a, c| a + c.1);
        Self { level, cells, total }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// `s` and `a = E[W^s]` for the tilt `Z_I = W_I^s / a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TiltParams<T> {
    pub s: T,
    pub a: T,
}

impl<T: Real> TiltParams<T> {
    pub fn new(model: &WeightModel<T>, s: T) -> Result<Self, FrostmanError> {
        if !(s > T::zero() && s < T::one()) {
            return Err(FrostmanError::OutOfRange { name: "s", value: s.to_f64_lossy(), range: "(0, 1)" });
        }
        Ok(Self { s, a: model.moment(s)? })
    }
}

/// Uniform probability measure on the level-`n` cover of `set`.
pub fn frostman_measure<T: Real>(set: &DigitRestrictionSet, n: u32) -> CellMeasure<T> {
    let each = T::one() / T::lit(set.cover_count(n) as f64);
    CellMeasure::new(n, set.cover(n).map(|c| (c.index, each)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyParts<T> {
    pub diagonal: T,
    pub cross: T,
}

impl<T: Real> EnergyParts<T> {
    pub fn total(&self) -> T {
        self.diagonal + self.cross
    }
}

fn guard<T>(nu: &CellMeasure<T>) -> Result<(), FrostmanError> {
    if nu.cells.len() > MAX_ENERGY_CELLS {
        Err(FrostmanError::TooManyCells(nu.cells.len()))
    } else {
        Ok(())
    }
}

/// Row sums in parallel, combined in index order.
fn double_sum<T: Real>(nu: &CellMeasure<T>, s: T, dist: impl Fn(usize, usize) -> T + Sync) -> EnergyParts<T> {
    let rows: Vec<(T, T)> = (0..nu.cells.len())
        .into_par_iter()
        .map(|i| {
            let mi = nu.cells[i].1;
            let mut cross = T::zero();
            for (j, &(_, mj)) in nu.cells.iter().enumerate() {
                if j != i {
                    cross = cross + mi * mj / dist(i, j).powf(s);
                }
            }
            (mi * mi / dist(i, i).powf(s), cross)
        })
        .collect();
    let (diagonal, cross) = rows.into_iter().fold((T::zero(), T::zero()), |(d, c), (rd, rc)| (d + rd, c + rc));
    EnergyParts { diagonal, cross }
}

/// Discrete `E_t(ν) = ΣΣ ν(I)ν(J) / |x_I − x_J|^t`, split into diagonal and cross parts.
/// The diagonal uses the cell width, an upper-biased stand-in for the
/// within-cell integral.
pub fn euclid_energy_parts<T: Real>(nu: &CellMeasure<T>, t: T) -> Result<EnergyParts<T>, FrostmanError> {
    guard(nu)?;
    if !(t >= T::zero() && t < T::one()) {
        return Err(FrostmanError::OutOfRange { name: "t", value: t.to_f64_lossy(), range: "[0, 1)" });
    }
    let width = T::lit(2.0).powi(-(nu.level as i32));
    Ok(double_sum(nu, t, |i, j| {
        if i == j {
            width
        } else {
            T::lit(nu.cells[i].0.abs_diff(nu.cells[j].0) as f64) * width
        }
    }))
}

pub fn euclid_energy<T: Real>(nu: &CellMeasure<T>, t: T) -> Result<T, FrostmanError> {
    euclid_energy_parts(nu, t).map(|p| p.total())
}

/// `νₙ = fₙν₀` with `f_depth(I) = ∏_{j<depth} W_{I_j}^s / a`, for `depth ≤ ν₀.level`.
pub fn tilted_measure_at<T: Real>(
    real: &CascadeRealization<T>,
    nu0: &CellMeasure<T>,
    params: TiltParams<T>,
    depth: u32,
) -> Result<CellMeasure<T>, FrostmanError> {
    if depth > nu0.level {
        return Err(FrostmanError::TiltDepth { depth, level: nu0.level });
    }
    let cells = nu0
        .cells
        .iter()
        .map(|&(k, m)| {
            let cell = DyadicIndex { level: nu0.level, index: k };
            let mut f = T::one();
            for j in 0..depth {
                let w = real.cell_weight(cell.ancestor(j))?;
                f = f * w.powf(params.s) / params.a;
            }
            Ok((k, m * f))
        })
        .collect::<Result<Vec<_>, CascadeError>>()?;
    Ok(CellMeasure::new(nu0.level, cells))
}

/// Tilt at the measure's own level.
pub fn tilted_measure<T: Real>(
    real: &CascadeRealization<T>,
    nu0: &CellMeasure<T>,
    params: TiltParams<T>,
) -> Result<CellMeasure<T>, FrostmanError> {
    tilted_measure_at(real, nu0, params, nu0.level)
}

/// Discrete `E_s(ν; ρₙ)` using the truncated cascade metric between cell
/// midpoints; a cell paired with itself is at distance `μₙ(I)`.
pub fn quantum_energy_parts<T: Real>(
    real: &CascadeRealization<T>,
    nu: &CellMeasure<T>,
    s: T,
) -> Result<EnergyParts<T>, FrostmanError> {
    guard(nu)?;
    if !(s > T::zero() && s <= T::one()) {
        return Err(FrostmanError::OutOfRange { name: "s", value: s.to_f64_lossy(), range: "(0, 1]" });
    }
    let snap = real.snapshot(nu.level)?;
    let mids: Vec<T> = nu.cells.iter().map(|&(k, _)| snap.cdf_mid(k)).collect();
    let masses: Vec<T> = nu.cells.iter().map(|&(k, _)| snap.mass(k)).collect();
    Ok(double_sum(nu, s, |i, j| {
        if i == j {
            masses[i]
        } else {
            (mids[j] - mids[i]).abs().max(masses[i]).max(masses[j])
        }
    }))
}

pub fn quantum_energy<T: Real>(real: &CascadeRealization<T>, nu: &CellMeasure<T>, s: T) -> Result<T, FrostmanError> {
    quantum_energy_parts(real, nu, s).map(|p| p.total())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow<T> {
    pub n: u32,
    pub s: T,
    pub mean_energy: T,
    pub stderr: T,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerBoundReport<T> {
    pub s: T,
    pub phi_s: T,
    pub zeta0: T,
    pub neg_moment: T,
    pub hypothesis_holds: bool,
    pub warnings: Vec<String>,
    pub rows: Vec<EnergyRow<T>>,
    /// max/min of the mean energies over the upper half of the levels.
    pub ratio: T,
    pub ratio_threshold: T,
    pub bounded: bool,
}

/// Replicate-mean quantum energy of the tilted uniform measure, level by level.
pub fn lower_bound_evidence<T: Real>(
    model: &WeightModel<T>,
    reals: &[CascadeRealization<T>],
    set: &DigitRestrictionSet,
    s: T,
    levels: &[u32],
    ratio_threshold: T,
) -> Result<LowerBoundReport<T>, FrostmanError> {
    if reals.is_empty() {
        return Err(FrostmanError::NoRealizations);
    }
    let params = TiltParams::new(model, s)?;
    let phi_s = model.phi(s)?;
    let zeta0 = set.zeta0::<T>();
    let neg_moment = model.neg_moment(s);
    let mut warnings = Vec::new();
    if phi_s >= zeta0 {
        warnings.push(format!("phi(s) = {phi_s} is not below zeta0 = {zeta0}; the lower bound does not apply"));
    }
    if !neg_moment.is_finite() {
        warnings.push(format!("E[W^-{s}] is infinite"));
    }
    let mut rows = Vec::with_capacity(levels.len());
    for &n in levels {
        let nu0 = frostman_measure::<T>(set, n);
        let energies = reals
            .par_iter()
            .map(|r| {
                let nu = tilted_measure(r, &nu0, params)?;
                quantum_energy(r, &nu, s)
            })
            .collect::<Result<Vec<T>, _>>()?;
        let summary = Summary::of(&energies);
        rows.push(EnergyRow { n, s, mean_energy: summary.mean, stderr: summary.stderr, replicates: energies.len() });
    }
    let upper = &rows[rows.len() / 2..];
    let (lo, hi) = upper
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| (lo.min(r.mean_energy), hi.max(r.mean_energy)));
    let ratio = hi / lo;
    Ok(LowerBoundReport {
        s,
        phi_s,
        zeta0,
        neg_moment,
        hypothesis_holds: warnings.is_empty(),
        warnings,
        rows,
        ratio,
        ratio_threshold,
        bounded: ratio.is_finite() && ratio <= ratio_threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn pair_set() -> DigitRestrictionSet {
        DigitRestrictionSet::from_words(2, &["00", "11"]).unwrap()
    }

    fn flat() -> CascadeRealization<f64> {
        CascadeRealization::new(WeightModel::two_point(0.0).unwrap(), 0)
    }

    #[test]
    fn uniform_measures() {
        let full = frostman_measure::<f64>(&DigitRestrictionSet::full(), 1);
        assert_eq!(full.cells, vec![(0, 0.5), (1, 0.5)]);
        let pair = frostman_measure::<f64>(&pair_set(), 2);
        assert_eq!(pair.cells, vec![(0, 0.5), (3, 0.5)]);
        let one = frostman_measure::<f64>(&DigitRestrictionSet::from_words(2, &["10"]).unwrap(), 6);
        assert_eq!(one.cells, vec![(0b101010, 1.0)]);
        assert_eq!(one.total, 1.0);
    }

    #[test]
    fn euclid_energy_examples() {
        let full = frostman_measure::<f64>(&DigitRestrictionSet::full(), 1);
        assert_eq!(euclid_energy(&full, 0.0).unwrap(), 1.0);
        let parts = euclid_energy_parts(&full, 0.5).unwrap();
        assert_relative_eq!(parts.cross, 2.0 * 0.25 / 0.5f64.sqrt(), epsilon = 1e-15);
        let nu = frostman_measure::<f64>(&pair_set(), 8);
        let es: Vec<f64> = [0.0, 0.2, 0.4, 0.6, 0.8].iter().map(|&t| euclid_energy(&nu, t).unwrap()).collect();
        assert!(es.windows(2).all(|w| w[1] > w[0]));
        assert!(euclid_energy(&nu, 1.0).is_err());
    }

    #[test]
    fn euclid_energy_threshold_behaviour() {
        let set = pair_set();
        let at = |t: f64, n: u32| euclid_energy(&frostman_measure::<f64>(&set, n), t).unwrap();
        // below the dimension the energy settles, above it it keeps growing
        let low: Vec<f64> = [6, 8, 10, 12].iter().map(|&n| at(0.3, n)).collect();
        let high: Vec<f64> = [6, 8, 10, 12].iter().map(|&n| at(0.7, n)).collect();
        assert!(low[3] / low[2] < 1.05);
        assert!(high.windows(2).all(|w| w[1] / w[0] > 1.2));
    }

    #[test]
    fn quantum_energy_hand_value() {
        let nu = frostman_measure::<f64>(&DigitRestrictionSet::full(), 1);
        assert_relative_eq!(quantum_energy(&flat(), &nu, 1.0).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn quantum_energy_small_s_tends_to_total_squared() {
        let real = CascadeRealization::new(WeightModel::lognormal(LN_2).unwrap(), 4);
        let nu = frostman_measure::<f64>(&pair_set(), 6);
        let e = quantum_energy(&real, &nu, 1e-9).unwrap();
        assert!((e - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quantum_energy_floor() {
        let real = CascadeRealization::new(WeightModel::lognormal(LN_2).unwrap(), 12);
        let nu0 = frostman_measure::<f64>(&pair_set(), 8);
        let params = TiltParams::new(real.model().unwrap(), 0.3).unwrap();
        let nu = tilted_measure(&real, &nu0, params).unwrap();
        let ell = real.ell_n(8).unwrap();
        let e = quantum_energy(&real, &nu, 0.3).unwrap();
        assert!(e >= nu.total * nu.total / ell.powf(0.3));
    }

    #[test]
    fn degenerate_tilt_is_identity() {
        let nu0 = frostman_measure::<f64>(&pair_set(), 6);
        let params = TiltParams::new(&WeightModel::two_point(0.0).unwrap(), 0.4).unwrap();
        assert_eq!(tilted_measure(&flat(), &nu0, params).unwrap(), nu0);
        let ln = CascadeRealization::new(WeightModel::lognormal(LN_2).unwrap(), 3);
        let p = TiltParams::new(ln.model().unwrap(), 0.4).unwrap();
        assert_eq!(tilted_measure_at(&ln, &nu0, p, 0).unwrap(), nu0);
        assert!(tilted_measure_at(&ln, &nu0, p, 7).is_err());
    }

    #[test]
    fn guard_rejects_large_supports() {
        let nu = frostman_measure::<f64>(&DigitRestrictionSet::full(), 13);
        assert!(matches!(euclid_energy(&nu, 0.5), Err(FrostmanError::TooManyCells(8192))));
        assert!(quantum_energy(&flat(), &nu, 0.5).is_err());
    }

    #[test]
    fn degenerate_evidence_is_bounded() {
        let model = WeightModel::two_point(0.0).unwrap();
        let reals = vec![flat()];
        let rep = lower_bound_evidence(&model, &reals, &DigitRestrictionSet::full(), 0.5, &[2, 4, 6, 8, 10], 8.0)
            .unwrap();
        assert!(rep.bounded);
        assert!(rep.hypothesis_holds);
        let limit = 2.0 / (0.5 * 1.5);
        assert!(rep.rows.iter().all(|r| r.mean_energy < limit));
        assert!(rep.rows.windows(2).all(|w| w[1].mean_energy >= w[0].mean_energy));
    }

    #[test]
    fn evidence_warns_outside_hypothesis() {
        let model = WeightModel::lognormal(LN_2).unwrap();
        let reals = vec![CascadeRealization::new(model.clone(), 1)];
        // φ(0.45) = 0.45 + 0.5·0.45·0.55 ≈ 0.574 ≥ 1/2
        let rep = lower_bound_evidence(&model, &reals, &pair_set(), 0.45, &[2, 4], 8.0).unwrap();
        assert!(!rep.hypothesis_holds);
        assert_eq!(rep.warnings.len(), 1);
    }
}
