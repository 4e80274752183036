//! The dimension relation `ζ₀ = φ(ζ)` between the Euclidean dimension `ζ₀`
//! of a set and its dimension `ζ` under the cascade metric.
//!
//! `φ` is a strictly increasing bijection of `[0,1]` for every valid weight
//! law, so the inverse is found by plain bisection without derivatives.

use serde::Serialize;
use thiserror::Error;

use crate::roots::{bisect, RootError};
use crate::scalar::Real;
use crate::weights::{WeightError, WeightModel};

pub const DEFAULT_SOLVE_TOL: f64 = 1e-12;
const MAX_SOLVE_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KpzError {
    #[error("weight model fails the standing assumptions: {0}")]
    InvalidModel(String),
    #[error("{name} = {value} is outside {range}")]
    OutOfRange { name: &'static str, value: f64, range: &'static str },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("root search failed: {0}")]
    Root(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KpzSolution<T> {
    pub zeta0: T,
    pub zeta: T,
    /// `|φ(ζ) − ζ₀|`
    pub residual: T,
    pub iterations: usize,
}

fn unit_interval<T: Real>(name: &'static str, x: T) -> Result<(), KpzError> {
    if x >= T::zero() && x <= T::one() {
        Ok(())
    } else {
        Err(KpzError::OutOfRange { name, value: x.to_f64_lossy(), range: "[0, 1]" })
    }
}

/// Euclidean dimension predicted for a set of quantum dimension `zeta`: `φ(ζ)`.
pub fn predict_zeta0<T: Real>(model: &WeightModel<T>, zeta: T) -> Result<T, KpzError> {
    unit_interval("zeta", zeta)?;
    Ok(model.phi(zeta)?)
}

/// The unique `ζ ∈ [0,1]` with `φ(ζ) = ζ₀`, bracketed to width `tol`.
pub fn solve_zeta<T: Real>(model: &WeightModel<T>, zeta0: T, tol: T) -> Result<KpzSolution<T>, KpzError> {
    let report = model.validate();
    if !report.is_valid() {
        return Err(KpzError::InvalidModel(report.messages.join("; ")));
    }
    unit_interval("zeta0", zeta0)?;
    let solution = |zeta: T, iterations| -> Result<KpzSolution<T>, KpzError> {
        let residual = (model.phi(zeta)? - zeta0).abs();
        Ok(KpzSolution { zeta0, zeta, residual, iterations })
    };
    if zeta0.is_zero() || zeta0 == T::one() {
        return solution(zeta0, 0);
    }
    // φ(1) = 1 only up to rounding; treat a wrong-signed hair at the top as the root.
    if model.phi(T::one())? <= zeta0 {
        return solution(T::one(), 0);
    }
    let root = bisect(|z| model.phi(z).map(|p| p - zeta0), T::zero(), T::one(), tol, MAX_SOLVE_ITER)
        .map_err(|e| match e {
            RootError::Eval(w) => KpzError::Weight(w),
            other => KpzError::Root(other.to_string()),
        })?;
    solution(root.root, root.iterations)
}

/// Log-normal closed form `ζ + σ²/ln 4 · ζ(1 − ζ)`.
pub fn gaussian_kpz<T: Real>(sigma2: T, zeta: T) -> Result<T, KpzError> {
    let ln4 = T::lit(2.0) * T::LN_2();
    if !(sigma2 > T::zero() && sigma2 < ln4) {
        return Err(KpzError::OutOfRange { name: "sigma2", value: sigma2.to_f64_lossy(), range: "(0, ln 4)" });
    }
    unit_interval("zeta", zeta)?;
    Ok(zeta + sigma2 / ln4 * zeta * (T::one() - zeta))
}

/// Two-point closed form `1 + ζ − log₂((1 − σ)^ζ + (1 + σ)^ζ)`.
pub fn twopoint_kpz<T: Real>(sigma: T, zeta: T) -> Result<T, KpzError> {
    if !(sigma >= T::zero() && sigma < T::one()) {
        return Err(KpzError::OutOfRange { name: "sigma", value: sigma.to_f64_lossy(), range: "[0, 1)" });
    }
    unit_interval("zeta", zeta)?;
    Ok(T::one() + zeta - ((T::one() - sigma).powf(zeta) + (T::one() + sigma).powf(zeta)).log2())
}

/// Coefficient match `1/(k + 2) = σ²/ln 4` with the quantum gravity form,
/// i.e. `k = ln 4/σ² − 2`. Only the coefficient is matched; no sign
/// convention between dimension and co-dimension is implied.
pub fn central_charge<T: Real>(sigma2: T) -> Result<T, KpzError> {
    let ln4 = T::lit(2.0) * T::LN_2();
    if !(sigma2 > T::zero() && sigma2 <= ln4) {
        return Err(KpzError::OutOfRange { name: "sigma2", value: sigma2.to_f64_lossy(), range: "(0, ln 4]" });
    }
    Ok(ln4 / sigma2 - T::lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    fn tol() -> f64 {
        DEFAULT_SOLVE_TOL
    }

    #[test]
    fn predict_examples() {
        let ln = WeightModel::lognormal(LN_2).unwrap();
        assert_eq!(predict_zeta0(&ln, 0.0).unwrap(), 0.0);
        assert!((predict_zeta0(&ln, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert_relative_eq!(predict_zeta0(&ln, 0.5).unwrap(), 0.625, epsilon = 1e-14);
        let tp = WeightModel::two_point(0.5).unwrap();
        assert!((predict_zeta0(&tp, 1.0f64).unwrap() - 1.0).abs() < 1e-15);
        assert!(predict_zeta0(&tp, 1.5).is_err());
    }

    #[test]
    fn solve_examples() {
        let ln = WeightModel::lognormal(LN_2).unwrap();
        assert_eq!(solve_zeta(&ln, 0.0, tol()).unwrap().zeta, 0.0);
        assert_eq!(solve_zeta(&ln, 1.0, tol()).unwrap().zeta, 1.0);
        let golden = (3.0 - 5f64.sqrt()) / 2.0;
        let sol = solve_zeta(&ln, 0.5, tol()).unwrap();
        assert!((sol.zeta - golden).abs() <= 1e-12, "{}", sol.zeta);
        assert!(sol.residual <= 1e-12);

        let tp = WeightModel::two_point(0.6).unwrap();
        let sol = solve_zeta(&tp, 0.7, tol()).unwrap();
        assert!((predict_zeta0(&tp, sol.zeta).unwrap() - 0.7).abs() <= 1e-12);
    }

    #[test]
    fn solve_rejects_bad_input() {
        let bad = WeightModel::lognormal(2.0 * LN_2).unwrap();
        assert!(matches!(solve_zeta(&bad, 0.5, tol()), Err(KpzError::InvalidModel(_))));
        let ln = WeightModel::lognormal(LN_2).unwrap();
        assert!(matches!(solve_zeta(&ln, 1.2, tol()), Err(KpzError::OutOfRange { .. })));
        assert!(solve_zeta(&ln, -0.1, tol()).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_relative_eq!(gaussian_kpz(LN_2, 0.5).unwrap(), 0.625, epsilon = 1e-15);
        assert_eq!(gaussian_kpz(0.4, 0.0).unwrap(), 0.0);
        assert_eq!(gaussian_kpz(0.4, 1.0).unwrap(), 1.0);
        assert!((gaussian_kpz(1e-14f64, 0.3).unwrap() - 0.3).abs() < 1e-14);
        assert!(gaussian_kpz(2.0 * LN_2, 0.5).is_err());
        assert!(gaussian_kpz(0.0, 0.5).is_err());

        assert_relative_eq!(twopoint_kpz(0.0, 0.37).unwrap(), 0.37, epsilon = 1e-15);
        assert!((twopoint_kpz(0.5f64, 1.0).unwrap() - 1.0).abs() < 1e-15);
        let direct = 0.5 - ((0.5f64.sqrt() + 1.5f64.sqrt()) / 2.0).log2();
        assert_relative_eq!(twopoint_kpz(0.5, 0.5).unwrap(), direct, epsilon = 1e-15);
        let tp = WeightModel::two_point(0.5).unwrap();
        assert_relative_eq!(predict_zeta0(&tp, 0.5).unwrap(), direct, epsilon = 1e-15);
        assert!(twopoint_kpz(1.0, 0.5).is_err());
    }

    #[test]
    fn central_charge_values() {
        assert_relative_eq!(central_charge(2.0 * LN_2 / 4.0).unwrap(), 2.0, epsilon = 1e-14);
        assert!(central_charge(LN_2).unwrap().abs() < 1e-15);
        assert_relative_eq!(central_charge(2.0 * LN_2).unwrap(), -1.0, epsilon = 1e-15);
        assert!(central_charge(1.5).is_err());
        assert!(central_charge(0.0).is_err());
    }

    #[test]
    fn quantum_dimension_is_below_euclidean() {
        let ln = WeightModel::lognormal(0.9).unwrap();
        for i in 1..20 {
            let z = i as f64 / 20.0;
            assert!(predict_zeta0(&ln, z).unwrap() > z);
        }
    }

    #[test]
    fn solve_is_monotone() {
        let tp = WeightModel::two_point(0.9).unwrap();
        let zs: Vec<f64> = (0..=20).map(|i| solve_zeta(&tp, i as f64 / 20.0, tol()).unwrap().zeta).collect();
        assert!(zs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_precision_solve() {
        let ln = WeightModel::<f32>::lognormal(std::f32::consts::LN_2).unwrap();
        let sol = solve_zeta(&ln, 0.5f32, 1e-6).unwrap();
        assert!((sol.zeta - 0.381_966).abs() < 1e-5);
    }
}
