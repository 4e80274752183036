//! Bracketing bisection for monotone scalar functions.

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError<E> {
    #[error("no sign change on the bracket: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    NoSignChange { f_lo: f64, f_hi: f64 },
    #[error("function evaluation failed: {0}")]
    Eval(E),
    #[error("function returned NaN at {0}")]
    NotANumber(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub root: T,
    /// Final bracket `[lo, hi]`.
    pub lo: T,
    pub hi: T,
    pub iterations: usize,
}

/// Bisection on `[lo, hi]` where `f(lo)` and `f(hi)` have opposite signs
/// (or one vanishes). Halves until the bracket is narrower than `tol`,
/// `max_iter` is reached, or the midpoint stops moving.
pub fn bisect<T, E, F>(mut f: F, lo: T, hi: T, tol: T, max_iter: usize) -> Result<Root<T>, RootError<E>>
where
    T: Real,
    F: FnMut(T) -> Result<T, E>,
{
    let mut eval = |x: T| -> Result<T, RootError<E>> {
        let v = f(x).map_err(RootError::Eval)?;
        if v.is_nan() {
            Err(RootError::NotANumber(x.to_f64_lossy()))
        } else {
            Ok(v)
        }
    };
    let (mut lo, mut hi) = (lo, hi);
    let f_lo = eval(lo)?;
    let f_hi = eval(hi)?;
    if f_lo.is_zero() {
        return Ok(Root { root: lo, lo, hi: lo, iterations: 0 });
    }
    if f_hi.is_zero() {
        return Ok(Root { root: hi, lo: hi, hi, iterations: 0 });
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(RootError::NoSignChange { f_lo: f_lo.to_f64_lossy(), f_hi: f_hi.to_f64_lossy() });
    }
    let lo_negative = f_lo < T::zero();
    let mut iterations = 0;
    while hi - lo > tol && iterations < max_iter {
        let mid = (lo + hi) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        iterations += 1;
        let f_mid = eval(mid)?;
        if f_mid.is_zero() {
            return Ok(Root { root: mid, lo: mid, hi: mid, iterations });
        }
        if (f_mid < T::zero()) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Root { root: (lo + hi) * T::lit(0.5), lo, hi, iterations })
}
