//! Replicate summaries and least-squares fits.

use serde::Serialize;

use crate::scalar::Real;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.96;

/// Mean, standard error and normal 95% interval of a replicate sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary<T> {
    pub count: usize,
    pub mean: T,
    pub stderr: T,
    pub ci95_lo: T,
    pub ci95_hi: T,
}

impl<T: Real> Summary<T> {
    /// Two-pass mean/variance, accumulated in input order.
    pub fn of(xs: &[T]) -> Self {
        let count = xs.len();
        if count == 0 {
            let nan = T::nan();
            return Self { count, mean: nan, stderr: nan, ci95_lo: nan, ci95_hi: nan };
        }
        let n = T::lit(count as f64);
        let mean = xs.iter().fold(T::zero(), |a, &x| a + x) / n;
        let stderr = if count > 1 {
            let ss = xs.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean));
            (ss / (n - T::one()) / n).sqrt()
        } else {
            T::zero()
        };
        let half = stderr * T::lit(Z95);
        Self { count, mean, stderr, ci95_lo: mean - half, ci95_hi: mean + half }
    }

    /// `|mean − target| ≤ k·stderr`.
    pub fn within(&self, target: T, k: T) -> bool {
        (self.mean - target).abs() <= k * self.stderr
    }
}

pub fn median<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("median of NaN"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) * T::lit(0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_stderr: T,
    pub r2: T,
}

/// Ordinary least squares `y ≈ intercept + slope·x`. Needs two distinct `x`.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> Option<LinearFit<T>> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let nt = T::lit(n as f64);
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / nt;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / nt;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
        syy = syy + (y - my) * (y - my);
    }
    if sxx <= T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse = (syy - slope * sxy).max(T::zero());
    let r2 = if syy > T::zero() { (T::one() - sse / syy).max(T::zero()).min(T::one()) } else { T::one() };
    let slope_stderr = if n > 2 { (sse / T::lit((n - 2) as f64) / sxx).sqrt() } else { T::zero() };
    Some(LinearFit { slope, intercept, slope_stderr, r2 })
}

/// Least-squares slope only, for use inside root searches.
pub fn slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    linear_fit(xs, ys).map(|f| f.slope).unwrap_or_else(T::nan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn summary_of_small_sample() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_relative_eq!(s.stderr, (5.0f64 / 3.0 / 4.0).sqrt());
        assert_relative_eq!(s.ci95_hi - s.mean, 1.96 * s.stderr);
        let one = Summary::of(&[7.0]);
        assert_eq!((one.mean, one.stderr), (7.0, 0.0));
        assert!(Summary::<f64>::of(&[]).mean.is_nan());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn exact_line() {
        let xs = [2.0, 4.0, 6.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x - 1.0).collect();
        let fit = linear_fit(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, 0.5, epsilon = 1e-15);
        assert_relative_eq!(fit.intercept, -1.0, epsilon = 1e-14);
        assert_eq!(fit.r2, 1.0);
        assert!(fit.slope_stderr.abs() < 1e-15);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
        assert!(linear_fit(&[1.0], &[0.0]).is_none());
    }

    #[test]
    fn noisy_line_r2() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.1, 1.9, 3.0];
        let fit = linear_fit(&xs, &ys).unwrap();
        assert!(fit.r2 > 0.98 && fit.r2 < 1.0);
        assert!(fit.slope_stderr > 0.0);
    }
}
