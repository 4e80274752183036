//! The weight law `W` of a multiplicative cascade.
//!
//! A [`WeightModel`] is a positive, mean-one law. Three families are built in:
//! log-normal `W = exp(σY − σ²/2)`, the symmetric two-point law `W = 1 ± σ`,
//! and a finite empirical table. Moments use closed forms or exact finite
//! sums; [`WeightModel::moment_by_quadrature`] is a numeric cross-check only.

use std::fmt;
use std::path::Path;

use rand::{Rng, RngCore};
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::rng::RandomStream;
use crate::scalar::Real;

/// Tolerance on `|E[W] − 1|` (and on the probability total) for empirical tables.
pub const EMPIRICAL_MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeightError {
    #[error("moment E[W^{s}] is undefined: the law has a non-positive atom")]
    UndefinedMoment { s: f64 },
    #[error("invalid weight parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse weight model: {0}")]
    Parse(String),
    #[error("cannot read weight table {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightFamily<T> {
    /// `W = exp(σY − σ²/2)` with `Y` standard normal.
    LogNormal { sigma2: T },
    /// `W = 1 − σ` or `1 + σ`, each with probability one half.
    TwoPoint { sigma: T },
    /// Finite law `P(W = values[i]) = probs[i]`.
    Empirical { values: Vec<T>, probs: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightModel<T> {
    family: WeightFamily<T>,
}

/// Outcome of checking the standing assumptions on a weight law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub mean: f64,
    pub mean_one: bool,
    pub positive: bool,
    pub w_log2_w: f64,
    pub cascade_condition: bool,
    pub messages: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.mean_one && self.positive && self.cascade_condition
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport<T> {
    pub s: T,
    /// `E[W^s]`
    pub m: T,
    pub phi: T,
    /// `E[W^{−s}]`, possibly infinite.
    pub neg_m: T,
}

impl<T: Real> WeightModel<T> {
    pub fn lognormal(sigma2: T) -> Result<Self, WeightError> {
        if !sigma2.is_finite() || sigma2 <= T::zero() {
            return Err(WeightError::InvalidParameter(format!(
                "log-normal variance must be finite and positive, got {sigma2}"
            )));
        }
        Ok(Self { family: WeightFamily::LogNormal { sigma2 } })
    }

    /// Two-point law `1 ± σ`. Any finite `σ ≥ 0` is accepted here;
    /// [`validate`](Self::validate) rejects `σ ≥ 1`.
    pub fn two_point(sigma: T) -> Result<Self, WeightError> {
        if !sigma.is_finite() || sigma < T::zero() {
            return Err(WeightError::InvalidParameter(format!(
                "two-point spread must be finite and non-negative, got {sigma}"
            )));
        }
        Ok(Self { family: WeightFamily::TwoPoint { sigma } })
    }

    pub fn empirical(values: Vec<T>, probs: Vec<T>) -> Result<Self, WeightError> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(WeightError::InvalidParameter(format!(
                "empirical law needs matching non-empty value/probability lists ({} vs {})",
                values.len(),
                probs.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(WeightError::InvalidParameter("non-finite empirical value".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < T::zero()) {
            return Err(WeightError::InvalidParameter(
                "empirical probabilities must be finite and non-negative".into(),
            ));
        }
        Ok(Self { family: WeightFamily::Empirical { values, probs } })
    }

    pub fn family(&self) -> &WeightFamily<T> {
        &self.family
    }

    /// Whether every draw equals 1.
    pub fn is_degenerate(&self) -> bool {
        match &self.family {
            WeightFamily::LogNormal { .. } => false,
            WeightFamily::TwoPoint { sigma } => sigma.is_zero(),
            WeightFamily::Empirical { values, probs } => values
                .iter()
                .zip(probs)
                .all(|(v, p)| p.is_zero() || *v == T::one()),
        }
    }

    /// `E[W^s]`.
    pub fn moment(&self, s: T) -> Result<T, WeightError> {
        let half = T::lit(0.5);
        match &self.family {
            WeightFamily::LogNormal { sigma2 } => Ok((*sigma2 * s * (s - T::one()) * half).exp()),
            WeightFamily::TwoPoint { sigma } => {
                let lo = T::one() - *sigma;
                if lo < T::zero() || (lo.is_zero() && s < T::zero()) {
                    return Err(WeightError::UndefinedMoment { s: s.to_f64_lossy() });
                }
                Ok((pow(lo, s) + pow(T::one() + *sigma, s)) * half)
            }
            WeightFamily::Empirical { values, probs } => {
                let mut acc = T::zero();
                for (&v, &p) in values.iter().zip(probs) {
                    if p.is_zero() {
                        continue;
                    }
                    if v < T::zero() || (v.is_zero() && s < T::zero()) {
                        return Err(WeightError::UndefinedMoment { s: s.to_f64_lossy() });
                    }
                    acc = acc + p * pow(v, s);
                }
                Ok(acc)
            }
        }
    }

    /// `φ(s) = s − log₂ E[W^s]`.
    pub fn phi(&self, s: T) -> Result<T, WeightError> {
        Ok(s - self.moment(s)?.log2())
    }

    /// `ψ(s) = E[(W/2)^s] = E[W^s]·2^{−s}`; convex, and `φ = −log₂ ψ`.
    pub fn psi(&self, s: T) -> Result<T, WeightError> {
        Ok(self.moment(s)? * T::lit(2.0).powf(-s))
    }

    /// `E[W^{−s}]` for `s ≥ 0`; `+∞` when the law has an atom at zero.
    pub fn neg_moment(&self, s: T) -> T {
        if s.is_zero() {
            return T::one();
        }
        self.moment(-s).unwrap_or_else(|_| T::infinity())
    }

    pub fn moment_report(&self, s: T) -> Result<MomentReport<T>, WeightError> {
        let m = self.moment(s)?;
        Ok(MomentReport { s, m, phi: s - m.log2(), neg_m: self.neg_moment(s) })
    }

    /// `E[W]`, exact for the closed-form families.
    pub fn mean(&self) -> T {
        match &self.family {
            WeightFamily::LogNormal { .. } | WeightFamily::TwoPoint { .. } => T::one(),
            WeightFamily::Empirical { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| *v * *p).sum()
            }
        }
    }

    /// `E[W log₂ W]`, with `0·log 0 = 0`. `NaN` if a negative value is attainable.
    pub fn w_log2_w(&self) -> T {
        let half = T::lit(0.5);
        match &self.family {
            WeightFamily::LogNormal { sigma2 } => *sigma2 / (T::lit(2.0) * T::LN_2()),
            WeightFamily::TwoPoint { sigma } => {
                (x_log2_x(T::one() - *sigma) + x_log2_x(T::one() + *sigma)) * half
            }
            WeightFamily::Empirical { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| !p.is_zero())
                .map(|(v, p)| *p * x_log2_x(*v))
                .sum(),
        }
    }

    /// Checks mean one, strict positivity and `E[W log₂ W] < 1`. Never fails.
    pub fn validate(&self) -> ValidationReport {
        let mut messages = Vec::new();
        let mean = self.mean().to_f64_lossy();
        let mean_one = match &self.family {
            WeightFamily::Empirical { probs, .. } => {
                let total: f64 = probs.iter().map(|p| p.to_f64_lossy()).sum();
                let ok_total = (total - 1.0).abs() <= EMPIRICAL_MEAN_TOL;
                if !ok_total {
                    messages.push(format!("probabilities sum to {total}, not 1"));
                }
                let ok_mean = (mean - 1.0).abs() <= EMPIRICAL_MEAN_TOL;
                if !ok_mean {
                    messages.push(format!("E[W] = {mean}, not 1"));
                }
                ok_total && ok_mean
            }
            _ => true,
        };
        let positive = match &self.family {
            WeightFamily::LogNormal { .. } => true,
            WeightFamily::TwoPoint { sigma } => *sigma < T::one(),
            WeightFamily::Empirical { values, probs } => values
                .iter()
                .zip(probs)
                .all(|(v, p)| p.is_zero() || *v > T::zero()),
        };
        if !positive {
            messages.push("W is not strictly positive".into());
        }
        let w_log2_w = self.w_log2_w().to_f64_lossy();
        let cascade_condition = w_log2_w < 1.0;
        if !cascade_condition {
            messages.push(format!("E[W log2 W] = {w_log2_w} is not below 1"));
        }
        ValidationReport { mean, mean_one, positive, w_log2_w, cascade_condition, messages }
    }

    /// One draw of `W`, a deterministic function of the stream state.
    pub fn sample(&self, stream: &mut RandomStream) -> T {
        match &self.family {
            WeightFamily::LogNormal { sigma2 } => {
                let y: f64 = stream.sample(StandardNormal);
                let sigma = sigma2.sqrt();
                (sigma * T::lit(y) - *sigma2 * T::lit(0.5)).exp()
            }
            WeightFamily::TwoPoint { sigma } => {
                if stream.next_u64() >> 63 == 0 {
                    T::one() - *sigma
                } else {
                    T::one() + *sigma
                }
            }
            WeightFamily::Empirical { values, probs } => {
                let total: T = probs.iter().copied().sum();
                let u = T::lit(stream.random::<f64>()) * total;
                let mut acc = T::zero();
                for (&v, &p) in values.iter().zip(probs) {
                    acc = acc + p;
                    if u < acc {
                        return v;
                    }
                }
                // rounding in the cumulative sum: fall back to the last atom with mass
                values
                    .iter()
                    .zip(probs)
                    .rev()
                    .find(|(_, p)| !p.is_zero())
                    .map(|(v, _)| *v)
                    .unwrap_or(values[values.len() - 1])
            }
        }
    }

    /// Trapezoidal quadrature of `E[W^s]` against the Gaussian density.
    /// Only defined for the log-normal family; used to cross-check the closed form.
    pub fn moment_by_quadrature(&self, s: T) -> Option<T> {
        let WeightFamily::LogNormal { sigma2 } = &self.family else {
            return None;
        };
        let sigma = sigma2.sqrt();
        // W^s φ(y) is a Gaussian bump centred at σs; the trapezoid rule is
        // spectrally accurate on it.
        let centre = sigma * s;
        let h = T::lit(0.02);
        let half_width = 1600;
        let norm = (T::lit(2.0) * T::PI()).sqrt().recip();
        let mut acc = T::zero();
        for i in -half_width..=half_width {
            let y = centre + h * T::lit(i as f64);
            let log_w = sigma * y - *sigma2 * T::lit(0.5);
            acc = acc + (s * log_w - y * y * T::lit(0.5)).exp();
        }
        Some(acc * h * norm)
    }

    /// Parses `family=lognormal sigma2=0.69`, `family=twopoint sigma=0.5`,
    /// `family=empirical values=0.5,1.5 probs=0.5,0.5` or
    /// `family=empirical file=weights.csv`.
    pub fn parse(text: &str) -> Result<Self, WeightError> {
        let pairs = parse_pairs(text).map_err(WeightError::Parse)?;
        let get = |key: &str| pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
        let family = get("family").ok_or_else(|| WeightError::Parse("missing family=".into()))?;
        let number = |key: &str| -> Result<T, WeightError> {
            let raw = get(key).ok_or_else(|| WeightError::Parse(format!("missing {key}=")))?;
            parse_real(raw).map_err(WeightError::Parse)
        };
        match family.to_ascii_lowercase().as_str() {
            "lognormal" | "log-normal" | "gaussian" => Self::lognormal(number("sigma2")?),
            "twopoint" | "two-point" => Self::two_point(number("sigma")?),
            "empirical" => {
                if let Some(path) = get("file") {
                    return Self::from_csv_path(path);
                }
                let list = |key: &str| -> Result<Vec<T>, WeightError> {
                    get(key)
                        .ok_or_else(|| WeightError::Parse(format!("missing {key}=")))?
                        .split(',')
                        .map(|x| parse_real(x).map_err(WeightError::Parse))
                        .collect()
                };
                Self::empirical(list("values")?, list("probs")?)
            }
            other => Err(WeightError::Parse(format!("unknown weight family '{other}'"))),
        }
    }

    /// Loads an empirical law from a two-column `value,probability` CSV.
    /// A non-numeric first row is treated as a header.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        let path_ref = path.as_ref();
        let io_err = |message: String| WeightError::Io {
            path: path_ref.display().to_string(),
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path_ref)
            .map_err(|e| io_err(e.to_string()))?;
        let mut values = Vec::new();
        let mut probs = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| io_err(e.to_string()))?;
            if record.len() != 2 {
                return Err(io_err(format!("row {} has {} columns, expected 2", row + 1, record.len())));
            }
            match (parse_real::<T>(&record[0]), parse_real::<T>(&record[1])) {
                (Ok(v), Ok(p)) => {
                    values.push(v);
                    probs.push(p);
                }
                _ if row == 0 => continue,
                (Err(e), _) | (_, Err(e)) => return Err(io_err(format!("row {}: {e}", row + 1))),
            }
        }
        Self::empirical(values, probs)
    }
}

impl<T: Real> fmt::Display for WeightModel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.family {
            WeightFamily::LogNormal { sigma2 } => write!(f, "family=lognormal sigma2={sigma2}"),
            WeightFamily::TwoPoint { sigma } => write!(f, "family=twopoint sigma={sigma}"),
            WeightFamily::Empirical { values, probs } => {
                let join = |xs: &[T]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
                write!(f, "family=empirical values={} probs={}", join(values), join(probs))
            }
        }
    }
}

/// `x^s` with the convention `0^0 = 1`.
fn pow<T: Real>(x: T, s: T) -> T {
    if s.is_zero() {
        T::one()
    } else {
        x.powf(s)
    }
}

fn x_log2_x<T: Real>(x: T) -> T {
    if x.is_zero() {
        T::zero()
    } else {
        x * x.log2()
    }
}

pub(crate) fn parse_real<T: Real>(raw: &str) -> Result<T, String> {
    let raw = raw.trim();
    let value: f64 = match raw.to_ascii_lowercase().as_str() {
        "ln2" => std::f64::consts::LN_2,
        "ln4" => 2.0 * std::f64::consts::LN_2,
        other => other.parse().map_err(|_| format!("'{raw}' is not a number"))?,
    };
    T::from_f64(value).ok_or_else(|| format!("'{raw}' is out of range"))
}

/// Splits whitespace-separated `key=value` tokens.
pub(crate) fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, String> {
    text.split_whitespace()
        .map(|tok| {
            tok.split_once('=')
                .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
                .ok_or_else(|| format!("expected key=value, got '{tok}'"))
        })
        .collect()
}
