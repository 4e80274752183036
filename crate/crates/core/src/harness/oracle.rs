//! Exact cascade moments for finitely supported weights, by listing every
//! assignment of weights to the nodes above a shallow level. Written
//! without the cascade module so it can serve as ground truth for it.

use serde::Serialize;

use super::HarnessError;
use crate::weights::{WeightFamily, WeightModel};

pub const MAX_ORACLE_DEPTH: u32 = 3;
const MAX_OUTCOMES: usize = 1 << 21;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleMoments {
    pub depth: u32,
    pub s: f64,
    pub outcomes: usize,
    /// `E[μ_depth(I)^s]` for each cell `I` of the level, in index order.
    pub cell_moments: Vec<f64>,
    /// `E[ℓ_depth^s]`
    pub ell_moment: f64,
    /// `E[ℓ_depth^{−s}]`
    pub ell_neg_moment: f64,
}

/// Atoms and probabilities of a finitely supported law.
pub fn atoms(model: &WeightModel<f64>) -> Result<Vec<(f64, f64)>, HarnessError> {
    match model.family() {
        WeightFamily::TwoPoint { sigma } => Ok(vec![(1.0 - sigma, 0.5), (1.0 + sigma, 0.5)]),
        WeightFamily::Empirical { values, probs } => Ok(values.iter().copied().zip(probs.iter().copied()).collect()),
        WeightFamily::LogNormal { .. } => {
            Err(HarnessError::Config("exact enumeration needs a finitely supported weight law".into()))
        }
    }
}

/// Every weight table for levels `0..depth` in heap order, with its probability.
pub fn weight_tables(model: &WeightModel<f64>, depth: u32) -> Result<Vec<(Vec<f64>, f64)>, HarnessError> {
    if depth == 0 || depth > MAX_ORACLE_DEPTH {
        return Err(HarnessError::Config(format!("oracle depth must be in 1..={MAX_ORACLE_DEPTH}")));
    }
    let atoms = atoms(model)?;
    let nodes = (1usize << depth) - 1;
    let outcomes = atoms
        .len()
        .checked_pow(nodes as u32)
        .filter(|&c| c <= MAX_OUTCOMES)
        .ok_or_else(|| HarnessError::Config("too many outcomes to enumerate".into()))?;
    let mut tables = Vec::with_capacity(outcomes);
    for code in 0..outcomes {
        let mut rest = code;
        let mut weights = Vec::with_capacity(nodes);
        let mut prob = 1.0;
        for _ in 0..nodes {
            let (w, p) = atoms[rest % atoms.len()];
            rest /= atoms.len();
            weights.push(w);
            prob *= p;
        }
        tables.push((weights, prob));
    }
    Ok(tables)
}

/// `μ_depth(I) = 2^{−depth} ∏ W` along the path from the root, per cell.
fn leaf_masses(weights: &[f64], depth: u32) -> Vec<f64> {
    (0..1usize << depth)
        .map(|k| {
            let mut m = 2f64.powi(-(depth as i32));
            for j in 0..depth {
                let ancestor = k >> (depth - j);
                m *= weights[(1 << j) - 1 + ancestor];
            }
            m
        })
        .collect()
}

pub fn enumerate_oracle(model: &WeightModel<f64>, depth: u32, s: f64) -> Result<OracleMoments, HarnessError> {
    if !s.is_finite() {
        return Err(HarnessError::Config(format!("s = {s} must be finite")));
    }
    let tables = weight_tables(model, depth)?;
    let mut cell_moments = vec![0.0; 1 << depth];
    let mut ell_moment = 0.0;
    let mut ell_neg_moment = 0.0;
    for (weights, p) in &tables {
        let masses = leaf_masses(weights, depth);
        for (acc, m) in cell_moments.iter_mut().zip(&masses) {
            *acc += p * m.powf(s);
        }
        let ell: f64 = masses.iter().sum();
        ell_moment += p * ell.powf(s);
        ell_neg_moment += p * ell.powf(-s);
    }
    Ok(OracleMoments { depth, s, outcomes: tables.len(), cell_moments, ell_moment, ell_neg_moment })
}
