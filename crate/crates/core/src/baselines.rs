//! Reference recoverers: orthogonal matching pursuit, per-antenna
//! cross-entropy without block structure, and least squares on the true
//! support (the genie bound).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ce::{run_ce_aad, CeConfig, DiagnosisReport};
use crate::error::Result;
use crate::numerics::{dotc, ls_solve, norm2, sub, CMat, CVec, C64, ZERO};

/// Stopping rule for [`omp`]: stop after `max_sparsity` atoms or once the
/// residual norm is at most `residual_threshold`, whichever comes first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmpStop {
    pub max_sparsity: usize,
    pub residual_threshold: f64,
}

impl OmpStop {
    /// `S = ceil(N/4)` atoms and `ρ = √K · δ`.
    pub fn for_problem(k: usize, n: usize, noise_var: f64) -> Self {
        OmpStop {
            max_sparsity: n.div_ceil(4),
            residual_threshold: (k as f64).sqrt() * noise_var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OmpResult {
    /// Selected columns, ascending.
    pub support: Vec<usize>,
    /// Columns in the order they were selected.
    pub selection_order: Vec<usize>,
    /// Full-length estimate, zero off the support.
    pub q_hat: CVec,
    /// Residual norm before the first step and after each step.
    pub residual_norms: Vec<f64>,
}

pub fn omp(y: &[C64], f: &CMat, stop: OmpStop) -> OmpResult {
    let n = f.cols();
    let max_atoms = stop.max_sparsity.min(f.rows()).min(n);
    let col_norms: Vec<f64> = (0..n).map(|j| norm2(f.col(j))).collect();
    let mut chosen = vec![false; n];
    let mut order: Vec<usize> = Vec::new();
    let mut coeffs: CVec = Vec::new();
    let mut residual = y.to_vec();
    let mut norms = vec![norm2(&residual)];

    while order.len() < max_atoms && *norms.last().unwrap() > stop.residual_threshold {
        let mut best = None;
        let mut best_corr = 0.0;
        for j in (0..n).filter(|&j| !chosen[j] && col_norms[j] > 0.0) {
            let corr = dotc(f.col(j), &residual).norm() / col_norms[j];
            if corr > best_corr {
                best_corr = corr;
                best = Some(j);
            }
        }
        let Some(j) = best else { break };
        chosen[j] = true;
        order.push(j);
        let sub_f = f.select_columns(&order);
        coeffs = ls_solve(&sub_f, y).x;
        residual = sub(y, &sub_f.mul_vec(&coeffs).expect("shapes agree"));
        norms.push(norm2(&residual));
    }

    let mut q_hat = vec![ZERO; n];
    for (&j, &c) in order.iter().zip(&coeffs) {
        q_hat[j] = c;
    }
    let mut support = order.clone();
    support.sort_unstable();
    OmpResult {
        support,
        selection_order: order,
        q_hat,
        residual_norms: norms,
    }
}

/// Least squares restricted to the true support; zero elsewhere.
pub fn oracle_ls(y: &[C64], f: &CMat, true_support: &[usize]) -> CVec {
    let mut q = vec![ZERO; f.cols()];
    if true_support.is_empty() {
        return q;
    }
    let x = ls_solve(&f.select_columns(true_support), y).x;
    for (&n, v) in true_support.iter().zip(x) {
        q[n] = v;
    }
    q
}

/// Cross-entropy search with one probability per antenna (no block prior).
pub fn plain_ce<R: Rng + ?Sized>(
    y: &[C64],
    f: &CMat,
    h: &CMat,
    config: &CeConfig,
    rng: &mut R,
) -> Result<DiagnosisReport> {
    let per_antenna = CeConfig {
        block_rows: 1,
        block_cols: 1,
        ..config.clone()
    };
    run_ce_aad(y, f, h, &per_antenna, rng)
}
