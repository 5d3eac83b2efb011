//! Block-structured cross-entropy search for the blocked-antenna support.
//!
//! Candidate supports are drawn block by block from a probability matrix
//! over the `(N_x/N_bx) x (N_y/N_by)` block grid. Every candidate is scored by
//! the least-squares residual norm on its support plus `ε` times its size; the
//! `N_e` best candidates (elites) are averaged into the next probability
//! matrix. The best candidate seen across all iterations is returned.
//!
//! With complete blockage the deviation on a blocked antenna is known to be
//! `-h_n`, so the least-squares fit is skipped and candidates are scored
//! directly against `F (-h ∘ d)`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockage::{complete_blockage_q, extract_params, reconstruct_b, BlockageMode, BlockedAntenna};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{ls_solve, norm2, CMat, CVec, SubsetSolver, C64, ZERO};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeConfig {
    pub n_candidates: usize,
    pub n_elites: usize,
    pub n_iterations: usize,
    /// Weight of the support-size penalty.
    pub epsilon: f64,
    pub block_rows: usize,
    pub block_cols: usize,
    pub mode: BlockageMode,
    /// `P ← α P_elite + (1 - α) P`; 1 uses the plain elite average.
    pub smoothing_alpha: f64,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            n_candidates: 400,
            n_elites: 50,
            n_iterations: 20,
            epsilon: 0.6,
            block_rows: 2,
            block_cols: 2,
            mode: BlockageMode::Partial,
            smoothing_alpha: 1.0,
        }
    }
}

impl CeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.n_candidates == 0 {
            return bad("n_candidates must be at least 1");
        }
        if self.n_elites == 0 || self.n_elites > self.n_candidates {
            return bad("n_elites must be within 1..=n_candidates");
        }
        if self.n_iterations == 0 {
            return bad("n_iterations must be at least 1");
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return bad("epsilon must be a non-negative number");
        }
        if self.block_rows == 0 || self.block_cols == 0 {
            return bad("block dimensions must be positive");
        }
        if !(self.smoothing_alpha > 0.0 && self.smoothing_alpha <= 1.0) {
            return bad("smoothing_alpha must be within (0, 1]");
        }
        Ok(())
    }
}

/// Probability that each block of the deviation matrix is non-zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockProbabilityMatrix {
    /// Antenna grid the blocks tile.
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    /// Column-major over the block grid.
    pub p: Vec<f64>,
}

impl BlockProbabilityMatrix {
    pub fn rows(&self) -> usize {
        self.grid_rows / self.block_rows
    }

    pub fn cols(&self) -> usize {
        self.grid_cols / self.block_cols
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.p[n * self.rows() + m]
    }

    /// Antenna indices (column-major, ascending) covered by the active blocks.
    pub fn expand(&self, blocks: &[bool]) -> Vec<usize> {
        let brows = self.rows();
        let mut support = Vec::new();
        for j in 0..self.grid_cols {
            for i in 0..self.grid_rows {
                if blocks[(j / self.block_cols) * brows + i / self.block_rows] {
                    support.push(j * self.grid_rows + i);
                }
            }
        }
        support
    }
}

/// Uniform `1/2` prior over the block grid.
pub fn init_prob(
    grid_rows: usize,
    grid_cols: usize,
    block_rows: usize,
    block_cols: usize,
) -> Result<BlockProbabilityMatrix> {
    if block_rows == 0
        || block_cols == 0
        || !grid_rows.is_multiple_of(block_rows)
        || !grid_cols.is_multiple_of(block_cols)
    {
        return Err(Error::BlockShapeMismatch {
            rows: grid_rows,
            cols: grid_cols,
            block_rows,
            block_cols,
        });
    }
    let n = (grid_rows / block_rows) * (grid_cols / block_cols);
    Ok(BlockProbabilityMatrix {
        grid_rows,
        grid_cols,
        block_rows,
        block_cols,
        p: vec![0.5; n],
    })
}

/// One sampled support hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateMask {
    /// Block indicator `C_B`, column-major over the block grid.
    pub blocks: Vec<bool>,
    /// Antenna indices where `d = vec(C_B ⊗ 1)` is one.
    pub support: Vec<usize>,
    pub zeta: f64,
    /// Deviation estimate on `support`.
    pub q_sub: CVec,
}

impl CandidateMask {
    /// Dense binary indicator `d` of length `n`.
    pub fn indicator(&self, n: usize) -> Vec<bool> {
        let mut d = vec![false; n];
        for &i in &self.support {
            d[i] = true;
        }
        d
    }
}

/// `true` with probability `p`.
#[inline]
pub(crate) fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> bool {
    rng.random::<f64>() < p
}

/// Draws `n_c` block masks, each block independently Bernoulli(`P_B(m, n)`).
/// Returned candidates are unscored (`zeta = +inf`).
pub fn sample_candidates<R: Rng + ?Sized>(
    prob: &BlockProbabilityMatrix,
    n_c: usize,
    rng: &mut R,
) -> Vec<CandidateMask> {
    (0..n_c)
        .map(|_| {
            let blocks: Vec<bool> = prob.p.iter().map(|&p| bernoulli(p, rng)).collect();
            let support = prob.expand(&blocks);
            CandidateMask {
                blocks,
                support,
                zeta: f64::INFINITY,
                q_sub: Vec::new(),
            }
        })
        .collect()
}

/// Scores support hypotheses against one set of measurements.
#[derive(Debug, Clone)]
pub struct Scorer<'a> {
    y: &'a [C64],
    operator: &'a CMat,
    h: &'a [C64],
    solver: SubsetSolver<'a>,
    y_norm: f64,
}

impl<'a> Scorer<'a> {
    /// `operator` maps the deviation `q` to noiseless measurements; `h` is the
    /// vectorized channel, needed for complete-blockage scoring.
    pub fn new(y: &'a [C64], operator: &'a CMat, h: &'a [C64]) -> Result<Self> {
        if operator.rows() != y.len() {
            return dim_err(format!(
                "operator has {} rows but there are {} measurements",
                operator.rows(),
                y.len()
            ));
        }
        if operator.cols() != h.len() {
            return dim_err(format!(
                "operator has {} columns but the channel has {} entries",
                operator.cols(),
                h.len()
            ));
        }
        Ok(Scorer {
            y,
            operator,
            h,
            solver: SubsetSolver::new(operator, y),
            y_norm: norm2(y),
        })
    }

    pub fn dim(&self) -> usize {
        self.h.len()
    }

    /// `ζ = ‖y - F_S q̂_S‖₂ + ε |S|` and the fitted `q̂_S`.
    pub fn objective(&self, support: &[usize], epsilon: f64, mode: BlockageMode) -> (f64, CVec) {
        if support.is_empty() {
            return (self.y_norm, Vec::new());
        }
        let q_sub: CVec = match mode {
            BlockageMode::Partial => self.solver.solve(support).x,
            BlockageMode::Complete => support.iter().map(|&n| -self.h[n]).collect(),
        };
        let r = self.solver.residual(support, &q_sub);
        (norm2(&r) + epsilon * support.len() as f64, q_sub)
    }

    /// Full-length deviation estimate for a final support.
    fn final_q(&self, support: &[usize], mode: BlockageMode) -> CVec {
        match mode {
            BlockageMode::Complete => complete_blockage_q(self.h, support),
            BlockageMode::Partial => {
                let mut q = vec![ZERO; self.h.len()];
                if !support.is_empty() {
                    let x = ls_solve(&self.operator.select_columns(support), self.y).x;
                    for (&n, v) in support.iter().zip(x) {
                        q[n] = v;
                    }
                }
                q
            }
        }
    }
}

/// Indices of the `n_e` smallest objective values, ties by lower index.
pub fn select_elites(zetas: &[f64], n_e: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..zetas.len()).collect();
    order.sort_by(|&a, &b| zetas[a].total_cmp(&zetas[b]));
    order.truncate(n_e);
    order
}

/// Entrywise mean of the elites' block masks.
pub fn elite_update(
    template: &BlockProbabilityMatrix,
    elites: &[&CandidateMask],
) -> BlockProbabilityMatrix {
    assert!(!elites.is_empty(), "elite update needs at least one elite");
    let masks: Vec<&[bool]> = elites.iter().map(|e| e.blocks.as_slice()).collect();
    BlockProbabilityMatrix {
        p: mean_indicator(&masks, template.p.len()),
        ..template.clone()
    }
}

pub(crate) fn mean_indicator(masks: &[&[bool]], len: usize) -> Vec<f64> {
    let mut acc = vec![0usize; len];
    for m in masks {
        for (a, &bit) in acc.iter_mut().zip(m.iter()) {
            *a += bit as usize;
        }
    }
    acc.into_iter()
        .map(|c| c as f64 / masks.len() as f64)
        .collect()
}

pub(crate) fn smooth(new: &mut [f64], old: &[f64], alpha: f64) {
    if alpha < 1.0 {
        for (n, &o) in new.iter_mut().zip(old) {
            *n = alpha * *n + (1.0 - alpha) * o;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Smallest objective among this iteration's candidates.
    pub best_zeta: f64,
    /// Smallest objective seen up to and including this iteration.
    pub best_so_far: f64,
    pub mean_support: f64,
    /// Sampling probabilities used in this iteration.
    pub probabilities: Vec<f64>,
    /// Receive-side sampling probabilities (joint search only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_probabilities: Option<Vec<f64>>,
}

/// Result of a diagnosis run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    /// Estimated blocked indices into `vec(H)`, ascending.
    pub support: Vec<usize>,
    /// Deviation estimate, zero off the support.
    pub q_hat: CVec,
    pub params: Vec<BlockedAntenna>,
    pub b_hat: CVec,
    pub best_zeta: f64,
    pub trace: Vec<IterationTrace>,
    /// Joint search: blocked transmit antennas of the best candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_support: Option<Vec<usize>>,
    /// Joint search: blocked receive antennas of the best candidate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_support: Option<Vec<usize>>,
    /// Joint search: `B̂`, `N_r x N_t`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_matrix: Option<CMat>,
}

/// Sampling distribution over supports, refit from elites each iteration.
pub(crate) trait CandidateModel {
    type Sample: Clone + Send + Sync;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Self::Sample, Vec<usize>);
    fn refit(&mut self, elites: &[&Self::Sample], alpha: f64);
    fn probabilities(&self) -> (Vec<f64>, Option<Vec<f64>>);
}

pub(crate) struct SearchOutcome<S> {
    pub best: S,
    pub support: Vec<usize>,
    pub zeta: f64,
    pub trace: Vec<IterationTrace>,
}

/// The cross-entropy loop shared by the planar and joint searches.
///
/// All candidates of an iteration are drawn from `rng` before any is scored,
/// so parallel scoring gives the same result as sequential scoring.
pub(crate) fn run_search<M: CandidateModel, R: Rng + ?Sized>(
    model: &mut M,
    scorer: &Scorer<'_>,
    config: &CeConfig,
    rng: &mut R,
) -> SearchOutcome<M::Sample> {
    let mut best: Option<(M::Sample, Vec<usize>, f64)> = None;
    let mut trace = Vec::with_capacity(config.n_iterations);

    for iteration in 0..config.n_iterations {
        let (probabilities, rx_probabilities) = model.probabilities();
        let batch: Vec<(M::Sample, Vec<usize>)> =
            (0..config.n_candidates).map(|_| model.sample(rng)).collect();
        let zetas: Vec<f64> = batch
            .par_iter()
            .map(|(_, support)| scorer.objective(support, config.epsilon, config.mode).0)
            .collect();

        let elites = select_elites(&zetas, config.n_elites);
        let top = elites[0];
        if best.as_ref().is_none_or(|(_, _, z)| zetas[top] < *z) {
            best = Some((batch[top].0.clone(), batch[top].1.clone(), zetas[top]));
        }
        let best_so_far = best.as_ref().map(|b| b.2).unwrap_or(f64::INFINITY);
        let mean_support =
            batch.iter().map(|(_, s)| s.len()).sum::<usize>() as f64 / batch.len() as f64;
        trace.push(IterationTrace {
            iteration,
            best_zeta: zetas[top],
            best_so_far,
            mean_support,
            probabilities,
            rx_probabilities,
        });

        let elite_samples: Vec<&M::Sample> = elites.iter().map(|&i| &batch[i].0).collect();
        model.refit(&elite_samples, config.smoothing_alpha);
    }

    let (best, support, zeta) = best.expect("at least one iteration");
    SearchOutcome {
        best,
        support,
        zeta,
        trace,
    }
}

impl CandidateModel for BlockProbabilityMatrix {
    type Sample = Vec<bool>;

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<bool>, Vec<usize>) {
        let blocks: Vec<bool> = self.p.iter().map(|&p| bernoulli(p, rng)).collect();
        let support = self.expand(&blocks);
        (blocks, support)
    }

    fn refit(&mut self, elites: &[&Vec<bool>], alpha: f64) {
        let masks: Vec<&[bool]> = elites.iter().map(|e| e.as_slice()).collect();
        let mut p = mean_indicator(&masks, self.p.len());
        smooth(&mut p, &self.p, alpha);
        self.p = p;
    }

    fn probabilities(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        (self.p.clone(), None)
    }
}

/// Assembles the report for a final support: deviation estimate, blockage
/// coefficients and per-antenna parameters.
pub(crate) fn finish_report(
    scorer: &Scorer<'_>,
    support: Vec<usize>,
    zeta: f64,
    mode: BlockageMode,
    trace: Vec<IterationTrace>,
) -> Result<DiagnosisReport> {
    let q_hat = scorer.final_q(&support, mode);
    let params = extract_params(&q_hat, scorer.h, &support)?;
    let b_hat = reconstruct_b(&q_hat, scorer.h, &support)?;
    Ok(DiagnosisReport {
        support,
        q_hat,
        params,
        b_hat,
        best_zeta: zeta,
        trace,
        tx_support: None,
        rx_support: None,
        b_matrix: None,
    })
}

/// Block cross-entropy diagnosis of a planar transmit array.
///
/// `h` is the known channel on the `N_x x N_y` grid, `precoder` the `K x N_T`
/// sounding matrix and `y` the difference measurements.
pub fn run_ce_aad<R: Rng + ?Sized>(
    y: &[C64],
    precoder: &CMat,
    h: &CMat,
    config: &CeConfig,
    rng: &mut R,
) -> Result<DiagnosisReport> {
    config.validate()?;
    let mut prob = init_prob(h.rows(), h.cols(), config.block_rows, config.block_cols)?;
    let scorer = Scorer::new(y, precoder, h.as_slice())?;
    let outcome = run_search(&mut prob, &scorer, config, rng);
    finish_report(&scorer, outcome.support, outcome.zeta, config.mode, outcome.trace)
}
