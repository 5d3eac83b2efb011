//! Joint transmit/receive diagnosis between two linear arrays.
//!
//! A blocked transmit antenna corrupts a whole column of the deviation matrix
//! `Q = H ∘ B - H` and a blocked receive antenna a whole row, so candidate
//! supports are built as `C(m, n) = d_r(m) OR d_t(n)` from two independent
//! binary vectors, each with its own probability vector. Scoring, elite
//! selection and the output step are shared with the planar search.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockage::reconstruct_b_matrix;
use crate::ce::{
    bernoulli, finish_report, mean_indicator, run_search, smooth, CandidateModel, CeConfig,
    DiagnosisReport, Scorer,
};
use crate::error::{dim_err, Result};
use crate::numerics::{CMat, C64};

/// Per-antenna blockage probabilities at both ends.
///
/// A side with a single antenna is treated as a free (never blocked) antenna:
/// its probability stays 0 and it consumes no random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointProbability {
    pub p_t: Vec<f64>,
    pub p_r: Vec<f64>,
}

impl JointProbability {
    pub fn new(n_t: usize, n_r: usize) -> Self {
        let init = |n: usize| if n > 1 { vec![0.5; n] } else { vec![0.0; n] };
        JointProbability {
            p_t: init(n_t),
            p_r: init(n_r),
        }
    }

    fn tx_free(&self) -> bool {
        self.p_t.len() <= 1
    }

    fn rx_free(&self) -> bool {
        self.p_r.len() <= 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointCandidate {
    pub d_t: Vec<bool>,
    pub d_r: Vec<bool>,
    /// Indices into `vec(C)` where `d_r(m) OR d_t(n)` holds, ascending.
    pub support: Vec<usize>,
    pub zeta: f64,
}

/// Support of the OR-composed `N_r x N_t` mask, in `vec` order.
pub fn or_support(d_t: &[bool], d_r: &[bool]) -> Vec<usize> {
    let nr = d_r.len();
    let mut support = Vec::new();
    for (n, &t) in d_t.iter().enumerate() {
        for (m, &r) in d_r.iter().enumerate() {
            if t || r {
                support.push(n * nr + m);
            }
        }
    }
    support
}

fn draw_side<R: Rng + ?Sized>(p: &[f64], free: bool, rng: &mut R) -> Vec<bool> {
    if free {
        vec![false; p.len()]
    } else {
        p.iter().map(|&p| bernoulli(p, rng)).collect()
    }
}

/// Draws `n_c` candidates: `d_t` first, then `d_r`, for each candidate.
pub fn sample_joint<R: Rng + ?Sized>(
    prob: &JointProbability,
    n_c: usize,
    rng: &mut R,
) -> Vec<JointCandidate> {
    (0..n_c)
        .map(|_| {
            let ((d_t, d_r), support) = prob.sample(rng);
            JointCandidate {
                d_t,
                d_r,
                support,
                zeta: f64::INFINITY,
            }
        })
        .collect()
}

/// Elite means of `d_t` and `d_r`.
pub fn joint_elite_update(elites: &[&JointCandidate]) -> JointProbability {
    assert!(!elites.is_empty(), "elite update needs at least one elite");
    let t: Vec<&[bool]> = elites.iter().map(|e| e.d_t.as_slice()).collect();
    let r: Vec<&[bool]> = elites.iter().map(|e| e.d_r.as_slice()).collect();
    JointProbability {
        p_t: mean_indicator(&t, elites[0].d_t.len()),
        p_r: mean_indicator(&r, elites[0].d_r.len()),
    }
}

impl CandidateModel for JointProbability {
    type Sample = (Vec<bool>, Vec<bool>);

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Self::Sample, Vec<usize>) {
        let d_t = draw_side(&self.p_t, self.tx_free(), rng);
        let d_r = draw_side(&self.p_r, self.rx_free(), rng);
        let support = or_support(&d_t, &d_r);
        ((d_t, d_r), support)
    }

    fn refit(&mut self, elites: &[&Self::Sample], alpha: f64) {
        let t: Vec<&[bool]> = elites.iter().map(|e| e.0.as_slice()).collect();
        let r: Vec<&[bool]> = elites.iter().map(|e| e.1.as_slice()).collect();
        let mut p_t = mean_indicator(&t, self.p_t.len());
        let mut p_r = mean_indicator(&r, self.p_r.len());
        smooth(&mut p_t, &self.p_t, alpha);
        smooth(&mut p_r, &self.p_r, alpha);
        self.p_t = p_t;
        self.p_r = p_r;
    }

    fn probabilities(&self) -> (Vec<f64>, Option<Vec<f64>>) {
        let rx = (!self.rx_free()).then(|| self.p_r.clone());
        (self.p_t.clone(), rx)
    }
}

fn indices(d: &[bool]) -> Vec<usize> {
    d.iter()
        .enumerate()
        .filter_map(|(i, &b)| b.then_some(i))
        .collect()
}

/// Joint cross-entropy diagnosis.
///
/// `operator` is `U` (rows `f_k^T ⊗ w_k^H`), `h` the known `N_r x N_t`
/// channel. Block dimensions in `config` are ignored; the row/column
/// structure replaces them.
pub fn run_joint_ce_aad<R: Rng + ?Sized>(
    y: &[C64],
    operator: &CMat,
    h: &CMat,
    config: &CeConfig,
    rng: &mut R,
) -> Result<DiagnosisReport> {
    config.validate()?;
    if operator.cols() != h.rows() * h.cols() {
        return dim_err(format!(
            "operator has {} columns, channel is {}x{}",
            operator.cols(),
            h.rows(),
            h.cols()
        ));
    }
    let scorer = Scorer::new(y, operator, h.as_slice())?;
    let mut prob = JointProbability::new(h.cols(), h.rows());
    let outcome = run_search(&mut prob, &scorer, config, rng);
    let (d_t, d_r) = outcome.best;
    let mut report = finish_report(&scorer, outcome.support, outcome.zeta, config.mode, outcome.trace)?;
    report.b_matrix = Some(reconstruct_b_matrix(&report.q_hat, h, &report.support)?);
    report.tx_support = Some(indices(&d_t));
    report.rx_support = Some(indices(&d_r));
    Ok(report)
}
