//! Sounding matrices and noisy difference measurements.
//!
//! Each measurement is the difference between the received signal of the
//! blocked array and that of a healthy reference, so it only sees the
//! deviation `q`: `y = F q + n` for a transmit array, `y = U q + n` with
//! `u_k = f_k^T ⊗ w_k^H` when both ends are arrays.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blockage::{truth_q, truth_q_joint, BlockagePattern, JointBlockagePattern};
use crate::channel::complex_normal;
use crate::error::{dim_err, Result};
use crate::numerics::{dotc, kron_row, CMat, CVec, C64};

/// Outputs of a 2-bit phase shifter.
pub const PHASE_ALPHABET: [C64; 4] = [
    C64::new(1.0, 1.0),
    C64::new(1.0, -1.0),
    C64::new(-1.0, -1.0),
    C64::new(-1.0, 1.0),
];

/// A complete set of measurements ready for diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundingSet {
    /// `K x N_t` precoders; row `k` is `f_k^T`.
    pub precoder: CMat,
    /// `K x N_r` combiners; row `k` is `w_k^T`. Absent for a single receive antenna.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub combiner: Option<CMat>,
    pub noise_var: f64,
    pub y: CVec,
}

impl SoundingSet {
    pub fn num_measurements(&self) -> usize {
        self.y.len()
    }

    /// Linear map from `q` to noiseless measurements: `F`, or `U` when a
    /// combiner is present.
    pub fn operator(&self) -> Result<CMat> {
        match &self.combiner {
            None => Ok(self.precoder.clone()),
            Some(w) => joint_operator(&self.precoder, w),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.y.len();
        if self.precoder.rows() != k {
            return dim_err(format!(
                "precoder has {} rows but there are {k} measurements",
                self.precoder.rows()
            ));
        }
        if let Some(w) = &self.combiner {
            if w.rows() != k {
                return dim_err(format!(
                    "combiner has {} rows but there are {k} measurements",
                    w.rows()
                ));
            }
        }
        if !(self.noise_var >= 0.0) {
            return dim_err("noise variance must be non-negative");
        }
        Ok(())
    }
}

/// `K x N` matrix with i.i.d. entries drawn uniformly from [`PHASE_ALPHABET`].
///
/// Rows are drawn in order, so for a fixed stream the first `K'` rows do not
/// depend on `K`.
pub fn gen_precoder<R: Rng + ?Sized>(k: usize, n: usize, rng: &mut R) -> CMat {
    assert!(k >= 1 && n >= 1, "precoder needs positive dimensions");
    let rows: Vec<CVec> = (0..k)
        .map(|_| (0..n).map(|_| PHASE_ALPHABET[rng.random_range(0..4)]).collect())
        .collect();
    CMat::from_rows(&rows).expect("rows are uniform")
}

/// `δ² = 10^(-SNR/10)`.
pub fn noise_var_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

fn add_noise<R: Rng + ?Sized>(y: &mut [C64], noise_var: f64, rng: &mut R) {
    for v in y.iter_mut() {
        *v += complex_normal(rng, noise_var);
    }
}

/// `y = F (vec(H) ∘ b - vec(H)) + n`, `n ~ CN(0, δ² I)`.
pub fn measure_tx<R: Rng + ?Sized>(
    h: &CMat,
    pattern: &BlockagePattern,
    precoder: &CMat,
    noise_var: f64,
    rng: &mut R,
) -> Result<CVec> {
    let q = truth_q(h, pattern)?;
    let mut y = precoder.mul_vec(&q)?;
    add_noise(&mut y, noise_var, rng);
    Ok(y)
}

/// Stacked measurement operator with rows `f_k^T ⊗ w_k^H`.
pub fn joint_operator(precoder: &CMat, combiner: &CMat) -> Result<CMat> {
    if precoder.rows() != combiner.rows() {
        return dim_err(format!(
            "{} precoders but {} combiners",
            precoder.rows(),
            combiner.rows()
        ));
    }
    let rows: Vec<CVec> = (0..precoder.rows())
        .map(|k| kron_row(&precoder.row(k), &combiner.row(k)))
        .collect();
    CMat::from_rows(&rows)
}

/// `y_k = w_k^H (H ∘ B - H) f_k + n_k`, evaluated in matrix form. Returns the
/// measurements together with the operator `U` satisfying `y = U vec(Q) + n`.
pub fn measure_joint<R: Rng + ?Sized>(
    h: &CMat,
    pattern: &JointBlockagePattern,
    precoder: &CMat,
    combiner: &CMat,
    noise_var: f64,
    rng: &mut R,
) -> Result<(CVec, CMat)> {
    let q = truth_q_joint(h, pattern)?;
    if precoder.cols() != h.cols() || combiner.cols() != h.rows() {
        return dim_err(format!(
            "channel is {}x{} but precoders have {} and combiners {} entries",
            h.rows(),
            h.cols(),
            precoder.cols(),
            combiner.cols()
        ));
    }
    let qm = CMat::from_col_major(h.rows(), h.cols(), q)?;
    let u = joint_operator(precoder, combiner)?;
    let mut y: CVec = (0..precoder.rows())
        .map(|k| {
            let qf = qm.mul_vec(&precoder.row(k))?;
            Ok(dotc(&combiner.row(k), &qf))
        })
        .collect::<Result<_>>()?;
    add_noise(&mut y, noise_var, rng);
    Ok((y, u))
}
