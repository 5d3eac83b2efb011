//! Diagnosis of blocked antennas in millimeter-wave MIMO arrays.
//!
//! The crate simulates multipath channels and antenna blockages, synthesizes
//! sounding measurements from 2-bit phase-shifter precoders, and recovers the
//! blocked-antenna support and blockage coefficients with a block-structured
//! cross-entropy search. Baselines (OMP, plain cross-entropy and a genie
//! least-squares bound) and a seeded Monte Carlo harness are included.

pub mod baselines;
pub mod blockage;
pub mod ce;
pub mod channel;
pub mod error;
pub mod fixture;
pub mod harness;
pub mod joint;
pub mod numerics;
pub mod seed;
pub mod sounding;

pub use error::{Error, Result};
pub use numerics::{CMat, CVec, C64};
