//! Self-contained JSON fixtures: channel, sounding set and (optionally) the
//! ground-truth blockage of one problem instance.
//!
//! Complex numbers are `[re, im]` pairs, matrices are
//! `{"rows": r, "cols": c, "data": [...]}` in column-major order, and the
//! blockage parameters `τ`, `Ψ` are decimal strings with 17 significant digits.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::blockage::{BlockageMode, BlockagePattern, JointBlockagePattern};
use crate::channel::ChannelRealization;
use crate::error::{dim_err, Error, Result};
use crate::harness::{Instance, Scenario};
use crate::numerics::{vec, CMat, CVec};
use crate::sounding::SoundingSet;

pub const FIXTURE_FORMAT: &str = "aad-fixture/1";

/// True blockage of an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub tx: BlockagePattern,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx: Option<BlockagePattern>,
    /// `B = b_r b_t^T`; present when `rx` is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_matrix: Option<CMat>,
}

impl GroundTruth {
    pub fn tx_only(pattern: BlockagePattern) -> Self {
        GroundTruth {
            tx: pattern,
            rx: None,
            b_matrix: None,
        }
    }

    pub fn joint(pattern: JointBlockagePattern) -> Self {
        GroundTruth {
            tx: pattern.tx,
            rx: Some(pattern.rx),
            b_matrix: Some(pattern.b_matrix),
        }
    }

    fn as_joint(&self) -> Option<JointBlockagePattern> {
        self.rx
            .as_ref()
            .map(|rx| JointBlockagePattern::new(self.tx.clone(), rx.clone()))
    }

    /// Indices of non-zero entries of `q` (or `vec(Q)`).
    pub fn support(&self) -> Vec<usize> {
        match self.as_joint() {
            Some(j) => j.support(),
            None => self.tx.support.clone(),
        }
    }

    /// `b`, or `vec(B)` for a joint instance.
    pub fn b_vec(&self) -> CVec {
        match self.as_joint() {
            Some(j) => vec(&j.b_matrix),
            None => self.tx.b.clone(),
        }
    }

    fn validate(&self) -> Result<()> {
        check_pattern(&self.tx, "truth.tx")?;
        match (&self.rx, &self.b_matrix) {
            (None, None) => Ok(()),
            (Some(rx), Some(b)) => {
                check_pattern(rx, "truth.rx")?;
                let expected = JointBlockagePattern::new(self.tx.clone(), rx.clone()).b_matrix;
                if (b.rows(), b.cols()) != (expected.rows(), expected.cols()) {
                    return dim_err(format!(
                        "field `truth.b_matrix`: {}x{}, expected {}x{}",
                        b.rows(),
                        b.cols(),
                        expected.rows(),
                        expected.cols()
                    ));
                }
                Ok(())
            }
            _ => dim_err("field `truth`: `rx` and `b_matrix` must appear together"),
        }
    }
}

fn check_pattern(p: &BlockagePattern, field: &str) -> Result<()> {
    let n = p.b.len();
    if p.support.iter().any(|&i| i >= n) || p.params.iter().any(|a| a.index >= n) {
        return dim_err(format!("field `{field}`: index out of range for {n} antennas"));
    }
    if p.support.len() != p.params.len() {
        return dim_err(format!(
            "field `{field}`: {} support entries but {} parameter entries",
            p.support.len(),
            p.params.len()
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Fixture {
    pub format: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub mode: BlockageMode,
    /// Master seed and trial index the instance was generated from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_index: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel: Option<ChannelRealization>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sounding: Option<SoundingSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<GroundTruth>,
}

impl Fixture {
    pub fn from_instance(instance: &Instance, seed: Option<u64>, trial_index: Option<u64>, snr_db: Option<f64>) -> Self {
        Fixture {
            format: FIXTURE_FORMAT.to_string(),
            scenario: instance.scenario,
            mode: instance.mode,
            seed,
            trial_index,
            snr_db,
            channel: Some(instance.channel.clone()),
            sounding: Some(instance.sounding.clone()),
            truth: Some(instance.truth.clone()),
        }
    }

    /// Parses and dimension-checks a fixture. `context` (usually the file
    /// name) prefixes error messages.
    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let fixture: Fixture = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        fixture.validate().map_err(|e| Error::Parse {
            context: context.to_string(),
            message: e.to_string(),
        })?;
        Ok(fixture)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string(self).expect("fixture serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != FIXTURE_FORMAT {
            return Err(Error::InvalidConfig(format!(
                "field `format`: expected \"{FIXTURE_FORMAT}\", found \"{}\"",
                self.format
            )));
        }
        let joint = self.scenario == Scenario::Joint;
        let shape = match &self.channel {
            Some(ch) => {
                ch.tx.validate()?;
                let expected = match (&ch.rx, joint) {
                    (None, false) => ch.tx.shape(),
                    (Some(rx), true) => (rx.num_elements(), ch.tx.num_elements()),
                    (None, true) => return dim_err("field `channel.rx`: required for a joint fixture"),
                    (Some(_), false) => return dim_err("field `channel.rx`: only allowed in a joint fixture"),
                };
                if (ch.h.rows(), ch.h.cols()) != expected {
                    return dim_err(format!(
                        "field `channel.h`: {}x{}, expected {}x{}",
                        ch.h.rows(),
                        ch.h.cols(),
                        expected.0,
                        expected.1
                    ));
                }
                Some(expected)
            }
            None => None,
        };
        if let Some(s) = &self.sounding {
            s.validate()
                .map_err(|e| Error::DimensionMismatch(format!("field `sounding`: {e}")))?;
            if s.combiner.is_some() != joint {
                return dim_err("field `sounding.combiner`: present exactly for joint fixtures");
            }
            if let Some((rows, cols)) = shape {
                let (n_t, n_r) = if joint { (cols, rows) } else { (rows * cols, 1) };
                if s.precoder.cols() != n_t {
                    return dim_err(format!(
                        "field `sounding.precoder`: {} columns, channel has {n_t} transmit antennas",
                        s.precoder.cols()
                    ));
                }
                if let Some(w) = &s.combiner {
                    if w.cols() != n_r {
                        return dim_err(format!(
                            "field `sounding.combiner`: {} columns, channel has {n_r} receive antennas",
                            w.cols()
                        ));
                    }
                }
            }
        }
        if let Some(t) = &self.truth {
            t.validate()?;
            if t.rx.is_some() != joint {
                return dim_err("field `truth.rx`: present exactly for joint fixtures");
            }
            if let Some((rows, cols)) = shape {
                let n = rows * cols;
                if t.b_vec().len() != n {
                    return dim_err(format!(
                        "field `truth`: covers {} entries, channel has {n}",
                        t.b_vec().len()
                    ));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blockage::Placement;
    use crate::channel::ArrayGeometry;
    use crate::harness::{generate_instance, ScenarioSpec};

    fn spec(scenario: Scenario) -> ScenarioSpec {
        let (geometry, rx_geometry) = match scenario {
            Scenario::TxOnly => (ArrayGeometry::upa(4, 4), None),
            Scenario::Joint => (ArrayGeometry::ula(5), Some(ArrayGeometry::ula(3))),
        };
        ScenarioSpec {
            scenario,
            geometry,
            rx_geometry,
            paths: 3,
            p_b: 0.25,
            mode: BlockageMode::Partial,
            placement: Placement::Free,
        }
    }

    fn fixture(scenario: Scenario) -> Fixture {
        let inst = generate_instance(&spec(scenario), 12, 0.1, 5, 1).unwrap();
        Fixture::from_instance(&inst, Some(5), Some(1), Some(10.0))
    }

    #[test]
    fn json_roundtrip() {
        for scenario in [Scenario::TxOnly, Scenario::Joint] {
            let f = fixture(scenario);
            let text = f.to_json();
            assert_eq!(Fixture::from_json_str(&text, "mem").unwrap(), f);
            assert!(text.contains("\"tau\":\""));
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = fixture(Scenario::TxOnly).to_json();
        let err = Fixture::from_json_str(&text[..text.len() / 2], "f.json").unwrap_err();
        match err {
            Error::Parse { context, .. } => assert!(context.starts_with("f.json:1:")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let mut f = fixture(Scenario::TxOnly);
        f.sounding.as_mut().unwrap().precoder = CMat::zeros(12, 15);
        assert!(f.validate().unwrap_err().to_string().contains("sounding.precoder"));

        let mut f = fixture(Scenario::TxOnly);
        f.sounding.as_mut().unwrap().y.pop();
        assert!(f.validate().unwrap_err().to_string().contains("sounding"));

        let mut f = fixture(Scenario::Joint);
        f.channel.as_mut().unwrap().rx = None;
        assert!(f.validate().unwrap_err().to_string().contains("channel.rx"));

        let mut f = fixture(Scenario::Joint);
        f.sounding.as_mut().unwrap().combiner = Some(CMat::zeros(12, 4));
        assert!(f.validate().unwrap_err().to_string().contains("sounding.combiner"));

        let mut f = fixture(Scenario::TxOnly);
        f.truth.as_mut().unwrap().tx.support.push(99);
        assert!(f.validate().is_err());

        let mut f = fixture(Scenario::TxOnly);
        f.format = "other".into();
        assert!(f.validate().is_err());

        let mut f = fixture(Scenario::TxOnly);
        f.truth = None;
        f.channel = None;
        assert!(f.validate().is_ok());
    }

    #[test]
    fn truth_views() {
        let f = fixture(Scenario::Joint);
        let t = f.truth.unwrap();
        assert_eq!(t.b_vec(), vec(t.b_matrix.as_ref().unwrap()));
        let g = fixture(Scenario::TxOnly).truth.unwrap();
        assert_eq!(g.support(), g.tx.support);
        assert_eq!(g.b_vec(), g.tx.b);
    }
}
