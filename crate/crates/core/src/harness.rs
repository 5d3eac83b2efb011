//! Seeded Monte Carlo experiments: NMSE of the recovered blockage versus the
//! number of measurements or the SNR.
//!
//! Each trial draws channel, blockage, sounding matrices and noise from
//! separate streams keyed by `(master_seed, trial_index, stage)`, then runs
//! every configured method on the same data. The channel and blockage of a
//! trial do not depend on the sweep value; precoders for a smaller `K` are a
//! prefix of those for a larger one, and the noise of an SNR sweep is one
//! draw rescaled.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{omp, oracle_ls, plain_ce, OmpStop};
use crate::blockage::{
    extract_params, gen_blockage_with, gen_joint_blockage, reconstruct_b, reconstruct_b_matrix,
    BlockageMode, Placement,
};
use crate::ce::{run_ce_aad, CeConfig, DiagnosisReport};
use crate::channel::{gen_ula_channel, gen_upa_channel, ArrayGeometry, ChannelRealization};
use crate::error::{dim_err, Error, Result};
use crate::fixture::GroundTruth;
use crate::joint::run_joint_ce_aad;
use crate::numerics::{norm2, norm_sqr, sub, CMat, C64};
use crate::seed::stream;
use crate::sounding::{gen_precoder, measure_joint, measure_tx, noise_var_from_snr, SoundingSet};

/// Environment variable that overrides `master_seed` when a config is loaded.
pub const SEED_ENV: &str = "AAD_MASTER_SEED";

pub const CSV_HEADER: &str =
    "method,sweep_name,sweep_value,mean_nmse,median_nmse,std_nmse,trials,failures,wall_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Planar transmit array, single receive antenna.
    TxOnly,
    /// Linear arrays at both ends.
    Joint,
}

/// Declared in label order so that sorting rows by method sorts them by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ce-aad")]
    CeAad,
    /// Orthogonal matching pursuit, reported as `omp-baseline`.
    #[serde(rename = "omp-baseline", alias = "omp")]
    Omp,
    #[serde(rename = "oracle")]
    Oracle,
    #[serde(rename = "plain-ce")]
    PlainCe,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CeAad, Method::Omp, Method::Oracle, Method::PlainCe];

    pub fn label(self) -> &'static str {
        match self {
            Method::CeAad => "ce-aad",
            Method::Omp => "omp-baseline",
            Method::Oracle => "oracle",
            Method::PlainCe => "plain-ce",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.label() == s || (s == "omp" && *m == Method::Omp))
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown method `{s}`, expected one of: ce-aad, plain-ce, omp, oracle"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    K,
    SnrDb,
}

impl SweepVariable {
    pub fn name(self) -> &'static str {
        match self {
            SweepVariable::K => "k",
            SweepVariable::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Overrides for the OMP stopping rule; unset fields use
/// [`OmpStop::for_problem`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OmpSettings {
    pub max_sparsity: Option<usize>,
    pub residual_threshold: Option<f64>,
}

impl OmpSettings {
    pub fn stop(&self, k: usize, n: usize, noise_var: f64) -> OmpStop {
        let base = OmpStop::for_problem(k, n, noise_var);
        OmpStop {
            max_sparsity: self.max_sparsity.unwrap_or(base.max_sparsity),
            residual_threshold: self.residual_threshold.unwrap_or(base.residual_threshold),
        }
    }
}

/// Everything needed to draw one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    /// Transmit array.
    pub geometry: ArrayGeometry,
    /// Receive array of a joint scenario.
    pub rx_geometry: Option<ArrayGeometry>,
    pub paths: usize,
    pub p_b: f64,
    pub mode: BlockageMode,
    pub placement: Placement,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        crate::blockage::check_probability(self.p_b)?;
        if self.paths == 0 {
            return Err(Error::InvalidConfig("paths must be at least 1".into()));
        }
        match self.scenario {
            Scenario::TxOnly => {
                if !matches!(self.geometry, ArrayGeometry::Upa { .. }) {
                    return Err(Error::InvalidConfig("tx_only needs a upa geometry".into()));
                }
                if self.rx_geometry.is_some() {
                    return Err(Error::InvalidConfig("rx_geometry is only used by joint".into()));
                }
            }
            Scenario::Joint => {
                let rx = self.rx_geometry.unwrap_or(self.geometry);
                rx.validate()?;
                if !matches!(self.geometry, ArrayGeometry::Ula { .. })
                    || !matches!(rx, ArrayGeometry::Ula { .. })
                {
                    return Err(Error::InvalidConfig("joint needs ula geometries".into()));
                }
                if self.placement != Placement::Free {
                    return Err(Error::InvalidConfig("joint supports free placement only".into()));
                }
            }
        }
        Ok(())
    }

    pub fn rx(&self) -> Option<ArrayGeometry> {
        match self.scenario {
            Scenario::TxOnly => None,
            Scenario::Joint => Some(self.rx_geometry.unwrap_or(self.geometry)),
        }
    }
}

fn default_paths() -> usize {
    10
}

fn default_trials() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Transmit array.
    pub geometry: ArrayGeometry,
    /// Receive array of a joint scenario; defaults to `geometry`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rx_geometry: Option<ArrayGeometry>,
    /// Number of propagation paths `L`.
    #[serde(default = "default_paths")]
    pub paths: usize,
    pub p_b: f64,
    /// Blockage type; also passed to the solver.
    #[serde(default)]
    pub mode: BlockageMode,
    #[serde(default)]
    pub placement: Placement,
    pub sweep: Sweep,
    /// Measurement count when sweeping the SNR.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// SNR when sweeping `K`; absent means noiseless.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub master_seed: u64,
    #[serde(default)]
    pub solver: CeConfig,
    #[serde(default)]
    pub omp: OmpSettings,
    /// Measure wall time per method. Off by default so output files are
    /// reproducible byte for byte.
    #[serde(default)]
    pub record_timing: bool,
}

/// One value of the sweep variable with the resulting `K` and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    pub k: usize,
    pub noise_var: f64,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, context: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            context: format!("{context}:{}:{}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        Ok(config)
    }

    /// Reads a config file, applies the seed override from [`SEED_ENV`] and
    /// validates the result.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut config = Self::from_json_str(&text, &path.display().to_string())?;
        if let Some(seed) = seed_from_env()? {
            config.master_seed = seed;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn scenario_spec(&self) -> ScenarioSpec {
        ScenarioSpec {
            scenario: self.scenario,
            geometry: self.geometry,
            rx_geometry: self.rx_geometry,
            paths: self.paths,
            p_b: self.p_b,
            mode: self.mode,
            placement: self.placement,
        }
    }

    pub fn solver_config(&self) -> CeConfig {
        CeConfig {
            mode: self.mode,
            ..self.solver.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        self.scenario_spec().validate()?;
        self.solver_config().validate()?;
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must not be empty".into());
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return bad(format!("method `{}` listed twice", m.label()));
            }
        }
        let values = &self.sweep.values;
        if values.is_empty() {
            return bad("sweep values must not be empty".into());
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sweep values must be finite and strictly increasing".into());
        }
        match self.sweep.variable {
            SweepVariable::K => {
                if values.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
                    return bad("measurement counts must be positive integers".into());
                }
                if self.k.is_some() {
                    return bad("`k` is set by the sweep; remove it".into());
                }
            }
            SweepVariable::SnrDb => {
                if self.k.is_none_or(|k| k == 0) {
                    return bad("an snr_db sweep needs a positive `k`".into());
                }
                if self.snr_db.is_some() {
                    return bad("`snr_db` is set by the sweep; remove it".into());
                }
            }
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return bad("snr_db must be finite".into());
            }
        }
        if self.scenario == Scenario::TxOnly && self.methods.contains(&Method::CeAad) {
            let (rows, cols) = self.geometry.shape();
            let cfg = self.solver_config();
            if rows % cfg.block_rows != 0 || cols % cfg.block_cols != 0 {
                return Err(Error::BlockShapeMismatch {
                    rows,
                    cols,
                    block_rows: cfg.block_rows,
                    block_cols: cfg.block_cols,
                });
            }
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<SweepPoint> {
        self.sweep
            .values
            .iter()
            .map(|&value| match self.sweep.variable {
                SweepVariable::K => SweepPoint {
                    value,
                    k: value as usize,
                    noise_var: self.snr_db.map_or(0.0, noise_var_from_snr),
                },
                SweepVariable::SnrDb => SweepPoint {
                    value,
                    k: self.k.unwrap_or(0),
                    noise_var: noise_var_from_snr(value),
                },
            })
            .collect()
    }
}

/// Parses [`SEED_ENV`] if it is set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={s:?} is not a 64-bit unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// One generated problem: channel, true blockage and measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub scenario: Scenario,
    pub mode: BlockageMode,
    pub channel: ChannelRealization,
    pub truth: GroundTruth,
    pub sounding: SoundingSet,
    /// `F`, or `U` for a joint instance.
    pub operator: CMat,
}

impl Instance {
    /// Assembles an instance from stored parts, rebuilding the operator.
    pub fn from_parts(
        scenario: Scenario,
        mode: BlockageMode,
        channel: ChannelRealization,
        truth: GroundTruth,
        sounding: SoundingSet,
    ) -> Result<Self> {
        let operator = sounding.operator()?;
        Ok(Instance {
            scenario,
            mode,
            channel,
            truth,
            sounding,
            operator,
        })
    }

    /// SHA-256 over `(H, b, F or U, y)`, hex encoded.
    pub fn data_hash(&self) -> String {
        let mut hasher = Sha256::new();
        let mut feed = |zs: &[C64]| {
            hasher.update((zs.len() as u64).to_le_bytes());
            for z in zs {
                hasher.update(z.re.to_le_bytes());
                hasher.update(z.im.to_le_bytes());
            }
        };
        feed(self.channel.h.as_slice());
        feed(&self.truth.b_vec());
        feed(self.operator.as_slice());
        feed(&self.sounding.y);
        hasher
            .finalize()
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }
}

/// Draws instance `trial_index` of a scenario with `k` measurements and noise
/// variance `noise_var`.
pub fn generate_instance(
    spec: &ScenarioSpec,
    k: usize,
    noise_var: f64,
    master_seed: u64,
    trial_index: u64,
) -> Result<Instance> {
    spec.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("at least one measurement is needed".into()));
    }
    if !(noise_var >= 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidConfig("noise variance must be finite and non-negative".into()));
    }
    let rng = |tag: &str| stream(master_seed, trial_index, tag);
    match spec.rx() {
        None => {
            let channel = gen_upa_channel(&spec.geometry, spec.paths, &mut rng("channel"))?;
            let pattern = gen_blockage_with(
                &spec.geometry,
                spec.p_b,
                spec.mode,
                spec.placement,
                &mut rng("blockage"),
            )?;
            let precoder = gen_precoder(k, spec.geometry.num_elements(), &mut rng("precoder"));
            let y = measure_tx(&channel.h, &pattern, &precoder, noise_var, &mut rng("noise"))?;
            let sounding = SoundingSet {
                precoder,
                combiner: None,
                noise_var,
                y,
            };
            Instance::from_parts(spec.scenario, spec.mode, channel, GroundTruth::tx_only(pattern), sounding)
        }
        Some(rx) => {
            let channel = gen_ula_channel(&rx, &spec.geometry, spec.paths, &mut rng("channel"))?;
            let pattern = gen_joint_blockage(&spec.geometry, &rx, spec.p_b, spec.mode, &mut rng("blockage"))?;
            let precoder = gen_precoder(k, spec.geometry.num_elements(), &mut rng("precoder"));
            let combiner = gen_precoder(k, rx.num_elements(), &mut rng("combiner"));
            let (y, operator) =
                measure_joint(&channel.h, &pattern, &precoder, &combiner, noise_var, &mut rng("noise"))?;
            Ok(Instance {
                scenario: spec.scenario,
                mode: spec.mode,
                channel,
                truth: GroundTruth::joint(pattern),
                sounding: SoundingSet {
                    precoder,
                    combiner: Some(combiner),
                    noise_var,
                    y,
                },
                operator,
            })
        }
    }
}

/// `‖estimate - truth‖² / ‖truth‖²`.
pub fn nmse(estimate: &[C64], truth: &[C64]) -> Result<f64> {
    if estimate.len() != truth.len() {
        return dim_err(format!("estimate has {} entries, truth {}", estimate.len(), truth.len()));
    }
    let denom = norm_sqr(truth);
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok(norm_sqr(&sub(estimate, truth)) / denom)
}

/// Frobenius-norm [`nmse`] of two matrices.
pub fn nmse_mat(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if (estimate.rows(), estimate.cols()) != (truth.rows(), truth.cols()) {
        return dim_err(format!(
            "estimate is {}x{}, truth {}x{}",
            estimate.rows(),
            estimate.cols(),
            truth.rows(),
            truth.cols()
        ));
    }
    nmse(estimate.as_slice(), truth.as_slice())
}

fn report_from_estimate(
    q_hat: Vec<C64>,
    support: Vec<usize>,
    instance: &Instance,
) -> Result<DiagnosisReport> {
    let h = &instance.channel.h;
    let residual = norm2(&sub(&instance.sounding.y, &instance.operator.mul_vec(&q_hat)?));
    let params = extract_params(&q_hat, h.as_slice(), &support)?;
    let b_hat = reconstruct_b(&q_hat, h.as_slice(), &support)?;
    let b_matrix = match instance.scenario {
        Scenario::TxOnly => None,
        Scenario::Joint => Some(reconstruct_b_matrix(&q_hat, h, &support)?),
    };
    Ok(DiagnosisReport {
        support,
        q_hat,
        params,
        b_hat,
        best_zeta: residual,
        trace: Vec::new(),
        tx_support: None,
        rx_support: None,
        b_matrix,
    })
}

/// Runs one recovery method on an instance.
///
/// `oracle` uses the instance's ground-truth support. For OMP and the oracle
/// `best_zeta` holds the final residual norm.
pub fn run_method<R: rand::Rng + ?Sized>(
    method: Method,
    instance: &Instance,
    solver: &CeConfig,
    omp_settings: &OmpSettings,
    rng: &mut R,
) -> Result<DiagnosisReport> {
    let y = &instance.sounding.y;
    let h = &instance.channel.h;
    let op = &instance.operator;
    match method {
        Method::CeAad => match instance.scenario {
            Scenario::TxOnly => run_ce_aad(y, op, h, solver, rng),
            Scenario::Joint => run_joint_ce_aad(y, op, h, solver, rng),
        },
        Method::PlainCe => {
            let mut report = plain_ce(y, op, h, solver, rng)?;
            if instance.scenario == Scenario::Joint {
                report.b_matrix = Some(reconstruct_b_matrix(&report.q_hat, h, &report.support)?);
            }
            Ok(report)
        }
        Method::Omp => {
            let stop = omp_settings.stop(y.len(), op.cols(), instance.sounding.noise_var);
            let r = omp(y, op, stop);
            report_from_estimate(r.q_hat, r.support, instance)
        }
        Method::Oracle => {
            let support = instance.truth.support();
            let q_hat = oracle_ls(y, op, &support);
            report_from_estimate(q_hat, support, instance)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Absent when the method or the instance failed.
    pub nmse: Option<f64>,
    pub exact_support: Option<bool>,
    pub support_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Hash of the data the method saw; empty when generation failed.
    pub data_hash: String,
    /// Zero unless timing is recorded.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub trial_index: u64,
    pub outcomes: Vec<MethodOutcome>,
}

fn failed(method: Method, error: &Error, data_hash: String) -> MethodOutcome {
    MethodOutcome {
        method,
        nmse: None,
        exact_support: None,
        support_size: None,
        error: Some(error.to_string()),
        data_hash,
        wall_ms: 0.0,
    }
}

/// Runs every configured method on trial `trial_index` at one sweep point.
/// Failures are recorded in the outcome rather than returned.
pub fn run_trial(config: &ExperimentConfig, point: SweepPoint, trial_index: u64) -> TrialRecord {
    let record = |outcomes| TrialRecord {
        sweep_value: point.value,
        trial_index,
        outcomes,
    };
    let instance = match generate_instance(
        &config.scenario_spec(),
        point.k,
        point.noise_var,
        config.master_seed,
        trial_index,
    ) {
        Ok(i) => i,
        Err(e) => return record(config.methods.iter().map(|&m| failed(m, &e, String::new())).collect()),
    };
    let solver = config.solver_config();
    let truth_b = instance.truth.b_vec();
    let truth_support = instance.truth.support();
    let solver_tag = format!("solver/{}", point.value);
    let outcomes = config
        .methods
        .iter()
        .map(|&method| {
            let data_hash = instance.data_hash();
            let mut rng = stream(config.master_seed, trial_index, &solver_tag);
            let start = config.record_timing.then(Instant::now);
            let result = run_method(method, &instance, &solver, &config.omp, &mut rng)
                .and_then(|rep| Ok((nmse(&rep.b_hat, &truth_b)?, rep)));
            let wall_ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
            match result {
                Ok((value, rep)) => MethodOutcome {
                    method,
                    nmse: Some(value),
                    exact_support: Some(rep.support == truth_support),
                    support_size: Some(rep.support.len()),
                    error: None,
                    data_hash,
                    wall_ms,
                },
                Err(e) => MethodOutcome {
                    wall_ms,
                    ..failed(method, &e, data_hash)
                },
            }
        })
        .collect();
    record(outcomes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub sweep_name: String,
    pub sweep_value: f64,
    /// Statistics over successful trials; absent when every trial failed.
    pub mean_nmse: Option<f64>,
    pub median_nmse: Option<f64>,
    pub std_nmse: Option<f64>,
    /// Trials attempted.
    pub trials: usize,
    /// Trials excluded from the statistics.
    pub failures: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub sweep_name: String,
    /// Sorted by `(method, sweep_value)`.
    pub rows: Vec<ResultRow>,
    /// Per-trial log, ordered by sweep value then trial index.
    #[serde(default)]
    pub records: Vec<TrialRecord>,
}

/// Sum by recursive halving; the result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let (a, b) = xs.split_at(xs.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

/// `(mean, median, sample standard deviation)`.
pub fn summarize(xs: &[f64]) -> Option<(f64, f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let std = if xs.len() < 2 {
        0.0
    } else {
        let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
        (pairwise_sum(&dev) / (n - 1.0)).sqrt()
    };
    Some((mean, median, std))
}

/// Aggregates per-trial records into one row per `(method, sweep value)`.
pub fn aggregate(config: &ExperimentConfig, records: &[TrialRecord]) -> Vec<ResultRow> {
    let sweep_name = config.sweep.variable.name();
    let mut methods = config.methods.clone();
    methods.sort();
    let mut rows = Vec::new();
    for &method in &methods {
        for &value in &config.sweep.values {
            let outcomes: Vec<&MethodOutcome> = records
                .iter()
                .filter(|r| r.sweep_value == value)
                .flat_map(|r| r.outcomes.iter().filter(|o| o.method == method))
                .collect();
            let values: Vec<f64> = outcomes.iter().filter_map(|o| o.nmse).collect();
            let stats = summarize(&values);
            rows.push(ResultRow {
                method,
                sweep_name: sweep_name.to_string(),
                sweep_value: value,
                mean_nmse: stats.map(|s| s.0),
                median_nmse: stats.map(|s| s.1),
                std_nmse: stats.map(|s| s.2),
                trials: outcomes.len(),
                failures: outcomes.len() - values.len(),
                wall_ms: outcomes.iter().map(|o| o.wall_ms).sum(),
            });
        }
    }
    rows
}

/// Runs `trials` trials at every sweep point. Trials run in parallel; the
/// result does not depend on scheduling.
pub fn run_sweep(config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let points = config.points();
    let trials = config.trials as u64;
    let records: Vec<TrialRecord> = (0..points.len() as u64 * trials)
        .into_par_iter()
        .map(|i| run_trial(config, points[(i / trials) as usize], i % trials))
        .collect();
    Ok(ResultTable {
        sweep_name: config.sweep.variable.name().to_string(),
        rows: aggregate(config, &records),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
    GnuplotDat,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            "gnuplot-dat" => Ok(OutputFormat::GnuplotDat),
            _ => Err(Error::InvalidConfig(format!(
                "unknown format `{s}`, expected one of: csv, json, gnuplot-dat"
            ))),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.method.label(),
            r.sweep_name,
            r.sweep_value,
            opt(r.mean_nmse),
            opt(r.median_nmse),
            opt(r.std_nmse),
            r.trials,
            r.failures,
            r.wall_ms
        );
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::Parse {
            context: "line 1".into(),
            message: "unexpected CSV header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let err = |message: String| Error::Parse {
                context: format!("line {}", i + 2),
                message,
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(err(format!("expected 9 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(format!("`{s}`: {e}")));
            let opt_num = |s: &str| if s.is_empty() { Ok(None) } else { num(s).map(Some) };
            let int = |s: &str| s.parse::<usize>().map_err(|e| err(format!("`{s}`: {e}")));
            Ok(ResultRow {
                method: f[0].parse().map_err(|e: Error| err(e.to_string()))?,
                sweep_name: f[1].to_string(),
                sweep_value: num(f[2])?,
                mean_nmse: opt_num(f[3])?,
                median_nmse: opt_num(f[4])?,
                std_nmse: opt_num(f[5])?,
                trials: int(f[6])?,
                failures: int(f[7])?,
                wall_ms: num(f[8])?,
            })
        })
        .collect()
}

/// One whitespace-separated block per method, blocks separated by two blank
/// lines (addressable with gnuplot's `index`).
pub fn to_gnuplot(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let mut current: Option<Method> = None;
    for r in rows {
        if current != Some(r.method) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            current = Some(r.method);
            let _ = writeln!(out, "# method: {}", r.method.label());
            let _ = writeln!(out, "# {} mean_nmse median_nmse std_nmse trials failures", r.sweep_name);
        }
        let nan = |v: Option<f64>| v.map_or("NaN".to_string(), |x| x.to_string());
        let _ = writeln!(
            out,
            "{} {} {} {} {} {}",
            r.sweep_value,
            nan(r.mean_nmse),
            nan(r.median_nmse),
            nan(r.std_nmse),
            r.trials,
            r.failures
        );
    }
    out
}

pub fn render(table: &ResultTable, format: OutputFormat) -> String {
    match format {
        OutputFormat::Csv => to_csv(&table.rows),
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(table).expect("table serializes");
            s.push('\n');
            s
        }
        OutputFormat::GnuplotDat => to_gnuplot(&table.rows),
    }
}

pub fn emit(table: &ResultTable, format: OutputFormat, path: &Path) -> Result<()> {
    std::fs::write(path, render(table, format)).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::ZERO;

    fn small(methods: Vec<Method>) -> ExperimentConfig {
        ExperimentConfig {
            scenario: Scenario::TxOnly,
            geometry: ArrayGeometry::upa(4, 4),
            rx_geometry: None,
            paths: 3,
            p_b: 0.25,
            mode: BlockageMode::Partial,
            placement: Placement::Free,
            sweep: Sweep {
                variable: SweepVariable::K,
                values: vec![8.0, 12.0],
            },
            k: None,
            snr_db: Some(10.0),
            methods,
            trials: 3,
            master_seed: 7,
            solver: CeConfig {
                n_candidates: 40,
                n_elites: 6,
                n_iterations: 4,
                ..CeConfig::default()
            },
            omp: OmpSettings::default(),
            record_timing: false,
        }
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn nmse_cases() {
        let t = vec![c(1., 2.), c(-3., 0.5)];
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        assert_eq!(nmse(&[ZERO; 2], &t).unwrap(), 1.0);
        let twice: Vec<C64> = t.iter().map(|z| z * 2.0).collect();
        assert!((nmse(&twice, &t).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(nmse(&t, &[ZERO; 2]), Err(Error::ZeroTruth));
        assert!(matches!(nmse(&t, &t[..1]), Err(Error::DimensionMismatch(_))));
        let m = CMat::from_fn(2, 3, |i, j| c(i as f64 + 1.0, j as f64));
        assert_eq!(nmse_mat(&CMat::zeros(2, 3), &m).unwrap(), 1.0);
        assert!(nmse_mat(&CMat::zeros(3, 2), &m).is_err());
    }

    #[test]
    fn clear_array_gives_zero_nmse_everywhere() {
        let mut cfg = small(Method::ALL.to_vec());
        cfg.p_b = 0.0;
        cfg.snr_db = None;
        let table = run_sweep(&cfg).unwrap();
        for r in &table.rows {
            assert_eq!(r.mean_nmse, Some(0.0), "{r:?}");
            assert_eq!(r.failures, 0);
        }
    }

    #[test]
    fn trials_are_reproducible_and_share_data() {
        let cfg = small(Method::ALL.to_vec());
        let point = cfg.points()[0];
        let a = run_trial(&cfg, point, 2);
        assert_eq!(a, run_trial(&cfg, point, 2));
        let hash = &a.outcomes[0].data_hash;
        assert_eq!(hash.len(), 64);
        assert!(a.outcomes.iter().all(|o| &o.data_hash == hash));
        assert_ne!(hash, &run_trial(&cfg, point, 1).outcomes[0].data_hash);

        // adding a method leaves the others untouched
        let fewer = small(vec![Method::CeAad]);
        assert_eq!(run_trial(&fewer, point, 2).outcomes[0], a.outcomes[0]);
    }

    #[test]
    fn instances_share_channel_across_sweep() {
        let spec = small(vec![Method::Oracle]).scenario_spec();
        let a = generate_instance(&spec, 8, 0.1, 3, 0).unwrap();
        let b = generate_instance(&spec, 12, 0.5, 3, 0).unwrap();
        assert_eq!(a.channel, b.channel);
        assert_eq!(a.truth, b.truth);
        for k in 0..8 {
            assert_eq!(a.sounding.precoder.row(k), b.sounding.precoder.row(k));
        }
        // same noise draw, rescaled
        let clean = generate_instance(&spec, 8, 0.0, 3, 0).unwrap();
        let lo = generate_instance(&spec, 8, 0.01, 3, 0).unwrap();
        for k in 0..8 {
            let n1 = a.sounding.y[k] - clean.sounding.y[k];
            let n2 = lo.sounding.y[k] - clean.sounding.y[k];
            assert!((n1 - n2 * 0.1f64.sqrt() / 0.01f64.sqrt()).norm() < 1e-12);
        }
    }

    #[test]
    fn joint_instances() {
        let mut spec = small(vec![Method::Oracle]).scenario_spec();
        spec.scenario = Scenario::Joint;
        spec.geometry = ArrayGeometry::ula(5);
        spec.rx_geometry = Some(ArrayGeometry::ula(4));
        spec.p_b = 0.2;
        let inst = generate_instance(&spec, 10, 0.0, 1, 0).unwrap();
        assert_eq!((inst.channel.h.rows(), inst.channel.h.cols()), (4, 5));
        assert_eq!(inst.operator.cols(), 20);
        let rep = run_method(Method::Oracle, &inst, &CeConfig::default(), &OmpSettings::default(), &mut stream(0, 0, "x"))
            .unwrap();
        assert!(nmse(&rep.b_hat, &inst.truth.b_vec()).unwrap() < 1e-20);
        assert!(rep.b_matrix.is_some());
    }

    #[test]
    fn sweep_rows_and_aggregation() {
        let mut cfg = small(vec![Method::PlainCe, Method::CeAad, Method::Oracle]);
        cfg.sweep.values = vec![10.0];
        cfg.trials = 1;
        let t = run_sweep(&cfg).unwrap();
        let names: Vec<&str> = t.rows.iter().map(|r| r.method.label()).collect();
        assert_eq!(names, ["ce-aad", "oracle", "plain-ce"]);

        let cfg = small(vec![Method::CeAad, Method::Omp]);
        let t = run_sweep(&cfg).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.records.len(), 6);
        for row in &t.rows {
            let vals: Vec<f64> = t
                .records
                .iter()
                .filter(|r| r.sweep_value == row.sweep_value)
                .flat_map(|r| &r.outcomes)
                .filter(|o| o.method == row.method)
                .filter_map(|o| o.nmse)
                .collect();
            assert_eq!(vals.len(), 3);
            let mean = vals.iter().sum::<f64>() / 3.0;
            assert!((row.mean_nmse.unwrap() - mean).abs() <= 1e-12 * mean.abs());
            assert!(row.mean_nmse.unwrap() >= 0.0);
            assert_eq!(row.trials, 3);
            assert_eq!(row.wall_ms, 0.0);
        }
    }

    #[test]
    fn statistics() {
        assert_eq!(summarize(&[]), None);
        assert_eq!(summarize(&[2.0]), Some((2.0, 2.0, 0.0)));
        let (mean, median, std) = summarize(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        assert_eq!(mean, 4.0);
        assert_eq!(median, 2.5);
        assert!((std - (50.0f64 / 3.0).sqrt()).abs() < 1e-12);
        let xs: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 5050.0);
    }

    #[test]
    fn failures_are_counted() {
        let mut cfg = small(vec![Method::Oracle]);
        cfg.p_b = 1.0;
        cfg.mode = BlockageMode::Complete;
        cfg.trials = 2;
        let t = run_sweep(&cfg).unwrap();
        for r in &t.rows {
            assert_eq!((r.trials, r.failures), (2, 2));
            assert_eq!(r.mean_nmse, None);
        }
        assert!(to_csv(&t.rows).contains("oracle,k,8,,,,2,2,0"));
    }

    #[test]
    fn config_validation() {
        assert!(small(vec![Method::Omp]).validate().is_ok());
        let mut c = small(vec![Method::Omp]);
        c.sweep.values = vec![12.0, 8.0];
        assert!(c.validate().is_err());
        let mut c = small(vec![Method::Omp]);
        c.sweep.values.clear();
        assert!(c.validate().is_err());
        let mut c = small(vec![Method::Omp]);
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small(vec![Method::Omp, Method::Omp]);
        assert!(c.validate().is_err());
        c.methods = vec![Method::CeAad];
        c.solver.block_rows = 3;
        assert!(matches!(c.validate(), Err(Error::BlockShapeMismatch { .. })));
        let mut c = small(vec![Method::Omp]);
        c.sweep.variable = SweepVariable::SnrDb;
        assert!(c.validate().is_err());
        c.snr_db = None;
        c.k = Some(10);
        assert!(c.validate().is_ok());
        let mut c = small(vec![Method::Omp]);
        c.sweep.values = vec![8.5];
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json() {
        let text = r#"{
            "scenario": "tx_only",
            "geometry": {"kind": "upa", "nx": 10, "ny": 10, "dx": 0.5, "dy": 0.5},
            "p_b": 0.1,
            "sweep": {"variable": "k", "values": [30, 50]},
            "snr_db": 5,
            "methods": ["ce-aad", "omp", "oracle"],
            "master_seed": 18446744073709551615
        }"#;
        let c = ExperimentConfig::from_json_str(text, "cfg").unwrap();
        assert_eq!(c.trials, 100);
        assert_eq!(c.paths, 10);
        assert_eq!(c.master_seed, u64::MAX);
        assert_eq!(c.solver, CeConfig::default());
        c.validate().unwrap();

        let bad = text.replace("\"omp\"", "\"lasso\"");
        let err = ExperimentConfig::from_json_str(&bad, "cfg").unwrap_err().to_string();
        assert!(err.contains("plain-ce") && err.contains("lasso"), "{err}");
        let err = ExperimentConfig::from_json_str(&text[..40], "cfg").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn csv_and_json_roundtrip() {
        assert_eq!(to_csv(&[]), format!("{CSV_HEADER}\n"));
        assert!(parse_csv(&to_csv(&[])).unwrap().is_empty());
        let t = run_sweep(&small(vec![Method::Omp, Method::Oracle])).unwrap();
        assert_eq!(parse_csv(&to_csv(&t.rows)).unwrap(), t.rows);
        let back: ResultTable = serde_json::from_str(&render(&t, OutputFormat::Json)).unwrap();
        assert_eq!(back, t);
        let dat = to_gnuplot(&t.rows);
        assert_eq!(dat.matches("# method:").count(), 2);
        assert_eq!(dat.split("\n\n\n").count(), 2);
        assert!(parse_csv("nope\n").is_err());
    }

    #[test]
    fn emit_reports_path() {
        let t = ResultTable {
            sweep_name: "k".into(),
            rows: vec![],
            records: vec![],
        };
        let err = emit(&t, OutputFormat::Csv, Path::new("/nonexistent/dir/out.csv")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/out.csv"));
        assert_eq!("gnuplot-dat".parse::<OutputFormat>().unwrap(), OutputFormat::GnuplotDat);
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
