use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aad_core::blockage::{BlockageMode, Placement};
use aad_core::ce::{CeConfig, DiagnosisReport};
use aad_core::channel::ArrayGeometry;
use aad_core::fixture::Fixture;
use aad_core::harness::{
    self, emit, generate_instance, nmse, parse_csv, render, run_method, run_sweep, ExperimentConfig,
    Instance, Method, OmpSettings, OutputFormat, ResultTable, Scenario, ScenarioSpec,
};
use aad_core::seed::stream;
use aad_core::sounding::noise_var_from_snr;
use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

/// Blocked-antenna diagnosis for mmWave arrays.
#[derive(Parser, Debug)]
#[command(name = "aad", version)]
struct Cli {
    /// Seed: solver seed for `diagnose`, master seed for `sweep` and `gen-fixture`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate the blocked antennas of a fixture and print a JSON report.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo sweep from a config file.
    Sweep(SweepArgs),
    /// Write a self-contained problem instance.
    GenFixture(GenFixtureArgs),
    /// Convert sweep results (JSON or CSV) to another format.
    PlotData(PlotDataArgs),
}

#[derive(Args, Debug)]
struct DiagnoseArgs {
    /// Fixture holding the measurements (and optionally channel and truth).
    measurements: PathBuf,
    /// Fixture holding the channel; defaults to the measurement fixture.
    #[arg(long)]
    channel: Option<PathBuf>,
    #[arg(long, default_value = "ce-aad", value_parser = parse_method)]
    method: Method,
    /// JSON solver settings; individual flags override it.
    #[arg(long)]
    solver_config: Option<PathBuf>,
    #[arg(long)]
    n_candidates: Option<usize>,
    #[arg(long)]
    n_elites: Option<usize>,
    #[arg(long)]
    n_iterations: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    block_rows: Option<usize>,
    #[arg(long)]
    block_cols: Option<usize>,
    #[arg(long)]
    smoothing_alpha: Option<f64>,
    /// Blockage type assumed by the solver; defaults to the fixture's.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Omit the per-iteration trace.
    #[arg(long)]
    no_trace: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "csv", value_parser = parse_format)]
    format: OutputFormat,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct GenFixtureArgs {
    /// Experiment config supplying defaults; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    /// Planar array rows (tx-only).
    #[arg(long)]
    nx: Option<usize>,
    /// Planar array columns (tx-only).
    #[arg(long)]
    ny: Option<usize>,
    /// Transmit ULA size (joint).
    #[arg(long)]
    n_tx: Option<usize>,
    /// Receive ULA size (joint).
    #[arg(long)]
    n_rx: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    p_b: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Place whole blocks of this size (`ROWSxCOLS`) on the block grid.
    #[arg(long, value_parser = parse_block)]
    aligned_block: Option<(usize, usize)>,
    #[arg(long)]
    k: Option<usize>,
    /// Omit for noiseless measurements.
    #[arg(long)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    trial: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotDataArgs {
    /// Sweep output in JSON or CSV.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "gnuplot-dat", value_parser = parse_format)]
    format: OutputFormat,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Partial,
    Complete,
}

impl From<ModeArg> for BlockageMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Partial => BlockageMode::Partial,
            ModeArg::Complete => BlockageMode::Complete,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ScenarioArg {
    TxOnly,
    Joint,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: aad_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<OutputFormat, String> {
    s.parse().map_err(|e: aad_core::Error| e.to_string())
}

fn parse_block(s: &str) -> Result<(usize, usize), String> {
    let (r, c) = s.split_once('x').ok_or("expected ROWSxCOLS, e.g. 2x2")?;
    let dim = |v: &str| v.parse::<usize>().map_err(|e| format!("`{v}`: {e}"));
    Ok((dim(r)?, dim(c)?))
}

/// Failure class; selects the exit code.
enum Failure {
    /// Unreadable or inconsistent input (exit 2).
    Input(anyhow::Error),
    /// Solver or output failure (exit 3).
    Runtime(anyhow::Error),
}

trait FailureExt<T> {
    fn input(self) -> Result<T, Failure>;
    fn runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> FailureExt<T> for Result<T, E> {
    fn input(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Input(e.into()))
    }

    fn runtime(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(3);
        }
    }
    let result = match &cli.command {
        Command::Diagnose(args) => diagnose(&cli, args),
        Command::Sweep(args) => sweep(&cli, args),
        Command::GenFixture(args) => gen_fixture(&cli, args),
        Command::PlotData(args) => plot_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

fn note(cli: &Cli, msg: impl AsRef<str>) {
    if !cli.quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn write_output(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text)
        .with_context(|| format!("cannot write {}", path.display()))
        .runtime()
}

#[derive(Serialize)]
struct DiagnoseOutput<'a> {
    method: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    nmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exact_support: Option<bool>,
    #[serde(flatten)]
    report: &'a DiagnosisReport,
}

fn solver_config(args: &DiagnoseArgs, fixture_mode: BlockageMode) -> Result<CeConfig, Failure> {
    let mut cfg = match &args.solver_config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))
                .input()?;
            serde_json::from_str::<CeConfig>(&text)
                .with_context(|| format!("{}", path.display()))
                .input()?
        }
        None => CeConfig {
            mode: fixture_mode,
            ..CeConfig::default()
        },
    };
    let set = |slot: &mut usize, v: Option<usize>| {
        if let Some(v) = v {
            *slot = v;
        }
    };
    set(&mut cfg.n_candidates, args.n_candidates);
    set(&mut cfg.n_elites, args.n_elites);
    set(&mut cfg.n_iterations, args.n_iterations);
    set(&mut cfg.block_rows, args.block_rows);
    set(&mut cfg.block_cols, args.block_cols);
    if let Some(e) = args.epsilon {
        cfg.epsilon = e;
    }
    if let Some(a) = args.smoothing_alpha {
        cfg.smoothing_alpha = a;
    }
    if let Some(m) = args.mode {
        cfg.mode = m.into();
    }
    cfg.validate().input()?;
    Ok(cfg)
}

fn diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<(), Failure> {
    let meas = Fixture::load(&args.measurements).input()?;
    let chan = match &args.channel {
        Some(p) => Fixture::load(p).input()?,
        None => meas.clone(),
    };
    if chan.scenario != meas.scenario {
        return Err(Failure::Input(anyhow!(
            "measurement fixture is {:?} but channel fixture is {:?}",
            meas.scenario,
            chan.scenario
        )));
    }
    let sounding = meas
        .sounding
        .clone()
        .ok_or_else(|| anyhow!("{}: field `sounding` is missing", args.measurements.display()))
        .input()?;
    let channel_path = args.channel.as_ref().unwrap_or(&args.measurements);
    let channel = chan
        .channel
        .clone()
        .ok_or_else(|| anyhow!("{}: field `channel` is missing", channel_path.display()))
        .input()?;
    // Re-check the combination of the two files.
    let combined = Fixture {
        channel: Some(channel.clone()),
        sounding: Some(sounding.clone()),
        truth: meas.truth.clone().or(chan.truth.clone()),
        ..meas.clone()
    };
    combined.validate().context("fixtures do not match").input()?;
    let truth = combined.truth.clone();
    let placeholder = aad_core::fixture::GroundTruth::tx_only(aad_core::blockage::BlockagePattern::clear(
        channel.h.rows() * channel.h.cols(),
        meas.mode,
    ));
    if args.method == Method::Oracle && truth.is_none() {
        return Err(Failure::Input(anyhow!(
            "the oracle method needs a fixture with a `truth` section"
        )));
    }
    let instance = Instance::from_parts(
        meas.scenario,
        meas.mode,
        channel,
        truth.clone().unwrap_or(placeholder),
        sounding,
    )
    .input()?;
    let solver = solver_config(args, meas.mode)?;
    let seed = cli.seed.or(meas.seed).unwrap_or(0);
    let mut rng = stream(seed, 0, "diagnose");
    note(cli, format!("running {} on {} measurements", args.method.label(), instance.sounding.y.len()));
    let mut report = run_method(args.method, &instance, &solver, &OmpSettings::default(), &mut rng).runtime()?;
    if args.no_trace {
        report.trace.clear();
    }
    let (nmse_value, exact) = match &truth {
        Some(t) => (
            Some(nmse(&report.b_hat, &t.b_vec()).runtime()?),
            Some(report.support == t.support()),
        ),
        None => (None, None),
    };
    let out = DiagnoseOutput {
        method: args.method.label(),
        nmse: nmse_value,
        exact_support: exact,
        report: &report,
    };
    let mut text = serde_json::to_string_pretty(&out).runtime()?;
    text.push('\n');
    match &args.out {
        Some(p) => write_output(p, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<(), Failure> {
    let mut config = ExperimentConfig::load(&args.config).input()?;
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(t) = args.trials {
        config.trials = t;
    }
    config.validate().input()?;
    note(
        cli,
        format!(
            "sweeping {} over {} values, {} trials each, seed {}",
            config.sweep.variable.name(),
            config.sweep.values.len(),
            config.trials,
            config.master_seed
        ),
    );
    let table = run_sweep(&config).runtime()?;
    emit(&table, args.format, &args.out).runtime()?;
    note(cli, format!("wrote {}", args.out.display()));
    Ok(())
}

fn gen_fixture(cli: &Cli, args: &GenFixtureArgs) -> Result<(), Failure> {
    let base = match &args.config {
        Some(p) => {
            let mut c = ExperimentConfig::load(p).input()?;
            if c.sweep.variable == harness::SweepVariable::SnrDb {
                c.snr_db = c.sweep.values.first().copied();
            } else {
                c.k = c.sweep.values.first().map(|&v| v as usize);
            }
            Some(c)
        }
        None => None,
    };
    let scenario = match (args.scenario, &base) {
        (Some(ScenarioArg::TxOnly), _) => Scenario::TxOnly,
        (Some(ScenarioArg::Joint), _) => Scenario::Joint,
        (None, Some(c)) => c.scenario,
        (None, None) => Scenario::TxOnly,
    };
    let base_same = base.as_ref().filter(|c| c.scenario == scenario);
    let (geometry, rx_geometry) = match scenario {
        Scenario::TxOnly => {
            let (bx, by) = base_same.map_or((10, 10), |c| c.geometry.shape());
            (ArrayGeometry::upa(args.nx.unwrap_or(bx), args.ny.unwrap_or(by)), None)
        }
        Scenario::Joint => {
            let bt = base_same.map_or(10, |c| c.geometry.num_elements());
            let br = base_same
                .and_then(|c| c.rx_geometry)
                .map_or(bt, |g| g.num_elements());
            (
                ArrayGeometry::ula(args.n_tx.unwrap_or(bt)),
                Some(ArrayGeometry::ula(args.n_rx.unwrap_or(br))),
            )
        }
    };
    let placement = match args.aligned_block {
        Some((block_rows, block_cols)) => Placement::BlockAligned { block_rows, block_cols },
        None => base_same.map_or(Placement::Free, |c| c.placement),
    };
    let spec = ScenarioSpec {
        scenario,
        geometry,
        rx_geometry,
        paths: args.paths.or(base.as_ref().map(|c| c.paths)).unwrap_or(10),
        p_b: args.p_b.or(base.as_ref().map(|c| c.p_b)).unwrap_or(0.1),
        mode: args
            .mode
            .map(BlockageMode::from)
            .or(base.as_ref().map(|c| c.mode))
            .unwrap_or_default(),
        placement,
    };
    let k = args.k.or(base.as_ref().and_then(|c| c.k)).unwrap_or(50);
    let snr_db = args.snr_db.or(base.as_ref().and_then(|c| c.snr_db));
    if matches!(snr_db, Some(s) if !s.is_finite()) {
        return Err(Failure::Input(anyhow!("--snr-db must be finite")));
    }
    let seed = cli.seed.or(base.as_ref().map(|c| c.master_seed)).unwrap_or(0);
    let noise_var = snr_db.map_or(0.0, noise_var_from_snr);
    let instance = match generate_instance(&spec, k, noise_var, seed, args.trial) {
        Ok(i) => i,
        Err(e @ aad_core::Error::ChannelNull { .. }) => return Err(Failure::Runtime(e.into())),
        Err(e) => return Err(Failure::Input(e.into())),
    };
    let fixture = Fixture::from_instance(&instance, Some(seed), Some(args.trial), snr_db);
    write_output(&args.out, &fixture.to_json())?;
    note(cli, format!("wrote {}", args.out.display()));
    Ok(())
}

fn plot_data(args: &PlotDataArgs) -> Result<(), Failure> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("cannot read {}", args.input.display()))
        .input()?;
    let ctx = || format!("{}", args.input.display());
    let table = if text.trim_start().starts_with('{') {
        serde_json::from_str::<ResultTable>(&text).with_context(ctx).input()?
    } else {
        let rows = parse_csv(&text).with_context(ctx).input()?;
        let sweep_name = rows.first().map(|r| r.sweep_name.clone()).unwrap_or_default();
        ResultTable {
            sweep_name,
            rows,
            records: Vec::new(),
        }
    };
    if table.rows.iter().any(|r| r.sweep_name != table.sweep_name) {
        return Err(Failure::Input(anyhow!("{}: rows mix different sweep variables", ctx())));
    }
    write_output(&args.out, &render(&table, args.format))
}
