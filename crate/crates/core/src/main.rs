//! Command-line front end for the testbed simulator.

use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mimo_testbed::capacity::{capacity_curve, db_to_linear, CapacityCurve};
use mimo_testbed::channel::{wavelength_for, ChannelMatrix};
use mimo_testbed::fit::{fit_grid, score_table_csv, FitGrid, TESTBED_D_GRID};
use mimo_testbed::harness::{
    run_controller, run_pipeline, run_unit, ControllerOptions, ExperimentConfig, FitConfig,
    FitSummary, RunManifest, TruthModel, UnitOptions, BEST_CURVE_FILE, DEFAULT_CARRIER_HZ,
    DEFAULT_SLOT_MS, DEFAULT_SNR_DB, ESTIMATED_CHANNEL_FILE, SCHEDULE_FILE, SCORE_TABLE_FILE,
    TRUE_CHANNEL_FILE,
};
use mimo_testbed::rng::RandomSeed;
use mimo_testbed::sounding::{
    build_tdma_schedule, simulate_sounding_round, PnSpec, DEFAULT_DEGREE, DEFAULT_SAMPLE_RATE_HZ,
};
use mimo_testbed::{Error, Result};

const CHANNEL_FILE: &str = "channel.csv";
const CURVE_FILE: &str = "capacity_curve.csv";
const FIT_FILE: &str = "fit.json";

#[derive(Parser, Debug)]
#[command(
    name = "mimo-testbed",
    version,
    about = "Distributed MIMO testbed simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Draw one channel matrix and write it as CSV.
    GenChannel(GenChannelArgs),
    /// Monte-Carlo mean capacity versus scheme size.
    CapacityCurve(CurveArgs),
    /// Run one TDMA sounding round and write the estimated channel.
    Sound(SoundArgs),
    /// Fit Vandermonde (d, alpha) to a target capacity curve.
    Fit(FitArgs),
    /// Truth channel, sounding round, capacities and an optional fit.
    Pipeline(PipelineArgs),
    /// Same as `pipeline`, with sounding delegated to unit processes.
    EmulateController(ControllerArgs),
    /// Serve one controller session as an emulated baseband unit.
    EmulateUnit(UnitArgs),
    /// Re-run the command recorded in a manifest.
    Replay(ReplayArgs),
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum EnsembleKind {
    Gaussian,
    Vandermonde,
    UniformPhase,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct EnsembleArgs {
    #[arg(long, value_enum, default_value_t = EnsembleKind::Gaussian)]
    ensemble: EnsembleKind,
    /// Antenna spacing in units of lambda/2 (vandermonde only).
    #[arg(long, default_value_t = 1.0)]
    d: f64,
    /// Angular half-spread in degrees (vandermonde only).
    #[arg(long, default_value_t = 30.0)]
    alpha_deg: f64,
    #[arg(long, default_value_t = DEFAULT_CARRIER_HZ)]
    carrier_hz: f64,
}

impl EnsembleArgs {
    fn truth(&self) -> TruthModel {
        match self.ensemble {
            EnsembleKind::Gaussian => TruthModel::Gaussian,
            EnsembleKind::UniformPhase => TruthModel::UniformPhase,
            EnsembleKind::Vandermonde => TruthModel::Vandermonde {
                d_halflambda: self.d,
                alpha_deg: self.alpha_deg,
            },
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct OutArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for artifacts and the run manifest.
    #[arg(long, default_value = "out")]
    #[serde(skip)]
    out_dir: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GenChannelArgs {
    /// Receive antennas (rows).
    #[arg(long, default_value_t = 4)]
    size: usize,
    /// Transmitters (columns); defaults to `--size`.
    #[arg(long)]
    users: Option<usize>,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct CurveArgs {
    /// Sizes as a list and/or ranges, e.g. `2-30` or `2,4,8`.
    #[arg(long, default_value = "2-30")]
    sizes: SizeList,
    #[arg(long, default_value_t = DEFAULT_SNR_DB)]
    snr_db: f64,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 4)]
    size: usize,
    #[arg(long, default_value_t = DEFAULT_SNR_DB)]
    snr_db: f64,
    /// Sound without receiver noise.
    #[arg(long)]
    noiseless: bool,
    #[arg(long, default_value_t = DEFAULT_SLOT_MS)]
    slot_ms: f64,
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    pn_degree: u32,
    #[arg(long)]
    cfo_hz: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_SAMPLE_RATE_HZ)]
    sample_rate_hz: f64,
    #[command(flatten)]
    ensemble: EnsembleArgs,
    #[command(flatten)]
    out: OutArgs,
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let cfg = ExperimentConfig {
            size: self.size,
            snr_db: self.snr_db,
            noiseless: self.noiseless,
            slot_ms: self.slot_ms,
            pn: PnSpec::with_default_taps(self.pn_degree)?,
            carrier_hz: self.ensemble.carrier_hz,
            truth: self.ensemble.truth(),
            cfo_hz: self.cfo_hz,
            sample_rate_hz: self.sample_rate_hz,
            seed: self.out.seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct SoundArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Sound this channel (matrix CSV) instead of drawing one.
    #[arg(long)]
    channel: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct GridArgs {
    /// Spacing grid in units of lambda/2.
    #[arg(long, value_delimiter = ',', default_values_t = TESTBED_D_GRID)]
    d_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = (26..=35).map(f64::from))]
    alpha_grid_deg: Vec<f64>,
    /// Monte-Carlo trials per candidate and size.
    #[arg(long, default_value_t = 500)]
    trials: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct FitArgs {
    /// Target capacity curve (curve CSV).
    #[arg(long)]
    target: PathBuf,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = DEFAULT_CARRIER_HZ)]
    carrier_hz: f64,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct PipelineArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Fit the grid against this target curve after the round.
    #[arg(long)]
    target: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
}

impl PipelineArgs {
    fn fit_config(&self) -> Result<Option<FitConfig>> {
        let Some(path) = &self.target else {
            return Ok(None);
        };
        Ok(Some(FitConfig {
            target: read_curve(path)?,
            d_grid: self.grid.d_grid.clone(),
            alpha_grid_deg: self.grid.alpha_grid_deg.clone(),
            trials: self.grid.trials,
        }))
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ControllerArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Unit addresses, e.g. `127.0.0.1:7001,127.0.0.1:7002`.
    #[arg(long, value_delimiter = ',', required = true)]
    endpoints: Vec<String>,
    /// Receive antennas per unit, e.g. `0,1;2,3;4,5`. Defaults to a
    /// contiguous, balanced split.
    #[arg(long)]
    partition: Option<Partition>,
    #[arg(long, default_value_t = 30_000)]
    timeout_ms: u64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct UnitArgs {
    /// Address to listen on; port 0 picks a free port.
    #[arg(long, default_value = "127.0.0.1:0")]
    listen: String,
    #[arg(long, default_value_t = 0)]
    seed_offset: u64,
    /// Drop the connection after this many results (fault injection).
    #[arg(long, hide = true)]
    fail_after_results: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Defaults to the manifest's own directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Sorted, duplicate-free list of scheme sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
struct SizeList(Vec<usize>);

impl FromStr for SizeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
        let mut sizes = Vec::new();
        for part in s.split(',').filter(|p| !p.trim().is_empty()) {
            match part.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (num(a)?, num(b)?);
                    if a > b {
                        return Err(format!("empty range {part:?}"));
                    }
                    sizes.extend(a..=b);
                }
                None => sizes.push(num(part)?),
            }
        }
        sizes.sort_unstable();
        sizes.dedup();
        if sizes.is_empty() || sizes[0] == 0 {
            return Err("sizes must be positive and non-empty".into());
        }
        Ok(Self(sizes))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
struct Partition(Vec<Vec<usize>>);

impl FromStr for Partition {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(';')
            .map(|unit| {
                unit.split(',')
                    .map(|t| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}")))
                    .collect()
            })
            .collect::<std::result::Result<_, _>>()
            .map(Self)
    }
}

impl Command {
    fn out_dir_mut(&mut self) -> Option<&mut PathBuf> {
        Some(match self {
            Command::GenChannel(a) => &mut a.out.out_dir,
            Command::CapacityCurve(a) => &mut a.out.out_dir,
            Command::Sound(a) => &mut a.experiment.out.out_dir,
            Command::Fit(a) => &mut a.out.out_dir,
            Command::Pipeline(a) => &mut a.experiment.out.out_dir,
            Command::EmulateController(a) => &mut a.pipeline.experiment.out.out_dir,
            Command::EmulateUnit(_) | Command::Replay(_) => return None,
        })
    }
}

fn read_curve(path: &Path) -> Result<CapacityCurve> {
    CapacityCurve::from_csv(&std::fs::read_to_string(path)?)
}

fn write_files(out_dir: &Path, files: &[(&str, String)]) -> Result<Vec<String>> {
    std::fs::create_dir_all(out_dir)?;
    for (name, content) in files {
        std::fs::write(out_dir.join(name), content)?;
    }
    Ok(files.iter().map(|(n, _)| (*n).to_owned()).collect())
}

/// Runs `cmd` and returns `(seed, artifact names)` for the manifest.
fn execute(cmd: &Command, out_dir: &Path) -> Result<(u64, Vec<String>)> {
    match cmd {
        Command::GenChannel(a) => {
            let wavelength = wavelength_for(a.ensemble.carrier_hz);
            let ensemble = a.ensemble.truth().ensemble(wavelength);
            ensemble.validate()?;
            // same stream as the ground truth of `pipeline --seed`
            let seed = RandomSeed(a.out.seed).derive(0);
            let h = ensemble.realize(a.size, a.users.unwrap_or(a.size), seed)?;
            println!("wrote {}x{} channel", h.rows(), h.cols());
            Ok((
                a.out.seed,
                write_files(out_dir, &[(CHANNEL_FILE, h.to_csv())])?,
            ))
        }
        Command::CapacityCurve(a) => {
            let ensemble = a
                .ensemble
                .truth()
                .ensemble(wavelength_for(a.ensemble.carrier_hz));
            let snr = db_to_linear(a.snr_db);
            let curve =
                capacity_curve(&ensemble, &a.sizes.0, snr, a.trials, RandomSeed(a.out.seed))?;
            for (n, c) in curve.sizes.iter().zip(&curve.mean_capacity) {
                println!("{n:>3}  {c:.4} bit/s/Hz");
            }
            Ok((
                a.out.seed,
                write_files(out_dir, &[(CURVE_FILE, curve.to_csv()?)])?,
            ))
        }
        Command::Sound(a) => {
            let cfg = a.experiment.config()?;
            let h_true = match &a.channel {
                Some(path) => ChannelMatrix::from_csv(&std::fs::read_to_string(path)?)?,
                None => cfg.true_channel()?,
            };
            let schedule = build_tdma_schedule(h_true.cols(), cfg.slot_ms)?;
            let pn = cfg.pn.generate()?;
            let h_est = simulate_sounding_round(
                &h_true,
                &schedule,
                &pn,
                &cfg.impairments(),
                cfg.round_seed(),
            )?;
            println!("round duration: {} ms", schedule.round_duration_ms());
            let files = [
                (TRUE_CHANNEL_FILE, h_true.to_csv()),
                (ESTIMATED_CHANNEL_FILE, h_est.to_csv()),
                (SCHEDULE_FILE, schedule.to_json()? + "\n"),
            ];
            Ok((cfg.seed, write_files(out_dir, &files)?))
        }
        Command::Fit(a) => {
            let target = read_curve(&a.target)?;
            let grid = FitGrid {
                spacings_halflambda: a.grid.d_grid.clone(),
                alphas_deg: a.grid.alpha_grid_deg.clone(),
                wavelength: wavelength_for(a.carrier_hz),
                snr: target.snr,
                trials: a.grid.trials,
                sizes: target.sizes.clone(),
            };
            let fit = fit_grid(&target, &grid, RandomSeed(a.out.seed))?;
            let summary = FitSummary {
                d_over_halflambda: fit.best.spacing_halflambda,
                alpha_deg: fit.best.alpha_deg,
                mme: fit.best.score,
            };
            println!(
                "best fit: d = {} lambda/2, alpha = {} deg, MME = {:.6}",
                summary.d_over_halflambda, summary.alpha_deg, summary.mme
            );
            let files = [
                (SCORE_TABLE_FILE, score_table_csv(&fit.table)?),
                (BEST_CURVE_FILE, fit.best.curve.to_csv()?),
                (FIT_FILE, serde_json::to_string_pretty(&summary)? + "\n"),
            ];
            Ok((a.out.seed, write_files(out_dir, &files)?))
        }
        Command::Pipeline(a) => {
            let cfg = a.experiment.config()?;
            let run = run_pipeline(&cfg, a.fit_config()?.as_ref())?;
            print!("{}", run.report.summary());
            Ok((cfg.seed, run.write(out_dir)?))
        }
        Command::EmulateController(a) => {
            let cfg = a.pipeline.experiment.config()?;
            let opts = ControllerOptions {
                partition: a.partition.clone().map(|p| p.0),
                round_timeout: Duration::from_millis(a.timeout_ms),
                ..Default::default()
            };
            let run = run_controller(&cfg, a.pipeline.fit_config()?.as_ref(), &a.endpoints, &opts)?;
            print!("{}", run.report.summary());
            Ok((cfg.seed, run.write(out_dir)?))
        }
        Command::EmulateUnit(_) | Command::Replay(_) => {
            unreachable!("handled before dispatch")
        }
    }
}

fn run_recorded(mut cmd: Command, out_dir: Option<PathBuf>) -> Result<()> {
    if let (Some(dir), Some(slot)) = (out_dir, cmd.out_dir_mut()) {
        *slot = dir;
    }
    let dir = cmd.out_dir_mut().map(|d| d.clone()).unwrap_or_default();
    let (seed, artifacts) = execute(&cmd, &dir)?;
    let manifest = RunManifest::new(seed, serde_json::to_value(&cmd)?, artifacts);
    manifest.write(&dir)?;
    Ok(())
}

fn serve_unit(a: &UnitArgs) -> Result<()> {
    let listener = TcpListener::bind(&a.listen)?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    let opts = UnitOptions {
        seed_offset: a.seed_offset,
        fail_after_results: a.fail_after_results,
    };
    let outcome = run_unit(listener, &opts)?;
    println!("sent {} results", outcome.results_sent);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EmulateUnit(a) => serve_unit(&a),
        Command::Replay(a) => {
            let manifest = RunManifest::read(&a.manifest)?;
            let cmd: Command = serde_json::from_value(manifest.command)?;
            if cmd.clone().out_dir_mut().is_none() {
                return Err(Error::Config(
                    "manifest does not record a replayable run".into(),
                ));
            }
            let out_dir = a.out_dir.unwrap_or_else(|| {
                a.manifest
                    .parent()
                    .map(Path::to_path_buf)
                    .unwrap_or_default()
            });
            run_recorded(cmd, Some(out_dir))
        }
        cmd => run_recorded(cmd, None),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
