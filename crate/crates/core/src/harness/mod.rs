//! End-to-end experiment runs and the controller/unit emulation.
//!
//! [`run_pipeline`] does everything in-process: draw the ground-truth channel,
//! run one sounding round, compare capacities and optionally fit the
//! Vandermonde model to a target curve. [`run_controller`] produces the same
//! round by farming the receive antennas out to [`run_unit`] processes over
//! TCP; its output is bit-identical to the in-process path.

mod controller;
pub mod protocol;
mod unit;

pub use controller::{default_partition, run_controller, ControllerOptions};
pub use unit::{run_unit, serve_connection, UnitOptions};

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::capacity::{capacity, db_to_linear, CapacityCurve, SignalModelParams};
use crate::channel::{wavelength_for, ChannelMatrix, Ensemble};
use crate::fit::{fit_grid, score_table_csv, FitGrid, GridFit};
use crate::rng::RandomSeed;
use crate::sounding::{
    build_tdma_schedule, simulate_sounding_round, ImpairmentSpec, PnSpec, TdmaSchedule,
    DEFAULT_SAMPLE_RATE_HZ,
};
use crate::{Error, Result};

pub const DEFAULT_CARRIER_HZ: f64 = 926.0e6;
pub const DEFAULT_SLOT_MS: f64 = 50.0;
pub const DEFAULT_SNR_DB: f64 = 10.0;

pub const TRUE_CHANNEL_FILE: &str = "h_true.csv";
pub const ESTIMATED_CHANNEL_FILE: &str = "h_est.csv";
pub const SCHEDULE_FILE: &str = "schedule.json";
pub const REPORT_FILE: &str = "report.json";
pub const SCORE_TABLE_FILE: &str = "score_table.csv";
pub const BEST_CURVE_FILE: &str = "best_fit_curve.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Ensemble the ground-truth channel is drawn from, in grid units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthModel {
    Gaussian,
    Vandermonde { d_halflambda: f64, alpha_deg: f64 },
    UniformPhase,
}

impl TruthModel {
    pub fn ensemble(&self, wavelength: f64) -> Ensemble {
        match *self {
            TruthModel::Gaussian => Ensemble::Gaussian,
            TruthModel::UniformPhase => Ensemble::UniformPhase,
            TruthModel::Vandermonde {
                d_halflambda,
                alpha_deg,
            } => Ensemble::Vandermonde {
                spacing: d_halflambda * wavelength / 2.0,
                wavelength,
                alpha: crate::fit::deg_to_alpha(alpha_deg),
            },
        }
    }
}

/// Optional Vandermonde fit against a target curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub target: CapacityCurve,
    pub d_grid: Vec<f64>,
    pub alpha_grid_deg: Vec<f64>,
    pub trials: usize,
}

/// Square `size x size` scheme; `snr_db` is both the sounding SNR and the
/// `rho` used for capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub size: usize,
    pub snr_db: f64,
    /// Sound without receiver noise; capacity still uses `snr_db`.
    pub noiseless: bool,
    pub slot_ms: f64,
    pub pn: PnSpec,
    pub carrier_hz: f64,
    pub truth: TruthModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfo_hz: Option<f64>,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            size: 4,
            snr_db: DEFAULT_SNR_DB,
            noiseless: false,
            slot_ms: DEFAULT_SLOT_MS,
            pn: PnSpec::default(),
            carrier_hz: DEFAULT_CARRIER_HZ,
            truth: TruthModel::Gaussian,
            cfo_hz: None,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn wavelength(&self) -> f64 {
        wavelength_for(self.carrier_hz)
    }

    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::Config("size must be at least 1".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config(format!(
                "snr_db must be finite, got {}",
                self.snr_db
            )));
        }
        if !(self.carrier_hz > 0.0 && self.carrier_hz.is_finite()) {
            return Err(Error::Config(format!(
                "carrier_hz must be > 0, got {}",
                self.carrier_hz
            )));
        }
        build_tdma_schedule(self.size, self.slot_ms)?;
        self.truth.ensemble(self.wavelength()).validate()?;
        self.impairments().validate()?;
        self.pn.generate()?;
        Ok(())
    }

    pub fn impairments(&self) -> ImpairmentSpec {
        ImpairmentSpec {
            snr_db: if self.noiseless {
                f64::INFINITY
            } else {
                self.snr_db
            },
            cfo_hz: self.cfo_hz,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn schedule(&self) -> Result<TdmaSchedule> {
        build_tdma_schedule(self.size, self.slot_ms)
    }

    pub fn truth_seed(&self) -> RandomSeed {
        RandomSeed(self.seed).derive(0)
    }

    pub fn round_seed(&self) -> RandomSeed {
        RandomSeed(self.seed).derive(1)
    }

    pub fn fit_seed(&self) -> RandomSeed {
        RandomSeed(self.seed).derive(2)
    }

    pub fn true_channel(&self) -> Result<ChannelMatrix> {
        self.truth
            .ensemble(self.wavelength())
            .realize(self.size, self.size, self.truth_seed())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub d_over_halflambda: f64,
    pub alpha_deg: f64,
    pub mme: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub size: usize,
    pub snr_db: f64,
    pub snr_linear: f64,
    pub noiseless: bool,
    pub carrier_hz: f64,
    pub wavelength_m: f64,
    pub slot_ms: f64,
    pub round_duration_ms: f64,
    pub round_duration_s: f64,
    pub capacity_true_bps_hz: f64,
    pub capacity_estimated_bps_hz: f64,
    pub capacity_relative_error: f64,
    pub channel_relative_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
}

impl PipelineReport {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "scheme: {0}x{0}\nround duration: {1} s ({2} ms, slot {3} ms)\n\
             capacity (true): {4:.6} bit/s/Hz\ncapacity (estimated): {5:.6} bit/s/Hz\n\
             relative channel error: {6:.3e}\n",
            self.size,
            self.round_duration_s,
            self.round_duration_ms,
            self.slot_ms,
            self.capacity_true_bps_hz,
            self.capacity_estimated_bps_hz,
            self.channel_relative_error,
        );
        if let Some(f) = &self.fit {
            s += &format!(
                "best fit: d = {} lambda/2, alpha = {} deg, MME = {:.6}\n",
                f.d_over_halflambda, f.alpha_deg, f.mme
            );
        }
        s
    }
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub config: ExperimentConfig,
    pub schedule: TdmaSchedule,
    pub h_true: ChannelMatrix,
    pub h_est: ChannelMatrix,
    pub report: PipelineReport,
    pub fit: Option<GridFit>,
}

impl PipelineRun {
    /// Writes the run's artifacts into `out_dir` and returns their file names.
    pub fn write(&self, out_dir: &Path) -> Result<Vec<String>> {
        fs::create_dir_all(out_dir)?;
        let mut files = vec![
            (TRUE_CHANNEL_FILE, self.h_true.to_csv()),
            (ESTIMATED_CHANNEL_FILE, self.h_est.to_csv()),
            (SCHEDULE_FILE, self.schedule.to_json()? + "\n"),
            (
                REPORT_FILE,
                serde_json::to_string_pretty(&self.report)? + "\n",
            ),
        ];
        if let Some(fit) = &self.fit {
            files.push((SCORE_TABLE_FILE, score_table_csv(&fit.table)?));
            files.push((BEST_CURVE_FILE, fit.best.curve.to_csv()?));
        }
        for (name, content) in &files {
            fs::write(out_dir.join(name), content)?;
        }
        Ok(files.into_iter().map(|(n, _)| n.to_owned()).collect())
    }
}

fn relative_error(est: &ChannelMatrix, truth: &ChannelMatrix) -> f64 {
    let diff = est
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let norm = truth.frobenius_norm();
    if norm == 0.0 {
        diff
    } else {
        diff / norm
    }
}

/// Assembles the report from a finished round. Shared by the in-process and
/// distributed paths so both emit identical artifacts.
pub(crate) fn finish_run(
    config: &ExperimentConfig,
    fit: Option<&FitConfig>,
    schedule: TdmaSchedule,
    h_true: ChannelMatrix,
    h_est: ChannelMatrix,
) -> Result<PipelineRun> {
    let snr = db_to_linear(config.snr_db);
    let params = SignalModelParams::new(snr, config.size);
    let cap_true = capacity(&h_true, &params)?;
    let cap_est = capacity(&h_est, &params)?;

    let grid_fit = match fit {
        Some(fc) => {
            let grid = FitGrid {
                spacings_halflambda: fc.d_grid.clone(),
                alphas_deg: fc.alpha_grid_deg.clone(),
                wavelength: config.wavelength(),
                snr: fc.target.snr,
                trials: fc.trials,
                sizes: fc.target.sizes.clone(),
            };
            Some(fit_grid(&fc.target, &grid, config.fit_seed())?)
        }
        None => None,
    };

    let report = PipelineReport {
        size: config.size,
        snr_db: config.snr_db,
        snr_linear: snr,
        noiseless: config.noiseless,
        carrier_hz: config.carrier_hz,
        wavelength_m: config.wavelength(),
        slot_ms: schedule.slot_ms(),
        round_duration_ms: schedule.round_duration_ms(),
        round_duration_s: schedule.round_duration_ms() / 1000.0,
        capacity_true_bps_hz: cap_true,
        capacity_estimated_bps_hz: cap_est,
        capacity_relative_error: if cap_true == 0.0 {
            (cap_est - cap_true).abs()
        } else {
            (cap_est - cap_true).abs() / cap_true
        },
        channel_relative_error: relative_error(&h_est, &h_true),
        fit: grid_fit.as_ref().map(|g| FitSummary {
            d_over_halflambda: g.best.spacing_halflambda,
            alpha_deg: g.best.alpha_deg,
            mme: g.best.score,
        }),
    };
    Ok(PipelineRun {
        config: config.clone(),
        schedule,
        h_true,
        h_est,
        report,
        fit: grid_fit,
    })
}

/// In-process run: truth channel, one sounding round, capacities, optional fit.
pub fn run_pipeline(config: &ExperimentConfig, fit: Option<&FitConfig>) -> Result<PipelineRun> {
    config.validate()?;
    let schedule = config.schedule()?;
    let pn = config.pn.generate()?;
    let h_true = config.true_channel()?;
    let h_est = simulate_sounding_round(
        &h_true,
        &schedule,
        &pn,
        &config.impairments(),
        config.round_seed(),
    )?;
    finish_run(config, fit, schedule, h_true, h_est)
}

/// Reproducibility record written next to every run's artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    /// The full invocation, replayable as-is.
    pub command: serde_json::Value,
    /// File names relative to the manifest's directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: u64, command: serde_json::Value, artifacts: Vec<String>) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed,
            command,
            artifacts,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}
