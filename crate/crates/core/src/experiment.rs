//! Presets, performance metrics, baseline comparison and seed sweeps.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptation::GainStep;
use crate::oracles::OracleError;
use crate::scenario::{Mode, PlantSpec, ScenarioConfig, WeightInit};
use crate::sim::{self, SimError, TrajectoryRecord};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("empty trajectory record")]
    EmptyRecord,
    #[error("baseline {metric} is zero; improvement undefined")]
    ZeroBaseline { metric: &'static str },
    #[error("seed list is empty")]
    NoSeeds,
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Names accepted by [`preset`].
pub const PRESET_NAMES: &[&str] = &[
    "baseline",
    "dropout-default",
    "dropout-dt-0.2",
    "dropout-dt-0.05",
    "dropout-never-off",
    "dropout-off-1s",
    "stress-projection",
    "zero-plant",
    "matched-lyapunov",
    "matched-sabotage",
    "matched-dropout",
];

/// The dropout variants compared against `baseline`.
pub const DROPOUT_PRESETS: &[&str] = &[
    "dropout-default",
    "dropout-dt-0.2",
    "dropout-dt-0.05",
    "dropout-never-off",
    "dropout-off-1s",
];

pub fn preset_description(name: &str) -> Option<&'static str> {
    Some(match name {
        "baseline" => "all-active network, learning gain 100 throughout",
        "dropout-default" => "dropout every 0.1 s for the first 2 s, gain 100 then 40",
        "dropout-dt-0.2" => "as dropout-default with a 0.2 s switching period",
        "dropout-dt-0.05" => "as dropout-default with a 0.05 s switching period",
        "dropout-never-off" => "as dropout-default but dropout stays on for the whole run",
        "dropout-off-1s" => "as dropout-default but dropout stops after 1 s",
        "stress-projection" => "dropout-default with weight bound 90 so the projection engages",
        "zero-plant" => "f = 0, zero weights, zero learning gain, start on the reference",
        "matched-lyapunov" => "matched plant, baseline controller, estimates start near the ideal weights",
        "matched-sabotage" => "matched-lyapunov with the update law negated",
        "matched-dropout" => "dropout-default on a matched plant",
        _ => return None,
    })
}

pub fn preset(name: &str) -> Result<ScenarioConfig, ExperimentError> {
    let base = ScenarioConfig {
        name: name.to_string(),
        ..ScenarioConfig::default()
    };
    let baseline_mode = |mut c: ScenarioConfig| {
        c.mode = Mode::Baseline;
        c.adaptation.gain_schedule = vec![GainStep { start: 0.0, gain: 100.0 }];
        c
    };
    let cfg = match name {
        "dropout-default" => base,
        "baseline" => baseline_mode(base),
        "dropout-dt-0.2" => {
            let mut c = base;
            c.dropout.switch_period = 0.2;
            c
        }
        "dropout-dt-0.05" => {
            let mut c = base;
            c.dropout.switch_period = 0.05;
            c
        }
        "dropout-never-off" => {
            let mut c = base;
            c.dropout.deactivate_at = None;
            c
        }
        "dropout-off-1s" => {
            let mut c = base;
            c.dropout.deactivate_at = Some(1.0);
            c
        }
        "stress-projection" => {
            let mut c = base;
            c.adaptation.weight_bound = 90.0;
            c
        }
        "zero-plant" => {
            let mut c = baseline_mode(base);
            c.plant = PlantSpec::Zero;
            c.init = WeightInit::Normal { variance: 0.0 };
            c.adaptation.gain_schedule = vec![GainStep { start: 0.0, gain: 0.0 }];
            c.initial_state = sim::desired_trajectory(0.0).0;
            c.duration = 1.0;
            c
        }
        "matched-lyapunov" => {
            let mut c = baseline_mode(base);
            c.plant = PlantSpec::Matched { ideal_variance: 0.01 };
            c.init = WeightInit::AroundIdeal { variance: 0.01 };
            c
        }
        "matched-sabotage" => {
            let mut c = preset("matched-lyapunov")?;
            c.name = name.to_string();
            c.negate_update = true;
            c
        }
        "matched-dropout" => {
            let mut c = base;
            c.plant = PlantSpec::Matched { ideal_variance: 0.01 };
            c
        }
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

/// Time-RMS `√(mean ‖v‖²)` and stacked `√(Σ ‖v‖²)` of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalMetric {
    pub rms: f64,
    pub stacked: f64,
}

impl SignalMetric {
    fn from_norms(norms: impl Iterator<Item = f64>) -> Self {
        let (mut sum, mut n) = (0.0, 0usize);
        for v in norms {
            sum += v * v;
            n += 1;
        }
        Self {
            rms: (sum / n as f64).sqrt(),
            stacked: sum.sqrt(),
        }
    }

    pub fn get(&self, variant: MetricVariant) -> f64 {
        match variant {
            MetricVariant::Rms => self.rms,
            MetricVariant::Stacked => self.stacked,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricVariant {
    Rms,
    Stacked,
}

/// Tracking, function-approximation and control-effort metrics of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tracking: SignalMetric,
    pub approximation: SignalMetric,
    pub control: SignalMetric,
    pub samples: usize,
}

/// Percentage improvements `100·(baseline − candidate)/baseline`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub tracking: f64,
    pub approximation: f64,
    pub control: f64,
}

pub fn compute_metrics(record: &TrajectoryRecord) -> Result<MetricsReport, ExperimentError> {
    if record.rows.is_empty() {
        return Err(ExperimentError::EmptyRecord);
    }
    Ok(MetricsReport {
        tracking: SignalMetric::from_norms(record.rows.iter().map(|r| r.e_norm)),
        approximation: SignalMetric::from_norms(record.rows.iter().map(|r| r.f_err_norm)),
        control: SignalMetric::from_norms(record.rows.iter().map(|r| r.u_norm)),
        samples: record.rows.len(),
    })
}

fn improvement(baseline: f64, candidate: f64, metric: &'static str) -> Result<f64, ExperimentError> {
    if baseline == 0.0 {
        return Err(ExperimentError::ZeroBaseline { metric });
    }
    Ok(100.0 * (baseline - candidate) / baseline)
}

pub fn compare(
    baseline: &MetricsReport,
    candidate: &MetricsReport,
    variant: MetricVariant,
) -> Result<Improvement, ExperimentError> {
    Ok(Improvement {
        tracking: improvement(baseline.tracking.get(variant), candidate.tracking.get(variant), "tracking")?,
        approximation: improvement(
            baseline.approximation.get(variant),
            candidate.approximation.get(variant),
            "approximation",
        )?,
        control: improvement(baseline.control.get(variant), candidate.control.get(variant), "control")?,
    })
}

/// Metrics summary written next to each trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub metrics: BTreeMap<String, f64>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub preset: String,
    pub seed: u64,
    pub version: String,
    pub step: f64,
    pub duration: f64,
}

pub fn artifact_version() -> String {
    format!("lbddnn-v{}", env!("CARGO_PKG_VERSION"))
}

impl MetricsSummary {
    pub fn new(cfg: &ScenarioConfig, m: &MetricsReport) -> Self {
        let metrics = BTreeMap::from([
            ("e_rms".to_string(), m.tracking.rms),
            ("e_stacked".to_string(), m.tracking.stacked),
            ("f_err_rms".to_string(), m.approximation.rms),
            ("f_err_stacked".to_string(), m.approximation.stacked),
            ("u_rms".to_string(), m.control.rms),
            ("u_stacked".to_string(), m.control.stacked),
            ("samples".to_string(), m.samples as f64),
        ]);
        Self {
            metrics,
            provenance: Provenance {
                preset: cfg.name.clone(),
                seed: cfg.seed,
                version: artifact_version(),
                step: cfg.step,
                duration: cfg.duration,
            },
        }
    }
}

/// Output of [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: TrajectoryRecord,
    pub metrics: MetricsReport,
    /// Files written, when the config names an output directory.
    pub files: Vec<PathBuf>,
}

/// Simulates, computes metrics and, if `cfg.output_dir` is set, writes
/// `<name>_seed<seed>.csv` and `<name>_seed<seed>.metrics.json`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput, ExperimentError> {
    let record = sim::simulate(cfg)?;
    let metrics = compute_metrics(&record)?;
    let mut files = Vec::new();
    if let Some(dir) = &cfg.output_dir {
        files = write_outputs(dir, cfg, &record, &metrics)?;
    }
    Ok(RunOutput { record, metrics, files })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_outputs(
    dir: &Path,
    cfg: &ScenarioConfig,
    record: &TrajectoryRecord,
    metrics: &MetricsReport,
) -> Result<Vec<PathBuf>, ExperimentError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let stem = format!("{}_seed{}", cfg.name, cfg.seed);
    let csv_path = dir.join(format!("{stem}.csv"));
    let file = fs::File::create(&csv_path).map_err(io_err(&csv_path))?;
    record.write_csv(std::io::BufWriter::new(file))?;
    let json_path = dir.join(format!("{stem}.metrics.json"));
    let summary = serde_json::to_string_pretty(&MetricsSummary::new(cfg, metrics)).expect("summary serializes");
    fs::write(&json_path, summary).map_err(io_err(&json_path))?;
    Ok(vec![csv_path, json_path])
}

/// Median, min and max over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) };
        Some(Self {
            median,
            min: v[0],
            max: v[n - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub result: Result<MetricsReport, String>,
}

/// Per-metric statistics (time-RMS variant) over the successful seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub preset: String,
    pub outcomes: Vec<SeedOutcome>,
    pub tracking: Option<Stats>,
    pub approximation: Option<Stats>,
    pub control: Option<Stats>,
}

impl SweepReport {
    pub fn metrics_for(&self, seed: u64) -> Option<&MetricsReport> {
        self.outcomes
            .iter()
            .find(|o| o.seed == seed)
            .and_then(|o| o.result.as_ref().ok())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SeedOutcome> {
        self.outcomes.iter().filter(|o| o.result.is_err())
    }
}

/// Runs `cfg` once per seed in parallel. A diverging seed is recorded as an
/// error and does not abort the sweep.
pub fn seed_sweep(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<SweepReport, ExperimentError> {
    if seeds.is_empty() {
        return Err(ExperimentError::NoSeeds);
    }
    let mut outcomes: Vec<SeedOutcome> = seeds
        .par_iter()
        .map(|&seed| {
            let c = ScenarioConfig {
                seed,
                ..cfg.clone()
            };
            SeedOutcome {
                seed,
                result: run_scenario(&c).map(|o| o.metrics).map_err(|e| e.to_string()),
            }
        })
        .collect();
    outcomes.sort_by_key(|o| o.seed);
    let ok: Vec<&MetricsReport> = outcomes.iter().filter_map(|o| o.result.as_ref().ok()).collect();
    let stat = |f: fn(&MetricsReport) -> f64| Stats::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
    Ok(SweepReport {
        preset: cfg.name.clone(),
        tracking: stat(|m| m.tracking.rms),
        approximation: stat(|m| m.approximation.rms),
        control: stat(|m| m.control.rms),
        outcomes,
    })
}

/// Paired per-seed improvements of `candidate` over `baseline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub baseline: String,
    pub candidate: String,
    pub per_seed: Vec<(u64, Improvement)>,
    pub tracking: Option<Stats>,
    pub approximation: Option<Stats>,
    pub control: Option<Stats>,
}

/// Compares two sweeps seed by seed (same seed means same initial weights).
pub fn paired_comparison(baseline: &SweepReport, candidate: &SweepReport) -> Result<PairedComparison, ExperimentError> {
    let mut per_seed = Vec::new();
    for o in &candidate.outcomes {
        if let (Ok(c), Some(b)) = (&o.result, baseline.metrics_for(o.seed)) {
            per_seed.push((o.seed, compare(b, c, MetricVariant::Rms)?));
        }
    }
    let stat = |f: fn(&Improvement) -> f64| Stats::of(&per_seed.iter().map(|(_, i)| f(i)).collect::<Vec<_>>());
    Ok(PairedComparison {
        baseline: baseline.preset.clone(),
        candidate: candidate.preset.clone(),
        tracking: stat(|i| i.tracking),
        approximation: stat(|i| i.approximation),
        control: stat(|i| i.control),
        per_seed,
    })
}
