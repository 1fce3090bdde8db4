//! Experiment driver: configuration, single runs, Monte-Carlo sweeps and
//! traffic reports, written as CSV (plus a JSON aggregate).
//!
//! Realization `r` of a sweep draws everything from a sub-seed derived from
//! `(seed, r)`, so results do not depend on thread scheduling and a sweep can
//! be extended without changing earlier realizations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::baselines::run_ilm;
use crate::distsim::{account, DeviceMapping, TrafficReport};
use crate::error::{Error, Result};
use crate::graph::{ChannelSet, Connectivity, FactorGraph};
use crate::linalg::seeded_stream;
use crate::messages::InnerLoopConfig;
use crate::schedule::{InitMode, MessagePassing, RunConfig, Schedule, MESSAGE_STREAM};

/// Stream under a realization sub-seed used for the channel draw.
pub const CHANNEL_STREAM: u64 = 2;

/// Leakage values are floored here before taking logs.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Mpia,
    Ilm,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Mpia => "mpia",
            Algorithm::Ilm => "ilm",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgorithmChoice {
    Mpia,
    Ilm,
    Both,
}

impl AlgorithmChoice {
    pub fn algorithms(self) -> &'static [Algorithm] {
        match self {
            AlgorithmChoice::Mpia => &[Algorithm::Mpia],
            AlgorithmChoice::Ilm => &[Algorithm::Ilm],
            AlgorithmChoice::Both => &[Algorithm::Mpia, Algorithm::Ilm],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScheduleChoice {
    Regular,
    Ilm,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitChoice {
    /// Zero for the ILM schedule, random otherwise.
    Auto,
    Fixed(InitMode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub users: usize,
    pub rx_antennas: usize,
    pub tx_antennas: usize,
    pub streams: usize,
    pub algorithm: AlgorithmChoice,
    pub schedule: ScheduleChoice,
    pub init_mode: InitChoice,
    pub max_outer_iters: usize,
    pub leakage_tol: f64,
    pub inner_max_iters: usize,
    pub inner_tol: f64,
    pub warm_start: bool,
    pub num_realizations: usize,
    pub seed: u64,
    pub connectivity: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let inner = InnerLoopConfig::default();
        ExperimentConfig {
            users: 3,
            rx_antennas: 4,
            tx_antennas: 4,
            streams: 2,
            algorithm: AlgorithmChoice::Both,
            schedule: ScheduleChoice::Regular,
            init_mode: InitChoice::Auto,
            max_outer_iters: 100,
            leakage_tol: 1e-10,
            inner_max_iters: inner.max_inner_iters,
            inner_tol: inner.inner_tol,
            warm_start: inner.warm_start,
            num_realizations: 1,
            seed: 0,
            connectivity: None,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl ExperimentConfig {
    pub const KEYS: [&'static str; 16] = [
        "K",
        "N",
        "M",
        "d",
        "algorithm",
        "schedule",
        "init_mode",
        "max_outer_iters",
        "leakage_tol",
        "inner_max_iters",
        "inner_tol",
        "warm_start",
        "num_realizations",
        "seed",
        "connectivity",
        "output_dir",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "K" => self.users = parse_value(key, value)?,
            "N" => self.rx_antennas = parse_value(key, value)?,
            "M" => self.tx_antennas = parse_value(key, value)?,
            "d" => self.streams = parse_value(key, value)?,
            "algorithm" => {
                self.algorithm = match value {
                    "mpia" => AlgorithmChoice::Mpia,
                    "ilm" => AlgorithmChoice::Ilm,
                    "both" => AlgorithmChoice::Both,
                    _ => {
                        return Err(Error::Config(format!(
                            "algorithm must be mpia, ilm or both, got {value:?}"
                        )))
                    }
                }
            }
            "schedule" => {
                self.schedule = match value {
                    "regular" => ScheduleChoice::Regular,
                    "ilm" => ScheduleChoice::Ilm,
                    "" => return Err(Error::Config("schedule must not be empty".into())),
                    path => ScheduleChoice::File(PathBuf::from(path)),
                }
            }
            "init_mode" => {
                self.init_mode = match value {
                    "auto" => InitChoice::Auto,
                    other => InitChoice::Fixed(InitMode::parse(other).ok_or_else(|| {
                        Error::Config(format!(
                            "init_mode must be auto, zero or random, got {value:?}"
                        ))
                    })?),
                }
            }
            "max_outer_iters" => self.max_outer_iters = parse_value(key, value)?,
            "leakage_tol" => self.leakage_tol = parse_value(key, value)?,
            "inner_max_iters" => self.inner_max_iters = parse_value(key, value)?,
            "inner_tol" => self.inner_tol = parse_value(key, value)?,
            "warm_start" => self.warm_start = parse_value(key, value)?,
            "num_realizations" => self.num_realizations = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "connectivity" => self.connectivity = (!value.is_empty()).then(|| PathBuf::from(value)),
            "output_dir" => self.output_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source_name: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |msg: String| Error::Parse {
                source_name: source_name.to_string(),
                line: lineno + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            self.set(key.trim(), value)
                .map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&fs::read_to_string(path)?, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.users == 0 || self.rx_antennas == 0 || self.tx_antennas == 0 || self.streams == 0 {
            return Err(Error::Config("K, N, M and d must be positive".into()));
        }
        if self.streams > self.rx_antennas.min(self.tx_antennas) {
            return Err(Error::Config(format!(
                "d = {} exceeds min(N, M) = {}",
                self.streams,
                self.rx_antennas.min(self.tx_antennas)
            )));
        }
        if self.num_realizations == 0 {
            return Err(Error::Config("num_realizations must be at least 1".into()));
        }
        self.run_config(0).validate()
    }

    pub fn schedule(&self) -> Result<Schedule> {
        match &self.schedule {
            ScheduleChoice::Regular => Ok(Schedule::regular()),
            ScheduleChoice::Ilm => Ok(Schedule::ilm()),
            ScheduleChoice::File(path) => {
                Schedule::parse(&fs::read_to_string(path)?, &path.display().to_string())
            }
        }
    }

    pub fn resolved_init_mode(&self) -> InitMode {
        match (self.init_mode, &self.schedule) {
            (InitChoice::Fixed(mode), _) => mode,
            (InitChoice::Auto, ScheduleChoice::Ilm) => InitMode::Zero,
            (InitChoice::Auto, _) => InitMode::Random,
        }
    }

    pub fn connectivity(&self) -> Result<Connectivity> {
        let mask = match &self.connectivity {
            None => Connectivity::full(self.users),
            Some(path) => {
                Connectivity::parse(&fs::read_to_string(path)?, &path.display().to_string())?
            }
        };
        if mask.users() != self.users {
            return Err(Error::Config(format!(
                "connectivity mask is for {} users, K = {}",
                mask.users(),
                self.users
            )));
        }
        Ok(mask)
    }

    /// Message-passing configuration for one realization.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            max_outer_iters: self.max_outer_iters,
            leakage_tol: self.leakage_tol,
            init_mode: self.resolved_init_mode(),
            inner: InnerLoopConfig {
                max_inner_iters: self.inner_max_iters,
                inner_tol: self.inner_tol,
                warm_start: self.warm_start,
            },
            seed,
            audit: false,
        }
    }
}

/// Sub-seed for realization `r` under master seed `seed`.
pub fn realization_seed(seed: u64, realization: u64) -> u64 {
    seeded_stream(seed, realization).random()
}

/// `exp(mean(ln max(x, 1e−300)))`.
pub fn geometric_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let s: f64 = values.iter().map(|&x| x.max(LOG_FLOOR).ln()).sum();
    (s / values.len() as f64).exp()
}

/// Points `(x_(k), k/n)` of the empirical CDF, `x` sorted ascending.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, x)| (x, (k + 1) as f64 / n))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RealizationResult {
    pub realization_id: usize,
    pub algorithm: Algorithm,
    pub final_leakage: f64,
    pub iterations_run: usize,
    pub converged: bool,
    pub trajectory: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlgorithmAggregate {
    pub algorithm: Algorithm,
    pub realizations: usize,
    pub converged: usize,
    pub geometric_mean: f64,
    pub ecdf: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    /// Ordered by realization, then algorithm.
    pub realizations: Vec<RealizationResult>,
    pub aggregates: Vec<AlgorithmAggregate>,
}

impl ExperimentResult {
    pub fn final_leakages(&self, algorithm: Algorithm) -> Vec<f64> {
        self.realizations
            .iter()
            .filter(|r| r.algorithm == algorithm)
            .map(|r| r.final_leakage)
            .collect()
    }

    pub fn aggregate(&self, algorithm: Algorithm) -> Option<&AlgorithmAggregate> {
        self.aggregates.iter().find(|a| a.algorithm == algorithm)
    }
}

/// Channel draw of realization `r`.
pub fn realization_channels(
    cfg: &ExperimentConfig,
    mask: &Connectivity,
    realization: usize,
) -> Result<ChannelSet> {
    let sub = realization_seed(cfg.seed, realization as u64);
    ChannelSet::sample(
        cfg.users,
        cfg.rx_antennas,
        cfg.tx_antennas,
        cfg.streams,
        mask.clone(),
        &mut seeded_stream(sub, CHANNEL_STREAM),
    )
}

fn run_realization(
    cfg: &ExperimentConfig,
    schedule: &Schedule,
    mask: &Connectivity,
    realization: usize,
) -> Result<Vec<RealizationResult>> {
    let sub = realization_seed(cfg.seed, realization as u64);
    let channels = realization_channels(cfg, mask, realization)?;
    let mut out = Vec::new();
    for &algorithm in cfg.algorithm.algorithms() {
        let (trajectory, iterations_run, converged) = match algorithm {
            Algorithm::Mpia => {
                let mut mp = MessagePassing::new(&channels, schedule, cfg.run_config(sub))?;
                while !mp.is_done() {
                    mp.step()?;
                }
                let state = mp.into_state();
                (state.leakage_history, state.iterations_run, state.converged)
            }
            Algorithm::Ilm => {
                let o = run_ilm(
                    &channels,
                    cfg.max_outer_iters,
                    cfg.leakage_tol,
                    &mut seeded_stream(sub, MESSAGE_STREAM),
                )?;
                (o.leakage_history, o.iterations_run, o.converged)
            }
        };
        out.push(RealizationResult {
            realization_id: realization,
            algorithm,
            final_leakage: *trajectory.last().unwrap_or(&f64::NAN),
            iterations_run,
            converged,
            trajectory,
        });
    }
    Ok(out)
}

/// Runs `realizations` in parallel; results come back in realization order.
pub fn simulate_realizations(
    cfg: &ExperimentConfig,
    realizations: std::ops::Range<usize>,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    let mask = cfg.connectivity()?;
    let per: Vec<Vec<RealizationResult>> = realizations
        .into_par_iter()
        .map(|r| run_realization(cfg, &schedule, &mask, r))
        .collect::<Result<_>>()?;
    let realizations: Vec<RealizationResult> = per.into_iter().flatten().collect();
    let aggregates = cfg
        .algorithm
        .algorithms()
        .iter()
        .map(|&algorithm| {
            let rows: Vec<&RealizationResult> = realizations
                .iter()
                .filter(|r| r.algorithm == algorithm)
                .collect();
            let finals: Vec<f64> = rows.iter().map(|r| r.final_leakage).collect();
            AlgorithmAggregate {
                algorithm,
                realizations: rows.len(),
                converged: rows.iter().filter(|r| r.converged).count(),
                geometric_mean: geometric_mean(&finals),
                ecdf: ecdf(&finals),
            }
        })
        .collect();
    Ok(ExperimentResult {
        realizations,
        aggregates,
    })
}

/// All `num_realizations` realizations.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    simulate_realizations(cfg, 0..cfg.num_realizations)
}

fn fmt_float(x: f64) -> String {
    format!("{x:e}")
}

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FINAL_FILE: &str = "final.csv";
pub const AGGREGATE_FILE: &str = "aggregate.json";
pub const TRAFFIC_FILE: &str = "traffic.csv";

fn create_output_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(())
}

/// Columns `realization_id, algorithm, iteration, total_leakage`; iterations
/// are counted from 1.
pub fn write_trajectory_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["realization_id", "algorithm", "iteration", "total_leakage"])?;
    for r in &result.realizations {
        for (t, &l) in r.trajectory.iter().enumerate() {
            w.write_record([
                r.realization_id.to_string(),
                r.algorithm.to_string(),
                (t + 1).to_string(),
                fmt_float(l),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Columns `realization_id, algorithm, final_leakage, iterations_run, converged`.
pub fn write_final_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "realization_id",
        "algorithm",
        "final_leakage",
        "iterations_run",
        "converged",
    ])?;
    for r in &result.realizations {
        w.write_record([
            r.realization_id.to_string(),
            r.algorithm.to_string(),
            fmt_float(r.final_leakage),
            r.iterations_run.to_string(),
            r.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_json(result: &ExperimentResult, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&result.aggregates)?;
    fs::write(path, text + "\n")?;
    Ok(())
}

/// One realization (realization 0); writes `trajectory.csv`.
pub fn run_single(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = simulate_realizations(cfg, 0..1)?;
    create_output_dir(cfg)?;
    write_trajectory_csv(&result, &cfg.output_dir.join(TRAJECTORY_FILE))?;
    Ok(result)
}

/// Writes `final.csv` and `aggregate.json`.
pub fn run_montecarlo(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let result = simulate(cfg)?;
    create_output_dir(cfg)?;
    write_final_csv(&result, &cfg.output_dir.join(FINAL_FILE))?;
    write_aggregate_json(&result, &cfg.output_dir.join(AGGREGATE_FILE))?;
    Ok(result)
}

/// Traffic of `max_outer_iters` iterations of the configured schedule under
/// the default device mapping; writes `traffic.csv`.
pub fn run_distsim_report(cfg: &ExperimentConfig) -> Result<TrafficReport> {
    cfg.validate()?;
    let graph = FactorGraph::from_mask(
        &cfg.connectivity()?,
        cfg.rx_antennas,
        cfg.tx_antennas,
        cfg.streams,
    );
    let mapping = DeviceMapping::default_mapping(cfg.users)?;
    let report = account(
        &cfg.schedule()?,
        &graph,
        &mapping,
        cfg.max_outer_iters as u64,
    )?;
    create_output_dir(cfg)?;
    report.write_csv(fs::File::create(cfg.output_dir.join(TRAFFIC_FILE))?)?;
    Ok(report)
}
