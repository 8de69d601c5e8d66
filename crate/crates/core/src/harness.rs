//! Experiment orchestration: spec parsing, seeded trial sweeps, CSV output
//! and the uniqueness survey.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cssm::solve_cssm_multi;
use crate::error::{Error, Result};
use crate::network::{sample_channels, sample_topology, ChannelSet, NetworkConfig, Topology};
use crate::rates::{closed_form_aux_all, RateSummary, Snapshot, StrategyProfile};
use crate::solvers::{
    initial_profile, solve_alg1, solve_alg2, solve_alg3, InitMode, RunReport, SolverConfig, Status, TracePoint,
};
use crate::vi::{jacobian_blocks, uniqueness_check, Criterion};

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const TRACE_COLUMNS: [&str; 7] = [
    "iteration",
    "secrecy_sum_rate",
    "sum_rate",
    "eves_rate",
    "power_info",
    "power_an",
    "vi_residual",
];

pub const TRIAL_COLUMNS: [&str; 15] = [
    "sweep_index",
    "sweep_value",
    "topology",
    "realization",
    "algorithm",
    "status",
    "iterations",
    "secrecy_sum_rate",
    "sum_rate",
    "eves_rate",
    "power_total",
    "power_an",
    "power_info",
    "vi_residual",
    "error",
];

pub const AGGREGATE_COLUMNS: [&str; 21] = [
    "sweep_axis",
    "sweep_value",
    "algorithm",
    "trials",
    "failures",
    "secrecy_sum_rate_mean",
    "secrecy_sum_rate_ci95",
    "sum_rate_mean",
    "sum_rate_ci95",
    "eves_rate_mean",
    "eves_rate_ci95",
    "power_total_mean",
    "power_total_ci95",
    "power_an_mean",
    "power_an_ci95",
    "power_info_mean",
    "power_info_ci95",
    "converged_fraction",
    "converged_fraction_ci95",
    "iterations_mean",
    "iterations_ci95",
];

pub const UNIQUENESS_COLUMNS: [&str; 6] = [
    "sweep_value",
    "trials",
    "satisfied_fraction",
    "lambda_min_mean",
    "off_diagonal_norm_sum_mean",
    "failures",
];

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "WIRETAP_OUT";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Alg1,
    Alg2,
    Alg3Sumrate,
    Alg3Eves,
    Alg3Secrecy,
    Cssm,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Alg1,
        Algorithm::Alg2,
        Algorithm::Alg3Sumrate,
        Algorithm::Alg3Eves,
        Algorithm::Alg3Secrecy,
        Algorithm::Cssm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Alg1 => "alg1",
            Algorithm::Alg2 => "alg2",
            Algorithm::Alg3Sumrate => "alg3-sumrate",
            Algorithm::Alg3Eves => "alg3-eves",
            Algorithm::Alg3Secrecy => "alg3-secrecy",
            Algorithm::Cssm => "cssm",
        }
    }

    fn tag(self) -> u64 {
        Algorithm::ALL.iter().position(|&a| a == self).unwrap() as u64
    }

    fn criterion(self) -> Option<Criterion> {
        match self {
            Algorithm::Alg3Sumrate => Some(Criterion::SumRate),
            Algorithm::Alg3Eves => Some(Criterion::EvesRates),
            Algorithm::Alg3Secrecy => Some(Criterion::SecrecySum),
            _ => None,
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::config("algorithms", format!("unknown algorithm `{s}`")))
    }
}

/// Run one algorithm. Random starting points are drawn from `seed`.
pub fn run_algorithm(
    alg: Algorithm,
    channels: &ChannelSet,
    powers: &[f64],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<RunReport>> {
    let cfg = match cfg.init {
        InitMode::Random { .. } => SolverConfig {
            init: InitMode::Random { seed },
            ..cfg.clone()
        },
        InitMode::ScaledIdentity => cfg.clone(),
    };
    Ok(match alg {
        Algorithm::Alg1 => vec![solve_alg1(channels, powers, &cfg)?],
        Algorithm::Alg2 => vec![solve_alg2(channels, powers, &cfg)?],
        Algorithm::Cssm => solve_cssm_multi(channels, powers, &cfg, seed)?,
        a => {
            let criterion = a.criterion().unwrap();
            vec![solve_alg3(channels, powers, &SolverConfig { criterion, ..cfg })?]
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Links,
    Eves,
    RCirc,
    PowerDbm,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Links => "links",
            SweepAxis::Eves => "eves",
            SweepAxis::RCirc => "r_circ",
            SweepAxis::PowerDbm => "power_dbm",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Network description with the same antenna counts and budget at every node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSpec {
    #[serde(alias = "Q")]
    pub links: i64,
    #[serde(alias = "K")]
    pub eves: i64,
    pub r_circ: f64,
    pub d_link: f64,
    pub path_loss_exp: f64,
    pub n_tx: i64,
    pub n_rx: i64,
    pub n_eve: i64,
    pub power_dbm: f64,
    pub noise_dbm: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            links: 2,
            eves: 1,
            r_circ: 50.0,
            d_link: 10.0,
            path_loss_exp: 2.5,
            n_tx: 3,
            n_rx: 2,
            n_eve: 2,
            power_dbm: 20.0,
            noise_dbm: 0.0,
        }
    }
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.links, "network.links"),
            (self.eves, "network.eves"),
            (self.n_tx, "network.n_tx"),
            (self.n_rx, "network.n_rx"),
            (self.n_eve, "network.n_eve"),
        ] {
            if v < 1 {
                return Err(Error::config(name, format!("must be at least 1, got {v}")));
            }
        }
        self.to_config().validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("network.{field}"),
                reason,
            },
            e => e,
        })
    }

    pub fn to_config(&self) -> NetworkConfig {
        let links = self.links.max(0) as usize;
        let eves = self.eves.max(0) as usize;
        NetworkConfig {
            links,
            eves,
            r_circ: self.r_circ,
            d_link: self.d_link,
            path_loss_exp: self.path_loss_exp,
            n_tx: vec![self.n_tx.max(0) as usize; links],
            n_rx: vec![self.n_rx.max(0) as usize; links],
            n_eve: vec![self.n_eve.max(0) as usize; eves],
            power_dbm: vec![self.power_dbm; links],
            noise_dbm: self.noise_dbm,
        }
    }

    /// Copy with the swept field set to `value`.
    pub fn at(&self, axis: SweepAxis, value: f64) -> NetworkSpec {
        let mut s = self.clone();
        match axis {
            SweepAxis::Links => s.links = value as i64,
            SweepAxis::Eves => s.eves = value as i64,
            SweepAxis::RCirc => s.r_circ = value,
            SweepAxis::PowerDbm => s.power_dbm = value,
        }
        s
    }
}

fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Alg2]
}
fn default_topologies() -> i64 {
    10
}
fn default_realizations() -> i64 {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    /// Shorthand for `network.links`.
    #[serde(default, alias = "Q", skip_serializing_if = "Option::is_none")]
    pub links: Option<i64>,
    /// Shorthand for `network.eves`.
    #[serde(default, alias = "K", skip_serializing_if = "Option::is_none")]
    pub eves: Option<i64>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_topologies")]
    pub topologies: i64,
    #[serde(default = "default_realizations")]
    pub realizations: i64,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            links: None,
            eves: None,
            network: NetworkSpec::default(),
            solver: SolverConfig::default(),
            algorithms: default_algorithms(),
            sweep: None,
            topologies: default_topologies(),
            realizations: default_realizations(),
            base_seed: 0,
            output_dir: None,
        }
    }
}

impl ExperimentSpec {
    /// Folds the top-level shorthands into `network`.
    pub fn normalized(mut self) -> Self {
        if let Some(q) = self.links.take() {
            self.network.links = q;
        }
        if let Some(k) = self.eves.take() {
            self.network.eves = k;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.solver.validate().map_err(|e| match e {
            Error::Config { field, reason } => Error::Config {
                field: format!("solver.{field}"),
                reason,
            },
            e => e,
        })?;
        if self.algorithms.is_empty() {
            return Err(Error::config("algorithms", "must list at least one algorithm"));
        }
        if self.topologies < 1 {
            return Err(Error::config("topologies", "must be at least 1"));
        }
        if self.realizations < 1 {
            return Err(Error::config("realizations", "must be at least 1"));
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(Error::config("sweep.values", "must not be empty"));
            }
            for &v in &s.values {
                self.network.at(s.axis, v).validate().map_err(|e| match e {
                    Error::Config { reason, .. } => {
                        Error::config("sweep.values", format!("value {v} gives an invalid network: {reason}"))
                    }
                    e => e,
                })?;
            }
        }
        Ok(())
    }

    /// `(axis name, values)`; a single unnamed point without a sweep.
    fn sweep_points(&self) -> (&'static str, Vec<Option<f64>>) {
        match &self.sweep {
            Some(s) => (s.axis.name(), s.values.iter().map(|&v| Some(v)).collect()),
            None => ("none", vec![None]),
        }
    }

    fn network_at(&self, value: Option<f64>) -> NetworkSpec {
        match (&self.sweep, value) {
            (Some(s), Some(v)) => self.network.at(s.axis, v),
            _ => self.network.clone(),
        }
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let col = offset - before.rfind('\n').map(|i| i + 1).unwrap_or(0) + 1;
    (line, col)
}

/// Position of the key that a dotted field name ends in.
fn locate_field(text: &str, field: &str) -> Option<(usize, usize)> {
    let key = field.rsplit('.').next()?;
    let mut names = vec![key.to_string()];
    match key {
        "links" => names.push("Q".into()),
        "eves" => names.push("K".into()),
        _ => {}
    }
    names
        .iter()
        .filter_map(|n| text.find(&format!("\"{n}\"")))
        .min()
        .map(|o| line_col(text, o))
}

/// Parses and validates a JSON experiment spec. Every failure carries the
/// line of the offending field when it can be found.
pub fn parse_spec_str(text: &str) -> Result<ExperimentSpec> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let spec: ExperimentSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = if path == "." || path.is_empty() {
            inner.to_string()
        } else {
            format!("field `{path}`: {inner}")
        };
        Error::Parse {
            line: inner.line(),
            column: inner.column(),
            message,
        }
    })?;
    let spec = spec.normalized();
    spec.validate().map_err(|e| match e {
        Error::Config { field, reason } => match locate_field(text, &field) {
            Some((line, column)) => Error::Parse {
                line,
                column,
                message: format!("field `{field}`: {reason}"),
            },
            None => Error::Config { field, reason },
        },
        e => e,
    })?;
    Ok(spec)
}

pub fn parse_spec(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_spec_str(&text)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive hash of seed components.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243f_6a88_85a3_08d3, |h, &p| splitmix(h ^ splitmix(p)))
}

const TOPOLOGY_STREAM: u64 = 1;
const CHANNEL_STREAM: u64 = 2;
const ALGORITHM_STREAM: u64 = 3;

pub fn trial_topology(cfg: &NetworkConfig, base_seed: u64, topology: usize) -> Result<Topology> {
    sample_topology(cfg, derive_seed(&[base_seed, TOPOLOGY_STREAM, topology as u64]))
}

/// Seeded topology and channel draw for one trial.
pub fn trial_channels(cfg: &NetworkConfig, base_seed: u64, topology: usize, realization: usize) -> Result<ChannelSet> {
    let topo = trial_topology(cfg, base_seed, topology)?;
    sample_channels(
        &topo,
        cfg,
        derive_seed(&[base_seed, CHANNEL_STREAM, topology as u64, realization as u64]),
    )
}

pub fn algorithm_seed(base_seed: u64, topology: usize, realization: usize, alg: Algorithm) -> u64 {
    derive_seed(&[
        base_seed,
        ALGORITHM_STREAM,
        topology as u64,
        realization as u64,
        alg.tag(),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub status: Status,
    pub iterations: f64,
    pub secrecy_sum_rate: f64,
    pub sum_rate: f64,
    pub eves_rate: f64,
    pub power_total: f64,
    pub power_an: f64,
    pub power_info: f64,
    pub vi_residual: f64,
}

impl TrialMetrics {
    fn from_reports(reports: &[RunReport], channels: &ChannelSet, powers: &[f64]) -> Result<Self> {
        let budget: f64 = powers.iter().sum::<f64>().max(f64::MIN_POSITIVE);
        let n = reports.len() as f64;
        let mut m = TrialMetrics {
            status: if reports.iter().all(|r| r.status == Status::Converged) {
                Status::Converged
            } else {
                reports
                    .iter()
                    .map(|r| r.status)
                    .find(|&s| s != Status::Converged)
                    .unwrap_or(Status::IterationCap)
            },
            iterations: 0.0,
            secrecy_sum_rate: 0.0,
            sum_rate: 0.0,
            eves_rate: 0.0,
            power_total: 0.0,
            power_an: 0.0,
            power_info: 0.0,
            vi_residual: 0.0,
        };
        for r in reports {
            let rs = RateSummary::compute(&r.final_profile, channels)?;
            let info: f64 = r.link_power.iter().map(|p| p.0).sum();
            let an: f64 = r.link_power.iter().map(|p| p.1).sum();
            m.iterations += r.iterations as f64 / n;
            m.secrecy_sum_rate += rs.secrecy_sum_clipped() / n;
            m.sum_rate += rs.sum_rate() / n;
            m.eves_rate += rs.eves_rate() / n;
            m.power_total += (info + an) / budget / n;
            m.power_an += an / budget / n;
            m.power_info += info / budget / n;
            m.vi_residual += crate::vi::vi_residual(&r.final_profile, channels, powers, 5.0)? / n;
        }
        Ok(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub sweep_index: usize,
    pub sweep_value: Option<f64>,
    pub topology: usize,
    pub realization: usize,
    pub algorithm: Algorithm,
    pub outcome: std::result::Result<TrialMetrics, String>,
    #[serde(skip)]
    pub trace: Vec<TracePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub ci95: f64,
}

impl Stat {
    /// Normal-approximation interval half-width from the sample deviation.
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len();
        if n == 0 {
            return Stat {
                mean: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        if n == 1 {
            return Stat { mean, ci95: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        Stat {
            mean,
            ci95: 1.96 * (var / n as f64).sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_axis: String,
    pub sweep_value: Option<f64>,
    pub algorithm: Algorithm,
    pub trials: usize,
    pub failures: usize,
    pub secrecy_sum_rate: Stat,
    pub sum_rate: Stat,
    pub eves_rate: Stat,
    pub power_total: Stat,
    pub power_an: Stat,
    pub power_info: Stat,
    pub converged_fraction: Stat,
    pub iterations: Stat,
}

/// Aggregates in sweep order, then in `algorithms` order.
pub fn aggregate(axis: &str, trials: &[Trial], algorithms: &[Algorithm]) -> Vec<AggregateRow> {
    let mut points: Vec<(usize, Option<f64>)> = trials.iter().map(|t| (t.sweep_index, t.sweep_value)).collect();
    points.sort_by_key(|p| p.0);
    points.dedup_by_key(|p| p.0);
    let mut rows = Vec::new();
    for (si, value) in points {
        for &alg in algorithms {
            let group: Vec<&Trial> = trials
                .iter()
                .filter(|t| t.sweep_index == si && t.algorithm == alg)
                .collect();
            if group.is_empty() {
                continue;
            }
            let ok: Vec<&TrialMetrics> = group.iter().filter_map(|t| t.outcome.as_ref().ok()).collect();
            let stat = |f: &dyn Fn(&TrialMetrics) -> f64| Stat::of(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            rows.push(AggregateRow {
                sweep_axis: axis.to_string(),
                sweep_value: value,
                algorithm: alg,
                trials: group.len(),
                failures: group.len() - ok.len(),
                secrecy_sum_rate: stat(&|m| m.secrecy_sum_rate),
                sum_rate: stat(&|m| m.sum_rate),
                eves_rate: stat(&|m| m.eves_rate),
                power_total: stat(&|m| m.power_total),
                power_an: stat(&|m| m.power_an),
                power_info: stat(&|m| m.power_info),
                converged_fraction: stat(&|m| if m.status == Status::Converged { 1.0 } else { 0.0 }),
                iterations: stat(&|m| m.iterations),
            });
        }
    }
    rows
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out: PathBuf,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub trace: bool,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub trials: Vec<Trial>,
    pub aggregates: Vec<AggregateRow>,
    pub files: Vec<PathBuf>,
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every trial of `spec` without touching the filesystem.
pub fn run_trials(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<Vec<Trial>> {
    spec.validate()?;
    let (_, points) = spec.sweep_points();
    let mut cells = Vec::new();
    for (si, &value) in points.iter().enumerate() {
        for t in 0..spec.topologies as usize {
            for r in 0..spec.realizations as usize {
                cells.push((si, value, t, r));
            }
        }
    }
    let run_cell = |&(si, value, t, r): &(usize, Option<f64>, usize, usize)| -> Vec<Trial> {
        let cfg = spec.network_at(value).to_config();
        let powers = cfg.powers_linear();
        let channels = trial_channels(&cfg, spec.base_seed, t, r);
        spec.algorithms
            .iter()
            .map(|&alg| {
                let result = channels.as_ref().map_err(|e| e.to_string()).and_then(|ch| {
                    let seed = algorithm_seed(spec.base_seed, t, r, alg);
                    run_algorithm(alg, ch, &powers, &spec.solver, seed)
                        .and_then(|reps| Ok((TrialMetrics::from_reports(&reps, ch, &powers)?, reps)))
                        .map_err(|e| e.to_string())
                });
                let (outcome, trace) = match result {
                    Ok((m, reps)) => (Ok(m), reps.into_iter().next().map(|r| r.trace).unwrap_or_default()),
                    Err(e) => (Err(e), Vec::new()),
                };
                Trial {
                    sweep_index: si,
                    sweep_value: value,
                    topology: t,
                    realization: r,
                    algorithm: alg,
                    outcome,
                    trace,
                }
            })
            .collect()
    };
    let nested: Vec<Vec<Trial>> = with_pool(jobs, || cells.par_iter().map(run_cell).collect())?;
    Ok(nested.into_iter().flatten().collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn trial_record(t: &Trial) -> Vec<String> {
    let mut row = vec![
        t.sweep_index.to_string(),
        fmt_opt(t.sweep_value),
        t.topology.to_string(),
        t.realization.to_string(),
        t.algorithm.name().to_string(),
    ];
    match &t.outcome {
        Ok(m) => {
            row.push(m.status.name().to_string());
            for v in [
                m.iterations,
                m.secrecy_sum_rate,
                m.sum_rate,
                m.eves_rate,
                m.power_total,
                m.power_an,
                m.power_info,
                m.vi_residual,
            ] {
                row.push(v.to_string());
            }
            row.push(String::new());
        }
        Err(e) => {
            row.push("failed".into());
            row.extend(std::iter::repeat_n(String::new(), 8));
            row.push(e.clone());
        }
    }
    row
}

pub fn aggregate_record(a: &AggregateRow) -> Vec<String> {
    let mut row = vec![
        a.sweep_axis.clone(),
        fmt_opt(a.sweep_value),
        a.algorithm.name().to_string(),
        a.trials.to_string(),
        a.failures.to_string(),
    ];
    for s in [
        &a.secrecy_sum_rate,
        &a.sum_rate,
        &a.eves_rate,
        &a.power_total,
        &a.power_an,
        &a.power_info,
        &a.converged_fraction,
        &a.iterations,
    ] {
        row.push(s.mean.to_string());
        row.push(s.ci95.to_string());
    }
    row
}

fn trace_record(p: &TracePoint) -> Vec<String> {
    vec![
        p.iteration.to_string(),
        p.secrecy_sum_rate.to_string(),
        p.sum_rate.to_string(),
        p.eves_rate.to_string(),
        p.power_info.to_string(),
        p.power_an.to_string(),
        p.vi_residual.to_string(),
    ]
}

#[derive(Serialize)]
struct Metadata<'a> {
    csv_schema_version: u32,
    secrecy_reporting: &'a str,
    power_normalization: &'a str,
    ci95: &'a str,
    trial_columns: &'a [&'a str],
    aggregate_columns: &'a [&'a str],
    trace_columns: &'a [&'a str],
}

fn write_metadata(out: &Path) -> Result<PathBuf> {
    let meta = Metadata {
        csv_schema_version: CSV_SCHEMA_VERSION,
        secrecy_reporting: "per-link secrecy rates clipped at 0 before summing",
        power_normalization: "divided by the sum of link budgets",
        ci95: "1.96 * sample standard deviation / sqrt(n)",
        trial_columns: &TRIAL_COLUMNS,
        aggregate_columns: &AGGREGATE_COLUMNS,
        trace_columns: &TRACE_COLUMNS,
    };
    let path = out.join("metadata.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

fn write_spec_echo(spec: &ExperimentSpec, out: &Path) -> Result<PathBuf> {
    let path = out.join("spec.json");
    let text = serde_json::to_string_pretty(spec).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Runs the spec and writes `spec.json`, `metadata.json`, `trials.csv`,
/// `aggregates.csv` and, when tracing, one CSV per trial under `traces/`.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentOutput> {
    let trials = run_trials(spec, opts.jobs)?;
    let (axis, _) = spec.sweep_points();
    let aggregates = aggregate(axis, &trials, &spec.algorithms);
    fs::create_dir_all(&opts.out).map_err(io_err(&opts.out))?;
    let mut files = vec![write_spec_echo(spec, &opts.out)?, write_metadata(&opts.out)?];
    let path = opts.out.join("trials.csv");
    write_csv(
        &path,
        &TRIAL_COLUMNS,
        &trials.iter().map(trial_record).collect::<Vec<_>>(),
    )?;
    files.push(path);
    let path = opts.out.join("aggregates.csv");
    write_csv(
        &path,
        &AGGREGATE_COLUMNS,
        &aggregates.iter().map(aggregate_record).collect::<Vec<_>>(),
    )?;
    files.push(path);
    if opts.trace {
        let dir = opts.out.join("traces");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        for t in trials.iter().filter(|t| t.outcome.is_ok()) {
            let path = dir.join(format!(
                "s{}_t{}_r{}_{}.csv",
                t.sweep_index,
                t.topology,
                t.realization,
                t.algorithm.name()
            ));
            write_csv(
                &path,
                &TRACE_COLUMNS,
                &t.trace.iter().map(trace_record).collect::<Vec<_>>(),
            )?;
            files.push(path);
        }
    }
    Ok(ExperimentOutput {
        trials,
        aggregates,
        files,
    })
}

fn parse_f64(s: &str) -> std::result::Result<f64, String> {
    s.parse::<f64>().map_err(|e| format!("`{s}`: {e}"))
}

/// Reads `trials.csv` back into trials (without traces).
pub fn read_trials(path: &Path) -> Result<Vec<Trial>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    if header.iter().collect::<Vec<_>>() != TRIAL_COLUMNS {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("{} does not have the trial header", path.display()),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            line,
            column: 1,
            message,
        };
        let f = |k: usize| parse_f64(&rec[k]).map_err(bad);
        let u = |k: usize| rec[k].parse::<usize>().map_err(|e| bad(format!("`{}`: {e}", &rec[k])));
        let status = match &rec[5] {
            "converged" => Some(Status::Converged),
            "iteration-cap" => Some(Status::IterationCap),
            "oscillating" => Some(Status::Oscillating),
            "failed" => None,
            s => return Err(bad(format!("unknown status `{s}`"))),
        };
        let outcome = match status {
            None => Err(rec[14].to_string()),
            Some(status) => Ok(TrialMetrics {
                status,
                iterations: f(6)?,
                secrecy_sum_rate: f(7)?,
                sum_rate: f(8)?,
                eves_rate: f(9)?,
                power_total: f(10)?,
                power_an: f(11)?,
                power_info: f(12)?,
                vi_residual: f(13)?,
            }),
        };
        out.push(Trial {
            sweep_index: u(0)?,
            sweep_value: if rec[1].is_empty() { None } else { Some(f(1)?) },
            topology: u(2)?,
            realization: u(3)?,
            algorithm: rec[4].parse()?,
            outcome,
            trace: Vec::new(),
        });
    }
    Ok(out)
}

/// Recomputes the aggregate table from a finished run directory.
pub fn report(dir: &Path) -> Result<Vec<AggregateRow>> {
    let spec = parse_spec(&dir.join("spec.json"))?;
    let trials = read_trials(&dir.join("trials.csv"))?;
    let (axis, _) = spec.sweep_points();
    Ok(aggregate(axis, &trials, &spec.algorithms))
}

pub fn aggregates_to_csv(rows: &[AggregateRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(AGGREGATE_COLUMNS).unwrap();
    for r in rows {
        w.write_record(aggregate_record(r)).unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UniquenessPoint {
    /// The solvers' starting profile.
    Init,
    /// Where gradient response stops.
    Converged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessRow {
    pub sweep_value: Option<f64>,
    pub trials: usize,
    pub satisfied_fraction: f64,
    pub lambda_min_mean: f64,
    pub off_diagonal_norm_sum_mean: f64,
    pub failures: usize,
}

/// Removes every coupling between links: cross-link channels are zeroed and
/// eavesdropper `k` keeps only its channel from link `k mod Q`.
pub fn zero_cross_channels(ch: &mut ChannelSet) {
    let zero = num_complex::Complex64::new(0.0, 0.0);
    let q_count = ch.h.len();
    for (r, row) in ch.h.iter_mut().enumerate() {
        for (q, m) in row.iter_mut().enumerate() {
            if r != q {
                m.fill(zero);
            }
        }
    }
    for (l, row) in ch.g.iter_mut().enumerate() {
        for (k, m) in row.iter_mut().enumerate() {
            if k % q_count != l {
                m.fill(zero);
            }
        }
    }
}

/// Per-trial uniqueness test, summarized per sweep value. `zero_cross`
/// removes all link-to-link interference before testing.
pub fn check_uniqueness(
    spec: &ExperimentSpec,
    point: UniquenessPoint,
    zero_cross: bool,
    jobs: Option<usize>,
) -> Result<Vec<UniquenessRow>> {
    spec.validate()?;
    let (_, points) = spec.sweep_points();
    let beta = spec.solver.beta;
    let mut rows = Vec::new();
    for &value in &points {
        let cfg = spec.network_at(value).to_config();
        let powers = cfg.powers_linear();
        let cells: Vec<(usize, usize)> = (0..spec.topologies as usize)
            .flat_map(|t| (0..spec.realizations as usize).map(move |r| (t, r)))
            .collect();
        let one = |&(t, r): &(usize, usize)| -> Result<(bool, f64, f64)> {
            let mut ch = trial_channels(&cfg, spec.base_seed, t, r)?;
            if zero_cross {
                zero_cross_channels(&mut ch);
            }
            let x: StrategyProfile = match point {
                UniquenessPoint::Init => initial_profile(&ch, &powers, spec.solver.init),
                UniquenessPoint::Converged => solve_alg2(&ch, &powers, &spec.solver)?.final_profile,
            };
            let aux = closed_form_aux_all(&x, Snapshot::Current, &ch)?;
            let rep = uniqueness_check(&jacobian_blocks(&x, &aux, &ch, beta)?);
            let n = rep.links.len() as f64;
            Ok((
                rep.unique,
                rep.links.iter().map(|l| l.lambda_min).sum::<f64>() / n,
                rep.links.iter().map(|l| l.off_diagonal_norm_sum).sum::<f64>() / n,
            ))
        };
        let results: Vec<Result<(bool, f64, f64)>> = with_pool(jobs, || cells.par_iter().map(one).collect())?;
        let ok: Vec<&(bool, f64, f64)> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
        let n = ok.len().max(1) as f64;
        rows.push(UniquenessRow {
            sweep_value: value,
            trials: results.len(),
            satisfied_fraction: ok.iter().filter(|o| o.0).count() as f64 / n,
            lambda_min_mean: ok.iter().map(|o| o.1).sum::<f64>() / n,
            off_diagonal_norm_sum_mean: ok.iter().map(|o| o.2).sum::<f64>() / n,
            failures: results.len() - ok.len(),
        });
    }
    Ok(rows)
}

pub fn write_uniqueness(rows: &[UniquenessRow], out: &Path) -> Result<PathBuf> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let path = out.join("uniqueness.csv");
    let records: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_opt(r.sweep_value),
                r.trials.to_string(),
                r.satisfied_fraction.to_string(),
                r.lambda_min_mean.to_string(),
                r.off_diagonal_norm_sum_mean.to_string(),
                r.failures.to_string(),
            ]
        })
        .collect();
    write_csv(&path, &UNIQUENESS_COLUMNS, &records)?;
    Ok(path)
}
