//! Equilibrium solvers: best response (`alg1`), gradient response (`alg2`)
//! and regularized equilibrium selection (`alg3`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{project_feasible, HermitianMatrix};
use crate::network::ChannelSet;
use crate::rates::{LinkStrategy, RateSummary, StrategyProfile};
use crate::vi::{vi_residual, Criterion};

pub mod alg1;
pub mod alg2;
pub mod alg3;

pub use alg1::solve_alg1;
pub use alg2::solve_alg2;
pub use alg3::solve_alg3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EpsSchedule {
    /// `1 / j`.
    Harmonic,
    /// `ratio^(j-1)`.
    Geometric { ratio: f64 },
    /// No criterion term at all.
    Zero,
}

impl EpsSchedule {
    pub fn at(self, j: usize) -> f64 {
        match self {
            EpsSchedule::Harmonic => 1.0 / j as f64,
            EpsSchedule::Geometric { ratio } => ratio.powi(j as i32 - 1),
            EpsSchedule::Zero => 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauPolicy {
    /// Diagonal-dominance shift over full Jacobian rows, once per stage.
    Gerschgorin,
    /// Dominance over the cross-link entries only, once per stage.
    CrossGerschgorin,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum InitMode {
    /// `sigma = w = P / (4 N_T) I`.
    ScaledIdentity,
    /// Random PSD pair using a random fraction of the budget.
    Random { seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Armijo {
    pub c1: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for Armijo {
    fn default() -> Self {
        Self {
            c1: 1e-4,
            shrink: 0.5,
            max_backtracks: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LagrangianForm {
    /// `(max(a + p c, 0)^2 + a^2) / 2p`.
    Printed,
    /// `(max(a + p c, 0)^2 - a^2) / 2p`.
    Conventional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CssmConfig {
    pub penalty_growth: f64,
    pub penalty_init: f64,
    /// The penalty grows only when the worst violation fails to drop below
    /// this fraction of its previous value since the last auxiliary refresh.
    pub violation_decrease: f64,
    pub outer_cap: usize,
    pub middle_cap: usize,
    pub inner_cap: usize,
    /// Initial scale of the descent direction `-step * grad L`.
    pub step: f64,
    /// Accepted relative constraint violation before the final projection.
    pub feas_tol: f64,
    pub form: LagrangianForm,
    pub inits: usize,
}

impl Default for CssmConfig {
    fn default() -> Self {
        Self {
            penalty_growth: 4.0,
            penalty_init: 1.0,
            violation_decrease: 0.25,
            outer_cap: 30,
            middle_cap: 12,
            inner_cap: 200,
            step: 20000.0,
            feas_tol: 1e-6,
            form: LagrangianForm::Printed,
            inits: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub beta: f64,
    pub gamma0: f64,
    pub omega: f64,
    /// Step schedule `gamma0 * (i + alpha_offset)^-omega`.
    pub alpha_offset: f64,
    /// Proximal product `gamma * theta`.
    pub c: f64,
    pub eps_schedule: EpsSchedule,
    pub tau_policy: TauPolicy,
    /// Rounds for `alg1`, sweeps for `alg2`.
    pub max_iters: usize,
    /// Inner iterations per stage for `alg3`, AO iterations per round for `alg1`.
    pub inner_cap: usize,
    pub outer_cap: usize,
    pub pg_cap: usize,
    pub tol: f64,
    pub criterion: Criterion,
    pub armijo: Armijo,
    pub oscillation_window: usize,
    /// Largest number of step-scale reductions by 10.
    pub max_decimations: usize,
    pub init: InitMode,
    pub cssm: CssmConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 5.0,
            gamma0: 20000.0,
            omega: 0.6,
            alpha_offset: 0.0,
            c: 0.08,
            eps_schedule: EpsSchedule::Harmonic,
            tau_policy: TauPolicy::CrossGerschgorin,
            max_iters: 1000,
            inner_cap: 50,
            outer_cap: 3,
            pg_cap: 100,
            tol: 1e-3,
            criterion: Criterion::SumRate,
            armijo: Armijo::default(),
            oscillation_window: 50,
            max_decimations: 6,
            init: InitMode::ScaledIdentity,
            cssm: CssmConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(name, "must be positive and finite"))
            }
        };
        pos(self.beta, "beta")?;
        pos(self.gamma0, "gamma0")?;
        pos(self.tol, "tol")?;
        if !(0.0..1.0).contains(&self.omega) {
            return Err(Error::config("omega", "must lie in [0, 1)"));
        }
        if !(self.alpha_offset >= 0.0) {
            return Err(Error::config("alpha_offset", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.c) {
            return Err(Error::config("c", "must lie in [0, 1)"));
        }
        if let EpsSchedule::Geometric { ratio } = self.eps_schedule {
            if !(ratio > 0.0 && ratio < 1.0) {
                return Err(Error::config("eps_schedule", "geometric ratio must lie in (0, 1)"));
            }
        }
        for (v, name) in [
            (self.max_iters, "max_iters"),
            (self.inner_cap, "inner_cap"),
            (self.outer_cap, "outer_cap"),
            (self.pg_cap, "pg_cap"),
            (self.oscillation_window, "oscillation_window"),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be at least 1"));
            }
        }
        if !(self.armijo.c1 > 0.0 && self.armijo.c1 < 1.0) {
            return Err(Error::config("armijo.c1", "must lie in (0, 1)"));
        }
        if !(self.armijo.shrink > 0.0 && self.armijo.shrink < 1.0) {
            return Err(Error::config("armijo.shrink", "must lie in (0, 1)"));
        }
        if !(self.cssm.penalty_growth >= 1.0) {
            return Err(Error::config("cssm.penalty_growth", "must be at least 1"));
        }
        pos(self.cssm.penalty_init, "cssm.penalty_init")?;
        if !(self.cssm.violation_decrease > 0.0 && self.cssm.violation_decrease <= 1.0) {
            return Err(Error::config("cssm.violation_decrease", "must lie in (0, 1]"));
        }
        pos(self.cssm.step, "cssm.step")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Converged,
    IterationCap,
    Oscillating,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::IterationCap => "iteration-cap",
            Status::Oscillating => "oscillating",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    /// Sum of per-link secrecy rates clipped at zero.
    pub secrecy_sum_rate: f64,
    pub sum_rate: f64,
    /// Sum over links of the strongest eavesdropper's rate.
    pub eves_rate: f64,
    /// Information power over the total budget.
    pub power_info: f64,
    /// Artificial-noise power over the total budget.
    pub power_an: f64,
    pub vi_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub algorithm: String,
    pub status: Status,
    pub iterations: usize,
    pub trace: Vec<TracePoint>,
    /// Unclipped final secrecy rates.
    pub link_secrecy: Vec<f64>,
    /// Final `(info, AN)` power per link.
    pub link_power: Vec<(f64, f64)>,
    pub final_profile: StrategyProfile,
    /// Step scale actually used after any decimation.
    pub gamma0_used: f64,
    /// Per round and link, the AO objective after each aux update (`alg1` only).
    #[serde(skip)]
    pub ao_traces: Vec<Vec<Vec<f64>>>,
}

impl RunReport {
    pub fn last(&self) -> Option<&TracePoint> {
        self.trace.last()
    }

    pub fn final_secrecy_sum(&self) -> f64 {
        self.link_secrecy.iter().map(|r| r.max(0.0)).sum()
    }
}

pub fn initial_profile(channels: &ChannelSet, powers: &[f64], init: InitMode) -> StrategyProfile {
    match init {
        InitMode::ScaledIdentity => StrategyProfile::scaled_identity(channels, powers),
        InitMode::Random { seed } => random_profile(channels, powers, seed),
    }
}

pub fn random_profile(channels: &ChannelSet, powers: &[f64], seed: u64) -> StrategyProfile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut psd = |n: usize| {
        let a = crate::linalg::CMat::from_fn(n, n, |_, _| {
            num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        HermitianMatrix::hermitized(&a * a.adjoint())
    };
    let links = (0..channels.links())
        .map(|q| {
            let n = channels.n_tx(q);
            let s = psd(n);
            let w = psd(n);
            (s, w)
        })
        .collect::<Vec<_>>();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    StrategyProfile {
        links: links
            .into_iter()
            .enumerate()
            .map(|(q, (s, w))| {
                let t = s.trace() + w.trace();
                let f = if t > 0.0 {
                    rng.random_range(0.1..0.9) * powers[q] / t
                } else {
                    0.0
                };
                LinkStrategy {
                    sigma: s.scale(f),
                    w: w.scale(f),
                }
            })
            .collect(),
    }
}

/// One projected ascent step `Proj(x + step * (grad + extra))` on link `q`.
pub fn pg_step(
    link: &LinkStrategy,
    grad: (&HermitianMatrix, &HermitianMatrix),
    step: f64,
    extra: Option<(&HermitianMatrix, &HermitianMatrix)>,
    power: f64,
) -> Result<LinkStrategy> {
    let (mut ds, mut dw) = (grad.0.clone(), grad.1.clone());
    if let Some((es, ew)) = extra {
        ds = ds.add(es);
        dw = dw.add(ew);
    }
    let (sigma, w) = project_feasible(&link.sigma.axpy(step, &ds), &link.w.axpy(step, &dw), power)?;
    Ok(LinkStrategy { sigma, w })
}

/// Largest per-link relative change of secrecy rates.
pub fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| (b - a).abs() / a.abs().max(REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Secrecy rates below this (nats) are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-3;

pub(crate) fn trace_point(
    iteration: usize,
    profile: &StrategyProfile,
    channels: &ChannelSet,
    powers: &[f64],
    beta: f64,
) -> Result<(TracePoint, Vec<f64>)> {
    let rs = RateSummary::compute(profile, channels)?;
    let budget: f64 = powers.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let info: f64 = profile.links.iter().map(|l| l.sigma.trace()).sum();
    let an: f64 = profile.links.iter().map(|l| l.w.trace()).sum();
    Ok((
        TracePoint {
            iteration,
            secrecy_sum_rate: rs.secrecy_sum_clipped(),
            sum_rate: rs.sum_rate(),
            eves_rate: rs.eves_rate(),
            power_info: info / budget,
            power_an: an / budget,
            vi_residual: vi_residual(profile, channels, powers, beta)?,
        },
        rs.secrecy(),
    ))
}

pub(crate) fn finish(
    algorithm: &str,
    status: Status,
    trace: Vec<TracePoint>,
    profile: StrategyProfile,
    channels: &ChannelSet,
    gamma0_used: f64,
) -> Result<RunReport> {
    let link_secrecy = RateSummary::compute(&profile, channels)?.secrecy();
    Ok(RunReport {
        algorithm: algorithm.to_string(),
        status,
        iterations: trace.len(),
        trace,
        link_secrecy,
        link_power: profile.links.iter().map(|l| (l.sigma.trace(), l.w.trace())).collect(),
        final_profile: profile,
        gamma0_used,
        ao_traces: Vec::new(),
    })
}

pub(crate) fn check_inputs(channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    channels.validate()?;
    crate::rates::GameConfig {
        beta: cfg.beta,
        powers: powers.to_vec(),
    }
    .validate(channels)
}

/// `true` once the recent window failed to improve on the best earlier
/// residual by at least one percent.
pub(crate) fn stalled(residuals: &[f64], window: usize) -> bool {
    let n = residuals.len();
    if n < 2 * window {
        return false;
    }
    let before = residuals[..n - window].iter().cloned().fold(f64::INFINITY, f64::min);
    let recent = residuals[n - window..].iter().cloned().fold(f64::INFINITY, f64::min);
    recent > 0.99 * before
}

/// Decimation trigger: residual grew tenfold over the first five steps.
pub(crate) fn diverging(initial: f64, residuals: &[f64]) -> bool {
    residuals.len() == 5 && residuals[4] > 10.0 * initial
}
