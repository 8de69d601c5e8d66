//! Centralized secrecy sum-rate maximization by an augmented Lagrangian over
//! the power constraints, with the PSD cone handled by projection.
//!
//! Constraints are measured relative to the budget, `c_q = (tr(sigma_q + w_q) - P_q) / P_q`,
//! so that one penalty schedule fits every power level.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::{inner, project_feasible, psd_project, HermitianMatrix};
use crate::network::ChannelSet;
use crate::rates::{closed_form_aux_all, smooth_secrecy_rate, AuxProfile, LinkStrategy, Snapshot, StrategyProfile};
use crate::solvers::{
    check_inputs, finish, initial_profile, relative_change, trace_point, CssmConfig, InitMode, LagrangianForm,
    RunReport, SolverConfig, Status, REL_FLOOR,
};
use crate::vi::{Criterion, CrossTerms};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CssmState {
    pub profile: StrategyProfile,
    pub aux: AuxProfile,
    pub multipliers: Vec<f64>,
    pub penalty: f64,
    pub growth: f64,
    pub step: f64,
    pub powers: Vec<f64>,
    pub form: LagrangianForm,
}

fn budget(p: f64) -> f64 {
    if p > 0.0 {
        p
    } else {
        1.0
    }
}

impl CssmState {
    pub fn new(profile: StrategyProfile, channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<Self> {
        let aux = closed_form_aux_all(&profile, Snapshot::Current, channels)?;
        Ok(Self {
            multipliers: vec![0.0; profile.len()],
            profile,
            aux,
            penalty: cfg.cssm.penalty_init,
            growth: cfg.cssm.penalty_growth,
            step: cfg.cssm.step,
            powers: powers.to_vec(),
            form: cfg.cssm.form,
        })
    }

    /// Relative constraint values `c_q`.
    pub fn constraints(&self) -> Vec<f64> {
        constraints(&self.profile, &self.powers)
    }

    fn with_profile(&self, profile: StrategyProfile) -> Self {
        Self {
            profile,
            ..self.clone()
        }
    }
}

fn constraints(profile: &StrategyProfile, powers: &[f64]) -> Vec<f64> {
    profile
        .links
        .iter()
        .zip(powers)
        .map(|(l, &p)| (l.total_power() - p) / budget(p))
        .collect()
}

fn penalty_term(state: &CssmState) -> f64 {
    let p = state.penalty;
    let sign = match state.form {
        LagrangianForm::Printed => 1.0,
        LagrangianForm::Conventional => -1.0,
    };
    state
        .constraints()
        .iter()
        .zip(&state.multipliers)
        .map(|(c, a)| (a + p * c).max(0.0).powi(2) + sign * a * a)
        .sum::<f64>()
        / (2.0 * p)
}

/// `-sum_q fbar_q + penalty`, auxiliary matrices held at `state.aux`.
pub fn lagrangian_value(state: &CssmState, channels: &ChannelSet, beta: f64) -> Result<f64> {
    let cross = CrossTerms::new(&state.profile, &state.aux, channels, beta)?;
    Ok(-cross.ws.iter().map(|w| w.objective()).sum::<f64>() + penalty_term(state))
}

/// Per-link `(dL/dsigma_q, dL/dw_q)`.
pub fn lagrangian_grads(
    state: &CssmState,
    channels: &ChannelSet,
    beta: f64,
) -> Result<Vec<(HermitianMatrix, HermitianMatrix)>> {
    let cross = CrossTerms::new(&state.profile, &state.aux, channels, beta)?;
    Ok(grads_from(&cross, state, channels))
}

fn grads_from(cross: &CrossTerms, state: &CssmState, channels: &ChannelSet) -> Vec<(HermitianMatrix, HermitianMatrix)> {
    let c = state.constraints();
    (0..state.profile.len())
        .map(|q| {
            let (gs, gw) = cross.ws[q].gradient(&state.aux.links[q], channels);
            let x = cross.criterion_grad(Criterion::SecrecySum, q, &state.aux, channels);
            let pen = (state.multipliers[q] + state.penalty * c[q]).max(0.0) / budget(state.powers[q]);
            let n = gs.dim();
            let pen = HermitianMatrix::scaled_identity(n, pen);
            (pen.sub(&gs.add(&x)), pen.sub(&gw.add(&x)))
        })
        .collect()
}

fn psd_step(profile: &StrategyProfile, grads: &[(HermitianMatrix, HermitianMatrix)], s: f64) -> StrategyProfile {
    StrategyProfile {
        links: profile
            .links
            .iter()
            .zip(grads)
            .map(|(l, (gs, gw))| LinkStrategy {
                sigma: psd_project(&l.sigma.axpy(-s, gs)),
                w: psd_project(&l.w.axpy(-s, gw)),
            })
            .collect(),
    }
}

/// Projected Armijo descent on `L` with the auxiliary matrices and
/// multipliers fixed. Returns the accepted Lagrangian values; each is
/// strictly below its predecessor.
pub fn minimize_lagrangian(state: &mut CssmState, channels: &ChannelSet, cfg: &SolverConfig) -> Result<Vec<f64>> {
    let beta = cfg.beta;
    let mut cross = CrossTerms::new(&state.profile, &state.aux, channels, beta)?;
    let mut value = -cross.ws.iter().map(|w| w.objective()).sum::<f64>() + penalty_term(state);
    let mut history = vec![value];
    for _ in 0..cfg.cssm.inner_cap {
        let grads = grads_from(&cross, state, channels);
        let target = psd_step(&state.profile, &grads, state.step);
        let dirs: Vec<(HermitianMatrix, HermitianMatrix)> = target
            .links
            .iter()
            .zip(&state.profile.links)
            .map(|(t, l)| (t.sigma.sub(&l.sigma), t.w.sub(&l.w)))
            .collect();
        let slope: f64 = grads
            .iter()
            .zip(&dirs)
            .map(|((gs, gw), (ds, dw))| inner(gs.as_matrix(), ds.as_matrix()) + inner(gw.as_matrix(), dw.as_matrix()))
            .sum();
        if !(slope < 0.0) {
            break;
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..cfg.armijo.max_backtracks {
            let cand = StrategyProfile {
                links: state
                    .profile
                    .links
                    .iter()
                    .zip(&dirs)
                    .map(|(l, (ds, dw))| LinkStrategy {
                        sigma: l.sigma.axpy(t, ds),
                        w: l.w.axpy(t, dw),
                    })
                    .collect(),
            };
            let cstate = state.with_profile(cand);
            let ccross = CrossTerms::new(&cstate.profile, &cstate.aux, channels, beta)?;
            let cval = -ccross.ws.iter().map(|w| w.objective()).sum::<f64>() + penalty_term(&cstate);
            if cval <= value + cfg.armijo.c1 * t * slope && cval < value {
                accepted = Some((cstate, ccross, cval));
                break;
            }
            t *= cfg.armijo.shrink;
        }
        let Some((cstate, ccross, cval)) = accepted else {
            state.step *= cfg.armijo.shrink;
            break;
        };
        state.step = if t == 1.0 { state.step * 2.0 } else { state.step * t };
        let gain = value - cval;
        *state = CssmState {
            step: state.step,
            ..cstate
        };
        cross = ccross;
        value = cval;
        history.push(value);
        if gain <= 1e-2 * cfg.tol * value.abs().max(REL_FLOOR) {
            break;
        }
    }
    Ok(history)
}

/// Multiplier step `a <- max(a + p c, 0)`, then a penalty increase unless the
/// worst violation fell below `violation_decrease * reference`. Returns the
/// worst violation, or `None` once it is within `feas_tol`.
pub fn dual_update(state: &mut CssmState, reference: f64, cc: &CssmConfig) -> Option<f64> {
    let c = state.constraints();
    for (a, ci) in state.multipliers.iter_mut().zip(&c) {
        *a = (*a + state.penalty * ci).max(0.0);
    }
    let worst = c.iter().cloned().fold(0.0, f64::max);
    if worst <= cc.feas_tol {
        return None;
    }
    if worst > cc.violation_decrease * reference {
        state.penalty *= state.growth;
    }
    Some(worst)
}

fn project_all(profile: &StrategyProfile, powers: &[f64]) -> Result<StrategyProfile> {
    Ok(StrategyProfile {
        links: profile
            .links
            .iter()
            .zip(powers)
            .map(|(l, &p)| {
                let (sigma, w) = project_feasible(&l.sigma, &l.w, p)?;
                Ok(LinkStrategy { sigma, w })
            })
            .collect::<Result<_>>()?,
    })
}

fn smooth_sum(profile: &StrategyProfile, channels: &ChannelSet, beta: f64) -> Result<f64> {
    (0..profile.len())
        .map(|q| smooth_secrecy_rate(q, profile, channels, beta))
        .sum()
}

/// Returns the feasible outer iterate with the largest smoothed secrecy sum-rate.
pub fn solve_cssm(channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<RunReport> {
    check_inputs(channels, powers, cfg)?;
    let cc = &cfg.cssm;
    let x0 = initial_profile(channels, powers, cfg.init);
    let (_, mut secrecy) = trace_point(0, &x0, channels, powers, cfg.beta)?;
    let mut best = (f64::NEG_INFINITY, project_all(&x0, powers)?);
    let mut state = CssmState::new(x0, channels, powers, cfg)?;
    let mut trace = Vec::new();
    let mut status = Status::IterationCap;
    for outer in 1..=cc.outer_cap {
        state.aux = closed_form_aux_all(&state.profile, Snapshot::Current, channels)?;
        let mut violation = f64::INFINITY;
        for _ in 0..cc.middle_cap {
            minimize_lagrangian(&mut state, channels, cfg)?;
            match dual_update(&mut state, violation, cc) {
                Some(worst) => violation = worst,
                None => break,
            }
        }
        let feasible = project_all(&state.profile, powers)?;
        let (tp, s) = trace_point(outer, &feasible, channels, powers, cfg.beta)?;
        let value = smooth_sum(&feasible, channels, cfg.beta)?;
        if value > best.0 {
            best = (value, feasible.clone());
        }
        trace.push(tp);
        state.profile = feasible;
        let change = relative_change(&secrecy, &s);
        secrecy = s;
        if change < cfg.tol {
            status = Status::Converged;
            break;
        }
    }
    finish("cssm", status, trace, best.1, channels, cc.step)
}

/// `cfg.cssm.inits` runs from seeded random starting points.
pub fn solve_cssm_multi(
    channels: &ChannelSet,
    powers: &[f64],
    cfg: &SolverConfig,
    seed: u64,
) -> Result<Vec<RunReport>> {
    (0..cfg.cssm.inits.max(1))
        .map(|i| {
            let cfg = SolverConfig {
                init: InitMode::Random {
                    seed: seed.wrapping_add(i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
                },
                ..cfg.clone()
            };
            solve_cssm(channels, powers, &cfg)
        })
        .collect()
}
