//! Gradient response: all links refresh their auxiliary matrices against the
//! previous iterate and take one projected-gradient step, synchronously.

use crate::error::Result;
use crate::network::ChannelSet;
use crate::rates::{closed_form_aux, AuxProfile, Snapshot, StrategyProfile};
use crate::vi::grad_f;

use super::{
    check_inputs, diverging, finish, initial_profile, pg_step, relative_change, stalled, trace_point, RunReport,
    SolverConfig, Status,
};

/// One synchronous sweep with step `gamma`.
pub fn sweep(
    x: &StrategyProfile,
    prev: &StrategyProfile,
    channels: &ChannelSet,
    powers: &[f64],
    gamma: f64,
    beta: f64,
) -> Result<StrategyProfile> {
    let aux = AuxProfile {
        links: (0..x.len())
            .map(|q| closed_form_aux(q, x, Snapshot::Frozen(prev), channels))
            .collect::<Result<_>>()?,
    };
    let links = (0..x.len())
        .map(|q| {
            let (gs, gw) = grad_f(q, x, &aux, channels, beta)?;
            pg_step(&x.links[q], (&gs, &gw), gamma, None, powers[q])
        })
        .collect::<Result<_>>()?;
    Ok(StrategyProfile { links })
}

pub fn solve_alg2(channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<RunReport> {
    check_inputs(channels, powers, cfg)?;
    let x0 = initial_profile(channels, powers, cfg.init);
    let (tp0, s0) = trace_point(0, &x0, channels, powers, cfg.beta)?;
    let mut gamma = cfg.gamma0;
    let mut decimations = 0;
    'restart: loop {
        let mut x = x0.clone();
        let mut prev = x0.clone();
        let mut secrecy = s0.clone();
        let mut trace = Vec::new();
        let mut residuals = Vec::new();
        let mut status = Status::IterationCap;
        for i in 1..=cfg.max_iters {
            let next = sweep(&x, &prev, channels, powers, gamma, cfg.beta)?;
            prev = std::mem::replace(&mut x, next);
            let (tp, s) = trace_point(i, &x, channels, powers, cfg.beta)?;
            residuals.push(tp.vi_residual);
            trace.push(tp);
            if decimations < cfg.max_decimations && diverging(tp0.vi_residual, &residuals) {
                gamma /= 10.0;
                decimations += 1;
                continue 'restart;
            }
            let change = relative_change(&secrecy, &s);
            secrecy = s;
            if change < cfg.tol {
                status = Status::Converged;
                break;
            }
            if stalled(&residuals, cfg.oscillation_window) {
                status = Status::Oscillating;
                break;
            }
        }
        return finish("alg2", status, trace, x, channels, gamma);
    }
}
