//! Best response: every round, each link maximizes its own smoothed secrecy
//! rate against a frozen snapshot of the others by alternating between the
//! auxiliary matrices (closed form) and its covariances (projected gradient
//! with Armijo backtracking).

use crate::error::Result;
use crate::linalg::{inner, project_feasible};
use crate::network::ChannelSet;
use crate::rates::{External, GradientWorkspace, LinkAux, LinkStrategy, LinkTerms, StrategyProfile};

use super::{
    check_inputs, finish, initial_profile, relative_change, trace_point, RunReport, SolverConfig, Status, REL_FLOOR,
};

fn evaluate(
    q: usize,
    ext: &External,
    own: &LinkStrategy,
    aux: &LinkAux,
    channels: &ChannelSet,
    beta: f64,
) -> Result<GradientWorkspace> {
    GradientWorkspace::new(LinkTerms::from_external(q, ext, own, channels)?, aux, beta)
}

/// Alternating maximization for one link. Returns the new strategy and the
/// objective after each auxiliary update, which never decreases.
pub fn best_response(
    q: usize,
    snapshot: &StrategyProfile,
    channels: &ChannelSet,
    power: f64,
    cfg: &SolverConfig,
) -> Result<(LinkStrategy, Vec<f64>)> {
    let ext = External::new(q, snapshot, channels);
    let mut own = snapshot.links[q].clone();
    let terms = LinkTerms::from_external(q, &ext, &own, channels)?;
    let mut aux = terms.optimal_aux();
    let mut ws = GradientWorkspace::new(terms, &aux, cfg.beta)?;
    let mut f = ws.objective();
    let mut history = vec![f];
    for _ in 0..cfg.inner_cap {
        for _ in 0..cfg.pg_cap {
            let (gs, gw) = ws.gradient(&aux, channels);
            let (ts, tw) = project_feasible(&own.sigma.axpy(cfg.gamma0, &gs), &own.w.axpy(cfg.gamma0, &gw), power)?;
            let ds = ts.sub(&own.sigma);
            let dw = tw.sub(&own.w);
            let slope = inner(gs.as_matrix(), ds.as_matrix()) + inner(gw.as_matrix(), dw.as_matrix());
            if !(slope > 0.0) {
                break;
            }
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..cfg.armijo.max_backtracks {
                let cand = LinkStrategy {
                    sigma: own.sigma.axpy(t, &ds),
                    w: own.w.axpy(t, &dw),
                };
                let cws = evaluate(q, &ext, &cand, &aux, channels, cfg.beta)?;
                if cws.objective() >= f + cfg.armijo.c1 * t * slope {
                    accepted = Some((cand, cws));
                    break;
                }
                t *= cfg.armijo.shrink;
            }
            let Some((cand, cws)) = accepted else { break };
            let gain = cws.objective() - f;
            own = cand;
            f = cws.objective();
            ws = cws;
            if gain <= 1e-2 * cfg.tol * f.abs().max(REL_FLOOR) {
                break;
            }
        }
        aux = ws.terms.optimal_aux();
        ws = GradientWorkspace::new(ws.terms, &aux, cfg.beta)?;
        let prev = f;
        f = ws.objective();
        history.push(f);
        if (f - prev).abs() <= cfg.tol * prev.abs().max(REL_FLOOR) {
            break;
        }
    }
    Ok((own, history))
}

pub fn solve_alg1(channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<RunReport> {
    check_inputs(channels, powers, cfg)?;
    let mut x = initial_profile(channels, powers, cfg.init);
    let (_, mut secrecy) = trace_point(0, &x, channels, powers, cfg.beta)?;
    let mut trace = Vec::new();
    let mut ao_traces = Vec::new();
    let mut status = Status::IterationCap;
    for round in 1..=cfg.max_iters {
        let mut links = Vec::with_capacity(x.len());
        let mut round_hist = Vec::with_capacity(x.len());
        for q in 0..x.len() {
            let (l, h) = best_response(q, &x, channels, powers[q], cfg)?;
            links.push(l);
            round_hist.push(h);
        }
        x = StrategyProfile { links };
        ao_traces.push(round_hist);
        let (tp, s) = trace_point(round, &x, channels, powers, cfg.beta)?;
        trace.push(tp);
        let change = relative_change(&secrecy, &s);
        secrecy = s;
        if change < cfg.tol {
            status = Status::Converged;
            break;
        }
    }
    let mut report = finish("alg1", status, trace, x, channels, cfg.gamma0)?;
    report.ao_traces = ao_traces;
    Ok(report)
}
