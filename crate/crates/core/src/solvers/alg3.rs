//! Equilibrium selection: gradient response with a vanishing criterion term
//! `eps_j * grad Phi`, a proximal pull `tau (x - y)` towards the previous
//! stage's limit, and a damping term `c (x_i - x_{i-1})`, under a
//! diminishing step `gamma0 (i + alpha)^-omega`.

use crate::error::Result;
use crate::linalg::HermitianMatrix;
use crate::network::ChannelSet;
use crate::rates::{closed_form_aux, closed_form_aux_all, AuxProfile, LinkStrategy, Snapshot, StrategyProfile};
use crate::vi::{
    compute_tau, compute_tau_cross, coords_to_herm, herm_to_coords, jacobian_blocks, CrossTerms, VectorLayout,
};

use super::{
    check_inputs, diverging, finish, initial_profile, pg_step, relative_change, trace_point, RunReport, SolverConfig,
    Status, TauPolicy,
};

/// Elementwise product of a coordinate-space diagonal with a Hermitian matrix.
fn scale_coords(tau: &[f64], h: &HermitianMatrix) -> HermitianMatrix {
    let mut v = Vec::with_capacity(tau.len());
    herm_to_coords(h, &mut v);
    for (x, t) in v.iter_mut().zip(tau) {
        *x *= t;
    }
    coords_to_herm(h.dim(), &v)
}

fn stage_tau(x: &StrategyProfile, channels: &ChannelSet, beta: f64, policy: TauPolicy) -> Result<Vec<f64>> {
    let m = VectorLayout::for_channels(channels).len();
    match policy {
        TauPolicy::Zero => Ok(vec![0.0; m]),
        TauPolicy::Gerschgorin => {
            let aux = closed_form_aux_all(x, Snapshot::Current, channels)?;
            Ok(compute_tau(&jacobian_blocks(x, &aux, channels, beta)?.full))
        }
        TauPolicy::CrossGerschgorin => {
            let aux = closed_form_aux_all(x, Snapshot::Current, channels)?;
            Ok(compute_tau_cross(&jacobian_blocks(x, &aux, channels, beta)?))
        }
    }
}

struct Stage<'a> {
    channels: &'a ChannelSet,
    powers: &'a [f64],
    cfg: &'a SolverConfig,
    layout: VectorLayout,
    tau: Vec<f64>,
    eps: f64,
    anchor: &'a StrategyProfile,
}

impl Stage<'_> {
    fn step(&self, x: &StrategyProfile, prev: &StrategyProfile, gamma: f64) -> Result<StrategyProfile> {
        let ch = self.channels;
        let aux = AuxProfile {
            links: (0..x.len())
                .map(|q| closed_form_aux(q, x, Snapshot::Frozen(prev), ch))
                .collect::<Result<_>>()?,
        };
        let cross = CrossTerms::new(x, &aux, ch, self.cfg.beta)?;
        let tau_active = self.tau.iter().any(|&t| t != 0.0);
        let links = (0..x.len())
            .map(|q| {
                let l = &x.links[q];
                let (gs, gw) = cross.ws[q].gradient(&aux.links[q], ch);
                let n = l.sigma.dim();
                let mut extra: Option<(HermitianMatrix, HermitianMatrix)> = None;
                let mut add = |s: HermitianMatrix, w: HermitianMatrix| {
                    extra = Some(match extra.take() {
                        None => (s, w),
                        Some((a, b)) => (a.add(&s), b.add(&w)),
                    });
                };
                if self.eps != 0.0 {
                    let g = cross.criterion_grad(self.cfg.criterion, q, &aux, ch).scale(self.eps);
                    add(g.clone(), g);
                }
                if tau_active {
                    let r = self.layout.range(q);
                    let (ts, tw) = self.tau[r].split_at(n * n);
                    let a = &self.anchor.links[q];
                    add(
                        scale_coords(ts, &l.sigma.sub(&a.sigma)).scale(-1.0),
                        scale_coords(tw, &l.w.sub(&a.w)).scale(-1.0),
                    );
                }
                if self.cfg.c != 0.0 {
                    let p = &prev.links[q];
                    let k = -self.cfg.c / gamma;
                    add(l.sigma.sub(&p.sigma).scale(k), l.w.sub(&p.w).scale(k));
                }
                let extra_ref = extra.as_ref().map(|(a, b)| (a, b));
                pg_step(l, (&gs, &gw), gamma, extra_ref, self.powers[q])
            })
            .collect::<Result<Vec<LinkStrategy>>>()?;
        Ok(StrategyProfile { links })
    }
}

pub fn solve_alg3(channels: &ChannelSet, powers: &[f64], cfg: &SolverConfig) -> Result<RunReport> {
    check_inputs(channels, powers, cfg)?;
    let x0 = initial_profile(channels, powers, cfg.init);
    let (tp0, s0) = trace_point(0, &x0, channels, powers, cfg.beta)?;
    let layout = VectorLayout::for_channels(channels);
    let mut gamma0 = cfg.gamma0;
    let mut decimations = 0;
    'restart: loop {
        let mut x = x0.clone();
        let mut anchor = x0.clone();
        let mut secrecy = s0.clone();
        let mut stage_secrecy = s0.clone();
        let mut trace = Vec::new();
        let mut iteration = 0;
        let mut inner_converged = false;
        for j in 1..=cfg.outer_cap {
            let stage = Stage {
                channels,
                powers,
                cfg,
                layout: layout.clone(),
                tau: stage_tau(&x, channels, cfg.beta, cfg.tau_policy)?,
                eps: cfg.eps_schedule.at(j),
                anchor: &anchor,
            };
            let mut prev = x.clone();
            let mut residuals = Vec::new();
            inner_converged = false;
            for i in 1..=cfg.inner_cap {
                let gamma = gamma0 * (i as f64 + cfg.alpha_offset).powf(-cfg.omega);
                let next = stage.step(&x, &prev, gamma)?;
                prev = std::mem::replace(&mut x, next);
                iteration += 1;
                let (tp, s) = trace_point(iteration, &x, channels, powers, cfg.beta)?;
                residuals.push(tp.vi_residual);
                trace.push(tp);
                if j == 1 && decimations < cfg.max_decimations && diverging(tp0.vi_residual, &residuals) {
                    gamma0 /= 10.0;
                    decimations += 1;
                    continue 'restart;
                }
                let change = relative_change(&secrecy, &s);
                secrecy = s;
                if change < cfg.tol {
                    inner_converged = true;
                    break;
                }
            }
            let stage_change = relative_change(&stage_secrecy, &secrecy);
            stage_secrecy = secrecy.clone();
            anchor = x.clone();
            if j > 1 && inner_converged && stage_change < cfg.tol {
                break;
            }
        }
        let status = if inner_converged {
            Status::Converged
        } else {
            Status::IterationCap
        };
        return finish("alg3", status, trace, x, channels, gamma0);
    }
}
