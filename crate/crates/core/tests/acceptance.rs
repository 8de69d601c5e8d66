//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Pass criterion numbers as arguments to run a subset.

mod common;

use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use rand::Rng;
use rayon::prelude::*;
use wiretap_core::cssm::{lagrangian_grads, lagrangian_value, CssmState};
use wiretap_core::harness::{self, run_algorithm, Algorithm, ExperimentSpec, NetworkSpec, RunOptions};
use wiretap_core::linalg::{min_eig_sym_part, project_feasible, RMat};
use wiretap_core::rates::{
    closed_form_aux_all, log_sum_exp, phi_e, phi_q, reformulated_objective, secrecy_rate, smooth_secrecy_rate,
    LinkTerms,
};
use wiretap_core::solvers::{random_profile, InitMode, RunReport, SolverConfig, Status};
use wiretap_core::vi::{
    compute_tau, compute_tau_cross, criterion_grad, f_map, grad_f, jacobian_blocks, Criterion, CrossTerms, VectorLayout,
};
use wiretap_core::{ChannelSet, HermitianMatrix, Snapshot, StrategyProfile};

const BETA: f64 = 5.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn extended() -> SolverConfig {
    SolverConfig {
        inner_cap: 500,
        outer_cap: 10,
        ..SolverConfig::default()
    }
}

fn solve(alg: Algorithm, ch: &ChannelSet, pw: &[f64], cfg: &SolverConfig, seed: u64) -> Vec<RunReport> {
    run_algorithm(alg, ch, pw, cfg, seed).unwrap()
}

fn mean_secrecy(reports: &[RunReport]) -> f64 {
    reports.iter().map(|r| r.final_secrecy_sum()).sum::<f64>() / reports.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn with_link(
    p: &StrategyProfile,
    q: usize,
    sigma: Option<&HermitianMatrix>,
    w: Option<&HermitianMatrix>,
) -> StrategyProfile {
    let mut l = p.links[q].clone();
    if let Some(s) = sigma {
        l.sigma = s.clone();
    }
    if let Some(x) = w {
        l.w = x.clone();
    }
    p.with_link(q, l)
}

/// Objective whose gradient in `x_q` is the criterion gradient: the other
/// links' terms, with auxiliary matrices fixed.
fn criterion_value(
    kind: Criterion,
    q: usize,
    p: &StrategyProfile,
    aux: &wiretap_core::AuxProfile,
    ch: &ChannelSet,
) -> f64 {
    let cross = CrossTerms::new(p, aux, ch, BETA).unwrap();
    cross
        .ws
        .iter()
        .enumerate()
        .filter(|(r, _)| *r != q)
        .map(|(_, w)| match kind {
            Criterion::SumRate => w.phi_q,
            Criterion::EvesRates => -log_sum_exp(&w.phi_e, BETA),
            Criterion::SecrecySum => w.objective(),
        })
        .sum()
}

fn criterion_1() -> Outcome {
    const H: f64 = 1e-3;
    let mut worst = [0.0f64; 3];
    let mut points = 0;
    for q_count in 1..=3 {
        for k in 1..=2 {
            for s in 0..20u64 {
                let seed = 1000 * q_count as u64 + 100 * k as u64 + s;
                let (ch, pw) = mixed_network(q_count, k, 3, 20.0, seed);
                let x = random_profile(&ch, &pw, seed);
                let aux = closed_form_aux_all(&random_profile(&ch, &pw, seed + 7), Snapshot::Current, &ch).unwrap();
                for q in 0..q_count {
                    let (gs, gw) = grad_f(q, &x, &aux, &ch, BETA).unwrap();
                    let l = &x.links[q];
                    let fs = fd_gradient(
                        |m| reformulated_objective(q, &with_link(&x, q, Some(m), None), &aux, &ch, BETA).unwrap(),
                        &l.sigma,
                        H,
                    );
                    let fw = fd_gradient(
                        |m| reformulated_objective(q, &with_link(&x, q, None, Some(m)), &aux, &ch, BETA).unwrap(),
                        &l.w,
                        H,
                    );
                    worst[0] = worst[0].max(rel_err(&gs, &fs)).max(rel_err(&gw, &fw));
                    for kind in [Criterion::SumRate, Criterion::EvesRates, Criterion::SecrecySum] {
                        let (cs, cw) = criterion_grad(kind, q, &x, &aux, &ch, BETA).unwrap();
                        let fs = fd_gradient(
                            |m| criterion_value(kind, q, &with_link(&x, q, Some(m), None), &aux, &ch),
                            &l.sigma,
                            H,
                        );
                        let fw = fd_gradient(
                            |m| criterion_value(kind, q, &with_link(&x, q, None, Some(m)), &aux, &ch),
                            &l.w,
                            H,
                        );
                        worst[1] = worst[1].max(rel_err(&cs, &fs)).max(rel_err(&cw, &fw));
                    }
                }
                let mut state = CssmState::new(x.clone(), &ch, &pw, &SolverConfig::default()).unwrap();
                state.aux = aux.clone();
                state.penalty = 10.0;
                let mut r = rng(seed);
                state.multipliers = (0..q_count).map(|_| r.random_range(0.0..5.0)).collect();
                let grads = lagrangian_grads(&state, &ch, BETA).unwrap();
                for (q, (gs, gw)) in grads.iter().enumerate() {
                    let l = &x.links[q];
                    let value = |p: StrategyProfile| {
                        let mut st = state.clone();
                        st.profile = p;
                        lagrangian_value(&st, &ch, BETA).unwrap()
                    };
                    let fs = fd_gradient(|m| value(with_link(&x, q, Some(m), None)), &l.sigma, H);
                    let fw = fd_gradient(|m| value(with_link(&x, q, None, Some(m))), &l.w, H);
                    worst[2] = worst[2].max(rel_err(gs, &fs)).max(rel_err(gw, &fw));
                }
                points += 1;
            }
        }
    }
    let pass = worst.iter().all(|&e| e <= 1e-5);
    outcome(
        pass,
        format!(
            "{points} points; max relative error grad_f {:.1e}, criterion_grad {:.1e}, lagrangian_grads {:.1e} (bound 1e-5)",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn criterion_2() -> Outcome {
    const H: f64 = 1e-5;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let (ch, pw) = network(2, 2, (3, 2, 2), 20.0, 20.0, 200 + seed);
        let x = random_profile(&ch, &pw, seed);
        let aux = closed_form_aux_all(&x, Snapshot::Current, &ch).unwrap();
        let j = jacobian_blocks(&x, &aux, &ch, BETA).unwrap().full;
        let layout = VectorLayout::for_channels(&ch);
        let v = layout.vectorize(&x);
        for c in 0..v.len() {
            let at = |t: f64| {
                let mut y = v.clone();
                y[c] += t;
                f_map(&layout.devectorize(&y), &aux, &ch, BETA).unwrap()
            };
            let (fp, fm) = (at(H), at(-H));
            for r in 0..v.len() {
                let fd = (fp[r] - fm[r]) / (2.0 * H);
                worst = worst.max((fd - j[(r, c)]).abs());
            }
        }
    }
    outcome(
        worst <= 1e-4,
        format!("10 instances; max entry error {worst:.2e} (bound 1e-4)"),
    )
}

fn criterion_3() -> Outcome {
    let bound = 5f64.ln() / BETA;
    let (mut violations, mut lo, mut hi) = (0, f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..1000u64 {
        let (ch, pw) = network(2, 5, (2, 2, 2), 40.0, 20.0, 3000 + i / 50);
        let x = random_profile(&ch, &pw, i);
        for q in 0..2 {
            let gap = secrecy_rate(q, &x, &ch).unwrap() - smooth_secrecy_rate(q, &x, &ch, BETA).unwrap();
            lo = lo.min(gap);
            hi = hi.max(gap);
            if !(gap >= -1e-12 && gap <= bound + 1e-12) {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("1000 profiles; gap range [{lo:.3e}, {hi:.4}] vs [0, ln5/5 = {bound:.4}]; {violations} violations (1e-12 rounding slack)"),
    )
}

fn criterion_4() -> Outcome {
    let mut worst = 0.0f64;
    let mut r = rng(4);
    for i in 0..50 {
        let s = random_herm(&mut r, 3, 2.0);
        let w = random_herm(&mut r, 3, 2.0);
        let p = if i % 5 == 0 { 100.0 } else { r.random_range(0.1..4.0) };
        let (ps, pw) = project_feasible(&s, &w, p).unwrap();
        let (os, ow) = dykstra_projection(s.as_matrix(), w.as_matrix(), p, 200_000);
        let err = ((ps.as_matrix() - os).norm().powi(2) + (pw.as_matrix() - ow).norm().powi(2)).sqrt();
        worst = worst.max(err);
    }
    outcome(
        worst <= 1e-6,
        format!("50 pairs; max Frobenius distance to Dykstra oracle {worst:.2e} (bound 1e-6)"),
    )
}

fn criterion_5() -> Outcome {
    let (mut obj_gap, mut tight) = (0.0f64, 0.0f64);
    let mut below = 0;
    for i in 0..20u64 {
        let (ch, pw) = mixed_network(2, 2, 3, 30.0, 500 + i);
        let x = random_profile(&ch, &pw, i);
        let mut r = rng(i);
        for q in 0..2 {
            let t = LinkTerms::new(q, &x, &ch).unwrap();
            let closed = t.optimal_aux();
            let n = t.m.dim();
            let (s0, _) = maximize_logdet_trace(&t.m, &random_pd(&mut r, n, 0.05), 20_000);
            let exact = phi_q(&t, &closed.s0).unwrap();
            let numeric = phi_q(&t, &s0).unwrap();
            obj_gap = obj_gap.max((exact - numeric).abs());
            below += usize::from(numeric > exact + 1e-12);
            tight = tight.max((exact - t.info_rate().unwrap()).abs());
            let eves = t.eve_rates().unwrap();
            for k in 0..2 {
                let n = t.b[k].dim();
                let (sk, _) = maximize_logdet_trace(&t.b[k], &random_pd(&mut r, n, 0.05), 20_000);
                let exact = phi_e(&t, k, &closed.s_eve[k]).unwrap();
                let numeric = phi_e(&t, k, &sk).unwrap();
                obj_gap = obj_gap.max((exact - numeric).abs());
                below += usize::from(numeric < exact - 1e-12);
                tight = tight.max((exact - eves[k]).abs());
            }
        }
    }
    outcome(
        obj_gap <= 1e-6 && tight <= 1e-10 && below == 0,
        format!(
            "20 instances; max objective gap to numerical optimum {obj_gap:.2e} (bound 1e-6), {below} numerical optima beat the closed form; max |phi - rate| {tight:.2e} (bound 1e-10)"
        ),
    )
}

fn criterion_6() -> Outcome {
    let (mut worst_full, mut worst_cross) = (f64::INFINITY, f64::INFINITY);
    for i in 0..20u64 {
        let (ch, pw) = network(4, 2, (3, 2, 2), 20.0, 30.0, 600 + i);
        let x = random_profile(&ch, &pw, i);
        let aux = closed_form_aux_all(&x, Snapshot::Current, &ch).unwrap();
        let blocks = jacobian_blocks(&x, &aux, &ch, BETA).unwrap();
        let shifted = |tau: Vec<f64>| min_eig_sym_part(&(&blocks.full + RMat::from_diagonal(&tau.into())));
        worst_full = worst_full.min(shifted(compute_tau(&blocks.full)));
        worst_cross = worst_cross.min(shifted(compute_tau_cross(&blocks)));
    }
    outcome(
        worst_full >= -1e-8 && worst_cross >= -1e-8,
        format!("20 dense instances; min eigenvalue {worst_full:.2e} full-row tau, {worst_cross:.2e} cross-link tau (bound -1e-8)"),
    )
}

struct Fig4a {
    runs: Vec<[RunReport; 3]>,
}

fn fig4a() -> &'static Fig4a {
    static CELL: OnceLock<Fig4a> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = SolverConfig::default();
        let runs = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let (ch, pw) = network(3, 2, (3, 2, 2), 100.0, 20.0, seed);
                [Algorithm::Alg1, Algorithm::Alg2, Algorithm::Alg3Sumrate]
                    .map(|a| solve(a, &ch, &pw, &cfg, seed).remove(0))
            })
            .collect();
        Fig4a { runs }
    })
}

struct Fig4b {
    alg2: Vec<RunReport>,
    alg3: Vec<[RunReport; 3]>,
}

fn fig4b() -> &'static Fig4b {
    static CELL: OnceLock<Fig4b> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = extended();
        let runs: Vec<(RunReport, [RunReport; 3])> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let (ch, pw) = network(6, 4, (3, 2, 2), 20.0, 30.0, seed);
                let a2 = solve(Algorithm::Alg2, &ch, &pw, &cfg, seed).remove(0);
                let a3 = [Algorithm::Alg3Sumrate, Algorithm::Alg3Eves, Algorithm::Alg3Secrecy]
                    .map(|a| solve(a, &ch, &pw, &cfg, seed).remove(0));
                (a2, a3)
            })
            .collect();
        let (alg2, alg3) = runs.into_iter().unzip();
        Fig4b { alg2, alg3 }
    })
}

fn criterion_7() -> Outcome {
    let tol = SolverConfig::default().tol;
    let a = fig4a();
    let b = fig4b();
    let mut converged = 0;
    let mut worst = 0.0f64;
    let checked = a
        .runs
        .iter()
        .flat_map(|r| r[1..].iter())
        .chain(b.alg2.iter())
        .chain(b.alg3.iter().flatten());
    for r in checked.filter(|r| r.status == Status::Converged) {
        converged += 1;
        worst = worst.max(r.last().unwrap().vi_residual);
    }
    let mut ao_steps = 0;
    let mut ao_drops = 0;
    let mut worst_drop = 0.0f64;
    for r in a.runs.iter().map(|r| &r[0]) {
        for round in &r.ao_traces {
            for hist in round {
                for w in hist.windows(2) {
                    ao_steps += 1;
                    let drop = w[0] - w[1];
                    if drop > 1e-12 * w[0].abs().max(1.0) {
                        ao_drops += 1;
                        worst_drop = worst_drop.max(drop);
                    }
                }
            }
        }
    }
    outcome(
        worst <= 10.0 * tol && ao_drops == 0,
        format!(
            "{converged} converged Alg 2/3 runs, max final residual {worst:.2e} (bound {:.0e}); {ao_drops} decreases in {ao_steps} AO steps (largest {worst_drop:.1e})",
            10.0 * tol
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut agree = 0;
    let mut spread = Vec::new();
    for r in &fig4a().runs {
        let v: Vec<f64> = r.iter().map(|x| x.final_secrecy_sum()).collect();
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let rel = if hi > 0.0 { (hi - lo) / hi } else { 0.0 };
        spread.push(rel);
        agree += usize::from(rel <= 0.05);
    }
    let worst = spread.iter().cloned().fold(0.0, f64::max);
    outcome(
        agree >= 16,
        format!("Alg 1/2/3(SumRate) within 5% on {agree}/20 seeds (need 16); worst relative spread {worst:.3}"),
    )
}

fn criterion_9() -> Outcome {
    let b = fig4b();
    let osc = b.alg2.iter().filter(|r| r.status == Status::Oscillating).count();
    let conv: Vec<usize> = (0..3)
        .map(|v| b.alg3.iter().filter(|r| r[v].status == Status::Converged).count())
        .collect();
    let m2 = mean(&b.alg2.iter().map(|r| r.final_secrecy_sum()).collect::<Vec<_>>());
    let m3: Vec<f64> = (0..3)
        .map(|v| mean(&b.alg3.iter().map(|r| r[v].final_secrecy_sum()).collect::<Vec<_>>()))
        .collect();
    let pass = osc >= 10 && conv.iter().all(|&c| c >= 16) && m3[0] > m2 && m3[2] > m2;
    outcome(
        pass,
        format!(
            "Alg 2 oscillating {osc}/20 (need 10); Alg 3 converged sumrate {}/20, eves {}/20, secrecy {}/20 (need 16 each); mean secrecy sum-rate Alg 2 {m2:.3}, Alg 3 sumrate {:.3}, eves {:.3}, secrecy {:.3}",
            conv[0], conv[1], conv[2], m3[0], m3[1], m3[2]
        ),
    )
}

fn criterion_10() -> Outcome {
    let cfg = extended();
    let algs = [
        Algorithm::Cssm,
        Algorithm::Alg3Sumrate,
        Algorithm::Alg3Eves,
        Algorithm::Alg3Secrecy,
    ];
    let mut pass = true;
    let mut lines = Vec::new();
    for q in [4usize, 6, 8] {
        let per_seed: Vec<[f64; 4]> = (0..20u64)
            .into_par_iter()
            .map(|seed| {
                let (ch, pw) = network(q, 5, (5, 2, 2), 30.0, 40.0, 10_000 + seed);
                algs.map(|a| mean_secrecy(&solve(a, &ch, &pw, &cfg, seed)))
            })
            .collect();
        let m: Vec<f64> = (0..4)
            .map(|i| mean(&per_seed.iter().map(|s| s[i]).collect::<Vec<_>>()))
            .collect();
        let (cssm, sum, eves, sec) = (m[0], m[1], m[2], m[3]);
        let ordered = cssm >= sec && cssm >= sum;
        let eves_lowest = eves < sum && eves < sec;
        let loss = 1.0 - sum.max(sec) / cssm;
        let ok = ordered && eves_lowest && (q != 8 || loss <= 0.35);
        pass &= ok;
        lines.push(format!(
            "Q={q}: CSSM {cssm:.3}, sumrate {sum:.3}, eves {eves:.3}, secrecy {sec:.3}, best Alg 3 loss {:.1}%{}",
            100.0 * loss,
            if ok { "" } else { " [violated]" }
        ));
    }
    outcome(pass, lines.join("; "))
}

fn criterion_11() -> Outcome {
    let (ch, pw) = network(6, 7, (5, 2, 2), 30.0, 40.0, 1100);
    let finals: Vec<f64> = (0..30u64)
        .into_par_iter()
        .map(|i| {
            let cfg = SolverConfig {
                init: InitMode::Random { seed: i },
                criterion: Criterion::SecrecySum,
                ..extended()
            };
            wiretap_core::solvers::solve_alg3(&ch, &pw, &cfg)
                .unwrap()
                .final_secrecy_sum()
        })
        .collect();
    let hi = finals.iter().cloned().fold(f64::MIN, f64::max);
    let lo = finals.iter().cloned().fold(f64::MAX, f64::min);
    outcome(
        hi - lo <= 3.0,
        format!(
            "30 initializations; final secrecy sum-rate in [{lo:.3}, {hi:.3}], spread {:.3} nats (bound 3)",
            hi - lo
        ),
    )
}

fn criterion_12() -> Outcome {
    let spec = ExperimentSpec {
        network: NetworkSpec {
            links: 3,
            eves: 2,
            ..NetworkSpec::default()
        },
        solver: SolverConfig {
            max_iters: 100,
            inner_cap: 20,
            ..SolverConfig::default()
        },
        algorithms: Algorithm::ALL.to_vec(),
        topologies: 2,
        realizations: 2,
        base_seed: 12,
        ..ExperimentSpec::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let mut dirs = Vec::new();
    for (name, jobs) in [("serial", Some(1)), ("parallel", Some(4)), ("repeat", None)] {
        let out = tmp.path().join(name);
        harness::run_experiment(
            &spec,
            &RunOptions {
                out: out.clone(),
                jobs,
                trace: true,
            },
        )
        .unwrap();
        dirs.push(out);
    }
    let files = |d: &std::path::Path| {
        let mut v: Vec<_> = walk(d)
            .into_iter()
            .map(|p| p.strip_prefix(d).unwrap().to_path_buf())
            .collect();
        v.sort();
        v
    };
    let names = files(&dirs[0]);
    let mut mismatched = Vec::new();
    for d in &dirs[1..] {
        if files(d) != names {
            mismatched.push(format!("{} lists different files", d.display()));
            continue;
        }
        for n in &names {
            if std::fs::read(dirs[0].join(n)).unwrap() != std::fs::read(d.join(n)).unwrap() {
                mismatched.push(n.display().to_string());
            }
        }
    }
    outcome(
        mismatched.is_empty(),
        format!(
            "{} files compared across serial, 4-thread and repeated runs; {} mismatches{}",
            names.len(),
            mismatched.len(),
            if mismatched.is_empty() {
                String::new()
            } else {
                format!(": {}", mismatched.join(", "))
            }
        ),
    )
}

fn walk(d: &std::path::Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(d).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 12] = [
        (1, "gradient correctness", criterion_1),
        (2, "jacobian correctness", criterion_2),
        (3, "smoothing sandwich bound", criterion_3),
        (4, "projection oracle", criterion_4),
        (5, "closed-form auxiliary matrices", criterion_5),
        (6, "monotonization shift", criterion_6),
        (7, "fixed-point certification", criterion_7),
        (8, "unique-equilibrium agreement", criterion_8),
        (9, "high-interference convergence", criterion_9),
        (10, "centralized vs distributed ordering", criterion_10),
        (11, "initial-point sensitivity", criterion_11),
        (12, "determinism", criterion_12),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (n, name, f) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n:>2} {verdict} {name}: {} [{:.1} s]",
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
