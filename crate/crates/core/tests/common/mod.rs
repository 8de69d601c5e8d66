#![allow(dead_code)]

use nalgebra::SymmetricEigen;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wiretap_core::harness::trial_channels;
use wiretap_core::linalg::CMat;
use wiretap_core::vi::{coords_to_herm, herm_to_coords};
use wiretap_core::{ChannelSet, HermitianMatrix, NetworkConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform network with `(n_tx, n_rx, n_eve)` antennas at every node.
pub fn network(
    q: usize,
    k: usize,
    dims: (usize, usize, usize),
    r_circ: f64,
    power_dbm: f64,
    seed: u64,
) -> (ChannelSet, Vec<f64>) {
    let cfg = NetworkConfig::uniform(q, k, r_circ, dims, power_dbm);
    (trial_channels(&cfg, seed, 0, 0).unwrap(), cfg.powers_linear())
}

/// Network whose per-node antenna counts are drawn from `1..=max_dim`.
pub fn mixed_network(q: usize, k: usize, max_dim: usize, r_circ: f64, seed: u64) -> (ChannelSet, Vec<f64>) {
    let mut r = rng(seed);
    let mut d = |n: usize| (0..n).map(|_| r.random_range(1..=max_dim)).collect::<Vec<_>>();
    let cfg = NetworkConfig {
        n_tx: d(q),
        n_rx: d(q),
        n_eve: d(k),
        ..NetworkConfig::uniform(q, k, r_circ, (1, 1, 1), 20.0)
    };
    (trial_channels(&cfg, seed, 0, 0).unwrap(), cfg.powers_linear())
}

pub fn random_herm(r: &mut ChaCha8Rng, n: usize, scale: f64) -> HermitianMatrix {
    let m = CMat::from_fn(n, n, |_, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    });
    HermitianMatrix::hermitized(m).scale(scale)
}

pub fn random_pd(r: &mut ChaCha8Rng, n: usize, floor: f64) -> HermitianMatrix {
    let m = CMat::from_fn(n, n, |_, _| {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    });
    HermitianMatrix::hermitized(&m * m.adjoint()).add(&HermitianMatrix::scaled_identity(n, floor))
}

/// Five-point central-difference gradient of `f` at `x` in the isometric
/// Hermitian coordinates.
pub fn fd_gradient(f: impl Fn(&HermitianMatrix) -> f64, x: &HermitianMatrix, h: f64) -> HermitianMatrix {
    let n = x.dim();
    let mut g = vec![0.0; n * n];
    for (i, gi) in g.iter_mut().enumerate() {
        let mut e = vec![0.0; n * n];
        e[i] = 1.0;
        let e = coords_to_herm(n, &e);
        let at = |t: f64| f(&x.axpy(t, &e));
        *gi = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    }
    coords_to_herm(n, &g)
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    let d = a.sub(b).frobenius_norm();
    let s = a.frobenius_norm().max(b.frobenius_norm());
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

pub fn coords(h: &HermitianMatrix) -> Vec<f64> {
    let mut v = Vec::new();
    herm_to_coords(h, &mut v);
    v
}

fn psd_clip(a: &CMat) -> CMat {
    let e = SymmetricEigen::new(a.clone());
    let d = CMat::from_diagonal(&e.eigenvalues.map(|x| Complex64::new(x.max(0.0), 0.0)));
    let v = &e.eigenvectors;
    let m = v * d * v.adjoint();
    (&m + m.adjoint()) * Complex64::new(0.5, 0.0)
}

fn tr(a: &CMat) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// Projection onto `{sigma, w >= 0, tr(sigma + w) <= p}` by Dykstra's
/// alternating projections between the product PSD cone and the trace
/// half-space.
pub fn dykstra_projection(sigma: &CMat, w: &CMat, p: f64, iters: usize) -> (CMat, CMat) {
    let n = sigma.nrows();
    let eye = CMat::identity(n, n);
    let (mut xs, mut xw) = (sigma.clone(), w.clone());
    let zero = CMat::zeros(n, n);
    let (mut ps, mut pw) = (zero.clone(), zero.clone());
    let (mut qs, mut qw) = (zero.clone(), zero);
    for _ in 0..iters {
        let (ys, yw) = (psd_clip(&(&xs + &ps)), psd_clip(&(&xw + &pw)));
        ps = &xs + &ps - &ys;
        pw = &xw + &pw - &yw;
        let (us, uw) = (&ys + &qs, &yw + &qw);
        let excess = (tr(&us) + tr(&uw) - p).max(0.0);
        let shift = &eye * Complex64::new(excess / (2.0 * n as f64), 0.0);
        let (ns, nw) = (&us - &shift, &uw - &shift);
        qs = &us - &ns;
        qw = &uw - &nw;
        let moved = (&ns - &xs).norm() + (&nw - &xw).norm();
        xs = ns;
        xw = nw;
        if moved < 1e-14 {
            break;
        }
    }
    (xs, xw)
}

/// Maximizes `ln det S - tr(S M)` over `S > 0` by Riemannian gradient ascent
/// with backtracking, from a random positive definite start. Returns the
/// maximizer and the attained value.
pub fn maximize_logdet_trace(m: &HermitianMatrix, start: &HermitianMatrix, iters: usize) -> (HermitianMatrix, f64) {
    let value = |s: &HermitianMatrix| -> Option<f64> {
        let e = SymmetricEigen::new(s.as_matrix().clone());
        if e.eigenvalues.iter().any(|&x| x <= 0.0) {
            return None;
        }
        let ld: f64 = e.eigenvalues.iter().map(|x| x.ln()).sum();
        Some(ld - wiretap_core::linalg::inner(s.as_matrix(), m.as_matrix()))
    };
    let mut s = start.clone();
    let mut f = value(&s).unwrap();
    for _ in 0..iters {
        // S (S^-1 - M) S = S - S M S
        let d = HermitianMatrix::hermitized(s.as_matrix() - s.as_matrix() * m.as_matrix() * s.as_matrix());
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let cand = s.axpy(t, &d);
            match value(&cand) {
                Some(fc) if fc > f => {
                    s = cand;
                    f = fc;
                    moved = true;
                    break;
                }
                _ => t *= 0.5,
            }
        }
        if !moved {
            break;
        }
    }
    (s, f)
}
