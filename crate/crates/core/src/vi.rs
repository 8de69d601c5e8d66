//! Variational-inequality view of the game.
//!
//! Each link's pair `(sigma_q, w_q)` is flattened into `2 N_T^2` real
//! coordinates. A Hermitian `n x n` matrix contributes its `n` diagonal
//! entries followed by `sqrt(2) Re` and `sqrt(2) Im` of each strictly upper
//! entry (row-major). The scaling makes the Euclidean dot product of two
//! vectors equal to `Re tr(A^H B)` of the matrices they encode.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    congruence, inner, min_eig_sym_part, project_feasible, sandwich, spectral_norm_real, CMat, HermitianMatrix, RMat,
};
use crate::network::ChannelSet;
use crate::rates::{
    closed_form_aux_all, AuxProfile, GradientWorkspace, LinkStrategy, LinkTerms, Snapshot, StrategyProfile,
};

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Real coordinates of a Hermitian matrix.
pub fn herm_to_coords(h: &HermitianMatrix, out: &mut Vec<f64>) {
    let n = h.dim();
    let m = h.as_matrix();
    for i in 0..n {
        out.push(m[(i, i)].re);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            out.push(SQRT2 * m[(i, j)].re);
            out.push(SQRT2 * m[(i, j)].im);
        }
    }
}

pub fn coords_to_herm(n: usize, x: &[f64]) -> HermitianMatrix {
    debug_assert_eq!(x.len(), n * n);
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = Complex64::new(x[i], 0.0);
    }
    let mut p = n;
    for i in 0..n {
        for j in (i + 1)..n {
            let z = Complex64::new(x[p] / SQRT2, x[p + 1] / SQRT2);
            m[(i, j)] = z;
            m[(j, i)] = z.conj();
            p += 2;
        }
    }
    HermitianMatrix::hermitized(m)
}

/// Position map between per-link matrix pairs and the stacked real vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VectorLayout {
    pub dims: Vec<usize>,
    offsets: Vec<usize>,
}

impl VectorLayout {
    pub fn new(dims: Vec<usize>) -> Self {
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        let mut o = 0;
        for &n in &dims {
            offsets.push(o);
            o += 2 * n * n;
        }
        offsets.push(o);
        Self { dims, offsets }
    }

    pub fn for_channels(channels: &ChannelSet) -> Self {
        Self::new((0..channels.links()).map(|q| channels.n_tx(q)).collect())
    }

    pub fn len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Range of link `q`'s coordinates; the first half is `sigma`, the second `w`.
    pub fn range(&self, q: usize) -> std::ops::Range<usize> {
        self.offsets[q]..self.offsets[q + 1]
    }

    pub fn vectorize_pairs(&self, pairs: &[(HermitianMatrix, HermitianMatrix)]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for (s, w) in pairs {
            herm_to_coords(s, &mut v);
            herm_to_coords(w, &mut v);
        }
        v
    }

    pub fn devectorize_pairs(&self, x: &[f64]) -> Vec<(HermitianMatrix, HermitianMatrix)> {
        self.dims
            .iter()
            .enumerate()
            .map(|(q, &n)| {
                let r = self.range(q);
                let half = r.start + n * n;
                (coords_to_herm(n, &x[r.start..half]), coords_to_herm(n, &x[half..r.end]))
            })
            .collect()
    }

    pub fn vectorize(&self, profile: &StrategyProfile) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        for l in &profile.links {
            herm_to_coords(&l.sigma, &mut v);
            herm_to_coords(&l.w, &mut v);
        }
        v
    }

    pub fn devectorize(&self, x: &[f64]) -> StrategyProfile {
        StrategyProfile {
            links: self
                .devectorize_pairs(x)
                .into_iter()
                .map(|(sigma, w)| LinkStrategy { sigma, w })
                .collect(),
        }
    }
}

fn workspace(
    q: usize,
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<GradientWorkspace> {
    if aux.links.len() != profile.len() {
        return Err(Error::Dimension("aux profile and strategy profile disagree".into()));
    }
    GradientWorkspace::new(LinkTerms::new(q, profile, channels)?, &aux.links[q], beta)
}

/// Gradient of link `q`'s reformulated objective with respect to its own
/// `(sigma, w)`, auxiliary matrices fixed.
pub fn grad_f(
    q: usize,
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    Ok(workspace(q, profile, aux, channels, beta)?.gradient(&aux.links[q], channels))
}

/// Stacked negated own-gradients of every link.
pub fn f_map(profile: &StrategyProfile, aux: &AuxProfile, channels: &ChannelSet, beta: f64) -> Result<Vec<f64>> {
    let layout = VectorLayout::for_channels(channels);
    let pairs = (0..profile.len())
        .map(|q| {
            let (gs, gw) = grad_f(q, profile, aux, channels, beta)?;
            Ok((gs.scale(-1.0), gw.scale(-1.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(layout.vectorize_pairs(&pairs))
}

/// `|| x - Proj(x - F(x)) ||` with auxiliary matrices at their closed form.
pub fn vi_residual(profile: &StrategyProfile, channels: &ChannelSet, powers: &[f64], beta: f64) -> Result<f64> {
    let aux = closed_form_aux_all(profile, Snapshot::Current, channels)?;
    let mut s = 0.0;
    for q in 0..profile.len() {
        let (gs, gw) = grad_f(q, profile, &aux, channels, beta)?;
        let l = &profile.links[q];
        let (ps, pw) = project_feasible(&l.sigma.add(&gs), &l.w.add(&gw), powers[q])?;
        s += l.sigma.sub(&ps).frobenius_norm().powi(2) + l.w.sub(&pw).frobenius_norm().powi(2);
    }
    Ok(s.sqrt())
}

/// Real Jacobian of `F` (auxiliary matrices held fixed) with its block layout.
#[derive(Clone, Debug)]
pub struct JacobianBlocks {
    pub layout: VectorLayout,
    pub full: RMat,
}

/// Which half of a link's coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Sigma,
    W,
}

impl JacobianBlocks {
    /// `D_{x_l} F_q`.
    pub fn block(&self, q: usize, l: usize) -> RMat {
        let r = self.layout.range(q);
        let c = self.layout.range(l);
        self.full.view((r.start, c.start), (r.len(), c.len())).into_owned()
    }

    /// Derivative of the `row` half of `F_q` along the `col` half of link `l`.
    pub fn sub_block(&self, q: usize, row: Part, l: usize, col: Part) -> RMat {
        let nq = self.layout.dims[q].pow(2);
        let nl = self.layout.dims[l].pow(2);
        let r0 = self.layout.range(q).start + if row == Part::W { nq } else { 0 };
        let c0 = self.layout.range(l).start + if col == Part::W { nl } else { 0 };
        self.full.view((r0, c0), (nq, nl)).into_owned()
    }
}

/// Directional derivative of `-(grad_sigma, grad_w)` of link `q` along a
/// perturbation `(ds, dw)` of link `l`.
fn link_jvp(
    ws: &GradientWorkspace,
    aux: &crate::rates::LinkAux,
    channels: &ChannelSet,
    l: usize,
    ds: &CMat,
    dw: &CMat,
) -> (CMat, CMat) {
    let q = ws.terms.q;
    let t = &ws.terms;
    let hqq = &channels.h[q][q];
    let tot = ds + dw;
    let da = sandwich(&channels.h[l][q], &tot);
    let k_n = aux.s_eve.len();
    let mut dme = Vec::with_capacity(k_n);
    let mut dphi = Vec::with_capacity(k_n);
    for k in 0..k_n {
        let (dm, db) = if l == q {
            let g = &channels.g[q][k];
            let dm = sandwich(g, dw);
            let db = &dm + sandwich(g, ds);
            (dm, db)
        } else {
            let dm = sandwich(&channels.g[l][k], &tot);
            (dm.clone(), dm)
        };
        dphi.push(inner(aux.s_eve[k].as_matrix(), &db) - inner(t.me_inv[k].as_matrix(), &dm));
        dme.push(dm);
    }
    let mean: f64 = ws.rho.iter().zip(&dphi).map(|(r, d)| r * d).sum();
    let drho: Vec<f64> = ws
        .rho
        .iter()
        .zip(&dphi)
        .map(|(r, d)| ws.beta * r * (d - mean))
        .collect();
    let dainv = -(t.a_inv.as_matrix() * &da * t.a_inv.as_matrix());
    let base = congruence(hqq, &dainv);
    let mut dgs = base.clone();
    let mut dgw = base;
    for k in 0..k_n {
        let g = &channels.g[q][k];
        let s = aux.s_eve[k].as_matrix();
        let dr = Complex64::new(drho[k], 0.0);
        let rho = Complex64::new(ws.rho[k], 0.0);
        dgs -= congruence(g, s) * dr;
        let dmeinv = -(t.me_inv[k].as_matrix() * &dme[k] * t.me_inv[k].as_matrix());
        dgw += congruence(g, &(t.me_inv[k].as_matrix() - s)) * dr + congruence(g, &dmeinv) * rho;
    }
    (-dgs, -dgw)
}

/// Exact Jacobian of the stacked map `F(x) = -(grad f_q)_q` at fixed
/// auxiliary matrices, one column per coordinate direction.
pub fn jacobian_blocks(
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<JacobianBlocks> {
    let layout = VectorLayout::for_channels(channels);
    let m = layout.len();
    let qn = profile.len();
    let ws = (0..qn)
        .map(|q| workspace(q, profile, aux, channels, beta))
        .collect::<Result<Vec<_>>>()?;
    let mut full = RMat::zeros(m, m);
    let mut e = vec![0.0; m];
    let mut col = Vec::with_capacity(m);
    for l in 0..qn {
        let n = layout.dims[l];
        for j in layout.range(l) {
            e[j] = 1.0;
            let local = &e[layout.range(l)];
            let (ds, dw) = if j - layout.range(l).start < n * n {
                (coords_to_herm(n, &local[..n * n]), HermitianMatrix::zeros(n))
            } else {
                (HermitianMatrix::zeros(n), coords_to_herm(n, &local[n * n..]))
            };
            e[j] = 0.0;
            col.clear();
            for (q, w) in ws.iter().enumerate() {
                let (a, b) = link_jvp(w, &aux.links[q], channels, l, ds.as_matrix(), dw.as_matrix());
                herm_to_coords(&HermitianMatrix::hermitized(a), &mut col);
                herm_to_coords(&HermitianMatrix::hermitized(b), &mut col);
            }
            for (i, v) in col.iter().enumerate() {
                full[(i, j)] = *v;
            }
        }
    }
    Ok(JacobianBlocks { layout, full })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkUniqueness {
    pub lambda_min: f64,
    pub off_diagonal_norm_sum: f64,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub links: Vec<LinkUniqueness>,
    pub unique: bool,
    pub tau: Vec<f64>,
}

/// Diagonal-dominance test: each link's own block must be more positive
/// definite than the sum of spectral norms of its cross blocks.
pub fn uniqueness_check(blocks: &JacobianBlocks) -> UniquenessReport {
    let qn = blocks.layout.dims.len();
    let links: Vec<LinkUniqueness> = (0..qn)
        .map(|q| {
            let lambda_min = min_eig_sym_part(&blocks.block(q, q));
            let off: f64 = (0..qn)
                .filter(|&l| l != q)
                .map(|l| spectral_norm_real(&blocks.block(q, l)))
                .sum();
            LinkUniqueness {
                lambda_min,
                off_diagonal_norm_sum: off,
                satisfied: lambda_min > off,
            }
        })
        .collect();
    UniquenessReport {
        unique: links.iter().all(|l| l.satisfied),
        links,
        tau: compute_tau(&blocks.full),
    }
}

/// Diagonal shift making the symmetric part of `J + diag(tau)` diagonally
/// dominant, hence positive semidefinite.
pub fn compute_tau(j: &RMat) -> Vec<f64> {
    let n = j.nrows();
    (0..n)
        .map(|i| {
            let d: f64 = (0..n)
                .filter(|&k| k != i)
                .map(|k| 0.5 * (j[(i, k)] + j[(k, i)]).abs())
                .sum();
            (d - j[(i, i)]).max(0.0)
        })
        .collect()
}

/// Shift that only dominates the cross-link entries. Each link's own block
/// has a PSD symmetric part at fixed auxiliary matrices, so this is enough
/// for `J + diag(tau)` to have a PSD symmetric part as well.
pub fn compute_tau_cross(blocks: &JacobianBlocks) -> Vec<f64> {
    let j = &blocks.full;
    let n = j.nrows();
    let owner: Vec<usize> = (0..blocks.layout.dims.len())
        .flat_map(|q| std::iter::repeat(q).take(blocks.layout.range(q).len()))
        .collect();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&k| owner[k] != owner[i])
                .map(|k| 0.5 * (j[(i, k)] + j[(k, i)]).abs())
                .sum()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    SumRate,
    EvesRates,
    SecrecySum,
}

impl std::str::FromStr for Criterion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum-rate" | "SumRate" => Ok(Criterion::SumRate),
            "eves-rates" | "EvesRates" => Ok(Criterion::EvesRates),
            "secrecy-sum" | "SecrecySum" => Ok(Criterion::SecrecySum),
            other => Err(Error::config("criterion", format!("unknown criterion `{other}`"))),
        }
    }
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::SumRate => "sum-rate",
            Criterion::EvesRates => "eves-rates",
            Criterion::SecrecySum => "secrecy-sum",
        }
    }
}

/// Per-link workspaces shared by the criterion gradients.
pub struct CrossTerms {
    pub ws: Vec<GradientWorkspace>,
}

impl CrossTerms {
    pub fn new(profile: &StrategyProfile, aux: &AuxProfile, channels: &ChannelSet, beta: f64) -> Result<Self> {
        Ok(Self {
            ws: (0..profile.len())
                .map(|q| workspace(q, profile, aux, channels, beta))
                .collect::<Result<_>>()?,
        })
    }

    /// Effect of link `q`'s transmit covariance on the other links'
    /// objectives. The same matrix applies to `sigma_q` and `w_q`.
    pub fn criterion_grad(
        &self,
        kind: Criterion,
        q: usize,
        aux: &AuxProfile,
        channels: &ChannelSet,
    ) -> HermitianMatrix {
        let n = channels.n_tx(q);
        let mut g = CMat::zeros(n, n);
        for (r, w) in self.ws.iter().enumerate() {
            if r == q {
                continue;
            }
            if kind != Criterion::EvesRates {
                let d = w.terms.a_inv.as_matrix() - aux.links[r].s0.as_matrix();
                g += congruence(&channels.h[q][r], &d);
            }
            if kind != Criterion::SumRate {
                for (k, s) in aux.links[r].s_eve.iter().enumerate() {
                    let d = w.terms.me_inv[k].as_matrix() - s.as_matrix();
                    g += congruence(&channels.g[q][k], &d) * Complex64::new(w.rho[k], 0.0);
                }
            }
        }
        HermitianMatrix::hermitized(g)
    }
}

/// Gradient of a network-wide design criterion with respect to link `q`'s
/// `(sigma_q, w_q)`, auxiliary matrices fixed.
pub fn criterion_grad(
    kind: Criterion,
    q: usize,
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<(HermitianMatrix, HermitianMatrix)> {
    if aux.links.len() != profile.len() {
        return Err(Error::Dimension("cross-link auxiliary data missing".into()));
    }
    let g = CrossTerms::new(profile, aux, channels, beta)?.criterion_grad(kind, q, aux, channels);
    Ok((g.clone(), g))
}
