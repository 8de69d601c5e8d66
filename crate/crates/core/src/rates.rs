//! Information, eavesdropper and secrecy rates, their log-sum-exp smoothing,
//! and the auxiliary-matrix reformulation used by every solver.
//!
//! Rates are in nats. Noise is normalized to identity covariance at every
//! receiver and eavesdropper.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{congruence, inverse_pd, logdet, sandwich, CMat, HermitianMatrix};
use crate::network::ChannelSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkStrategy {
    /// Information covariance.
    pub sigma: HermitianMatrix,
    /// Artificial-noise covariance.
    pub w: HermitianMatrix,
}

impl LinkStrategy {
    pub fn total_power(&self) -> f64 {
        self.sigma.trace() + self.w.trace()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub links: Vec<LinkStrategy>,
}

impl StrategyProfile {
    pub fn zeros(channels: &ChannelSet) -> Self {
        Self {
            links: (0..channels.links())
                .map(|q| {
                    let n = channels.n_tx(q);
                    LinkStrategy {
                        sigma: HermitianMatrix::zeros(n),
                        w: HermitianMatrix::zeros(n),
                    }
                })
                .collect(),
        }
    }

    /// `sigma = w = P / (4 N_T) I`: half the budget, split evenly.
    pub fn scaled_identity(channels: &ChannelSet, powers: &[f64]) -> Self {
        Self {
            links: (0..channels.links())
                .map(|q| {
                    let n = channels.n_tx(q);
                    let s = powers[q] / (4.0 * n as f64);
                    LinkStrategy {
                        sigma: HermitianMatrix::scaled_identity(n, s),
                        w: HermitianMatrix::scaled_identity(n, s),
                    }
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn with_link(&self, q: usize, link: LinkStrategy) -> Self {
        let mut p = self.clone();
        p.links[q] = link;
        p
    }

    /// Largest violation of the PSD and power constraints; zero when feasible.
    pub fn infeasibility(&self, powers: &[f64]) -> f64 {
        self.links
            .iter()
            .zip(powers)
            .map(|(l, &p)| {
                let neg = crate::linalg::min_eig_herm(&l.sigma)
                    .min(crate::linalg::min_eig_herm(&l.w))
                    .min(0.0);
                (-neg).max(l.total_power() - p).max(0.0)
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkAux {
    /// Receiver-side matrix, `n_rx x n_rx`.
    pub s0: HermitianMatrix,
    /// One per eavesdropper, `n_eve[k] x n_eve[k]`.
    pub s_eve: Vec<HermitianMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuxProfile {
    pub links: Vec<LinkAux>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub beta: f64,
    /// Per-link budgets, noise-normalized linear units.
    pub powers: Vec<f64>,
}

impl GameConfig {
    pub fn validate(&self, channels: &ChannelSet) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::config("beta", "must be positive"));
        }
        if self.powers.len() != channels.links() {
            return Err(Error::config("powers", "one budget per link required"));
        }
        if self.powers.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::config("powers", "budgets must be non-negative"));
        }
        Ok(())
    }
}

/// Source of the other links' covariances when building link `q`'s
/// interference terms.
#[derive(Clone, Copy, Debug)]
pub enum Snapshot<'a> {
    /// Use the profile being evaluated.
    Current,
    /// Use a frozen profile (round start, or the previous iterate).
    Frozen(&'a StrategyProfile),
}

impl<'a> Snapshot<'a> {
    fn resolve(self, current: &'a StrategyProfile) -> &'a StrategyProfile {
        match self {
            Snapshot::Current => current,
            Snapshot::Frozen(p) => p,
        }
    }
}

/// `(1/beta) ln sum_k exp(beta v_k)`, max-shifted.
pub fn log_sum_exp(values: &[f64], beta: f64) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|v| (beta * (v - m)).exp()).sum();
    m + s.ln() / beta
}

/// Softmax of `beta v`, max-shifted.
pub fn softmax(values: &[f64], beta: f64) -> Vec<f64> {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = values.iter().map(|v| (beta * (v - m)).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

fn check_profile(profile: &StrategyProfile, channels: &ChannelSet) -> Result<()> {
    if profile.len() != channels.links() {
        return Err(Error::Dimension(format!(
            "profile has {} links, channels have {}",
            profile.len(),
            channels.links()
        )));
    }
    for (q, l) in profile.links.iter().enumerate() {
        let n = channels.n_tx(q);
        if l.sigma.dim() != n || l.w.dim() != n {
            return Err(Error::Dimension(format!("link {q} covariances must be {n}x{n}")));
        }
    }
    Ok(())
}

/// Noise plus every other link's total transmit covariance, as seen at link
/// `q`'s receiver and at each eavesdropper.
#[derive(Clone, Debug)]
pub struct External {
    pub rx: CMat,
    pub eve: Vec<CMat>,
}

impl External {
    pub fn new(q: usize, others: &StrategyProfile, channels: &ChannelSet) -> Self {
        let n_r = channels.n_rx(q);
        let mut rx = CMat::identity(n_r, n_r);
        let mut eve: Vec<CMat> = (0..channels.eves())
            .map(|k| {
                let n = channels.n_eve(k);
                CMat::identity(n, n)
            })
            .collect();
        for (r, l) in others.links.iter().enumerate() {
            if r == q {
                continue;
            }
            let tot = l.sigma.as_matrix() + l.w.as_matrix();
            rx += sandwich(&channels.h[r][q], &tot);
            for (k, e) in eve.iter_mut().enumerate() {
                *e += sandwich(&channels.g[r][k], &tot);
            }
        }
        Self { rx, eve }
    }
}

/// Interference and signal-plus-interference covariances of one link, with
/// their inverses.
#[derive(Clone, Debug)]
pub struct LinkTerms {
    pub q: usize,
    /// `M_q`: receiver interference plus noise.
    pub m: HermitianMatrix,
    pub m_inv: HermitianMatrix,
    /// `M_q + H_qq Sigma_q H_qq^H`.
    pub a: HermitianMatrix,
    pub a_inv: HermitianMatrix,
    /// Eavesdropper interference plus noise, per `k`.
    pub me: Vec<HermitianMatrix>,
    pub me_inv: Vec<HermitianMatrix>,
    /// `M_e + G_qk Sigma_q G_qk^H`, per `k`.
    pub b: Vec<HermitianMatrix>,
    pub b_inv: Vec<HermitianMatrix>,
}

impl LinkTerms {
    pub fn new(q: usize, profile: &StrategyProfile, channels: &ChannelSet) -> Result<Self> {
        check_profile(profile, channels)?;
        Self::from_external(q, &External::new(q, profile, channels), &profile.links[q], channels)
    }

    pub fn from_external(q: usize, ext: &External, own: &LinkStrategy, channels: &ChannelSet) -> Result<Self> {
        let hqq = &channels.h[q][q];
        let m = HermitianMatrix::hermitized(&ext.rx + sandwich(hqq, own.w.as_matrix()));
        let a = HermitianMatrix::hermitized(m.as_matrix() + sandwich(hqq, own.sigma.as_matrix()));
        let mut me = Vec::with_capacity(ext.eve.len());
        let mut b = Vec::with_capacity(ext.eve.len());
        for (k, e) in ext.eve.iter().enumerate() {
            let g = &channels.g[q][k];
            let mek = HermitianMatrix::hermitized(e + sandwich(g, own.w.as_matrix()));
            b.push(HermitianMatrix::hermitized(
                mek.as_matrix() + sandwich(g, own.sigma.as_matrix()),
            ));
            me.push(mek);
        }
        Ok(Self {
            q,
            m_inv: inverse_pd(&m)?,
            a_inv: inverse_pd(&a)?,
            me_inv: me.iter().map(inverse_pd).collect::<Result<_>>()?,
            b_inv: b.iter().map(inverse_pd).collect::<Result<_>>()?,
            m,
            a,
            me,
            b,
        })
    }

    pub fn info_rate(&self) -> Result<f64> {
        Ok(logdet(&self.a)? - logdet(&self.m)?)
    }

    pub fn eve_rates(&self) -> Result<Vec<f64>> {
        self.b
            .iter()
            .zip(&self.me)
            .map(|(b, m)| Ok(logdet(b)? - logdet(m)?))
            .collect()
    }

    /// Closed-form maximizer of the reformulated objective over the
    /// auxiliary matrices.
    pub fn optimal_aux(&self) -> LinkAux {
        LinkAux {
            s0: self.m_inv.clone(),
            s_eve: self.b_inv.clone(),
        }
    }
}

pub fn interference_cov(q: usize, profile: &StrategyProfile, channels: &ChannelSet) -> Result<HermitianMatrix> {
    check_profile(profile, channels)?;
    let ext = External::new(q, profile, channels);
    Ok(HermitianMatrix::hermitized(
        ext.rx + sandwich(&channels.h[q][q], profile.links[q].w.as_matrix()),
    ))
}

pub fn eve_interference_cov(
    q: usize,
    k: usize,
    profile: &StrategyProfile,
    channels: &ChannelSet,
) -> Result<HermitianMatrix> {
    check_profile(profile, channels)?;
    let ext = External::new(q, profile, channels);
    Ok(HermitianMatrix::hermitized(
        &ext.eve[k] + sandwich(&channels.g[q][k], profile.links[q].w.as_matrix()),
    ))
}

pub fn info_rate(q: usize, profile: &StrategyProfile, channels: &ChannelSet) -> Result<f64> {
    LinkTerms::new(q, profile, channels)?.info_rate()
}

pub fn eve_rate(q: usize, k: usize, profile: &StrategyProfile, channels: &ChannelSet) -> Result<f64> {
    let t = LinkTerms::new(q, profile, channels)?;
    Ok(logdet(&t.b[k])? - logdet(&t.me[k])?)
}

/// Information rate minus the strongest eavesdropper's rate. May be negative.
pub fn secrecy_rate(q: usize, profile: &StrategyProfile, channels: &ChannelSet) -> Result<f64> {
    let t = LinkTerms::new(q, profile, channels)?;
    let ce = t.eve_rates()?;
    Ok(t.info_rate()? - ce.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
}

pub fn smooth_secrecy_rate(q: usize, profile: &StrategyProfile, channels: &ChannelSet, beta: f64) -> Result<f64> {
    let t = LinkTerms::new(q, profile, channels)?;
    Ok(t.info_rate()? - log_sum_exp(&t.eve_rates()?, beta))
}

/// Per-link rate summary of a profile.
#[derive(Clone, Debug, PartialEq)]
pub struct RateSummary {
    pub info: Vec<f64>,
    /// `eve[q][k]`.
    pub eve: Vec<Vec<f64>>,
}

impl RateSummary {
    pub fn compute(profile: &StrategyProfile, channels: &ChannelSet) -> Result<Self> {
        check_profile(profile, channels)?;
        let mut info = Vec::with_capacity(profile.len());
        let mut eve = Vec::with_capacity(profile.len());
        for q in 0..profile.len() {
            let t = LinkTerms::new(q, profile, channels)?;
            info.push(t.info_rate()?);
            eve.push(t.eve_rates()?);
        }
        Ok(Self { info, eve })
    }

    pub fn max_eve(&self, q: usize) -> f64 {
        self.eve[q].iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn secrecy(&self) -> Vec<f64> {
        (0..self.info.len()).map(|q| self.info[q] - self.max_eve(q)).collect()
    }

    /// Per-link secrecy rates clipped at zero, summed.
    pub fn secrecy_sum_clipped(&self) -> f64 {
        self.secrecy().iter().map(|r| r.max(0.0)).sum()
    }

    pub fn sum_rate(&self) -> f64 {
        self.info.iter().sum()
    }

    /// Sum over links of the strongest eavesdropper's rate.
    pub fn eves_rate(&self) -> f64 {
        (0..self.info.len()).map(|q| self.max_eve(q)).sum()
    }
}

fn check_aux(q: usize, aux: &LinkAux, channels: &ChannelSet) -> Result<()> {
    if aux.s0.dim() != channels.n_rx(q) || aux.s_eve.len() != channels.eves() {
        return Err(Error::Dimension(format!(
            "auxiliary matrices of link {q} have wrong shape"
        )));
    }
    for (k, s) in aux.s_eve.iter().enumerate() {
        if s.dim() != channels.n_eve(k) {
            return Err(Error::Dimension(format!("auxiliary matrix ({q}, {k}) has wrong shape")));
        }
    }
    Ok(())
}

fn tr_prod(a: &HermitianMatrix, b: &HermitianMatrix) -> f64 {
    crate::linalg::inner(a.as_matrix(), b.as_matrix())
}

/// Lower bound on the information rate, tight at `s0 = M_q^{-1}`.
pub fn phi_q(terms: &LinkTerms, s0: &HermitianMatrix) -> Result<f64> {
    Ok(-tr_prod(s0, &terms.m) + logdet(s0)? + s0.dim() as f64 + logdet(&terms.a)?)
}

/// Upper bound on eavesdropper `k`'s rate, tight at `s = (M_e + G Sigma G^H)^{-1}`.
pub fn phi_e(terms: &LinkTerms, k: usize, s: &HermitianMatrix) -> Result<f64> {
    Ok(tr_prod(s, &terms.b[k]) - logdet(s)? - s.dim() as f64 - logdet(&terms.me[k])?)
}

/// Link terms evaluated against a fixed set of auxiliary matrices.
#[derive(Clone, Debug)]
pub struct GradientWorkspace {
    pub terms: LinkTerms,
    pub phi_q: f64,
    pub phi_e: Vec<f64>,
    /// Softmax weights over eavesdroppers.
    pub rho: Vec<f64>,
    pub beta: f64,
}

impl GradientWorkspace {
    pub fn new(terms: LinkTerms, aux: &LinkAux, beta: f64) -> Result<Self> {
        let phi_q = phi_q(&terms, &aux.s0)?;
        let phi_e = aux
            .s_eve
            .iter()
            .enumerate()
            .map(|(k, s)| phi_e(&terms, k, s))
            .collect::<Result<Vec<_>>>()?;
        let rho = softmax(&phi_e, beta);
        Ok(Self {
            terms,
            phi_q,
            phi_e,
            rho,
            beta,
        })
    }

    pub fn objective(&self) -> f64 {
        self.phi_q - log_sum_exp(&self.phi_e, self.beta)
    }

    /// Gradients of the reformulated objective with respect to the link's
    /// own `(sigma, w)`, auxiliary matrices held fixed.
    pub fn gradient(&self, aux: &LinkAux, channels: &ChannelSet) -> (HermitianMatrix, HermitianMatrix) {
        let q = self.terms.q;
        let h = &channels.h[q][q];
        let mut gs = congruence(h, self.terms.a_inv.as_matrix());
        let mut gw = congruence(h, &(self.terms.a_inv.as_matrix() - aux.s0.as_matrix()));
        for (k, s) in aux.s_eve.iter().enumerate() {
            let g = &channels.g[q][k];
            let rho = num_complex::Complex64::new(self.rho[k], 0.0);
            gs -= congruence(g, s.as_matrix()) * rho;
            gw += congruence(g, &(self.terms.me_inv[k].as_matrix() - s.as_matrix())) * rho;
        }
        (HermitianMatrix::hermitized(gs), HermitianMatrix::hermitized(gw))
    }
}

pub fn reformulated_objective(
    q: usize,
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<f64> {
    check_aux(q, &aux.links[q], channels)?;
    let t = LinkTerms::new(q, profile, channels)?;
    Ok(GradientWorkspace::new(t, &aux.links[q], beta)?.objective())
}

pub fn rho_weights(
    q: usize,
    profile: &StrategyProfile,
    aux: &AuxProfile,
    channels: &ChannelSet,
    beta: f64,
) -> Result<Vec<f64>> {
    check_aux(q, &aux.links[q], channels)?;
    let t = LinkTerms::new(q, profile, channels)?;
    Ok(GradientWorkspace::new(t, &aux.links[q], beta)?.rho)
}

/// Optimal auxiliary matrices for link `q`: own covariances from `profile`,
/// everyone else's from `snapshot`.
pub fn closed_form_aux(
    q: usize,
    profile: &StrategyProfile,
    snapshot: Snapshot<'_>,
    channels: &ChannelSet,
) -> Result<LinkAux> {
    let others = snapshot.resolve(profile);
    check_profile(profile, channels)?;
    check_profile(others, channels)?;
    let ext = External::new(q, others, channels);
    Ok(LinkTerms::from_external(q, &ext, &profile.links[q], channels)?.optimal_aux())
}

pub fn closed_form_aux_all(
    profile: &StrategyProfile,
    snapshot: Snapshot<'_>,
    channels: &ChannelSet,
) -> Result<AuxProfile> {
    Ok(AuxProfile {
        links: (0..profile.len())
            .map(|q| closed_form_aux(q, profile, snapshot, channels))
            .collect::<Result<_>>()?,
    })
}
