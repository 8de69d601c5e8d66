//! Random network geometry and Rayleigh channel draws.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{serde_cmat_grid, CMat};

const MAX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Power in units of the 0 dBm noise floor.
pub fn dbm_to_linear(p_dbm: f64) -> f64 {
    10f64.powf(p_dbm / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub links: usize,
    pub eves: usize,
    pub r_circ: f64,
    pub d_link: f64,
    pub path_loss_exp: f64,
    /// Transmit antennas per link.
    pub n_tx: Vec<usize>,
    /// Receive antennas per link.
    pub n_rx: Vec<usize>,
    /// Antennas per eavesdropper.
    pub n_eve: Vec<usize>,
    /// Per-link budgets in dBm.
    pub power_dbm: Vec<f64>,
    pub noise_dbm: f64,
}

impl NetworkConfig {
    /// Same antenna counts and budget at every node.
    pub fn uniform(
        links: usize,
        eves: usize,
        r_circ: f64,
        (n_tx, n_rx, n_eve): (usize, usize, usize),
        power_dbm: f64,
    ) -> Self {
        Self {
            links,
            eves,
            r_circ,
            d_link: 10.0,
            path_loss_exp: 2.5,
            n_tx: vec![n_tx; links],
            n_rx: vec![n_rx; links],
            n_eve: vec![n_eve; eves],
            power_dbm: vec![power_dbm; links],
            noise_dbm: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.links == 0 {
            return Err(Error::config("links", "must be at least 1"));
        }
        if self.eves == 0 {
            return Err(Error::config("eves", "must be at least 1"));
        }
        if !(self.r_circ > 0.0) {
            return Err(Error::config("r_circ", "must be positive"));
        }
        if !(self.d_link > 0.0) {
            return Err(Error::config("d_link", "must be positive"));
        }
        if self.d_link > 2.0 * self.r_circ {
            return Err(Error::config("d_link", "must not exceed the region diameter"));
        }
        if !(self.path_loss_exp > 0.0) {
            return Err(Error::config("path_loss_exp", "must be positive"));
        }
        for (name, v, want) in [
            ("n_tx", &self.n_tx, self.links),
            ("n_rx", &self.n_rx, self.links),
            ("n_eve", &self.n_eve, self.eves),
        ] {
            if v.len() != want {
                return Err(Error::config(name, format!("expected {want} entries, got {}", v.len())));
            }
            if v.iter().any(|&n| n == 0) {
                return Err(Error::config(name, "antenna counts must be at least 1"));
            }
        }
        if self.power_dbm.len() != self.links {
            return Err(Error::config(
                "power_dbm",
                format!("expected {} entries, got {}", self.links, self.power_dbm.len()),
            ));
        }
        if self.power_dbm.iter().any(|p| !p.is_finite()) || !self.noise_dbm.is_finite() {
            return Err(Error::config("power_dbm", "powers must be finite"));
        }
        Ok(())
    }

    /// Budgets normalized to the noise power.
    pub fn powers_linear(&self) -> Vec<f64> {
        self.power_dbm
            .iter()
            .map(|p| dbm_to_linear(p - self.noise_dbm))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub tx_pos: Vec<[f64; 2]>,
    pub rx_pos: Vec<[f64; 2]>,
    pub eve_pos: Vec<[f64; 2]>,
}

/// `h[r][q]` is the `n_rx[q] x n_tx[r]` channel from transmitter `r` to
/// receiver `q`; `g[q][k]` is the `n_eve[k] x n_tx[q]` channel from
/// transmitter `q` to eavesdropper `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSet {
    #[serde(with = "serde_cmat_grid")]
    pub h: Vec<Vec<CMat>>,
    #[serde(with = "serde_cmat_grid")]
    pub g: Vec<Vec<CMat>>,
    pub noise_power_linear: f64,
}

impl ChannelSet {
    pub fn links(&self) -> usize {
        self.h.len()
    }

    pub fn eves(&self) -> usize {
        self.g.first().map_or(0, |r| r.len())
    }

    pub fn n_tx(&self, q: usize) -> usize {
        self.h[q][q].ncols()
    }

    pub fn n_rx(&self, q: usize) -> usize {
        self.h[q][q].nrows()
    }

    pub fn n_eve(&self, k: usize) -> usize {
        self.g[0][k].nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let q_n = self.h.len();
        if q_n == 0 || self.g.len() != q_n {
            return Err(Error::Dimension("channel set link counts disagree".into()));
        }
        let k_n = self.eves();
        for r in 0..q_n {
            if self.h[r].len() != q_n || self.g[r].len() != k_n {
                return Err(Error::Dimension(format!("channel row {r} has the wrong length")));
            }
            for q in 0..q_n {
                let m = &self.h[r][q];
                if m.nrows() != self.n_rx(q) || m.ncols() != self.n_tx(r) {
                    return Err(Error::Dimension(format!("H[{r}][{q}] is {}x{}", m.nrows(), m.ncols())));
                }
            }
            for k in 0..k_n {
                let m = &self.g[r][k];
                if m.nrows() != self.n_eve(k) || m.ncols() != self.n_tx(r) {
                    return Err(Error::Dimension(format!("G[{r}][{k}] is {}x{}", m.nrows(), m.ncols())));
                }
            }
        }
        Ok(())
    }
}

fn uniform_in_disc(rng: &mut ChaCha8Rng, r: f64) -> [f64; 2] {
    let rad = r * rng.random::<f64>().sqrt();
    let ang = rng.random::<f64>() * std::f64::consts::TAU;
    [rad * ang.cos(), rad * ang.sin()]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

pub fn sample_topology(cfg: &NetworkConfig, seed: u64) -> Result<Topology> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tx_pos = Vec::with_capacity(cfg.links);
    let mut rx_pos = Vec::with_capacity(cfg.links);
    for q in 0..cfg.links {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let tx = uniform_in_disc(&mut rng, cfg.r_circ);
            let ang = rng.random::<f64>() * std::f64::consts::TAU;
            let rx = [tx[0] + cfg.d_link * ang.cos(), tx[1] + cfg.d_link * ang.sin()];
            if rx[0].hypot(rx[1]) <= cfg.r_circ {
                placed = Some((tx, rx));
                break;
            }
        }
        let (tx, rx) = placed.ok_or(Error::Placement {
            link: q,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        tx_pos.push(tx);
        rx_pos.push(rx);
    }
    let eve_pos = (0..cfg.eves).map(|_| uniform_in_disc(&mut rng, cfg.r_circ)).collect();
    Ok(Topology {
        tx_pos,
        rx_pos,
        eve_pos,
    })
}

fn rayleigh(rng: &mut ChaCha8Rng, rows: usize, cols: usize, d: f64, alpha: f64) -> CMat {
    // Variance d^-alpha split evenly between real and imaginary parts.
    let sd = (d.powf(-alpha) / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(sd * re, sd * im)
    })
}

pub fn sample_channels(topo: &Topology, cfg: &NetworkConfig, seed: u64) -> Result<ChannelSet> {
    cfg.validate()?;
    if topo.tx_pos.len() != cfg.links || topo.rx_pos.len() != cfg.links || topo.eve_pos.len() != cfg.eves {
        return Err(Error::Dimension(
            "topology does not match the network configuration".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = cfg.path_loss_exp;
    let h = (0..cfg.links)
        .map(|r| {
            (0..cfg.links)
                .map(|q| {
                    let d = dist(topo.tx_pos[r], topo.rx_pos[q]).max(1e-3);
                    rayleigh(&mut rng, cfg.n_rx[q], cfg.n_tx[r], d, a)
                })
                .collect()
        })
        .collect();
    let g = (0..cfg.links)
        .map(|q| {
            (0..cfg.eves)
                .map(|k| {
                    let d = dist(topo.tx_pos[q], topo.eve_pos[k]).max(1e-3);
                    rayleigh(&mut rng, cfg.n_eve[k], cfg.n_tx[q], d, a)
                })
                .collect()
        })
        .collect();
    Ok(ChannelSet {
        h,
        g,
        noise_power_linear: 1.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> NetworkConfig {
        NetworkConfig::uniform(3, 2, 30.0, (3, 2, 2), 20.0)
    }

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_linear(0.0), 1.0);
        assert!((dbm_to_linear(40.0) - 10000.0).abs() < 1e-9);
        assert!((dbm_to_linear(30.0) - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn topology_is_deterministic_and_geometric() {
        let c = cfg();
        let a = sample_topology(&c, 7).unwrap();
        assert_eq!(a, sample_topology(&c, 7).unwrap());
        for q in 0..c.links {
            assert!((dist(a.tx_pos[q], a.rx_pos[q]) - 10.0).abs() < 1e-9);
            assert!(a.rx_pos[q][0].hypot(a.rx_pos[q][1]) <= c.r_circ);
            assert!(a.tx_pos[q][0].hypot(a.tx_pos[q][1]) <= c.r_circ);
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = cfg();
        c.d_link = 100.0;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "d_link"));
        let mut c = cfg();
        c.n_rx = vec![2];
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.links = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn channel_dims_and_determinism() {
        let c = NetworkConfig {
            n_tx: vec![2, 3, 4],
            n_rx: vec![1, 2, 3],
            n_eve: vec![2, 5],
            ..cfg()
        };
        let t = sample_topology(&c, 1).unwrap();
        let ch = sample_channels(&t, &c, 9).unwrap();
        ch.validate().unwrap();
        assert_eq!(ch, sample_channels(&t, &c, 9).unwrap());
        assert_eq!(ch.h[0][2].shape(), (3, 2));
        assert_eq!(ch.g[1][1].shape(), (5, 3));
    }

    #[test]
    fn channel_json_round_trip() {
        let c = cfg();
        let t = sample_topology(&c, 2).unwrap();
        let ch = sample_channels(&t, &c, 3).unwrap();
        let s = serde_json::to_string(&ch).unwrap();
        let back: ChannelSet = serde_json::from_str(&s).unwrap();
        assert_eq!(ch, back);
    }
}
