//! Channel generation for a planar single-cell layout.
//!
//! Every random quantity is drawn from its own ChaCha stream keyed by the drop
//! seed, a link tag and the element index, so a drop with `M` RIS elements is
//! a prefix of the same drop with more elements.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::model::{ChannelDrop, ScenarioConfig};

/// Geometry and propagation constants. Distances in meters, gains in dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyConfig {
    pub ris_position: [f64; 2],
    pub user_distance: [f64; 2],
    /// Users are placed at azimuths within `+-user_spread_deg` of the x axis.
    pub user_spread_deg: f64,
    /// Path gain at the 1 m reference distance.
    pub reference_gain_db: f64,
    pub direct_exponent: f64,
    pub ris_exponent: f64,
    pub rician_factor_db: f64,
    /// Variance of the scattered components before path loss; `0` leaves
    /// only the mean.
    pub scatter_variance: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            ris_position: [40.0, 10.0],
            user_distance: [50.0, 70.0],
            user_spread_deg: 30.0,
            reference_gain_db: -30.0,
            direct_exponent: 3.5,
            ris_exponent: 2.2,
            rician_factor_db: 3.0,
            scatter_variance: 1.0,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.user_distance;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Scenario(format!("user distance range {lo}..{hi} is invalid")));
        }
        if !(self.scatter_variance >= 0.0) || !(self.user_spread_deg >= 0.0) {
            return Err(Error::Scenario("negative variance or spread".into()));
        }
        Ok(())
    }

    /// Linear power gain at distance `d` for path-loss exponent `exponent`.
    pub fn path_gain(&self, d: f64, exponent: f64) -> f64 {
        10f64.powf(self.reference_gain_db / 10.0) * d.max(1.0).powf(-exponent)
    }
}

/// Stream identifiers for per-link randomness.
#[derive(Clone, Copy)]
enum Tag {
    Placement = 1,
    Direct = 2,
    BsRis = 3,
    RisUser = 4,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed derived from a parent seed and a path of indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ splitmix(p)))
}

fn substream(seed: u64, tag: Tag, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[tag as u64, a, b]))
}

/// Circularly symmetric complex Gaussian with variance `var`.
pub fn cn<R: Rng + ?Sized>(rng: &mut R, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// Matrix of i.i.d. `CN(0, var)` entries.
pub fn cn_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, var: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| cn(rng, var))
}

/// Half-wavelength ULA response at azimuth `theta`, entry `i`.
fn steering(i: usize, theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, PI * i as f64 * theta.sin())
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn azimuth(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

/// User positions for a drop.
pub fn user_positions(users: usize, topo: &TopologyConfig, seed: u64) -> Vec<[f64; 2]> {
    (0..users)
        .map(|k| {
            let mut rng = substream(seed, Tag::Placement, k as u64, 0);
            let [lo, hi] = topo.user_distance;
            let r = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
            let spread = topo.user_spread_deg.to_radians();
            let a = if spread > 0.0 { rng.gen_range(-spread..=spread) } else { 0.0 };
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}

/// One channel realization: Rayleigh direct links and Rician RIS links with
/// line-of-sight ULA responses.
pub fn generate_drop(cfg: &ScenarioConfig, topo: &TopologyConfig, seed: u64) -> Result<ChannelDrop> {
    cfg.validate()?;
    topo.validate()?;
    let (nb, nu, m) = (cfg.bs_antennas, cfg.user_antennas, cfg.ris_elements);
    let bs = [0.0, 0.0];
    let ris = topo.ris_position;
    let kappa = 10f64.powf(topo.rician_factor_db / 10.0);
    let (w_los, w_nlos) = ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt());
    let var = topo.scatter_variance;
    let users = user_positions(cfg.users, topo, seed);

    let direct = users
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let mut rng = substream(seed, Tag::Direct, k as u64, 0);
            let g = topo.path_gain(distance(bs, u), topo.direct_exponent).sqrt();
            cn_matrix(&mut rng, nu, nb, var).scale(g)
        })
        .collect();

    // G: row m is the link from the BS to RIS element m
    let g_br = topo.path_gain(distance(bs, ris), topo.ris_exponent).sqrt();
    let (dep, arr) = (azimuth(bs, ris), azimuth(ris, bs));
    let mut bs_ris = CMat::zeros(m, nb);
    for i in 0..m {
        let mut rng = substream(seed, Tag::BsRis, i as u64, 0);
        for a in 0..nb {
            let los = steering(i, arr) * steering(a, dep).conj();
            bs_ris[(i, a)] = g_br * (w_los * los + w_nlos * cn(&mut rng, var));
        }
    }

    let ris_user = users
        .iter()
        .enumerate()
        .map(|(k, &u)| {
            let g = topo.path_gain(distance(ris, u), topo.ris_exponent).sqrt();
            let (dep, arr) = (azimuth(ris, u), azimuth(u, ris));
            let mut gk = CMat::zeros(nu, m);
            for i in 0..m {
                let mut rng = substream(seed, Tag::RisUser, k as u64, i as u64);
                for r in 0..nu {
                    let los = steering(r, arr) * steering(i, dep).conj();
                    gk[(r, i)] = g * (w_los * los + w_nlos * cn(&mut rng, var));
                }
            }
            gk
        })
        .collect();

    Ok(ChannelDrop { direct, ris_user, bs_ris, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frob_sq;

    fn cfg(m: usize) -> ScenarioConfig {
        crate::sim::default_scenario(2, 2, 2, m)
    }

    #[test]
    fn repeatable_and_nested_in_m() {
        let topo = TopologyConfig::default();
        let a = generate_drop(&cfg(8), &topo, 17).unwrap();
        let b = generate_drop(&cfg(8), &topo, 17).unwrap();
        assert_eq!(a, b);
        let small = generate_drop(&cfg(3), &topo, 17).unwrap();
        assert_eq!(small.direct, a.direct);
        assert_eq!(small.bs_ris, a.bs_ris.rows(0, 3).into_owned());
        for k in 0..2 {
            assert_eq!(small.ris_user[k], a.ris_user[k].columns(0, 3).into_owned());
        }
    }

    #[test]
    fn mean_only_when_scatter_is_off() {
        let topo = TopologyConfig {
            scatter_variance: 0.0,
            reference_gain_db: 0.0,
            direct_exponent: 0.0,
            ris_exponent: 0.0,
            rician_factor_db: 300.0,
            ..Default::default()
        };
        let d = generate_drop(&cfg(4), &topo, 3).unwrap();
        assert!(d.direct.iter().all(|f| frob_sq(f) == 0.0));
        for v in d.bs_ris.iter().chain(d.ris_user.iter().flat_map(|g| g.iter())) {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }
}
