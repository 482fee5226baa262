#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsma_fbl::ao::random_unit_phases;
use rsma_fbl::model::{BeamformerSet, ChannelDrop, DesignPoint, ScenarioConfig};
use rsma_fbl::sim::channel::cn_matrix;
use rsma_fbl::sim::default_scenario;

pub struct Instance {
    pub cfg: ScenarioConfig,
    pub drop: ChannelDrop,
    pub dp: DesignPoint,
}

/// Unit-noise instance with i.i.d. Rayleigh channels and a random design
/// using `fill` of the unit power budget.
pub fn instance(k: usize, nb: usize, nu: usize, m: usize, seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = default_scenario(k, nb, nu, m);
    cfg.noise_power = 1.0;
    cfg.power_budget = 1.0;
    cfg.message_nats = vec![300.0; k];
    let drop = ChannelDrop {
        direct: (0..k).map(|_| cn_matrix(&mut rng, nu, nb, 3.0)).collect(),
        ris_user: (0..k).map(|_| cn_matrix(&mut rng, nu, m, 1.0)).collect(),
        bs_ris: cn_matrix(&mut rng, m, nb, 1.0),
        seed,
    };
    let fill = rng.gen_range(0.2..1.0);
    let dp = random_design(&cfg, &mut rng, fill);
    Instance { cfg, drop, dp }
}

pub fn random_beams<R: Rng>(cfg: &ScenarioConfig, rng: &mut R, power: f64) -> BeamformerSet {
    let n = cfg.streams();
    let b = BeamformerSet {
        common: cn_matrix(rng, cfg.bs_antennas, n, 1.0),
        private: (0..cfg.users).map(|_| cn_matrix(rng, cfg.bs_antennas, n, 1.0)).collect(),
    };
    b.scaled((power / b.total_power()).sqrt())
}

pub fn random_design<R: Rng>(cfg: &ScenarioConfig, rng: &mut R, power: f64) -> DesignPoint {
    DesignPoint {
        beams: random_beams(cfg, rng, power * cfg.power_budget),
        ris: random_unit_phases(cfg.ris_elements, rng),
        z: vec![0.0; cfg.users],
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}
