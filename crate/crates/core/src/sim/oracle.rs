//! Exhaustive grid search on single-antenna instances, used as a test oracle.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::ao::{Access, RisMode, VariantSpec};
use crate::error::{Error, Result};
use crate::fbl::{common_rates, delay_of, objective, power_consumption, private_rates};
use crate::linalg::CMat;
use crate::model::{BeamformerSet, ChannelDrop, DesignPoint, RisPhase, ScenarioConfig};

pub const PRIVATE_LEVELS: usize = 33;
pub const COMMON_LEVELS: usize = 17;
pub const PHASES: usize = 64;
pub const SHARE_LEVELS: usize = 33;

#[derive(Debug, Clone, Serialize)]
pub struct OracleResult {
    pub objective: f64,
    /// False when every grid point leaves some user without a positive rate.
    pub feasible: bool,
    #[serde(skip)]
    pub design: DesignPoint,
}

fn scalar_beams(p: &[f64], pc: f64) -> BeamformerSet {
    BeamformerSet {
        common: CMat::from_element(1, 1, Complex64::new(pc.sqrt(), 0.0)),
        private: p.iter().map(|x| CMat::from_element(1, 1, Complex64::new(x.sqrt(), 0.0))).collect(),
    }
}

/// Per-stream power grid `i / 32 P` for `K` users with total at most `P`.
fn private_grid(users: usize) -> Vec<Vec<usize>> {
    let top = PRIVATE_LEVELS - 1;
    let mut out = vec![vec![]];
    for _ in 0..users {
        out = out
            .into_iter()
            .flat_map(|v: Vec<usize>| {
                let used: usize = v.iter().sum();
                (0..=top - used).map(move |i| {
                    let mut w = v.clone();
                    w.push(i);
                    w
                })
            })
            .collect();
    }
    out
}

/// Best true objective over the grid: private powers in steps of `P/32`,
/// common power in steps of `P/16`, unit-modulus RIS phases in steps of
/// `2 pi / 64`, and the common cap split in steps of `1/32` (the full cap is
/// always allocated). Only instances with `K <= 2`, single antennas and
/// `M <= 1` are accepted.
pub fn grid_oracle(cfg: &ScenarioConfig, drop: &ChannelDrop, variant: VariantSpec) -> Result<OracleResult> {
    if cfg.users > 2 || cfg.bs_antennas != 1 || cfg.user_antennas != 1 || cfg.ris_elements > 1 {
        return Err(Error::Scenario("grid oracle needs K <= 2, N_BS = N_u = 1 and M <= 1".into()));
    }
    if variant.ris_mode == RisMode::RandomPhase {
        return Err(Error::Scenario("grid oracle does not cover random-phase RIS".into()));
    }
    let budget = cfg.power_budget;
    let mut check = cfg.clone();
    if budget == 0.0 {
        check.power_budget = 1.0;
    }
    check.validate()?;
    drop.check(cfg)?;

    let phases: Vec<RisPhase> = if variant.ris_mode == RisMode::Absent || cfg.ris_elements == 0 {
        vec![RisPhase::zeros(cfg.ris_elements)]
    } else {
        (0..PHASES)
            .map(|i| RisPhase {
                psi: vec![Complex64::from_polar(1.0, std::f64::consts::TAU * i as f64 / PHASES as f64)],
            })
            .collect()
    };
    let privates = private_grid(cfg.users);
    let common_levels = if variant.access == Access::Sdma { 1 } else { COMMON_LEVELS };
    let k = cfg.users;

    let evaluate = |ris: &RisPhase| -> Result<(f64, DesignPoint)> {
        let mut best: Option<(f64, DesignPoint)> = None;
        for grid in &privates {
            let p: Vec<f64> = grid.iter().map(|&i| budget * i as f64 / (PRIVATE_LEVELS - 1) as f64).collect();
            let used: f64 = p.iter().sum();
            for c in 0..common_levels {
                let pc = budget * c as f64 / (COMMON_LEVELS - 1) as f64;
                if used + pc > budget * (1.0 + 1e-12) {
                    break;
                }
                let beams = scalar_beams(&p, pc);
                let r_p = private_rates(cfg, drop, ris, &beams)?;
                let cap = if pc > 0.0 {
                    common_rates(cfg, drop, ris, &beams)?.into_iter().fold(f64::INFINITY, f64::min).max(0.0)
                } else {
                    0.0
                };
                let pw: Vec<f64> = (0..k).map(|j| power_consumption(cfg, &beams, j)).collect();
                let splits = if k == 1 || cap == 0.0 { 1 } else { SHARE_LEVELS };
                for s in 0..splits {
                    let z: Vec<f64> = if k == 1 {
                        vec![cap]
                    } else {
                        let f = if splits == 1 { 0.0 } else { s as f64 / (SHARE_LEVELS - 1) as f64 };
                        vec![cap * f, cap * (1.0 - f)]
                    };
                    let r: Vec<f64> = (0..k).map(|j| z[j] + r_p[j]).collect();
                    let d: Vec<f64> = (0..k).map(|j| delay_of(cfg.message_nats[j], r[j])).collect();
                    let e: Vec<f64> = (0..k).map(|j| r[j].max(0.0) / pw[j]).collect();
                    let obj = objective(cfg.latency_weight, &d, &e);
                    if best.as_ref().is_none_or(|b| obj < b.0) {
                        best = Some((obj, DesignPoint { beams: beams.clone(), ris: ris.clone(), z }));
                    }
                }
            }
        }
        Ok(best.expect("grid is never empty"))
    };

    let results: Vec<(f64, DesignPoint)> = phases.par_iter().map(evaluate).collect::<Result<_>>()?;
    let (objective, design) = results.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one phase");
    let metrics = crate::fbl::metrics_report(cfg, drop, &design)?;
    Ok(OracleResult { objective, feasible: !metrics.has_infinite_delay(), design })
}
