use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ao::{lambda_update, random_unit_phases};
use crate::fbl::metrics_report;
use crate::model::{BeamformerSet, ChannelDrop, DesignPoint, ScenarioConfig};
use crate::sim::channel::cn_matrix;
use crate::sim::default_scenario;
use crate::surrogate::{lemma1_coefficients, lemma2_coefficients, RateKind};

struct Inst {
    cfg: ScenarioConfig,
    drop: ChannelDrop,
    dp: DesignPoint,
}

/// Normalized instance (`sigma^2 = P = 1`) with i.i.d. channels.
fn instance(k: usize, nb: usize, nu: usize, m: usize, alpha: f64, seed: u64) -> Inst {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = default_scenario(k, nb, nu, m);
    cfg.noise_power = 1.0;
    cfg.power_budget = 1.0;
    cfg.latency_weight = alpha;
    cfg.message_nats = vec![200.0; k];
    let drop = ChannelDrop {
        direct: (0..k).map(|_| cn_matrix(&mut rng, nu, nb, 4.0)).collect(),
        ris_user: (0..k).map(|_| cn_matrix(&mut rng, nu, m, 1.0)).collect(),
        bs_ris: cn_matrix(&mut rng, m, nb, 1.0),
        seed,
    };
    let n = cfg.streams();
    let beams = BeamformerSet {
        common: cn_matrix(&mut rng, nb, n, 1.0),
        private: (0..k).map(|_| cn_matrix(&mut rng, nb, n, 1.0)).collect(),
    };
    let beams = beams.scaled((0.8 / beams.total_power()).sqrt());
    let ris = random_unit_phases(m, &mut rng);
    let dp = DesignPoint { beams, ris, z: vec![0.0; k] };
    Inst { cfg, drop, dp }
}

fn bf_sub(i: &Inst) -> Subproblem {
    let co = lemma1_coefficients(&i.cfg, &i.drop, &i.dp.ris, &i.dp.beams).unwrap();
    let lambda = lambda_update(&i.cfg, &i.drop, &i.dp).unwrap();
    build_bf_subproblem(&i.cfg, &i.drop, &i.dp.ris, &co, &lambda).unwrap()
}

fn ris_sub(i: &Inst) -> Subproblem {
    let co = lemma2_coefficients(&i.cfg, &i.drop, &i.dp.beams, &i.dp.ris).unwrap();
    build_ris_subproblem(&i.cfg, &i.drop, &i.dp.beams, &co).unwrap()
}

#[test]
fn quadform_matches_bound_evaluation() {
    let i = instance(3, 2, 2, 4, 0.5, 1);
    let co = lemma1_coefficients(&i.cfg, &i.drop, &i.dp.ris, &i.dp.beams).unwrap();
    let sub = bf_sub(&i);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..5 {
        let other = instance(3, 2, 2, 4, 0.5, rand::Rng::gen(&mut rng));
        let mut x = vec![0.0; sub.program.num_vars];
        sub.encode_design(&mut x, &other.dp.beams, &i.dp.ris);
        for k in 0..3 {
            let rb = sub.received_at(&x, k);
            let blocks = &sub.users[k];
            for kind in [RateKind::Private, RateKind::Common] {
                let b = co.bound(kind, k).unwrap();
                let direct = b.eval(&rb, kind, k, 1.0);
                let form = bound_quadform(b, blocks, kind, k, 1.0).eval(&x);
                assert!((direct - form).abs() <= 1e-9 * (1.0 + direct.abs()), "{direct} vs {form}");
            }
        }
    }
}

#[test]
fn ris_blocks_match_effective_channel() {
    let i = instance(2, 2, 3, 5, 1.0, 4);
    let sub = ris_sub(&i);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let psi = random_unit_phases(5, &mut rng);
    let mut x = vec![0.0; sub.program.num_vars];
    sub.encode_design(&mut x, &i.dp.beams, &psi);
    for k in 0..2 {
        let h = crate::model::effective_channel(&i.drop, &psi, k).unwrap();
        let rb = sub.received_at(&x, k);
        let want = &h * &i.dp.beams.common;
        assert!((rb.common - want).norm() < 1e-12);
    }
}

#[test]
fn anchor_is_feasible_and_tight() {
    for alpha in [0.0, 0.5, 1.0] {
        let i = instance(3, 2, 2, 4, alpha, 2);
        let report = metrics_report(&i.cfg, &i.drop, &i.dp).unwrap();
        for sub in [bf_sub(&i), ris_sub(&i)] {
            let lambda = lambda_update(&i.cfg, &i.drop, &i.dp).unwrap();
            let x = sub.plug_in(&i.cfg, &i.drop, &i.dp, Some(&lambda)).unwrap();
            let viol = sub.program.max_violation(&x);
            assert!(viol < 1e-9, "alpha {alpha}: violation {viol}");
            let obj = sub.program.objective_value(&x) * sub.layout.delay_scale;
            assert!(
                (obj - report.objective).abs() < 1e-9 * (1.0 + report.objective.abs()),
                "{obj} vs {}",
                report.objective
            );
        }
    }
}

#[test]
fn half_steps_descend() {
    for (seed, alpha) in [(3, 1.0), (4, 0.5), (5, 0.0)] {
        let i = instance(3, 2, 2, 4, alpha, seed);
        let before = metrics_report(&i.cfg, &i.drop, &i.dp).unwrap().objective;
        let sub = bf_sub(&i);
        let sol = sub.solve();
        assert!(sol.status.is_usable());
        assert!(sol.objective <= before + 1e-7 * (1.0 + before.abs()));
        let after = DesignPoint { beams: sol.beams.clone(), ris: i.dp.ris.clone(), z: sol.z.clone() };
        let obj = metrics_report(&i.cfg, &i.drop, &after).unwrap().objective;
        // the true objective sits below the surrogate optimum up to solver accuracy
        assert!(obj <= sol.objective + 1e-6 * (1.0 + obj.abs()), "true {obj} surrogate {}", sol.objective);

        let i2 = Inst { cfg: i.cfg.clone(), drop: i.drop.clone(), dp: after };
        let before = obj;
        let sol = ris_sub(&i2).solve();
        assert!(sol.status.is_usable());
        assert!(sol.ris.max_magnitude() <= 1.0 + 1e-7);
        let after = DesignPoint { beams: i2.dp.beams.clone(), ris: sol.ris, z: sol.z };
        let obj = metrics_report(&i.cfg, &i.drop, &after).unwrap().objective;
        assert!(obj <= before + 1e-6 * (1.0 + before.abs()));
    }
}

#[test]
fn delay_variable_is_the_worst_delay() {
    let i = instance(2, 2, 2, 0, 1.0, 8);
    let sol = bf_sub(&i).solve();
    let t_min = sol.t.iter().copied().fold(f64::INFINITY, f64::min);
    let d = sol.d.unwrap();
    assert!((d - 200.0 / t_min).abs() < 1e-5 * d);
    assert!(sol.e.is_none());
}

#[test]
fn single_user_power_sweep() {
    // one user, no interference: repeated steps approach the best scaling of
    // the private beamformer found by a power sweep
    let mut i = instance(1, 2, 2, 0, 1.0, 11);
    i.dp.beams.common = CMat::zeros(2, 2);
    let rate = |b: &BeamformerSet| crate::fbl::private_rates(&i.cfg, &i.drop, &i.dp.ris, b).unwrap()[0];
    let mut swept = f64::NEG_INFINITY;
    for s in 1..=1000 {
        swept = swept.max(rate(&i.dp.beams.scaled((s as f64 / 1000.0 / i.dp.beams.total_power()).sqrt())));
    }
    for _ in 0..30 {
        let sol = bf_sub(&i).solve();
        assert!(sol.status.is_usable());
        i.dp.beams = sol.beams;
    }
    assert!((i.dp.beams.total_power() - 1.0).abs() < 1e-4);
    assert!(rate(&i.dp.beams) >= swept - 1e-6);
}

#[test]
fn ris_program_without_elements() {
    let i = instance(2, 2, 2, 0, 0.5, 12);
    let sub = ris_sub(&i);
    assert!(sub.layout.psi.is_none());
    let sol = sub.solve();
    assert!(sol.status.is_usable());
    assert!(sol.ris.is_empty());
}

#[test]
fn single_element_ris_matches_disc_grid() {
    // K = 1, SDMA, latency only: the RIS step maximizes the private minorant
    // over the unit disc
    let mut i = (21..)
        .map(|seed| instance(1, 1, 1, 1, 1.0, seed))
        .find(|i| metrics_report(&i.cfg, &i.drop, &i.dp).unwrap().r_p[0] > 0.1)
        .unwrap();
    i.dp.beams.common = CMat::zeros(1, 1);
    let co = lemma2_coefficients(&i.cfg, &i.drop, &i.dp.beams, &i.dp.ris).unwrap();
    let sub = ris_sub(&i);
    let sol = sub.solve();
    assert!(sol.status.is_usable());
    let eval = |p: Complex64| {
        crate::surrogate::eval_surrogate_ris(
            &co,
            &i.drop,
            &i.dp.beams,
            &RisPhase { psi: vec![p] },
            RateKind::Private,
            0,
        )
        .unwrap()
    };
    let mut best = f64::NEG_INFINITY;
    for a in 0..100 {
        for r in 0..100 {
            let p = Complex64::from_polar((r as f64 + 0.5) / 100.0 + 0.005, std::f64::consts::TAU * a as f64 / 100.0);
            best = best.max(eval(p));
        }
    }
    let got = eval(sol.ris.psi[0]);
    assert!((got - sol.t[0]).abs() < 1e-6 * got.abs());
    assert!(got >= best - 1e-9, "solver {got} grid {best}");
    assert!(got - best < 1e-2 * best.abs(), "solver {got} grid {best}");
}

#[test]
fn repeated_solves_are_identical() {
    let i = instance(3, 2, 2, 4, 0.5, 30);
    let a = bf_sub(&i).solve();
    let b = bf_sub(&i).solve();
    assert_eq!(a.z, b.z);
    assert_eq!(a.beams, b.beams);
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
}
