mod common;

use num_complex::Complex64;
use proptest::prelude::*;
use rsma_fbl::fbl::{self, inverse_q, q_function, ReceivedBlocks};
use rsma_fbl::linalg::CMat;
use rsma_fbl::model::{effective_channel, RisPhase};
use statrs::function::erf::erfc;

/// Q^{-1} by bisection on the reference erfc.
fn bisect_inverse_q(p: f64) -> f64 {
    let q = |x: f64| 0.5 * erfc(x / std::f64::consts::SQRT_2);
    let (mut lo, mut hi) = (-40.0, 40.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if q(mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn inverse_q_against_bisection() {
    for p in [1e-12, 1e-9, 1e-7, 5e-6, 1e-5, 1e-3, 0.01, 0.1, 0.3, 0.49, 0.5, 0.7, 0.99] {
        let want = bisect_inverse_q(p);
        let got = inverse_q(p).unwrap();
        assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "p {p}: {got} vs {want}");
        assert!((q_function(got) - p).abs() <= 1e-9 * p);
    }
    assert!((inverse_q(1e-5).unwrap() - 4.264890793922825).abs() < 1e-9);
}

#[test]
fn scalar_rate_by_hand() {
    // one antenna everywhere: gamma = |h u|^2 / sigma^2
    let i = common::instance(1, 1, 1, 0, 3);
    let mut beams = i.dp.beams.clone();
    beams.common = CMat::zeros(1, 1);
    let h = effective_channel(&i.drop, &RisPhase::zeros(0), 0).unwrap();
    let gamma = (h[(0, 0)] * beams.private[0][(0, 0)]).norm_sqr();
    let n = i.cfg.private_blocklength;
    let q = inverse_q(i.cfg.private_error).unwrap();
    let want = (1.0 + gamma).ln() - q * (2.0 * gamma / (1.0 + gamma) / n).sqrt();
    let got = fbl::private_rate_fbl(&i.cfg, &i.drop, &RisPhase::zeros(0), &beams, 0).unwrap();
    assert!(common::rel_err(got, want) < 1e-12);
}

#[test]
fn dispersion_gap_vanishes_like_inverse_root_n() {
    let q = inverse_q(5e-6).unwrap();
    for seed in 0..100 {
        let i = common::instance(3, 2, 2, 3, seed);
        for k in 0..3 {
            let h = effective_channel(&i.drop, &i.dp.ris, k).unwrap();
            let rb = ReceivedBlocks::new(&h, &i.dp.beams);
            let p12 = fbl::private_rate_terms(&rb, k, 1.0, 5e-6, 1e12).unwrap();
            let p16 = fbl::private_rate_terms(&rb, k, 1.0, 5e-6, 1e16).unwrap();
            let c12 = fbl::common_rate_terms(&rb, 1.0, 5e-6, 1e12).unwrap();
            let c16 = fbl::common_rate_terms(&rb, 1.0, 5e-6, 1e16).unwrap();
            // the log-det part does not depend on n
            assert_eq!(p12.log_det, p16.log_det);
            assert_eq!(c12.log_det, c16.log_det);
            // gap = Q^{-1}(eps) sqrt(2 Tr / n) with Tr at most N_u
            for (a, b) in [(p12, p16), (c12, c16)] {
                assert!((a.dispersion / b.dispersion - 100.0).abs() < 1e-9);
                assert!(a.dispersion <= q * (2.0 * 2.0 / 1e12f64).sqrt() + 1e-18);
                assert!((b.rate() - b.log_det).abs() <= 1e-6);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn effective_channel_is_affine_in_psi(seed in 0u64..10_000, a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let i = common::instance(2, 2, 3, 4, seed);
        let p1 = RisPhase { psi: (0..4).map(|m| Complex64::new(m as f64 * 0.1, -0.3)).collect() };
        let p2 = i.dp.ris.clone();
        let mix = RisPhase { psi: p1.psi.iter().zip(&p2.psi).map(|(x, y)| x * a + y * b).collect() };
        let zero = RisPhase::zeros(4);
        for k in 0..2 {
            let f = effective_channel(&i.drop, &zero, k).unwrap();
            let h1 = effective_channel(&i.drop, &p1, k).unwrap() - &f;
            let h2 = effective_channel(&i.drop, &p2, k).unwrap() - &f;
            let hm = effective_channel(&i.drop, &mix, k).unwrap() - &f;
            prop_assert!((hm - (h1 * Complex64::from(a) + h2 * Complex64::from(b))).norm() < 1e-10);
        }
    }

    #[test]
    fn rate_grows_with_blocklength_and_error(seed in 0u64..10_000) {
        let i = common::instance(2, 2, 2, 2, seed);
        let h = effective_channel(&i.drop, &i.dp.ris, 0).unwrap();
        let rb = ReceivedBlocks::new(&h, &i.dp.beams);
        let r = |eps: f64, n: f64| fbl::private_rate_terms(&rb, 0, 1.0, eps, n).unwrap().rate();
        prop_assert!(r(1e-5, 128.0) <= r(1e-5, 512.0));
        prop_assert!(r(1e-7, 256.0) <= r(1e-5, 256.0));
        prop_assert!(r(1e-5, 256.0) <= r(1e-3, 256.0));
    }

    #[test]
    fn dispersion_is_nonnegative(seed in 0u64..10_000) {
        let i = common::instance(3, 2, 2, 3, seed);
        for k in 0..3 {
            let h = effective_channel(&i.drop, &i.dp.ris, k).unwrap();
            let rb = ReceivedBlocks::new(&h, &i.dp.beams);
            prop_assert!(fbl::private_rate_terms(&rb, k, 1.0, 1e-5, 256.0).unwrap().dispersion >= 0.0);
            prop_assert!(fbl::common_rate_terms(&rb, 1.0, 1e-5, 256.0).unwrap().dispersion >= 0.0);
        }
    }
}
