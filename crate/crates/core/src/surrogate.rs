//! Concave quadratic minorants of the finite-blocklength rates.
//!
//! Every bound has the form
//!
//! ```text
//! r >= a + 2 Re Tr(A^H V_own) + 2 sum_j Re Tr(A_j^H V_j) - Tr(B (sigma^2 I + sum V V^H))
//! ```
//!
//! where `V_j = H_k Upsilon_j` are the received signal blocks. Because the
//! bound is a concave quadratic in the blocks and the blocks are linear in the
//! beamformers (for fixed RIS) and affine in `psi` (for fixed beamformers), the
//! same coefficients serve both alternating half-steps.
//!
//! The log-det part uses the standard minorant of `ln|I + V^H D^{-1} V|`. The
//! dispersion part bounds `sqrt(x) <= (sqrt(g) + x / sqrt(g)) / 2` with `g` the
//! value of `x` at the anchor, then linearizes the convex matrix-fractional
//! terms hidden in `x = 2 Tr(S Sigma^{-1})`.

use crate::error::{Error, Result};
use crate::fbl::{inverse_q, ReceivedBlocks};
use crate::linalg::{frob_sq, hermitian_part, hpd_inverse, logdet_hpd, re_inner, re_trace, CMat};
use crate::model::{effective_channel, BeamformerSet, ChannelDrop, RisPhase, ScenarioConfig, Stream};

/// Smallest admissible dispersion anchor.
pub const G_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateKind {
    Private,
    Common,
}

/// Minorant coefficients of one rate at one receiver.
#[derive(Debug, Clone)]
pub struct BoundCoefficients {
    /// Constant term.
    pub a: f64,
    /// Linear coefficient of the stream's own block (`A_k` / `A_ck`).
    pub own: CMat,
    /// Linear coefficients of the private blocks from the dispersion part
    /// (`A_kj` / `A_ckj`); zero for `j = k` in the private case.
    pub cross: Vec<CMat>,
    /// Quadratic coefficient, Hermitian PSD.
    pub b: CMat,
    /// Dispersion anchor `g = 2 Tr(S Sigma^{-1})` at the expansion point.
    pub g: f64,
}

impl BoundCoefficients {
    /// Evaluate on the received blocks of the owning receiver.
    pub fn eval(&self, rb: &ReceivedBlocks, kind: RateKind, k: usize, sigma2: f64) -> f64 {
        let own = match kind {
            RateKind::Private => &rb.private[k],
            RateKind::Common => &rb.common,
        };
        let mut value = self.a + 2.0 * re_inner(&self.own, own);
        for (a, v) in self.cross.iter().zip(&rb.private) {
            value += 2.0 * re_inner(a, v);
        }
        value - self.quadratic(rb, kind, sigma2)
    }

    /// `Tr(B (sigma^2 I + sum V V^H))` over the blocks the rate depends on.
    pub fn quadratic(&self, rb: &ReceivedBlocks, kind: RateKind, sigma2: f64) -> f64 {
        let mut value = sigma2 * re_trace(&self.b);
        let mut add = |v: &CMat| value += re_trace(&(v.adjoint() * &self.b * v));
        for v in &rb.private {
            add(v);
        }
        if kind == RateKind::Common {
            add(&rb.common);
        }
        value
    }
}

/// All minorant coefficients anchored at one `(beams, ris)` pair.
///
/// Streams whose beamformer is exactly zero at the anchor are pinned: their
/// private bound is `None` (the rate is identically zero while the stream
/// stays off), and a zero common beamformer leaves `common` as `None`.
#[derive(Debug, Clone)]
pub struct SurrogateCoefficients {
    pub private: Vec<Option<BoundCoefficients>>,
    pub common: Option<Vec<BoundCoefficients>>,
    pub anchor_beams: BeamformerSet,
    pub anchor_ris: RisPhase,
    pub noise_power: f64,
}

impl SurrogateCoefficients {
    pub fn bound(&self, kind: RateKind, k: usize) -> Option<&BoundCoefficients> {
        match kind {
            RateKind::Private => self.private[k].as_ref(),
            RateKind::Common => self.common.as_ref().map(|c| &c[k]),
        }
    }

    /// Evaluate the bound of user `k` on its received blocks; pinned streams
    /// evaluate to zero.
    pub fn eval_blocks(&self, rb: &ReceivedBlocks, kind: RateKind, k: usize) -> f64 {
        self.bound(kind, k).map_or(0.0, |b| b.eval(rb, kind, k, self.noise_power))
    }
}

fn private_bound(rb: &ReceivedBlocks, k: usize, sigma2: f64, q: f64, n: f64) -> Result<BoundCoefficients> {
    let nu = rb.common.nrows() as f64;
    let d = rb.private_covariance(sigma2, Some(k));
    let t_own = &rb.private[k] * rb.private[k].adjoint();
    let sigma = &d + &t_own;
    let d_inv = hpd_inverse(&d)?;
    let s_inv = hpd_inverse(&sigma)?;

    let g = 2.0 * re_trace(&(&s_inv * &t_own));
    if !(g >= G_FLOOR) {
        return Err(Error::Degenerate(vec![Stream::Private(k)]));
    }
    let c = q / (n * g).sqrt();
    let log_term = logdet_hpd(&sigma)? - logdet_hpd(&d)?;
    let a = log_term
        - re_trace(&(&d_inv * &t_own))
        - 0.5 * q / n.sqrt() * g.sqrt()
        - 0.5 * c * (2.0 * nu - 4.0 * sigma2 * re_trace(&s_inv));

    let own = &d_inv * &rb.private[k];
    let cross = rb
        .private
        .iter()
        .enumerate()
        .map(|(j, v)| if j == k { CMat::zeros(v.nrows(), v.ncols()) } else { (&s_inv * v).scale(c) })
        .collect();
    let b = &d_inv - &s_inv + (&s_inv * &d * &s_inv).scale(c);
    Ok(BoundCoefficients { a, own, cross, b: hermitian_part(&b), g })
}

fn common_bound(rb: &ReceivedBlocks, sigma2: f64, q: f64, n: f64) -> Result<BoundCoefficients> {
    let nu = rb.common.nrows() as f64;
    let sigma = rb.private_covariance(sigma2, None);
    let s_c = rb.common_covariance();
    let omega = &sigma + &s_c;
    let sigma_inv = hpd_inverse(&sigma)?;
    let omega_inv = hpd_inverse(&omega)?;

    let g = 2.0 * re_trace(&(&omega_inv * &s_c));
    if !(g >= G_FLOOR) {
        return Err(Error::Degenerate(vec![Stream::Common]));
    }
    let c = q / (n * g).sqrt();
    let log_term = logdet_hpd(&omega)? - logdet_hpd(&sigma)?;
    let a = log_term
        - re_trace(&(&sigma_inv * &s_c))
        - 0.5 * q / n.sqrt() * g.sqrt()
        - 0.5 * c * (2.0 * nu - 4.0 * sigma2 * re_trace(&omega_inv));

    let own = &sigma_inv * &rb.common;
    let cross = rb.private.iter().map(|v| (&omega_inv * v).scale(c)).collect();
    let b = &sigma_inv - &omega_inv + (&omega_inv * &sigma * &omega_inv).scale(c);
    Ok(BoundCoefficients { a, own, cross, b: hermitian_part(&b), g })
}

/// Build every bound at the anchor `(beams, ris)`. Streams whose anchor
/// yields a dispersion anchor below [`G_FLOOR`] are reported together as
/// [`Error::Degenerate`].
pub fn coefficients(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris: &RisPhase,
    beams: &BeamformerSet,
) -> Result<SurrogateCoefficients> {
    let sigma2 = cfg.noise_power;
    let q_p = inverse_q(cfg.private_error)?;
    let q_c = inverse_q(cfg.common_error)?;
    let common_on = !beams.is_sdma();
    let mut degenerate = Vec::new();
    let mut private = Vec::with_capacity(cfg.users);
    let mut common = Vec::with_capacity(cfg.users);

    for k in 0..cfg.users {
        let h = effective_channel(drop, ris, k)?;
        let rb = ReceivedBlocks::new(&h, beams);
        if beams.is_zero(Stream::Private(k)) {
            private.push(None);
        } else {
            match private_bound(&rb, k, sigma2, q_p, cfg.private_blocklength) {
                Ok(b) => private.push(Some(b)),
                Err(Error::Degenerate(s)) => {
                    degenerate.extend(s);
                    private.push(None);
                }
                Err(e) => return Err(e),
            }
        }
        if common_on {
            match common_bound(&rb, sigma2, q_c, cfg.common_blocklength) {
                Ok(b) => common.push(b),
                Err(Error::Degenerate(s)) => degenerate.extend(s),
                Err(e) => return Err(e),
            }
        }
    }
    if !degenerate.is_empty() {
        degenerate.sort();
        degenerate.dedup();
        return Err(Error::Degenerate(degenerate));
    }
    Ok(SurrogateCoefficients {
        private,
        common: common_on.then_some(common),
        anchor_beams: beams.clone(),
        anchor_ris: ris.clone(),
        noise_power: sigma2,
    })
}

/// Beamforming-side bounds: the RIS is frozen at `ris_fixed` and the
/// beamformers are anchored at `beams_prev`.
pub fn lemma1_coefficients(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris_fixed: &RisPhase,
    beams_prev: &BeamformerSet,
) -> Result<SurrogateCoefficients> {
    coefficients(cfg, drop, ris_fixed, beams_prev)
}

/// RIS-side bounds: beamformers frozen at `beams_fixed`, anchored at
/// `ris_prev`.
pub fn lemma2_coefficients(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    beams_fixed: &BeamformerSet,
    ris_prev: &RisPhase,
) -> Result<SurrogateCoefficients> {
    coefficients(cfg, drop, ris_prev, beams_fixed)
}

/// Bound value as a function of the beamformers, RIS frozen.
pub fn eval_surrogate_bf(
    co: &SurrogateCoefficients,
    drop: &ChannelDrop,
    ris_fixed: &RisPhase,
    beams: &BeamformerSet,
    kind: RateKind,
    k: usize,
) -> Result<f64> {
    let h = effective_channel(drop, ris_fixed, k)?;
    Ok(co.eval_blocks(&ReceivedBlocks::new(&h, beams), kind, k))
}

/// Bound value as a function of the RIS coefficients, beamformers frozen.
pub fn eval_surrogate_ris(
    co: &SurrogateCoefficients,
    drop: &ChannelDrop,
    beams_fixed: &BeamformerSet,
    ris: &RisPhase,
    kind: RateKind,
    k: usize,
) -> Result<f64> {
    let h = effective_channel(drop, ris, k)?;
    Ok(co.eval_blocks(&ReceivedBlocks::new(&h, beams_fixed), kind, k))
}

/// Squared norm of all blocks, used to scale perturbations in tests and
/// diagnostics.
pub fn blocks_energy(rb: &ReceivedBlocks) -> f64 {
    rb.private.iter().map(frob_sq).sum::<f64>() + frob_sq(&rb.common)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbl::{common_rate_terms, private_rate_terms};
    use crate::linalg::min_eigenvalue;
    use num_complex::Complex64;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar_blocks(private: &[f64], common: f64) -> ReceivedBlocks {
        ReceivedBlocks {
            private: private.iter().map(|&v| CMat::from_element(1, 1, c(v))).collect(),
            common: CMat::from_element(1, 1, c(common)),
        }
    }

    #[test]
    fn scalar_single_user_hand_formulas() {
        // sigma^2 = 1, |v|^2 = s, no interference
        let s: f64 = 2.0;
        let rb = scalar_blocks(&[s.sqrt()], 0.0);
        let (q, n) = (inverse_q(5e-6).unwrap(), 256.0);
        let co = private_bound(&rb, 0, 1.0, q, n).unwrap();
        let c_k = s; // s / sigma^2
        let g = 2.0 * s / (1.0 + s);
        assert!((co.g - g).abs() < 1e-14);
        let cc = q / (n * g).sqrt();
        let a = (1.0 + c_k).ln() - c_k - 0.5 * q / n.sqrt() * g.sqrt() - 0.5 * cc * (2.0 - 4.0 / (1.0 + s));
        assert!((co.a - a).abs() < 1e-13);
        let b = 1.0 - 1.0 / (1.0 + s) + cc / (1.0 + s).powi(2);
        assert!((co.b[(0, 0)].re - b).abs() < 1e-14);
        let rate = private_rate_terms(&rb, 0, 1.0, 5e-6, n).unwrap().rate();
        assert!((co.eval(&rb, RateKind::Private, 0, 1.0) - rate).abs() < 1e-12);
    }

    #[test]
    fn b_reduces_to_inverse_difference_without_dispersion() {
        let rb = ReceivedBlocks {
            private: vec![
                CMat::from_row_slice(2, 1, &[Complex64::new(1.0, 0.5), Complex64::new(-0.3, 0.2)]),
                CMat::from_row_slice(2, 1, &[Complex64::new(0.4, -1.0), Complex64::new(0.9, 0.1)]),
            ],
            common: CMat::zeros(2, 1),
        };
        let co = private_bound(&rb, 0, 1.0, 0.0, 256.0).unwrap();
        let d = rb.private_covariance(1.0, Some(0));
        let s = rb.private_covariance(1.0, None);
        let expect = hpd_inverse(&d).unwrap() - hpd_inverse(&s).unwrap();
        assert!((&co.b - &expect).norm() < 1e-13);
        assert!(min_eigenvalue(&co.b) >= -1e-12);
    }

    #[test]
    fn zero_stream_is_degenerate() {
        let rb = scalar_blocks(&[0.0, 1.0], 1.0);
        assert!(matches!(private_bound(&rb, 0, 1.0, 4.0, 256.0), Err(Error::Degenerate(_))));
        let rb = scalar_blocks(&[1.0], 0.0);
        assert!(matches!(common_bound(&rb, 1.0, 4.0, 256.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn common_scalar_tightness() {
        let rb = scalar_blocks(&[0.8, 0.5], 1.2);
        let (q, n) = (inverse_q(1e-4).unwrap(), 128.0);
        let co = common_bound(&rb, 1.0, q, n).unwrap();
        let rate = common_rate_terms(&rb, 1.0, 1e-4, n).unwrap().rate();
        assert!((co.eval(&rb, RateKind::Common, 0, 1.0) - rate).abs() < 1e-12);
    }
}
