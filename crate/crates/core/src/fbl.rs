//! Finite-blocklength rates (normal approximation), power consumption,
//! energy efficiency, delay and the scalar latency/EE objective.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{hpd_inverse, identity, logdet_hpd, re_trace, CMat};
use crate::model::{effective_channel, BeamformerSet, ChannelDrop, DesignPoint, RisPhase, ScenarioConfig};

/// Gaussian tail probability `Q(x) = P[N(0,1) > x]`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Acklam's rational approximation of the standard normal quantile, ~1e-9
/// relative accuracy before refinement.
#[allow(clippy::excessive_precision)]
fn normal_quantile_approx(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile_approx(1.0 - p)
    }
}

/// Inverse Gaussian tail function: returns `x` with `Q(x) = p`.
///
/// The rational approximation is refined with Halley steps on `Q` itself,
/// which keeps relative accuracy deep in the tail.
pub fn inverse_q(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain { value: p, domain: "(0, 1)" });
    }
    if p > 0.5 {
        return inverse_q(1.0 - p).map(|x| -x);
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Q(x) = p  <=>  Phi(-x) = p
    let mut x = -normal_quantile_approx(p);
    for _ in 0..2 {
        let err = q_function(x) - p;
        let u = -err / normal_pdf(x);
        // Halley correction for f(x) = Q(x) - p, f' = -phi, f'' = x phi
        x -= u / (1.0 + 0.5 * x * u);
    }
    Ok(x)
}

/// Split a total error target equally between the common and private
/// messages.
pub fn reliability_split(eps_total: f64) -> Result<(f64, f64)> {
    if !(eps_total > 0.0 && eps_total < 0.5) {
        return Err(Error::Domain { value: eps_total, domain: "(0, 0.5)" });
    }
    let half = 0.5 * eps_total;
    Ok((half, half))
}

/// Exact error probability of SIC decoding: common first, then private.
pub fn combined_error(eps_common: f64, eps_private: f64) -> f64 {
    eps_common + (1.0 - eps_common) * eps_private
}

/// Signal blocks seen at one receiver: `H_k Upsilon_j` for every private
/// stream and `H_k Upsilon` for the common stream.
#[derive(Debug, Clone)]
pub struct ReceivedBlocks {
    pub private: Vec<CMat>,
    pub common: CMat,
}

impl ReceivedBlocks {
    pub fn new(h: &CMat, beams: &BeamformerSet) -> Self {
        Self { private: beams.private.iter().map(|u| h * u).collect(), common: h * &beams.common }
    }

    fn rx_dim(&self) -> usize {
        self.common.nrows()
    }

    /// `sigma^2 I + sum_{j in set} T_kj`.
    pub fn private_covariance(&self, sigma2: f64, skip: Option<usize>) -> CMat {
        let mut cov = identity(self.rx_dim()).scale(sigma2);
        for (j, v) in self.private.iter().enumerate() {
            if Some(j) != skip {
                cov += v * v.adjoint();
            }
        }
        cov
    }

    pub fn common_covariance(&self) -> CMat {
        &self.common * self.common.adjoint()
    }
}

/// The two parts of a normal-approximation rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateTerms {
    /// Shannon log-det term, nats per channel use.
    pub log_det: f64,
    /// Subtracted dispersion penalty (nonnegative for error targets below 1/2).
    pub dispersion: f64,
}

impl RateTerms {
    pub fn rate(&self) -> f64 {
        self.log_det - self.dispersion
    }
}

fn dispersion(q_inv: f64, trace: f64, n: f64) -> f64 {
    q_inv * (2.0 * trace.max(0.0) / n).sqrt()
}

/// Common-stream rate terms at a receiver; all private streams are noise.
pub fn common_rate_terms(rb: &ReceivedBlocks, sigma2: f64, eps: f64, n: f64) -> Result<RateTerms> {
    let noise = rb.private_covariance(sigma2, None);
    let s = rb.common_covariance();
    let total = &noise + &s;
    let log_det = logdet_hpd(&total)? - logdet_hpd(&noise)?;
    let trace = re_trace(&(&s * hpd_inverse(&total)?));
    Ok(RateTerms { log_det, dispersion: dispersion(inverse_q(eps)?, trace, n) })
}

/// Private-stream rate terms after SIC of the common stream. The log-det
/// term excludes the own stream from the interference, the dispersion trace
/// uses the full sum.
pub fn private_rate_terms(rb: &ReceivedBlocks, k: usize, sigma2: f64, eps: f64, n: f64) -> Result<RateTerms> {
    let interference = rb.private_covariance(sigma2, Some(k));
    let s = &rb.private[k] * rb.private[k].adjoint();
    let total = &interference + &s;
    let log_det = logdet_hpd(&total)? - logdet_hpd(&interference)?;
    let trace = re_trace(&(&s * hpd_inverse(&total)?));
    Ok(RateTerms { log_det, dispersion: dispersion(inverse_q(eps)?, trace, n) })
}

/// `r_ck`; may be negative.
pub fn common_rate_fbl(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris: &RisPhase,
    beams: &BeamformerSet,
    k: usize,
) -> Result<f64> {
    let h = effective_channel(drop, ris, k)?;
    let rb = ReceivedBlocks::new(&h, beams);
    Ok(common_rate_terms(&rb, cfg.noise_power, cfg.common_error, cfg.common_blocklength)?.rate())
}

/// `r_pk`; may be negative.
pub fn private_rate_fbl(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris: &RisPhase,
    beams: &BeamformerSet,
    k: usize,
) -> Result<f64> {
    let h = effective_channel(drop, ris, k)?;
    let rb = ReceivedBlocks::new(&h, beams);
    Ok(private_rate_terms(&rb, k, cfg.noise_power, cfg.private_error, cfg.private_blocklength)?.rate())
}

pub fn common_rates(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris: &RisPhase,
    beams: &BeamformerSet,
) -> Result<Vec<f64>> {
    (0..cfg.users).map(|k| common_rate_fbl(cfg, drop, ris, beams, k)).collect()
}

pub fn private_rates(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    ris: &RisPhase,
    beams: &BeamformerSet,
) -> Result<Vec<f64>> {
    (0..cfg.users).map(|k| private_rate_fbl(cfg, drop, ris, beams, k)).collect()
}

/// `p_k = P_s + eta Tr(Upsilon_k Upsilon_k^H) + (eta / K) Tr(Upsilon Upsilon^H)`.
pub fn power_consumption(cfg: &ScenarioConfig, beams: &BeamformerSet, k: usize) -> f64 {
    let own = crate::linalg::frob_sq(&beams.private[k]);
    let common = crate::linalg::frob_sq(&beams.common);
    cfg.static_power + cfg.pa_inefficiency * own + cfg.pa_inefficiency / cfg.users as f64 * common
}

/// `alpha max_k d_k - (1 - alpha) min_k e_k`. A zero weight suppresses its
/// term entirely so that an infinite delay does not leak into a pure-EE
/// objective.
pub fn objective(alpha: f64, delays: &[f64], ees: &[f64]) -> f64 {
    let max_delay = delays.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_ee = ees.iter().copied().fold(f64::INFINITY, f64::min);
    let mut value = 0.0;
    if alpha > 0.0 {
        value += alpha * max_delay;
    }
    if alpha < 1.0 {
        value -= (1.0 - alpha) * min_ee;
    }
    value
}

/// All physical metrics of a design point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub r_c_per_user: Vec<f64>,
    pub r_p: Vec<f64>,
    /// `z_k + r_pk`, unclamped.
    pub r_total: Vec<f64>,
    pub p: Vec<f64>,
    pub ee: Vec<f64>,
    /// Channel uses; `f64::INFINITY` when the user has no positive rate.
    pub delay: Vec<f64>,
    pub objective: f64,
}

impl MetricsReport {
    pub fn max_delay(&self) -> f64 {
        self.delay.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ee(&self) -> f64 {
        self.ee.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn has_infinite_delay(&self) -> bool {
        self.delay.iter().any(|d| d.is_infinite())
    }
}

/// Evaluate rates, powers, EE, delay and the objective. Negative total rates
/// are clamped to zero for EE and delay.
pub fn metrics_report(cfg: &ScenarioConfig, drop: &ChannelDrop, dp: &DesignPoint) -> Result<MetricsReport> {
    let r_c_per_user = common_rates(cfg, drop, &dp.ris, &dp.beams)?;
    let r_p = private_rates(cfg, drop, &dp.ris, &dp.beams)?;
    let r_total: Vec<f64> = dp.z.iter().zip(&r_p).map(|(z, r)| z + r).collect();
    let p: Vec<f64> = (0..cfg.users).map(|k| power_consumption(cfg, &dp.beams, k)).collect();
    let ee: Vec<f64> = r_total.iter().zip(&p).map(|(r, p)| r.max(0.0) / p).collect();
    let delay: Vec<f64> = r_total.iter().zip(&cfg.message_nats).map(|(&r, &l)| delay_of(l, r)).collect();
    let objective = objective(cfg.latency_weight, &delay, &ee);
    Ok(MetricsReport { r_c_per_user, r_p, r_total, p, ee, delay, objective })
}

/// `l / r` with the infinite-delay sentinel for nonpositive rates.
pub fn delay_of(l: f64, r: f64) -> f64 {
    if l == 0.0 {
        0.0
    } else if r > 0.0 {
        l / r
    } else {
        f64::INFINITY
    }
}
