//! System model: scenario constants, channel realizations, RIS coefficients,
//! beamformers and the effective BS-to-user channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl;
use crate::linalg::{frob_sq, CMat};

/// Absolute tolerance on the RIS magnitude cap.
pub const RIS_MAGNITUDE_TOL: f64 = 1e-9;
/// Relative tolerance on the power budget.
pub const POWER_REL_TOL: f64 = 1e-6;
/// Absolute tolerance on the common-rate cap.
pub const CAP_TOL: f64 = 1e-6;

/// All constants of one downlink scenario. Message lengths are in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub users: usize,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    /// `0` means no RIS.
    pub ris_elements: usize,
    /// BS power budget in watts.
    pub power_budget: f64,
    /// Noise variance in watts.
    pub noise_power: f64,
    pub private_blocklength: f64,
    pub common_blocklength: f64,
    pub private_error: f64,
    pub common_error: f64,
    /// Per-user message lengths, nats.
    pub message_nats: Vec<f64>,
    /// Latency priority weight in `[0, 1]`.
    pub latency_weight: f64,
    /// Inverse power-amplifier efficiency.
    pub pa_inefficiency: f64,
    /// Static power per user, watts.
    pub static_power: f64,
}

impl ScenarioConfig {
    /// Streams per user, `min(N_BS, N_u)`.
    pub fn streams(&self) -> usize {
        self.bs_antennas.min(self.user_antennas)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Scenario(m));
        if self.users == 0 || self.bs_antennas == 0 || self.user_antennas == 0 {
            return fail("user and antenna counts must be positive".into());
        }
        for (name, eps) in [("private_error", self.private_error), ("common_error", self.common_error)] {
            if !(eps > 0.0 && eps < 0.5) {
                return fail(format!("{name} = {eps} must lie in (0, 0.5)"));
            }
        }
        if !(self.power_budget > 0.0 && self.power_budget.is_finite()) {
            return fail(format!("power_budget = {} must be positive", self.power_budget));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return fail(format!("noise_power = {} must be positive", self.noise_power));
        }
        if !(self.private_blocklength >= 1.0 && self.common_blocklength >= 1.0) {
            return fail("blocklengths must be at least 1".into());
        }
        if self.message_nats.len() != self.users {
            return fail(format!("{} message lengths for {} users", self.message_nats.len(), self.users));
        }
        if self.message_nats.iter().any(|&l| !(l >= 0.0 && l.is_finite())) {
            return fail("message lengths must be finite and nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.latency_weight) {
            return fail(format!("latency_weight = {} outside [0, 1]", self.latency_weight));
        }
        if !(self.pa_inefficiency >= 1.0) {
            return fail(format!("pa_inefficiency = {} must be >= 1", self.pa_inefficiency));
        }
        if !(self.static_power > 0.0) {
            return fail(format!("static_power = {} must be positive", self.static_power));
        }
        Ok(())
    }
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDrop {
    /// Direct BS-to-user channels, `N_u x N_BS` each.
    pub direct: Vec<CMat>,
    /// RIS-to-user channels, `N_u x M` each.
    pub ris_user: Vec<CMat>,
    /// BS-to-RIS channel, `M x N_BS`.
    pub bs_ris: CMat,
    pub seed: u64,
}

impl ChannelDrop {
    pub fn users(&self) -> usize {
        self.direct.len()
    }

    pub fn ris_elements(&self) -> usize {
        self.bs_ris.nrows()
    }

    pub fn check(&self, cfg: &ScenarioConfig) -> Result<()> {
        let (k, nu, nb, m) = (cfg.users, cfg.user_antennas, cfg.bs_antennas, cfg.ris_elements);
        if self.direct.len() != k || self.ris_user.len() != k {
            return Err(Error::Shape(format!("drop has {} users, scenario {k}", self.direct.len())));
        }
        if self.bs_ris.shape() != (m, nb) {
            return Err(Error::Shape(format!("BS-RIS channel is {:?}, expected ({m}, {nb})", self.bs_ris.shape())));
        }
        for (f, g) in self.direct.iter().zip(&self.ris_user) {
            if f.shape() != (nu, nb) || g.shape() != (nu, m) {
                return Err(Error::Shape(format!(
                    "user channels {:?}/{:?}, expected ({nu}, {nb})/({nu}, {m})",
                    f.shape(),
                    g.shape()
                )));
            }
        }
        let finite = |c: &CMat| c.iter().all(|z| z.re.is_finite() && z.im.is_finite());
        if !(self.direct.iter().all(finite) && self.ris_user.iter().all(finite) && finite(&self.bs_ris)) {
            return Err(Error::Numeric("channel has non-finite entries".into()));
        }
        Ok(())
    }
}

/// Diagonal of the RIS scattering matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase {
    pub psi: Vec<num_complex::Complex64>,
}

impl RisPhase {
    pub fn zeros(m: usize) -> Self {
        Self { psi: vec![num_complex::Complex64::new(0.0, 0.0); m] }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.psi.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

/// Identifies one transmitted stream block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stream {
    Private(usize),
    Common,
}

/// Common beamformer plus one private beamformer per user, each `N_BS x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub common: CMat,
    pub private: Vec<CMat>,
}

impl BeamformerSet {
    pub fn zeros(cfg: &ScenarioConfig) -> Self {
        let (nb, n) = (cfg.bs_antennas, cfg.streams());
        Self { common: CMat::zeros(nb, n), private: vec![CMat::zeros(nb, n); cfg.users] }
    }

    pub fn block(&self, s: Stream) -> &CMat {
        match s {
            Stream::Private(k) => &self.private[k],
            Stream::Common => &self.common,
        }
    }

    pub fn block_mut(&mut self, s: Stream) -> &mut CMat {
        match s {
            Stream::Private(k) => &mut self.private[k],
            Stream::Common => &mut self.common,
        }
    }

    /// Private streams first, then the common stream.
    pub fn streams(&self) -> impl Iterator<Item = Stream> {
        (0..self.private.len()).map(Stream::Private).chain(std::iter::once(Stream::Common))
    }

    pub fn stream_power(&self, s: Stream) -> f64 {
        frob_sq(self.block(s))
    }

    pub fn total_power(&self) -> f64 {
        self.streams().map(|s| self.stream_power(s)).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { common: self.common.scale(c), private: self.private.iter().map(|p| p.scale(c)).collect() }
    }

    /// `true` when the common beamformer is identically zero (SDMA).
    pub fn is_sdma(&self) -> bool {
        self.common.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn is_zero(&self, s: Stream) -> bool {
        self.block(s).iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

/// Full set of decision variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub beams: BeamformerSet,
    pub ris: RisPhase,
    /// Common-rate shares, nats per channel use.
    pub z: Vec<f64>,
}

/// `H_k(psi) = G_k diag(psi) G + F_k`.
pub fn effective_channel(drop: &ChannelDrop, ris: &RisPhase, k: usize) -> Result<CMat> {
    if k >= drop.users() {
        return Err(Error::Shape(format!("user {k} out of range ({} users)", drop.users())));
    }
    let f = &drop.direct[k];
    let g_k = &drop.ris_user[k];
    let m = drop.ris_elements();
    if ris.len() != m || g_k.ncols() != m || drop.bs_ris.ncols() != f.ncols() || g_k.nrows() != f.nrows() {
        return Err(Error::Shape(format!(
            "psi has {} entries, RIS has {m} elements; F_k {:?}, G_k {:?}, G {:?}",
            ris.len(),
            f.shape(),
            g_k.shape(),
            drop.bs_ris.shape()
        )));
    }
    if m == 0 {
        return Ok(f.clone());
    }
    // scale the columns of G_k by psi instead of forming diag(psi)
    let mut scaled = g_k.clone();
    for (j, psi) in ris.psi.iter().enumerate() {
        for i in 0..scaled.nrows() {
            scaled[(i, j)] *= psi;
        }
    }
    Ok(scaled * &drop.bs_ris + f)
}

/// Effective channels of every user.
pub fn effective_channels(drop: &ChannelDrop, ris: &RisPhase) -> Result<Vec<CMat>> {
    (0..drop.users()).map(|k| effective_channel(drop, ris, k)).collect()
}

/// Signed slacks of the constraints of the joint problem. Positive slack
/// means the constraint holds with margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FeasibilityVerdict {
    pub feasible: bool,
    /// `P - total transmit power`.
    pub power_slack: f64,
    /// `min_k z_k`.
    pub share_slack: f64,
    /// `max(min_k r_ck, 0) - sum_k z_k`.
    pub cap_slack: f64,
    /// `1 - max_m |psi_m|`, `+inf` without an RIS.
    pub ris_slack: f64,
}

/// Check a design against the power budget, share nonnegativity, the
/// common-rate cap (on true rates) and the RIS magnitude cap.
///
/// A common stream carrying no payload (`sum z = 0`) is never decoded, so the
/// cap is measured against `max(min_k r_ck, 0)`.
pub fn validate_design(cfg: &ScenarioConfig, drop: &ChannelDrop, dp: &DesignPoint) -> Result<FeasibilityVerdict> {
    let power_slack = cfg.power_budget - dp.beams.total_power();
    let share_slack = dp.z.iter().copied().fold(f64::INFINITY, f64::min);
    let share_slack = if dp.z.is_empty() { 0.0 } else { share_slack };
    let min_common = fbl::common_rates(cfg, drop, &dp.ris, &dp.beams)?.into_iter().fold(f64::INFINITY, f64::min);
    let cap_slack = min_common.max(0.0) - dp.z.iter().sum::<f64>();
    let ris_slack = if dp.ris.is_empty() { f64::INFINITY } else { 1.0 - dp.ris.max_magnitude() };
    let feasible = power_slack >= -POWER_REL_TOL * cfg.power_budget
        && share_slack >= 0.0
        && cap_slack >= -CAP_TOL
        && ris_slack >= -RIS_MAGNITUDE_TOL;
    Ok(FeasibilityVerdict { feasible, power_slack, share_slack, cap_slack, ris_slack })
}

/// A scenario rescaled so that `sigma^2 = 1` and `P = 1`. Rates, powers and
/// the objective are invariant; beamformers map through `beam_scale`.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub cfg: ScenarioConfig,
    pub drop: ChannelDrop,
    /// Physical beamformer = `beam_scale` x normalized beamformer.
    pub beam_scale: f64,
}

impl Normalized {
    pub fn new(cfg: &ScenarioConfig, drop: &ChannelDrop) -> Self {
        let beam_scale = cfg.power_budget.sqrt();
        let chan_scale = beam_scale / cfg.noise_power.sqrt();
        let mut ncfg = cfg.clone();
        ncfg.noise_power = 1.0;
        ncfg.power_budget = 1.0;
        ncfg.pa_inefficiency = cfg.pa_inefficiency * cfg.power_budget;
        let ndrop = ChannelDrop {
            direct: drop.direct.iter().map(|f| f.scale(chan_scale)).collect(),
            ris_user: drop.ris_user.iter().map(|g| g.scale(chan_scale)).collect(),
            bs_ris: drop.bs_ris.clone(),
            seed: drop.seed,
        };
        Self { cfg: ncfg, drop: ndrop, beam_scale }
    }

    pub fn to_physical(&self, beams: &BeamformerSet) -> BeamformerSet {
        beams.scaled(self.beam_scale)
    }

    pub fn to_normalized(&self, beams: &BeamformerSet) -> BeamformerSet {
        beams.scaled(1.0 / self.beam_scale)
    }
}
