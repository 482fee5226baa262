//! Alternating majorization-minimization over beamformers and RIS
//! coefficients.
//!
//! Each iteration solves the beamforming subproblem with the RIS frozen, then
//! the RIS subproblem with the beamformers frozen, refreshing the
//! quadratic-transform weights from the true rates in between. Because every
//! minorant is tight at its anchor and the anchor is feasible for both
//! subproblems, the true objective cannot increase beyond solver tolerance;
//! a step that does increase it is rejected and logged.

use std::fmt;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{
    build_bf_subproblem, build_ris_subproblem, ClarabelSolver, SolveStatus, SolverOptions, SubproblemSolution,
};
use crate::error::{Error, Result};
use crate::fbl::{self, metrics_report, power_consumption, MetricsReport};
use crate::linalg::{frob_sq, hermitian_part, top_eigenvectors, top_right_singular, CMat};
use crate::model::{
    effective_channels, validate_design, BeamformerSet, ChannelDrop, DesignPoint, Normalized, RisPhase, ScenarioConfig,
    Stream,
};
use crate::surrogate::{lemma1_coefficients, lemma2_coefficients};

/// Fraction of the budget used by the initial point.
pub const INIT_POWER_FRACTION: f64 = 0.9;
/// Streams whose normalized power falls below this are candidates for
/// switching off.
const SNAP_POWER: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    Rsma,
    Sdma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RisMode {
    Optimized,
    RandomPhase,
    Absent,
}

/// One benchmark scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariantSpec {
    pub access: Access,
    pub ris_mode: RisMode,
}

impl VariantSpec {
    pub const fn new(access: Access, ris_mode: RisMode) -> Self {
        Self { access, ris_mode }
    }

    /// All six schemes in the canonical order.
    pub fn all() -> Vec<VariantSpec> {
        let mut out = Vec::new();
        for ris_mode in [RisMode::Optimized, RisMode::Absent, RisMode::RandomPhase] {
            for access in [Access::Rsma, Access::Sdma] {
                out.push(VariantSpec { access, ris_mode });
            }
        }
        out
    }

    pub fn label(&self) -> String {
        let ris = match self.ris_mode {
            RisMode::Optimized => "RIS",
            RisMode::Absent => "No-RIS",
            RisMode::RandomPhase => "RIS-Rand",
        };
        let access = match self.access {
            Access::Rsma => "RSMA",
            Access::Sdma => "SDMA",
        };
        format!("{ris}-{access}")
    }

    pub fn parse(label: &str) -> Result<Self> {
        VariantSpec::all()
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(label))
            .ok_or_else(|| Error::Plan(format!("unknown variant {label:?}")))
    }
}

impl fmt::Display for VariantSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AoOptions {
    /// Relative objective change below which the loop stops.
    pub delta: f64,
    pub max_iter: usize,
    pub solver: SolverOptions,
}

impl Default for AoOptions {
    fn default() -> Self {
        Self { delta: 1e-4, max_iter: 100, solver: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Converged,
    MaxIterations,
    /// Every stream collapsed to zero.
    Degenerate,
    /// No subproblem was ever feasible and the objective stayed infinite.
    Infeasible,
    /// The solver failed on both half-steps of an iteration.
    SolverFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub index: usize,
    /// True objective after the iteration.
    pub objective: f64,
    /// Optimal value of the beamforming subproblem.
    pub bf_surrogate: f64,
    /// Optimal value of the RIS subproblem, when it ran.
    pub ris_surrogate: Option<f64>,
    pub bf_status: Option<SolveStatus>,
    pub ris_status: Option<SolveStatus>,
    /// True objective of the raw subproblem solutions, before acceptance.
    pub candidates: Vec<f64>,
    pub rejected_steps: usize,
    pub common_silenced: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartKind {
    Initial,
    /// The initial point with only the common stream on.
    CommonOnly,
    WarmStart,
}

/// Outcome of one alternating solve.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub variant: VariantSpec,
    pub initial_objective: f64,
    pub iterations: Vec<IterationRecord>,
    /// Best design under the true objective, physical units.
    pub design: DesignPoint,
    pub metrics: MetricsReport,
    pub verdict: Verdict,
    pub start: StartKind,
    pub reinitializations: usize,
}

impl SolveTrace {
    pub fn objective(&self) -> f64 {
        self.metrics.objective
    }

    /// Objective sequence: initial value followed by one entry per iteration.
    pub fn objective_sequence(&self) -> Vec<f64> {
        std::iter::once(self.initial_objective).chain(self.iterations.iter().map(|r| r.objective)).collect()
    }

    pub fn converged(&self) -> bool {
        self.verdict == Verdict::Converged
    }
}

/// Restrict a scenario to what a variant can use: no RIS for `Absent`.
pub fn variant_problem(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    variant: VariantSpec,
) -> (ScenarioConfig, ChannelDrop) {
    if variant.ris_mode != RisMode::Absent || cfg.ris_elements == 0 {
        return (cfg.clone(), drop.clone());
    }
    let mut c = cfg.clone();
    c.ris_elements = 0;
    let d = ChannelDrop {
        direct: drop.direct.clone(),
        ris_user: drop.direct.iter().map(|f| CMat::zeros(f.nrows(), 0)).collect(),
        bs_ris: CMat::zeros(0, cfg.bs_antennas),
        seed: drop.seed,
    };
    (c, d)
}

/// Uniform unit-modulus RIS coefficients.
pub fn random_unit_phases<R: Rng + ?Sized>(m: usize, rng: &mut R) -> RisPhase {
    RisPhase { psi: (0..m).map(|_| Complex64::from_polar(1.0, rng.gen_range(0.0..std::f64::consts::TAU))).collect() }
}

fn scale_to_power(m: &CMat, power: f64) -> CMat {
    let p = frob_sq(m);
    if p > 0.0 {
        m.scale((power / p).sqrt())
    } else {
        m.clone()
    }
}

/// Feasible starting point: private beamformers along each user's strongest
/// right singular vectors, the common beamformer along the dominant
/// eigenvectors of `sum_k H_k^H H_k`, equal power shares of 90% of the budget,
/// and `z = 0`.
pub fn initialize<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    variant: VariantSpec,
    rng: &mut R,
) -> Result<DesignPoint> {
    cfg.validate()?;
    drop.check(cfg)?;
    let m = cfg.ris_elements;
    let ris = match variant.ris_mode {
        RisMode::Optimized | RisMode::RandomPhase => random_unit_phases(m, rng),
        RisMode::Absent => RisPhase::zeros(m),
    };
    let channels = effective_channels(drop, &ris)?;
    let n = cfg.streams();
    let blocks = match variant.access {
        Access::Rsma => cfg.users + 1,
        Access::Sdma => cfg.users,
    } as f64;
    let share = INIT_POWER_FRACTION * cfg.power_budget / blocks;

    let private: Vec<CMat> = channels
        .iter()
        .map(|h| {
            let v = top_right_singular(h, n);
            if frob_sq(&v) > 0.0 {
                scale_to_power(&v, share)
            } else {
                // a zero channel: any direction will do
                scale_to_power(&CMat::identity(cfg.bs_antennas, n), share)
            }
        })
        .collect();
    let common = match variant.access {
        Access::Sdma => CMat::zeros(cfg.bs_antennas, n),
        Access::Rsma => {
            let mut gram = CMat::zeros(cfg.bs_antennas, cfg.bs_antennas);
            for h in &channels {
                gram += h.adjoint() * h;
            }
            let v = top_eigenvectors(&hermitian_part(&gram), n);
            scale_to_power(&v, share)
        }
    };
    Ok(DesignPoint { beams: BeamformerSet { common, private }, ris, z: vec![0.0; cfg.users] })
}

/// An RSMA start with every private stream off and the initial power on the
/// common stream. Zero streams stay pinned, so this explores the
/// common-only face.
fn common_only(cfg: &ScenarioConfig, init: &DesignPoint) -> DesignPoint {
    let mut dp = init.clone();
    dp.beams.common = scale_to_power(&init.beams.common, INIT_POWER_FRACTION * cfg.power_budget);
    for v in &mut dp.beams.private {
        v.fill(Complex64::new(0.0, 0.0));
    }
    dp
}

/// Quadratic-transform weights `lambda_k = sqrt(max(r_k, 0)) / p_k`.
pub fn lambda_update(cfg: &ScenarioConfig, drop: &ChannelDrop, dp: &DesignPoint) -> Result<Vec<f64>> {
    let r_p = fbl::private_rates(cfg, drop, &dp.ris, &dp.beams)?;
    Ok((0..cfg.users).map(|k| (dp.z[k] + r_p[k]).max(0.0).sqrt() / power_consumption(cfg, &dp.beams, k)).collect())
}

/// Working state of one solve in normalized units.
struct State<'a> {
    cfg: &'a ScenarioConfig,
    drop: &'a ChannelDrop,
    dp: DesignPoint,
    objective: f64,
}

impl<'a> State<'a> {
    fn new(cfg: &'a ScenarioConfig, drop: &'a ChannelDrop, dp: DesignPoint) -> Result<Self> {
        let objective = metrics_report(cfg, drop, &dp)?.objective;
        Ok(Self { cfg, drop, dp, objective })
    }

    /// Pull a candidate back inside the power budget and the common cap, which
    /// the solver satisfies only to its tolerance.
    fn repair(&self, mut dp: DesignPoint) -> Result<DesignPoint> {
        let total = dp.beams.total_power();
        if total > self.cfg.power_budget {
            dp.beams = dp.beams.scaled((self.cfg.power_budget / total).sqrt());
        }
        for p in &mut dp.ris.psi {
            let r = p.norm();
            if r > 1.0 {
                *p /= r;
            }
        }
        for z in &mut dp.z {
            *z = z.max(0.0);
        }
        let sum: f64 = dp.z.iter().sum();
        if sum > 0.0 {
            let cap = fbl::common_rates(self.cfg, self.drop, &dp.ris, &dp.beams)?
                .into_iter()
                .fold(f64::INFINITY, f64::min)
                .max(0.0);
            if sum > cap {
                let s = cap / sum;
                for z in &mut dp.z {
                    *z *= s;
                }
            }
        }
        Ok(dp)
    }

    /// Accept `candidate` if it is feasible and does not increase the true
    /// objective. Returns the candidate's objective.
    fn offer(&mut self, candidate: DesignPoint) -> Result<(f64, bool)> {
        let candidate = self.repair(candidate)?;
        let verdict = validate_design(self.cfg, self.drop, &candidate)?;
        let obj = metrics_report(self.cfg, self.drop, &candidate)?.objective;
        let better = verdict.feasible && (obj <= self.objective || self.objective.is_nan());
        if better {
            self.dp = candidate;
            self.objective = obj;
        }
        Ok((obj, better))
    }

    /// Switch off streams with negligible power when that does not hurt.
    fn snap_weak_streams(&mut self) -> Result<()> {
        let streams: Vec<Stream> = self.dp.beams.streams().collect();
        for s in streams {
            let p = self.dp.beams.stream_power(s);
            if p == 0.0 || p > SNAP_POWER * self.cfg.power_budget {
                continue;
            }
            let mut cand = self.dp.clone();
            *cand.beams.block_mut(s) = CMat::zeros(self.cfg.bs_antennas, self.cfg.streams());
            if s == Stream::Common {
                cand.z.iter_mut().for_each(|z| *z = 0.0);
            }
            self.offer(cand)?;
        }
        Ok(())
    }

    /// Zero out streams reported as degenerate.
    fn pin(&mut self, streams: &[Stream]) -> Result<()> {
        for &s in streams {
            *self.dp.beams.block_mut(s) = CMat::zeros(self.cfg.bs_antennas, self.cfg.streams());
            if s == Stream::Common {
                self.dp.z.iter_mut().for_each(|z| *z = 0.0);
            }
        }
        self.objective = metrics_report(self.cfg, self.drop, &self.dp)?.objective;
        Ok(())
    }

    fn all_off(&self) -> bool {
        self.dp.beams.streams().all(|s| self.dp.beams.is_zero(s))
    }
}

struct HalfStep {
    surrogate: f64,
    status: Option<SolveStatus>,
    candidate: Option<f64>,
    accepted: bool,
    silenced: bool,
}

/// Whether a subproblem result is worth checking against the true objective.
/// Iterates from a stalled solve are still candidates since acceptance
/// re-validates them.
fn offerable(sol: &SubproblemSolution) -> bool {
    sol.status != SolveStatus::Infeasible
        && sol.beams.streams().all(|s| sol.beams.block(s).iter().all(|v| v.re.is_finite() && v.im.is_finite()))
        && sol.ris.psi.iter().all(|p| p.re.is_finite() && p.im.is_finite())
        && sol.z.iter().all(|z| z.is_finite())
}

fn bf_step(state: &mut State<'_>, solver: &ClarabelSolver, reinit: &mut usize) -> Result<HalfStep> {
    let co = loop {
        match lemma1_coefficients(state.cfg, state.drop, &state.dp.ris, &state.dp.beams) {
            Ok(co) => break co,
            Err(Error::Degenerate(streams)) => {
                *reinit += 1;
                state.pin(&streams)?;
                if state.all_off() {
                    return Err(Error::Degenerate(streams));
                }
            }
            Err(e) => return Err(e),
        }
    };
    let lambda = lambda_update(state.cfg, state.drop, &state.dp)?;
    let sub = build_bf_subproblem(state.cfg, state.drop, &state.dp.ris, &co, &lambda)?;
    let sol = sub.solve_with(solver);
    let mut step = HalfStep {
        surrogate: sol.objective,
        status: Some(sol.status),
        candidate: None,
        accepted: false,
        silenced: sub.common_silenced,
    };
    if offerable(&sol) {
        let cand = DesignPoint { beams: sol.beams, ris: state.dp.ris.clone(), z: sol.z };
        let (obj, ok) = state.offer(cand)?;
        step.candidate = Some(obj);
        step.accepted = ok;
        state.snap_weak_streams()?;
    }
    Ok(step)
}

fn ris_step(state: &mut State<'_>, solver: &ClarabelSolver, reinit: &mut usize) -> Result<HalfStep> {
    let co = loop {
        match lemma2_coefficients(state.cfg, state.drop, &state.dp.beams, &state.dp.ris) {
            Ok(co) => break co,
            Err(Error::Degenerate(streams)) => {
                *reinit += 1;
                state.pin(&streams)?;
                if state.all_off() {
                    return Err(Error::Degenerate(streams));
                }
            }
            Err(e) => return Err(e),
        }
    };
    let sub = build_ris_subproblem(state.cfg, state.drop, &state.dp.beams, &co)?;
    let sol = sub.solve_with(solver);
    let mut step = HalfStep {
        surrogate: sol.objective,
        status: Some(sol.status),
        candidate: None,
        accepted: false,
        silenced: sub.common_silenced,
    };
    if offerable(&sol) {
        let cand = DesignPoint { beams: state.dp.beams.clone(), ris: sol.ris, z: sol.z };
        let (obj, ok) = state.offer(cand)?;
        step.candidate = Some(obj);
        step.accepted = ok;
    }
    Ok(step)
}

/// Force a design into the variant's restriction.
fn conform(dp: &mut DesignPoint, cfg: &ScenarioConfig, variant: VariantSpec) {
    if variant.access == Access::Sdma {
        dp.beams.common = CMat::zeros(cfg.bs_antennas, cfg.streams());
        dp.z.iter_mut().for_each(|z| *z = 0.0);
    }
    if variant.ris_mode == RisMode::Absent {
        dp.ris = RisPhase::zeros(cfg.ris_elements);
    }
}

/// Run the alternating loop from `start` (physical units, already conformed
/// to the variant).
fn run_from(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    variant: VariantSpec,
    options: &AoOptions,
    start: DesignPoint,
    start_kind: StartKind,
) -> Result<SolveTrace> {
    let (vcfg, vdrop) = variant_problem(cfg, drop, variant);
    let norm = Normalized::new(&vcfg, &vdrop);
    let mut start_n = start.clone();
    start_n.beams = norm.to_normalized(&start.beams);
    if variant.ris_mode == RisMode::Absent {
        start_n.ris = RisPhase::zeros(0);
    }
    let solver = ClarabelSolver::new(options.solver);
    let mut state = State::new(&norm.cfg, &norm.drop, start_n)?;
    let initial_objective = state.objective;
    let optimize_ris = variant.ris_mode == RisMode::Optimized && vcfg.ris_elements > 0;

    let mut iterations = Vec::new();
    let mut reinit = 0;
    let mut verdict = Verdict::MaxIterations;
    let mut prev = state.objective;
    for index in 1..=options.max_iter {
        let clock = Instant::now();
        let bf = match bf_step(&mut state, &solver, &mut reinit) {
            Ok(s) => s,
            Err(Error::Degenerate(_)) => {
                verdict = Verdict::Degenerate;
                break;
            }
            Err(e) => return Err(e),
        };
        let ris = if optimize_ris {
            match ris_step(&mut state, &solver, &mut reinit) {
                Ok(s) => Some(s),
                Err(Error::Degenerate(_)) => {
                    verdict = Verdict::Degenerate;
                    break;
                }
                Err(e) => return Err(e),
            }
        } else {
            None
        };
        let mut candidates: Vec<f64> = bf.candidate.into_iter().collect();
        let mut rejected = usize::from(bf.candidate.is_some() && !bf.accepted);
        if let Some(r) = &ris {
            candidates.extend(r.candidate);
            rejected += usize::from(r.candidate.is_some() && !r.accepted);
        }
        iterations.push(IterationRecord {
            index,
            objective: state.objective,
            bf_surrogate: bf.surrogate,
            ris_surrogate: ris.as_ref().map(|r| r.surrogate),
            bf_status: bf.status,
            ris_status: ris.as_ref().and_then(|r| r.status),
            candidates,
            rejected_steps: rejected,
            common_silenced: bf.silenced || ris.as_ref().is_some_and(|r| r.silenced),
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        });

        let bf_failed = !bf.status.is_some_and(|s| s.is_usable()) && !bf.accepted;
        let ris_failed = ris.as_ref().is_some_and(|r| !r.status.is_some_and(|s| s.is_usable()) && !r.accepted);
        if bf_failed && (ris.is_none() || ris_failed) {
            let infeasible = bf.status == Some(SolveStatus::Infeasible);
            verdict =
                if !state.objective.is_finite() && infeasible { Verdict::Infeasible } else { Verdict::SolverFailure };
            break;
        }
        let obj = state.objective;
        if obj.is_finite() && prev.is_finite() {
            let change = (prev - obj).abs() / prev.abs().max(f64::MIN_POSITIVE);
            if change < options.delta {
                verdict = Verdict::Converged;
                break;
            }
        }
        prev = obj;
    }

    let mut design = state.dp.clone();
    design.beams = norm.to_physical(&design.beams);
    if variant.ris_mode == RisMode::Absent {
        design.ris = RisPhase::zeros(cfg.ris_elements);
    }
    let metrics = metrics_report(cfg, drop, &design)?;
    Ok(SolveTrace {
        variant,
        initial_objective,
        iterations,
        design,
        metrics,
        verdict,
        start: start_kind,
        reinitializations: reinit,
    })
}

/// Solve one drop for one variant. Each design in `warm_starts` (conformed to
/// the variant) seeds a further run, and the best final objective wins.
pub fn ao_solve<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    variant: VariantSpec,
    options: &AoOptions,
    warm_starts: &[&DesignPoint],
    rng: &mut R,
) -> Result<SolveTrace> {
    let init = initialize(cfg, drop, variant, rng)?;
    let mut best = run_from(cfg, drop, variant, options, init.clone(), StartKind::Initial)?;
    if variant.access == Access::Rsma {
        let alt = run_from(cfg, drop, variant, options, common_only(cfg, &init), StartKind::CommonOnly)?;
        if alt.objective() < best.objective() || best.objective().is_nan() {
            best = alt;
        }
    }
    for ws in warm_starts {
        let mut start = (*ws).clone();
        if start.ris.len() != cfg.ris_elements || start.z.len() != cfg.users {
            return Err(Error::Shape(format!(
                "warm start has {} RIS coefficients and {} users, scenario {} and {}",
                start.ris.len(),
                start.z.len(),
                cfg.ris_elements,
                cfg.users
            )));
        }
        if variant.ris_mode == RisMode::RandomPhase {
            start.ris = init.ris.clone();
        }
        conform(&mut start, cfg, variant);
        let alt = run_from(cfg, drop, variant, options, start, StartKind::WarmStart)?;
        if alt.objective() < best.objective() || best.objective().is_nan() {
            best = alt;
        }
    }
    Ok(best)
}
