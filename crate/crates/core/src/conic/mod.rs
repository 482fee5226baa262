//! Second-order cone reformulations of the two alternating subproblems.
//!
//! Both subproblems share the epigraph structure
//!
//! ```text
//! min  alpha d - (1 - alpha) e
//! s.t. sum_k z_k <= r_ck(.)                     (common cap, every k)
//!      r_pk(.) + z_k >= t_k >= t_min
//!      l_k <= d t_k
//!      <energy-efficiency epigraph>
//! ```
//!
//! with the rates replaced by their concave quadratic minorants. A minorant
//! `c + g.y - ||w(y)||^2` of an affine block map `y -> V(y)` becomes a rotated
//! cone `||w(y)||^2 <= c + g.y - (...)`.

mod bf;
mod program;
mod ris;

pub use bf::build_bf_subproblem;
pub use program::{
    solve_conic, AffExpr, ClarabelSolver, ConeKind, ConicProgram, ConicSolution, ConicSolver, Constraint, SolveStatus,
    SolverOptions, VarBlock,
};
pub use ris::build_ris_subproblem;

use num_complex::Complex64;
use serde::Serialize;

use crate::fbl::{delay_of, ReceivedBlocks};
use crate::linalg::{psd_factor, re_inner, re_trace, realify, CMat};
use crate::model::{BeamformerSet, RisPhase, ScenarioConfig, Stream};
use crate::surrogate::{BoundCoefficients, RateKind, SurrogateCoefficients};

/// Smallest admissible epigraph rate `t_k`, nats per channel use.
pub const T_MIN: f64 = 1e-9;

/// Received block as an affine function of the real decision vector:
/// `V(x) = offset + sum_i x[i] * dir_i`.
#[derive(Debug, Clone)]
pub(crate) struct AffineBlock {
    pub offset: CMat,
    pub dirs: Vec<(usize, CMat)>,
}

impl AffineBlock {
    pub fn constant(offset: CMat) -> Self {
        Self { offset, dirs: Vec::new() }
    }

    pub fn eval(&self, x: &[f64]) -> CMat {
        let mut v = self.offset.clone();
        for (i, d) in &self.dirs {
            v += d.scale(x[*i]);
        }
        v
    }
}

/// Affine received blocks of one user.
#[derive(Debug, Clone)]
pub(crate) struct UserBlocks {
    pub private: Vec<AffineBlock>,
    pub common: AffineBlock,
}

impl UserBlocks {
    pub fn eval(&self, x: &[f64]) -> ReceivedBlocks {
        ReceivedBlocks { private: self.private.iter().map(|b| b.eval(x)).collect(), common: self.common.eval(x) }
    }
}

/// Concave quadratic `lin(x) - ||w(x)||^2` in real variables.
#[derive(Debug, Clone)]
pub struct QuadForm {
    pub lin: AffExpr,
    pub w: Vec<AffExpr>,
}

impl QuadForm {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.lin.eval(x) - self.w.iter().map(|e| e.eval(x).powi(2)).sum::<f64>()
    }
}

fn realified_rows(lh: &CMat, block: &AffineBlock) -> Vec<AffExpr> {
    let offset = realify(&(lh * &block.offset));
    let mut rows: Vec<AffExpr> = offset.into_iter().map(AffExpr::constant).collect();
    for (i, d) in &block.dirs {
        for (row, coef) in rows.iter_mut().zip(realify(&(lh * d))) {
            if coef != 0.0 {
                row.terms.push((*i, coef));
            }
        }
    }
    rows.retain(|r| r.constant != 0.0 || !r.terms.is_empty());
    rows
}

/// Express a minorant as a [`QuadForm`] over the program variables, using
/// `B = L L^H` so that `Tr(B V V^H) = ||L^H V||_F^2`.
pub(crate) fn bound_quadform(
    bound: &BoundCoefficients,
    blocks: &UserBlocks,
    kind: RateKind,
    k: usize,
    sigma2: f64,
) -> QuadForm {
    let mut lin = AffExpr::constant(bound.a - sigma2 * re_trace(&bound.b));
    let mut add_linear = |a: &CMat, block: &AffineBlock| {
        lin.constant += 2.0 * re_inner(a, &block.offset);
        for (i, d) in &block.dirs {
            let coef = 2.0 * re_inner(a, d);
            if coef != 0.0 {
                lin.terms.push((*i, coef));
            }
        }
    };
    let own = match kind {
        RateKind::Private => &blocks.private[k],
        RateKind::Common => &blocks.common,
    };
    add_linear(&bound.own, own);
    for (a, block) in bound.cross.iter().zip(&blocks.private) {
        add_linear(a, block);
    }

    let lh = psd_factor(&bound.b).adjoint();
    let mut w = Vec::new();
    for block in &blocks.private {
        w.extend(realified_rows(&lh, block));
    }
    if kind == RateKind::Common {
        w.extend(realified_rows(&lh, &blocks.common));
    }
    QuadForm { lin, w }
}

/// Variable positions inside a subproblem.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    /// Offsets of the beamformer blocks that are decision variables.
    pub beams: Vec<(Stream, usize)>,
    /// Offset of the realified RIS coefficients.
    pub psi: Option<usize>,
    /// Offset of the common-rate shares; `None` when the common stream is off.
    pub z: Option<usize>,
    pub t: usize,
    pub u: Option<usize>,
    pub e: Option<usize>,
    /// Holds `d / delay_scale`.
    pub d: Option<usize>,
    /// The program objective is the surrogate objective divided by this.
    pub delay_scale: f64,
}

/// A built subproblem ready for the solver.
#[derive(Debug, Clone)]
pub struct Subproblem {
    pub program: ConicProgram,
    pub layout: Layout,
    /// The common cap was replaced by `sum z <= 0` because some common
    /// minorant was negative at the anchor.
    pub common_silenced: bool,
    pub(crate) users: Vec<UserBlocks>,
    pub(crate) fixed_beams: BeamformerSet,
    pub(crate) fixed_ris: RisPhase,
}

/// Decoded solution of a subproblem.
#[derive(Debug, Clone, Serialize)]
pub struct SubproblemSolution {
    #[serde(skip)]
    pub beams: BeamformerSet,
    #[serde(skip)]
    pub ris: RisPhase,
    pub z: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Option<f64>,
    pub d: Option<f64>,
    pub status: SolveStatus,
    pub objective: f64,
}

fn beam_index(offset: usize, rows: usize, a: usize, b: usize) -> usize {
    offset + 2 * (b * rows + a)
}

impl Subproblem {
    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Decode a solver result into design-space quantities.
    pub fn decode(&self, sol: &ConicSolution) -> SubproblemSolution {
        let x = &sol.x;
        let k_users = self.num_users();
        let mut beams = self.fixed_beams.clone();
        for &(s, off) in &self.layout.beams {
            let blk = beams.block_mut(s);
            let rows = blk.nrows();
            for b in 0..blk.ncols() {
                for a in 0..rows {
                    let i = beam_index(off, rows, a, b);
                    blk[(a, b)] = Complex64::new(x[i], x[i + 1]);
                }
            }
        }
        let mut ris = self.fixed_ris.clone();
        if let Some(off) = self.layout.psi {
            for (m, p) in ris.psi.iter_mut().enumerate() {
                *p = Complex64::new(x[off + 2 * m], x[off + 2 * m + 1]);
            }
        }
        let z = match self.layout.z {
            Some(off) => x[off..off + k_users].iter().map(|v| v.max(0.0)).collect(),
            None => vec![0.0; k_users],
        };
        let t = x[self.layout.t..self.layout.t + k_users].to_vec();
        let u = self.layout.u.map_or_else(Vec::new, |off| x[off..off + k_users].to_vec());
        SubproblemSolution {
            beams,
            ris,
            z,
            t,
            u,
            e: self.layout.e.map(|i| x[i]),
            d: self.layout.d.map(|i| x[i] * self.layout.delay_scale),
            status: sol.status,
            objective: sol.objective * self.layout.delay_scale,
        }
    }

    /// Solve with `solver` and decode.
    pub fn solve_with(&self, solver: &dyn ConicSolver) -> SubproblemSolution {
        self.decode(&solver.solve(&self.program))
    }

    pub fn solve(&self) -> SubproblemSolution {
        self.solve_with(&ClarabelSolver::default())
    }

    /// Write beamformers / RIS coefficients into a variable vector.
    pub(crate) fn encode_design(&self, x: &mut [f64], beams: &BeamformerSet, ris: &RisPhase) {
        for &(s, off) in &self.layout.beams {
            let blk = beams.block(s);
            let rows = blk.nrows();
            for b in 0..blk.ncols() {
                for a in 0..rows {
                    let i = beam_index(off, rows, a, b);
                    x[i] = blk[(a, b)].re;
                    x[i + 1] = blk[(a, b)].im;
                }
            }
        }
        if let Some(off) = self.layout.psi {
            for (m, p) in ris.psi.iter().enumerate() {
                x[off + 2 * m] = p.re;
                x[off + 2 * m + 1] = p.im;
            }
        }
    }

    /// Variable vector representing the design `dp` (with its true rates in
    /// the epigraph variables). For the anchor of the program this point is
    /// feasible, which is what makes every half-step a descent step.
    pub fn plug_in(
        &self,
        cfg: &ScenarioConfig,
        drop: &crate::model::ChannelDrop,
        dp: &crate::model::DesignPoint,
        lambda: Option<&[f64]>,
    ) -> crate::error::Result<Vec<f64>> {
        let mut x = vec![0.0; self.program.num_vars];
        self.encode_design(&mut x, &dp.beams, &dp.ris);
        let report = crate::fbl::metrics_report(cfg, drop, dp)?;
        fill_epigraph(self, cfg, &mut x, &dp.z, &report.r_total, &report.p, lambda);
        Ok(x)
    }

    /// Received blocks of user `k` at the variable vector `x`.
    pub fn received_at(&self, x: &[f64], k: usize) -> ReceivedBlocks {
        self.users[k].eval(x)
    }
}

/// How the energy-efficiency epigraph is encoded.
pub(crate) enum EeEncoding<'a> {
    /// Beamforming half-step: quadratic-transform weights `lambda`.
    QuadraticTransform { lambda: &'a [f64] },
    /// RIS half-step: powers are constants.
    FixedPower { power: &'a [f64] },
}

/// Add everything but the design-variable-specific constraints (power budget,
/// RIS disc) to `prog`.
pub(crate) fn add_epigraph(
    prog: &mut ConicProgram,
    cfg: &ScenarioConfig,
    co: &SurrogateCoefficients,
    users: &[UserBlocks],
    anchor_x: &[f64],
    beam_layout: &[(Stream, usize)],
    ee: EeEncoding<'_>,
) -> (Layout, bool) {
    let k_users = cfg.users;
    let alpha = cfg.latency_weight;
    let sigma2 = cfg.noise_power;
    let use_d = alpha > 0.0;
    let use_e = alpha < 1.0;

    let z = co.common.as_ref().map(|_| prog.add_block("z", k_users));
    let t = prog.add_block("t", k_users);
    let u = match ee {
        EeEncoding::QuadraticTransform { .. } if use_e => Some(prog.add_block("u", k_users)),
        _ => None,
    };
    let e = use_e.then(|| prog.add_block("e", 1));
    let d = use_d.then(|| prog.add_block("d", 1));
    // delays are carried in units of the longest message to keep the cones
    // well scaled
    let longest = cfg.message_nats.iter().copied().fold(0.0, f64::max);
    let delay_scale = if use_d && longest > 0.0 { longest } else { 1.0 };
    if let Some(e) = e {
        prog.set_cost(e, -(1.0 - alpha) / delay_scale);
    }
    if let Some(d) = d {
        prog.set_cost(d, alpha);
    }

    let z_expr = |k: usize| z.map_or_else(AffExpr::default, |off| AffExpr::var(off + k));
    let z_sum = || {
        z.map_or_else(AffExpr::default, |off| AffExpr {
            terms: (0..k_users).map(|k| (off + k, 1.0)).collect(),
            constant: 0.0,
        })
    };

    // common-rate cap
    let mut silenced = false;
    if let (Some(zoff), Some(bounds)) = (z, co.common.as_ref()) {
        for k in 0..k_users {
            prog.add_nonneg("z >= 0", AffExpr::var(zoff + k));
        }
        let forms: Vec<QuadForm> =
            bounds.iter().enumerate().map(|(k, b)| bound_quadform(b, &users[k], RateKind::Common, k, sigma2)).collect();
        let anchor_min = forms.iter().map(|f| f.eval(anchor_x)).fold(f64::INFINITY, f64::min);
        if anchor_min < 0.0 {
            silenced = true;
            prog.add_eq_zero("sum z = 0", z_sum());
        } else {
            for f in forms {
                prog.add_quad_le("common cap", f.w, f.lin.plus(&z_sum().scaled(-1.0)));
            }
        }
    }

    for k in 0..k_users {
        let form = co.private[k]
            .as_ref()
            .map(|b| bound_quadform(b, &users[k], RateKind::Private, k, sigma2))
            .unwrap_or(QuadForm { lin: AffExpr::default(), w: Vec::new() });
        let rate = form.lin.clone().plus(&z_expr(k));

        prog.add_quad_le("private rate >= t", form.w.clone(), rate.clone().plus_term(t + k, -1.0));
        prog.add_nonneg("t >= t_min", AffExpr::var(t + k).plus_const(-T_MIN));

        if let Some(d) = d {
            let l = cfg.message_nats[k];
            if l > 0.0 {
                prog.add_rotated(
                    "l <= d t",
                    AffExpr::term(d, delay_scale),
                    AffExpr::var(t + k),
                    vec![AffExpr::constant(l.sqrt())],
                );
            }
        }

        if let Some(e) = e {
            match ee {
                EeEncoding::QuadraticTransform { lambda } => {
                    let u = u.expect("u declared with e");
                    let mut w = form.w;
                    w.push(AffExpr::var(u + k));
                    prog.add_quad_le("rate >= u^2", w, rate);
                    prog.add_nonneg("u >= 0", AffExpr::var(u + k));
                    let lam = lambda[k];
                    let scale = lam * cfg.pa_inefficiency.sqrt();
                    let mut w = Vec::new();
                    for &(s, off) in beam_layout {
                        let share = match s {
                            Stream::Private(j) if j == k => 1.0,
                            Stream::Common => 1.0 / (k_users as f64).sqrt(),
                            Stream::Private(_) => continue,
                        };
                        let len = 2 * cfg.bs_antennas * cfg.streams();
                        w.extend((0..len).map(|i| AffExpr::term(off + i, scale * share)));
                    }
                    // the fixed part of p_k: static power plus pinned streams (always zero)
                    let s =
                        AffExpr::term(u + k, 2.0 * lam).plus_const(-lam * lam * cfg.static_power).plus_term(e, -1.0);
                    prog.add_quad_le("quadratic transform", w, s);
                }
                EeEncoding::FixedPower { power } => {
                    prog.add_quad_le("rate >= e p", form.w, rate.plus_term(e, -power[k]));
                }
            }
        }
    }
    (Layout { beams: beam_layout.to_vec(), psi: None, z, t, u, e, d, delay_scale }, silenced)
}

/// Fill the epigraph variables of `x` for a design whose true rates are
/// `r_total` and powers `power`. Used to plug the previous iterate into the
/// current program.
pub(crate) fn fill_epigraph(
    sub: &Subproblem,
    cfg: &ScenarioConfig,
    x: &mut [f64],
    z: &[f64],
    r_total: &[f64],
    power: &[f64],
    lambda: Option<&[f64]>,
) {
    let layout = &sub.layout;
    if let Some(off) = layout.z {
        x[off..off + z.len()].copy_from_slice(z);
    }
    let mut max_d = 0.0f64;
    let mut min_e = f64::INFINITY;
    for k in 0..cfg.users {
        let r = r_total[k].max(T_MIN);
        x[layout.t + k] = r;
        max_d = max_d.max(delay_of(cfg.message_nats[k], r));
        let ee = match (layout.u, lambda) {
            (Some(u), Some(lam)) => {
                x[u + k] = r.sqrt();
                2.0 * lam[k] * r.sqrt() - lam[k] * lam[k] * power[k]
            }
            _ => r / power[k],
        };
        min_e = min_e.min(ee);
    }
    if let Some(e) = layout.e {
        x[e] = min_e;
    }
    if let Some(d) = layout.d {
        x[d] = max_d / layout.delay_scale;
    }
}

#[cfg(test)]
mod tests;
