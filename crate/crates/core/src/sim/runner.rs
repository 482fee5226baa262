//! Monte Carlo orchestration over sweep points, drops and variants.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::channel::{derive_seed, generate_drop, TopologyConfig};
use super::plan::{ExperimentPlan, SweepParam, SweepPoint};
use crate::ao::{ao_solve, Access, AoOptions, RisMode, SolveTrace, VariantSpec, Verdict};
use crate::error::Result;
use crate::model::{ChannelDrop, DesignPoint, ScenarioConfig};

/// One `(point, variant, drop)` outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub power_dbm: f64,
    pub error_total: f64,
    pub ris_elements: usize,
    pub alpha: f64,
    pub users: usize,
    pub variant: String,
    pub seed: u64,
    pub minmax_delay: f64,
    pub maxmin_ee: f64,
    pub objective: f64,
    pub iters: usize,
    pub converged: bool,
    /// Solver verdict, or `error` when the solve returned an error.
    pub verdict: String,
    #[serde(skip)]
    pub wall_ms: f64,
    #[serde(skip)]
    pub point: usize,
    #[serde(skip)]
    pub drop_index: usize,
}

impl ResultRow {
    /// A usable outcome: no error, finite objective, not degenerate.
    pub fn succeeded(&self) -> bool {
        self.objective.is_finite() && matches!(self.verdict.as_str(), "converged" | "max-iterations")
    }

    fn sort_key(&self) -> (usize, usize, usize) {
        let v = VariantSpec::parse(&self.variant)
            .ok()
            .and_then(|v| VariantSpec::all().iter().position(|w| *w == v))
            .unwrap_or(usize::MAX);
        (self.point, self.drop_index, v)
    }
}

pub fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Converged => "converged",
        Verdict::MaxIterations => "max-iterations",
        Verdict::Degenerate => "degenerate",
        Verdict::Infeasible => "infeasible",
        Verdict::SolverFailure => "solver-failure",
    }
}

/// Seed of drop `d`, shared by every sweep point so that sweeps compare the
/// same channel realizations.
pub fn drop_seed(master: u64, d: usize) -> u64 {
    derive_seed(master, &[0xD0, d as u64])
}

/// Per-solve generator. RSMA and SDMA with the same RIS mode see the same
/// random phases.
pub fn variant_rng(drop_seed: u64, point: usize, variant: VariantSpec) -> ChaCha8Rng {
    let mode = match variant.ris_mode {
        RisMode::Optimized => 0,
        RisMode::Absent => 1,
        RisMode::RandomPhase => 2,
    };
    ChaCha8Rng::seed_from_u64(derive_seed(drop_seed, &[0xA0, point as u64, mode]))
}

/// Order in which variants are solved so each can warm-start from the ones it
/// should dominate.
fn solve_order(variants: &[VariantSpec]) -> Vec<VariantSpec> {
    let rank = |v: &VariantSpec| {
        let m = match v.ris_mode {
            RisMode::Absent => 0,
            RisMode::RandomPhase => 1,
            RisMode::Optimized => 2,
        };
        2 * m + usize::from(v.access == Access::Rsma)
    };
    let mut out = variants.to_vec();
    out.sort_by_key(rank);
    out.dedup();
    out
}

/// Variants whose solutions are offered to `v` as warm starts: the SDMA
/// sibling for RSMA, and the No-RIS scheme of the same access for an
/// optimized RIS.
fn warm_sources(v: VariantSpec) -> Vec<VariantSpec> {
    let mut out = Vec::new();
    if v.access == Access::Rsma {
        out.push(VariantSpec::new(Access::Sdma, v.ris_mode));
    }
    if v.ris_mode == RisMode::Optimized {
        out.push(VariantSpec::new(v.access, RisMode::Absent));
        if v.access == Access::Rsma {
            out.push(VariantSpec::new(Access::Sdma, RisMode::Absent));
        }
    }
    out
}

/// Solve every requested variant on one drop. With `warm_start`, solutions
/// of dominated variants are fed forward.
pub fn solve_variants(
    cfg: &ScenarioConfig,
    drop: &ChannelDrop,
    point: usize,
    variants: &[VariantSpec],
    options: &AoOptions,
    warm_start: bool,
) -> Vec<(VariantSpec, Result<SolveTrace>, f64)> {
    let mut done: Vec<(VariantSpec, Result<SolveTrace>, f64)> = Vec::new();
    for v in solve_order(variants) {
        let starts: Vec<&DesignPoint> = if warm_start {
            warm_sources(v)
                .iter()
                .filter_map(|w| done.iter().find(|(u, _, _)| u == w))
                .filter_map(|(_, r, _)| r.as_ref().ok().map(|t| &t.design))
                .collect()
        } else {
            Vec::new()
        };
        let mut rng = variant_rng(drop.seed, point, v);
        let clock = Instant::now();
        let res = ao_solve(cfg, drop, v, options, &starts, &mut rng);
        done.push((v, res, clock.elapsed().as_secs_f64() * 1e3));
    }
    done
}

fn make_row(
    point: &SweepPoint,
    d: usize,
    seed: u64,
    v: VariantSpec,
    res: &Result<SolveTrace>,
    wall_ms: f64,
) -> ResultRow {
    let s = &point.scenario;
    let mut row = ResultRow {
        power_dbm: s.power_dbm,
        error_total: s.error_total,
        ris_elements: s.ris_elements,
        alpha: s.alpha,
        users: s.users,
        variant: v.label(),
        seed,
        minmax_delay: f64::NAN,
        maxmin_ee: f64::NAN,
        objective: f64::NAN,
        iters: 0,
        converged: false,
        verdict: "error".into(),
        wall_ms,
        point: point.index,
        drop_index: d,
    };
    if let Ok(t) = res {
        row.minmax_delay = t.metrics.max_delay();
        row.maxmin_ee = t.metrics.min_ee();
        row.objective = t.objective();
        row.iters = t.iterations.len();
        row.converged = t.converged();
        row.verdict = verdict_label(t.verdict).into();
    }
    row
}

/// Run the whole plan on the current rayon pool. Rows come back sorted by
/// point, drop and variant regardless of scheduling; failed solves are kept
/// with verdict `error`.
pub fn run_plan(plan: &ExperimentPlan) -> Result<Vec<ResultRow>> {
    plan.validate()?;
    let points = plan.points()?;
    let variants = plan.variant_specs()?;
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..plan.drops).map(move |d| (p, d))).collect();
    let chunks: Vec<Result<Vec<ResultRow>>> = jobs
        .par_iter()
        .map(|&(p, d)| {
            let point = &points[p];
            let seed = drop_seed(plan.master_seed, d);
            let drop = generate_drop(&point.config, &plan.topology, seed)?;
            let solved = solve_variants(&point.config, &drop, p, &variants, &plan.solver, plan.warm_start);
            Ok(variants
                .iter()
                .filter_map(|v| solved.iter().find(|(u, _, _)| u == v))
                .map(|(v, res, ms)| make_row(point, d, seed, *v, res, *ms))
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    for c in chunks {
        rows.extend(c?);
    }
    rows.sort_by_key(|r| r.sort_key());
    Ok(rows)
}

/// Aggregates for one `(point, variant)` cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub coords: Vec<(SweepParam, f64)>,
    pub variant: String,
    pub rows: usize,
    pub succeeded: usize,
    /// Means over every row; infinite if any row has infinite delay.
    pub mean_delay: f64,
    pub mean_ee: f64,
    pub mean_objective: f64,
    /// Means over succeeded rows only.
    pub mean_delay_ok: f64,
    pub mean_ee_ok: f64,
    pub mean_objective_ok: f64,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn coords_of(r: &ResultRow) -> Vec<(SweepParam, f64)> {
    vec![
        (SweepParam::PowerDbm, r.power_dbm),
        (SweepParam::ErrorTotal, r.error_total),
        (SweepParam::RisElements, r.ris_elements as f64),
        (SweepParam::Alpha, r.alpha),
        (SweepParam::Users, r.users as f64),
    ]
}

/// Group rows by sweep coordinates and variant, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<Summary> {
    let mut keys: Vec<(Vec<(SweepParam, f64)>, String)> = Vec::new();
    for r in rows {
        let k = (coords_of(r), r.variant.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(coords, variant)| {
            let cell: Vec<&ResultRow> =
                rows.iter().filter(|r| r.variant == variant && coords_of(r) == coords).collect();
            let ok: Vec<&&ResultRow> = cell.iter().filter(|r| r.succeeded()).collect();
            Summary {
                rows: cell.len(),
                succeeded: ok.len(),
                mean_delay: mean(cell.iter().map(|r| r.minmax_delay)),
                mean_ee: mean(cell.iter().map(|r| r.maxmin_ee)),
                mean_objective: mean(cell.iter().map(|r| r.objective)),
                mean_delay_ok: mean(ok.iter().map(|r| r.minmax_delay)),
                mean_ee_ok: mean(ok.iter().map(|r| r.maxmin_ee)),
                mean_objective_ok: mean(ok.iter().map(|r| r.objective)),
                coords,
                variant,
            }
        })
        .collect()
}

/// Generate `count` drops from a master seed.
pub fn drop_set(
    cfg: &ScenarioConfig,
    topo: &TopologyConfig,
    master_seed: u64,
    count: usize,
) -> Result<Vec<ChannelDrop>> {
    (0..count).map(|d| generate_drop(cfg, topo, drop_seed(master_seed, d))).collect()
}

/// One point of a latency-EE region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub alpha: f64,
    pub mean_delay: f64,
    pub mean_ee: f64,
}

/// Sweep the latency weight on a fixed drop set. Per drop, every weight is
/// solved from its own initialization; the two endpoints are then re-solved
/// with all other weights' designs as warm starts, so each endpoint is best at
/// its own criterion among the designs found.
pub fn pareto_region(
    cfg: &ScenarioConfig,
    drops: &[ChannelDrop],
    variant: VariantSpec,
    alpha_grid: &[f64],
    options: &AoOptions,
) -> Result<Vec<ParetoPoint>> {
    if alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) || alpha_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(crate::Error::Plan("alpha grid must be ascending within [0, 1]".into()));
    }
    let per_drop: Vec<Result<Vec<(f64, f64)>>> = drops
        .par_iter()
        .map(|drop| {
            let solve = |i: usize, starts: &[&DesignPoint]| {
                let mut c = cfg.clone();
                c.latency_weight = alpha_grid[i];
                let mut rng = variant_rng(drop.seed, i, variant);
                ao_solve(&c, drop, variant, options, starts, &mut rng)
            };
            let mut traces: Vec<SolveTrace> = (0..alpha_grid.len()).map(|i| solve(i, &[])).collect::<Result<_>>()?;
            let n = alpha_grid.len();
            for i in [0, n - 1] {
                if alpha_grid[i] != 0.0 && alpha_grid[i] != 1.0 {
                    continue;
                }
                let designs: Vec<DesignPoint> = traces.iter().map(|t| t.design.clone()).collect();
                let starts: Vec<&DesignPoint> =
                    designs.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, d)| d).collect();
                traces[i] = solve(i, &starts)?;
            }
            Ok(traces.iter().map(|t| (t.metrics.max_delay(), t.metrics.min_ee())).collect())
        })
        .collect();
    let per_drop: Vec<Vec<(f64, f64)>> = per_drop.into_iter().collect::<Result<_>>()?;
    Ok(alpha_grid
        .iter()
        .enumerate()
        .map(|(i, &alpha)| ParetoPoint {
            alpha,
            mean_delay: mean(per_drop.iter().map(|d| d[i].0)),
            mean_ee: mean(per_drop.iter().map(|d| d[i].1)),
        })
        .collect())
}

/// Points not dominated in (lower delay, higher EE), in input order.
pub fn pareto_filter(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    points
        .iter()
        .filter(|p| {
            !points.iter().any(|q| {
                q.mean_delay <= p.mean_delay
                    && q.mean_ee >= p.mean_ee
                    && (q.mean_delay < p.mean_delay || q.mean_ee > p.mean_ee)
            })
        })
        .copied()
        .collect()
}
