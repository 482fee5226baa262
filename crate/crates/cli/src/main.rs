//! Batch driver: runs experiment plans, latency-EE regions and oracle checks,
//! and converts result files.

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rsma_fbl::ao::ao_solve;
use rsma_fbl::sim::export::{export_curves, export_region, export_timing, fmt_float};
use rsma_fbl::sim::runner::drop_set;
use rsma_fbl::sim::*;

const OUT_ENV: &str = "RSMA_FBL_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "rsma-fbl",
    version,
    about = "Latency-EE optimization for RIS-aided RSMA downlinks under finite blocklength"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Master seed; overrides the plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo drops per sweep point; overrides the plan.
    #[arg(long)]
    drops: Option<usize>,
    /// Output directory. Falls back to the plan's output_dir, then `results`.
    #[arg(long, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Comma-separated variant labels, e.g. RIS-RSMA,No-RIS-SDMA.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<String>>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment plan and write results, timing and curve files.
    Run {
        plan: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep the latency weight and write the averaged latency-EE region.
    Pareto {
        /// Plan supplying scenario and topology; defaults if omitted.
        plan: Option<PathBuf>,
        /// Ascending latency weights in [0, 1].
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1")]
        alphas: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare the alternating solver with the grid oracle on tiny instances.
    Oracle {
        plan: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Convert a results file and regenerate curve files from it.
    Export {
        /// Results file (.csv or .json).
        input: PathBuf,
        /// Output format: csv or json.
        #[arg(long, default_value = "json")]
        format: String,
        /// Sweep parameter for the curve files.
        #[arg(long)]
        axis: Option<String>,
        #[arg(long, env = OUT_ENV)]
        out: Option<PathBuf>,
    },
}

fn load_plan(path: Option<&Path>, common: &Common) -> Result<ExperimentPlan> {
    let mut plan = match path {
        Some(p) => ExperimentPlan::load(p)?,
        None => ExperimentPlan::default(),
    };
    if let Some(s) = common.seed {
        plan.master_seed = s;
    }
    if let Some(d) = common.drops {
        plan.drops = d;
    }
    if let Some(v) = &common.variants {
        plan.variants = v.clone();
    }
    plan.validate()?;
    Ok(plan)
}

fn out_dir(common_out: Option<&PathBuf>, plan: Option<&ExperimentPlan>) -> Result<PathBuf> {
    let dir = common_out
        .cloned()
        .or_else(|| plan.and_then(|p| p.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("results"));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn set_threads(n: Option<usize>) -> Result<()> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn print_summaries(summaries: &[Summary]) {
    println!("{:<32} {:<16} {:>6} {:>14} {:>14}", "point", "variant", "ok", "mean_delay", "mean_ee");
    for s in summaries {
        let coords: Vec<String> = s.coords.iter().map(|(p, v)| format!("{}={v}", p.name())).collect();
        println!(
            "{:<32} {:<16} {:>6} {:>14} {:>14}",
            if coords.is_empty() { "-".to_string() } else { coords.join(",") },
            s.variant,
            format!("{}/{}", s.succeeded, s.rows),
            fmt_float(s.mean_delay),
            fmt_float(s.mean_ee)
        );
    }
}

fn write_outputs(rows: &[ResultRow], axis: Option<SweepParam>, dir: &Path) -> Result<()> {
    export_results(rows, Format::Csv, &dir.join("results.csv"))?;
    export_results(rows, Format::Json, &dir.join("results.json"))?;
    let summaries = summarize(rows);
    if let Some(axis) = axis {
        export_curves(&summaries, axis, dir)?;
    }
    print_summaries(&summaries);
    Ok(())
}

fn run(plan_path: &Path, common: &Common) -> Result<()> {
    let plan = load_plan(Some(plan_path), common)?;
    let dir = out_dir(common.out.as_ref(), Some(&plan))?;
    let clock = Instant::now();
    let rows = run_plan(&plan)?;
    eprintln!("{} rows in {:.1} s", rows.len(), clock.elapsed().as_secs_f64());
    export_timing(&rows, &dir.join("timing.csv"))?;
    write_outputs(&rows, plan.sweep.first().map(|a| a.parameter), &dir)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn pareto(plan_path: Option<&Path>, alphas: &[f64], common: &Common) -> Result<()> {
    let plan = load_plan(plan_path, common)?;
    let dir = out_dir(common.out.as_ref(), Some(&plan))?;
    let cfg = plan.scenario.to_config()?;
    let drops = drop_set(&cfg, &plan.topology, plan.master_seed, plan.drops)?;
    for v in plan.variant_specs()? {
        let pts = pareto_region(&cfg, &drops, v, alphas, &plan.solver)?;
        let front = pareto_filter(&pts);
        println!("{v}: {} of {} points on the front", front.len(), pts.len());
        for p in &pts {
            println!("  alpha={:<6} delay={} ee={}", p.alpha, fmt_float(p.mean_delay), fmt_float(p.mean_ee));
        }
        export_region(&pts, &dir.join(format!("region_{v}.dat")))?;
        export_region(&front, &dir.join(format!("front_{v}.dat")))?;
    }
    Ok(())
}

fn oracle(plan_path: Option<&Path>, common: &Common) -> Result<()> {
    let mut plan = load_plan(plan_path, common)?;
    if plan_path.is_none() {
        plan.scenario = PlanScenario { users: 2, bs_antennas: 1, user_antennas: 1, ris_elements: 1, ..plan.scenario };
        if common.drops.is_none() {
            plan.drops = 10;
        }
        if common.variants.is_none() {
            plan.variants = vec!["RIS-RSMA".into(), "RIS-SDMA".into()];
        }
    }
    let dir = out_dir(common.out.as_ref(), Some(&plan))?;
    let cfg = plan.scenario.to_config()?;
    let drops = drop_set(&cfg, &plan.topology, plan.master_seed, plan.drops)?;
    let mut lines = vec!["variant,seed,oracle,ao,gap".to_string()];
    for v in plan.variant_specs()? {
        let mut worst = f64::NEG_INFINITY;
        for (d, drop) in drops.iter().enumerate() {
            let o = grid_oracle(&cfg, drop, v)?;
            let mut rng = runner::variant_rng(drop.seed, d, v);
            let t = ao_solve(&cfg, drop, v, &plan.solver, &[], &mut rng)?;
            let gap = (t.objective() - o.objective) / o.objective.abs();
            worst = worst.max(gap);
            lines.push(format!(
                "{v},{},{},{},{}",
                drop.seed,
                fmt_float(o.objective),
                fmt_float(t.objective()),
                fmt_float(gap)
            ));
        }
        println!("{v}: worst relative gap to oracle {:.3}%", 100.0 * worst);
    }
    let path = dir.join("oracle.csv");
    std::fs::write(&path, lines.join("\n") + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn export(input: &Path, format: &str, axis: Option<&str>, out: Option<&PathBuf>) -> Result<()> {
    let rows = match input.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(input)?,
        Some("json") => read_json(input)?,
        _ => bail!("cannot tell the format of {}; expected .csv or .json", input.display()),
    };
    let format = Format::parse(format)?;
    let dir = out_dir(out, None)?;
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    export_results(&rows, format, &dir.join(format!("results.{ext}")))?;
    let summaries = summarize(&rows);
    if let Some(axis) = axis {
        export_curves(&summaries, SweepParam::parse(axis)?, &dir)?;
    }
    print_summaries(&summaries);
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Run { plan, common } => {
            set_threads(common.threads)?;
            run(plan, common)
        }
        Command::Pareto { plan, alphas, common } => {
            set_threads(common.threads)?;
            pareto(plan.as_deref(), alphas, common)
        }
        Command::Oracle { plan, common } => {
            set_threads(common.threads)?;
            oracle(plan.as_deref(), common)
        }
        Command::Export { input, format, axis, out } => export(input, format, axis.as_deref(), out.as_ref()),
    }
}
