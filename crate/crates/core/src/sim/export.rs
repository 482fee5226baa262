//! CSV/JSON exporters and plot-ready data files.
//!
//! Floats are written with 9 significant digits. Wall-clock times are not
//! part of the data file, which must be reproducible byte for byte; they go
//! to a separate timing file.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use super::plan::SweepParam;
use super::runner::{ParetoPoint, ResultRow, Summary};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 13] = [
    "power_dbm",
    "error_total",
    "ris_elements",
    "alpha",
    "users",
    "variant",
    "seed",
    "minmax_delay",
    "maxmin_ee",
    "objective",
    "iters",
    "converged",
    "verdict",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::Plan(format!("unknown export format {other:?}"))),
        }
    }
}

/// 9 significant digits, scientific notation; `inf`, `-inf`, `NaN` verbatim.
pub fn fmt_float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.8e}")
    } else {
        x.to_string()
    }
}

fn round9(x: f64) -> f64 {
    fmt_float(x).parse().unwrap_or(x)
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = CSV_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let fields = [
            fmt_float(r.power_dbm),
            fmt_float(r.error_total),
            r.ris_elements.to_string(),
            fmt_float(r.alpha),
            r.users.to_string(),
            r.variant.clone(),
            r.seed.to_string(),
            fmt_float(r.minmax_delay),
            fmt_float(r.maxmin_ee),
            fmt_float(r.objective),
            r.iters.to_string(),
            r.converged.to_string(),
            r.verdict.clone(),
        ];
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn json_float(x: f64) -> Value {
    if x.is_finite() {
        json!(round9(x))
    } else {
        Value::String(x.to_string())
    }
}

pub fn rows_to_json(rows: &[ResultRow]) -> String {
    let arr: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "power_dbm": json_float(r.power_dbm),
                "error_total": json_float(r.error_total),
                "ris_elements": r.ris_elements,
                "alpha": json_float(r.alpha),
                "users": r.users,
                "variant": r.variant,
                "seed": r.seed,
                "minmax_delay": json_float(r.minmax_delay),
                "maxmin_ee": json_float(r.maxmin_ee),
                "objective": json_float(r.objective),
                "iters": r.iters,
                "converged": r.converged,
                "verdict": r.verdict,
            })
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&Value::Array(arr)).expect("json values serialize");
    s.push('\n');
    s
}

/// Write rows in the given format.
pub fn export_results(rows: &[ResultRow], format: Format, path: &Path) -> Result<()> {
    let text = match format {
        Format::Csv => rows_to_csv(rows),
        Format::Json => rows_to_json(rows),
    };
    write_file(path, text.as_bytes())
}

/// Per-row wall times, keyed like the data rows.
pub fn export_timing(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut out = String::from("variant,seed,power_dbm,error_total,ris_elements,alpha,users,wall_ms\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.3}\n",
            r.variant,
            r.seed,
            fmt_float(r.power_dbm),
            fmt_float(r.error_total),
            r.ris_elements,
            fmt_float(r.alpha),
            r.users,
            r.wall_ms
        ));
    }
    write_file(path, out.as_bytes())
}

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Parse { path: path.to_path_buf(), message: format!("line {line}: {msg}") }
}

/// Parse a CSV produced by [`export_results`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text).map_err(|(line, msg)| parse_err(path, line, msg))
}

fn parse_csv(text: &str) -> std::result::Result<Vec<ResultRow>, (usize, String)> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER.join(",") => {}
        _ => return Err((1, "unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != CSV_HEADER.len() {
            return Err((n, format!("expected {} fields, found {}", CSV_HEADER.len(), f.len())));
        }
        let float = |j: usize| f[j].parse::<f64>().map_err(|e| (n, format!("{}: {e}", CSV_HEADER[j])));
        let int = |j: usize| f[j].parse::<u64>().map_err(|e| (n, format!("{}: {e}", CSV_HEADER[j])));
        rows.push(ResultRow {
            power_dbm: float(0)?,
            error_total: float(1)?,
            ris_elements: int(2)? as usize,
            alpha: float(3)?,
            users: int(4)? as usize,
            variant: f[5].to_string(),
            seed: int(6)?,
            minmax_delay: float(7)?,
            maxmin_ee: float(8)?,
            objective: float(9)?,
            iters: int(10)? as usize,
            converged: f[11].parse().map_err(|e| (n, format!("converged: {e}")))?,
            verdict: f[12].to_string(),
            wall_ms: 0.0,
            point: 0,
            drop_index: 0,
        });
    }
    Ok(rows)
}

/// Parse a JSON file produced by [`export_results`].
pub fn read_json(path: &Path) -> Result<Vec<ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| parse_err(path, e.line(), e))?;
    let arr = v.as_array().ok_or_else(|| parse_err(path, 1, "expected an array"))?;
    let float = |o: &Value, k: &str| -> Result<f64> {
        match &o[k] {
            Value::Number(x) => x.as_f64().ok_or_else(|| parse_err(path, 0, k)),
            Value::String(s) => s.parse().map_err(|_| parse_err(path, 0, k)),
            _ => Err(parse_err(path, 0, format!("missing {k}"))),
        }
    };
    let int = |o: &Value, k: &str| o[k].as_u64().ok_or_else(|| parse_err(path, 0, format!("missing {k}")));
    let string = |o: &Value, k: &str| {
        o[k].as_str().map(str::to_string).ok_or_else(|| parse_err(path, 0, format!("missing {k}")))
    };
    arr.iter()
        .map(|o| {
            Ok(ResultRow {
                power_dbm: float(o, "power_dbm")?,
                error_total: float(o, "error_total")?,
                ris_elements: int(o, "ris_elements")? as usize,
                alpha: float(o, "alpha")?,
                users: int(o, "users")? as usize,
                variant: string(o, "variant")?,
                seed: int(o, "seed")?,
                minmax_delay: float(o, "minmax_delay")?,
                maxmin_ee: float(o, "maxmin_ee")?,
                objective: float(o, "objective")?,
                iters: int(o, "iters")? as usize,
                converged: o["converged"].as_bool().ok_or_else(|| parse_err(path, 0, "missing converged"))?,
                verdict: string(o, "verdict")?,
                wall_ms: 0.0,
                point: 0,
                drop_index: 0,
            })
        })
        .collect()
}

fn write_dat(path: &Path, header: &str, points: &[(f64, f64)]) -> Result<()> {
    let mut out = format!("# {header}\n");
    for (x, y) in points {
        out.push_str(&format!("{} {}\n", fmt_float(*x), fmt_float(*y)));
    }
    write_file(path, out.as_bytes())
}

/// Two-column files of mean delay and mean EE against the first swept
/// parameter, one pair per variant and per value of the other coordinates.
/// Returns the written paths.
pub fn export_curves(summaries: &[Summary], axis: SweepParam, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: Vec<(String, Vec<(SweepParam, f64)>)> = Vec::new();
    for s in summaries {
        let rest: Vec<(SweepParam, f64)> = s.coords.iter().copied().filter(|(p, _)| *p != axis).collect();
        let key = (s.variant.clone(), rest);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut written = Vec::new();
    for (gi, (variant, rest)) in groups.iter().enumerate() {
        let cell: Vec<&Summary> = summaries
            .iter()
            .filter(|s| &s.variant == variant && s.coords.iter().filter(|(p, _)| *p != axis).eq(rest.iter()))
            .collect();
        let x = |s: &Summary| s.coords.iter().find(|(p, _)| *p == axis).map(|c| c.1).unwrap_or(f64::NAN);
        let suffix =
            if groups.iter().filter(|g| &g.0 == variant).count() > 1 { format!("_{gi}") } else { String::new() };
        for (metric, f) in
            [("delay", (|s: &Summary| s.mean_delay) as fn(&Summary) -> f64), ("ee", |s: &Summary| s.mean_ee)]
        {
            let path = dir.join(format!("{metric}_vs_{}_{variant}{suffix}.dat", axis.name()));
            let pts: Vec<(f64, f64)> = cell.iter().map(|s| (x(s), f(s))).collect();
            write_dat(&path, &format!("{} mean_{metric} {variant}", axis.name()), &pts)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Latency-EE region as `mean_delay mean_ee` pairs sorted by weight.
pub fn export_region(points: &[ParetoPoint], path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64)> = points.iter().map(|p| (p.mean_delay, p.mean_ee)).collect();
    write_dat(path, "mean_delay mean_ee", &pts)
}

/// Objective sequence of one solve as `iteration objective`.
pub fn export_trace(objectives: &[f64], path: &Path) -> Result<()> {
    let pts: Vec<(f64, f64)> = objectives.iter().enumerate().map(|(i, o)| (i as f64, *o)).collect();
    write_dat(path, "iteration objective", &pts)
}
