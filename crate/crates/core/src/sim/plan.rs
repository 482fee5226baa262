//! Experiment plans: TOML ingestion, sweep expansion and unit conversion.
//!
//! Plans carry engineering units (dBm, bits, total error probability). They
//! are converted to a [`ScenarioConfig`] in [`PlanScenario::to_config`] and
//! nowhere else.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::channel::TopologyConfig;
use crate::ao::{AoOptions, VariantSpec};
use crate::error::{Error, Result};
use crate::fbl::reliability_split;
use crate::model::ScenarioConfig;

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Scenario in plan units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanScenario {
    pub users: usize,
    pub bs_antennas: usize,
    pub user_antennas: usize,
    pub ris_elements: usize,
    pub power_dbm: f64,
    pub noise_dbm: f64,
    pub blocklength: f64,
    /// Total decoding error probability, split evenly between the common and
    /// private stages.
    pub error_total: f64,
    pub message_bits: f64,
    pub alpha: f64,
    pub pa_inefficiency: f64,
    pub static_power_w: f64,
}

impl Default for PlanScenario {
    fn default() -> Self {
        Self {
            users: 4,
            bs_antennas: 2,
            user_antennas: 2,
            ris_elements: 20,
            power_dbm: 10.0,
            noise_dbm: -100.0,
            blocklength: 256.0,
            error_total: 1e-5,
            message_bits: 1000.0,
            alpha: 0.5,
            pa_inefficiency: 2.5,
            static_power_w: 0.01,
        }
    }
}

impl PlanScenario {
    pub fn to_config(&self) -> Result<ScenarioConfig> {
        let (common_error, private_error) = reliability_split(self.error_total)?;
        let cfg = ScenarioConfig {
            users: self.users,
            bs_antennas: self.bs_antennas,
            user_antennas: self.user_antennas,
            ris_elements: self.ris_elements,
            power_budget: dbm_to_watts(self.power_dbm),
            noise_power: dbm_to_watts(self.noise_dbm),
            private_blocklength: self.blocklength,
            common_blocklength: self.blocklength,
            private_error,
            common_error,
            message_nats: vec![self.message_bits * std::f64::consts::LN_2; self.users],
            latency_weight: self.alpha,
            pa_inefficiency: self.pa_inefficiency,
            static_power: self.static_power_w,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, p: SweepParam, v: f64) -> Result<()> {
        let count = |v: f64| {
            if v >= 0.0 && v.fract() == 0.0 && v < 1e6 {
                Ok(v as usize)
            } else {
                Err(Error::Plan(format!("{} needs a nonnegative integer, got {v}", p.name())))
            }
        };
        match p {
            SweepParam::PowerDbm => self.power_dbm = v,
            SweepParam::ErrorTotal => self.error_total = v,
            SweepParam::RisElements => self.ris_elements = count(v)?,
            SweepParam::Alpha => self.alpha = v,
            SweepParam::Users => self.users = count(v)?,
        }
        Ok(())
    }

    fn get(&self, p: SweepParam) -> f64 {
        match p {
            SweepParam::PowerDbm => self.power_dbm,
            SweepParam::ErrorTotal => self.error_total,
            SweepParam::RisElements => self.ris_elements as f64,
            SweepParam::Alpha => self.alpha,
            SweepParam::Users => self.users as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    PowerDbm,
    ErrorTotal,
    RisElements,
    Alpha,
    Users,
}

impl SweepParam {
    pub const ALL: [SweepParam; 5] =
        [SweepParam::PowerDbm, SweepParam::ErrorTotal, SweepParam::RisElements, SweepParam::Alpha, SweepParam::Users];

    pub fn name(self) -> &'static str {
        match self {
            SweepParam::PowerDbm => "power_dbm",
            SweepParam::ErrorTotal => "error_total",
            SweepParam::RisElements => "ris_elements",
            SweepParam::Alpha => "alpha",
            SweepParam::Users => "users",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::Plan(format!("unknown sweep parameter `{name}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
}

/// Full description of a Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub scenario: PlanScenario,
    #[serde(default)]
    pub topology: TopologyConfig,
    #[serde(default)]
    pub sweep: Vec<SweepAxis>,
    #[serde(default = "default_variants")]
    pub variants: Vec<String>,
    #[serde(default = "default_drops")]
    pub drops: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Offer sibling-variant solutions as warm starts.
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default)]
    pub solver: AoOptions,
}

fn default_variants() -> Vec<String> {
    VariantSpec::all().iter().map(|v| v.label()).collect()
}

fn default_drops() -> usize {
    50
}

fn default_true() -> bool {
    true
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            scenario: PlanScenario::default(),
            topology: TopologyConfig::default(),
            sweep: Vec::new(),
            variants: default_variants(),
            drops: default_drops(),
            master_seed: 0,
            output_dir: None,
            warm_start: true,
            solver: AoOptions::default(),
        }
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub index: usize,
    /// `(parameter, value)` for every swept axis, in plan order.
    pub coords: Vec<(SweepParam, f64)>,
    pub scenario: PlanScenario,
    pub config: ScenarioConfig,
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let plan: ExperimentPlan =
            toml::from_str(text).map_err(|e| Error::Parse { path: PathBuf::new(), message: e.to_string() })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let plan: ExperimentPlan =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Plan(e.to_string()))
    }

    pub fn variant_specs(&self) -> Result<Vec<VariantSpec>> {
        self.variants.iter().map(|s| VariantSpec::parse(s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.drops == 0 {
            return Err(Error::Plan("drops must be at least 1".into()));
        }
        if self.variants.is_empty() {
            return Err(Error::Plan("no variants selected".into()));
        }
        self.variant_specs()?;
        self.topology.validate()?;
        let mut seen = Vec::new();
        for axis in &self.sweep {
            if seen.contains(&axis.parameter) {
                return Err(Error::Plan(format!("{} swept twice", axis.parameter.name())));
            }
            seen.push(axis.parameter);
            if axis.values.is_empty() {
                return Err(Error::Plan(format!("{} has no values", axis.parameter.name())));
            }
        }
        self.points().map(|_| ())
    }

    /// Cartesian product of the sweep axes, last axis fastest.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let mut combos: Vec<Vec<(SweepParam, f64)>> = vec![Vec::new()];
        for axis in &self.sweep {
            combos = combos
                .into_iter()
                .flat_map(|c| {
                    axis.values.iter().map(move |&v| {
                        let mut c = c.clone();
                        c.push((axis.parameter, v));
                        c
                    })
                })
                .collect();
        }
        combos
            .into_iter()
            .enumerate()
            .map(|(index, coords)| {
                let mut scenario = self.scenario.clone();
                for &(p, v) in &coords {
                    scenario.set(p, v)?;
                }
                let config = scenario.to_config()?;
                Ok(SweepPoint { index, coords, scenario, config })
            })
            .collect()
    }

    /// Value of every sweepable parameter at a point, for export.
    pub fn coordinate_values(point: &SweepPoint) -> Vec<(SweepParam, f64)> {
        SweepParam::ALL.iter().map(|&p| (p, point.scenario.get(p))).collect()
    }
}
