use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Solver;
use crate::failures::{enumerate_targets, ScenarioClass};
use crate::optimizer::{ModelParams, SolveLimits};
use crate::performance::DEFAULT_PACKET_BITS;
use crate::topology::{build_cell, CellParams, DEFAULT_HOP_LIMIT};
use crate::traffic::TrafficParams;

/// A rejected configuration. `key` is the dotted path of the offending
/// entry when known, `line` its 1-based line in the file.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{}", render(.file.as_deref(), .key.as_deref(), *.line, .message))]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

fn render(file: Option<&Path>, key: Option<&str>, line: Option<usize>, message: &str) -> String {
    let mut s = String::new();
    if let Some(f) = file {
        s.push_str(&f.display().to_string());
        if let Some(l) = line {
            s.push_str(&format!(":{l}"));
        }
        s.push_str(": ");
    } else if let Some(l) = line {
        s.push_str(&format!("line {l}: "));
    }
    if let Some(k) = key {
        s.push_str(&format!("`{k}`: "));
    }
    s.push_str(message);
    s
}

impl ConfigError {
    fn invalid(key: &str, message: impl Into<String>) -> Self {
        ConfigError { file: None, key: Some(key.to_string()), line: None, message: message.into() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Exact,
    Heuristic,
    Both,
}

impl SolverChoice {
    pub fn solvers(self) -> Vec<Solver> {
        match self {
            SolverChoice::Exact => vec![Solver::Exact],
            SolverChoice::Heuristic => vec![Solver::Heuristic],
            SolverChoice::Both => vec![Solver::Exact, Solver::Heuristic],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSelection {
    /// Lowest-id link of each class.
    #[default]
    First,
    /// Every link of each class.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// `seeds = 10` means seeds 0..10; a list names them explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    Count(u64),
    List(Vec<u64>),
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::Count(10)
    }
}

impl Seeds {
    pub fn list(&self) -> Vec<u64> {
        match self {
            Seeds::Count(n) => (0..*n).collect(),
            Seeds::List(v) => v.clone(),
        }
    }
}

/// `scenarios = "all"` or a list such as `["S1", "S3"]`. An empty list runs
/// only the no-failure baseline.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioSelection {
    Keyword(String),
    List(Vec<String>),
}

impl Default for ScenarioSelection {
    fn default() -> Self {
        ScenarioSelection::Keyword("all".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub count: usize,
    pub min_rate_bps: f64,
    pub max_rate_bps: f64,
    pub seeds: Seeds,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        let p = TrafficParams::default();
        TrafficConfig {
            count: p.count,
            min_rate_bps: p.min_rate_bps,
            max_rate_bps: p.max_rate_bps,
            seeds: Seeds::default(),
        }
    }
}

impl TrafficConfig {
    /// Generation parameters; the server rate comes from the model.
    pub fn params(&self) -> TrafficParams {
        TrafficParams {
            count: self.count,
            min_rate_bps: self.min_rate_bps,
            max_rate_bps: self.max_rate_bps,
            ..TrafficParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: Format,
    /// Record wall-clock solve times. Off by default because timings make
    /// otherwise identical runs differ.
    pub timing: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("results"), format: Format::Csv, timing: false }
    }
}

/// Cell shape without the link capacity, which lives in the model section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CellConfig {
    pub racks: usize,
    pub groups_per_rack: usize,
    pub subgroups_per_group: usize,
    pub servers_per_subgroup: usize,
    pub variant: crate::topology::Variant,
    pub olt_ports_per_group: usize,
    pub olt_role: crate::topology::OltRole,
}

impl Default for CellConfig {
    fn default() -> Self {
        let c = CellParams::default();
        CellConfig {
            racks: c.racks,
            groups_per_rack: c.groups_per_rack,
            subgroups_per_group: c.subgroups_per_group,
            servers_per_subgroup: c.servers_per_subgroup,
            variant: c.variant,
            olt_ports_per_group: c.olt_ports_per_group,
            olt_role: c.olt_role,
        }
    }
}

/// Parsed run configuration. Every section and key is optional; an empty
/// file gives the default sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub cell: CellConfig,
    pub model: ModelParams,
    pub traffic: TrafficConfig,
    pub scenarios: ScenarioSelection,
    pub solver: SolverChoice,
    pub target: TargetSelection,
    pub limits: SolveLimits,
    pub output: OutputConfig,
    pub packet_bits: f64,
    pub hop_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cell: CellConfig::default(),
            model: ModelParams::default(),
            traffic: TrafficConfig::default(),
            scenarios: ScenarioSelection::default(),
            solver: SolverChoice::default(),
            target: TargetSelection::default(),
            limits: SolveLimits::default(),
            output: OutputConfig::default(),
            packet_bits: DEFAULT_PACKET_BITS,
            hop_limit: DEFAULT_HOP_LIMIT,
        }
    }
}

impl RunConfig {
    pub fn cell_params(&self) -> CellParams {
        let c = &self.cell;
        CellParams {
            racks: c.racks,
            groups_per_rack: c.groups_per_rack,
            subgroups_per_group: c.subgroups_per_group,
            servers_per_subgroup: c.servers_per_subgroup,
            variant: c.variant,
            olt_ports_per_group: c.olt_ports_per_group,
            olt_role: c.olt_role,
            link_capacity_bps: self.model.link_capacity_bps,
        }
    }

    /// Scenarios to run, in class order. Assumes [`RunConfig::validate`]
    /// passed; `all` means every class present in the variant.
    pub fn scenario_list(&self) -> Vec<ScenarioClass> {
        match &self.scenarios {
            ScenarioSelection::Keyword(_) => {
                let Ok(t) = build_cell(&self.cell_params()) else { return Vec::new() };
                ScenarioClass::ALL.into_iter().filter(|&s| !enumerate_targets(&t, s).is_empty()).collect()
            }
            ScenarioSelection::List(names) => {
                let mut v: Vec<ScenarioClass> = names.iter().filter_map(|n| n.parse().ok()).collect();
                v.sort();
                v.dedup();
                v
            }
        }
    }

    /// Cross-field checks that serde cannot express.
    pub fn validate(&mut self) -> Result<(), ConfigError> {
        self.model.check().map_err(|e| ConfigError::invalid("model", e.to_string()))?;
        let t = build_cell(&self.cell_params()).map_err(|e| ConfigError::invalid("cell", e.to_string()))?;
        let mut traffic = self.traffic.params();
        traffic.server_rate_bps = self.model.server_rate_bps;
        traffic.check().map_err(|e| ConfigError::invalid("traffic", e.to_string()))?;
        if self.traffic.seeds.list().is_empty() {
            return Err(ConfigError::invalid("traffic.seeds", "at least one seed is required"));
        }
        if !(self.packet_bits.is_finite() && self.packet_bits > 0.0) {
            return Err(ConfigError::invalid("packet_bits", format!("must be positive, got {}", self.packet_bits)));
        }
        if self.hop_limit < 3 {
            return Err(ConfigError::invalid("hop_limit", format!("must be at least 3, got {}", self.hop_limit)));
        }
        if let Some(s) = self.limits.time_limit_s {
            if !(s.is_finite() && s > 0.0) {
                return Err(ConfigError::invalid("limits.time_limit_s", format!("must be positive, got {s}")));
            }
        }
        match &self.scenarios {
            ScenarioSelection::Keyword(k) if k.eq_ignore_ascii_case("all") => {}
            ScenarioSelection::Keyword(k) => {
                self.scenarios = ScenarioSelection::List(vec![k.clone()]);
                return self.validate();
            }
            ScenarioSelection::List(names) => {
                for n in names {
                    let s: ScenarioClass =
                        n.parse().map_err(|_| ConfigError::invalid("scenarios", format!("unknown scenario `{n}`")))?;
                    if enumerate_targets(&t, s).is_empty() {
                        return Err(ConfigError::invalid(
                            "scenarios",
                            format!("{s} does not apply to the {} variant (no such links)", self.cell.variant),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates TOML configuration text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let de = toml::Deserializer::new(text);
    let mut cfg: RunConfig = match serde_path_to_error::deserialize(de) {
        Ok(c) => c,
        Err(e) => {
            let key = e.path().to_string();
            let inner = e.into_inner();
            return Err(ConfigError {
                file: None,
                key: (key != ".").then_some(key),
                line: inner.span().map(|s| line_of(text, s.start)),
                message: inner.message().to_string(),
            });
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        file: Some(path.to_path_buf()),
        key: None,
        line: None,
        message: format!("cannot read: {e}"),
    })?;
    parse_config_str(&text).map_err(|e| ConfigError { file: Some(path.to_path_buf()), ..e })
}
