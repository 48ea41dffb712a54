//! Scenario configuration: TOML file, `DCE_` environment overrides, then
//! command-line flags.
//!
//! Every tolerance and cutoff consumed by a backend lives here with its
//! default; [`ScenarioConfig::default`] is the single defaults table.

use std::path::Path;

use serde::{Deserialize, Serialize};

use dce_core::cavity::{complete_cycle_tau, fundamental_period_tau, EPSILON_MAX};
use dce_core::gaussian::N_CUT_LIMIT;

use crate::RunError;

pub const SCHEMA_VERSION: u32 = 1;
/// Prefix for environment overrides. `DCE_PHYSICS__EPSILON=2e-3` sets
/// `physics.epsilon`; `__` separates nesting levels.
pub const ENV_PREFIX: &str = "DCE_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    ShortTime,
    FockOracle,
    Resonance,
    Gaussian,
    FieldOracle,
    Crosscheck,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::ShortTime => "short-time",
            Pipeline::FockOracle => "fock-oracle",
            Pipeline::Resonance => "resonance",
            Pipeline::Gaussian => "gaussian",
            Pipeline::FieldOracle => "field-oracle",
            Pipeline::Crosscheck => "crosscheck",
        }
    }
}

/// A `tau` grid, either listed or evenly spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Linspace { start: f64, stop: f64, count: usize },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::List(v) => v.clone(),
            Grid::Linspace { start, stop, count } => match count {
                0 => Vec::new(),
                1 => vec![*start],
                n => (0..*n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
            },
        }
    }
}

/// How requested `tau` values are moved onto mirror positions where the
/// field can be compared with the resonant-only formulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TauSnap {
    /// Whole periods of the fundamental mode: off-resonant pairs vanish.
    Fundamental,
    /// Whole drive cycles: the mirror is back at rest length.
    Drive,
    /// Use the value as given (closed forms only).
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Physics {
    pub epsilon: f64,
    /// Drive ratios; `None` picks the pipeline default.
    pub p: Option<Vec<u32>>,
    pub tau_grid: Option<Grid>,
    /// Odd modes for the Gaussian and resonance pipelines.
    pub modes: Vec<usize>,
    pub tau_snap: TauSnap,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { epsilon: 1e-3, p: None, tau_grid: None, modes: vec![1, 3, 5], tau_snap: TauSnap::Fundamental }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cutoffs {
    /// Modes in the coupling tables and the field oracle.
    pub field_k_max: usize,
    /// `l_sum_max = l_sum_factor * k_max` for the `h` table.
    pub l_sum_factor: usize,
    pub fock_modes: usize,
    pub n_max: usize,
    /// Retained odd modes in the amplitude equations.
    pub resonance_k_max: usize,
    /// Populations per mode; 0 selects the adaptive rule.
    pub n_cut: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Cutoffs { field_k_max: 16, l_sum_factor: 10, fock_modes: 4, n_max: 4, resonance_k_max: 64, n_cut: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub resonance: f64,
    pub field: f64,
    pub fock: f64,
    /// Initial step count for the Fock propagator before doubling.
    pub fock_steps: usize,
    pub quadrature: f64,
    /// Crosscheck bound on relative N deviations: `n_eps * eps + n_tau2 * tau^2`.
    pub crosscheck_n_eps: f64,
    pub crosscheck_n_tau2: f64,
    /// Crosscheck bound on relative S_d deviations: `sd_eps * eps + sd_n * N`.
    pub crosscheck_sd_eps: f64,
    pub crosscheck_sd_n: f64,
    /// Absolute bound on `|C - S_d|` for the Fock state.
    pub coherence: f64,
    /// Absolute bound between the two variance routes.
    pub variance_paths: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            resonance: 1e-9,
            field: 1e-10,
            fock: 1e-9,
            fock_steps: 64,
            quadrature: 1e-12,
            crosscheck_n_eps: 5.0,
            crosscheck_n_tau2: 1.0,
            crosscheck_sd_eps: 5.0,
            crosscheck_sd_n: 5.0,
            coherence: 1e-8,
            variance_paths: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClosureKind {
    Sponge,
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClosureConfig {
    pub kind: ClosureKind,
    pub start_fraction: f64,
    pub strength: f64,
}

impl Default for ClosureConfig {
    fn default() -> Self {
        ClosureConfig { kind: ClosureKind::Sponge, start_fraction: 0.25, strength: 0.5 }
    }
}

impl ClosureConfig {
    pub fn to_core(&self) -> dce_core::resonance::Closure {
        match self.kind {
            ClosureKind::Hard => dce_core::resonance::Closure::HardCutoff,
            ClosureKind::Sponge => dce_core::resonance::Closure::Sponge {
                start_fraction: self.start_fraction,
                strength: self.strength,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagatorKind {
    Magnus4,
    Midpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// Write the Fock diagonal (index, occupations, probability) per tau.
    pub fock_diagonal: bool,
    /// Write `(tau, alpha, beta)` checkpoints of the amplitude equations.
    pub sva_checkpoints: bool,
    /// Rerun the resonance study at doubled cutoff and tenfold tighter tol.
    pub convergence_study: bool,
}

impl Default for Outputs {
    fn default() -> Self {
        Outputs { fock_diagonal: false, sva_checkpoints: false, convergence_study: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    /// Set by the subcommand; a file may pin it, and a mismatch is an error.
    pub pipeline: Option<Pipeline>,
    /// Worker threads; 0 uses the available parallelism.
    pub threads: usize,
    pub output_dir: String,
    pub propagator: PropagatorKind,
    pub physics: Physics,
    pub cutoffs: Cutoffs,
    pub tolerances: Tolerances,
    pub closure: ClosureConfig,
    pub outputs: Outputs,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            pipeline: None,
            threads: 0,
            output_dir: "out".into(),
            propagator: PropagatorKind::Magnus4,
            physics: Physics::default(),
            cutoffs: Cutoffs::default(),
            tolerances: Tolerances::default(),
            closure: ClosureConfig::default(),
            outputs: Outputs::default(),
        }
    }
}

fn cfg_err(msg: impl Into<String>) -> RunError {
    RunError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| cfg_err(format!("config parse error: {e}")))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// Reads `path` (if given) and applies `DCE_*` variables from `env`.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, RunError> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| cfg_err(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        let mut value: toml::Table = toml::from_str(&text).map_err(|e| cfg_err(format!("config parse error: {e}")))?;
        let mut overrides: Vec<(String, String)> =
            env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX) && k.len() > ENV_PREFIX.len()).collect();
        // deterministic order regardless of the environment's iteration order
        overrides.sort();
        for (k, v) in overrides {
            apply_override(&mut value, &k[ENV_PREFIX.len()..], &v)?;
        }
        let cfg: ScenarioConfig =
            value.try_into().map_err(|e: toml::de::Error| cfg_err(format!("config error: {e}")))?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(cfg_err(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    /// Binds the config to a pipeline, filling pipeline defaults.
    pub fn for_pipeline(mut self, pipeline: Pipeline) -> Result<Self, RunError> {
        if let Some(p) = self.pipeline {
            if p != pipeline {
                return Err(cfg_err(format!("config pins pipeline {} but {} was requested", p.name(), pipeline.name())));
            }
        }
        self.pipeline = Some(pipeline);
        if self.physics.p.is_none() {
            self.physics.p = Some(match pipeline {
                Pipeline::ShortTime => vec![1, 2, 3, 4, 5],
                _ => vec![2],
            });
        }
        if self.physics.tau_grid.is_none() {
            self.physics.tau_grid = Some(match pipeline {
                Pipeline::ShortTime => Grid::Linspace { start: 0.004, stop: 0.2, count: 50 },
                Pipeline::Crosscheck | Pipeline::FockOracle | Pipeline::FieldOracle => Grid::List(vec![0.02]),
                Pipeline::Resonance | Pipeline::Gaussian => Grid::Linspace { start: 0.0, stop: 10.0, count: 41 },
            });
        }
        self.validate()?;
        Ok(self)
    }

    pub fn p_list(&self) -> Vec<u32> {
        self.physics.p.clone().unwrap_or_else(|| vec![2])
    }

    pub fn tau_values(&self) -> Vec<f64> {
        self.physics.tau_grid.as_ref().map(Grid::values).unwrap_or_default()
    }

    /// `(tau_requested, tau_used)` under the configured snapping rule.
    pub fn snapped_taus(&self) -> Vec<(f64, f64)> {
        let eps = self.physics.epsilon;
        self.tau_values()
            .into_iter()
            .map(|t| {
                let used = match self.physics.tau_snap {
                    _ if eps == 0.0 || t == 0.0 => t,
                    TauSnap::Fundamental => fundamental_period_tau(eps, t).1,
                    TauSnap::Drive => complete_cycle_tau(eps, 2, t).1,
                    TauSnap::None => t,
                };
                (t, used)
            })
            .collect()
    }

    pub fn l_sum_max(&self, k_max: usize) -> usize {
        self.cutoffs.l_sum_factor * k_max
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let ph = &self.physics;
        if !(0.0..=EPSILON_MAX).contains(&ph.epsilon) {
            return Err(cfg_err(format!("epsilon = {} outside [0, {EPSILON_MAX}]", ph.epsilon)));
        }
        let taus = self.tau_values();
        if ph.tau_grid.is_some() && taus.is_empty() {
            return Err(cfg_err("tau grid is empty"));
        }
        if taus.iter().any(|t| !t.is_finite() || *t < 0.0) || taus.windows(2).any(|w| w[1] < w[0]) {
            return Err(cfg_err("tau grid must be finite, non-negative and sorted"));
        }
        if ph.modes.is_empty() {
            return Err(cfg_err("mode list is empty"));
        }
        if ph.modes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(cfg_err("mode list must be strictly increasing"));
        }
        let c = &self.cutoffs;
        for &m in &ph.modes {
            if m % 2 == 0 || m > 2 * c.resonance_k_max - 1 {
                return Err(cfg_err(format!("mode {m} is not an odd mode below the resonance cutoff")));
            }
        }
        if !(1..=64).contains(&c.field_k_max) {
            return Err(cfg_err("field_k_max must lie in 1..=64"));
        }
        if c.l_sum_factor < 4 {
            return Err(cfg_err("l_sum_factor must be at least 4"));
        }
        if !(1..=8).contains(&c.fock_modes) || c.fock_modes > c.field_k_max {
            return Err(cfg_err("fock_modes must lie in 1..=8 and not exceed field_k_max"));
        }
        if !(2..=8).contains(&c.n_max) {
            return Err(cfg_err("n_max must lie in 2..=8"));
        }
        if !(2..=4096).contains(&c.resonance_k_max) {
            return Err(cfg_err("resonance_k_max must lie in 2..=4096"));
        }
        if c.n_cut > N_CUT_LIMIT {
            return Err(cfg_err(format!("n_cut must not exceed {N_CUT_LIMIT}")));
        }
        let t = &self.tolerances;
        if !(1e-12..=1e-6).contains(&t.resonance) {
            return Err(cfg_err("resonance tolerance outside [1e-12, 1e-6]"));
        }
        if !(t.field > 0.0 && t.field <= 1e-8) {
            return Err(cfg_err("field tolerance must lie in (0, 1e-8]"));
        }
        if !(t.fock > 0.0 && t.fock <= 1e-6) {
            return Err(cfg_err("fock tolerance must lie in (0, 1e-6]"));
        }
        if t.fock_steps == 0 {
            return Err(cfg_err("fock_steps must be positive"));
        }
        if !(t.quadrature > 0.0 && t.quadrature <= 1e-6) {
            return Err(cfg_err("quadrature tolerance must lie in (0, 1e-6]"));
        }
        let bounds =
            [t.crosscheck_n_eps, t.crosscheck_n_tau2, t.crosscheck_sd_eps, t.crosscheck_sd_n, t.coherence, t.variance_paths];
        if bounds.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
            return Err(cfg_err("crosscheck bounds must be finite and non-negative"));
        }
        if let ClosureKind::Sponge = self.closure.kind {
            if !(0.0..1.0).contains(&self.closure.start_fraction) || !(self.closure.strength > 0.0) {
                return Err(cfg_err("sponge needs start_fraction in [0, 1) and positive strength"));
            }
        }
        let ps = self.p_list();
        let t_max = taus.last().copied().unwrap_or(0.0);
        match self.pipeline {
            Some(Pipeline::ShortTime) => {
                if ps.is_empty() || ps.iter().any(|p| !(1..=8).contains(p)) {
                    return Err(cfg_err("sweep p values must lie in 1..=8"));
                }
                if taus.first().is_none_or(|t| *t <= 0.0) || t_max > 0.3 {
                    return Err(cfg_err("sweep tau grid must lie in (0, 0.3]"));
                }
            }
            Some(Pipeline::Crosscheck) => {
                if ps != [2] {
                    return Err(cfg_err("crosscheck requires p = [2]"));
                }
                if ph.epsilon > 1e-2 || ph.epsilon == 0.0 {
                    return Err(cfg_err("crosscheck requires 0 < epsilon <= 1e-2"));
                }
                if t_max > 0.1 {
                    return Err(cfg_err("crosscheck requires tau <= 0.1"));
                }
            }
            Some(Pipeline::FieldOracle) | Some(Pipeline::FockOracle) => {
                if ps.len() != 1 || ps[0] == 0 {
                    return Err(cfg_err("oracle runs take a single positive p"));
                }
                if ph.tau_snap == TauSnap::None && self.pipeline == Some(Pipeline::FieldOracle) {
                    return Err(cfg_err("the field oracle needs the mirror at rest: tau_snap must not be none"));
                }
            }
            Some(Pipeline::Resonance) | Some(Pipeline::Gaussian) => {
                if ps != [2] {
                    return Err(cfg_err("the amplitude equations assume p = [2]"));
                }
                if t_max > 20.0 {
                    return Err(cfg_err("resonance tau_end must not exceed 20"));
                }
            }
            None => {}
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, key: &str, raw: &str) -> Result<(), RunError> {
    let path: Vec<String> = key.split("__").map(|s| s.to_ascii_lowercase()).collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(cfg_err(format!("malformed override key {ENV_PREFIX}{key}")));
    }
    let value = parse_scalar(raw);
    let mut cur = table;
    for seg in &path[..path.len() - 1] {
        let entry = cur.entry(seg.clone()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| cfg_err(format!("override {ENV_PREFIX}{key}: {seg} is not a table")))?;
    }
    cur.insert(path[path.len() - 1].clone(), value);
    Ok(())
}

/// Interprets an override as a TOML value (`2e-3`, `[1, 3]`, `true`), falling
/// back to a plain string.
fn parse_scalar(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ScenarioConfig::default().for_pipeline(Pipeline::Resonance).unwrap();
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let env = vec![
            ("DCE_PHYSICS__EPSILON".to_string(), "2e-3".to_string()),
            ("DCE_THREADS".to_string(), "3".to_string()),
            ("DCE_PHYSICS__MODES".to_string(), "[1, 3]".to_string()),
            ("DCE_CLOSURE__KIND".to_string(), "hard".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let cfg = ScenarioConfig::load(None, env).unwrap();
        assert_eq!(cfg.physics.epsilon, 2e-3);
        assert_eq!(cfg.threads, 3);
        assert_eq!(cfg.physics.modes, vec![1, 3]);
        assert_eq!(cfg.closure.kind, ClosureKind::Hard);
    }

    #[test]
    fn rejects_unknown_keys_and_versions() {
        assert!(ScenarioConfig::from_toml_str("bogus = 1").is_err());
        let env = vec![("DCE_SCHEMA_VERSION".to_string(), "7".to_string())];
        assert!(ScenarioConfig::load(None, env).is_err());
    }

    #[test]
    fn pipeline_constraints() {
        let mut cfg = ScenarioConfig::default();
        cfg.physics.tau_grid = Some(Grid::List(vec![0.5]));
        assert!(cfg.clone().for_pipeline(Pipeline::Crosscheck).is_err());
        assert!(cfg.clone().for_pipeline(Pipeline::ShortTime).is_err());
        cfg.physics.tau_grid = Some(Grid::List(vec![0.2, 0.1]));
        assert!(cfg.clone().for_pipeline(Pipeline::Resonance).is_err());
        let pinned = ScenarioConfig { pipeline: Some(Pipeline::Gaussian), ..Default::default() };
        assert!(pinned.for_pipeline(Pipeline::Resonance).is_err());
    }

    #[test]
    fn linspace_grid() {
        let g = Grid::Linspace { start: 0.0, stop: 1.0, count: 5 };
        assert_eq!(g.values(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn snapping_moves_to_full_periods() {
        let cfg = ScenarioConfig::default().for_pipeline(Pipeline::Crosscheck).unwrap();
        let (req, used) = cfg.snapped_taus()[0];
        assert_eq!(req, 0.02);
        let n = used / (1e-3 * std::f64::consts::PI);
        assert!((n - n.round()).abs() < 1e-9 && (used - req).abs() < 1e-3 * std::f64::consts::PI);
    }
}
