//! Run configuration: closed-world JSON with defaults and validation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concentration::{Probe, SearchBox, DEFAULT_C_STAR};
use crate::grid::MeridianGrid;
use crate::scenario::Scenario;
use crate::state::Representation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn path(&self) -> &str {
        match self {
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => path,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Gl,
    Sphere,
    Galerkin,
}

impl Mode {
    /// Director representation evolved by this mode.
    pub fn representation(self) -> Representation {
        match self {
            Mode::Sphere => Representation::Sphere,
            Mode::Gl | Mode::Galerkin => Representation::Gl,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_max: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub n_r: usize,
    pub n_z: usize,
}

impl GridConfig {
    pub fn build(&self) -> Result<MeridianGrid, ConfigError> {
        MeridianGrid::new(self.r_max, self.z_min, self.z_max, self.n_r, self.n_z).map_err(|e| ConfigError::invalid("grid", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DtPolicy {
    Auto,
    Fixed(f64),
}

impl Serialize for DtPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            DtPolicy::Auto => s.serialize_str("auto"),
            DtPolicy::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for DtPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DtPolicy::Fixed(v)),
            Raw::Text(t) if t == "auto" => Ok(DtPolicy::Auto),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{t}\""))),
        }
    }
}

fn default_dt() -> DtPolicy {
    DtPolicy::Auto
}
fn default_cadence() -> usize {
    50
}
fn default_true() -> bool {
    true
}
fn default_k_list() -> Vec<f64> {
    vec![1e2, 1e4, 1e6]
}
fn default_tests() -> Vec<usize> {
    (0..5).collect()
}
fn default_c_star() -> f64 {
    DEFAULT_C_STAR
}
fn default_modes() -> usize {
    16
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Defaults to one off-axis and one on-axis ball at mid-height.
    #[serde(default)]
    pub probes: Option<Vec<Probe>>,
    /// Indices into the poloidal test library.
    #[serde(default = "default_tests")]
    pub test_functions: Vec<usize>,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<f64>,
    /// Good-time threshold on `int |tau|^2`; defaults to `10 E(0) / t_end`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub eps0_sq: Option<f64>,
    #[serde(default = "default_c_star")]
    pub c_star: f64,
    /// Blow-up search square; defaults to the axis at mid-height.
    #[serde(default)]
    pub search: Option<SearchBox>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            probes: None,
            test_functions: default_tests(),
            k_list: default_k_list(),
            lambda: None,
            eps0_sq: None,
            c_star: default_c_star(),
            search: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GalerkinConfig {
    #[serde(default = "default_modes")]
    pub modes: usize,
}

impl Default for GalerkinConfig {
    fn default() -> Self {
        Self { modes: default_modes() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_list: Option<Vec<f64>>,
    #[serde(default = "default_dt")]
    pub dt: DtPolicy,
    pub t_end: f64,
    pub scenario: Scenario,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default = "default_cadence")]
    pub snapshot_every: usize,
    /// `false` freezes the flow (pure heat flow of the director).
    #[serde(default = "default_true")]
    pub advection: bool,
    #[serde(default)]
    pub galerkin: GalerkinConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub seed: u64,
}

fn positive(path: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::invalid(path, format!("must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { "document".into() } else { path },
                message: e.into_inner().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.grid;
        positive("grid.r_max", g.r_max)?;
        if !(g.z_max > g.z_min) {
            return Err(ConfigError::invalid("grid.z_max", "must exceed grid.z_min"));
        }
        g.build()?;
        match (&self.epsilon, &self.epsilon_list) {
            (Some(_), Some(_)) => return Err(ConfigError::invalid("epsilon_list", "give either epsilon or epsilon_list, not both")),
            (None, None) => return Err(ConfigError::invalid("epsilon", "missing: give epsilon or epsilon_list")),
            (Some(e), None) => positive("epsilon", *e)?,
            (None, Some(list)) => {
                if list.is_empty() {
                    return Err(ConfigError::invalid("epsilon_list", "must not be empty"));
                }
                for (k, e) in list.iter().enumerate() {
                    positive(&format!("epsilon_list[{k}]"), *e)?;
                }
                if list.windows(2).any(|w| !(w[1] < w[0])) {
                    return Err(ConfigError::invalid("epsilon_list", "must be strictly decreasing"));
                }
            }
        }
        if let DtPolicy::Fixed(v) = self.dt {
            positive("dt", v)?;
        }
        positive("t_end", self.t_end)?;
        if self.snapshot_every == 0 {
            return Err(ConfigError::invalid("snapshot_every", "must be at least 1"));
        }
        self.scenario.validate().map_err(|e| ConfigError::invalid("scenario", e.to_string()))?;
        if self.galerkin.modes == 0 {
            return Err(ConfigError::invalid("galerkin.modes", "must be at least 1"));
        }
        let a = &self.analysis;
        for (k, id) in a.test_functions.iter().enumerate() {
            if *id >= 5 {
                return Err(ConfigError::invalid(format!("analysis.test_functions[{k}]"), format!("library has 5 entries, got index {id}")));
            }
        }
        for (k, v) in a.k_list.iter().enumerate() {
            if !(*v > 1.0 && v.is_finite()) {
                return Err(ConfigError::invalid(format!("analysis.k_list[{k}]"), format!("must exceed 1, got {v}")));
            }
        }
        if let Some(l) = a.lambda {
            positive("analysis.lambda", l)?;
        }
        if let Some(e) = a.eps0_sq {
            positive("analysis.eps0_sq", e)?;
        }
        positive("analysis.c_star", a.c_star)?;
        if let Some(p) = &a.probes {
            for (k, pr) in p.iter().enumerate() {
                positive(&format!("analysis.probes[{k}].radius"), pr.radius)?;
                if pr.r < 0.0 {
                    return Err(ConfigError::invalid(format!("analysis.probes[{k}].r"), "must be non-negative"));
                }
            }
        }
        if let Some(s) = &a.search {
            positive("analysis.search.half_width", s.half_width)?;
        }
        Ok(())
    }

    pub fn grid(&self) -> MeridianGrid {
        self.grid.build().expect("validated")
    }

    /// The epsilon list of a sweep; a single `epsilon` is a one-member sweep.
    pub fn epsilons(&self) -> Vec<f64> {
        match (&self.epsilon, &self.epsilon_list) {
            (Some(e), _) => vec![*e],
            (None, Some(l)) => l.clone(),
            (None, None) => Vec::new(),
        }
    }

    /// Probes used by the concentration analysis.
    pub fn probes(&self) -> Vec<Probe> {
        if let Some(p) = &self.analysis.probes {
            return p.clone();
        }
        let g = self.grid;
        let mid = 0.5 * (g.z_min + g.z_max);
        let radius = 0.2 * g.r_max.min(0.5 * (g.z_max - g.z_min));
        vec![
            Probe {
                r: 0.5 * g.r_max,
                z: mid,
                radius,
            },
            Probe { r: 0.0, z: mid, radius },
        ]
    }

    pub fn search_box(&self) -> SearchBox {
        if let Some(s) = self.analysis.search {
            return s;
        }
        let g = self.grid;
        SearchBox {
            r0: 0.0,
            z0: 0.5 * (g.z_min + g.z_max),
            half_width: 0.25 * g.r_max.min(0.5 * (g.z_max - g.z_min)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}
