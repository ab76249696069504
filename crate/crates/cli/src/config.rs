//! Experiment configuration: flat `section.key = value` files (TOML with dotted
//! keys) or JSON, plus the canned demonstration configs.

use std::fmt::Write as _;
use std::path::Path;

use extnls_core::evolution::{RunParams, DEFAULT_CONTAMINATION};
use extnls_core::{InitialData, ObstacleKind, ObstacleSpec, SymmetryClass};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub d: usize,
    pub p: f64,
    #[serde(default = "yes")]
    pub nonlinear: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub kind: ObstacleKind,
    /// radius of a ball, or the d semi-axes of an ellipsoid
    pub params: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub r_out: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    /// defaults to dt/1024
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_min: Option<f64>,
    #[serde(default = "ten")]
    pub grad_factor: f64,
    #[serde(default = "contamination")]
    pub contamination: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(flatten)]
    pub data: InitialData,
    #[serde(default)]
    pub antisymmetric_axes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundStateConfig {
    pub tol: f64,
}

impl Default for GroundStateConfig {
    fn default() -> Self {
        Self { tol: 1e-10 }
    }
}

/// Constant C of the symmetric variance: `"auto"` or a positive number.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum VarianceC {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for VarianceC {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            VarianceC::Auto => s.serialize_str("auto"),
            VarianceC::Fixed(c) => s.serialize_f64(*c),
        }
    }
}

impl<'de> Deserialize<'de> for VarianceC {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(VarianceC::Fixed(c)),
            Raw::Text(s) if s.eq_ignore_ascii_case("auto") => Ok(VarianceC::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or \"auto\", got \"{s}\""))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceConfig {
    #[serde(default)]
    pub c: VarianceC,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// recorded for provenance; the pipeline itself draws no random numbers
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemConfig,
    pub obstacle: ObstacleConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub initial: InitialConfig,
    #[serde(default)]
    pub ground_state: GroundStateConfig,
    #[serde(default)]
    pub variance: VarianceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn yes() -> bool {
    true
}
fn one() -> usize {
    1
}
fn ten() -> f64 {
    10.0
}
fn contamination() -> f64 {
    DEFAULT_CONTAMINATION
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn from_json_str(s: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// JSON if the file ends in `.json`, dotted key-value text otherwise.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// One `section.key = value` line per leaf, keys sorted.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes to TOML");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes to JSON")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let d = self.problem.d;
        if !(2..=3).contains(&d) {
            return invalid(format!("problem.d must be 2 or 3, got {d}"));
        }
        let p = self.problem.p;
        if !(p > 1.0) || !p.is_finite() {
            return invalid(format!("problem.p must exceed 1, got {p}"));
        }
        positive("grid.h", self.grid.h)?;
        positive("grid.r_out", self.grid.r_out)?;
        positive("time.dt", self.time.dt)?;
        positive("time.t_end", self.time.t_end)?;
        positive("time.contamination", self.time.contamination)?;
        if let Some(m) = self.time.dt_min {
            positive("time.dt_min", m)?;
        }
        if self.time.record_every == 0 {
            return invalid("time.record_every must be at least 1");
        }
        if !(self.time.grad_factor > 1.0) {
            return invalid(format!("time.grad_factor must exceed 1, got {}", self.time.grad_factor));
        }
        positive("ground_state.tol", self.ground_state.tol)?;
        if let VarianceC::Fixed(c) = self.variance.c {
            positive("variance.c", c)?;
        }
        if let Some(&a) = self.initial.antisymmetric_axes.iter().find(|&&a| a >= d) {
            return invalid(format!("antisymmetric axis {a} out of range for d = {d}"));
        }
        self.obstacle_spec()?;
        self.run_params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn obstacle_spec(&self) -> Result<ObstacleSpec, ConfigError> {
        ObstacleSpec::make(self.obstacle.kind, self.problem.d, &self.obstacle.params).map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn symmetry(&self) -> SymmetryClass {
        SymmetryClass { antisymmetric_axes: self.initial.antisymmetric_axes.clone() }
    }

    /// Run parameters; an AUTO variance constant stays None and is resolved on the grid.
    pub fn run_params(&self) -> RunParams {
        let mut rp = RunParams::new(self.problem.p, self.time.dt, self.time.t_end);
        rp.record_every = self.time.record_every;
        if let Some(m) = self.time.dt_min {
            rp.dt_min = m;
        }
        rp.grad_factor = self.time.grad_factor;
        rp.contamination_fraction = self.time.contamination;
        rp.nonlinear = self.problem.nonlinear;
        rp.variance_c = match self.variance.c {
            VarianceC::Auto => None,
            VarianceC::Fixed(c) => Some(c),
        };
        rp
    }

    /// Same experiment with h and dt halved.
    pub fn refined(&self) -> Self {
        let mut c = self.clone();
        c.grid.h *= 0.5;
        c.time.dt *= 0.5;
        c.time.dt_min = c.time.dt_min.map(|m| 0.5 * m);
        c.name = format!("{}-fine", self.name);
        c
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut String) {
    match v {
        toml::Value::Table(t) => {
            for (k, child) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        leaf => {
            let _ = writeln!(out, "{prefix} = {leaf}");
        }
    }
}

pub const CANNED: [(&str, &str); 6] = [
    ("ball", include_str!("../configs/ball.toml")),
    ("convex", include_str!("../configs/convex.toml")),
    ("symmetric", include_str!("../configs/symmetric.toml")),
    ("threshold", include_str!("../configs/threshold.toml")),
    ("identities", include_str!("../configs/identities.toml")),
    ("ellipsoid", include_str!("../configs/ellipsoid.toml")),
];

pub fn canned(name: &str) -> Option<ExperimentConfig> {
    CANNED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ExperimentConfig::from_toml_str(text).expect("canned configs parse"))
}
