//! JSON run configurations with dotted `key=value` overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiments::{ConvergeConfig, CountingConfig, RegimeMapConfig, ResonanceConfig};
use crate::foldylax::{IncidentWave, SolverChoice, Variant};
use crate::geometry::{derive_scales, DomainShape, ScaleSet, Sign};
use crate::tensor::Point;

pub trait Validate {
    fn validate(&self) -> Result<()>;
}

/// Scale parameters shared by the single-run subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleInputs {
    pub a: f64,
    pub h: f64,
    pub eta0: f64,
    pub c0: f64,
    pub c_r: f64,
    pub lambda_n0_b: f64,
    pub sign: Sign,
}

impl ScaleInputs {
    pub fn resolve(&self) -> Result<ScaleSet> {
        derive_scales(self.a, self.h, self.eta0, self.c0, self.sign, self.c_r, self.lambda_n0_b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveInputs {
    pub theta: Point,
    pub p: Point,
}

impl WaveInputs {
    pub fn at(&self, k: f64) -> Result<IncidentWave> {
        IncidentWave::new(k, self.theta, self.p)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldyLaxConfig {
    pub domain: DomainShape,
    pub scales: ScaleInputs,
    pub wave: WaveInputs,
    pub variant: Variant,
    pub solver: SolverChoice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LseConfig {
    pub domain: DomainShape,
    pub scales: ScaleInputs,
    pub wave: WaveInputs,
    pub grid_n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectiveConfig {
    pub xi: f64,
    pub sign: Sign,
    pub regime_map: RegimeMapConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub domain: DomainShape,
    pub grid_n: usize,
    /// Number of filtered eigenvalues to report; 0 reports all.
    pub count: usize,
}

impl Validate for FoldyLaxConfig {
    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let s = self.scales.resolve()?;
        self.wave.at(s.k)?;
        Ok(())
    }
}

impl Validate for LseConfig {
    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        let s = self.scales.resolve()?;
        self.wave.at(s.k)?;
        if self.grid_n < 2 {
            return Err(Error::config("grid_n", "grid_n must be at least 2"));
        }
        Ok(())
    }
}

impl Validate for EffectiveConfig {
    fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() {
            return Err(Error::config("xi", "xi must be finite"));
        }
        self.regime_map.validate()
    }
}

impl Validate for SpectrumConfig {
    fn validate(&self) -> Result<()> {
        self.domain.validate()?;
        if self.grid_n < 2 {
            return Err(Error::config("grid_n", "grid_n must be at least 2"));
        }
        Ok(())
    }
}

impl Validate for ConvergeConfig {
    fn validate(&self) -> Result<()> {
        ConvergeConfig::validate(self)
    }
}

impl Validate for ResonanceConfig {
    fn validate(&self) -> Result<()> {
        ResonanceConfig::validate(self)
    }
}

impl Validate for CountingConfig {
    fn validate(&self) -> Result<()> {
        CountingConfig::validate(self)
    }
}

impl Validate for RegimeMapConfig {
    fn validate(&self) -> Result<()> {
        RegimeMapConfig::validate(self)
    }
}

/// `a.b.c=value`; the value is read as JSON, falling back to a plain string.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must have the form key=value"))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(spec, "override key is empty"));
    }
    let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        cur = match cur {
            Value::Object(map) => {
                if last {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()))
            }
            Value::Array(items) => {
                let idx: usize =
                    part.parse().map_err(|_| Error::config(key, format!("`{part}` is not an array index")))?;
                let len = items.len();
                let slot =
                    items.get_mut(idx).ok_or_else(|| Error::config(key, format!("index {idx} out of range ({len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(Error::config(key, format!("`{part}` does not address an object or array"))),
        };
    }
    Ok(())
}

fn backticked(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

fn schema_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let key = if msg.starts_with("unknown field") || msg.starts_with("missing field") {
        backticked(&msg).unwrap_or_else(|| "<root>".into())
    } else {
        "<root>".into()
    };
    Error::config(key, msg)
}

pub fn parse_config_value<T: DeserializeOwned + Validate>(mut value: Value, overrides: &[String]) -> Result<T> {
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    let cfg: T = serde_json::from_value(value).map_err(schema_error)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config_str<T: DeserializeOwned + Validate>(text: &str, overrides: &[String]) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(schema_error)?;
    parse_config_value(value, overrides)
}

pub fn parse_config<T: DeserializeOwned + Validate>(path: &Path, overrides: &[String]) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io { path: path.display().to_string(), message: e.to_string() })?;
    parse_config_str(&text, overrides)
}
