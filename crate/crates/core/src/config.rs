//! TOML scenario files.
//!
//! ```toml
//! [network]
//! nodes = [1, 2, 3]
//! links = [[1, 2], [2, 3]]
//! flows = [3]
//!
//! [system]
//! r_max = 3.0
//! p_max = 2.0
//! mu_max = 2.0
//! battery_capacity = 160.0
//! xi = 1.0
//! eta = 0.98
//! harvest_max = 5.0
//! # g_max, delta1 and delta2 default to the values implied by the
//! # utilities and the rate model
//!
//! [rate]
//! kind = "linear-gain"    # or "orthogonal-log", "interference-log"
//! levels = [1.0, 2.0]
//! noise_variance = 1.0    # log models only
//!
//! [[utility]]
//! nodes = [1, 2]
//! flow = 3
//! form = "log1p"
//!
//! [simulation]
//! v = 30.0
//! horizon = 1200
//! runs = 10
//! seed = 1
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NetworkSpec, SystemParams};
use crate::policy::Algorithm;
use crate::rate::{ChannelDomain, RateKind, RatePowerModel};
use crate::scalar::Scalar;
use crate::scenario::Scenario;
use crate::utility::{UtilityFn, UtilitySpec};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub network: NetworkSection,
    pub system: SystemSection,
    pub rate: RateSection,
    pub utility: Vec<UtilitySection>,
    #[serde(default)]
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub nodes: Vec<u32>,
    pub links: Vec<(u32, u32)>,
    pub flows: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub r_max: f64,
    pub p_max: f64,
    pub mu_max: f64,
    pub battery_capacity: f64,
    pub xi: f64,
    pub eta: f64,
    pub harvest_max: f64,
    pub g_max: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSection {
    pub kind: RateKind,
    pub levels: Vec<f64>,
    #[serde(default = "one")]
    pub noise_variance: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilitySection {
    pub nodes: Vec<u32>,
    pub flow: u32,
    #[serde(default = "log1p")]
    pub form: String,
}

fn log1p() -> String {
    "log1p".into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgorithmName {
    Proposed,
    Esa,
    Greedy,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_algorithm")]
    pub algorithm: AlgorithmName,
    #[serde(default = "default_v")]
    pub v: f64,
    pub gamma: Option<f64>,
    #[serde(default = "default_horizon")]
    pub horizon: u64,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_algorithm() -> AlgorithmName {
    AlgorithmName::Proposed
}
fn default_v() -> f64 {
    30.0
}
fn default_horizon() -> u64 {
    1200
}
fn default_runs() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self {
            algorithm: default_algorithm(),
            v: default_v(),
            gamma: None,
            horizon: default_horizon(),
            runs: default_runs(),
            seed: default_seed(),
        }
    }
}

impl SimulationSection {
    pub fn algorithm(&self) -> Algorithm {
        match self.algorithm {
            AlgorithmName::Proposed => Algorithm::Proposed {
                v: self.v,
                gamma: self.gamma,
            },
            AlgorithmName::Esa => Algorithm::Esa { v: self.v },
            AlgorithmName::Greedy => Algorithm::Greedy,
        }
    }
}

/// A parsed file: the scenario plus simulation defaults.
#[derive(Debug, Clone)]
pub struct Config<T: Scalar> {
    pub scenario: Scenario<T>,
    pub simulation: SimulationSection,
    pub file: FileConfig,
}

impl FileConfig {
    /// Parses TOML text after applying `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        doc.try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn build<T: Scalar>(&self) -> Result<Scenario<T>> {
        let n = &self.network;
        let net = NetworkSpec::new(&n.nodes, &n.links, &n.flows)?;
        let levels = self.rate.levels.iter().map(|&x| T::lit(x)).collect();
        let rate = RatePowerModel::new(
            self.rate.kind,
            T::lit(self.rate.noise_variance),
            ChannelDomain::new(levels)?,
        )?;
        let mut pairs = Vec::new();
        for u in &self.utility {
            let k = net
                .flow_index(u.flow)
                .ok_or_else(|| Error::Config(format!("utility names unknown flow {}", u.flow)))?;
            let form = UtilityFn::parse(&u.form)?;
            for &label in &u.nodes {
                let node = net
                    .node_index(label)
                    .ok_or_else(|| Error::Config(format!("utility names unknown node {label}")))?;
                pairs.push((node, k, form.clone()));
            }
        }
        let utility = UtilitySpec::new(&net, pairs)?;
        let (g, d1, d2) = Scenario::derived_constants(&net, &rate, &utility)?;
        let s = &self.system;
        let sys = SystemParams {
            r_max: T::lit(s.r_max),
            p_max: T::lit(s.p_max),
            mu_max: T::lit(s.mu_max),
            battery_capacity: T::lit(s.battery_capacity),
            xi: T::lit(s.xi),
            eta: T::lit(s.eta),
            harvest_max: T::lit(s.harvest_max),
            g_max: s.g_max.map(T::lit).unwrap_or(g),
            delta1: s.delta1.map(T::lit).unwrap_or(d1),
            delta2: s.delta2.map(T::lit).unwrap_or(d2),
        };
        Scenario::new(net, sys, rate, utility)
    }
}

impl<T: Scalar> Config<T> {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let file = FileConfig::parse(text, overrides)?;
        let scenario = file.build()?;
        Ok(Self {
            scenario,
            simulation: file.simulation.clone(),
            file,
        })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, overrides).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }
}

/// `section.key=value`, where `value` is a TOML value (`0.97`, `[1, 2]`,
/// `"esa"`); bare words are taken as strings.
fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = parse_value(raw.trim())?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    let (last, parents) = keys.split_last().unwrap();
    let mut table = doc;
    for k in parents {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{spec}`: `{k}` is not a table")))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Result<toml::Value> {
    let doc: std::result::Result<toml::Table, _> = format!("x = {raw}").parse();
    match doc {
        Ok(mut t) => Ok(t.remove("x").unwrap()),
        Err(_)
            if !raw.is_empty()
                && raw
                    .chars()
                    .all(|c| c.is_alphanumeric() || c == '-' || c == '_') =>
        {
            Ok(toml::Value::String(raw.to_string()))
        }
        Err(e) => Err(Error::Config(format!("override value `{raw}`: {e}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
[network]
nodes = [1, 2, 3]
links = [[1, 2], [2, 3]]
flows = [3]

[system]
r_max = 3.0
p_max = 2.0
mu_max = 2.0
battery_capacity = 160.0
xi = 1.0
eta = 0.98
harvest_max = 5.0

[rate]
kind = "linear-gain"
levels = [1.0, 2.0]

[[utility]]
nodes = [1]
flow = 3
"#;

    #[test]
    fn parses_and_derives_constants() {
        let c = Config::<f64>::parse(MINI, &[]).unwrap();
        assert_eq!(c.scenario.sys.g_max, 1.0);
        assert_eq!(c.scenario.sys.delta1, 2.0);
        assert_eq!(c.scenario.sys.delta2, 0.0);
        assert_eq!(c.simulation.horizon, 1200);
        assert_eq!(c.scenario.utility.len(), 1);
    }

    #[test]
    fn overrides_apply_before_validation() {
        let c = Config::<f64>::parse(
            MINI,
            &["system.eta=0.96".into(), "simulation.algorithm=esa".into()],
        )
        .unwrap();
        assert_eq!(c.scenario.sys.eta, 0.96);
        assert_eq!(c.simulation.algorithm, AlgorithmName::Esa);
        assert!(Config::<f64>::parse(MINI, &["system.eta".into()]).is_err());
    }

    #[test]
    fn missing_field_is_named() {
        let text = MINI.replace("xi = 1.0\n", "");
        let err = Config::<f64>::parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("xi"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = MINI.replace("xi = 1.0", "xi = 1.0\nzeta = 2.0");
        assert!(Config::<f64>::parse(&text, &[]).is_err());
    }
}
