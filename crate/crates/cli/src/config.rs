//! Versioned TOML configuration. Unknown keys are rejected and every
//! error names the offending field path.

use std::path::Path;

use anyhow::Context;
use serde::Deserialize;

use seqdesign::frequentist::SpendingKind;

pub const CONFIG_VERSION: u32 = 1;

/// Raised for anything wrong with the user's input, as opposed to
/// numerical failures inside the engine.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub version: u32,
    pub schedule: Option<ScheduleConfig>,
    pub prior: Option<PriorConfig>,
    pub design: Option<DesignConfig>,
    pub loss: Option<LossConfig>,
    pub calibration: Option<CalibrationConfig>,
    pub simulation: Option<SimulationConfig>,
    pub decision: Option<DecisionConfig>,
    pub observed: Option<ObservedConfig>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub k: Option<usize>,
    pub n_max: Option<u64>,
    /// Explicit cumulative sample sizes; overrides `k` and `n_max`.
    pub sizes: Option<Vec<u64>>,
    pub sigma: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    #[serde(default)]
    pub flat: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Pocock,
    Obf,
    Spending,
    Pp,
    Ppos,
    Decision,
    Curtailment,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub family: Option<Family>,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub eta: Option<f64>,
    pub spending: Option<SpendingKind>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub xi0: Option<f64>,
    pub xi1: Option<OneOrMany>,
    pub patient_cost: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationTarget {
    PriorSd,
    Threshold,
    Ppos,
    Loss,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub target: Option<CalibrationTarget>,
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GridMode {
    /// 72 cells: nu0 in {0.1, 0.5, 1}, nu in {0.1, 0.5, 1, 10}, K in {1, 2, 5, 10, 100, 1000}.
    Paper,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub grid: Option<GridMode>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    /// SD of the generative effect distribution.
    pub nu0: Option<f64>,
    pub mu0: Option<f64>,
    /// Fixed true effect; overrides `nu0`.
    pub theta: Option<f64>,
    pub ci_alpha: Option<f64>,
    #[serde(default)]
    pub records: bool,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionConfig {
    pub analysis: Option<usize>,
    pub z: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedConfig {
    pub ybar: Option<f64>,
    pub n: Option<u64>,
    pub sigma: Option<f64>,
    /// Declared analyses and stopping analysis; recorded but irrelevant to
    /// the posterior.
    pub k: Option<usize>,
    pub stop_analysis: Option<usize>,
    pub alpha: Option<f64>,
}

pub fn parse(text: &str) -> anyhow::Result<Config> {
    let de = toml::Deserializer::parse(text).map_err(|e| config_error(format!("{e}")))?;
    let config: Config = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        config_error(format!("config field `{path}`: {}", e.into_inner()))
    })?;
    if config.version != CONFIG_VERSION {
        return Err(config_error(format!(
            "config field `version`: unsupported version {}, expected {CONFIG_VERSION}",
            config.version
        )));
    }
    Ok(config)
}

pub fn load(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        None => Ok(Config {
            version: CONFIG_VERSION,
            ..Config::default()
        }),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| config_error(format!("cannot read config {}: {e}", p.display())))?;
            parse(&text).with_context(|| format!("in {}", p.display()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn message(text: &str) -> String {
        format!("{:#}", parse(text).unwrap_err())
    }

    #[test]
    fn minimal_and_full() {
        let c = parse("version = 1").unwrap();
        assert!(c.schedule.is_none());
        let c = parse(
            r#"
            version = 1
            [schedule]
            sizes = [200, 300, 400]
            sigma = 1.0
            [prior]
            mean = 0.0
            sd = 1.0
            [loss]
            xi0 = 400
            xi1 = 7600
            [design]
            family = "spending"
            spending = { kind = "power", b = 2.0 }
            "#,
        )
        .unwrap();
        assert_eq!(c.schedule.unwrap().sizes.unwrap(), vec![200, 300, 400]);
        assert!(matches!(c.loss.unwrap().xi1, Some(OneOrMany::One(x)) if x == 7600.0));
        assert_eq!(c.design.unwrap().spending, Some(SpendingKind::Power { b: 2.0 }));
    }

    #[test]
    fn unknown_fields_name_their_path() {
        let m = message("version = 1\n[prior]\nmean = 0.0\nscale = 2.0\n");
        assert!(m.contains("prior"), "{m}");
        assert!(m.contains("scale"), "{m}");
        let m = message("version = 1\n[schedule]\nk = \"five\"\n");
        assert!(m.contains("schedule.k"), "{m}");
    }

    #[test]
    fn version_is_required_and_checked() {
        assert!(message("[prior]\nsd = 1.0\n").contains("version"));
        assert!(message("version = 2").contains("unsupported version"));
    }
}
