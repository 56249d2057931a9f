//! Scenario files.
//!
//! ```toml
//! scenario_id = "jpn-swi"
//! preset = "JPN-SWI"        # fills link.rtt_ms and [loss]
//! suite = "both"            # classical | qrc | both | custom
//! iterations = 1000
//! seed = 1
//!
//! [link]
//! mtu = 1500
//!
//! [engine]
//! additional_ke_rounds = 2
//!
//! [[sweep]]                 # optional: one result set per loss point
//! uniform_rate = 0.12
//! ```
//!
//! Unknown keys anywhere are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::presets::preset;
use crate::engine::{EngineConfig, WireLayout};
use crate::netsim::{LinkParams, LossModel, MIN_MTU};
use crate::suite::{
    classical_suite_with, qrc_suite_with, AlgorithmSpec, CryptoSuite, Role, SuiteId, SuiteSizes,
    AES_256_KEY_BYTES, HMAC_SHA256_KEY_BYTES,
};

pub const DEFAULT_ITERATIONS: u32 = 1000;
pub const DEFAULT_MTU: usize = 1500;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: &str, message: impl fmt::Display) -> ConfigError {
    ConfigError::Validation {
        path: path.to_owned(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteSelection {
    Classical,
    Qrc,
    Both,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// One loss process shared by both directions.
    Shared,
    PerDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario_id: Option<String>,
    preset: Option<String>,
    suite: Option<SuiteSelection>,
    iterations: Option<u32>,
    seed: Option<u64>,
    #[serde(default)]
    link: RawLink,
    loss: Option<RawLoss>,
    #[serde(default)]
    sweep: Vec<RawLossPoint>,
    #[serde(default)]
    engine: EngineConfig,
    #[serde(default)]
    sizes: SuiteSizes,
    custom_suite: Option<RawCustomSuite>,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLink {
    rtt_ms: Option<f64>,
    mtu: Option<usize>,
    jitter_ms: Option<f64>,
    channel_mode: Option<ChannelMode>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLoss {
    #[serde(rename = "P")]
    p: Option<f64>,
    #[serde(rename = "R")]
    r: Option<f64>,
    uniform_rate: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLossPoint {
    label: Option<String>,
    preset: Option<String>,
    #[serde(rename = "P")]
    p: Option<f64>,
    #[serde(rename = "R")]
    r: Option<f64>,
    uniform_rate: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeyExchange {
    name: String,
    public_bytes: usize,
    response_bytes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCustomSuite {
    key_exchanges: Vec<RawKeyExchange>,
    auth_name: String,
    auth_key_bytes: Option<usize>,
    auth_public_key_bytes: usize,
    auth_signature_bytes: usize,
    encryption_key_bytes: Option<usize>,
    integrity_key_bytes: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    formats: Option<Vec<OutputFormat>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossPoint {
    pub label: String,
    pub model: LossModel,
    pub loss_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub formats: Vec<OutputFormat>,
}

/// A fully validated scenario with defaults applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario_id: String,
    pub suites: Vec<CryptoSuite>,
    pub iterations: u32,
    pub seed: u64,
    pub link: LinkParams,
    pub jitter_ms: f64,
    pub channel_mode: ChannelMode,
    pub loss_points: Vec<LossPoint>,
    pub engine: EngineConfig,
    pub sizes: SuiteSizes,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    /// Replaces the suite list, e.g. from a command-line override.
    pub fn select_suites(&mut self, selection: SuiteSelection) -> Result<(), ConfigError> {
        let sizes = self.sizes;
        self.suites = match selection {
            SuiteSelection::Classical => vec![classical_suite_with(&sizes)],
            SuiteSelection::Qrc => vec![qrc_suite_with(&sizes)],
            SuiteSelection::Both => vec![classical_suite_with(&sizes), qrc_suite_with(&sizes)],
            SuiteSelection::Custom => {
                let custom: Vec<_> = self
                    .suites
                    .iter()
                    .filter(|s| s.suite_id == SuiteId::Custom)
                    .cloned()
                    .collect();
                if custom.is_empty() {
                    return Err(invalid("suite", "custom selected but no [custom_suite] given"));
                }
                custom
            }
        };
        Ok(())
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_owned(),
        source,
    })?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

fn check_probability(path: &str, v: f64) -> Result<f64, ConfigError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(path, format!("{v} is not a probability in [0, 1]")))
    }
}

fn loss_model(
    section: &str,
    p: Option<f64>,
    r: Option<f64>,
    uniform: Option<f64>,
) -> Result<Option<LossModel>, ConfigError> {
    match (p, r, uniform) {
        (None, None, None) => Ok(None),
        (None, None, Some(u)) => Ok(Some(LossModel::Uniform {
            rate: check_probability(&format!("{section}.uniform_rate"), u)?,
        })),
        (Some(p), Some(r), None) => {
            let p = check_probability(&format!("{section}.P"), p)?;
            let r = check_probability(&format!("{section}.R"), r)?;
            if p + r == 0.0 {
                return Err(invalid(section, "P and R cannot both be zero"));
            }
            Ok(Some(LossModel::GilbertElliott { p, r }))
        }
        (_, _, Some(_)) => Err(invalid(
            section,
            "give either P and R or uniform_rate, not both",
        )),
        _ => Err(invalid(section, "P and R must be given together")),
    }
}

fn point_label(model: &LossModel) -> String {
    match model {
        // Round away binary noise such as 7.340000000000001.
        LossModel::Uniform { rate } => format!("uniform-{}", (rate * 1e8).round() / 1e6),
        LossModel::GilbertElliott { p, r } => format!("ge-P{p}-R{r}"),
    }
}

fn custom_suite(raw: &RawCustomSuite) -> Result<CryptoSuite, ConfigError> {
    let kes = raw
        .key_exchanges
        .iter()
        .map(|k| AlgorithmSpec::key_exchange(&k.name, k.public_bytes, k.response_bytes.unwrap_or(k.public_bytes)))
        .collect();
    let auth = AlgorithmSpec::signer(
        &raw.auth_name,
        raw.auth_key_bytes.unwrap_or(raw.auth_public_key_bytes),
        raw.auth_public_key_bytes,
        raw.auth_signature_bytes,
    );
    CryptoSuite::new(
        SuiteId::Custom,
        AlgorithmSpec::symmetric(
            "AES-256-CBC",
            Role::Encryption,
            raw.encryption_key_bytes.unwrap_or(AES_256_KEY_BYTES),
        ),
        AlgorithmSpec::symmetric(
            "SHA-256-HMAC",
            Role::Integrity,
            raw.integrity_key_bytes.unwrap_or(HMAC_SHA256_KEY_BYTES),
        ),
        kes,
        auth,
    )
    .map_err(|e| invalid("custom_suite", e))
}

fn resolve(raw: RawConfig) -> Result<ScenarioConfig, ConfigError> {
    let base = match &raw.preset {
        Some(name) => Some(
            preset(name).ok_or_else(|| invalid("preset", format!("unknown preset {name:?}")))?,
        ),
        None => None,
    };

    let rtt_ms = raw
        .link
        .rtt_ms
        .or(base.map(|p| p.rtt_ms))
        .unwrap_or(0.0);
    if !(rtt_ms.is_finite() && rtt_ms >= 0.0) {
        return Err(invalid("link.rtt_ms", format!("{rtt_ms} must be >= 0")));
    }
    let mtu = raw.link.mtu.unwrap_or(DEFAULT_MTU);
    if mtu < MIN_MTU {
        return Err(invalid("link.mtu", format!("{mtu} is below the minimum {MIN_MTU}")));
    }
    let jitter_ms = raw.link.jitter_ms.unwrap_or(0.0);
    if !(jitter_ms.is_finite() && jitter_ms >= 0.0) {
        return Err(invalid("link.jitter_ms", format!("{jitter_ms} must be >= 0")));
    }
    let seed = raw.seed.unwrap_or(1);
    let iterations = raw.iterations.unwrap_or(DEFAULT_ITERATIONS);
    if iterations == 0 {
        return Err(invalid("iterations", "must be at least 1"));
    }

    let loss = match &raw.loss {
        Some(l) => loss_model("loss", l.p, l.r, l.uniform_rate)?,
        None => None,
    };
    let loss = loss
        .or(base.map(|p| p.loss))
        .unwrap_or(LossModel::Uniform { rate: 0.0 });

    let mut loss_points = Vec::new();
    if raw.sweep.is_empty() {
        loss_points.push(LossPoint {
            label: raw
                .preset
                .clone()
                .unwrap_or_else(|| point_label(&loss)),
            model: loss,
            loss_rate: loss.loss_rate().map_err(|e| invalid("loss", e))?,
        });
    }
    for (i, pt) in raw.sweep.iter().enumerate() {
        let section = format!("sweep[{i}]");
        let explicit = loss_model(&section, pt.p, pt.r, pt.uniform_rate)?;
        let from_preset = match &pt.preset {
            Some(name) => Some(
                preset(name)
                    .ok_or_else(|| {
                        invalid(&format!("{section}.preset"), format!("unknown preset {name:?}"))
                    })?
                    .loss,
            ),
            None => None,
        };
        let model = explicit.or(from_preset).ok_or_else(|| {
            invalid(&section, "needs a preset, P and R, or uniform_rate")
        })?;
        let label = pt
            .label
            .clone()
            .or_else(|| pt.preset.clone())
            .unwrap_or_else(|| point_label(&model));
        loss_points.push(LossPoint {
            label,
            loss_rate: model.loss_rate().map_err(|e| invalid(&section, e))?,
            model,
        });
    }

    let engine = raw.engine;
    engine
        .validate()
        .map_err(|e| invalid("engine", e))?;
    WireLayout::new(&engine, mtu).map_err(|e| invalid("engine", e))?;
    if engine.max_restarts.is_none() {
        for pt in &loss_points {
            let (p, r) = pt.model.transition_probabilities();
            if p > 0.0 && r == 0.0 {
                return Err(invalid(
                    "engine.max_restarts",
                    format!(
                        "loss point {:?} never leaves the loss state; cap max_restarts",
                        pt.label
                    ),
                ));
            }
        }
    }

    let selection = raw.suite.unwrap_or(SuiteSelection::Both);
    let custom = raw.custom_suite.as_ref().map(custom_suite).transpose()?;
    let suites = match (selection, custom) {
        (SuiteSelection::Custom, Some(c)) => vec![c],
        (SuiteSelection::Custom, None) => {
            return Err(invalid("custom_suite", "suite = \"custom\" needs a [custom_suite] section"))
        }
        (SuiteSelection::Classical, _) => vec![classical_suite_with(&raw.sizes)],
        (SuiteSelection::Qrc, _) => vec![qrc_suite_with(&raw.sizes)],
        (SuiteSelection::Both, _) => vec![
            classical_suite_with(&raw.sizes),
            qrc_suite_with(&raw.sizes),
        ],
    };

    Ok(ScenarioConfig {
        scenario_id: raw
            .scenario_id
            .or(raw.preset)
            .unwrap_or_else(|| "scenario".to_owned()),
        suites,
        iterations,
        seed,
        link: LinkParams { rtt_ms, mtu, seed },
        jitter_ms,
        channel_mode: raw.link.channel_mode.unwrap_or(ChannelMode::Shared),
        loss_points,
        engine,
        sizes: raw.sizes,
        output: OutputConfig {
            dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("results")),
            formats: raw
                .output
                .formats
                .unwrap_or_else(|| vec![OutputFormat::Csv, OutputFormat::Json]),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn validation_path(text: &str) -> String {
        match parse_config(text) {
            Err(ConfigError::Validation { path, .. }) => path,
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn preset_fills_link_and_loss() {
        let c = parse_config("preset = \"JPN-SWI\"").unwrap();
        assert_eq!(c.link.rtt_ms, 259.319);
        assert_eq!(
            c.loss_points[0].model,
            LossModel::GilbertElliott { p: 0.6e-3, r: 7.7e-3 }
        );
        assert_eq!(c.scenario_id, "JPN-SWI");
    }

    #[test]
    fn defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.iterations, 1000);
        assert_eq!(c.link.mtu, 1500);
        assert_eq!(c.suites.len(), 2);
        assert_eq!(c.engine, EngineConfig::default());
        assert_eq!(c.loss_points.len(), 1);
        assert_eq!(c.loss_points[0].loss_rate, 0.0);
    }

    #[test]
    fn out_of_range_probability() {
        assert_eq!(validation_path("[loss]\nP = 1.5\nR = 0.1"), "loss.P");
        assert_eq!(validation_path("[loss]\nuniform_rate = -0.1"), "loss.uniform_rate");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            parse_config("iterationz = 3"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            parse_config("[engine]\nmax_retry = 3"),
            Err(ConfigError::Parse(_))
        ));
    }

    #[test]
    fn bad_values_carry_field_paths() {
        assert_eq!(validation_path("iterations = 0"), "iterations");
        assert_eq!(validation_path("preset = \"NOPE\""), "preset");
        assert_eq!(validation_path("[link]\nmtu = 500"), "link.mtu");
        assert_eq!(validation_path("[engine]\nadditional_ke_rounds = 9"), "engine");
        assert_eq!(validation_path("[loss]\nP = 0.1"), "loss");
        assert_eq!(validation_path("[loss]\nuniform_rate = 1.0"), "engine.max_restarts");
        assert_eq!(validation_path("[[sweep]]\nlabel = \"x\""), "sweep[0]");
    }

    #[test]
    fn sweep_points_keep_scenario_rtt() {
        let c = parse_config(
            r#"
            scenario_id = "sweep"
            [link]
            rtt_ms = 66.0
            [[sweep]]
            preset = "JPN-SWI"
            [[sweep]]
            label = "wifi-12"
            uniform_rate = 0.12
            "#,
        )
        .unwrap();
        assert_eq!(c.link.rtt_ms, 66.0);
        let labels: Vec<_> = c.loss_points.iter().map(|p| p.label.as_str()).collect();
        assert_eq!(labels, ["JPN-SWI", "wifi-12"]);
        assert_eq!(c.loss_points[1].loss_rate, 0.12);
    }

    #[test]
    fn custom_suite_section() {
        let c = parse_config(
            r#"
            suite = "custom"
            [custom_suite]
            key_exchanges = [
                { name = "ML-KEM-768", public_bytes = 1184, response_bytes = 1088 },
                { name = "ML-KEM-1024", public_bytes = 1568, response_bytes = 1568 },
            ]
            auth_name = "ML-DSA-65"
            auth_public_key_bytes = 1952
            auth_signature_bytes = 3309
            "#,
        )
        .unwrap();
        assert_eq!(c.suites.len(), 1);
        let s = &c.suites[0];
        assert_eq!(s.suite_id, SuiteId::Custom);
        assert_eq!(s.key_establishments[0].response_object_size, 1088);
        assert_eq!(s.authentication.signature_size, 3309);
        assert_eq!(validation_path("suite = \"custom\""), "custom_suite");
    }

    #[test]
    fn size_overrides_flow_into_presets() {
        let c = parse_config("suite = \"qrc\"\n[sizes]\nml_dsa_signature_bytes = 3309").unwrap();
        assert_eq!(c.suites[0].authentication.signature_size, 3309);
    }
}
