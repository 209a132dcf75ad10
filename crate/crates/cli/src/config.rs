//! TOML run configuration.
//!
//! Sections: `[ofdm]`, `[network]`, `[csi]`, `[run]` and `[grid]`. Unknown
//! keys are rejected. `--set key=value` overrides are applied to the parsed
//! table before validation, so they go through the same checks.

use std::path::Path;

use cia_core::channel::{CsiQuality, SnrCalibration};
use cia_core::experiments::{
    CalibrationConfig, CsiMode, MbsPower, PowerMode, Scheme, SystemConfig, ThetaObjective,
};
use cia_core::metrics::InterferenceFactor;
use cia_core::ofdm::OfdmParams;
use cia_core::precoder::OuterStrategy;
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    ofdm: OfdmSection,
    #[serde(default)]
    network: NetworkSection,
    #[serde(default)]
    csi: CsiSection,
    #[serde(default)]
    run: RunSection,
    #[serde(default)]
    grid: GridSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OfdmSection {
    n_subcarriers: usize,
    cp_len: usize,
    channel_order: Option<usize>,
    n_mues: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SchemeName {
    CiaA,
    CiaB,
    Tdma,
    SingleTier,
}

impl SchemeName {
    fn scheme(self) -> Scheme {
        match self {
            SchemeName::CiaA => Scheme::Cia(OuterStrategy::CiaA),
            SchemeName::CiaB => Scheme::Cia(OuterStrategy::CiaB),
            SchemeName::Tdma => Scheme::Tdma,
            SchemeName::SingleTier => Scheme::SingleTier,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PowerName {
    #[default]
    Uniform,
    Waterfill,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CsiName {
    #[default]
    Perfect,
    Imperfect,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CalibrationName {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ObjectiveName {
    #[default]
    Simulated,
    Approximate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NetworkSection {
    k: Option<usize>,
    strategy: SchemeName,
    theta: Option<usize>,
    alpha: f64,
    snr_db: f64,
    power_mode: PowerName,
    sbs_budget: Option<f64>,
    primary_power: f64,
    mbs_power: PowerName,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            k: None,
            strategy: SchemeName::CiaA,
            theta: None,
            alpha: 1.0,
            snr_db: 30.0,
            power_mode: PowerName::Uniform,
            sbs_budget: None,
            primary_power: 1.0,
            mbs_power: PowerName::Waterfill,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct CsiSection {
    mode: CsiName,
    training_power: f64,
    tau_over_t: f64,
    coherence_time: f64,
    primary_effective_sinr: bool,
}

impl Default for CsiSection {
    fn default() -> Self {
        Self {
            mode: CsiName::Perfect,
            training_power: 1.0,
            tau_over_t: 0.12,
            coherence_time: 1000.0,
            primary_effective_sinr: true,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunSection {
    trials: usize,
    seed: u64,
    calibration_trials: usize,
    calibration: CalibrationName,
    theta_objective: ObjectiveName,
    theta_trials: Option<usize>,
    theta_snr_db: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            trials: 500,
            seed: 1,
            calibration_trials: 2000,
            calibration: CalibrationName::Linear,
            theta_objective: ObjectiveName::Simulated,
            theta_trials: None,
            theta_snr_db: 30.0,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    k: Option<Vec<usize>>,
    snr_db: Option<Vec<f64>>,
    alpha: Option<Vec<f64>>,
    tau_over_t: Option<Vec<f64>>,
    theta: Option<Vec<usize>>,
    schemes: Option<Vec<SchemeName>>,
}

/// Scalar keys that may be overridden without a section prefix.
const BARE_KEYS: &[(&str, &str)] = &[
    ("n_subcarriers", "ofdm"),
    ("cp_len", "ofdm"),
    ("channel_order", "ofdm"),
    ("n_mues", "ofdm"),
    ("k", "network"),
    ("strategy", "network"),
    ("theta", "network"),
    ("alpha", "network"),
    ("snr_db", "network"),
    ("power_mode", "network"),
    ("sbs_budget", "network"),
    ("primary_power", "network"),
    ("mbs_power", "network"),
    ("mode", "csi"),
    ("training_power", "csi"),
    ("tau_over_t", "csi"),
    ("coherence_time", "csi"),
    ("primary_effective_sinr", "csi"),
    ("trials", "run"),
    ("seed", "run"),
    ("calibration_trials", "run"),
    ("calibration", "run"),
    ("theta_objective", "run"),
    ("theta_trials", "run"),
    ("theta_snr_db", "run"),
];

/// Values of each swept axis; a single entry when not swept.
#[derive(Debug, Clone, PartialEq)]
pub struct Axes {
    pub k: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub alpha: Vec<f64>,
    pub tau_over_t: Vec<f64>,
    /// `None` means theta comes from a computed map.
    pub theta: Vec<Option<usize>>,
}

/// Settings of the offline theta selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSettings {
    pub snr_db: f64,
    pub trials: usize,
}

/// Everything a run needs, validated.
#[derive(Debug, Clone)]
pub struct Plan {
    /// Scalar settings; `n_sbs`, `snr_db`, `alpha`, `csi` and `theta_override`
    /// are replaced per grid point.
    pub base: SystemConfig,
    pub axes: Axes,
    pub schemes: Option<Vec<Scheme>>,
    pub imperfect: bool,
    pub training_power: f64,
    pub coherence_time: f64,
    pub theta: ThetaSettings,
    /// The merged configuration after overrides, as TOML.
    pub resolved: String,
}

impl Plan {
    pub fn csi(&self, imperfect: bool, tau_over_t: f64) -> Result<CsiMode, CliError> {
        if !imperfect {
            return Ok(CsiMode::Perfect);
        }
        CsiQuality::from_ratio(self.training_power, tau_over_t, self.coherence_time)
            .map(CsiMode::Imperfect)
            .map_err(CliError::from_validation)
    }
}

fn config_err(key: &str, constraint: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {constraint}"))
}

fn parse_value(raw: &str) -> toml::Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("single key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `key=value` override. Dotted keys address `section.key`;
/// a bare scalar key also drops the grid axis of the same name.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let value = parse_value(raw.trim());
    let (section, field) = match key.split_once('.') {
        Some((s, f)) => (s.to_string(), f.to_string()),
        None => {
            let section = BARE_KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, s)| *s)
                .ok_or_else(|| config_err(key, "unknown override key"))?;
            if let Some(toml::Value::Table(grid)) = table.get_mut("grid") {
                grid.remove(key);
            }
            (section.to_string(), key.to_string())
        }
    };
    let entry = table
        .entry(section.clone())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(field, value);
            Ok(())
        }
        _ => Err(config_err(&section, "is not a section")),
    }
}

/// Reads `path`, applies `overrides` in order and validates the result.
pub fn parse_config(path: &Path, overrides: &[String]) -> Result<Plan, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_config_str(&text, overrides)
}

pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<Plan, CliError> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let resolved = toml::to_string(&table).map_err(|e| CliError::Config(e.to_string()))?;
    let file: FileConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    build_plan(file, resolved)
}

fn build_plan(f: FileConfig, resolved: String) -> Result<Plan, CliError> {
    let ofdm = OfdmParams::new(
        f.ofdm.n_subcarriers,
        f.ofdm.cp_len,
        f.ofdm.channel_order.unwrap_or(f.ofdm.cp_len),
        f.ofdm.n_mues,
    )
    .map_err(CliError::from_validation)?;
    let n = &f.network;
    let k = match (&f.grid.k, n.k) {
        (Some(ks), _) => ks.clone(),
        (None, Some(k)) => vec![k],
        (None, None) => return Err(config_err("network.k", "missing (or give grid.k)")),
    };
    if k.is_empty() || k.contains(&0) {
        return Err(config_err("k", "every K must be at least 1"));
    }
    let strategy = match n.strategy {
        SchemeName::CiaA => OuterStrategy::CiaA,
        SchemeName::CiaB => OuterStrategy::CiaB,
        _ => return Err(config_err("network.strategy", "must be cia_a or cia_b")),
    };
    let mut base = SystemConfig::new(ofdm, k[0]);
    base.strategy = strategy;
    base.alpha = InterferenceFactor::new(n.alpha).map_err(CliError::from_validation)?;
    base.snr_db = n.snr_db;
    base.power_mode = match n.power_mode {
        PowerName::Uniform => PowerMode::UniformUnit,
        PowerName::Waterfill => PowerMode::Waterfill,
    };
    base.sbs_budget = n.sbs_budget;
    base.primary_power = n.primary_power;
    base.mbs_power = match n.mbs_power {
        PowerName::Uniform => MbsPower::Uniform,
        PowerName::Waterfill => MbsPower::Waterfill,
    };
    base.theta_override = n.theta;
    base.trials = f.run.trials;
    base.master_seed = f.run.seed;
    base.calibration = CalibrationConfig {
        trials: f.run.calibration_trials,
        mode: match f.run.calibration {
            CalibrationName::Linear => SnrCalibration::LinearMean,
            CalibrationName::Log => SnrCalibration::LogMean,
        },
    };
    base.primary_effective_sinr = f.csi.primary_effective_sinr;
    base.theta_objective = match f.run.theta_objective {
        ObjectiveName::Simulated => ThetaObjective::Simulated,
        ObjectiveName::Approximate => ThetaObjective::Approximate,
    };
    base.validate().map_err(CliError::from_validation)?;

    let snr_db = f.grid.snr_db.clone().unwrap_or_else(|| vec![n.snr_db]);
    let alpha = f.grid.alpha.clone().unwrap_or_else(|| vec![n.alpha]);
    let tau_over_t = f.grid.tau_over_t.clone().unwrap_or_else(|| vec![f.csi.tau_over_t]);
    let theta = match &f.grid.theta {
        Some(t) => t.iter().map(|&v| Some(v)).collect(),
        None => vec![n.theta],
    };
    for (key, empty) in [
        ("grid.snr_db", snr_db.is_empty()),
        ("grid.alpha", alpha.is_empty()),
        ("grid.tau_over_t", tau_over_t.is_empty()),
        ("grid.theta", theta.is_empty()),
    ] {
        if empty {
            return Err(config_err(key, "must not be empty"));
        }
    }
    for &s in &snr_db {
        if !s.is_finite() {
            return Err(config_err("snr_db", "must be finite"));
        }
    }
    for &a in &alpha {
        InterferenceFactor::new(a).map_err(CliError::from_validation)?;
    }
    for &t in theta.iter().flatten() {
        if t == 0 || t > ofdm.cp_len() {
            return Err(config_err("theta", format!("must lie in [1, {}], got {t}", ofdm.cp_len())));
        }
    }
    for &r in &tau_over_t {
        if !(r > 0.0 && r <= 1.0) {
            return Err(config_err("tau_over_t", format!("must lie in (0, 1], got {r}")));
        }
        CsiQuality::from_ratio(f.csi.training_power, r, f.csi.coherence_time).map_err(CliError::from_validation)?;
    }
    let theta_trials = f.run.theta_trials.unwrap_or(f.run.trials);
    if theta_trials == 0 {
        return Err(config_err("run.theta_trials", "must be at least 1"));
    }
    if !f.run.theta_snr_db.is_finite() {
        return Err(config_err("run.theta_snr_db", "must be finite"));
    }
    let schemes = f.grid.schemes.as_ref().map(|s| s.iter().map(|n| n.scheme()).collect::<Vec<_>>());
    if matches!(&schemes, Some(s) if s.is_empty()) {
        return Err(config_err("grid.schemes", "must not be empty"));
    }
    Ok(Plan {
        base,
        axes: Axes {
            k,
            snr_db,
            alpha,
            tau_over_t,
            theta,
        },
        schemes,
        imperfect: matches!(f.csi.mode, CsiName::Imperfect),
        training_power: f.csi.training_power,
        coherence_time: f.csi.coherence_time,
        theta: ThetaSettings {
            snr_db: f.run.theta_snr_db,
            trials: theta_trials,
        },
        resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[ofdm]\nn_subcarriers = 128\ncp_len = 32\nn_mues = 4\n[network]\nk = 4\n";

    #[test]
    fn minimal_file_takes_documented_defaults() {
        let p = parse_config_str(MINIMAL, &[]).unwrap();
        assert_eq!(p.base.strategy, OuterStrategy::CiaA);
        assert_eq!(p.base.alpha.value(), 1.0);
        assert_eq!(p.base.trials, 500);
        assert_eq!(p.base.ofdm.channel_order(), 32);
        assert_eq!(p.axes.k, vec![4]);
        assert_eq!(p.axes.theta, vec![None]);
        assert!(!p.imperfect);
    }

    #[test]
    fn cp_longer_than_block_is_rejected() {
        let err = parse_config_str("[ofdm]\nn_subcarriers = 16\ncp_len = 32\nn_mues = 4\n[network]\nk = 2\n", &[])
            .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("cp_len"), "{err}");
    }

    #[test]
    fn overrides_supersede_the_file() {
        let text = format!("{MINIMAL}snr_db = 20\n[grid]\nsnr_db = [0, 10]\n");
        let p = parse_config_str(&text, &["snr_db=10".into()]).unwrap();
        assert_eq!(p.base.snr_db, 10.0);
        assert_eq!(p.axes.snr_db, vec![10.0]);
        let p = parse_config_str(&text, &["grid.snr_db=[5, 6]".into(), "strategy=cia_b".into()]).unwrap();
        assert_eq!(p.axes.snr_db, vec![5.0, 6.0]);
        assert_eq!(p.base.strategy, OuterStrategy::CiaB);
        assert!(p.resolved.contains("cia_b"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config_str(&format!("{MINIMAL}bogus = 1\n"), &[]).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        assert!(parse_config_str(MINIMAL, &["bogus=1".into()]).is_err());
        assert!(parse_config_str(MINIMAL, &["novalue".into()]).is_err());
    }

    #[test]
    fn invalid_values_name_their_key() {
        for (o, key) in [
            ("alpha=1.5", "alpha"),
            ("theta=33", "theta"),
            ("trials=0", "trials"),
            ("tau_over_t=0", "tau_over_t"),
            ("grid.k=[]", "k"),
        ] {
            let err = parse_config_str(MINIMAL, &[o.into()]).unwrap_err();
            assert_eq!(err.exit_code(), 1);
            assert!(err.to_string().contains(key), "{o}: {err}");
        }
    }

    #[test]
    fn missing_k_is_an_error() {
        let err = parse_config_str("[ofdm]\nn_subcarriers = 16\ncp_len = 4\nn_mues = 2\n", &[]).unwrap_err();
        assert!(err.to_string().contains("network.k"));
    }
}
