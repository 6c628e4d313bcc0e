//! Run configuration: a TOML file whose dotted keys can be overridden from the
//! command line. Defaults depend on the scenario and ω_ab, so they are
//! resolved after those two keys are known and then overlaid with the user's
//! values.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::{Table, Value};

use crate::dressed::{predict_rational_comb, predict_resonances, PredictedComb};
use crate::error::ParamError;
use crate::model::{CoherenceDecay, SystemParams};
use crate::observables::Channel;
use crate::oracle::ClassicalConfig;
use crate::spectra::{CLASSICAL_MIN_PROMINENCE, MATCH_TOL_FRAC};
use crate::sweep::{defaults, EnvelopeSpec, GridSpec, IntegrationSettings, Scenario, SweepConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error(transparent)]
    Invalid(#[from] ParamError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunScenario {
    Fig2,
    Fig3,
    Fig5,
    Classical,
    Custom,
}

impl RunScenario {
    pub fn sweep_scenario(self) -> Option<Scenario> {
        match self {
            RunScenario::Fig2 => Some(Scenario::Fig2),
            RunScenario::Fig3 => Some(Scenario::Fig3),
            RunScenario::Fig5 => Some(Scenario::Fig5),
            RunScenario::Custom => Some(Scenario::Custom),
            RunScenario::Classical => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega_ab: f64,
    pub gamma_ab: f64,
    pub gamma_ac: f64,
    pub gamma_bc: f64,
    pub rabi_ac: f64,
    pub rabi_bc: f64,
    /// Defaults to `rabi_ac`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_acb: Option<f64>,
    /// Defaults to `rabi_bc`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rabi_bca: Option<f64>,
    pub coherence_decay: CoherenceDecay,
}

impl SystemSection {
    fn from_params(p: &SystemParams) -> Self {
        Self {
            omega_ab: p.omega_ab,
            gamma_ab: p.gamma_ab,
            gamma_ac: p.gamma_ac,
            gamma_bc: p.gamma_bc,
            rabi_ac: p.rabi_ac,
            rabi_bc: p.rabi_bc,
            rabi_acb: None,
            rabi_bca: None,
            coherence_decay: p.coherence_decay,
        }
    }

    pub fn params(&self) -> SystemParams {
        SystemParams {
            omega_ab: self.omega_ab,
            gamma_ab: self.gamma_ab,
            gamma_ac: self.gamma_ac,
            gamma_bc: self.gamma_bc,
            rabi_ac: self.rabi_ac,
            rabi_bc: self.rabi_bc,
            rabi_acb: self.rabi_acb.unwrap_or(self.rabi_ac),
            rabi_bca: self.rabi_bca.unwrap_or(self.rabi_bc),
            coherence_decay: self.coherence_decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSection {
    pub channel: Channel,
    pub min_prominence_frac: f64,
    pub match_tol_frac: f64,
    pub max_n: u32,
    /// Largest numerator of the rational comb; 1 predicts ω_ab/n only.
    pub max_m: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalSection {
    pub omega0: f64,
    pub damping: f64,
    pub width_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: RunScenario,
    pub out: PathBuf,
    /// 0 uses one thread per core.
    pub workers: usize,
    pub strict: bool,
    pub dump_trajectory: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_average_power: Option<f64>,
    pub system: SystemSection,
    pub f1: EnvelopeSpec,
    pub f2: EnvelopeSpec,
    pub grid: GridSpec,
    pub integration: IntegrationSettings,
    pub detection: DetectionSection,
    pub classical: ClassicalSection,
}

impl RunConfig {
    /// Every default for `scenario` at the given ω_ab.
    pub fn defaults(scenario: RunScenario, omega_ab: f64) -> Self {
        let sweep = SweepConfig::for_scenario(scenario.sweep_scenario().unwrap_or(Scenario::Fig2), omega_ab);
        let classical = ClassicalConfig::new(10.0, 0.2);
        let (grid, min_prominence_frac, channel) = match scenario {
            RunScenario::Classical => (classical.grid, CLASSICAL_MIN_PROMINENCE, Channel::OscAmplitudeBc),
            _ => (sweep.grid, sweep.min_prominence_frac, sweep.channel),
        };
        let (max_n, max_m) = match scenario {
            RunScenario::Fig5 => (5, 2),
            _ => (4, 1),
        };
        Self {
            scenario,
            out: PathBuf::from("out"),
            workers: 0,
            strict: false,
            dump_trajectory: Vec::new(),
            fixed_average_power: None,
            system: SystemSection::from_params(&sweep.params),
            f1: sweep.f1,
            f2: sweep.f2,
            grid,
            integration: sweep.integration,
            detection: DetectionSection { channel, min_prominence_frac, match_tol_frac: MATCH_TOL_FRAC, max_n, max_m },
            classical: ClassicalSection {
                omega0: classical.omega0,
                damping: classical.damping,
                width_fraction: classical.width_fraction,
            },
        }
    }

    /// Resolves a configuration from an optional file table and dotted-key
    /// overrides, which take precedence over the file.
    pub fn resolve(file: Option<Table>, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let mut user = file.unwrap_or_default();
        for (key, value) in overrides {
            set_dotted(&mut user, key, value.clone())?;
        }
        let scenario: RunScenario = match user.get("scenario") {
            Some(v) => v.clone().try_into().map_err(|e| ConfigError::Parse(format!("scenario: {e}")))?,
            None => RunScenario::Fig2,
        };
        let omega_ab = match user.get("system").and_then(|s| s.get("omega_ab")) {
            Some(v) => as_f64(v).ok_or_else(|| ParamError::new("system.omega_ab", "must be a number"))?,
            None => defaults::OMEGA_AB,
        };
        let base = Value::try_from(Self::defaults(scenario, omega_ab)).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let Value::Table(mut merged) = base else { unreachable!("config serializes to a table") };
        merge(&mut merged, user);
        let cfg: Self = Value::Table(merged).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str, overrides: &[(String, Value)]) -> Result<Self, ConfigError> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        Self::resolve(Some(table), overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        match self.scenario {
            RunScenario::Classical => self.classical_config().validate(),
            _ => self.sweep_config().validate(),
        }?;
        let d = &self.detection;
        if !(d.match_tol_frac > 0.0 && d.match_tol_frac < 1.0) {
            return Err(ParamError::new("detection.match_tol_frac", "must lie in (0, 1)"));
        }
        if d.max_n == 0 || d.max_m == 0 {
            return Err(ParamError::new("detection.max_n", "max_n and max_m must be >= 1"));
        }
        for &w in &self.dump_trajectory {
            if !(w > 0.0 && w.is_finite()) {
                return Err(ParamError::new("dump_trajectory", format!("must be > 0, got {w}")));
            }
        }
        Ok(())
    }

    pub fn sweep_config(&self) -> SweepConfig {
        SweepConfig {
            scenario: self.scenario.sweep_scenario().unwrap_or(Scenario::Custom),
            params: self.system.params(),
            f1: self.f1,
            f2: self.f2,
            fixed_average_power: self.fixed_average_power,
            grid: self.grid,
            integration: self.integration,
            channel: self.detection.channel,
            min_prominence_frac: self.detection.min_prominence_frac,
        }
    }

    pub fn classical_config(&self) -> ClassicalConfig {
        ClassicalConfig {
            omega0: self.classical.omega0,
            damping: self.classical.damping,
            grid: self.grid,
            width_fraction: self.classical.width_fraction,
            min_prominence_frac: self.detection.min_prominence_frac,
        }
    }

    /// Resonances the detected peaks are matched against.
    pub fn predicted(&self) -> PredictedComb {
        let d = &self.detection;
        match self.scenario {
            RunScenario::Classical => predict_resonances(self.classical.omega0, 0.0, d.max_n, Scenario::Fig2, self.grid.step()),
            RunScenario::Fig3 => {
                predict_resonances(self.system.omega_ab, self.system.rabi_ac, d.max_n, Scenario::Fig3, self.grid.step())
            }
            _ if d.max_m > 1 => predict_rational_comb(self.system.omega_ab, d.max_m, d.max_n),
            _ => predict_resonances(self.system.omega_ab, self.system.rabi_ac, d.max_n, Scenario::Fig2, self.grid.step()),
        }
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Float(f) => Some(*f),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    }
}

/// Parses `key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
pub fn parse_override(arg: &str) -> Result<(String, Value), ConfigError> {
    let (key, raw) = arg.split_once('=').ok_or_else(|| ConfigError::Override(arg.to_string()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(arg.to_string()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn set_dotted(table: &mut Table, key: &str, value: Value) -> Result<(), ConfigError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| ConfigError::Override(format!("{key}: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), integers_as_floats(last, value));
    Ok(())
}

// Count-like keys stay integers; everything else numeric is a float.
fn integers_as_floats(key: &str, value: Value) -> Value {
    const INTEGER_KEYS: [&str; 5] = ["points", "workers", "refine_rounds", "max_n", "max_m"];
    match value {
        Value::Integer(i) if !INTEGER_KEYS.contains(&key) => Value::Float(i as f64),
        Value::Array(a) => Value::Array(a.into_iter().map(|v| integers_as_floats(key, v)).collect()),
        v => v,
    }
}

fn merge(base: &mut Table, user: Table) {
    for (k, v) in user {
        let v = integers_as_floats(&k, v);
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `min:max:points`.
pub fn parse_grid(s: &str) -> Result<(f64, f64, usize), ConfigError> {
    let bad = || ConfigError::Override(format!("grid `{s}`: expected min:max:points"));
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let min = parts[0].trim().parse().map_err(|_| bad())?;
    let max = parts[1].trim().parse().map_err(|_| bad())?;
    let points = parts[2].trim().parse().map_err(|_| bad())?;
    Ok((min, max, points))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ov(s: &str) -> (String, Value) {
        parse_override(s).unwrap()
    }

    #[test]
    fn defaults_round_trip() {
        for sc in [RunScenario::Fig2, RunScenario::Fig3, RunScenario::Fig5, RunScenario::Classical, RunScenario::Custom] {
            let cfg = RunConfig::defaults(sc, 11.0);
            let back = RunConfig::from_toml_str(&cfg.to_toml(), &[]).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn scenario_and_omega_select_defaults() {
        let cfg = RunConfig::resolve(None, &[ov("scenario=\"fig3\""), ov("system.omega_ab=7")]).unwrap();
        assert_eq!(cfg.system.omega_ab, 7.0);
        assert_eq!(cfg.system.rabi_bc, 0.0);
        assert_eq!(cfg.f2, EnvelopeSpec::off());
        let fig5 = RunConfig::resolve(None, &[ov("scenario=fig5")]).unwrap();
        assert_eq!(fig5.system.rabi_ac, defaults::FIG5_RABI_AC);
    }

    #[test]
    fn overrides_beat_file() {
        let file = "scenario = \"fig2\"\n[grid]\npoints = 50\nmin = 2\n";
        let cfg = RunConfig::from_toml_str(file, &[ov("grid.points=60")]).unwrap();
        assert_eq!(cfg.grid.points, 60);
        assert_eq!(cfg.grid.min, 2.0);
        assert_eq!(cfg.grid.max, defaults::GRID_MAX);
    }

    #[test]
    fn cross_couplings_follow_direct_ones() {
        let cfg = RunConfig::resolve(None, &[ov("system.rabi_ac=0.3")]).unwrap();
        assert_eq!(cfg.system.params().rabi_acb, 0.3);
        let cfg = RunConfig::resolve(None, &[ov("system.rabi_ac=0.3"), ov("system.rabi_acb=0")]).unwrap();
        assert_eq!(cfg.system.params().rabi_acb, 0.0);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::resolve(None, &[ov("system.gamma_xy=1")]).unwrap_err();
        assert!(err.to_string().contains("gamma_xy"), "{err}");
        assert!(RunConfig::from_toml_str("bogus = 1", &[]).is_err());
    }

    #[test]
    fn validation_names_field() {
        let err = RunConfig::resolve(None, &[ov("system.gamma_ac=-1")]).unwrap_err();
        assert!(err.to_string().contains("gamma_ac"), "{err}");
        let err = RunConfig::resolve(None, &[ov("scenario=classical"), ov("classical.damping=30")]).unwrap_err();
        assert!(err.to_string().contains("damping"), "{err}");
    }

    #[test]
    fn override_parsing() {
        assert_eq!(ov("a.b=1.5").1, Value::Float(1.5));
        assert_eq!(ov("a=fig2").1, Value::String("fig2".into()));
        assert_eq!(ov("a = [1, 2]").1, Value::Array(vec![Value::Integer(1), Value::Integer(2)]));
        assert!(parse_override("novalue").is_err());
        assert_eq!(parse_grid("1:13:600").unwrap(), (1.0, 13.0, 600));
        assert!(parse_grid("1:13").is_err());
    }

    #[test]
    fn predicted_comb_per_scenario() {
        let fig3 = RunConfig::defaults(RunScenario::Fig3, 11.0).predicted();
        assert!(fig3.frequencies().iter().any(|f| (f - 12.0).abs() < 1e-12));
        assert!(fig3.frequencies().iter().any(|f| (f - 10.0).abs() < 1e-12));
        let fig5 = RunConfig::defaults(RunScenario::Fig5, 11.0).predicted();
        assert!(fig5.frequencies().iter().any(|f| (f - 22.0 / 5.0).abs() < 1e-12));
        let classical = RunConfig::defaults(RunScenario::Classical, 11.0).predicted();
        assert_eq!(classical.entries[0].frequency, 10.0);
    }
}
