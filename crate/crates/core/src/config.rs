//! Run configuration shared by every CLI subcommand.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mcsim::PairStatistics;
use crate::network::{AttenuationTable, Direction, FiberLink, NetworkTopology};
use crate::planner::{ClassicalBand, DarkFiberModel, Objective, PlanConstraints, PlanGrid, Routing};
use crate::raman::RamanGainTable;
use crate::rates::{log_grid, CoincidenceConfig, DetectorModel};
use crate::scenario::{ArmLosses, Scenario};
use crate::source::{ChannelPair, EppSource};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable naming a Raman table file.
pub const TABLE_ENV: &str = "QCOEX_TABLE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Raman table file, relative to the config file.
    #[serde(default)]
    pub raman_table: Option<PathBuf>,
    #[serde(default = "default_network")]
    pub network: NetworkTopology,
    #[serde(default)]
    pub source: EppSource,
    #[serde(default)]
    pub detector: DetectorModel,
    #[serde(default)]
    pub coincidence: CoincidenceConfig,
    #[serde(default)]
    pub losses: ArmLosses,
    #[serde(default)]
    pub channel_pair: PairSpec,
    #[serde(default)]
    pub routing: Routing,
    /// Aggregate classical launch powers to evaluate.
    #[serde(default = "default_powers")]
    pub launch_powers_dbm: Vec<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub spectrum: SpectrumConfig,
    #[serde(default)]
    pub rates: RatesConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub tomo: TomoConfig,
    #[serde(default)]
    pub mc: McConfig,
}

fn default_network() -> NetworkTopology {
    NetworkTopology::lab_default(18.1)
}

fn default_powers() -> Vec<f64> {
    vec![14.0, 16.2, 18.1]
}

fn default_seed() -> u64 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairSpec {
    pub signal_nm: f64,
    pub bandwidth_ghz: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        Self { signal_nm: 1287.0, bandwidth_ghz: 50.0 }
    }
}

impl PairSpec {
    pub fn resolve(&self, pump_nm: f64) -> Result<ChannelPair> {
        ChannelPair::from_signal(self.signal_nm, self.bandwidth_ghz, pump_nm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub pumps_nm: Vec<f64>,
    /// Launch power of each pump.
    pub pump_power_dbm: f64,
    pub link: FiberLink,
    pub direction: Direction,
    pub start_nm: f64,
    pub end_nm: f64,
    pub step_nm: f64,
    pub bandwidth_ghz: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            pumps_nm: vec![1530.0, 1550.0, 1565.0, 1580.0, 1617.0],
            pump_power_dbm: 2.05,
            link: FiberLink::new("spectrum", 25.0, AttenuationTable::generic_smf(), 0.0).expect("static link"),
            direction: Direction::Co,
            start_nm: 1260.0,
            end_nm: 1360.0,
            step_nm: 1.0,
            bandwidth_ghz: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    /// Signal wavelengths to scan; empty means the configured channel pair.
    pub signal_nm: Vec<f64>,
    /// Empty means the configured routing.
    pub routings: Vec<Routing>,
    /// Solve μ for this coincidence rate instead of using the source's μ.
    pub target_ccr_ccps: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub signal_nm: f64,
    pub routing: Routing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Empty means one curve for the configured pair and routing.
    pub curves: Vec<CurveSpec>,
    pub mu_min: f64,
    pub mu_max: f64,
    pub points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { curves: Vec::new(), mu_min: 1e-3, mu_max: 0.2, points: 20 }
    }
}

impl SweepConfig {
    pub fn mu_grid(&self) -> Vec<f64> {
        log_grid(self.mu_min, self.mu_max, self.points)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdvisorConfig {
    pub quantum_nm: f64,
    pub bands: Vec<ClassicalBand>,
    #[serde(default = "default_bw")]
    pub bandwidth_ghz: f64,
}

fn default_bw() -> f64 {
    50.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub band_start_nm: f64,
    pub band_end_nm: f64,
    pub spacing_ghz: f64,
    /// Explicit μ grid; `None` uses the default logarithmic grid.
    pub mu_grid: Option<Vec<f64>>,
    pub constraints: PlanConstraints,
    pub objective: Objective,
    pub dark: DarkFiberModel,
    pub runners_up: usize,
    pub advisor: Option<AdvisorConfig>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            band_start_nm: 1282.0,
            band_end_nm: 1318.0,
            spacing_ghz: 50.0,
            mu_grid: None,
            constraints: PlanConstraints::default(),
            objective: Objective::default(),
            dark: DarkFiberModel::default(),
            runners_up: 5,
            advisor: None,
        }
    }
}

impl PlannerConfig {
    pub fn grid(&self, pump_nm: f64) -> PlanGrid {
        PlanGrid {
            pairs: crate::source::channel_grid(self.band_start_nm, self.band_end_nm, self.spacing_ghz, pump_nm),
            mu_grid: self.mu_grid.clone().unwrap_or_else(PlanGrid::default_mu_grid),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TomoConfig {
    /// Operate each power at the μ giving this coincidence rate; `None`
    /// uses the source's μ.
    pub target_ccr_ccps: Option<f64>,
    pub dark: DarkFiberModel,
    /// Simulated coincidences per measurement setting; 0 skips reconstruction.
    pub counts_per_setting: f64,
    /// Uniform background counts per setting.
    pub noise_floor: f64,
    pub seconds_per_setting: f64,
    pub mle_tolerance: f64,
    pub mle_max_iterations: usize,
}

impl Default for TomoConfig {
    fn default() -> Self {
        Self {
            target_ccr_ccps: Some(30.1),
            dark: DarkFiberModel::default(),
            counts_per_setting: 1e4,
            noise_floor: 0.0,
            seconds_per_setting: 60.0,
            mle_tolerance: 1e-10,
            mle_max_iterations: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub n_pulses: u64,
    pub block_pulses: u64,
    pub statistics: PairStatistics,
    /// Classical power for the run; `None` uses the first configured power.
    pub launch_dbm: Option<f64>,
    /// Also write the simulated time tags.
    pub write_events: bool,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_pulses: 10_000_000,
            block_pulses: crate::mcsim::BLOCK_PULSES,
            statistics: PairStatistics::Thermal,
            launch_dbm: None,
            write_events: false,
        }
    }
}

impl RunConfig {
    /// Parse a config document, checking `schema_version` before anything
    /// else so that old files fail with a clear message.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        let found = v
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Config("missing or non-integer schema_version".into()))?;
        if found != SCHEMA_VERSION as u64 {
            return Err(Error::SchemaVersion { found: found as u32, expected: SCHEMA_VERSION });
        }
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load from disk; a relative `raman_table` is made relative to the
    /// config file's directory.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let (Some(t), Some(dir)) = (&cfg.raman_table, path.parent()) {
            if t.is_relative() {
                cfg.raman_table = Some(dir.join(t));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.source.validate()?;
        self.detector.validate()?;
        self.channel_pair.resolve(self.source.pump_nm)?;
        self.planner.constraints.validate()?;
        if let Some(p) = self.launch_powers_dbm.iter().find(|p| !p.is_finite()) {
            return Err(Error::Config(format!("launch power {p} dBm is not finite")));
        }
        if !(self.coincidence.window_ps > 0.0) {
            return Err(Error::Config("coincidence window must be positive".into()));
        }
        for (name, v) in [
            ("filter_db", self.losses.filter_db),
            ("source_coupling_db", self.losses.source_coupling_db),
            ("lit_path_mux_db", self.losses.lit_path_mux_db),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("losses.{name} must be a finite value >= 0")));
            }
        }
        if !(self.sweep.mu_min > 0.0 && self.sweep.mu_max >= self.sweep.mu_min) || self.sweep.points == 0 {
            return Err(Error::Config("sweep needs 0 < mu_min <= mu_max and points >= 1".into()));
        }
        if !(self.spectrum.step_nm > 0.0) || !(self.spectrum.end_nm >= self.spectrum.start_nm) {
            return Err(Error::Config("spectrum needs step_nm > 0 and end_nm >= start_nm".into()));
        }
        self.spectrum.link.validate()?;
        Ok(())
    }

    /// Table precedence: explicit path, then `QCOEX_TABLE`, then the
    /// config's `raman_table`, then the embedded default.
    pub fn resolve_table(&self, explicit: Option<&Path>, env: Option<OsString>) -> Result<RamanGainTable> {
        let path = explicit
            .map(Path::to_path_buf)
            .or_else(|| env.filter(|s| !s.is_empty()).map(PathBuf::from))
            .or_else(|| self.raman_table.clone());
        match path {
            Some(p) => RamanGainTable::from_path(&p),
            None => Ok(RamanGainTable::default()),
        }
    }

    /// Scenario with the classical plan at `aggregate_dbm`.
    pub fn scenario(&self, table: &RamanGainTable, aggregate_dbm: f64) -> Scenario {
        Scenario {
            table: table.clone(),
            topology: self.network.with_launch_dbm(aggregate_dbm),
            source: self.source.clone(),
            detector: self.detector,
            coincidence: self.coincidence,
            losses: self.losses,
            pair_weight: 1.0,
        }
    }

    /// Hex SHA-256 of the resolved config and table, as serialized JSON.
    pub fn hash(&self, table: &RamanGainTable) -> String {
        #[derive(Serialize)]
        struct Resolved<'a> {
            config: &'a RunConfig,
            table: &'a RamanGainTable,
        }
        let bytes = serde_json::to_vec(&Resolved { config: self, table }).expect("serializable");
        hex::encode(Sha256::digest(&bytes))
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::from_json(r#"{"schema_version": 1}"#).expect("defaults are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_lab_defaults() {
        let c = RunConfig::default();
        assert_eq!(c.launch_powers_dbm, vec![14.0, 16.2, 18.1]);
        assert_eq!(c.network.links.len(), 2);
        assert_eq!(c.detector.dark_rate_cps, 100.0);
        assert_eq!(c.coincidence.window_ps, 600.0);
    }

    #[test]
    fn schema_version_is_checked_first() {
        assert!(matches!(
            RunConfig::from_json(r#"{"schema_version": 2, "bogus": 1}"#),
            Err(Error::SchemaVersion { found: 2, expected: 1 })
        ));
        assert!(matches!(RunConfig::from_json("{}"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json(r#"{"schema_version": 1, "bogus": 1}"#), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_json("not json"), Err(Error::Json(_))));
    }

    #[test]
    fn round_trip_preserves_hash() {
        let c = RunConfig::default();
        let t = RamanGainTable::default();
        let back = RunConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.hash(&t), back.hash(&t));
        let mut d = c.clone();
        d.seed += 1;
        assert_ne!(c.hash(&t), d.hash(&t));
    }

    #[test]
    fn table_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let write = |name: &str, scale: f64| {
            let mut t = RamanGainTable::default();
            t.calibration_scale = scale;
            let p = dir.path().join(name);
            std::fs::write(&p, t.to_json()).unwrap();
            p
        };
        let (a, b, c) = (write("a.json", 1.0), write("b.json", 2.0), write("c.json", 3.0));
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.resolve_table(None, None).unwrap(), RamanGainTable::default());
        cfg.raman_table = Some(c);
        assert_eq!(cfg.resolve_table(None, None).unwrap().calibration_scale, 3.0);
        assert_eq!(cfg.resolve_table(None, Some(b.clone().into())).unwrap().calibration_scale, 2.0);
        assert_eq!(cfg.resolve_table(Some(&a), Some(b.into())).unwrap().calibration_scale, 1.0);
    }
}
