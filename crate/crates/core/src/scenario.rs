//! End-to-end arm budgets: routes a channel pair through the topology and
//! turns the result into [`ArmConfig`]s for the rate model.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::{ArmRoute, Direction, Fiber, NetworkTopology, SwitchState};
use crate::raman::RamanGainTable;
use crate::rates::{coincidence_rates, mu_for_ccr, ArmConfig, CoincidenceConfig, DetectorModel, RatePrediction};
use crate::source::{ChannelPair, EppSource};
use crate::units::db_to_transmission;

/// Losses outside the fiber spans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArmLosses {
    /// Tunable channel filter insertion loss, per arm.
    pub filter_db: f64,
    /// Source output coupling, per arm.
    pub source_coupling_db: f64,
    /// Quantum/classical multiplexer and demultiplexer on the lit path.
    pub lit_path_mux_db: f64,
}

impl Default for ArmLosses {
    fn default() -> Self {
        Self { filter_db: 3.0, source_coupling_db: 0.0, lit_path_mux_db: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub table: RamanGainTable,
    pub topology: NetworkTopology,
    pub source: EppSource,
    pub detector: DetectorModel,
    pub coincidence: CoincidenceConfig,
    pub losses: ArmLosses,
    pub pair_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArmPair {
    pub signal: ArmConfig,
    pub idler: ArmConfig,
}

impl Scenario {
    /// Lab configuration: installed link lit by the 11-channel C-band plan,
    /// spool as dark fiber.
    pub fn lab_default(table: RamanGainTable, aggregate_dbm: f64) -> Self {
        Self {
            table,
            topology: NetworkTopology::lab_default(aggregate_dbm),
            source: EppSource::default(),
            detector: DetectorModel::default(),
            coincidence: CoincidenceConfig::default(),
            losses: ArmLosses::default(),
            pair_weight: 1.0,
        }
    }

    pub fn with_launch_dbm(&self, aggregate_dbm: f64) -> Self {
        Self { topology: self.topology.with_launch_dbm(aggregate_dbm), ..self.clone() }
    }

    pub fn without_classical(&self) -> Self {
        Self { topology: self.topology.without_classical(), ..self.clone() }
    }

    /// Raman noise photons/s reaching the end of `route` in the channel
    /// filter at `quantum_nm`.
    pub fn route_noise_cps(&self, route: &ArmRoute, quantum_nm: f64, bandwidth_ghz: f64) -> Result<f64> {
        let mut total = 0.0;
        for (k, hop) in route.hops.iter().enumerate() {
            if hop.coexisting.is_empty() {
                continue;
            }
            let dir = hop.direction.unwrap_or(Direction::Co);
            let generated = self.table.sprs_rate_total(&hop.coexisting, quantum_nm, bandwidth_ghz, &hop.link, dir)?;
            let downstream: f64 = route.hops[k + 1..].iter().map(|h| h.link.loss_db(quantum_nm)).sum::<Result<f64>>()?;
            total += generated * db_to_transmission(downstream);
        }
        Ok(total)
    }

    fn arm(&self, route: &ArmRoute, center_nm: f64, bandwidth_ghz: f64) -> Result<ArmConfig> {
        let mut loss = route.loss_db(center_nm)? + self.losses.filter_db + self.losses.source_coupling_db;
        if route.fiber == Fiber::Lit {
            loss += self.losses.lit_path_mux_db;
        }
        Ok(ArmConfig { loss_db: loss, noise_cps: self.route_noise_cps(route, center_nm, bandwidth_ghz)?, detector: self.detector })
    }

    pub fn arms(&self, pair: &ChannelPair, switch: SwitchState) -> Result<ArmPair> {
        let route = self.topology.route(switch)?;
        Ok(ArmPair {
            signal: self.arm(&route.signal, pair.signal.center_nm, pair.signal.bandwidth_ghz)?,
            idler: self.arm(&route.idler, pair.idler.center_nm, pair.idler.bandwidth_ghz)?,
        })
    }

    pub fn predict_arms(&self, arms: &ArmPair, mu: f64) -> Result<RatePrediction> {
        coincidence_rates(&self.source.with_mu(mu), self.pair_weight, &arms.signal, &arms.idler, &self.coincidence)
    }

    pub fn predict(&self, pair: &ChannelPair, switch: SwitchState, mu: f64) -> Result<RatePrediction> {
        self.predict_arms(&self.arms(pair, switch)?, mu)
    }

    /// μ at which the open-analyzer coincidence rate equals `ccr`.
    pub fn mu_for_ccr(&self, pair: &ChannelPair, switch: SwitchState, ccr: f64) -> Result<f64> {
        let a = self.arms(pair, switch)?;
        mu_for_ccr(ccr, &self.source, self.pair_weight, &a.signal, &a.idler, &self.coincidence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn only_lit_arm_collects_noise() {
        let sc = Scenario::lab_default(RamanGainTable::default(), 18.1);
        let pair = ChannelPair::from_signal(1287.0, 50.0, 1300.0).unwrap();
        let a = sc.arms(&pair, SwitchState::SIGNAL_LIT).unwrap();
        assert!(a.signal.noise_cps > 0.0);
        assert_eq!(a.idler.noise_cps, 0.0);
        let b = sc.arms(&pair, SwitchState::IDLER_LIT).unwrap();
        assert!(b.idler.noise_cps > a.signal.noise_cps);
    }

    #[test]
    fn noise_scales_with_launch_power() {
        let sc = Scenario::lab_default(RamanGainTable::default(), 14.0);
        let pair = ChannelPair::from_signal(1287.0, 50.0, 1300.0).unwrap();
        let lo = sc.arms(&pair, SwitchState::SIGNAL_LIT).unwrap().signal.noise_cps;
        let hi = sc.with_launch_dbm(17.0).arms(&pair, SwitchState::SIGNAL_LIT).unwrap().signal.noise_cps;
        assert!((hi / lo - 10f64.powf(0.3)).abs() < 1e-9);
        let off = sc.without_classical().arms(&pair, SwitchState::SIGNAL_LIT).unwrap().signal.noise_cps;
        assert_eq!(off, 0.0);
    }
}
