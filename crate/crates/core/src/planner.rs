//! Exhaustive search over channel pairs, switch routing and μ.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Direction, FiberLink, SwitchState};
use crate::raman::RamanGainTable;
use crate::rates::{log_grid, RatePrediction};
use crate::scenario::Scenario;
use crate::source::ChannelPair;
use crate::tomo::{coexistence_epsilon, coexistence_state, dark_fiber_state, fidelity, DarkStateModel, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConstraints {
    pub min_visibility: f64,
    pub min_ccr_ccps: f64,
    /// `None` leaves μ unbounded.
    pub max_mu: Option<f64>,
}

impl Default for PlanConstraints {
    fn default() -> Self {
        Self { min_visibility: 0.707, min_ccr_ccps: 0.0, max_mu: None }
    }
}

impl PlanConstraints {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_visibility > 0.0 && self.min_visibility <= 1.0) {
            return Err(Error::Domain(format!("minimum visibility {} outside (0, 1]", self.min_visibility)));
        }
        if !(self.min_ccr_ccps >= 0.0) {
            return Err(Error::Domain("minimum coincidence rate must be >= 0".into()));
        }
        if let Some(m) = self.max_mu {
            if !(m > 0.0) {
                return Err(Error::Domain(format!("maximum mu {m} must be positive")));
            }
        }
        Ok(())
    }

    fn violations(&self, p: &CoexistencePlan) -> [bool; 3] {
        [
            !(p.prediction.visibility_hv >= self.min_visibility),
            !(p.prediction.ccr >= self.min_ccr_ccps),
            self.max_mu.is_some_and(|m| p.mu > m),
        ]
    }
}

const CONSTRAINT_NAMES: [&str; 3] = ["min_visibility", "min_ccr_ccps", "max_mu"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    MaxVisibility,
    /// Highest coincidence rate among plans meeting the visibility floor.
    MaxCcrAtV,
    #[default]
    MaxFidelity,
}

/// Which arm rides the lit fiber.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Routing {
    #[default]
    SignalOnLit,
    IdlerOnLit,
}

impl Routing {
    pub const ALL: [Routing; 2] = [Routing::SignalOnLit, Routing::IdlerOnLit];

    pub fn switch(self) -> SwitchState {
        match self {
            Routing::SignalOnLit => SwitchState::SIGNAL_LIT,
            Routing::IdlerOnLit => SwitchState::IDLER_LIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanGrid {
    pub pairs: Vec<ChannelPair>,
    pub mu_grid: Vec<f64>,
}

impl PlanGrid {
    /// Log-spaced μ grid of 20 points over [1e-3, 0.2].
    pub fn default_mu_grid() -> Vec<f64> {
        log_grid(1e-3, 0.2, 20)
    }
}

/// Source imperfection used to turn accidentals into a state fidelity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarkFiberModel {
    pub model: DarkStateModel,
    pub fidelity: f64,
}

impl Default for DarkFiberModel {
    fn default() -> Self {
        Self { model: DarkStateModel::Dephased, fidelity: 0.977 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoexistencePlan {
    pub pair: ChannelPair,
    pub routing: Routing,
    /// Aggregate classical launch power of the plan in force, if any.
    pub classical_aggregate_dbm: Option<f64>,
    pub mu: f64,
    pub prediction: RatePrediction,
    /// Detected Raman noise summed over both arms, counts/s.
    pub sprs_singles_cps: f64,
    /// Fidelity of the predicted state to |Φ⁺⟩.
    pub fidelity: f64,
}

impl CoexistencePlan {
    pub fn score(&self, objective: Objective) -> f64 {
        match objective {
            Objective::MaxVisibility => self.prediction.visibility_hv,
            Objective::MaxCcrAtV => self.prediction.ccr,
            Objective::MaxFidelity => self.fidelity,
        }
    }
}

/// Total order used by [`optimize`]: better plans compare as `Less`.
pub fn plan_order(a: &CoexistencePlan, b: &CoexistencePlan, objective: Objective) -> Ordering {
    b.score(objective)
        .total_cmp(&a.score(objective))
        .then(a.sprs_singles_cps.total_cmp(&b.sprs_singles_cps))
        .then(a.pair.signal.center_nm.total_cmp(&b.pair.signal.center_nm))
        .then(a.routing.cmp(&b.routing))
        .then(a.mu.total_cmp(&b.mu))
        .then(a.pair.idler.center_nm.total_cmp(&b.pair.idler.center_nm))
}

/// Every pair × routing × μ combination, scored. Output order follows the
/// input order (pairs outermost, μ innermost).
pub fn enumerate_plans(grid: &PlanGrid, scenario: &Scenario, dark: &DarkFiberModel) -> Result<Vec<CoexistencePlan>> {
    if grid.pairs.is_empty() || grid.mu_grid.is_empty() {
        return Ok(Vec::new());
    }
    for pair in &grid.pairs {
        pair.validate(scenario.source.pump_nm)?;
    }
    let rho_dark = dark_fiber_state(dark.model, dark.fidelity)?;
    let phi = DensityMatrix::phi_plus();
    let quiet = scenario.without_classical();
    let aggregate = scenario.topology.classical_plan.as_ref().filter(|p| !p.channels.is_empty()).map(|p| p.aggregate_launch_dbm());

    let combos: Vec<(ChannelPair, Routing)> =
        grid.pairs.iter().flat_map(|p| Routing::ALL.iter().map(move |r| (*p, *r))).collect();
    let nested: Vec<Vec<CoexistencePlan>> = combos
        .par_iter()
        .map(|&(pair, routing)| -> Result<Vec<CoexistencePlan>> {
            let arms = scenario.arms(&pair, routing.switch())?;
            let quiet_arms = quiet.arms(&pair, routing.switch())?;
            let sprs = arms.signal.noise_cps * arms.signal.detector.efficiency + arms.idler.noise_cps * arms.idler.detector.efficiency;
            grid.mu_grid
                .iter()
                .map(|&mu| {
                    let prediction = scenario.predict_arms(&arms, mu)?;
                    let baseline = quiet.predict_arms(&quiet_arms, mu)?;
                    let eps = coexistence_epsilon(&prediction, &baseline)?;
                    let f = fidelity(&phi, &coexistence_state(&rho_dark, eps)?)?;
                    Ok(CoexistencePlan {
                        pair,
                        routing,
                        classical_aggregate_dbm: aggregate,
                        mu,
                        prediction,
                        sprs_singles_cps: sprs,
                        fidelity: f,
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Best feasible plan under `objective`. When nothing is feasible the error
/// names the constraints whose removal alone would restore feasibility, or
/// every violated constraint if no single one does.
pub fn optimize(candidates: &[CoexistencePlan], constraints: &PlanConstraints, objective: Objective) -> Result<CoexistencePlan> {
    Ok(rank(candidates, constraints, objective)?.swap_remove(0))
}

/// Feasible plans sorted best first.
pub fn rank(candidates: &[CoexistencePlan], constraints: &PlanConstraints, objective: Objective) -> Result<Vec<CoexistencePlan>> {
    constraints.validate()?;
    if candidates.is_empty() {
        return Err(Error::Infeasible { binding: vec!["empty candidate set".into()] });
    }
    let flags: Vec<[bool; 3]> = candidates.iter().map(|c| constraints.violations(c)).collect();
    let mut feasible: Vec<CoexistencePlan> =
        candidates.iter().zip(&flags).filter(|(_, v)| !v.iter().any(|&x| x)).map(|(c, _)| c.clone()).collect();
    if feasible.is_empty() {
        return Err(Error::Infeasible { binding: binding_constraints(&flags) });
    }
    feasible.sort_by(|a, b| plan_order(a, b, objective));
    Ok(feasible)
}

fn binding_constraints(flags: &[[bool; 3]]) -> Vec<String> {
    let single: Vec<String> = (0..3)
        .filter(|&k| flags.iter().any(|v| v.iter().enumerate().all(|(j, &x)| j == k || !x)))
        .map(|k| CONSTRAINT_NAMES[k].to_string())
        .collect();
    if !single.is_empty() {
        return single;
    }
    (0..3).filter(|&k| flags.iter().any(|v| v[k])).map(|k| CONSTRAINT_NAMES[k].to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalBand {
    pub label: String,
    pub wavelengths_nm: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandScore {
    pub label: String,
    /// Mean noise per mW of launch power over the band's channels, counts/s.
    pub rate_per_mw: f64,
}

/// Bands ranked quietest first by the mean spRS they put into a
/// `bandwidth_ghz` channel at `quantum_nm` after `link`.
pub fn classical_band_advisor(
    table: &RamanGainTable,
    quantum_nm: f64,
    bands: &[ClassicalBand],
    link: &FiberLink,
    bandwidth_ghz: f64,
) -> Result<Vec<BandScore>> {
    let mut scored = bands
        .iter()
        .map(|b| {
            if b.wavelengths_nm.is_empty() {
                return Err(Error::Domain(format!("band {} has no channels", b.label)));
            }
            let sum: f64 = b
                .wavelengths_nm
                .iter()
                .map(|&c| table.sprs_rate_at_mw(c, 1.0, quantum_nm, bandwidth_ghz, link, Direction::Co))
                .sum::<Result<f64>>()?;
            Ok(BandScore { label: b.label.clone(), rate_per_mw: sum / b.wavelengths_nm.len() as f64 })
        })
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| a.rate_per_mw.total_cmp(&b.rate_per_mw));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{AttenuationTable, NetworkTopology};
    use crate::source::channel_grid;
    use proptest::prelude::*;

    fn lab(dbm: f64) -> Scenario {
        Scenario::lab_default(RamanGainTable::default(), dbm)
    }

    fn grid(n_pairs: usize, n_mu: usize) -> PlanGrid {
        let pairs = channel_grid(1282.0, 1318.0, 50.0, 1300.0);
        PlanGrid { pairs: pairs.into_iter().take(n_pairs).collect(), mu_grid: log_grid(1e-3, 0.2, n_mu) }
    }

    #[test]
    fn cardinality_is_the_product() {
        let sc = lab(18.1);
        let g = grid(1, 1);
        assert_eq!(enumerate_plans(&g, &sc, &DarkFiberModel::default()).unwrap().len(), 2);
        let g = PlanGrid { pairs: channel_grid(1282.0, 1318.0, 50.0, 1300.0), mu_grid: PlanGrid::default_mu_grid() };
        let plans = enumerate_plans(&g, &sc, &DarkFiberModel::default()).unwrap();
        assert_eq!(plans.len(), 2 * g.pairs.len() * 20);
        assert!(plans.iter().all(|p| p.fidelity.is_finite() && p.prediction.visibility_hv.is_finite()));
    }

    #[test]
    fn empty_grid_gives_empty_result() {
        let g = PlanGrid { pairs: vec![], mu_grid: vec![0.01] };
        assert!(enumerate_plans(&g, &lab(18.1), &DarkFiberModel::default()).unwrap().is_empty());
    }

    #[test]
    fn short_arm_goes_on_the_lit_fiber() {
        let g = PlanGrid { pairs: channel_grid(1282.0, 1318.0, 50.0, 1300.0), mu_grid: PlanGrid::default_mu_grid() };
        let plans = enumerate_plans(&g, &lab(18.1), &DarkFiberModel::default()).unwrap();
        for obj in [Objective::MaxVisibility, Objective::MaxFidelity] {
            let best = optimize(&plans, &PlanConstraints::default(), obj).unwrap();
            assert_eq!(best.routing, Routing::SignalOnLit, "{obj:?}");
            assert!(best.pair.signal.center_nm < 1300.0);
        }
    }

    #[test]
    fn symmetric_instance_picks_shortest_signal() {
        let flat = AttenuationTable::new(vec![(1260.0, 0.3), (1620.0, 0.3)]).unwrap();
        let mut topo = NetworkTopology::lab_default(0.0).without_classical();
        for l in &mut topo.links {
            l.fiber = FiberLink::new(l.fiber.name.clone(), 10.0, flat.clone(), 0.0).unwrap();
        }
        let sc = Scenario { topology: topo, ..lab(0.0) };
        let g = grid(6, 5);
        let plans = enumerate_plans(&g, &sc, &DarkFiberModel::default()).unwrap();
        let best = optimize(&plans, &PlanConstraints::default(), Objective::MaxVisibility).unwrap();
        let shortest = g.pairs.iter().map(|p| p.signal.center_nm).fold(f64::INFINITY, f64::min);
        assert_eq!(best.pair.signal.center_nm, shortest);
        assert_eq!(best.routing, Routing::SignalOnLit);
    }

    #[test]
    fn infeasible_reports_binding_constraints() {
        let plans = enumerate_plans(&grid(2, 3), &lab(18.1), &DarkFiberModel::default()).unwrap();
        let c = PlanConstraints { min_ccr_ccps: 1e9, ..Default::default() };
        match optimize(&plans, &c, Objective::MaxVisibility) {
            Err(Error::Infeasible { binding }) => assert_eq!(binding, vec!["min_ccr_ccps".to_string()]),
            other => panic!("{other:?}"),
        }
        let c = PlanConstraints { min_visibility: 1.0, min_ccr_ccps: 1e9, max_mu: Some(1e-4) };
        match optimize(&plans, &c, Objective::MaxVisibility) {
            Err(Error::Infeasible { binding }) => assert_eq!(binding.len(), 3),
            other => panic!("{other:?}"),
        }
        let c = PlanConstraints { min_visibility: 0.0, ..Default::default() };
        assert!(matches!(optimize(&plans, &c, Objective::MaxVisibility), Err(Error::Domain(_))));
    }

    #[test]
    fn feasible_set_shrinks_as_visibility_floor_rises() {
        let plans = enumerate_plans(&grid(4, 10), &lab(18.1), &DarkFiberModel::default()).unwrap();
        let count = |v: f64| rank(&plans, &PlanConstraints { min_visibility: v, ..Default::default() }, Objective::MaxVisibility).map_or(0, |r| r.len());
        let mut last = usize::MAX;
        for v in [0.5, 0.7, 0.8, 0.9, 0.95, 0.99] {
            let n = count(v);
            assert!(n <= last);
            last = n;
        }
    }

    #[test]
    fn advisor_prefers_long_wavelength_bands() {
        let bands = vec![
            ClassicalBand { label: "1550".into(), wavelengths_nm: vec![1550.0] },
            ClassicalBand { label: "1580".into(), wavelengths_nm: vec![1580.0] },
            ClassicalBand { label: "1617".into(), wavelengths_nm: vec![1617.0] },
        ];
        let link = FiberLink::installed_default();
        let t = RamanGainTable::default();
        let r = classical_band_advisor(&t, 1310.0, &bands, &link, 50.0).unwrap();
        let pos = |l: &str| r.iter().position(|b| b.label == l).unwrap();
        assert!(pos("1580") < pos("1550"));
        let r = classical_band_advisor(&t, 1340.0, &bands, &link, 50.0).unwrap();
        assert!(r.iter().position(|b| b.label == "1617").unwrap() < r.iter().position(|b| b.label == "1550").unwrap());
        let one = classical_band_advisor(&t, 1310.0, &bands[..1], &link, 50.0).unwrap();
        assert_eq!(one[0].label, "1550");
        let bad = [ClassicalBand { label: "o".into(), wavelengths_nm: vec![1300.0] }];
        assert!(matches!(classical_band_advisor(&t, 1310.0, &bad, &link, 50.0), Err(Error::UnsupportedRegime { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn optimize_is_permutation_invariant(seed in any::<u64>(), obj in 0usize..3) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let obj = [Objective::MaxVisibility, Objective::MaxCcrAtV, Objective::MaxFidelity][obj];
            let plans = enumerate_plans(&grid(5, 6), &lab(16.2), &DarkFiberModel::default()).unwrap();
            let mut shuffled = plans.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let c = PlanConstraints::default();
            prop_assert_eq!(optimize(&plans, &c, obj).unwrap(), optimize(&shuffled, &c, obj).unwrap());
        }
    }
}
