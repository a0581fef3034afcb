//! Fiber spans, classical WDM launch plans and lit/dark switch routing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::{dbm_sum, DB_TO_NATURAL};

pub const NETWORK_SCHEMA_VERSION: u32 = 1;

/// Piecewise-linear attenuation curve, dB/km against wavelength in nm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<[f64; 2]>", into = "Vec<[f64; 2]>")]
pub struct AttenuationTable {
    knots: Vec<(f64, f64)>,
}

impl AttenuationTable {
    pub fn new(mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("attenuation table has no knots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in knots.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Config(format!("duplicate attenuation knot at {} nm", w[0].0)));
            }
        }
        if let Some(&(nm, a)) = knots.iter().find(|(nm, a)| !nm.is_finite() || !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config(format!("attenuation {a} dB/km at {nm} nm must be positive")));
        }
        Ok(Self { knots })
    }

    /// Typical standard single-mode fiber.
    pub fn generic_smf() -> Self {
        Self::new(vec![(1260.0, 0.37), (1280.0, 0.35), (1310.0, 0.33), (1330.0, 0.32), (1550.0, 0.19), (1610.0, 0.20), (1630.0, 0.21)])
            .expect("static table")
    }

    /// Curve of the 47.9 km installed link, fitted to its measured end-to-end losses.
    pub fn installed_link() -> Self {
        Self::new(vec![
            (1260.0, 0.392578),
            (1280.0, 0.367578),
            (1310.0, 0.33),
            (1330.0, 0.32),
            (1550.0, 0.183862),
            (1610.0, 0.183862),
            (1630.0, 0.19),
        ])
        .expect("static table")
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn support(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    /// Attenuation in dB/km at `wavelength_nm`.
    pub fn db_per_km(&self, wavelength_nm: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        if !(wavelength_nm >= lo && wavelength_nm <= hi) {
            return Err(Error::Range { quantity: "wavelength_nm", value: wavelength_nm, min: lo, max: hi });
        }
        let i = self.knots.partition_point(|k| k.0 < wavelength_nm);
        if i < self.knots.len() && self.knots[i].0 == wavelength_nm {
            return Ok(self.knots[i].1);
        }
        let (x0, y0) = self.knots[i - 1];
        let (x1, y1) = self.knots[i];
        Ok(y0 + (y1 - y0) * (wavelength_nm - x0) / (x1 - x0))
    }
}

impl TryFrom<Vec<[f64; 2]>> for AttenuationTable {
    type Error = Error;
    fn try_from(v: Vec<[f64; 2]>) -> Result<Self> {
        Self::new(v.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

impl From<AttenuationTable> for Vec<[f64; 2]> {
    fn from(t: AttenuationTable) -> Self {
        t.knots.into_iter().map(|(a, b)| [a, b]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiberLink {
    pub name: String,
    pub length_km: f64,
    pub attenuation: AttenuationTable,
    #[serde(default)]
    pub excess_loss_db: f64,
    #[serde(default)]
    pub installed: bool,
}

impl FiberLink {
    pub fn new(name: impl Into<String>, length_km: f64, attenuation: AttenuationTable, excess_loss_db: f64) -> Result<Self> {
        let link = Self { name: name.into(), length_km, attenuation, excess_loss_db, installed: false };
        link.validate()?;
        Ok(link)
    }

    /// The 47.9 km installed link between the two lab nodes.
    pub fn installed_default() -> Self {
        Self {
            name: "installed".into(),
            length_km: 47.9,
            attenuation: AttenuationTable::installed_link(),
            excess_loss_db: 3.893,
            installed: true,
        }
    }

    /// 5.4 km spool used as the dark fiber.
    pub fn dark_spool_default() -> Self {
        Self {
            name: "spool".into(),
            length_km: 5.4,
            attenuation: AttenuationTable::generic_smf(),
            excess_loss_db: 1.0,
            installed: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_km >= 0.0 && self.length_km.is_finite()) {
            return Err(Error::Config(format!("link {}: length {} km must be >= 0", self.name, self.length_km)));
        }
        if !(self.excess_loss_db >= 0.0 && self.excess_loss_db.is_finite()) {
            return Err(Error::Config(format!("link {}: excess loss must be >= 0", self.name)));
        }
        Ok(())
    }

    /// End-to-end loss at `wavelength_nm`.
    pub fn loss_db(&self, wavelength_nm: f64) -> Result<f64> {
        Ok(self.length_km * self.attenuation.db_per_km(wavelength_nm)? + self.excess_loss_db)
    }

    /// Effective power attenuation coefficient in nepers/km with the excess
    /// loss spread evenly along the span.
    pub fn alpha_per_km(&self, wavelength_nm: f64) -> Result<f64> {
        if self.length_km == 0.0 {
            return Ok(0.0);
        }
        Ok(self.loss_db(wavelength_nm)? * DB_TO_NATURAL / self.length_km)
    }
}

/// Propagation of classical light relative to the quantum signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Co,
    Counter,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassicalChannel {
    pub wavelength_nm: f64,
    pub launch_power_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkAssignment {
    pub link: String,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalWdmPlan {
    pub channels: Vec<ClassicalChannel>,
    #[serde(default)]
    pub assignments: Vec<LinkAssignment>,
}

impl ClassicalWdmPlan {
    /// `count` channels evenly spaced in wavelength over `[start_nm, end_nm]`
    /// sharing `aggregate_dbm` equally.
    pub fn evenly_spaced(start_nm: f64, end_nm: f64, count: usize, aggregate_dbm: f64) -> Self {
        let per = aggregate_dbm - 10.0 * (count.max(1) as f64).log10();
        let channels = (0..count)
            .map(|k| {
                let wl = if count == 1 {
                    start_nm
                } else {
                    start_nm + (end_nm - start_nm) * k as f64 / (count - 1) as f64
                };
                ClassicalChannel { wavelength_nm: wl, launch_power_dbm: per }
            })
            .collect();
        Self { channels, assignments: Vec::new() }
    }

    /// The 11-channel 1549–1565 nm C-band source.
    pub fn c_band_default(aggregate_dbm: f64) -> Self {
        let mut plan = Self::evenly_spaced(1549.0, 1565.0, 11, aggregate_dbm);
        plan.assignments.push(LinkAssignment { link: "installed".into(), direction: Direction::Co });
        plan
    }

    pub fn assigned_to(mut self, link: impl Into<String>, direction: Direction) -> Self {
        self.assignments.push(LinkAssignment { link: link.into(), direction });
        self
    }

    /// Aggregate launch power in dBm; `-inf` for an empty plan.
    pub fn aggregate_launch_dbm(&self) -> f64 {
        dbm_sum(self.channels.iter().map(|c| c.launch_power_dbm))
    }

    /// Same channel set rescaled to a new aggregate launch power.
    pub fn with_aggregate_dbm(&self, aggregate_dbm: f64) -> Self {
        let shift = aggregate_dbm - self.aggregate_launch_dbm();
        let mut out = self.clone();
        for c in &mut out.channels {
            c.launch_power_dbm += shift;
        }
        out
    }

    pub fn direction_on(&self, link: &str) -> Option<Direction> {
        self.assignments.iter().find(|a| a.link == link).map(|a| a.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReceivedPower {
    pub per_channel_dbm: Vec<f64>,
    pub aggregate_dbm: f64,
}

pub fn received_power(plan: &ClassicalWdmPlan, link: &FiberLink) -> Result<ReceivedPower> {
    let per_channel_dbm = plan
        .channels
        .iter()
        .map(|c| Ok(c.launch_power_dbm - link.loss_db(c.wavelength_nm)?))
        .collect::<Result<Vec<_>>>()?;
    let aggregate_dbm = dbm_sum(per_channel_dbm.iter().copied());
    Ok(ReceivedPower { per_channel_dbm, aggregate_dbm })
}

/// Which fiber an arm of the source is switched onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fiber {
    Lit,
    Dark,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SwitchState {
    pub signal: Fiber,
    pub idler: Fiber,
}

impl SwitchState {
    pub const SIGNAL_LIT: SwitchState = SwitchState { signal: Fiber::Lit, idler: Fiber::Dark };
    pub const IDLER_LIT: SwitchState = SwitchState { signal: Fiber::Dark, idler: Fiber::Lit };

    pub fn flipped(self) -> Self {
        Self { signal: self.idler, idler: self.signal }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyLink {
    pub from: String,
    pub to: String,
    #[serde(flatten)]
    pub fiber: FiberLink,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub schema_version: u32,
    pub nodes: Vec<String>,
    pub links: Vec<TopologyLink>,
    pub source: String,
    pub lit_receiver: String,
    pub dark_receiver: String,
    #[serde(default)]
    pub classical_plan: Option<ClassicalWdmPlan>,
    #[serde(default)]
    pub allow_both_lit: bool,
}

/// One traversed span with the classical channels sharing it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hop {
    pub link: FiberLink,
    pub coexisting: Vec<ClassicalChannel>,
    pub direction: Option<Direction>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArmRoute {
    pub fiber: Fiber,
    pub receiver: String,
    pub hops: Vec<Hop>,
}

impl ArmRoute {
    pub fn loss_db(&self, wavelength_nm: f64) -> Result<f64> {
        self.hops.iter().map(|h| h.link.loss_db(wavelength_nm)).sum()
    }

    pub fn coexisting_count(&self) -> usize {
        self.hops.iter().map(|h| h.coexisting.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Route {
    pub signal: ArmRoute,
    pub idler: ArmRoute,
}

impl NetworkTopology {
    /// Source node with the installed link to the lit receiver and the spool
    /// to the dark receiver; the C-band plan rides the installed link.
    pub fn lab_default(aggregate_dbm: f64) -> Self {
        Self {
            schema_version: NETWORK_SCHEMA_VERSION,
            nodes: vec!["source".into(), "lit_rx".into(), "dark_rx".into()],
            links: vec![
                TopologyLink { from: "source".into(), to: "lit_rx".into(), fiber: FiberLink::installed_default() },
                TopologyLink { from: "source".into(), to: "dark_rx".into(), fiber: FiberLink::dark_spool_default() },
            ],
            source: "source".into(),
            lit_receiver: "lit_rx".into(),
            dark_receiver: "dark_rx".into(),
            classical_plan: Some(ClassicalWdmPlan::c_band_default(aggregate_dbm)),
            allow_both_lit: false,
        }
    }

    /// Copy with the classical plan rescaled to `aggregate_dbm`.
    pub fn with_launch_dbm(&self, aggregate_dbm: f64) -> Self {
        let mut t = self.clone();
        if let Some(p) = &t.classical_plan {
            t.classical_plan = Some(p.with_aggregate_dbm(aggregate_dbm));
        }
        t
    }

    /// Copy with every classical channel switched off.
    pub fn without_classical(&self) -> Self {
        let mut t = self.clone();
        if let Some(p) = &mut t.classical_plan {
            p.channels.clear();
        }
        t
    }

    pub fn link(&self, name: &str) -> Option<&FiberLink> {
        self.links.iter().find(|l| l.fiber.name == name).map(|l| &l.fiber)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != NETWORK_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: self.schema_version, expected: NETWORK_SCHEMA_VERSION });
        }
        let known = |n: &str| self.nodes.iter().any(|x| x == n);
        for n in [&self.source, &self.lit_receiver, &self.dark_receiver] {
            if !known(n) {
                return Err(Error::Topology(format!("unknown node {n}")));
            }
        }
        if self.lit_receiver == self.dark_receiver {
            return Err(Error::Topology("lit and dark receivers must differ".into()));
        }
        for l in &self.links {
            l.fiber.validate()?;
            if !known(&l.from) || !known(&l.to) {
                return Err(Error::Topology(format!("link {} references an unknown node", l.fiber.name)));
            }
            if l.from == l.to {
                return Err(Error::Topology(format!("link {} is a loop on node {}", l.fiber.name, l.from)));
            }
        }
        for (i, l) in self.links.iter().enumerate() {
            if self.links[..i].iter().any(|m| m.fiber.name == l.fiber.name) {
                return Err(Error::Topology(format!("duplicate link name {}", l.fiber.name)));
            }
        }
        if let Some(plan) = &self.classical_plan {
            for a in &plan.assignments {
                if self.link(&a.link).is_none() {
                    return Err(Error::Topology(format!("classical plan assigned to unknown link {}", a.link)));
                }
            }
        }
        Ok(())
    }

    /// Breadth-first path from the source to `target`, following links in
    /// declaration order (links are bidirectional).
    fn path_to(&self, target: &str) -> Result<Vec<usize>> {
        use std::collections::VecDeque;
        let idx = |n: &str| self.nodes.iter().position(|x| x == n).expect("validated node");
        let start = idx(&self.source);
        let goal = idx(target);
        let mut prev: Vec<Option<(usize, usize)>> = vec![None; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            if u == goal {
                break;
            }
            for (li, l) in self.links.iter().enumerate() {
                let (a, b) = (idx(&l.from), idx(&l.to));
                let v = if a == u {
                    b
                } else if b == u {
                    a
                } else {
                    continue;
                };
                if !seen[v] {
                    seen[v] = true;
                    prev[v] = Some((u, li));
                    queue.push_back(v);
                }
            }
        }
        if !seen[goal] {
            return Err(Error::Topology(format!("no path from {} to {}", self.source, target)));
        }
        let mut path = Vec::new();
        let mut v = goal;
        while let Some((u, li)) = prev[v] {
            path.push(li);
            v = u;
        }
        path.reverse();
        if path.is_empty() {
            return Err(Error::Topology(format!("receiver {target} coincides with the source")));
        }
        Ok(path)
    }

    fn arm(&self, fiber: Fiber) -> Result<ArmRoute> {
        let receiver = match fiber {
            Fiber::Lit => &self.lit_receiver,
            Fiber::Dark => &self.dark_receiver,
        };
        let hops = self
            .path_to(receiver)?
            .into_iter()
            .map(|li| {
                let link = self.links[li].fiber.clone();
                let direction = self.classical_plan.as_ref().and_then(|p| p.direction_on(&link.name));
                let coexisting = match (&self.classical_plan, direction) {
                    (Some(p), Some(_)) => p.channels.clone(),
                    _ => Vec::new(),
                };
                Hop { link, coexisting, direction }
            })
            .collect();
        Ok(ArmRoute { fiber, receiver: receiver.clone(), hops })
    }

    /// Expand the switch assignment into per-arm paths.
    pub fn route(&self, switch: SwitchState) -> Result<Route> {
        self.validate()?;
        if switch.signal == switch.idler && !self.allow_both_lit {
            return Err(Error::Topology(format!(
                "both arms switched to the {:?} fiber; enable allow_both_lit to permit shared routing",
                switch.signal
            )));
        }
        Ok(Route { signal: self.arm(switch.signal)?, idler: self.arm(switch.idler)? })
    }
}
