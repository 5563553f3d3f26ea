//! Discrete-time fluid model of one radio slice.
//!
//! Each step the slice sees an offered load per service and gNodeB. Inside a
//! gNodeB every service is first clipped to its MBR, then the airlink is
//! shared in proportion to priority times offered load, with surplus
//! redistributed (weighted water-filling). KPIs are computed per gNodeB and
//! averaged with the UE share of each gNodeB as weight.

use std::fmt;

use rand::Rng;

use crate::config::ScenarioConfig;
use crate::error::{Error, Result};

pub const GNODEB_COUNT: usize = 4;
pub const PRIORITY_LEVELS: u8 = 5;
pub const MBR_LADDER: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0];
pub const DEFAULT_PRIORITY: u8 = 3;
pub const DEFAULT_MBR_LEVEL: usize = 6;

pub const GAUSSIAN_WEIGHTS: [f64; GNODEB_COUNT] = [0.15, 0.35, 0.35, 0.15];
pub const GAMMA_WEIGHTS: [f64; GNODEB_COUNT] = [0.45, 0.30, 0.15, 0.10];

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ServiceKind {
    Cv,
    Urllc,
    Miot,
}

impl ServiceKind {
    pub fn kpi_kind(self) -> KpiKind {
        match self {
            ServiceKind::Cv => KpiKind::Qoe,
            ServiceKind::Urllc | ServiceKind::Miot => KpiKind::PacketLoss,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "cv" => Some(ServiceKind::Cv),
            "urllc" => Some(ServiceKind::Urllc),
            "miot" => Some(ServiceKind::Miot),
            _ => None,
        }
    }
}

impl fmt::Display for ServiceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServiceKind::Cv => "cv",
            ServiceKind::Urllc => "urllc",
            ServiceKind::Miot => "miot",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum KpiKind {
    Qoe,
    PacketLoss,
}

impl KpiKind {
    /// Operating range used to normalise observations and to build goal ladders.
    ///
    /// QoE spans its full scale. Packet loss is reported on [0, 100] but the
    /// controllable region is the first 20 percent, so that is what agents see.
    pub fn range(self) -> (f64, f64) {
        match self {
            KpiKind::Qoe => (1.0, 5.0),
            KpiKind::PacketLoss => (0.0, 20.0),
        }
    }

    pub fn normalize(self, value: f64) -> f64 {
        let (lo, hi) = self.range();
        (value - lo) / (hi - lo)
    }

    pub fn denormalize(self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        lo + x * (hi - lo)
    }

    /// QoE is driven up towards its target, packet loss down below it.
    pub fn maximizes(self) -> bool {
        matches!(self, KpiKind::Qoe)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceSpec {
    pub name: String,
    pub kind: ServiceKind,
    pub instance_id: u32,
    pub demand_per_ue: f64,
    pub ue_count: u32,
}

impl ServiceSpec {
    pub fn kpi_kind(&self) -> KpiKind {
        self.kind.kpi_kind()
    }

    pub fn total_demand(&self) -> f64 {
        self.demand_per_ue * self.ue_count as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    Uniform,
    Gaussian,
    Gamma,
}

impl DistributionKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Some(DistributionKind::Uniform),
            "gaussian" => Some(DistributionKind::Gaussian),
            "gamma" => Some(DistributionKind::Gamma),
            _ => None,
        }
    }

    pub fn default_weights(self) -> [f64; GNODEB_COUNT] {
        match self {
            DistributionKind::Uniform => [0.25; GNODEB_COUNT],
            DistributionKind::Gaussian => GAUSSIAN_WEIGHTS,
            DistributionKind::Gamma => GAMMA_WEIGHTS,
        }
    }
}

impl fmt::Display for DistributionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DistributionKind::Uniform => "uniform",
            DistributionKind::Gaussian => "gaussian",
            DistributionKind::Gamma => "gamma",
        })
    }
}

/// Share of UEs attached to each gNodeB.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub weights: [f64; GNODEB_COUNT],
}

impl DistributionSpec {
    pub fn new(kind: DistributionKind, weights: [f64; GNODEB_COUNT]) -> Result<Self> {
        let spec = DistributionSpec { kind, weights };
        spec.validate()?;
        Ok(spec)
    }

    pub fn of_kind(kind: DistributionKind) -> Self {
        DistributionSpec {
            kind,
            weights: kind.default_weights(),
        }
    }

    pub fn uniform() -> Self {
        Self::of_kind(DistributionKind::Uniform)
    }

    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.weights.iter().sum();
        let bad_entry = self.weights.iter().any(|w| !w.is_finite() || *w < 0.0);
        if bad_entry || (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Distribution { sum });
        }
        if self.kind == DistributionKind::Uniform && self.weights.iter().any(|w| (w - 0.25).abs() > WEIGHT_TOLERANCE) {
            return Err(Error::Scenario("uniform distribution requires all weights = 0.25".into()));
        }
        Ok(())
    }
}

/// Per-service control knobs. MBR is stored as an index into [`MBR_LADDER`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ControlVector {
    pub priority: Vec<u8>,
    pub mbr_level: Vec<usize>,
}

impl ControlVector {
    pub fn defaults(services: usize) -> Self {
        ControlVector {
            priority: vec![DEFAULT_PRIORITY; services],
            mbr_level: vec![DEFAULT_MBR_LEVEL; services],
        }
    }

    pub fn len(&self) -> usize {
        self.priority.len()
    }

    pub fn is_empty(&self) -> bool {
        self.priority.is_empty()
    }

    pub fn mbr(&self, service: usize) -> f64 {
        MBR_LADDER[self.mbr_level[service]]
    }

    pub fn mbr_values(&self) -> Vec<f64> {
        self.mbr_level.iter().map(|&l| MBR_LADDER[l]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.priority.len() != self.mbr_level.len() {
            return Err(Error::shape("control vector", self.priority.len(), self.mbr_level.len()));
        }
        if self.priority.iter().any(|p| !(1..=PRIORITY_LEVELS).contains(p)) {
            return Err(Error::Scenario("priority outside 1..=5".into()));
        }
        if self.mbr_level.iter().any(|&l| l >= MBR_LADDER.len()) {
            return Err(Error::Scenario("mbr level outside ladder".into()));
        }
        Ok(())
    }
}

/// Index of `mbr` on [`MBR_LADDER`], if it is one of the ladder values.
pub fn mbr_level_of(mbr: f64) -> Option<usize> {
    MBR_LADDER.iter().position(|&v| (v - mbr).abs() < 1e-9)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub services: Vec<ServiceSpec>,
    pub distribution: DistributionSpec,
    pub controls: ControlVector,
    pub airlink_bandwidth: f64,
    pub noise_pct: f64,
    pub timestep: u64,
    pub rng_seed: u64,
}

/// Offered and served rate of every service in one gNodeB.
#[derive(Clone, Debug, PartialEq)]
pub struct CellReport {
    pub offered: Vec<f64>,
    pub served: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KpiReport {
    pub kpi: Vec<f64>,
    pub offered: Vec<f64>,
    pub served: Vec<f64>,
    pub cells: Vec<CellReport>,
}

impl KpiReport {
    /// Slice congestion: total offered load over total airlink capacity.
    pub fn congestion(&self, bandwidth_per_cell: f64) -> f64 {
        let offered: f64 = self.offered.iter().sum();
        offered / (bandwidth_per_cell * self.cells.len() as f64)
    }
}

/// Builds the initial slice state: timestep 0 with default controls.
pub fn init_scenario(config: &ScenarioConfig) -> Result<NetworkState> {
    config.validate()?;
    let services: Vec<ServiceSpec> = config.services.iter().map(|s| s.spec.clone()).collect();
    Ok(NetworkState {
        controls: ControlVector::defaults(services.len()),
        services,
        distribution: config.distribution,
        airlink_bandwidth: config.bandwidth_mbps,
        noise_pct: config.noise_pct,
        timestep: 0,
        rng_seed: config.seed,
    })
}

/// Weighted water-filling of one gNodeB's airlink.
///
/// Services are clipped to their MBR, then capacity is split in proportion to
/// `priority × clipped demand` (what a priority-weighted random packet
/// scheduler converges to). A service whose demand is below its share is
/// fully served and its surplus goes back to the pool for the rest.
pub fn allocate_capacity(offered: &[f64], priority: &[u8], mbr: &[f64], bandwidth: f64) -> Vec<f64> {
    debug_assert_eq!(offered.len(), priority.len());
    debug_assert_eq!(offered.len(), mbr.len());
    let demand: Vec<f64> = offered.iter().zip(mbr).map(|(o, m)| o.max(0.0).min(*m)).collect();
    let mut served = vec![0.0; demand.len()];
    let mut active: Vec<usize> = (0..demand.len()).filter(|&i| demand[i] > 0.0).collect();
    let mut capacity = bandwidth;

    while !active.is_empty() {
        let weight = |i: usize| f64::from(priority[i]) * demand[i];
        let weight_sum: f64 = active.iter().map(|&i| weight(i)).sum();
        let share = |i: usize| capacity * weight(i) / weight_sum;
        let (satisfied, starved): (Vec<usize>, Vec<usize>) = active.iter().partition(|&&i| demand[i] <= share(i));
        if satisfied.is_empty() {
            for &i in &starved {
                served[i] = share(i);
            }
            break;
        }
        for &i in &satisfied {
            served[i] = demand[i];
            capacity -= demand[i];
        }
        capacity = capacity.max(0.0);
        active = starved;
    }
    served
}

/// QoE on [1, 5] as an affine map of throughput satisfaction.
pub fn compute_qoe(served: f64, demand: f64) -> Result<f64> {
    if !(demand > 0.0) {
        return Err(Error::InvalidService(format!("QoE needs positive demand, got {demand}")));
    }
    Ok((1.0 + 4.0 * served / demand).clamp(1.0, 5.0))
}

pub fn compute_packet_loss(offered: f64, served: f64) -> f64 {
    if offered <= 0.0 {
        return 0.0;
    }
    (100.0 * (offered - served) / offered).clamp(0.0, 100.0)
}

fn service_kpi(kind: KpiKind, offered: f64, served: f64) -> f64 {
    match kind {
        KpiKind::Qoe if offered > 0.0 => compute_qoe(served, offered).expect("offered checked positive"),
        KpiKind::Qoe => 5.0,
        KpiKind::PacketLoss => compute_packet_loss(offered, served),
    }
}

impl NetworkState {
    pub fn service_count(&self) -> usize {
        self.services.len()
    }

    /// Advances one control interval and reports the resulting KPIs.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> KpiReport {
        let n = self.services.len();
        let noise = self.noise_pct / 100.0;
        let mbr = self.controls.mbr_values();
        let mut cells = Vec::with_capacity(GNODEB_COUNT);
        let mut kpi = vec![0.0; n];
        let mut offered_total = vec![0.0; n];
        let mut served_total = vec![0.0; n];

        for &weight in &self.distribution.weights {
            let offered: Vec<f64> = self
                .services
                .iter()
                .map(|s| {
                    let eps = if noise > 0.0 { rng.gen_range(-noise..=noise) } else { 0.0 };
                    s.total_demand() * weight * (1.0 + eps)
                })
                .collect();
            let served = allocate_capacity(&offered, &self.controls.priority, &mbr, self.airlink_bandwidth);
            for i in 0..n {
                offered_total[i] += offered[i];
                served_total[i] += served[i];
                if weight > 0.0 {
                    kpi[i] += weight * service_kpi(self.services[i].kpi_kind(), offered[i], served[i]);
                }
            }
            cells.push(CellReport { offered, served });
        }
        // Weights sum to one, but clamp against rounding at the range edges.
        for (i, s) in self.services.iter().enumerate() {
            kpi[i] = match s.kpi_kind() {
                KpiKind::Qoe => kpi[i].clamp(1.0, 5.0),
                KpiKind::PacketLoss => kpi[i].clamp(0.0, 100.0),
            };
        }
        self.timestep += 1;
        KpiReport {
            kpi,
            offered: offered_total,
            served: served_total,
            cells,
        }
    }

    /// Replaces the UE distribution; everything else is left untouched.
    pub fn set_distribution(&mut self, spec: DistributionSpec) -> Result<()> {
        spec.validate()?;
        self.distribution = spec;
        Ok(())
    }

    /// Checks the allocation invariants of a report produced from this state.
    pub fn check_conservation(&self, report: &KpiReport) -> Result<()> {
        const EPS: f64 = 1e-9;
        let mbr = self.controls.mbr_values();
        for (g, cell) in report.cells.iter().enumerate() {
            let total: f64 = cell.served.iter().sum();
            if total > self.airlink_bandwidth + EPS {
                return Err(Error::Numeric(format!("gNodeB {g} serves {total} > bandwidth")));
            }
            for (i, (&s, &o)) in cell.served.iter().zip(&cell.offered).enumerate() {
                if s < -EPS || s > o.min(mbr[i]) + EPS {
                    return Err(Error::Numeric(format!(
                        "gNodeB {g} service {i}: served {s} exceeds min(offered {o}, mbr {})",
                        mbr[i]
                    )));
                }
            }
        }
        Ok(())
    }
}
