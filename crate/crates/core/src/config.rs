//! Scenario files.
//!
//! A scenario is plain `key = value` text. Top-level keys describe the slice,
//! and each `[name]` section describes one service:
//!
//! ```text
//! bandwidth_mbps = 10
//! distribution = uniform
//! noise_pct = 5
//! seed = 1
//!
//! [cv]
//! kind = cv
//! demand_mbps = 0.85
//! ue_count = 40
//! kpi_target = 4.0
//! ```
//!
//! `dist_weights` overrides the built-in gNodeB shares of the chosen
//! distribution. Services may also set `init_priority` and `init_mbr`, the
//! knob settings an evaluation episode starts from.

use std::fmt::Write as _;
use std::path::Path;

use crate::emulator::{
    mbr_level_of, ControlVector, DistributionKind, DistributionSpec, KpiKind, ServiceKind, ServiceSpec,
    DEFAULT_MBR_LEVEL, DEFAULT_PRIORITY, GNODEB_COUNT, MBR_LADDER, PRIORITY_LEVELS,
};
use crate::error::{Error, Result};

pub const DEFAULT_QOE_TARGET: f64 = 4.0;
pub const DEFAULT_PL_TARGET: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ServiceConfig {
    pub spec: ServiceSpec,
    pub kpi_target: f64,
    pub init_priority: u8,
    pub init_mbr_level: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub bandwidth_mbps: f64,
    pub distribution: DistributionSpec,
    pub noise_pct: f64,
    pub seed: u64,
    pub services: Vec<ServiceConfig>,
}

impl ScenarioConfig {
    /// One CV, one URLLC and one mIoT intent, uniformly spread UEs.
    pub fn three_intent() -> Self {
        let services = vec![
            service("cv", ServiceKind::Cv, 0, 0.85, 40, 1, 0),
            service("urllc", ServiceKind::Urllc, 0, 0.2, 20, 5, 6),
            service("miot", ServiceKind::Miot, 0, 0.05, 60, 5, 6),
        ];
        ScenarioConfig {
            bandwidth_mbps: 10.0,
            distribution: DistributionSpec::uniform(),
            noise_pct: 5.0,
            seed: 1,
            services,
        }
    }

    /// One CV plus two instances each of URLLC and mIoT.
    pub fn five_intent() -> Self {
        let services = vec![
            service("cv", ServiceKind::Cv, 0, 0.85, 40, 1, 0),
            service("urllc1", ServiceKind::Urllc, 0, 0.2, 10, 5, 6),
            service("urllc2", ServiceKind::Urllc, 1, 0.2, 10, 5, 6),
            service("miot1", ServiceKind::Miot, 0, 0.05, 30, 5, 6),
            service("miot2", ServiceKind::Miot, 1, 0.05, 30, 5, 6),
        ];
        ScenarioConfig {
            services,
            ..Self::three_intent()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config {
            line: 0,
            msg: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut bandwidth = 10.0;
        let mut dist_kind = DistributionKind::Uniform;
        let mut dist_weights: Option<[f64; GNODEB_COUNT]> = None;
        let mut noise_pct = 5.0;
        let mut seed = 1u64;
        let mut sections: Vec<(String, usize, Vec<(usize, String, String)>)> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line_no, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(cfg_err(line_no, "empty section name"));
                }
                if sections.iter().any(|(n, _, _)| n == name) {
                    return Err(cfg_err(line_no, format!("duplicate service `{name}`")));
                }
                sections.push((name.to_string(), line_no, Vec::new()));
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| cfg_err(line_no, "expected `key = value`"))?;
            let (key, value) = (key.trim().to_string(), value.trim().to_string());
            if let Some((_, _, entries)) = sections.last_mut() {
                entries.push((line_no, key, value));
                continue;
            }
            match key.as_str() {
                "bandwidth_mbps" => bandwidth = parse_num(line_no, &key, &value)?,
                "distribution" => {
                    dist_kind = DistributionKind::parse(&value)
                        .ok_or_else(|| cfg_err(line_no, format!("unknown distribution `{value}`")))?
                }
                "dist_weights" => {
                    let parts: Vec<f64> = value
                        .split(',')
                        .map(|p| parse_num(line_no, &key, p.trim()))
                        .collect::<Result<_>>()?;
                    let weights: [f64; GNODEB_COUNT] = parts
                        .try_into()
                        .map_err(|_| cfg_err(line_no, format!("dist_weights needs {GNODEB_COUNT} values")))?;
                    dist_weights = Some(weights);
                }
                "noise_pct" => noise_pct = parse_num(line_no, &key, &value)?,
                "seed" => seed = parse_num(line_no, &key, &value)?,
                _ => return Err(cfg_err(line_no, format!("unknown key `{key}`"))),
            }
        }

        let mut services = Vec::with_capacity(sections.len());
        for (name, header_line, entries) in sections {
            services.push(parse_service(name, header_line, &entries, &services)?);
        }

        let distribution = DistributionSpec {
            kind: dist_kind,
            weights: dist_weights.unwrap_or_else(|| dist_kind.default_weights()),
        };
        let config = ScenarioConfig {
            bandwidth_mbps: bandwidth,
            distribution,
            noise_pct,
            seed,
            services,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.services.is_empty() {
            return Err(Error::Scenario("service list is empty".into()));
        }
        if !(self.bandwidth_mbps > 0.0) {
            return Err(Error::Scenario(format!(
                "bandwidth must be positive, got {}",
                self.bandwidth_mbps
            )));
        }
        if !(0.0..100.0).contains(&self.noise_pct) {
            return Err(Error::Scenario(format!("noise_pct out of range: {}", self.noise_pct)));
        }
        self.distribution.validate()?;
        for s in &self.services {
            if !(s.spec.demand_per_ue > 0.0) {
                return Err(Error::InvalidService(format!("{}: demand must be positive", s.spec.name)));
            }
            let (lo, hi) = match s.spec.kpi_kind() {
                KpiKind::Qoe => (1.0, 5.0),
                KpiKind::PacketLoss => (0.0, 100.0),
            };
            if !(s.kpi_target > lo && s.kpi_target <= hi) {
                return Err(Error::InvalidService(format!(
                    "{}: kpi_target {} outside ({lo}, {hi}]",
                    s.spec.name, s.kpi_target
                )));
            }
        }
        self.initial_controls().validate()
    }

    pub fn initial_controls(&self) -> ControlVector {
        ControlVector {
            priority: self.services.iter().map(|s| s.init_priority).collect(),
            mbr_level: self.services.iter().map(|s| s.init_mbr_level).collect(),
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.services.iter().map(|s| s.kpi_target).collect()
    }

    /// Serialises back to the text format accepted by [`ScenarioConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &self.distribution.weights;
        let _ = writeln!(out, "bandwidth_mbps = {}", self.bandwidth_mbps);
        let _ = writeln!(out, "distribution = {}", self.distribution.kind);
        let _ = writeln!(out, "dist_weights = {}, {}, {}, {}", w[0], w[1], w[2], w[3]);
        let _ = writeln!(out, "noise_pct = {}", self.noise_pct);
        let _ = writeln!(out, "seed = {}", self.seed);
        for s in &self.services {
            let _ = writeln!(out, "\n[{}]", s.spec.name);
            let _ = writeln!(out, "kind = {}", s.spec.kind);
            let _ = writeln!(out, "demand_mbps = {}", s.spec.demand_per_ue);
            let _ = writeln!(out, "ue_count = {}", s.spec.ue_count);
            let _ = writeln!(out, "kpi_target = {}", s.kpi_target);
            let _ = writeln!(out, "init_priority = {}", s.init_priority);
            let _ = writeln!(out, "init_mbr = {}", MBR_LADDER[s.init_mbr_level]);
        }
        out
    }
}

fn service(
    name: &str,
    kind: ServiceKind,
    instance_id: u32,
    demand_per_ue: f64,
    ue_count: u32,
    init_priority: u8,
    init_mbr_level: usize,
) -> ServiceConfig {
    ServiceConfig {
        spec: ServiceSpec {
            name: name.to_string(),
            kind,
            instance_id,
            demand_per_ue,
            ue_count,
        },
        kpi_target: default_target(kind),
        init_priority,
        init_mbr_level,
    }
}

fn default_target(kind: ServiceKind) -> f64 {
    match kind.kpi_kind() {
        KpiKind::Qoe => DEFAULT_QOE_TARGET,
        KpiKind::PacketLoss => DEFAULT_PL_TARGET,
    }
}

fn parse_service(
    name: String,
    header_line: usize,
    entries: &[(usize, String, String)],
    earlier: &[ServiceConfig],
) -> Result<ServiceConfig> {
    let mut kind = None;
    let mut demand = None;
    let mut ue_count = None;
    let mut target = None;
    let mut init_priority = DEFAULT_PRIORITY;
    let mut init_mbr_level = DEFAULT_MBR_LEVEL;
    for (line, key, value) in entries {
        let line = *line;
        match key.as_str() {
            "kind" => {
                kind = Some(
                    ServiceKind::parse(value)
                        .ok_or_else(|| cfg_err(line, format!("unknown service kind `{value}`")))?,
                )
            }
            "demand_mbps" => demand = Some(parse_num::<f64>(line, key, value)?),
            "ue_count" => ue_count = Some(parse_num::<u32>(line, key, value)?),
            "kpi_target" => target = Some(parse_num::<f64>(line, key, value)?),
            "init_priority" => {
                init_priority = parse_num(line, key, value)?;
                if !(1..=PRIORITY_LEVELS).contains(&init_priority) {
                    return Err(cfg_err(line, "init_priority must be in 1..=5"));
                }
            }
            "init_mbr" => {
                let mbr: f64 = parse_num(line, key, value)?;
                init_mbr_level =
                    mbr_level_of(mbr).ok_or_else(|| cfg_err(line, format!("init_mbr {mbr} is not on the MBR ladder")))?;
            }
            _ => return Err(cfg_err(line, format!("unknown service key `{key}`"))),
        }
    }
    let kind = kind.ok_or_else(|| cfg_err(header_line, format!("service `{name}` lacks `kind`")))?;
    let demand_per_ue = demand.ok_or_else(|| cfg_err(header_line, format!("service `{name}` lacks `demand_mbps`")))?;
    let ue_count = ue_count.ok_or_else(|| cfg_err(header_line, format!("service `{name}` lacks `ue_count`")))?;
    let instance_id = earlier.iter().filter(|s| s.spec.kind == kind).count() as u32;
    Ok(ServiceConfig {
        spec: ServiceSpec {
            name,
            kind,
            instance_id,
            demand_per_ue,
            ue_count,
        },
        kpi_target: target.unwrap_or_else(|| default_target(kind)),
        init_priority,
        init_mbr_level,
    })
}

fn cfg_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Config { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| cfg_err(line, format!("`{key}`: cannot parse `{value}`")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulator::init_scenario;

    const SAMPLE: &str = "
# three intents
bandwidth_mbps = 10
distribution = uniform
noise_pct = 5
seed = 3

[cv]
kind = cv
demand_mbps = 0.85
ue_count = 40
kpi_target = 4.0

[urllc]
kind = urllc
demand_mbps = 0.2
ue_count = 20
kpi_target = 2.0
init_mbr = 0.5

[miot]
kind = miot
demand_mbps = 0.05
ue_count = 60
";

    #[test]
    fn parses_sample() {
        let cfg = ScenarioConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.services.len(), 3);
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.distribution.weights, [0.25; 4]);
        assert_eq!(cfg.services[2].kpi_target, DEFAULT_PL_TARGET);
        assert_eq!(cfg.services[1].init_mbr_level, 0);
        let state = init_scenario(&cfg).unwrap();
        assert_eq!(state.airlink_bandwidth, 10.0);
        assert_eq!(state.timestep, 0);
        assert_eq!(state.controls, ControlVector::defaults(3));
    }

    #[test]
    fn five_intent_has_five_kpi_slots() {
        let cfg = ScenarioConfig::five_intent();
        let kinds: Vec<_> = cfg.services.iter().map(|s| s.spec.kpi_kind()).collect();
        assert_eq!(kinds.len(), 5);
        assert_eq!(kinds.iter().filter(|k| **k == KpiKind::Qoe).count(), 1);
        assert_eq!(cfg.services[2].spec.instance_id, 1);
    }

    #[test]
    fn text_round_trip() {
        for cfg in [ScenarioConfig::three_intent(), ScenarioConfig::five_intent()] {
            assert_eq!(ScenarioConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }

    #[test]
    fn shipped_files_match_presets() {
        let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios");
        let three = ScenarioConfig::load(format!("{dir}/three_intent.cfg")).unwrap();
        let five = ScenarioConfig::load(format!("{dir}/five_intent.cfg")).unwrap();
        assert_eq!(three, ScenarioConfig::three_intent());
        assert_eq!(five, ScenarioConfig::five_intent());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            ScenarioConfig::parse("bandwidth_mbps = 10\n"),
            Err(Error::Scenario(_))
        ));
        let negative = SAMPLE.replace("bandwidth_mbps = 10", "bandwidth_mbps = -1");
        assert!(matches!(ScenarioConfig::parse(&negative), Err(Error::Scenario(_))));
        let weights = SAMPLE.replace("distribution = uniform", "distribution = gamma\ndist_weights = 0.5, 0.5, 0.5, 0.5");
        assert!(matches!(ScenarioConfig::parse(&weights), Err(Error::Distribution { .. })));
        let typo = SAMPLE.replace("ue_count = 40", "ue_cnt = 40");
        assert!(matches!(ScenarioConfig::parse(&typo), Err(Error::Config { .. })));
        let ladder = SAMPLE.replace("init_mbr = 0.5", "init_mbr = 3");
        assert!(matches!(ScenarioConfig::parse(&ladder), Err(Error::Config { .. })));
    }

    #[test]
    fn gaussian_override() {
        let text = SAMPLE.replace(
            "distribution = uniform",
            "distribution = gaussian\ndist_weights = 0.1, 0.4, 0.4, 0.1",
        );
        let cfg = ScenarioConfig::parse(&text).unwrap();
        assert_eq!(cfg.distribution.weights, [0.1, 0.4, 0.4, 0.1]);
    }
}
