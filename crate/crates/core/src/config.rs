//! Service configuration, read from TOML.
//!
//! ```toml
//! log_path = "audit.log"
//!
//! [ccb]
//! quorum = 2                      # optional; defaults to half the board, rounded up
//!
//! [cost]
//! gamma = 0.5
//! w_sev = 2.0
//! w_stake = 1.0
//! w_cost = 0.1
//!
//! [harness]
//! seed = 7
//! base_latency = 1
//! jitter = 2
//! retry_ticks = 8
//! faults = ["drop *->tokyo:propagate 1"]
//!
//! [[sites]]
//! id = "lahore"
//! utc_offset_minutes = 300
//! daily_capacity = 16.0
//! coordinator = true
//!
//! [[actors]]
//! id = "sana"
//! role = "Stakeholder"
//! site = "lahore"
//! stakeholder_weight = 0.8        # optional, default 0.5
//!
//! [[requirements]]
//! id = "R1"
//! title = "Login"
//! text = "Users sign in with SSO"
//! effort = 8.0
//! owner_site = "lahore"
//!
//! [[trace_links]]
//! from = "R2"
//! to = "R1"
//! kind = "DependsOn"
//! ```
//!
//! Every site starts from the same baseline: the listed requirements at
//! version 1, status `Baselined`.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    valid_effort, Actor, Baseline, Requirement, RequirementId, RequirementStatus, Role, Site,
    SiteId, TraceLink, MAX_UTC_OFFSET_MINUTES, MIN_UTC_OFFSET_MINUTES,
};
use crate::impact::{CostParams, TraceGraph};
use crate::replication::{parse_fault_script, FaultRule, HarnessConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteConfig {
    pub id: SiteId,
    pub utc_offset_minutes: i32,
    pub daily_capacity: f64,
    #[serde(default)]
    pub coordinator: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequirementConfig {
    pub id: RequirementId,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub text: String,
    pub effort: f64,
    pub owner_site: SiteId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CcbConfig {
    #[serde(default)]
    pub quorum: Option<u32>,
}

fn default_latency() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_latency")]
    pub base_latency: u64,
    #[serde(default)]
    pub jitter: u64,
    #[serde(default)]
    pub retry_ticks: u64,
    /// Fault rules, one script line each.
    #[serde(default)]
    pub faults: Vec<String>,
}

impl Default for HarnessSection {
    fn default() -> Self {
        HarnessSection { seed: 0, base_latency: 1, jitter: 0, retry_ticks: 0, faults: Vec::new() }
    }
}

impl HarnessSection {
    pub fn harness_config(&self) -> HarnessConfig {
        HarnessConfig {
            seed: self.seed,
            base_latency: self.base_latency,
            jitter: self.jitter,
            retry_ticks: self.retry_ticks,
        }
    }

    pub fn fault_rules(&self) -> Result<Vec<FaultRule>, ConfigError> {
        parse_fault_script(&self.faults.join("\n")).map_err(|e| ConfigError(e.to_string()))
    }
}

/// Everything that shapes system state. Recorded verbatim as the first log event.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub sites: Vec<SiteConfig>,
    #[serde(default)]
    pub actors: Vec<Actor>,
    #[serde(default)]
    pub requirements: Vec<RequirementConfig>,
    #[serde(default)]
    pub trace_links: Vec<TraceLink>,
    #[serde(default)]
    pub ccb: CcbConfig,
    #[serde(default)]
    pub cost: CostParams,
    #[serde(default)]
    pub harness: HarnessSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceConfig {
    #[serde(default)]
    pub log_path: Option<PathBuf>,
    #[serde(flatten)]
    pub system: SystemConfig,
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: ServiceConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.system.validate()?;
        Ok(config)
    }
}

impl SystemConfig {
    pub fn ccb_size(&self) -> u32 {
        self.actors.iter().filter(|a| a.role == Role::CcbMember).count() as u32
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError(m));
        let coordinators = self.sites.iter().filter(|s| s.coordinator).count();
        if coordinators != 1 {
            return err(format!("exactly one coordinator site is required, found {coordinators}"));
        }
        let mut site_ids = BTreeSet::new();
        for site in &self.sites {
            if !site_ids.insert(&site.id) {
                return err(format!("site {} is listed twice", site.id));
            }
            if !(MIN_UTC_OFFSET_MINUTES..=MAX_UTC_OFFSET_MINUTES).contains(&site.utc_offset_minutes) {
                return err(format!("site {} has utc offset {} out of range", site.id, site.utc_offset_minutes));
            }
            if !(site.daily_capacity.is_finite() && site.daily_capacity > 0.0) {
                return err(format!("site {} needs a positive daily capacity", site.id));
            }
        }
        let mut actor_ids = BTreeSet::new();
        for actor in &self.actors {
            if !actor_ids.insert(&actor.id) {
                return err(format!("actor {} is listed twice", actor.id));
            }
            if !site_ids.contains(&actor.site) {
                return err(format!("actor {} belongs to unknown site {}", actor.id, actor.site));
            }
            if !(0.0..=1.0).contains(&actor.stakeholder_weight) {
                return err(format!("actor {} has stakeholder weight outside [0, 1]", actor.id));
            }
        }
        let mut requirement_ids = BTreeSet::new();
        for r in &self.requirements {
            if !requirement_ids.insert(&r.id) {
                return err(format!("requirement {} is listed twice", r.id));
            }
            if !valid_effort(r.effort) {
                return err(format!("requirement {} needs a positive effort", r.id));
            }
            if !site_ids.contains(&r.owner_site) {
                return err(format!("requirement {} is owned by unknown site {}", r.id, r.owner_site));
            }
        }
        self.trace_graph()?;
        if let Some(quorum) = self.ccb.quorum {
            if quorum == 0 || quorum > self.ccb_size() {
                return err(format!("quorum {quorum} must be between 1 and the CCB size {}", self.ccb_size()));
            }
        }
        self.cost.validate().map_err(|e| ConfigError(e.to_string()))?;
        self.harness.fault_rules()?;
        Ok(())
    }

    pub fn baseline(&self) -> Baseline {
        self.requirements
            .iter()
            .map(|r| Requirement {
                id: r.id.clone(),
                title: r.title.clone(),
                text: r.text.clone(),
                version: 1,
                status: RequirementStatus::Baselined,
                effort: r.effort,
                owner_site: r.owner_site.clone(),
            })
            .collect()
    }

    pub fn trace_graph(&self) -> Result<TraceGraph, ConfigError> {
        TraceGraph::new(self.requirements.iter().map(|r| r.id.clone()), self.trace_links.iter().cloned())
            .map_err(|e| ConfigError(e.to_string()))
    }

    /// Coordinator first, then the remote sites in listed order, all seeded
    /// with the initial baseline.
    pub fn build_sites(&self) -> (Site, Vec<Site>) {
        let baseline = self.baseline();
        let make = |s: &SiteConfig| Site::new(s.id.clone(), s.utc_offset_minutes, s.daily_capacity, baseline.clone());
        let coordinator = self.sites.iter().find(|s| s.coordinator).map(make).expect("validated");
        let remotes = self.sites.iter().filter(|s| !s.coordinator).map(make).collect();
        (coordinator, remotes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
log_path = "audit.log"

[ccb]
quorum = 1

[harness]
seed = 3
faults = ["drop *->b 1"]

[[sites]]
id = "a"
utc_offset_minutes = 300
daily_capacity = 8.0
coordinator = true

[[sites]]
id = "b"
utc_offset_minutes = -300
daily_capacity = 4.0

[[actors]]
id = "m1"
role = "CcbMember"
site = "b"

[[requirements]]
id = "R1"
effort = 2.0
owner_site = "a"

[[requirements]]
id = "R2"
effort = 3.0
owner_site = "b"

[[trace_links]]
from = "R2"
to = "R1"
kind = "DependsOn"
"#;

    #[test]
    fn parses_sample() {
        let config = ServiceConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(config.log_path, Some(PathBuf::from("audit.log")));
        let system = &config.system;
        assert_eq!(system.harness.base_latency, 1);
        assert_eq!(system.harness.fault_rules().unwrap().len(), 1);
        assert_eq!(system.actors[0].stakeholder_weight, 0.5);
        assert_eq!(system.cost, CostParams::default());
        let (coordinator, remotes) = system.build_sites();
        assert_eq!(coordinator.id.as_str(), "a");
        assert_eq!(remotes.len(), 1);
        assert_eq!(coordinator.baseline_hash(), remotes[0].baseline_hash());
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let two_coordinators = SAMPLE.replace("daily_capacity = 4.0", "daily_capacity = 4.0\ncoordinator = true");
        assert!(ServiceConfig::from_toml(&two_coordinators).is_err());
        assert!(ServiceConfig::from_toml(&SAMPLE.replace("quorum = 1", "quorum = 2")).is_err());
        assert!(ServiceConfig::from_toml(&SAMPLE.replace("to = \"R1\"", "to = \"R9\"")).is_err());
        assert!(ServiceConfig::from_toml(&SAMPLE.replace("-300", "-900")).is_err());
        assert!(ServiceConfig::from_toml(&SAMPLE.replace("drop *->b 1", "drop b")).is_err());
    }
}
