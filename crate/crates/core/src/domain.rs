//! Value types shared by every other module: identifiers, requirements,
//! baselines, trace links, actors and sites.
//!
//! Baselines are hashed through a canonical byte form so that two sites can
//! compare their state without shipping it. The encoding is a flat sequence
//! of length-prefixed fields (`<decimal byte length>:<bytes>,`), six fields
//! per requirement, requirements ordered by id bytewise ascending:
//!
//! ```text
//! id, version (decimal), title, text, status name, effort (16 hex digits of the IEEE-754 bits)
//! ```
//!
//! The digest is SHA-256 over those bytes, rendered as lowercase hex. The
//! empty baseline therefore hashes to [`EMPTY_BASELINE_DIGEST`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// SHA-256 of the empty byte string; the digest of a baseline with no entries.
pub const EMPTY_BASELINE_DIGEST: &str =
    "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier must not be empty")]
    Empty,
    #[error("identifier {0:?} contains whitespace, control or reserved characters")]
    InvalidCharacter(String),
}

fn check_id(raw: &str) -> Result<(), IdError> {
    if raw.is_empty() {
        return Err(IdError::Empty);
    }
    if raw
        .chars()
        .any(|c| c.is_whitespace() || c.is_control() || matches!(c, '<' | '>' | '*'))
    {
        return Err(IdError::InvalidCharacter(raw.to_string()));
    }
    Ok(())
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(raw: impl Into<String>) -> Result<Self, IdError> {
                let raw = raw.into();
                check_id(&raw)?;
                Ok(Self(raw))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(raw: String) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = IdError;
            fn try_from(raw: &str) -> Result<Self, IdError> {
                Self::new(raw)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::str::FromStr for $name {
            type Err = IdError;
            fn from_str(s: &str) -> Result<Self, IdError> {
                Self::new(s)
            }
        }
    };
}

string_id!(
    /// Identifies a requirement across every site's baseline.
    RequirementId
);
string_id!(
    /// Identifies a change request; issued by the coordinator as `CR-0001`, `CR-0002`, ...
    ChangeRequestId
);
string_id!(SiteId);
string_id!(ActorId);

/// Lowercase hex SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Digest(String);

impl Digest {
    pub fn of(bytes: &[u8]) -> Self {
        Digest(hex::encode(Sha256::digest(bytes)))
    }

    /// Wraps an already rendered digest. Only lowercase 64-digit hex is accepted.
    pub fn from_hex(hex: &str) -> Option<Self> {
        let ok = hex.len() == 64 && hex.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'));
        ok.then(|| Digest(hex.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Appends one length-prefixed field (`len:bytes,`) to `out`.
pub(crate) fn push_field(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(field.len().to_string().as_bytes());
    out.push(b':');
    out.extend_from_slice(field);
    out.push(b',');
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RequirementStatus {
    Proposed,
    Baselined,
    Deprecated,
}

impl RequirementStatus {
    pub fn name(self) -> &'static str {
        match self {
            RequirementStatus::Proposed => "Proposed",
            RequirementStatus::Baselined => "Baselined",
            RequirementStatus::Deprecated => "Deprecated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Requirement {
    pub id: RequirementId,
    pub title: String,
    pub text: String,
    pub version: u64,
    pub status: RequirementStatus,
    /// Estimated implementation effort in person-hours; always finite and positive.
    pub effort: f64,
    pub owner_site: SiteId,
}

impl Requirement {
    fn push_canonical(&self, out: &mut Vec<u8>) {
        push_field(out, self.id.as_str().as_bytes());
        push_field(out, self.version.to_string().as_bytes());
        push_field(out, self.title.as_bytes());
        push_field(out, self.text.as_bytes());
        push_field(out, self.status.name().as_bytes());
        push_field(out, format!("{:016x}", self.effort.to_bits()).as_bytes());
    }
}

pub fn valid_effort(effort: f64) -> bool {
    effort.is_finite() && effort > 0.0
}

/// A site's set of current requirements, keyed and iterated in id order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Baseline(BTreeMap<RequirementId, Requirement>);

impl Baseline {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &RequirementId) -> Option<&Requirement> {
        self.0.get(id)
    }

    pub fn contains(&self, id: &RequirementId) -> bool {
        self.0.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Requirement> {
        self.0.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &RequirementId> {
        self.0.keys()
    }

    /// Inserts a requirement as-is. Used for seeding a baseline from configuration;
    /// all later mutation goes through [`apply_delta`].
    pub fn insert(&mut self, requirement: Requirement) -> Option<Requirement> {
        self.0.insert(requirement.id.clone(), requirement)
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for requirement in self.0.values() {
            requirement.push_canonical(&mut out);
        }
        out
    }
}

impl FromIterator<Requirement> for Baseline {
    fn from_iter<I: IntoIterator<Item = Requirement>>(iter: I) -> Self {
        Baseline(iter.into_iter().map(|r| (r.id.clone(), r)).collect())
    }
}

pub fn baseline_hash(baseline: &Baseline) -> Digest {
    Digest::of(&baseline.canonical_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LinkKind {
    DependsOn,
    Refines,
    DerivedFrom,
    Conflicts,
}

impl LinkKind {
    /// Whether a change to the link's target propagates to its source.
    pub fn propagates_impact(self) -> bool {
        !matches!(self, LinkKind::Conflicts)
    }
}

/// Directed typed edge: `from` depends on / refines / derives from / conflicts with `to`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TraceLink {
    pub from: RequirementId,
    pub to: RequirementId,
    pub kind: LinkKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Stakeholder,
    ChangeRequestManager,
    ProjectManager,
    CcbMember,
    SiteLead,
    QaManager,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Stakeholder,
        Role::ChangeRequestManager,
        Role::ProjectManager,
        Role::CcbMember,
        Role::SiteLead,
        Role::QaManager,
    ];
}

fn default_stakeholder_weight() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: ActorId,
    pub role: Role,
    pub site: SiteId,
    #[serde(default = "default_stakeholder_weight")]
    pub stakeholder_weight: f64,
}

impl Actor {
    pub fn new(id: ActorId, role: Role, site: SiteId) -> Self {
        Actor { id, role, site, stakeholder_weight: default_stakeholder_weight() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeltaOp {
    Add,
    Modify,
    Deprecate,
}

/// One edit to a baseline. Payload fields are optional: `Add` needs at least an
/// effort and an owner site, `Modify` replaces whichever fields are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequirementDelta {
    pub op: DeltaOp,
    pub requirement_id: RequirementId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub new_effort: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner_site: Option<SiteId>,
}

impl RequirementDelta {
    fn bare(op: DeltaOp, requirement_id: RequirementId) -> Self {
        RequirementDelta {
            op,
            requirement_id,
            new_title: None,
            new_text: None,
            new_effort: None,
            owner_site: None,
        }
    }

    pub fn add(
        id: RequirementId,
        title: impl Into<String>,
        text: impl Into<String>,
        effort: f64,
        owner_site: SiteId,
    ) -> Self {
        RequirementDelta {
            new_title: Some(title.into()),
            new_text: Some(text.into()),
            new_effort: Some(effort),
            owner_site: Some(owner_site),
            ..Self::bare(DeltaOp::Add, id)
        }
    }

    pub fn modify_text(id: RequirementId, text: impl Into<String>) -> Self {
        RequirementDelta { new_text: Some(text.into()), ..Self::bare(DeltaOp::Modify, id) }
    }

    pub fn modify(id: RequirementId) -> Self {
        Self::bare(DeltaOp::Modify, id)
    }

    pub fn deprecate(id: RequirementId) -> Self {
        Self::bare(DeltaOp::Deprecate, id)
    }

    pub fn with_effort(mut self, effort: f64) -> Self {
        self.new_effort = Some(effort);
        self
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.new_title = Some(title.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum DeltaError {
    #[error("requirement {0} is not in the baseline")]
    MissingRequirement(RequirementId),
    #[error("requirement {0} is already in the baseline")]
    DuplicateRequirement(RequirementId),
    #[error("requirement {0} is deprecated and can no longer change")]
    DeprecatedRequirement(RequirementId),
    #[error("delta for {id} is invalid: {reason}")]
    InvalidDelta { id: RequirementId, reason: String },
}

impl DeltaError {
    pub fn code(&self) -> &'static str {
        match self {
            DeltaError::MissingRequirement(_) => "MissingRequirement",
            DeltaError::DuplicateRequirement(_) => "DuplicateRequirement",
            DeltaError::DeprecatedRequirement(_) => "DeprecatedRequirement",
            DeltaError::InvalidDelta { .. } => "InvalidDelta",
        }
    }
}

/// Applies one delta, returning the new baseline. Only the targeted entry changes.
pub fn apply_delta(baseline: &Baseline, delta: &RequirementDelta) -> Result<Baseline, DeltaError> {
    let mut next = baseline.clone();
    apply_delta_in_place(&mut next, delta)?;
    Ok(next)
}

/// In-place form of [`apply_delta`]; on error the baseline is left untouched.
pub fn apply_delta_in_place(
    baseline: &mut Baseline,
    delta: &RequirementDelta,
) -> Result<(), DeltaError> {
    let id = &delta.requirement_id;
    let invalid = |reason: &str| DeltaError::InvalidDelta { id: id.clone(), reason: reason.into() };
    if let Some(effort) = delta.new_effort {
        if !valid_effort(effort) {
            return Err(invalid("effort must be a finite number of person-hours > 0"));
        }
    }
    match delta.op {
        DeltaOp::Add => {
            if baseline.contains(id) {
                return Err(DeltaError::DuplicateRequirement(id.clone()));
            }
            let effort = delta.new_effort.ok_or_else(|| invalid("Add requires an effort"))?;
            let owner_site =
                delta.owner_site.clone().ok_or_else(|| invalid("Add requires an owner site"))?;
            baseline.insert(Requirement {
                id: id.clone(),
                title: delta.new_title.clone().unwrap_or_default(),
                text: delta.new_text.clone().unwrap_or_default(),
                version: 1,
                status: RequirementStatus::Baselined,
                effort,
                owner_site,
            });
        }
        DeltaOp::Modify | DeltaOp::Deprecate => {
            let current = baseline
                .0
                .get_mut(id)
                .ok_or_else(|| DeltaError::MissingRequirement(id.clone()))?;
            if current.status == RequirementStatus::Deprecated {
                return Err(DeltaError::DeprecatedRequirement(id.clone()));
            }
            current.version += 1;
            if delta.op == DeltaOp::Deprecate {
                current.status = RequirementStatus::Deprecated;
            } else {
                if let Some(title) = &delta.new_title {
                    current.title = title.clone();
                }
                if let Some(text) = &delta.new_text {
                    current.text = text.clone();
                }
                if let Some(effort) = delta.new_effort {
                    current.effort = effort;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: SiteId,
    pub utc_offset_minutes: i32,
    pub daily_capacity: f64,
    pub applied_seq: u64,
    pub baseline: Baseline,
}

impl Site {
    pub fn new(id: SiteId, utc_offset_minutes: i32, daily_capacity: f64, baseline: Baseline) -> Self {
        Site { id, utc_offset_minutes, daily_capacity, applied_seq: 0, baseline }
    }

    pub fn baseline_hash(&self) -> Digest {
        baseline_hash(&self.baseline)
    }
}

pub const MIN_UTC_OFFSET_MINUTES: i32 = -720;
pub const MAX_UTC_OFFSET_MINUTES: i32 = 840;

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rid(s: &str) -> RequirementId {
        RequirementId::new(s).unwrap()
    }

    fn site() -> SiteId {
        SiteId::new("lahore").unwrap()
    }

    fn req(id: &str, version: u64, text: &str) -> Requirement {
        Requirement {
            id: rid(id),
            title: format!("title {id}"),
            text: text.into(),
            version,
            status: RequirementStatus::Baselined,
            effort: 4.0,
            owner_site: site(),
        }
    }

    #[test]
    fn ids_reject_empty_and_whitespace() {
        assert_eq!(RequirementId::new(""), Err(IdError::Empty));
        assert!(RequirementId::new("R 1").is_err());
        assert!(SiteId::new("a->b").is_err());
        assert!(RequirementId::new("R-1").is_ok());
        assert!(serde_json::from_str::<ActorId>("\"\"").is_err());
    }

    #[test]
    fn empty_baseline_hash_is_golden_constant() {
        assert_eq!(baseline_hash(&Baseline::new()).as_str(), EMPTY_BASELINE_DIGEST);
    }

    #[test]
    fn canonical_form_is_length_prefixed() {
        let baseline: Baseline = [req("R1", 2, "a,b")].into_iter().collect();
        let bytes = String::from_utf8(baseline.canonical_bytes()).unwrap();
        assert_eq!(
            bytes,
            format!("2:R1,1:2,8:title R1,3:a,b,9:Baselined,16:{:016x},", 4.0f64.to_bits())
        );
    }

    #[test]
    fn version_bump_changes_hash() {
        let v1: Baseline = [req("R1", 1, "same")].into_iter().collect();
        let v2: Baseline = [req("R1", 2, "same")].into_iter().collect();
        let h1 = Digest::of(&v1.canonical_bytes());
        let h2 = Digest::of(&v2.canonical_bytes());
        assert_ne!(h1, h2);
        assert_eq!(baseline_hash(&v1), h1);
    }

    #[test]
    fn add_to_empty_baseline() {
        let delta = RequirementDelta::add(rid("R9"), "t", "x", 3.0, site());
        let next = apply_delta(&Baseline::new(), &delta).unwrap();
        assert_eq!(next.len(), 1);
        let added = next.get(&rid("R9")).unwrap();
        assert_eq!(added.version, 1);
        assert_eq!(added.status, RequirementStatus::Baselined);
    }

    #[test]
    fn add_requires_effort_and_owner() {
        let mut delta = RequirementDelta::add(rid("R9"), "t", "x", 3.0, site());
        delta.new_effort = None;
        assert!(matches!(
            apply_delta(&Baseline::new(), &delta),
            Err(DeltaError::InvalidDelta { .. })
        ));
        let mut delta = RequirementDelta::add(rid("R9"), "t", "x", 3.0, site());
        delta.owner_site = None;
        assert!(apply_delta(&Baseline::new(), &delta).is_err());
        let bad = RequirementDelta::add(rid("R9"), "t", "x", -1.0, site());
        assert!(apply_delta(&Baseline::new(), &bad).is_err());
    }

    #[test]
    fn modify_matches_copy_and_patch_oracle() {
        let base: Baseline =
            [req("R1", 3, "old"), req("R2", 7, "other")].into_iter().collect();
        let next = apply_delta(&base, &RequirementDelta::modify_text(rid("R1"), "new")).unwrap();

        // oracle: copy the map by hand and patch the single entry
        let mut expected = BTreeMap::new();
        for r in base.iter() {
            expected.insert(r.id.clone(), r.clone());
        }
        let patched = expected.get_mut(&rid("R1")).unwrap();
        patched.version = 4;
        patched.text = "new".into();
        let expected: Baseline = expected.into_values().collect();

        assert_eq!(next, expected);
        assert_eq!(next.get(&rid("R1")).unwrap().version, 4);
        assert_eq!(next.get(&rid("R2")).unwrap().version, 7);
    }

    #[test]
    fn delta_preconditions() {
        let base: Baseline = [req("R1", 1, "x")].into_iter().collect();
        assert_eq!(
            apply_delta(&base, &RequirementDelta::deprecate(rid("R7"))),
            Err(DeltaError::MissingRequirement(rid("R7")))
        );
        assert_eq!(
            apply_delta(&base, &RequirementDelta::add(rid("R1"), "", "", 1.0, site())),
            Err(DeltaError::DuplicateRequirement(rid("R1")))
        );
        let gone = apply_delta(&base, &RequirementDelta::deprecate(rid("R1"))).unwrap();
        assert_eq!(gone.get(&rid("R1")).unwrap().status, RequirementStatus::Deprecated);
        assert_eq!(gone.get(&rid("R1")).unwrap().version, 2);
        assert_eq!(
            apply_delta(&gone, &RequirementDelta::modify_text(rid("R1"), "back")),
            Err(DeltaError::DeprecatedRequirement(rid("R1")))
        );
    }

    fn arb_requirement() -> impl Strategy<Value = Requirement> {
        ("R[0-9]{1,2}", 1u64..5, "[a-z ]{0,6}", 0.5f64..40.0).prop_map(|(id, version, text, effort)| {
            Requirement {
                id: rid(&id),
                title: "t".into(),
                text,
                version,
                status: RequirementStatus::Baselined,
                effort,
                owner_site: site(),
            }
        })
    }

    fn arb_delta(ids: Vec<RequirementId>) -> impl Strategy<Value = RequirementDelta> {
        let existing = proptest::sample::select(ids);
        prop_oneof![
            existing.clone().prop_map(|id| RequirementDelta::modify_text(id, "changed")),
            existing.clone().prop_map(RequirementDelta::modify),
            existing.prop_map(RequirementDelta::deprecate),
            Just(RequirementDelta::add(rid("NEW"), "n", "n", 2.0, site())),
        ]
    }

    proptest! {
        #[test]
        fn hash_is_insertion_order_independent(
            (ordered, shuffled) in proptest::collection::btree_map("R[0-9]{1,2}", arb_requirement(), 0..12)
                .prop_flat_map(|m| {
                    let reqs: Vec<Requirement> = m
                        .into_iter()
                        .map(|(id, r)| Requirement { id: rid(&id), ..r })
                        .collect();
                    (Just(reqs.clone()), Just(reqs).prop_shuffle())
                })
        ) {
            let a: Baseline = ordered.into_iter().collect();
            let b: Baseline = shuffled.into_iter().collect();
            prop_assert_eq!(baseline_hash(&a), baseline_hash(&b));
        }

        #[test]
        fn legal_delta_changes_hash_and_only_its_target(
            (base, delta) in proptest::collection::vec(arb_requirement(), 1..10)
                .prop_flat_map(|reqs| {
                    let base: Baseline = reqs.into_iter().collect();
                    let ids: Vec<_> = base.ids().cloned().collect();
                    (Just(base), arb_delta(ids))
                })
        ) {
            if let Ok(next) = apply_delta(&base, &delta) {
                prop_assert_ne!(baseline_hash(&next), baseline_hash(&base));
                for r in base.iter().filter(|r| r.id != delta.requirement_id) {
                    prop_assert_eq!(next.get(&r.id).unwrap(), r);
                }
            }
        }
    }
}
