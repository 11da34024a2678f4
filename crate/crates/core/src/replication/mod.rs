//! Multi-site propagation of approved change sets.
//!
//! One coordinator site owns the global, dense change-set sequence. Remote
//! sites apply change sets strictly in sequence order, buffering anything
//! that arrives early, and acknowledge each applied sequence number with the
//! hash of their baseline after applying it. A change is verified once every
//! remote site has acknowledged it with the hash the coordinator expected.

mod cluster;
pub mod fault;
pub mod harness;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cluster::{Cluster, CommitOutcome, SiteStatus, StepReport};
pub use fault::{parse_fault_script, render_fault_script, FaultKind, FaultRule};
pub use harness::{HarnessConfig, NetworkHarness, TraceEvent, TraceRecord, Transport};

use crate::domain::{
    apply_delta_in_place, baseline_hash, Baseline, ChangeRequestId, DeltaError, Digest, RequirementDelta,
    Site, SiteId,
};
use crate::workflow::{validate_deltas, ChangeRequest, CrState, DeltaFailure};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeSet {
    pub seq: u64,
    pub cr_id: ChangeRequestId,
    pub deltas: Vec<RequirementDelta>,
    /// Coordinator baseline hash once these deltas are applied.
    pub expected_hash: Digest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Propagate,
    Ack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMessage {
    pub kind: MessageKind,
    pub seq: u64,
    pub from: SiteId,
    pub to: SiteId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub payload: Option<ChangeSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ack_hash: Option<Digest>,
}

// Change-set payloads hold only finite efforts, so equality is total.
impl Eq for SyncMessage {}

impl SyncMessage {
    pub fn propagate(change_set: ChangeSet, from: SiteId, to: SiteId) -> Self {
        SyncMessage {
            kind: MessageKind::Propagate,
            seq: change_set.seq,
            from,
            to,
            payload: Some(change_set),
            ack_hash: None,
        }
    }

    pub fn ack(seq: u64, from: SiteId, to: SiteId, hash: Digest) -> Self {
        SyncMessage { kind: MessageKind::Ack, seq, from, to, payload: None, ack_hash: Some(hash) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationStatus {
    pub cr_id: ChangeRequestId,
    pub seq: u64,
    pub acked_sites: BTreeSet<SiteId>,
    pub required_sites: BTreeSet<SiteId>,
    pub hashes_match: bool,
    pub complete: bool,
}

impl VerificationStatus {
    pub fn missing_sites(&self) -> Vec<SiteId> {
        self.required_sites.difference(&self.acked_sites).cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReplicationError {
    #[error("change request {cr_id} is {}, change sets are built only while Implementing", state.name())]
    IllegalState { cr_id: ChangeRequestId, state: CrState },
    #[error("{} delta(s) failed validation against the coordinator baseline", failures.len())]
    ValidationFailed { failures: Vec<DeltaFailure> },
    #[error("site {site} could not apply change set {seq}: {error}")]
    ApplyFailed { site: SiteId, seq: u64, error: DeltaError },
    #[error("site {site} is quarantined after a failed apply")]
    Quarantined { site: SiteId },
    #[error("site {site} acknowledged change set {seq} with {got}, expected {expected}")]
    HashMismatch { site: SiteId, seq: u64, expected: Digest, got: Digest },
    #[error("expected a propagate message, got {0:?}")]
    NotPropagate(MessageKind),
    #[error("unknown site {0}")]
    UnknownSite(SiteId),
    #[error("no change set with sequence {0}")]
    UnknownChangeSet(u64),
    #[error("change set {got} is out of sequence, expected {expected}")]
    OutOfSequence { expected: u64, got: u64 },
}

impl ReplicationError {
    pub fn code(&self) -> &'static str {
        match self {
            ReplicationError::IllegalState { .. } => "IllegalState",
            ReplicationError::ValidationFailed { .. } => "ValidationFailed",
            ReplicationError::ApplyFailed { .. } => "ApplyFailed",
            ReplicationError::Quarantined { .. } => "Quarantined",
            ReplicationError::HashMismatch { .. } => "HashMismatch",
            ReplicationError::NotPropagate(_) => "NotPropagate",
            ReplicationError::UnknownSite(_) => "UnknownSite",
            ReplicationError::UnknownChangeSet(_) => "UnknownChangeSet",
            ReplicationError::OutOfSequence { .. } => "OutOfSequence",
        }
    }
}

/// Builds the change set for `cr` without mutating anything. The caller
/// supplies the next sequence number and commits the set separately.
pub fn build_change_set(
    cr: &ChangeRequest,
    coordinator: &Site,
    seq: u64,
) -> Result<ChangeSet, ReplicationError> {
    if cr.state != CrState::Implementing || cr.deltas.is_empty() {
        return Err(ReplicationError::IllegalState { cr_id: cr.id.clone(), state: cr.state });
    }
    change_set_for(&cr.id, &cr.deltas, &coordinator.baseline, seq)
}

/// State-agnostic core of [`build_change_set`]: validates `deltas` against
/// the coordinator baseline and hashes the result.
pub fn change_set_for(
    cr_id: &ChangeRequestId,
    deltas: &[RequirementDelta],
    baseline: &Baseline,
    seq: u64,
) -> Result<ChangeSet, ReplicationError> {
    let after = validate_deltas(deltas, baseline)
        .map_err(|failures| ReplicationError::ValidationFailed { failures })?;
    Ok(ChangeSet { seq, cr_id: cr_id.clone(), deltas: deltas.to_vec(), expected_hash: baseline_hash(&after) })
}

/// Enqueues one propagate message per remote site.
pub fn propagate<T: Transport>(
    change_set: &ChangeSet,
    coordinator: &SiteId,
    remotes: &[SiteId],
    transport: &mut T,
) -> usize {
    for site in remotes.iter().filter(|s| *s != coordinator) {
        transport.send(SyncMessage::propagate(change_set.clone(), coordinator.clone(), site.clone()));
    }
    remotes.iter().filter(|s| *s != coordinator).count()
}

/// A remote site plus the bookkeeping it needs to apply change sets in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replica {
    pub site: Site,
    pub buffered: BTreeMap<u64, ChangeSet>,
    /// Baseline hash right after each applied sequence number, for re-acks.
    pub applied_hashes: BTreeMap<u64, Digest>,
    pub quarantined: bool,
}

impl Replica {
    pub fn new(site: Site) -> Self {
        Replica { site, buffered: BTreeMap::new(), applied_hashes: BTreeMap::new(), quarantined: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApplyOutcome {
    /// Applied this and `cascaded` previously buffered change sets.
    Applied { cascaded: usize },
    Buffered,
    DuplicateIgnored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplyReport {
    pub outcome: ApplyOutcome,
    pub acks: Vec<SyncMessage>,
}

fn apply_one(replica: &mut Replica, change_set: &ChangeSet) -> Result<Digest, ReplicationError> {
    let mut scratch = replica.site.baseline.clone();
    for delta in &change_set.deltas {
        apply_delta_in_place(&mut scratch, delta).map_err(|error| {
            replica.quarantined = true;
            ReplicationError::ApplyFailed {
                site: replica.site.id.clone(),
                seq: change_set.seq,
                error,
            }
        })?;
    }
    replica.site.baseline = scratch;
    replica.site.applied_seq = change_set.seq;
    let hash = replica.site.baseline_hash();
    replica.applied_hashes.insert(change_set.seq, hash.clone());
    Ok(hash)
}

/// Applies one propagate message at a remote site.
pub fn apply_change_set(replica: &mut Replica, msg: &SyncMessage) -> Result<ApplyReport, ReplicationError> {
    if msg.kind != MessageKind::Propagate {
        return Err(ReplicationError::NotPropagate(msg.kind));
    }
    if replica.quarantined {
        return Err(ReplicationError::Quarantined { site: replica.site.id.clone() });
    }
    let Some(change_set) = &msg.payload else {
        return Err(ReplicationError::NotPropagate(msg.kind));
    };
    let ack = |seq: u64, hash: Digest, replica: &Replica| {
        SyncMessage::ack(seq, replica.site.id.clone(), msg.from.clone(), hash)
    };
    let applied = replica.site.applied_seq;
    if change_set.seq <= applied {
        let acks = replica
            .applied_hashes
            .get(&change_set.seq)
            .map(|hash| vec![ack(change_set.seq, hash.clone(), replica)])
            .unwrap_or_default();
        return Ok(ApplyReport { outcome: ApplyOutcome::DuplicateIgnored, acks });
    }
    if change_set.seq > applied + 1 {
        replica.buffered.entry(change_set.seq).or_insert_with(|| change_set.clone());
        return Ok(ApplyReport { outcome: ApplyOutcome::Buffered, acks: Vec::new() });
    }

    let hash = apply_one(replica, change_set)?;
    let mut acks = vec![ack(change_set.seq, hash, replica)];
    let mut cascaded = 0;
    replica.buffered.retain(|&seq, _| seq > change_set.seq);
    while let Some(next) = replica.buffered.remove(&(replica.site.applied_seq + 1)) {
        let hash = apply_one(replica, &next)?;
        acks.push(ack(next.seq, hash, replica));
        cascaded += 1;
    }
    Ok(ApplyReport { outcome: ApplyOutcome::Applied { cascaded }, acks })
}

/// Verification of one change set from the acknowledgements received for its
/// sequence number. Acks from sites outside `required` are ignored.
pub fn verification_status(
    expected: &ChangeSet,
    acks: &[(SiteId, Digest)],
    required: &BTreeSet<SiteId>,
) -> Result<VerificationStatus, ReplicationError> {
    let mut acked_sites = BTreeSet::new();
    for (site, digest) in acks.iter().filter(|(s, _)| required.contains(s)) {
        if digest != &expected.expected_hash {
            return Err(ReplicationError::HashMismatch {
                site: site.clone(),
                seq: expected.seq,
                expected: expected.expected_hash.clone(),
                got: digest.clone(),
            });
        }
        acked_sites.insert(site.clone());
    }
    let complete = &acked_sites == required;
    Ok(VerificationStatus {
        cr_id: expected.cr_id.clone(),
        seq: expected.seq,
        acked_sites,
        required_sites: required.clone(),
        hashes_match: true,
        complete,
    })
}
