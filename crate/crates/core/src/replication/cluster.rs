use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::harness::{NetworkHarness, Transport};
use super::{
    apply_change_set, build_change_set, propagate, verification_status, ChangeSet, MessageKind,
    Replica, ReplicationError, SyncMessage, VerificationStatus,
};
use crate::domain::{apply_delta_in_place, Digest, Site, SiteId};
use crate::workflow::ChangeRequest;

/// The coordinator, its remote replicas and the network between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster<T = NetworkHarness> {
    coordinator: Site,
    replicas: BTreeMap<SiteId, Replica>,
    transport: T,
    retry_ticks: u64,
    change_sets: BTreeMap<u64, ChangeSet>,
    acks: BTreeMap<u64, BTreeMap<SiteId, Digest>>,
    /// Unacknowledged (seq, site) pairs and the tick they were last sent at.
    outstanding: BTreeMap<(u64, SiteId), u64>,
    /// Committed change sets held back until the listed sequences verify.
    deferred: Vec<(u64, Vec<u64>)>,
    divergent: BTreeMap<SiteId, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub tick: u64,
    pub delivered: usize,
    pub retried: usize,
    pub released: Vec<u64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteStatus {
    pub id: SiteId,
    pub coordinator: bool,
    pub utc_offset_minutes: i32,
    pub daily_capacity: f64,
    pub applied_seq: u64,
    pub baseline_hash: Digest,
    pub buffered: Vec<u64>,
    pub quarantined: bool,
    pub divergent_at: Option<u64>,
    /// Sequence numbers this site has not acknowledged yet.
    pub pending_acks: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitOutcome {
    pub enqueued: usize,
    pub deferred: bool,
}

impl<T: Transport> Cluster<T> {
    pub fn new(coordinator: Site, remotes: Vec<Site>, transport: T, retry_ticks: u64) -> Self {
        Cluster {
            coordinator,
            replicas: remotes.into_iter().map(|s| (s.id.clone(), Replica::new(s))).collect(),
            transport,
            retry_ticks,
            change_sets: BTreeMap::new(),
            acks: BTreeMap::new(),
            outstanding: BTreeMap::new(),
            deferred: Vec::new(),
            divergent: BTreeMap::new(),
        }
    }

    pub fn coordinator(&self) -> &Site {
        &self.coordinator
    }

    pub fn replicas(&self) -> &BTreeMap<SiteId, Replica> {
        &self.replicas
    }

    pub fn replica_mut(&mut self, id: &SiteId) -> Option<&mut Replica> {
        self.replicas.get_mut(id)
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    pub fn change_set(&self, seq: u64) -> Option<&ChangeSet> {
        self.change_sets.get(&seq)
    }

    pub fn change_sets(&self) -> impl Iterator<Item = &ChangeSet> {
        self.change_sets.values()
    }

    /// Every site, coordinator first.
    pub fn sites(&self) -> Vec<&Site> {
        std::iter::once(&self.coordinator).chain(self.replicas.values().map(|r| &r.site)).collect()
    }

    pub fn remote_ids(&self) -> Vec<SiteId> {
        self.replicas.keys().cloned().collect()
    }

    pub fn next_seq(&self) -> u64 {
        self.coordinator.applied_seq + 1
    }

    pub fn build_change_set(&self, cr: &ChangeRequest) -> Result<ChangeSet, ReplicationError> {
        build_change_set(cr, &self.coordinator, self.next_seq())
    }

    pub fn is_deferred(&self, seq: u64) -> bool {
        self.deferred.iter().any(|(s, _)| *s == seq)
    }

    /// Applies a built change set at the coordinator and propagates it, or
    /// holds it back while any sequence in `waits_for` is unverified.
    pub fn commit(&mut self, change_set: ChangeSet, waits_for: Vec<u64>) -> Result<CommitOutcome, ReplicationError> {
        if change_set.seq != self.next_seq() {
            return Err(ReplicationError::OutOfSequence { expected: self.next_seq(), got: change_set.seq });
        }
        let mut baseline = self.coordinator.baseline.clone();
        for delta in &change_set.deltas {
            apply_delta_in_place(&mut baseline, delta).map_err(|error| ReplicationError::ApplyFailed {
                site: self.coordinator.id.clone(),
                seq: change_set.seq,
                error,
            })?;
        }
        let hash = crate::domain::baseline_hash(&baseline);
        if hash != change_set.expected_hash {
            return Err(ReplicationError::HashMismatch {
                site: self.coordinator.id.clone(),
                seq: change_set.seq,
                expected: change_set.expected_hash.clone(),
                got: hash,
            });
        }
        self.coordinator.baseline = baseline;
        self.coordinator.applied_seq = change_set.seq;
        let seq = change_set.seq;
        self.change_sets.insert(seq, change_set);

        let blocked: Vec<u64> = waits_for.into_iter().filter(|s| !self.is_verified(*s)).collect();
        if blocked.is_empty() {
            let enqueued = self.send_change_set(seq);
            Ok(CommitOutcome { enqueued, deferred: false })
        } else {
            self.deferred.push((seq, blocked));
            Ok(CommitOutcome { enqueued: 0, deferred: true })
        }
    }

    fn send_change_set(&mut self, seq: u64) -> usize {
        let change_set = &self.change_sets[&seq];
        let remotes = self.remote_ids();
        let count = propagate(change_set, &self.coordinator.id, &remotes, &mut self.transport);
        let now = self.transport.now();
        for site in remotes {
            self.outstanding.insert((seq, site), now);
        }
        count
    }

    pub fn acks_for(&self, seq: u64) -> Vec<(SiteId, Digest)> {
        self.acks
            .get(&seq)
            .map(|m| m.iter().map(|(s, d)| (s.clone(), d.clone())).collect())
            .unwrap_or_default()
    }

    pub fn verification(&self, seq: u64) -> Result<VerificationStatus, ReplicationError> {
        let expected = self.change_sets.get(&seq).ok_or(ReplicationError::UnknownChangeSet(seq))?;
        let required: BTreeSet<SiteId> = self.replicas.keys().cloned().collect();
        verification_status(expected, &self.acks_for(seq), &required)
    }

    pub fn is_verified(&self, seq: u64) -> bool {
        self.verification(seq).is_ok_and(|v| v.complete)
    }

    /// One tick: deliver, apply, acknowledge, resend overdue change sets and
    /// release deferred ones whose predecessors have verified.
    pub fn step(&mut self) -> StepReport {
        let delivered = self.transport.poll();
        let mut report = StepReport { tick: self.transport.now(), delivered: delivered.len(), ..Default::default() };
        for msg in delivered {
            self.handle(msg, &mut report);
        }

        if self.retry_ticks > 0 {
            let now = self.transport.now();
            let overdue: Vec<(u64, SiteId)> = self
                .outstanding
                .iter()
                .filter(|(_, &sent)| now.saturating_sub(sent) >= self.retry_ticks)
                .map(|(key, _)| key.clone())
                .collect();
            for (seq, site) in overdue {
                let msg = SyncMessage::propagate(self.change_sets[&seq].clone(), self.coordinator.id.clone(), site.clone());
                self.transport.send(msg);
                self.outstanding.insert((seq, site), now);
                report.retried += 1;
            }
        }

        let mut still_deferred = Vec::new();
        for (seq, waits) in std::mem::take(&mut self.deferred) {
            if waits.iter().all(|w| self.is_verified(*w)) {
                self.send_change_set(seq);
                report.released.push(seq);
            } else {
                still_deferred.push((seq, waits));
            }
        }
        self.deferred = still_deferred;
        report
    }

    fn handle(&mut self, msg: SyncMessage, report: &mut StepReport) {
        match msg.kind {
            MessageKind::Ack if msg.to == self.coordinator.id => {
                let Some(hash) = msg.ack_hash else { return };
                if let Some(cs) = self.change_sets.get(&msg.seq) {
                    if cs.expected_hash != hash {
                        self.divergent.entry(msg.from.clone()).or_insert(msg.seq);
                    }
                }
                self.outstanding.remove(&(msg.seq, msg.from.clone()));
                self.acks.entry(msg.seq).or_default().insert(msg.from, hash);
            }
            MessageKind::Propagate => {
                let Some(replica) = self.replicas.get_mut(&msg.to) else { return };
                match apply_change_set(replica, &msg) {
                    Ok(applied) => {
                        for ack in applied.acks {
                            self.transport.send(ack);
                        }
                    }
                    Err(error) => report.errors.push(error.to_string()),
                }
            }
            MessageKind::Ack => {}
        }
    }

    pub fn quiescent(&self) -> bool {
        self.transport.idle() && self.outstanding.is_empty() && self.deferred.is_empty()
    }

    /// Steps until quiescent or `max_ticks` have elapsed; true if quiescent.
    pub fn run_until_quiescent(&mut self, max_ticks: u64) -> bool {
        for _ in 0..max_ticks {
            if self.quiescent() {
                return true;
            }
            self.step();
        }
        self.quiescent()
    }

    pub fn site_status(&self) -> Vec<SiteStatus> {
        let pending = |site: &SiteId| -> Vec<u64> {
            self.outstanding.keys().filter(|(_, s)| s == site).map(|(seq, _)| *seq).collect()
        };
        let coordinator = &self.coordinator;
        let mut out = vec![SiteStatus {
            id: coordinator.id.clone(),
            coordinator: true,
            utc_offset_minutes: coordinator.utc_offset_minutes,
            daily_capacity: coordinator.daily_capacity,
            applied_seq: coordinator.applied_seq,
            baseline_hash: coordinator.baseline_hash(),
            buffered: Vec::new(),
            quarantined: false,
            divergent_at: None,
            pending_acks: Vec::new(),
        }];
        for replica in self.replicas.values() {
            let site = &replica.site;
            out.push(SiteStatus {
                id: site.id.clone(),
                coordinator: false,
                utc_offset_minutes: site.utc_offset_minutes,
                daily_capacity: site.daily_capacity,
                applied_seq: site.applied_seq,
                baseline_hash: site.baseline_hash(),
                buffered: replica.buffered.keys().copied().collect(),
                quarantined: replica.quarantined,
                divergent_at: self.divergent.get(&site.id).copied(),
                pending_acks: pending(&site.id),
            });
        }
        out
    }
}
