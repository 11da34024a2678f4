//! Tick-driven simulated network.
//!
//! Messages are scheduled for delivery `base_latency + U[0, jitter]` ticks
//! after they are sent, the jitter drawn from a seeded ChaCha stream. Fault
//! rules are consulted, in declaration order, at the moment a message falls
//! due. All state is plain data, so two harnesses built from the same seed and
//! driven by the same calls produce identical traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fault::{FaultKind, FaultRule};
use super::{MessageKind, SyncMessage};
use crate::domain::{Digest, SiteId};

/// What the cluster needs from a network. Only the simulated harness ships.
pub trait Transport {
    fn send(&mut self, msg: SyncMessage);
    /// Advances time by one tick and returns what arrived.
    fn poll(&mut self) -> Vec<SyncMessage>;
    fn now(&self) -> u64;
    /// True when nothing is in flight.
    fn idle(&self) -> bool;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub seed: u64,
    /// Minimum latency in ticks; at least 1 so that nothing arrives in the tick it was sent.
    pub base_latency: u64,
    #[serde(default)]
    pub jitter: u64,
    /// Ticks the coordinator waits for an acknowledgement before resending; 0 disables.
    #[serde(default)]
    pub retry_ticks: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig { seed: 0, base_latency: 1, jitter: 0, retry_ticks: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InFlight {
    pub deliver_at: u64,
    order: u64,
    pub msg: SyncMessage,
    /// Rules (by index) that already acted on this message and must not again.
    spent: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEvent {
    Send,
    Deliver,
    Drop,
    Partitioned,
    Delay,
    Duplicate,
    Corrupt,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u64,
    pub event: TraceEvent,
    pub kind: MessageKind,
    pub seq: u64,
    pub from: SiteId,
    pub to: SiteId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rule: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkHarness {
    clock: u64,
    in_flight: Vec<InFlight>,
    faults: Vec<FaultRule>,
    fault_uses: Vec<u64>,
    config: HarnessConfig,
    rng: ChaCha8Rng,
    next_order: u64,
    trace: Vec<TraceRecord>,
}

impl NetworkHarness {
    pub fn new(config: HarnessConfig, faults: Vec<FaultRule>) -> Self {
        NetworkHarness {
            clock: 0,
            in_flight: Vec::new(),
            fault_uses: vec![0; faults.len()],
            faults,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            next_order: 0,
            trace: Vec::new(),
        }
    }

    pub fn config(&self) -> &HarnessConfig {
        &self.config
    }

    pub fn faults(&self) -> &[FaultRule] {
        &self.faults
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn in_flight(&self) -> &[InFlight] {
        &self.in_flight
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Trace as newline-delimited JSON, one record per line.
    pub fn export_trace(&self) -> String {
        self.trace
            .iter()
            .map(|r| serde_json::to_string(r).expect("trace records serialize") + "\n")
            .collect()
    }

    pub fn delivered_count(&self) -> usize {
        self.trace.iter().filter(|r| r.event == TraceEvent::Deliver).count()
    }

    fn record(&mut self, event: TraceEvent, msg: &SyncMessage, rule: Option<usize>) {
        self.trace.push(TraceRecord {
            tick: self.clock,
            event,
            kind: msg.kind,
            seq: msg.seq,
            from: msg.from.clone(),
            to: msg.to.clone(),
            rule,
        });
    }

    fn schedule(&mut self, deliver_at: u64, msg: SyncMessage, spent: Vec<usize>) {
        let order = self.next_order;
        self.next_order += 1;
        self.in_flight.push(InFlight { deliver_at, order, msg, spent });
    }

    fn under_cap(&self, index: usize) -> bool {
        let cap = self.faults[index].param;
        cap == 0 || self.fault_uses[index] < cap
    }

    /// Runs the fault rules over one due message. Returns it if it is to be
    /// delivered now.
    fn filter(&mut self, mut item: InFlight) -> Option<SyncMessage> {
        for index in 0..self.faults.len() {
            if item.spent.contains(&index) || !self.faults[index].matcher.matches(&item.msg) {
                continue;
            }
            let rule = &self.faults[index];
            match rule.kind {
                FaultKind::Partition => {
                    if self.clock < rule.param {
                        self.record(TraceEvent::Partitioned, &item.msg, Some(index));
                        return None;
                    }
                }
                FaultKind::Drop => {
                    if self.under_cap(index) {
                        self.fault_uses[index] += 1;
                        self.record(TraceEvent::Drop, &item.msg, Some(index));
                        return None;
                    }
                }
                FaultKind::Delay => {
                    let at = self.clock + rule.param.max(1);
                    self.record(TraceEvent::Delay, &item.msg, Some(index));
                    item.spent.push(index);
                    self.schedule(at, item.msg, item.spent);
                    return None;
                }
                FaultKind::Duplicate => {
                    if self.under_cap(index) {
                        self.fault_uses[index] += 1;
                        item.spent.push(index);
                        self.record(TraceEvent::Duplicate, &item.msg, Some(index));
                        self.schedule(self.clock + 1, item.msg.clone(), item.spent.clone());
                    }
                }
                FaultKind::Corrupt => {
                    if item.msg.kind == MessageKind::Ack && self.under_cap(index) {
                        self.fault_uses[index] += 1;
                        item.spent.push(index);
                        if let Some(hash) = &item.msg.ack_hash {
                            item.msg.ack_hash = Some(Digest::of(format!("corrupt:{hash}").as_bytes()));
                        }
                        self.record(TraceEvent::Corrupt, &item.msg, Some(index));
                    }
                }
            }
        }
        self.record(TraceEvent::Deliver, &item.msg, None);
        Some(item.msg)
    }

    /// Advances the clock by one and delivers everything due at the new tick,
    /// in send order.
    pub fn tick(&mut self) -> Vec<SyncMessage> {
        self.clock += 1;
        let now = self.clock;
        let (mut due, rest): (Vec<_>, Vec<_>) =
            std::mem::take(&mut self.in_flight).into_iter().partition(|m| m.deliver_at <= now);
        self.in_flight = rest;
        due.sort_by_key(|m| m.order);
        due.into_iter().filter_map(|item| self.filter(item)).collect()
    }
}

impl Transport for NetworkHarness {
    fn send(&mut self, msg: SyncMessage) {
        let jitter = if self.config.jitter == 0 { 0 } else { self.rng.random_range(0..=self.config.jitter) };
        let at = self.clock + self.config.base_latency.max(1) + jitter;
        self.record(TraceEvent::Send, &msg, None);
        self.schedule(at, msg, Vec::new());
    }

    fn poll(&mut self) -> Vec<SyncMessage> {
        self.tick()
    }

    fn now(&self) -> u64 {
        self.clock
    }

    fn idle(&self) -> bool {
        self.in_flight.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replication::fault::parse_fault_script;

    fn site(s: &str) -> SiteId {
        SiteId::new(s).unwrap()
    }

    fn ack(seq: u64, from: &str) -> SyncMessage {
        SyncMessage::ack(seq, site(from), site("hq"), Digest::of(b"x"))
    }

    fn harness(latency: u64, script: &str) -> NetworkHarness {
        NetworkHarness::new(
            HarnessConfig { seed: 7, base_latency: latency, jitter: 0, retry_ticks: 0 },
            parse_fault_script(script).unwrap(),
        )
    }

    #[test]
    fn empty_tick_advances_clock() {
        let mut h = harness(1, "");
        assert!(h.tick().is_empty());
        assert_eq!(h.clock(), 1);
    }

    #[test]
    fn delivers_exactly_on_due_tick() {
        let mut h = harness(5, "");
        h.send(ack(1, "a"));
        for _ in 0..4 {
            assert!(h.tick().is_empty());
        }
        assert_eq!(h.clock(), 4);
        assert_eq!(h.tick(), vec![ack(1, "a")]);
        assert!(h.idle());
    }

    #[test]
    fn drop_cap_and_partition() {
        let mut h = harness(1, "drop a->hq 1\npartition b<->* 3");
        h.send(ack(1, "a"));
        h.send(ack(2, "a"));
        h.send(ack(1, "b"));
        assert_eq!(h.tick(), vec![ack(2, "a")]);
        h.send(ack(3, "b"));
        assert!(h.tick().is_empty());
        h.send(ack(4, "b"));
        assert_eq!(h.tick(), vec![ack(4, "b")]);
    }

    #[test]
    fn delay_and_duplicate_apply_once() {
        let mut h = harness(1, "delay a->hq 2\nduplicate a->hq 0");
        h.send(ack(1, "a"));
        assert!(h.tick().is_empty());
        assert!(h.tick().is_empty());
        assert_eq!(h.tick(), vec![ack(1, "a")]);
        assert_eq!(h.tick(), vec![ack(1, "a")]);
        assert!(h.tick().is_empty());
        assert!(h.idle());
    }

    #[test]
    fn corrupt_changes_ack_digest() {
        let mut h = harness(1, "corrupt *->hq:ack 1");
        h.send(ack(1, "a"));
        h.send(ack(1, "b"));
        let got = h.tick();
        assert_ne!(got[0].ack_hash, ack(1, "a").ack_hash);
        assert_eq!(got[1], ack(1, "b"));
    }

    #[test]
    fn same_seed_same_trace() {
        let run = || {
            let mut h = NetworkHarness::new(
                HarnessConfig { seed: 42, base_latency: 1, jitter: 4, retry_ticks: 0 },
                Vec::new(),
            );
            for i in 0..20 {
                h.send(ack(i, "a"));
            }
            while !h.idle() {
                h.tick();
            }
            h.export_trace()
        };
        assert_eq!(run(), run());
        assert_eq!(run().lines().filter(|l| l.contains("\"deliver\"")).count(), 20);
    }
}
