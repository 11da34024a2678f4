//! The service core: commands in, audit events out.
//!
//! Every command runs against a scratch copy of [`SystemState`]. Each event it
//! produces is applied to that copy as soon as it is recorded, so later steps
//! of the same command see the effect of earlier ones. Only when the whole
//! batch is durably appended does the scratch copy replace the live state; a
//! command that fails at any point leaves both the log and the state untouched.
//!
//! [`replay`] rebuilds the state from the log by running only the apply half.
//! Harness ticks are logged as a count and re-simulated; the harness is
//! seeded, so this reproduces the same deliveries.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::config::{ConfigError, SystemConfig};
use crate::domain::{Actor, ActorId, ChangeRequestId, DeltaOp, RequirementDelta, RequirementId, Role};
use crate::impact::{
    analyze, detect_conflicts, priority_score, resolve_conflict_order, to_dot, ImpactAnalysis,
    ImpactError, PendingChange, TraceGraph,
};
use crate::persistence::{
    assessment_report, chain_events, verify_chain, AssessmentReport, AuditEvent, EventDraft,
    LogStore, PersistenceError,
};
use crate::replication::{change_set_for, Cluster, NetworkHarness, ReplicationError, SiteStatus, TraceEvent};
use crate::workflow::{
    authorize, begin_implementation, ccb_cast_vote, ccb_tally, close_after_verification, decode_event,
    default_quorum, encode_event, formulate_change, pm_triage, submit_change_request,
    validate_and_generate_form, ApplyError, CcbDecision, ChangeRequest, CrEvent, CrState,
    TriageDecision, VoteDecision, WorkflowError,
};

/// Actor recorded on the genesis event.
pub const SYSTEM_ACTOR: &str = "system";

pub const KIND_INITIALIZED: &str = "system.initialized";
pub const KIND_TICKED: &str = "harness.ticked";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error(transparent)]
    Replication(#[from] ReplicationError),
    #[error(transparent)]
    Impact(#[from] ImpactError),
    #[error(transparent)]
    Persistence(#[from] PersistenceError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("the log was initialized with a different configuration")]
    ConfigMismatch,
    #[error("unknown actor {0}")]
    UnknownActor(ActorId),
    #[error("no change request {0}")]
    UnknownChangeRequest(ChangeRequestId),
    #[error("{cr_id} has no {phase} impact analysis yet")]
    ImpactUnavailable { cr_id: ChangeRequestId, phase: ImpactPhase },
    #[error("tick count must be at least 1")]
    InvalidCount,
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Workflow(e) => e.code(),
            EngineError::Replication(e) => e.code(),
            EngineError::Impact(e) => e.code(),
            EngineError::Persistence(e) => e.code(),
            EngineError::Config(_) => "InvalidConfig",
            EngineError::ConfigMismatch => "ConfigMismatch",
            EngineError::UnknownActor(_) => "UnknownActor",
            EngineError::UnknownChangeRequest(_) => "UnknownChangeRequest",
            EngineError::ImpactUnavailable { .. } => "ImpactUnavailable",
            EngineError::InvalidCount => "InvalidCount",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpactPhase {
    Preliminary,
    Final,
}

impl std::fmt::Display for ImpactPhase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImpactPhase::Preliminary => "preliminary",
            ImpactPhase::Final => "final",
        })
    }
}

/// Every kind of event the log can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum SystemEvent {
    Initialized(Box<SystemConfig>),
    Ticked { count: u64 },
    Cr(CrEvent),
}

impl SystemEvent {
    fn encode(&self) -> (String, Value) {
        match self {
            SystemEvent::Initialized(config) => {
                (KIND_INITIALIZED.into(), serde_json::to_value(config).expect("config serializes"))
            }
            SystemEvent::Ticked { count } => (KIND_TICKED.into(), serde_json::json!({ "count": count })),
            SystemEvent::Cr(event) => {
                let (kind, payload) = encode_event(event);
                (kind.into(), payload)
            }
        }
    }

    pub fn decode(event: &AuditEvent) -> Result<SystemEvent, PersistenceError> {
        let failed = |reason: String| PersistenceError::ReplayFailed {
            seq: event.seq,
            kind: event.kind.clone(),
            reason,
        };
        match event.kind.as_str() {
            KIND_INITIALIZED => serde_json::from_value(event.payload.clone())
                .map(|c| SystemEvent::Initialized(Box::new(c)))
                .map_err(|e| failed(e.to_string())),
            KIND_TICKED => {
                #[derive(Deserialize)]
                #[serde(deny_unknown_fields)]
                struct Ticked {
                    count: u64,
                }
                serde_json::from_value::<Ticked>(event.payload.clone())
                    .map(|t| SystemEvent::Ticked { count: t.count })
                    .map_err(|e| failed(e.to_string()))
            }
            kind if kind.starts_with("cr.") => match decode_event(kind, &event.payload) {
                Ok(decoded) => Ok(SystemEvent::Cr(decoded)),
                Err(e) if e.to_string().contains("unknown variant") => {
                    Err(PersistenceError::UnknownEventKind { seq: event.seq, kind: kind.into() })
                }
                Err(e) => Err(failed(e.to_string())),
            },
            kind => Err(PersistenceError::UnknownEventKind { seq: event.seq, kind: kind.into() }),
        }
    }
}

/// Everything the service knows, as rebuilt from the log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SystemState {
    config: SystemConfig,
    clock: u64,
    next_cr: u64,
    requests: BTreeMap<ChangeRequestId, ChangeRequest>,
    actors: BTreeMap<ActorId, Actor>,
    graph: TraceGraph,
    cluster: Option<Cluster>,
}

fn apply_failed(reason: impl ToString) -> String {
    reason.to_string()
}

impl SystemState {
    pub fn from_config(config: &SystemConfig) -> Result<SystemState, ConfigError> {
        config.validate()?;
        let (coordinator, remotes) = config.build_sites();
        let harness = NetworkHarness::new(config.harness.harness_config(), config.harness.fault_rules()?);
        Ok(SystemState {
            clock: 0,
            next_cr: 1,
            requests: BTreeMap::new(),
            actors: config.actors.iter().map(|a| (a.id.clone(), a.clone())).collect(),
            graph: config.trace_graph()?,
            cluster: Some(Cluster::new(coordinator, remotes, harness, config.harness.retry_ticks)),
            config: config.clone(),
        })
    }

    pub fn is_initialized(&self) -> bool {
        self.cluster.is_some()
    }

    pub fn config(&self) -> &SystemConfig {
        &self.config
    }

    /// Logical time of the latest command.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn requests(&self) -> &BTreeMap<ChangeRequestId, ChangeRequest> {
        &self.requests
    }

    pub fn request(&self, id: &ChangeRequestId) -> Result<&ChangeRequest, EngineError> {
        self.requests.get(id).ok_or_else(|| EngineError::UnknownChangeRequest(id.clone()))
    }

    pub fn actors(&self) -> &BTreeMap<ActorId, Actor> {
        &self.actors
    }

    pub fn actor(&self, id: &ActorId) -> Result<&Actor, EngineError> {
        self.actors.get(id).ok_or_else(|| EngineError::UnknownActor(id.clone()))
    }

    pub fn graph(&self) -> &TraceGraph {
        &self.graph
    }

    pub fn cluster(&self) -> Option<&Cluster> {
        self.cluster.as_ref()
    }

    fn live_cluster(&self) -> &Cluster {
        self.cluster.as_ref().expect("commands run only on an initialized state")
    }

    pub fn ccb_size(&self) -> u32 {
        self.actors.values().filter(|a| a.role == Role::CcbMember).count() as u32
    }

    pub fn site_status(&self) -> Vec<SiteStatus> {
        self.cluster.as_ref().map(Cluster::site_status).unwrap_or_default()
    }

    fn next_cr_id(&self) -> ChangeRequestId {
        ChangeRequestId::new(format!("CR-{:04}", self.next_cr)).expect("generated ids are valid")
    }

    fn analyze(&self, targets: &BTreeSet<RequirementId>) -> Result<ImpactAnalysis, EngineError> {
        let cluster = self.live_cluster();
        Ok(analyze(&self.graph, targets, &cluster.coordinator().baseline, &cluster.sites(), &self.config.cost)?)
    }

    /// Folds one event into the state.
    pub fn apply(
        &mut self,
        event: &SystemEvent,
        cr_id: Option<&ChangeRequestId>,
        at: u64,
        actor: &ActorId,
    ) -> Result<(), String> {
        match event {
            SystemEvent::Initialized(config) => {
                if self.is_initialized() {
                    return Err("state is already initialized".into());
                }
                *self = SystemState::from_config(config).map_err(apply_failed)?;
            }
            SystemEvent::Ticked { count } => {
                let cluster = self.cluster.as_mut().ok_or("tick before initialization")?;
                for _ in 0..*count {
                    cluster.step();
                }
            }
            SystemEvent::Cr(cr_event) => {
                let cr_id = cr_id.ok_or("change request event without a change request id")?;
                if let CrEvent::Submitted { .. } = cr_event {
                    if self.requests.contains_key(cr_id) || *cr_id != self.next_cr_id() {
                        return Err(format!("{cr_id} is not the next change request id"));
                    }
                    let cr = ChangeRequest::open(cr_id.clone(), cr_event, at, actor).expect("submitted event");
                    self.requests.insert(cr_id.clone(), cr);
                    self.next_cr += 1;
                } else {
                    let cr = self.requests.get_mut(cr_id).ok_or_else(|| format!("unknown {cr_id}"))?;
                    cr.apply(cr_event, at, actor).map_err(|e: ApplyError| e.to_string())?;
                }
                if let CrEvent::ImplementationStarted { change_set, waits_for } = cr_event {
                    let cluster = self.cluster.as_mut().ok_or("implementation before initialization")?;
                    cluster.commit(change_set.clone(), waits_for.clone()).map_err(apply_failed)?;
                    for delta in change_set.deltas.iter().filter(|d| d.op == DeltaOp::Add) {
                        self.graph.add_node(delta.requirement_id.clone());
                    }
                }
            }
        }
        self.clock = self.clock.max(at);
        Ok(())
    }
}

/// Rebuilds the state from a log. The empty log yields the empty state.
pub fn replay(log: &[AuditEvent]) -> Result<SystemState, PersistenceError> {
    verify_chain(log)?;
    let mut state = SystemState::default();
    for event in log {
        let decoded = SystemEvent::decode(event)?;
        state
            .apply(&decoded, event.cr_id.as_ref(), event.logical_ts, &event.actor)
            .map_err(|reason| PersistenceError::ReplayFailed { seq: event.seq, kind: event.kind.clone(), reason })?;
    }
    Ok(state)
}

/// One command in progress: a scratch state and the events recorded so far.
struct Tx {
    state: SystemState,
    at: u64,
    actor: ActorId,
    drafts: Vec<EventDraft>,
}

impl Tx {
    fn record(&mut self, cr_id: Option<&ChangeRequestId>, event: SystemEvent) -> Result<(), EngineError> {
        let (kind, payload) = event.encode();
        self.state.apply(&event, cr_id, self.at, &self.actor).map_err(|reason| {
            PersistenceError::ReplayFailed { seq: 0, kind: kind.clone(), reason }
        })?;
        self.drafts.push(EventDraft {
            logical_ts: self.at,
            actor: self.actor.clone(),
            cr_id: cr_id.cloned(),
            kind,
            payload,
        });
        Ok(())
    }

    fn record_cr(&mut self, cr_id: &ChangeRequestId, events: Vec<CrEvent>) -> Result<(), EngineError> {
        events.into_iter().try_for_each(|e| self.record(Some(cr_id), SystemEvent::Cr(e)))
    }

    /// Closes every implementing request whose change set has verified.
    fn close_verified(&mut self) -> Result<Vec<ChangeRequestId>, EngineError> {
        let cluster = self.state.live_cluster();
        let ready: Vec<(ChangeRequestId, Vec<CrEvent>)> = self
            .state
            .requests
            .values()
            .filter(|cr| cr.state == CrState::Implementing)
            .filter_map(|cr| {
                let verification = cluster.verification(cr.change_seq?).ok()?;
                let events = close_after_verification(cr, &verification).ok()?;
                Some((cr.id.clone(), events))
            })
            .collect();
        let mut closed = Vec::new();
        for (id, events) in ready {
            self.record_cr(&id, events)?;
            closed.push(id);
        }
        Ok(closed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitRequest {
    pub targets: Vec<RequirementId>,
    #[serde(default)]
    pub description: String,
    pub severity: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormulateRequest {
    pub deltas: Vec<RequirementDelta>,
    #[serde(default)]
    pub goals: Vec<String>,
    #[serde(default)]
    pub measurements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplementOutcome {
    pub cr_id: ChangeRequestId,
    pub seq: u64,
    pub deferred: bool,
    pub state: CrState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickOutcome {
    pub ticks: u64,
    pub clock: u64,
    /// Messages delivered during these ticks, as counted in the harness trace.
    pub delivered: usize,
    pub closed: Vec<ChangeRequestId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactView {
    pub cr_id: ChangeRequestId,
    pub phase: ImpactPhase,
    pub analysis: ImpactAnalysis,
}

/// The single writer: live state, the log and where it is stored.
#[derive(Debug)]
pub struct Engine<S> {
    store: S,
    log: Vec<AuditEvent>,
    state: SystemState,
}

impl<S: LogStore> Engine<S> {
    /// Replays `store`, or initializes it from `config` when it is empty. A
    /// stored log started from a different configuration is refused.
    pub fn open(config: &SystemConfig, store: S) -> Result<Self, EngineError> {
        config.validate()?;
        let log = store.load()?;
        let mut engine = Engine { store, log: Vec::new(), state: SystemState::default() };
        if log.is_empty() {
            engine.commit(SYSTEM_ACTOR, |tx| {
                tx.record(None, SystemEvent::Initialized(Box::new(config.clone())))
            })?;
            return Ok(engine);
        }
        let expected = serde_json::to_value(config).expect("config serializes");
        if log[0].kind != KIND_INITIALIZED || log[0].payload != expected {
            return Err(EngineError::ConfigMismatch);
        }
        engine.state = replay(&log)?;
        engine.log = log;
        Ok(engine)
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn log(&self) -> &[AuditEvent] {
        &self.log
    }

    pub fn store(&self) -> &S {
        &self.store
    }

    fn commit<T>(
        &mut self,
        actor: &str,
        command: impl FnOnce(&mut Tx) -> Result<T, EngineError>,
    ) -> Result<T, EngineError> {
        let actor = ActorId::new(actor).map_err(|_| EngineError::UnknownActor(ActorId::new(SYSTEM_ACTOR).unwrap()))?;
        let mut tx = Tx { state: self.state.clone(), at: self.state.clock + 1, actor, drafts: Vec::new() };
        if self.log.is_empty() {
            tx.at = 0;
        }
        let out = command(&mut tx)?;
        let events = chain_events(&self.log, tx.drafts);
        self.store.append(&events)?;
        self.log.extend(events);
        self.state = tx.state;
        Ok(out)
    }

    fn known_actor(&self, id: &ActorId) -> Result<Actor, EngineError> {
        self.state.actor(id).cloned()
    }

    pub fn submit(&mut self, actor: &ActorId, req: SubmitRequest) -> Result<ChangeRequestId, EngineError> {
        let author = self.known_actor(actor)?;
        self.commit(actor.as_str(), |tx| {
            let baseline = &tx.state.live_cluster().coordinator().baseline;
            let event = submit_change_request(
                &author,
                author.site.clone(),
                req.targets.into_iter().collect(),
                req.description,
                req.severity,
                baseline,
            )?;
            let id = tx.state.next_cr_id();
            tx.record(Some(&id), SystemEvent::Cr(event))?;
            Ok(id)
        })
    }

    pub fn formulate(&mut self, actor: &ActorId, cr_id: &ChangeRequestId, req: FormulateRequest) -> Result<(), EngineError> {
        let actor = self.known_actor(actor)?;
        self.commit(actor.id.as_str(), |tx| {
            let cr = tx.state.request(cr_id)?;
            let events = formulate_change(cr, &actor, req.deltas, req.goals, req.measurements)?;
            tx.record_cr(cr_id, events)
        })
    }

    /// Accepting runs validation and generates the form in the same command;
    /// if validation fails nothing is recorded and the request stays in review.
    pub fn triage(
        &mut self,
        actor: &ActorId,
        cr_id: &ChangeRequestId,
        decision: TriageDecision,
        rationale: String,
    ) -> Result<(), EngineError> {
        let pm = self.known_actor(actor)?;
        self.commit(pm.id.as_str(), |tx| {
            let events = pm_triage(tx.state.request(cr_id)?, &pm, decision, rationale)?;
            tx.record_cr(cr_id, events)?;
            if decision == TriageDecision::Reject {
                return Ok(());
            }
            let state = &tx.state;
            let cr = state.request(cr_id)?;
            let impact = state.analyze(&cr.targets)?;
            let author = state.actor(&cr.author)?;
            let priority = priority_score(cr.severity, author, impact.total_cost, &state.config.cost);
            let conflicts = form_conflicts(state, cr, &impact, priority)?;
            let baseline = &state.live_cluster().coordinator().baseline;
            let events = validate_and_generate_form(cr, baseline, &impact, conflicts, priority, tx.at)?;
            tx.record_cr(cr_id, events)
        })
    }

    pub fn vote(
        &mut self,
        actor: &ActorId,
        cr_id: &ChangeRequestId,
        decision: VoteDecision,
        rationale: String,
    ) -> Result<(), EngineError> {
        let member = self.known_actor(actor)?;
        self.commit(member.id.as_str(), |tx| {
            let event = ccb_cast_vote(tx.state.request(cr_id)?, &member, decision, rationale)?;
            tx.record_cr(cr_id, vec![event])
        })
    }

    pub fn tally(&mut self, actor: &ActorId, cr_id: &ChangeRequestId, quorum: Option<u32>) -> Result<CcbDecision, EngineError> {
        let member = self.known_actor(actor)?;
        self.commit(member.id.as_str(), |tx| {
            let size = tx.state.ccb_size();
            let quorum = quorum.or(tx.state.config.ccb.quorum).unwrap_or_else(|| default_quorum(size));
            let (decision, event) = ccb_tally(tx.state.request(cr_id)?, &member, quorum, size)?;
            tx.record_cr(cr_id, vec![event])?;
            Ok(decision)
        })
    }

    /// Final impact, change set and propagation. With no remote sites the
    /// request verifies and closes at once.
    pub fn implement(&mut self, actor: &ActorId, cr_id: &ChangeRequestId) -> Result<ImplementOutcome, EngineError> {
        let actor = self.known_actor(actor)?;
        self.commit(actor.id.as_str(), |tx| {
            let state = &tx.state;
            let cr = state.request(cr_id)?;
            authorize(cr, "analyze_impact", "implement", &actor)?;
            let impact = state.analyze(&cr.targets)?;
            let cluster = state.live_cluster();
            let change_set = change_set_for(&cr.id, &cr.deltas, &cluster.coordinator().baseline, cluster.next_seq())?;
            let seq = change_set.seq;
            let waits_for = unverified_conflicts(state, cr);
            let events = begin_implementation(cr, &actor, impact, change_set, waits_for)?;
            tx.record_cr(cr_id, events)?;
            tx.close_verified()?;
            Ok(ImplementOutcome {
                cr_id: cr_id.clone(),
                seq,
                deferred: tx.state.live_cluster().is_deferred(seq),
                state: tx.state.request(cr_id)?.state,
            })
        })
    }

    /// Advances the simulated network, then closes whatever has verified.
    pub fn tick(&mut self, actor: &ActorId, count: u64) -> Result<TickOutcome, EngineError> {
        let actor = self.known_actor(actor)?;
        if count == 0 {
            return Err(EngineError::InvalidCount);
        }
        self.commit(actor.id.as_str(), |tx| {
            let from = tx.state.live_cluster().transport().clock();
            tx.record(None, SystemEvent::Ticked { count })?;
            let closed = tx.close_verified()?;
            let harness = tx.state.live_cluster().transport();
            let delivered = harness
                .trace()
                .iter()
                .filter(|r| r.event == TraceEvent::Deliver && r.tick > from)
                .count();
            Ok(TickOutcome { ticks: count, clock: harness.clock(), delivered, closed })
        })
    }

    pub fn list(&self, state: Option<CrState>, limit: Option<usize>) -> Vec<&ChangeRequest> {
        self.state
            .requests
            .values()
            .filter(|cr| state.is_none_or(|s| cr.state == s))
            .take(limit.unwrap_or(usize::MAX))
            .collect()
    }

    pub fn impact(&self, cr_id: &ChangeRequestId, phase: ImpactPhase) -> Result<ImpactView, EngineError> {
        let cr = self.state.request(cr_id)?;
        let analysis = match phase {
            ImpactPhase::Preliminary => cr.form.as_ref().map(|f| f.preliminary_impact()),
            ImpactPhase::Final => cr.final_impact.clone(),
        };
        let analysis = analysis.ok_or_else(|| EngineError::ImpactUnavailable { cr_id: cr_id.clone(), phase })?;
        Ok(ImpactView { cr_id: cr_id.clone(), phase, analysis })
    }

    /// Graphviz rendering of the trace graph with the impact set highlighted.
    pub fn impact_dot(&self, cr_id: &ChangeRequestId, phase: ImpactPhase) -> Result<String, EngineError> {
        let view = self.impact(cr_id, phase)?;
        Ok(to_dot(&self.state.graph, Some(&view.analysis.affected)))
    }

    pub fn report(&self, cr_id: &ChangeRequestId) -> Result<AssessmentReport, EngineError> {
        Ok(assessment_report(&self.log, cr_id)?)
    }

    /// Re-reads the store and checks its chain.
    pub fn verify_store(&self) -> Result<usize, EngineError> {
        Ok(self.store.load()?.len())
    }

    pub fn export_trace(&self) -> String {
        self.state.cluster.as_ref().map(|c| c.transport().export_trace()).unwrap_or_default()
    }
}

/// Other open requests whose impact or targets clash with `cr`, in the order
/// they should be serialized.
fn form_conflicts(
    state: &SystemState,
    cr: &ChangeRequest,
    impact: &ImpactAnalysis,
    priority: f64,
) -> Result<Vec<ChangeRequestId>, EngineError> {
    let others: Vec<(&ChangeRequest, ImpactAnalysis, f64)> = state
        .requests
        .values()
        .filter(|o| o.id != cr.id && !o.state.is_terminal())
        .filter_map(|o| o.form.as_ref().map(|f| (o, f.preliminary_impact(), f.priority_score)))
        .collect();
    let mut pending = vec![PendingChange { id: &cr.id, targets: &cr.targets, impact }];
    pending.extend(others.iter().map(|(o, i, _)| PendingChange { id: &o.id, targets: &o.targets, impact: i }));
    let mine: Vec<_> = detect_conflicts(&pending, &state.graph).into_iter().filter(|c| c.involves(&cr.id)).collect();
    let mut scores: BTreeMap<ChangeRequestId, f64> = others.iter().map(|(o, _, s)| (o.id.clone(), *s)).collect();
    scores.insert(cr.id.clone(), priority);
    let order = resolve_conflict_order(&mine, &scores)?;
    Ok(order.into_iter().filter(|id| *id != cr.id).collect())
}

/// Sequence numbers of conflicting requests whose change sets have not
/// verified yet; this request's change set waits for them.
fn unverified_conflicts(state: &SystemState, cr: &ChangeRequest) -> Vec<u64> {
    let listed: BTreeSet<&ChangeRequestId> = cr.form.iter().flat_map(|f| &f.conflicts).collect();
    let cluster = state.live_cluster();
    let seqs: BTreeSet<u64> = state
        .requests
        .values()
        .filter(|o| o.id != cr.id)
        .filter(|o| listed.contains(&o.id) || o.form.as_ref().is_some_and(|f| f.conflicts.contains(&cr.id)))
        .filter_map(|o| o.change_seq)
        .filter(|seq| !cluster.is_verified(*seq))
        .collect();
    seqs.into_iter().collect()
}
