//! Change-request lifecycle.
//!
//! Every operation here is split in two halves. The `decide` half (the free
//! functions such as [`formulate_change`] or [`ccb_tally`]) checks state,
//! role and payload and returns the events the operation produces, without
//! touching anything. [`ChangeRequest::apply`] is the `evolve` half: it folds
//! one event into the request. The engine persists events between the two, and
//! replay runs only the second half.
//!
//! Legal edges and role guards come from [`TransitionTable::standard`].

mod table;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use table::{Guard, Transition, TransitionTable, TRANSITIONS_JSON};

use crate::domain::{
    apply_delta_in_place, Actor, ActorId, Baseline, ChangeRequestId, DeltaError, DeltaOp,
    RequirementDelta, RequirementId, Role, SiteId,
};
use crate::impact::ImpactAnalysis;
use crate::replication::{ChangeSet, VerificationStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum CrState {
    Submitted,
    Formulated,
    PmReview,
    RejectedByPm,
    Validating,
    FormGenerated,
    CcbReview,
    CcbRejected,
    Approved,
    ImpactAnalyzed,
    Implementing,
    Verifying,
    Closed,
}

impl CrState {
    pub const ALL: [CrState; 13] = [
        CrState::Submitted,
        CrState::Formulated,
        CrState::PmReview,
        CrState::RejectedByPm,
        CrState::Validating,
        CrState::FormGenerated,
        CrState::CcbReview,
        CrState::CcbRejected,
        CrState::Approved,
        CrState::ImpactAnalyzed,
        CrState::Implementing,
        CrState::Verifying,
        CrState::Closed,
    ];

    pub fn is_terminal(self) -> bool {
        matches!(self, CrState::RejectedByPm | CrState::CcbRejected | CrState::Closed)
    }

    pub fn name(self) -> &'static str {
        match self {
            CrState::Submitted => "Submitted",
            CrState::Formulated => "Formulated",
            CrState::PmReview => "PmReview",
            CrState::RejectedByPm => "RejectedByPm",
            CrState::Validating => "Validating",
            CrState::FormGenerated => "FormGenerated",
            CrState::CcbReview => "CcbReview",
            CrState::CcbRejected => "CcbRejected",
            CrState::Approved => "Approved",
            CrState::ImpactAnalyzed => "ImpactAnalyzed",
            CrState::Implementing => "Implementing",
            CrState::Verifying => "Verifying",
            CrState::Closed => "Closed",
        }
    }

    pub fn parse(name: &str) -> Option<CrState> {
        CrState::ALL.into_iter().find(|s| s.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub state: CrState,
    pub at: u64,
    pub actor: ActorId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriageDecision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PmDecision {
    pub decision: TriageDecision,
    pub pm: ActorId,
    pub rationale: String,
    pub at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VoteDecision {
    Approve,
    Reject,
    Abstain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub member: ActorId,
    pub decision: VoteDecision,
    pub rationale: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub approvals: u32,
    pub rejections: u32,
    pub abstentions: u32,
    /// One vote per member, in member id order.
    pub votes: Vec<Vote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CcbOutcome {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcbDecision {
    pub approvals: u32,
    pub rejections: u32,
    pub abstentions: u32,
    pub quorum: u32,
    pub outcome: CcbOutcome,
}

impl CcbDecision {
    /// Approved iff participation meets the quorum and approvals strictly
    /// outnumber rejections. Ties reject.
    pub fn decide(approvals: u32, rejections: u32, abstentions: u32, quorum: u32) -> CcbDecision {
        let participation = u64::from(approvals) + u64::from(rejections) + u64::from(abstentions);
        let outcome = if participation >= u64::from(quorum) && approvals > rejections {
            CcbOutcome::Approved
        } else {
            CcbOutcome::Rejected
        };
        CcbDecision { approvals, rejections, abstentions, quorum, outcome }
    }
}

/// Majority default: half the board, rounded up (at least one).
pub fn default_quorum(ccb_size: u32) -> u32 {
    ccb_size.div_ceil(2).max(1)
}

/// The document handed to the change control board.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequestForm {
    pub cr_id: ChangeRequestId,
    pub affected: BTreeMap<RequirementId, u32>,
    pub preliminary_cost: f64,
    pub schedule_days: u64,
    /// Other change requests this one conflicts with, in serialization order.
    pub conflicts: Vec<ChangeRequestId>,
    pub priority_score: f64,
    pub generated_at: u64,
}

impl ChangeRequestForm {
    pub fn preliminary_impact(&self) -> ImpactAnalysis {
        ImpactAnalysis {
            affected: self.affected.clone(),
            total_cost: self.preliminary_cost,
            schedule_days: self.schedule_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeRequest {
    pub id: ChangeRequestId,
    pub author: ActorId,
    pub origin_site: SiteId,
    pub targets: BTreeSet<RequirementId>,
    pub description: String,
    pub goals: Vec<String>,
    pub measurements: Vec<String>,
    pub deltas: Vec<RequirementDelta>,
    pub state: CrState,
    pub severity: u8,
    pub created_at: u64,
    pub history: Vec<HistoryEntry>,
    pub pm_decision: Option<PmDecision>,
    pub form: Option<ChangeRequestForm>,
    pub votes: BTreeMap<ActorId, Vote>,
    pub ccb_decision: Option<CcbDecision>,
    pub final_impact: Option<ImpactAnalysis>,
    pub change_seq: Option<u64>,
    pub verification: Option<VerificationStatus>,
}

/// Facts recorded about one change request. Each variant except `VoteCast`
/// moves the request to a new state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum CrEvent {
    #[serde(rename = "cr.submitted")]
    Submitted {
        author: ActorId,
        origin_site: SiteId,
        targets: BTreeSet<RequirementId>,
        description: String,
        severity: u8,
    },
    #[serde(rename = "cr.formulated")]
    Formulated { deltas: Vec<RequirementDelta>, goals: Vec<String>, measurements: Vec<String> },
    #[serde(rename = "cr.pm_review_opened")]
    PmReviewOpened,
    #[serde(rename = "cr.pm_accepted")]
    PmAccepted { rationale: String },
    #[serde(rename = "cr.pm_rejected")]
    PmRejected { rationale: String },
    #[serde(rename = "cr.form_generated")]
    FormGenerated { form: ChangeRequestForm },
    #[serde(rename = "cr.ccb_review_opened")]
    CcbReviewOpened,
    #[serde(rename = "cr.vote_cast")]
    VoteCast { vote: Vote },
    #[serde(rename = "cr.ccb_approved")]
    CcbApproved { decision: CcbDecision },
    #[serde(rename = "cr.ccb_rejected")]
    CcbRejected { decision: CcbDecision },
    #[serde(rename = "cr.impact_analyzed")]
    ImpactAnalyzed { impact: ImpactAnalysis },
    /// Carries the change set committed at the coordinator and the sequence
    /// numbers it must wait on before propagating.
    #[serde(rename = "cr.implementation_started")]
    ImplementationStarted { change_set: ChangeSet, waits_for: Vec<u64> },
    #[serde(rename = "cr.verification_started")]
    VerificationStarted { verification: VerificationStatus },
    #[serde(rename = "cr.closed")]
    Closed { verification: VerificationStatus },
}

impl CrEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            CrEvent::Submitted { .. } => "cr.submitted",
            CrEvent::Formulated { .. } => "cr.formulated",
            CrEvent::PmReviewOpened => "cr.pm_review_opened",
            CrEvent::PmAccepted { .. } => "cr.pm_accepted",
            CrEvent::PmRejected { .. } => "cr.pm_rejected",
            CrEvent::FormGenerated { .. } => "cr.form_generated",
            CrEvent::CcbReviewOpened => "cr.ccb_review_opened",
            CrEvent::VoteCast { .. } => "cr.vote_cast",
            CrEvent::CcbApproved { .. } => "cr.ccb_approved",
            CrEvent::CcbRejected { .. } => "cr.ccb_rejected",
            CrEvent::ImpactAnalyzed { .. } => "cr.impact_analyzed",
            CrEvent::ImplementationStarted { .. } => "cr.implementation_started",
            CrEvent::VerificationStarted { .. } => "cr.verification_started",
            CrEvent::Closed { .. } => "cr.closed",
        }
    }

    /// State the request is in after this event, if the event changes it.
    pub fn target_state(&self) -> Option<CrState> {
        Some(match self {
            CrEvent::Submitted { .. } => CrState::Submitted,
            CrEvent::Formulated { .. } => CrState::Formulated,
            CrEvent::PmReviewOpened => CrState::PmReview,
            CrEvent::PmAccepted { .. } => CrState::Validating,
            CrEvent::PmRejected { .. } => CrState::RejectedByPm,
            CrEvent::FormGenerated { .. } => CrState::FormGenerated,
            CrEvent::CcbReviewOpened => CrState::CcbReview,
            CrEvent::VoteCast { .. } => return None,
            CrEvent::CcbApproved { .. } => CrState::Approved,
            CrEvent::CcbRejected { .. } => CrState::CcbRejected,
            CrEvent::ImpactAnalyzed { .. } => CrState::ImpactAnalyzed,
            CrEvent::ImplementationStarted { .. } => CrState::Implementing,
            CrEvent::VerificationStarted { .. } => CrState::Verifying,
            CrEvent::Closed { .. } => CrState::Closed,
        })
    }
}

/// Splits an event into its log kind and payload (`null` for events without one).
pub fn encode_event(event: &CrEvent) -> (&'static str, serde_json::Value) {
    let mut value = serde_json::to_value(event).expect("events serialize");
    let payload = value.get_mut("payload").map(serde_json::Value::take).unwrap_or_default();
    (event.kind(), payload)
}

/// Inverse of [`encode_event`].
pub fn decode_event(kind: &str, payload: &serde_json::Value) -> Result<CrEvent, serde_json::Error> {
    let mut tagged = serde_json::Map::new();
    tagged.insert("kind".into(), kind.into());
    if !payload.is_null() {
        tagged.insert("payload".into(), payload.clone());
    }
    serde_json::from_value(serde_json::Value::Object(tagged))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaFailure {
    pub index: usize,
    pub requirement_id: RequirementId,
    pub error: DeltaError,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("{action} is not allowed while the change request is {}", state.name())]
    IllegalTransition { state: CrState, action: String },
    #[error("{actor} ({role:?}) may not {action}")]
    ForbiddenRole { actor: ActorId, role: Role, action: String },
    #[error("a change request needs at least one target requirement")]
    EmptyTargets,
    #[error("severity must be between 1 and 5, got {0}")]
    InvalidSeverity(u8),
    #[error("requirement {0} is not in the coordinator baseline")]
    UnknownRequirement(RequirementId),
    #[error("inconsistent delta ({requirement_id:?}): {reason}")]
    InconsistentDelta { requirement_id: Option<RequirementId>, reason: String },
    #[error("{} delta(s) failed validation", failures.len())]
    ValidationFailed { failures: Vec<DeltaFailure> },
    #[error("no votes have been cast")]
    NoVotes,
    #[error("quorum {quorum} exceeds the board size {members}")]
    QuorumUnreachable { quorum: u32, members: u32 },
    #[error("quorum must be at least 1")]
    InvalidQuorum,
    #[error("verification incomplete; waiting on {missing:?}")]
    VerificationIncomplete { missing: Vec<SiteId>, hashes_match: bool },
}

impl WorkflowError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::IllegalTransition { .. } => "IllegalTransition",
            WorkflowError::ForbiddenRole { .. } => "ForbiddenRole",
            WorkflowError::EmptyTargets => "EmptyTargets",
            WorkflowError::InvalidSeverity(_) => "InvalidSeverity",
            WorkflowError::UnknownRequirement(_) => "UnknownRequirement",
            WorkflowError::InconsistentDelta { .. } => "InconsistentDelta",
            WorkflowError::ValidationFailed { .. } => "ValidationFailed",
            WorkflowError::NoVotes => "NoVotes",
            WorkflowError::QuorumUnreachable { .. } => "QuorumUnreachable",
            WorkflowError::InvalidQuorum => "InvalidQuorum",
            WorkflowError::VerificationIncomplete { .. } => "VerificationIncomplete",
        }
    }
}

/// Raised while folding events that do not fit the request's current state.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("event {kind} cannot apply to {cr_id} in state {state:?}")]
pub struct ApplyError {
    pub cr_id: ChangeRequestId,
    pub kind: &'static str,
    pub state: CrState,
}

pub(crate) fn authorize(cr: &ChangeRequest, event: &str, action: &str, actor: &Actor) -> Result<CrState, WorkflowError> {
    let transition = TransitionTable::standard().find(cr.state, event).ok_or_else(|| {
        WorkflowError::IllegalTransition { state: cr.state, action: action.to_string() }
    })?;
    if !transition.guard.permits(actor.role, actor.id == cr.author) {
        return Err(WorkflowError::ForbiddenRole {
            actor: actor.id.clone(),
            role: actor.role,
            action: action.to_string(),
        });
    }
    Ok(transition.to)
}

fn require_automatic(cr: &ChangeRequest, event: &str, action: &str) -> Result<CrState, WorkflowError> {
    TransitionTable::standard()
        .find(cr.state, event)
        .map(|t| t.to)
        .ok_or_else(|| WorkflowError::IllegalTransition { state: cr.state, action: action.to_string() })
}

pub fn submit_change_request(
    author: &Actor,
    origin_site: SiteId,
    targets: BTreeSet<RequirementId>,
    description: String,
    severity: u8,
    baseline: &Baseline,
) -> Result<CrEvent, WorkflowError> {
    if targets.is_empty() {
        return Err(WorkflowError::EmptyTargets);
    }
    if !(1..=5).contains(&severity) {
        return Err(WorkflowError::InvalidSeverity(severity));
    }
    if let Some(missing) = targets.iter().find(|t| !baseline.contains(t)) {
        return Err(WorkflowError::UnknownRequirement(missing.clone()));
    }
    Ok(CrEvent::Submitted { author: author.id.clone(), origin_site, targets, description, severity })
}

pub fn formulate_change(
    cr: &ChangeRequest,
    actor: &Actor,
    deltas: Vec<RequirementDelta>,
    goals: Vec<String>,
    measurements: Vec<String>,
) -> Result<Vec<CrEvent>, WorkflowError> {
    authorize(cr, "formulate", "formulate", actor)?;
    if deltas.is_empty() {
        return Err(WorkflowError::InconsistentDelta {
            requirement_id: None,
            reason: "at least one delta is required".into(),
        });
    }
    for delta in &deltas {
        let listed = cr.targets.contains(&delta.requirement_id);
        let reason = match delta.op {
            DeltaOp::Modify | DeltaOp::Deprecate if !listed => "requirement is not a target",
            DeltaOp::Add if listed => "an added requirement cannot already be a target",
            _ => continue,
        };
        return Err(WorkflowError::InconsistentDelta {
            requirement_id: Some(delta.requirement_id.clone()),
            reason: reason.into(),
        });
    }
    Ok(vec![CrEvent::Formulated { deltas, goals, measurements }, CrEvent::PmReviewOpened])
}

pub fn pm_triage(
    cr: &ChangeRequest,
    pm: &Actor,
    decision: TriageDecision,
    rationale: String,
) -> Result<Vec<CrEvent>, WorkflowError> {
    let event = match decision {
        TriageDecision::Accept => "pm_accept",
        TriageDecision::Reject => "pm_reject",
    };
    authorize(cr, event, "triage", pm)?;
    Ok(vec![match decision {
        TriageDecision::Accept => CrEvent::PmAccepted { rationale },
        TriageDecision::Reject => CrEvent::PmRejected { rationale },
    }])
}

/// Applies every delta in order to a scratch copy of `baseline`, collecting
/// each failure instead of stopping at the first.
pub fn validate_deltas(deltas: &[RequirementDelta], baseline: &Baseline) -> Result<Baseline, Vec<DeltaFailure>> {
    let mut scratch = baseline.clone();
    let mut failures = Vec::new();
    for (index, delta) in deltas.iter().enumerate() {
        if let Err(error) = apply_delta_in_place(&mut scratch, delta) {
            failures.push(DeltaFailure { index, requirement_id: delta.requirement_id.clone(), error });
        }
    }
    if failures.is_empty() {
        Ok(scratch)
    } else {
        Err(failures)
    }
}

pub fn validate_and_generate_form(
    cr: &ChangeRequest,
    baseline: &Baseline,
    impact: &ImpactAnalysis,
    conflicts: Vec<ChangeRequestId>,
    priority_score: f64,
    generated_at: u64,
) -> Result<Vec<CrEvent>, WorkflowError> {
    require_automatic(cr, "generate_form", "generate_form")?;
    validate_deltas(&cr.deltas, baseline)
        .map_err(|failures| WorkflowError::ValidationFailed { failures })?;
    let form = ChangeRequestForm {
        cr_id: cr.id.clone(),
        affected: impact.affected.clone(),
        preliminary_cost: impact.total_cost,
        schedule_days: impact.schedule_days,
        conflicts,
        priority_score,
        generated_at,
    };
    Ok(vec![CrEvent::FormGenerated { form }, CrEvent::CcbReviewOpened])
}

pub fn ccb_cast_vote(
    cr: &ChangeRequest,
    member: &Actor,
    decision: VoteDecision,
    rationale: String,
) -> Result<CrEvent, WorkflowError> {
    authorize(cr, "vote", "vote", member)?;
    Ok(CrEvent::VoteCast { vote: Vote { member: member.id.clone(), decision, rationale } })
}

pub fn ccb_tally(
    cr: &ChangeRequest,
    actor: &Actor,
    quorum: u32,
    ccb_size: u32,
) -> Result<(CcbDecision, CrEvent), WorkflowError> {
    authorize(cr, "ccb_approve", "tally", actor)?;
    if cr.votes.is_empty() {
        return Err(WorkflowError::NoVotes);
    }
    if quorum == 0 {
        return Err(WorkflowError::InvalidQuorum);
    }
    if quorum > ccb_size {
        return Err(WorkflowError::QuorumUnreachable { quorum, members: ccb_size });
    }
    let tally = cr.tally();
    let decision = CcbDecision::decide(tally.approvals, tally.rejections, tally.abstentions, quorum);
    let event = match decision.outcome {
        CcbOutcome::Approved => CrEvent::CcbApproved { decision },
        CcbOutcome::Rejected => CrEvent::CcbRejected { decision },
    };
    Ok((decision, event))
}

/// Records the final impact and moves the request into implementation with
/// the change set built for it (see [`crate::replication::change_set_for`]).
pub fn begin_implementation(
    cr: &ChangeRequest,
    actor: &Actor,
    impact_final: ImpactAnalysis,
    change_set: ChangeSet,
    waits_for: Vec<u64>,
) -> Result<Vec<CrEvent>, WorkflowError> {
    authorize(cr, "analyze_impact", "implement", actor)?;
    if cr.deltas.is_empty() || change_set.cr_id != cr.id || change_set.deltas != cr.deltas {
        return Err(WorkflowError::IllegalTransition {
            state: cr.state,
            action: "implement (change set does not match the recorded deltas)".into(),
        });
    }
    Ok(vec![
        CrEvent::ImpactAnalyzed { impact: impact_final },
        CrEvent::ImplementationStarted { change_set, waits_for },
    ])
}

pub fn close_after_verification(
    cr: &ChangeRequest,
    verification: &VerificationStatus,
) -> Result<Vec<CrEvent>, WorkflowError> {
    let illegal = || WorkflowError::IllegalTransition { state: cr.state, action: "close".into() };
    if !matches!(cr.state, CrState::Implementing | CrState::Verifying) {
        return Err(illegal());
    }
    if !verification.complete || verification.cr_id != cr.id {
        return Err(WorkflowError::VerificationIncomplete {
            missing: verification.missing_sites(),
            hashes_match: verification.hashes_match,
        });
    }
    let mut events = Vec::with_capacity(2);
    if cr.state == CrState::Implementing {
        events.push(CrEvent::VerificationStarted { verification: verification.clone() });
    }
    events.push(CrEvent::Closed { verification: verification.clone() });
    Ok(events)
}

impl ChangeRequest {
    /// Creates a request from its `Submitted` event.
    pub fn open(id: ChangeRequestId, event: &CrEvent, at: u64, actor: &ActorId) -> Option<ChangeRequest> {
        let CrEvent::Submitted { author, origin_site, targets, description, severity } = event else {
            return None;
        };
        Some(ChangeRequest {
            id,
            author: author.clone(),
            origin_site: origin_site.clone(),
            targets: targets.clone(),
            description: description.clone(),
            goals: Vec::new(),
            measurements: Vec::new(),
            deltas: Vec::new(),
            state: CrState::Submitted,
            severity: *severity,
            created_at: at,
            history: vec![HistoryEntry { state: CrState::Submitted, at, actor: actor.clone() }],
            pm_decision: None,
            form: None,
            votes: BTreeMap::new(),
            ccb_decision: None,
            final_impact: None,
            change_seq: None,
            verification: None,
        })
    }

    pub fn apply(&mut self, event: &CrEvent, at: u64, actor: &ActorId) -> Result<(), ApplyError> {
        let reject = |state| ApplyError { cr_id: self.id.clone(), kind: event.kind(), state };
        if let Some(next) = event.target_state() {
            if !TransitionTable::standard().is_edge(self.state, next) {
                return Err(reject(self.state));
            }
        } else if self.state != CrState::CcbReview {
            return Err(reject(self.state));
        }
        match event {
            CrEvent::Submitted { .. } => return Err(reject(self.state)),
            CrEvent::Formulated { deltas, goals, measurements } => {
                self.deltas = deltas.clone();
                self.goals = goals.clone();
                self.measurements = measurements.clone();
            }
            CrEvent::PmAccepted { rationale } | CrEvent::PmRejected { rationale } => {
                let decision = if matches!(event, CrEvent::PmAccepted { .. }) {
                    TriageDecision::Accept
                } else {
                    TriageDecision::Reject
                };
                self.pm_decision =
                    Some(PmDecision { decision, pm: actor.clone(), rationale: rationale.clone(), at });
            }
            CrEvent::FormGenerated { form } => self.form = Some(form.clone()),
            CrEvent::VoteCast { vote } => {
                self.votes.insert(vote.member.clone(), vote.clone());
            }
            CrEvent::CcbApproved { decision } | CrEvent::CcbRejected { decision } => {
                self.ccb_decision = Some(*decision);
            }
            CrEvent::ImpactAnalyzed { impact } => self.final_impact = Some(impact.clone()),
            CrEvent::ImplementationStarted { change_set, .. } => self.change_seq = Some(change_set.seq),
            CrEvent::VerificationStarted { verification } | CrEvent::Closed { verification } => {
                self.verification = Some(verification.clone());
            }
            CrEvent::PmReviewOpened | CrEvent::CcbReviewOpened => {}
        }
        if let Some(next) = event.target_state() {
            self.state = next;
            self.history.push(HistoryEntry { state: next, at, actor: actor.clone() });
        }
        Ok(())
    }

    pub fn apply_all(&mut self, events: &[CrEvent], at: u64, actor: &ActorId) -> Result<(), ApplyError> {
        events.iter().try_for_each(|e| self.apply(e, at, actor))
    }

    pub fn tally(&self) -> VoteTally {
        let mut tally = VoteTally::default();
        for vote in self.votes.values() {
            match vote.decision {
                VoteDecision::Approve => tally.approvals += 1,
                VoteDecision::Reject => tally.rejections += 1,
                VoteDecision::Abstain => tally.abstentions += 1,
            }
            tally.votes.push(vote.clone());
        }
        tally
    }
}
