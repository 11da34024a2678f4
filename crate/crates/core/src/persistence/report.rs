use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{AuditEvent, PersistenceError};
use crate::domain::{ActorId, ChangeRequestId, RequirementDelta, RequirementId, SiteId};
use crate::impact::ImpactAnalysis;
use crate::replication::{ChangeSet, VerificationStatus};
use crate::workflow::{
    decode_event, CcbDecision, ChangeRequest, ChangeRequestForm, CrEvent, CrState, PmDecision, Vote,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimelineEntry {
    pub seq: u64,
    pub logical_ts: u64,
    pub actor: ActorId,
    pub event: String,
    /// State after the event.
    pub state: CrState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StepStatus {
    Done,
    Rejected,
    Pending,
    NotReached,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProcessStep {
    pub number: u8,
    pub name: String,
    pub status: StepStatus,
    pub at: Option<u64>,
    pub actor: Option<ActorId>,
}

/// Everything recorded about one change request, rebuilt from the log alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssessmentReport {
    pub cr_id: ChangeRequestId,
    pub author: ActorId,
    pub origin_site: SiteId,
    pub description: String,
    pub severity: u8,
    pub targets: Vec<RequirementId>,
    pub goals: Vec<String>,
    pub measurements: Vec<String>,
    pub deltas: Vec<RequirementDelta>,
    pub timeline: Vec<TimelineEntry>,
    pub steps: Vec<ProcessStep>,
    pub pm_decision: Option<PmDecision>,
    pub form: Option<ChangeRequestForm>,
    pub votes: Vec<Vote>,
    pub ccb_decision: Option<CcbDecision>,
    pub final_impact: Option<ImpactAnalysis>,
    pub change_set: Option<ChangeSet>,
    pub waits_for: Vec<u64>,
    pub verification: Option<VerificationStatus>,
    pub state: CrState,
    /// Terminal state, once reached.
    pub outcome: Option<CrState>,
}

/// The eight process steps, each with the states that complete or reject it.
const STEPS: [(&str, CrState, Option<CrState>); 8] = [
    ("Identify change request", CrState::Submitted, None),
    ("Formulate change", CrState::Formulated, None),
    ("Project manager triage", CrState::Validating, Some(CrState::RejectedByPm)),
    ("Generate change request form", CrState::FormGenerated, None),
    ("CCB evaluation", CrState::Approved, Some(CrState::CcbRejected)),
    ("Impact analysis", CrState::ImpactAnalyzed, None),
    ("Multi-site implementation", CrState::Implementing, None),
    ("Verification and closure", CrState::Closed, None),
];

fn process_steps(cr: &ChangeRequest) -> Vec<ProcessStep> {
    let reached = |state: CrState| cr.history.iter().find(|h| h.state == state);
    let mut stopped = false;
    STEPS
        .iter()
        .zip(1u8..)
        .map(|(&(name, done, rejected), number)| {
            let (status, entry) = if stopped {
                (StepStatus::NotReached, None)
            } else if let Some(h) = reached(done) {
                (StepStatus::Done, Some(h))
            } else if let Some(h) = rejected.and_then(reached) {
                stopped = true;
                (StepStatus::Rejected, Some(h))
            } else {
                stopped = cr.state.is_terminal();
                (if stopped { StepStatus::NotReached } else { StepStatus::Pending }, None)
            };
            ProcessStep {
                number,
                name: name.to_string(),
                status,
                at: entry.map(|h| h.at),
                actor: entry.map(|h| h.actor.clone()),
            }
        })
        .collect()
}

/// Builds the report for `cr_id` by folding that request's events from `log`.
pub fn assessment_report(log: &[AuditEvent], cr_id: &ChangeRequestId) -> Result<AssessmentReport, PersistenceError> {
    let mut cr: Option<ChangeRequest> = None;
    let mut timeline = Vec::new();
    let mut change_set = None;
    let mut waits_for = Vec::new();
    for event in log.iter().filter(|e| e.cr_id.as_ref() == Some(cr_id) && e.kind.starts_with("cr.")) {
        let replay_failed = |reason: String| PersistenceError::ReplayFailed {
            seq: event.seq,
            kind: event.kind.clone(),
            reason,
        };
        let decoded = decode_event(&event.kind, &event.payload).map_err(|e| replay_failed(e.to_string()))?;
        if let CrEvent::ImplementationStarted { change_set: cs, waits_for: w } = &decoded {
            change_set = Some(cs.clone());
            waits_for = w.clone();
        }
        match cr.as_mut() {
            None => {
                cr = ChangeRequest::open(cr_id.clone(), &decoded, event.logical_ts, &event.actor);
                if cr.is_none() {
                    return Err(replay_failed("first event is not a submission".into()));
                }
            }
            Some(cr) => cr
                .apply(&decoded, event.logical_ts, &event.actor)
                .map_err(|e| replay_failed(e.to_string()))?,
        }
        let state = cr.as_ref().map(|c| c.state).expect("opened above");
        timeline.push(TimelineEntry {
            seq: event.seq,
            logical_ts: event.logical_ts,
            actor: event.actor.clone(),
            event: event.kind.clone(),
            state,
        });
    }
    let cr = cr.ok_or_else(|| PersistenceError::UnknownChangeRequest(cr_id.clone()))?;
    Ok(AssessmentReport {
        steps: process_steps(&cr),
        cr_id: cr.id,
        author: cr.author,
        origin_site: cr.origin_site,
        description: cr.description,
        severity: cr.severity,
        targets: cr.targets.into_iter().collect(),
        goals: cr.goals,
        measurements: cr.measurements,
        deltas: cr.deltas,
        timeline,
        pm_decision: cr.pm_decision,
        form: cr.form,
        votes: cr.votes.into_values().collect(),
        ccb_decision: cr.ccb_decision,
        final_impact: cr.final_impact,
        change_set,
        waits_for,
        verification: cr.verification,
        outcome: cr.state.is_terminal().then_some(cr.state),
        state: cr.state,
    })
}

fn join<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = items.into_iter().map(|i| i.to_string()).collect();
    if parts.is_empty() {
        "-".into()
    } else {
        parts.join(", ")
    }
}

fn impact_lines(out: &mut String, impact: &ImpactAnalysis) {
    let _ = writeln!(out, "  cost: {}", impact.total_cost);
    let _ = writeln!(out, "  schedule_days: {}", impact.schedule_days);
    let _ = writeln!(
        out,
        "  affected: {}",
        join(impact.affected.iter().map(|(id, depth)| format!("{id}@{depth}")))
    );
}

impl AssessmentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Plain-text rendering; sections for stages that never happened are omitted.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Assessment report {}", self.cr_id);
        let _ = writeln!(out, "author: {} ({})", self.author, self.origin_site);
        let _ = writeln!(out, "severity: {}", self.severity);
        let _ = writeln!(out, "description: {}", self.description);
        let _ = writeln!(out, "targets: {}", join(&self.targets));
        let _ = writeln!(out, "goals: {}", join(&self.goals));
        let _ = writeln!(out, "measurements: {}", join(&self.measurements));
        let _ = writeln!(out, "state: {}", self.state.name());
        let _ = writeln!(out, "outcome: {}", self.outcome.map_or("open", CrState::name));

        let _ = writeln!(out, "\nProcess steps");
        for step in &self.steps {
            let when = match (&step.at, &step.actor) {
                (Some(at), Some(actor)) => format!(" at t={at} by {actor}"),
                _ => String::new(),
            };
            let _ = writeln!(out, "  {}. {}: {:?}{when}", step.number, step.name, step.status);
        }

        let _ = writeln!(out, "\nTimeline");
        for entry in &self.timeline {
            let _ = writeln!(
                out,
                "  #{} t={} {} {} -> {}",
                entry.seq,
                entry.logical_ts,
                entry.actor,
                entry.event,
                entry.state.name()
            );
        }

        if let Some(pm) = &self.pm_decision {
            let _ = writeln!(out, "\nProject manager decision");
            let _ = writeln!(out, "  {:?} by {} at t={}: {}", pm.decision, pm.pm, pm.at, pm.rationale);
        }
        if let Some(form) = &self.form {
            let _ = writeln!(out, "\nPreliminary impact");
            impact_lines(&mut out, &form.preliminary_impact());
            let _ = writeln!(out, "  priority: {}", form.priority_score);
            let _ = writeln!(out, "  conflicts: {}", join(&form.conflicts));
        }
        if !self.votes.is_empty() || self.ccb_decision.is_some() {
            let _ = writeln!(out, "\nCCB");
            for vote in &self.votes {
                let _ = writeln!(out, "  vote {} {:?}: {}", vote.member, vote.decision, vote.rationale);
            }
            if let Some(d) = &self.ccb_decision {
                let _ = writeln!(
                    out,
                    "  decision: {:?} (approve {}, reject {}, abstain {}, quorum {})",
                    d.outcome, d.approvals, d.rejections, d.abstentions, d.quorum
                );
            }
        }
        if let Some(impact) = &self.final_impact {
            let _ = writeln!(out, "\nFinal impact");
            impact_lines(&mut out, impact);
        }
        if let Some(cs) = &self.change_set {
            let _ = writeln!(out, "\nChange set");
            let _ = writeln!(out, "  seq: {}", cs.seq);
            let _ = writeln!(out, "  expected_hash: {}", cs.expected_hash);
            let _ = writeln!(out, "  deltas: {}", cs.deltas.len());
            let _ = writeln!(out, "  waits_for: {}", join(&self.waits_for));
        }
        if let Some(v) = &self.verification {
            let _ = writeln!(out, "\nVerification");
            let _ = writeln!(out, "  complete: {}", v.complete);
            let _ = writeln!(out, "  hashes_match: {}", v.hashes_match);
            let _ = writeln!(out, "  acked: {}", join(&v.acked_sites));
            let _ = writeln!(out, "  required: {}", join(&v.required_sites));
        }
        out
    }
}
