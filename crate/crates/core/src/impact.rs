//! Traceability-graph analysis.
//!
//! A change to requirement `X` impacts every requirement that depends on,
//! refines or derives from `X`, transitively. Impact therefore follows
//! `DependsOn`/`Refines`/`DerivedFrom` edges backwards (from their `to` end to
//! their `from` end); `Conflicts` edges never carry impact and are only used by
//! conflict detection.
//!
//! Cost model: every affected requirement contributes its effort scaled by
//! `gamma^depth`, with `0^0 = 1` so that `gamma = 0` prices the direct targets
//! only. Schedule impact spreads that cost over the summed daily capacity of
//! all sites and rounds up to whole days.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    Actor, Baseline, ChangeRequestId, LinkKind, RequirementId, Site, TraceLink,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImpactError {
    #[error("requirement {0} is not part of the trace graph")]
    UnknownRequirement(RequirementId),
    #[error("requirement {0} is not in the baseline")]
    MissingRequirement(RequirementId),
    #[error("trace link {0} -> {0} links a requirement to itself")]
    SelfLink(RequirementId),
    #[error("schedule impact needs at least one site")]
    NoSites,
    #[error("cost must be a finite number >= 0, got {0}")]
    InvalidCost(f64),
    #[error("invalid cost parameters: {0}")]
    InvalidParams(String),
    #[error("change request {0} appears in a conflict but has no priority score")]
    MissingScore(ChangeRequestId),
}

impl ImpactError {
    pub fn code(&self) -> &'static str {
        match self {
            ImpactError::UnknownRequirement(_) => "UnknownRequirement",
            ImpactError::MissingRequirement(_) => "MissingRequirement",
            ImpactError::SelfLink(_) => "SelfLink",
            ImpactError::NoSites => "NoSites",
            ImpactError::InvalidCost(_) => "InvalidCost",
            ImpactError::InvalidParams(_) => "InvalidParams",
            ImpactError::MissingScore(_) => "MissingScore",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceGraph {
    nodes: BTreeSet<RequirementId>,
    edges: BTreeSet<TraceLink>,
}

impl TraceGraph {
    pub fn new(
        nodes: impl IntoIterator<Item = RequirementId>,
        edges: impl IntoIterator<Item = TraceLink>,
    ) -> Result<Self, ImpactError> {
        let mut graph = TraceGraph { nodes: nodes.into_iter().collect(), edges: BTreeSet::new() };
        for edge in edges {
            graph.add_edge(edge)?;
        }
        Ok(graph)
    }

    pub fn add_node(&mut self, id: RequirementId) {
        self.nodes.insert(id);
    }

    /// Adds an edge; duplicates of the same (from, to, kind) triple collapse.
    pub fn add_edge(&mut self, edge: TraceLink) -> Result<(), ImpactError> {
        if edge.from == edge.to {
            return Err(ImpactError::SelfLink(edge.from));
        }
        for end in [&edge.from, &edge.to] {
            if !self.nodes.contains(end) {
                return Err(ImpactError::UnknownRequirement(end.clone()));
            }
        }
        self.edges.insert(edge);
        Ok(())
    }

    pub fn nodes(&self) -> &BTreeSet<RequirementId> {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<TraceLink> {
        &self.edges
    }

    pub fn contains(&self, id: &RequirementId) -> bool {
        self.nodes.contains(id)
    }

    fn conflict_partners<'a>(
        &'a self,
        id: &'a RequirementId,
    ) -> impl Iterator<Item = &'a RequirementId> {
        self.edges.iter().filter(|e| e.kind == LinkKind::Conflicts).filter_map(move |e| {
            if &e.from == id {
                Some(&e.to)
            } else if &e.to == id {
                Some(&e.from)
            } else {
                None
            }
        })
    }
}

/// Transitive impact of changing `targets`: requirement → minimum hop distance.
pub fn impact_set(
    graph: &TraceGraph,
    targets: &BTreeSet<RequirementId>,
) -> Result<BTreeMap<RequirementId, u32>, ImpactError> {
    if let Some(unknown) = targets.iter().find(|t| !graph.contains(t)) {
        return Err(ImpactError::UnknownRequirement(unknown.clone()));
    }
    // Reverse adjacency built once so the walk is linear in the edge count.
    let mut reverse: BTreeMap<&RequirementId, Vec<&RequirementId>> = BTreeMap::new();
    for edge in graph.edges.iter().filter(|e| e.kind.propagates_impact()) {
        reverse.entry(&edge.to).or_default().push(&edge.from);
    }

    let mut depth: BTreeMap<RequirementId, u32> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for target in targets {
        depth.insert(target.clone(), 0);
        queue.push_back(target);
    }
    while let Some(current) = queue.pop_front() {
        let next_depth = depth[current] + 1;
        for &dependent in reverse.get(current).into_iter().flatten() {
            if !depth.contains_key(dependent) {
                depth.insert(dependent.clone(), next_depth);
                queue.push_back(dependent);
            }
        }
    }
    Ok(depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    /// Depth decay in `[0, 1]`.
    pub gamma: f64,
    pub w_sev: f64,
    pub w_stake: f64,
    pub w_cost: f64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams { gamma: 0.5, w_sev: 2.0, w_stake: 1.0, w_cost: 0.1 }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<(), ImpactError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(ImpactError::InvalidParams(format!("gamma {} not in [0, 1]", self.gamma)));
        }
        for (name, w) in [("w_sev", self.w_sev), ("w_stake", self.w_stake), ("w_cost", self.w_cost)] {
            if !(w.is_finite() && w >= 0.0) {
                return Err(ImpactError::InvalidParams(format!("{name} must be >= 0, got {w}")));
            }
        }
        Ok(())
    }
}

/// Depth-decayed effort sum over the affected set.
pub fn estimate_cost(
    impact: &BTreeMap<RequirementId, u32>,
    baseline: &Baseline,
    params: &CostParams,
) -> Result<f64, ImpactError> {
    let mut total = 0.0;
    for (id, &depth) in impact {
        let requirement =
            baseline.get(id).ok_or_else(|| ImpactError::MissingRequirement(id.clone()))?;
        total += requirement.effort * decay(params.gamma, depth);
    }
    Ok(total)
}

fn decay(gamma: f64, depth: u32) -> f64 {
    if depth == 0 {
        1.0
    } else {
        gamma.powi(depth.min(i32::MAX as u32) as i32)
    }
}

/// Whole days needed to absorb `total_cost` across the combined capacity of `sites`.
pub fn schedule_impact(total_cost: f64, sites: &[&Site]) -> Result<u64, ImpactError> {
    if sites.is_empty() {
        return Err(ImpactError::NoSites);
    }
    if !(total_cost.is_finite() && total_cost >= 0.0) {
        return Err(ImpactError::InvalidCost(total_cost));
    }
    let capacity: f64 = sites.iter().map(|s| s.daily_capacity).sum();
    Ok((total_cost / capacity).ceil() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactAnalysis {
    pub affected: BTreeMap<RequirementId, u32>,
    pub total_cost: f64,
    pub schedule_days: u64,
}

impl ImpactAnalysis {
    pub fn affected_ids(&self) -> BTreeSet<RequirementId> {
        self.affected.keys().cloned().collect()
    }
}

/// Impact set, cost and schedule for one target set in a single call.
pub fn analyze(
    graph: &TraceGraph,
    targets: &BTreeSet<RequirementId>,
    baseline: &Baseline,
    sites: &[&Site],
    params: &CostParams,
) -> Result<ImpactAnalysis, ImpactError> {
    let affected = impact_set(graph, targets)?;
    let total_cost = estimate_cost(&affected, baseline, params)?;
    let schedule_days = schedule_impact(total_cost, sites)?;
    Ok(ImpactAnalysis { affected, total_cost, schedule_days })
}

pub fn priority_score(severity: u8, author: &Actor, preliminary_cost: f64, params: &CostParams) -> f64 {
    params.w_sev * f64::from(severity) + params.w_stake * author.stakeholder_weight
        - params.w_cost * preliminary_cost
}

/// Descending score, ascending id on ties. Total over all f64 values.
pub fn priority_cmp(a: (&ChangeRequestId, f64), b: (&ChangeRequestId, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0))
}

pub fn rank_by_priority(scores: &BTreeMap<ChangeRequestId, f64>) -> Vec<ChangeRequestId> {
    let mut ids: Vec<(&ChangeRequestId, f64)> = scores.iter().map(|(id, &s)| (id, s)).collect();
    ids.sort_by(|&a, &b| priority_cmp(a, b));
    ids.into_iter().map(|(id, _)| id.clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    OverlappingImpact,
    ExplicitConflictLink,
}

/// A conflict between two change requests. Stored with `a < b`; the relation
/// is symmetric, see [`Conflict::involves`] and [`Conflict::other`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub a: ChangeRequestId,
    pub b: ChangeRequestId,
    pub overlap: BTreeSet<RequirementId>,
    pub kind: ConflictKind,
}

impl Conflict {
    pub fn involves(&self, id: &ChangeRequestId) -> bool {
        &self.a == id || &self.b == id
    }

    pub fn other(&self, id: &ChangeRequestId) -> Option<&ChangeRequestId> {
        if &self.a == id {
            Some(&self.b)
        } else if &self.b == id {
            Some(&self.a)
        } else {
            None
        }
    }
}

/// A change request as seen by conflict detection.
#[derive(Debug, Clone, Copy)]
pub struct PendingChange<'a> {
    pub id: &'a ChangeRequestId,
    pub targets: &'a BTreeSet<RequirementId>,
    pub impact: &'a ImpactAnalysis,
}

pub fn detect_conflicts(pending: &[PendingChange<'_>], graph: &TraceGraph) -> Vec<Conflict> {
    let mut sorted: Vec<&PendingChange<'_>> = pending.iter().collect();
    sorted.sort_by(|x, y| x.id.cmp(y.id));
    sorted.dedup_by(|x, y| x.id == y.id);

    let mut out = Vec::new();
    for (i, first) in sorted.iter().enumerate() {
        for second in &sorted[i + 1..] {
            let overlap: BTreeSet<RequirementId> = first
                .impact
                .affected
                .keys()
                .filter(|id| second.impact.affected.contains_key(*id))
                .cloned()
                .collect();
            if !overlap.is_empty() {
                out.push(Conflict {
                    a: first.id.clone(),
                    b: second.id.clone(),
                    overlap,
                    kind: ConflictKind::OverlappingImpact,
                });
            }

            let mut linked = BTreeSet::new();
            for target in first.targets {
                for partner in graph.conflict_partners(target) {
                    if second.targets.contains(partner) {
                        linked.insert(target.clone());
                        linked.insert(partner.clone());
                    }
                }
            }
            if !linked.is_empty() {
                out.push(Conflict {
                    a: first.id.clone(),
                    b: second.id.clone(),
                    overlap: linked,
                    kind: ConflictKind::ExplicitConflictLink,
                });
            }
        }
    }
    out
}

/// Serialization order for every change request involved in a conflict.
pub fn resolve_conflict_order(
    conflicts: &[Conflict],
    scores: &BTreeMap<ChangeRequestId, f64>,
) -> Result<Vec<ChangeRequestId>, ImpactError> {
    let involved: BTreeSet<&ChangeRequestId> =
        conflicts.iter().flat_map(|c| [&c.a, &c.b]).collect();
    let mut scored = Vec::with_capacity(involved.len());
    for id in involved {
        let score = scores.get(id).ok_or_else(|| ImpactError::MissingScore(id.clone()))?;
        scored.push((id, *score));
    }
    scored.sort_by(|&a, &b| priority_cmp(a, b));
    Ok(scored.into_iter().map(|(id, _)| id.clone()).collect())
}

fn dot_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if matches!(c, '"' | '\\') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", dot_escape(s))
}

/// Graphviz rendering of the graph; nodes in `highlight` are filled and labelled
/// with their depth. Node and edge order follow id order, so output is stable.
pub fn to_dot(graph: &TraceGraph, highlight: Option<&BTreeMap<RequirementId, u32>>) -> String {
    let mut out = String::from("digraph trace {\n  rankdir=BT;\n  node [shape=box];\n");
    for node in &graph.nodes {
        let id = dot_quote(node.as_str());
        match highlight.and_then(|h| h.get(node)) {
            Some(&depth) => {
                let fill = if depth == 0 { "#e76f51" } else { "#f4a261" };
                let _ = writeln!(
                    out,
                    "  {id} [label=\"{}\\ndepth {depth}\", style=filled, fillcolor=\"{fill}\"];",
                    dot_escape(node.as_str())
                );
            }
            None => {
                let _ = writeln!(out, "  {id};");
            }
        }
    }
    for edge in &graph.edges {
        let style = match edge.kind {
            LinkKind::Conflicts => ", style=dashed, color=red",
            _ => "",
        };
        let _ = writeln!(
            out,
            "  {} -> {} [label=\"{:?}\"{style}];",
            dot_quote(edge.from.as_str()),
            dot_quote(edge.to.as_str()),
            edge.kind
        );
    }
    out.push_str("}\n");
    out
}
