//! The change-request transition relation, loaded from `transitions.json`.
//!
//! The same file is served verbatim to clients so that they can derive the
//! actions a given role may take in a given state.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::CrState;
use crate::domain::Role;

/// Raw text of the published table.
pub const TRANSITIONS_JSON: &str = include_str!("../../transitions.json");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Guard {
    /// Performed by the engine as a follow-on of another step.
    Automatic,
    /// Any actor holding one of `roles`, or the change request's author when
    /// the author holds one of `author_roles`.
    Role { roles: Vec<Role>, author_roles: Vec<Role> },
}

impl Guard {
    pub fn permits(&self, role: Role, is_author: bool) -> bool {
        match self {
            Guard::Automatic => true,
            Guard::Role { roles, author_roles } => {
                roles.contains(&role) || (is_author && author_roles.contains(&role))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub from: CrState,
    pub event: String,
    /// API action that triggers this edge; `None` for automatic follow-ons.
    pub action: Option<String>,
    pub guard: Guard,
    pub to: CrState,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionTable {
    pub initial: CrState,
    pub terminal: Vec<CrState>,
    pub transitions: Vec<Transition>,
}

impl TransitionTable {
    pub fn standard() -> &'static TransitionTable {
        static TABLE: OnceLock<TransitionTable> = OnceLock::new();
        TABLE.get_or_init(|| {
            serde_json::from_str(TRANSITIONS_JSON).expect("transitions.json is well-formed")
        })
    }

    pub fn find(&self, from: CrState, event: &str) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.from == from && t.event == event)
    }

    pub fn is_edge(&self, from: CrState, to: CrState) -> bool {
        self.transitions.iter().any(|t| t.from == from && t.to == to)
    }

    pub fn is_terminal(&self, state: CrState) -> bool {
        self.terminal.contains(&state)
    }

    /// Actions a role could take on a change request in `state`.
    pub fn actions_for(&self, state: CrState, role: Role, is_author: bool) -> BTreeSet<&str> {
        self.transitions
            .iter()
            .filter(|t| t.from == state && t.guard.permits(role, is_author))
            .filter_map(|t| t.action.as_deref())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_parses_and_terminals_have_no_outgoing_edges() {
        let table = TransitionTable::standard();
        assert_eq!(table.initial, CrState::Submitted);
        for state in &table.terminal {
            assert!(table.transitions.iter().all(|t| t.from != *state), "{state:?}");
            assert!(state.is_terminal());
        }
        for state in CrState::ALL {
            assert_eq!(state.is_terminal(), table.is_terminal(state));
        }
    }

    #[test]
    fn every_state_reachable_from_initial() {
        let table = TransitionTable::standard();
        let mut seen = BTreeSet::from([table.initial]);
        let mut frontier = vec![table.initial];
        while let Some(s) = frontier.pop() {
            for t in table.transitions.iter().filter(|t| t.from == s) {
                if seen.insert(t.to) {
                    frontier.push(t.to);
                }
            }
        }
        assert_eq!(seen.len(), CrState::ALL.len());
    }

    #[test]
    fn role_filtering() {
        let table = TransitionTable::standard();
        let pm = table.actions_for(CrState::PmReview, Role::ProjectManager, false);
        assert_eq!(pm.into_iter().collect::<Vec<_>>(), vec!["triage"]);
        assert!(table.actions_for(CrState::PmReview, Role::CcbMember, false).is_empty());
        assert!(table.actions_for(CrState::Submitted, Role::Stakeholder, false).is_empty());
        assert!(table.actions_for(CrState::Submitted, Role::Stakeholder, true).contains("formulate"));
    }
}
