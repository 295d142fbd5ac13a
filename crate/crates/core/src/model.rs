//! The base narrative system: states, transitions, rules, goals, islands.
//!
//! A system is immutable after construction. All runtime rewrites live in a
//! [`crate::policy::Overlay`], which composes with the base rules to form
//! the effective transition function.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A state name. Unique within a system, non-empty, no whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(String);

impl StateId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        check_token(&name, "state")?;
        Ok(StateId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A transition name. Unique across base and overlay-added transitions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TransitionId(String);

impl TransitionId {
    pub fn new(name: impl Into<String>) -> Result<Self, ModelError> {
        let name = name.into();
        check_token(&name, "transition")?;
        Ok(TransitionId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TransitionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn check_token(name: &str, kind: &'static str) -> Result<(), ModelError> {
    if name.is_empty() {
        return Err(ModelError::InvalidName {
            kind,
            name: name.to_string(),
            reason: "empty",
        });
    }
    if name.chars().any(char::is_whitespace) {
        return Err(ModelError::InvalidName {
            kind,
            name: name.to_string(),
            reason: "contains whitespace",
        });
    }
    Ok(())
}

/// Every transition is either a player action or a manager event.
/// The two kinds partition the transition set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    Action,
    Event,
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransitionKind::Action => f.write_str("action"),
            TransitionKind::Event => f.write_str("event"),
        }
    }
}

/// One entry of the transition function: from --via--> to.
///
/// The function property (at most one rule per `(from, via)`) is checked by
/// [`validate`], not enforced by the set representation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TransitionRule {
    pub from: StateId,
    pub via: TransitionId,
    pub to: StateId,
}

impl TransitionRule {
    pub fn new(from: StateId, via: TransitionId, to: StateId) -> Self {
        TransitionRule { from, via, to }
    }
}

impl fmt::Display for TransitionRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.from, self.via, self.to)
    }
}

/// A mandatory intermediate objective: a non-empty set of states a complete
/// plan must pass through. Islands are ordered; the declared order is the
/// order their first visits must respect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Island {
    pub name: String,
    pub members: BTreeSet<StateId>,
}

impl Island {
    pub fn new(name: impl Into<String>, members: impl IntoIterator<Item = StateId>) -> Self {
        Island {
            name: name.into(),
            members: members.into_iter().collect(),
        }
    }

    pub fn contains(&self, s: &StateId) -> bool {
        self.members.contains(s)
    }
}

/// The immutable system tuple: states, kinded transitions, rules, the
/// initial state, goal states, and the ordered island sequence.
///
/// Construction performs no semantic checking; run [`validate`] to obtain
/// the list of structural violations. Simulation entry points require a
/// system that validates clean.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NarrativeSystem {
    states: BTreeSet<StateId>,
    transitions: BTreeMap<TransitionId, TransitionKind>,
    rules: BTreeSet<TransitionRule>,
    initial: StateId,
    goals: BTreeSet<StateId>,
    islands: Vec<Island>,
    #[serde(skip)]
    outgoing: BTreeMap<StateId, Vec<(TransitionId, StateId)>>,
    #[serde(skip)]
    end_states: BTreeSet<StateId>,
    #[serde(skip)]
    digest: u64,
}

impl NarrativeSystem {
    pub fn new(
        states: impl IntoIterator<Item = StateId>,
        transitions: impl IntoIterator<Item = (TransitionId, TransitionKind)>,
        rules: impl IntoIterator<Item = TransitionRule>,
        initial: StateId,
        goals: impl IntoIterator<Item = StateId>,
        islands: Vec<Island>,
    ) -> Self {
        let states: BTreeSet<_> = states.into_iter().collect();
        let transitions: BTreeMap<_, _> = transitions.into_iter().collect();
        let rules: BTreeSet<_> = rules.into_iter().collect();
        let goals: BTreeSet<_> = goals.into_iter().collect();

        let mut outgoing: BTreeMap<StateId, Vec<(TransitionId, StateId)>> = BTreeMap::new();
        for rule in &rules {
            outgoing
                .entry(rule.from.clone())
                .or_default()
                .push((rule.via.clone(), rule.to.clone()));
        }
        for succ in outgoing.values_mut() {
            succ.sort();
        }
        let end_states = states
            .iter()
            .filter(|s| !outgoing.contains_key(*s))
            .cloned()
            .collect();

        let mut sys = NarrativeSystem {
            states,
            transitions,
            rules,
            initial,
            goals,
            islands,
            outgoing,
            end_states,
            digest: 0,
        };
        sys.digest = sys.compute_digest();
        sys
    }

    pub fn states(&self) -> &BTreeSet<StateId> {
        &self.states
    }

    pub fn transitions(&self) -> &BTreeMap<TransitionId, TransitionKind> {
        &self.transitions
    }

    pub fn rules(&self) -> &BTreeSet<TransitionRule> {
        &self.rules
    }

    pub fn initial(&self) -> &StateId {
        &self.initial
    }

    pub fn goals(&self) -> &BTreeSet<StateId> {
        &self.goals
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn kind_of(&self, t: &TransitionId) -> Option<TransitionKind> {
        self.transitions.get(t).copied()
    }

    /// States with no outgoing base rule (goal and problematic sinks alike).
    pub fn end_states(&self) -> &BTreeSet<StateId> {
        &self.end_states
    }

    /// End states that are not declared goals. Reaching one of these blocks
    /// the narrative.
    pub fn problematic_states(&self) -> BTreeSet<StateId> {
        self.end_states.difference(&self.goals).cloned().collect()
    }

    /// Base outgoing rules of `s`, sorted by transition name.
    pub fn outgoing(&self, s: &StateId) -> &[(TransitionId, StateId)] {
        self.outgoing.get(s).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Stable content digest (FNV-1a over the canonical encoding). Two
    /// systems built from the same declarations share a digest; traces carry
    /// it so aggregation can reject cross-system mixes.
    pub fn digest(&self) -> u64 {
        self.digest
    }

    fn compute_digest(&self) -> u64 {
        let mut h = Fnv1a::new();
        for s in &self.states {
            h.write(s.as_str().as_bytes());
            h.write(b";");
        }
        for (t, kind) in &self.transitions {
            h.write(t.as_str().as_bytes());
            h.write(kind.to_string().as_bytes());
            h.write(b";");
        }
        for rule in &self.rules {
            h.write(rule.from.as_str().as_bytes());
            h.write(b",");
            h.write(rule.via.as_str().as_bytes());
            h.write(b",");
            h.write(rule.to.as_str().as_bytes());
            h.write(b";");
        }
        h.write(self.initial.as_str().as_bytes());
        h.write(b";");
        for g in &self.goals {
            h.write(g.as_str().as_bytes());
            h.write(b";");
        }
        for island in &self.islands {
            h.write(island.name.as_bytes());
            h.write(b":");
            for m in &island.members {
                h.write(m.as_str().as_bytes());
                h.write(b",");
            }
            h.write(b";");
        }
        h.finish()
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("invalid {kind} name {name:?}: {reason}")]
    InvalidName {
        kind: &'static str,
        name: String,
        reason: &'static str,
    },
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("declared goal {0} has outgoing rules")]
    GoalNotTerminal(StateId),
}

/// End states split into declared goals and the problematic remainder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EndStates {
    pub goal: BTreeSet<StateId>,
    pub problematic: BTreeSet<StateId>,
}

impl EndStates {
    pub fn is_end(&self, s: &StateId) -> bool {
        self.goal.contains(s) || self.problematic.contains(s)
    }
}

/// Partition the sinks of the rule graph into goals and problematic states.
///
/// Fails with [`ModelError::GoalNotTerminal`] if a declared goal still has
/// outgoing rules; that system cannot be classified.
pub fn classify_end_states(sys: &NarrativeSystem) -> Result<EndStates, ModelError> {
    for g in sys.goals() {
        if !sys.outgoing(g).is_empty() {
            return Err(ModelError::GoalNotTerminal(g.clone()));
        }
    }
    Ok(EndStates {
        goal: sys.goals().clone(),
        problematic: sys.problematic_states(),
    })
}

/// States reachable from the initial state by following base rules,
/// breadth-first. Always contains the initial state.
pub fn reachable_states(sys: &NarrativeSystem) -> BTreeSet<StateId> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::new();
    seen.insert(sys.initial().clone());
    queue.push_back(sys.initial().clone());
    while let Some(s) = queue.pop_front() {
        for (_, to) in sys.outgoing(&s) {
            if seen.insert(to.clone()) {
                queue.push_back(to.clone());
            }
        }
    }
    seen
}

/// A structural violation found by [`validate`]. The `Display` form is one
/// machine-parsable line: the stable code followed by the offending element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// Two rules share a `(from, via)` pair with different targets.
    GammaNotFunction { from: StateId, via: TransitionId },
    /// State not reachable from the initial state.
    Unreachable { state: StateId },
    /// Declared goal has outgoing rules.
    GoalNotTerminal { state: StateId },
    /// Rule or island references an undeclared state or transition.
    DanglingReference { context: String, name: String },
    /// State belongs to more than one island.
    IslandOverlap { state: StateId, islands: (usize, usize) },
    /// Island member is an end state.
    IslandEndState { state: StateId, island: usize },
    /// Island member is the initial state.
    IslandInitial { state: StateId, island: usize },
    /// Island with no members.
    IslandEmpty { island: usize },
}

impl Violation {
    pub fn code(&self) -> &'static str {
        match self {
            Violation::GammaNotFunction { .. } => "E-GAMMA",
            Violation::Unreachable { .. } => "E-REACH",
            Violation::GoalNotTerminal { .. } => "E-GOAL-TERMINAL",
            Violation::DanglingReference { .. } => "E-REF",
            Violation::IslandOverlap { .. } => "E-ISLAND-OVERLAP",
            Violation::IslandEndState { .. } => "E-ISLAND-END-STATE",
            Violation::IslandInitial { .. } => "E-ISLAND-INITIAL",
            Violation::IslandEmpty { .. } => "E-ISLAND-EMPTY",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::GammaNotFunction { from, via } => {
                write!(f, "E-GAMMA ({from},{via})")
            }
            Violation::Unreachable { state } => write!(f, "E-REACH {state}"),
            Violation::GoalNotTerminal { state } => write!(f, "E-GOAL-TERMINAL {state}"),
            Violation::DanglingReference { context, name } => {
                write!(f, "E-REF {name} in {context}")
            }
            Violation::IslandOverlap { state, islands } => {
                write!(
                    f,
                    "E-ISLAND-OVERLAP {state} (islands {},{})",
                    islands.0, islands.1
                )
            }
            Violation::IslandEndState { state, island } => {
                write!(f, "E-ISLAND-END-STATE {state} (island {island})")
            }
            Violation::IslandInitial { state, island } => {
                write!(f, "E-ISLAND-INITIAL {state} (island {island})")
            }
            Violation::IslandEmpty { island } => write!(f, "E-ISLAND-EMPTY island {island}"),
        }
    }
}

/// Check the structural requirements of a well-formed system:
/// every reference resolves, the transition function is single-valued per
/// `(from, via)`, every state is reachable from the initial state, goals
/// are sinks, and islands are disjoint non-empty sets of interior states.
///
/// Violations are data, not failures; an empty list means the system is
/// valid.
pub fn validate(sys: &NarrativeSystem) -> Vec<Violation> {
    let mut out = Vec::new();

    if !sys.states().contains(sys.initial()) {
        out.push(Violation::DanglingReference {
            context: "initial".to_string(),
            name: sys.initial().to_string(),
        });
    }
    for g in sys.goals() {
        if !sys.states().contains(g) {
            out.push(Violation::DanglingReference {
                context: "goals".to_string(),
                name: g.to_string(),
            });
        }
    }
    for rule in sys.rules() {
        for (side, state) in [("from", &rule.from), ("to", &rule.to)] {
            if !sys.states().contains(state) {
                out.push(Violation::DanglingReference {
                    context: format!("rule {rule} ({side})"),
                    name: state.to_string(),
                });
            }
        }
        if sys.kind_of(&rule.via).is_none() {
            out.push(Violation::DanglingReference {
                context: format!("rule {rule} (via)"),
                name: rule.via.to_string(),
            });
        }
    }

    // gamma must be a function: one target per (from, via)
    let mut targets: BTreeMap<(&StateId, &TransitionId), &StateId> = BTreeMap::new();
    for rule in sys.rules() {
        if let Some(prev) = targets.insert((&rule.from, &rule.via), &rule.to) {
            if prev != &rule.to {
                out.push(Violation::GammaNotFunction {
                    from: rule.from.clone(),
                    via: rule.via.clone(),
                });
            }
        }
    }

    let reachable = reachable_states(sys);
    for s in sys.states() {
        if !reachable.contains(s) {
            out.push(Violation::Unreachable { state: s.clone() });
        }
    }

    for g in sys.goals() {
        if !sys.outgoing(g).is_empty() {
            out.push(Violation::GoalNotTerminal { state: g.clone() });
        }
    }

    let mut seen_in: BTreeMap<&StateId, usize> = BTreeMap::new();
    for (idx, island) in sys.islands().iter().enumerate() {
        let k = idx + 1;
        if island.members.is_empty() {
            out.push(Violation::IslandEmpty { island: k });
        }
        for m in &island.members {
            if !sys.states().contains(m) {
                out.push(Violation::DanglingReference {
                    context: format!("island {k}"),
                    name: m.to_string(),
                });
            }
            if let Some(&first) = seen_in.get(m) {
                out.push(Violation::IslandOverlap {
                    state: m.clone(),
                    islands: (first, k),
                });
            } else {
                seen_in.insert(m, k);
            }
            if sys.end_states().contains(m) {
                out.push(Violation::IslandEndState {
                    state: m.clone(),
                    island: k,
                });
            }
            if m == sys.initial() {
                out.push(Violation::IslandInitial {
                    state: m.clone(),
                    island: k,
                });
            }
        }
    }

    out
}

/// Transitions enabled from `s` under the effective function: base rules,
/// minus overlay removals, plus overlay additions. Sorted by transition
/// name.
pub fn successors(
    sys: &NarrativeSystem,
    overlay: &crate::policy::Overlay,
    s: &StateId,
) -> Result<Vec<(TransitionId, StateId)>, ModelError> {
    if !sys.states().contains(s) {
        return Err(ModelError::UnknownState(s.clone()));
    }
    let mut out: Vec<(TransitionId, StateId)> = sys
        .outgoing(s)
        .iter()
        .filter(|(via, _)| !overlay.is_removed(s, via))
        .cloned()
        .collect();
    out.extend(overlay.added_rules_from(s));
    out.sort();
    Ok(out)
}
