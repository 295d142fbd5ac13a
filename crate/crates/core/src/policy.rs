//! Experience managers: the per-run overlay over the base system and the
//! policy that resolves each step.
//!
//! The base system never changes. Everything a manager rewrites at runtime
//! (added events, added rules, removed rules, probability edits) lives in
//! an [`Overlay`] owned by one run. Three managers are provided:
//!
//! - `vanilla` — validates whatever was sampled and never intervenes.
//! - `fairy` — when the run lands in a problematic state, adds a fresh
//!   escape event back to the previous state and disables the rule that
//!   led in.
//! - `mimesis` — cancels any transition whose target is problematic; the
//!   run stays in place.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    successors, EndStates, ModelError, NarrativeSystem, StateId, TransitionId, TransitionKind,
    TransitionRule,
};

/// Names accepted by [`manager_by_name`], in CLI order.
pub const MANAGER_NAMES: [&str; 3] = ["vanilla", "fairy", "mimesis"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    /// No transition is enabled and the manager cannot extend the set.
    #[error("stuck at {0}: no enabled transitions")]
    Stuck(StateId),
    /// The run starts in a problematic state; there is no previous state to
    /// return to.
    #[error("no history at problematic state {0}")]
    NoHistory(StateId),
    #[error("transition {0} already declared")]
    DuplicateTransition(TransitionId),
    #[error("transition {0} is not declared in the base system or overlay")]
    UndeclaredTransition(TransitionId),
    #[error("no base rule ({0}, {1}) to remove")]
    UnknownRule(StateId, TransitionId),
    #[error("rule ({0}, {1}) is already defined")]
    RuleConflict(StateId, TransitionId),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("transition {1} is not enabled from {0}")]
    NotEnabled(StateId, TransitionId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A manager's dynamic delta over the base system: extra event transitions,
/// extra rules, hidden base rules, and probability edits. Composes with the
/// base rules to form the effective transition function.
///
/// `adaptation_count` tracks committed probability modifications: adding a
/// rule with a probability counts one, removing a rule (the remaining mass
/// renormalizes at sampling) counts one, and a bare probability edit counts
/// one. Cancellations are tracked separately and never touch probabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    added_transitions: BTreeMap<TransitionId, TransitionKind>,
    added_rules: BTreeSet<TransitionRule>,
    removed_rules: BTreeSet<(StateId, TransitionId)>,
    probability_edits: BTreeMap<(StateId, TransitionId), f64>,
    adaptation_count: u64,
    cancellation_count: u64,
}

impl Overlay {
    pub fn new() -> Self {
        Overlay::default()
    }

    pub fn adaptation_count(&self) -> u64 {
        self.adaptation_count
    }

    pub fn cancellation_count(&self) -> u64 {
        self.cancellation_count
    }

    pub fn added_transitions(&self) -> &BTreeMap<TransitionId, TransitionKind> {
        &self.added_transitions
    }

    pub fn added_rules(&self) -> &BTreeSet<TransitionRule> {
        &self.added_rules
    }

    pub fn removed_rules(&self) -> &BTreeSet<(StateId, TransitionId)> {
        &self.removed_rules
    }

    pub fn is_removed(&self, from: &StateId, via: &TransitionId) -> bool {
        self.removed_rules
            .contains(&(from.clone(), via.clone()))
    }

    pub fn added_rules_from(&self, from: &StateId) -> Vec<(TransitionId, StateId)> {
        self.added_rules
            .iter()
            .filter(|r| &r.from == from)
            .map(|r| (r.via.clone(), r.to.clone()))
            .collect()
    }

    pub fn probability_edit(&self, from: &StateId, via: &TransitionId) -> Option<f64> {
        self.probability_edits
            .get(&(from.clone(), via.clone()))
            .copied()
    }

    /// Kind of `t` across the base system and this overlay.
    pub fn kind_of(&self, sys: &NarrativeSystem, t: &TransitionId) -> Option<TransitionKind> {
        sys.kind_of(t).or_else(|| self.added_transitions.get(t).copied())
    }

    /// Declare a fresh event transition. Manager-added transitions are
    /// always events; the name must not collide with any base or overlay
    /// transition.
    pub fn add_event(
        &mut self,
        sys: &NarrativeSystem,
        name: &str,
    ) -> Result<TransitionId, PolicyError> {
        let id = TransitionId::new(name)?;
        if sys.kind_of(&id).is_some() || self.added_transitions.contains_key(&id) {
            return Err(PolicyError::DuplicateTransition(id));
        }
        self.added_transitions.insert(id.clone(), TransitionKind::Event);
        Ok(id)
    }

    /// Add a rule and pin its sampling probability. One committed
    /// probability modification.
    pub fn add_rule_with_probability(
        &mut self,
        sys: &NarrativeSystem,
        rule: TransitionRule,
        probability: f64,
    ) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(PolicyError::InvalidProbability(probability));
        }
        if self.kind_of(sys, &rule.via).is_none() {
            return Err(PolicyError::UndeclaredTransition(rule.via.clone()));
        }
        let base_defines = sys
            .outgoing(&rule.from)
            .iter()
            .any(|(via, _)| via == &rule.via && !self.is_removed(&rule.from, via));
        let overlay_defines = self
            .added_rules
            .iter()
            .any(|r| r.from == rule.from && r.via == rule.via);
        if base_defines || overlay_defines {
            return Err(PolicyError::RuleConflict(rule.from.clone(), rule.via.clone()));
        }
        self.probability_edits
            .insert((rule.from.clone(), rule.via.clone()), probability);
        self.added_rules.insert(rule);
        self.adaptation_count += 1;
        Ok(())
    }

    /// Hide a base rule. The remaining outgoing mass of `from` renormalizes
    /// at sampling. One committed probability modification.
    pub fn remove_rule(
        &mut self,
        sys: &NarrativeSystem,
        from: &StateId,
        via: &TransitionId,
    ) -> Result<(), PolicyError> {
        let exists = sys.outgoing(from).iter().any(|(t, _)| t == via);
        if !exists || self.is_removed(from, via) {
            return Err(PolicyError::UnknownRule(from.clone(), via.clone()));
        }
        self.removed_rules.insert((from.clone(), via.clone()));
        self.adaptation_count += 1;
        Ok(())
    }

    /// Undo a removal. One committed probability modification.
    pub fn restore_rule(&mut self, from: &StateId, via: &TransitionId) -> bool {
        let restored = self.removed_rules.remove(&(from.clone(), via.clone()));
        if restored {
            self.adaptation_count += 1;
        }
        restored
    }

    /// Override the sampling weight of an existing rule. One committed
    /// probability modification.
    pub fn set_probability(
        &mut self,
        from: &StateId,
        via: &TransitionId,
        probability: f64,
    ) -> Result<(), PolicyError> {
        if !(0.0..=1.0).contains(&probability) {
            return Err(PolicyError::InvalidProbability(probability));
        }
        self.probability_edits
            .insert((from.clone(), via.clone()), probability);
        self.adaptation_count += 1;
        Ok(())
    }

    /// Retract a rule this overlay previously added, dropping its pinned
    /// probability. Undoes the manager's own bookkeeping, so it is not a
    /// counted modification.
    pub fn retract_added_rule(&mut self, from: &StateId, via: &TransitionId) -> bool {
        let found = self
            .added_rules
            .iter()
            .find(|r| &r.from == from && &r.via == via)
            .cloned();
        match found {
            Some(rule) => {
                self.added_rules.remove(&rule);
                self.probability_edits.remove(&(from.clone(), via.clone()));
                true
            }
            None => false,
        }
    }

    pub fn record_cancellation(&mut self) {
        self.cancellation_count += 1;
    }
}

/// How the manager resolved one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intervention {
    None,
    Adaptation,
    Cancellation,
}

/// The manager's resolution of one step: the transition that fires and the
/// state the system lands in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDecision {
    pub chosen: TransitionId,
    pub resulting_state: StateId,
    pub intervention: Intervention,
}

/// Where a run currently is and how it got there.
///
/// `history` records one `(state, transition)` pair per resolved step; the
/// last entry is the edge that led into the current state, which is what
/// the fairy manager rewinds.
#[derive(Debug, Clone, PartialEq)]
pub struct RunContext {
    current: StateId,
    history: Vec<(StateId, TransitionId)>,
}

impl RunContext {
    pub fn new(initial: StateId) -> Self {
        RunContext {
            current: initial,
            history: Vec::new(),
        }
    }

    pub fn current(&self) -> &StateId {
        &self.current
    }

    pub fn history(&self) -> &[(StateId, TransitionId)] {
        &self.history
    }

    pub fn step_index(&self) -> usize {
        self.history.len()
    }

    /// The edge that entered the current state, if any.
    pub fn last_entry(&self) -> Option<&(StateId, TransitionId)> {
        self.history.last()
    }

    pub fn advance(&mut self, decision: &EmDecision) {
        self.history
            .push((self.current.clone(), decision.chosen.clone()));
        self.current = decision.resulting_state.clone();
    }
}

/// An experience manager. Stateless and shareable: all per-run mutation
/// goes through the overlay it is handed.
pub trait ExperienceManager: Send + Sync {
    fn name(&self) -> &'static str;

    /// Resolve one step. `sampled` is the transition the stochastic player
    /// model drew (an action is a player proposal, an event is the
    /// environment acting while the player is passive); `None` means
    /// nothing is enabled and the manager may extend the transition set or
    /// report [`PolicyError::Stuck`].
    fn decide(
        &self,
        sys: &NarrativeSystem,
        ends: &EndStates,
        overlay: &mut Overlay,
        ctx: &RunContext,
        sampled: Option<&TransitionId>,
    ) -> Result<EmDecision, PolicyError>;
}

/// The policy entry point: checks the proposal is enabled under the current
/// effective function, then lets the manager resolve the step (possibly
/// mutating the overlay first — the decision is evaluated against the
/// mutated overlay).
pub fn em_policy(
    manager: &dyn ExperienceManager,
    sys: &NarrativeSystem,
    ends: &EndStates,
    overlay: &mut Overlay,
    ctx: &RunContext,
    proposal: Option<&TransitionId>,
) -> Result<EmDecision, PolicyError> {
    if let Some(t) = proposal {
        if effective_target(sys, overlay, ctx.current(), t).is_none() {
            return Err(PolicyError::NotEnabled(ctx.current().clone(), t.clone()));
        }
    }
    let decision = manager.decide(sys, ends, overlay, ctx, proposal)?;
    debug_assert!(
        effective_target(sys, overlay, ctx.current(), &decision.chosen).is_some(),
        "decision must be enabled post-decision"
    );
    Ok(decision)
}

/// Target of `t` from `s` under base rules plus overlay. `None` when `t` is
/// not enabled from `s`.
pub fn effective_target(
    sys: &NarrativeSystem,
    overlay: &Overlay,
    s: &StateId,
    t: &TransitionId,
) -> Option<StateId> {
    match successors(sys, overlay, s) {
        Ok(succ) => succ.into_iter().find(|(via, _)| via == t).map(|(_, to)| to),
        Err(_) => None,
    }
}

struct Vanilla;

impl ExperienceManager for Vanilla {
    fn name(&self) -> &'static str {
        "vanilla"
    }

    fn decide(
        &self,
        sys: &NarrativeSystem,
        _ends: &EndStates,
        overlay: &mut Overlay,
        ctx: &RunContext,
        sampled: Option<&TransitionId>,
    ) -> Result<EmDecision, PolicyError> {
        validate_sampled(sys, overlay, ctx, sampled)
    }
}

/// Pass-through resolution: the sampled transition fires with its base
/// effect. Shared by vanilla and by the other managers outside their
/// intervention condition.
fn validate_sampled(
    sys: &NarrativeSystem,
    overlay: &Overlay,
    ctx: &RunContext,
    sampled: Option<&TransitionId>,
) -> Result<EmDecision, PolicyError> {
    let t = sampled.ok_or_else(|| PolicyError::Stuck(ctx.current().clone()))?;
    let to = effective_target(sys, overlay, ctx.current(), t)
        .ok_or_else(|| PolicyError::NotEnabled(ctx.current().clone(), t.clone()))?;
    Ok(EmDecision {
        chosen: t.clone(),
        resulting_state: to,
        intervention: Intervention::None,
    })
}

struct Fairy;

impl ExperienceManager for Fairy {
    fn name(&self) -> &'static str {
        "fairy"
    }

    fn decide(
        &self,
        sys: &NarrativeSystem,
        ends: &EndStates,
        overlay: &mut Overlay,
        ctx: &RunContext,
        sampled: Option<&TransitionId>,
    ) -> Result<EmDecision, PolicyError> {
        let current = ctx.current();
        if !ends.problematic.contains(current) {
            return validate_sampled(sys, overlay, ctx, sampled);
        }
        let (prev, entering) = ctx
            .last_entry()
            .cloned()
            .ok_or_else(|| PolicyError::NoHistory(current.clone()))?;

        // A re-entered problematic state may still carry the escape rule
        // from an earlier intervention; retract it so the state ends up
        // with exactly one outgoing rule.
        let stale: Vec<(TransitionId, StateId)> = overlay.added_rules_from(current);
        for (via, _) in stale {
            overlay.retract_added_rule(current, &via);
        }

        let ordinal = overlay.added_transitions().len() + 1;
        let escape = overlay.add_event(sys, &format!("e_fairy#{ordinal}"))?;
        overlay.add_rule_with_probability(
            sys,
            TransitionRule::new(current.clone(), escape.clone(), prev.clone()),
            1.0,
        )?;
        overlay.remove_rule(sys, &prev, &entering)?;

        Ok(EmDecision {
            chosen: escape,
            resulting_state: prev,
            intervention: Intervention::Adaptation,
        })
    }
}

struct Mimesis;

impl ExperienceManager for Mimesis {
    fn name(&self) -> &'static str {
        "mimesis"
    }

    fn decide(
        &self,
        sys: &NarrativeSystem,
        ends: &EndStates,
        overlay: &mut Overlay,
        ctx: &RunContext,
        sampled: Option<&TransitionId>,
    ) -> Result<EmDecision, PolicyError> {
        let t = sampled.ok_or_else(|| PolicyError::Stuck(ctx.current().clone()))?;
        let to = effective_target(sys, overlay, ctx.current(), t)
            .ok_or_else(|| PolicyError::NotEnabled(ctx.current().clone(), t.clone()))?;
        if ends.problematic.contains(&to) {
            overlay.record_cancellation();
            return Ok(EmDecision {
                chosen: t.clone(),
                resulting_state: ctx.current().clone(),
                intervention: Intervention::Cancellation,
            });
        }
        Ok(EmDecision {
            chosen: t.clone(),
            resulting_state: to,
            intervention: Intervention::None,
        })
    }
}

/// Manager that validates every sampled transition and never intervenes.
pub fn vanilla_manager() -> Box<dyn ExperienceManager> {
    Box::new(Vanilla)
}

/// Manager that rescues runs from problematic states: a fresh escape event
/// back to the previous state with probability 1, and the entering rule is
/// disabled. Two counted probability modifications per intervention.
pub fn fairy_manager() -> Box<dyn ExperienceManager> {
    Box::new(Fairy)
}

/// Manager that cancels transitions whose target is problematic; the run
/// stays in the same state and retries.
pub fn mimesis_manager() -> Box<dyn ExperienceManager> {
    Box::new(Mimesis)
}

pub fn manager_by_name(name: &str) -> Option<Box<dyn ExperienceManager>> {
    match name {
        "vanilla" => Some(vanilla_manager()),
        "fairy" => Some(fairy_manager()),
        "mimesis" => Some(mimesis_manager()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::classify_end_states;

    fn sid(name: &str) -> StateId {
        StateId::new(name).unwrap()
    }

    fn tid(name: &str) -> TransitionId {
        TransitionId::new(name).unwrap()
    }

    fn rule(from: &str, via: &str, to: &str) -> TransitionRule {
        TransitionRule::new(sid(from), tid(via), sid(to))
    }

    /// s0 --a_prob--> p0 (problematic sink), s0 --e_meet--> s1 --a_win--> g.
    fn branching() -> NarrativeSystem {
        NarrativeSystem::new(
            [sid("s0"), sid("s1"), sid("p0"), sid("g")],
            [
                (tid("a_prob"), TransitionKind::Action),
                (tid("e_meet"), TransitionKind::Event),
                (tid("a_win"), TransitionKind::Action),
            ],
            [
                rule("s0", "a_prob", "p0"),
                rule("s0", "e_meet", "s1"),
                rule("s1", "a_win", "g"),
            ],
            sid("s0"),
            [sid("g")],
            vec![],
        )
    }

    #[test]
    fn vanilla_validates_enabled_proposal() {
        let sys = branching();
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let ctx = RunContext::new(sid("s0"));
        let manager = vanilla_manager();
        let d = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, Some(&tid("e_meet")))
            .unwrap();
        assert_eq!(d.chosen, tid("e_meet"));
        assert_eq!(d.resulting_state, sid("s1"));
        assert_eq!(d.intervention, Intervention::None);
        assert_eq!(overlay.adaptation_count(), 0);
    }

    #[test]
    fn vanilla_is_stuck_at_problematic_sink() {
        let sys = branching();
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let ctx = RunContext::new(sid("p0"));
        let manager = vanilla_manager();
        let err = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, None).unwrap_err();
        assert_eq!(err, PolicyError::Stuck(sid("p0")));
    }

    #[test]
    fn em_policy_rejects_disabled_proposal() {
        let sys = branching();
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let ctx = RunContext::new(sid("s0"));
        let manager = vanilla_manager();
        let err = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, Some(&tid("a_win")))
            .unwrap_err();
        assert_eq!(err, PolicyError::NotEnabled(sid("s0"), tid("a_win")));
    }

    #[test]
    fn fairy_rewinds_and_disables_the_entering_rule() {
        let sys = branching();
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let mut ctx = RunContext::new(sid("s0"));
        ctx.advance(&EmDecision {
            chosen: tid("a_prob"),
            resulting_state: sid("p0"),
            intervention: Intervention::None,
        });
        let manager = fairy_manager();
        let d = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, None).unwrap();
        assert_eq!(d.resulting_state, sid("s0"));
        assert_eq!(d.intervention, Intervention::Adaptation);
        assert_eq!(d.chosen, tid("e_fairy#1"));
        assert!(overlay.is_removed(&sid("s0"), &tid("a_prob")));
        assert_eq!(overlay.probability_edit(&sid("p0"), &tid("e_fairy#1")), Some(1.0));
        // one addition-with-probability plus one removal
        assert_eq!(overlay.adaptation_count(), 2);
        // the problematic state now has exactly one outgoing rule
        let succ = successors(&sys, &overlay, &sid("p0")).unwrap();
        assert_eq!(succ, vec![(tid("e_fairy#1"), sid("s0"))]);
    }

    #[test]
    fn fairy_reintervention_replaces_the_stale_escape() {
        // p0 is enterable from two states; each entry removes only the edge
        // actually taken, and the escape always points at the latest
        // predecessor.
        let sys = NarrativeSystem::new(
            [sid("s0"), sid("s1"), sid("p0"), sid("g")],
            [
                (tid("a_kill0"), TransitionKind::Action),
                (tid("a_kill1"), TransitionKind::Action),
                (tid("e_meet"), TransitionKind::Event),
                (tid("a_win"), TransitionKind::Action),
            ],
            [
                rule("s0", "a_kill0", "p0"),
                rule("s0", "e_meet", "s1"),
                rule("s1", "a_kill1", "p0"),
                rule("s1", "a_win", "g"),
            ],
            sid("s0"),
            [sid("g")],
            vec![],
        );
        let ends = classify_end_states(&sys).unwrap();
        let manager = fairy_manager();
        let mut overlay = Overlay::new();
        let mut ctx = RunContext::new(sid("s0"));

        ctx.advance(&EmDecision {
            chosen: tid("a_kill0"),
            resulting_state: sid("p0"),
            intervention: Intervention::None,
        });
        let d1 = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, None).unwrap();
        ctx.advance(&d1);
        assert_eq!(ctx.current(), &sid("s0"));

        // back at s0, only e_meet remains
        let succ = successors(&sys, &overlay, &sid("s0")).unwrap();
        assert_eq!(succ, vec![(tid("e_meet"), sid("s1"))]);

        ctx.advance(&EmDecision {
            chosen: tid("e_meet"),
            resulting_state: sid("s1"),
            intervention: Intervention::None,
        });
        ctx.advance(&EmDecision {
            chosen: tid("a_kill1"),
            resulting_state: sid("p0"),
            intervention: Intervention::None,
        });
        let sampled = tid("e_fairy#1"); // stale escape is what the sampler sees
        let d2 = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, Some(&sampled)).unwrap();
        assert_eq!(d2.chosen, tid("e_fairy#2"));
        assert_eq!(d2.resulting_state, sid("s1"));
        assert!(overlay.is_removed(&sid("s1"), &tid("a_kill1")));
        // exactly one outgoing rule at p0, pointing at the latest predecessor
        let succ = successors(&sys, &overlay, &sid("p0")).unwrap();
        assert_eq!(succ, vec![(tid("e_fairy#2"), sid("s1"))]);
        assert_eq!(overlay.adaptation_count(), 4);
    }

    #[test]
    fn fairy_without_history_reports_no_history() {
        let sys = NarrativeSystem::new(
            [sid("p")],
            [] as [(TransitionId, TransitionKind); 0],
            [] as [TransitionRule; 0],
            sid("p"),
            [] as [StateId; 0],
            vec![],
        );
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let ctx = RunContext::new(sid("p"));
        let manager = fairy_manager();
        let err = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, None).unwrap_err();
        assert_eq!(err, PolicyError::NoHistory(sid("p")));
    }

    #[test]
    fn mimesis_cancels_transitions_into_problematic_states() {
        let sys = branching();
        let ends = classify_end_states(&sys).unwrap();
        let mut overlay = Overlay::new();
        let ctx = RunContext::new(sid("s0"));
        let manager = mimesis_manager();
        let d = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, Some(&tid("a_prob")))
            .unwrap();
        assert_eq!(d.resulting_state, sid("s0"));
        assert_eq!(d.intervention, Intervention::Cancellation);
        assert_eq!(overlay.cancellation_count(), 1);
        assert_eq!(overlay.adaptation_count(), 0);

        let d = em_policy(&*manager, &sys, &ends, &mut overlay, &ctx, Some(&tid("e_meet")))
            .unwrap();
        assert_eq!(d.resulting_state, sid("s1"));
        assert_eq!(d.intervention, Intervention::None);
    }

    #[test]
    fn overlay_rejects_conflicts_and_bad_probabilities() {
        let sys = branching();
        let mut overlay = Overlay::new();
        assert_eq!(
            overlay.add_event(&sys, "e_meet").unwrap_err(),
            PolicyError::DuplicateTransition(tid("e_meet"))
        );
        let e = overlay.add_event(&sys, "e_new").unwrap();
        assert!(matches!(
            overlay
                .add_rule_with_probability(&sys, rule("s0", "e_new", "s1"), 1.5)
                .unwrap_err(),
            PolicyError::InvalidProbability(_)
        ));
        assert_eq!(
            overlay
                .add_rule_with_probability(&sys, rule("s0", "e_meet", "g"), 0.5)
                .unwrap_err(),
            PolicyError::RuleConflict(sid("s0"), tid("e_meet"))
        );
        overlay
            .add_rule_with_probability(
                &sys,
                TransitionRule::new(sid("p0"), e.clone(), sid("s0")),
                1.0,
            )
            .unwrap();
        assert_eq!(
            overlay.remove_rule(&sys, &sid("p0"), &e).unwrap_err(),
            PolicyError::UnknownRule(sid("p0"), e.clone())
        );
    }

    #[test]
    fn manager_lookup_by_name() {
        for name in MANAGER_NAMES {
            assert_eq!(manager_by_name(name).unwrap().name(), name);
        }
        assert!(manager_by_name("unknown").is_none());
    }
}
