//! Interactive narrative systems as state transition systems.
//!
//! A narrative is a finite state machine whose transitions are split into
//! player actions and manager events. An experience manager (EM) sits
//! between the player and the system: it validates proposed actions, may
//! rewrite the transition structure at runtime, and steers runs away from
//! dead ends. This crate provides:
//!
//! - [`model`] — the immutable system tuple, end-state classification,
//!   reachability, and structural validation.
//! - [`policy`] — runtime overlays over the base system and the three
//!   reference managers (`vanilla`, `fairy`, `mimesis`).
//! - [`simulate`] — a probabilistic player, seeded deterministic runs, and
//!   full trace recording with per-step probability snapshots.
//! - [`analyze`] — plan predicates (islands, completeness), batch metrics,
//!   plan enumeration, and an exact absorbing-chain success oracle.
//! - [`storyio`] — the `.story` file format, canonical serialization, and
//!   the bundled Little Red Riding Hood reference story.

pub mod analyze;
pub mod model;
pub mod policy;
pub mod simulate;
pub mod storyio;

pub use analyze::{
    absorption_probabilities, aggregate, enumerate_complete_plans, first_occurrence_order,
    is_complete_plan, AbsorptionReport, AnalyzeError, IslandCheck, OracleMode, PlanCheck,
    PlanIssue, SimulationReport,
};
pub use model::{
    classify_end_states, reachable_states, successors, validate, EndStates, Island, ModelError,
    NarrativeSystem, StateId, TransitionId, TransitionKind, TransitionRule, Violation,
};
pub use policy::{
    em_policy, fairy_manager, manager_by_name, mimesis_manager, vanilla_manager, EmDecision,
    ExperienceManager, Intervention, Overlay, PolicyError, RunContext, MANAGER_NAMES,
};
pub use simulate::{
    mix_seed, run_batch, run_once, sample_transition, Outcome, PlayerModel, ProbabilityMatrix,
    SimError, SimRng, Trace, TraceStep,
};
pub use storyio::{bundled_lrrh, parse_story, serialize_report, StoryDocument, StoryError};
