//! Probabilistic player and the seeded run loop.
//!
//! Runs are bit-reproducible: the generator is SplitMix64 (documented
//! below), per-run seeds derive from the master seed with [`mix_seed`], and
//! every collection in the sampling path iterates in sorted order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::analyze;
use crate::model::{
    classify_end_states, successors, EndStates, ModelError, NarrativeSystem, StateId,
    TransitionId,
};
use crate::policy::{em_policy, EmDecision, ExperienceManager, Overlay, PolicyError, RunContext};

/// SplitMix64: state advances by the golden-ratio increment
/// `0x9E3779B97F4A7C15`; output is the finalizer
/// `z ^= z >> 30, z *= 0xBF58476D1CE4E5B9; z ^= z >> 27, z *= 0x94D049BB133111EB; z ^= z >> 31`.
/// Stable across platforms; not cryptographic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimRng {
    state: u64,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1): the top 53 bits of the next output.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Per-run seed for run `run_id` under `master_seed`: one SplitMix64 output
/// taken at state `master_seed XOR (run_id * 0x9E3779B97F4A7C15)`.
pub fn mix_seed(master_seed: u64, run_id: u64) -> u64 {
    SimRng::new(master_seed ^ run_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)).next_u64()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// Every enabled transition has weight zero; nothing can be sampled.
    #[error("degenerate distribution at {0}: no positive weight")]
    DegenerateDistribution(StateId),
    #[error("weight {weight} for ({state}, {transition}) outside [0, 1]")]
    InvalidWeight {
        state: StateId,
        transition: TransitionId,
        weight: f64,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    /// A policy failure outside the run-terminating kinds (stuck, no
    /// history), which the loop folds into outcomes instead.
    #[error("policy failure: {0}")]
    Policy(PolicyError),
}

/// Per-arc sampling weights: one entry per `(state, transition)` rule.
/// Weights over each state's enabled set are normalized at sampling, so a
/// removal renormalizes the remaining mass automatically.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PlayerModel {
    weights: BTreeMap<(StateId, TransitionId), f64>,
}

impl PlayerModel {
    pub fn new(
        weights: impl IntoIterator<Item = ((StateId, TransitionId), f64)>,
    ) -> Result<Self, SimError> {
        let weights: BTreeMap<_, _> = weights.into_iter().collect();
        for ((state, transition), &w) in &weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(SimError::InvalidWeight {
                    state: state.clone(),
                    transition: transition.clone(),
                    weight: w,
                });
            }
        }
        Ok(PlayerModel { weights })
    }

    /// Base weight of the arc, zero when absent.
    pub fn weight(&self, s: &StateId, t: &TransitionId) -> f64 {
        self.weights
            .get(&(s.clone(), t.clone()))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Weight of an arc under the overlay: a pinned edit wins over the base
/// model.
pub fn effective_weight(
    model: &PlayerModel,
    overlay: &Overlay,
    s: &StateId,
    t: &TransitionId,
) -> f64 {
    overlay
        .probability_edit(s, t)
        .unwrap_or_else(|| model.weight(s, t))
}

/// Draw one enabled transition from `s`, proportional to effective weights.
pub fn sample_transition(
    model: &PlayerModel,
    sys: &NarrativeSystem,
    overlay: &Overlay,
    s: &StateId,
    rng: &mut SimRng,
) -> Result<TransitionId, SimError> {
    let enabled = successors(sys, overlay, s)?;
    let weights: Vec<f64> = enabled
        .iter()
        .map(|(via, _)| effective_weight(model, overlay, s, via))
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(SimError::DegenerateDistribution(s.clone()));
    }
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    for ((via, _), w) in enabled.iter().zip(&weights) {
        acc += w;
        if u < acc {
            return Ok(via.clone());
        }
    }
    // floating-point edge: u landed on the accumulated total
    Ok(enabled.last().expect("non-empty").0.clone())
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Ended in a goal state with islands respected.
    Complete,
    /// Ended in a problematic sink.
    IncompleteProblematic,
    /// Step cap reached.
    IncompleteMaxSteps,
    /// No transition enabled and the manager could not extend the set, or
    /// a goal was reached out of island order.
    IncompleteStuck,
    /// The manager could not act at all (problematic initial state).
    Aborted,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Complete => "complete",
            Outcome::IncompleteProblematic => "incomplete_problematic",
            Outcome::IncompleteMaxSteps => "incomplete_max_steps",
            Outcome::IncompleteStuck => "incomplete_stuck",
            Outcome::Aborted => "aborted",
        }
    }
}

/// Effective per-arc probabilities at one instant: normalized rows for
/// every state with enabled transitions. End states have empty rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityMatrix {
    pub captured_at: usize,
    pub entries: Vec<MatrixEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixEntry {
    pub from: StateId,
    pub via: TransitionId,
    pub to: StateId,
    pub p: f64,
}

impl ProbabilityMatrix {
    pub fn row_sum(&self, s: &StateId) -> f64 {
        self.entries
            .iter()
            .filter(|e| &e.from == s)
            .map(|e| e.p)
            .sum()
    }

    pub fn probability(&self, from: &StateId, via: &TransitionId) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| &e.from == from && &e.via == via)
            .map(|e| e.p)
    }

    /// Source states with at least one entry.
    pub fn sources(&self) -> Vec<&StateId> {
        let mut out: Vec<&StateId> = self.entries.iter().map(|e| &e.from).collect();
        out.dedup();
        out
    }
}

/// Snapshot the effective probabilities of every state under the overlay.
pub fn capture_matrix(
    sys: &NarrativeSystem,
    overlay: &Overlay,
    model: &PlayerModel,
    captured_at: usize,
) -> ProbabilityMatrix {
    let mut entries = Vec::new();
    for s in sys.states() {
        let enabled = successors(sys, overlay, s).expect("state is declared");
        if enabled.is_empty() {
            continue;
        }
        let total: f64 = enabled
            .iter()
            .map(|(via, _)| effective_weight(model, overlay, s, via))
            .sum();
        for (via, to) in enabled {
            let w = effective_weight(model, overlay, s, &via);
            let p = if total > 0.0 { w / total } else { w };
            entries.push(MatrixEntry {
                from: s.clone(),
                via,
                to,
                p,
            });
        }
    }
    ProbabilityMatrix {
        captured_at,
        entries,
    }
}

/// One resolved step: what was sampled, how the manager resolved it, and
/// the post-decision probability snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub index: usize,
    pub from: StateId,
    /// `None` when nothing was enabled and the manager acted on its own.
    pub sampled: Option<TransitionId>,
    pub decision: EmDecision,
    pub to: StateId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<ProbabilityMatrix>,
}

/// Full record of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub run_id: u64,
    pub seed: u64,
    pub manager: String,
    /// Hex digest of the system the run was executed on.
    pub system_digest: String,
    pub outcome: Outcome,
    /// Initial state followed by each step's resulting state.
    pub plan: Vec<StateId>,
    pub adaptations: u64,
    pub cancellations: u64,
    pub steps: Vec<TraceStep>,
}

impl Trace {
    /// Copy with all per-step snapshots elided (for compact serialization).
    pub fn without_snapshots(mut self) -> Trace {
        for step in &mut self.steps {
            step.snapshot = None;
        }
        self
    }
}

/// Resolve one sampled (or proposed) transition through the manager,
/// record the step with its post-decision snapshot, and advance the
/// context. Loop control stays with the caller; run-ending policy failures
/// (stuck, no history) surface as errors.
pub fn resolve_step(
    sys: &NarrativeSystem,
    ends: &EndStates,
    manager: &dyn ExperienceManager,
    model: &PlayerModel,
    overlay: &mut Overlay,
    ctx: &mut RunContext,
    sampled: Option<TransitionId>,
) -> Result<TraceStep, PolicyError> {
    let index = ctx.step_index();
    let from = ctx.current().clone();
    let decision = em_policy(manager, sys, ends, overlay, ctx, sampled.as_ref())?;
    let snapshot = capture_matrix(sys, overlay, model, index);
    let step = TraceStep {
        index,
        from,
        sampled,
        to: decision.resulting_state.clone(),
        decision: decision.clone(),
        snapshot: Some(snapshot),
    };
    ctx.advance(&decision);
    Ok(step)
}

/// Execute one seeded run. Identical inputs produce a bit-identical trace.
pub fn run_once(
    sys: &NarrativeSystem,
    manager: &dyn ExperienceManager,
    model: &PlayerModel,
    seed: u64,
    max_steps: usize,
) -> Result<Trace, SimError> {
    run_with_id(0, sys, manager, model, seed, max_steps)
}

pub(crate) fn run_with_id(
    run_id: u64,
    sys: &NarrativeSystem,
    manager: &dyn ExperienceManager,
    model: &PlayerModel,
    seed: u64,
    max_steps: usize,
) -> Result<Trace, SimError> {
    let ends = classify_end_states(sys)?;
    let mut rng = SimRng::new(seed);
    let mut overlay = Overlay::new();
    let mut ctx = RunContext::new(sys.initial().clone());
    let mut steps: Vec<TraceStep> = Vec::new();

    let outcome = loop {
        if ends.goal.contains(ctx.current()) {
            let plan = plan_of(sys, &steps);
            let complete = analyze::is_complete_plan(sys, &plan)
                .map(|check| check.is_complete())
                .unwrap_or(false);
            break if complete {
                Outcome::Complete
            } else {
                Outcome::IncompleteStuck
            };
        }
        if steps.len() >= max_steps {
            break Outcome::IncompleteMaxSteps;
        }
        let enabled = successors(sys, &overlay, ctx.current())?;
        let sampled = if enabled.is_empty() {
            None
        } else {
            Some(sample_transition(model, sys, &overlay, ctx.current(), &mut rng)?)
        };
        match resolve_step(sys, &ends, manager, model, &mut overlay, &mut ctx, sampled) {
            Ok(step) => steps.push(step),
            Err(PolicyError::Stuck(_)) => {
                break if ends.problematic.contains(ctx.current()) {
                    Outcome::IncompleteProblematic
                } else {
                    Outcome::IncompleteStuck
                }
            }
            Err(PolicyError::NoHistory(_)) => break Outcome::Aborted,
            Err(e) => return Err(SimError::Policy(e)),
        }
    };

    let plan = plan_of(sys, &steps);
    Ok(Trace {
        run_id,
        seed,
        manager: manager.name().to_string(),
        system_digest: format!("{:016x}", sys.digest()),
        outcome,
        plan,
        adaptations: overlay.adaptation_count(),
        cancellations: overlay.cancellation_count(),
        steps,
    })
}

fn plan_of(sys: &NarrativeSystem, steps: &[TraceStep]) -> Vec<StateId> {
    let mut plan = Vec::with_capacity(steps.len() + 1);
    plan.push(sys.initial().clone());
    plan.extend(steps.iter().map(|s| s.to.clone()));
    plan
}

/// Execute `n` independent runs. Run `i` is seeded with
/// `mix_seed(master_seed, i)`; runs may execute concurrently and are
/// returned in `run_id` order.
pub fn run_batch(
    sys: &NarrativeSystem,
    manager: &dyn ExperienceManager,
    model: &PlayerModel,
    n: u64,
    master_seed: u64,
    max_steps: usize,
) -> Result<Vec<Trace>, SimError> {
    (0..n)
        .into_par_iter()
        .map(|i| run_with_id(i, sys, manager, model, mix_seed(master_seed, i), max_steps))
        .collect()
}
