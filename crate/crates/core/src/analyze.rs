//! Plan predicates, batch metrics, and exact success probabilities.
//!
//! The absorbing-chain solver gives the vanilla success rate in closed
//! form, independent of the simulator, so the two routes can cross-check
//! each other. Managers that rewrite the system mid-run make the chain
//! time-inhomogeneous; their claims are checked by simulation plus the
//! per-step policy invariants instead.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{classify_end_states, Island, ModelError, NarrativeSystem, StateId};
use crate::simulate::{Outcome, PlayerModel, Trace};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalyzeError {
    #[error("plan is empty")]
    EmptyPlan,
    #[error("unknown state {0} in plan")]
    UnknownState(StateId),
    #[error("no traces to aggregate")]
    NoTraces,
    #[error("traces disagree on system digest")]
    MixedSystems,
    #[error("traces disagree on manager name")]
    MixedManagers,
    #[error("absorbing chain is singular: some state cannot reach an end state")]
    SingularSystem,
    #[error("state {0} has no positive outgoing weight")]
    DegenerateRow(StateId),
    #[error("plan enumeration exceeded the ceiling of {0} expansions")]
    ExplosionGuard(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Why a plan is not complete. `code()` is the stable machine-readable
/// form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanIssue {
    WrongStart { found: StateId },
    LastNotGoal { found: StateId },
    IslandUnvisited { island: usize },
    IslandOutOfOrder { island: usize },
}

impl PlanIssue {
    pub fn code(&self) -> &'static str {
        match self {
            PlanIssue::WrongStart { .. } => "wrong-start",
            PlanIssue::LastNotGoal { .. } => "last-not-goal",
            PlanIssue::IslandUnvisited { .. } => "island-unvisited",
            PlanIssue::IslandOutOfOrder { .. } => "island-order",
        }
    }
}

impl std::fmt::Display for PlanIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PlanIssue::WrongStart { found } => write!(f, "plan starts at {found}, not the initial state"),
            PlanIssue::LastNotGoal { found } => write!(f, "last state {found} not in the goal set"),
            PlanIssue::IslandUnvisited { island } => write!(f, "island {island} unvisited"),
            PlanIssue::IslandOutOfOrder { island } => {
                write!(f, "island {island} first visited out of order")
            }
        }
    }
}

/// Verdict of [`is_complete_plan`]: complete, or the first failed clause.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanCheck {
    Complete,
    Incomplete(PlanIssue),
}

impl PlanCheck {
    pub fn is_complete(&self) -> bool {
        matches!(self, PlanCheck::Complete)
    }

    pub fn issue(&self) -> Option<&PlanIssue> {
        match self {
            PlanCheck::Complete => None,
            PlanCheck::Incomplete(issue) => Some(issue),
        }
    }
}

/// A plan is complete when it starts at the initial state, ends in a goal
/// state, and visits every island with first visits in island order.
/// Clauses are checked in that order; the verdict carries the first
/// failure.
pub fn is_complete_plan(sys: &NarrativeSystem, plan: &[StateId]) -> Result<PlanCheck, AnalyzeError> {
    if plan.is_empty() {
        return Err(AnalyzeError::EmptyPlan);
    }
    for s in plan {
        if !sys.states().contains(s) {
            return Err(AnalyzeError::UnknownState(s.clone()));
        }
    }
    if &plan[0] != sys.initial() {
        return Ok(PlanCheck::Incomplete(PlanIssue::WrongStart {
            found: plan[0].clone(),
        }));
    }
    let last = plan.last().expect("non-empty");
    if !sys.goals().contains(last) {
        return Ok(PlanCheck::Incomplete(PlanIssue::LastNotGoal {
            found: last.clone(),
        }));
    }
    match first_occurrence_order(plan, sys.islands()) {
        IslandCheck::Ordered(_) => Ok(PlanCheck::Complete),
        IslandCheck::Unvisited { island } => {
            Ok(PlanCheck::Incomplete(PlanIssue::IslandUnvisited { island }))
        }
        IslandCheck::OutOfOrder { island } => {
            Ok(PlanCheck::Incomplete(PlanIssue::IslandOutOfOrder { island }))
        }
    }
}

/// Result of the island-order check. A plan satisfies the objective
/// sequence when every island is visited and the first-occurrence
/// positions are strictly increasing in island order. Later re-visits to
/// earlier islands are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IslandCheck {
    /// `(island index, plan position)` per island; indices 1-based,
    /// positions 0-based.
    Ordered(Vec<(usize, usize)>),
    Unvisited { island: usize },
    OutOfOrder { island: usize },
}

pub fn first_occurrence_order(plan: &[StateId], islands: &[Island]) -> IslandCheck {
    let mut firsts = Vec::with_capacity(islands.len());
    for (idx, island) in islands.iter().enumerate() {
        let k = idx + 1;
        match plan.iter().position(|s| island.contains(s)) {
            Some(pos) => firsts.push((k, pos)),
            None => return IslandCheck::Unvisited { island: k },
        }
    }
    for pair in firsts.windows(2) {
        if pair[1].1 <= pair[0].1 {
            return IslandCheck::OutOfOrder { island: pair[1].0 };
        }
    }
    IslandCheck::Ordered(firsts)
}

/// Aggregate metrics over one manager's batch of traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub manager: String,
    pub n_runs: u64,
    pub complete_rate: f64,
    pub mean_adaptations: f64,
    pub min_adaptations: u64,
    pub max_adaptations: u64,
    pub mean_cancellations: f64,
    pub min_cancellations: u64,
    pub max_cancellations: u64,
    pub outcome_histogram: BTreeMap<Outcome, u64>,
    /// Total occupancies per state across all runs, including each run's
    /// initial occupancy and cancelled-step stays. Every system state has
    /// an entry.
    pub visit_counts: BTreeMap<StateId, u64>,
    pub system_digest: String,
}

impl SimulationReport {
    pub fn visits(&self, s: &StateId) -> u64 {
        self.visit_counts.get(s).copied().unwrap_or(0)
    }
}

/// Fold a batch of traces into exact counts and means. All traces must
/// come from the same system and manager.
pub fn aggregate(traces: &[Trace], sys: &NarrativeSystem) -> Result<SimulationReport, AnalyzeError> {
    if traces.is_empty() {
        return Err(AnalyzeError::NoTraces);
    }
    let digest = format!("{:016x}", sys.digest());
    let manager = traces[0].manager.clone();
    for t in traces {
        if t.system_digest != digest {
            return Err(AnalyzeError::MixedSystems);
        }
        if t.manager != manager {
            return Err(AnalyzeError::MixedManagers);
        }
    }

    let n = traces.len() as u64;
    let mut histogram: BTreeMap<Outcome, u64> = BTreeMap::new();
    let mut visit_counts: BTreeMap<StateId, u64> =
        sys.states().iter().map(|s| (s.clone(), 0)).collect();
    let mut total_adaptations = 0u64;
    let mut total_cancellations = 0u64;
    let mut min_adaptations = u64::MAX;
    let mut max_adaptations = 0u64;
    let mut min_cancellations = u64::MAX;
    let mut max_cancellations = 0u64;

    for t in traces {
        *histogram.entry(t.outcome).or_insert(0) += 1;
        for s in &t.plan {
            *visit_counts.entry(s.clone()).or_insert(0) += 1;
        }
        total_adaptations += t.adaptations;
        total_cancellations += t.cancellations;
        min_adaptations = min_adaptations.min(t.adaptations);
        max_adaptations = max_adaptations.max(t.adaptations);
        min_cancellations = min_cancellations.min(t.cancellations);
        max_cancellations = max_cancellations.max(t.cancellations);
    }

    let complete = histogram.get(&Outcome::Complete).copied().unwrap_or(0);
    Ok(SimulationReport {
        manager,
        n_runs: n,
        complete_rate: complete as f64 / n as f64,
        mean_adaptations: total_adaptations as f64 / n as f64,
        min_adaptations,
        max_adaptations,
        mean_cancellations: total_cancellations as f64 / n as f64,
        min_cancellations,
        max_cancellations,
        outcome_histogram: histogram,
        visit_counts,
        system_digest: digest,
    })
}

/// Dynamics the exact solver covers. Only the no-intervention manager
/// leaves the chain time-homogeneous.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMode {
    Vanilla,
}

/// Per-state probability of absorbing in a goal sink, plus the solver
/// residual.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionReport {
    /// 1 for goals, 0 for problematic sinks, the solved value for
    /// transient states.
    pub probabilities: BTreeMap<StateId, f64>,
    /// Infinity norm of `(I - Q) x - b`.
    pub residual: f64,
}

/// Treat the system as an absorbing Markov chain and solve
/// `(I - Q) x = b` for the probability of ending in a goal state, where
/// `Q` holds transient-to-transient mass and `b` the one-step-to-goal
/// mass. Direct elimination with partial pivoting; systems here are tens
/// of states.
pub fn absorption_probabilities(
    sys: &NarrativeSystem,
    model: &PlayerModel,
    _mode: OracleMode,
) -> Result<AbsorptionReport, AnalyzeError> {
    let ends = classify_end_states(sys)?;
    let transient: Vec<&StateId> = sys
        .states()
        .iter()
        .filter(|s| !ends.is_end(s))
        .collect();
    let index: BTreeMap<&StateId, usize> =
        transient.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let n = transient.len();

    // rows of I - Q, and the one-step goal mass b
    let mut matrix = vec![vec![0.0f64; n]; n];
    let mut b = vec![0.0f64; n];
    for (i, s) in transient.iter().enumerate() {
        matrix[i][i] = 1.0;
        let outgoing = sys.outgoing(s);
        let total: f64 = outgoing.iter().map(|(via, _)| model.weight(s, via)).sum();
        if total <= 0.0 {
            return Err(AnalyzeError::DegenerateRow((*s).clone()));
        }
        for (via, to) in outgoing {
            let p = model.weight(s, via) / total;
            if let Some(&j) = index.get(to) {
                matrix[i][j] -= p;
            } else if ends.goal.contains(to) {
                b[i] += p;
            }
            // mass into problematic sinks is absorbed at zero
        }
    }

    let x = solve_linear(matrix.clone(), b.clone())?;

    let mut residual = 0.0f64;
    for i in 0..n {
        let mut acc = -b[i];
        for j in 0..n {
            acc += matrix[i][j] * x[j];
        }
        residual = residual.max(acc.abs());
    }

    let mut probabilities = BTreeMap::new();
    for (i, s) in transient.iter().enumerate() {
        probabilities.insert((*s).clone(), x[i]);
    }
    for g in &ends.goal {
        probabilities.insert(g.clone(), 1.0);
    }
    for p in &ends.problematic {
        probabilities.insert(p.clone(), 0.0);
    }
    Ok(AbsorptionReport {
        probabilities,
        residual,
    })
}

/// Gaussian elimination with partial pivoting. A vanishing pivot means the
/// chain has a transient class that never absorbs.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, AnalyzeError> {
    let n = b.len();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        if a[pivot_row][col].abs() < 1e-12 {
            return Err(AnalyzeError::SingularSystem);
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot = &upper[col];
        let (b_upper, b_lower) = b.split_at_mut(col + 1);
        let b_pivot = b_upper[col];
        for (row, b_row) in lower.iter_mut().zip(b_lower.iter_mut()) {
            let factor = row[col] / pivot[col];
            if factor == 0.0 {
                continue;
            }
            for (x, p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *x -= factor * p;
            }
            *b_row -= factor * b_pivot;
        }
    }
    let mut x = vec![0.0f64; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for col in (row + 1)..n {
            acc -= a[row][col] * x[col];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

pub const DEFAULT_ENUMERATION_CEILING: usize = 1_000_000;

/// All distinct plans from the initial state to a goal with at most
/// `max_revisits` re-entries per state, filtered to those satisfying the
/// island order. Sorted lexicographically.
pub fn enumerate_complete_plans(
    sys: &NarrativeSystem,
    max_revisits: usize,
) -> Result<Vec<Vec<StateId>>, AnalyzeError> {
    enumerate_complete_plans_with_ceiling(sys, max_revisits, DEFAULT_ENUMERATION_CEILING)
}

/// As [`enumerate_complete_plans`], with an explicit cap on search
/// expansions.
pub fn enumerate_complete_plans_with_ceiling(
    sys: &NarrativeSystem,
    max_revisits: usize,
    ceiling: usize,
) -> Result<Vec<Vec<StateId>>, AnalyzeError> {
    let mut plans = Vec::new();
    let mut path = vec![sys.initial().clone()];
    let mut visits: BTreeMap<StateId, usize> = BTreeMap::new();
    visits.insert(sys.initial().clone(), 1);
    let mut expansions = 0usize;
    dfs_plans(
        sys,
        max_revisits,
        ceiling,
        &mut path,
        &mut visits,
        &mut expansions,
        &mut plans,
    )?;
    plans.sort();
    Ok(plans)
}

fn dfs_plans(
    sys: &NarrativeSystem,
    max_revisits: usize,
    ceiling: usize,
    path: &mut Vec<StateId>,
    visits: &mut BTreeMap<StateId, usize>,
    expansions: &mut usize,
    plans: &mut Vec<Vec<StateId>>,
) -> Result<(), AnalyzeError> {
    let current = path.last().expect("path never empty").clone();
    if sys.goals().contains(&current) {
        if matches!(
            first_occurrence_order(path, sys.islands()),
            IslandCheck::Ordered(_)
        ) {
            plans.push(path.clone());
        }
        return Ok(());
    }
    for (_, to) in sys.outgoing(&current) {
        let seen = visits.get(to).copied().unwrap_or(0);
        if seen > max_revisits {
            continue;
        }
        *expansions += 1;
        if *expansions > ceiling {
            return Err(AnalyzeError::ExplosionGuard(ceiling));
        }
        visits.insert(to.clone(), seen + 1);
        path.push(to.clone());
        dfs_plans(sys, max_revisits, ceiling, path, visits, expansions, plans)?;
        path.pop();
        visits.insert(to.clone(), seen);
    }
    Ok(())
}
