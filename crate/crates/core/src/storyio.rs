//! The `.story` file format and canonical serialization.
//!
//! A story is one JSON object: `schema_version`, `metadata`, `states`
//! (with `initial`/`goal` roles), kinded `transitions`, `rules` carrying
//! per-arc probabilities, and an ordered `islands` list. Parsing resolves
//! every reference and checks probability rows; graph-level checks
//! (reachability, goal terminality) stay in [`crate::model::validate`].
//!
//! All emitted JSON is canonical: keys sorted, probabilities printed as
//! plain decimals with at most nine fractional digits, never in exponent
//! form. Equal values serialize to equal bytes.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyze::SimulationReport;
use crate::model::{
    Island, NarrativeSystem, StateId, TransitionId, TransitionKind, TransitionRule,
};
use crate::simulate::{PlayerModel, Trace};

pub const SCHEMA_VERSION: &str = "1";

const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StoryError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unsupported schema_version {found:?} (expected {SCHEMA_VERSION:?})")]
    UnsupportedVersion { found: String },
    #[error("invalid {kind} name {name:?}: must be a non-empty token without whitespace")]
    InvalidName { kind: &'static str, name: String },
    #[error("duplicate {kind} {name:?}")]
    Duplicate { kind: &'static str, name: String },
    #[error("unknown {kind} {name:?} referenced by {context}")]
    Reference {
        kind: &'static str,
        name: String,
        context: String,
    },
    #[error("outgoing probabilities of state {state:?} sum to {sum} (expected 1 within 1e-9)")]
    ProbabilityRow { state: String, sum: f64 },
    #[error("probability {value} on rule ({from}, {via}) outside [0, 1]")]
    ProbabilityRange {
        from: String,
        via: String,
        value: f64,
    },
    #[error("expected exactly one state with role \"initial\", found {found}")]
    InitialCount { found: usize },
    #[error("no state carries role \"goal\"")]
    NoGoal,
    #[error("unknown role {role:?} on state {state:?}")]
    UnknownRole { state: String, role: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Initial,
    Goal,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryMetadata {
    pub title: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryState {
    pub name: StateId,
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryTransition {
    pub name: TransitionId,
    pub kind: TransitionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryRule {
    pub from: StateId,
    pub via: TransitionId,
    pub to: StateId,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryIsland {
    pub name: String,
    pub members: Vec<StateId>,
}

/// A parsed story in canonical order: states, transitions and rules
/// sorted by name, islands in declared (objective) order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoryDocument {
    pub schema_version: String,
    pub metadata: StoryMetadata,
    pub states: Vec<StoryState>,
    pub transitions: Vec<StoryTransition>,
    pub rules: Vec<StoryRule>,
    pub islands: Vec<StoryIsland>,
}

impl StoryDocument {
    pub fn initial(&self) -> &StateId {
        self.states
            .iter()
            .find(|s| s.roles.contains(&Role::Initial))
            .map(|s| &s.name)
            .expect("parse guarantees one initial state")
    }

    pub fn goal_states(&self) -> Vec<&StateId> {
        self.states
            .iter()
            .filter(|s| s.roles.contains(&Role::Goal))
            .map(|s| &s.name)
            .collect()
    }

    /// Build the immutable system and the player model from this document.
    pub fn compile(&self) -> (NarrativeSystem, PlayerModel) {
        let sys = NarrativeSystem::new(
            self.states.iter().map(|s| s.name.clone()),
            self.transitions.iter().map(|t| (t.name.clone(), t.kind)),
            self.rules
                .iter()
                .map(|r| TransitionRule::new(r.from.clone(), r.via.clone(), r.to.clone())),
            self.initial().clone(),
            self.goal_states().into_iter().cloned(),
            self.islands
                .iter()
                .map(|i| Island::new(i.name.clone(), i.members.iter().cloned()))
                .collect(),
        );
        let model = PlayerModel::new(
            self.rules
                .iter()
                .map(|r| ((r.from.clone(), r.via.clone()), r.probability)),
        )
        .expect("parse guarantees probabilities in [0, 1]");
        (sys, model)
    }
}

// raw shapes: field-level validation happens after deserialization
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStory {
    schema_version: String,
    metadata: RawMetadata,
    states: Vec<RawState>,
    transitions: Vec<RawTransition>,
    rules: Vec<RawRule>,
    #[serde(default)]
    islands: Vec<RawIsland>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetadata {
    title: String,
    #[serde(default)]
    description: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawState {
    name: String,
    #[serde(default)]
    roles: Vec<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    name: String,
    kind: TransitionKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    from: String,
    via: String,
    to: String,
    probability: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIsland {
    name: String,
    members: Vec<String>,
}

/// Parse a story from bytes. Any input yields either a document or a
/// single positioned error; there are no partial documents.
pub fn parse_story(text: &[u8]) -> Result<StoryDocument, StoryError> {
    let raw: RawStory = serde_json::from_slice(text).map_err(|e| StoryError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;

    if raw.schema_version != SCHEMA_VERSION {
        return Err(StoryError::UnsupportedVersion {
            found: raw.schema_version,
        });
    }

    let mut states = Vec::with_capacity(raw.states.len());
    let mut state_names = BTreeSet::new();
    let mut initial_count = 0usize;
    let mut goal_count = 0usize;
    for s in &raw.states {
        let name = StateId::new(s.name.clone()).map_err(|_| StoryError::InvalidName {
            kind: "state",
            name: s.name.clone(),
        })?;
        if !state_names.insert(name.clone()) {
            return Err(StoryError::Duplicate {
                kind: "state",
                name: s.name.clone(),
            });
        }
        let mut roles = Vec::new();
        for role in &s.roles {
            match role.as_str() {
                "initial" => roles.push(Role::Initial),
                "goal" => roles.push(Role::Goal),
                other => {
                    return Err(StoryError::UnknownRole {
                        state: s.name.clone(),
                        role: other.to_string(),
                    })
                }
            }
        }
        roles.sort();
        roles.dedup();
        initial_count += usize::from(roles.contains(&Role::Initial));
        goal_count += usize::from(roles.contains(&Role::Goal));
        states.push(StoryState { name, roles });
    }
    if initial_count != 1 {
        return Err(StoryError::InitialCount {
            found: initial_count,
        });
    }
    if goal_count == 0 {
        return Err(StoryError::NoGoal);
    }

    let mut transitions = Vec::with_capacity(raw.transitions.len());
    let mut transition_names = BTreeSet::new();
    for t in &raw.transitions {
        let name = TransitionId::new(t.name.clone()).map_err(|_| StoryError::InvalidName {
            kind: "transition",
            name: t.name.clone(),
        })?;
        if !transition_names.insert(name.clone()) {
            return Err(StoryError::Duplicate {
                kind: "transition",
                name: t.name.clone(),
            });
        }
        transitions.push(StoryTransition { name, kind: t.kind });
    }

    let mut rules = Vec::with_capacity(raw.rules.len());
    let mut triples = BTreeSet::new();
    for r in &raw.rules {
        let context = format!("rule ({}, {}, {})", r.from, r.via, r.to);
        let from = resolve_state(&state_names, &r.from, &context)?;
        let to = resolve_state(&state_names, &r.to, &context)?;
        let via = transition_names
            .iter()
            .find(|t| t.as_str() == r.via)
            .cloned()
            .ok_or_else(|| StoryError::Reference {
                kind: "transition",
                name: r.via.clone(),
                context: context.clone(),
            })?;
        if !(0.0..=1.0).contains(&r.probability) {
            return Err(StoryError::ProbabilityRange {
                from: r.from.clone(),
                via: r.via.clone(),
                value: r.probability,
            });
        }
        if !triples.insert((from.clone(), via.clone(), to.clone())) {
            return Err(StoryError::Duplicate {
                kind: "rule",
                name: context,
            });
        }
        rules.push(StoryRule {
            from,
            via,
            to,
            probability: r.probability,
        });
    }

    // each state that has rules must carry one unit of outgoing mass
    let mut row_sums: BTreeMap<&StateId, f64> = BTreeMap::new();
    for r in &rules {
        *row_sums.entry(&r.from).or_insert(0.0) += r.probability;
    }
    for (state, sum) in row_sums {
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(StoryError::ProbabilityRow {
                state: state.to_string(),
                sum,
            });
        }
    }

    let mut islands = Vec::with_capacity(raw.islands.len());
    let mut island_names = BTreeSet::new();
    for i in &raw.islands {
        if i.name.is_empty() {
            return Err(StoryError::InvalidName {
                kind: "island",
                name: i.name.clone(),
            });
        }
        if !island_names.insert(i.name.clone()) {
            return Err(StoryError::Duplicate {
                kind: "island",
                name: i.name.clone(),
            });
        }
        let context = format!("island {:?}", i.name);
        let mut members = Vec::with_capacity(i.members.len());
        for m in &i.members {
            members.push(resolve_state(&state_names, m, &context)?);
        }
        members.sort();
        members.dedup();
        islands.push(StoryIsland {
            name: i.name.clone(),
            members,
        });
    }

    states.sort_by(|a, b| a.name.cmp(&b.name));
    transitions.sort_by(|a, b| a.name.cmp(&b.name));
    rules.sort_by(|a, b| (&a.from, &a.via, &a.to).cmp(&(&b.from, &b.via, &b.to)));

    Ok(StoryDocument {
        schema_version: raw.schema_version,
        metadata: StoryMetadata {
            title: raw.metadata.title,
            description: raw.metadata.description,
        },
        states,
        transitions,
        rules,
        islands,
    })
}

fn resolve_state(
    names: &BTreeSet<StateId>,
    name: &str,
    context: &str,
) -> Result<StateId, StoryError> {
    names
        .iter()
        .find(|s| s.as_str() == name)
        .cloned()
        .ok_or_else(|| StoryError::Reference {
            kind: "state",
            name: name.to_string(),
            context: context.to_string(),
        })
}

/// The reference story shipped with the crate: the hunter, the wolf, and
/// the devoured island. Default probabilities are tunable configuration,
/// not ground truth.
pub fn bundled_lrrh() -> StoryDocument {
    parse_story(include_bytes!("../stories/lrrh.story")).expect("bundled story parses")
}

// --- canonical JSON ---

struct CanonicalFormatter;

impl serde_json::ser::Formatter for CanonicalFormatter {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(fmt_canonical_f64(value).as_bytes())
    }
}

/// Fixed decimal rendering: at most nine fractional digits, trailing zeros
/// trimmed, never exponent form. `1.0` stays `1.0`.
pub fn fmt_canonical_f64(value: f64) -> String {
    debug_assert!(value.is_finite());
    let mut s = format!("{value:.9}");
    while s.ends_with('0') {
        s.pop();
    }
    if s.ends_with('.') {
        s.push('0');
    }
    s
}

/// Serialize any value to canonical JSON: keys sorted, floats in fixed
/// decimal form. Equal values give equal bytes.
pub fn canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let value = serde_json::to_value(value).expect("in-memory serialization");
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, CanonicalFormatter);
    value.serialize(&mut ser).expect("writing to a Vec");
    out
}

/// Canonical single-object serialization of a story.
pub fn serialize_story(doc: &StoryDocument) -> Vec<u8> {
    canonical_json(doc)
}

/// Canonical single-object serialization of a report.
pub fn serialize_report(report: &SimulationReport) -> Vec<u8> {
    canonical_json(report)
}

/// One canonical line per trace (JSON Lines).
pub fn serialize_trace_line(trace: &Trace) -> Vec<u8> {
    canonical_json(trace)
}

/// Comma-separated report row: fixed columns, then one `visits_<state>`
/// column per state in name order.
pub fn report_csv_header(report: &SimulationReport) -> String {
    let mut cols = vec![
        "manager".to_string(),
        "n_runs".to_string(),
        "complete_rate".to_string(),
        "mean_adaptations".to_string(),
        "mean_cancellations".to_string(),
    ];
    cols.extend(report.visit_counts.keys().map(|s| format!("visits_{s}")));
    cols.join(",")
}

pub fn report_csv_row(report: &SimulationReport) -> String {
    let mut cols = vec![
        report.manager.clone(),
        report.n_runs.to_string(),
        fmt_canonical_f64(report.complete_rate),
        fmt_canonical_f64(report.mean_adaptations),
        fmt_canonical_f64(report.mean_cancellations),
    ];
    cols.extend(report.visit_counts.values().map(u64::to_string));
    cols.join(",")
}

pub fn report_csv(report: &SimulationReport) -> String {
    format!("{}\n{}\n", report_csv_header(report), report_csv_row(report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyze::aggregate;
    use crate::model::{classify_end_states, reachable_states, validate};
    use crate::policy::vanilla_manager;
    use crate::simulate::{run_batch, Outcome};

    fn sid(name: &str) -> StateId {
        StateId::new(name).unwrap()
    }

    const MINIMAL: &str = r#"{
        "schema_version": "1",
        "metadata": {"title": "Minimal"},
        "states": [
            {"name": "s0", "roles": ["initial"]},
            {"name": "g", "roles": ["goal"]}
        ],
        "transitions": [{"name": "a", "kind": "action"}],
        "rules": [{"from": "s0", "via": "a", "to": "g", "probability": 1.0}]
    }"#;

    #[test]
    fn parse_minimal_story() {
        let doc = parse_story(MINIMAL.as_bytes()).unwrap();
        assert_eq!(doc.states.len(), 2);
        assert_eq!(doc.rules.len(), 1);
        assert_eq!(doc.initial(), &sid("s0"));
        assert_eq!(doc.goal_states(), vec![&sid("g")]);
        let (sys, model) = doc.compile();
        assert!(validate(&sys).is_empty());
        assert_eq!(model.weight(&sid("s0"), &crate::model::TransitionId::new("a").unwrap()), 1.0);
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_story(b"{\n  \"schema_version\": ").unwrap_err();
        match err {
            StoryError::Syntax { line, .. } => assert!(line >= 1),
            other => panic!("expected syntax error, got {other}"),
        }
        // unknown fields are rejected with a position too
        let err = parse_story(MINIMAL.replace("\"metadata\"", "\"meta\"").as_bytes()).unwrap_err();
        assert!(matches!(err, StoryError::Syntax { .. }));
    }

    #[test]
    fn probability_row_off_by_more_than_tolerance_is_rejected() {
        let text = MINIMAL.replace("\"probability\": 1.0", "\"probability\": 0.9");
        let err = parse_story(text.as_bytes()).unwrap_err();
        match err {
            StoryError::ProbabilityRow { state, sum } => {
                assert_eq!(state, "s0");
                assert!((sum - 0.9).abs() < 1e-12);
            }
            other => panic!("expected probability error, got {other}"),
        }
    }

    #[test]
    fn role_errors() {
        let two_initial = MINIMAL.replace("[\"goal\"]", "[\"goal\", \"initial\"]");
        assert_eq!(
            parse_story(two_initial.as_bytes()).unwrap_err(),
            StoryError::InitialCount { found: 2 }
        );
        let no_goal = MINIMAL.replace("[\"goal\"]", "[]");
        assert_eq!(parse_story(no_goal.as_bytes()).unwrap_err(), StoryError::NoGoal);
        let bad_role = MINIMAL.replace("[\"goal\"]", "[\"boss\"]");
        assert!(matches!(
            parse_story(bad_role.as_bytes()).unwrap_err(),
            StoryError::UnknownRole { .. }
        ));
    }

    #[test]
    fn reference_and_duplicate_errors() {
        let dangling = MINIMAL.replace("\"to\": \"g\"", "\"to\": \"nowhere\"");
        assert!(matches!(
            parse_story(dangling.as_bytes()).unwrap_err(),
            StoryError::Reference { kind: "state", .. }
        ));
        let dup_state = MINIMAL.replace(
            "{\"name\": \"g\", \"roles\": [\"goal\"]}",
            "{\"name\": \"g\", \"roles\": [\"goal\"]}, {\"name\": \"g\", \"roles\": []}",
        );
        assert!(matches!(
            parse_story(dup_state.as_bytes()).unwrap_err(),
            StoryError::Duplicate { kind: "state", .. }
        ));
        let bad_version = MINIMAL.replace("\"schema_version\": \"1\"", "\"schema_version\": \"9\"");
        assert!(matches!(
            parse_story(bad_version.as_bytes()).unwrap_err(),
            StoryError::UnsupportedVersion { .. }
        ));
    }

    #[test]
    fn bundled_story_counts_and_classification() {
        let doc = bundled_lrrh();
        assert_eq!(doc.states.len(), 7);
        assert_eq!(doc.islands.len(), 1);
        let (sys, _) = doc.compile();
        assert!(validate(&sys).is_empty());
        assert_eq!(reachable_states(&sys), sys.states().clone());
        let ends = classify_end_states(&sys).unwrap();
        assert_eq!(ends.problematic, BTreeSet::from([sid("wolf_dead_early")]));
    }

    #[test]
    fn canonical_float_formatting() {
        assert_eq!(fmt_canonical_f64(0.3), "0.3");
        assert_eq!(fmt_canonical_f64(1.0), "1.0");
        assert_eq!(fmt_canonical_f64(0.0), "0.0");
        assert_eq!(fmt_canonical_f64(0.49), "0.49");
        assert_eq!(fmt_canonical_f64(1.0 / 3.0), "0.333333333");
        assert_eq!(fmt_canonical_f64(1e-12), "0.0");
    }

    #[test]
    fn story_round_trip_is_identity_on_canonical_form() {
        let doc = bundled_lrrh();
        let bytes = serialize_story(&doc);
        let reparsed = parse_story(&bytes).unwrap();
        assert_eq!(reparsed, doc);
        assert_eq!(serialize_story(&reparsed), bytes);
    }

    #[test]
    fn report_golden_fixture() {
        let report = SimulationReport {
            manager: "vanilla".to_string(),
            n_runs: 1,
            complete_rate: 1.0,
            mean_adaptations: 0.0,
            min_adaptations: 0,
            max_adaptations: 0,
            mean_cancellations: 0.0,
            min_cancellations: 0,
            max_cancellations: 0,
            outcome_histogram: BTreeMap::from([(Outcome::Complete, 1)]),
            visit_counts: BTreeMap::from([(sid("g"), 1), (sid("s0"), 1)]),
            system_digest: "00000000deadbeef".to_string(),
        };
        let expected = concat!(
            "{\"complete_rate\":1.0,\"manager\":\"vanilla\",\"max_adaptations\":0,",
            "\"max_cancellations\":0,\"mean_adaptations\":0.0,\"mean_cancellations\":0.0,",
            "\"min_adaptations\":0,\"min_cancellations\":0,\"n_runs\":1,",
            "\"outcome_histogram\":{\"complete\":1},\"system_digest\":\"00000000deadbeef\",",
            "\"visit_counts\":{\"g\":1,\"s0\":1}}"
        );
        assert_eq!(String::from_utf8(serialize_report(&report)).unwrap(), expected);
    }

    #[test]
    fn report_round_trip_and_csv_columns() {
        let (sys, model) = bundled_lrrh().compile();
        let traces = run_batch(&sys, &*vanilla_manager(), &model, 100, 42, 1000).unwrap();
        let report = aggregate(&traces, &sys).unwrap();
        let bytes = serialize_report(&report);
        let reparsed: SimulationReport = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(reparsed, report);

        let csv = report_csv(&report);
        let header = csv.lines().next().unwrap();
        assert!(header.starts_with(
            "manager,n_runs,complete_rate,mean_adaptations,mean_cancellations,visits_"
        ));
        // one visits column per state, sorted by name
        let visit_cols: Vec<&str> = header
            .split(',')
            .filter(|c| c.starts_with("visits_"))
            .collect();
        assert_eq!(visit_cols.len(), sys.states().len());
        assert_eq!(visit_cols[0], "visits_rescued_cake_delivered");
    }
}
