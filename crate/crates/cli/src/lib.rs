//! Command implementations behind the `ins` binary.
//!
//! Each command takes explicit readers/writers and returns its exit code,
//! so the binary stays a thin argument-parsing shell and tests can drive
//! the commands directly. Exit codes are a stable contract: 0 success,
//! 1 domain failure, 2 input or usage failure.

use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::ValueEnum;

use ins_core::analyze::{absorption_probabilities, aggregate, OracleMode, SimulationReport};
use ins_core::model::{classify_end_states, successors, validate, TransitionKind};
use ins_core::policy::{manager_by_name, Intervention, Overlay, PolicyError, RunContext};
use ins_core::simulate::{
    effective_weight, resolve_step, run_batch, Outcome, PlayerModel, SimRng, Trace,
};
use ins_core::storyio::{
    bundled_lrrh, fmt_canonical_f64, parse_story, report_csv, serialize_report,
    serialize_trace_line, StoryDocument,
};
use ins_core::{is_complete_plan, NarrativeSystem, StateId};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

/// Stories can come from a file path or from the built-in library via
/// `builtin:<name>`.
pub const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    /// Aligned human-readable table.
    Table,
    /// Canonical JSON.
    Structured,
}

/// Everything a simulation-flavored command needs.
#[derive(Debug, Clone)]
pub struct CliConfig {
    pub story_path: String,
    pub manager_name: String,
    pub n_runs: u64,
    pub master_seed: u64,
    pub max_steps: usize,
    pub output_dir: Option<PathBuf>,
    pub snapshots: bool,
    pub report_format: ReportFormat,
}

impl CliConfig {
    pub fn new(story_path: impl Into<String>, manager_name: impl Into<String>) -> Self {
        CliConfig {
            story_path: story_path.into(),
            manager_name: manager_name.into(),
            n_runs: 100,
            master_seed: 42,
            max_steps: 1000,
            output_dir: None,
            snapshots: true,
            report_format: ReportFormat::Table,
        }
    }
}

/// Load a story from a file or the built-in library.
pub fn load_story(path: &str) -> Result<StoryDocument, String> {
    if let Some(name) = path.strip_prefix(BUILTIN_PREFIX) {
        return match name {
            "lrrh" => Ok(bundled_lrrh()),
            other => Err(format!("unknown builtin story {other:?} (available: lrrh)")),
        };
    }
    let bytes = fs::read(path).map_err(|e| format!("cannot read {path}: {e}"))?;
    parse_story(&bytes).map_err(|e| e.to_string())
}

/// Parse and structurally validate a story. Violations print one per line
/// with their machine-parsable code prefix.
pub fn cmd_validate(story_path: &str, out: &mut dyn Write) -> i32 {
    let doc = match load_story(story_path) {
        Ok(doc) => doc,
        Err(msg) => {
            let _ = writeln!(out, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let (sys, _) = doc.compile();
    let violations = validate(&sys);
    for v in &violations {
        let _ = writeln!(out, "{v}");
    }
    if violations.is_empty() {
        let _ = writeln!(out, "ok: {} is valid", story_path);
        EXIT_OK
    } else {
        EXIT_DOMAIN
    }
}

fn load_valid_story(
    story_path: &str,
    out: &mut dyn Write,
) -> Result<(NarrativeSystem, PlayerModel), i32> {
    let doc = match load_story(story_path) {
        Ok(doc) => doc,
        Err(msg) => {
            let _ = writeln!(out, "error: {msg}");
            return Err(EXIT_USAGE);
        }
    };
    let (sys, model) = doc.compile();
    let violations = validate(&sys);
    if !violations.is_empty() {
        for v in &violations {
            let _ = writeln!(out, "{v}");
        }
        return Err(EXIT_DOMAIN);
    }
    Ok((sys, model))
}

fn simulate_one(
    sys: &NarrativeSystem,
    model: &PlayerModel,
    config: &CliConfig,
    manager_name: &str,
    out: &mut dyn Write,
) -> Result<(Vec<Trace>, SimulationReport), i32> {
    let Some(manager) = manager_by_name(manager_name) else {
        let _ = writeln!(
            out,
            "error: unknown manager {manager_name:?} (available: {})",
            ins_core::MANAGER_NAMES.join(", ")
        );
        return Err(EXIT_USAGE);
    };
    let traces = match run_batch(
        sys,
        &*manager,
        model,
        config.n_runs,
        config.master_seed,
        config.max_steps,
    ) {
        Ok(traces) => traces,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return Err(EXIT_DOMAIN);
        }
    };
    let report = match aggregate(&traces, sys) {
        Ok(report) => report,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            return Err(EXIT_DOMAIN);
        }
    };
    Ok((traces, report))
}

fn write_artifacts(
    dir: &Path,
    suffix: &str,
    traces: &[Trace],
    report: &SimulationReport,
    snapshots: bool,
    out: &mut dyn Write,
) -> Result<(), i32> {
    let result = (|| -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        let mut lines = Vec::new();
        for trace in traces {
            let line = if snapshots {
                serialize_trace_line(trace)
            } else {
                serialize_trace_line(&trace.clone().without_snapshots())
            };
            lines.extend_from_slice(&line);
            lines.push(b'\n');
        }
        fs::write(dir.join(format!("traces{suffix}.jsonl")), lines)?;
        let mut report_bytes = serialize_report(report);
        report_bytes.push(b'\n');
        fs::write(dir.join(format!("report{suffix}.json")), report_bytes)?;
        fs::write(dir.join(format!("report{suffix}.csv")), report_csv(report))?;
        Ok(())
    })();
    result.map_err(|e| {
        let _ = writeln!(out, "error: cannot write outputs to {}: {e}", dir.display());
        EXIT_USAGE
    })
}

fn count_aborted(traces: &[Trace], out: &mut dyn Write) -> bool {
    let aborted = traces
        .iter()
        .filter(|t| t.outcome == Outcome::Aborted)
        .count();
    if aborted > 0 {
        let _ = writeln!(out, "error: {aborted} run(s) aborted");
        true
    } else {
        false
    }
}

/// Run one manager, write trace/report artifacts, print the summary.
pub fn cmd_simulate(config: &CliConfig, out: &mut dyn Write) -> i32 {
    let (sys, model) = match load_valid_story(&config.story_path, out) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let (traces, report) = match simulate_one(&sys, &model, config, &config.manager_name, out) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    if let Some(dir) = &config.output_dir {
        if let Err(code) = write_artifacts(dir, "", &traces, &report, config.snapshots, out) {
            return code;
        }
    }
    match config.report_format {
        ReportFormat::Table => {
            let _ = writeln!(out, "{}", summary_table(&[report]));
        }
        ReportFormat::Structured => {
            let _ = out.write_all(&serialize_report(&report));
            let _ = writeln!(out);
        }
    }
    if count_aborted(&traces, out) {
        return EXIT_DOMAIN;
    }
    EXIT_OK
}

/// Run several managers on the same story and seed, and print one
/// comparison row per manager: success rate, intervention means, and
/// visits to the initial and problematic states.
pub fn cmd_compare(config: &CliConfig, managers: &[String], out: &mut dyn Write) -> i32 {
    if managers.len() < 2 {
        let _ = writeln!(out, "error: compare needs at least two managers");
        return EXIT_USAGE;
    }
    let (sys, model) = match load_valid_story(&config.story_path, out) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let ends = classify_end_states(&sys).expect("validated system classifies");

    let mut rows = Vec::new();
    let mut any_aborted = false;
    for name in managers {
        let (traces, report) = match simulate_one(&sys, &model, config, name, out) {
            Ok(pair) => pair,
            Err(code) => return code,
        };
        if let Some(dir) = &config.output_dir {
            let suffix = format!("_{name}");
            if let Err(code) =
                write_artifacts(dir, &suffix, &traces, &report, config.snapshots, out)
            {
                return code;
            }
        }
        any_aborted |= count_aborted(&traces, out);
        rows.push(report);
    }

    let mut watched = vec![sys.initial().clone()];
    watched.extend(ends.problematic.iter().cloned());

    match config.report_format {
        ReportFormat::Table => {
            let _ = writeln!(out, "{}", compare_table(&rows, &watched));
        }
        ReportFormat::Structured => {
            let _ = out.write_all(&serialize_report_list(&rows));
            let _ = writeln!(out);
        }
    }
    if let Some(dir) = &config.output_dir {
        let csv = compare_csv(&rows, &watched);
        if fs::write(dir.join("compare.csv"), csv).is_err() {
            let _ = writeln!(out, "error: cannot write compare.csv");
            return EXIT_USAGE;
        }
    }
    if any_aborted {
        return EXIT_DOMAIN;
    }
    EXIT_OK
}

fn serialize_report_list(reports: &[SimulationReport]) -> Vec<u8> {
    ins_core::storyio::canonical_json(&reports)
}

/// Exact goal-absorption probability per transient state.
pub fn cmd_oracle(story_path: &str, out: &mut dyn Write) -> i32 {
    let (sys, model) = match load_valid_story(story_path, out) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    match absorption_probabilities(&sys, &model, OracleMode::Vanilla) {
        Ok(report) => {
            let ends = classify_end_states(&sys).expect("validated system classifies");
            for (state, p) in &report.probabilities {
                if !ends.is_end(state) {
                    let _ = writeln!(out, "x[{state}] = {p:.9}");
                }
            }
            let _ = writeln!(out, "residual = {:e}", report.residual);
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            EXIT_DOMAIN
        }
    }
}

fn pad(value: &str, width: usize) -> String {
    format!("{value:>width$}")
}

/// Fixed columns for `simulate`: one row per report.
pub fn summary_table(reports: &[SimulationReport]) -> String {
    let mut lines = vec![format!(
        "{:<10} {} {} {} {}",
        "manager",
        pad("n_runs", 8),
        pad("complete_rate", 14),
        pad("mean_adaptations", 17),
        pad("mean_cancellations", 19),
    )];
    for r in reports {
        lines.push(format!(
            "{:<10} {} {} {} {}",
            r.manager,
            pad(&r.n_runs.to_string(), 8),
            pad(&fmt_canonical_f64(r.complete_rate), 14),
            pad(&fmt_canonical_f64(r.mean_adaptations), 17),
            pad(&fmt_canonical_f64(r.mean_cancellations), 19),
        ));
    }
    lines.join("\n")
}

/// Comparison surface: per-manager success rate, intervention means, and
/// visits at the initial and each problematic state.
pub fn compare_table(reports: &[SimulationReport], watched: &[StateId]) -> String {
    let mut header = format!(
        "{:<10} {} {} {}",
        "manager",
        pad("complete_rate", 14),
        pad("mean_adaptations", 17),
        pad("mean_cancellations", 19),
    );
    for s in watched {
        header.push(' ');
        header.push_str(&pad(&format!("visits_{s}"), format!("visits_{s}").len().max(8)));
    }
    let mut lines = vec![header];
    for r in reports {
        let mut line = format!(
            "{:<10} {} {} {}",
            r.manager,
            pad(&fmt_canonical_f64(r.complete_rate), 14),
            pad(&fmt_canonical_f64(r.mean_adaptations), 17),
            pad(&fmt_canonical_f64(r.mean_cancellations), 19),
        );
        for s in watched {
            let width = format!("visits_{s}").len().max(8);
            line.push(' ');
            line.push_str(&pad(&r.visits(s).to_string(), width));
        }
        lines.push(line);
    }
    lines.join("\n")
}

pub fn compare_csv(reports: &[SimulationReport], watched: &[StateId]) -> String {
    let mut header = vec![
        "manager".to_string(),
        "n_runs".to_string(),
        "complete_rate".to_string(),
        "mean_adaptations".to_string(),
        "mean_cancellations".to_string(),
    ];
    header.extend(watched.iter().map(|s| format!("visits_{s}")));
    let mut lines = vec![header.join(",")];
    for r in reports {
        let mut row = vec![
            r.manager.clone(),
            r.n_runs.to_string(),
            fmt_canonical_f64(r.complete_rate),
            fmt_canonical_f64(r.mean_adaptations),
            fmt_canonical_f64(r.mean_cancellations),
        ];
        row.extend(watched.iter().map(|s| r.visits(s).to_string()));
        lines.push(row.join(","));
    }
    lines.push(String::new());
    lines.join("\n")
}

/// Interactive stepping: the human replaces the sampler for actions, the
/// session RNG draws events on inaction, and the chosen manager resolves
/// every step exactly as in batch runs. Returns the exit code by outcome.
pub fn play_session(
    story_path: &str,
    manager_name: &str,
    seed: u64,
    input: &mut dyn BufRead,
    out: &mut dyn Write,
) -> i32 {
    let (sys, model) = match load_valid_story(story_path, out) {
        Ok(pair) => pair,
        Err(code) => return code,
    };
    let Some(manager) = manager_by_name(manager_name) else {
        let _ = writeln!(
            out,
            "error: unknown manager {manager_name:?} (available: {})",
            ins_core::MANAGER_NAMES.join(", ")
        );
        return EXIT_USAGE;
    };
    let ends = classify_end_states(&sys).expect("validated system classifies");
    let mut rng = SimRng::new(seed);
    let mut overlay = Overlay::new();
    let mut ctx = RunContext::new(sys.initial().clone());
    let mut plan = vec![sys.initial().clone()];

    let finish = |out: &mut dyn Write, plan: &[StateId], note: &str| -> i32 {
        match is_complete_plan(&sys, plan) {
            Ok(check) if check.is_complete() => {
                let _ = writeln!(out, "plan complete");
                EXIT_OK
            }
            Ok(check) => {
                let issue = check
                    .issue()
                    .map(|i| i.code().to_string())
                    .unwrap_or_default();
                let _ = writeln!(out, "plan incomplete ({})", if note.is_empty() { issue } else { note.to_string() });
                EXIT_DOMAIN
            }
            Err(_) => {
                let _ = writeln!(out, "plan incomplete ({note})");
                EXIT_DOMAIN
            }
        }
    };

    loop {
        let current = ctx.current().clone();
        let _ = writeln!(out, "state: {current}");
        if ends.goal.contains(&current) {
            return finish(out, &plan, "");
        }
        let enabled = successors(&sys, &overlay, &current).expect("current state is declared");
        if enabled.is_empty() {
            // the manager gets one chance to extend the transition set
            match resolve_step(&sys, &ends, &*manager, &model, &mut overlay, &mut ctx, None) {
                Ok(step) => {
                    let _ = writeln!(out, "the manager intervenes: {} -> {}", step.decision.chosen, step.to);
                    plan.push(step.to.clone());
                    continue;
                }
                Err(PolicyError::Stuck(_)) => {
                    let note = if ends.problematic.contains(&current) {
                        "problematic"
                    } else {
                        "stuck"
                    };
                    return finish(out, &plan, note);
                }
                Err(_) => return finish(out, &plan, "aborted"),
            }
        }

        let actions: Vec<_> = enabled
            .iter()
            .filter(|(via, _)| {
                overlay.kind_of(&sys, via) == Some(TransitionKind::Action)
            })
            .cloned()
            .collect();
        for (i, (via, to)) in actions.iter().enumerate() {
            let _ = writeln!(out, "  [{}] {via} -> {to}", i + 1);
        }
        let _ = writeln!(out, "choose an action, press enter to wait, or q to quit:");
        let mut line = String::new();
        if input.read_line(&mut line).unwrap_or(0) == 0 {
            return finish(out, &plan, "quit");
        }
        let line = line.trim();
        if line == "q" {
            return finish(out, &plan, "quit");
        }
        let sampled = if line.is_empty() {
            match sample_event(&sys, &model, &overlay, &current, &mut rng) {
                Some(e) => e,
                None => {
                    let _ = writeln!(out, "nothing happens");
                    continue;
                }
            }
        } else {
            match line.parse::<usize>() {
                Ok(k) if (1..=actions.len()).contains(&k) => actions[k - 1].0.clone(),
                _ => {
                    let _ = writeln!(out, "invalid choice");
                    continue;
                }
            }
        };
        match resolve_step(
            &sys,
            &ends,
            &*manager,
            &model,
            &mut overlay,
            &mut ctx,
            Some(sampled),
        ) {
            Ok(step) => {
                match step.decision.intervention {
                    Intervention::Cancellation => {
                        let _ = writeln!(out, "the manager cancels {}; still at {}", step.decision.chosen, step.to);
                    }
                    Intervention::Adaptation => {
                        let _ = writeln!(out, "the manager adapts: {} -> {}", step.decision.chosen, step.to);
                    }
                    Intervention::None => {
                        let _ = writeln!(out, "{} -> {}", step.decision.chosen, step.to);
                    }
                }
                plan.push(step.to.clone());
            }
            Err(PolicyError::Stuck(_)) => {
                let note = if ends.problematic.contains(ctx.current()) {
                    "problematic"
                } else {
                    "stuck"
                };
                return finish(out, &plan, note);
            }
            Err(_) => return finish(out, &plan, "aborted"),
        }
    }
}

/// Draw one enabled event by weight, for the player-waits case.
fn sample_event(
    sys: &NarrativeSystem,
    model: &PlayerModel,
    overlay: &Overlay,
    s: &StateId,
    rng: &mut SimRng,
) -> Option<ins_core::TransitionId> {
    let enabled = successors(sys, overlay, s).ok()?;
    let events: Vec<_> = enabled
        .into_iter()
        .filter(|(via, _)| overlay.kind_of(sys, via) == Some(TransitionKind::Event))
        .collect();
    let total: f64 = events
        .iter()
        .map(|(via, _)| effective_weight(model, overlay, s, via))
        .sum();
    if total <= 0.0 {
        return None;
    }
    let u = rng.next_f64() * total;
    let mut acc = 0.0;
    for (via, _) in &events {
        acc += effective_weight(model, overlay, s, via);
        if u < acc {
            return Some(via.clone());
        }
    }
    events.last().map(|(via, _)| via.clone())
}
