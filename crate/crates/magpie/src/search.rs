//! First-improvement local search over patches.
//!
//! The best patch starts empty. Each step mutates it — with probability
//! `p_remove` (when non-empty) a uniformly chosen edit is removed, otherwise
//! a freshly sampled edit is appended, its kind drawn uniformly from the
//! enabled families — and the mutant is evaluated. A mutant no worse than the
//! incumbent replaces it (`accept_equal` keeps ties, the default). Every
//! mutant evaluation consumes one unit of budget, cache hits included; the
//! baseline evaluation is free.
//!
//! Searching several families at once needs no separate mechanism: kind-first
//! uniform sampling over the enabled families IS the joint search, so
//! [`joint_search`] is [`local_search`] under a different default budget.

use std::cmp::Ordering;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::edit::{EditKind, Patch};
use crate::error::{MagpieError, Result};
use crate::evaluator::Evaluator;
use crate::fitness::{compare, FitnessReport, VariantStatus};
use crate::space::sample_random_edit;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub families: Vec<EditKind>,
    /// Maximum mutant evaluations; 0 means "no steps, return the baseline".
    pub budget: u64,
    pub seed: u64,
    /// Probability of trying a removal instead of an append when the current
    /// best patch is non-empty.
    pub p_remove: f64,
    /// Accept mutants that tie the incumbent (first-improvement with ≤).
    pub accept_equal: bool,
}

impl SearchConfig {
    pub fn new(families: Vec<EditKind>, budget: u64, seed: u64) -> SearchConfig {
        SearchConfig {
            families,
            budget,
            seed,
            p_remove: 0.5,
            accept_equal: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceStep {
    pub step: u64,
    /// "append" or "remove".
    pub action: &'static str,
    /// Text of the appended or removed edit.
    pub edit: String,
    /// Index the removal took the edit from, for remove steps.
    pub removed_index: Option<usize>,
    pub status: VariantStatus,
    pub objectives: Option<Vec<f64>>,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchTrace {
    pub steps: Vec<TraceStep>,
    pub best_patch: Patch,
    pub best_report: FitnessReport,
    pub baseline_report: FitnessReport,
    /// Budget units actually consumed (= steps taken).
    pub evaluations: u64,
}

impl SearchTrace {
    /// One JSON object per step plus a final summary line. Wall-clock data is
    /// deliberately excluded so identical seeds produce byte-identical
    /// traces.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("trace steps serialize"));
            out.push('\n');
        }
        let summary = json!({
            "best_patch": self.best_patch.render(),
            "best_status": self.best_report.status.as_str(),
            "best_objectives": self.best_report.objectives,
            "baseline_objectives": self.baseline_report.objectives,
            "evaluations": self.evaluations,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

fn check_config(config: &SearchConfig) -> Result<()> {
    if config.families.is_empty() {
        return Err(MagpieError::EmptySpace(
            "no edit families enabled".to_string(),
        ));
    }
    if !(0.0..1.0).contains(&config.p_remove) {
        return Err(MagpieError::Scenario(format!(
            "p_remove must be in [0,1), got {}",
            config.p_remove
        )));
    }
    Ok(())
}

pub fn local_search(
    evaluator: &Evaluator,
    instances: &[String],
    config: &SearchConfig,
) -> Result<SearchTrace> {
    check_config(config)?;
    let model = evaluator.model;

    // Fail fast when an enabled family has no edits in this model, instead of
    // erroring at a seed-dependent step halfway through the budget.
    let mut probe = ChaCha8Rng::seed_from_u64(config.seed);
    for &family in &config.families {
        sample_random_edit(model, family, &mut probe)?;
    }

    let baseline = evaluator.evaluate(&Patch::empty(), instances)?;
    if !baseline.is_clean() {
        return Err(MagpieError::BaselineFailure(baseline.status.to_string()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best_patch = Patch::empty();
    let mut best_report = baseline.clone();
    let mut steps = Vec::new();
    let mut evaluations = 0u64;

    for step in 1..=config.budget {
        let try_remove = !best_patch.is_empty() && rng.random_bool(config.p_remove);
        let (mutant, action, edit_text, removed_index) = if try_remove {
            let idx = rng.random_range(0..best_patch.len());
            let mut edits = best_patch.edits.clone();
            let removed = edits.remove(idx);
            (Patch { edits }, "remove", removed.to_string(), Some(idx))
        } else {
            let family = config.families[rng.random_range(0..config.families.len())];
            let edit = sample_random_edit(model, family, &mut rng)?;
            let mut edits = best_patch.edits.clone();
            edits.push(edit.clone());
            (Patch { edits }, "append", edit.to_string(), None)
        };

        let report = evaluator.evaluate(&mutant, instances)?;
        evaluations += 1;
        let order = compare(&report, &best_report)?;
        let accepted =
            order == Ordering::Less || (config.accept_equal && order == Ordering::Equal);
        steps.push(TraceStep {
            step,
            action,
            edit: edit_text,
            removed_index,
            status: report.status,
            objectives: report.objectives.clone(),
            accepted,
        });
        if accepted {
            best_patch = mutant;
            best_report = report;
        }
    }

    Ok(SearchTrace {
        steps,
        best_patch,
        best_report,
        baseline_report: baseline,
        evaluations,
    })
}

/// Search across several edit families at once. Identical to
/// [`local_search`]; exists as a named mode whose conventional budget is the
/// scenario's `joint_budget`. A single enabled family degenerates to plain
/// local search.
pub fn joint_search(
    evaluator: &Evaluator,
    instances: &[String],
    config: &SearchConfig,
) -> Result<SearchTrace> {
    local_search(evaluator, instances, config)
}
