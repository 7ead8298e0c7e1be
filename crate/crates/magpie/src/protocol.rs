//! The experimental pipeline around the search: patch minimization, patch
//! combination, k-fold campaigns, improvement reporting, and per-edit impact
//! ranking.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::edit::{Edit, EditKind, Patch};
use crate::error::{MagpieError, Result};
use crate::evaluator::Evaluator;
use crate::fitness::{compare, compare_values, FitnessReport};
use crate::search::{local_search, SearchConfig, SearchTrace};

/// Two-phase patch minimization on a validation instance set.
///
/// Phase A evaluates every edit alone, ranks the edits from best to worst
/// solo fitness (failing edits last), and rebuilds the patch from empty,
/// reintroducing edits in rank order and keeping one only when it strictly
/// improves the rebuilt patch; kept edits retain their original relative
/// order. That misses edits that only help jointly, so when the full patch
/// still beats the rebuilt one, phase B starts from the full patch instead
/// and sweeps repeatedly over the positions, dropping any edit whose removal
/// does not worsen fitness, until a whole sweep removes nothing. The better
/// of the two candidates wins; ties break toward fewer edits, then toward
/// phase A.
pub fn minimize_patch(
    evaluator: &Evaluator,
    patch: &Patch,
    validation_instances: &[String],
) -> Result<Patch> {
    if patch.is_empty() {
        return Err(MagpieError::EmptyPatch);
    }
    let baseline = evaluator.evaluate(&Patch::empty(), validation_instances)?;
    if !baseline.is_clean() {
        return Err(MagpieError::BaselineFailure(baseline.status.to_string()));
    }

    // Phase A: solo evaluations, stable rank, strict-improvement rebuild.
    let mut solo: Vec<(usize, FitnessReport)> = Vec::with_capacity(patch.len());
    for (i, edit) in patch.edits.iter().enumerate() {
        let report = evaluator.evaluate(&Patch { edits: vec![edit.clone()] }, validation_instances)?;
        solo.push((i, report));
    }
    let mut ranked: Vec<usize> = (0..patch.len()).collect();
    ranked.sort_by(|&a, &b| {
        compare(&solo[a].1, &solo[b].1).expect("same scenario, same arity")
    });

    // The rank decides the order edits are *considered* in; kept edits stay
    // in their original patch order so the result is a true subsequence
    // (edit semantics are order-sensitive, e.g. stacked constant changes).
    let mut kept: Vec<usize> = Vec::new();
    let mut rebuilt_report = baseline.clone();
    for &i in &ranked {
        let mut indices = kept.clone();
        let pos = indices.partition_point(|&j| j < i);
        indices.insert(pos, i);
        let candidate = Patch {
            edits: indices.iter().map(|&j| patch.edits[j].clone()).collect(),
        };
        let report = evaluator.evaluate(&candidate, validation_instances)?;
        if compare(&report, &rebuilt_report)? == Ordering::Less {
            kept = indices;
            rebuilt_report = report;
        }
    }
    let rebuilt = Patch {
        edits: kept.iter().map(|&j| patch.edits[j].clone()).collect(),
    };

    // Phase B runs only when the full patch still beats the rebuilt one — the
    // signature of edits that pay off jointly but not alone.
    let full_report = evaluator.evaluate(patch, validation_instances)?;
    if compare(&full_report, &rebuilt_report)? != Ordering::Less {
        return Ok(rebuilt);
    }

    let mut swept = patch.clone();
    let mut swept_report = full_report;
    loop {
        let mut removed_any = false;
        let mut pos = 0;
        while pos < swept.len() {
            let mut candidate = swept.clone();
            candidate.edits.remove(pos);
            let report = evaluator.evaluate(&candidate, validation_instances)?;
            if compare(&report, &swept_report)? != Ordering::Greater {
                swept = candidate;
                swept_report = report;
                removed_any = true;
                // The next edit has shifted into this position.
            } else {
                pos += 1;
            }
        }
        if !removed_any {
            break;
        }
    }

    match compare(&swept_report, &rebuilt_report)? {
        Ordering::Less => Ok(swept),
        Ordering::Greater => Ok(rebuilt),
        Ordering::Equal => {
            if swept.len() < rebuilt.len() {
                Ok(swept)
            } else {
                Ok(rebuilt)
            }
        }
    }
}

/// Concatenates patches in order and minimizes the result on the validation
/// instances. Later edits win conflicts (e.g. two assignments to the same
/// parameter), and minimization then drops the dead earlier one.
pub fn combine_patches(
    evaluator: &Evaluator,
    patches: &[Patch],
    validation_instances: &[String],
) -> Result<Patch> {
    if patches.len() < 2 {
        return Err(MagpieError::NotEnoughPatches(patches.len()));
    }
    let mut combined = Patch::empty();
    for p in patches {
        combined.edits.extend(p.edits.iter().cloned());
    }
    if combined.is_empty() {
        return Err(MagpieError::EmptyPatch);
    }
    minimize_patch(evaluator, &combined, validation_instances)
}

#[derive(Debug, Clone, Serialize)]
pub struct Fold {
    /// Instances searched on: the first `min(10, fold size)` of the fold.
    pub training: Vec<String>,
    /// Instances of all the other folds.
    pub validation: Vec<String>,
    /// Every instance assigned to this fold.
    pub members: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// Seeded shuffle of the training instances partitioned into k folds whose
/// sizes differ by at most one (the first `n mod k` folds get the extra
/// instance).
pub fn plan_folds(instances: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(MagpieError::Fold("k must be at least 1".to_string()));
    }
    if k > instances.len() {
        return Err(MagpieError::Fold(format!(
            "k={k} exceeds the training-set size {}",
            instances.len()
        )));
    }
    let mut shuffled: Vec<String> = instances.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let base = n / k;
    let extra = n % k;
    let mut bounds = Vec::with_capacity(k + 1);
    let mut offset = 0;
    bounds.push(0);
    for i in 0..k {
        offset += base + usize::from(i < extra);
        bounds.push(offset);
    }

    let mut folds = Vec::with_capacity(k);
    for i in 0..k {
        let members: Vec<String> = shuffled[bounds[i]..bounds[i + 1]].to_vec();
        let training: Vec<String> = members.iter().take(10).cloned().collect();
        let validation: Vec<String> = shuffled[..bounds[i]]
            .iter()
            .chain(&shuffled[bounds[i + 1]..])
            .cloned()
            .collect();
        folds.push(Fold {
            training,
            validation,
            members,
        });
    }
    Ok(FoldPlan { k, folds })
}

#[derive(Debug, Clone)]
pub struct CampaignConfig {
    pub families: Vec<EditKind>,
    /// Search budget per fold.
    pub budget: u64,
    pub k: usize,
    pub seed: u64,
    /// Test-set measurements per variant; values above 1 bypass the cache so
    /// each repeat actually runs.
    pub test_repeats: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub trace: SearchTrace,
    pub minimized: Patch,
    pub validation_baseline: FitnessReport,
    pub validation_report: FitnessReport,
    /// Per-objective validation fitness divided by the baseline's on the same
    /// validation subset; the cross-fold selection key.
    pub ratio: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CampaignResult {
    pub folds: Vec<FoldOutcome>,
    pub selected_fold: usize,
    pub selected_patch: Patch,
    pub test_repeats: usize,
    pub baseline_test: FitnessReport,
    pub variant_test: FitnessReport,
    /// Per-objective percentage change of the selected variant over the
    /// baseline on the test set; negative is improvement.
    pub improvement_pct: Vec<f64>,
}

fn ratio_to_baseline(variant: &FitnessReport, baseline: &FitnessReport) -> Result<Vec<f64>> {
    let v = variant.objectives.as_ref().ok_or(MagpieError::NotClean)?;
    let b = baseline.objectives.as_ref().ok_or(MagpieError::NotClean)?;
    if v.len() != b.len() {
        return Err(MagpieError::ArityMismatch(v.len(), b.len()));
    }
    v.iter()
        .zip(b)
        .enumerate()
        .map(|(i, (&vi, &bi))| {
            if bi == 0.0 {
                Err(MagpieError::ZeroBaseline(i))
            } else {
                Ok(vi / bi)
            }
        })
        .collect()
}

/// Measures a patch on the test set. With `repeats` > 1 every measurement
/// bypasses the cache and the reported objectives are the mean over repeats.
fn test_measurement(
    evaluator: &Evaluator,
    patch: &Patch,
    instances: &[String],
    repeats: usize,
) -> Result<FitnessReport> {
    if repeats <= 1 {
        return evaluator.evaluate(patch, instances);
    }
    let mut reports = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let r = evaluator.evaluate_fresh(patch, instances)?;
        if !r.is_clean() {
            return Ok(r);
        }
        reports.push(r);
    }
    let arity = reports[0].objectives.as_ref().expect("clean").len();
    let mut means = vec![0.0f64; arity];
    for r in &reports {
        for (m, v) in means.iter_mut().zip(r.objectives.as_ref().expect("clean")) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= repeats as f64;
    }
    let mut out = reports.pop().expect("repeats >= 2");
    out.objectives = Some(means);
    Ok(out)
}

/// Runs the full campaign: k-fold split of the training instances, one
/// search per fold on its ≤10 training instances, minimization on the fold's
/// validation instances, cross-fold selection by validation ratio to
/// baseline, and a final measurement of the winner against the baseline on
/// the held-out test set.
pub fn run_campaign(evaluator: &Evaluator, config: &CampaignConfig) -> Result<CampaignResult> {
    let scenario = evaluator.scenario;
    let train = &scenario.train_instances;
    let test = &scenario.test_instances;
    if train.is_empty() {
        return Err(MagpieError::Scenario(
            "campaign needs train_instances_file".to_string(),
        ));
    }
    if test.is_empty() {
        return Err(MagpieError::Scenario(
            "campaign needs test_instances_file".to_string(),
        ));
    }
    if train.iter().any(|t| test.contains(t)) {
        return Err(MagpieError::Scenario(
            "training and test instances overlap".to_string(),
        ));
    }

    let plan = plan_folds(train, config.k, config.seed)?;
    let mut outcomes: Vec<FoldOutcome> = Vec::with_capacity(plan.k);
    for (i, fold) in plan.folds.iter().enumerate() {
        // Seed offset keeps folds reproducible individually and mutually
        // independent; the base seed is reserved for the shuffle.
        let search_config = SearchConfig::new(
            config.families.clone(),
            config.budget,
            config.seed + 1 + i as u64,
        );
        let trace = local_search(evaluator, &fold.training, &search_config)?;
        let minimized = if trace.best_patch.is_empty() {
            Patch::empty()
        } else {
            minimize_patch(evaluator, &trace.best_patch, &fold.validation)?
        };
        let validation_baseline = evaluator.evaluate(&Patch::empty(), &fold.validation)?;
        if !validation_baseline.is_clean() {
            return Err(MagpieError::BaselineFailure(
                validation_baseline.status.to_string(),
            ));
        }
        let validation_report = evaluator.evaluate(&minimized, &fold.validation)?;
        let ratio = ratio_to_baseline(&validation_report, &validation_baseline)?;
        outcomes.push(FoldOutcome {
            fold: i,
            trace,
            minimized,
            validation_baseline,
            validation_report,
            ratio,
        });
    }

    let mut selected = 0usize;
    for i in 1..outcomes.len() {
        if compare_values(&outcomes[i].ratio, &outcomes[selected].ratio)? == Ordering::Less {
            selected = i;
        }
    }
    let selected_patch = outcomes[selected].minimized.clone();

    let baseline_test = test_measurement(evaluator, &Patch::empty(), test, config.test_repeats)?;
    let variant_test = test_measurement(evaluator, &selected_patch, test, config.test_repeats)?;
    let improvement_pct = report_improvement(&baseline_test, &variant_test)?;

    Ok(CampaignResult {
        folds: outcomes,
        selected_fold: selected,
        selected_patch,
        test_repeats: config.test_repeats.max(1),
        baseline_test,
        variant_test,
        improvement_pct,
    })
}

/// Per-objective percentage change of `variant` over `baseline`, rounded to
/// two decimals. Negative values are improvements.
pub fn report_improvement(baseline: &FitnessReport, variant: &FitnessReport) -> Result<Vec<f64>> {
    if !baseline.is_clean() || !variant.is_clean() {
        return Err(MagpieError::NotClean);
    }
    let b = baseline.objectives.as_ref().expect("clean");
    let v = variant.objectives.as_ref().expect("clean");
    if b.len() != v.len() {
        return Err(MagpieError::ArityMismatch(b.len(), v.len()));
    }
    b.iter()
        .zip(v)
        .enumerate()
        .map(|(i, (&bi, &vi))| {
            if bi == 0.0 {
                Err(MagpieError::ZeroBaseline(i))
            } else {
                Ok(((vi - bi) / bi * 100.0 * 100.0).round() / 100.0)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct EditImpact {
    pub edit: String,
    /// Number of input patches containing the edit (duplicates within one
    /// patch count once).
    pub count: usize,
    /// Percentage change of the edit evaluated alone against the baseline,
    /// first objective, rounded to two decimals.
    pub improvement_pct: f64,
}

/// Solo impact ranking across a collection of result patches: how often each
/// distinct edit occurs, and what it is worth on its own. Edits whose solo
/// evaluation fails and edits below the improvement threshold (percent,
/// default 1) are dropped. Sorted by occurrence count, then by improvement,
/// then by edit text.
pub fn rank_edit_impacts(
    evaluator: &Evaluator,
    patches: &[Patch],
    validation_instances: &[String],
    threshold_pct: f64,
) -> Result<Vec<EditImpact>> {
    if patches.is_empty() {
        return Err(MagpieError::Scenario(
            "impact ranking needs at least one patch".to_string(),
        ));
    }
    let baseline = evaluator.evaluate(&Patch::empty(), validation_instances)?;
    if !baseline.is_clean() {
        return Err(MagpieError::BaselineFailure(baseline.status.to_string()));
    }
    let base = baseline.objectives.as_ref().expect("clean")[0];
    if base == 0.0 {
        return Err(MagpieError::ZeroBaseline(0));
    }

    let mut counts: BTreeMap<String, (Edit, usize)> = BTreeMap::new();
    for patch in patches {
        let mut seen = std::collections::BTreeSet::new();
        for edit in &patch.edits {
            let key = edit.to_string();
            if seen.insert(key.clone()) {
                counts.entry(key).or_insert_with(|| (edit.clone(), 0)).1 += 1;
            }
        }
    }

    let mut rows = Vec::new();
    for (text, (edit, count)) in counts {
        let solo = evaluator.evaluate(&Patch { edits: vec![edit] }, validation_instances)?;
        if !solo.is_clean() {
            continue;
        }
        let v = solo.objectives.as_ref().expect("clean")[0];
        let pct = ((v - base) / base * 100.0 * 100.0).round() / 100.0;
        if pct <= -threshold_pct {
            rows.push(EditImpact {
                edit: text,
                count,
                improvement_pct: pct,
            });
        }
    }
    rows.sort_by(|a, b| {
        b.count
            .cmp(&a.count)
            .then(a.improvement_pct.total_cmp(&b.improvement_pct))
            .then(a.edit.cmp(&b.edit))
    });
    Ok(rows)
}
