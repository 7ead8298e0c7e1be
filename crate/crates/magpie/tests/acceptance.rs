//! Acceptance suite: one test per shipped guarantee, each ending in a single
//! `PASS`/`FAIL`-style line (run with `--nocapture` to see them). Guarantees
//! cover report arithmetic, measurement stability, edit-space counting,
//! search effectiveness against a brute-force oracle, minimization and
//! combination optimality, budget accounting, determinism and round-trips,
//! evaluator robustness, and fold integrity — each with an explicit runtime
//! bound checked inside the test.

use std::cmp::Ordering;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use magpie::edit::{Edit, EditKind, Patch};
use magpie::evaluator::Evaluator;
use magpie::fitness::{
    compare, compare_values, measure_stability, FitnessReport, VariantStatus,
};
use magpie::fixtures::{
    best_subsequence, brute_force_optimum, finite_param_value_count, fixture_dir, materialize,
    random_fixture_model, sample_random_patch,
};
use magpie::model::TargetModel;
use magpie::protocol::{combine_patches, minimize_patch, plan_folds, report_improvement};
use magpie::scenario::Scenario;
use magpie::search::{local_search, SearchConfig};
use magpie::space::enumerate_edit_space;
use magpie::xml::XmlTree;

fn toy_bin() -> &'static str {
    env!("CARGO_BIN_EXE_magpie-toy")
}

/// Copies the named fixture into a temp dir and loads its scenario + model.
fn setup(fixture: &str) -> (tempfile::TempDir, Scenario, TargetModel) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let cfg = materialize(fixture, toy_bin(), tmp.path()).expect("materialize");
    let scenario = Scenario::load(&cfg).expect("scenario");
    let model = scenario.load_model().expect("model");
    (tmp, scenario, model)
}

fn clean_report(objectives: &[f64]) -> FitnessReport {
    FitnessReport {
        status: VariantStatus::Clean,
        objectives: Some(objectives.to_vec()),
        per_instance: Vec::new(),
        cache_hit: false,
        ordinal: 0,
    }
}

fn check_runtime(t0: Instant, bound_s: f64, what: &str) {
    let elapsed = t0.elapsed().as_secs_f64();
    assert!(
        elapsed < bound_s,
        "{what}: took {elapsed:.2}s, bound {bound_s}s"
    );
}

#[test]
fn report_arithmetic_reproduces_reference_percentages() {
    let t0 = Instant::now();
    let cases: [(f64, f64, f64); 3] = [
        (8560025063208.7, 7806500120218.0, -8.80),
        (84336965193275.0, 7806500120218.0, -90.74),
        (13884363297634.4, 12202547786121.0, -12.11),
    ];
    let mut got = Vec::new();
    for (baseline, variant, expected) in cases {
        let pct = report_improvement(&clean_report(&[baseline]), &clean_report(&[variant]))
            .expect("report")[0];
        assert!(
            (pct - expected).abs() <= 0.01,
            "improvement for {variant} vs {baseline}: got {pct}, expected {expected} ±0.01"
        );
        got.push(pct);
    }
    check_runtime(t0, 1.0, "report arithmetic");
    println!("PASS report arithmetic: {got:?} == [-8.80, -90.74, -12.11] ±0.01");
}

#[test]
fn stability_cov_matches_reference_value() {
    let t0 = Instant::now();
    // Two samples constructed to have mean 12370 and population stddev 361.
    let series = vec![vec![12009.0], vec![12731.0]];
    let stats = measure_stability(&series).expect("stats");
    assert_eq!(stats.len(), 1);
    assert!((stats[0].mean - 12370.0).abs() < 1e-9);
    assert!((stats[0].stddev - 361.0).abs() < 1e-9);
    assert!(
        (stats[0].cov - 0.0292).abs() <= 0.0001,
        "cov {} not within 0.0292 ± 0.0001",
        stats[0].cov
    );
    check_runtime(t0, 1.0, "stability arithmetic");
    println!("PASS stability: cov {:.4} == 0.0292 ±0.0001", stats[0].cov);
}

#[test]
fn space_counts_equal_enumeration_and_closed_forms() {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for round in 0..50 {
        let model = random_fixture_model(&mut rng).expect("random model");
        let space = enumerate_edit_space(&model, &EditKind::ALL, 10, &mut rng);

        let stmts: Vec<u64> = model.files.iter().map(|f| f.stmt_nodes.len() as u64).collect();
        let numbers: u64 = model.files.iter().map(|f| f.number_nodes.len() as u64).sum();
        let expect = |kind: EditKind| -> u64 {
            match kind {
                EditKind::ParamSet => finite_param_value_count(&model) as u64,
                EditKind::StmtDelete => stmts.iter().sum(),
                EditKind::StmtReplace => stmts.iter().map(|&s| s * s.saturating_sub(1)).sum(),
                EditKind::StmtInsert => stmts.iter().map(|&s| 2 * s * s).sum(),
                EditKind::ConstantSet => 3 * numbers,
                EditKind::ConstantUpdate => 6 * numbers,
            }
        };

        for kind in EditKind::ALL {
            let counted = space.count(kind);
            let enumerated = space.edits_of_kind(kind).len() as u64;
            let formula = expect(kind);
            assert_eq!(
                counted, enumerated,
                "round {round}: {kind:?} count {counted} != enumeration {enumerated}"
            );
            assert_eq!(
                counted, formula,
                "round {round}: {kind:?} count {counted} != closed form {formula}"
            );
        }
    }
    check_runtime(t0, 10.0, "space counting");
    println!("PASS space counts: 50/50 random models, counts == enumeration == closed forms");
}

#[test]
fn search_reaches_brute_force_optimum() {
    let t0 = Instant::now();
    let fixtures: [(&str, EditKind); 2] = [
        ("param-knob", EditKind::ParamSet),
        ("dead-stmt", EditKind::StmtDelete),
    ];
    for (name, family) in fixtures {
        let (_tmp, scenario, model) = setup(name);
        let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
        let instances = scenario.train_instances.clone();
        let families = vec![family];

        let mut rng = ChaCha8Rng::seed_from_u64(404);
        let (_, optimum) =
            brute_force_optimum(&evaluator, &instances, &families, 1, 1_000_000, &mut rng)
                .expect("oracle");

        let mut hits = 0;
        for seed in 0..10 {
            let config = SearchConfig::new(families.clone(), 200, seed);
            let trace = local_search(&evaluator, &instances, &config).expect("search");
            if compare(&trace.best_report, &optimum).expect("compare") != Ordering::Greater {
                hits += 1;
            }
        }
        assert!(hits >= 9, "{name}: search matched the oracle in only {hits}/10 seeds");
        println!("PASS search vs oracle: {name} {hits}/10 seeds at budget 200");
    }
    check_runtime(t0, 30.0, "search effectiveness");
}

#[test]
fn minimization_matches_subset_brute_force() {
    let t0 = Instant::now();
    let (_tmp, scenario, model) = setup("mixed");
    let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
    let instances = scenario.train_instances.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..100 {
        let patch = sample_random_patch(&model, &EditKind::ALL, 8, &mut rng).expect("sample");
        let minimized = minimize_patch(&evaluator, &patch, &instances).expect("minimize");
        let min_report = evaluator.evaluate(&minimized, &instances).expect("eval");
        let (_, best_report) = best_subsequence(&evaluator, &patch, &instances).expect("subsets");

        assert_eq!(
            compare(&min_report, &best_report).expect("compare"),
            Ordering::Equal,
            "case {case}: minimize of {:?} got {:?}, subset brute force got {:?}",
            patch.render(),
            min_report.objectives,
            best_report.objectives,
        );

        // No single removal from the minimized patch may strictly improve it.
        for i in 0..minimized.len() {
            let mut shorter = minimized.clone();
            shorter.edits.remove(i);
            let r = evaluator.evaluate(&shorter, &instances).expect("eval");
            assert_ne!(
                compare(&r, &min_report).expect("compare"),
                Ordering::Less,
                "case {case}: dropping edit {i} of {:?} improved fitness",
                minimized.render(),
            );
        }
    }
    check_runtime(t0, 120.0, "minimization oracle");
    println!("PASS minimization: 100/100 random patches match subset brute force, no removable edit");
}

#[test]
fn combination_beats_both_inputs() {
    let t0 = Instant::now();
    let (_tmp, scenario, model) = setup("two-gain");
    let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
    let instances = scenario.train_instances.clone();

    for seed in 0..10u64 {
        let tune = local_search(
            &evaluator,
            &instances,
            &SearchConfig::new(vec![EditKind::ParamSet], 200, 1000 + seed),
        )
        .expect("param search");
        let delete = local_search(
            &evaluator,
            &instances,
            &SearchConfig::new(vec![EditKind::StmtDelete], 200, 2000 + seed),
        )
        .expect("delete search");

        let combined =
            combine_patches(&evaluator, &[tune.best_patch.clone(), delete.best_patch.clone()], &instances)
                .expect("combine");
        let r_combined = evaluator.evaluate(&combined, &instances).expect("eval");

        assert_eq!(
            compare(&r_combined, &tune.best_report).expect("compare"),
            Ordering::Less,
            "seed {seed}: combination not strictly better than the tuning patch"
        );
        assert_eq!(
            compare(&r_combined, &delete.best_report).expect("compare"),
            Ordering::Less,
            "seed {seed}: combination not strictly better than the deletion patch"
        );

        let mut concat = tune.best_patch.clone();
        concat.edits.extend(delete.best_patch.edits.iter().cloned());
        let (_, best) = best_subsequence(&evaluator, &concat, &instances).expect("subsets");
        assert_eq!(
            compare(&r_combined, &best).expect("compare"),
            Ordering::Equal,
            "seed {seed}: combination missed the subset optimum"
        );
    }
    check_runtime(t0, 30.0, "combination");
    println!("PASS combination: 10/10 seeds strictly beat both inputs and match the subset optimum");
}

#[test]
fn accepted_fitness_is_monotone_and_budget_is_exact() {
    let t0 = Instant::now();
    let (_tmp, scenario, model) = setup("mixed");
    let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
    let instances = scenario.train_instances.clone();
    let families: Vec<EditKind> = EditKind::ALL.to_vec();

    let budget = 40;
    for seed in 0..20u64 {
        let trace = local_search(
            &evaluator,
            &instances,
            &SearchConfig::new(families.clone(), budget, seed),
        )
        .expect("search");

        assert_eq!(
            trace.evaluations, budget,
            "seed {seed}: charged {} evaluations for budget {budget}",
            trace.evaluations
        );

        let mut last = trace
            .baseline_report
            .objectives
            .clone()
            .expect("clean baseline");
        for step in &trace.steps {
            if !step.accepted {
                continue;
            }
            let objs = step.objectives.as_ref().expect("accepted steps are clean");
            assert_ne!(
                compare_values(objs, &last).expect("compare"),
                Ordering::Greater,
                "seed {seed} step {}: accepted fitness rose from {last:?} to {objs:?}",
                step.step
            );
            last = objs.clone();
        }
    }
    check_runtime(t0, 30.0, "monotonicity and budget");
    println!("PASS monotone acceptance: 20/20 seeds, charged == budget == {budget}");
}

#[test]
fn determinism_and_round_trips() {
    let t0 = Instant::now();

    // Byte-identical traces from independent evaluators with the same seed.
    let run = || {
        let (_tmp, scenario, model) = setup("param-knob");
        let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
        let instances = scenario.train_instances.clone();
        let config = SearchConfig::new(vec![EditKind::ParamSet], 60, 8);
        local_search(&evaluator, &instances, &config)
            .expect("search")
            .to_jsonl()
    };
    let first = run();
    let second = run();
    assert_eq!(first, second, "repeated seeded searches produced different traces");

    // Parse/serialize identity on 1000 random patches.
    let (_tmp, _scenario, model) = setup("mixed");
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for case in 0..1000 {
        let patch = sample_random_patch(&model, &EditKind::ALL, 8, &mut rng).expect("sample");
        let text = patch.render();
        let reparsed = Patch::parse(&text).expect("parse");
        assert_eq!(reparsed, patch, "case {case}: parse(render()) changed the patch");
        assert_eq!(reparsed.render(), text, "case {case}: render not stable");
    }

    // Lossless XML render on every shipped fixture program.
    let mut checked = 0;
    for name in ["param-knob", "dead-stmt", "two-gain", "synergy", "mixed"] {
        let path = fixture_dir(name).join("program.xml");
        let text = std::fs::read_to_string(&path).expect("fixture xml");
        let tree = XmlTree::parse(&text, "program.xml").expect("parse xml");
        assert_eq!(tree.render(), text, "{name}: XML render is not byte-identical");
        checked += 1;
    }

    check_runtime(t0, 30.0, "determinism and round-trips");
    println!(
        "PASS determinism: identical traces, 1000/1000 patch round-trips, {checked}/5 lossless fixture renders"
    );
}

#[test]
fn evaluation_robustness() {
    let t0 = Instant::now();

    // A variant that sleeps far past the deadline is reported TIMEOUT within
    // deadline + 1 s.
    let tmp = tempfile::tempdir().expect("tempdir");
    std::fs::write(tmp.path().join("t.xml"), "<unit><stmt>work 1</stmt></unit>").unwrap();
    std::fs::write(tmp.path().join("one.txt"), "i1\n").unwrap();
    std::fs::write(
        tmp.path().join("scenario.cfg"),
        "target_files=t.xml\nrun_cmd=sleep 30 # {INST}\nrun_timeout_s=0.5\ntrain_instances_file=one.txt\n",
    )
    .unwrap();
    let scenario = Scenario::load(&tmp.path().join("scenario.cfg")).expect("scenario");
    let model = scenario.load_model().expect("model");
    let evaluator = Evaluator::ephemeral(&scenario, &model).expect("evaluator");
    let started = Instant::now();
    let report = evaluator
        .evaluate(&Patch::empty(), &scenario.train_instances)
        .expect("evaluate");
    let took = started.elapsed().as_secs_f64();
    assert_eq!(report.status, VariantStatus::Timeout);
    assert!(took < 0.5 + 1.0, "timeout took {took:.2}s, bound 1.5s");

    // A forbidden configuration short-circuits without launching anything.
    let (_tmp2, scenario2, model2) = setup("synergy");
    let evaluator2 = Evaluator::ephemeral(&scenario2, &model2).expect("evaluator");
    let forbidden = Patch::new(vec![Edit::ParamSet {
        param: "gamma".to_string(),
        value: "b".to_string(),
    }]);
    let report2 = evaluator2
        .evaluate(&forbidden, &scenario2.train_instances)
        .expect("evaluate");
    assert_eq!(report2.status, VariantStatus::InvalidConfig);
    assert_eq!(evaluator2.launches(), 0, "invalid config launched a process");

    // Repeating an evaluation is served from the cache, launching nothing.
    let baseline = evaluator2
        .evaluate(&Patch::empty(), &scenario2.train_instances)
        .expect("evaluate");
    assert!(!baseline.cache_hit);
    let launches_before = evaluator2.launches();
    let repeat = evaluator2
        .evaluate(&Patch::empty(), &scenario2.train_instances)
        .expect("evaluate");
    assert!(repeat.cache_hit, "repeat evaluation missed the cache");
    assert_eq!(repeat.status, VariantStatus::Clean);
    assert_eq!(
        evaluator2.launches(),
        launches_before,
        "cache hit launched a process"
    );

    check_runtime(t0, 30.0, "robustness");
    println!(
        "PASS robustness: TIMEOUT in {took:.2}s (< 1.5s), invalid config and cache hit with zero launches"
    );
}

#[test]
fn fold_plan_partitions_instances() {
    let t0 = Instant::now();
    let instances: Vec<String> = (0..100).map(|i| format!("inst-{i:03}")).collect();
    let plan = plan_folds(&instances, 10, 42).expect("plan");
    assert_eq!(plan.folds.len(), 10);

    let mut seen = std::collections::BTreeSet::new();
    for (i, fold) in plan.folds.iter().enumerate() {
        assert_eq!(fold.members.len(), 10, "fold {i} has the wrong size");
        for m in &fold.members {
            assert!(seen.insert(m.clone()), "instance {m} appears in two folds");
        }
        assert!(fold.training.len() <= 10, "fold {i} training exceeds the cap");
        for t in &fold.training {
            assert!(fold.members.contains(t), "fold {i} trains on a non-member");
        }
        for v in &fold.validation {
            assert!(
                !fold.members.contains(v),
                "fold {i} validates on its own member {v}"
            );
        }
        assert_eq!(
            fold.validation.len(),
            instances.len() - fold.members.len(),
            "fold {i} validation does not cover the other folds"
        );
    }
    assert_eq!(seen.len(), instances.len(), "folds do not cover every instance");

    check_runtime(t0, 5.0, "fold integrity");
    println!("PASS folds: k=10 over 100 instances partitions exactly, training capped at 10");
}
