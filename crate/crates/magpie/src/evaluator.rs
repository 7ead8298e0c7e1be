//! Execution-based fitness: patch → variant → subprocess runs → report.
//!
//! The pipeline is: apply the patch, render the parameter configuration (an
//! invalid configuration short-circuits to INVALID_CONFIG without launching
//! anything), look the variant up in the digest cache, and otherwise write
//! the rendered files into a fresh work directory, run the optional compile
//! step, run each instance under its timeout, extract objectives, and
//! aggregate by arithmetic mean. Reports are cached by variant digest, so two
//! patches with identical rendered effect share one measurement.

use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering as AtomicOrdering};
use std::sync::Mutex;

use serde_json::json;

use crate::cache::{instance_set_id, variant_digest, EvalCache};
use crate::edit::Patch;
use crate::error::{MagpieError, Result};
use crate::exec::run_shell;
use crate::fitness::{FitnessReport, InstanceRecord, MeasurementSource, VariantStatus};
use crate::model::{TargetModel, VariantArtifacts};
use crate::scenario::Scenario;

pub struct Evaluator<'a> {
    pub scenario: &'a Scenario,
    pub model: &'a TargetModel,
    cache: EvalCache,
    ordinal: AtomicU64,
    launches: AtomicU64,
    keep_failures: bool,
    log: Option<Mutex<File>>,
}

impl<'a> Evaluator<'a> {
    /// Evaluator with a persistent cache and JSONL evaluation log under the
    /// scenario's work directory.
    pub fn new(scenario: &'a Scenario, model: &'a TargetModel) -> Result<Evaluator<'a>> {
        Self::with_options(scenario, model, false)
    }

    pub fn with_options(
        scenario: &'a Scenario,
        model: &'a TargetModel,
        keep_failures: bool,
    ) -> Result<Evaluator<'a>> {
        std::fs::create_dir_all(scenario.work_dir.join("evals")).map_err(|e| {
            MagpieError::Workspace(format!(
                "cannot create work dir {}: {e}",
                scenario.work_dir.display()
            ))
        })?;
        let cache = EvalCache::open(&scenario.work_dir.join("cache.jsonl"))?;
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(scenario.work_dir.join("evals.jsonl"))?;
        Ok(Evaluator {
            scenario,
            model,
            cache,
            ordinal: AtomicU64::new(0),
            launches: AtomicU64::new(0),
            keep_failures,
            log: Some(Mutex::new(log)),
        })
    }

    /// Evaluator whose cache lives only in memory and that writes no log;
    /// used for throwaway measurements and in tests.
    pub fn ephemeral(scenario: &'a Scenario, model: &'a TargetModel) -> Result<Evaluator<'a>> {
        std::fs::create_dir_all(scenario.work_dir.join("evals")).map_err(|e| {
            MagpieError::Workspace(format!(
                "cannot create work dir {}: {e}",
                scenario.work_dir.display()
            ))
        })?;
        Ok(Evaluator {
            scenario,
            model,
            cache: EvalCache::in_memory(),
            ordinal: AtomicU64::new(0),
            launches: AtomicU64::new(0),
            keep_failures: false,
            log: None,
        })
    }

    /// Number of evaluations issued so far (cache hits included).
    pub fn evaluations(&self) -> u64 {
        self.ordinal.load(AtomicOrdering::SeqCst)
    }

    /// Number of processes launched so far (compile and run steps).
    pub fn launches(&self) -> u64 {
        self.launches.load(AtomicOrdering::SeqCst)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.len()
    }

    /// Appends a free-form header object to the evaluation log.
    pub fn log_header(&self, header: &serde_json::Value) -> Result<()> {
        if let Some(log) = &self.log {
            let mut f = log.lock().unwrap();
            writeln!(f, "{header}")?;
        }
        Ok(())
    }

    pub fn evaluate(&self, patch: &Patch, instances: &[String]) -> Result<FitnessReport> {
        self.eval_inner(patch, instances, true)
    }

    /// Measurement that neither reads nor writes the cache — used for
    /// repeated test-set measurements where each repeat must actually run.
    pub fn evaluate_fresh(&self, patch: &Patch, instances: &[String]) -> Result<FitnessReport> {
        self.eval_inner(patch, instances, false)
    }

    fn eval_inner(
        &self,
        patch: &Patch,
        instances: &[String],
        use_cache: bool,
    ) -> Result<FitnessReport> {
        if instances.is_empty() {
            return Err(MagpieError::Scenario(
                "cannot evaluate on an empty instance set".to_string(),
            ));
        }
        let artifacts = self.model.apply_patch(patch)?;
        let rendered = self.model.space.render_configuration(&artifacts.assignment)?;
        let digest = variant_digest(
            &artifacts,
            &rendered.text,
            rendered.valid,
            &instance_set_id(instances),
        );
        let ordinal = self.ordinal.fetch_add(1, AtomicOrdering::SeqCst) + 1;

        if use_cache {
            if let Some(mut hit) = self.cache.get(&digest) {
                hit.cache_hit = true;
                hit.ordinal = ordinal;
                self.log_eval(patch, &digest, &hit)?;
                return Ok(hit);
            }
        }

        let mut report = if !rendered.valid {
            // Forbidden parameter combination: rejected before any process
            // starts.
            FitnessReport {
                status: VariantStatus::InvalidConfig,
                objectives: None,
                per_instance: Vec::new(),
                cache_hit: false,
                ordinal,
            }
        } else {
            self.run_variant(&artifacts, &rendered.text, ordinal, instances)?
        };
        report.ordinal = ordinal;

        if use_cache {
            self.cache.insert(&digest, &report)?;
        }
        self.log_eval(patch, &digest, &report)?;
        Ok(report)
    }

    fn run_variant(
        &self,
        artifacts: &VariantArtifacts,
        config_text: &str,
        ordinal: u64,
        instances: &[String],
    ) -> Result<FitnessReport> {
        let eval_dir = self
            .scenario
            .work_dir
            .join("evals")
            .join(format!("eval-{ordinal:06}"));
        std::fs::create_dir_all(&eval_dir).map_err(|e| {
            MagpieError::Workspace(format!("cannot create {}: {e}", eval_dir.display()))
        })?;
        for (id, content) in &artifacts.files {
            let path = eval_dir.join(id);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, content)?;
        }

        let mut status = VariantStatus::Clean;
        let mut records: Vec<InstanceRecord> = Vec::new();

        if let Some(template) = &self.scenario.compile_cmd {
            let cmd = template.replace("{PARAMS}", config_text);
            self.launches.fetch_add(1, AtomicOrdering::SeqCst);
            let out = run_shell(&cmd, &eval_dir, self.scenario.compile_timeout_s)?;
            if out.timed_out {
                status = VariantStatus::Timeout;
            } else if !out.exit_ok {
                status = VariantStatus::CompileError;
            }
        }

        if status == VariantStatus::Clean {
            let run_one = |inst: &str| -> Result<InstanceRecord> {
                let mut cmd = self
                    .scenario
                    .run_cmd
                    .replace("{INST}", inst)
                    .replace("{PARAMS}", config_text);
                if let Some(wrapper) = self.scenario.counter_wrapper() {
                    cmd = wrapper.replace("{CMD}", &cmd);
                }
                self.launches.fetch_add(1, AtomicOrdering::SeqCst);
                let out = run_shell(&cmd, &eval_dir, self.scenario.run_timeout_s)?;
                if out.timed_out {
                    return Ok(InstanceRecord {
                        instance: inst.to_string(),
                        status: VariantStatus::Timeout,
                        objectives: None,
                        wall_s: out.wall_s,
                    });
                }
                if !out.exit_ok {
                    return Ok(InstanceRecord {
                        instance: inst.to_string(),
                        status: VariantStatus::RuntimeError,
                        objectives: None,
                        wall_s: out.wall_s,
                    });
                }
                let combined = format!("{}\n{}", out.stdout, out.stderr);
                let mut values = Vec::with_capacity(self.scenario.arity());
                for source in &self.scenario.objectives {
                    match source {
                        MeasurementSource::WallClock => values.push(out.wall_s),
                        MeasurementSource::OutputRegex { pattern }
                        | MeasurementSource::CounterCommand { pattern, .. } => {
                            match pattern.captures(&combined) {
                                Some(caps) => {
                                    for g in 1..pattern.captures_len() {
                                        let parsed = caps
                                            .get(g)
                                            .and_then(|m| m.as_str().parse::<f64>().ok());
                                        match parsed {
                                            Some(v) if v.is_finite() => values.push(v),
                                            _ => {
                                                return Ok(InstanceRecord {
                                                    instance: inst.to_string(),
                                                    status: VariantStatus::OutputError,
                                                    objectives: None,
                                                    wall_s: out.wall_s,
                                                })
                                            }
                                        }
                                    }
                                }
                                None => {
                                    return Ok(InstanceRecord {
                                        instance: inst.to_string(),
                                        status: VariantStatus::OutputError,
                                        objectives: None,
                                        wall_s: out.wall_s,
                                    })
                                }
                            }
                        }
                    }
                }
                Ok(InstanceRecord {
                    instance: inst.to_string(),
                    status: VariantStatus::Clean,
                    objectives: Some(values),
                    wall_s: out.wall_s,
                })
            };

            let slots = self.scenario.process_slots.min(instances.len());
            if slots <= 1 {
                // Sequential mode stops at the first failing instance: later
                // runs cannot rescue the variant.
                for inst in instances {
                    let record = run_one(inst)?;
                    let bad = record.status != VariantStatus::Clean;
                    if bad {
                        status = record.status;
                    }
                    records.push(record);
                    if bad {
                        break;
                    }
                }
            } else {
                let next = AtomicUsize::new(0);
                let slots_results: Vec<Mutex<Option<Result<InstanceRecord>>>> =
                    instances.iter().map(|_| Mutex::new(None)).collect();
                std::thread::scope(|scope| {
                    for _ in 0..slots {
                        scope.spawn(|| loop {
                            let i = next.fetch_add(1, AtomicOrdering::SeqCst);
                            if i >= instances.len() {
                                break;
                            }
                            let outcome = run_one(&instances[i]);
                            *slots_results[i].lock().unwrap() = Some(outcome);
                        });
                    }
                });
                for slot in slots_results {
                    let record = slot
                        .into_inner()
                        .unwrap()
                        .expect("every instance index was claimed by a worker")?;
                    if status == VariantStatus::Clean && record.status != VariantStatus::Clean {
                        status = record.status;
                    }
                    records.push(record);
                }
            }
        }

        let objectives = if status == VariantStatus::Clean {
            let arity = self.scenario.arity();
            let mut sums = vec![0.0f64; arity];
            for record in &records {
                let values = record
                    .objectives
                    .as_ref()
                    .expect("clean instance records carry objectives");
                for (s, v) in sums.iter_mut().zip(values) {
                    *s += v;
                }
            }
            let n = records.len() as f64;
            Some(sums.into_iter().map(|s| s / n).collect())
        } else {
            None
        };

        if status == VariantStatus::Clean || !self.keep_failures {
            std::fs::remove_dir_all(&eval_dir).map_err(|e| {
                MagpieError::Workspace(format!("cannot clean {}: {e}", eval_dir.display()))
            })?;
        }

        Ok(FitnessReport {
            status,
            objectives,
            per_instance: records,
            cache_hit: false,
            ordinal,
        })
    }

    fn log_eval(&self, patch: &Patch, digest: &str, report: &FitnessReport) -> Result<()> {
        if let Some(log) = &self.log {
            let wall: f64 = report.per_instance.iter().map(|r| r.wall_s).sum();
            let line = json!({
                "ordinal": report.ordinal,
                "patch": patch.render(),
                "digest": digest,
                "status": report.status.as_str(),
                "objectives": report.objectives,
                "wall_s": wall,
                "cache_hit": report.cache_hit,
            });
            let mut f = log.lock().unwrap();
            writeln!(f, "{line}")?;
        }
        Ok(())
    }

    /// Directory kept for a failed evaluation under `--keep-failures`.
    pub fn failure_dir(&self, ordinal: u64) -> PathBuf {
        self.scenario
            .work_dir
            .join("evals")
            .join(format!("eval-{ordinal:06}"))
    }
}
