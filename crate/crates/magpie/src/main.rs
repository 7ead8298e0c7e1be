//! `magpie` — automated software improvement from the command line.
//!
//! Subcommands map one-to-one onto the pipeline stages: `enumerate` the edit
//! space, `search` for a patch, `minify` it, `combine` several, run a whole
//! `campaign`, `evaluate` any patch, `report` improvement percentages, and
//! rank edit `impacts` across result patches.
//!
//! Exit codes: 0 success, 1 domain error (message on stderr), 2 usage error.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use magpie::edit::{EditKind, Patch};
use magpie::error::{MagpieError, Result};
use magpie::evaluator::Evaluator;
use magpie::fitness::FitnessReport;
use magpie::model::TargetModel;
use magpie::protocol::{
    combine_patches, minimize_patch, rank_edit_impacts, run_campaign, CampaignConfig, EditImpact,
};
use magpie::scenario::{read_instances, Scenario};
use magpie::search::{local_search, SearchConfig};
use magpie::space::enumerate_edit_space;

#[derive(Parser)]
#[command(name = "magpie", version, about = "Patch-based software improvement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (flat key=value format).
    #[arg(long)]
    scenario: PathBuf,
    /// Work directory override (beats MAGPIE_WORKDIR and the scenario key).
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Override the scenario's process_slots.
    #[arg(long)]
    process_slots: Option<usize>,
    /// Keep the work directories of failed evaluations.
    #[arg(long)]
    keep_failures: bool,
    /// Instance list overriding the scenario's training instances.
    #[arg(long)]
    instances: Option<PathBuf>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario> {
        let mut scenario = Scenario::load(&self.scenario)?;
        if let Some(dir) = &self.workdir {
            scenario.work_dir = dir.clone();
        }
        if let Some(slots) = self.process_slots {
            if slots == 0 {
                return Err(MagpieError::Config {
                    key: "process_slots".to_string(),
                    reason: "must be at least 1".to_string(),
                });
            }
            scenario.process_slots = slots;
        }
        Ok(scenario)
    }

    /// The instance set most subcommands operate on: `--instances` if given,
    /// otherwise the scenario's training instances.
    fn instances(&self, scenario: &Scenario) -> Result<Vec<String>> {
        let list = match &self.instances {
            Some(path) => read_instances(path, &scenario.dir)?,
            None => scenario.train_instances.clone(),
        };
        if list.is_empty() {
            return Err(MagpieError::Scenario(
                "no instances: pass --instances or set train_instances_file".to_string(),
            ));
        }
        Ok(list)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the per-family edit-space counts of a scenario.
    Enumerate {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Seed for sampling values of continuous parameter domains.
        #[arg(long)]
        seed: Option<u64>,
        /// Emit JSON instead of an aligned table.
        #[arg(long)]
        json: bool,
    },
    /// First-improvement local search for an improving patch.
    Search {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Comma-separated edit families (default: every family with a
        /// non-empty space).
        #[arg(long)]
        families: Option<String>,
        /// Evaluation budget (default: scenario budget; joint_budget when
        /// two or more families are enabled).
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the best patch here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the per-step JSONL trace here.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Evaluate a patch (default: the empty patch) and print the report JSON.
    Evaluate {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        patch: Option<PathBuf>,
    },
    /// Minimize a patch on validation instances.
    Minify {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        patch: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Concatenate patches and minimize the result.
    Combine {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Patch files, applied in the given order.
        #[arg(required = true, num_args = 2..)]
        patches: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// k-fold search campaign with holdout test evaluation.
    Campaign {
        #[command(flatten)]
        common: ScenarioArgs,
        #[arg(long)]
        k: Option<usize>,
        /// Per-fold search budget.
        #[arg(long)]
        budget: Option<u64>,
        #[arg(long)]
        families: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Test-set measurements per variant; >1 bypasses the cache.
        #[arg(long, default_value_t = 1)]
        test_repeats: usize,
        /// Write the campaign result JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percentage improvement between two evaluation reports.
    Report {
        /// Baseline report JSON (as printed by `evaluate`).
        #[arg(long)]
        baseline: PathBuf,
        /// Variant report JSON.
        #[arg(long)]
        variant: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Rank edits across result patches by occurrence and solo improvement.
    Impacts {
        #[command(flatten)]
        common: ScenarioArgs,
        /// Directory of patch files (every regular file is parsed).
        #[arg(long)]
        patches: PathBuf,
        /// Minimum solo improvement, in percent.
        #[arg(long, default_value_t = 1.0)]
        threshold: f64,
        /// Emit CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn parse_families(spec: &str) -> Result<Vec<EditKind>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect()
}

/// Families whose edit space is non-empty for this model.
fn applicable_families(model: &TargetModel, samples: usize) -> Vec<EditKind> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let space = enumerate_edit_space(model, &EditKind::ALL, samples, &mut rng);
    EditKind::ALL
        .iter()
        .copied()
        .filter(|&k| space.count(k) > 0)
        .collect()
}

fn log_run_header(evaluator: &Evaluator, command: &str, seed: u64) -> Result<()> {
    evaluator.log_header(&json!({
        "event": "run",
        "command": command,
        "seed": seed,
        "scenario_digest": evaluator.scenario.digest,
        "version": env!("CARGO_PKG_VERSION"),
    }))
}

fn load_patch(path: &Path) -> Result<Patch> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| MagpieError::MissingFile(path.to_path_buf()))?;
    Patch::parse(&text)
}

fn write_or_print(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
        }
        None => print!("{content}"),
    }
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Enumerate { common, seed, json } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let seed = seed.unwrap_or(scenario.seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let space = enumerate_edit_space(
                &model,
                &EditKind::ALL,
                scenario.samples_per_numeric_param,
                &mut rng,
            );
            let counts = space.counts();
            if json {
                let mut obj = serde_json::Map::new();
                for (kind, count) in &counts {
                    obj.insert(kind.as_str().to_string(), json!(count));
                }
                obj.insert("total".to_string(), json!(space.total()));
                println!("{}", serde_json::to_string_pretty(&obj)?);
            } else {
                let width = counts
                    .iter()
                    .map(|(k, _)| k.as_str().len())
                    .max()
                    .unwrap_or(6)
                    .max("family".len());
                println!("{:<width$}  {:>12}", "family", "count");
                for (kind, count) in &counts {
                    println!("{:<width$}  {:>12}", kind.as_str(), count);
                }
                println!("{:<width$}  {:>12}", "total", space.total());
            }
            Ok(())
        }

        Command::Search {
            common,
            families,
            budget,
            seed,
            out,
            trace,
        } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let families = match &families {
                Some(spec) => parse_families(spec)?,
                None => applicable_families(&model, scenario.samples_per_numeric_param),
            };
            let budget = budget.unwrap_or(if families.len() >= 2 {
                scenario.joint_budget
            } else {
                scenario.budget
            });
            let seed = seed.unwrap_or(scenario.seed);
            let instances = common.instances(&scenario)?;
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "search", seed)?;

            let config = SearchConfig::new(families, budget, seed);
            let result = local_search(&evaluator, &instances, &config)?;

            if let Some(path) = &trace {
                std::fs::write(path, result.to_jsonl())?;
            }
            if let Some(path) = &out {
                std::fs::write(path, result.best_patch.render())?;
            }
            println!(
                "baseline objectives: {:?}",
                result.baseline_report.objectives.as_deref().unwrap_or(&[])
            );
            println!(
                "best objectives:     {:?}",
                result.best_report.objectives.as_deref().unwrap_or(&[])
            );
            println!("evaluations: {}", result.evaluations);
            println!("best patch ({} edits):", result.best_patch.len());
            print!("{}", result.best_patch.render());
            Ok(())
        }

        Command::Evaluate { common, patch } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let patch = match &patch {
                Some(path) => load_patch(path)?,
                None => Patch::empty(),
            };
            let instances = common.instances(&scenario)?;
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "evaluate", scenario.seed)?;
            let report = evaluator.evaluate(&patch, &instances)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }

        Command::Minify { common, patch, out } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let patch = load_patch(&patch)?;
            let instances = common.instances(&scenario)?;
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "minify", scenario.seed)?;
            let minimized = minimize_patch(&evaluator, &patch, &instances)?;
            write_or_print(&out, &minimized.render())
        }

        Command::Combine {
            common,
            patches,
            out,
        } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let loaded: Vec<Patch> = patches
                .iter()
                .map(|p| load_patch(p))
                .collect::<Result<_>>()?;
            let instances = common.instances(&scenario)?;
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "combine", scenario.seed)?;
            let combined = combine_patches(&evaluator, &loaded, &instances)?;
            write_or_print(&out, &combined.render())
        }

        Command::Campaign {
            common,
            k,
            budget,
            families,
            seed,
            test_repeats,
            out,
        } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let families = match &families {
                Some(spec) => parse_families(spec)?,
                None => applicable_families(&model, scenario.samples_per_numeric_param),
            };
            let config = CampaignConfig {
                families,
                budget: budget.unwrap_or(scenario.budget),
                k: k.unwrap_or(scenario.k),
                seed: seed.unwrap_or(scenario.seed),
                test_repeats,
            };
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "campaign", config.seed)?;
            let result = run_campaign(&evaluator, &config)?;
            let rendered = serde_json::to_string_pretty(&result)?;
            match &out {
                Some(path) => {
                    std::fs::write(path, &rendered)?;
                    println!("selected fold: {}", result.selected_fold);
                    println!("selected patch ({} edits):", result.selected_patch.len());
                    print!("{}", result.selected_patch.render());
                    println!("test improvement: {:?} %", result.improvement_pct);
                }
                None => println!("{rendered}"),
            }
            Ok(())
        }

        Command::Report {
            baseline,
            variant,
            json,
        } => {
            let read = |path: &Path| -> Result<FitnessReport> {
                let text = std::fs::read_to_string(path)
                    .map_err(|_| MagpieError::MissingFile(path.to_path_buf()))?;
                Ok(serde_json::from_str(&text)?)
            };
            let deltas =
                magpie::protocol::report_improvement(&read(&baseline)?, &read(&variant)?)?;
            if json {
                println!("{}", serde_json::to_string(&deltas)?);
            } else {
                for (i, d) in deltas.iter().enumerate() {
                    println!("objective {i}: {d:+.2}%");
                }
            }
            Ok(())
        }

        Command::Impacts {
            common,
            patches,
            threshold,
            csv,
        } => {
            let scenario = common.load()?;
            let model = scenario.load_model()?;
            let mut files: Vec<PathBuf> = std::fs::read_dir(&patches)
                .map_err(|_| MagpieError::MissingFile(patches.clone()))?
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().map(|t| t.is_file()).unwrap_or(false))
                .map(|e| e.path())
                .collect();
            files.sort();
            let loaded: Vec<Patch> = files
                .iter()
                .map(|p| load_patch(p))
                .collect::<Result<_>>()?;
            let instances = common.instances(&scenario)?;
            let evaluator = Evaluator::with_options(&scenario, &model, common.keep_failures)?;
            log_run_header(&evaluator, "impacts", scenario.seed)?;
            let rows = rank_edit_impacts(&evaluator, &loaded, &instances, threshold)?;
            if csv {
                println!("edit,count,improvement_pct");
                for row in &rows {
                    println!(
                        "\"{}\",{},{}",
                        row.edit.replace('"', "\"\""),
                        row.count,
                        row.improvement_pct
                    );
                }
            } else {
                print_impact_table(&rows);
            }
            Ok(())
        }
    }
}

fn print_impact_table(rows: &[EditImpact]) {
    let edit_width = rows
        .iter()
        .map(|r| r.edit.len())
        .max()
        .unwrap_or(4)
        .max("edit".len());
    println!("{:<edit_width$}  {:>5}  {:>12}", "edit", "count", "solo %");
    for row in rows {
        println!(
            "{:<edit_width$}  {:>5}  {:>12.2}",
            row.edit, row.count, row.improvement_pct
        );
    }
    if rows.is_empty() {
        println!("(no edit passed the threshold)");
    }
}
