//! Scenario files: the flat key=value run configuration.
//!
//! A scenario names the target source files, the parameter-space file, the
//! compile/run command templates with their timeouts, how objectives are
//! measured, the instance lists, and the defaults for budgets, folds, seeds,
//! and process slots. Parsing is strict: unknown keys are errors, because a
//! typo in a command template would otherwise burn evaluation budget
//! silently. All relative paths resolve against the scenario file's
//! directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use regex::Regex;
use sha2::{Digest, Sha256};

use crate::error::{MagpieError, Result};
use crate::fitness::MeasurementSource;
use crate::model::TargetModel;
use crate::params::ParamSpace;

pub const DEFAULT_BUDGET: u64 = 1000;
pub const DEFAULT_JOINT_BUDGET: u64 = 4000;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SAMPLES_PER_NUMERIC_PARAM: usize = 10;

const KNOWN_KEYS: &[&str] = &[
    "target_files",
    "param_space_file",
    "stmt_tags",
    "compile_cmd",
    "run_cmd",
    "compile_timeout_s",
    "run_timeout_s",
    "objectives",
    "output_regex",
    "counter_cmd",
    "counter_regex",
    "train_instances_file",
    "test_instances_file",
    "process_slots",
    "work_dir",
    "budget",
    "joint_budget",
    "k",
    "seed",
    "samples_per_numeric_param",
];

#[derive(Debug, Clone)]
pub struct Scenario {
    /// Directory containing the scenario file; anchor for relative paths.
    pub dir: PathBuf,
    /// Digest of the scenario file bytes, logged with every run.
    pub digest: String,
    /// Target file ids (as written) paired with their resolved paths.
    pub target_files: Vec<(String, PathBuf)>,
    pub param_space_file: Option<PathBuf>,
    pub stmt_tags: Vec<String>,
    pub compile_cmd: Option<String>,
    pub run_cmd: String,
    pub compile_timeout_s: f64,
    pub run_timeout_s: f64,
    pub objectives: Vec<MeasurementSource>,
    pub train_instances: Vec<String>,
    pub test_instances: Vec<String>,
    pub process_slots: usize,
    pub work_dir: PathBuf,
    pub budget: u64,
    pub joint_budget: u64,
    pub k: usize,
    pub seed: u64,
    pub samples_per_numeric_param: usize,
}

fn config_err(key: &str, reason: impl Into<String>) -> MagpieError {
    MagpieError::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| config_err(key, format!("cannot parse {value:?} as a number")))
}

/// Reads an instance file: one instance per line, `#` comments and blank
/// lines ignored. Lines naming an existing file relative to `dir` are
/// replaced by the absolute path so commands work from any work directory;
/// other lines pass through verbatim (they may be plain arguments).
pub fn read_instances(path: &Path, dir: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|_| MagpieError::MissingFile(path.to_path_buf()))?;
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let candidate = dir.join(line);
        if candidate.is_file() {
            out.push(candidate.to_string_lossy().into_owned());
        } else {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Scenario> {
        let bytes = std::fs::read(path)
            .map_err(|_| MagpieError::MissingFile(path.to_path_buf()))?;
        let digest: String = Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let dir = if dir.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            dir
        };

        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                MagpieError::Scenario(format!(
                    "line {}: expected key=value, got {line:?}",
                    lineno + 1
                ))
            })?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(config_err(&key, "unknown key"));
            }
            if kv.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(config_err(&key, "duplicate key"));
            }
        }

        let run_cmd = kv
            .remove("run_cmd")
            .ok_or_else(|| config_err("run_cmd", "required key is missing"))?;
        if !run_cmd.contains("{INST}") {
            return Err(config_err("run_cmd", "must contain the {INST} placeholder"));
        }
        let compile_cmd = kv.remove("compile_cmd");

        let mut target_files = Vec::new();
        if let Some(list) = kv.remove("target_files") {
            for id in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let resolved = dir.join(id);
                if !resolved.is_file() {
                    return Err(MagpieError::MissingFile(resolved));
                }
                target_files.push((id.to_string(), resolved));
            }
        }

        let param_space_file = match kv.remove("param_space_file") {
            Some(p) => {
                let resolved = dir.join(p.trim());
                if !resolved.is_file() {
                    return Err(MagpieError::MissingFile(resolved));
                }
                Some(resolved)
            }
            None => None,
        };

        let stmt_tags: Vec<String> = kv
            .remove("stmt_tags")
            .map(|v| {
                v.split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .unwrap_or_default();

        let compile_timeout_s = match kv.remove("compile_timeout_s") {
            Some(v) => parse_num("compile_timeout_s", &v)?,
            None => 60.0,
        };
        let run_timeout_s = match kv.remove("run_timeout_s") {
            Some(v) => parse_num("run_timeout_s", &v)?,
            None => 30.0,
        };
        if compile_timeout_s <= 0.0 {
            return Err(config_err("compile_timeout_s", "must be positive"));
        }
        if run_timeout_s <= 0.0 {
            return Err(config_err("run_timeout_s", "must be positive"));
        }

        let output_regex = kv.remove("output_regex");
        let counter_cmd = kv.remove("counter_cmd");
        let counter_regex = kv.remove("counter_regex");
        let objective_list = kv
            .remove("objectives")
            .unwrap_or_else(|| "wall_clock".to_string());
        let mut objectives = Vec::new();
        for name in objective_list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
        {
            match name {
                "wall_clock" => objectives.push(MeasurementSource::WallClock),
                "output_regex" => {
                    let pat = output_regex.as_deref().ok_or_else(|| {
                        config_err("output_regex", "required by objectives=output_regex")
                    })?;
                    let re = Regex::new(pat)?;
                    if re.captures_len() < 2 {
                        return Err(config_err(
                            "output_regex",
                            "needs at least one capture group",
                        ));
                    }
                    objectives.push(MeasurementSource::OutputRegex { pattern: re });
                }
                "counter_command" => {
                    let wrapper = counter_cmd.clone().ok_or_else(|| {
                        config_err("counter_cmd", "required by objectives=counter_command")
                    })?;
                    if !wrapper.contains("{CMD}") {
                        return Err(config_err(
                            "counter_cmd",
                            "must contain the {CMD} placeholder",
                        ));
                    }
                    let pat = counter_regex.as_deref().ok_or_else(|| {
                        config_err("counter_regex", "required by objectives=counter_command")
                    })?;
                    let re = Regex::new(pat)?;
                    if re.captures_len() < 2 {
                        return Err(config_err(
                            "counter_regex",
                            "needs at least one capture group",
                        ));
                    }
                    objectives.push(MeasurementSource::CounterCommand {
                        wrapper,
                        pattern: re,
                    });
                }
                other => {
                    return Err(config_err(
                        "objectives",
                        format!("unknown measurement source {other:?}"),
                    ))
                }
            }
        }
        if objectives
            .iter()
            .filter(|o| matches!(o, MeasurementSource::CounterCommand { .. }))
            .count()
            > 1
        {
            return Err(config_err(
                "objectives",
                "at most one counter_command source is supported",
            ));
        }

        let train_instances = match kv.remove("train_instances_file") {
            Some(p) => read_instances(&dir.join(p.trim()), &dir)?,
            None => Vec::new(),
        };
        let test_instances = match kv.remove("test_instances_file") {
            Some(p) => read_instances(&dir.join(p.trim()), &dir)?,
            None => Vec::new(),
        };

        let process_slots = match kv.remove("process_slots") {
            Some(v) => parse_num("process_slots", &v)?,
            None => 1,
        };
        if process_slots == 0 {
            return Err(config_err("process_slots", "must be at least 1"));
        }

        // Precedence: MAGPIE_WORKDIR > work_dir key > scenario-relative default.
        // A --workdir flag, when given, overrides all three in the CLI layer.
        let work_dir = match std::env::var("MAGPIE_WORKDIR") {
            Ok(v) if !v.trim().is_empty() => PathBuf::from(v.trim()),
            _ => match kv.remove("work_dir") {
                Some(p) => dir.join(p.trim()),
                None => dir.join("_magpie_work"),
            },
        };

        let budget = match kv.remove("budget") {
            Some(v) => parse_num("budget", &v)?,
            None => DEFAULT_BUDGET,
        };
        let joint_budget = match kv.remove("joint_budget") {
            Some(v) => parse_num("joint_budget", &v)?,
            None => DEFAULT_JOINT_BUDGET,
        };
        let k = match kv.remove("k") {
            Some(v) => parse_num("k", &v)?,
            None => DEFAULT_FOLDS,
        };
        let seed = match kv.remove("seed") {
            Some(v) => parse_num("seed", &v)?,
            None => 0,
        };
        let samples_per_numeric_param = match kv.remove("samples_per_numeric_param") {
            Some(v) => parse_num("samples_per_numeric_param", &v)?,
            None => DEFAULT_SAMPLES_PER_NUMERIC_PARAM,
        };
        if samples_per_numeric_param == 0 {
            return Err(config_err("samples_per_numeric_param", "must be at least 1"));
        }

        // kv was drained by remove(); anything left is a known key consumed
        // twice, which the duplicate check already rules out.
        debug_assert!(kv.is_empty());

        Ok(Scenario {
            dir,
            digest,
            target_files,
            param_space_file,
            stmt_tags,
            compile_cmd,
            run_cmd,
            compile_timeout_s,
            run_timeout_s,
            objectives,
            train_instances,
            test_instances,
            process_slots,
            work_dir,
            budget,
            joint_budget,
            k,
            seed,
            samples_per_numeric_param,
        })
    }

    /// Total objective arity across measurement sources.
    pub fn arity(&self) -> usize {
        self.objectives.iter().map(|o| o.arity()).sum()
    }

    /// Wrapper template of the counter_command source, if one is configured.
    pub fn counter_wrapper(&self) -> Option<&str> {
        self.objectives.iter().find_map(|o| match o {
            MeasurementSource::CounterCommand { wrapper, .. } => Some(wrapper.as_str()),
            _ => None,
        })
    }

    /// Parses the target files and parameter space into a model, then checks
    /// the placeholder rule that needs the space: a non-empty parameter space
    /// requires `{PARAMS}` in the run or compile command.
    pub fn load_model(&self) -> Result<TargetModel> {
        let mut files = Vec::new();
        for (id, path) in &self.target_files {
            let content = std::fs::read_to_string(path)
                .map_err(|_| MagpieError::MissingFile(path.clone()))?;
            files.push((id.clone(), content));
        }
        let space = match &self.param_space_file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|_| MagpieError::MissingFile(path.clone()))?;
                ParamSpace::parse(&text)?
            }
            None => ParamSpace::empty(),
        };
        if !space.is_empty() {
            let in_run = self.run_cmd.contains("{PARAMS}");
            let in_compile = self
                .compile_cmd
                .as_deref()
                .map(|c| c.contains("{PARAMS}"))
                .unwrap_or(false);
            if !in_run && !in_compile {
                return Err(config_err(
                    "run_cmd",
                    "a non-empty parameter space requires {PARAMS} in run_cmd or compile_cmd",
                ));
            }
        }
        TargetModel::new(files, space, self.stmt_tags.clone())
    }
}
