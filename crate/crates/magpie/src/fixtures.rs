//! Deterministic toy targets and brute-force oracles.
//!
//! The shipped fixtures under `fixtures/` are tiny XML "programs" run by the
//! `magpie-toy` binary (see [`toy_main`]), which computes a synthetic cost
//! from the surviving statements and the parameters it was handed and prints
//! it as `COST: <value>`. Measurements are therefore exact and
//! platform-independent — no wall-clock flakiness — while still exercising
//! the full subprocess pipeline. Each fixture directory has a README stating
//! its cost model and optimum.
//!
//! The oracles ([`brute_force_optimum`], [`best_subsequence`]) exhaustively
//! evaluate small edit spaces so search and minimization results can be
//! checked against ground truth.

use std::path::{Path, PathBuf};

use rand::Rng;

use crate::cache::{instance_set_id, variant_digest};
use crate::edit::{EditKind, Patch};
use crate::error::{MagpieError, Result};
use crate::evaluator::Evaluator;
use crate::fitness::{compare, FitnessReport};
use crate::model::TargetModel;
use crate::params::ParamSpace;
use crate::space::{enumerate_edit_space, sample_random_edit};
use crate::xml::{unescape_text, XmlTree};

// ---------------------------------------------------------------------------
// The toy interpreter.
// ---------------------------------------------------------------------------

/// Entry point of the `magpie-toy` binary.
///
/// Usage: `magpie-toy [--program FILE] [--instance S] [--sleep SECS]
/// [--knob=K] [--mode=M] [--flag=B] [--alpha=A] [--beta=B] [--gamma=G]`
///
/// The program file is an XML tree whose `<stmt>` elements are interpreted
/// in document order:
///   - `init`        arms the output stage
///   - `work <expr>` adds the arithmetic expression's value to the cost
///   - `out`         fails unless `init` ran first; enables printing
///
/// Cost = 1000 + Σ work expressions + parameter contributions + the
/// instance's trailing digits. Parameter contributions: `--knob=K` adds
/// 100·(8−K); `--mode` slow/fast/turbo adds 0/−40/−60; `--flag=true` adds
/// −25; `--alpha=1` and `--beta=1` add −150 only together; `--gamma` is
/// accepted and ignored. Unknown arguments and malformed programs exit 1.
/// The cost line is printed only when an `out` statement executed.
pub fn toy_main(args: &[String]) -> i32 {
    match toy_run(args) {
        Ok(Some(cost)) => {
            println!("COST: {cost}");
            0
        }
        Ok(None) => 0,
        Err(msg) => {
            eprintln!("magpie-toy: {msg}");
            1
        }
    }
}

fn toy_run(args: &[String]) -> std::result::Result<Option<f64>, String> {
    let mut program: Option<String> = None;
    let mut instance: Option<String> = None;
    let mut sleep_s: f64 = 0.0;
    let mut knob: Option<i64> = None;
    let mut mode: Option<String> = None;
    let mut flag: Option<String> = None;
    let mut alpha: Option<String> = None;
    let mut beta: Option<String> = None;

    let mut it = args.iter();
    while let Some(arg) = it.next() {
        if let Some(v) = arg.strip_prefix("--knob=") {
            knob = Some(v.parse().map_err(|_| format!("bad --knob value '{v}'"))?);
        } else if let Some(v) = arg.strip_prefix("--mode=") {
            mode = Some(v.to_string());
        } else if let Some(v) = arg.strip_prefix("--flag=") {
            flag = Some(v.to_string());
        } else if let Some(v) = arg.strip_prefix("--alpha=") {
            alpha = Some(v.to_string());
        } else if let Some(v) = arg.strip_prefix("--beta=") {
            beta = Some(v.to_string());
        } else if arg.starts_with("--gamma=") {
            // Accepted and ignored: exists so searches can waste budget on it.
        } else {
            match arg.as_str() {
                "--program" => {
                    program = Some(it.next().ok_or("--program needs a path")?.clone())
                }
                "--instance" => {
                    instance = Some(it.next().ok_or("--instance needs a value")?.clone())
                }
                "--sleep" => {
                    let v = it.next().ok_or("--sleep needs seconds")?;
                    sleep_s = v.parse().map_err(|_| format!("bad --sleep value '{v}'"))?;
                }
                other => return Err(format!("unknown argument '{other}'")),
            }
        }
    }

    let mut cost = 1000.0;
    // Without a program there are no statements to gate the output.
    let mut out_enabled = program.is_none();

    if let Some(path) = program {
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
        let tree = XmlTree::parse(&text, &path).map_err(|e| e.to_string())?;
        let mut init_seen = false;
        for id in tree.pre_order(tree.root) {
            if tree.tag(id) != Some("stmt") {
                continue;
            }
            let body = unescape_text(&tree.text_content(id));
            let body = body.trim();
            let (word, rest) = match body.split_once(char::is_whitespace) {
                Some((w, r)) => (w, r.trim()),
                None => (body, ""),
            };
            match word {
                "init" => init_seen = true,
                "work" => {
                    let value = eval_expr(rest)
                        .ok_or_else(|| format!("bad work expression '{rest}'"))?;
                    cost += value;
                }
                "out" => {
                    if !init_seen {
                        return Err("out before init".to_string());
                    }
                    out_enabled = true;
                }
                other => return Err(format!("unknown statement '{other}'")),
            }
        }
    }

    if let Some(k) = knob {
        cost += 100.0 * (8 - k) as f64;
    }
    match mode.as_deref() {
        None | Some("slow") => {}
        Some("fast") => cost -= 40.0,
        Some("turbo") => cost -= 60.0,
        Some(other) => return Err(format!("unknown mode '{other}'")),
    }
    match flag.as_deref() {
        None | Some("false") => {}
        Some("true") => cost -= 25.0,
        Some(other) => return Err(format!("bad flag '{other}'")),
    }
    for v in [&alpha, &beta].into_iter().flatten() {
        if v != "0" && v != "1" {
            return Err(format!("alpha/beta must be 0 or 1, got '{v}'"));
        }
    }
    if alpha.as_deref() == Some("1") && beta.as_deref() == Some("1") {
        cost -= 150.0;
    }
    if let Some(inst) = &instance {
        let digits: String = inst
            .chars()
            .rev()
            .take_while(|c| c.is_ascii_digit())
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        if let Ok(offset) = digits.parse::<f64>() {
            cost += offset;
        }
    }

    if sleep_s > 0.0 {
        std::thread::sleep(std::time::Duration::from_secs_f64(sleep_s));
    }
    Ok(out_enabled.then_some(cost))
}

/// Evaluates `+ - * /` arithmetic with parentheses and unary minus — exactly
/// the shapes that constant edits produce, e.g. `(((35)*2)+1)`.
fn eval_expr(s: &str) -> Option<f64> {
    let chars: Vec<char> = s.chars().collect();
    let mut pos = 0usize;
    let value = parse_sum(&chars, &mut pos)?;
    skip_ws(&chars, &mut pos);
    (pos == chars.len()).then_some(value)
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while chars.get(*pos).is_some_and(|c| c.is_whitespace()) {
        *pos += 1;
    }
}

fn parse_sum(chars: &[char], pos: &mut usize) -> Option<f64> {
    let mut acc = parse_product(chars, pos)?;
    loop {
        skip_ws(chars, pos);
        match chars.get(*pos) {
            Some('+') => {
                *pos += 1;
                acc += parse_product(chars, pos)?;
            }
            Some('-') => {
                *pos += 1;
                acc -= parse_product(chars, pos)?;
            }
            _ => return Some(acc),
        }
    }
}

fn parse_product(chars: &[char], pos: &mut usize) -> Option<f64> {
    let mut acc = parse_atom(chars, pos)?;
    loop {
        skip_ws(chars, pos);
        match chars.get(*pos) {
            Some('*') => {
                *pos += 1;
                acc *= parse_atom(chars, pos)?;
            }
            Some('/') => {
                *pos += 1;
                acc /= parse_atom(chars, pos)?;
            }
            _ => return Some(acc),
        }
    }
}

fn parse_atom(chars: &[char], pos: &mut usize) -> Option<f64> {
    skip_ws(chars, pos);
    match chars.get(*pos)? {
        '(' => {
            *pos += 1;
            let inner = parse_sum(chars, pos)?;
            skip_ws(chars, pos);
            if chars.get(*pos) == Some(&')') {
                *pos += 1;
                Some(inner)
            } else {
                None
            }
        }
        '-' => {
            *pos += 1;
            parse_atom(chars, pos).map(|v| -v)
        }
        c if c.is_ascii_digit() || *c == '.' => {
            let start = *pos;
            while chars
                .get(*pos)
                .is_some_and(|c| c.is_ascii_digit() || *c == '.')
            {
                *pos += 1;
            }
            chars[start..*pos].iter().collect::<String>().parse().ok()
        }
        _ => None,
    }
}

// ---------------------------------------------------------------------------
// Fixture materialization.
// ---------------------------------------------------------------------------

/// Source directory of a shipped fixture.
pub fn fixture_dir(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Copies a shipped fixture into `dest`, pointing its scenario at a concrete
/// toy binary: occurrences of `magpie-toy` in `.cfg` files are replaced by
/// `toy_bin` (tests pass their `CARGO_BIN_EXE_magpie-toy`). Returns the path
/// of the copied scenario file.
pub fn materialize(name: &str, toy_bin: &str, dest: &Path) -> Result<PathBuf> {
    let src = fixture_dir(name);
    if !src.is_dir() {
        return Err(MagpieError::MissingFile(src));
    }
    std::fs::create_dir_all(dest)?;
    for entry in std::fs::read_dir(&src)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let file_name = entry.file_name();
        let content = std::fs::read_to_string(entry.path())?;
        let content = if file_name.to_string_lossy().ends_with(".cfg") {
            content.replace("magpie-toy", toy_bin)
        } else {
            content
        };
        std::fs::write(dest.join(&file_name), content)?;
    }
    let cfg = dest.join("scenario.cfg");
    if !cfg.is_file() {
        return Err(MagpieError::MissingFile(cfg));
    }
    Ok(cfg)
}

// ---------------------------------------------------------------------------
// Brute-force oracles.
// ---------------------------------------------------------------------------

/// Exhaustive optimum over all patches up to `max_len` edits from the given
/// families, deduplicated by rendered-artifact digest (patches with identical
/// effect count once and are not re-extended). The dedup treats equal
/// artifacts as equal continuation states, which holds when statement texts
/// are pairwise distinct — true for every shipped fixture — and always for
/// pure parameter spaces. Ties break toward fewer edits, then first found.
pub fn brute_force_optimum<R: Rng>(
    evaluator: &Evaluator,
    instances: &[String],
    families: &[EditKind],
    max_len: usize,
    cap: u128,
    rng: &mut R,
) -> Result<(Patch, FitnessReport)> {
    let model = evaluator.model;
    let space = enumerate_edit_space(
        model,
        families,
        evaluator.scenario.samples_per_numeric_param,
        rng,
    );
    let edits = space.all_edits();

    let n = edits.len() as u128;
    let mut candidates: u128 = 1;
    let mut level_size: u128 = 1;
    for _ in 0..max_len {
        level_size = level_size
            .checked_mul(n)
            .ok_or(MagpieError::SpaceTooLarge { candidates: u128::MAX, cap })?;
        candidates = candidates
            .checked_add(level_size)
            .ok_or(MagpieError::SpaceTooLarge { candidates: u128::MAX, cap })?;
    }
    if candidates > cap {
        return Err(MagpieError::SpaceTooLarge { candidates, cap });
    }

    let inst_id = instance_set_id(instances);
    let digest_of = |patch: &Patch| -> Result<String> {
        let artifacts = model.apply_patch(patch)?;
        let rendered = model.space.render_configuration(&artifacts.assignment)?;
        Ok(variant_digest(&artifacts, &rendered.text, rendered.valid, &inst_id))
    };

    let empty = Patch::empty();
    let mut best_report = evaluator.evaluate(&empty, instances)?;
    let mut best_patch = empty.clone();
    let mut seen = std::collections::HashSet::new();
    seen.insert(digest_of(&empty)?);
    let mut frontier = vec![empty];

    for _ in 0..max_len {
        if edits.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for patch in &frontier {
            for edit in &edits {
                let mut candidate = patch.clone();
                candidate.edits.push(edit.clone());
                if !seen.insert(digest_of(&candidate)?) {
                    continue;
                }
                let report = evaluator.evaluate(&candidate, instances)?;
                match compare(&report, &best_report)? {
                    std::cmp::Ordering::Less => {
                        best_patch = candidate.clone();
                        best_report = report;
                    }
                    std::cmp::Ordering::Equal if candidate.len() < best_patch.len() => {
                        best_patch = candidate.clone();
                        best_report = report;
                    }
                    _ => {}
                }
                next.push(candidate);
            }
        }
        frontier = next;
    }
    Ok((best_patch, best_report))
}

/// Best fitness over all `2^len` ordered subsequences of `patch` (the empty
/// subsequence included) — the minimization oracle. Ties break toward fewer
/// edits, then toward the earlier subsequence in mask order.
pub fn best_subsequence(
    evaluator: &Evaluator,
    patch: &Patch,
    instances: &[String],
) -> Result<(Patch, FitnessReport)> {
    let len = patch.len();
    if len > 20 {
        return Err(MagpieError::SpaceTooLarge {
            candidates: 1u128 << len,
            cap: 1 << 20,
        });
    }
    let mut best: Option<(Patch, FitnessReport)> = None;
    for mask in 0u32..(1u32 << len) {
        let edits: Vec<_> = patch
            .edits
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| e.clone())
            .collect();
        let candidate = Patch { edits };
        let report = evaluator.evaluate(&candidate, instances)?;
        best = Some(match best {
            None => (candidate, report),
            Some((bp, br)) => match compare(&report, &br)? {
                std::cmp::Ordering::Less => (candidate, report),
                std::cmp::Ordering::Equal if candidate.len() < bp.len() => (candidate, report),
                _ => (bp, br),
            },
        });
    }
    Ok(best.expect("mask 0 always evaluated"))
}

// ---------------------------------------------------------------------------
// Random model and patch generation (property-test support).
// ---------------------------------------------------------------------------

/// Random patch of 1..=`max_len` edits drawn from the given families.
pub fn sample_random_patch<R: Rng>(
    model: &TargetModel,
    families: &[EditKind],
    max_len: usize,
    rng: &mut R,
) -> Result<Patch> {
    let len = rng.random_range(1..=max_len);
    let mut edits = Vec::with_capacity(len);
    for _ in 0..len {
        let kind = families[rng.random_range(0..families.len())];
        edits.push(sample_random_edit(model, kind, rng)?);
    }
    Ok(Patch { edits })
}

/// Randomly shaped model for exercising the edit-space count formulas:
/// one to three files of nested elements with `stmt` statements (statement
/// texts pairwise distinct) and `number` constants, plus a parameter space of
/// finite domains only, so every family count has a closed form.
pub fn random_fixture_model<R: Rng>(rng: &mut R) -> Result<TargetModel> {
    let mut stmt_counter = 0usize;

    fn gen_element<R: Rng>(
        rng: &mut R,
        depth: usize,
        stmt_counter: &mut usize,
        out: &mut String,
    ) {
        match rng.random_range(0..4u8) {
            0 => {
                *stmt_counter += 1;
                let label = *stmt_counter;
                out.push_str(&format!("<stmt>work {label}"));
                if depth > 0 && rng.random_bool(0.4) {
                    for _ in 0..rng.random_range(1..=2) {
                        out.push(' ');
                        gen_element(rng, depth - 1, stmt_counter, out);
                    }
                }
                out.push_str("</stmt>");
            }
            1 => {
                let value = rng.random_range(0..100);
                out.push_str(&format!("<number>{value}</number>"));
            }
            2 => {
                out.push_str("<note>filler</note>");
            }
            _ => {
                out.push_str("<wrap>");
                if depth > 0 {
                    for _ in 0..rng.random_range(0..=2) {
                        gen_element(rng, depth - 1, stmt_counter, out);
                    }
                }
                out.push_str("</wrap>");
            }
        }
    }

    let file_count = rng.random_range(1..=3);
    let mut files = Vec::with_capacity(file_count);
    for fi in 0..file_count {
        let mut body = String::from("<program>");
        for _ in 0..rng.random_range(0..=6) {
            gen_element(rng, 2, &mut stmt_counter, &mut body);
        }
        body.push_str("</program>");
        files.push((format!("file{fi}.xml"), body));
    }

    let mut space_text = String::new();
    for pi in 0..rng.random_range(0..=4usize) {
        if rng.random_bool(0.5) {
            let n = rng.random_range(2..=5);
            let values: Vec<String> = (0..n).map(|v| format!("v{v}")).collect();
            space_text.push_str(&format!(
                "p{pi} {{{}}} [v0] --p{pi}={{}}\n",
                values.join(",")
            ));
        } else {
            let lo = rng.random_range(0..5);
            let hi = lo + rng.random_range(0..=7);
            space_text.push_str(&format!(
                "p{pi} [{lo},{hi}] [{lo}] (int) (uniform) --p{pi}={{}}\n"
            ));
        }
    }
    let space = if space_text.is_empty() {
        ParamSpace::empty()
    } else {
        ParamSpace::parse(&space_text)?
    };

    TargetModel::new(files, space, vec!["stmt".to_string()])
}

/// Sum over parameters of the finite-domain sizes of `model`'s space —
/// the ParamSet closed form for models built by [`random_fixture_model`].
pub fn finite_param_value_count(model: &TargetModel) -> usize {
    use crate::params::Domain;
    model
        .space
        .params
        .iter()
        .map(|p| match &p.domain {
            Domain::Categorical(values) => values.len(),
            Domain::Integer { lo, hi } => (hi - lo + 1) as usize,
            Domain::Float { .. } => unreachable!("random fixture models have no float params"),
        })
        .sum()
}

// ---------------------------------------------------------------------------

/// Counts elements with a given tag in a rendered XML string — a test helper
/// independent of the model's own indexing.
pub fn count_tag(xml: &str, tag: &str) -> Result<usize> {
    let tree = XmlTree::parse(xml, "count")?;
    Ok(tree
        .pre_order(tree.root)
        .into_iter()
        .filter(|&id| tree.tag(id) == Some(tag))
        .count())
}
