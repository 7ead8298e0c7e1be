//! Parameter spaces: typed domains, conditional activation, forbidden
//! combinations, and rendering of assignments to command-line text.
//!
//! The text format is line-based:
//!
//! ```text
//! # categorical (a {true,false} domain is reported as boolean)
//! ccmin-mode {0,1,2} [2] -ccmin-mode={}
//! # numeric: [lo,hi], default, (int|float), (uniform|log), optional specials
//! var-decay [0.001,1.0] [0.95] (float) (log) special{1} -var-decay={}
//! # child is only active while the parent holds one of the listed values
//! condition var-decay | ccmin-mode in {1,2}
//! # conjunction of parameter=value pairs that must not all hold at once
//! forbidden {ccmin-mode=0, luby=false}
//! ```
//!
//! Every parameter line ends with a render template containing `{}`; the
//! rendered configuration is the space-separated concatenation of the
//! templates of all *active* parameters, in declaration order.

use rand::Rng;
use std::collections::{BTreeMap, HashMap};

use crate::error::{MagpieError, Result};

/// Probability mass reserved for the special-value list when sampling a
/// parameter value at random.
pub const SPECIAL_VALUE_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Boolean,
    Categorical,
    Integer,
    Float,
}

#[derive(Debug, Clone)]
pub enum Domain {
    Categorical(Vec<String>),
    Integer { lo: i64, hi: i64 },
    Float { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distribution {
    Uniform,
    LogUniform,
}

/// Activation predicate: the owning parameter participates in rendering only
/// while `parent` is itself active and holds one of `values`.
#[derive(Debug, Clone)]
pub struct Condition {
    pub parent: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub domain: Domain,
    pub default: String,
    pub distribution: Distribution,
    pub special_values: Vec<String>,
    pub condition: Option<Condition>,
    pub template: String,
}

impl ParamSpec {
    pub fn kind(&self) -> ParamKind {
        match &self.domain {
            Domain::Categorical(values) => {
                let mut v: Vec<&str> = values.iter().map(|s| s.as_str()).collect();
                v.sort_unstable();
                if v == ["false", "true"] {
                    ParamKind::Boolean
                } else {
                    ParamKind::Categorical
                }
            }
            Domain::Integer { .. } => ParamKind::Integer,
            Domain::Float { .. } => ParamKind::Float,
        }
    }

    pub fn in_domain(&self, value: &str) -> bool {
        match &self.domain {
            Domain::Categorical(values) => values.iter().any(|v| v == value),
            Domain::Integer { lo, hi } => {
                value.parse::<i64>().map(|v| v >= *lo && v <= *hi).unwrap_or(false)
            }
            Domain::Float { lo, hi } => value
                .parse::<f64>()
                .map(|v| v.is_finite() && v >= *lo && v <= *hi)
                .unwrap_or(false),
        }
    }

    /// Draws one value: with probability [`SPECIAL_VALUE_WEIGHT`] uniformly
    /// from the special-value list (when non-empty), otherwise from the
    /// parameter's own distribution.
    pub fn sample_value<R: Rng>(&self, rng: &mut R) -> String {
        if !self.special_values.is_empty() && rng.random_bool(SPECIAL_VALUE_WEIGHT) {
            return self.special_values[rng.random_range(0..self.special_values.len())].clone();
        }
        self.sample_main(rng)
    }

    fn sample_main<R: Rng>(&self, rng: &mut R) -> String {
        match &self.domain {
            Domain::Categorical(values) => values[rng.random_range(0..values.len())].clone(),
            Domain::Integer { lo, hi } => match self.distribution {
                Distribution::Uniform => rng.random_range(*lo..=*hi).to_string(),
                Distribution::LogUniform => {
                    let x = log_uniform(rng, *lo as f64, *hi as f64);
                    (x.round() as i64).clamp(*lo, *hi).to_string()
                }
            },
            Domain::Float { lo, hi } => {
                let v = if lo == hi {
                    *lo
                } else {
                    match self.distribution {
                        Distribution::Uniform => rng.random_range(*lo..=*hi),
                        Distribution::LogUniform => log_uniform(rng, *lo, *hi),
                    }
                };
                v.to_string()
            }
        }
    }

    /// The values a domain contributes to exhaustive enumeration. Finite
    /// domains (categoricals, and integer ranges no wider than
    /// `samples_per_numeric`) are listed in full; continuous or large-integer
    /// domains are subsampled with `samples_per_numeric` fresh draws.
    pub fn enumeration_values<R: Rng>(
        &self,
        samples_per_numeric: usize,
        rng: &mut R,
    ) -> Vec<String> {
        match &self.domain {
            Domain::Categorical(values) => values.clone(),
            Domain::Integer { lo, hi } if (hi - lo) as u128 + 1 <= samples_per_numeric as u128 => {
                (*lo..=*hi).map(|v| v.to_string()).collect()
            }
            _ => (0..samples_per_numeric).map(|_| self.sample_main(rng)).collect(),
        }
    }

    pub fn enumeration_count(&self, samples_per_numeric: usize) -> u64 {
        match &self.domain {
            Domain::Categorical(values) => values.len() as u64,
            Domain::Integer { lo, hi } if (hi - lo) as u128 + 1 <= samples_per_numeric as u128 => {
                (hi - lo + 1) as u64
            }
            _ => samples_per_numeric as u64,
        }
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        return lo;
    }
    (rng.random_range(lo.ln()..=hi.ln())).exp()
}

/// The rendered command-line text plus the forbidden-clause verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedConfig {
    pub text: String,
    pub valid: bool,
}

#[derive(Debug, Clone, Default)]
pub struct ParamSpace {
    pub params: Vec<ParamSpec>,
    /// Conjunctions of `parameter = value` pairs that must not all hold.
    pub forbidden: Vec<Vec<(String, String)>>,
    by_name: HashMap<String, usize>,
}

impl ParamSpace {
    pub fn empty() -> ParamSpace {
        ParamSpace::default()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn get(&self, name: &str) -> Option<&ParamSpec> {
        self.by_name.get(name).map(|&i| &self.params[i])
    }

    pub fn parse(text: &str) -> Result<ParamSpace> {
        let mut space = ParamSpace::default();
        let mut conditions: Vec<(usize, String, Condition)> = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fail = |msg: String| MagpieError::Space(format!("line {}: {msg}", lineno + 1));

            if let Some(rest) = line.strip_prefix("condition ") {
                let (child, pred) = rest
                    .split_once('|')
                    .ok_or_else(|| fail("condition needs 'child | parent in {..}'".into()))?;
                let pred = pred.trim();
                let (parent, set) = pred
                    .split_once(" in ")
                    .ok_or_else(|| fail("condition needs 'parent in {..}'".into()))?;
                let values = brace_list(set.trim())
                    .ok_or_else(|| fail("condition values need braces".into()))?;
                conditions.push((
                    lineno + 1,
                    child.trim().to_string(),
                    Condition { parent: parent.trim().to_string(), values },
                ));
                continue;
            }

            if let Some(rest) = line.strip_prefix("forbidden ") {
                let pairs = brace_list(rest.trim())
                    .ok_or_else(|| fail("forbidden needs '{a=1, b=2}'".into()))?;
                let mut clause = Vec::new();
                for pair in pairs {
                    let (p, v) = pair
                        .split_once('=')
                        .ok_or_else(|| fail(format!("forbidden pair '{pair}' lacks '='")))?;
                    clause.push((p.trim().to_string(), v.trim().to_string()));
                }
                if clause.is_empty() {
                    return Err(fail("forbidden clause is empty".into()));
                }
                space.forbidden.push(clause);
                continue;
            }

            let spec = parse_param_line(line).map_err(fail)?;
            if space.by_name.contains_key(&spec.name) {
                return Err(MagpieError::Space(format!(
                    "duplicate parameter '{}'",
                    spec.name
                )));
            }
            space.by_name.insert(spec.name.clone(), space.params.len());
            space.params.push(spec);
        }

        for (lineno, child, cond) in conditions {
            let parent_idx = *space.by_name.get(&cond.parent).ok_or_else(|| {
                MagpieError::Space(format!(
                    "line {lineno}: condition parent '{}' is not a parameter",
                    cond.parent
                ))
            })?;
            for v in &cond.values {
                if !space.params[parent_idx].in_domain(v) {
                    return Err(MagpieError::Space(format!(
                        "line {lineno}: condition value '{v}' is outside the domain of '{}'",
                        cond.parent
                    )));
                }
            }
            let child_idx = *space.by_name.get(&child).ok_or_else(|| {
                MagpieError::Space(format!(
                    "line {lineno}: condition child '{child}' is not a parameter"
                ))
            })?;
            if space.params[child_idx].condition.is_some() {
                return Err(MagpieError::Space(format!(
                    "line {lineno}: parameter '{child}' has more than one condition"
                )));
            }
            space.params[child_idx].condition = Some(cond);
        }

        space.validate()?;
        Ok(space)
    }

    fn validate(&self) -> Result<()> {
        for spec in &self.params {
            if !spec.in_domain(&spec.default) {
                return Err(MagpieError::Space(format!(
                    "default '{}' of '{}' is outside its domain",
                    spec.default, spec.name
                )));
            }
            for sv in &spec.special_values {
                if !spec.in_domain(sv) {
                    return Err(MagpieError::Space(format!(
                        "special value '{sv}' of '{}' is outside its domain",
                        spec.name
                    )));
                }
            }
            if spec.distribution == Distribution::LogUniform {
                let lo = match &spec.domain {
                    Domain::Integer { lo, .. } => *lo as f64,
                    Domain::Float { lo, .. } => *lo,
                    Domain::Categorical(_) => 1.0,
                };
                if lo <= 0.0 {
                    return Err(MagpieError::Space(format!(
                        "log-uniform parameter '{}' needs a positive lower bound",
                        spec.name
                    )));
                }
            }
            if !spec.template.contains("{}") {
                return Err(MagpieError::Space(format!(
                    "template of '{}' lacks the '{{}}' placeholder",
                    spec.name
                )));
            }
        }

        // Condition chains must not loop.
        for spec in &self.params {
            let mut seen = vec![spec.name.clone()];
            let mut cur = spec;
            while let Some(cond) = &cur.condition {
                if seen.contains(&cond.parent) {
                    return Err(MagpieError::Space(format!(
                        "condition cycle through '{}'",
                        cond.parent
                    )));
                }
                seen.push(cond.parent.clone());
                cur = self.get(&cond.parent).expect("validated above");
            }
        }

        for clause in &self.forbidden {
            for (p, v) in clause {
                let spec = self.get(p).ok_or_else(|| {
                    MagpieError::Space(format!("forbidden clause names unknown parameter '{p}'"))
                })?;
                if !spec.in_domain(v) {
                    return Err(MagpieError::Space(format!(
                        "forbidden value '{v}' is outside the domain of '{p}'"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Defaults overridden by `overrides`, for every parameter in the space.
    pub fn effective_assignment(
        &self,
        overrides: &BTreeMap<String, String>,
    ) -> BTreeMap<String, String> {
        let mut full = BTreeMap::new();
        for spec in &self.params {
            let value = overrides.get(&spec.name).unwrap_or(&spec.default).clone();
            full.insert(spec.name.clone(), value);
        }
        full
    }

    /// A parameter is active when its condition chain holds under `full`.
    pub fn is_active(&self, name: &str, full: &BTreeMap<String, String>) -> bool {
        let Some(spec) = self.get(name) else { return false };
        match &spec.condition {
            None => true,
            Some(cond) => {
                let holds = full
                    .get(&cond.parent)
                    .map(|v| cond.values.iter().any(|cv| cv == v))
                    .unwrap_or(false);
                holds && self.is_active(&cond.parent, full)
            }
        }
    }

    /// Renders the effective assignment to command-line text and checks it
    /// against the forbidden clauses. Unknown parameters and out-of-domain
    /// values in `overrides` are hard errors, not invalid configurations.
    pub fn render_configuration(
        &self,
        overrides: &BTreeMap<String, String>,
    ) -> Result<RenderedConfig> {
        for (name, value) in overrides {
            let spec = self
                .get(name)
                .ok_or_else(|| MagpieError::UnknownParameter(name.clone()))?;
            if !spec.in_domain(value) {
                return Err(MagpieError::OutOfDomain {
                    param: name.clone(),
                    value: value.clone(),
                });
            }
        }

        let full = self.effective_assignment(overrides);
        let valid = !self.forbidden.iter().any(|clause| {
            clause.iter().all(|(p, v)| full.get(p).map(|fv| fv == v).unwrap_or(false))
        });

        let mut parts = Vec::new();
        for spec in &self.params {
            if self.is_active(&spec.name, &full) {
                parts.push(spec.template.replace("{}", &full[&spec.name]));
            }
        }
        Ok(RenderedConfig { text: parts.join(" "), valid })
    }
}

/// Returns the comma-separated items of a `{...}` group.
fn brace_list(s: &str) -> Option<Vec<String>> {
    let inner = s.strip_prefix('{')?.strip_suffix('}')?;
    Some(
        inner
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect(),
    )
}

/// Takes a leading `<open>...<close>` group off `s`, returning the group's
/// interior and the remainder.
fn take_group(s: &str, open: char, close: char) -> Option<(String, String)> {
    let s = s.trim_start();
    let rest = s.strip_prefix(open)?;
    let end = rest.find(close)?;
    Some((rest[..end].to_string(), rest[end + close.len_utf8()..].to_string()))
}

fn parse_param_line(line: &str) -> std::result::Result<ParamSpec, String> {
    let (name, rest) = line
        .split_once(char::is_whitespace)
        .ok_or_else(|| "parameter line needs a name and a domain".to_string())?;
    let rest = rest.trim_start();

    if rest.starts_with('{') {
        // Categorical: name {v1,v2} [default] template
        let (values_raw, rest) =
            take_group(rest, '{', '}').ok_or("unterminated '{...}' domain")?;
        let values: Vec<String> = values_raw
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        if values.is_empty() {
            return Err("categorical domain is empty".into());
        }
        let (default, template) =
            take_group(&rest, '[', ']').ok_or("missing '[default]'")?;
        let template = template.trim().to_string();
        if template.is_empty() {
            return Err("missing render template".into());
        }
        return Ok(ParamSpec {
            name: name.to_string(),
            domain: Domain::Categorical(values),
            default: default.trim().to_string(),
            distribution: Distribution::Uniform,
            special_values: Vec::new(),
            condition: None,
            template,
        });
    }

    // Numeric: name [lo,hi] [default] (int|float) (uniform|log) special{..}? template
    let (range_raw, rest) = take_group(rest, '[', ']').ok_or("missing '[lo,hi]' domain")?;
    let (lo_raw, hi_raw) = range_raw
        .split_once(',')
        .ok_or("numeric domain needs 'lo,hi'")?;
    let (default, rest) = take_group(&rest, '[', ']').ok_or("missing '[default]'")?;
    let (kind_raw, rest) = take_group(&rest, '(', ')').ok_or("missing '(int)' or '(float)'")?;
    let (dist_raw, rest) =
        take_group(&rest, '(', ')').ok_or("missing '(uniform)' or '(log)'")?;

    let distribution = match dist_raw.trim() {
        "uniform" => Distribution::Uniform,
        "log" => Distribution::LogUniform,
        other => return Err(format!("unknown distribution '{other}'")),
    };

    let domain = match kind_raw.trim() {
        "int" => {
            let lo: i64 = lo_raw.trim().parse().map_err(|_| "bad integer lower bound")?;
            let hi: i64 = hi_raw.trim().parse().map_err(|_| "bad integer upper bound")?;
            if lo > hi {
                return Err("integer domain has lo > hi".into());
            }
            Domain::Integer { lo, hi }
        }
        "float" => {
            let lo: f64 = lo_raw.trim().parse().map_err(|_| "bad float lower bound")?;
            let hi: f64 = hi_raw.trim().parse().map_err(|_| "bad float upper bound")?;
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err("float domain is not a finite lo <= hi range".into());
            }
            Domain::Float { lo, hi }
        }
        other => return Err(format!("unknown parameter kind '{other}'")),
    };

    let rest = rest.trim_start();
    let (special_values, template) = if let Some(tail) = rest.strip_prefix("special") {
        let (items, tail) = take_group(tail, '{', '}').ok_or("unterminated special{...}")?;
        let values = items
            .split(',')
            .map(|v| v.trim().to_string())
            .filter(|v| !v.is_empty())
            .collect();
        (values, tail.trim().to_string())
    } else {
        (Vec::new(), rest.to_string())
    };
    if template.is_empty() {
        return Err("missing render template".into());
    }

    Ok(ParamSpec {
        name: name.to_string(),
        domain,
        default: default.trim().to_string(),
        distribution,
        special_values,
        condition: None,
        template,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const SAMPLE: &str = "\
# solver knobs
luby {true,false} [true] -luby={}
ccmin-mode {0,1,2} [2] -ccmin-mode={}
var-decay [0.001,1.0] [0.95] (float) (log) special{1} -var-decay={}
restarts [1,1000000] [100] (int) (log) -restarts={}
condition var-decay | ccmin-mode in {1,2}
forbidden {luby=false, ccmin-mode=0}
";

    fn overrides(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn parses_the_sample_space() {
        let space = ParamSpace::parse(SAMPLE).unwrap();
        assert_eq!(space.len(), 4);
        assert_eq!(space.get("luby").unwrap().kind(), ParamKind::Boolean);
        assert_eq!(space.get("ccmin-mode").unwrap().kind(), ParamKind::Categorical);
        assert_eq!(space.get("var-decay").unwrap().kind(), ParamKind::Float);
        assert_eq!(space.get("restarts").unwrap().kind(), ParamKind::Integer);
        assert_eq!(space.get("var-decay").unwrap().special_values, vec!["1"]);
        assert!(space.get("var-decay").unwrap().condition.is_some());
        assert_eq!(space.forbidden.len(), 1);
    }

    #[test]
    fn renders_defaults_when_unassigned() {
        let space = ParamSpace::parse(SAMPLE).unwrap();
        let rc = space.render_configuration(&BTreeMap::new()).unwrap();
        assert!(rc.valid);
        assert_eq!(
            rc.text,
            "-luby=true -ccmin-mode=2 -var-decay=0.95 -restarts=100"
        );
    }

    #[test]
    fn omits_inactive_parameters() {
        let space = ParamSpace::parse(SAMPLE).unwrap();
        let rc = space
            .render_configuration(&overrides(&[("ccmin-mode", "0"), ("var-decay", "0.5")]))
            .unwrap();
        assert!(!rc.text.contains("var-decay"), "inactive child still rendered: {}", rc.text);
        assert!(rc.valid);
    }

    #[test]
    fn flags_forbidden_assignments_invalid() {
        let space = ParamSpace::parse(SAMPLE).unwrap();
        let rc = space
            .render_configuration(&overrides(&[("luby", "false"), ("ccmin-mode", "0")]))
            .unwrap();
        assert!(!rc.valid);
        // Still rendered; the caller decides what to do with invalid configs.
        assert!(rc.text.contains("-luby=false"));
    }

    #[test]
    fn chained_conditions_require_active_parents() {
        let text = "\
a {on,off} [off] --a={}
b {on,off} [on] --b={}
c [1,5] [3] (int) (uniform) --c={}
condition b | a in {on}
condition c | b in {on}
";
        let space = ParamSpace::parse(text).unwrap();
        // b's condition fails, so c is inactive even though b=on.
        let rc = space.render_configuration(&BTreeMap::new()).unwrap();
        assert_eq!(rc.text, "--a=off");
        let rc = space.render_configuration(&overrides(&[("a", "on")])).unwrap();
        assert_eq!(rc.text, "--a=on --b=on --c=3");
    }

    #[test]
    fn rejects_unknown_and_out_of_domain_overrides() {
        let space = ParamSpace::parse(SAMPLE).unwrap();
        assert!(matches!(
            space.render_configuration(&overrides(&[("nope", "1")])),
            Err(MagpieError::UnknownParameter(_))
        ));
        assert!(matches!(
            space.render_configuration(&overrides(&[("ccmin-mode", "7")])),
            Err(MagpieError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn rejects_bad_spaces() {
        // default outside the domain
        assert!(ParamSpace::parse("a {x,y} [z] --a={}").is_err());
        // special value outside the domain
        assert!(ParamSpace::parse("a [1,5] [2] (int) (uniform) special{9} --a={}").is_err());
        // log-uniform with a non-positive bound
        assert!(ParamSpace::parse("a [0,5] [2] (int) (log) --a={}").is_err());
        // duplicate name
        assert!(ParamSpace::parse("a {x} [x] --a={}\na {y} [y] --a={}").is_err());
        // condition cycle
        assert!(ParamSpace::parse(
            "a {x,y} [x] --a={}\nb {x,y} [x] --b={}\ncondition a | b in {x}\ncondition b | a in {x}"
        )
        .is_err());
        // condition on a missing parent
        assert!(ParamSpace::parse("a {x,y} [x] --a={}\ncondition a | ghost in {x}").is_err());
        // forbidden value outside the domain
        assert!(ParamSpace::parse("a {x,y} [x] --a={}\nforbidden {a=q}").is_err());
        // template without placeholder
        assert!(ParamSpace::parse("a {x,y} [x] --a=x").is_err());
    }

    #[test]
    fn special_values_get_their_reserved_mass() {
        let space =
            ParamSpace::parse("w [0,99] [50] (int) (uniform) special{0} --w={}").unwrap();
        let spec = space.get("w").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let zeros = (0..10_000).filter(|_| spec.sample_value(&mut rng) == "0").count();
        // ~10% from the special list plus ~1% from the uniform domain.
        assert!((800..1500).contains(&zeros), "zeros drawn: {zeros}");
    }

    #[test]
    fn enumeration_lists_finite_domains_exactly() {
        let space = ParamSpace::parse(
            "a {x,y,z} [x] --a={}\nb [1,8] [1] (int) (uniform) --b={}\nc [0.1,1.0] [0.5] (float) (uniform) --c={}",
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(space.get("a").unwrap().enumeration_values(10, &mut rng).len(), 3);
        let b_vals = space.get("b").unwrap().enumeration_values(10, &mut rng);
        assert_eq!(b_vals, vec!["1", "2", "3", "4", "5", "6", "7", "8"]);
        let c_vals = space.get("c").unwrap().enumeration_values(10, &mut rng);
        assert_eq!(c_vals.len(), 10);
        for v in &c_vals {
            let f: f64 = v.parse().unwrap();
            assert!((0.1..=1.0).contains(&f));
        }
    }
}
