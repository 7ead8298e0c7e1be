//! Patch representation: ordered edit sequences and their text form.
//!
//! A patch is a list of small edits against the original target model. The
//! list is ordered, may contain duplicates, and the empty patch denotes the
//! unmodified software. Every edit names locations in the *original* model,
//! never nodes produced by earlier edits, which keeps patches composable and
//! individually removable.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;

use crate::error::{MagpieError, Result};

/// The six edit families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EditKind {
    ParamSet,
    StmtDelete,
    StmtReplace,
    StmtInsert,
    ConstantSet,
    ConstantUpdate,
}

impl EditKind {
    pub const ALL: [EditKind; 6] = [
        EditKind::ParamSet,
        EditKind::StmtDelete,
        EditKind::StmtReplace,
        EditKind::StmtInsert,
        EditKind::ConstantSet,
        EditKind::ConstantUpdate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EditKind::ParamSet => "ParamSet",
            EditKind::StmtDelete => "StmtDelete",
            EditKind::StmtReplace => "StmtReplace",
            EditKind::StmtInsert => "StmtInsert",
            EditKind::ConstantSet => "ConstantSet",
            EditKind::ConstantUpdate => "ConstantUpdate",
        }
    }
}

impl fmt::Display for EditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EditKind {
    type Err = MagpieError;

    fn from_str(s: &str) -> Result<Self> {
        for kind in EditKind::ALL {
            if s.eq_ignore_ascii_case(kind.as_str()) {
                return Ok(kind);
            }
        }
        Err(MagpieError::Config {
            key: "families".into(),
            reason: format!("unknown edit kind '{s}'"),
        })
    }
}

/// The six constant-update operators, written exactly as they appear in
/// patch files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOperator {
    /// `+1`
    Increment,
    /// `-1`
    Decrement,
    /// `*2`
    Double,
    /// `/2`
    Halve,
    /// `*3/2`
    GrowHalf,
    /// `*2/3`
    ShrinkThird,
}

impl UpdateOperator {
    pub const ALL: [UpdateOperator; 6] = [
        UpdateOperator::Increment,
        UpdateOperator::Decrement,
        UpdateOperator::Double,
        UpdateOperator::Halve,
        UpdateOperator::GrowHalf,
        UpdateOperator::ShrinkThird,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            UpdateOperator::Increment => "+1",
            UpdateOperator::Decrement => "-1",
            UpdateOperator::Double => "*2",
            UpdateOperator::Halve => "/2",
            UpdateOperator::GrowHalf => "*3/2",
            UpdateOperator::ShrinkThird => "*2/3",
        }
    }

    pub fn parse(s: &str) -> Option<UpdateOperator> {
        UpdateOperator::ALL.into_iter().find(|op| op.symbol() == s)
    }
}

/// Rewrites a constant's current text `E` into the updated expression.
///
/// The update parenthesizes the current text and appends the operator, so
/// repeated updates stack: `10` under `*2` becomes `((10)*2)`, and applying
/// `+1` to that yields `(((10)*2)+1)` — text that is already one
/// parenthesized group is not wrapped again. The host language only has to
/// accept ordinary parenthesized arithmetic.
pub fn apply_constant_update(current: &str, op: UpdateOperator) -> String {
    if is_single_paren_group(current) {
        format!("({}{})", current, op.symbol())
    } else {
        format!("(({}){})", current, op.symbol())
    }
}

/// True when the whole string is one balanced `(...)` group.
fn is_single_paren_group(s: &str) -> bool {
    let bytes = s.as_bytes();
    if bytes.len() < 2 || bytes[0] != b'(' || bytes[bytes.len() - 1] != b')' {
        return false;
    }
    let mut depth: i64 = 0;
    for (i, &b) in bytes.iter().enumerate() {
        match b {
            b'(' => depth += 1,
            b')' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
                if depth == 0 {
                    return i == bytes.len() - 1;
                }
            }
            _ => {}
        }
    }
    false
}

/// Address of one element node: the file id as written in the scenario, the
/// element's tag name, and the 0-based ordinal of that tag in pre-order
/// traversal of the original tree.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeRef {
    pub file: String,
    pub tag: String,
    pub index: usize,
}

impl NodeRef {
    pub fn new(file: impl Into<String>, tag: impl Into<String>, index: usize) -> Self {
        NodeRef { file: file.into(), tag: tag.into(), index }
    }
}

impl fmt::Display for NodeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}[{}]", self.file, self.tag, self.index)
    }
}

/// Which side of the anchor statement an insertion lands on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InsertSide {
    Before,
    After,
}

impl InsertSide {
    pub fn as_str(self) -> &'static str {
        match self {
            InsertSide::Before => "before",
            InsertSide::After => "after",
        }
    }
}

/// One edit. The variant determines which ingredient shape is present.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Edit {
    /// Assign `value` to the named parameter. Later assignments to the same
    /// parameter win.
    ParamSet { param: String, value: String },
    /// Remove the subtree rooted at `target`.
    StmtDelete { target: NodeRef },
    /// Replace `target`'s subtree with a fresh copy of `ingredient`'s
    /// original subtree. Ingredients come from the same file.
    StmtReplace { target: NodeRef, ingredient: NodeRef },
    /// Insert a fresh copy of `ingredient`'s original subtree immediately
    /// before or after `anchor`.
    StmtInsert { anchor: NodeRef, side: InsertSide, ingredient: NodeRef },
    /// Overwrite a numeric literal's text with `literal`.
    ConstantSet { target: NodeRef, literal: String },
    /// Wrap a numeric literal's *current* text with one arithmetic operator.
    ConstantUpdate { target: NodeRef, op: UpdateOperator },
}

impl Edit {
    pub fn kind(&self) -> EditKind {
        match self {
            Edit::ParamSet { .. } => EditKind::ParamSet,
            Edit::StmtDelete { .. } => EditKind::StmtDelete,
            Edit::StmtReplace { .. } => EditKind::StmtReplace,
            Edit::StmtInsert { .. } => EditKind::StmtInsert,
            Edit::ConstantSet { .. } => EditKind::ConstantSet,
            Edit::ConstantUpdate { .. } => EditKind::ConstantUpdate,
        }
    }
}

fn quoted(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Edit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Edit::ParamSet { param, value } => {
                write!(f, "ParamSet({}, {})", quoted(param), quoted(value))
            }
            Edit::StmtDelete { target } => {
                write!(f, "StmtDelete({})", quoted(&target.to_string()))
            }
            Edit::StmtReplace { target, ingredient } => write!(
                f,
                "StmtReplace({}, {})",
                quoted(&target.to_string()),
                quoted(&ingredient.to_string())
            ),
            Edit::StmtInsert { anchor, side, ingredient } => write!(
                f,
                "StmtInsert({}, {})",
                quoted(&format!("{}:{}", anchor, side.as_str())),
                quoted(&ingredient.to_string())
            ),
            Edit::ConstantSet { target, literal } => {
                write!(f, "ConstantSet({}, {})", quoted(&target.to_string()), quoted(literal))
            }
            Edit::ConstantUpdate { target, op } => {
                write!(f, "ConstantUpdate({}, {})", quoted(&target.to_string()), quoted(op.symbol()))
            }
        }
    }
}

/// An ordered sequence of edits. Equality is structural: same edits in the
/// same order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Patch {
    pub edits: Vec<Edit>,
}

impl Patch {
    pub fn empty() -> Patch {
        Patch::default()
    }

    pub fn new(edits: Vec<Edit>) -> Patch {
        Patch { edits }
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    /// One edit per line; empty patches render as the empty string.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for edit in &self.edits {
            out.push_str(&edit.to_string());
            out.push('\n');
        }
        out
    }

    /// Parses the text form. Blank lines and `#` comment lines are ignored.
    pub fn parse(text: &str) -> Result<Patch> {
        let mut edits = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            edits.push(parse_edit_line(trimmed).map_err(|msg| MagpieError::PatchParse {
                line: i + 1,
                msg,
            })?);
        }
        Ok(Patch { edits })
    }
}

impl fmt::Display for Patch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// Patches travel through JSON (traces, campaign results) in their text form
// rather than as nested structures.
impl Serialize for Patch {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for Patch {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        Patch::parse(&text).map_err(serde::de::Error::custom)
    }
}

impl Serialize for Edit {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Edit {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_edit_line(text.trim()).map_err(serde::de::Error::custom)
    }
}

/// Splits `Kind("arg", "arg")` into the kind name and unescaped arguments.
fn parse_call(line: &str) -> std::result::Result<(String, Vec<String>), String> {
    let bytes: Vec<char> = line.chars().collect();
    let mut pos = 0;

    let skip_ws = |pos: &mut usize| {
        while *pos < bytes.len() && bytes[*pos].is_whitespace() {
            *pos += 1;
        }
    };

    skip_ws(&mut pos);
    let start = pos;
    while pos < bytes.len() && (bytes[pos].is_ascii_alphanumeric() || bytes[pos] == '_') {
        pos += 1;
    }
    if pos == start {
        return Err("expected an edit kind name".into());
    }
    let kind: String = bytes[start..pos].iter().collect();

    skip_ws(&mut pos);
    if pos >= bytes.len() || bytes[pos] != '(' {
        return Err("expected '(' after the edit kind".into());
    }
    pos += 1;

    let mut args = Vec::new();
    loop {
        skip_ws(&mut pos);
        if pos >= bytes.len() {
            return Err("unterminated argument list".into());
        }
        if bytes[pos] == ')' && args.is_empty() {
            pos += 1;
            break;
        }
        if bytes[pos] != '"' {
            return Err("expected a double-quoted argument".into());
        }
        pos += 1;
        let mut arg = String::new();
        loop {
            if pos >= bytes.len() {
                return Err("unterminated string".into());
            }
            match bytes[pos] {
                '\\' => {
                    pos += 1;
                    match bytes.get(pos) {
                        Some('"') => arg.push('"'),
                        Some('\\') => arg.push('\\'),
                        other => {
                            return Err(format!(
                                "invalid escape '\\{}'",
                                other.map(|c| c.to_string()).unwrap_or_default()
                            ))
                        }
                    }
                    pos += 1;
                }
                '"' => {
                    pos += 1;
                    break;
                }
                c => {
                    arg.push(c);
                    pos += 1;
                }
            }
        }
        args.push(arg);
        skip_ws(&mut pos);
        match bytes.get(pos) {
            Some(',') => {
                pos += 1;
            }
            Some(')') => {
                pos += 1;
                break;
            }
            _ => return Err("expected ',' or ')' after an argument".into()),
        }
    }

    skip_ws(&mut pos);
    if pos != bytes.len() {
        return Err("trailing characters after ')'".into());
    }
    Ok((kind, args))
}

/// Parses `file::tag[n]`. The split is on the last `::` so file ids may
/// themselves contain colons.
fn parse_node_ref(s: &str) -> std::result::Result<NodeRef, String> {
    let (file, rest) = s
        .rsplit_once("::")
        .ok_or_else(|| format!("location '{s}' lacks '::'"))?;
    if file.is_empty() {
        return Err(format!("location '{s}' has an empty file id"));
    }
    let open = rest.find('[').ok_or_else(|| format!("location '{s}' lacks '['"))?;
    if !rest.ends_with(']') {
        return Err(format!("location '{s}' lacks closing ']'"));
    }
    let tag = &rest[..open];
    if tag.is_empty() {
        return Err(format!("location '{s}' has an empty tag"));
    }
    let index: usize = rest[open + 1..rest.len() - 1]
        .parse()
        .map_err(|_| format!("location '{s}' has a bad index"))?;
    Ok(NodeRef::new(file, tag, index))
}

fn parse_insert_anchor(s: &str) -> std::result::Result<(NodeRef, InsertSide), String> {
    let (node, side) = s
        .rsplit_once(':')
        .ok_or_else(|| format!("insertion point '{s}' lacks ':before' or ':after'"))?;
    let side = match side {
        "before" => InsertSide::Before,
        "after" => InsertSide::After,
        other => return Err(format!("unknown insertion side '{other}'")),
    };
    Ok((parse_node_ref(node)?, side))
}

fn parse_number_ref(s: &str) -> std::result::Result<NodeRef, String> {
    let node = parse_node_ref(s)?;
    if node.tag != "number" {
        return Err(format!("constant location '{s}' must use the 'number' tag"));
    }
    Ok(node)
}

fn parse_edit_line(line: &str) -> std::result::Result<Edit, String> {
    let (kind, args) = parse_call(line)?;
    let want = |n: usize| -> std::result::Result<(), String> {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{kind} takes {n} argument(s), got {}", args.len()))
        }
    };
    match kind.as_str() {
        "ParamSet" => {
            want(2)?;
            Ok(Edit::ParamSet { param: args[0].clone(), value: args[1].clone() })
        }
        "StmtDelete" => {
            want(1)?;
            Ok(Edit::StmtDelete { target: parse_node_ref(&args[0])? })
        }
        "StmtReplace" => {
            want(2)?;
            Ok(Edit::StmtReplace {
                target: parse_node_ref(&args[0])?,
                ingredient: parse_node_ref(&args[1])?,
            })
        }
        "StmtInsert" => {
            want(2)?;
            let (anchor, side) = parse_insert_anchor(&args[0])?;
            Ok(Edit::StmtInsert { anchor, side, ingredient: parse_node_ref(&args[1])? })
        }
        "ConstantSet" => {
            want(2)?;
            Ok(Edit::ConstantSet { target: parse_number_ref(&args[0])?, literal: args[1].clone() })
        }
        "ConstantUpdate" => {
            want(2)?;
            let op = UpdateOperator::parse(&args[1])
                .ok_or_else(|| format!("unknown update operator '{}'", args[1]))?;
            Ok(Edit::ConstantUpdate { target: parse_number_ref(&args[0])?, op })
        }
        other => Err(format!("unknown edit kind '{other}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip(p: &Patch) {
        let text = p.render();
        let back = Patch::parse(&text).expect("reparse");
        assert_eq!(&back, p, "round-trip changed the patch:\n{text}");
    }

    #[test]
    fn renders_every_kind_in_grammar_form() {
        let p = Patch::new(vec![
            Edit::ParamSet { param: "luby".into(), value: "false".into() },
            Edit::StmtDelete { target: NodeRef::new("core/Solver.cc", "stmt", 14) },
            Edit::StmtReplace {
                target: NodeRef::new("a.c", "expr_stmt", 3),
                ingredient: NodeRef::new("a.c", "expr_stmt", 0),
            },
            Edit::StmtInsert {
                anchor: NodeRef::new("a.c", "stmt", 2),
                side: InsertSide::After,
                ingredient: NodeRef::new("a.c", "stmt", 5),
            },
            Edit::ConstantSet { target: NodeRef::new("a.c", "number", 1), literal: "0".into() },
            Edit::ConstantUpdate {
                target: NodeRef::new("a.c", "number", 0),
                op: UpdateOperator::GrowHalf,
            },
        ]);
        let text = p.render();
        assert_eq!(
            text,
            concat!(
                "ParamSet(\"luby\", \"false\")\n",
                "StmtDelete(\"core/Solver.cc::stmt[14]\")\n",
                "StmtReplace(\"a.c::expr_stmt[3]\", \"a.c::expr_stmt[0]\")\n",
                "StmtInsert(\"a.c::stmt[2]:after\", \"a.c::stmt[5]\")\n",
                "ConstantSet(\"a.c::number[1]\", \"0\")\n",
                "ConstantUpdate(\"a.c::number[0]\", \"*3/2\")\n",
            )
        );
        roundtrip(&p);
    }

    #[test]
    fn escapes_quotes_and_backslashes() {
        let p = Patch::new(vec![Edit::ParamSet {
            param: "path".into(),
            value: "C:\\tmp \"x\"".into(),
        }]);
        let text = p.render();
        assert_eq!(text, "ParamSet(\"path\", \"C:\\\\tmp \\\"x\\\"\")\n");
        roundtrip(&p);
    }

    #[test]
    fn skips_comments_and_blank_lines() {
        let text = "\n# tuned by hand\n  \nParamSet(\"a\", \"1\")\n";
        let p = Patch::parse(text).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn empty_text_is_the_empty_patch() {
        assert_eq!(Patch::parse("").unwrap(), Patch::empty());
        assert_eq!(Patch::empty().render(), "");
    }

    #[test]
    fn reports_line_numbers_on_bad_input() {
        let err = Patch::parse("ParamSet(\"a\", \"1\")\nFrobnicate(\"x\")\n").unwrap_err();
        match err {
            MagpieError::PatchParse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("unknown edit kind"), "{msg}");
            }
            other => panic!("wrong error: {other}"),
        }
    }

    #[test]
    fn rejects_wrong_argument_shapes() {
        assert!(Patch::parse("StmtDelete(\"a.c::stmt[0]\", \"a.c::stmt[1]\")").is_err());
        assert!(Patch::parse("ParamSet(\"a\")").is_err());
        assert!(Patch::parse("StmtInsert(\"a.c::stmt[0]:sideways\", \"a.c::stmt[1]\")").is_err());
        assert!(Patch::parse("ConstantUpdate(\"a.c::number[0]\", \"*4\")").is_err());
        // Constant edits must address 'number' nodes.
        assert!(Patch::parse("ConstantSet(\"a.c::stmt[0]\", \"1\")").is_err());
        // Unterminated string.
        assert!(Patch::parse("ParamSet(\"a, \"1\")").is_err());
    }

    #[test]
    fn parses_surrounding_whitespace_leniently() {
        let p = Patch::parse("  StmtDelete( \"a.c::stmt[0]\" )  ").unwrap();
        assert_eq!(p.render(), "StmtDelete(\"a.c::stmt[0]\")\n");
    }

    #[test]
    fn update_operator_wraps_current_text() {
        assert_eq!(apply_constant_update("10", UpdateOperator::Double), "((10)*2)");
        assert_eq!(
            apply_constant_update("((10)*2)", UpdateOperator::Increment),
            "(((10)*2)+1)"
        );
        assert_eq!(apply_constant_update("0.5", UpdateOperator::GrowHalf), "((0.5)*3/2)");
        assert_eq!(apply_constant_update("7", UpdateOperator::Decrement), "((7)-1)");
        assert_eq!(apply_constant_update("7", UpdateOperator::Halve), "((7)/2)");
        assert_eq!(apply_constant_update("7", UpdateOperator::ShrinkThird), "((7)*2/3)");
        // "(1)+(2)" is balanced but not one group, so it gets wrapped.
        assert_eq!(apply_constant_update("(1)+(2)", UpdateOperator::Double), "(((1)+(2))*2)");
    }

    #[test]
    fn file_ids_with_colons_survive() {
        let p = Patch::new(vec![Edit::StmtDelete {
            target: NodeRef::new("odd::name.c", "stmt", 1),
        }]);
        roundtrip(&p);
    }
}
