//! The target model: parsed source trees plus the parameter space, and the
//! machinery that applies a patch to produce variant artifacts.
//!
//! Edit locations always name nodes of the *original* trees — (file, tag,
//! pre-order ordinal of that tag) — never nodes created by earlier edits.
//! Application therefore tracks which original nodes are still alive in the
//! working copy; an edit whose target or ingredient has been removed by an
//! earlier edit degrades to a silent no-op instead of failing, and the no-op
//! positions are reported back to the caller.

use std::collections::{BTreeMap, HashMap};

use crate::edit::{apply_constant_update, Edit, InsertSide, NodeRef, Patch};
use crate::error::{MagpieError, Result};
use crate::params::ParamSpace;
use crate::xml::{escape_text, NodeId, XmlTree};

/// Element tags treated as statements when the scenario does not say
/// otherwise. This matches the usual tag set of XML-annotated C/C++ sources.
pub const DEFAULT_STMT_TAGS: &[&str] = &[
    "decl_stmt",
    "expr_stmt",
    "if_stmt",
    "if",
    "while",
    "for",
    "do",
    "switch",
    "break",
    "continue",
    "return",
    "goto",
    "empty_stmt",
];

#[derive(Debug, Clone)]
pub struct SourceFile {
    /// The file id exactly as the scenario names it; used in edit locations.
    pub id: String,
    /// The pristine tree. Never mutated; ingredients are copied from here.
    pub tree: XmlTree,
    /// Statement nodes in pre-order (elements whose tag is a statement tag).
    pub stmt_nodes: Vec<NodeId>,
    /// `number` leaf nodes in pre-order.
    pub number_nodes: Vec<NodeId>,
    /// Per-tag pre-order node lists; position in the list is the ordinal
    /// used by [`NodeRef`].
    tag_ordinals: HashMap<String, Vec<NodeId>>,
    /// Reverse of `tag_ordinals`: ordinal of each element within its tag.
    ordinal_of: HashMap<NodeId, usize>,
}

impl SourceFile {
    fn build(id: String, tree: XmlTree, stmt_tags: &[String]) -> SourceFile {
        let mut stmt_nodes = Vec::new();
        let mut number_nodes = Vec::new();
        let mut tag_ordinals: HashMap<String, Vec<NodeId>> = HashMap::new();
        let mut ordinal_of = HashMap::new();

        for node in tree.pre_order(tree.root) {
            let Some(tag) = tree.tag(node) else { continue };
            let list = tag_ordinals.entry(tag.to_string()).or_default();
            ordinal_of.insert(node, list.len());
            list.push(node);
            if stmt_tags.iter().any(|t| t == tag) {
                stmt_nodes.push(node);
            }
            if tag == "number" {
                number_nodes.push(node);
            }
        }

        SourceFile { id, tree, stmt_nodes, number_nodes, tag_ordinals, ordinal_of }
    }

    /// The [`NodeRef`] that addresses `node` in this file.
    pub fn ref_of(&self, node: NodeId) -> NodeRef {
        let tag = self.tree.tag(node).expect("ref_of on a non-element node");
        NodeRef::new(self.id.clone(), tag, self.ordinal_of[&node])
    }

    fn lookup(&self, r: &NodeRef) -> Option<NodeId> {
        self.tag_ordinals.get(&r.tag).and_then(|list| list.get(r.index)).copied()
    }
}

/// Everything a patch can act on: source trees and the parameter space.
#[derive(Debug, Clone)]
pub struct TargetModel {
    pub files: Vec<SourceFile>,
    pub space: ParamSpace,
    pub stmt_tags: Vec<String>,
    by_id: HashMap<String, usize>,
}

/// The rendered result of applying a patch: one text per file (unmodified
/// files render byte-identical to their input), the effective parameter
/// assignment, and the indices of edits that degraded to no-ops.
#[derive(Debug, Clone)]
pub struct VariantArtifacts {
    pub files: Vec<(String, String)>,
    pub assignment: BTreeMap<String, String>,
    pub noop_edits: Vec<usize>,
}

impl TargetModel {
    /// Builds a model from in-memory file contents. `stmt_tags` may be empty
    /// to request the default tag set.
    pub fn new(
        files: Vec<(String, String)>,
        space: ParamSpace,
        stmt_tags: Vec<String>,
    ) -> Result<TargetModel> {
        let stmt_tags = if stmt_tags.is_empty() {
            DEFAULT_STMT_TAGS.iter().map(|s| s.to_string()).collect()
        } else {
            stmt_tags
        };
        let mut model = TargetModel {
            files: Vec::new(),
            space,
            stmt_tags: stmt_tags.clone(),
            by_id: HashMap::new(),
        };
        for (id, content) in files {
            if model.by_id.contains_key(&id) {
                return Err(MagpieError::Scenario(format!("duplicate target file '{id}'")));
            }
            let tree = XmlTree::parse(&content, &id)?;
            model.by_id.insert(id.clone(), model.files.len());
            model.files.push(SourceFile::build(id, tree, &stmt_tags));
        }
        Ok(model)
    }

    pub fn file(&self, id: &str) -> Option<&SourceFile> {
        self.by_id.get(id).map(|&i| &self.files[i])
    }

    pub fn stmt_count(&self) -> usize {
        self.files.iter().map(|f| f.stmt_nodes.len()).sum()
    }

    pub fn number_count(&self) -> usize {
        self.files.iter().map(|f| f.number_nodes.len()).sum()
    }

    fn resolve(&self, r: &NodeRef) -> Result<(usize, NodeId)> {
        let file_idx = *self
            .by_id
            .get(&r.file)
            .ok_or_else(|| MagpieError::UnknownLocation(r.to_string()))?;
        let node = self.files[file_idx]
            .lookup(r)
            .ok_or_else(|| MagpieError::UnknownLocation(r.to_string()))?;
        Ok((file_idx, node))
    }

    fn resolve_stmt(&self, r: &NodeRef) -> Result<(usize, NodeId)> {
        if !self.stmt_tags.iter().any(|t| *t == r.tag) {
            return Err(MagpieError::UnknownLocation(format!(
                "{r} ('{}' is not a statement tag)",
                r.tag
            )));
        }
        self.resolve(r)
    }

    fn resolve_number(&self, r: &NodeRef) -> Result<(usize, NodeId)> {
        if r.tag != "number" {
            return Err(MagpieError::UnknownLocation(format!(
                "{r} (constants use the 'number' tag)"
            )));
        }
        self.resolve(r)
    }

    /// Applies `patch` and renders the variant. Pure: the model itself is
    /// never mutated, so a patch always means the same thing regardless of
    /// what was applied before.
    pub fn apply_patch(&self, patch: &Patch) -> Result<VariantArtifacts> {
        // Resolve every location up front so failures leave no half-applied
        // state and index errors surface regardless of edit order.
        enum Planned {
            Param,
            Delete((usize, NodeId)),
            Replace((usize, NodeId), (usize, NodeId)),
            Insert((usize, NodeId), InsertSide, (usize, NodeId)),
            SetConst((usize, NodeId)),
            UpdateConst((usize, NodeId)),
        }
        let mut planned = Vec::with_capacity(patch.edits.len());
        for edit in &patch.edits {
            planned.push(match edit {
                Edit::ParamSet { param, .. } => {
                    if self.space.get(param).is_none() {
                        return Err(MagpieError::UnknownParameter(param.clone()));
                    }
                    Planned::Param
                }
                Edit::StmtDelete { target } => Planned::Delete(self.resolve_stmt(target)?),
                Edit::StmtReplace { target, ingredient } => {
                    Planned::Replace(self.resolve_stmt(target)?, self.resolve_stmt(ingredient)?)
                }
                Edit::StmtInsert { anchor, side, ingredient } => Planned::Insert(
                    self.resolve_stmt(anchor)?,
                    *side,
                    self.resolve_stmt(ingredient)?,
                ),
                Edit::ConstantSet { target, .. } => {
                    Planned::SetConst(self.resolve_number(target)?)
                }
                Edit::ConstantUpdate { target, .. } => {
                    Planned::UpdateConst(self.resolve_number(target)?)
                }
            });
        }

        let mut work: Vec<XmlTree> = self.files.iter().map(|f| f.tree.clone()).collect();
        // Aliveness of original nodes only; fresh copies get ids past the
        // original arena length and are never addressable.
        let mut alive: Vec<Vec<bool>> =
            self.files.iter().map(|f| vec![true; f.tree.nodes.len()]).collect();
        let orig_len: Vec<usize> = self.files.iter().map(|f| f.tree.nodes.len()).collect();

        let mut assignment = BTreeMap::new();
        let mut noop_edits = Vec::new();

        let kill_subtree = |work: &XmlTree, alive: &mut Vec<bool>, root: NodeId, orig: usize| {
            for n in work.pre_order(root) {
                if n < orig {
                    alive[n] = false;
                }
            }
        };

        for (i, (edit, plan)) in patch.edits.iter().zip(planned).enumerate() {
            match (edit, plan) {
                (Edit::ParamSet { param, value }, Planned::Param) => {
                    assignment.insert(param.clone(), value.clone());
                }
                (Edit::StmtDelete { .. }, Planned::Delete((f, node))) => {
                    if !alive[f][node] {
                        noop_edits.push(i);
                        continue;
                    }
                    if !work[f].detach(node) {
                        noop_edits.push(i); // root element: nowhere to detach from
                        continue;
                    }
                    kill_subtree(&work[f], &mut alive[f], node, orig_len[f]);
                }
                (Edit::StmtReplace { .. }, Planned::Replace((f, node), (fi, ing))) => {
                    if !alive[f][node] || !alive[fi][ing] {
                        noop_edits.push(i);
                        continue;
                    }
                    let Some((parent, pos)) = work[f].position_in_parent(node) else {
                        noop_edits.push(i);
                        continue;
                    };
                    work[f].detach(node);
                    kill_subtree(&work[f], &mut alive[f], node, orig_len[f]);
                    let fresh = {
                        let src = &self.files[fi].tree;
                        work[f].copy_subtree_from(src, ing)
                    };
                    work[f].insert_child_at(parent, pos, fresh);
                }
                (Edit::StmtInsert { .. }, Planned::Insert((f, anchor), side, (fi, ing))) => {
                    if !alive[f][anchor] || !alive[fi][ing] {
                        noop_edits.push(i);
                        continue;
                    }
                    let Some((parent, pos)) = work[f].position_in_parent(anchor) else {
                        noop_edits.push(i);
                        continue;
                    };
                    let at = match side {
                        InsertSide::Before => pos,
                        InsertSide::After => pos + 1,
                    };
                    let fresh = {
                        let src = &self.files[fi].tree;
                        work[f].copy_subtree_from(src, ing)
                    };
                    work[f].insert_child_at(parent, at, fresh);
                }
                (Edit::ConstantSet { literal, .. }, Planned::SetConst((f, node))) => {
                    if !alive[f][node] {
                        noop_edits.push(i);
                        continue;
                    }
                    work[f].set_text(node, escape_text(literal));
                }
                (Edit::ConstantUpdate { op, .. }, Planned::UpdateConst((f, node))) => {
                    if !alive[f][node] {
                        noop_edits.push(i);
                        continue;
                    }
                    let current = work[f].text_content(node);
                    work[f].set_text(node, apply_constant_update(&current, *op));
                }
                _ => unreachable!("plan shape always matches edit shape"),
            }
        }

        let files = self
            .files
            .iter()
            .zip(&work)
            .map(|(f, w)| (f.id.clone(), w.render()))
            .collect();

        Ok(VariantArtifacts { files, assignment, noop_edits })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edit::UpdateOperator;

    const PROGRAM: &str = "<?xml version=\"1.0\"?>\n<program>\n  <stmt>init</stmt>\n  <stmt>work <number>60</number></stmt>\n  <stmt>work <number>35</number></stmt>\n  <stmt>out</stmt>\n</program>\n";

    fn model() -> TargetModel {
        TargetModel::new(
            vec![("p.xml".into(), PROGRAM.into())],
            ParamSpace::parse("knob [1,8] [1] (int) (uniform) --knob={}").unwrap(),
            vec!["stmt".into()],
        )
        .unwrap()
    }

    fn sref(i: usize) -> NodeRef {
        NodeRef::new("p.xml", "stmt", i)
    }

    fn nref(i: usize) -> NodeRef {
        NodeRef::new("p.xml", "number", i)
    }

    #[test]
    fn indexes_statements_and_numbers() {
        let m = model();
        assert_eq!(m.stmt_count(), 4);
        assert_eq!(m.number_count(), 2);
        let f = m.file("p.xml").unwrap();
        assert_eq!(f.ref_of(f.stmt_nodes[2]), sref(2));
        assert_eq!(f.ref_of(f.number_nodes[1]), nref(1));
    }

    #[test]
    fn empty_patch_renders_identically() {
        let m = model();
        let art = m.apply_patch(&Patch::empty()).unwrap();
        assert_eq!(art.files[0].1, PROGRAM);
        assert!(art.assignment.is_empty());
        assert!(art.noop_edits.is_empty());
    }

    #[test]
    fn delete_removes_the_subtree() {
        let m = model();
        let art = m
            .apply_patch(&Patch::new(vec![Edit::StmtDelete { target: sref(1) }]))
            .unwrap();
        assert!(!art.files[0].1.contains("60"));
        assert!(art.files[0].1.contains("35"));
        assert!(art.noop_edits.is_empty());
    }

    #[test]
    fn edits_on_deleted_nodes_are_reported_noops() {
        let m = model();
        let p = Patch::new(vec![
            Edit::StmtDelete { target: sref(1) },
            Edit::StmtReplace { target: sref(1), ingredient: sref(3) },
            Edit::ConstantSet { target: nref(0), literal: "1".into() },
        ]);
        let art = m.apply_patch(&p).unwrap();
        // The replace targets a deleted statement; the constant sat inside
        // the deleted subtree. Both degrade silently.
        assert_eq!(art.noop_edits, vec![1, 2]);
        // Deleting twice is also a no-op the second time.
        let p2 = Patch::new(vec![
            Edit::StmtDelete { target: sref(1) },
            Edit::StmtDelete { target: sref(1) },
        ]);
        assert_eq!(m.apply_patch(&p2).unwrap().noop_edits, vec![1]);
    }

    #[test]
    fn replace_uses_pristine_ingredients() {
        let m = model();
        // Mutate a constant inside stmt[1], then replace stmt[2] with
        // stmt[1]: the copy must carry the *original* 60, not the mutated
        // text, because ingredients are drawn from the original model.
        let p = Patch::new(vec![
            Edit::ConstantSet { target: nref(0), literal: "999".into() },
            Edit::StmtReplace { target: sref(2), ingredient: sref(1) },
        ]);
        let art = m.apply_patch(&p).unwrap();
        let text = &art.files[0].1;
        assert!(text.contains("999"), "constant edit lost: {text}");
        assert!(text.contains("<stmt>work <number>60</number></stmt>"), "{text}");
        assert!(!text.contains("35"));
    }

    #[test]
    fn insert_before_and_after_position_correctly() {
        let m = model();
        let before = m
            .apply_patch(&Patch::new(vec![Edit::StmtInsert {
                anchor: sref(0),
                side: InsertSide::Before,
                ingredient: sref(3),
            }]))
            .unwrap();
        let after = m
            .apply_patch(&Patch::new(vec![Edit::StmtInsert {
                anchor: sref(0),
                side: InsertSide::After,
                ingredient: sref(3),
            }]))
            .unwrap();
        let b = &before.files[0].1;
        let a = &after.files[0].1;
        assert!(b.find("<stmt>out</stmt>").unwrap() < b.find("<stmt>init</stmt>").unwrap());
        assert!(a.find("<stmt>init</stmt>").unwrap() < a.find("<stmt>out</stmt>").unwrap());
        assert!(a.find("<stmt>out</stmt>").unwrap() < a.find("work").unwrap());
    }

    #[test]
    fn inserts_relative_to_deleted_anchors_are_noops() {
        let m = model();
        let p = Patch::new(vec![
            Edit::StmtDelete { target: sref(2) },
            Edit::StmtInsert { anchor: sref(2), side: InsertSide::After, ingredient: sref(0) },
            Edit::StmtReplace { target: sref(3), ingredient: sref(2) }, // dead ingredient
        ]);
        let art = m.apply_patch(&p).unwrap();
        assert_eq!(art.noop_edits, vec![1, 2]);
    }

    #[test]
    fn constant_updates_stack_textually() {
        let m = model();
        let p = Patch::new(vec![
            Edit::ConstantUpdate { target: nref(1), op: UpdateOperator::Double },
            Edit::ConstantUpdate { target: nref(1), op: UpdateOperator::Increment },
        ]);
        let art = m.apply_patch(&p).unwrap();
        assert!(art.files[0].1.contains("<number>(((35)*2)+1)</number>"));
        // Set then update works on the current text.
        let p = Patch::new(vec![
            Edit::ConstantSet { target: nref(0), literal: "5".into() },
            Edit::ConstantUpdate { target: nref(0), op: UpdateOperator::Halve },
        ]);
        let art = m.apply_patch(&p).unwrap();
        assert!(art.files[0].1.contains("<number>((5)/2)</number>"));
    }

    #[test]
    fn later_param_assignments_win() {
        let m = model();
        let p = Patch::new(vec![
            Edit::ParamSet { param: "knob".into(), value: "3".into() },
            Edit::ParamSet { param: "knob".into(), value: "7".into() },
        ]);
        let art = m.apply_patch(&p).unwrap();
        assert_eq!(art.assignment.get("knob").map(String::as_str), Some("7"));
    }

    #[test]
    fn unknown_locations_and_parameters_error() {
        let m = model();
        assert!(matches!(
            m.apply_patch(&Patch::new(vec![Edit::StmtDelete { target: sref(9) }])),
            Err(MagpieError::UnknownLocation(_))
        ));
        assert!(matches!(
            m.apply_patch(&Patch::new(vec![Edit::StmtDelete {
                target: NodeRef::new("ghost.xml", "stmt", 0)
            }])),
            Err(MagpieError::UnknownLocation(_))
        ));
        // Statement edits cannot address non-statement tags.
        assert!(matches!(
            m.apply_patch(&Patch::new(vec![Edit::StmtDelete {
                target: NodeRef::new("p.xml", "number", 0)
            }])),
            Err(MagpieError::UnknownLocation(_))
        ));
        assert!(matches!(
            m.apply_patch(&Patch::new(vec![Edit::ParamSet {
                param: "ghost".into(),
                value: "1".into()
            }])),
            Err(MagpieError::UnknownParameter(_))
        ));
    }
}
