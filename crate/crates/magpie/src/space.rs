//! The edit space: what edits exist for a model, how many per family, and
//! how to draw one uniformly at random.
//!
//! Counts follow directly from the model shape. With `S_f` statement nodes
//! in file `f` and `C` numeric literals overall:
//!
//! * deletions: `Σ S_f`
//! * replacements: `Σ S_f·(S_f − 1)` — replacing a statement with itself is
//!   excluded, and ingredients stay within their file
//! * insertions: `Σ 2·S_f·S_f` — before/after × anchors × ingredients
//! * constant sets: `3·C` (the singled-out values 0, 1, −1)
//! * constant updates: `6·C` (one per operator)
//! * parameter assignments: the sum of enumerable domain sizes, where
//!   continuous and wide integer domains contribute a fresh subsample of
//!   `samples_per_numeric` values per enumeration call.

use rand::Rng;

use crate::edit::{Edit, EditKind, InsertSide, UpdateOperator};
use crate::error::{MagpieError, Result};
use crate::model::TargetModel;

/// The values a `ConstantSet` edit may introduce.
pub const CONSTANT_SET_VALUES: [&str; 3] = ["0", "1", "-1"];

/// A materialized view of the edit space for one model and family set.
#[derive(Debug, Clone)]
pub struct EditSpace {
    pub families: Vec<EditKind>,
    pub samples_per_numeric: usize,
    /// Per-parameter value lists used for `ParamSet` enumeration; finite
    /// domains appear in full, continuous ones as this call's subsample.
    param_values: Vec<(String, Vec<String>)>,
    /// (file id, statement refs) per file, plus number refs, precomputed.
    stmt_refs: Vec<Vec<crate::edit::NodeRef>>,
    number_refs: Vec<crate::edit::NodeRef>,
}

/// Builds the edit space for the enabled `families`. The random generator
/// only feeds the subsampling of continuous parameter domains.
pub fn enumerate_edit_space<R: Rng>(
    model: &TargetModel,
    families: &[EditKind],
    samples_per_numeric: usize,
    rng: &mut R,
) -> EditSpace {
    let mut fams: Vec<EditKind> = families.to_vec();
    fams.sort();
    fams.dedup();

    let param_values = if fams.contains(&EditKind::ParamSet) {
        model
            .space
            .params
            .iter()
            .map(|spec| (spec.name.clone(), spec.enumeration_values(samples_per_numeric, rng)))
            .collect()
    } else {
        Vec::new()
    };

    let stmt_refs = model
        .files
        .iter()
        .map(|f| f.stmt_nodes.iter().map(|&n| f.ref_of(n)).collect())
        .collect();
    let number_refs = model
        .files
        .iter()
        .flat_map(|f| f.number_nodes.iter().map(|&n| f.ref_of(n)))
        .collect();

    EditSpace { families: fams, samples_per_numeric, param_values, stmt_refs, number_refs }
}

impl EditSpace {
    pub fn count(&self, kind: EditKind) -> u64 {
        if !self.families.contains(&kind) {
            return 0;
        }
        let c = self.number_refs.len() as u64;
        match kind {
            EditKind::ParamSet => self.param_values.iter().map(|(_, v)| v.len() as u64).sum(),
            EditKind::StmtDelete => self.stmt_refs.iter().map(|s| s.len() as u64).sum(),
            EditKind::StmtReplace => self
                .stmt_refs
                .iter()
                .map(|s| (s.len() as u64) * (s.len() as u64).saturating_sub(1))
                .sum(),
            EditKind::StmtInsert => {
                self.stmt_refs.iter().map(|s| 2 * (s.len() as u64) * (s.len() as u64)).sum()
            }
            EditKind::ConstantSet => 3 * c,
            EditKind::ConstantUpdate => 6 * c,
        }
    }

    pub fn counts(&self) -> Vec<(EditKind, u64)> {
        self.families.iter().map(|&k| (k, self.count(k))).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts().iter().map(|(_, n)| n).sum()
    }

    /// Materializes every edit of one family, in a fixed deterministic
    /// order. The length always equals [`EditSpace::count`].
    pub fn edits_of_kind(&self, kind: EditKind) -> Vec<Edit> {
        if !self.families.contains(&kind) {
            return Vec::new();
        }
        let mut out = Vec::new();
        match kind {
            EditKind::ParamSet => {
                for (param, values) in &self.param_values {
                    for v in values {
                        out.push(Edit::ParamSet { param: param.clone(), value: v.clone() });
                    }
                }
            }
            EditKind::StmtDelete => {
                for refs in &self.stmt_refs {
                    for r in refs {
                        out.push(Edit::StmtDelete { target: r.clone() });
                    }
                }
            }
            EditKind::StmtReplace => {
                for refs in &self.stmt_refs {
                    for t in refs {
                        for i in refs {
                            if t != i {
                                out.push(Edit::StmtReplace {
                                    target: t.clone(),
                                    ingredient: i.clone(),
                                });
                            }
                        }
                    }
                }
            }
            EditKind::StmtInsert => {
                for refs in &self.stmt_refs {
                    for anchor in refs {
                        for side in [InsertSide::Before, InsertSide::After] {
                            for i in refs {
                                out.push(Edit::StmtInsert {
                                    anchor: anchor.clone(),
                                    side,
                                    ingredient: i.clone(),
                                });
                            }
                        }
                    }
                }
            }
            EditKind::ConstantSet => {
                for r in &self.number_refs {
                    for v in CONSTANT_SET_VALUES {
                        out.push(Edit::ConstantSet { target: r.clone(), literal: v.into() });
                    }
                }
            }
            EditKind::ConstantUpdate => {
                for r in &self.number_refs {
                    for op in UpdateOperator::ALL {
                        out.push(Edit::ConstantUpdate { target: r.clone(), op });
                    }
                }
            }
        }
        out
    }

    pub fn all_edits(&self) -> Vec<Edit> {
        self.families.iter().flat_map(|&k| self.edits_of_kind(k)).collect()
    }
}

/// Draws one edit of `kind` uniformly: first the location, then the
/// ingredient under that kind's rules. Returns [`MagpieError::EmptySpace`]
/// when the model offers no edit of this family.
pub fn sample_random_edit<R: Rng>(
    model: &TargetModel,
    kind: EditKind,
    rng: &mut R,
) -> Result<Edit> {
    let empty = || MagpieError::EmptySpace(kind.as_str().to_string());

    // Flattened (file, node) statement index for uniform location draws.
    let stmt_pool = |min_stmts: usize| -> Vec<(usize, usize)> {
        model
            .files
            .iter()
            .enumerate()
            .filter(|(_, f)| f.stmt_nodes.len() >= min_stmts)
            .flat_map(|(fi, f)| (0..f.stmt_nodes.len()).map(move |si| (fi, si)))
            .collect()
    };
    let number_pool = || -> Vec<(usize, usize)> {
        model
            .files
            .iter()
            .enumerate()
            .flat_map(|(fi, f)| (0..f.number_nodes.len()).map(move |ni| (fi, ni)))
            .collect()
    };

    match kind {
        EditKind::ParamSet => {
            if model.space.is_empty() {
                return Err(empty());
            }
            let spec = &model.space.params[rng.random_range(0..model.space.len())];
            Ok(Edit::ParamSet { param: spec.name.clone(), value: spec.sample_value(rng) })
        }
        EditKind::StmtDelete => {
            let pool = stmt_pool(1);
            if pool.is_empty() {
                return Err(empty());
            }
            let (fi, si) = pool[rng.random_range(0..pool.len())];
            let f = &model.files[fi];
            Ok(Edit::StmtDelete { target: f.ref_of(f.stmt_nodes[si]) })
        }
        EditKind::StmtReplace => {
            // Only statements with at least one other statement in their
            // file can serve as replacement targets.
            let pool = stmt_pool(2);
            if pool.is_empty() {
                return Err(empty());
            }
            let (fi, si) = pool[rng.random_range(0..pool.len())];
            let f = &model.files[fi];
            let mut ii = rng.random_range(0..f.stmt_nodes.len() - 1);
            if ii >= si {
                ii += 1; // skip self-replacement
            }
            Ok(Edit::StmtReplace {
                target: f.ref_of(f.stmt_nodes[si]),
                ingredient: f.ref_of(f.stmt_nodes[ii]),
            })
        }
        EditKind::StmtInsert => {
            let pool = stmt_pool(1);
            if pool.is_empty() {
                return Err(empty());
            }
            let (fi, si) = pool[rng.random_range(0..pool.len())];
            let side =
                if rng.random_bool(0.5) { InsertSide::Before } else { InsertSide::After };
            let f = &model.files[fi];
            let ii = rng.random_range(0..f.stmt_nodes.len());
            Ok(Edit::StmtInsert {
                anchor: f.ref_of(f.stmt_nodes[si]),
                side,
                ingredient: f.ref_of(f.stmt_nodes[ii]),
            })
        }
        EditKind::ConstantSet => {
            let pool = number_pool();
            if pool.is_empty() {
                return Err(empty());
            }
            let (fi, ni) = pool[rng.random_range(0..pool.len())];
            let f = &model.files[fi];
            let v = CONSTANT_SET_VALUES[rng.random_range(0..CONSTANT_SET_VALUES.len())];
            Ok(Edit::ConstantSet { target: f.ref_of(f.number_nodes[ni]), literal: v.into() })
        }
        EditKind::ConstantUpdate => {
            let pool = number_pool();
            if pool.is_empty() {
                return Err(empty());
            }
            let (fi, ni) = pool[rng.random_range(0..pool.len())];
            let f = &model.files[fi];
            let op = UpdateOperator::ALL[rng.random_range(0..UpdateOperator::ALL.len())];
            Ok(Edit::ConstantUpdate { target: f.ref_of(f.number_nodes[ni]), op })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamSpace;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn model(xml: &str, params: &str) -> TargetModel {
        let space =
            if params.is_empty() { ParamSpace::empty() } else { ParamSpace::parse(params).unwrap() };
        TargetModel::new(vec![("f.xml".into(), xml.into())], space, vec!["stmt".into()])
            .unwrap()
    }

    #[test]
    fn counts_match_the_closed_forms() {
        // S = 4, C = 2.
        let m = model(
            "<p><stmt>a</stmt><stmt>b<number>1</number></stmt><stmt>c</stmt><stmt>d<number>2</number></stmt></p>",
            "flip {true,false} [false] --flip={}\nmode {a,b,c,d,e} [a] --mode={}",
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = enumerate_edit_space(&m, &EditKind::ALL, 10, &mut rng);
        assert_eq!(space.count(EditKind::StmtDelete), 4);
        assert_eq!(space.count(EditKind::StmtReplace), 12);
        assert_eq!(space.count(EditKind::StmtInsert), 32);
        assert_eq!(space.count(EditKind::ConstantSet), 6);
        assert_eq!(space.count(EditKind::ConstantUpdate), 12);
        // boolean (2) + categorical of 5 = 7
        assert_eq!(space.count(EditKind::ParamSet), 7);
        assert_eq!(space.total(), 4 + 12 + 32 + 6 + 12 + 7);
    }

    #[test]
    fn counts_equal_materialized_lengths() {
        let m = model(
            "<p><stmt>a</stmt><stmt>b<number>1</number></stmt><stmt>c</stmt></p>",
            "k [1,8] [1] (int) (uniform) --k={}\nx [0.0,1.0] [0.5] (float) (uniform) --x={}",
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let space = enumerate_edit_space(&m, &EditKind::ALL, 10, &mut rng);
        for kind in EditKind::ALL {
            assert_eq!(
                space.count(kind),
                space.edits_of_kind(kind).len() as u64,
                "count mismatch for {kind}"
            );
        }
        // int [1,8] is finite (8), float subsampled (10)
        assert_eq!(space.count(EditKind::ParamSet), 18);
    }

    #[test]
    fn single_statement_models_offer_no_replacements() {
        let m = model("<p><stmt>only</stmt></p>", "");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = enumerate_edit_space(&m, &EditKind::ALL, 10, &mut rng);
        assert_eq!(space.count(EditKind::StmtDelete), 1);
        assert_eq!(space.count(EditKind::StmtReplace), 0);
        assert_eq!(space.count(EditKind::StmtInsert), 2);
        assert!(matches!(
            sample_random_edit(&m, EditKind::StmtReplace, &mut rng),
            Err(MagpieError::EmptySpace(_))
        ));
        assert!(matches!(
            sample_random_edit(&m, EditKind::ParamSet, &mut rng),
            Err(MagpieError::EmptySpace(_))
        ));
    }

    #[test]
    fn disabled_families_count_zero() {
        let m = model("<p><stmt>a</stmt><stmt>b</stmt></p>", "");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let space = enumerate_edit_space(&m, &[EditKind::StmtDelete], 10, &mut rng);
        assert_eq!(space.count(EditKind::StmtDelete), 2);
        assert_eq!(space.count(EditKind::StmtReplace), 0);
        assert!(space.edits_of_kind(EditKind::StmtReplace).is_empty());
    }

    #[test]
    fn sampled_edits_come_from_the_enumerated_space() {
        let m = model(
            "<p><stmt>a</stmt><stmt>b<number>1</number></stmt><stmt>c</stmt></p>",
            "k [1,8] [1] (int) (uniform) --k={}\nflip {true,false} [false] --flip={}",
        );
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let space = enumerate_edit_space(&m, &EditKind::ALL, 10, &mut rng);
        let listed: HashSet<Edit> = space.all_edits().into_iter().collect();
        for kind in EditKind::ALL {
            for _ in 0..200 {
                let e = sample_random_edit(&m, kind, &mut rng).unwrap();
                assert!(listed.contains(&e), "sampled edit not in space: {e}");
            }
        }
    }

    #[test]
    fn update_operators_are_drawn_uniformly() {
        let m = model("<p><stmt>a<number>9</number></stmt></p>", "");
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..6000 {
            match sample_random_edit(&m, EditKind::ConstantUpdate, &mut rng).unwrap() {
                Edit::ConstantUpdate { op, .. } => *counts.entry(op).or_insert(0u32) += 1,
                other => panic!("wrong kind: {other}"),
            }
        }
        for op in UpdateOperator::ALL {
            let n = counts.get(&op).copied().unwrap_or(0);
            // 6000 draws over 6 operators: expect 1000 per cell, allow
            // sqrt(6000) ≈ 77 of slack (≈ 2.7 sigma).
            assert!(
                (n as i64 - 1000).abs() <= 78,
                "operator {} drawn {} times",
                op.symbol(),
                n
            );
        }
    }

    #[test]
    fn replacement_samples_never_self_replace() {
        let m = model("<p><stmt>a</stmt><stmt>b</stmt><stmt>c</stmt></p>", "");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            match sample_random_edit(&m, EditKind::StmtReplace, &mut rng).unwrap() {
                Edit::StmtReplace { target, ingredient } => assert_ne!(target, ingredient),
                other => panic!("wrong kind: {other}"),
            }
        }
    }
}
