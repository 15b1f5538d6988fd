//! One-point amalgams, class-level amalgamation checks, the König-tree
//! branch search, and amalgamation-base checks for concrete structures.
//!
//! Every non-glued amalgam of `Z ∪ {a}` and `Z ∪ {b}` is laid out as
//! `Z = 0..n`, `a = n`, `b = n + 1`. A glued amalgam is `Z ∪ {a}` itself.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphisms::{canonicalize, Embedding};
use crate::structures::{
    pair_count, ClassId, ClassSpec, Color, ColorBudget, ExtensionData, FinStructure, OnePointExtension, StructureKind,
    Violation,
};

/// How the two new points are related in an amalgam.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Candidate {
    /// `a` and `b` identified.
    Glue,
    /// Color of `{a, b}`, plus their relative order for ordered kinds.
    Color {
        color: Color,
        #[serde(rename = "aBelowB", skip_serializing_if = "Option::is_none")]
        a_below_b: Option<bool>,
    },
    /// Tuples mentioning both `a` and `b`.
    Tuples { tuples: Vec<(usize, Vec<usize>)> },
}

/// Why a candidate fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Block {
    /// The extensions color `{point, new}` differently, so `a = b` is impossible.
    ColorDisagreement {
        point: usize,
    },
    /// `point` lies strictly between `a` and `b`.
    OrderConflict {
        point: usize,
    },
    /// The extensions disagree on this tuple (new point written as `n`).
    RelationDisagreement {
        symbol: usize,
        tuple: Vec<usize>,
    },
    MonochromaticTriangle {
        z: usize,
        color: Color,
    },
    TriangleInequality {
        z: usize,
    },
    ZeroDistance,
    Violation {
        violation: Violation,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedCandidate {
    pub candidate: Candidate,
    pub reason: Block,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Amalgam {
    #[serde(skip)]
    pub base: FinStructure,
    #[serde(skip)]
    pub left: OnePointExtension,
    #[serde(skip)]
    pub right: OnePointExtension,
    pub candidate: Candidate,
    pub result: FinStructure,
    #[serde(rename = "leftEmbedding")]
    pub left_emb: Embedding,
    #[serde(rename = "rightEmbedding")]
    pub right_emb: Embedding,
}

impl Amalgam {
    pub fn is_glued(&self) -> bool {
        self.candidate == Candidate::Glue
    }

    /// Result in the class, both maps embeddings, and the square commutes on `Z`.
    pub fn verify(&self, c: &ClassSpec) -> bool {
        let n = self.base.len();
        c.is_member(&self.result)
            && self.left_emb.is_embedding(&self.left.realize(), &self.result)
            && self.right_emb.is_embedding(&self.right.realize(), &self.result)
            && self.left_emb.map[..n] == self.right_emb.map[..n]
    }
}

/// Every candidate over one pair of extensions, with a verdict for each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Examination {
    #[serde(rename = "glueBlock")]
    pub glue_block: Option<Block>,
    pub amalgams: Vec<Amalgam>,
    pub blocked: Vec<BlockedCandidate>,
}

fn check_inputs(z: &FinStructure, ea: &OnePointExtension, eb: &OnePointExtension, c: &ClassSpec) -> Result<()> {
    c.check_kind(z)?;
    if ea.base() != z || eb.base() != z {
        return Err(Error::rejected("extensions do not extend the given base"));
    }
    if let Some(v) = c.violation(z)? {
        return Err(Error::rejected(format!("base is not in {}: {:?}", c, v)));
    }
    for e in [ea, eb] {
        if let Some(v) = c.violation(&e.realize())? {
            return Err(Error::rejected(format!("extension is not in {}: {:?}", c, v)));
        }
    }
    Ok(())
}

/// Why `a = b` is impossible, or `None` when the extensions have the same type over `Z`.
pub fn glue_block(ea: &OnePointExtension, eb: &OnePointExtension) -> Option<Block> {
    match (ea.data(), eb.data()) {
        (ExtensionData::Colors(ca), ExtensionData::Colors(cb)) => {
            if let Some(point) = (0..ca.len()).find(|&x| ca[x] != cb[x]) {
                return Some(Block::ColorDisagreement { point });
            }
            match (ea.position(), eb.position()) {
                (Some(pa), Some(pb)) if pa != pb => Some(Block::OrderConflict {
                    point: ea.base().elements_by_rank()[pa.min(pb)],
                }),
                _ => None,
            }
        }
        (ExtensionData::Tuples(ta), ExtensionData::Tuples(tb)) => {
            let sa: BTreeSet<_> = ta.iter().collect();
            let sb: BTreeSet<_> = tb.iter().collect();
            sa.symmetric_difference(&sb)
                .next()
                .map(|(symbol, tuple)| Block::RelationDisagreement {
                    symbol: *symbol,
                    tuple: tuple.clone(),
                })
        }
        _ => Some(Block::RelationDisagreement {
            symbol: 0,
            tuple: Vec::new(),
        }),
    }
}

fn labeled_block(c: &ClassSpec, color: Color, ca: &[Color], cb: &[Color]) -> Option<Block> {
    if !c.color_ok(color) {
        return Some(Block::ZeroDistance);
    }
    let z = (0..ca.len()).find(|&z| !c.triangle_ok(color, ca[z], cb[z]))?;
    Some(match c.id {
        ClassId::AntiMetric => Block::TriangleInequality { z },
        _ => Block::MonochromaticTriangle { z, color },
    })
}

fn amalgam_ranks(base: &FinStructure, pa: usize, pb: usize, a_below_b: bool) -> Vec<usize> {
    let r = base.ranks().expect("ordered base");
    let mut out: Vec<usize> = r
        .iter()
        .map(|&rk| rk + (pa <= rk) as usize + (pb <= rk) as usize)
        .collect();
    out.push(pa + !a_below_b as usize);
    out.push(pb + a_below_b as usize);
    out
}

fn labeled_result(
    z: &FinStructure,
    ca: &[Color],
    cb: &[Color],
    color: Color,
    ranks: Option<Vec<usize>>,
) -> FinStructure {
    let n = z.len();
    let mut flat = Vec::with_capacity(pair_count(n + 2));
    flat.extend_from_slice(z.colors());
    flat.extend_from_slice(ca);
    flat.extend_from_slice(cb);
    flat.push(color);
    FinStructure::labeled_from_vec(n + 2, flat, ranks).expect("amalgam layout")
}

/// Tuples over `0..n+2` containing both `n` and `n + 1`, by symbol then lexicographically.
fn cross_tuples(kind: &StructureKind, n: usize) -> Vec<(usize, Vec<usize>)> {
    let mut out = Vec::new();
    if let StructureKind::Relational(sig) = kind {
        let m = n + 2;
        for (s, sym) in sig.symbols().iter().enumerate() {
            let r = sym.arity;
            for code in 0..m.pow(r as u32) {
                let mut t = vec![0; r];
                let mut c = code;
                for k in (0..r).rev() {
                    t[k] = c % m;
                    c /= m;
                }
                if t.contains(&n) && t.contains(&(n + 1)) {
                    out.push((s, t));
                }
            }
        }
    }
    out
}

const MAX_CROSS_TUPLES: usize = 16;

/// Examine every candidate amalgam of `ea` and `eb` over `z`.
///
/// Candidates come in a fixed order: glue first, then colors ascending (and
/// `a < b` before `b < a`), or cross-tuple sets by bitmask ascending.
/// With `first_only` the scan stops at the first amalgam.
pub fn examine(
    z: &FinStructure,
    ea: &OnePointExtension,
    eb: &OnePointExtension,
    c: &ClassSpec,
    budget: &ColorBudget,
    first_only: bool,
) -> Result<Examination> {
    check_inputs(z, ea, eb, c)?;
    let n = z.len();
    let mut ex = Examination {
        glue_block: glue_block(ea, eb),
        amalgams: Vec::new(),
        blocked: Vec::new(),
    };
    let left_emb = Embedding::identity(n + 1);
    let mut right_emb = Embedding::identity(n + 1);
    right_emb.map[n] = n + 1;
    match &ex.glue_block {
        None => {
            let result = ea.realize();
            if let Some(violation) = c.violation(&result)? {
                ex.blocked.push(BlockedCandidate {
                    candidate: Candidate::Glue,
                    reason: Block::Violation { violation },
                });
            } else {
                ex.amalgams.push(Amalgam {
                    base: z.clone(),
                    left: ea.clone(),
                    right: eb.clone(),
                    candidate: Candidate::Glue,
                    result,
                    left_emb: Embedding::identity(n + 1),
                    right_emb: Embedding::identity(n + 1),
                });
                if first_only {
                    return Ok(ex);
                }
            }
        }
        Some(reason) => ex.blocked.push(BlockedCandidate {
            candidate: Candidate::Glue,
            reason: reason.clone(),
        }),
    }
    match (ea.data(), eb.data()) {
        (ExtensionData::Colors(ca), ExtensionData::Colors(cb)) => {
            let orders: Vec<Option<bool>> = match (ea.position(), eb.position()) {
                (Some(pa), Some(pb)) if pa == pb => vec![Some(true), Some(false)],
                (Some(pa), Some(pb)) => vec![Some(pa < pb)],
                _ => vec![None],
            };
            for &color in budget.colors() {
                for &order in &orders {
                    let candidate = Candidate::Color {
                        color,
                        a_below_b: order,
                    };
                    if let Some(reason) = labeled_block(c, color, ca, cb) {
                        ex.blocked.push(BlockedCandidate { candidate, reason });
                        continue;
                    }
                    let ranks = order.map(|o| amalgam_ranks(z, ea.position().unwrap(), eb.position().unwrap(), o));
                    ex.amalgams.push(Amalgam {
                        base: z.clone(),
                        left: ea.clone(),
                        right: eb.clone(),
                        candidate,
                        result: labeled_result(z, ca, cb, color, ranks),
                        left_emb: left_emb.clone(),
                        right_emb: right_emb.clone(),
                    });
                    if first_only {
                        return Ok(ex);
                    }
                }
            }
        }
        (ExtensionData::Tuples(ta), ExtensionData::Tuples(tb)) => {
            let cross = cross_tuples(z.kind(), n);
            if cross.len() > MAX_CROSS_TUPLES {
                return Err(Error::resource(format!(
                    "{} cross tuples exceed the bound {}",
                    cross.len(),
                    MAX_CROSS_TUPLES
                )));
            }
            let mut relations = z.relations().to_vec();
            for (s, t) in ta {
                relations[*s].insert(t.clone());
            }
            for (s, t) in tb {
                relations[*s].insert(t.iter().map(|&x| if x == n { n + 1 } else { x }).collect());
            }
            for mask in 0u32..(1 << cross.len()) {
                let chosen: Vec<(usize, Vec<usize>)> = cross
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> i & 1 == 1)
                    .map(|(_, t)| t.clone())
                    .collect();
                let mut rel = relations.clone();
                for (s, t) in &chosen {
                    rel[*s].insert(t.clone());
                }
                let result = FinStructure::from_parts(z.kind().clone(), n + 2, rel, Vec::new(), None);
                let candidate = Candidate::Tuples { tuples: chosen };
                match c.violation(&result)? {
                    Some(violation) => ex.blocked.push(BlockedCandidate {
                        candidate,
                        reason: Block::Violation { violation },
                    }),
                    None => {
                        ex.amalgams.push(Amalgam {
                            base: z.clone(),
                            left: ea.clone(),
                            right: eb.clone(),
                            candidate,
                            result,
                            left_emb: left_emb.clone(),
                            right_emb: right_emb.clone(),
                        });
                        if first_only {
                            return Ok(ex);
                        }
                    }
                }
            }
        }
        _ => return Err(Error::rejected("extension data does not match base kind")),
    }
    Ok(ex)
}

/// All amalgams of `ea` and `eb` over `z` within the budget; empty means
/// "none within budget", which is not a proof of impossibility.
pub fn amalgamate_one_point(
    z: &FinStructure,
    ea: &OnePointExtension,
    eb: &OnePointExtension,
    c: &ClassSpec,
    budget: &ColorBudget,
) -> Result<Vec<Amalgam>> {
    Ok(examine(z, ea, eb, c, budget, false)?.amalgams)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApFailure {
    pub base: FinStructure,
    pub left: OnePointExtension,
    pub right: OnePointExtension,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApReport {
    pub class: ClassId,
    #[serde(rename = "maxSize")]
    pub max_size: usize,
    pub budget: ColorBudget,
    pub bases: usize,
    pub pairs: usize,
    /// Pairs whose amalgam needed a color outside the budget.
    #[serde(rename = "enlargedAmalgams")]
    pub enlarged: usize,
    #[serde(rename = "maxAmalgamColor")]
    pub max_amalgam_color: Option<Color>,
    pub failure: Option<ApFailure>,
}

impl ApReport {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

enum Quick {
    Found,
    Enlarged(Color),
    None,
}

/// Amalgam test for labeled kinds. Colors outside the budget are tried only
/// after every budget color fails, up to a color that always works.
fn quick_labeled(
    c: &ClassSpec,
    ca: &[Color],
    cb: &[Color],
    same_type: bool,
    palette: &[Color],
    used_max: Color,
) -> Quick {
    if same_type {
        return Quick::Found;
    }
    let ok = |color: Color| c.color_ok(color) && (0..ca.len()).all(|z| c.triangle_ok(color, ca[z], cb[z]));
    if palette.iter().any(|&q| ok(q)) {
        return Quick::Found;
    }
    let top = palette.last().copied().unwrap_or(0).max(used_max);
    let extra = match c.id {
        ClassId::AntiMetric => (palette.last().map_or(0, |&m| m + 1)..=2 * top + 1).find(|&q| ok(q)),
        _ => Some(top + 1).filter(|&q| ok(q)),
    };
    extra.map_or(Quick::None, Quick::Enlarged)
}

struct ApState {
    report: ApReport,
}

impl ApState {
    fn record(&mut self, q: Quick, fail: impl FnOnce() -> ApFailure) -> bool {
        self.report.pairs += 1;
        match q {
            Quick::Found => true,
            Quick::Enlarged(color) => {
                self.report.enlarged += 1;
                self.report.max_amalgam_color = Some(self.report.max_amalgam_color.map_or(color, |m| m.max(color)));
                true
            }
            Quick::None => {
                self.report.failure = Some(fail());
                false
            }
        }
    }
}

/// Members of `c` with at most `max` points, one per isomorphism type, by size.
pub fn members_up_to_iso(c: &ClassSpec, max: usize, budget: &ColorBudget) -> Result<Vec<Vec<FinStructure>>> {
    let mut levels = vec![vec![FinStructure::empty(c.kind())]];
    for m in 0..max {
        let mut next = BTreeSet::new();
        for b in &levels[m] {
            for e in c.extensions(&Arc::new(b.clone()), budget)? {
                next.insert(canonicalize(&e.realize())?);
            }
        }
        levels.push(next.into_iter().collect());
    }
    Ok(levels)
}

/// Check that every base of size `<= max_size` and every pair of its
/// one-point extensions (colors from `budget`) amalgamates.
///
/// Bases are taken up to isomorphism. For the triangle-free classes, whose
/// membership only sees which colors are equal, bases and extension pairs
/// are enumerated with colors introduced in budget order, which covers every
/// triple up to a permutation of the budget.
pub fn ap_check(c: &ClassSpec, max_size: usize, budget: &ColorBudget) -> Result<ApReport> {
    let mut st = ApState {
        report: ApReport {
            class: c.id,
            max_size,
            budget: budget.clone(),
            bases: 0,
            pairs: 0,
            enlarged: 0,
            max_amalgam_color: None,
            failure: None,
        },
    };
    if c.is_color_symmetric() {
        ap_check_symmetric(c, max_size, budget, &mut st)?;
        return Ok(st.report);
    }
    let levels = members_up_to_iso(c, max_size, budget)?;
    let palette = budget.colors();
    for base in levels.into_iter().flatten() {
        st.report.bases += 1;
        let arc = Arc::new(base);
        let exts = c.extensions(&arc, budget)?;
        let used_max = arc.max_color().unwrap_or(0);
        for i in 0..exts.len() {
            for j in i..exts.len() {
                let (ea, eb) = (&exts[i], &exts[j]);
                let q = match (ea.colors(), eb.colors()) {
                    (Some(ca), Some(cb)) => {
                        let m = ca.iter().chain(cb).copied().max().unwrap_or(0).max(used_max);
                        quick_labeled(c, ca, cb, ea.same_type(eb), palette, m)
                    }
                    _ => {
                        if examine(&arc, ea, eb, c, budget, true)?.amalgams.is_empty() {
                            Quick::None
                        } else {
                            Quick::Found
                        }
                    }
                };
                let fail = || ApFailure {
                    base: (*arc).clone(),
                    left: ea.clone(),
                    right: eb.clone(),
                };
                if !st.record(q, fail) {
                    return Ok(st.report);
                }
            }
        }
    }
    Ok(st.report)
}

/// Restricted-growth colorings: position `i` takes a color already used or
/// the next unused palette color. `check(prefix, color)` filters each step.
fn rg_sequences(
    len: usize,
    palette: &[Color],
    used: usize,
    check: &dyn Fn(&[Color], Color) -> bool,
    cur: &mut Vec<Color>,
    out: &mut Vec<(Vec<Color>, usize)>,
) {
    if cur.len() == len {
        out.push((cur.clone(), used));
        return;
    }
    for k in 0..(used + 1).min(palette.len()) {
        let color = palette[k];
        if check(cur, color) {
            cur.push(color);
            rg_sequences(len, palette, used.max(k + 1), check, cur, out);
            cur.pop();
        }
    }
}

fn ap_check_symmetric(c: &ClassSpec, max_size: usize, budget: &ColorBudget, st: &mut ApState) -> Result<()> {
    let palette = budget.colors();
    let ordered = c.kind().is_ordered();
    for m in 0..=max_size {
        let pair_of = |idx: usize| {
            let mut hi = 1;
            while hi * (hi + 1) / 2 <= idx {
                hi += 1;
            }
            (idx - hi * (hi - 1) / 2, hi)
        };
        let base_check = |prefix: &[Color], color: Color| {
            let (lo, hi) = pair_of(prefix.len());
            (0..lo).all(|u| {
                c.triangle_ok(
                    color,
                    prefix[crate::structures::pair_index(u, lo)],
                    prefix[crate::structures::pair_index(u, hi)],
                )
            })
        };
        let mut bases = Vec::new();
        rg_sequences(pair_count(m), palette, 0, &base_check, &mut Vec::new(), &mut bases);
        for (flat, used) in bases {
            st.report.bases += 1;
            let ranks = ordered.then(|| (0..m).collect());
            let base = Arc::new(FinStructure::labeled_from_vec(m, flat, ranks)?);
            let ext_check = |prefix: &[Color], color: Color| {
                let x = prefix.len();
                (0..x).all(|y| c.triangle_ok(base.color(y, x), prefix[y], color))
            };
            let mut lefts = Vec::new();
            rg_sequences(m, palette, used, &ext_check, &mut Vec::new(), &mut lefts);
            let positions: Vec<Option<usize>> = if ordered {
                (0..=m).map(Some).collect()
            } else {
                vec![None]
            };
            for (ca, used_a) in &lefts {
                let mut rights = Vec::new();
                rg_sequences(m, palette, *used_a, &ext_check, &mut Vec::new(), &mut rights);
                for (cb, _) in &rights {
                    let used_max = base
                        .max_color()
                        .unwrap_or(0)
                        .max(ca.iter().chain(cb).copied().max().unwrap_or(0));
                    for &pa in &positions {
                        for &pb in &positions {
                            let q = quick_labeled(c, ca, cb, ca == cb && pa == pb, palette, used_max);
                            let fail = || ApFailure {
                                base: (*base).clone(),
                                left: OnePointExtension::colored(base.clone(), ca.clone(), pa)
                                    .expect("valid extension"),
                                right: OnePointExtension::colored(base.clone(), cb.clone(), pb)
                                    .expect("valid extension"),
                            };
                            if !st.record(q, fail) {
                                return Ok(());
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KoenigOptions {
    /// Run the search for classes with an unbounded color palette as well.
    pub allow_infinite_language: bool,
    pub budget: ColorBudget,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KoenigBranch {
    pub levels: Vec<Amalgam>,
    #[serde(rename = "nodesVisited")]
    pub nodes_visited: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum KoenigOutcome {
    Branch(KoenigBranch),
    /// No amalgam at `level` is compatible with any branch below it.
    NoBranch {
        level: usize,
    },
}

/// The amalgam `a` (over a base of size `big`) seen over the prefix `0..small`.
pub fn restrict_amalgam(a: &Amalgam, small: usize) -> FinStructure {
    let big = a.base.len();
    let mut keep: Vec<usize> = (0..small).collect();
    keep.push(big);
    if !a.is_glued() {
        keep.push(big + 1);
    }
    a.result.induced_on_sorted(&keep)
}

/// Whether each level of the branch is the induced substructure of the next.
pub fn branch_is_coherent(branch: &KoenigBranch) -> bool {
    branch
        .levels
        .windows(2)
        .all(|w| w[0].is_glued() == w[1].is_glued() && restrict_amalgam(&w[1], w[0].base.len()) == w[0].result)
}

/// Depth-first search for amalgams `A_0, .., A_d` of the restrictions of
/// `ea`, `eb` to each `Z_i`, with `A_i` induced on `Z_i ∪ {a, b}` by `A_{i+1}`.
///
/// Each `Z_i` must be the prefix of `Z_{i+1}` on its own universe.
pub fn koenig_tree_amalgamation(
    chain: &[FinStructure],
    ea: &OnePointExtension,
    eb: &OnePointExtension,
    c: &ClassSpec,
    opts: &KoenigOptions,
) -> Result<KoenigOutcome> {
    if !c.has_finite_language() && !opts.allow_infinite_language {
        return Err(Error::rejected(format!(
            "{} has no finite relational language; the tree search needs one",
            c
        )));
    }
    let top = chain.last().ok_or_else(|| Error::rejected("empty chain"))?;
    for w in chain.windows(2) {
        let prefix: Vec<usize> = (0..w[0].len()).collect();
        if w[0].len() > w[1].len() || w[1].induced_on_sorted(&prefix) != w[0] {
            return Err(Error::rejected("chain members must be prefixes of their successors"));
        }
    }
    if ea.base() != top || eb.base() != top {
        return Err(Error::rejected("extensions must extend the last chain member"));
    }
    let mut levels = Vec::with_capacity(chain.len());
    for z in chain {
        let (ra, rb) = (ea.restrict(z.len())?, eb.restrict(z.len())?);
        levels.push(amalgamate_one_point(z, &ra, &rb, c, &opts.budget)?);
    }
    fn dfs(levels: &[Vec<Amalgam>], i: usize, path: &mut Vec<usize>, visited: &mut usize, deepest: &mut usize) -> bool {
        if i == levels.len() {
            return true;
        }
        *deepest = (*deepest).max(i);
        for j in 0..levels[i].len() {
            *visited += 1;
            if let Some(&p) = path.last() {
                let below = &levels[i - 1][p];
                let here = &levels[i][j];
                if below.is_glued() != here.is_glued() || restrict_amalgam(here, below.base.len()) != below.result {
                    continue;
                }
            }
            path.push(j);
            if dfs(levels, i + 1, path, visited, deepest) {
                return true;
            }
            path.pop();
        }
        false
    }
    let mut path = Vec::new();
    let mut visited = 0;
    let mut deepest = 0;
    if dfs(&levels, 0, &mut path, &mut visited, &mut deepest) {
        let levels = path.iter().enumerate().map(|(i, &j)| levels[i][j].clone()).collect();
        Ok(KoenigOutcome::Branch(KoenigBranch {
            levels,
            nodes_visited: visited,
        }))
    } else {
        Ok(KoenigOutcome::NoBranch { level: deepest })
    }
}

/// Verdict for one extension pair over a fixed structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub budget: ColorBudget,
    #[serde(rename = "glueBlock")]
    pub glue_block: Option<Block>,
    pub blocked: Vec<BlockedCandidate>,
    pub amalgam: Option<Amalgam>,
}

impl PairVerdict {
    /// No amalgam within the budget.
    pub fn is_blocked(&self) -> bool {
        self.amalgam.is_none()
    }

    /// Blocking reason per candidate color, in candidate order.
    pub fn color_table(&self) -> Vec<(Color, Block)> {
        self.blocked
            .iter()
            .filter_map(|b| match b.candidate {
                Candidate::Color { color, .. } => Some((color, b.reason.clone())),
                _ => None,
            })
            .collect()
    }
}

/// For each pair, the first amalgam over `x` or the full list of blocked candidates.
pub fn amalgamation_base_check(
    x: &FinStructure,
    pairs: &[(OnePointExtension, OnePointExtension)],
    c: &ClassSpec,
    budget: &ColorBudget,
) -> Result<Vec<PairVerdict>> {
    pairs
        .iter()
        .map(|(ea, eb)| {
            let ex = examine(x, ea, eb, c, budget, false)?;
            Ok(PairVerdict {
                budget: budget.clone(),
                glue_block: ex.glue_block,
                blocked: ex.blocked,
                amalgam: ex.amalgams.into_iter().next(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graphs() -> ClassSpec {
        ClassSpec::new(ClassId::Graphs)
    }

    fn graph_ext(base: &Arc<FinStructure>, nbrs: &[usize]) -> OnePointExtension {
        let n = base.len();
        let ts = nbrs.iter().flat_map(|&x| [(0, vec![x, n]), (0, vec![n, x])]).collect();
        OnePointExtension::new(base.clone(), ExtensionData::Tuples(ts), None).unwrap()
    }

    #[test]
    fn same_neighbourhood_glues_first() {
        let z = Arc::new(FinStructure::graph(1, &[]).unwrap());
        let e = graph_ext(&z, &[0]);
        let all = amalgamate_one_point(&z, &e, &e, &graphs(), &ColorBudget::default()).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all[0].is_glued());
        assert!(all.iter().all(|a| a.verify(&graphs())));
    }

    #[test]
    fn different_neighbourhoods_two_amalgams() {
        let z = Arc::new(FinStructure::graph(1, &[]).unwrap());
        let ea = graph_ext(&z, &[0]);
        let eb = graph_ext(&z, &[]);
        let ex = examine(&z, &ea, &eb, &graphs(), &ColorBudget::default(), false).unwrap();
        assert_eq!(ex.amalgams.len(), 2);
        assert_eq!(
            ex.glue_block,
            Some(Block::RelationDisagreement {
                symbol: 0,
                tuple: vec![0, 1]
            })
        );
        assert!(!ex.amalgams[0].result.holds(0, &[1, 2]));
        assert!(ex.amalgams[1].result.holds(0, &[1, 2]));
    }

    /// Brute force: try both states of the edge `ab` and test every triple for a triangle.
    fn brute_k3free_count(z: &FinStructure, na: &[usize], nb: &[usize]) -> usize {
        let n = z.len();
        let mut count = 0;
        for ab in [false, true] {
            let adj = |x: usize, y: usize| -> bool {
                match (x.min(y), x.max(y)) {
                    (p, q) if q < n => z.holds(0, &[p, q]),
                    (p, q) if q == n => na.contains(&p),
                    (p, _) if p == n => ab,
                    (p, _) => nb.contains(&p),
                }
            };
            let m = n + 2;
            let mut ok = true;
            for x in 0..m {
                for y in x + 1..m {
                    for w in y + 1..m {
                        if adj(x, y) && adj(y, w) && adj(x, w) {
                            ok = false;
                        }
                    }
                }
            }
            count += ok as usize;
        }
        count
    }

    #[test]
    fn k3free_counts_match_brute_force() {
        let c = ClassSpec::new(ClassId::KnFree(3));
        let budget = ColorBudget::default();
        for level in members_up_to_iso(&c, 3, &budget).unwrap() {
            for z in level {
                let arc = Arc::new(z.clone());
                let exts = c.extensions(&arc, &budget).unwrap();
                for ea in &exts {
                    for eb in &exts {
                        let nbrs = |e: &OnePointExtension| -> Vec<usize> {
                            (0..z.len()).filter(|&x| e.realize().holds(0, &[x, z.len()])).collect()
                        };
                        let all = amalgamate_one_point(&z, ea, eb, &c, &budget).unwrap();
                        let glued = all.iter().filter(|a| a.is_glued()).count();
                        assert_eq!(glued, ea.same_type(eb) as usize);
                        assert_eq!(all.len() - glued, brute_k3free_count(&z, &nbrs(ea), &nbrs(eb)));
                        assert!(all.iter().all(|a| a.verify(&c)));
                    }
                }
            }
        }
    }

    #[test]
    fn tf_edge_example() {
        let c = ClassSpec::new(ClassId::TfLabeled);
        let z = Arc::new(FinStructure::labeled(2, |_, _| 0));
        let e = OnePointExtension::colored(z.clone(), vec![1, 2], None).unwrap();
        let budget = ColorBudget::range(6);
        let ex = examine(&z, &e, &e, &c, &budget, false).unwrap();
        assert!(ex.amalgams[0].is_glued());
        let colors: Vec<Color> = ex.amalgams[1..]
            .iter()
            .map(|a| match a.candidate {
                Candidate::Color { color, .. } => color,
                _ => unreachable!(),
            })
            .collect();
        // independent check: color q is fine unless some base point sees both a and b in q
        let expected: Vec<Color> = (0..6).filter(|&q| q != 1 && q != 2).collect();
        assert_eq!(colors, expected);
        assert_eq!(ex.blocked[0].reason, Block::MonochromaticTriangle { z: 0, color: 1 });
    }

    #[test]
    fn ordered_layout_and_conflict() {
        let c = ClassSpec::new(ClassId::TfLabeledOrdered);
        let z = Arc::new(FinStructure::ordered_labeled(2, |_, _| 5));
        let ea = OnePointExtension::colored(z.clone(), vec![0, 1], Some(0)).unwrap();
        let eb = OnePointExtension::colored(z.clone(), vec![0, 1], Some(1)).unwrap();
        let ex = examine(&z, &ea, &eb, &c, &ColorBudget::range(3), false).unwrap();
        assert_eq!(ex.glue_block, Some(Block::OrderConflict { point: 0 }));
        let a = &ex.amalgams[0];
        assert_eq!(
            a.candidate,
            Candidate::Color {
                color: 2,
                a_below_b: Some(true)
            }
        );
        assert_eq!(a.result.ranks().unwrap(), &[1, 3, 0, 2]);
        assert!(a.verify(&c));
        let same = examine(&z, &ea, &ea, &c, &ColorBudget::range(3), false).unwrap();
        // glue, then color 2 with both relative orders
        assert_eq!(same.amalgams.len(), 3);
        assert!(same.amalgams.iter().all(|a| a.verify(&c)));
    }

    #[test]
    fn invalid_inputs_rejected() {
        let z = Arc::new(FinStructure::complete_graph(2));
        let c = ClassSpec::new(ClassId::KnFree(3));
        let bad = graph_ext(&z, &[0, 1]);
        assert!(matches!(
            examine(&z, &bad, &bad, &c, &ColorBudget::default(), false),
            Err(Error::Rejected(_))
        ));
    }

    #[test]
    fn ap_check_small_classes() {
        for (id, n, budget) in [
            (ClassId::Graphs, 4, ColorBudget::default()),
            (ClassId::KnFree(3), 3, ColorBudget::default()),
            (ClassId::LinearOrders, 4, ColorBudget::default()),
            (ClassId::TfLabeled, 3, ColorBudget::range(6)),
            (ClassId::TfLabeledOrdered, 2, ColorBudget::range(6)),
            (ClassId::AntiMetric, 2, ColorBudget::range(8)),
        ] {
            let r = ap_check(&ClassSpec::new(id), n, &budget).unwrap();
            assert!(r.passed(), "{}: {:?}", id, r.failure);
            assert!(r.pairs > 0);
        }
    }

    #[test]
    fn antimetric_needs_large_distances() {
        let r = ap_check(&ClassSpec::new(ClassId::AntiMetric), 1, &ColorBudget::range(4)).unwrap();
        assert!(r.passed());
        // equal distances glue; distances 2 and 3 from the base point force d(a, b) >= 6
        assert_eq!(r.max_amalgam_color, Some(6));
    }

    #[test]
    fn members_counts() {
        let levels = members_up_to_iso(&graphs(), 4, &ColorBudget::default()).unwrap();
        let counts: Vec<usize> = levels.iter().map(|l| l.len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 4, 11]);
    }

    #[test]
    fn koenig_rejects_color_classes() {
        let c = ClassSpec::new(ClassId::TfLabeled);
        let z = Arc::new(FinStructure::labeled(1, |_, _| 0));
        let e = OnePointExtension::colored(z.clone(), vec![1], None).unwrap();
        let chain = vec![(*z).clone()];
        assert!(koenig_tree_amalgamation(&chain, &e, &e, &c, &KoenigOptions::default()).is_err());
        let opts = KoenigOptions {
            allow_infinite_language: true,
            ..KoenigOptions::default()
        };
        assert!(matches!(
            koenig_tree_amalgamation(&chain, &e, &e, &c, &opts).unwrap(),
            KoenigOutcome::Branch(_)
        ));
    }

    #[test]
    fn koenig_path_chain() {
        let chain: Vec<FinStructure> = (1..=3).map(FinStructure::path).collect();
        let top = Arc::new(chain[2].clone());
        let ea = graph_ext(&top, &[0]);
        let eb = graph_ext(&top, &[2]);
        match koenig_tree_amalgamation(&chain, &ea, &eb, &graphs(), &KoenigOptions::default()).unwrap() {
            KoenigOutcome::Branch(b) => {
                assert_eq!(b.levels.len(), 3);
                assert!(branch_is_coherent(&b));
                assert!(b.levels.iter().all(|a| a.verify(&graphs())));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn base_check_identical_pair_glues() {
        let x = FinStructure::cycle(5);
        let arc = Arc::new(x.clone());
        let e = graph_ext(&arc, &[0, 2]);
        let v = amalgamation_base_check(&x, &[(e.clone(), e)], &graphs(), &ColorBudget::default()).unwrap();
        assert!(!v[0].is_blocked());
        assert!(v[0].amalgam.as_ref().unwrap().is_glued());
    }
}
