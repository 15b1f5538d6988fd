//! Extensible embeddings, the E(X) construction for ordered triangle-free
//! labeled graphs, G-extensible chains with coherent transfers, and the
//! closing-off procedure inside a finite homogeneous structure.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fraisse::type_over;
use crate::morphisms::{
    find_embeddings_extending, homogeneity_check, is_embedding, partial_isos_on, subsets_up_to, Embedding, Homogeneity,
    Limits, PartialIso,
};
use crate::structures::{
    pair_index, pairs, ClassId, ClassSpec, Color, ColorBudget, ExtensionData, FinStructure, OnePointExtension,
};

fn check_automorphisms(s: &FinStructure, g: &[Embedding]) -> Result<()> {
    for (i, h) in g.iter().enumerate() {
        if !h.is_embedding(s, s) {
            return Err(Error::rejected(format!("family entry {} is not an automorphism", i)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OperatorEntry {
    pub h: Embedding,
    pub extended: Embedding,
}

/// An embedding `e: X → Y` with, for each listed `h ∈ Aut(X)`, some `h̃ ∈ Aut(Y)`
/// such that `h̃ ∘ e = e ∘ h`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtensionOperator {
    pub embedding: Embedding,
    pub table: Vec<OperatorEntry>,
}

impl ExtensionOperator {
    /// Every square commutes and every `h̃` is an automorphism of `target`.
    pub fn verify(&self, source: &FinStructure, target: &FinStructure) -> bool {
        self.embedding.is_embedding(source, target)
            && self.table.iter().all(|t| {
                t.h.is_embedding(source, source)
                    && t.extended.is_embedding(target, target)
                    && t.extended.compose(&self.embedding) == self.embedding.compose(&t.h)
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Extensibility {
    Operator(ExtensionOperator),
    Failure { h: Embedding },
}

/// Extend each `h` to the least automorphism `h̃` of `target` with `h̃ ∘ e = e ∘ h`.
pub fn is_extensible(
    source: &FinStructure,
    target: &FinStructure,
    e: &Embedding,
    g: &[Embedding],
) -> Result<Extensibility> {
    is_extensible_with(source, target, e, g, &Limits::default())
}

pub fn is_extensible_with(
    source: &FinStructure,
    target: &FinStructure,
    e: &Embedding,
    g: &[Embedding],
    limits: &Limits,
) -> Result<Extensibility> {
    if !e.is_embedding(source, target) {
        return Err(Error::rejected("map is not an embedding"));
    }
    check_automorphisms(source, g)?;
    if !target.kind().is_ordered() {
        limits.check(target.len(), "automorphism extension")?;
    }
    let mut table = Vec::with_capacity(g.len());
    for h in g {
        let mut fixed = vec![None; target.len()];
        for z in 0..source.len() {
            fixed[e.map[z]] = Some(e.map[h.map[z]]);
        }
        match find_embeddings_extending(target, target, &fixed, Some(1))?.pop() {
            Some(extended) => table.push(OperatorEntry { h: h.clone(), extended }),
            None => return Ok(Extensibility::Failure { h: h.clone() }),
        }
    }
    Ok(Extensibility::Operator(ExtensionOperator {
        embedding: e.clone(),
        table,
    }))
}

/// A one-point extension of an ordered labeled graph: colors towards each
/// base point and the number of base points below the new point.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ExtType {
    pub colors: Vec<Color>,
    pub position: usize,
}

impl ExtType {
    fn of(e: &OnePointExtension) -> Self {
        ExtType {
            colors: e.colors().expect("labeled extension").to_vec(),
            position: e.position().unwrap_or(0),
        }
    }
}

/// `g(α)`: colors moved along `g`, so that `c(g(x), g(α)) = c(x, α)`.
pub fn act_on_colors(g: &Embedding, colors: &[Color]) -> Vec<Color> {
    let mut out = vec![0; colors.len()];
    for (x, &c) in colors.iter().enumerate() {
        out[g.map[x]] = c;
    }
    out
}

/// Permutation of `types` induced by `g` (the list must be closed under `g`).
pub fn type_permutation(types: &[Vec<Color>], g: &Embedding) -> Result<Embedding> {
    let index: HashMap<&Vec<Color>, usize> = types.iter().enumerate().map(|(i, t)| (t, i)).collect();
    let mut map = Vec::with_capacity(types.len());
    for t in types {
        let moved = act_on_colors(g, t);
        map.push(
            *index
                .get(&moved)
                .ok_or_else(|| Error::rejected("extension family is not closed under the automorphisms"))?,
        );
    }
    Ok(Embedding::new(map))
}

/// Orbits of the group generated by the permutations `gens` of `0..m` on
/// unordered pairs. Each orbit is sorted; orbits are sorted by least pair.
pub fn pair_orbits(m: usize, gens: &[Embedding]) -> Vec<Vec<(usize, usize)>> {
    let mut seen = vec![false; m * m.saturating_sub(1) / 2];
    let mut orbits = Vec::new();
    for (i, j) in pairs(m) {
        if seen[pair_index(i, j)] {
            continue;
        }
        seen[pair_index(i, j)] = true;
        let mut orbit = vec![(i, j)];
        let mut k = 0;
        while k < orbit.len() {
            let (a, b) = orbit[k];
            for g in gens {
                let (x, y) = (g.map[a], g.map[b]);
                let p = (x.min(y), x.max(y));
                if !seen[pair_index(p.0, p.1)] {
                    seen[pair_index(p.0, p.1)] = true;
                    orbit.push(p);
                }
            }
            k += 1;
        }
        orbit.sort_unstable();
        orbits.push(orbit);
    }
    orbits
}

/// Colors for the pairs of `0..m`, constant on each orbit, ascending from
/// `first` in orbit order. Returned in pair-index order.
pub fn orbit_coloring(m: usize, gens: &[Embedding], first: Color) -> Vec<Color> {
    let mut colors = vec![0; m * m.saturating_sub(1) / 2];
    for (k, orbit) in pair_orbits(m, gens).iter().enumerate() {
        for &(i, j) in orbit {
            colors[pair_index(i, j)] = first + k as Color;
        }
    }
    colors
}

/// `A <' B` on finite subsets listed increasingly in the base order:
/// smaller first, then the first differing element decides.
fn support_cmp(a: &[usize], b: &[usize]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| a.cmp(b))
}

/// The order on new points: position first; for equal positions the least
/// color whose supports differ, compared by `<'` on ranks.
fn new_point_cmp(x: &FinStructure, a: &ExtType, b: &ExtType) -> Ordering {
    if a.position != b.position {
        return a.position.cmp(&b.position);
    }
    let palette: BTreeSet<Color> = a.colors.iter().chain(&b.colors).copied().collect();
    let by_rank = x.elements_by_rank();
    let support = |t: &ExtType, q: Color| -> Vec<usize> {
        by_rank
            .iter()
            .enumerate()
            .filter(|&(_, &z)| t.colors[z] == q)
            .map(|(rk, _)| rk)
            .collect()
    };
    for q in palette {
        let (sa, sb) = (support(a, q), support(b, q));
        if sa != sb {
            return support_cmp(&sa, &sb);
        }
    }
    Ordering::Equal
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EOptions {
    /// Largest number of fresh colors the construction may use.
    pub fresh_limit: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Realization {
    pub extension: OnePointExtension,
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EOfX {
    pub structure: FinStructure,
    pub embedding: Embedding,
    pub operator: ExtensionOperator,
    /// One entry per supplied extension, in input order.
    pub realization: Vec<Realization>,
    /// Extensions added by closing the family under the automorphisms.
    #[serde(rename = "closureSize")]
    pub closure_size: usize,
    #[serde(rename = "freshColors")]
    pub fresh_colors: Vec<Color>,
}

/// `X` plus one new point for every extension in the closure of `exts` under
/// `g`, ordered by position then by color supports, with new-new pairs colored
/// by fresh colors (above `max(Q)`), one per orbit of the induced action.
pub fn e_of_x(
    x: &FinStructure,
    q: &ColorBudget,
    exts: &[OnePointExtension],
    g: &[Embedding],
    opts: &EOptions,
) -> Result<EOfX> {
    let class = ClassSpec::new(ClassId::TfLabeledOrdered);
    if let Some(v) = class.violation(x)? {
        return Err(Error::rejected(format!(
            "base is not an ordered triangle-free labeled graph: {:?}",
            v
        )));
    }
    check_automorphisms(x, g)?;
    let n = x.len();
    for e in exts {
        if e.base() != x {
            return Err(Error::rejected("extension does not extend the base"));
        }
        if let Some(&c) = e.colors().unwrap().iter().find(|&&c| !q.contains(c)) {
            return Err(Error::rejected(format!("extension uses color {} outside Q", c)));
        }
        if let Some(v) = class.violation(&e.realize())? {
            return Err(Error::rejected(format!("extension is not triangle free: {:?}", v)));
        }
    }
    // close under g; an order automorphism keeps the position
    let mut closure: BTreeSet<ExtType> = exts.iter().map(ExtType::of).collect();
    let mut queue: Vec<ExtType> = closure.iter().cloned().collect();
    while let Some(t) = queue.pop() {
        for h in g {
            let moved = ExtType {
                colors: act_on_colors(h, &t.colors),
                position: t.position,
            };
            if closure.insert(moved.clone()) {
                queue.push(moved);
            }
        }
    }
    let mut types: Vec<ExtType> = closure.into_iter().collect();
    types.sort_by(|a, b| new_point_cmp(x, a, b));
    let m = types.len();
    let index: HashMap<&ExtType, usize> = types.iter().enumerate().map(|(i, t)| (t, i)).collect();

    let mut gens = Vec::with_capacity(g.len());
    for h in g {
        let map = types
            .iter()
            .map(|t| {
                index[&ExtType {
                    colors: act_on_colors(h, &t.colors),
                    position: t.position,
                }]
            })
            .collect();
        gens.push(Embedding::new(map));
    }
    let orbits = pair_orbits(m, &gens);
    if let Some(limit) = opts.fresh_limit {
        if orbits.len() > limit {
            return Err(Error::budget(format!(
                "E(X) needs {} fresh colors, only {} allowed",
                orbits.len(),
                limit
            )));
        }
    }
    let first = q.max().map_or(0, |c| c + 1);
    let new_colors = orbit_coloring(m, &gens, first);

    let total = n + m;
    let mut flat = x.colors().to_vec();
    flat.reserve(total * (total - 1) / 2 - flat.len());
    for (i, t) in types.iter().enumerate() {
        flat.extend_from_slice(&t.colors);
        for j in 0..i {
            flat.push(new_colors[pair_index(j, i)]);
        }
    }
    let x_ranks = x.ranks().expect("ordered base");
    let mut ranks = vec![0; total];
    for z in 0..n {
        ranks[z] = x_ranks[z] + types.iter().filter(|t| t.position <= x_ranks[z]).count();
    }
    for (i, t) in types.iter().enumerate() {
        // new points before this one in the sorted list are exactly those below it
        ranks[n + i] = t.position + i;
    }
    let y = FinStructure::labeled_from_vec(total, flat, Some(ranks))?;

    let mut table = Vec::with_capacity(g.len());
    for (h, perm) in g.iter().zip(&gens) {
        let mut map = h.map.clone();
        map.extend(perm.map.iter().map(|&j| n + j));
        table.push(OperatorEntry {
            h: h.clone(),
            extended: Embedding::new(map),
        });
    }
    let realization = exts
        .iter()
        .map(|e| Realization {
            extension: e.clone(),
            point: n + index[&ExtType::of(e)],
        })
        .collect();
    Ok(EOfX {
        structure: y,
        embedding: Embedding::inclusion(n),
        operator: ExtensionOperator {
            embedding: Embedding::inclusion(n),
            table,
        },
        realization,
        closure_size: m,
        fresh_colors: (0..orbits.len() as Color).map(|k| first + k).collect(),
    })
}

/// For each extension of the first `base_len` points, how many points of `y`
/// outside them have exactly its color-and-order profile.
pub fn realization_counts(y: &FinStructure, base_len: usize, exts: &[OnePointExtension]) -> Vec<usize> {
    let a_set: Vec<usize> = (0..base_len).collect();
    let profiles: Vec<(ExtensionData, Option<usize>)> = (base_len..y.len()).map(|p| type_over(y, &a_set, p)).collect();
    exts.iter()
        .map(|e| {
            profiles
                .iter()
                .filter(|(d, pos)| d == e.data() && *pos == e.position())
                .count()
        })
        .collect()
}

/// Color palettes `Q_0 ⊊ Q_1 ⊊ ...`. Stages beyond the explicit list are
/// generated on demand: the next palette adds enough new colors for the fresh
/// colors of the step, the lifting at the next stage, and `margin` spare ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QSchedule {
    pub explicit: Vec<ColorBudget>,
    pub margin: usize,
}

impl QSchedule {
    pub fn new(explicit: Vec<ColorBudget>, margin: usize) -> Result<Self> {
        if explicit.is_empty() {
            return Err(Error::rejected("the schedule needs at least Q_0"));
        }
        for (i, w) in explicit.windows(2).enumerate() {
            let grows = w[0].colors().iter().all(|&c| w[1].contains(c)) && w[1].len() > w[0].len();
            if !grows || w[1].len() - w[0].len() < margin.max(1) {
                return Err(Error::rejected(format!(
                    "Q_{} must strictly contain Q_{} with at least {} new colors",
                    i + 1,
                    i,
                    margin.max(1)
                )));
            }
        }
        Ok(QSchedule { explicit, margin })
    }
}

/// Which palette the base extensions `α_0` draw colors from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftPalette {
    /// The stage palette `Q_n`.
    Stage,
    /// A fixed palette (contained in `Q_0`).
    Fixed(ColorBudget),
}

/// Every extension `α_0` of every subset `F` with at most `max_subset` points,
/// lifted to the whole stage: points outside `F` get distinct colors from
/// `Q_n \ α_0[F]` in increasing order, and the new point sits right above the
/// highest element of `F` below it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtSelector {
    #[serde(rename = "maxSubset")]
    pub max_subset: usize,
    pub palette: LiftPalette,
}

impl Default for ExtSelector {
    fn default() -> Self {
        ExtSelector {
            max_subset: 1,
            palette: LiftPalette::Stage,
        }
    }
}

/// Lifted extensions of `x` for the given stage palette, deduplicated, in
/// (subset, base extension) order.
pub fn lifted_extensions(x: &FinStructure, q: &ColorBudget, sel: &ExtSelector) -> Result<Vec<OnePointExtension>> {
    let class = ClassSpec::new(ClassId::TfLabeledOrdered);
    let palette = match &sel.palette {
        LiftPalette::Stage => q.clone(),
        LiftPalette::Fixed(p) => p.clone(),
    };
    let base = Arc::new(x.clone());
    let by_rank = x.elements_by_rank();
    let ranks = x.ranks().expect("ordered base");
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for subset in subsets_up_to(x.len(), sel.max_subset) {
        let f = Arc::new(x.induced_on_sorted(&subset));
        for a0 in class.extensions(&f, &palette)? {
            let c0 = a0.colors().unwrap();
            let used: BTreeSet<Color> = c0.iter().copied().collect();
            let mut spare = q.colors().iter().copied().filter(|c| !used.contains(c));
            let mut colors = vec![0; x.len()];
            for (i, &z) in subset.iter().enumerate() {
                colors[z] = c0[i];
            }
            for &z in &by_rank {
                if subset.binary_search(&z).is_err() {
                    colors[z] = spare.next().ok_or_else(|| {
                        Error::budget(format!(
                            "lifting needs {} spare colors outside the base colors, Q has {}",
                            x.len() - subset.len(),
                            q.len()
                        ))
                    })?;
                }
            }
            let position = (0..subset.len())
                .filter(|&i| a0.is_below(i))
                .map(|i| ranks[subset[i]] + 1)
                .max()
                .unwrap_or(0);
            if seen.insert((colors.clone(), position)) {
                out.push(OnePointExtension::colored(base.clone(), colors, Some(position))?);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Transfer {
    pub from: usize,
    pub to: usize,
    /// `map[i]` is the index in `G_to` of `s(G_from[i])`.
    pub map: Vec<usize>,
}

/// A finite chain `U_0 ⊊ ... ⊊ U_m` of initial segments with automorphism
/// families `G_α` and index-level transfer maps `s_α^β`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtChain {
    pub stages: Vec<FinStructure>,
    pub families: Vec<Vec<Embedding>>,
    pub transfers: Vec<Transfer>,
    pub palettes: Vec<ColorBudget>,
    /// Per step, fresh colors renamed into the next palette, as `(old, new)`.
    pub recolorings: Vec<Vec<(Color, Color)>>,
    /// Index of a final stage appended by [`chain_limit`].
    #[serde(rename = "limitStage")]
    pub limit_stage: Option<usize>,
}

/// First broken chain invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ChainViolation {
    NotInitialSegment {
        stage: usize,
    },
    NotProper {
        stage: usize,
    },
    NotAutomorphism {
        stage: usize,
        index: usize,
    },
    MissingTransfer {
        from: usize,
        to: usize,
    },
    BadTransfer {
        from: usize,
        to: usize,
    },
    Incoherent {
        alpha: usize,
        beta: usize,
        gamma: usize,
        index: usize,
    },
    NotExtending {
        from: usize,
        to: usize,
        index: usize,
    },
}

impl ExtChain {
    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn transfer(&self, from: usize, to: usize) -> Option<&Transfer> {
        self.transfers.iter().find(|t| t.from == from && t.to == to)
    }

    /// `s_α^β(G_α[i])`, with `s_α^α` the identity.
    pub fn transferred(&self, from: usize, to: usize, i: usize) -> Option<&Embedding> {
        if from == to {
            return self.families[from].get(i);
        }
        let j = *self.transfer(from, to)?.map.get(i)?;
        self.families[to].get(j)
    }

    pub fn check(&self) -> std::result::Result<(), ChainViolation> {
        let m = self.stages.len();
        for s in 1..m {
            let prefix: Vec<usize> = (0..self.stages[s - 1].len()).collect();
            if self.stages[s].len() < prefix.len() || self.stages[s].induced_on_sorted(&prefix) != self.stages[s - 1] {
                return Err(ChainViolation::NotInitialSegment { stage: s });
            }
            if self.stages[s].len() == prefix.len() && self.limit_stage != Some(s) {
                return Err(ChainViolation::NotProper { stage: s });
            }
        }
        for (s, fam) in self.families.iter().enumerate() {
            for (index, h) in fam.iter().enumerate() {
                if !h.is_embedding(&self.stages[s], &self.stages[s]) {
                    return Err(ChainViolation::NotAutomorphism { stage: s, index });
                }
            }
        }
        for from in 0..m {
            for to in from + 1..m {
                match self.transfer(from, to) {
                    None => return Err(ChainViolation::MissingTransfer { from, to }),
                    Some(t) => {
                        if t.map.len() != self.families[from].len()
                            || t.map.iter().any(|&j| j >= self.families[to].len())
                        {
                            return Err(ChainViolation::BadTransfer { from, to });
                        }
                    }
                }
            }
        }
        for alpha in 0..m {
            for beta in alpha + 1..m {
                for gamma in beta + 1..m {
                    let (ab, bg, ag) = (
                        self.transfer(alpha, beta).unwrap(),
                        self.transfer(beta, gamma).unwrap(),
                        self.transfer(alpha, gamma).unwrap(),
                    );
                    for index in 0..ab.map.len() {
                        if bg.map[ab.map[index]] != ag.map[index] {
                            return Err(ChainViolation::Incoherent {
                                alpha,
                                beta,
                                gamma,
                                index,
                            });
                        }
                    }
                }
            }
        }
        for t in &self.transfers {
            let k = self.stages[t.from].len();
            for (index, &j) in t.map.iter().enumerate() {
                if self.families[t.to][j].map[..k] != self.families[t.from][index].map[..] {
                    return Err(ChainViolation::NotExtending {
                        from: t.from,
                        to: t.to,
                        index,
                    });
                }
            }
        }
        Ok(())
    }

    /// `s_0^N(h) ∘ e_0^N = e_0^N ∘ h` for every `h ∈ G_0`, with `e_0^N` the inclusion.
    pub fn colimit_identity_holds(&self) -> bool {
        let last = self.stages.len() - 1;
        let e = Embedding::inclusion(self.stages[0].len());
        (0..self.families[0].len()).all(|i| match self.transferred(0, last, i) {
            Some(s) => s.compose(&e) == e.compose(&self.families[0][i]),
            None => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainOptions {
    pub stages: usize,
    pub schedule: QSchedule,
    pub selector: ExtSelector,
}

/// Iterate E(X) from `u0` for `opts.stages` steps.
///
/// Stage `n` uses palette `Q_n` for the lifted extensions; the fresh colors
/// of step `n` are then renamed, in increasing order, to the least colors of
/// `Q_{n+1} \ Q_n`. `G_{n+1}` is the image of `G_n` under the step's
/// operator, so every transfer keeps indices.
pub fn build_g_extensible_chain(u0: &FinStructure, g: &[Embedding], opts: &ChainOptions) -> Result<ExtChain> {
    let class = ClassSpec::new(ClassId::TfLabeledOrdered);
    if let Some(v) = class.violation(u0)? {
        return Err(Error::rejected(format!(
            "u0 is not an ordered triangle-free labeled graph: {:?}",
            v
        )));
    }
    check_automorphisms(u0, g)?;
    if let LiftPalette::Fixed(p) = &opts.selector.palette {
        if !p.colors().iter().all(|&c| opts.schedule.explicit[0].contains(c)) {
            return Err(Error::rejected("the fixed lifting palette must lie inside Q_0"));
        }
    }
    let mut chain = ExtChain {
        stages: vec![u0.clone()],
        families: vec![g.to_vec()],
        transfers: Vec::new(),
        palettes: vec![opts.schedule.explicit[0].clone()],
        recolorings: Vec::new(),
        limit_stage: None,
    };
    for n in 0..opts.stages {
        let x = chain.stages[n].clone();
        let q = chain.palettes[n].clone();
        let exts =
            lifted_extensions(&x, &q, &opts.selector).map_err(|e| Error::budget(format!("stage {}: {}", n, e)))?;
        if exts.is_empty() {
            return Err(Error::budget(format!("stage {}: no extensions to add", n)));
        }
        let step = e_of_x(&x, &q, &exts, &chain.families[n], &EOptions::default())?;
        let fresh = step.fresh_colors.len();
        let next_q = match opts.schedule.explicit.get(n + 1) {
            Some(p) => p.clone(),
            None => {
                let top = q.max().map_or(0, |c| c + 1);
                let extra = fresh.max(step.structure.len()) + opts.schedule.margin.max(1);
                let mut colors = q.colors().to_vec();
                colors.extend((0..extra as Color).map(|k| top + k));
                ColorBudget::new(colors)
            }
        };
        let slack: Vec<Color> = next_q.colors().iter().copied().filter(|&c| !q.contains(c)).collect();
        if slack.len() < fresh {
            return Err(Error::budget(format!(
                "stage {}: {} fresh colors needed, Q_{} adds only {}",
                n + 1,
                fresh,
                n + 1,
                slack.len()
            )));
        }
        let rename: Vec<(Color, Color)> = step.fresh_colors.iter().copied().zip(slack.iter().copied()).collect();
        let lookup: HashMap<Color, Color> = rename.iter().copied().collect();
        let y = step.structure.recolor(|c| lookup.get(&c).copied().unwrap_or(c));
        if let Some(v) = class.violation(&y)? {
            return Err(Error::budget(format!(
                "stage {}: recoloring broke the class: {:?}",
                n + 1,
                v
            )));
        }
        let family: Vec<Embedding> = step.operator.table.iter().map(|t| t.extended.clone()).collect();
        let k = family.len();
        for from in 0..=n {
            chain.transfers.push(Transfer {
                from,
                to: n + 1,
                map: (0..k).collect(),
            });
        }
        chain.families.push(family);
        chain.stages.push(y);
        chain.palettes.push(next_q);
        chain.recolorings.push(rename);
    }
    chain.transfers.sort_by_key(|t| (t.from, t.to));
    if let Err(v) = chain.check() {
        return Err(Error::rejected(format!(
            "constructed chain breaks an invariant: {:?}",
            v
        )));
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LimitReport {
    pub chain: ExtChain,
    /// `|U_δ|`.
    pub universe: usize,
    /// `|G_δ|` after removing duplicates.
    #[serde(rename = "limitFamily")]
    pub limit_family: usize,
    /// `Σ |G_α|` over the original stages.
    #[serde(rename = "familySum")]
    pub family_sum: usize,
}

/// Append the union stage `U_δ = ⋃ U_α` with `G_δ = ⋃ s_α^δ[G_α]`, where
/// `s_α^δ(h)` is the union of the maps `s_α^β(h)`, and re-check coherence.
pub fn chain_limit(chain: &ExtChain) -> Result<LimitReport> {
    if let Err(v) = chain.check() {
        return Err(Error::rejected(format!(
            "chain breaks an invariant: {}",
            serde_json::to_string(&v)?
        )));
    }
    let m = chain.stages.len();
    let top = chain.stages[m - 1].clone();
    let mut limit: Vec<Embedding> = Vec::new();
    let mut index_of: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut maps: Vec<Vec<usize>> = Vec::with_capacity(m);
    for alpha in 0..m {
        let mut map = Vec::with_capacity(chain.families[alpha].len());
        for i in 0..chain.families[alpha].len() {
            // union of the partial maps s_α^β(h), β ≥ α
            let mut union: Vec<Option<usize>> = vec![None; top.len()];
            for beta in alpha..m {
                let s = chain.transferred(alpha, beta, i).expect("checked transfer");
                for (z, &w) in s.map.iter().enumerate() {
                    match union[z] {
                        Some(old) if old != w => {
                            return Err(Error::rejected(format!(
                                "transfers of G_{}[{}] disagree at point {}",
                                alpha, i, z
                            )))
                        }
                        _ => union[z] = Some(w),
                    }
                }
            }
            let f: Vec<usize> = union
                .into_iter()
                .map(|w| w.expect("top stage covers the union"))
                .collect();
            let next = limit.len();
            let j = *index_of.entry(f.clone()).or_insert_with(|| {
                limit.push(Embedding::new(f));
                next
            });
            map.push(j);
        }
        maps.push(map);
    }
    let mut out = chain.clone();
    out.stages.push(top);
    out.families.push(limit);
    out.palettes.push(chain.palettes[m - 1].clone());
    for (alpha, map) in maps.into_iter().enumerate() {
        out.transfers.push(Transfer {
            from: alpha,
            to: m,
            map,
        });
    }
    out.transfers.sort_by_key(|t| (t.from, t.to));
    out.limit_stage = Some(m);
    if let Err(v) = out.check() {
        return Err(Error::rejected(format!(
            "limit stage breaks an invariant: {}",
            serde_json::to_string(&v)?
        )));
    }
    let family_sum = chain.families.iter().map(|f| f.len()).sum();
    Ok(LimitReport {
        universe: out.stages[m].len(),
        limit_family: out.families[m].len(),
        family_sum,
        chain: out,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClosingOff {
    /// The closed set, increasing.
    pub universe: Vec<usize>,
    pub structure: FinStructure,
    /// Automorphisms of the ambient structure.
    pub family: Vec<Embedding>,
    /// The same automorphisms restricted to the closed set, in its own indices.
    pub restricted: Vec<Embedding>,
    pub rounds: usize,
}

impl ClosingOff {
    /// Every automorphism maps the set onto itself, and the restrictions
    /// extend every partial isomorphism of the result with at most `k` points.
    pub fn verify(&self, w: &FinStructure, k: usize) -> bool {
        let set: BTreeSet<usize> = self.universe.iter().copied().collect();
        let invariant = self
            .family
            .iter()
            .all(|h| h.is_embedding(w, w) && self.universe.iter().all(|x| set.contains(&h.map[*x])));
        invariant
            && subsets_up_to(self.structure.len(), k).all(|dom| {
                partial_isos_on(&self.structure, &dom)
                    .iter()
                    .all(|p| self.restricted.iter().any(|h| p.is_restriction_of(h)))
            })
    }
}

/// Close `x` under `h0`, then repeatedly add, for every partial isomorphism
/// of `w` with at most `k` points whose domain lies in the current set, the
/// least automorphism of `w` extending it, and close again.
pub fn closing_off(w: &FinStructure, x: &[usize], h0: &[Embedding], k: usize) -> Result<ClosingOff> {
    match homogeneity_check(w, k)? {
        Homogeneity::Certificate(_) => {}
        Homogeneity::Counterexample(p) => {
            return Err(Error::rejected(format!(
                "ambient structure is not homogeneous at level {}: {:?} does not extend",
                k,
                p.pairs()
            )))
        }
    }
    check_automorphisms(w, h0)?;
    if let Some(&bad) = x.iter().find(|&&z| z >= w.len()) {
        return Err(Error::rejected(format!("element {} is outside the structure", bad)));
    }
    let mut set: BTreeSet<usize> = x.iter().copied().collect();
    let mut family: Vec<Embedding> = Vec::new();
    for h in h0 {
        if !family.contains(h) {
            family.push(h.clone());
        }
    }
    let mut rounds = 0;
    loop {
        rounds += 1;
        if rounds > w.len() + 1 {
            return Err(Error::resource("closing off did not stabilise"));
        }
        let size_before = (set.len(), family.len());
        let mut frontier: Vec<usize> = set.iter().copied().collect();
        while let Some(z) = frontier.pop() {
            for h in &family {
                if set.insert(h.map[z]) {
                    frontier.push(h.map[z]);
                }
            }
        }
        let current: Vec<usize> = set.iter().copied().collect();
        let mut added = Vec::new();
        for d in 1..=k.min(current.len()) {
            for pick in crate::morphisms::Combinations::new(current.len(), d) {
                let dom: Vec<usize> = pick.iter().map(|&i| current[i]).collect();
                for p in partial_isos_on(w, &dom) {
                    if family.iter().chain(&added).any(|h: &Embedding| p.is_restriction_of(h)) {
                        continue;
                    }
                    let h = crate::morphisms::extend_partial_iso(w, &p)?.expect("w is homogeneous at this level");
                    added.push(h);
                }
            }
        }
        family.extend(added);
        if (set.len(), family.len()) == size_before {
            break;
        }
    }
    let universe: Vec<usize> = set.into_iter().collect();
    let mut local = vec![usize::MAX; w.len()];
    for (i, &z) in universe.iter().enumerate() {
        local[z] = i;
    }
    let restricted = family
        .iter()
        .map(|h| Embedding::new(universe.iter().map(|&z| local[h.map[z]]).collect()))
        .collect();
    Ok(ClosingOff {
        structure: w.induced_on_sorted(&universe),
        universe,
        family,
        restricted,
        rounds,
    })
}

/// Whether `p` is a partial isomorphism of `s` extended by some member of `family`.
pub fn witnessed(family: &[Embedding], p: &PartialIso) -> bool {
    family.iter().any(|h| p.is_restriction_of(h))
}

/// Automorphisms `g` of the unordered structure must preserve `colors` on pairs.
pub fn is_color_automorphism(s: &FinStructure, g: &Embedding) -> bool {
    let un = s.unordered_reduct();
    is_embedding(&un, &un, &g.map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morphisms::automorphisms;

    fn tf_ordered() -> ClassSpec {
        ClassSpec::new(ClassId::TfLabeledOrdered)
    }

    fn mono_free(s: &FinStructure) -> bool {
        let n = s.len();
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    if s.color(a, b) == s.color(a, c) && s.color(a, c) == s.color(b, c) {
                        return false;
                    }
                }
            }
        }
        true
    }

    #[test]
    fn identity_is_extensible() {
        let c5 = FinStructure::cycle(5);
        let g = automorphisms(&c5).unwrap();
        match is_extensible(&c5, &c5, &Embedding::identity(5), &g).unwrap() {
            Extensibility::Operator(op) => {
                assert!(op.verify(&c5, &c5));
                assert!(op.table.iter().all(|t| t.h == t.extended));
            }
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn swap_does_not_extend() {
        let source = FinStructure::graph(2, &[]).unwrap();
        let target = FinStructure::graph(3, &[(0, 1)]).unwrap();
        let swap = Embedding::new(vec![1, 0]);
        let e = Embedding::new(vec![0, 2]);
        assert_eq!(
            is_extensible(&source, &target, &e, std::slice::from_ref(&swap)).unwrap(),
            Extensibility::Failure { h: swap }
        );
    }

    #[test]
    fn vertex_into_c5() {
        let v = FinStructure::graph(1, &[]).unwrap();
        let c5 = FinStructure::cycle(5);
        let r = is_extensible(&v, &c5, &Embedding::new(vec![3]), &[Embedding::identity(1)]).unwrap();
        assert!(matches!(r, Extensibility::Operator(_)));
    }

    fn all_exts(x: &FinStructure, q: &ColorBudget) -> Vec<OnePointExtension> {
        tf_ordered().extensions(&Arc::new(x.clone()), q).unwrap()
    }

    #[test]
    fn e_of_one_point() {
        let x = FinStructure::ordered_labeled(1, |_, _| 0);
        let q = ColorBudget::range(2);
        let exts = all_exts(&x, &q);
        assert_eq!(exts.len(), 4);
        let out = e_of_x(&x, &q, &exts, &[Embedding::identity(1)], &EOptions::default()).unwrap();
        let y = &out.structure;
        assert_eq!(y.len(), 5);
        assert!(mono_free(y));
        let mut new_colors: Vec<Color> = (1..5)
            .flat_map(|i| (1..i).map(move |j| (j, i)))
            .map(|(j, i)| y.color(j, i))
            .collect();
        new_colors.sort_unstable();
        assert_eq!(new_colors, vec![2, 3, 4, 5, 6, 7]);
        // bottom to top: (color 1, below x), (color 0, below x), x, (color 1, above), (color 0, above)
        let profile: Vec<(Color, bool)> = y
            .elements_by_rank()
            .into_iter()
            .filter(|&p| p != 0)
            .map(|p| (y.color(0, p), y.less(0, p)))
            .collect();
        assert_eq!(profile, vec![(1, false), (0, false), (1, true), (0, true)]);
        assert_eq!(y.elements_by_rank()[2], 0);
        assert!(realization_counts(y, 1, &exts).iter().all(|&c| c == 1));
        assert!(out.operator.verify(&x, y));
    }

    #[test]
    fn e_of_empty_family() {
        let x = FinStructure::ordered_labeled(2, |_, _| 0);
        let out = e_of_x(
            &x,
            &ColorBudget::range(2),
            &[],
            &[Embedding::identity(2)],
            &EOptions::default(),
        )
        .unwrap();
        assert_eq!(out.structure, x);
        assert!(out.embedding.is_identity());
    }

    #[test]
    fn e_of_single_extension_unique() {
        let x = FinStructure::ordered_labeled(2, |_, _| 0);
        let e = OnePointExtension::colored(Arc::new(x.clone()), vec![1, 1], Some(2)).unwrap();
        let out = e_of_x(
            &x,
            &ColorBudget::range(2),
            std::slice::from_ref(&e),
            &[],
            &EOptions::default(),
        )
        .unwrap();
        assert_eq!(out.structure.len(), 3);
        assert_eq!(realization_counts(&out.structure, 2, &[e]), vec![1]);
        assert_eq!(out.realization[0].point, 2);
    }

    #[test]
    fn e_of_x_rejections() {
        let x = FinStructure::ordered_labeled(1, |_, _| 0);
        let q = ColorBudget::range(2);
        let outside = OnePointExtension::colored(Arc::new(x.clone()), vec![5], Some(0)).unwrap();
        assert!(e_of_x(&x, &q, &[outside], &[], &EOptions::default()).is_err());
        let exts = all_exts(&x, &q);
        let tight = EOptions { fresh_limit: Some(5) };
        assert!(matches!(e_of_x(&x, &q, &exts, &[], &tight), Err(Error::Budget(_))));
    }

    #[test]
    fn orbits_of_unordered_reduct() {
        // two points with a swap; extensions: colors (0,1), (1,0), (0,0)
        let x = FinStructure::labeled(2, |_, _| 3);
        let swap = Embedding::new(vec![1, 0]);
        assert!(is_color_automorphism(&x, &swap));
        let types = vec![vec![0, 1], vec![1, 0], vec![0, 0]];
        let perm = type_permutation(&types, &swap).unwrap();
        assert_eq!(perm.map, vec![1, 0, 2]);
        let orbits = pair_orbits(3, std::slice::from_ref(&perm));
        assert_eq!(orbits, vec![vec![(0, 1)], vec![(0, 2), (1, 2)]]);
        let colors = orbit_coloring(3, std::slice::from_ref(&perm), 10);
        for (i, j) in pairs(3) {
            let (a, b) = (perm.map[i], perm.map[j]);
            assert_eq!(colors[pair_index(i, j)], colors[pair_index(a.min(b), a.max(b))]);
        }
        assert!(type_permutation(&types[..2], &Embedding::new(vec![0, 1])).is_ok());
        assert!(type_permutation(&[vec![0, 1]], &swap).is_err());
    }

    #[test]
    fn small_chain() {
        let u0 = FinStructure::ordered_labeled(2, |_, _| 0);
        let opts = ChainOptions {
            stages: 2,
            schedule: QSchedule::new(vec![ColorBudget::range(2), ColorBudget::range(6)], 1).unwrap(),
            selector: ExtSelector {
                max_subset: 0,
                palette: LiftPalette::Stage,
            },
        };
        let chain = build_g_extensible_chain(&u0, &[Embedding::identity(2)], &opts).unwrap();
        assert_eq!(chain.len(), 3);
        for w in chain.stages.windows(2) {
            assert!(w[1].len() > w[0].len());
        }
        for s in &chain.stages {
            assert!(tf_ordered().is_member(s));
            assert!(mono_free(s));
        }
        assert!(chain.colimit_identity_holds());
        assert_eq!(chain.check(), Ok(()));
    }

    #[test]
    fn chain_slack_exhausted() {
        let u0 = FinStructure::ordered_labeled(2, |_, _| 0);
        let opts = ChainOptions {
            stages: 2,
            schedule: QSchedule::new(vec![ColorBudget::range(2), ColorBudget::range(6)], 1).unwrap(),
            selector: ExtSelector::default(),
        };
        match build_g_extensible_chain(&u0, &[Embedding::identity(2)], &opts) {
            Err(Error::Budget(msg)) => assert!(msg.contains("stage 1")),
            other => panic!("{:?}", other.map(|c| c.len())),
        }
        assert!(QSchedule::new(vec![ColorBudget::range(2), ColorBudget::range(2)], 1).is_err());
    }

    fn toy_chain() -> ExtChain {
        let stages: Vec<FinStructure> = (2..=4).map(|n| FinStructure::graph(n, &[]).unwrap()).collect();
        let fam = |n: usize| {
            let mut swap: Vec<usize> = (0..n).collect();
            swap.swap(0, 1);
            vec![Embedding::identity(n), Embedding::new(swap)]
        };
        let transfers = vec![
            Transfer {
                from: 0,
                to: 1,
                map: vec![0, 1],
            },
            Transfer {
                from: 0,
                to: 2,
                map: vec![0, 1],
            },
            Transfer {
                from: 1,
                to: 2,
                map: vec![0, 1],
            },
        ];
        ExtChain {
            families: (2..=4).map(fam).collect(),
            stages,
            transfers,
            palettes: vec![ColorBudget::range(1); 3],
            recolorings: vec![Vec::new(); 2],
            limit_stage: None,
        }
    }

    #[test]
    fn limit_of_toy_chain() {
        let chain = toy_chain();
        assert_eq!(chain.check(), Ok(()));
        let report = chain_limit(&chain).unwrap();
        assert_eq!(report.chain.len(), 4);
        assert_eq!(report.universe, 4);
        assert_eq!(report.limit_family, 2);
        assert!(report.limit_family <= report.family_sum);
        assert_eq!(report.chain.check(), Ok(()));
    }

    #[test]
    fn perturbed_transfer_rejected() {
        let mut chain = toy_chain();
        chain.transfers[1].map = vec![0, 0];
        assert_eq!(
            chain.check(),
            Err(ChainViolation::Incoherent {
                alpha: 0,
                beta: 1,
                gamma: 2,
                index: 1
            })
        );
        match chain_limit(&chain) {
            Err(Error::Rejected(msg)) => assert!(msg.contains("incoherent")),
            other => panic!("{:?}", other.map(|r| r.universe)),
        }
    }

    #[test]
    fn closing_off_examples() {
        let k3 = FinStructure::complete_graph(3);
        let r = closing_off(&k3, &[0], &[], 2).unwrap();
        assert_eq!(r.structure, k3);
        assert!(r.verify(&k3, 2));
        let c5 = FinStructure::cycle(5);
        let r = closing_off(&c5, &[0], &[], 2).unwrap();
        assert_eq!(r.universe, vec![0, 1, 2, 3, 4]);
        assert!(r.verify(&c5, 2));
        let full = closing_off(&c5, &[0, 1, 2, 3, 4], &[], 1).unwrap();
        assert_eq!(full.structure, c5);
        assert!(closing_off(&FinStructure::path(4), &[0], &[], 1).is_err());
    }
}
