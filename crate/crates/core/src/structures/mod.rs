//! Finite structures over the universe `0..n`.
//!
//! Two shapes are supported: relational structures over a finite signature
//! (graphs, linear orders) and complete edge-labeled graphs, optionally
//! carrying a linear order. Colors are natural numbers; for anti-metric
//! spaces the color of a pair is its distance.

mod class;
mod extension;
mod io;

pub use class::{ClassId, ClassSpec, Violation};
pub use extension::{ExtensionData, OnePointExtension};
pub use io::{deserialize, serialize, StructureDoc};

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Color = u64;

/// A finite palette `Q` of colors, kept sorted and duplicate free.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct ColorBudget(Vec<Color>);

impl ColorBudget {
    pub fn new(mut colors: Vec<Color>) -> Self {
        colors.sort_unstable();
        colors.dedup();
        ColorBudget(colors)
    }

    /// `{0, .., k-1}`.
    pub fn range(k: usize) -> Self {
        ColorBudget((0..k as Color).collect())
    }

    pub fn colors(&self) -> &[Color] {
        &self.0
    }

    pub fn contains(&self, c: Color) -> bool {
        self.0.binary_search(&c).is_ok()
    }

    pub fn max(&self) -> Option<Color> {
        self.0.last().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// First color strictly above everything in the budget.
    pub fn next_fresh(&self) -> Color {
        self.max().map_or(0, |m| m + 1)
    }
}

impl Default for ColorBudget {
    /// `{0, .., 15}`.
    fn default() -> Self {
        ColorBudget::range(16)
    }
}

/// Index of the unordered pair `{i, j}` in colex order: `(0,1), (0,2), (1,2), (0,3), ...`.
///
/// Adding a point `n` appends exactly the pairs `(0,n) .. (n-1,n)`.
#[inline]
pub fn pair_index(i: usize, j: usize) -> usize {
    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
    hi * (hi - 1) / 2 + lo
}

#[inline]
pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Symbol {
    pub name: String,
    pub arity: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Signature(Vec<Symbol>);

impl Signature {
    pub fn new(symbols: Vec<Symbol>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for s in &symbols {
            if s.arity == 0 {
                return Err(Error::rejected(format!("symbol {} has arity 0", s.name)));
            }
            if !seen.insert(s.name.clone()) {
                return Err(Error::rejected(format!("duplicate symbol {}", s.name)));
            }
        }
        Ok(Signature(symbols))
    }

    /// A single binary symbol, as used by graphs (`E`) and linear orders (`<`).
    pub fn binary(name: &str) -> Self {
        Signature(vec![Symbol {
            name: name.to_string(),
            arity: 2,
        }])
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|s| s.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StructureKind {
    Relational(Signature),
    Labeled { ordered: bool },
}

impl StructureKind {
    pub fn is_labeled(&self) -> bool {
        matches!(self, StructureKind::Labeled { .. })
    }

    pub fn is_ordered(&self) -> bool {
        matches!(self, StructureKind::Labeled { ordered: true })
    }

    pub fn signature(&self) -> Option<&Signature> {
        match self {
            StructureKind::Relational(sig) => Some(sig),
            StructureKind::Labeled { .. } => None,
        }
    }
}

/// An immutable finite structure on `0..n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FinStructure {
    kind: StructureKind,
    n: usize,
    /// One tuple set per signature symbol (relational kind only).
    relations: Vec<BTreeSet<Vec<usize>>>,
    /// Colors in [`pair_index`] order (labeled kind only).
    colors: Vec<Color>,
    /// `ranks[x]` is the position of `x` in the linear order (ordered kind only).
    ranks: Option<Vec<usize>>,
}

impl FinStructure {
    pub fn empty(kind: StructureKind) -> Self {
        let relations = match &kind {
            StructureKind::Relational(sig) => vec![BTreeSet::new(); sig.symbols().len()],
            StructureKind::Labeled { .. } => Vec::new(),
        };
        let ranks = kind.is_ordered().then(Vec::new);
        FinStructure {
            kind,
            n: 0,
            relations,
            colors: Vec::new(),
            ranks,
        }
    }

    pub fn relational(signature: Signature, n: usize, relations: Vec<BTreeSet<Vec<usize>>>) -> Result<Self> {
        if relations.len() != signature.symbols().len() {
            return Err(Error::rejected(format!(
                "expected {} relations, got {}",
                signature.symbols().len(),
                relations.len()
            )));
        }
        for (sym, tuples) in signature.symbols().iter().zip(&relations) {
            for t in tuples {
                if t.len() != sym.arity {
                    return Err(Error::rejected(format!(
                        "tuple {:?} has wrong arity for {}",
                        t, sym.name
                    )));
                }
                if let Some(&bad) = t.iter().find(|&&x| x >= n) {
                    return Err(Error::rejected(format!(
                        "element {} out of range 0..{} in {}",
                        bad, n, sym.name
                    )));
                }
            }
        }
        Ok(FinStructure {
            kind: StructureKind::Relational(signature),
            n,
            relations,
            colors: Vec::new(),
            ranks: None,
        })
    }

    /// Complete labeled graph from a flat color vector in [`pair_index`] order.
    pub fn labeled_from_vec(n: usize, colors: Vec<Color>, ranks: Option<Vec<usize>>) -> Result<Self> {
        if colors.len() != pair_count(n) {
            return Err(Error::rejected(format!(
                "coloring must cover all {} pairs, got {}",
                pair_count(n),
                colors.len()
            )));
        }
        if let Some(r) = &ranks {
            check_ranks(r, n)?;
        }
        Ok(FinStructure {
            kind: StructureKind::Labeled {
                ordered: ranks.is_some(),
            },
            n,
            relations: Vec::new(),
            colors,
            ranks,
        })
    }

    pub fn labeled(n: usize, color: impl Fn(usize, usize) -> Color) -> Self {
        let colors = pairs(n).map(|(i, j)| color(i, j)).collect();
        Self::labeled_from_vec(n, colors, None).expect("total coloring")
    }

    /// Ordered labeled graph with the natural order `0 < 1 < ... < n-1`.
    pub fn ordered_labeled(n: usize, color: impl Fn(usize, usize) -> Color) -> Self {
        let colors = pairs(n).map(|(i, j)| color(i, j)).collect();
        Self::labeled_from_vec(n, colors, Some((0..n).collect())).expect("total coloring")
    }

    pub fn graph(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut e = BTreeSet::new();
        for &(i, j) in edges {
            if i == j {
                return Err(Error::rejected(format!("loop at {}", i)));
            }
            e.insert(vec![i, j]);
            e.insert(vec![j, i]);
        }
        Self::relational(Signature::binary("E"), n, vec![e])
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Self::graph(n, &edges).expect("valid path")
    }

    pub fn cycle(n: usize) -> Self {
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::graph(n, &edges).expect("valid cycle")
    }

    pub fn complete_graph(n: usize) -> Self {
        let edges: Vec<_> = pairs(n).collect();
        Self::graph(n, &edges).expect("valid clique")
    }

    /// The chain `0 < 1 < ... < n-1` as a relational structure.
    pub fn linear_order(n: usize) -> Self {
        let lt = pairs(n).map(|(i, j)| vec![i, j]).collect();
        Self::relational(Signature::binary("<"), n, vec![lt]).expect("valid order")
    }

    pub fn kind(&self) -> &StructureKind {
        &self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn relations(&self) -> &[BTreeSet<Vec<usize>>] {
        &self.relations
    }

    pub fn colors(&self) -> &[Color] {
        &self.colors
    }

    pub fn ranks(&self) -> Option<&[usize]> {
        self.ranks.as_deref()
    }

    #[inline]
    pub fn color(&self, i: usize, j: usize) -> Color {
        self.colors[pair_index(i, j)]
    }

    #[inline]
    pub fn holds(&self, symbol: usize, tuple: &[usize]) -> bool {
        self.relations[symbol].contains(tuple)
    }

    /// Whether `i` precedes `j` in the structure's order, when it has one.
    #[inline]
    pub fn less(&self, i: usize, j: usize) -> bool {
        match &self.ranks {
            Some(r) => r[i] < r[j],
            None => false,
        }
    }

    /// Elements listed from the bottom of the order upwards.
    pub fn elements_by_rank(&self) -> Vec<usize> {
        match &self.ranks {
            Some(r) => {
                let mut v = vec![0; self.n];
                for (x, &rk) in r.iter().enumerate() {
                    v[rk] = x;
                }
                v
            }
            None => (0..self.n).collect(),
        }
    }

    /// Binary-relation neighbours of `x` (graphs): all `y` with `E(x, y)`.
    pub fn neighbours(&self, symbol: usize, x: usize) -> Vec<usize> {
        let lo = vec![x];
        self.relations[symbol]
            .range(lo..)
            .take_while(|t| t[0] == x)
            .map(|t| t[1])
            .collect()
    }

    /// Structure induced on `subset`, relabelled by increasing original index.
    pub fn induced_substructure(&self, subset: &[usize]) -> Result<Self> {
        let mut elems: Vec<usize> = subset.to_vec();
        elems.sort_unstable();
        elems.dedup();
        if let Some(&bad) = elems.iter().find(|&&x| x >= self.n) {
            return Err(Error::rejected(format!("element {} out of range 0..{}", bad, self.n)));
        }
        Ok(self.induced_on_sorted(&elems))
    }

    /// `elems` must be sorted, distinct and in range.
    pub(crate) fn induced_on_sorted(&self, elems: &[usize]) -> Self {
        let m = elems.len();
        let mut pos = vec![usize::MAX; self.n];
        for (new, &old) in elems.iter().enumerate() {
            pos[old] = new;
        }
        let relations = self
            .relations
            .iter()
            .map(|tuples| {
                tuples
                    .iter()
                    .filter(|t| t.iter().all(|&x| pos[x] != usize::MAX))
                    .map(|t| t.iter().map(|&x| pos[x]).collect())
                    .collect()
            })
            .collect();
        let colors = if self.kind.is_labeled() {
            pairs(m).map(|(i, j)| self.color(elems[i], elems[j])).collect()
        } else {
            Vec::new()
        };
        let ranks = self.ranks.as_ref().map(|r| {
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by_key(|&i| r[elems[i]]);
            let mut out = vec![0; m];
            for (rk, &i) in order.iter().enumerate() {
                out[i] = rk;
            }
            out
        });
        FinStructure {
            kind: self.kind.clone(),
            n: m,
            relations,
            colors,
            ranks,
        }
    }

    /// Structure induced on `list`, with `list[i]` becoming element `i`.
    pub fn induced_in_order(&self, list: &[usize]) -> Result<Self> {
        let mut sorted = list.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != list.len() {
            return Err(Error::rejected("repeated element in induced list"));
        }
        let sub = self.induced_substructure(&sorted)?;
        let perm: Vec<usize> = sorted
            .iter()
            .map(|x| list.iter().position(|y| y == x).expect("listed"))
            .collect();
        Ok(sub.relabel(&perm))
    }

    /// Relabel with `perm[old] = new`; `perm` must be a permutation of `0..n`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        debug_assert_eq!(perm.len(), self.n);
        let mut inv = vec![0; self.n];
        for (old, &new) in perm.iter().enumerate() {
            inv[new] = old;
        }
        let relations = self
            .relations
            .iter()
            .map(|tuples| tuples.iter().map(|t| t.iter().map(|&x| perm[x]).collect()).collect())
            .collect();
        let colors = if self.kind.is_labeled() {
            pairs(self.n).map(|(i, j)| self.color(inv[i], inv[j])).collect()
        } else {
            Vec::new()
        };
        let ranks = self
            .ranks
            .as_ref()
            .map(|r| (0..self.n).map(|new| r[inv[new]]).collect());
        FinStructure {
            kind: self.kind.clone(),
            n: self.n,
            relations,
            colors,
            ranks,
        }
    }

    /// Same structure with every color passed through `f`.
    pub fn recolor(&self, f: impl Fn(Color) -> Color) -> Self {
        let mut out = self.clone();
        for c in &mut out.colors {
            *c = f(*c);
        }
        out
    }

    /// Forget the order of an ordered labeled graph.
    pub fn unordered_reduct(&self) -> Self {
        let mut out = self.clone();
        if out.kind.is_labeled() {
            out.kind = StructureKind::Labeled { ordered: false };
            out.ranks = None;
        }
        out
    }

    pub fn max_color(&self) -> Option<Color> {
        self.colors.iter().copied().max()
    }

    pub(crate) fn from_parts(
        kind: StructureKind,
        n: usize,
        relations: Vec<BTreeSet<Vec<usize>>>,
        colors: Vec<Color>,
        ranks: Option<Vec<usize>>,
    ) -> Self {
        FinStructure {
            kind,
            n,
            relations,
            colors,
            ranks,
        }
    }
}

pub(crate) fn check_ranks(ranks: &[usize], n: usize) -> Result<()> {
    if ranks.len() != n {
        return Err(Error::rejected(format!(
            "order has {} entries for {} elements",
            ranks.len(),
            n
        )));
    }
    let mut seen = vec![false; n];
    for &r in ranks {
        if r >= n || seen[r] {
            return Err(Error::rejected("order ranks are not a bijection onto 0..n"));
        }
        seen[r] = true;
    }
    Ok(())
}

/// All pairs `i < j < n` in [`pair_index`] order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (1..n).flat_map(|j| (0..j).map(move |i| (i, j)))
}

/// Structure on all binary strings of length `depth`, with distance
/// `3^m` where `m` is the first coordinate at which two strings differ.
///
/// Element `x` encodes the string whose coordinate `m` is bit `depth-1-m` of `x`,
/// so elements are listed in lexicographic order of their strings.
pub fn cantor_antimetric(depth: usize) -> Result<FinStructure> {
    if !(1..=12).contains(&depth) {
        return Err(Error::rejected(format!("depth must lie in 1..=12, got {}", depth)));
    }
    let n = 1usize << depth;
    Ok(FinStructure::labeled(n, |x, y| {
        let diff = x ^ y;
        // leading coordinate = most significant differing bit
        let msb = usize::BITS - 1 - diff.leading_zeros();
        let first = depth - 1 - msb as usize;
        3u64.pow(first as u32)
    }))
}
