//! Embeddings, automorphisms, canonical forms, ages and homogeneity checks.
//!
//! All searches are plain backtracking: source elements are assigned in
//! increasing index order, candidates are tried in increasing target index,
//! and a candidate is dropped as soon as one pair (or tuple) disagrees.
//! Results therefore come out in lexicographic order of the map.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::structures::{FinStructure, StructureKind};

/// Size bound for exhaustive searches (automorphisms, canonical forms, homogeneity).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_search: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_search: 10 }
    }
}

impl Limits {
    pub fn check(&self, n: usize, what: &str) -> Result<()> {
        if n > self.max_search {
            return Err(Error::resource(format!(
                "{} on {} points exceeds the bound {}",
                what, n, self.max_search
            )));
        }
        Ok(())
    }
}

/// An injective structure-preserving map; `map[x]` is the image of source element `x`.
///
/// Source and target are supplied by context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Embedding {
    pub map: Vec<usize>,
}

impl Embedding {
    pub fn new(map: Vec<usize>) -> Self {
        Embedding { map }
    }

    pub fn identity(n: usize) -> Self {
        Embedding { map: (0..n).collect() }
    }

    /// Inclusion of the prefix `0..m` into a larger structure.
    pub fn inclusion(m: usize) -> Self {
        Self::identity(m)
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    /// `self ∘ inner`: apply `inner` first.
    pub fn compose(&self, inner: &Embedding) -> Embedding {
        Embedding {
            map: inner.map.iter().map(|&x| self.map[x]).collect(),
        }
    }

    /// Inverse of a bijection of `0..n`.
    pub fn inverse(&self) -> Embedding {
        let mut inv = vec![0; self.map.len()];
        for (x, &y) in self.map.iter().enumerate() {
            inv[y] = x;
        }
        Embedding { map: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(i, &x)| i == x)
    }

    pub fn is_embedding(&self, source: &FinStructure, target: &FinStructure) -> bool {
        is_embedding(source, target, &self.map)
    }
}

/// Whether `map` embeds `source` into `target`.
pub fn is_embedding(source: &FinStructure, target: &FinStructure, map: &[usize]) -> bool {
    if source.kind() != target.kind() || map.len() != source.len() {
        return false;
    }
    let mut used = vec![false; target.len()];
    for &y in map {
        if y >= target.len() || used[y] {
            return false;
        }
        used[y] = true;
    }
    (0..map.len()).all(|i| compatible(source, target, map, i, map[i]))
}

/// Whether sending source element `i` to `cand` agrees with `map[..i]` on every
/// pair and every tuple whose largest source index is `i`.
fn compatible(a: &FinStructure, b: &FinStructure, map: &[usize], i: usize, cand: usize) -> bool {
    match a.kind() {
        StructureKind::Labeled { ordered } => {
            (0..i).all(|j| a.color(j, i) == b.color(map[j], cand) && (!ordered || a.less(j, i) == b.less(map[j], cand)))
        }
        StructureKind::Relational(sig) => {
            let image = |x: usize| if x == i { cand } else { map[x] };
            for (s, sym) in sig.symbols().iter().enumerate() {
                let r = sym.arity;
                let mut t = vec![0usize; r];
                let mut img = vec![0usize; r];
                for code in 0..(i + 1).pow(r as u32) {
                    let mut c = code;
                    for k in (0..r).rev() {
                        t[k] = c % (i + 1);
                        c /= i + 1;
                    }
                    if !t.contains(&i) {
                        continue;
                    }
                    for (k, &x) in t.iter().enumerate() {
                        img[k] = image(x);
                    }
                    if a.holds(s, &t) != b.holds(s, &img) {
                        return false;
                    }
                }
            }
            true
        }
    }
}

struct Search<'a> {
    a: &'a FinStructure,
    b: &'a FinStructure,
    fixed: &'a [Option<usize>],
    limit: usize,
    map: Vec<usize>,
    used: Vec<bool>,
    out: Vec<Embedding>,
}

impl Search<'_> {
    fn run(&mut self, i: usize) {
        if self.out.len() >= self.limit {
            return;
        }
        if i == self.a.len() {
            self.out.push(Embedding::new(self.map.clone()));
            return;
        }
        let (lo, hi) = match self.fixed.get(i).copied().flatten() {
            Some(t) => (t, t + 1),
            None => (0, self.b.len()),
        };
        for cand in lo..hi.min(self.b.len()) {
            if self.used[cand] || !compatible(self.a, self.b, &self.map, i, cand) {
                continue;
            }
            self.used[cand] = true;
            self.map.push(cand);
            self.run(i + 1);
            self.map.pop();
            self.used[cand] = false;
            if self.out.len() >= self.limit {
                return;
            }
        }
    }
}

fn search(a: &FinStructure, b: &FinStructure, fixed: &[Option<usize>], limit: usize) -> Vec<Embedding> {
    if a.len() > b.len() {
        return Vec::new();
    }
    let mut s = Search {
        a,
        b,
        fixed,
        limit,
        map: Vec::with_capacity(a.len()),
        used: vec![false; b.len()],
        out: Vec::new(),
    };
    s.run(0);
    s.out
}

/// All embeddings of `a` into `b` (or the first `limit`), lexicographic in the map.
pub fn find_embeddings(a: &FinStructure, b: &FinStructure, limit: Option<usize>) -> Result<Vec<Embedding>> {
    if a.kind() != b.kind() {
        return Err(Error::rejected("embedding search across different kinds"));
    }
    Ok(search(a, b, &[], limit.unwrap_or(usize::MAX)))
}

/// Embeddings of `a` into `b` that agree with `fixed` wherever it is `Some`.
pub fn find_embeddings_extending(
    a: &FinStructure,
    b: &FinStructure,
    fixed: &[Option<usize>],
    limit: Option<usize>,
) -> Result<Vec<Embedding>> {
    if a.kind() != b.kind() {
        return Err(Error::rejected("embedding search across different kinds"));
    }
    Ok(search(a, b, fixed, limit.unwrap_or(usize::MAX)))
}

pub fn is_isomorphic(a: &FinStructure, b: &FinStructure) -> Result<bool> {
    Ok(a.len() == b.len() && !find_embeddings(a, b, Some(1))?.is_empty())
}

pub fn automorphisms(s: &FinStructure) -> Result<Vec<Embedding>> {
    automorphisms_with(s, &Limits::default())
}

pub fn automorphisms_with(s: &FinStructure, limits: &Limits) -> Result<Vec<Embedding>> {
    if !s.kind().is_ordered() {
        limits.check(s.len(), "automorphism search")?;
    }
    Ok(search(s, s, &[], usize::MAX))
}

/// Per-vertex isomorphism invariant used to cut the canonical-form search.
fn vertex_invariant(s: &FinStructure, x: usize) -> Vec<u64> {
    match s.kind() {
        StructureKind::Labeled { .. } => {
            let mut v: Vec<u64> = (0..s.len()).filter(|&y| y != x).map(|y| s.color(x, y)).collect();
            v.sort_unstable();
            v
        }
        StructureKind::Relational(sig) => {
            let mut v = Vec::new();
            for (si, sym) in sig.symbols().iter().enumerate() {
                for p in 0..sym.arity {
                    v.push(s.relations()[si].iter().filter(|t| t[p] == x).count() as u64);
                }
            }
            v
        }
    }
}

struct Canon<'a> {
    s: &'a FinStructure,
    target_inv: Vec<Vec<u64>>,
    inv: Vec<Vec<u64>>,
    order: Vec<usize>,
    used: Vec<bool>,
    code: Vec<u64>,
    best_code: Option<Vec<u64>>,
    best_order: Vec<usize>,
}

impl Canon<'_> {
    /// Code entries for placing old vertex `self.order[i]` at new position `i`.
    fn push_code(&mut self, i: usize) {
        let s = self.s;
        match s.kind() {
            StructureKind::Labeled { .. } => {
                for j in 0..i {
                    self.code.push(s.color(self.order[j], self.order[i]));
                }
            }
            StructureKind::Relational(sig) => {
                for (si, sym) in sig.symbols().iter().enumerate() {
                    let r = sym.arity;
                    let total = (i + 1).pow(r as u32);
                    let mut t = vec![0usize; r];
                    let mut img = vec![0usize; r];
                    for code in 0..total {
                        let mut c = code;
                        for k in (0..r).rev() {
                            t[k] = c % (i + 1);
                            c /= i + 1;
                        }
                        if !t.contains(&i) {
                            continue;
                        }
                        for k in 0..r {
                            img[k] = self.order[t[k]];
                        }
                        self.code.push(s.holds(si, &img) as u64);
                    }
                }
            }
        }
    }

    fn run(&mut self, i: usize) {
        let n = self.s.len();
        if i == n {
            if self.best_code.as_ref().is_none_or(|best| self.code < *best) {
                self.best_code = Some(self.code.clone());
                self.best_order = self.order.clone();
            }
            return;
        }
        for v in 0..n {
            if self.used[v] || self.inv[v] != self.target_inv[i] {
                continue;
            }
            let start = self.code.len();
            self.order.push(v);
            self.push_code(i);
            let worse = match &self.best_code {
                None => false,
                Some(best) => self.code[..] > best[..self.code.len()],
            };
            if !worse {
                self.used[v] = true;
                self.run(i + 1);
                self.used[v] = false;
            }
            self.order.pop();
            self.code.truncate(start);
        }
    }
}

/// Relabeling `perm[old] = new` that produces the canonical form.
pub fn canonical_labeling(s: &FinStructure) -> Result<Vec<usize>> {
    canonical_labeling_with(s, &Limits::default())
}

pub fn canonical_labeling_with(s: &FinStructure, limits: &Limits) -> Result<Vec<usize>> {
    if let Some(r) = s.ranks() {
        // order-preserving relabelling is forced
        return Ok(r.to_vec());
    }
    limits.check(s.len(), "canonical labeling")?;
    let n = s.len();
    let inv: Vec<Vec<u64>> = (0..n).map(|x| vertex_invariant(s, x)).collect();
    let mut target_inv = inv.clone();
    target_inv.sort();
    let mut c = Canon {
        s,
        target_inv,
        inv,
        order: Vec::with_capacity(n),
        used: vec![false; n],
        code: Vec::new(),
        best_code: None,
        best_order: Vec::new(),
    };
    c.run(0);
    let mut perm = vec![0; n];
    for (new, &old) in c.best_order.iter().enumerate() {
        perm[old] = new;
    }
    Ok(perm)
}

/// Least relabeling of `s` under the order (sorted vertex invariants, pair/tuple code).
///
/// Two structures have the same canonical form iff they are isomorphic.
pub fn canonicalize(s: &FinStructure) -> Result<FinStructure> {
    Ok(s.relabel(&canonical_labeling(s)?))
}

pub fn canonicalize_with(s: &FinStructure, limits: &Limits) -> Result<FinStructure> {
    Ok(s.relabel(&canonical_labeling_with(s, limits)?))
}

/// Canonical representatives of all induced substructures with 1..=k points.
pub fn age(s: &FinStructure, k: usize) -> Result<Vec<FinStructure>> {
    if k > s.len() {
        return Err(Error::rejected(format!("age bound {} exceeds size {}", k, s.len())));
    }
    let mut reps = BTreeSet::new();
    for d in 1..=k {
        for subset in Combinations::new(s.len(), d) {
            reps.insert(canonicalize(&s.induced_on_sorted(&subset))?);
        }
    }
    let mut v: Vec<FinStructure> = reps.into_iter().collect();
    v.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(v)
}

/// `d`-subsets of `0..n` in lexicographic order.
#[derive(Debug, Clone)]
pub struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub fn new(n: usize, d: usize) -> Self {
        Combinations {
            n,
            current: (d <= n).then(|| (0..d).collect()),
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let d = cur.len();
        let mut next = cur.clone();
        let mut i = d;
        while i > 0 {
            i -= 1;
            if next[i] < self.n - d + i {
                next[i] += 1;
                for j in i + 1..d {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                return Some(cur);
            }
        }
        Some(cur)
    }
}

/// All subsets of `0..n` with at most `k` elements, ordered by (size, lexicographic).
pub fn subsets_up_to(n: usize, k: usize) -> impl Iterator<Item = Vec<usize>> {
    (0..=k.min(n)).flat_map(move |d| Combinations::new(n, d))
}

/// An isomorphism between two induced substructures, as sorted `(x, image)` pairs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct PartialIso {
    pairs: Vec<(usize, usize)>,
}

impl PartialIso {
    pub fn new(mut pairs: Vec<(usize, usize)>) -> Result<Self> {
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::rejected(format!("element {} mapped twice", w[0].0)));
            }
        }
        let mut images: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        images.sort_unstable();
        if images.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::rejected("partial map is not injective"));
        }
        Ok(PartialIso { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn domain(&self) -> Vec<usize> {
        self.pairs.iter().map(|p| p.0).collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Whether the map is an isomorphism between induced substructures of `s`.
    pub fn is_valid_over(&self, s: &FinStructure) -> bool {
        if self.pairs.iter().any(|&(x, y)| x >= s.len() || y >= s.len()) {
            return false;
        }
        let dom = self.domain();
        let sub = s.induced_on_sorted(&dom);
        let map: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        is_embedding(&sub, s, &map)
    }

    /// Whether `f` restricted to the domain is exactly this map.
    pub fn is_restriction_of(&self, f: &Embedding) -> bool {
        self.pairs.iter().all(|&(x, y)| f.map.get(x) == Some(&y))
    }

    fn fixed(&self, n: usize) -> Vec<Option<usize>> {
        let mut fixed = vec![None; n];
        for &(x, y) in &self.pairs {
            fixed[x] = Some(y);
        }
        fixed
    }
}

/// Least automorphism of `s` extending `p`, or `None` when no extension exists.
pub fn extend_partial_iso(s: &FinStructure, p: &PartialIso) -> Result<Option<Embedding>> {
    if !p.is_valid_over(s) {
        return Err(Error::rejected("not a partial isomorphism of the structure"));
    }
    Ok(search(s, s, &p.fixed(s.len()), 1).into_iter().next())
}

/// Partial isomorphisms of `s` with the given (sorted) domain, by image tuple.
pub fn partial_isos_on(s: &FinStructure, domain: &[usize]) -> Vec<PartialIso> {
    let sub = s.induced_on_sorted(domain);
    search(&sub, s, &[], usize::MAX)
        .into_iter()
        .map(|e| PartialIso {
            pairs: domain.iter().copied().zip(e.map).collect(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HomogeneityWitness {
    #[serde(rename = "partialIso")]
    pub partial: PartialIso,
    pub automorphism: Embedding,
}

/// Every partial isomorphism with at most `k` points, each with an extending automorphism.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HomogeneityCertificate {
    pub k: usize,
    pub witnesses: Vec<HomogeneityWitness>,
}

impl HomogeneityCertificate {
    /// Re-check every witness against `s`.
    pub fn verify(&self, s: &FinStructure) -> bool {
        self.witnesses.iter().all(|w| {
            w.partial.is_valid_over(s)
                && w.automorphism.map.len() == s.len()
                && w.automorphism.is_embedding(s, s)
                && w.partial.is_restriction_of(&w.automorphism)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Homogeneity {
    Certificate(HomogeneityCertificate),
    Counterexample(PartialIso),
}

impl Homogeneity {
    pub fn is_certificate(&self) -> bool {
        matches!(self, Homogeneity::Certificate(_))
    }
}

/// Try to extend every partial isomorphism with 1..=k points, in the order
/// (domain size, domain, image tuple). Stops at the first failure.
pub fn homogeneity_check(s: &FinStructure, k: usize) -> Result<Homogeneity> {
    homogeneity_check_with(s, k, &Limits::default())
}

pub fn homogeneity_check_with(s: &FinStructure, k: usize, limits: &Limits) -> Result<Homogeneity> {
    limits.check(s.len(), "homogeneity check")?;
    if k > s.len() {
        return Err(Error::rejected(format!("level {} exceeds size {}", k, s.len())));
    }
    let mut witnesses = Vec::new();
    for d in 1..=k {
        for domain in Combinations::new(s.len(), d) {
            for p in partial_isos_on(s, &domain) {
                match search(s, s, &p.fixed(s.len()), 1).into_iter().next() {
                    Some(automorphism) => witnesses.push(HomogeneityWitness {
                        partial: p,
                        automorphism,
                    }),
                    None => return Ok(Homogeneity::Counterexample(p)),
                }
            }
        }
    }
    Ok(Homogeneity::Certificate(HomogeneityCertificate { k, witnesses }))
}
