//! Katětov steps, finite approximations of Fraïssé limits, injectivity
//! certificates, and finite chains of self-embeddings.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::morphisms::{find_embeddings, subsets_up_to, Embedding};
use crate::structures::{
    ClassId, ClassSpec, Color, ColorBudget, ExtensionData, FinStructure, OnePointExtension, StructureKind,
};

/// The type of point `p` over the list `a_set`, in the shape of an extension
/// of `y` induced on `a_set` (element `i` is `a_set[i]`, `p` is `a_set.len()`).
pub fn type_over(y: &FinStructure, a_set: &[usize], p: usize) -> (ExtensionData, Option<usize>) {
    let m = a_set.len();
    match y.kind() {
        StructureKind::Labeled { ordered } => (
            ExtensionData::Colors(a_set.iter().map(|&x| y.color(x, p)).collect()),
            ordered.then(|| a_set.iter().filter(|&&x| y.less(x, p)).count()),
        ),
        StructureKind::Relational(sig) => {
            let global = |i: usize| if i == m { p } else { a_set[i] };
            let mut ts = Vec::new();
            for (s, sym) in sig.symbols().iter().enumerate() {
                let r = sym.arity;
                let mut t = vec![0; r];
                let mut img = vec![0; r];
                for code in 0..(m + 1).pow(r as u32) {
                    let mut c = code;
                    for k in (0..r).rev() {
                        t[k] = c % (m + 1);
                        c /= m + 1;
                    }
                    if !t.contains(&m) {
                        continue;
                    }
                    for k in 0..r {
                        img[k] = global(t[k]);
                    }
                    if y.holds(s, &img) {
                        ts.push((s, t.clone()));
                    }
                }
            }
            ts.sort();
            (ExtensionData::Tuples(ts), None)
        }
    }
}

/// Whether `p` (outside `a_set`) realizes `ext` over `a_set`.
pub fn realizes(y: &FinStructure, a_set: &[usize], p: usize, ext: &OnePointExtension) -> bool {
    let (data, position) = type_over(y, a_set, p);
    data == *ext.data() && position == ext.position()
}

/// Least point of `y` outside `a_set` realizing `ext` over `a_set`.
pub fn find_realization(y: &FinStructure, a_set: &[usize], ext: &OnePointExtension) -> Option<usize> {
    (0..y.len()).find(|p| !a_set.contains(p) && realizes(y, a_set, *p, ext))
}

/// Rank the new point takes: just above the highest element of `a_set` below it.
fn slot(rank: &[usize], a_set: &[usize], below: impl Fn(usize) -> bool) -> usize {
    (0..a_set.len())
        .filter(|&i| below(i))
        .map(|i| rank[a_set[i]] + 1)
        .max()
        .unwrap_or(0)
}

fn insert_rank(rank: &[usize], at: usize) -> Vec<usize> {
    let mut out: Vec<usize> = rank.iter().map(|&r| if r >= at { r + 1 } else { r }).collect();
    out.push(at);
    out
}

/// Add one point to `y` realizing `ext` over `a_set`, related to every other
/// point of `y` by the free choice for the class: no edges for graphs, a
/// place right above its highest predecessor in `a_set` for orders, fresh
/// distinct colors for triangle-free classes, and distances large enough to
/// break every triangle for anti-metric spaces.
///
/// `ext.base()` must be `y` induced on `a_set` in list order. The new point
/// gets index `y.len()`.
pub fn amalgamate_into(
    c: &ClassSpec,
    y: &FinStructure,
    a_set: &[usize],
    ext: &OnePointExtension,
) -> Result<FinStructure> {
    c.check_kind(y)?;
    if *ext.base() != y.induced_in_order(a_set)? {
        return Err(Error::rejected(
            "extension base is not the substructure on the given points",
        ));
    }
    let n = y.len();
    let m = a_set.len();
    let mut local = vec![usize::MAX; n];
    for (i, &x) in a_set.iter().enumerate() {
        local[x] = i;
    }
    let out = match ext.data() {
        ExtensionData::Colors(ea) => {
            let mut new = vec![0 as Color; n];
            let mut outside = Vec::new();
            for x in 0..n {
                if local[x] != usize::MAX {
                    new[x] = ea[local[x]];
                } else {
                    outside.push(x);
                }
            }
            match c.id {
                ClassId::AntiMetric => {
                    let overflow = || Error::budget(format!("anti-metric distances overflow over {} points", n));
                    for (k, &w) in outside.iter().enumerate() {
                        let mut d: Color = 0;
                        for (i, &a) in a_set.iter().enumerate() {
                            d = d.max(ea[i].checked_add(y.color(a, w)).ok_or_else(overflow)?);
                        }
                        for &v in &outside[..k] {
                            d = d.max(new[v].checked_add(y.color(v, w)).ok_or_else(overflow)?);
                        }
                        new[w] = d.checked_add(1).ok_or_else(overflow)?;
                    }
                }
                _ => {
                    let fresh = y
                        .max_color()
                        .into_iter()
                        .chain(ea.iter().copied())
                        .max()
                        .map_or(0, |m| m + 1);
                    for (&w, c) in outside.iter().zip(fresh..) {
                        new[w] = c;
                    }
                }
            }
            let mut flat = y.colors().to_vec();
            flat.extend_from_slice(&new);
            let ranks = y.ranks().map(|r| {
                let at = slot(r, a_set, |i| ext.is_below(i));
                insert_rank(r, at)
            });
            FinStructure::labeled_from_vec(n + 1, flat, ranks)?
        }
        ExtensionData::Tuples(ts) => {
            let mut relations = y.relations().to_vec();
            let global = |i: usize| if i == m { n } else { a_set[i] };
            if c.id == ClassId::LinearOrders {
                let mut rank = vec![0usize; n];
                for t in &relations[0] {
                    rank[t[1]] += 1;
                }
                let below = |i: usize| ts.iter().any(|(_, t)| t[0] == i && t[1] == m);
                let at = slot(&rank, a_set, below);
                for (x, &r) in rank.iter().enumerate() {
                    if r < at {
                        relations[0].insert(vec![x, n]);
                    } else {
                        relations[0].insert(vec![n, x]);
                    }
                }
            } else {
                for (s, t) in ts {
                    relations[*s].insert(t.iter().map(|&i| global(i)).collect());
                }
            }
            FinStructure::relational(y.kind().signature().expect("relational").clone(), n + 1, relations)?
        }
    };
    if let Some(v) = new_point_violation(c, &out)? {
        return Err(Error::budget(format!(
            "adding a point for extension {} breaks {}: {:?}",
            crate::structures::serialize(&ext.realize()),
            c,
            v
        )));
    }
    Ok(out)
}

/// A violation involving the last point, assuming the rest is in the class.
fn new_point_violation(c: &ClassSpec, s: &FinStructure) -> Result<Option<crate::structures::Violation>> {
    use crate::structures::Violation;
    if !s.kind().is_labeled() || s.is_empty() {
        return c.violation(s);
    }
    let p = s.len() - 1;
    for x in 0..p {
        if !c.color_ok(s.color(x, p)) {
            return Ok(Some(Violation::ZeroDistance { x, y: p }));
        }
        for w in x + 1..p {
            if !c.triangle_ok(s.color(x, w), s.color(x, p), s.color(w, p)) {
                return Ok(Some(match c.id {
                    ClassId::AntiMetric => Violation::TriangleInequality { x, y: w, z: p },
                    _ => Violation::MonochromaticTriangle {
                        x,
                        y: w,
                        z: p,
                        color: s.color(x, p),
                    },
                }));
            }
        }
    }
    Ok(None)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AddedPoint {
    pub subset: Vec<usize>,
    pub extension: OnePointExtension,
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KatetovStep {
    pub structure: FinStructure,
    pub inclusion: Embedding,
    pub added: Vec<AddedPoint>,
}

/// A superstructure of `x` realizing every one-point extension (colors from
/// `budget`) of every subset of `x` with at most `k` points.
///
/// Subsets go by (size, lexicographic); extensions in the class enumerator's
/// order. An extension already realized by some point outside the subset is
/// skipped, otherwise one new point is added for it.
pub fn katetov_step(c: &ClassSpec, x: &FinStructure, k: usize, budget: &ColorBudget) -> Result<KatetovStep> {
    if let Some(v) = c.violation(x)? {
        return Err(Error::rejected(format!("seed is not in {}: {:?}", c, v)));
    }
    let mut y = x.clone();
    let mut added = Vec::new();
    for subset in subsets_up_to(x.len(), k) {
        let base = Arc::new(x.induced_on_sorted(&subset));
        for ext in c.extensions(&base, budget)? {
            if find_realization(&y, &subset, &ext).is_some() {
                continue;
            }
            y = amalgamate_into(c, &y, &subset, &ext)?;
            added.push(AddedPoint {
                subset: subset.clone(),
                extension: ext,
                point: y.len() - 1,
            });
        }
    }
    Ok(KatetovStep {
        structure: y,
        inclusion: Embedding::inclusion(x.len()),
        added,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InjectivityWitness {
    pub subset: Vec<usize>,
    pub extension: OnePointExtension,
    pub point: usize,
}

impl InjectivityWitness {
    /// The embedding of `subset ∪ {new}` into the larger structure.
    pub fn embedding(&self) -> Embedding {
        let mut map = self.subset.clone();
        map.push(self.point);
        Embedding::new(map)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InjectivityCertificate {
    pub k: usize,
    pub witnesses: Vec<InjectivityWitness>,
}

impl InjectivityCertificate {
    /// Each witness is an embedding of its extension into `v` fixing its subset.
    pub fn verify(&self, v: &FinStructure) -> bool {
        self.witnesses.iter().all(|w| {
            let e = w.embedding();
            !w.subset.contains(&w.point)
                && e.map[..w.subset.len()] == w.subset[..]
                && e.is_embedding(&w.extension.realize(), v)
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Injectivity {
    Certificate(InjectivityCertificate),
    Failure {
        subset: Vec<usize>,
        extension: OnePointExtension,
    },
}

impl Injectivity {
    pub fn certificate(self) -> Option<InjectivityCertificate> {
        match self {
            Injectivity::Certificate(c) => Some(c),
            Injectivity::Failure { .. } => None,
        }
    }
}

/// Check that every extension of every `<= k`-subset of `u` is realized in `v`.
pub fn injectivity_certificate(
    u: &FinStructure,
    v: &FinStructure,
    c: &ClassSpec,
    k: usize,
    budget: &ColorBudget,
) -> Result<Injectivity> {
    let prefix: Vec<usize> = (0..u.len()).collect();
    if u.kind() != v.kind() || u.len() > v.len() || v.induced_on_sorted(&prefix) != *u {
        return Err(Error::rejected(
            "first structure is not an initial substructure of the second",
        ));
    }
    for s in [u, v] {
        if let Some(x) = c.violation(s)? {
            return Err(Error::rejected(format!("structure is not in {}: {:?}", c, x)));
        }
    }
    let mut witnesses = Vec::new();
    for subset in subsets_up_to(u.len(), k) {
        let base = Arc::new(u.induced_on_sorted(&subset));
        for ext in c.extensions(&base, budget)? {
            match find_realization(v, &subset, &ext) {
                Some(point) => witnesses.push(InjectivityWitness {
                    subset: subset.clone(),
                    extension: ext,
                    point,
                }),
                None => return Ok(Injectivity::Failure { subset, extension: ext }),
            }
        }
    }
    Ok(Injectivity::Certificate(InjectivityCertificate { k, witnesses }))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LimitApprox {
    pub class: ClassId,
    pub level: usize,
    pub stages: Vec<FinStructure>,
    pub inclusions: Vec<Embedding>,
    pub certificates: Vec<InjectivityCertificate>,
}

/// `steps` Katětov steps from `seed`, each certified injective at level `k`.
pub fn build_limit_approx(
    c: &ClassSpec,
    seed: &FinStructure,
    steps: usize,
    k: usize,
    budget: &ColorBudget,
) -> Result<LimitApprox> {
    let mut approx = LimitApprox {
        class: c.id,
        level: k,
        stages: vec![seed.clone()],
        inclusions: Vec::new(),
        certificates: Vec::new(),
    };
    if let Some(v) = c.violation(seed)? {
        return Err(Error::rejected(format!("seed is not in {}: {:?}", c, v)));
    }
    for _ in 0..steps {
        let prev = approx.stages.last().expect("seed stage");
        let step = katetov_step(c, prev, k, budget)?;
        let cert = injectivity_certificate(prev, &step.structure, c, k, budget)?
            .certificate()
            .ok_or_else(|| Error::budget("a Katětov step left an extension unrealized"))?;
        approx.inclusions.push(step.inclusion);
        approx.certificates.push(cert);
        approx.stages.push(step.structure);
    }
    Ok(approx)
}

/// `U_0 → U_1 → ... → U_m` where each step glues a fresh copy of `u'` onto a
/// designated copy of `u`. Bonding maps are inclusions of initial segments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelfEmbeddingChain {
    pub stages: Vec<FinStructure>,
    /// `designated[α]`: the copy of `u` inside `U_α` that step `α + 1` extends.
    pub designated: Vec<Embedding>,
    /// `copies[α]`: the copy of `u'` inside `U_{α+1}`, with `copies[α] ∘ e = designated[α]`.
    pub copies: Vec<Embedding>,
}

impl SelfEmbeddingChain {
    /// `u_α^β`: the map `U_α → U_β`.
    pub fn composite(&self, alpha: usize, beta: usize) -> Embedding {
        assert!(alpha <= beta && beta < self.stages.len());
        Embedding::inclusion(self.stages[alpha].len())
    }

    /// Every bonding square and every composite law holds exactly.
    pub fn verify(&self, u: &FinStructure, u_prime: &FinStructure, e: &Embedding) -> bool {
        let m = self.stages.len();
        for a in 0..m {
            for b in a..m {
                let ab = self.composite(a, b);
                if !ab.is_embedding(&self.stages[a], &self.stages[b]) {
                    return false;
                }
                for g in b..m {
                    if self.composite(b, g).compose(&ab) != self.composite(a, g) {
                        return false;
                    }
                }
            }
        }
        self.copies.iter().enumerate().all(|(a, f)| {
            f.is_embedding(u_prime, &self.stages[a + 1])
                && self.designated[a].is_embedding(u, &self.stages[a])
                && f.compose(e) == self.composite(a, a + 1).compose(&self.designated[a])
        })
    }
}

/// Iterate `e: u → u'` `copies` times inside class `c`.
///
/// Step `α + 1` adds the points of `u'` outside `e(u)` over the designated
/// copy of `u` in `U_α`, completing freely towards the rest of `U_α`. The next
/// designated copy is the image of the lexicographically last embedding of
/// `u` into `u'`.
pub fn iterate_self_embedding(
    c: &ClassSpec,
    u: &FinStructure,
    u_prime: &FinStructure,
    e: &Embedding,
    copies: usize,
) -> Result<SelfEmbeddingChain> {
    if !e.is_embedding(u, u_prime) {
        return Err(Error::rejected("map is not an embedding of u into u'"));
    }
    for s in [u, u_prime] {
        if let Some(v) = c.violation(s)? {
            return Err(Error::rejected(format!("structure is not in {}: {:?}", c, v)));
        }
    }
    let last = find_embeddings(u, u_prime, None)?
        .pop()
        .expect("e itself is an embedding");
    let fresh: Vec<usize> = (0..u_prime.len()).filter(|q| !e.map.contains(q)).collect();
    let mut chain = SelfEmbeddingChain {
        stages: vec![u.clone()],
        designated: vec![Embedding::identity(u.len())],
        copies: Vec::new(),
    };
    for _ in 0..copies {
        let alpha = chain.stages.len() - 1;
        let mut y = chain.stages[alpha].clone();
        let d = &chain.designated[alpha];
        // phi: u' -> y, defined on e(u) through the designated copy
        let mut phi = vec![usize::MAX; u_prime.len()];
        for (x, &q) in e.map.iter().enumerate() {
            phi[q] = d.map[x];
        }
        let mut placed: Vec<usize> = e.map.clone();
        for &q in &fresh {
            let a_set: Vec<usize> = placed.iter().map(|&p| phi[p]).collect();
            let mut list = placed.clone();
            list.push(q);
            let realized = u_prime.induced_in_order(&list)?;
            let base = Arc::new(y.induced_in_order(&a_set)?);
            let ext = OnePointExtension::from_realized(base, &realized)?;
            y = amalgamate_into(c, &y, &a_set, &ext)?;
            phi[q] = y.len() - 1;
            placed.push(q);
        }
        let copy = Embedding::new(phi);
        chain.designated.push(copy.compose(&last));
        chain.copies.push(copy);
        chain.stages.push(y);
    }
    Ok(chain)
}
