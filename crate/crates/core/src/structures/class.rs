use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    pair_index, pairs, Color, ColorBudget, ExtensionData, FinStructure, OnePointExtension, Signature, StructureKind,
};
use crate::error::{Error, Result};

/// The catalogued hereditary classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassId {
    Graphs,
    /// Graphs omitting the complete graph on `k` vertices, `k >= 3`.
    KnFree(usize),
    LinearOrders,
    AntiMetric,
    TfLabeled,
    TfLabeledOrdered,
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassId::Graphs => write!(f, "graphs"),
            ClassId::KnFree(k) => write!(f, "knfree:{}", k),
            ClassId::LinearOrders => write!(f, "linear-orders"),
            ClassId::AntiMetric => write!(f, "antimetric"),
            ClassId::TfLabeled => write!(f, "tf-labeled"),
            ClassId::TfLabeledOrdered => write!(f, "tf-labeled-ordered"),
        }
    }
}

impl FromStr for ClassId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        let id = match lower.as_str() {
            "graphs" => ClassId::Graphs,
            "linear-orders" | "linearorders" => ClassId::LinearOrders,
            "antimetric" | "anti-metric" => ClassId::AntiMetric,
            "tf-labeled" | "tflabeled" => ClassId::TfLabeled,
            "tf-labeled-ordered" | "tflabeledordered" => ClassId::TfLabeledOrdered,
            other => {
                let k = other
                    .strip_prefix("knfree:")
                    .or_else(|| other.strip_prefix("k").and_then(|r| r.strip_suffix("free")))
                    .and_then(|k| k.parse::<usize>().ok())
                    .ok_or_else(|| Error::rejected(format!("unknown class {}", s)))?;
                if k < 3 {
                    return Err(Error::rejected(format!("knfree needs k >= 3, got {}", k)));
                }
                ClassId::KnFree(k)
            }
        };
        Ok(id)
    }
}

impl Serialize for ClassId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ClassId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// First reason a structure falls outside a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    Loop { x: usize },
    NotSymmetric { x: usize, y: usize },
    Clique { vertices: Vec<usize> },
    NotTotal { x: usize, y: usize },
    NotAntisymmetric { x: usize, y: usize },
    NotTransitive { x: usize, y: usize, z: usize },
    ZeroDistance { x: usize, y: usize },
    TriangleInequality { x: usize, y: usize, z: usize },
    MonochromaticTriangle { x: usize, y: usize, z: usize, color: Color },
}

/// A hereditary class of finite structures: a membership test plus an
/// enumerator of one-point extensions that stay inside the class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassSpec {
    pub id: ClassId,
}

impl ClassSpec {
    pub fn new(id: ClassId) -> Self {
        if let ClassId::KnFree(k) = id {
            assert!(k >= 3, "knfree needs k >= 3");
        }
        ClassSpec { id }
    }

    /// Every catalogued class, with `knfree:3` standing in for the family.
    pub fn catalog() -> Vec<ClassSpec> {
        [
            ClassId::Graphs,
            ClassId::KnFree(3),
            ClassId::LinearOrders,
            ClassId::AntiMetric,
            ClassId::TfLabeled,
            ClassId::TfLabeledOrdered,
        ]
        .into_iter()
        .map(ClassSpec::new)
        .collect()
    }

    pub fn kind(&self) -> StructureKind {
        match self.id {
            ClassId::Graphs | ClassId::KnFree(_) => StructureKind::Relational(Signature::binary("E")),
            ClassId::LinearOrders => StructureKind::Relational(Signature::binary("<")),
            ClassId::AntiMetric | ClassId::TfLabeled => StructureKind::Labeled { ordered: false },
            ClassId::TfLabeledOrdered => StructureKind::Labeled { ordered: true },
        }
    }

    /// Finitely many relation symbols (no unbounded color palette).
    pub fn has_finite_language(&self) -> bool {
        matches!(self.id, ClassId::Graphs | ClassId::KnFree(_) | ClassId::LinearOrders)
    }

    /// Membership is invariant under every permutation of the colors.
    pub fn is_color_symmetric(&self) -> bool {
        matches!(self.id, ClassId::TfLabeled | ClassId::TfLabeledOrdered)
    }

    pub fn check_kind(&self, s: &FinStructure) -> Result<()> {
        if *s.kind() != self.kind() {
            return Err(Error::rejected(format!(
                "structure kind {:?} does not match class {}",
                s.kind(),
                self.id
            )));
        }
        Ok(())
    }

    /// Whether `s` belongs to the class; errors only on a kind mismatch.
    pub fn validate(&self, s: &FinStructure) -> Result<bool> {
        Ok(self.violation(s)?.is_none())
    }

    pub fn is_member(&self, s: &FinStructure) -> bool {
        matches!(self.violation(s), Ok(None))
    }

    pub fn violation(&self, s: &FinStructure) -> Result<Option<Violation>> {
        self.check_kind(s)?;
        Ok(match self.id {
            ClassId::Graphs => graph_violation(s),
            ClassId::KnFree(k) => {
                graph_violation(s).or_else(|| find_clique(s, k).map(|vertices| Violation::Clique { vertices }))
            }
            ClassId::LinearOrders => order_violation(s),
            ClassId::AntiMetric => antimetric_violation(s),
            ClassId::TfLabeled | ClassId::TfLabeledOrdered => mono_triangle(s),
        })
    }

    /// Whether a triangle with pairwise colors `(ab, ax, bx)` is allowed (labeled classes).
    #[inline]
    pub fn triangle_ok(&self, ab: Color, ax: Color, bx: Color) -> bool {
        match self.id {
            ClassId::AntiMetric => antimetric_triangle_ok(ab, ax, bx),
            ClassId::TfLabeled | ClassId::TfLabeledOrdered => !(ab == ax && ax == bx),
            _ => true,
        }
    }

    /// Whether a single pair may carry `color` (anti-metric distances are positive).
    #[inline]
    pub fn color_ok(&self, color: Color) -> bool {
        !(self.id == ClassId::AntiMetric && color == 0)
    }

    /// All one-point extensions of `base` inside the class, colors drawn from `budget`.
    ///
    /// Order: graphs by neighbourhood bitmask ascending; linear orders by
    /// position; labeled kinds lexicographically on the color vector (ascending
    /// budget colors), then by order position.
    pub fn extensions(&self, base: &Arc<FinStructure>, budget: &ColorBudget) -> Result<Vec<OnePointExtension>> {
        self.check_kind(base)?;
        let n = base.len();
        let mut out = Vec::new();
        match self.id {
            ClassId::Graphs | ClassId::KnFree(_) => {
                if n >= usize::BITS as usize - 1 {
                    return Err(Error::resource(format!(
                        "graph extension enumeration over {} points",
                        n
                    )));
                }
                for mask in 0usize..(1 << n) {
                    let nbrs: Vec<usize> = (0..n).filter(|&x| mask >> x & 1 == 1).collect();
                    if let ClassId::KnFree(k) = self.id {
                        let sub = base.induced_on_sorted(&nbrs);
                        if find_clique(&sub, k - 1).is_some() {
                            continue;
                        }
                    }
                    let mut ts = Vec::with_capacity(2 * nbrs.len());
                    for &x in &nbrs {
                        ts.push((0, vec![x, n]));
                        ts.push((0, vec![n, x]));
                    }
                    out.push(OnePointExtension::new(base.clone(), ExtensionData::Tuples(ts), None)?);
                }
            }
            ClassId::LinearOrders => {
                let by_rank = chain_of(base);
                for p in 0..=n {
                    let mut ts = Vec::with_capacity(n);
                    for (r, &x) in by_rank.iter().enumerate() {
                        if r < p {
                            ts.push((0, vec![x, n]));
                        } else {
                            ts.push((0, vec![n, x]));
                        }
                    }
                    out.push(OnePointExtension::new(base.clone(), ExtensionData::Tuples(ts), None)?);
                }
            }
            ClassId::AntiMetric | ClassId::TfLabeled | ClassId::TfLabeledOrdered => {
                let palette: Vec<Color> = budget.colors().iter().copied().filter(|&c| self.color_ok(c)).collect();
                let mut current = Vec::with_capacity(n);
                let mut vectors = Vec::new();
                self.color_vectors(base, &palette, &mut current, &mut vectors);
                for v in vectors {
                    if base.kind().is_ordered() {
                        for p in 0..=n {
                            out.push(OnePointExtension::colored(base.clone(), v.clone(), Some(p))?);
                        }
                    } else {
                        out.push(OnePointExtension::colored(base.clone(), v, None)?);
                    }
                }
            }
        }
        Ok(out)
    }

    fn color_vectors(
        &self,
        base: &FinStructure,
        palette: &[Color],
        current: &mut Vec<Color>,
        out: &mut Vec<Vec<Color>>,
    ) {
        let x = current.len();
        if x == base.len() {
            out.push(current.clone());
            return;
        }
        for &c in palette {
            if (0..x).all(|y| self.triangle_ok(base.color(y, x), current[y], c)) {
                current.push(c);
                self.color_vectors(base, palette, current, out);
                current.pop();
            }
        }
    }
}

impl fmt::Display for ClassSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.id.fmt(f)
    }
}

impl FromStr for ClassSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(ClassSpec::new(s.parse()?))
    }
}

#[inline]
pub(crate) fn antimetric_triangle_ok(a: Color, b: Color, c: Color) -> bool {
    let mut t = [a, b, c];
    t.sort_unstable();
    t[0] > 0 && t[2] > t[0].saturating_add(t[1])
}

fn graph_violation(s: &FinStructure) -> Option<Violation> {
    for t in &s.relations()[0] {
        if t[0] == t[1] {
            return Some(Violation::Loop { x: t[0] });
        }
        if !s.holds(0, &[t[1], t[0]]) {
            return Some(Violation::NotSymmetric { x: t[0], y: t[1] });
        }
    }
    None
}

/// Lexicographically least `k`-clique of a graph, if any.
pub(crate) fn find_clique(s: &FinStructure, k: usize) -> Option<Vec<usize>> {
    if k == 0 {
        return Some(Vec::new());
    }
    let adj: Vec<Vec<usize>> = (0..s.len()).map(|x| s.neighbours(0, x)).collect();
    fn extend(adj: &[Vec<usize>], k: usize, clique: &mut Vec<usize>, candidates: &[usize]) -> bool {
        if clique.len() == k {
            return true;
        }
        for (i, &v) in candidates.iter().enumerate() {
            if candidates.len() - i < k - clique.len() {
                break;
            }
            let next: Vec<usize> = candidates[i + 1..]
                .iter()
                .copied()
                .filter(|w| adj[v].binary_search(w).is_ok())
                .collect();
            clique.push(v);
            if extend(adj, k, clique, &next) {
                return true;
            }
            clique.pop();
        }
        false
    }
    let all: Vec<usize> = (0..s.len()).collect();
    let mut clique = Vec::new();
    extend(&adj, k, &mut clique, &all).then_some(clique)
}

/// Elements of a linear order from least to greatest (assumes a valid order).
pub(crate) fn chain_of(s: &FinStructure) -> Vec<usize> {
    let mut below = vec![0usize; s.len()];
    for t in &s.relations()[0] {
        below[t[1]] += 1;
    }
    let mut v: Vec<usize> = (0..s.len()).collect();
    v.sort_by_key(|&x| below[x]);
    v
}

fn order_violation(s: &FinStructure) -> Option<Violation> {
    let n = s.len();
    for x in 0..n {
        if s.holds(0, &[x, x]) {
            return Some(Violation::Loop { x });
        }
    }
    for (x, y) in pairs(n) {
        match (s.holds(0, &[x, y]), s.holds(0, &[y, x])) {
            (false, false) => return Some(Violation::NotTotal { x, y }),
            (true, true) => return Some(Violation::NotAntisymmetric { x, y }),
            _ => {}
        }
    }
    for t in &s.relations()[0] {
        let (x, y) = (t[0], t[1]);
        for z in 0..n {
            if s.holds(0, &[y, z]) && !s.holds(0, &[x, z]) {
                return Some(Violation::NotTransitive { x, y, z });
            }
        }
    }
    None
}

fn antimetric_violation(s: &FinStructure) -> Option<Violation> {
    let n = s.len();
    for (x, y) in pairs(n) {
        if s.color(x, y) == 0 {
            return Some(Violation::ZeroDistance { x, y });
        }
    }
    for x in 0..n {
        for y in x + 1..n {
            let xy = s.color(x, y);
            for z in y + 1..n {
                if !antimetric_triangle_ok(xy, s.color(x, z), s.color(y, z)) {
                    return Some(Violation::TriangleInequality { x, y, z });
                }
            }
        }
    }
    None
}

/// Lexicographically least monochromatic triangle, bucketing neighbours by color.
fn mono_triangle(s: &FinStructure) -> Option<Violation> {
    let n = s.len();
    let mut buckets: HashMap<Color, Vec<usize>> = HashMap::new();
    for x in 0..n {
        buckets.clear();
        for y in x + 1..n {
            buckets.entry(s.color(x, y)).or_default().push(y);
        }
        let mut best: Option<(usize, usize, Color)> = None;
        for (&c, ys) in &buckets {
            for (i, &y) in ys.iter().enumerate() {
                if let Some(&z) = ys[i + 1..].iter().find(|&&z| s.colors()[pair_index(y, z)] == c) {
                    if best.is_none_or(|(by, bz, _)| (y, z) < (by, bz)) {
                        best = Some((y, z, c));
                    }
                    break;
                }
            }
        }
        if let Some((y, z, color)) = best {
            return Some(Violation::MonochromaticTriangle { x, y, z, color });
        }
    }
    None
}
