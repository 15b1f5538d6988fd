use std::sync::Arc;

use super::{Color, FinStructure, StructureKind};
use crate::error::{Error, Result};

/// How the new point relates to the base.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExtensionData {
    /// `colors[x]` is the color of `{x, new}`.
    Colors(Vec<Color>),
    /// `(symbol, tuple)` pairs mentioning the new point, which has index `base.len()`.
    /// Kept sorted.
    Tuples(Vec<(usize, Vec<usize>)>),
}

/// A base structure `X` together with a description of `X ∪ {new}`.
///
/// The new point always receives index `base.len()` in the realized structure.
/// `position` is its rank in the order of `X ∪ {new}` (ordered kinds only).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OnePointExtension {
    base: Arc<FinStructure>,
    data: ExtensionData,
    position: Option<usize>,
}

impl OnePointExtension {
    pub fn new(base: Arc<FinStructure>, data: ExtensionData, position: Option<usize>) -> Result<Self> {
        let n = base.len();
        match (base.kind(), &data) {
            (StructureKind::Labeled { ordered }, ExtensionData::Colors(c)) => {
                if c.len() != n {
                    return Err(Error::rejected(format!(
                        "extension needs {} colors, got {}",
                        n,
                        c.len()
                    )));
                }
                match (ordered, position) {
                    (true, Some(p)) if p <= n => {}
                    (true, Some(p)) => return Err(Error::rejected(format!("order position {} exceeds {}", p, n))),
                    (true, None) => return Err(Error::rejected("ordered extension needs a position")),
                    (false, Some(_)) => return Err(Error::rejected("unordered extension cannot carry a position")),
                    (false, None) => {}
                }
            }
            (StructureKind::Relational(sig), ExtensionData::Tuples(ts)) => {
                if position.is_some() {
                    return Err(Error::rejected("relational extension cannot carry a position"));
                }
                for (s, t) in ts {
                    let sym = sig
                        .symbols()
                        .get(*s)
                        .ok_or_else(|| Error::rejected(format!("unknown symbol index {}", s)))?;
                    if t.len() != sym.arity || t.iter().any(|&x| x > n) || !t.contains(&n) {
                        return Err(Error::rejected(format!(
                            "tuple {:?} must have arity {} and mention the new point {}",
                            t, sym.arity, n
                        )));
                    }
                }
            }
            _ => return Err(Error::rejected("extension data does not match base kind")),
        }
        let data = match data {
            ExtensionData::Tuples(mut ts) => {
                ts.sort();
                ts.dedup();
                ExtensionData::Tuples(ts)
            }
            d => d,
        };
        Ok(OnePointExtension { base, data, position })
    }

    pub fn colored(base: Arc<FinStructure>, colors: Vec<Color>, position: Option<usize>) -> Result<Self> {
        Self::new(base, ExtensionData::Colors(colors), position)
    }

    /// Read an extension off an `(n+1)`-point structure whose last point is the new one.
    pub fn from_realized(base: Arc<FinStructure>, realized: &FinStructure) -> Result<Self> {
        let n = base.len();
        if realized.len() != n + 1 || realized.kind() != base.kind() {
            return Err(Error::rejected(format!(
                "realized extension must be a {}-point structure of the base's kind",
                n + 1
            )));
        }
        let prefix: Vec<usize> = (0..n).collect();
        if realized.induced_on_sorted(&prefix) != *base {
            return Err(Error::rejected(
                "realized extension does not restrict to the base on 0..n",
            ));
        }
        let (data, position) = match realized.kind() {
            StructureKind::Labeled { .. } => (
                ExtensionData::Colors((0..n).map(|x| realized.color(x, n)).collect()),
                realized.ranks().map(|r| r[n]),
            ),
            StructureKind::Relational(_) => {
                let mut ts = Vec::new();
                for (s, tuples) in realized.relations().iter().enumerate() {
                    for t in tuples.iter().filter(|t| t.contains(&n)) {
                        ts.push((s, t.clone()));
                    }
                }
                (ExtensionData::Tuples(ts), None)
            }
        };
        Self::new(base, data, position)
    }

    pub fn base(&self) -> &FinStructure {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<FinStructure> {
        &self.base
    }

    pub fn data(&self) -> &ExtensionData {
        &self.data
    }

    pub fn position(&self) -> Option<usize> {
        self.position
    }

    /// Index of the new point in the realized structure.
    pub fn point(&self) -> usize {
        self.base.len()
    }

    pub fn colors(&self) -> Option<&[Color]> {
        match &self.data {
            ExtensionData::Colors(c) => Some(c),
            ExtensionData::Tuples(_) => None,
        }
    }

    /// Whether base point `x` lies below the new point (ordered kinds).
    pub fn is_below(&self, x: usize) -> bool {
        match (self.position, self.base.ranks()) {
            (Some(p), Some(r)) => r[x] < p,
            _ => false,
        }
    }

    /// Same extension type over the same base (base fixed pointwise).
    pub fn same_type(&self, other: &OnePointExtension) -> bool {
        self.data == other.data && self.position == other.position
    }

    pub fn realize(&self) -> FinStructure {
        let n = self.base.len();
        match &self.data {
            ExtensionData::Colors(c) => {
                let mut colors = self.base.colors().to_vec();
                colors.extend_from_slice(c);
                let ranks = self.base.ranks().map(|r| {
                    let p = self.position.expect("ordered extension has a position");
                    let mut out: Vec<usize> = r.iter().map(|&rk| if rk < p { rk } else { rk + 1 }).collect();
                    out.push(p);
                    out
                });
                FinStructure::labeled_from_vec(n + 1, colors, ranks).expect("realized extension")
            }
            ExtensionData::Tuples(ts) => {
                let mut relations = self.base.relations().to_vec();
                for (s, t) in ts {
                    relations[*s].insert(t.clone());
                }
                FinStructure::from_parts(self.base.kind().clone(), n + 1, relations, Vec::new(), None)
            }
        }
    }

    /// The extension seen over the prefix `0..m` of the base.
    pub fn restrict(&self, m: usize) -> Result<OnePointExtension> {
        let n = self.base.len();
        if m > n {
            return Err(Error::rejected(format!("prefix {} exceeds base size {}", m, n)));
        }
        let prefix: Vec<usize> = (0..m).collect();
        let base = Arc::new(self.base.induced_on_sorted(&prefix));
        let data = match &self.data {
            ExtensionData::Colors(c) => ExtensionData::Colors(c[..m].to_vec()),
            ExtensionData::Tuples(ts) => ExtensionData::Tuples(
                ts.iter()
                    .filter(|(_, t)| t.iter().all(|&x| x < m || x == n))
                    .map(|(s, t)| (*s, t.iter().map(|&x| if x == n { m } else { x }).collect()))
                    .collect(),
            ),
        };
        let position = self.position.map(|_| (0..m).filter(|&x| self.is_below(x)).count());
        OnePointExtension::new(base, data, position)
    }
}

/// Serialized as the realized `(n+1)`-point structure; the new point is last.
impl serde::Serialize for OnePointExtension {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.realize().serialize(s)
    }
}
