//! JSON interchange format for structures.
//!
//! ```json
//! { "kind": "labeled", "n": 3, "coloring": [[0,1,5],[0,2,1],[1,2,2]], "order": [0,2,1] }
//! { "kind": "relational", "n": 2, "signature": [["E",2]], "relations": {"E": [[0,1],[1,0]]} }
//! ```
//!
//! Coloring triples are sorted with `i < j`; a missing `order` means unordered.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{check_ranks, pair_count, pair_index, pairs, Color, FinStructure, Signature, StructureKind, Symbol};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureDoc {
    pub kind: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signature: Option<Vec<(String, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relations: Option<BTreeMap<String, Vec<Vec<usize>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coloring: Option<Vec<(usize, usize, Color)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<usize>>,
}

impl From<&FinStructure> for StructureDoc {
    fn from(s: &FinStructure) -> Self {
        match s.kind() {
            StructureKind::Relational(sig) => StructureDoc {
                kind: "relational".into(),
                n: s.len(),
                signature: Some(sig.symbols().iter().map(|x| (x.name.clone(), x.arity)).collect()),
                relations: Some(
                    sig.symbols()
                        .iter()
                        .zip(s.relations())
                        .map(|(sym, ts)| (sym.name.clone(), ts.iter().cloned().collect()))
                        .collect(),
                ),
                coloring: None,
                order: None,
            },
            StructureKind::Labeled { .. } => {
                let mut coloring: Vec<_> = pairs(s.len()).map(|(i, j)| (i, j, s.color(i, j))).collect();
                coloring.sort_unstable();
                StructureDoc {
                    kind: "labeled".into(),
                    n: s.len(),
                    signature: None,
                    relations: None,
                    coloring: Some(coloring),
                    order: s.ranks().map(|r| r.to_vec()),
                }
            }
        }
    }
}

impl From<FinStructure> for StructureDoc {
    fn from(s: FinStructure) -> Self {
        StructureDoc::from(&s)
    }
}

impl TryFrom<StructureDoc> for FinStructure {
    type Error = Error;

    fn try_from(doc: StructureDoc) -> Result<Self> {
        let n = doc.n;
        match doc.kind.as_str() {
            "labeled" => {
                if doc.signature.is_some() || doc.relations.is_some() {
                    return Err(Error::parse("labeled structures carry no signature or relations"));
                }
                let entries = doc.coloring.unwrap_or_default();
                let mut colors: Vec<Option<Color>> = vec![None; pair_count(n)];
                for (i, j, c) in entries {
                    if i >= j || j >= n {
                        return Err(Error::parse(format!(
                            "coloring entry ({}, {}) must satisfy i < j < {}",
                            i, j, n
                        )));
                    }
                    let slot = &mut colors[pair_index(i, j)];
                    if slot.is_some() {
                        return Err(Error::parse(format!("coloring lists pair ({}, {}) twice", i, j)));
                    }
                    *slot = Some(c);
                }
                let mut flat = Vec::with_capacity(colors.len());
                for ((i, j), c) in pairs(n).zip(colors) {
                    flat.push(c.ok_or_else(|| Error::parse(format!("coloring missing pair ({}, {})", i, j)))?);
                }
                if let Some(r) = &doc.order {
                    check_ranks(r, n).map_err(|e| Error::parse(e.to_string()))?;
                }
                FinStructure::labeled_from_vec(n, flat, doc.order).map_err(|e| Error::parse(e.to_string()))
            }
            "relational" => {
                if doc.coloring.is_some() || doc.order.is_some() {
                    return Err(Error::parse("relational structures carry no coloring or order"));
                }
                let sig = doc
                    .signature
                    .ok_or_else(|| Error::parse("relational structure needs a signature"))?;
                let signature = Signature::new(sig.into_iter().map(|(name, arity)| Symbol { name, arity }).collect())
                    .map_err(|e| Error::parse(e.to_string()))?;
                let mut rel = doc.relations.unwrap_or_default();
                let mut relations = Vec::new();
                for sym in signature.symbols() {
                    let tuples: BTreeSet<Vec<usize>> = rel.remove(&sym.name).unwrap_or_default().into_iter().collect();
                    relations.push(tuples);
                }
                if let Some(extra) = rel.keys().next() {
                    return Err(Error::parse(format!("relation {} is not in the signature", extra)));
                }
                FinStructure::relational(signature, n, relations).map_err(|e| Error::parse(e.to_string()))
            }
            other => Err(Error::parse(format!("unknown kind {}", other))),
        }
    }
}

impl Serialize for FinStructure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StructureDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for FinStructure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let doc = StructureDoc::deserialize(d)?;
        FinStructure::try_from(doc).map_err(serde::de::Error::custom)
    }
}

/// Canonical single-line JSON: equal structures give identical text.
pub fn serialize(s: &FinStructure) -> String {
    serde_json::to_string(&StructureDoc::from(s)).expect("structure documents always serialize")
}

pub fn deserialize(text: &str) -> Result<FinStructure> {
    let doc: StructureDoc = serde_json::from_str(text)?;
    FinStructure::try_from(doc)
}
