//! Four constructions over infinite bases where one-point amalgamation fails,
//! truncated to finite windows and checked mechanically.
//!
//! * finite-support permutations of the naturals extended by the involutions
//!   `a` and `b`, whose product has infinite order;
//! * anti-metric spaces;
//! * triangle-free complete labeled graphs;
//! * ordered triangle-free labeled graphs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::amalgamation::{amalgamation_base_check, glue_block, Block, PairVerdict};
use crate::error::{Error, Result};
use crate::structures::{pair_index, ClassId, ClassSpec, Color, ColorBudget, FinStructure, OnePointExtension};

/// Behaviour of a permutation outside its explicit part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    Identity,
    /// `2k ↔ 2k+1`.
    A,
    /// `0` fixed, `2k−1 ↔ 2k`.
    B,
}

impl Tail {
    pub fn eval(self, i: usize) -> usize {
        match self {
            Tail::Identity => i,
            Tail::A => i ^ 1,
            Tail::B if i == 0 => 0,
            Tail::B if i % 2 == 1 => i + 1,
            Tail::B => i - 1,
        }
    }

    /// Least `e ≥ i` such that `0..=e` is a union of tail orbits.
    fn closed_end(self, i: usize) -> usize {
        match self {
            Tail::Identity => i,
            Tail::A => i | 1,
            Tail::B => i + i % 2,
        }
    }
}

/// A permutation of the naturals equal to its tail outside finitely many points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FinSuppPerm {
    /// Points where the permutation differs from its tail.
    pub moved: BTreeMap<usize, usize>,
    pub tail: Tail,
}

impl FinSuppPerm {
    pub fn identity() -> Self {
        FinSuppPerm {
            moved: BTreeMap::new(),
            tail: Tail::Identity,
        }
    }

    pub fn a() -> Self {
        FinSuppPerm {
            moved: BTreeMap::new(),
            tail: Tail::A,
        }
    }

    pub fn b() -> Self {
        FinSuppPerm {
            moved: BTreeMap::new(),
            tail: Tail::B,
        }
    }

    /// Build from explicit values, dropping entries that agree with the tail.
    pub fn new(values: impl IntoIterator<Item = (usize, usize)>, tail: Tail) -> Result<Self> {
        let moved: BTreeMap<usize, usize> = values.into_iter().filter(|&(i, v)| tail.eval(i) != v).collect();
        let p = FinSuppPerm { moved, tail };
        if !p.is_bijective() {
            return Err(Error::rejected("explicit values do not give a permutation"));
        }
        Ok(p)
    }

    /// The transposition `(i j)`.
    pub fn transposition(i: usize, j: usize) -> Self {
        FinSuppPerm::new([(i, j), (j, i)], Tail::Identity).expect("transposition")
    }

    pub fn eval(&self, i: usize) -> usize {
        self.moved.get(&i).copied().unwrap_or_else(|| self.tail.eval(i))
    }

    /// Last point of a prefix `0..=e` that contains the explicit part and is mapped onto itself.
    fn window_end(&self) -> usize {
        let top = self.moved.iter().map(|(&i, &v)| i.max(v)).max().unwrap_or(0);
        self.tail.closed_end(top)
    }

    fn is_bijective(&self) -> bool {
        let e = self.window_end();
        let mut hit = vec![false; e + 1];
        for i in 0..=e {
            let v = self.eval(i);
            if v > e || hit[v] {
                return false;
            }
            hit[v] = true;
        }
        true
    }

    /// `(self ∘ other)(i) = self(other(i))`. Fails when the tails do not
    /// compose to one of the three tail kinds.
    pub fn compose(&self, other: &FinSuppPerm) -> Result<FinSuppPerm> {
        let tail = match (self.tail, other.tail) {
            (t, Tail::Identity) | (Tail::Identity, t) => t,
            (s, t) if s == t => Tail::Identity,
            _ => {
                return Err(Error::rejected(
                    "the product of the a-tail and the b-tail has no finite-support normal form",
                ))
            }
        };
        let candidates = other
            .moved
            .keys()
            .copied()
            .chain(self.moved.keys().map(|&k| other.tail.eval(k)));
        FinSuppPerm::new(
            candidates.map(|i| (i, self.eval(other.eval(i)))).collect::<Vec<_>>(),
            tail,
        )
    }

    pub fn inverse(&self) -> FinSuppPerm {
        let e = self.window_end();
        FinSuppPerm::new((0..=e).map(|i| (self.eval(i), i)).collect::<Vec<_>>(), self.tail).expect("inverse")
    }

    /// Exact order if it is at most `cap`.
    pub fn order(&self, cap: u64) -> Order {
        let e = self.window_end();
        let mut seen = vec![false; e + 1];
        let mut order: u64 = if self.tail == Tail::Identity { 1 } else { 2 };
        for i in 0..=e {
            if seen[i] {
                continue;
            }
            let mut len = 0u64;
            let mut j = i;
            while !seen[j] {
                seen[j] = true;
                j = self.eval(j);
                len += 1;
            }
            order = match lcm(order, len) {
                Some(o) if o <= cap => o,
                _ => return Order::ExceedsCap,
            };
        }
        if order > cap {
            return Order::ExceedsCap;
        }
        Order::Finite(order)
    }
}

fn lcm(a: u64, b: u64) -> Option<u64> {
    let (mut x, mut y) = (a, b);
    while y != 0 {
        (x, y) = (y, x % y);
    }
    (a / x).checked_mul(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Finite(u64),
    ExceedsCap,
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(n) => write!(f, "{}", n),
            Order::ExceedsCap => write!(f, "exceeds cap"),
        }
    }
}

/// `x ↦ (b∘a) ∘ x ∘ (b∘a)⁻¹ = b ∘ a ∘ x ∘ a ∘ b`.
pub fn conjugate_by_ba(x: &FinSuppPerm) -> Result<FinSuppPerm> {
    let (a, b) = (FinSuppPerm::a(), FinSuppPerm::b());
    b.compose(&a.compose(x)?.compose(&a)?.compose(&b)?)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleStats {
    pub samples: usize,
    #[serde(rename = "maxOrder")]
    pub max_order: u64,
    /// Samples whose order exceeded the cap.
    pub unbounded: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupReport {
    #[serde(rename = "kMax")]
    pub k_max: usize,
    #[serde(rename = "mMax")]
    pub m_max: usize,
    /// Values of `k` where the conjugation identity fails.
    #[serde(rename = "conjugationFailures")]
    pub conjugation_failures: Vec<usize>,
    /// Values of `m` where `(b∘a)^m(0) ≠ 2m`.
    #[serde(rename = "orbitFailures")]
    pub orbit_failures: Vec<usize>,
    #[serde(rename = "orbitEnd")]
    pub orbit_end: usize,
    #[serde(rename = "sampleA")]
    pub sample_a: SampleStats,
    #[serde(rename = "sampleB")]
    pub sample_b: SampleStats,
    #[serde(rename = "orderCap")]
    pub order_cap: u64,
}

impl GroupReport {
    pub fn passed(&self) -> bool {
        self.conjugation_failures.is_empty()
            && self.orbit_failures.is_empty()
            && self.sample_a.unbounded == 0
            && self.sample_b.unbounded == 0
    }
}

pub const ORDER_CAP: u64 = 1 << 40;

fn random_fin_supp(rng: &mut ChaCha8Rng, window: usize) -> FinSuppPerm {
    let mut values: Vec<usize> = (0..window).collect();
    for i in (1..window).rev() {
        values.swap(i, rng.gen_range(0..=i));
    }
    FinSuppPerm::new(values.into_iter().enumerate().collect::<Vec<_>>(), Tail::Identity).expect("shuffle")
}

/// Random words in a few generators of `G[t]`, each a random finite-support
/// permutation, half of them composed with the tail involution.
fn sample_group(rng: &mut ChaCha8Rng, tail: Tail, samples: usize) -> SampleStats {
    let involution = FinSuppPerm {
        moved: BTreeMap::new(),
        tail,
    };
    let gens: Vec<FinSuppPerm> = (0..4)
        .map(|i| {
            let f = random_fin_supp(rng, 8);
            if i % 2 == 0 {
                f.compose(&involution).expect("same tail")
            } else {
                f
            }
        })
        .collect();
    let mut stats = SampleStats {
        samples,
        max_order: 0,
        unbounded: 0,
    };
    for _ in 0..samples {
        let len = rng.gen_range(1..=8);
        let mut x = FinSuppPerm::identity();
        for _ in 0..len {
            x = x
                .compose(&gens[rng.gen_range(0..gens.len())])
                .expect("tails stay in one group");
        }
        match x.order(ORDER_CAP) {
            Order::Finite(o) => stats.max_order = stats.max_order.max(o),
            Order::ExceedsCap => stats.unbounded += 1,
        }
    }
    stats
}

/// Check the conjugation identity for `k < k_max`, the orbit `(b∘a)^m(0) = 2m`
/// for `m ≤ m_max`, and sample 500 elements of each of `G[a]`, `G[b]`.
pub fn group_counterexample_verify(k_max: usize, m_max: usize, seed: u64) -> Result<GroupReport> {
    group_counterexample_verify_with(k_max, m_max, seed, 500)
}

pub fn group_counterexample_verify_with(k_max: usize, m_max: usize, seed: u64, samples: usize) -> Result<GroupReport> {
    if k_max == 0 || m_max == 0 {
        return Err(Error::rejected("kMax and mMax must be at least 1"));
    }
    let mut conjugation_failures = Vec::new();
    for k in 0..k_max {
        let lhs = conjugate_by_ba(&FinSuppPerm::transposition(2 * k, 2 * k + 2))?;
        if lhs != FinSuppPerm::transposition(2 * k + 2, 2 * k + 4) {
            conjugation_failures.push(k);
        }
    }
    let (a, b) = (FinSuppPerm::a(), FinSuppPerm::b());
    let mut orbit_failures = Vec::new();
    let mut x = 0;
    for m in 1..=m_max {
        x = b.eval(a.eval(x));
        if x != 2 * m {
            orbit_failures.push(m);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample_a = sample_group(&mut rng, Tail::A, samples);
    let sample_b = sample_group(&mut rng, Tail::B, samples);
    Ok(GroupReport {
        k_max,
        m_max,
        conjugation_failures,
        orbit_failures,
        orbit_end: x,
        sample_a,
        sample_b,
        order_cap: ORDER_CAP,
    })
}

/// `3^v` where `v` is the position of the least differing binary digit.
pub fn base_distance(i: usize, j: usize) -> Color {
    3u64.pow((i ^ j).trailing_zeros())
}

/// Base space plus the two extensions of a one-point amalgamation problem.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Construction {
    pub class: ClassId,
    pub base: FinStructure,
    #[serde(rename = "extA")]
    pub ext_a: OnePointExtension,
    #[serde(rename = "extB")]
    pub ext_b: OnePointExtension,
}

impl Construction {
    fn validated(
        class: ClassId,
        base: FinStructure,
        ext_a: OnePointExtension,
        ext_b: OnePointExtension,
    ) -> Result<Self> {
        let spec = ClassSpec::new(class);
        for (what, s) in [
            ("base", base.clone()),
            ("extA", ext_a.realize()),
            ("extB", ext_b.realize()),
        ] {
            if let Some(v) = spec.violation(&s)? {
                return Err(Error::rejected(format!(
                    "construction bug: {} is not in {}: {:?}",
                    what, class, v
                )));
            }
        }
        Ok(Construction {
            class,
            base,
            ext_a,
            ext_b,
        })
    }

    /// Run the amalgamation base check over the pair with the given budget.
    pub fn base_check(&self, budget: &ColorBudget) -> Result<PairVerdict> {
        let pair = [(self.ext_a.clone(), self.ext_b.clone())];
        Ok(amalgamation_base_check(&self.base, &pair, &ClassSpec::new(self.class), budget)?.remove(0))
    }
}

fn a_distances(n: usize, slack: Color) -> Vec<Color> {
    let mut ra: Vec<Color> = Vec::with_capacity(n);
    for m in 0..n {
        let d = match (0..m).map(|i| ra[i] + base_distance(i, m)).max() {
            None => 1,
            Some(top) => top + 1 + slack,
        };
        ra.push(d);
    }
    ra
}

/// `ρ(a, m) = 1 + slack + max_{i<m}(ρ(a,i) + ρ(i,m))`, `ρ(a,0) = 1`, `ρ(b,m) = ρ(a,m) + 1`.
pub fn antimetric_counterexample_build(n: usize, slack: Color) -> Result<Construction> {
    if !(2..=20).contains(&n) {
        return Err(Error::rejected(format!("size must lie in 2..=20, got {}", n)));
    }
    let base = FinStructure::labeled(n, base_distance);
    let ra = a_distances(n, slack);
    let rb = ra.iter().map(|d| d + 1).collect();
    let base_arc = Arc::new(base.clone());
    Construction::validated(
        ClassId::AntiMetric,
        base,
        OnePointExtension::colored(base_arc.clone(), ra, None)?,
        OnePointExtension::colored(base_arc, rb, None)?,
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AntimetricRow {
    pub k: Color,
    /// Least `m` with `min(ρ(a,m), ρ(b,m)) > k`.
    #[serde(rename = "blockingIndex")]
    pub blocking_index: usize,
    /// Least `m` where the triangle `{a, b, m}` is not anti-metric.
    #[serde(rename = "firstViolation")]
    pub first_violation: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AntimetricWitness {
    pub construction: Construction,
    #[serde(rename = "glueBlock")]
    pub glue_block: Block,
    pub table: Vec<AntimetricRow>,
}

pub fn antimetric_failure_witness(n: usize, k_max: Color, slack: Color) -> Result<AntimetricWitness> {
    let construction = antimetric_counterexample_build(n, slack)?;
    let ra = construction.ext_a.colors().unwrap().to_vec();
    let rb = construction.ext_b.colors().unwrap().to_vec();
    if ra[n - 1] <= k_max {
        let longer = a_distances(20, slack);
        let hint = match longer.iter().position(|&d| d > k_max) {
            Some(m) => format!("need n ≥ {}", m + 1),
            None => "no n ≤ 20 suffices".to_string(),
        };
        return Err(Error::budget(format!(
            "increase n: ρ(a, {}) = {} does not exceed {}; {}",
            n - 1,
            ra[n - 1],
            k_max,
            hint
        )));
    }
    let glue_block = glue_block(&construction.ext_a, &construction.ext_b).expect("distances differ at 0");
    let spec = ClassSpec::new(ClassId::AntiMetric);
    let table = (1..=k_max)
        .map(|k| AntimetricRow {
            k,
            blocking_index: (0..n).find(|&m| ra[m].min(rb[m]) > k).unwrap(),
            first_violation: (0..n).find(|&m| !spec.triangle_ok(k, ra[m], rb[m])).unwrap(),
        })
        .collect();
    Ok(AntimetricWitness {
        construction,
        glue_block,
        table,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColorRow {
    pub color: Color,
    /// The base point completing a monochromatic triangle with `a`, `b`.
    pub z: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColorWitness {
    pub construction: Construction,
    #[serde(rename = "glueBlock")]
    pub glue_block: Block,
    pub table: Vec<ColorRow>,
}

impl ColorWitness {
    /// The table in the form produced by the amalgamation base check.
    pub fn as_blocks(&self) -> Vec<(Color, Block)> {
        self.table
            .iter()
            .map(|r| (r.color, Block::MonochromaticTriangle { z: r.z, color: r.color }))
            .collect()
    }
}

/// Points `0..n` and `∞ = n`; `c(0,∞) = 1`, `c(1,∞) = 0`, other base pairs
/// get distinct colors from `n + 2`; `c(a,k) = c(b,k) = k`, `c(a,∞) = 0`, `c(b,∞) = 1`.
pub fn labeled_counterexample_build(n: usize) -> Result<Construction> {
    if !(3..=50).contains(&n) {
        return Err(Error::rejected(format!("size must lie in 3..=50, got {}", n)));
    }
    let inf = n;
    let base = FinStructure::labeled(n + 1, |i, j| match (i, j) {
        (0, j) if j == inf => 1,
        (1, j) if j == inf => 0,
        _ => (n + 2 + pair_index(i, j)) as Color,
    });
    let mut ca: Vec<Color> = (0..n as Color).collect();
    let mut cb = ca.clone();
    ca.push(0);
    cb.push(1);
    let base_arc = Arc::new(base.clone());
    Construction::validated(
        ClassId::TfLabeled,
        base,
        OnePointExtension::colored(base_arc.clone(), ca, None)?,
        OnePointExtension::colored(base_arc, cb, None)?,
    )
}

pub fn labeled_failure_witness(n: usize) -> Result<ColorWitness> {
    let construction = labeled_counterexample_build(n)?;
    color_witness(construction, n)
}

/// `n` points in natural order with distinct colors from `n + 1`; both
/// extensions color point `i` with `i`; `a` below point 0, `b` right above it.
pub fn ordered_counterexample_build(n: usize) -> Result<Construction> {
    if !(3..=50).contains(&n) {
        return Err(Error::rejected(format!("size must lie in 3..=50, got {}", n)));
    }
    let base = FinStructure::ordered_labeled(n, |i, j| (n + 1 + pair_index(i, j)) as Color);
    let colors: Vec<Color> = (0..n as Color).collect();
    let base_arc = Arc::new(base.clone());
    Construction::validated(
        ClassId::TfLabeledOrdered,
        base,
        OnePointExtension::colored(base_arc.clone(), colors.clone(), Some(0))?,
        OnePointExtension::colored(base_arc, colors, Some(1))?,
    )
}

pub fn ordered_failure_witness(n: usize) -> Result<ColorWitness> {
    let construction = ordered_counterexample_build(n)?;
    color_witness(construction, n)
}

fn color_witness(construction: Construction, n: usize) -> Result<ColorWitness> {
    let glue_block = glue_block(&construction.ext_a, &construction.ext_b)
        .ok_or_else(|| Error::rejected("construction bug: the extensions can be glued"))?;
    let ca = construction.ext_a.colors().unwrap();
    let cb = construction.ext_b.colors().unwrap();
    let mut table = Vec::with_capacity(n);
    for q in 0..n as Color {
        let z = (0..ca.len())
            .find(|&z| ca[z] == q && cb[z] == q)
            .ok_or_else(|| Error::rejected(format!("construction bug: color {} is not blocked", q)))?;
        table.push(ColorRow { color: q, z });
    }
    Ok(ColorWitness {
        construction,
        glue_block,
        table,
    })
}
