//! Brute-force oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use fraisse_core::structures::{serialize, Color, FinStructure};

/// No three points with all three edges of one color.
pub fn mono_free(s: &FinStructure) -> bool {
    let n = s.len();
    for a in 0..n {
        for b in a + 1..n {
            for c in b + 1..n {
                let (x, y, z) = (s.color(a, b), s.color(a, c), s.color(b, c));
                if x == y && y == z {
                    return false;
                }
            }
        }
    }
    true
}

/// Every triangle has its longest side strictly longer than the other two together.
pub fn anti_triangle(x: Color, y: Color, z: Color) -> bool {
    let mut t = [x, y, z];
    t.sort_unstable();
    t[0] > 0 && t[2] > t[0] + t[1]
}

pub fn anti_metric(s: &FinStructure) -> bool {
    let n = s.len();
    (0..n).all(|a| {
        (a + 1..n).all(|b| {
            s.color(a, b) > 0 && (b + 1..n).all(|c| anti_triangle(s.color(a, b), s.color(a, c), s.color(b, c)))
        })
    })
}

pub fn edge(s: &FinStructure, i: usize, j: usize) -> bool {
    s.holds(0, &[i, j])
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for x in 0..n {
            if !cur.contains(&x) {
                cur.push(x);
                rec(n, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, &mut Vec::new(), &mut out);
    out
}

/// Graph automorphisms by trying every permutation.
pub fn brute_graph_automorphisms(s: &FinStructure) -> Vec<Vec<usize>> {
    let n = s.len();
    permutations(n)
        .into_iter()
        .filter(|p| (0..n).all(|i| (0..n).all(|j| i == j || edge(s, i, j) == edge(s, p[i], p[j]))))
        .collect()
}

/// Every injective partial map with at most `k` points that preserves edges and non-edges.
pub fn brute_graph_partial_isos(s: &FinStructure, k: usize) -> Vec<Vec<(usize, usize)>> {
    let n = s.len();
    let mut out = Vec::new();
    fn rec(s: &FinStructure, k: usize, next: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if !cur.is_empty() {
            out.push(cur.clone());
        }
        if cur.len() == k {
            return;
        }
        for x in next..s.len() {
            for y in 0..s.len() {
                if cur.iter().any(|&(_, v)| v == y) {
                    continue;
                }
                if cur.iter().all(|&(u, v)| edge(s, u, x) == edge(s, v, y)) {
                    cur.push((x, y));
                    rec(s, k, x + 1, cur, out);
                    cur.pop();
                }
            }
        }
    }
    rec(s, k.min(n), 0, &mut Vec::new(), &mut out);
    out
}

/// Homogeneity at level `k` by checking every partial isomorphism against every automorphism.
pub fn brute_graph_homogeneous(s: &FinStructure, k: usize) -> bool {
    let auts = brute_graph_automorphisms(s);
    brute_graph_partial_isos(s, k)
        .iter()
        .all(|p| auts.iter().any(|f| p.iter().all(|&(x, y)| f[x] == y)))
}

/// A scratch directory unique to this process and tag.
pub fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fraisse-{}-{}", tag, std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn write_structure(dir: &std::path::Path, name: &str, s: &FinStructure) -> String {
    let p = dir.join(name);
    std::fs::write(&p, serialize(s)).unwrap();
    p.to_string_lossy().into_owned()
}

pub fn write_list(dir: &std::path::Path, name: &str, list: &[FinStructure]) -> String {
    let docs: Vec<serde_json::Value> = list
        .iter()
        .map(|s| serde_json::from_str(&serialize(s)).unwrap())
        .collect();
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string(&docs).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

pub fn write_text(dir: &std::path::Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}
