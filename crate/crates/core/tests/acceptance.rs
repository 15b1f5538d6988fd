//! Acceptance suite: one line per criterion with its verdict and runtime.
//! Runs without the libtest harness; exits non-zero if any criterion fails.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fraisse_core::amalgamation::{
    ap_check, branch_is_coherent, koenig_tree_amalgamation, members_up_to_iso, KoenigOptions, KoenigOutcome,
};
use fraisse_core::cli::run;
use fraisse_core::counterexamples::{
    antimetric_failure_witness, base_distance, group_counterexample_verify, labeled_failure_witness,
    ordered_failure_witness, FinSuppPerm, Order, Tail,
};
use fraisse_core::extensible::{
    build_g_extensible_chain, e_of_x, realization_counts, ChainOptions, EOptions, ExtSelector, LiftPalette, QSchedule,
};
use fraisse_core::fraisse::build_limit_approx;
use fraisse_core::morphisms::{automorphisms, homogeneity_check, Embedding};
use fraisse_core::structures::{ClassId, ClassSpec, ColorBudget, FinStructure};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn criterion_1() -> Outcome {
    let (a, b) = (FinSuppPerm::a(), FinSuppPerm::b());
    for k in 0..64 {
        // pointwise: i ↦ b(a(t(a(b(i))))) on a window past the support
        let t = FinSuppPerm::transposition(2 * k, 2 * k + 2);
        for i in 0..2 * k + 10 {
            let got = b.eval(a.eval(t.eval(a.eval(b.eval(i)))));
            let want = match i {
                x if x == 2 * k + 2 => 2 * k + 4,
                x if x == 2 * k + 4 => 2 * k + 2,
                x => x,
            };
            ensure(got == want, || format!("conjugation differs at k = {}, i = {}", k, i))?;
        }
    }
    let mut x = 0;
    for m in 1..=1000 {
        x = b.eval(a.eval(x));
        ensure(x == 2 * m, || format!("(b∘a)^{}(0) = {}", m, x))?;
    }
    let report = group_counterexample_verify(64, 1000, 1).map_err(|e| e.to_string())?;
    ensure(report.passed(), || format!("library report failed: {:?}", report))?;
    // independent sampling: the order must bring every point of a window back
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut max_order = 0;
    for tail in [Tail::A, Tail::B] {
        let inv = FinSuppPerm {
            moved: Default::default(),
            tail,
        };
        for _ in 0..500 {
            let mut vals: Vec<usize> = (0..10).collect();
            vals.shuffle(&mut rng);
            let f = FinSuppPerm::new(vals.into_iter().enumerate(), Tail::Identity).unwrap();
            let x = if rng.gen_bool(0.5) { f.compose(&inv).unwrap() } else { f };
            let ord = match x.order(1 << 30) {
                Order::Finite(o) => o,
                Order::ExceedsCap => return Err("sampled element of unbounded order".into()),
            };
            max_order = max_order.max(ord);
            for i in 0..40 {
                let mut y = i;
                for _ in 0..ord {
                    y = x.eval(y);
                }
                ensure(y == i, || format!("x^{} moves {}", ord, i))?;
            }
        }
    }
    Ok(format!(
        "64 conjugations, orbit to 2000, 1000 library + 1000 independent samples (max order {})",
        max_order
    ))
}

fn criterion_2() -> Outcome {
    let w = antimetric_failure_witness(12, 10, 0).map_err(|e| e.to_string())?;
    let c = &w.construction;
    ensure(anti_metric(&c.base), || "base is not anti-metric".into())?;
    ensure(anti_metric(&c.ext_a.realize()), || "extA is not anti-metric".into())?;
    ensure(anti_metric(&c.ext_b.realize()), || "extB is not anti-metric".into())?;
    for i in 0..12 {
        for j in i + 1..12 {
            ensure(c.base.color(i, j) == 3u64.pow((i ^ j).trailing_zeros()), || {
                "base distance".into()
            })?;
            ensure(base_distance(i, j) == c.base.color(i, j), || "base distance".into())?;
        }
    }
    let ra = c.ext_a.colors().unwrap();
    let rb = c.ext_b.colors().unwrap();
    ensure(ra[0] != rb[0], || "gluing not blocked".into())?;
    ensure(w.table.len() == 10, || format!("{} rows", w.table.len()))?;
    for (row, k) in w.table.iter().zip(1..=10u64) {
        ensure(row.k == k, || "row order".into())?;
        let m = row.blocking_index;
        ensure(ra[m].min(rb[m]) > k, || {
            format!("k = {}: index {} does not exceed", k, m)
        })?;
        ensure(!anti_triangle(k, ra[m], rb[m]), || {
            format!("k = {}: triangle at {} is anti-metric", k, m)
        })?;
        ensure((0..m).all(|i| ra[i].min(rb[i]) <= k), || {
            format!("k = {}: index not least", k)
        })?;
    }
    Ok("all k in 1..=10 blocked, glue blocked, three validations exhaustive".into())
}

fn color_criterion(ordered: bool) -> Outcome {
    let w = if ordered {
        ordered_failure_witness(10)
    } else {
        labeled_failure_witness(10)
    }
    .map_err(|e| e.to_string())?;
    let c = &w.construction;
    for s in [c.base.clone(), c.ext_a.realize(), c.ext_b.realize()] {
        ensure(mono_free(&s), || "monochromatic triangle in the construction".into())?;
    }
    let n = c.base.len();
    let (ca, cb) = (c.ext_a.colors().unwrap(), c.ext_b.colors().unwrap());
    ensure(w.table.len() == 10, || format!("{} rows", w.table.len()))?;
    for (row, q) in w.table.iter().zip(0..10u64) {
        ensure(row.color == q && ca[row.z] == q && cb[row.z] == q, || {
            format!("row {} not a triangle", q)
        })?;
    }
    if ordered {
        ensure(!c.ext_a.is_below(0) && c.ext_b.is_below(0), || {
            "order conflict at 0 missing".into()
        })?;
        ensure(
            w.glue_block == fraisse_core::amalgamation::Block::OrderConflict { point: 0 },
            || format!("{:?}", w.glue_block),
        )?;
    } else {
        ensure(ca[n - 1] == 0 && cb[n - 1] == 1, || "∞ colors".into())?;
        ensure(
            w.glue_block == fraisse_core::amalgamation::Block::ColorDisagreement { point: n - 1 },
            || format!("{:?}", w.glue_block),
        )?;
    }
    let verdict = c.base_check(&ColorBudget::range(10)).map_err(|e| e.to_string())?;
    ensure(verdict.is_blocked(), || "base check found an amalgam".into())?;
    ensure(verdict.glue_block.as_ref() == Some(&w.glue_block), || {
        "glue block differs".into()
    })?;
    ensure(verdict.color_table() == w.as_blocks(), || "tables differ".into())?;
    Ok("10 colors blocked, base-check table identical".into())
}

fn random_graph(rng: &mut ChaCha8Rng, n: usize, triangle_free: bool) -> FinStructure {
    loop {
        let edges: Vec<(usize, usize)> = (0..n)
            .flat_map(|j| (0..j).map(move |i| (i, j)))
            .filter(|_| rng.gen_bool(0.4))
            .collect();
        let g = FinStructure::graph(n, &edges).unwrap();
        if !triangle_free || ClassSpec::new(ClassId::KnFree(3)).is_member(&g) {
            return g;
        }
    }
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut nodes = 0;
    for i in 0..100 {
        let class = ClassSpec::new(if i % 2 == 0 {
            ClassId::Graphs
        } else {
            ClassId::KnFree(3)
        });
        let n = rng.gen_range(1..=4);
        let z = random_graph(&mut rng, n, i % 2 == 1);
        let chain: Vec<FinStructure> = (1..=n)
            .map(|k| z.induced_substructure(&(0..k).collect::<Vec<_>>()).unwrap())
            .collect();
        let exts = class.extensions(&Arc::new(z.clone()), &ColorBudget::default()).unwrap();
        let ea = exts.choose(&mut rng).unwrap().clone();
        let eb = exts.choose(&mut rng).unwrap().clone();
        let outcome =
            koenig_tree_amalgamation(&chain, &ea, &eb, &class, &KoenigOptions::default()).map_err(|e| e.to_string())?;
        let branch = match outcome {
            KoenigOutcome::Branch(b) => b,
            KoenigOutcome::NoBranch { level } => return Err(format!("instance {}: no branch at {}", i, level)),
        };
        nodes += branch.nodes_visited;
        ensure(branch.levels.len() == n && branch_is_coherent(&branch), || {
            format!("instance {}", i)
        })?;
        for (k, level) in branch.levels.iter().enumerate() {
            ensure(level.verify(&class), || format!("instance {}: level {} invalid", i, k))?;
            if k + 1 < n {
                // restriction by hand: prefix of the base plus a (and b)
                let upper = &branch.levels[k + 1];
                let big = upper.base.len();
                let mut keep: Vec<usize> = (0..=k).collect();
                keep.push(big);
                if !upper.is_glued() {
                    keep.push(big + 1);
                }
                let restricted = upper.result.induced_substructure(&keep).unwrap();
                ensure(restricted == level.result, || {
                    format!("instance {}: level {} incoherent", i, k)
                })?;
            }
        }
    }
    Ok(format!("100 instances, coherent branches, {} nodes visited", nodes))
}

fn criterion_6() -> Outcome {
    let class = ClassSpec::new(ClassId::TfLabeledOrdered);
    let q = ColorBudget::range(2);
    let levels = members_up_to_iso(&class, 3, &ColorBudget::range(5)).map_err(|e| e.to_string())?;
    let mut bases = 0;
    let mut points = 0;
    for x in levels.iter().flatten() {
        bases += 1;
        let exts = class.extensions(&Arc::new(x.clone()), &q).map_err(|e| e.to_string())?;
        let g = automorphisms(x).map_err(|e| e.to_string())?;
        let out = e_of_x(x, &q, &exts, &g, &EOptions::default()).map_err(|e| e.to_string())?;
        let y = &out.structure;
        points += y.len();
        ensure(mono_free(y), || format!("monochromatic triangle over {:?}", x))?;
        ensure(class.is_member(y), || "output not a member".into())?;
        ensure(y.len() == x.len() + exts.len(), || "one new point per extension".into())?;
        ensure(realization_counts(y, x.len(), &exts).iter().all(|&c| c == 1), || {
            "an extension is not uniquely realized".into()
        })?;
        // uniqueness again, straight from colors and order
        for e in &exts {
            let c = e.colors().unwrap();
            let hits = (x.len()..y.len())
                .filter(|&p| (0..x.len()).all(|z| y.color(z, p) == c[z] && (y.less(z, p) == e.is_below(z))))
                .count();
            ensure(hits == 1, || "direct realization count".into())?;
        }
        ensure(out.operator.verify(x, y), || "operator square".into())?;
        for entry in &out.operator.table {
            let f = &entry.extended.map;
            ensure(f[..x.len()] == entry.h.map[..], || "operator restriction".into())?;
            for u in 0..y.len() {
                for v in 0..y.len() {
                    ensure(y.less(u, v) == y.less(f[u], f[v]), || "order invariance".into())?;
                    if u != v {
                        ensure(y.color(u, v) == y.color(f[u], f[v]), || "color invariance".into())?;
                    }
                }
            }
        }
    }
    Ok(format!("{} bases, {} output points", bases, points))
}

fn criterion_7() -> Outcome {
    let u0 = FinStructure::ordered_labeled(2, |_, _| 0);
    let q0 = ColorBudget::range(2);
    let opts = ChainOptions {
        stages: 3,
        schedule: QSchedule::new(vec![q0.clone()], 1).map_err(|e| e.to_string())?,
        selector: ExtSelector {
            max_subset: 1,
            palette: LiftPalette::Fixed(q0),
        },
    };
    let g = vec![Embedding::identity(2)];
    let chain = build_g_extensible_chain(&u0, &g, &opts).map_err(|e| e.to_string())?;
    let sizes: Vec<usize> = chain.stages.iter().map(|s| s.len()).collect();
    ensure(chain.len() == 4, || format!("{} stages", chain.len()))?;
    ensure(sizes.windows(2).all(|w| w[0] < w[1]), || format!("sizes {:?}", sizes))?;
    for s in &chain.stages {
        ensure(mono_free(s), || "stage with a monochromatic triangle".into())?;
    }
    for w in chain.stages.windows(2) {
        let prefix: Vec<usize> = (0..w[0].len()).collect();
        ensure(w[1].induced_substructure(&prefix).unwrap() == w[0], || {
            "stage is not a prefix".into()
        })?;
    }
    let m = chain.len();
    for alpha in 0..m {
        for beta in alpha..m {
            for gamma in beta..m {
                for i in 0..chain.families[alpha].len() {
                    let ab = chain.transferred(alpha, beta, i).ok_or("missing transfer")?;
                    let j = chain.families[beta]
                        .iter()
                        .position(|h| h == ab)
                        .ok_or("transfer image")?;
                    let bg_ab = chain.transferred(beta, gamma, j).ok_or("missing transfer")?;
                    let ag = chain.transferred(alpha, gamma, i).ok_or("missing transfer")?;
                    ensure(bg_ab == ag, || {
                        format!("incoherent at ({}, {}, {})", alpha, beta, gamma)
                    })?;
                    let k = chain.stages[alpha].len();
                    ensure(ag.map[..k] == chain.families[alpha][i].map[..], || {
                        "transfer does not extend".into()
                    })?;
                }
            }
        }
    }
    let e = Embedding::inclusion(2);
    for (i, h) in chain.families[0].iter().enumerate() {
        let s = chain.transferred(0, m - 1, i).ok_or("missing transfer")?;
        ensure(s.compose(&e) == e.compose(h), || "colimit identity".into())?;
    }
    ensure(chain.colimit_identity_holds() && chain.check().is_ok(), || {
        "library check".into()
    })?;
    Ok(format!("stage sizes {:?}", sizes))
}

fn criterion_8() -> Outcome {
    let mut sizes = Vec::new();
    for id in [ClassId::Graphs, ClassId::KnFree(3)] {
        let class = ClassSpec::new(id);
        let seed = FinStructure::graph(1, &[]).unwrap();
        let approx = build_limit_approx(&class, &seed, 3, 2, &ColorBudget::range(3)).map_err(|e| e.to_string())?;
        ensure(approx.certificates.len() == 3, || "missing certificate".into())?;
        for (i, cert) in approx.certificates.iter().enumerate() {
            ensure(cert.verify(&approx.stages[i + 1]), || {
                format!("{}: certificate {} invalid", id, i)
            })?;
            // every extension of every ≤2-subset realized outside the subset, checked directly
            let u = &approx.stages[i];
            let v = &approx.stages[i + 1];
            for a in 0..=u.len() {
                for b in a..=u.len() {
                    let subset: Vec<usize> = [a, b]
                        .into_iter()
                        .filter(|&x| x < u.len())
                        .collect::<std::collections::BTreeSet<_>>()
                        .into_iter()
                        .collect();
                    let base = Arc::new(u.induced_substructure(&subset).unwrap());
                    for ext in class.extensions(&base, &ColorBudget::range(3)).unwrap() {
                        let found = (0..v.len()).filter(|p| !subset.contains(p)).any(|p| {
                            subset.iter().enumerate().all(|(t, &z)| {
                                let want = ext.realize().holds(0, &[t, subset.len()]);
                                edge(v, z, p) == want
                            })
                        });
                        ensure(found, || {
                            format!("{}: stage {} misses an extension of {:?}", id, i, subset)
                        })?;
                    }
                }
            }
        }
        if id == ClassId::KnFree(3) {
            for s in &approx.stages {
                let n = s.len();
                let tri = (0..n)
                    .any(|a| (a + 1..n).any(|b| edge(s, a, b) && (b + 1..n).any(|c| edge(s, a, c) && edge(s, b, c))));
                ensure(!tri, || "triangle in a knFree(3) stage".into())?;
            }
        }
        sizes.push(format!(
            "{}: {:?}",
            id,
            approx.stages.iter().map(|s| s.len()).collect::<Vec<_>>()
        ));
    }
    Ok(sizes.join("; "))
}

fn criterion_9() -> Outcome {
    let levels =
        members_up_to_iso(&ClassSpec::new(ClassId::Graphs), 5, &ColorBudget::default()).map_err(|e| e.to_string())?;
    let mut count = 0;
    let mut homogeneous = 0;
    for s in levels.iter().flatten() {
        count += 1;
        let lib = homogeneity_check(s, s.len())
            .map_err(|e| e.to_string())?
            .is_certificate();
        let oracle = brute_graph_homogeneous(s, s.len());
        ensure(lib == oracle, || format!("disagreement on {:?}", s))?;
        homogeneous += oracle as usize;
    }
    ensure(count == 1 + 1 + 2 + 4 + 11 + 34, || format!("{} graphs", count))?;
    Ok(format!("{} graphs, {} homogeneous, full agreement", count, homogeneous))
}

fn criterion_10() -> Outcome {
    let mut parts = Vec::new();
    for id in [
        ClassId::Graphs,
        ClassId::KnFree(3),
        ClassId::LinearOrders,
        ClassId::AntiMetric,
        ClassId::TfLabeled,
    ] {
        let r = ap_check(&ClassSpec::new(id), 3, &ColorBudget::range(16)).map_err(|e| e.to_string())?;
        ensure(r.passed(), || format!("{} failed: {:?}", id, r.failure))?;
        parts.push(format!("{} ({} pairs)", id, r.pairs));
    }
    Ok(parts.join(", "))
}

fn cli_suite() -> Vec<Vec<String>> {
    let dir = scratch("accept");
    let c5 = write_structure(&dir, "c5.json", &FinStructure::cycle(5));
    let p3 = write_structure(&dir, "p3.json", &FinStructure::path(3));
    let v1 = FinStructure::graph(1, &[]).unwrap();
    let v1p = write_structure(&dir, "v1.json", &v1);
    let edge2 = write_structure(&dir, "edge.json", &FinStructure::graph(2, &[(0, 1)]).unwrap());
    let iso2 = write_structure(&dir, "iso2.json", &FinStructure::graph(2, &[]).unwrap());
    let p2 = write_structure(&dir, "p3edge.json", &FinStructure::graph(3, &[(0, 1)]).unwrap());
    let swap = write_text(&dir, "swap.json", "[[1,0]]");
    let chain = write_list(
        &dir,
        "chain.json",
        &[v1.clone(), FinStructure::graph(2, &[(0, 1)]).unwrap()],
    );
    let ea = write_structure(&dir, "ea.json", &FinStructure::graph(3, &[(0, 1), (1, 2)]).unwrap());
    let eb = write_structure(&dir, "eb.json", &FinStructure::graph(3, &[(0, 1), (0, 2)]).unwrap());
    let lab = labeled_failure_witness(4).unwrap().construction;
    let lbase = write_structure(&dir, "lbase.json", &lab.base);
    let la = write_structure(&dir, "la.json", &lab.ext_a.realize());
    let lb = write_structure(&dir, "lb.json", &lab.ext_b.realize());
    let x = write_structure(&dir, "x.json", &FinStructure::ordered_labeled(2, |_, _| 0));
    let s = |v: &[&str]| -> Vec<String> { v.iter().map(|t| t.to_string()).collect() };
    vec![
        s(&["catalog"]),
        s(&["validate", "--class", "graphs", &c5]),
        s(&["embed", &p3, &c5, "--all"]),
        s(&["auts", &c5]),
        s(&["age", &c5, "--k", "3"]),
        s(&["homogeneity", &c5, "--k", "2"]),
        s(&[
            "amalgamate",
            "--class",
            "graphs",
            "--base",
            &edge2,
            "--ext-a",
            &ea,
            "--ext-b",
            &eb,
            "--budget",
            "4",
        ]),
        s(&["ap-check", "--class", "graphs", "--max-size", "3"]),
        s(&[
            "koenig", "--class", "graphs", "--chain", &chain, "--ext-a", &ea, "--ext-b", &eb,
        ]),
        s(&[
            "base-check",
            "--class",
            "tf-labeled",
            "--base",
            &lbase,
            "--ext-a",
            &la,
            "--ext-b",
            &lb,
            "--budget",
            "4",
        ]),
        s(&[
            "build-limit",
            "--class",
            "graphs",
            "--steps",
            "2",
            "--level",
            "2",
            "--seed",
            &v1p,
        ]),
        s(&["injectivity", "--class", "graphs", &v1p, &p3, "--level", "1"]),
        s(&[
            "iterate",
            "--class",
            "graphs",
            "--u",
            &v1p,
            "--u-prime",
            &edge2,
            "--map",
            "0",
            "--copies",
            "3",
        ]),
        s(&[
            "extensible",
            "--source",
            &iso2,
            "--target",
            &p2,
            "--map",
            "0,2",
            "--group",
            &swap,
        ]),
        s(&["extend", "--input", &x, "--q", "0,1"]),
        s(&["chain", "--input", &x, "--stages", "2", "--q", "0,1", "--fixed-palette"]),
        s(&["closing-off", "--input", &c5, "--set", "0", "--k", "2"]),
        s(&["counterexample", "group", "--size", "16", "--budget", "100"]),
        s(&["counterexample", "antimetric", "--size", "12", "--budget", "10"]),
        s(&["counterexample", "labeled", "--size", "10", "--budget", "10"]),
        s(&["counterexample", "ordered", "--size", "10", "--budget", "10"]),
    ]
}

fn criterion_11() -> Outcome {
    let suite = cli_suite();
    for args in &suite {
        let mut full = vec![
            "fraisse".to_string(),
            "--format".into(),
            "json".into(),
            "--rng-seed".into(),
            "7".into(),
        ];
        full.extend(args.iter().cloned());
        let first = run(full.clone());
        let second = run(full);
        ensure(first.code <= 1, || {
            format!("{:?} exited {}: {}", args, first.code, first.stderr)
        })?;
        ensure(!first.stdout.is_empty(), || format!("{:?} printed nothing", args))?;
        ensure(first == second, || format!("{:?} differs between runs", args))?;
        serde_json::from_str::<serde_json::Value>(&first.stdout).map_err(|e| format!("{:?}: {}", args, e))?;
    }
    Ok(format!("{} commands byte-identical", suite.len()))
}

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("group conjugation, orbit and local finiteness", 5, criterion_1),
        ("anti-metric failure at n = 12", 5, criterion_2),
        ("triangle-free labeled failure at n = 10", 5, || color_criterion(false)),
        ("ordered labeled failure at n = 10", 5, || color_criterion(true)),
        ("König branches for 100 random instances", 30, criterion_5),
        ("E(X) for ordered bases up to 3 points", 60, criterion_6),
        ("G-extensible chain with N = 3", 60, criterion_7),
        ("Fraïssé approximations certified", 60, criterion_8),
        ("homogeneity oracle agreement, graphs up to 5", 120, criterion_9),
        ("ap_check on five classes, size 3, budget 16", 60, criterion_10),
        ("CLI determinism", 600, criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, limit, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let in_time = elapsed < Duration::from_secs(limit);
        let (verdict, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("too slow; {}", d)),
            (Err(e), _) => ("FAIL", e.clone()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} [{:.2}s / {}s] {}: {}",
            i + 1,
            verdict,
            elapsed.as_secs_f64(),
            limit,
            name,
            detail
        );
    }
    if failed > 0 {
        println!("{} criterion(s) failed", failed);
        std::process::exit(1);
    }
    println!("all 11 criteria passed");
}
