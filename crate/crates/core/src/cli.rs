//! Command-line front end. [`run`] parses arguments, dispatches to the
//! library and renders one report; the binary only prints it.
//!
//! Exit codes: 0 success, 1 a mathematical failure or witness was found,
//! 2 usage or input error, 3 a resource or budget bound was hit.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::amalgamation::{
    amalgamate_one_point, amalgamation_base_check, ap_check, koenig_tree_amalgamation, KoenigOptions, KoenigOutcome,
};
use crate::counterexamples::{
    antimetric_failure_witness, group_counterexample_verify, labeled_failure_witness, ordered_failure_witness,
};
use crate::error::{Error, Result};
use crate::extensible::{
    build_g_extensible_chain, closing_off, e_of_x, is_extensible, ChainOptions, EOptions, ExtSelector, Extensibility,
    LiftPalette, QSchedule,
};
use crate::fraisse::{build_limit_approx, injectivity_certificate, iterate_self_embedding, Injectivity};
use crate::morphisms::{age, automorphisms, find_embeddings, homogeneity_check, Embedding, Homogeneity};
use crate::structures::{deserialize, ClassSpec, Color, ColorBudget, FinStructure, OnePointExtension, StructureDoc};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "fraisse", about = "Finite Fraïssé-theory workbench", version)]
pub struct Cli {
    /// Report format.
    #[arg(long, value_enum, default_value_t = Format::Text, global = true)]
    pub format: Format,
    /// Write the report to this file instead of standard output.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = DEFAULT_SEED, global = true)]
    pub rng_seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct ClassArg {
    /// Class id, see `catalog`.
    #[arg(long)]
    pub class: ClassSpec,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Base structure.
    #[arg(long)]
    pub base: PathBuf,
    /// First extension, as the realized structure with the new point last.
    #[arg(long)]
    pub ext_a: PathBuf,
    /// Second extension, same format.
    #[arg(long)]
    pub ext_b: PathBuf,
    /// Colors `0..budget` for candidate edges.
    #[arg(long, default_value_t = 16)]
    pub budget: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List the built-in classes.
    Catalog,
    /// Check membership of a structure in a class.
    Validate {
        #[command(flatten)]
        class: ClassArg,
        input: PathBuf,
    },
    /// Embeddings of one structure into another, lexicographically.
    Embed {
        source: PathBuf,
        target: PathBuf,
        /// Report every embedding instead of the first.
        #[arg(long)]
        all: bool,
    },
    /// All automorphisms.
    Auts { input: PathBuf },
    /// Substructures with at most `k` points, up to isomorphism.
    Age {
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// Extend every partial isomorphism with at most `k` points.
    Homogeneity {
        input: PathBuf,
        #[arg(long)]
        k: usize,
    },
    /// All one-point amalgams of two extensions.
    Amalgamate {
        #[command(flatten)]
        class: ClassArg,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Amalgamation property for all bases up to a size.
    ApCheck {
        #[command(flatten)]
        class: ClassArg,
        #[arg(long, default_value_t = 3)]
        max_size: usize,
        #[arg(long, default_value_t = 16)]
        budget: usize,
    },
    /// Coherent amalgams along a chain of prefixes.
    Koenig {
        #[command(flatten)]
        class: ClassArg,
        /// JSON array of structures, each a prefix of the next.
        #[arg(long)]
        chain: PathBuf,
        /// Extension of the last chain member.
        #[arg(long)]
        ext_a: PathBuf,
        #[arg(long)]
        ext_b: PathBuf,
        #[arg(long, default_value_t = 16)]
        budget: usize,
        /// Also search classes without a finite relational language.
        #[arg(long)]
        allow_infinite_language: bool,
    },
    /// Whether a concrete structure amalgamates a pair of extensions.
    BaseCheck {
        #[command(flatten)]
        class: ClassArg,
        #[command(flatten)]
        pair: PairArgs,
    },
    /// Finite approximation of the Fraïssé limit by Katětov steps.
    BuildLimit {
        #[command(flatten)]
        class: ClassArg,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 3)]
        budget: usize,
        /// Seed structure; empty when omitted.
        #[arg(long)]
        seed: Option<PathBuf>,
    },
    /// Injectivity of an initial segment inside a larger structure.
    Injectivity {
        #[command(flatten)]
        class: ClassArg,
        small: PathBuf,
        large: PathBuf,
        #[arg(long)]
        level: usize,
        #[arg(long, default_value_t = 3)]
        budget: usize,
    },
    /// Iterate a self-embedding by repeated amalgamation.
    Iterate {
        #[command(flatten)]
        class: ClassArg,
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        u_prime: PathBuf,
        /// Images of the points of `u`, comma separated.
        #[arg(long, value_delimiter = ',')]
        map: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        copies: usize,
    },
    /// Whether an embedding extends a family of automorphisms.
    Extensible {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long, value_delimiter = ',')]
        map: Vec<usize>,
        /// JSON array of automorphisms of the source, each a list of images.
        #[arg(long)]
        group: PathBuf,
    },
    /// The E(X) construction for an ordered triangle-free labeled graph.
    Extend {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        q: Vec<Color>,
        /// JSON array of realized extensions; every Q-colored one when omitted.
        #[arg(long)]
        exts: Option<PathBuf>,
        /// Automorphisms; the identity when omitted.
        #[arg(long)]
        group: Option<PathBuf>,
    },
    /// A G-extensible chain by iterating E(X).
    Chain {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 2)]
        stages: usize,
        /// Q_0, comma separated.
        #[arg(long, value_delimiter = ',')]
        q: Vec<Color>,
        #[arg(long, default_value_t = 1)]
        margin: usize,
        #[arg(long, default_value_t = 1)]
        max_subset: usize,
        /// Draw base extension colors from Q_0 instead of the stage palette.
        #[arg(long)]
        fixed_palette: bool,
        #[arg(long)]
        group: Option<PathBuf>,
    },
    /// Close a subset of a homogeneous structure under automorphisms.
    ClosingOff {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        set: Vec<usize>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        group: Option<PathBuf>,
    },
    /// Amalgamation failures over infinite bases, truncated.
    Counterexample {
        kind: CounterexampleKind,
        /// Truncation size (group: number of conjugations checked).
        #[arg(long)]
        size: usize,
        /// Candidate bound (group: orbit length checked).
        #[arg(long)]
        budget: usize,
        /// Added to every anti-metric distance beyond the minimum.
        #[arg(long, default_value_t = 0)]
        slack: Color,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CounterexampleKind {
    Group,
    Antimetric,
    Labeled,
    Ordered,
}

/// Result of one invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

struct Report {
    command: &'static str,
    code: i32,
    summary: Vec<String>,
    body: Value,
}

impl Report {
    fn new(command: &'static str, code: i32, body: impl Serialize) -> Result<Self> {
        Ok(Report {
            command,
            code,
            summary: Vec::new(),
            body: serde_json::to_value(body)?,
        })
    }

    fn line(mut self, s: impl Into<String>) -> Self {
        self.summary.push(s.into());
        self
    }

    fn status(&self) -> &'static str {
        match self.code {
            0 => "ok",
            _ => "witness",
        }
    }

    fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let doc = json!({ "command": self.command, "status": self.status(), "result": self.body });
                let mut s = serde_json::to_string_pretty(&doc).expect("json value");
                s.push('\n');
                s
            }
            Format::Text => {
                let mut s = format!("{}: {}\n", self.command, self.status());
                for l in &self.summary {
                    s.push_str(l);
                    s.push('\n');
                }
                s
            }
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Rejected(_) | Error::Parse { .. } => 2,
        Error::Resource(_) | Error::Budget(_) => 3,
    }
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I) -> Output
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let text = e.render().to_string();
            return if code == 0 {
                Output {
                    code,
                    stdout: text,
                    stderr: String::new(),
                }
            } else {
                Output {
                    code,
                    stdout: String::new(),
                    stderr: text,
                }
            };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let text = report.render(cli.format);
            match &cli.report {
                Some(path) => match fs::write(path, &text) {
                    Ok(()) => Output {
                        code: report.code,
                        stdout: String::new(),
                        stderr: String::new(),
                    },
                    Err(e) => Output {
                        code: 2,
                        stdout: String::new(),
                        stderr: format!("cannot write {}: {}\n", path.display(), e),
                    },
                },
                None => Output {
                    code: report.code,
                    stdout: text,
                    stderr: String::new(),
                },
            }
        }
        Err(e) => Output {
            code: exit_code(&e),
            stdout: String::new(),
            stderr: format!("error: {}\n", e),
        },
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::rejected(format!("cannot read {}: {}", path.display(), e)))
}

fn load(path: &Path) -> Result<FinStructure> {
    deserialize(&read(path)?)
}

fn load_list(path: &Path) -> Result<Vec<FinStructure>> {
    let docs: Vec<StructureDoc> = serde_json::from_str(&read(path)?)?;
    docs.into_iter().map(FinStructure::try_from).collect()
}

fn load_group(path: &Path) -> Result<Vec<Embedding>> {
    let maps: Vec<Vec<usize>> = serde_json::from_str(&read(path)?)?;
    Ok(maps.into_iter().map(Embedding::new).collect())
}

fn load_ext(base: &Arc<FinStructure>, path: &Path) -> Result<OnePointExtension> {
    OnePointExtension::from_realized(base.clone(), &load(path)?)
}

fn group_or_identity(path: &Option<PathBuf>, n: usize) -> Result<Vec<Embedding>> {
    match path {
        Some(p) => load_group(p),
        None => Ok(vec![Embedding::identity(n)]),
    }
}

fn execute(cli: &Cli) -> Result<Report> {
    match &cli.command {
        Command::Catalog => {
            let rows: Vec<Value> = ClassSpec::catalog()
                .iter()
                .map(|c| {
                    json!({
                        "id": c.id.to_string(),
                        "labeled": c.kind().is_labeled(),
                        "ordered": c.kind().is_ordered(),
                        "finiteLanguage": c.has_finite_language(),
                    })
                })
                .collect();
            let mut r = Report::new("catalog", 0, &rows)?;
            for c in ClassSpec::catalog() {
                r = r.line(c.id.to_string());
            }
            Ok(r)
        }
        Command::Validate { class, input } => {
            let s = load(input)?;
            match class.class.violation(&s)? {
                None => Ok(Report::new("validate", 0, json!({ "member": true }))?.line("member")),
                Some(v) => {
                    let text = serde_json::to_string(&v)?;
                    Ok(Report::new("validate", 1, json!({ "member": false, "violation": v }))?.line(text))
                }
            }
        }
        Command::Embed { source, target, all } => {
            let (a, b) = (load(source)?, load(target)?);
            let found = find_embeddings(&a, &b, if *all { None } else { Some(1) })?;
            let code = if found.is_empty() { 1 } else { 0 };
            let mut r = Report::new("embed", code, &found)?.line(format!("{} embedding(s)", found.len()));
            for e in &found {
                r = r.line(format!("{:?}", e.map));
            }
            Ok(r)
        }
        Command::Auts { input } => {
            let auts = automorphisms(&load(input)?)?;
            let mut r = Report::new("auts", 0, &auts)?.line(format!("{} automorphism(s)", auts.len()));
            for e in &auts {
                r = r.line(format!("{:?}", e.map));
            }
            Ok(r)
        }
        Command::Age { input, k } => {
            let members = age(&load(input)?, *k)?;
            let mut r = Report::new("age", 0, &members)?.line(format!("{} member(s)", members.len()));
            for m in &members {
                r = r.line(crate::structures::serialize(m));
            }
            Ok(r)
        }
        Command::Homogeneity { input, k } => match homogeneity_check(&load(input)?, *k)? {
            Homogeneity::Certificate(c) => {
                let n = c.witnesses.len();
                Ok(Report::new("homogeneity", 0, &c)?.line(format!("certified with {} witnesses", n)))
            }
            Homogeneity::Counterexample(p) => Ok(Report::new("homogeneity", 1, json!({ "partialIso": p }))?
                .line(format!("partial isomorphism {:?} does not extend", p.pairs()))),
        },
        Command::Amalgamate { class, pair } => {
            let base = Arc::new(load(&pair.base)?);
            let (ea, eb) = (load_ext(&base, &pair.ext_a)?, load_ext(&base, &pair.ext_b)?);
            let all = amalgamate_one_point(&base, &ea, &eb, &class.class, &ColorBudget::range(pair.budget))?;
            let code = if all.is_empty() { 1 } else { 0 };
            let mut r = Report::new("amalgamate", code, &all)?.line(format!("{} amalgam(s)", all.len()));
            for a in &all {
                r = r.line(crate::structures::serialize(&a.result));
            }
            Ok(r)
        }
        Command::ApCheck {
            class,
            max_size,
            budget,
        } => {
            let report = ap_check(&class.class, *max_size, &ColorBudget::range(*budget))?;
            let code = if report.passed() { 0 } else { 1 };
            let mut r = Report::new("ap-check", code, &report)?.line(format!(
                "{} bases, {} pairs, {} enlarged amalgams",
                report.bases, report.pairs, report.enlarged
            ));
            if let Some(f) = &report.failure {
                r = r
                    .line(format!("base: {}", crate::structures::serialize(&f.base)))
                    .line(format!("left: {}", serde_json::to_string(&f.left)?))
                    .line(format!("right: {}", serde_json::to_string(&f.right)?));
            }
            Ok(r)
        }
        Command::Koenig {
            class,
            chain,
            ext_a,
            ext_b,
            budget,
            allow_infinite_language,
        } => {
            let chain = load_list(chain)?;
            let top = Arc::new(chain.last().cloned().ok_or_else(|| Error::rejected("empty chain"))?);
            let (ea, eb) = (load_ext(&top, ext_a)?, load_ext(&top, ext_b)?);
            let opts = KoenigOptions {
                allow_infinite_language: *allow_infinite_language,
                budget: ColorBudget::range(*budget),
            };
            let outcome = koenig_tree_amalgamation(&chain, &ea, &eb, &class.class, &opts)?;
            match &outcome {
                KoenigOutcome::Branch(b) => Ok(Report::new("koenig", 0, &outcome)?.line(format!(
                    "coherent branch of length {} ({} nodes visited)",
                    b.levels.len(),
                    b.nodes_visited
                ))),
                KoenigOutcome::NoBranch { level } => {
                    Ok(Report::new("koenig", 1, &outcome)?.line(format!("no branch past level {}", level)))
                }
            }
        }
        Command::BaseCheck { class, pair } => {
            let base = Arc::new(load(&pair.base)?);
            let (ea, eb) = (load_ext(&base, &pair.ext_a)?, load_ext(&base, &pair.ext_b)?);
            let verdict =
                amalgamation_base_check(&base, &[(ea, eb)], &class.class, &ColorBudget::range(pair.budget))?.remove(0);
            let code = if verdict.is_blocked() { 1 } else { 0 };
            let mut r = Report::new("base-check", code, &verdict)?;
            r = match &verdict.glue_block {
                Some(b) => r.line(format!("glue blocked: {}", serde_json::to_string(b)?)),
                None => r.line("glue allowed"),
            };
            for bc in &verdict.blocked {
                r = r.line(format!(
                    "{} blocked: {}",
                    serde_json::to_string(&bc.candidate)?,
                    serde_json::to_string(&bc.reason)?
                ));
            }
            Ok(r)
        }
        Command::BuildLimit {
            class,
            steps,
            level,
            budget,
            seed,
        } => {
            let seed = match seed {
                Some(p) => load(p)?,
                None => FinStructure::empty(class.class.kind()),
            };
            let approx = build_limit_approx(&class.class, &seed, *steps, *level, &ColorBudget::range(*budget))?;
            let sizes: Vec<usize> = approx.stages.iter().map(|s| s.len()).collect();
            Ok(Report::new("build-limit", 0, &approx)?.line(format!("stage sizes {:?}, every step certified", sizes)))
        }
        Command::Injectivity {
            class,
            small,
            large,
            level,
            budget,
        } => {
            let (u, v) = (load(small)?, load(large)?);
            match injectivity_certificate(&u, &v, &class.class, *level, &ColorBudget::range(*budget))? {
                Injectivity::Certificate(c) => {
                    let n = c.witnesses.len();
                    Ok(Report::new("injectivity", 0, &c)?.line(format!("certified with {} witnesses", n)))
                }
                f @ Injectivity::Failure { .. } => {
                    Ok(Report::new("injectivity", 1, &f)?.line("extension not realized"))
                }
            }
        }
        Command::Iterate {
            class,
            u,
            u_prime,
            map,
            copies,
        } => {
            let (u, up) = (load(u)?, load(u_prime)?);
            let chain = iterate_self_embedding(&class.class, &u, &up, &Embedding::new(map.clone()), *copies)?;
            let sizes: Vec<usize> = chain.stages.iter().map(|s| s.len()).collect();
            Ok(Report::new("iterate", 0, &chain)?.line(format!("stage sizes {:?}", sizes)))
        }
        Command::Extensible {
            source,
            target,
            map,
            group,
        } => {
            let (s, t) = (load(source)?, load(target)?);
            let g = load_group(group)?;
            match is_extensible(&s, &t, &Embedding::new(map.clone()), &g)? {
                op @ Extensibility::Operator(_) => {
                    Ok(Report::new("extensible", 0, &op)?.line("every automorphism extends"))
                }
                f @ Extensibility::Failure { .. } => {
                    let text = serde_json::to_string(&f)?;
                    Ok(Report::new("extensible", 1, &f)?.line(text))
                }
            }
        }
        Command::Extend { input, q, exts, group } => {
            let x = load(input)?;
            let q = ColorBudget::new(q.clone());
            let base = Arc::new(x.clone());
            let exts = match exts {
                Some(p) => load_list(p)?
                    .iter()
                    .map(|r| OnePointExtension::from_realized(base.clone(), r))
                    .collect::<Result<Vec<_>>>()?,
                None => ClassSpec::new(crate::structures::ClassId::TfLabeledOrdered).extensions(&base, &q)?,
            };
            let g = group_or_identity(group, x.len())?;
            let out = e_of_x(&x, &q, &exts, &g, &EOptions::default())?;
            Ok(Report::new("extend", 0, &out)?.line(format!(
                "{} points, {} new, {} fresh colors",
                out.structure.len(),
                out.closure_size,
                out.fresh_colors.len()
            )))
        }
        Command::Chain {
            input,
            stages,
            q,
            margin,
            max_subset,
            fixed_palette,
            group,
        } => {
            let u0 = load(input)?;
            let q0 = ColorBudget::new(q.clone());
            let opts = ChainOptions {
                stages: *stages,
                schedule: QSchedule::new(vec![q0.clone()], *margin)?,
                selector: ExtSelector {
                    max_subset: *max_subset,
                    palette: if *fixed_palette {
                        LiftPalette::Fixed(q0)
                    } else {
                        LiftPalette::Stage
                    },
                },
            };
            let g = group_or_identity(group, u0.len())?;
            let chain = build_g_extensible_chain(&u0, &g, &opts)?;
            let sizes: Vec<usize> = chain.stages.iter().map(|s| s.len()).collect();
            Ok(Report::new("chain", 0, &chain)?.line(format!("stage sizes {:?}, coherent", sizes)))
        }
        Command::ClosingOff { input, set, k, group } => {
            let w = load(input)?;
            let h0 = match group {
                Some(p) => load_group(p)?,
                None => Vec::new(),
            };
            let out = closing_off(&w, set, &h0, *k)?;
            Ok(Report::new("closing-off", 0, &out)?.line(format!(
                "closed set {:?} with {} automorphisms",
                out.universe,
                out.family.len()
            )))
        }
        Command::Counterexample {
            kind,
            size,
            budget,
            slack,
        } => match kind {
            CounterexampleKind::Group => {
                let r = group_counterexample_verify(*size, *budget, cli.rng_seed)?;
                let code = if r.passed() { 1 } else { 0 };
                Ok(Report::new("counterexample", code, &r)?
                    .line(format!(
                        "conjugation identity for k < {}: {} failure(s)",
                        r.k_max,
                        r.conjugation_failures.len()
                    ))
                    .line(format!("(b∘a)^{}(0) = {}", r.m_max, r.orbit_end))
                    .line(format!(
                        "sampled orders: G[a] max {}, G[b] max {}",
                        r.sample_a.max_order, r.sample_b.max_order
                    )))
            }
            CounterexampleKind::Antimetric => {
                let w = antimetric_failure_witness(*size, *budget as Color, *slack)?;
                let mut r = Report::new("counterexample", 1, &w)?
                    .line(format!("glue blocked: {}", serde_json::to_string(&w.glue_block)?));
                for row in &w.table {
                    r = r.line(format!("k = {}: blocked at m = {}", row.k, row.blocking_index));
                }
                Ok(r)
            }
            CounterexampleKind::Labeled | CounterexampleKind::Ordered => {
                if *budget > *size {
                    return Err(Error::rejected("budget may not exceed size"));
                }
                let w = if *kind == CounterexampleKind::Labeled {
                    labeled_failure_witness(*size)?
                } else {
                    ordered_failure_witness(*size)?
                };
                let mut w = w;
                w.table.truncate(*budget);
                let mut r = Report::new("counterexample", 1, &w)?
                    .line(format!("glue blocked: {}", serde_json::to_string(&w.glue_block)?));
                for row in &w.table {
                    r = r.line(format!("q = {}: monochromatic triangle with z = {}", row.color, row.z));
                }
                Ok(r)
            }
        },
    }
}
