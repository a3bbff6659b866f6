use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use treepile::arborescence::{parse_tree_specs, validate_specs, ValidationMode};
use treepile::chain::{self, build_transition_capped, Model};
use treepile::convergence::{self, upset_claims, ConvergenceRow};
use treepile::monoid::{self, export_cayley, is_r_trivial, lattice_json, MonoidTable, Side};
use treepile::operators::{apply, Generator, GeneratorSet, OpKind};
use treepile::polyalg::{self, ConjectureMethod};
use treepile::{Arborescence, Configuration, SandpileError, StateSpace, Q};

#[derive(Parser, Debug)]
#[command(name = "treepile", version, about = "Exact analysis of sandpile chains on arborescences")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[arg(long, global = true, value_enum, default_value_t = ModelArg::Landslide)]
    model: ModelArg,

    /// Tree file (JSON).
    #[arg(long, global = true)]
    tree: Option<PathBuf>,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the artifact here, plus a `<out>.manifest.json` sidecar.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    format: Option<Format>,

    #[arg(long, global = true, default_value_t = chain::DEFAULT_EXACT_CAP)]
    max_states: usize,

    #[arg(long, global = true, default_value_t = monoid::DEFAULT_MONOID_CAP)]
    max_monoid: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a tree file.
    Validate {
        #[arg(long, value_enum, default_value_t = ModeArg::Strict)]
        mode: ModeArg,
    },
    /// List configurations with their ranks.
    States,
    /// Apply generators left to right, e.g. `tau_a sigma_b`.
    Apply {
        #[arg(long)]
        config: String,
        #[arg(required = true)]
        ops: Vec<String>,
    },
    /// Transition matrix, `M[i][j]` the probability of moving from j to i.
    Matrix,
    Stationary {
        #[arg(long, value_enum, default_value_t = StationaryMethod::Exact)]
        method: StationaryMethod,
    },
    /// Product-form partition function.
    Partition,
    /// Characteristic polynomial `det(M − λI)`.
    Charpoly {
        #[arg(long, value_enum, default_value_t = CharpolyMethod::Exact)]
        method: CharpolyMethod,
    },
    Spectrum {
        #[arg(long, value_enum, default_value_t = SpectrumMethod::Monoid)]
        method: SpectrumMethod,
    },
    Monoid {
        #[arg(long, value_enum, default_value_t = SetArg::M)]
        set: SetArg,
    },
    Cayley {
        #[arg(long, value_enum, default_value_t = SideArg::Right)]
        side: SideArg,
        #[arg(long, value_enum, default_value_t = SetArg::M)]
        set: SetArg,
    },
    /// Distance to stationarity against the Chernoff bound.
    Converge {
        /// Initial configuration; all empty by default.
        #[arg(long)]
        initial: Option<String>,
        #[arg(long, default_value_t = 50)]
        k_max: u64,
        /// Monte Carlo trials per row; 0 disables sampling.
        #[arg(long, default_value_t = 0)]
        trials: u64,
    },
    /// Deterministic-upset statistic on the landslide chain monoid.
    UpsetStat {
        #[arg(long, default_value_t = 10_000)]
        pairs: u64,
    },
    /// Partition function of the 1-D landslide chain against the conjectured formula.
    Conjecture {
        /// Thresholds from the source end, e.g. `1,2,2`.
        #[arg(long)]
        thresholds: String,
        #[arg(long, value_enum, default_value_t = ConjMethod::Auto)]
        method: ConjMethod,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ModelArg {
    Trickle,
    Landslide,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Dot,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ModeArg {
    Strict,
    Relaxed,
    Extended,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StationaryMethod {
    Exact,
    Product,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CharpolyMethod {
    Exact,
    Formula,
    Line,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SpectrumMethod {
    Monoid,
    Numeric,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SetArg {
    #[value(name = "M")]
    M,
    #[value(name = "N")]
    N,
    #[value(name = "J")]
    J,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SideArg {
    Left,
    Right,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ConjMethod {
    Auto,
    Symbolic,
    Modular,
}

impl From<ModelArg> for Model {
    fn from(m: ModelArg) -> Model {
        match m {
            ModelArg::Trickle => Model::Trickle,
            ModelArg::Landslide => Model::Landslide,
        }
    }
}

impl SetArg {
    fn generators(self) -> GeneratorSet {
        match self {
            SetArg::M => GeneratorSet::Landslide,
            SetArg::N => GeneratorSet::Trickle,
            SetArg::J => GeneratorSet::Topples,
        }
    }

    fn label(self) -> &'static str {
        match self {
            SetArg::M => "M",
            SetArg::N => "N",
            SetArg::J => "J",
        }
    }
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<SandpileError> for Failure {
    fn from(e: SandpileError) -> Self {
        let code = match &e {
            SandpileError::Validation(_)
            | SandpileError::UnknownVertex(_)
            | SandpileError::NotALeaf(_)
            | SandpileError::EmptyTree(_)
            | SandpileError::InvalidConfiguration(_)
            | SandpileError::NotAnUpset(_)
            | SandpileError::Parse(_)
            | SandpileError::Dimension(_) => 2,
            SandpileError::CapExceeded { .. } => 3,
            SandpileError::HypothesisUnmet { .. } | SandpileError::NonErgodic(_) => 4,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

struct Ctx {
    cli: Cli,
    input: Option<Vec<u8>>,
}

impl Ctx {
    fn tree(&self) -> Outcome<Arborescence> {
        let bytes = self
            .input
            .as_ref()
            .ok_or_else(|| fail(2, "this command needs --tree FILE"))?;
        let text = std::str::from_utf8(bytes).map_err(|e| fail(2, format!("tree file is not UTF-8: {e}")))?;
        let specs = parse_tree_specs(text)?;
        let diags = validate_specs(&specs, ValidationMode::EXTENDED);
        if !diags.is_empty() {
            return Err(SandpileError::Validation(diags).into());
        }
        Ok(Arborescence::new(specs)?)
    }

    fn model(&self) -> Model {
        self.cli.model.into()
    }

    fn format(&self, default: Format) -> Format {
        self.cli.format.unwrap_or(default)
    }

    fn space(&self, tree: &Arborescence) -> Outcome<StateSpace> {
        Ok(StateSpace::with_cap(tree, self.cli.max_states)?)
    }
}

fn rows_csv(rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = String::new();
    for r in rows {
        out.push_str(&r.join(";"));
        out.push('\n');
    }
    out
}

fn pretty(v: &impl serde::Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn parse_generator(tree: &Arborescence, s: &str) -> Outcome<Generator> {
    let (kind, id) = s
        .split_once(['_', ':'])
        .ok_or_else(|| fail(2, format!("generator `{s}` must look like tau_a or sigma:a")))?;
    let kind = match kind {
        "σ" | "sigma" | "s" => OpKind::Source,
        "θ" | "theta" | "t" => OpKind::Trickle,
        "τ" | "tau" | "l" => OpKind::Landslide,
        _ => return Err(fail(2, format!("unknown operator `{kind}`"))),
    };
    Ok(Generator::new(kind, tree.lookup(id)?))
}

fn q_str(x: &Q) -> String {
    x.to_string()
}

fn run(ctx: &Ctx) -> Outcome<String> {
    let cli = &ctx.cli;
    match &cli.command {
        Command::Validate { mode } => {
            let bytes = ctx.input.as_ref().ok_or_else(|| fail(2, "validate needs --tree FILE"))?;
            let text = String::from_utf8_lossy(bytes);
            let mode = match mode {
                ModeArg::Strict => ValidationMode::STRICT,
                ModeArg::Relaxed => ValidationMode::RELAXED,
                ModeArg::Extended => ValidationMode::EXTENDED,
            };
            let diags = match parse_tree_specs(&text) {
                Ok(specs) => validate_specs(&specs, mode),
                Err(e) => vec![e.to_string()],
            };
            if !diags.is_empty() {
                return Err(SandpileError::Validation(diags).into());
            }
            let tree = ctx.tree()?;
            let size = treepile::instances::state_count(&tree);
            Ok(match ctx.format(Format::Csv) {
                Format::Json => pretty(&json!({"valid": true, "vertices": tree.len(), "states": size})),
                _ => format!("ok;{};{}\n", tree.len(), size),
            })
        }
        Command::States => {
            let tree = ctx.tree()?;
            let space = ctx.space(&tree)?;
            Ok(match ctx.format(Format::Csv) {
                Format::Json => pretty(&space.iter().map(|c| c.to_string()).collect::<Vec<_>>()),
                _ => rows_csv(space.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()])),
            })
        }
        Command::Apply { config, ops } => {
            let tree = ctx.tree()?;
            let mut c: Configuration = config.parse()?;
            StateSpace::new(&tree)?.check(&c)?;
            for op in ops {
                let g = parse_generator(&tree, op)?;
                c = Configuration(apply(&tree, g, &c.0)?);
            }
            Ok(format!("{c}\n"))
        }
        Command::Matrix => {
            let tree = ctx.tree()?;
            let m = build_transition_capped(&tree, ctx.model(), cli.max_states)?;
            let dense: Vec<Vec<String>> = m.to_dense().iter().map(|r| r.iter().map(q_str).collect()).collect();
            Ok(match ctx.format(Format::Json) {
                Format::Csv => rows_csv(dense),
                _ => format!("{}\n", serde_json::to_string(&dense).expect("serializable")),
            })
        }
        Command::Stationary { method } => {
            let tree = ctx.tree()?;
            let space = ctx.space(&tree)?;
            let pi = match method {
                StationaryMethod::Exact => {
                    let m = build_transition_capped(&tree, ctx.model(), cli.max_states)?;
                    chain::stationary_exact_capped(&m, cli.max_states)?
                }
                StationaryMethod::Product => chain::stationary_product(&tree, ctx.model())?,
            };
            let rows: Vec<(String, String)> = space.iter().zip(&pi).map(|(c, p)| (c.to_string(), q_str(p))).collect();
            Ok(match ctx.format(Format::Csv) {
                Format::Json => pretty(
                    &rows
                        .iter()
                        .map(|(s, p)| json!({"state": s, "probability": p}))
                        .collect::<Vec<_>>(),
                ),
                _ => rows_csv(rows.into_iter().map(|(s, p)| vec![s, p])),
            })
        }
        Command::Partition => {
            let tree = ctx.tree()?;
            let z = chain::partition_function(&tree, ctx.model())?;
            Ok(match ctx.format(Format::Csv) {
                Format::Json => pretty(&json!({"model": ctx.model().name(), "partition_function": q_str(&z)})),
                _ => format!("{}\n", q_str(&z)),
            })
        }
        Command::Charpoly { method } => {
            let tree = ctx.tree()?;
            let p = match method {
                CharpolyMethod::Exact => {
                    let m = build_transition_capped(&tree, ctx.model(), cli.max_states)?;
                    polyalg::char_poly_exact_capped(&m, cli.max_states.min(polyalg::CHARPOLY_CAP))?
                }
                CharpolyMethod::Formula | CharpolyMethod::Line => {
                    if ctx.model() != Model::Landslide {
                        return Err(fail(4, "the product formula for the spectrum covers the landslide chain only"));
                    }
                    if tree.len() > 20 {
                        return Err(SandpileError::CapExceeded {
                            what: "vertex count for the product formula",
                            limit: 20,
                            found: tree.len(),
                        }
                        .into());
                    }
                    if matches!(method, CharpolyMethod::Line) {
                        polyalg::char_poly_line_formula(&tree)?
                    } else {
                        polyalg::char_poly_product_formula(&tree)?
                    }
                }
            };
            Ok(match ctx.format(Format::Json) {
                Format::Csv => rows_csv(
                    p.coeffs()
                        .iter()
                        .enumerate()
                        .map(|(i, c)| vec![i.to_string(), q_str(c)]),
                ),
                _ => pretty(&p.to_json("λ")),
            })
        }
        Command::Spectrum { method } => {
            let tree = ctx.tree()?;
            match method {
                SpectrumMethod::Monoid => {
                    ctx.space(&tree)?;
                    let (m, spec) = monoid::spectrum_via_monoid(&tree, ctx.model(), cli.max_monoid)?;
                    Ok(match ctx.format(Format::Csv) {
                        Format::Json => pretty(&json!({
                            "eigenvalues": spec
                                .multiset()
                                .iter()
                                .map(|(v, k)| json!({"value": q_str(v), "multiplicity": k}))
                                .collect::<Vec<_>>(),
                            "lattice": lattice_json(&tree, &m, &spec),
                        })),
                        _ => rows_csv(spec.multiset().iter().map(|(v, k)| vec![q_str(v), k.to_string()])),
                    })
                }
                SpectrumMethod::Numeric => {
                    let m = build_transition_capped(&tree, ctx.model(), cli.max_states)?;
                    let ev = polyalg::numeric_eigenvalues(&m);
                    Ok(match ctx.format(Format::Csv) {
                        Format::Json => pretty(&ev.iter().map(|(re, im)| json!({"re": re, "im": im})).collect::<Vec<_>>()),
                        _ => rows_csv(ev.iter().map(|(re, im)| vec![format!("{re:.12}"), format!("{im:.12}")])),
                    })
                }
            }
        }
        Command::Monoid { set } => {
            let tree = ctx.tree()?;
            ctx.space(&tree)?;
            let m = MonoidTable::generate(&tree, set.generators(), cli.max_monoid)?;
            let r = is_r_trivial(&m);
            let rates: Vec<Q> = m
                .generators
                .iter()
                .map(|g| match g.kind {
                    OpKind::Source => tree.y(g.vertex).clone(),
                    _ => tree.x(g.vertex).clone(),
                })
                .collect();
            let lattice = if r.r_trivial {
                monoid::spectrum_of_table(&tree, &m, &rates)
                    .ok()
                    .map(|s| lattice_json(&tree, &m, &s))
            } else {
                None
            };
            let report = json!({
                "set": set.label(),
                "generators": m.generator_names,
                "elements": m.len(),
                "idempotents": m.idempotents().len(),
                "r_trivial": r.r_trivial,
                "violation": r.violation,
                "ideal_oracle": r.oracle,
                "j_trivial": (m.len() <= monoid::ORACLE_CAP).then(|| monoid::ideal_classes_trivial(&m, true)),
                "lattice": lattice,
            });
            Ok(pretty(&report))
        }
        Command::Cayley { side, set } => {
            let tree = ctx.tree()?;
            let space = ctx.space(&tree)?;
            let m = MonoidTable::generate(&tree, set.generators(), cli.max_monoid)?;
            let side = match side {
                SideArg::Left => Side::Left,
                SideArg::Right => Side::Right,
            };
            if ctx.format(Format::Dot) != Format::Dot {
                return Err(fail(2, "cayley graphs are written as dot only"));
            }
            Ok(export_cayley(&m, Some(&space), side))
        }
        Command::Converge { initial, k_max, trials } => {
            let tree = ctx.tree()?;
            let model = ctx.model();
            let space = ctx.space(&tree)?;
            let start = match initial {
                Some(s) => space.rank(&s.parse()?)? as usize,
                None => 0,
            };
            let m = build_transition_capped(&tree, model, cli.max_states)?;
            let pi = chain::stationary_exact_capped(&m, cli.max_states)?;
            let exact = if space.size() <= convergence::DEFAULT_DISTANCE_CAP {
                Some(convergence::exact_distances(&m, &pi, *k_max as usize)?)
            } else {
                None
            };
            let threshold = convergence::bound_threshold(&tree)?;
            let mut rows = Vec::new();
            for k in 0..=*k_max {
                let mc_tv = if *trials > 0 {
                    convergence::monte_carlo(&tree, model, start, k as usize, *trials, cli.seed, Some(&pi))?.tv
                } else {
                    None
                };
                rows.push(ConvergenceRow {
                    k,
                    exact_tv: exact.as_ref().map(|e| q_str(&e[k as usize][start])),
                    mc_tv,
                    chernoff: convergence::chernoff_bound(&tree, k)?,
                    applicable: k >= threshold,
                });
            }
            Ok(match ctx.format(Format::Csv) {
                Format::Json => pretty(&rows),
                _ => {
                    let mut out = String::from("k;exact_tv;mc_tv;chernoff;applicable\n");
                    out.push_str(&rows_csv(rows.iter().map(|r| {
                        vec![
                            r.k.to_string(),
                            r.exact_tv.clone().unwrap_or_default(),
                            r.mc_tv.map(|x| format!("{x:.6}")).unwrap_or_default(),
                            r.chernoff.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "n/a".into()),
                            r.applicable.to_string(),
                        ]
                    })));
                    out
                }
            })
        }
        Command::UpsetStat { pairs } => {
            let tree = ctx.tree()?;
            let space = ctx.space(&tree)?;
            let m = MonoidTable::generate(&tree, GeneratorSet::LandslideChain, cli.max_monoid)?;
            let claims = upset_claims(&tree, &space, &m, *pairs, cli.seed)?;
            Ok(match ctx.format(Format::Json) {
                Format::Csv => {
                    let mut out = String::new();
                    for e in 0..m.len() as u32 {
                        let (u, n) = convergence::deterministic_upset(&space, m.element(e))?;
                        out.push_str(&format!("{};{};{}\n", m.word_label(e), tree.format_set(u), n));
                    }
                    out
                }
                _ => pretty(&claims),
            })
        }
        Command::Conjecture { thresholds, method } => {
            let ts: Vec<u32> = thresholds
                .split(',')
                .map(|s| s.trim().parse::<u32>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| fail(2, format!("thresholds: {e}")))?;
            let method = match method {
                ConjMethod::Auto => ConjectureMethod::Auto,
                ConjMethod::Symbolic => ConjectureMethod::Symbolic,
                ConjMethod::Modular => ConjectureMethod::ModularLine,
            };
            let r = polyalg::verify_conjecture_1d(&ts, method)?;
            Ok(match ctx.format(Format::Json) {
                Format::Csv => format!(
                    "{};{};{};{}\n",
                    if r.matches { "match" } else { "mismatch" },
                    r.method,
                    polyalg::render_factors(&r.computed),
                    polyalg::render_factors(&r.conjectured)
                ),
                _ => pretty(&r),
            })
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn manifest(cli: &Cli, input: Option<&[u8]>, artifact: &str) -> Value {
    let command = std::env::args().nth(1).unwrap_or_default();
    json!({
        "tool": "treepile",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "argv": std::env::args().skip(1).collect::<Vec<_>>(),
        "flags": {
            "model": format!("{:?}", cli.model).to_lowercase(),
            "tree": cli.tree.as_ref().map(|p| p.display().to_string()),
            "format": cli.format.map(|f| format!("{f:?}").to_lowercase()),
            "max_states": cli.max_states,
            "max_monoid": cli.max_monoid,
        },
        "seed": cli.seed,
        "rng": convergence::RNG_ALGORITHM,
        "input_sha256": input.map(sha256_hex),
        "artifact_sha256": sha256_hex(artifact.as_bytes()),
        "timestamp": chrono::Utc::now().to_rfc3339(),
    })
}

fn write_out(path: &Path, artifact: &str, man: &Value) -> std::io::Result<()> {
    fs::write(path, artifact)?;
    let mut side = path.as_os_str().to_owned();
    side.push(".manifest.json");
    fs::write(PathBuf::from(side), pretty(man))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let input = match cli.tree.as_ref().map(fs::read).transpose() {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read tree file: {e}");
            return ExitCode::from(2);
        }
    };
    let ctx = Ctx { cli, input };
    match run(&ctx) {
        Ok(artifact) => match &ctx.cli.out {
            Some(path) => {
                let man = manifest(&ctx.cli, ctx.input.as_deref(), &artifact);
                if let Err(e) = write_out(path, &artifact, &man) {
                    eprintln!("error: cannot write output: {e}");
                    return ExitCode::from(1);
                }
                ExitCode::SUCCESS
            }
            None => {
                print!("{artifact}");
                ExitCode::SUCCESS
            }
        },
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
