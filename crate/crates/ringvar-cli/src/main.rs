mod io;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ringvar::experiments::{experiment_suite, manifest, ExperimentConfig, Format};
use ringvar::filtration::{build_dyadic_interval, build_random_tree};
use ringvar::geometry::{
    build_chain_tree, gen_fractal_function, gen_notw3_greedy, gen_rademacher, gen_section2_chain,
    gen_tensor_example, w2star_check, w3_check, DEFAULT_RHO,
};
use ringvar::greedy::GreedyState;
use ringvar::splitting::{cdpx_split, jackson_approximant, SetFunction};
use ringvar::variation::{default_candidates, k_functional, modulus_ws, var_seminorm, VariationParams};
use ringvar::{FiltrationTree, LeafFunction, LocalSpace, LocalSystem};

use io::{f_to_csv, load_f, load_tree, read, write, CliError, CliResult};

/// Variation seminorms, greedy approximation and counterexample generators
/// on finite filtrations.
#[derive(Parser)]
#[command(name = "ringvar", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Filtration JSON.
    #[arg(long)]
    tree: PathBuf,
    /// Function as `leaf,value` CSV.
    #[arg(long)]
    f: PathBuf,
    /// Polynomial degree of the local space S (0 = constants).
    #[arg(long, default_value_t = 0)]
    degree: usize,
}

impl Input {
    fn load(&self) -> CliResult<(FiltrationTree, LocalSpace, LeafFunction)> {
        let tree = load_tree(&self.tree)?;
        let f = load_f(&self.f, &tree)?;
        let space = space_of(&tree, self.degree);
        Ok((tree, space, f))
    }
}

fn space_of(tree: &FiltrationTree, degree: usize) -> LocalSpace {
    if degree == 0 {
        LocalSpace::constants(tree)
    } else {
        LocalSpace::polynomials(tree, degree)
    }
}

#[derive(Subcommand)]
enum Command {
    /// |f|_V with a maximizing disjoint family.
    Var {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        p: f64,
    },
    /// The modulus W_S(f, t) with its maximizing partition.
    Modulus {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        p: f64,
        /// One or more values of t.
        #[arg(long, required = true, num_args = 1..)]
        t: Vec<f64>,
    },
    /// K-functional upper bounds against the modulus.
    Kfun {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        p: f64,
        #[arg(long, required = true, num_args = 1..)]
        t: Vec<f64>,
    },
    /// Exports the local orthonormal system.
    Basis {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long, default_value_t = 0)]
        degree: usize,
    },
    /// Greedy approximant in the p-normalized system.
    Greedy {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        m: usize,
        /// Writes the approximant as CSV.
        #[arg(long)]
        out_f: Option<PathBuf>,
    },
    /// Splits Ω for φ = E_p(f,·)^p at threshold eps, or runs the Jackson
    /// construction for m.
    Split {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        p: f64,
        #[arg(long, conflicts_with = "m", required_unless_present = "m")]
        eps: Option<f64>,
        #[arg(long, requires = "sigma")]
        m: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Checks the w2* or w3 condition over the chains of a tree.
    Check {
        condition: Condition,
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        p: f64,
        /// Exponent of the w2* sum.
        #[arg(long)]
        tau: Option<f64>,
        /// Exponent of the w3 sum.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_RHO)]
        rho: f64,
        #[arg(long, default_value_t = f64::INFINITY)]
        m_cap: f64,
        #[arg(long, default_value_t = 0)]
        degree: usize,
    },
    /// Writes a generated tree, function and report.
    Gen {
        kind: GenKind,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        params: Params,
        /// Λ for the Rademacher sum.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<usize>,
        /// Piece measures for a chain tree.
        #[arg(long, value_delimiter = ',')]
        pieces: Vec<f64>,
    },
    /// Runs an experiment suite.
    Experiment {
        /// One of the suite names; omit with --manifest.
        #[arg(required_unless_present_any = ["manifest", "config"])]
        name: Option<String>,
        #[command(flatten)]
        params: Params,
        /// Config JSON (for example an earlier echo); flags override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Prints the column documentation of every suite.
        #[arg(long)]
        manifest: bool,
    },
}

#[derive(Args, Default)]
struct Params {
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long = "N")]
    big_n: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    nu: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Condition {
    W2star,
    W3,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    Section2,
    Tensor,
    Fractal,
    Rademacher,
    Notw3,
    Chain,
    Dyadic,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

fn params(sigma: f64, p: f64) -> CliResult<VariationParams> {
    Ok(VariationParams::new(sigma, p)?)
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("json value serializes")
}

fn parse_json(text: &str) -> Value {
    serde_json::from_str(text).expect("library emits valid json")
}

fn family(tree: &FiltrationTree, rings: &[ringvar::Ring]) -> Value {
    parse_json(&tree.family_to_json(rings))
}

fn run(cmd: Command) -> CliResult<String> {
    match cmd {
        Command::Var { input, sigma, p } => {
            let (tree, space, f) = input.load()?;
            let r = var_seminorm(&tree, &space, &f, params(sigma, p)?)?;
            Ok(pretty(&json!({
                "seminorm": r.seminorm,
                "lp_norm": r.lp_norm,
                "full_norm": r.full_norm,
                "witness": family(&tree, &r.witness),
            })))
        }
        Command::Modulus { input, sigma, p, t } => {
            let (tree, space, f) = input.load()?;
            let vp = params(sigma, p)?;
            let rows = t
                .iter()
                .map(|&t| {
                    let r = modulus_ws(&tree, &space, &f, t, vp)?;
                    Ok(json!({
                        "t": r.t,
                        "value": r.value,
                        "k": r.k,
                        "partition": family(&tree, &r.partition),
                    }))
                })
                .collect::<CliResult<Vec<_>>>()?;
            Ok(pretty(&json!(rows)))
        }
        Command::Kfun { input, sigma, p, t } => {
            let (tree, space, f) = input.load()?;
            let vp = params(sigma, p)?;
            let cands = default_candidates(&tree, &space, &f, vp)?;
            let rows = k_functional(&tree, &space, &f, &t, vp, &cands)?;
            Ok(pretty(&json!(rows)))
        }
        Command::Basis { tree, degree } => {
            let tree = load_tree(&tree)?;
            let sys = LocalSystem::build(&tree, &space_of(&tree, degree))?;
            Ok(pretty(&json!({
                "gram_deviation": sys.gram_deviation(&tree),
                "elements": parse_json(&sys.to_json(&tree)),
            })))
        }
        Command::Greedy { input, p, m, out_f } => {
            let (tree, space, f) = input.load()?;
            let sys = LocalSystem::build(&tree, &space)?;
            let st = GreedyState::new(&sys, &f, p)?;
            let m = m.min(sys.len());
            let errors = st.errors(&tree, &f);
            let chosen: Vec<Value> = st.order()[..m]
                .iter()
                .map(|&j| {
                    let e = sys.element(j);
                    json!({"index": j, "level": e.level, "support_atom": tree.label(e.support), "coefficient": st.coeffs()[j]})
                })
                .collect();
            if let Some(path) = out_f {
                write(&path, &f_to_csv(&tree, &st.approximant(m)))?;
            }
            Ok(pretty(&json!({
                "m": m,
                "p": p,
                "error": errors[m],
                "errors": &errors[..=m],
                "selected": chosen,
            })))
        }
        Command::Split { input, p, eps, m, sigma } => {
            let (tree, space, f) = input.load()?;
            if let Some(m) = m {
                let sigma = sigma.expect("clap requires sigma with m");
                let j = jackson_approximant(&tree, &space, &f, m, params(sigma, p)?)?;
                let mut v = parse_json(&j.split.to_json(&tree));
                v["error"] = json!(j.error);
                v["bound"] = json!(j.bound);
                v["seminorm"] = json!(j.seminorm);
                return Ok(pretty(&v));
            }
            let phi = SetFunction::lp_error(&tree, &space, &f, p)?;
            let r = cdpx_split(&tree, &phi, eps.expect("clap requires eps without m"))?;
            let mut v = parse_json(&r.to_json(&tree));
            v["checks"] = json!(r.verify(&tree, &phi));
            Ok(pretty(&v))
        }
        Command::Check {
            condition,
            tree,
            p,
            tau,
            sigma,
            rho,
            m_cap,
            degree,
        } => {
            let tree = load_tree(&tree)?;
            let need = |x: Option<f64>, name: &str| x.ok_or_else(|| CliError::Usage(format!("--{name} is required")));
            let r = match condition {
                Condition::W2star => {
                    w2star_check(&tree, &space_of(&tree, degree), p, need(tau, "tau")?, rho, m_cap)?
                }
                Condition::W3 => w3_check(&tree, p, need(sigma, "sigma")?, rho, m_cap)?,
            };
            Ok(r.to_json(&tree))
        }
        Command::Gen {
            kind,
            out,
            params: ps,
            lambda,
            pieces,
        } => gen(kind, &out, &ps, &lambda, &pieces),
        Command::Experiment {
            name,
            params: ps,
            config,
            output,
            format,
            manifest: show,
        } => {
            if show {
                return Ok(manifest());
            }
            let mut c = match &config {
                Some(path) => ExperimentConfig::from_json(&read(path)?)?,
                None => ExperimentConfig::default(),
            };
            if let Some(n) = name {
                c.name = n;
            }
            overlay(&mut c, &ps);
            if let Some(fm) = format {
                c.format = match fm {
                    FormatArg::Csv => Format::Csv,
                    FormatArg::Json => Format::Json,
                };
            }
            if let Some(o) = &output {
                c.output = Some(o.display().to_string());
            }
            if let Some(path) = &config {
                c.inputs = vec![path.display().to_string()];
            }
            let table = experiment_suite(&c)?;
            let body = match table.config.format {
                Format::Csv => table.to_csv(),
                Format::Json => table.to_json(false) + "\n",
            };
            eprint!("{}", table.checks_text());
            match &table.config.output {
                Some(o) => {
                    let o = Path::new(o);
                    write(o, &body)?;
                    write(&o.with_extension("config.json"), &(table.config.to_json() + "\n"))?;
                    Ok(String::new())
                }
                None => {
                    if table.config.format == Format::Csv {
                        eprintln!("config: {}", serde_json::to_string(&table.config).expect("config serializes"));
                    }
                    Ok(body)
                }
            }
        }
    }
}

fn overlay(c: &mut ExperimentConfig, ps: &Params) {
    macro_rules! set {
        ($($f:ident),*) => {$(if ps.$f.is_some() { c.$f = ps.$f; })*};
    }
    set!(p, sigma, tau, q, alpha, eps, depth, n1, n2, k, big_n, n, nu, trials);
    if let Some(s) = ps.seed {
        c.seed = s;
    }
}

fn gen(kind: GenKind, out: &Path, ps: &Params, lambda: &[usize], pieces: &[f64]) -> CliResult<String> {
    let p = ps.p.unwrap_or(2.0);
    let sigma = ps.sigma.unwrap_or(1.0);
    let mut files: Vec<(&str, String)> = Vec::new();
    let report: Value = match kind {
        GenKind::Section2 => {
            let g = gen_section2_chain(ps.big_n.unwrap_or(4), p, ps.tau.unwrap_or(1.0))?;
            files.push(("tree.json", g.tree.to_json()));
            files.push(("f.csv", f_to_csv(&g.tree, &g.f)));
            json!(g.report)
        }
        GenKind::Tensor => {
            let g = gen_tensor_example(ps.n1.unwrap_or(2), ps.n2.unwrap_or(2), ps.k.unwrap_or(4), sigma, p)?;
            files.push(("tree.json", g.trees.coarse.to_json()));
            files.push(("fine.json", g.trees.fine.to_json()));
            files.push(("f.csv", f_to_csv(&g.trees.coarse, &g.f)));
            json!(g.report)
        }
        GenKind::Fractal => {
            let g = gen_fractal_function(ps.n.unwrap_or(3), ps.nu.unwrap_or(5), ps.k.unwrap_or(3), sigma, p)?;
            files.push(("tree.json", g.trees.nary.to_json()));
            files.push(("binary.json", g.trees.binary.to_json()));
            files.push(("f.csv", f_to_csv(&g.trees.nary, &g.phi)));
            json!(g.report)
        }
        GenKind::Rademacher => {
            let depth = ps.depth.unwrap_or(14);
            let lambda = if lambda.is_empty() { vec![1, 2, 3] } else { lambda.to_vec() };
            let (tree, f) = gen_rademacher(&lambda, depth, sigma, p)?;
            let v = var_seminorm(&tree, &LocalSpace::constants(&tree), &f, params(sigma, p)?)?;
            files.push(("tree.json", tree.to_json()));
            files.push(("f.csv", f_to_csv(&tree, &f)));
            json!({"lambda": lambda, "depth": depth, "seminorm": v.seminorm, "lp_norm": v.lp_norm})
        }
        GenKind::Notw3 => {
            let g = gen_notw3_greedy(ps.n.unwrap_or(8), p, sigma)?;
            files.push(("tree.json", g.tree.to_json()));
            files.push(("f.csv", f_to_csv(&g.tree, &g.f)));
            files.push(("greedy.csv", f_to_csv(&g.tree, &g.greedy)));
            json!(g.report)
        }
        GenKind::Chain => {
            let pieces = if pieces.is_empty() {
                let n = ps.n.unwrap_or(4);
                vec![1.0 / (2 * n) as f64; n]
            } else {
                pieces.to_vec()
            };
            let (tree, chain) = build_chain_tree(&pieces)?;
            files.push(("tree.json", tree.to_json()));
            let labels: Vec<u64> = chain.atoms.iter().map(|&a| tree.label(a)).collect();
            json!({"pieces": pieces, "chain": labels})
        }
        GenKind::Dyadic => {
            let tree = build_dyadic_interval(ps.depth.unwrap_or(4))?;
            files.push(("tree.json", tree.to_json()));
            json!({"leaves": tree.leaf_count()})
        }
        GenKind::Random => {
            let tree = build_random_tree(ps.n.unwrap_or(10), ps.nu.unwrap_or(2), ps.seed.unwrap_or(0))?;
            files.push(("tree.json", tree.to_json()));
            json!({"leaves": tree.leaf_count()})
        }
    };
    fs::create_dir_all(out).map_err(|source| CliError::Io {
        path: out.into(),
        source,
    })?;
    let text = pretty(&report);
    files.push(("report.json", text.clone() + "\n"));
    for (name, body) in files {
        write(&out.join(name), &body)?;
    }
    Ok(text)
}

fn check_env() -> CliResult<()> {
    if let Ok(v) = std::env::var("RINGVAR_MAX_LEAVES") {
        match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => {}
            _ => {
                return Err(CliError::Usage(format!(
                    "RINGVAR_MAX_LEAVES must be a positive integer, got '{v}'"
                )))
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::InvalidSubcommand
                | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
                | ErrorKind::MissingSubcommand => 1,
                _ => 2,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match check_env().and_then(|_| run(cli.command)) {
        Ok(text) => {
            if !text.is_empty() {
                // a closed pipe downstream is not an error here
                let _ = writeln!(std::io::stdout(), "{}", text.trim_end());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
