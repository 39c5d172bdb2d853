use std::fmt::Debug;
use std::io::{self, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use mono_forge::appendix::appendix_demo;
use mono_forge::fibergeom::{fiber_cut, FiberCutConfig};
use mono_forge::hsets::{lift_graphs, parametrize, sign_on_quadrant, ParametrizeConfig};
use mono_forge::json::{
    certificate_from_json, chart_to_json, coef_from_json, coef_to_json, coverage_to_json, hset_from_json,
    lifted_to_json, manifold_from_json, normality_to_json, point_chart_to_json, quadrant_from_json,
    series_from_json, series_list_from_json, series_to_json, tree_to_dot, tree_to_json, JsonError,
};
use mono_forge::monomialize::{chart_at_point, monomialize, star_check, MonomializeConfig, TreeNode};
use mono_forge::{QSeries, Rational, Scalar};

#[derive(Parser, Debug)]
#[command(name = "mono-forge", version, about = "Monomialization of power series and local analysis of sets near the origin")]
struct Cli {
    /// Input payload (JSON); standard input when omitted.
    #[arg(long = "in", global = true, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Output file; standard output when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Blow-up parameters expanded eagerly; `0` and `inf` are always expanded.
    #[arg(long, global = true, default_value = "0,1,-1,inf", value_name = "CSV")]
    seed_lambdas: String,
    #[arg(long, global = true, default_value_t = 64)]
    depth: usize,
    #[arg(long, global = true, default_value_t = 16)]
    trunc: u32,
    /// Grid resolution N (step 1/N) for sampled checks.
    #[arg(long, global = true, value_name = "N")]
    grid: Option<u32>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Normality certificate of a series.
    Normalize,
    /// Monomialization tree of a list of series (DOT by default).
    Monomialize,
    /// Monomialization tree as JSON, DOT or a CSV table of branches.
    TreeExport,
    /// Sign of a normal germ on a sub-quadrant.
    Sign,
    /// Charts of a set near the origin with a coverage report.
    Parametrize,
    /// Graph lifting of a set.
    Lift,
    /// Chart through a point of the monomialization tree.
    ChartAt,
    /// Fiber cutting of a manifold.
    Fibercut,
    /// Exact certification for the set {y > x} on the unit square.
    AppendixDemo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Dot,
    Csv,
    Text,
}

#[derive(Debug)]
enum CliError {
    Malformed(String),
    Domain { name: String, message: String },
}

impl CliError {
    fn domain<E: Debug + std::fmt::Display>(module: &str, e: &E) -> Self {
        CliError::Domain { name: format!("{module}::{}", variant_path(e)), message: e.to_string() }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Malformed(_) => 2,
            CliError::Domain { .. } => 1,
        }
    }
}

/// `Outer::Inner` from a Debug rendering such as `Outer(Inner { .. })`.
fn variant_path<E: Debug>(e: &E) -> String {
    let dbg = format!("{e:?}");
    let mut names = vec![];
    let mut rest = dbg.as_str();
    loop {
        let name: String = rest.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        if name.is_empty() || !name.starts_with(|c: char| c.is_uppercase()) {
            break;
        }
        names.push(name.clone());
        rest = &rest[name.len()..];
        match rest.strip_prefix('(') {
            Some(r) => rest = r,
            None => break,
        }
    }
    names.join("::")
}

impl From<JsonError> for CliError {
    fn from(e: JsonError) -> Self {
        CliError::Malformed(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn malformed(msg: impl Into<String>) -> CliError {
    CliError::Malformed(msg.into())
}

fn read_input(path: &Option<PathBuf>) -> Result<Value> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|e| malformed(format!("cannot read {}: {e}", p.display())))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| malformed(format!("cannot read stdin: {e}")))?;
            s
        }
    };
    serde_json::from_str(&text).map_err(|e| malformed(format!("invalid JSON: {e}")))
}

fn parse_seeds(csv: &str) -> Result<Vec<Rational>> {
    let mut seeds = vec![];
    for tok in csv.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        if tok == "inf" {
            continue;
        }
        let c = Rational::parse_coef(tok).ok_or_else(|| malformed(format!("bad seed lambda \"{tok}\"")))?;
        if c != Rational::from_ratio(0, 1) && !seeds.contains(&c) {
            seeds.push(c);
        }
    }
    Ok(seeds)
}

fn object_field<'a>(v: &'a Value, key: &str) -> Result<&'a Value> {
    v.get(key).ok_or_else(|| malformed(format!("missing field \"{key}\"")))
}

/// A bare series, an array of series, or `{"targets": [...]}`.
fn targets_from(v: &Value) -> Result<Vec<QSeries>> {
    if let Some(t) = v.get("targets") {
        return Ok(series_list_from_json(t, None)?);
    }
    if v.is_array() {
        return Ok(series_list_from_json(v, None)?);
    }
    Ok(vec![series_from_json::<Rational>(v)?.series])
}

fn grid_step(grid: Option<u32>, default: u32) -> Result<u32> {
    match grid.unwrap_or(default) {
        0 => Err(malformed("--grid must be positive")),
        n => Ok(n),
    }
}

enum Output {
    Json(Value),
    Text(String),
}

fn require(format: Format, allowed: &[Format]) -> Result<()> {
    if allowed.contains(&format) {
        Ok(())
    } else {
        Err(malformed(format!("format {format:?} is not available for this command")))
    }
}

fn branches_csv(tree: &TreeNode<Rational>) -> String {
    let mut out = String::from("branch,path,role,alpha,unit_constant\n");
    for (k, b) in tree.branches().iter().enumerate() {
        let path = b.path(tree.nvars()).to_string();
        let certs = b.leaf.certificates().unwrap_or(&[]);
        for (t, c) in b.leaf.series_state.iter().zip(certs) {
            out.push_str(&format!("{k},\"{path}\",{},{},{}\n", t.role, c.alpha.to_string().replace(',', " "), c.unit_constant.render()));
        }
    }
    out
}

fn run(cli: &Cli) -> Result<Output> {
    let config = MonomializeConfig { max_depth: cli.depth, trunc: cli.trunc, lambda_seeds: parse_seeds(&cli.seed_lambdas)? };
    match cli.command {
        Command::Normalize => {
            let format = cli.format.unwrap_or(Format::Json);
            require(format, &[Format::Json])?;
            let s = series_from_json::<Rational>(&read_input(&cli.input)?)?.series;
            let n = s.is_normal().map_err(|e| CliError::domain("series", &e))?;
            Ok(Output::Json(normality_to_json(&n)))
        }
        Command::Monomialize | Command::TreeExport => {
            let default = if matches!(cli.command, Command::Monomialize) { Format::Dot } else { Format::Json };
            let format = cli.format.unwrap_or(default);
            require(format, &[Format::Json, Format::Dot, Format::Csv])?;
            let targets = targets_from(&read_input(&cli.input)?)?;
            let tree = monomialize(&targets, &config).map_err(|e| CliError::domain("monomialize", &e))?;
            Ok(match format {
                Format::Dot => Output::Text(tree_to_dot(&tree)),
                Format::Csv => Output::Text(branches_csv(&tree)),
                _ => Output::Json(json!({
                    "nodes": tree.size(),
                    "leaves": tree.branches().len(),
                    "star_violations": star_check(&tree).len(),
                    "tree": tree_to_json(&tree),
                })),
            })
        }
        Command::Sign => {
            require(cli.format.unwrap_or(Format::Json), &[Format::Json])?;
            let v = read_input(&cli.input)?;
            let cert = certificate_from_json::<Rational>(object_field(&v, "certificate")?)?;
            let q = quadrant_from_json::<Rational>(object_field(&v, "quadrant")?)?;
            if q.dim() != cert.alpha.len() {
                return Err(malformed("certificate and quadrant dimensions differ"));
            }
            Ok(Output::Json(json!({"sign": sign_on_quadrant(&cert, &q).to_string()})))
        }
        Command::Parametrize => {
            let format = cli.format.unwrap_or(Format::Json);
            require(format, &[Format::Json, Format::Csv])?;
            let set = hset_from_json::<Rational>(&read_input(&cli.input)?)?;
            let pc = ParametrizeConfig {
                monomialize: config,
                grid_step: Rational::from_ratio(1, i64::from(grid_step(cli.grid, 512)?)),
                ..ParametrizeConfig::default()
            };
            let p = parametrize(&set, &pc).map_err(|e| CliError::domain("hsets", &e))?;
            if format == Format::Csv {
                let mut out = String::from("chart,signs,path,hits\n");
                for (k, c) in p.charts.iter().enumerate() {
                    out.push_str(&format!("{k},{},\"{}\",{}\n", c.quadrant.signs_string(), c.path, p.coverage.hits_per_chart[k]));
                }
                return Ok(Output::Text(out));
            }
            Ok(Output::Json(json!({
                "charts": p.charts.iter().map(chart_to_json).collect::<Vec<_>>(),
                "coverage": coverage_to_json(&p.coverage),
            })))
        }
        Command::Lift => {
            require(cli.format.unwrap_or(Format::Json), &[Format::Json])?;
            let v = read_input(&cli.input)?;
            let set = hset_from_json::<Rational>(object_field(&v, "set")?)?;
            let bounds = object_field(&v, "bounds")?
                .as_array()
                .ok_or_else(|| malformed("\"bounds\" must be an array"))?
                .iter()
                .map(coef_from_json::<Rational>)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let lifted = lift_graphs(&set, &bounds).map_err(|e| CliError::domain("hsets", &e))?;
            Ok(Output::Json(lifted_to_json(&lifted)))
        }
        Command::ChartAt => {
            require(cli.format.unwrap_or(Format::Json), &[Format::Json])?;
            let v = read_input(&cli.input)?;
            let targets = series_list_from_json::<Rational>(object_field(&v, "targets")?, None)?;
            let point = object_field(&v, "point")?
                .as_array()
                .ok_or_else(|| malformed("\"point\" must be an array"))?
                .iter()
                .map(coef_from_json::<Rational>)
                .collect::<std::result::Result<Vec<_>, _>>()?;
            if targets.first().is_some_and(|t| t.nvars() != point.len()) {
                return Err(malformed("point and targets dimensions differ"));
            }
            let chart = chart_at_point(&targets, &point, &config).map_err(|e| CliError::domain("monomialize", &e))?;
            Ok(Output::Json(point_chart_to_json(&chart)))
        }
        Command::Fibercut => {
            let format = cli.format.unwrap_or(Format::Json);
            require(format, &[Format::Json, Format::Csv])?;
            let m = manifold_from_json::<Rational>(&read_input(&cli.input)?)?;
            let fc = FiberCutConfig { fiber_step: 1.0 / f64::from(grid_step(cli.grid, 512)?), ..FiberCutConfig::default() };
            let cut = fiber_cut(&m, &fc).map_err(|e| CliError::domain("fibergeom", &e))?;
            if format == Format::Csv {
                let mut out = String::new();
                let names: Vec<String> = mono_forge::series::default_names(m.nvars);
                out.push_str(&names.join(","));
                out.push('\n');
                for p in &cut.critical_points {
                    out.push_str(&p.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
                return Ok(Output::Text(out));
            }
            Ok(Output::Json(json!({
                "equations": cut.equations.iter().map(|e| series_to_json(e, None)).collect::<Vec<_>>(),
                "equations_display": cut.equations.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "dim": cut.dim,
                "rank": cut.rank,
                "compatible_radius": cut.compatible_radius,
                "fibers_sampled": cut.fibers_sampled,
                "fibers_hit": cut.fibers_hit,
                "critical_dim": cut.critical_dim,
            })))
        }
        Command::AppendixDemo => {
            let format = cli.format.unwrap_or(Format::Text);
            require(format, &[Format::Text, Format::Json])?;
            let r = appendix_demo().map_err(|e| CliError::domain("appendix", &e))?;
            if format == Format::Json {
                return Ok(Output::Json(json!({
                    "phi": r.phi.to_string(),
                    "equation": r.equation.to_string(),
                    "roots": r.roots.formula(),
                    "identity_holds": r.identity_holds,
                    "epsilon": r.epsilon.to_string(),
                    "band": r.band.to_string(),
                    "sharp": r.sharp,
                    "certified": r.certified,
                    "verdict": r.verdict(),
                    "center": series_to_json(&r.roots.center, None),
                    "radical_scale": coef_to_json(&r.roots.scale),
                })));
            }
            Ok(Output::Text(r.lines().join("\n") + "\n"))
        }
    }
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("MONO_FORGE_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| malformed(format!("MONO_FORGE_THREADS must be a number, got \"{v}\"")))?;
        if n > 0 {
            // Fails only if a pool already exists, which cannot happen here.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    Ok(())
}

fn emit(cli: &Cli, out: Output) -> io::Result<()> {
    let text = match out {
        Output::Json(v) => serde_json::to_string_pretty(&v).expect("values serialize") + "\n",
        Output::Text(t) => t,
    };
    match &cli.out {
        Some(p) => std::fs::write(p, text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    eprintln!("mono-forge {}", env!("CARGO_PKG_VERSION"));
    let result = configure_threads().and_then(|()| run(&cli));
    match result {
        Ok(out) => match emit(&cli, out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error[io]: {e}");
                ExitCode::from(1)
            }
        },
        Err(e) => {
            match &e {
                CliError::Malformed(m) => eprintln!("error[malformed]: {m}"),
                CliError::Domain { name, message } => eprintln!("error[{name}]: {message}"),
            }
            ExitCode::from(e.exit_code())
        }
    }
}
