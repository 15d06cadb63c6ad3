//! `gauss-nisim` command-line front end.

mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use log::info;
use serde::Serialize;
use serde_json::{json, Value};

use gauss_nisim::rng::streams;
use gauss_nisim::{
    boost_match, decide_k2, estimate_table, expand, max_correlation, smooth, tv_distance, BinaryTarget, FiniteJoint,
    FunctionSpec, JointTable, Method, NisimError, SmoothConfig, VectorFunction,
};

use config::{
    BoostArgs, Cli, Command, DecideArgs, ExpandArgs, Format, Globals, MaxcorrArgs, MethodArg, SmoothArgs, TableArgs,
};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NEGATIVE: u8 = 3;

/// Error carrying its diagnostic code and process exit status.
#[derive(Debug)]
pub struct CliError {
    code: &'static str,
    message: String,
    exit: u8,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: "USAGE",
            message: message.into(),
            exit: EXIT_USAGE,
        }
    }

    fn report(&self) {
        let diag = json!({ "error": self.code, "message": self.message });
        eprintln!("{diag}");
    }
}

impl From<NisimError> for CliError {
    fn from(e: NisimError) -> Self {
        let exit = match e {
            NisimError::BudgetExceeded { .. } | NisimError::Nonmonotone { .. } => EXIT_FAILURE,
            NisimError::ReportViolation(_) => EXIT_NEGATIVE,
            _ => EXIT_USAGE,
        };
        CliError {
            code: e.code(),
            message: e.to_string(),
            exit,
        }
    }
}

/// What a command produced: the rendered output and the exit status to use.
struct Outcome {
    body: String,
    exit: u8,
}

impl Outcome {
    fn ok(body: String) -> Self {
        Outcome { body, exit: 0 }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            CliError::usage(first.trim_start_matches("error: ")).report();
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            e.report();
            ExitCode::from(e.exit)
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let (globals, file) = config::load_config(&cli)?;
    init_threads(&globals)?;
    let format = globals.format.unwrap_or(Format::Json);
    let outcome = match &cli.command {
        Command::Expand(a) => cmd_expand(config::merge(a, file)?, format)?,
        Command::Boost(a) => cmd_boost(config::merge(a, file)?, format)?,
        Command::Smooth(a) => cmd_smooth(config::merge(a, file)?, format)?,
        Command::DecideK2(a) => cmd_decide_k2(config::merge(a, file)?, format)?,
        Command::Maxcorr(a) => cmd_maxcorr(config::merge(a, file)?, format)?,
        Command::Table(a) => cmd_table(config::merge(a, file)?, format)?,
    };
    write_output(globals.output.as_deref(), &outcome.body)?;
    Ok(outcome.exit)
}

fn init_threads(globals: &Globals) -> Result<(), CliError> {
    let threads = match globals.threads {
        Some(t) => Some(t),
        None => match std::env::var("GAUSS_NISIM_THREADS") {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| CliError::usage(format!("GAUSS_NISIM_THREADS={v:?} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::usage("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::usage(format!("cannot start thread pool: {e}")))?;
        info!("using {t} worker threads");
    }
    Ok(())
}

fn write_output(path: Option<&Path>, body: &str) -> Result<(), CliError> {
    let io_err = |e: std::io::Error| CliError {
        code: "IO",
        message: e.to_string(),
        exit: EXIT_FAILURE,
    };
    match path {
        Some(p) => fs::write(p, ensure_newline(body)).map_err(io_err),
        None => std::io::stdout()
            .write_all(ensure_newline(body).as_bytes())
            .map_err(io_err),
    }
}

fn ensure_newline(s: &str) -> String {
    if s.ends_with('\n') {
        s.to_owned()
    } else {
        format!("{s}\n")
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError {
        code: "IO",
        message: format!("cannot read {}: {e}", path.display()),
        exit: EXIT_USAGE,
    })
}

fn load_function(path: &Option<PathBuf>, flag: &str) -> Result<VectorFunction, CliError> {
    let path = required(path.as_ref(), flag)?;
    let spec = FunctionSpec::from_json(&read_file(path)?)
        .map_err(|e| CliError::usage(format!("{}: not a function spec: {e}", path.display())))?;
    Ok(spec.build()?)
}

fn required<T>(v: Option<T>, flag: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::usage(format!("missing --{flag}")))
}

fn to_json<T: Serialize + ?Sized>(v: &T) -> Result<String, CliError> {
    gauss_nisim::json::to_string(v).map_err(|e| NisimError::from(e).into())
}

/// `ρ` from exactly one of `rho` and `t`.
fn resolve_rho(rho: Option<f64>, t: Option<f64>) -> Result<f64, CliError> {
    match (rho, t) {
        (Some(r), None) => {
            if !(-1.0..=1.0).contains(&r) {
                return Err(NisimError::InvalidRho(r).into());
            }
            Ok(r)
        }
        (None, Some(t)) => {
            if !(t >= 0.0) {
                return Err(NisimError::NegativeTime(t).into());
            }
            Ok((-t).exp())
        }
        (Some(_), Some(_)) => Err(CliError::usage("give exactly one of --rho and --t")),
        (None, None) => Err(CliError::usage("missing --rho or --t")),
    }
}

/// Logs the seed and stream layout of a randomized run to stderr.
fn announce_seed(command: &str, seed: u64, layout: Value) {
    eprintln!("{}", json!({ "command": command, "seed": seed, "streams": layout }));
}

fn method_of(
    method: Option<MethodArg>,
    samples: Option<usize>,
    seed: Option<u64>,
    command: &str,
) -> Result<Method, CliError> {
    match method.unwrap_or(MethodArg::Quadrature) {
        MethodArg::Quadrature => Ok(Method::Quadrature),
        MethodArg::Mc => {
            let seed = required(seed, "seed (required with --method mc)")?;
            let samples = samples.unwrap_or(100_000);
            announce_seed(command, seed, json!({ "design": streams::EXPAND }));
            Ok(Method::MonteCarlo { samples, seed })
        }
    }
}

fn csv_unsupported(command: &str) -> CliError {
    CliError::usage(format!("{command} has no csv output"))
}

fn cmd_expand(a: ExpandArgs, format: Format) -> Result<Outcome, CliError> {
    if format == Format::Csv {
        return Err(csv_unsupported("expand"));
    }
    let f = load_function(&a.function, "function")?;
    let degree = required(a.degree, "degree")?;
    let method = method_of(a.method, a.samples, a.seed, "expand")?;
    let e = expand(&f, degree, method)?;
    Ok(Outcome::ok(e.to_json()?))
}

fn cmd_boost(a: BoostArgs, format: Format) -> Result<Outcome, CliError> {
    let f = load_function(&a.function, "function")?;
    let degree = required(a.degree, "degree")?;
    let delta = required(a.delta, "delta")?;
    let method = method_of(a.method, a.samples, a.seed, "boost")?;
    let m = boost_match(&f, degree, delta, method)?;
    if let Some(p) = &a.trace {
        write_output(Some(p), &m.result.trace_csv())?;
    }
    if format == Format::Csv {
        return Ok(Outcome::ok(m.result.trace_csv()));
    }
    let mut doc: Value = serde_json::from_str(&m.result.to_json()?).map_err(NisimError::from)?;
    let obj = doc.as_object_mut().expect("boost result is an object");
    obj.insert("spectral_mismatch".into(), json!(m.mismatch));
    obj.insert("alpha_gap".into(), json!(m.alpha_gap));
    obj.insert("alpha_norm_sq".into(), json!(m.alpha_norm_sq));
    Ok(Outcome::ok(to_json(&doc)?))
}

fn cmd_smooth(a: SmoothArgs, format: Format) -> Result<Outcome, CliError> {
    if format == Format::Csv {
        return Err(csv_unsupported("smooth"));
    }
    let f = load_function(&a.f, "f")?;
    let g = load_function(&a.g, "g")?;
    let rho = resolve_rho(a.rho, a.t)?;
    if rho <= 0.0 {
        return Err(CliError::usage("smooth needs positive correlation (t finite)"));
    }
    let t = a.t.unwrap_or(-rho.ln());
    let delta = required(a.delta, "delta")?;
    let seed = required(a.seed, "seed")?;
    let mut cfg = SmoothConfig {
        seed,
        ..SmoothConfig::default()
    };
    if let Some(n) = a.samples {
        cfg.samples = n;
    }
    if let Some(c) = a.multiplier {
        cfg.multiplier = c;
    }
    if let Some(cap) = a.degree_cap {
        cfg.smoothing.degree_cap = cap;
    }
    announce_seed(
        "smooth",
        seed,
        json!({
            "f_side": streams::PIPELINE_F,
            "g_side": streams::PIPELINE_G,
            "moments": cfg.smoothing.stream,
            "report_seed": seed ^ streams::REPORT,
        }),
    );
    match smooth(&f, &g, t, delta, &cfg) {
        Ok(out) => Ok(Outcome::ok(out.to_json()?)),
        Err(NisimError::ReportViolation(out)) => {
            let err = CliError::from(NisimError::ReportViolation(out.clone()));
            err.report();
            Ok(Outcome {
                body: out.to_json()?,
                exit: EXIT_NEGATIVE,
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_decide_k2(a: DecideArgs, format: Format) -> Result<Outcome, CliError> {
    if format == Format::Csv {
        return Err(csv_unsupported("decide-k2"));
    }
    let rho = resolve_rho(a.rho, a.t)?;
    let mu = required(a.mu, "mu")?;
    let [mu1, mu2] = mu[..] else {
        return Err(CliError::usage("--mu takes two values"));
    };
    let eta = required(a.eta, "eta")?;
    let target = BinaryTarget::new(mu1, mu2, eta)?;
    let verdict = decide_k2(
        rho,
        &target,
        a.delta.unwrap_or(gauss_nisim::feasibility::DEFAULT_BOUNDARY_TOL),
    )?;
    let exit = if verdict.is_feasible() { 0 } else { EXIT_NEGATIVE };
    Ok(Outcome {
        body: to_json(&verdict)?,
        exit,
    })
}

fn cmd_maxcorr(a: MaxcorrArgs, format: Format) -> Result<Outcome, CliError> {
    let path = required(a.joint.as_ref(), "joint")?;
    let joint = FiniteJoint::from_json(&read_file(path)?)?;
    let mc = max_correlation(&joint)?;
    if mc.degenerate {
        log::warn!("degenerate marginal; maximal correlation reported as 0");
    }
    Ok(Outcome::ok(match format {
        Format::Json => to_json(&mc)?,
        Format::Csv => format!("{:?}", mc.rho),
    }))
}

/// Reads a table file: a `JointTable` document or a bare matrix.
fn load_table(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let text = read_file(path)?;
    if let Ok(t) = JointTable::from_json(&text) {
        return Ok(t.entries);
    }
    serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: not a table: {e}", path.display())))
}

fn cmd_table(a: TableArgs, format: Format) -> Result<Outcome, CliError> {
    let f = load_function(&a.f, "f")?;
    let g = load_function(&a.g, "g")?;
    let rho = resolve_rho(a.rho, a.t)?;
    let seed = required(a.seed, "seed")?;
    let samples = a.samples.unwrap_or(1_000_000);
    announce_seed("table", seed, json!({ "pairs": "batch index 0..100" }));
    let table = estimate_table(&f, &g, rho, samples, seed)?;
    let mut tv = serde_json::Map::new();
    if let Some(p) = &a.compare {
        let other = load_table(p)?;
        tv.insert("compare".into(), json!(tv_distance(&table.entries, &other)?));
    }
    if a.compare_product {
        let (r, c) = (table.row_sums(), table.col_sums());
        let product: Vec<Vec<f64>> = r.iter().map(|ri| c.iter().map(|cj| ri * cj).collect()).collect();
        tv.insert("product".into(), json!(tv_distance(&table.entries, &product)?));
    }
    let body = match format {
        Format::Csv => table.to_csv(),
        Format::Json => {
            let mut doc = serde_json::to_value(&table).map_err(NisimError::from)?;
            if !tv.is_empty() {
                tv.insert("aggregate_se".into(), json!(table.aggregate_se()));
                doc.as_object_mut()
                    .expect("table is an object")
                    .insert("tv".into(), Value::Object(tv));
            }
            to_json(&doc)?
        }
    };
    Ok(Outcome::ok(body))
}
