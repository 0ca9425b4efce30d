mod suites;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use noisestab::discrete::plurality_stability_table;
use noisestab::estimate::DEFAULT_SEED;
use noisestab::partitions::PartitionSpec;
use noisestab::stability::{noise_stability, partition_stability};
use noisestab::{Budget, Correlation, Error, Estimate, Mode};
use serde_json::{json, Value};

const SCHEMA: &str = "1";
/// Gaussian points used to check that a partition file covers space.
const COVER_PROBES: u64 = 20_000;

#[derive(Parser)]
#[command(name = "noisestab", version, about = "Gaussian noise stability of partitions and plurality")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Correlation used by `stability`, `verify` and `plurality`.
    #[arg(long, global = true, default_value_t = 0.5, allow_negative_numbers = true)]
    rho: f64,
    /// Monte Carlo sample count where sampling is needed.
    #[arg(long, global = true, default_value_t = 200_000)]
    budget: u64,
    /// Root seed; omitted means the recorded default.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 keeps the default of one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, global = true, value_enum, default_value_t = EvalMode::Auto)]
    mode: EvalMode,
    /// Multiplies every two-sided tolerance in `verify`.
    #[arg(long, global = true, default_value_t = 1.0)]
    tolerance_scale: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    Auto,
    Quadrature,
    MonteCarlo,
}

#[derive(Subcommand)]
enum Command {
    /// Noise stability of the partition in a JSON file.
    Stability {
        partition: PathBuf,
        /// Also report the stability of each cell.
        #[arg(long)]
        per_cell: bool,
    },
    /// Run a verification suite; exits 5 if any check fails.
    Verify { suite: String },
    /// Stability over a grid of correlations, one row per value.
    Sweep {
        partition: PathBuf,
        /// Comma-separated correlations.
        #[arg(long, default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", allow_hyphen_values = true)]
        grid: String,
    },
    /// Noise stability of plurality on m candidates for several electorate sizes.
    Plurality {
        #[arg(long, default_value_t = 3)]
        m: usize,
        /// Comma-separated voter counts.
        #[arg(long, default_value = "1,3,5,7")]
        n: String,
    },
}

enum Failure {
    Parse(String),
    Validation(String),
    UnknownSuite(String),
    Tolerance,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Validation(_) => 3,
            Failure::UnknownSuite(_) => 4,
            Failure::Tolerance => 5,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(m) => Failure::Parse(m),
            e => Failure::Validation(e.to_string()),
        }
    }
}

struct Context {
    seed: u64,
    budget: Budget,
    format: Format,
    scale: f64,
}

fn header(ctx: &Context, command: &str) -> String {
    format!("# noisestab schema={SCHEMA} command={command} seed={}\n", ctx.seed)
}

fn json_estimate(e: &Estimate) -> Value {
    json!({ "value": e.value, "std_error": e.std_error, "method": method(e) })
}

fn method(e: &Estimate) -> &'static str {
    match e.method {
        noisestab::Method::ClosedForm => "closed-form",
        noisestab::Method::Quadrature => "quadrature",
        noisestab::Method::MonteCarlo => "monte-carlo",
    }
}

fn read_partition(path: &Path) -> Result<PartitionSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    let p = PartitionSpec::from_json(&text).map_err(|e| match e {
        Error::Parse(m) => Failure::Parse(format!("{}: {m}", path.display())),
        e => Failure::Validation(format!("{}: {e}", path.display())),
    })?;
    p.check_cover(COVER_PROBES, DEFAULT_SEED).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok(p)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, Failure> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
    if items.is_empty() {
        return Err(Failure::Validation(format!("empty {what}")));
    }
    items.iter().map(|t| t.parse().map_err(|_| Failure::Parse(format!("bad {what} entry {t:?}")))).collect()
}

fn stability(ctx: &Context, path: &Path, rho: Correlation, per_cell: bool) -> Result<String, Failure> {
    let p = read_partition(path)?;
    let total = partition_stability(&p, rho, &ctx.budget)?;
    let cells = if per_cell {
        p.cells().iter().map(|c| noise_stability(c, rho, &ctx.budget)).collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    Ok(match ctx.format {
        Format::Json => {
            let mut v = json!({
                "schema": SCHEMA,
                "command": "stability",
                "seed": ctx.seed,
                "partition": path.display().to_string(),
                "rho": rho.value(),
                "stability": json_estimate(&total),
            });
            if per_cell {
                v["cells"] = Value::Array(cells.iter().map(json_estimate).collect());
            }
            format!("{v:#}\n")
        }
        Format::Csv => {
            let mut s = header(ctx, "stability");
            s.push_str("cell,rho,value,std_error,method\n");
            s.push_str(&format!("all,{},{},{},{}\n", rho.value(), total.value, total.std_error, method(&total)));
            for (i, c) in cells.iter().enumerate() {
                s.push_str(&format!("{i},{},{},{},{}\n", rho.value(), c.value, c.std_error, method(c)));
            }
            s
        }
    })
}

fn sweep(ctx: &Context, path: &Path, grid: &str) -> Result<String, Failure> {
    let p = read_partition(path)?;
    let rhos: Vec<f64> = parse_list(grid, "grid")?;
    let rhos = rhos.into_iter().map(Correlation::new).collect::<Result<Vec<_>, _>>()?;
    let rows = rhos
        .iter()
        .enumerate()
        .map(|(k, r)| Ok((*r, partition_stability(&p, *r, &ctx.budget.with_seed(ctx.seed.wrapping_add(k as u64)))?)))
        .collect::<Result<Vec<_>, Failure>>()?;
    Ok(match ctx.format {
        Format::Json => {
            let rows: Vec<Value> = rows
                .iter()
                .enumerate()
                .map(|(k, (r, e))| json!({ "rho": r.value(), "seed": ctx.seed.wrapping_add(k as u64), "stability": json_estimate(e) }))
                .collect();
            let v = json!({ "schema": SCHEMA, "command": "sweep", "seed": ctx.seed, "partition": path.display().to_string(), "rows": rows });
            format!("{v:#}\n")
        }
        Format::Csv => {
            let mut s = header(ctx, "sweep");
            s.push_str("rho,value,std_error,method,seed\n");
            for (k, (r, e)) in rows.iter().enumerate() {
                s.push_str(&format!("{},{},{},{},{}\n", r.value(), e.value, e.std_error, method(e), ctx.seed.wrapping_add(k as u64)));
            }
            s
        }
    })
}

fn plurality(ctx: &Context, m: usize, ns: &str, rho: f64) -> Result<String, Failure> {
    let ns: Vec<usize> = parse_list(ns, "voter list")?;
    if ns.contains(&0) {
        return Err(Failure::Validation("voter counts must be positive".into()));
    }
    let table = plurality_stability_table(m, rho, &ns, ctx.budget.samples, ctx.seed)?;
    Ok(match ctx.format {
        Format::Csv => format!("{}{}", header(ctx, "plurality"), table.to_csv()),
        Format::Json => {
            let mut v = serde_json::to_value(&table).map_err(|e| Failure::Validation(e.to_string()))?;
            v["schema"] = json!(SCHEMA);
            v["command"] = json!("plurality");
            v["seed"] = json!(ctx.seed);
            format!("{v:#}\n")
        }
    })
}

fn verify(ctx: &Context, suite: &str, rho: Correlation) -> Result<(String, bool), Failure> {
    let cfg = suites::Config { rho, budget: ctx.budget };
    let checks = suites::run(suite, &cfg)
        .ok_or_else(|| Failure::UnknownSuite(format!("unknown suite {suite:?}; expected one of {}", suites::SUITES.join(", "))))??;
    let passed = checks.iter().all(|c| c.passed(ctx.scale));
    let out = match ctx.format {
        Format::Json => {
            let v = json!({
                "schema": SCHEMA,
                "command": "verify",
                "suite": suite,
                "seed": ctx.seed,
                "rho": rho.value(),
                "tolerance_scale": ctx.scale,
                "passed": passed,
                "checks": checks.iter().map(|c| c.to_json(ctx.scale)).collect::<Vec<_>>(),
            });
            format!("{v:#}\n")
        }
        Format::Csv => {
            let mut s = header(ctx, "verify");
            s.push_str("suite,name,value,reference,tolerance,passed\n");
            for c in &checks {
                s.push_str(&format!("{suite},\"{}\",{},{},{},{}\n", c.name, c.value, c.reference, c.tolerance, c.passed(ctx.scale)));
            }
            s
        }
    };
    Ok((out, passed))
}

fn run(cli: Cli) -> Result<String, (Failure, Option<String>)> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| (Failure::Validation(e.to_string()), None))?;
    }
    if !(cli.tolerance_scale.is_finite() && cli.tolerance_scale > 0.0) {
        return Err((Failure::Validation("tolerance scale must be positive".into()), None));
    }
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let mode = match cli.mode {
        EvalMode::Auto => Mode::Auto,
        EvalMode::Quadrature => Mode::Quadrature,
        EvalMode::MonteCarlo => Mode::MonteCarlo,
    };
    let ctx = Context { seed, budget: Budget { samples: cli.budget, seed, mode }, format: cli.format, scale: cli.tolerance_scale };
    let rho = || Correlation::new(cli.rho).map_err(|e| (Failure::from(e), None));
    match &cli.command {
        Command::Stability { partition, per_cell } => stability(&ctx, partition, rho()?, *per_cell).map_err(|f| (f, None)),
        Command::Sweep { partition, grid } => sweep(&ctx, partition, grid).map_err(|f| (f, None)),
        Command::Plurality { m, n } => plurality(&ctx, *m, n, cli.rho).map_err(|f| (f, None)),
        Command::Verify { suite } => match verify(&ctx, suite, rho()?) {
            Ok((out, true)) => Ok(out),
            Ok((out, false)) => Err((Failure::Tolerance, Some(out))),
            Err(f) => Err((f, None)),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err((failure, out)) => {
            if let Some(out) = out {
                print!("{out}");
            }
            match &failure {
                Failure::Parse(m) => eprintln!("parse error: {m}"),
                Failure::Validation(m) => eprintln!("invalid input: {m}"),
                Failure::UnknownSuite(m) => eprintln!("{m}"),
                Failure::Tolerance => eprintln!("verification failed"),
            }
            ExitCode::from(failure.code())
        }
    }
}
