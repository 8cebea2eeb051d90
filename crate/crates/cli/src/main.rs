mod config;
mod report;

use std::fs::File;
use std::io::{self, Write};
use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use duiopt::generator::{run_sweep, write_csv, Axis, SweepSpec};
use duiopt::live::LiveSession;
use duiopt::oracle;
use duiopt::OracleError;
use duiopt::{formulate, solve, FormulationError, ProblemInstance, Session, SolveOptions, SolveStatus};
use duiopt_service::ServeConfig;

use config::FileConfig;

/// Exit codes.
const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 1;
const EXIT_INFEASIBLE: u8 = 2;
const EXIT_TOO_LARGE: u8 = 3;
const EXIT_TIME_LIMIT: u8 = 4;

#[derive(Parser)]
#[command(name = "duiopt", version, about = "Assign UI elements to users' devices")]
struct Cli {
    /// TOML file with defaults for the solver and server flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one scenario file and print the assignment as JSON.
    Solve {
        scenario: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        /// Where to write the result; `-` is stdout.
        #[arg(long, short, default_value = "-")]
        output: String,
        /// Also write the model in LP format to this file.
        #[arg(long)]
        lp_dump: Option<PathBuf>,
    },
    /// Solve a small scenario by exhaustive enumeration.
    Oracle {
        scenario: PathBuf,
        #[arg(long, short, default_value = "-")]
        output: String,
    },
    /// Time the solver over generated scenarios and write CSV.
    Bench(BenchArgs),
    /// Serve a live session over websocket and NDJSON.
    Serve {
        scenario: PathBuf,
        #[arg(long, env = "DUIOPT_PORT")]
        port: Option<u16>,
        #[arg(long)]
        ndjson_port: Option<u16>,
        /// Static files to serve at `/`.
        #[arg(long)]
        assets: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Args, Clone, Default)]
struct SolverArgs {
    /// Relative optimality gap at which to stop.
    #[arg(long)]
    gap: Option<f64>,
    #[arg(long)]
    time_limit_ms: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    /// elements, devices, users or realistic.
    #[arg(long, default_value = "elements")]
    axis: Axis,
    /// Comma-separated values for the swept axis.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 15])]
    points: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    #[arg(long, default_value_t = 10)]
    elements: usize,
    #[arg(long, default_value_t = 5)]
    devices: usize,
    #[arg(long, default_value_t = 3)]
    users: usize,
    /// Shorthand for `--axis realistic`.
    #[arg(long)]
    realistic: bool,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long, short, default_value = "-")]
    output: String,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_INPUT } else { EXIT_OK });
        }
    };
    let outcome = match config::load(cli.config.as_deref()) {
        Ok(file) => run(cli.command, &file),
        Err(e) => Err(Failure::new(EXIT_INPUT, e)),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command, file: &FileConfig) -> Outcome {
    match command {
        Command::Solve { scenario, solver, output, lp_dump } => cmd_solve(&scenario, &options(&solver, file), &output, lp_dump.as_deref()),
        Command::Oracle { scenario, output } => cmd_oracle(&scenario, &output),
        Command::Bench(args) => cmd_bench(args, file),
        Command::Serve { scenario, port, ndjson_port, assets, solver } => {
            let port = port.or(file.port).unwrap_or(8080);
            let ndjson_port = ndjson_port.or(file.ndjson_port);
            let assets = assets.or_else(|| file.assets.clone());
            cmd_serve(&scenario, options(&solver, file), port, ndjson_port, assets)
        }
    }
}

/// Command-line flags win over the config file.
fn options(args: &SolverArgs, file: &FileConfig) -> SolveOptions {
    let mut opts = SolveOptions::with_gap(args.gap.or(file.gap).unwrap_or(0.0));
    opts.time_limit_millis = args.time_limit_ms.or(file.time_limit_ms);
    opts
}

fn load(path: &Path) -> Result<ProblemInstance, Failure> {
    let inst = ProblemInstance::load(path).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let violations = inst.validate();
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
        return Err(Failure::new(EXIT_INPUT, format!("{} is not a valid scenario:\n{}", path.display(), list.join("\n"))));
    }
    Ok(inst)
}

fn open_output(target: &str) -> Result<Box<dyn Write>, Failure> {
    if target == "-" {
        return Ok(Box::new(io::stdout().lock()));
    }
    File::create(target)
        .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot write {target}: {e}")))
}

fn write_json(target: &str, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut out = open_output(target)?;
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .map_err(|e| Failure::new(EXIT_INPUT, format!("cannot write {target}: {e}")))
}

fn pin_failure(e: FormulationError) -> Failure {
    Failure::new(EXIT_INFEASIBLE, e.to_string())
}

fn cmd_solve(path: &Path, opts: &SolveOptions, output: &str, lp_dump: Option<&Path>) -> Outcome {
    let inst = load(path)?;
    let milp = formulate(&inst).map_err(pin_failure)?;
    if let Some(lp) = lp_dump {
        std::fs::write(lp, milp.to_lp_format()).map_err(|e| Failure::new(EXIT_INPUT, format!("cannot write {}: {e}", lp.display())))?;
    }
    log::info!("{} binaries, {} constraints", milp.n_binaries(), milp.constraints.len());
    let sol = solve(&milp, opts);
    log::info!("{} after {} ms and {} nodes", sol.status.as_str(), sol.solve_millis, sol.nodes);
    if sol.status == SolveStatus::Infeasible {
        return Err(Failure::new(EXIT_INFEASIBLE, "no assignment satisfies the constraints"));
    }
    write_json(output, &report::SolveReport::new(&inst, &sol))?;
    Ok(match sol.status {
        SolveStatus::TimeLimit | SolveStatus::Cancelled => EXIT_TIME_LIMIT,
        _ => EXIT_OK,
    })
}

fn cmd_oracle(path: &Path, output: &str) -> Outcome {
    let inst = load(path)?;
    let result = oracle::enumerate(&inst).map_err(|e| match e {
        OracleError::TooLarge { .. } => Failure::new(EXIT_TOO_LARGE, e.to_string()),
    })?;
    if !result.is_feasible() {
        return Err(Failure::new(EXIT_INFEASIBLE, "no assignment satisfies the constraints"));
    }
    write_json(output, &report::OracleReport::new(&inst, &result))?;
    Ok(EXIT_OK)
}

fn cmd_bench(args: BenchArgs, file: &FileConfig) -> Outcome {
    let spec = SweepSpec {
        axis: if args.realistic { Axis::UsersAndDevices } else { args.axis },
        elements: args.elements,
        devices: args.devices,
        users: args.users,
        points: args.points,
        seeds: args.seeds,
        options: options(&args.solver, file),
    };
    spec.validate().map_err(|e| Failure::new(EXIT_INPUT, e))?;
    let rows = run_sweep(&spec, |r| {
        log::info!("point {} seed {}: {} in {} ms (gap {:.4})", r.axis_value, r.seed, r.status, r.wall_ms, r.gap)
    });
    let out = open_output(&args.output)?;
    write_csv(&rows, out).map_err(|e| Failure::new(EXIT_INPUT, format!("cannot write {}: {e}", args.output)))?;
    Ok(EXIT_OK)
}

fn cmd_serve(path: &Path, opts: SolveOptions, port: u16, ndjson_port: Option<u16>, assets: Option<PathBuf>) -> Outcome {
    let inst = load(path)?;
    formulate(&inst).map_err(pin_failure)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let live = LiveSession::start(Session::new(inst, opts));
    let any = IpAddr::V4(Ipv4Addr::UNSPECIFIED);
    let mut config = ServeConfig::new(SocketAddr::new(any, port));
    config.ndjson_addr = ndjson_port.map(|p| SocketAddr::new(any, p));
    config.assets = assets;
    let served = runtime.block_on(async {
        let server = duiopt_service::serve(live.clone(), config).await?;
        tokio::signal::ctrl_c().await?;
        log::info!("shutting down");
        server.shutdown().await;
        io::Result::Ok(())
    });
    live.shutdown();
    served.map(|_| EXIT_OK).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))
}
