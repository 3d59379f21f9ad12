use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ewcell_core::field::{self, Quantity};
use ewcell_core::io::{self, read_result_bundle, write_result_bundle};
use ewcell_core::model::{Axis, Vec3};
use ewcell_core::{solve_cell, ResultBundle, RunOptions, TraceParams};
use ewcell_service::ServiceConfig;
use thiserror::Error;

#[derive(Parser)]
#[command(
    name = "ewcell",
    version,
    about = "Electrowinning cell potential and current-density simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a cell configuration and write a result bundle.
    Solve(SolveArgs),
    /// Trace current streamlines from electrode surfaces into a JSON file.
    Trace(TraceArgs),
    /// Write a plane of V or |J| as a CSV matrix.
    Slice(SliceArgs),
    /// Write the per-face normal current of an electrode as CSV.
    Deposit(DepositArgs),
    /// Print V, J and |J| at a point as one JSON line.
    Probe(ProbeArgs),
    /// Run the HTTP job service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Potential change tolerance in volts.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_sweeps: Option<usize>,
    /// Over-relaxation factor for the electrolyte sweep.
    #[arg(long)]
    omega: Option<f64>,
    /// Damping of the floating-electrode potential update.
    #[arg(long)]
    lambda: Option<f64>,
    /// Red-black sweeps on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct TraceArgs {
    #[arg(long)]
    result: PathBuf,
    /// Electrode to seed from; repeat or separate with commas. All when omitted.
    #[arg(long, value_delimiter = ',')]
    electrode: Vec<String>,
    #[arg(long, default_value_t = 1)]
    density: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    error_tolerance: Option<f64>,
    #[arg(long)]
    max_vertices: Option<usize>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    axis: Axis,
    #[arg(long, allow_negative_numbers = true)]
    coord: f64,
    #[arg(long, default_value = "V")]
    quantity: Quantity,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DepositArgs {
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    electrode: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    result: PathBuf,
    /// Point as x,y,z in metres.
    #[arg(long, value_parser = parse_point, allow_hyphen_values = true)]
    at: Vec3,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Jobs solved at the same time.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = 16)]
    queue: usize,
}

fn parse_point(s: &str) -> Result<Vec3, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected x,y,z, got `{s}`"));
    }
    let mut p = [0.0; 3];
    for (slot, part) in p.iter_mut().zip(parts) {
        *slot = part
            .trim()
            .parse()
            .map_err(|_| format!("`{part}` is not a number"))?;
    }
    Ok(p)
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("solver stopped after {sweeps} sweeps without converging (residual {residual:e}); bundle written to {}", .out.display())]
    NotConverged {
        sweeps: usize,
        residual: f64,
        out: PathBuf,
    },
    #[error("{0}")]
    Service(std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) | CliError::Service(_) => 2,
            CliError::NotConverged { .. } => 3,
        }
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn load(dir: &Path) -> Result<ResultBundle, CliError> {
    read_result_bundle(dir).map_err(invalid)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| invalid(format!("cannot write {}: {e}", path.display())))
}

fn solve(args: SolveArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| invalid(format!("cannot read {}: {e}", args.config.display())))?;
    let mut config = io::parse_cell_config(&text).map_err(invalid)?;
    let s = &mut config.solver;
    if let Some(v) = args.tol {
        s.tolerance = v;
    }
    if let Some(v) = args.max_sweeps {
        s.max_sweeps = v;
    }
    if let Some(v) = args.omega {
        s.relaxation_factor = v;
    }
    if let Some(v) = args.lambda {
        s.floating_damping = v;
    }
    let mut observer = |p: ewcell_core::Progress| {
        if p.sweep.is_multiple_of(500) {
            log::info!("sweep {} residual {:e}", p.sweep, p.residual);
        }
    };
    let options = RunOptions {
        parallel: args.parallel,
    };
    let bundle = solve_cell(&config, options, &mut observer).map_err(invalid)?;
    let digest = write_result_bundle(&args.out, &bundle).map_err(invalid)?;
    log::info!("wrote {} (manifest sha256 {digest})", args.out.display());
    println!(
        "{}",
        serde_json::to_string(&bundle.report).expect("report serializes")
    );
    if bundle.report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged {
            sweeps: bundle.report.sweeps,
            residual: bundle.report.final_residual,
            out: args.out,
        })
    }
}

fn trace(args: TraceArgs) -> Result<(), CliError> {
    let bundle = load(&args.result)?;
    let mut params = TraceParams {
        density: args.density,
        ..TraceParams::for_grid(&bundle.grid)
    };
    if let Some(v) = args.max_step {
        params.max_step = v;
        params.initial_step = params.initial_step.min(v);
    }
    if let Some(v) = args.error_tolerance {
        params.error_tolerance = v;
    }
    if let Some(v) = args.max_vertices {
        params.max_vertices = v;
    }
    let ids: Vec<&str> = if args.electrode.is_empty() {
        bundle
            .grid
            .electrodes
            .iter()
            .map(|e| e.id.as_str())
            .collect()
    } else {
        args.electrode.iter().map(String::as_str).collect()
    };
    let set = ewcell_core::trace::trace_all(&bundle.grid, &bundle.fields, &ids, &params)
        .map_err(invalid)?;
    log::info!("traced {} lines", set.line_count());
    write(&args.out, &io::streamlines_to_json(&set))
}

fn slice(args: SliceArgs) -> Result<(), CliError> {
    let bundle = load(&args.result)?;
    let image = field::extract_slice(
        &bundle.grid,
        &bundle.fields,
        args.axis,
        args.coord,
        args.quantity,
    )
    .map_err(invalid)?;
    write(&args.out, &io::slice_to_csv(&image))
}

fn deposit(args: DepositArgs) -> Result<(), CliError> {
    let bundle = load(&args.result)?;
    let map = field::normal_current_map(&bundle.grid, &bundle.fields, &args.electrode)
        .map_err(invalid)?;
    write(&args.out, &io::deposit_to_csv(&map))
}

fn probe(args: ProbeArgs) -> Result<(), CliError> {
    let bundle = load(&args.result)?;
    let sample = field::probe(&bundle.grid, &bundle.fields, args.at).map_err(invalid)?;
    println!(
        "{}",
        serde_json::to_string(&sample).expect("sample serializes")
    );
    Ok(())
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let config = ServiceConfig {
        results_dir: Some(args.results),
        queue_capacity: args.queue,
        workers: args.workers,
        ..ServiceConfig::default()
    };
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::Service)?;
    runtime
        .block_on(ewcell_service::serve(
            config,
            SocketAddr::new(args.host, args.port),
        ))
        .map_err(CliError::Service)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EWCELL_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Trace(a) => trace(a),
        Command::Slice(a) => slice(a),
        Command::Deposit(a) => deposit(a),
        Command::Probe(a) => probe(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
