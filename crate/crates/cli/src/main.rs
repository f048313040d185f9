use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dtm::evs::{validate_partition, PlanFile};
use dtm::experiment::{
    cartesian_grid, impedance_sweep, map_delays, mesh_experiment, run_case, verify_suite, write_sweep,
    ExperimentConfig, Impedance, MeshSpec, RunMode, Topology,
};
use dtm::graph::graph_from_system;
use dtm::io::{load_system, write_matrix_market, write_vector};
use dtm::sim::{ConvergenceCriterion, RecordMode};
use dtm::{DtlpSpec, Partition, SymmetricSystem};

#[derive(Parser)]
#[command(name = "dtm", version, about = "Asynchronous directed transmission solver for sparse SPD systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Apply a split plan and report whether the pieces reassemble.
    Partition(PartitionArgs),
    /// Asynchronous run (or synchronous with --mode vtm).
    Run(RunArgs),
    /// Synchronous sweeps; delays are ignored.
    Vtm(RunArgs),
    /// Sweep line pair impedances over a grid.
    Sweep(SweepArgs),
    /// Generated grid system torn into blocks on a random-delay processor mesh.
    MeshDemo(MeshArgs),
    /// Randomized checks of the spectral convergence machinery.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SystemArgs {
    /// Matrix Market file holding A.
    #[arg(long)]
    system: PathBuf,
    /// Right-hand side, one value per line.
    #[arg(long)]
    rhs: PathBuf,
    /// Split plan (ASSIGN, B, BE lines; SPLIT sections for refinements).
    #[arg(long)]
    plan: PathBuf,
}

#[derive(Args)]
struct PartitionArgs {
    #[command(flatten)]
    input: SystemArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Async,
    Vtm,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    input: SystemArgs,
    /// A number for every pair, or a file of `Z vertex value` / `DEFAULT value` lines.
    #[arg(long)]
    impedance: String,
    /// `L from to delay` lines; subgraph j runs on processor j. Required for async runs.
    #[arg(long)]
    topology: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 1000.0)]
    t_max: f64,
    /// Time per local solve.
    #[arg(long, default_value_t = 0.0)]
    compute_delay: f64,
    /// Accepted for symmetry with the generators; runs are deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    input: SystemArgs,
    #[arg(long)]
    topology: PathBuf,
    /// Values tried for every pair; the grid is their cartesian product.
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.2,0.5,1")]
    values: Vec<f64>,
    #[arg(long, default_value_t = 100.0)]
    sample_time: f64,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 2000.0)]
    t_max: f64,
    #[arg(long, default_value_t = 0.0)]
    compute_delay: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MeshArgs {
    /// Processors per mesh side.
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    /// Grid cells per block side; the system has (blocks·side + 1)² unknowns.
    #[arg(long, default_value_t = 4)]
    block_side: usize,
    #[arg(long, default_value_t = 10.0)]
    delay_min: f64,
    #[arg(long, default_value_t = 100.0)]
    delay_max: f64,
    #[arg(long, default_value_t = 1.0)]
    impedance: f64,
    #[arg(long, default_value_t = 1.0)]
    compute_delay: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 20000.0)]
    t_max: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    cases: usize,
}

fn load_inputs(args: &SystemArgs) -> Result<(SymmetricSystem, Partition)> {
    let sys = load_system(&args.system, &args.rhs)
        .with_context(|| format!("--system {} / --rhs {}", args.system.display(), args.rhs.display()))?;
    let plan_file = fs::File::open(&args.plan).with_context(|| format!("--plan {}", args.plan.display()))?;
    let plan = PlanFile::read_text(plan_file).with_context(|| format!("--plan {}", args.plan.display()))?;
    let p = plan
        .apply(&graph_from_system(&sys))
        .with_context(|| format!("--plan {}", args.plan.display()))?;
    Ok((sys, p))
}

fn read_topology(path: &Path) -> Result<Topology> {
    let f = fs::File::open(path).with_context(|| format!("--topology {}", path.display()))?;
    Topology::read_text(f).with_context(|| format!("--topology {}", path.display()))
}

fn partition(args: PartitionArgs) -> Result<bool> {
    let (sys, p) = load_inputs(&args.input)?;
    let report = validate_partition(&p, &graph_from_system(&sys))?;
    print!("{report}");
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        p.write_text(fs::File::create(dir.join("partition.txt"))?)?;
        fs::write(dir.join("report.txt"), report.to_string())?;
    }
    Ok(report.reassembly_ok)
}

fn run(args: RunArgs, forced: Option<Mode>) -> Result<bool> {
    let mode = forced.or(args.mode).unwrap_or(Mode::Async);
    let (system, partition) = load_inputs(&args.input)?;
    let z = Impedance::parse_arg(&args.impedance)
        .and_then(|imp| imp.resolve(&partition))
        .with_context(|| format!("--impedance {}", args.impedance))?;
    let dtlps = match (&args.topology, mode) {
        (Some(path), _) => {
            let placement: Vec<usize> = (0..partition.len()).collect();
            map_delays(&partition, &read_topology(path)?, &placement, &z)
                .with_context(|| format!("--topology {}", path.display()))?
        }
        (None, Mode::Vtm) => z.iter().map(|&z| DtlpSpec::new(z, 1.0, 1.0)).collect::<dtm::Result<_>>()?,
        (None, Mode::Async) => bail!("--topology is required for asynchronous runs"),
    };
    let cfg = ExperimentConfig {
        system,
        partition,
        dtlps,
        compute_delay: args.compute_delay,
        criterion: ConvergenceCriterion::residual(args.tol),
        t_max: args.t_max,
        mode: match mode {
            Mode::Async => RunMode::Async,
            Mode::Vtm => RunMode::Vtm,
        },
        record: RecordMode::Full,
    };
    let res = run_case(&cfg, args.out.as_deref())?;
    let mut summary = Vec::new();
    res.trace.write_summary(&mut summary)?;
    print!("{}", String::from_utf8_lossy(&summary));
    if let Some(e) = res.final_error {
        println!("final_error={e:e}");
    }
    Ok(res.trace.converged_at.is_some())
}

fn sweep(args: SweepArgs) -> Result<bool> {
    let (system, partition) = load_inputs(&args.input)?;
    let pairs = partition.twin_pairs().len();
    if args.values.len().checked_pow(pairs as u32).is_none_or(|k| k > 10_000) {
        bail!("--values: {} values over {pairs} pairs is too large a grid", args.values.len());
    }
    let placement: Vec<usize> = (0..partition.len()).collect();
    let first = args.values.first().copied().context("--values is empty")?;
    let dtlps = map_delays(&partition, &read_topology(&args.topology)?, &placement, &vec![first; pairs])?;
    let cfg = ExperimentConfig {
        system,
        partition,
        dtlps,
        compute_delay: args.compute_delay,
        criterion: ConvergenceCriterion::residual(args.tol),
        t_max: args.t_max,
        mode: RunMode::Async,
        record: RecordMode::Residual,
    };
    let rows = impedance_sweep(&cfg, &cartesian_grid(&args.values, pairs), args.sample_time)?;
    let mut table = Vec::new();
    write_sweep(&mut table, &rows)?;
    print!("{}", String::from_utf8_lossy(&table));
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir)?;
        fs::write(dir.join("sweep.csv"), &table)?;
    }
    Ok(true)
}

fn mesh_demo(args: MeshArgs) -> Result<bool> {
    let spec = MeshSpec {
        blocks: args.blocks,
        block_side: args.block_side,
        delay_min: args.delay_min,
        delay_max: args.delay_max,
        z: args.impedance,
        compute_delay: args.compute_delay,
        tol: args.tol,
        t_max: args.t_max,
        seed: args.seed,
    };
    let (cfg, mesh) = mesh_experiment(&spec)?;
    println!(
        "unknowns={} subgraphs={} pairs={} links={}",
        cfg.system.dim(),
        cfg.partition.len(),
        cfg.partition.twin_pairs().len(),
        mesh.topology.len()
    );
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir)?;
        write_matrix_market(fs::File::create(dir.join("system.mtx"))?, &cfg.system)?;
        write_vector(fs::File::create(dir.join("rhs.txt"))?, cfg.system.rhs())?;
        mesh.topology.write_text(fs::File::create(dir.join("topology.txt"))?)?;
        cfg.partition.write_text(fs::File::create(dir.join("partition.txt"))?)?;
    }
    let res = run_case(&cfg, args.out.as_deref())?;
    let round_trip = cfg.sim_config().round_trip();
    let above = res
        .trace
        .samples
        .iter()
        .filter(|s| s.time > round_trip && s.rms_residual >= res.trace.initial_rms)
        .count();
    let mut summary = Vec::new();
    res.trace.write_summary(&mut summary)?;
    print!("{}", String::from_utf8_lossy(&summary));
    println!("initial_rms={:e}", res.trace.initial_rms);
    println!("samples_above_initial_after_round_trip={above}");
    Ok(res.trace.converged_at.is_some() && above == 0)
}

fn verify(args: VerifyArgs) -> Result<bool> {
    let checks = verify_suite(args.seed, args.cases)?;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(checks.iter().all(|c| c.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Partition(a) => partition(a),
        Command::Run(a) => run(a, None),
        Command::Vtm(a) => run(a, Some(Mode::Vtm)),
        Command::Sweep(a) => sweep(a),
        Command::MeshDemo(a) => mesh_demo(a),
        Command::Verify(a) => verify(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
