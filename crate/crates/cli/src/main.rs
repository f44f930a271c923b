use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imemplan::area::sweep_imem;
use imemplan::clustering::{build_conflict_matrix, cluster_kernels, ClusterPlan};
use imemplan::placement::{access_frequency, place_clusters, PlacementPlan};
use imemplan::profiler::{profile, Trace};
use imemplan::runtime::Mode;
use imemplan::scenario::{load_scenario, Scenario};
use imemplan::simulator::{
    audit_causality, run_modes, save_event_log, Comparison, Planning, SimOutput, TimingConfig,
};
use imemplan::{Error, Result};

/// Offline kernel clustering and placement for PE-array IMEM banks, plus a
/// discrete-event simulator comparing runtime strategies.
#[derive(Debug, Parser)]
#[command(name = "imemplan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Replay the subband stream on an unbounded array and record kernel activity.
    Profile(ProfileArgs),
    /// Group temporally independent kernel instances into clusters.
    Cluster(ClusterArgs),
    /// Assign clusters to array rectangles.
    Place(PlaceArgs),
    /// Simulate one or all runtime modes and report metrics.
    Simulate(SimulateArgs),
    /// Sweep IMEM capacity and report the array area of each point.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Seed for branch outcomes.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args)]
struct ClusterArgs {
    #[command(flatten)]
    common: Common,
    /// Activity trace CSV; profiled from the scenario when omitted.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// IMEM capacity in bytes; defaults to the scenario hardware limit.
    #[arg(long)]
    imem_limit: Option<u64>,
}

#[derive(Debug, Args)]
struct PlaceArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Cluster plan JSON from `cluster`.
    #[arg(long)]
    clusters: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Cluster plan JSON; computed from the trace when omitted.
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Placement plan JSON; computed from the clusters when omitted.
    #[arg(long, requires = "clusters")]
    plan: Option<PathBuf>,
    /// baseline, dp, pip-dp, fpip-dp or all.
    #[arg(long, default_value = "all", value_parser = parse_modes)]
    mode: ModeSelection,
    #[arg(long)]
    imem_limit: Option<u64>,
    /// JSON file overriding timing constants.
    #[arg(long)]
    timing: Option<PathBuf>,
    /// Worker threads for independent runs.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write per-event logs and audit them for causality.
    #[arg(long)]
    events: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Comma-separated IMEM sizes in bytes.
    #[arg(long, value_delimiter = ',', default_values_t = [1536u64, 3072, 4608, 6144, 7680, 9216])]
    sizes: Vec<u64>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Clone, Debug)]
struct ModeSelection(Vec<Mode>);

fn parse_modes(s: &str) -> std::result::Result<ModeSelection, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(ModeSelection(Mode::ALL.to_vec()));
    }
    s.parse::<Mode>().map(|m| ModeSelection(vec![m])).map_err(|e| e.to_string())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn load_trace(scenario: &Scenario, trace: Option<&Path>, seed: u64) -> Result<Trace> {
    match trace {
        Some(path) => Trace::read_csv(path),
        None => Ok(profile(scenario, seed)),
    }
}

fn cmd_profile(args: ProfileArgs) -> Result<()> {
    let c = &args.common;
    let scenario = load_scenario(&c.scenario)?;
    prepare_out(&c.out)?;
    let trace = profile(&scenario, c.seed);
    let path = c.out.join("trace.csv");
    trace.write_csv(&path)?;
    println!(
        "{} activity records, horizon {} ns, peak activity {} -> {}",
        trace.records.len(),
        trace.horizon,
        trace.peak_activity(),
        path.display()
    );
    Ok(())
}

fn cmd_cluster(args: ClusterArgs) -> Result<()> {
    let c = &args.common;
    let scenario = load_scenario(&c.scenario)?;
    let trace = load_trace(&scenario, args.trace.as_deref(), c.seed)?;
    let limit = args.imem_limit.unwrap_or(scenario.hardware.imem_limit);
    prepare_out(&c.out)?;
    let clusters = cluster_kernels(&trace, &scenario.catalog(), limit)?;
    let path = c.out.join("clusters.json");
    let plan = ClusterPlan {
        imem_limit: limit,
        clusters,
    };
    plan.save(&path)?;
    println!("{} clusters at {} B -> {}", plan.clusters.len(), limit, path.display());
    Ok(())
}

fn cmd_place(args: PlaceArgs) -> Result<()> {
    let c = &args.common;
    let scenario = load_scenario(&c.scenario)?;
    let trace = load_trace(&scenario, args.trace.as_deref(), c.seed)?;
    let clusters = ClusterPlan::load(&args.clusters)?.clusters;
    prepare_out(&c.out)?;
    let plan = place_clusters(
        &clusters,
        scenario.hardware.geometry(),
        &access_frequency(&trace),
        &scenario.entry_kernels(),
    )?;
    let path = c.out.join("plan.json");
    plan.save(&path)?;
    println!("{} clusters placed on {}x{} -> {}", plan.assignments.len(), plan.geometry.rows, plan.geometry.cols, path.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let c = &args.common;
    let mut scenario = load_scenario(&c.scenario)?;
    if let Some(limit) = args.imem_limit {
        scenario.hardware.imem_limit = limit;
    }
    let timing = match &args.timing {
        Some(path) => TimingConfig::load(path)?,
        None => TimingConfig::default(),
    };
    let trace = load_trace(&scenario, args.trace.as_deref(), c.seed)?;
    let planning = match &args.clusters {
        None => Planning::from_trace(&scenario, &trace)?,
        Some(path) => {
            let clusters = ClusterPlan::load(path)?.clusters;
            let plan = match &args.plan {
                Some(p) => PlacementPlan::load(p)?,
                None => place_clusters(
                    &clusters,
                    scenario.hardware.geometry(),
                    &access_frequency(&trace),
                    &scenario.entry_kernels(),
                )?,
            };
            Planning {
                conflict: build_conflict_matrix(&trace),
                clusters,
                plan: Some(plan),
            }
        }
    };
    prepare_out(&c.out)?;
    set_jobs(args.jobs);

    let modes = &args.mode.0;
    let outputs = run_modes(&scenario, modes, &planning, &timing, c.seed)?;
    let comparison = Comparison::from_reports(outputs.iter().map(|(m, o)| (*m, o.report.clone())).collect());

    let mut csv = Vec::new();
    comparison
        .write_csv(&mut csv)
        .expect("writing CSV to memory cannot fail");
    write_file(&c.out.join("metrics.csv"), csv)?;
    write_file(&c.out.join("metrics.json"), comparison.to_json())?;
    for (mode, out) in &outputs {
        write_file(&c.out.join(format!("state_{}.json", mode.name())), out.final_state.snapshot_json())?;
        if args.events {
            write_events(&c.out, *mode, out)?;
        }
    }
    print_table(&comparison);
    Ok(())
}

fn write_events(dir: &Path, mode: Mode, out: &SimOutput) -> Result<()> {
    let path = dir.join(format!("events_{}.csv", mode.name()));
    save_event_log(&out.events, &path)?;
    let violations = audit_causality(&out.events);
    if violations.is_empty() {
        println!("{}: {} events, causality audit clean", mode.label(), out.events.len());
        Ok(())
    } else {
        Err(Error::Invalid {
            what: "event log",
            violations,
        })
    }
}

fn print_table(comparison: &Comparison) {
    let opt = |v: Option<f64>| v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.2}x"));
    println!(
        "{:<8} {:>6} {:>6} {:>6} {:>12} {:>12} {:>10} {:>10}",
        "mode", "hard", "soft", "no", "exec/sb ns", "makespan ns", "vs base", "vs DP"
    );
    for row in &comparison.rows {
        let r = &row.report;
        println!(
            "{:<8} {:>6} {:>6} {:>6} {:>12.1} {:>12} {:>10} {:>10}",
            row.mode.label(),
            r.hard_count,
            r.soft_count,
            r.no_count,
            r.avg_exec_per_subband,
            r.makespan,
            opt(row.speedup_vs_baseline),
            opt(row.speedup_vs_dp)
        );
    }
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let c = &args.common;
    let scenario = load_scenario(&c.scenario)?;
    let trace = load_trace(&scenario, args.trace.as_deref(), c.seed)?;
    prepare_out(&c.out)?;
    set_jobs(args.jobs);
    let sweep = sweep_imem(&scenario, &trace, &args.sizes)?;
    let path = c.out.join("sweep.csv");
    sweep.write_csv(&path)?;
    for r in &sweep.rows {
        println!("{:>6} B  {:>4} clusters  {:>5} PEs  area {:.2}", r.imem_size, r.n_clusters, r.n_pes, r.total_area);
    }
    println!("argmin {} B", sweep.argmin);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Profile(a) => cmd_profile(a),
        Command::Cluster(a) => cmd_cluster(a),
        Command::Place(a) => cmd_place(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
