use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adalloc::{
    Allocation, AllocationFile, AllocationGraph, Axis, AxisEcho, DirBuilder, DualsFile,
    FrontierPoint, GeneratorConfig, Knob, KnobConfig, Manifest, MetricsRow, ResultFile,
    SingleObjective, SolveMode, StageOrder, SweepSpec, TrimReport, allocation_from_file,
    allocation_to_file, digest_file, duals_to_file, generate_instance, make_feasible, normalize,
    point_dir_name, read_instance, read_json, result_from_run, run, sweep, validate_allocation,
    write_instance, write_json_atomic, write_text_atomic,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "adalloc",
    version,
    about = "Allocates forecast ad inventory between guaranteed campaigns and the spot market"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalArgs,
}

#[derive(Args)]
struct GlobalArgs {
    /// Seed for instance generation, echoed into manifests [default: 42]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver tolerance [default: 1e-8]
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker pool size; 1 forces serial sweeps
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit 1 when demand had to be trimmed to restore feasibility
    #[arg(long, global = true)]
    fail_on_trim: bool,
    /// JSON file with subcommand defaults; explicit flags win
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic instance file
    Generate(GenerateArgs),
    /// Solve one configuration into a result directory
    Solve(SolveArgs),
    /// Run a knob grid and emit the efficient frontier
    Sweep(SweepArgs),
    /// Tabulate result directories as comma-delimited metrics
    Report(ReportArgs),
    /// Copy the dual prices out of a result directory
    ExportDuals(ExportDualsArgs),
    /// Check an instance file, optionally with an allocation against it
    Validate(ValidateArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Where to write the instance JSON
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
    /// Override the configured supply-node count
    #[arg(long)]
    supplies: Option<usize>,
    /// Override the configured campaign count
    #[arg(long)]
    campaigns: Option<usize>,
    /// Override the configured demand scale
    #[arg(long)]
    demand_scale: Option<f64>,
    /// Override the configured targeting density
    #[arg(long)]
    targeting_density: Option<f64>,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance file to solve
    #[arg(long, value_name = "PATH")]
    instance: PathBuf,
    /// Result directory to create (must not exist)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[command(flatten)]
    knobs: KnobArgs,
}

#[derive(Args)]
struct KnobArgs {
    /// Pipeline to run
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Objective for --mode single
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Representativeness weight in blended objectives
    #[arg(long)]
    gamma: Option<f64>,
    /// Click-value weight inside monetary objectives
    #[arg(long)]
    xi: Option<f64>,
    /// Monetary floor fraction (two-step-a)
    #[arg(long)]
    psi: Option<f64>,
    /// Click floor fraction (two-step-b, three-step)
    #[arg(long)]
    omega: Option<f64>,
    /// Revenue floor fraction (two-step-c, three-step)
    #[arg(long)]
    eta: Option<f64>,
    /// Which monetary stage leads a three-step run
    #[arg(long, value_enum)]
    stage_order: Option<StageOrderArg>,
}

#[derive(Args)]
struct SweepArgs {
    /// Instance file to solve
    #[arg(long, value_name = "PATH")]
    instance: PathBuf,
    /// Sweep directory to create (must not exist)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Pipeline to run at every grid point
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Objective for --mode single
    #[arg(long, value_enum)]
    objective: Option<ObjectiveArg>,
    /// Value or start:end:count grid
    #[arg(long)]
    gamma: Option<String>,
    /// Value or start:end:count grid
    #[arg(long)]
    xi: Option<String>,
    /// Value or start:end:count grid
    #[arg(long)]
    psi: Option<String>,
    /// Value or start:end:count grid
    #[arg(long)]
    omega: Option<String>,
    /// Value or start:end:count grid
    #[arg(long)]
    eta: Option<String>,
    /// Which monetary stage leads a three-step run
    #[arg(long, value_enum)]
    stage_order: Option<StageOrderArg>,
    /// Grid spacing; log-near-one crowds values toward 1 and needs end < 1
    #[arg(long, value_enum)]
    spacing: Option<SpacingArg>,
    /// Dominance plane for the frontier, e.g. ngd,gd [default: by mode]
    #[arg(long, value_enum, value_delimiter = ',')]
    frontier_axes: Vec<AxisArg>,
}

#[derive(Args)]
struct ReportArgs {
    /// Result or sweep directories to tabulate
    #[arg(required = true, value_name = "DIR")]
    dirs: Vec<PathBuf>,
    /// Write the table here instead of stdout
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportDualsArgs {
    /// Result directory holding duals.json
    #[arg(value_name = "DIR")]
    result: PathBuf,
    /// Where to write the duals file
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    /// Instance file to check
    #[arg(long, value_name = "PATH")]
    instance: PathBuf,
    /// Allocation file to check against the instance
    #[arg(long, value_name = "PATH")]
    allocation: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Baseline,
    Single,
    TwoStepA,
    TwoStepB,
    TwoStepC,
    ThreeStep,
}

impl From<ModeArg> for SolveMode {
    fn from(mode: ModeArg) -> Self {
        match mode {
            ModeArg::Baseline => SolveMode::Baseline,
            ModeArg::Single => SolveMode::Single,
            ModeArg::TwoStepA => SolveMode::TwoStepA,
            ModeArg::TwoStepB => SolveMode::TwoStepB,
            ModeArg::TwoStepC => SolveMode::TwoStepC,
            ModeArg::ThreeStep => SolveMode::ThreeStep,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Ngd,
    Click,
    NgdPlusClick,
    Gd,
    Weighted,
}

impl From<ObjectiveArg> for SingleObjective {
    fn from(objective: ObjectiveArg) -> Self {
        match objective {
            ObjectiveArg::Ngd => SingleObjective::Ngd,
            ObjectiveArg::Click => SingleObjective::Click,
            ObjectiveArg::NgdPlusClick => SingleObjective::NgdPlusClick,
            ObjectiveArg::Gd => SingleObjective::Gd,
            ObjectiveArg::Weighted => SingleObjective::Weighted,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StageOrderArg {
    RevenueFirst,
    ClickFirst,
}

impl From<StageOrderArg> for StageOrder {
    fn from(order: StageOrderArg) -> Self {
        match order {
            StageOrderArg::RevenueFirst => StageOrder::RevenueFirst,
            StageOrderArg::ClickFirst => StageOrder::ClickFirst,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SpacingArg {
    Uniform,
    LogNearOne,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Ngd,
    Click,
    NgdPlusClick,
    Gd,
}

impl From<AxisArg> for Axis {
    fn from(axis: AxisArg) -> Self {
        match axis {
            AxisArg::Ngd => Axis::Ngd,
            AxisArg::Click => Axis::Click,
            AxisArg::NgdPlusClick => Axis::NgdPlusClick,
            AxisArg::Gd => Axis::Gd,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let global = cli.global;
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(&global, args),
        Command::Solve(args) => cmd_solve(&global, args),
        Command::Sweep(args) => cmd_sweep(&global, args),
        Command::Report(args) => cmd_report(args),
        Command::ExportDuals(args) => cmd_export_duals(args),
        Command::Validate(args) => cmd_validate(&global, args),
    };
    match outcome {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

type CmdResult = Result<ExitCode, String>;

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn cmd_generate(global: &GlobalArgs, args: GenerateArgs) -> CmdResult {
    let mut config: GeneratorConfig = match &global.config {
        Some(path) => read_json(path).map_err(fail)?,
        None => GeneratorConfig::default(),
    };
    if let Some(n) = args.supplies {
        config.num_supply = n;
    }
    if let Some(n) = args.campaigns {
        config.num_campaigns = n;
    }
    if let Some(v) = args.demand_scale {
        config.demand_scale = v;
    }
    if let Some(v) = args.targeting_density {
        config.targeting_density = v;
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let instance = generate_instance(&config).map_err(fail)?;
    let graph = instance.to_graph().map_err(fail)?;
    write_instance(&args.out, &instance).map_err(fail)?;
    println!(
        "wrote {} ({} supplies, {} campaigns, {} edges)",
        args.out.display(),
        graph.supplies.len(),
        graph.campaigns.len(),
        graph.edges.len()
    );
    Ok(ExitCode::SUCCESS)
}

/// Mode and knobs from the config file if given, overridden field by field
/// from the command line.
fn resolve_knobs(global: &GlobalArgs, args: &KnobArgs) -> Result<KnobConfig, String> {
    let file: Option<KnobConfig> = match &global.config {
        Some(path) => Some(read_json(path).map_err(fail)?),
        None => None,
    };
    let mut knobs = match (file, args.mode) {
        (Some(mut file), mode) => {
            if let Some(mode) = mode {
                file.mode = mode.into();
            }
            file
        }
        (None, Some(mode)) => KnobConfig::new(mode.into()),
        (None, None) => return Err("missing --mode (pass it or supply --config)".into()),
    };
    if let Some(objective) = args.objective {
        knobs.objective = Some(objective.into());
    }
    if let Some(v) = args.gamma {
        knobs.gamma = Some(v);
    }
    if let Some(v) = args.xi {
        knobs.xi = Some(v);
    }
    if let Some(v) = args.psi {
        knobs.psi = Some(v);
    }
    if let Some(v) = args.omega {
        knobs.omega = Some(v);
    }
    if let Some(v) = args.eta {
        knobs.eta = Some(v);
    }
    if let Some(order) = args.stage_order {
        knobs.stage_order = order.into();
    }
    Ok(knobs)
}

fn knob_label(knobs: &KnobConfig) -> String {
    match (knobs.mode, knobs.objective) {
        (SolveMode::Single, Some(objective)) => format!("single:{}", objective.as_str()),
        _ => knobs.mode.as_str().to_string(),
    }
}

fn load_graph(path: &Path) -> Result<(AllocationGraph, String), String> {
    let instance = read_instance(path).map_err(fail)?;
    let digest = digest_file(path).map_err(fail)?;
    let graph = instance.to_graph().map_err(fail)?;
    Ok((graph, digest))
}

fn manifest(global: &GlobalArgs, command: &str, args_instance: &Path, digest: String, knobs: KnobConfig, axes: Option<Vec<AxisEcho>>) -> Manifest {
    Manifest {
        command: command.to_string(),
        instance: args_instance.display().to_string(),
        instance_digest: digest,
        knobs,
        axes,
        seed: global.seed.unwrap_or(DEFAULT_SEED),
        tol: global.tol.unwrap_or(DEFAULT_TOL),
        threads: global.threads,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

fn trim_exit(global: &GlobalArgs, trim: &TrimReport) -> CmdResult {
    if trim.trimmed {
        eprintln!(
            "note: demand trimmed by {} (penalty {}); results reflect the trimmed instance",
            trim.total_shortfall, trim.total_penalty
        );
        if global.fail_on_trim {
            return Ok(ExitCode::from(1));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_solve(global: &GlobalArgs, args: SolveArgs) -> CmdResult {
    let tol = global.tol.unwrap_or(DEFAULT_TOL);
    let knobs = resolve_knobs(global, &args.knobs)?;
    knobs.validate().map_err(fail)?;
    let (graph, digest) = load_graph(&args.instance)?;

    let baseline_knobs = KnobConfig::new(SolveMode::Baseline);
    let baseline = run(&graph, &baseline_knobs, tol).map_err(fail)?;
    let result = run(&graph, &knobs, tol).map_err(fail)?;

    let base_raw = MetricsRow::raw("baseline", &baseline.objectives);
    let main_raw = MetricsRow::raw(knob_label(&knobs), &result.objectives);
    let rows = normalize(&[base_raw.clone(), main_raw], &base_raw);

    let manifest = manifest(global, "solve", &args.instance, digest, knobs.clone(), None);
    let mut dir = DirBuilder::new();
    dir.add_json("manifest.json", &manifest)
        .map_err(fail)?
        .add_json("result.json", &result_from_run(&knobs, &result, rows[1].clone()))
        .map_err(fail)?
        .add_json(
            "baseline.json",
            &result_from_run(&baseline_knobs, &baseline, rows[0].clone()),
        )
        .map_err(fail)?
        .add_json("allocation.json", &allocation_to_file(&graph, &result.allocation))
        .map_err(fail)?
        .add_json("duals.json", &duals_to_file(&graph, &result.duals, &result.trace))
        .map_err(fail)?;
    dir.write(&args.out).map_err(fail)?;

    println!(
        "wrote {} (ngd {} click {} gd {})",
        args.out.display(),
        result.objectives.spot_revenue,
        result.objectives.click_value,
        result.objectives.representativeness
    );
    trim_exit(global, &result.trim)
}

enum KnobValue {
    Scalar(f64),
    Grid(Vec<f64>),
}

fn parse_knob_value(knob: &str, text: &str, spacing: SpacingArg) -> Result<KnobValue, String> {
    if let Ok(v) = text.parse::<f64>() {
        return Ok(KnobValue::Scalar(v));
    }
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(format!("--{knob}: expected a number or start:end:count, got `{text}`"));
    }
    let start: f64 = parts[0]
        .parse()
        .map_err(|_| format!("--{knob}: bad grid start `{}`", parts[0]))?;
    let end: f64 = parts[1]
        .parse()
        .map_err(|_| format!("--{knob}: bad grid end `{}`", parts[1]))?;
    let count: usize = parts[2]
        .parse()
        .map_err(|_| format!("--{knob}: bad grid count `{}`", parts[2]))?;
    if count == 0 {
        return Err(format!("--{knob}: grid count must be at least 1"));
    }
    if end < start {
        return Err(format!("--{knob}: grid runs backwards ({start} > {end})"));
    }
    if count == 1 {
        return Ok(KnobValue::Grid(vec![start]));
    }
    // Endpoints are pinned exactly so a grid to 1.0 stays inside (0, 1].
    let values = match spacing {
        SpacingArg::Uniform => (0..count)
            .map(|k| {
                if k + 1 == count {
                    end
                } else {
                    start + (end - start) * k as f64 / (count - 1) as f64
                }
            })
            .collect(),
        SpacingArg::LogNearOne => {
            if end >= 1.0 {
                return Err(format!("--{knob}: log-near-one spacing needs end < 1, got {end}"));
            }
            let ratio = ((1.0 - end) / (1.0 - start)).powf(1.0 / (count - 1) as f64);
            (0..count)
                .map(|k| {
                    if k + 1 == count {
                        end
                    } else {
                        1.0 - (1.0 - start) * ratio.powi(k as i32)
                    }
                })
                .collect()
        }
    };
    Ok(KnobValue::Grid(values))
}

/// Grids nest in a fixed knob order (eta outermost), so iso-primary contours
/// in two-knob sweeps group points that share the first knob's value.
const AXIS_ORDER: [Knob; 5] = [Knob::Eta, Knob::Omega, Knob::Psi, Knob::Gamma, Knob::Xi];

fn resolve_sweep_knobs(
    global: &GlobalArgs,
    args: &SweepArgs,
) -> Result<(KnobConfig, Vec<(Knob, Vec<f64>)>), String> {
    let spacing = args.spacing.unwrap_or(SpacingArg::Uniform);
    let scalar_args = KnobArgs {
        mode: args.mode,
        objective: args.objective,
        gamma: None,
        xi: None,
        psi: None,
        omega: None,
        eta: None,
        stage_order: args.stage_order,
    };
    let mut base = resolve_knobs(global, &scalar_args)?;
    let mut grids: Vec<(Knob, Vec<f64>)> = Vec::new();
    let flags = [
        (Knob::Gamma, &args.gamma),
        (Knob::Xi, &args.xi),
        (Knob::Psi, &args.psi),
        (Knob::Omega, &args.omega),
        (Knob::Eta, &args.eta),
    ];
    for (knob, text) in flags {
        let Some(text) = text else { continue };
        let slot = match knob {
            Knob::Gamma => &mut base.gamma,
            Knob::Xi => &mut base.xi,
            Knob::Psi => &mut base.psi,
            Knob::Omega => &mut base.omega,
            Knob::Eta => &mut base.eta,
        };
        match parse_knob_value(knob.name(), text, spacing)? {
            KnobValue::Scalar(v) => *slot = Some(v),
            KnobValue::Grid(values) => {
                *slot = None;
                grids.push((knob, values));
            }
        }
    }
    let mut axes = Vec::new();
    for knob in AXIS_ORDER {
        if let Some(pos) = grids.iter().position(|(k, _)| *k == knob) {
            axes.push(grids.remove(pos));
        }
    }
    Ok((base, axes))
}

fn default_axes(mode: SolveMode) -> Vec<Axis> {
    match mode {
        SolveMode::TwoStepC => vec![Axis::Ngd, Axis::Gd],
        SolveMode::TwoStepB | SolveMode::ThreeStep => vec![Axis::Click, Axis::Gd],
        _ => vec![Axis::NgdPlusClick, Axis::Gd],
    }
}

fn point_config(base: &KnobConfig, values: &[(String, f64)]) -> KnobConfig {
    let mut config = base.clone();
    for (name, value) in values {
        match name.as_str() {
            "gamma" => config.gamma = Some(*value),
            "xi" => config.xi = Some(*value),
            "psi" => config.psi = Some(*value),
            "omega" => config.omega = Some(*value),
            "eta" => config.eta = Some(*value),
            _ => {}
        }
    }
    config
}

fn cmd_sweep(global: &GlobalArgs, args: SweepArgs) -> CmdResult {
    let tol = global.tol.unwrap_or(DEFAULT_TOL);
    let (base, axes) = resolve_sweep_knobs(global, &args)?;
    if axes.is_empty() {
        return Err("sweep needs at least one start:end:count grid knob".into());
    }
    if axes.len() > 2 {
        return Err("sweep takes at most two grid knobs".into());
    }
    let (graph, digest) = load_graph(&args.instance)?;

    let baseline_knobs = KnobConfig::new(SolveMode::Baseline);
    let baseline = run(&graph, &baseline_knobs, tol).map_err(fail)?;
    let base_raw = MetricsRow::raw("baseline", &baseline.objectives);

    let spec = SweepSpec { base: base.clone(), axes: axes.clone() };
    let parallel = global.threads != Some(1);
    let points = sweep(&graph, &spec, tol, parallel).map_err(fail)?;

    let raw_rows: Vec<MetricsRow> = points
        .iter()
        .enumerate()
        .map(|(i, p)| MetricsRow::raw(point_dir_name(i), &p.result.objectives))
        .collect();
    let rows = normalize(&raw_rows, &base_raw);
    let baseline_row = normalize(std::slice::from_ref(&base_raw), &base_raw).remove(0);

    let frontier_axes: Vec<Axis> = if args.frontier_axes.is_empty() {
        default_axes(base.mode)
    } else {
        args.frontier_axes.iter().map(|&a| a.into()).collect()
    };
    let frontier_points: Vec<FrontierPoint> = points
        .iter()
        .zip(&rows)
        .map(|(p, row)| FrontierPoint { knobs: p.knobs.clone(), row: row.clone() })
        .collect();
    let (frontier_csv, summary) =
        adalloc::emit_frontier(&frontier_points, &frontier_axes).map_err(fail)?;

    let echo: Vec<AxisEcho> = axes
        .iter()
        .map(|(knob, values)| AxisEcho { knob: knob.name().to_string(), values: values.clone() })
        .collect();
    let manifest = manifest(global, "sweep", &args.instance, digest, base.clone(), Some(echo));

    let mut dir = DirBuilder::new();
    dir.add_json("manifest.json", &manifest)
        .map_err(fail)?
        .add_json("baseline.json", &result_from_run(&baseline_knobs, &baseline, baseline_row))
        .map_err(fail)?
        .add_json("frontier_summary.json", &summary)
        .map_err(fail)?
        .add_text("frontier.csv", frontier_csv);
    for (i, (point, row)) in points.iter().zip(rows).enumerate() {
        let knobs = point_config(&base, &point.knobs);
        dir.add_json(
            format!("points/{}/result.json", point_dir_name(i)),
            &result_from_run(&knobs, &point.result, row),
        )
        .map_err(fail)?;
    }
    dir.write(&args.out).map_err(fail)?;

    println!(
        "swept {} points into {} ({} on the frontier)",
        points.len(),
        args.out.display(),
        summary.frontier_size
    );
    trim_exit(global, &points[0].result.trim)
}

fn config_string(knobs: &KnobConfig) -> String {
    let mut parts = vec![format!("mode={}", knobs.mode.as_str())];
    if let Some(objective) = knobs.objective {
        parts.push(format!("objective={}", objective.as_str()));
    }
    let values = [
        ("gamma", knobs.gamma),
        ("xi", knobs.xi),
        ("psi", knobs.psi),
        ("omega", knobs.omega),
        ("eta", knobs.eta),
    ];
    for (name, value) in values {
        if let Some(v) = value {
            parts.push(format!("{name}={v}"));
        }
    }
    if knobs.stage_order == StageOrder::ClickFirst {
        parts.push("order=click-first".into());
    }
    parts.join(" ")
}

fn dir_label(dir: &Path) -> String {
    dir.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

fn collect_rows(dir: &Path) -> Result<Vec<(String, String, MetricsRow)>, String> {
    let label = dir_label(dir);
    let result_path = dir.join("result.json");
    if result_path.is_file() {
        let result: ResultFile = read_json(&result_path).map_err(fail)?;
        return Ok(vec![(label, config_string(&result.knobs), result.metrics)]);
    }
    let points_dir = dir.join("points");
    if points_dir.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&points_dir)
            .map_err(|e| format!("{}: {e}", points_dir.display()))?
            .filter_map(|entry| entry.ok())
            .filter(|entry| entry.path().is_dir())
            .map(|entry| entry.file_name().to_string_lossy().into_owned())
            .collect();
        names.sort();
        if names.is_empty() {
            return Err(format!("{}: no point directories", points_dir.display()));
        }
        let mut rows = Vec::with_capacity(names.len());
        for name in names {
            let result: ResultFile =
                read_json(points_dir.join(&name).join("result.json")).map_err(fail)?;
            rows.push((format!("{label}/{name}"), config_string(&result.knobs), result.metrics));
        }
        return Ok(rows);
    }
    Err(format!("{}: no result.json or points/ directory", dir.display()))
}

fn cmd_report(args: ReportArgs) -> CmdResult {
    let mut table = String::from(
        "label,config,ngd,click,ngd_click,gd,normalized_ngd,normalized_click,normalized_ngd_click,normalized_gd\n",
    );
    let mut count = 0usize;
    for dir in &args.dirs {
        for (label, config, row) in collect_rows(dir)? {
            table.push_str(&format!(
                "{label},{config},{},{},{},{},{},{},{},{}\n",
                row.ngd,
                row.click,
                row.ngd_plus_click,
                row.gd,
                row.normalized_ngd,
                row.normalized_click,
                row.normalized_ngd_plus_click,
                row.normalized_gd
            ));
            count += 1;
        }
    }
    match &args.out {
        Some(path) => {
            write_text_atomic(path, &table).map_err(fail)?;
            println!("wrote {count} rows to {}", path.display());
        }
        None => print!("{table}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_export_duals(args: ExportDualsArgs) -> CmdResult {
    let duals: DualsFile = read_json(args.result.join("duals.json")).map_err(fail)?;
    write_json_atomic(&args.out, &duals).map_err(fail)?;
    println!("wrote {}", args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_validate(global: &GlobalArgs, args: ValidateArgs) -> CmdResult {
    let tol = global.tol.unwrap_or(DEFAULT_TOL);
    let (graph, _) = load_graph(&args.instance)?;
    let total_supply: f64 = graph.supplies.iter().map(|s| s.weight).sum();
    let total_demand: f64 = graph.campaigns.iter().map(|c| c.demand).sum();
    let trim = make_feasible(&graph).map_err(fail)?;
    println!(
        "instance ok: {} supplies (weight {total_supply}), {} campaigns (demand {total_demand}), {} edges",
        graph.supplies.len(),
        graph.campaigns.len(),
        graph.edges.len()
    );
    if trim.report.trimmed {
        println!(
            "overbooked: trimming {} units of demand (penalty {})",
            trim.report.total_shortfall, trim.report.total_penalty
        );
    } else {
        println!("demand is deliverable without trimming");
    }
    if let Some(path) = &args.allocation {
        let file: AllocationFile = read_json(path).map_err(fail)?;
        let allocation: Allocation = allocation_from_file(&graph, &file).map_err(fail)?;
        let report = validate_allocation(&graph, &allocation).map_err(fail)?;
        if !report.ok(tol) {
            return Err(format!(
                "{}: allocation violates constraints (supply residual {:.3e}, demand residual {:.3e}, min component {:.3e})",
                path.display(),
                report.max_supply_residual,
                report.max_demand_residual,
                report.min_component
            ));
        }
        println!(
            "allocation ok: max supply residual {:.3e}, max demand residual {:.3e}",
            report.max_supply_residual, report.max_demand_residual
        );
    }
    if trim.report.trimmed && global.fail_on_trim {
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}
