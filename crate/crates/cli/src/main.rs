//! `maskrl` command-line entry point.

mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use maskrl::instance_file::{export_instance, Instance};
use maskrl::model::validate_distribution;
use maskrl::par::ExecMode;
use maskrl::planner::{trimmed_gaps, GapAnalysis};
use maskrl::report::{
    regret_chart_svg, sha256_hex, write_aggregate_csv, write_bound_csv, write_diagnostics_csv, write_gap_csv,
    write_pac_csv, write_trace_csv, ChartSeries,
};
use maskrl::sim::{run_experiment, LearnerConfig, RunOptions};

use config::{GapSettings, InstanceSettings, RunSettings};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "maskrl", version, about = "Episodic RL with episode-dependent action sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run learners and write regret traces.
    Run(RunArgs),
    /// Gap analytics and the gap-dependent bound over a grid of trimming levels.
    AnalyzeGaps(GapArgs),
    /// Check an instance file; exit 0 iff it is clean.
    Validate { path: PathBuf },
    /// Instance utilities.
    #[command(subcommand)]
    Instance(InstanceCommand),
}

#[derive(Subcommand, Debug)]
enum InstanceCommand {
    /// Write a built-in instance in the instance file format.
    Export(ExportArgs),
}

/// Instance selection shared by every command.
#[derive(Args, Debug, Default, Clone)]
pub struct InstanceArgs {
    /// `appendix_e`, `random`, or a path to an instance file.
    #[arg(long)]
    pub instance: Option<String>,
    /// Stay probability of the benchmark chain.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub horizon: Option<usize>,
    #[arg(long)]
    pub contexts: Option<usize>,
    /// Probability that an action is admissible in a random instance.
    #[arg(long)]
    pub sparsity: Option<f64>,
    /// Seed of the random-instance generator.
    #[arg(long)]
    pub instance_seed: Option<u64>,
}

#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// TOML config; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Comma-separated: mvp, prestage_mvp, ucbvi, s_ucbvi, random, oracle.
    #[arg(long, value_delimiter = ',')]
    pub learners: Option<Vec<String>>,
    #[arg(long)]
    pub episodes: Option<u64>,
    /// Number of seeds; runs seeds 1..=N.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Explicit seeds, overriding `--seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seed_list: Option<Vec<u64>>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub delta_prime: Option<f64>,
    #[arg(long)]
    pub bonus_scale: Option<f64>,
    /// `iid`, `adversarial` or `round-robin`.
    #[arg(long)]
    pub schedule: Option<String>,
    /// Context indices (0-based), one per line, for the adversarial schedule.
    #[arg(long)]
    pub sequence: Option<PathBuf>,
    /// Cycle order for the round-robin schedule.
    #[arg(long, value_delimiter = ',')]
    pub order: Option<Vec<usize>>,
    /// Snapshot MVP every N episodes and write the PAC curve.
    #[arg(long)]
    pub pac_every: Option<u64>,
    /// Also write per-seed diagnostics (refreshes, bonus, plan value).
    #[arg(long)]
    pub diagnostics: bool,
    /// Write an SVG chart of mean cumulative regret.
    #[arg(long)]
    pub plot: bool,
    /// Run seeds one after another on the calling thread.
    #[arg(long)]
    pub sequential: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct GapArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub inst: InstanceArgs,
    /// Comma-separated trimming levels in [0, 1).
    #[arg(long, value_delimiter = ',')]
    pub p_grid: Option<Vec<f64>>,
    /// Episode budget K inside the bound.
    #[arg(long)]
    pub episodes: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Built-in name: `appendix_e` or `random`.
    #[arg(long)]
    pub name: String,
    #[command(flatten)]
    pub inst: InstanceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return CliError::config(e.to_string().trim_end()).report(),
    };
    if let Err(e) = apply_thread_limit() {
        return e.report();
    }
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::AnalyzeGaps(args) => cmd_analyze_gaps(args),
        Command::Validate { path } => cmd_validate(&path),
        Command::Instance(InstanceCommand::Export(args)) => cmd_export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => e.report(),
    }
}

fn apply_thread_limit() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("MASKRL_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::config(format!("MASKRL_THREADS={raw:?} is not a positive integer")))?;
    maskrl::par::set_thread_limit(n).map_err(CliError::config_from)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> maskrl::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(CliError::runtime)?;
    Ok(buf)
}

/// Writes the sidecar and returns its hash, which every artifact embeds.
fn write_sidecar(out: &Path, text: &str) -> Result<String, CliError> {
    write_file(&out.join("metadata.toml"), text.as_bytes())?;
    Ok(sha256_hex(text.as_bytes()))
}

fn checked_instance(settings: &InstanceSettings) -> Result<Instance, CliError> {
    let inst = settings.load()?;
    let report = validate_distribution(&inst.model, &inst.dist);
    if !report.is_valid() {
        return Err(CliError::validation(report));
    }
    Ok(inst)
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let settings = RunSettings::resolve(args)?;
    let inst = checked_instance(&settings.instance)?;
    let schedule = settings.schedule(&inst.dist)?;
    schedule
        .validate(&inst.model, settings.episodes)
        .map_err(CliError::runtime)?;
    let out = &settings.out;
    let hash = write_sidecar(out, &settings.sidecar()?)?;
    let opts = RunOptions {
        exec: if settings.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        },
        pac_every: settings.pac_every,
        set_distributions: inst.set_distributions.clone(),
    };
    let mut series = Vec::new();
    for kind in &settings.learners {
        let learner = LearnerConfig {
            kind: *kind,
            delta: settings.delta,
            delta_prime: settings.delta_prime,
            bonus_scale: settings.bonus_scale,
        };
        let exp = run_experiment(
            &inst.model,
            &schedule,
            &learner,
            settings.episodes,
            &settings.seeds,
            &opts,
        )
        .map_err(CliError::runtime)?;
        let dir = out.join(kind.label());
        for t in &exp.traces {
            let bytes = csv_bytes(|b| write_trace_csv(b, t, Some(&hash)))?;
            write_file(&dir.join(format!("seed_{}.csv", t.seed)), &bytes)?;
            if settings.diagnostics {
                let bytes = csv_bytes(|b| write_diagnostics_csv(b, t, Some(&hash)))?;
                write_file(&dir.join(format!("diagnostics_seed_{}.csv", t.seed)), &bytes)?;
            }
        }
        let bytes = csv_bytes(|b| write_aggregate_csv(b, &exp.aggregate, Some(&hash)))?;
        write_file(&dir.join("aggregate.csv"), &bytes)?;
        if exp.traces.iter().any(|t| !t.pac.is_empty()) {
            let bytes = csv_bytes(|b| write_pac_csv(b, &exp.traces, Some(&hash)))?;
            write_file(&dir.join("pac.csv"), &bytes)?;
        }
        let last = exp.aggregate.last().map_or(0.0, |r| r.mean_cum_regret);
        println!("{:<13} final mean cumulative regret {last:.4}", kind.label());
        series.push(ChartSeries {
            label: kind.label().to_string(),
            rows: exp.aggregate,
        });
    }
    if settings.plot {
        let title = format!(
            "{} (K = {}, {} seeds)",
            settings.instance.describe(),
            settings.episodes,
            settings.seeds.len()
        );
        let svg = regret_chart_svg(&title, &series, Some(&hash));
        write_file(&out.join("regret.svg"), svg.as_bytes())?;
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn cmd_analyze_gaps(args: GapArgs) -> Result<(), CliError> {
    let settings = GapSettings::resolve(args)?;
    let inst = checked_instance(&settings.instance)?;
    let out = &settings.out;
    let hash = write_sidecar(out, &settings.sidecar()?)?;
    let analysis = GapAnalysis::new(&inst.model, &inst.dist).map_err(CliError::runtime)?;
    let ids: Vec<&str> = inst.dist.contexts().iter().map(|c| c.id()).collect();
    for &p in &settings.p_grid {
        let tables = trimmed_gaps(&inst.model, &inst.dist, p).map_err(CliError::runtime)?;
        let bytes = csv_bytes(|b| write_gap_csv(b, &tables, &ids, Some(&hash)))?;
        write_file(&out.join(format!("gaps_p{p}.csv")), &bytes)?;
    }
    let (points, argmin) = analysis.sweep(settings.episodes, &settings.p_grid);
    let bytes = csv_bytes(|b| write_bound_csv(b, &settings.p_grid, settings.episodes, &points, argmin, Some(&hash)))?;
    write_file(&out.join("bound.csv"), &bytes)?;
    println!("Var_max^c = {}", analysis.variance().var_max_c);
    for (p, point) in settings.p_grid.iter().zip(&points) {
        match point {
            Ok(b) => println!(
                "p = {p}: delta_min = {}, bound = {:.6e} (shape only)",
                b.delta_min, b.total
            ),
            Err(_) => println!("p = {p}: bound degenerate"),
        }
    }
    match argmin {
        Some(i) => println!("minimizing p = {}", settings.p_grid[i]),
        None => println!("minimizing p: none (bound degenerate at every level)"),
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Result<(), CliError> {
    let settings = InstanceSettings::from_path(path);
    let inst = checked_instance(&settings)?;
    let d = inst.model.dims();
    println!(
        "{}: valid (S = {}, A = {}, H = {}, {} contexts)",
        path.display(),
        d.states,
        d.actions,
        d.horizon,
        inst.dist.len()
    );
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<(), CliError> {
    let mut inst_args = args.inst;
    inst_args.instance = Some(args.name);
    let settings = InstanceSettings::from_args(&inst_args, None)?;
    if settings.is_file() {
        return Err(CliError::config("instance export takes a built-in name, not a file"));
    }
    let inst = settings.load()?;
    let text = export_instance(&inst, settings.sink()).map_err(CliError::runtime)?;
    write_file(&args.out, text.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(())
}
