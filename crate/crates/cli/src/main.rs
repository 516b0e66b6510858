use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use congid_cli::commands::{self, EvaluateSummary, IdentifySummary, ReportSummary, SimulateSummary};
use congid_cli::config::{Mode, RunConfig};
use congid_cli::CliError;

#[derive(Parser)]
#[command(
    name = "congid",
    version,
    about = "Unsupervised congestion-status identification from nodal prices"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clear simulated market intervals; write the price panel and truth.
    Simulate(CommonArgs),
    /// Recover congestion statuses from a price panel.
    Identify(CommonArgs),
    /// Score identified codes against ground truth.
    Evaluate(CommonArgs),
    /// Emit plot-ready block and affinity grids from a prior identify run.
    Report(CommonArgs),
}

/// Every command takes the same flags; unused ones are ignored. Values
/// resolve as defaults, then the config file, then flags.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Price model: lossless or lossy.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Network case file (TOML or matrix-style tables).
    #[arg(long)]
    case: Option<PathBuf>,
    /// LMP panel CSV (node,timestamp,mcc[,mlc,mec]).
    #[arg(long)]
    lmp: Option<PathBuf>,
    /// Ground-truth CSV (interval,line_id,mu,congested).
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Affinity cutoff width.
    #[arg(long)]
    eps_cutoff: Option<f64>,
    /// Encoding threshold relative to each row's median magnitude.
    #[arg(long)]
    eps_encode: Option<f64>,
    /// Smallest fraction of columns a hyperplane must contain.
    #[arg(long)]
    p: Option<f64>,
    /// Random-sampling trial budget.
    #[arg(long)]
    n_trials: Option<usize>,
    /// Relative load and price noise (standard deviation).
    #[arg(long)]
    noise: Option<f64>,
    /// Number of market intervals to simulate.
    #[arg(long)]
    intervals: Option<usize>,
    /// Root seed for all randomized stages.
    #[arg(long)]
    seed: Option<u64>,
    /// Reference node id for the lossy price correction.
    #[arg(long)]
    ref_node: Option<String>,
}

impl CommonArgs {
    fn resolve(self) -> Result<RunConfig, CliError> {
        let mut config = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.mode {
            config.mode = v;
        }
        if let Some(v) = self.case {
            config.case = Some(v);
        }
        if let Some(v) = self.lmp {
            config.lmp = Some(v);
        }
        if let Some(v) = self.truth {
            config.truth = Some(v);
        }
        if let Some(v) = self.out {
            config.out = v;
        }
        if let Some(v) = self.eps_cutoff {
            config.eps_cutoff = v;
        }
        if let Some(v) = self.eps_encode {
            config.eps_encode = v;
        }
        if let Some(v) = self.p {
            config.p = v;
        }
        if let Some(v) = self.n_trials {
            config.n_trials = Some(v);
        }
        if let Some(v) = self.noise {
            config.noise = v;
        }
        if let Some(v) = self.intervals {
            config.intervals = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.ref_node {
            config.ref_node = Some(v);
        }
        Ok(config)
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        // Anyhow chains carry the root cause; `:#` prints the whole chain.
        match &e {
            CliError::Other(inner) => eprintln!("error: {inner:#}"),
            _ => eprintln!("error: {e}"),
        }
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Simulate(args) => {
            let config = args.resolve()?;
            print_simulate(&config, commands::cmd_simulate(&config)?);
        }
        Command::Identify(args) => {
            let config = args.resolve()?;
            print_identify(&config, commands::cmd_identify(&config)?);
        }
        Command::Evaluate(args) => {
            let config = args.resolve()?;
            print_evaluate(&config, commands::cmd_evaluate(&config)?);
        }
        Command::Report(args) => {
            let config = args.resolve()?;
            print_report(&config, commands::cmd_report(&config)?);
        }
    }
    Ok(())
}

fn list(items: &[String]) -> String {
    items.join(", ")
}

fn print_simulate(config: &RunConfig, summary: SimulateSummary) {
    println!(
        "feasible intervals: {} of {}",
        summary.feasible, summary.requested
    );
    if !summary.skipped.is_empty() {
        let skipped: Vec<String> = summary.skipped.iter().map(ToString::to_string).collect();
        eprintln!("warning: skipped infeasible intervals: {}", list(&skipped));
    }
    let congested: Vec<String> = summary.ever_congested.iter().map(ToString::to_string).collect();
    println!("ever-congested lines: {}", list(&congested));
    println!("wrote lmp.csv, truth.csv to {}", config.out.display());
}

fn print_identify(config: &RunConfig, summary: IdentifySummary) {
    println!(
        "nodes: {} ingested, {} kept after merging duplicates",
        summary.nodes_ingested, summary.nodes_kept
    );
    println!(
        "intervals: {} total, {} congested; working matrix rank {}",
        summary.intervals, summary.retained, summary.pca_rank
    );
    let engagement = if summary.top_down_ran {
        format!("{} vectors", summary.top_vectors)
    } else {
        "not engaged".into()
    };
    println!(
        "bottom-up: {} rounds, {} vectors; top-down: {engagement}",
        summary.rounds, summary.bottom_vectors
    );
    println!("basis rank: {}", summary.basis_rank);
    if !summary.dropped_rows.is_empty() {
        eprintln!(
            "warning: dropped rounding-scale coefficient rows: {}",
            list(&summary.dropped_rows)
        );
    }
    if summary.zero_columns > 0 {
        eprintln!(
            "warning: {} congested intervals coded all-zero",
            summary.zero_columns
        );
    }
    println!("stage seconds:");
    for (stage, seconds) in &summary.stage_seconds {
        println!("  {stage:<10} {seconds:.3}");
    }
    println!("wrote {} to {}", list(&summary.written), config.out.display());
}

fn print_evaluate(config: &RunConfig, summary: EvaluateSummary) {
    println!(
        "total miscode: {:.5}% ({} of {} bits)",
        summary.report.total_miscode * 100.0,
        summary.wrong_bits,
        summary.total_bits
    );
    for (row, target, rate) in &summary.pairs {
        println!("  {row:<10} -> {target:<10} {:.5}%", rate * 100.0);
    }
    println!("wrote {} to {}", list(&summary.written), config.out.display());
}

fn print_report(config: &RunConfig, summary: ReportSummary) {
    println!(
        "blocks: {} rows x {} intervals",
        summary.blocks_rows, summary.blocks_intervals
    );
    println!("affinity rounds: {}", summary.affinity_rounds);
    println!("wrote {} to {}", list(&summary.written), config.out.display());
}
