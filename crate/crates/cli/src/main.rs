use std::path::PathBuf;
use std::process::ExitCode;

use apnet_cli::{
    cmd_evaluate, cmd_labels, cmd_match, cmd_refine, cmd_simulate, with_threads, CliError, CliResult, Config,
    EvaluateArgs, LabelsArgs, MatchArgs, MatrixFormat, RefineArgs, SimulateArgs,
};
use apnet_core::matching::Strategy;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "apnet",
    version,
    about = "Box refinement, partial matching and retrieval evaluation for person search"
)]
struct Cli {
    /// JSON config file.
    #[arg(long, global = true, env = "APNET_CONFIG")]
    config: Option<PathBuf>,
    /// Seed for the synthetic benchmark.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Bin,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Expand boxes by predicted offsets and compute stripe validity.
    Refine {
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        offsets: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Derive offset labels from body keypoints.
    Labels {
        #[arg(long)]
        keypoints: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Distance matrix between a query bank and a gallery bank.
    Match {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        /// fused, global, stripe, valid-region, mutual-region or mutual-stripe.
        #[arg(long, default_value = "fused")]
        strategy: Strategy,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long, value_enum, default_value = "bin")]
        format: FormatArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// mAP and CMC of a distance matrix against annotations.
    Evaluate {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long)]
        detections: Option<PathBuf>,
        #[arg(long)]
        iou_thresh: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synthetic occlusion benchmark: strategy ablation and stripe-count sweep.
    Simulate {
        /// Occlusion probability.
        #[arg(long)]
        p: Option<f64>,
        /// Generated stripe count.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        n_ids: Option<usize>,
        /// Comma-separated stripe counts for the sweep [default: 1,2,3,5,7 up to --k].
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        sweep: Option<Vec<usize>>,
        /// Also write feature banks and annotations.
        #[arg(long)]
        banks: bool,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    let seed = cli.seed;
    with_threads(cli.threads, move || match cli.command {
        Command::Refine { annotations, offsets, out } => cmd_refine(&cfg, &RefineArgs { annotations, offsets, out }),
        Command::Labels { keypoints, annotations, out } => {
            cmd_labels(&cfg, &LabelsArgs { keypoints, annotations, out })
        }
        Command::Match { query, gallery, strategy, lambda, format, out } => {
            let format = match format {
                FormatArg::Bin => MatrixFormat::Bin,
                FormatArg::Csv => MatrixFormat::Csv,
            };
            cmd_match(&cfg, &MatchArgs { query, gallery, strategy, lambda, format, out })
        }
        Command::Evaluate { matrix, annotations, detections, iou_thresh, out } => {
            cmd_evaluate(&cfg, &EvaluateArgs { matrix, annotations, detections, iou_thresh, out })
        }
        Command::Simulate { p, k, n_ids, sweep, banks, out } => {
            let args = SimulateArgs { seed, p, k, n_ids, sweep, banks, out };
            let rows = cmd_simulate(&cfg, &args)?;
            for r in rows {
                println!("{:<14} mAP {:.4}  rank-1 {:.4}", r.strategy.name(), r.map, r.rank1);
            }
            Ok(())
        }
    })?
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> ExitCode {
    eprintln!("apnet: {e}");
    ExitCode::from(e.exit_code())
}
