use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod settings;

use settings::Settings;

#[derive(Parser, Debug)]
#[command(
    name = "nuq",
    version,
    about = "Nadaraya-Watson uncertainty scores for embeddings"
)]
struct Cli {
    /// key = value file supplying defaults for any flag
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log verbosity (-v info, -vv debug)
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct IndexArgs {
    /// exact or hnsw
    #[arg(long)]
    pub knn_backend: Option<String>,
    /// Neighbors retrieved per query
    #[arg(long)]
    pub neighbors: Option<usize>,
    #[arg(long)]
    pub hnsw_m: Option<usize>,
    #[arg(long)]
    pub ef_construction: Option<usize>,
    #[arg(long)]
    pub ef_search: Option<usize>,
    /// Seed for HNSW level assignment
    #[arg(long)]
    pub index_seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cross-validate the kernel bandwidth
    Tune {
        #[arg(long)]
        train: Option<PathBuf>,
        /// Label column of CSV input: none, first or last
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        kernel: Option<String>,
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        /// Comma-separated bandwidths; default is a median-scaled log grid
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        grid_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// CSV of bandwidth,accuracy for every grid value
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit a model and save it
    Fit {
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        bandwidth: Option<f64>,
        #[arg(long)]
        kernel: Option<String>,
        /// kde or gmm
        #[arg(long)]
        density: Option<String>,
        /// auto or a nonnegative number
        #[arg(long)]
        ridge: Option<String>,
        /// Diagonal class covariances
        #[arg(long)]
        diagonal: bool,
        #[command(flatten)]
        index: IndexArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score query embeddings
    Score {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// ROC-AUC of an uncertainty measure for in- vs out-of-distribution inputs
    OodEval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        in_dist: Option<PathBuf>,
        #[arg(long)]
        ood: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        /// epistemic, aleatoric or total
        #[arg(long)]
        measure: Option<String>,
        /// CSV of the OOD count among the k most uncertain inputs
        #[arg(long)]
        curve_out: Option<PathBuf>,
    },
    /// Chow risk, abstention rate and RCC-AUC of the reject option
    RejectEval {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Use z at 1 - beta even when there are more than two classes
        #[arg(long)]
        no_class_correction: bool,
        /// Also report the plug-in rule
        #[arg(long)]
        plugin_baseline: bool,
        /// CSV of per-input decisions
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agreement between model predictions and external predictions
    Agreement {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        label_col: Option<String>,
        /// One integer per line, or a column named `pred`
        #[arg(long)]
        external_preds: Option<PathBuf>,
    },
    /// Generate a synthetic dataset
    Toy {
        /// two_moons, gauss3_1d, step_reject or ring_ood
        #[arg(long)]
        name: Option<String>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        noise: Option<f64>,
        /// Step width of step_reject
        #[arg(long)]
        smoothing: Option<f64>,
        /// Rejection cost used for the step_reject oracle
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        r_min: Option<f64>,
        #[arg(long)]
        r_max: Option<f64>,
        /// Ring center as `x,y`
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        oracle_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> nuq::Result<()> {
    let settings = Settings::load(cli.config.as_deref())?;
    match cli.command {
        Command::Tune {
            train,
            label_col,
            kernel,
            neighbors,
            folds,
            grid,
            grid_size,
            seed,
            out,
        } => commands::tune(
            &settings,
            commands::TuneArgs {
                train,
                label_col,
                kernel,
                neighbors,
                folds,
                grid,
                grid_size,
                seed,
                out,
            },
        ),
        Command::Fit {
            train,
            label_col,
            bandwidth,
            kernel,
            density,
            ridge,
            diagonal,
            index,
            out,
        } => commands::fit(
            &settings,
            commands::FitArgs {
                train,
                label_col,
                bandwidth,
                kernel,
                density,
                ridge,
                diagonal,
                index,
                out,
            },
        ),
        Command::Score {
            model,
            input,
            label_col,
            out,
        } => commands::score(&settings, model, input, label_col, out),
        Command::OodEval {
            model,
            in_dist,
            ood,
            label_col,
            measure,
            curve_out,
        } => commands::ood_eval(
            &settings, model, in_dist, ood, label_col, measure, curve_out,
        ),
        Command::RejectEval {
            model,
            test,
            label_col,
            lambda,
            beta,
            no_class_correction,
            plugin_baseline,
            out,
        } => commands::reject_eval(
            &settings,
            commands::RejectArgs {
                model,
                test,
                label_col,
                lambda,
                beta,
                no_class_correction,
                plugin_baseline,
                out,
            },
        ),
        Command::Agreement {
            model,
            test,
            label_col,
            external_preds,
        } => commands::agreement(&settings, model, test, label_col, external_preds),
        Command::Toy {
            name,
            n,
            seed,
            noise,
            smoothing,
            lambda,
            r_min,
            r_max,
            center,
            out,
            oracle_out,
        } => commands::toy(
            &settings,
            commands::ToyArgs {
                name,
                n,
                seed,
                noise,
                smoothing,
                lambda,
                r_min,
                r_max,
                center,
                out,
                oracle_out,
            },
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
