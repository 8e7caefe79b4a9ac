//! `cowtopo`: command-line front end of the toolkit.
//!
//! Exit codes: 0 success, 1 usage error, 2 I/O error, 3 validation error.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use cowtopo::preprocess::Modality;

#[derive(Debug)]
pub enum CliError {
    Io(String),
    Validation(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Validation(m) => write!(f, "validation error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

impl From<cowtopo::Error> for CliError {
    fn from(e: cowtopo::Error) -> Self {
        match e {
            cowtopo::Error::Io { .. } | cowtopo::Error::Malformed { .. } => {
                CliError::Io(e.to_string())
            }
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModalityArg {
    Cta,
    Mra,
}

impl From<ModalityArg> for Modality {
    fn from(m: ModalityArg) -> Modality {
        match m {
            ModalityArg::Cta => Modality::Cta,
            ModalityArg::Mra => Modality::Mra,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ClassesModeArg {
    Present,
    All13,
}

#[derive(Debug, Parser)]
#[command(
    name = "cowtopo",
    version,
    about = "Topology-aware Circle of Willis toolkit: preprocessing, loss reports, refinement, detection boxes, graph edges, and evaluation"
)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Worker threads for batch subcommands.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Reserved for future stochastic features; accepted and ignored.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Truncate, resample, and normalize one scan.
    Preprocess {
        #[arg(long)]
        modality: ModalityArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the distance-based weight map of one class.
    Weights {
        #[arg(long)]
        label: PathBuf,
        #[arg(long)]
        class: String,
        #[arg(long)]
        out: PathBuf,
        /// Write the unclamped weights instead of the floored ones.
        #[arg(long)]
        raw: bool,
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Evaluate the connectivity-aware loss of a probability volume.
    Loss {
        #[arg(long)]
        prob: PathBuf,
        #[arg(long)]
        label: PathBuf,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Topologically refine selected classes of a prediction.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Comma-separated class names to refine.
        #[arg(long, value_delimiter = ',')]
        classes: Option<Vec<String>>,
        #[arg(long)]
        tcom: Option<usize>,
        #[arg(long)]
        tdis: Option<f64>,
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Tight bounding box of the largest component of an RoI mask.
    Detect {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        connectivity: Option<u32>,
    },
    /// Deduce the eight CoW edge bits from a multi-class prediction.
    ClassifyGraph {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Evaluate predictions against ground truth, per case and cohort-wide.
    Evaluate {
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        gt: Option<PathBuf>,
        /// JSON list of {"id", "pred", "gt"} entries, an alternative to
        /// directory pairing.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        classes_mode: Option<ClassesModeArg>,
        #[arg(long)]
        class_map: Option<PathBuf>,
    },
    /// Connected-component statistics of a mask (debugging aid).
    #[command(hide = true)]
    Topo {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        json: PathBuf,
        #[arg(long)]
        connectivity: Option<u32>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("cowtopo: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = config::RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Preprocess {
            modality,
            input,
            out,
        } => commands::preprocess(&cfg, modality.into(), &input, &out),
        Command::Weights {
            label,
            class,
            out,
            raw,
            class_map,
        } => commands::weights(&cfg, &label, &class, &out, raw, class_map.as_deref()),
        Command::Loss {
            prob,
            label,
            json,
            class_map,
        } => commands::loss(&cfg, &prob, &label, &json, class_map.as_deref()),
        Command::Refine {
            input,
            out,
            report,
            classes,
            tcom,
            tdis,
            class_map,
        } => commands::refine(
            &cfg,
            &input,
            &out,
            &report,
            classes.as_deref(),
            tcom,
            tdis,
            class_map.as_deref(),
        ),
        Command::Detect {
            input,
            json,
            connectivity,
        } => commands::detect(&input, &json, connectivity),
        Command::ClassifyGraph {
            input,
            json,
            class_map,
        } => commands::classify_graph(&cfg, &input, &json, class_map.as_deref()),
        Command::Evaluate {
            pred,
            gt,
            manifest,
            json,
            classes_mode,
            class_map,
        } => commands::evaluate(
            &cfg,
            pred.as_deref(),
            gt.as_deref(),
            manifest.as_deref(),
            &json,
            classes_mode.map(|m| match m {
                ClassesModeArg::Present => cowtopo::metrics::ClassesMode::Present,
                ClassesModeArg::All13 => cowtopo::metrics::ClassesMode::All13,
            }),
            class_map.as_deref(),
            cli.jobs,
        ),
        Command::Topo {
            input,
            json,
            connectivity,
        } => commands::topo(&input, &json, connectivity),
    }
}
