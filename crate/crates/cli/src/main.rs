use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use kmlp_cli::commands::{
    cmd_eval, cmd_gen, cmd_inspect, cmd_train, format_inspect_jsonl, format_inspect_table,
    load_data, GenArgs, GenFormat,
};
use kmlp_cli::CliError;
use kmlp_core::data::LabelColumn;

#[derive(Parser)]
#[command(name = "kmlp", version, about = "Kernel MLPs trained layer by layer")]
struct Cli {
    /// Log progress to stderr (RUST_LOG overrides).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Idx,
}

#[derive(clap::Args)]
struct DataArgs {
    /// CSV file, or IDX image file (then --labels is required).
    #[arg(long)]
    data: PathBuf,
    /// IDX label file matching an IDX --data file.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// CSV label column: "first", "last" or a zero-based index.
    #[arg(long, default_value = "last")]
    label_column: String,
    /// The CSV file starts with a header row.
    #[arg(long)]
    header: bool,
}

impl DataArgs {
    fn column(&self) -> Result<LabelColumn, CliError> {
        match self.label_column.as_str() {
            "first" => Ok(LabelColumn::First),
            "last" => Ok(LabelColumn::Last),
            s => s
                .parse()
                .map(LabelColumn::Index)
                .map_err(|_| CliError::Usage(format!("bad --label-column `{s}`"))),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Gen {
        #[arg(long)]
        name: String,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Image side for rectangles.
        #[arg(long, default_value_t = 28)]
        side: usize,
        /// Dimension for blobs.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Distance between blob centers.
        #[arg(long, default_value_t = 6.0)]
        separation: f64,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Train from an experiment file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the error rate of a trained model.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print per-layer diagnostics of a trained model.
    Inspect {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Emit JSON lines instead of a table.
        #[arg(long)]
        json: bool,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Gen {
            name,
            n,
            seed,
            out,
            side,
            dim,
            separation,
            format,
        } => {
            let files = cmd_gen(&GenArgs {
                name,
                n,
                seed,
                out,
                side,
                dim,
                separation,
                format: match format {
                    Format::Csv => GenFormat::Csv,
                    Format::Idx => GenFormat::Idx,
                },
            })?;
            for f in files {
                println!("{}", f.display());
            }
        }
        Command::Train { config } => {
            let o = cmd_train(&config)?;
            println!("model={}", o.model_path.display());
            println!("train_error={}", o.train_error);
            if let Some(e) = o.validation_error {
                println!("validation_error={e}");
            }
            if let Some(e) = o.test_error {
                println!("test_error={e}");
            }
        }
        Command::Eval { model, data } => {
            let ds = load_data(&data.data, data.labels.as_deref(), data.column()?, data.header)?;
            let err = cmd_eval(&model, &ds)?;
            println!("n={}", ds.len());
            println!("error_rate={err}");
        }
        Command::Inspect { model, data, json } => {
            let ds = load_data(&data.data, data.labels.as_deref(), data.column()?, data.header)?;
            let rows = cmd_inspect(&model, &ds)?;
            if json {
                print!("{}", format_inspect_jsonl(&rows));
            } else {
                print!("{}", format_inspect_table(&rows));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.machine_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
