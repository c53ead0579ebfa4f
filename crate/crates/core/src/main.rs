use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groupforge::graph::CorrelationKind;
use groupforge::partition::Sense;
use groupforge::report::{
    cmd_compare, cmd_embed, cmd_partition, cmd_synth, parse_balance_arg, CliError, ConfigOverrides,
    PipelineConfig,
};

#[derive(Parser)]
#[command(
    name = "groupforge",
    version,
    about = "Fair, skill-diverse group formation from course marks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed students and write embedding.csv and eigenvalues.csv.
    Embed {
        #[arg(long)]
        marks: PathBuf,
        /// Also write the similarity matrix to graph.csv.
        #[arg(long)]
        dump_graph: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Solve one partition and write solution.json and the report.
    Partition {
        #[arg(long)]
        marks: PathBuf,
        #[arg(long)]
        attrs: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run minimize, maximize and balanced maximize side by side.
    Compare {
        #[arg(long)]
        marks: PathBuf,
        #[arg(long)]
        attrs: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a synthetic cohort with planted affinities.
    Synth {
        /// Cohort spec JSON; the built-in three-affinity cohort if omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// JSON config with flat keys named like these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Similarity scale.
    #[arg(long = "A")]
    a: Option<f64>,
    /// Correlation threshold.
    #[arg(long = "B")]
    b: Option<f64>,
    /// Embedding dimension.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Minimum group size.
    #[arg(long)]
    fl: Option<usize>,
    /// Maximum group size.
    #[arg(long)]
    fu: Option<usize>,
    /// Balance lower bound as attr=B_L; repeatable.
    #[arg(long, value_parser = parse_balance_arg)]
    balance: Vec<(String, f64)>,
    /// max or min.
    #[arg(long)]
    sense: Option<Sense>,
    /// pearson or spearman.
    #[arg(long)]
    correlation: Option<CorrelationKind>,
    /// Partition a uniform random subsample of this many students.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Solver wall-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    /// Solver worker threads.
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig, CliError> {
        let base = match &self.config {
            Some(p) => PipelineConfig::from_json_file(p)?,
            None => PipelineConfig::default(),
        };
        let o = ConfigOverrides {
            scale: self.a,
            threshold: self.b,
            dimension: self.m,
            min_size: self.fl,
            max_size: self.fu,
            balance: self.balance.clone(),
            sense: self.sense,
            correlation: self.correlation,
            seed: self.seed,
            time_budget: self.time_budget,
            sample: self.sample,
            workers: self.workers,
        };
        Ok(o.apply(base))
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Embed {
            marks,
            dump_graph,
            common,
        } => cmd_embed(&marks, &common.config()?, &common.out_dir, dump_graph),
        Command::Partition {
            marks,
            attrs,
            common,
        } => cmd_partition(&marks, attrs.as_deref(), &common.config()?, &common.out_dir),
        Command::Compare {
            marks,
            attrs,
            common,
        } => cmd_compare(&marks, attrs.as_deref(), &common.config()?, &common.out_dir),
        Command::Synth { spec, common } => {
            cmd_synth(spec.as_deref(), &common.config()?, &common.out_dir)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
