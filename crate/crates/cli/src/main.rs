use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbe_cli::bench::{BenchSpec, Kernel, ScalingMode};
use kbe_cli::commands::{cmd_bench, cmd_inspect, cmd_run, cmd_scaling, cmd_sweep};
use kbe_cli::config::{workers_override, Index, Reduce, RunConfig};
use kbe_cli::error::CliResult;
use kbe_core::engine::Schedule;

#[derive(Parser)]
#[command(name = "kbe", version, about = "Two-time Kadanoff-Baym propagation and kernel benchmarks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate from a JSON configuration.
    Run(RunArgs),
    /// Time one kernel.
    Bench {
        #[arg(long, value_enum)]
        kernel: Kernel,
        #[command(flatten)]
        common: BenchArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 128)]
        block_size: usize,
    },
    /// Time a kernel over block sizes × worker counts.
    Sweep {
        #[arg(long, value_enum, default_value = "sigma")]
        kernel: Kernel,
        #[command(flatten)]
        common: BenchArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        block_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        workers: Vec<usize>,
    },
    /// Strong or weak scaling over shard counts.
    Scaling {
        #[arg(long, value_enum)]
        mode: ScalingMode,
        #[arg(long, value_delimiter = ',', required = true)]
        shards: Vec<usize>,
        #[command(flatten)]
        common: BenchArgs,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long, default_value_t = 128)]
        block_size: usize,
    },
    /// Print a trajectory header.
    Inspect { path: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long)]
    observables: Option<PathBuf>,
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 64)]
    n_k: usize,
    /// Frontier index of the synthetic data.
    #[arg(long, default_value_t = 8)]
    n_t: usize,
    #[arg(long, default_value_t = 1)]
    n_shards: usize,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    batch: bool,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    fusion: bool,
    #[arg(long, value_enum, default_value = "on-the-fly")]
    index_mode: Index,
    #[arg(long, value_enum, default_value = "tree")]
    reduce_mode: Reduce,
    #[arg(long, default_value_t = 2)]
    warmup: usize,
    #[arg(long, default_value_t = 5)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchArgs {
    fn spec(&self, kernel: Kernel, workers: usize, block_size: usize) -> CliResult<BenchSpec> {
        let workers = workers_override()?.unwrap_or(workers);
        Ok(BenchSpec {
            schedule: Schedule {
                n_shards: self.n_shards,
                workers,
                block_size,
                batch_enabled: self.batch,
                fusion_enabled: self.fusion,
                index_mode: self.index_mode.into(),
                reduce_mode: self.reduce_mode.into(),
            },
            warmup: self.warmup,
            reps: self.reps,
            seed: self.seed,
            ..BenchSpec::new(kernel, self.n_k, self.n_t)
        })
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Run(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            if let Some(w) = a.workers {
                cfg.workers = w;
            }
            cfg.trajectory = a.trajectory.or(cfg.trajectory);
            cfg.observables = a.observables.or(cfg.observables);
            cfg.report = a.report.or(cfg.report);
            cmd_run(&cfg).map(|_| ())
        }
        Cmd::Bench {
            kernel,
            common,
            workers,
            block_size,
        } => cmd_bench(&common.spec(kernel, workers, block_size)?, common.out.as_deref()),
        Cmd::Sweep {
            kernel,
            common,
            block_sizes,
            workers,
        } => cmd_sweep(&common.spec(kernel, 1, 128)?, &block_sizes, &workers, common.out.as_deref()),
        Cmd::Scaling {
            mode,
            shards,
            common,
            workers,
            block_size,
        } => cmd_scaling(
            &common.spec(Kernel::Sigma, workers, block_size)?,
            mode,
            &shards,
            common.out.as_deref(),
        ),
        Cmd::Inspect { path } => cmd_inspect(&path, std::io::stdout().lock()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kbe: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
