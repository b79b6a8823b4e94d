use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sketchdecomp::Thresholds;
use sketchdecomp_cli::{
    cmd_detect, cmd_evaluate, cmd_run, cmd_simulate, CliError, OutputOptions, Overrides, RunConfig,
};

/// Flow-level packet loss detection from upstream and downstream sketches.
#[derive(Debug, Parser)]
#[command(name = "sketchdecomp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a packet trace and its ground truth.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build sketches from a trace, recover sub-sketches and report loss.
    Detect {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Compare a loss report with ground truth by severity group.
    Evaluate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Supplies thresholds and the output directory.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        t_severe: Option<f64>,
        #[arg(long)]
        t_extreme: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        emit_plot_data: bool,
    },
    /// Simulate, detect and evaluate.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// TOML config, or JSON if the name ends in .json.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `report.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Write delay histogram and actual-vs-estimated CSVs.
    #[arg(long)]
    emit_plot_data: bool,
    /// Also write the report with estimates rounded to whole packets.
    #[arg(long)]
    round: bool,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, OutputOptions), CliError> {
        let overrides = Overrides {
            n: self.n,
            m: self.m,
            d: self.d,
            w: self.w,
            sigma: self.sigma,
            gamma: self.gamma,
            tol: self.tol,
            seed: self.seed,
            max_iter: self.max_iter,
            out_dir: self.out.clone(),
        };
        let cfg = RunConfig::load(&self.config, &overrides)?;
        let opts = OutputOptions {
            emit_plot_data: self.emit_plot_data,
            round: self.round,
        };
        Ok((cfg, opts))
    }
}

fn dispatch(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Simulate { run } => {
            let (cfg, opts) = run.load()?;
            cmd_simulate(&cfg, &cfg.report.out_dir, opts)
        }
        Command::Detect { run, trace } => {
            let (cfg, opts) = run.load()?;
            cmd_detect(&cfg, &trace, &cfg.report.out_dir, opts)
        }
        Command::Evaluate {
            report,
            ground_truth,
            config,
            t_severe,
            t_extreme,
            out,
            emit_plot_data,
        } => {
            let (mut thresholds, mut out_dir) = (Thresholds::default(), PathBuf::from("out"));
            if let Some(path) = config {
                let cfg = RunConfig::load(&path, &Overrides::default())?;
                thresholds = cfg.thresholds();
                out_dir = cfg.report.out_dir;
            }
            thresholds.t_severe = t_severe.unwrap_or(thresholds.t_severe);
            thresholds.t_extreme = t_extreme.unwrap_or(thresholds.t_extreme);
            let opts = OutputOptions {
                emit_plot_data,
                round: false,
            };
            cmd_evaluate(
                &report,
                &ground_truth,
                &thresholds,
                &out.unwrap_or(out_dir),
                opts,
            )
        }
        Command::Run { run } => {
            let (cfg, opts) = run.load()?;
            cmd_run(&cfg, &cfg.report.out_dir, opts)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
