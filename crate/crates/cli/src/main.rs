//! `compabs`: abstract, compose, check and synthesize from a system spec.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};

use compabs::pipeline::{
    bench::bench_spec, load_spec, parse_spec, run_monolithic, run_pipeline, stats, write_artifact, LoadedSpec,
    PipelineError, PipelineOptions, RunReport, Session, SynthesisRequest,
};
use compabs::synthesis::Objective;

const EXIT_VALIDATION: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_CHECK: u8 = 4;

#[derive(Parser)]
#[command(name = "compabs", version, about = "Compositional finite abstractions for controller synthesis")]
struct Cli {
    /// Evaluate oracles on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Abstract every module of a spec and write one artifact per module.
    Abstract {
        spec: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Abstract, compose and hide latents.
    Compose {
        spec: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Falsify the composed abstraction against the flattened concrete system.
    Check {
        spec: PathBuf,
        /// Samples per cell width along each continuous axis.
        #[arg(long, default_value_t = 10)]
        divisions: usize,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Synthesize a controller for the composed control module.
    Synthesize {
        spec: PathBuf,
        #[arg(long = "spec", value_enum)]
        objective: ObjectiveArg,
        /// Goal box, e.g. `x1=4:28,x2=4:28`; unlisted states are unconstrained.
        #[arg(long, default_value = "")]
        region: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run the coupled-logistic benchmark with N states.
    Bench {
        #[arg(long, default_value_t = 6)]
        n: usize,
        /// Abstract the flattened system in one traversal instead.
        #[arg(long)]
        monolithic: bool,
        /// Wall-clock budget in seconds.
        #[arg(long)]
        budget: Option<f64>,
        /// Also falsify the composed abstraction at η/10.
        #[arg(long)]
        check: bool,
        /// Write the generated spec to this path and exit.
        #[arg(long)]
        emit_spec: Option<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Summarize a module artifact.
    Stats { artifact: PathBuf },
}

#[derive(Args)]
struct RunArgs {
    /// Outputs to hide (defaults to the spec's latents).
    #[arg(long, value_delimiter = ',')]
    hide: Option<Vec<String>>,
    /// Artifact directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Safety,
    Reach,
}

enum Failure {
    Pipeline(PipelineError),
    Usage(String),
    CheckFailed,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::Pipeline(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Pipeline(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Pipeline(e.into())
    }
}

fn options(cli: &Cli, run: &RunArgs) -> PipelineOptions {
    PipelineOptions {
        parallel: !cli.sequential,
        hide: run.hide.clone(),
        out_dir: run.out.clone(),
        ..PipelineOptions::default()
    }
}

fn parse_region(text: &str) -> Result<Vec<(String, f64, f64)>, Failure> {
    let bad = || Failure::Usage(format!("bad region `{text}` (expected `x1=lo:hi,...`)"));
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (v, range) = item.split_once('=').ok_or_else(bad)?;
            let (lo, hi) = range.split_once(':').ok_or_else(bad)?;
            Ok((
                v.trim().to_string(),
                lo.trim().parse().map_err(|_| bad())?,
                hi.trim().parse().map_err(|_| bad())?,
            ))
        })
        .collect()
}

fn sci(x: u128) -> String {
    format!("{:.2e}", x as f64)
}

fn summarize(r: &RunReport) {
    for m in &r.modules {
        eprintln!(
            "  {:<16} cells {:>12}  transitions {:>14}  blocking {:>10}  nodes {:>8}  {:>8.2}s",
            m.name, m.stats.cells, m.stats.transitions, m.stats.blocking, m.stats.nodes, m.stats.seconds
        );
    }
    for s in &r.stages {
        eprintln!("  stage {:<12} {:>9.2}s", s.stage, s.seconds);
    }
    eprintln!(
        "{} ({}): {} transitions ({}), {} blocking inputs, {} nodes, {} cells traversed",
        r.system,
        r.mode,
        r.composed.transitions,
        sci(r.composed.transitions),
        r.composed.blocking,
        r.composed.nodes,
        r.cells_traversed
    );
}

fn print_report(r: &RunReport) -> Result<(), Failure> {
    summarize(r);
    println!("{}", serde_json::to_string_pretty(r)?);
    Ok(())
}

fn load(path: &Path) -> Result<LoadedSpec, Failure> {
    Ok(load_spec(path)?)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Abstract { spec, out } => {
            let session = Session::new(load(spec)?)?;
            let opts = PipelineOptions {
                parallel: !cli.sequential,
                ..PipelineOptions::default()
            };
            std::fs::create_dir_all(out)?;
            for job in session.jobs()? {
                let (m, s) = compabs::abstractor::abstract_module(
                    &session.ctx,
                    &job,
                    &compabs::abstractor::AbstractOptions {
                        parallel: opts.parallel,
                        ..Default::default()
                    },
                )
                .map_err(|source| PipelineError::Abstraction {
                    stage: format!("abstract `{}`", job.name),
                    source,
                })?;
                write_artifact(&session, &m, &out.join(format!("{}.json", m.name())))?;
                println!(
                    "{}: {} cells, {} transitions, {} blocking, {} nodes",
                    m.name(),
                    s.cells,
                    s.transitions,
                    s.blocking,
                    s.nodes
                );
            }
            Ok(())
        }
        Command::Compose { spec, run } => print_report(&run_pipeline(&load(spec)?, &options(cli, run))?),
        Command::Check { spec, divisions, run } => {
            let opts = PipelineOptions {
                check_divisions: Some(*divisions),
                ..options(cli, run)
            };
            let r = run_pipeline(&load(spec)?, &opts)?;
            summarize(&r);
            let report = r.check.expect("check requested");
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::CheckFailed)
            }
        }
        Command::Synthesize {
            spec,
            objective,
            region,
            run,
        } => {
            let objective = match objective {
                ObjectiveArg::Safety => Objective::Safety,
                ObjectiveArg::Reach => Objective::Reach,
            };
            let opts = PipelineOptions {
                synthesize: Some(SynthesisRequest {
                    objective,
                    region: parse_region(region)?,
                }),
                ..options(cli, run)
            };
            let r = run_pipeline(&load(spec)?, &opts)?;
            if let Some(s) = &r.synthesis {
                eprintln!(
                    "controller domain: {} of {} states ({} in the goal), {} iterations",
                    s.domain_states, s.total_states, s.goal_states, s.iterations
                );
            }
            print_report(&r)
        }
        Command::Bench {
            n,
            monolithic,
            budget,
            check,
            emit_spec,
            run,
        } => {
            if *n == 0 {
                return Err(Failure::Usage("--n must be at least 1".into()));
            }
            let spec = bench_spec(*n);
            let text = serde_json::to_string_pretty(&spec)? + "\n";
            if let Some(path) = emit_spec {
                std::fs::write(path, text)?;
                return Ok(());
            }
            let loaded = parse_spec(&text)?;
            let mut opts = options(cli, run);
            opts.deadline = budget.map(|b| Instant::now() + Duration::from_secs_f64(b));
            if *check {
                opts.check_divisions = Some(10);
            }
            let r = if *monolithic {
                run_monolithic(&loaded, &opts)?
            } else {
                run_pipeline(&loaded, &opts)?
            };
            print_report(&r)?;
            match &r.check {
                Some(c) if !c.passed() => Err(Failure::CheckFailed),
                _ => Ok(()),
            }
        }
        Command::Stats { artifact } => {
            let s = stats(artifact)?;
            println!("module       {}", s.name);
            println!("transitions  {} ({})", s.transitions, sci(s.transitions));
            println!("nodes        {}", s.nodes);
            println!(
                "blocking     {} of {} inputs ({:.4})",
                s.blocking, s.input_cells, s.blocking_fraction
            );
            Ok(())
        }
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
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::CheckFailed) => {
            eprintln!("check failed");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Pipeline(e)) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(EXIT_VALIDATION)
            } else if e.is_budget() {
                ExitCode::from(EXIT_BUDGET)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
