use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use frflow::instance::{self, Instance, Overrides};
use frflow::manifest::ExperimentManifest;
use frflow::repro::{self, Figure, ParamChoice, ReproOptions};
use frflow::table::write_file;
use frflow::{game, rates, trajectory, CliError, Result};
use frflow_core::npg::Preconditioner;

/// Fisher-Rao gradient flows of linear programs and natural policy gradients.
#[derive(Debug, Parser)]
#[command(name = "frflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rate constants of an LP or MDP instance.
    Rates {
        /// Instance file, or the name of a bundled instance.
        instance: String,
        /// Pinned mass of a pinned-atom instance.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Flow trajectory with bound diagnostics.
    Flow {
        instance: String,
        #[arg(long)]
        alpha: Option<f64>,
        /// Last grid time [default: 100/Delta].
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long, default_value_t = trajectory::DEFAULT_GRID_POINTS)]
        grid_points: usize,
        /// Also write log-scale plots.
        #[arg(long)]
        svg: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Natural policy gradient runs from random starts on the bundled example.
    Repro {
        #[arg(value_enum)]
        figure: FigureArg,
        #[arg(long, default_value_t = 1e-2)]
        eta: f64,
        #[arg(long, default_value_t = 3000)]
        iters: usize,
        /// Number of seeds, run as 0..N.
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        /// Restrict to one preconditioner [default: both].
        #[arg(long, value_enum)]
        preconditioner: Option<PreconditionerArg>,
        /// softmax, escort:<p> or loglinear:<features.toml>.
        #[arg(long, default_value = "softmax")]
        parametrization: ParamChoice,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Per-player simulation against the closed-form product flow.
    Game {
        cost: String,
        #[arg(long, default_value_t = 1e-3)]
        eta: f64,
        #[arg(long, default_value_t = 1.0)]
        t_max: f64,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
struct OutArgs {
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PreconditionerArg {
    StateAction,
    Kakade,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(name: &str, alpha: Option<f64>) -> Result<(String, Instance)> {
    let (source, inst) = instance::load(name, Overrides { alpha })?;
    Ok((source.to_string(), inst))
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Rates { instance, alpha, out } => {
            let (source, inst) = load(&instance, alpha)?;
            let report = rates::compute(&inst)?;
            print!("{}", report.summary());
            report.table().write(&out.out.join("rates.csv"))?;
            let mut m = ExperimentManifest::new("rates", Some(source), &out.out);
            if let Some(a) = alpha {
                m.set("alpha", a);
            }
            m.write(&out.out.join("manifest.json"))
        }
        Command::Flow {
            instance,
            alpha,
            t_max,
            grid_points,
            svg,
            out,
        } => {
            let (source, inst) = load(&instance, alpha)?;
            let opts = trajectory::FlowOptions { t_max, grid_points };
            let traj = trajectory::run(&inst, &opts)?;
            trajectory::table(&traj).write(&out.out.join("flow.csv"))?;
            if svg {
                write_file(&out.out.join("flow.svg"), &trajectory::plot(&traj))?;
            }
            if let (Some(t), Some(d)) = (traj.times.last(), traj.diagnostics.last()) {
                println!("t = {t}: gap {:.6e}, KL {:.6e}", d.gap, d.kl_to_optimum);
            }
            let mut m = ExperimentManifest::new("flow", Some(source), &out.out);
            m.set("grid_points", grid_points as u64).set("svg", svg);
            if let Some(t) = t_max {
                m.set("t_max", t);
            }
            if let Some(a) = alpha {
                m.set("alpha", a);
            }
            m.write(&out.out.join("manifest.json"))
        }
        Command::Repro {
            figure,
            eta,
            iters,
            seeds,
            preconditioner,
            parametrization,
            out,
        } => {
            let figure = match figure {
                FigureArg::Fig2 => Figure::Fig2,
                FigureArg::Fig3 => Figure::Fig3,
            };
            let preconditioners = match preconditioner {
                None => vec![Preconditioner::StateAction, Preconditioner::Kakade],
                Some(PreconditionerArg::StateAction) => vec![Preconditioner::StateAction],
                Some(PreconditionerArg::Kakade) => vec![Preconditioner::Kakade],
            };
            let opts = ReproOptions {
                stepsize: eta,
                iters,
                seeds: (0..seeds).collect(),
                preconditioners,
                parametrization,
                threads: repro::threads_from_env(),
            };
            let result = repro::run(figure, &opts)?;
            let dir = out.out.join(figure.name());
            repro::write(&result, &opts, &dir)?;
            println!(
                "{} runs written to {} (Delta = {}, Delta_K = {})",
                result.runs.len(),
                dir.display(),
                result.rates.delta_rate,
                result.rates.delta_kakade
            );
            Ok(())
        }
        Command::Game { cost, eta, t_max, out } => {
            let (source, inst) = load(&cost, None)?;
            let Instance::Game(spec) = inst else {
                return Err(CliError::Precondition(format!("{source} is not a game instance")));
            };
            let cmp = game::run(&spec, &game::GameOptions { stepsize: eta, t_max })?;
            cmp.table().write(&out.out.join("game.csv"))?;
            println!("max TV deviation {:.6e}", cmp.max_deviation());
            let mut m = ExperimentManifest::new("game", Some(source), &out.out);
            m.set("eta", eta).set("t_max", t_max);
            m.write(&out.out.join("manifest.json"))
        }
    }
}
