//! `frflow repro`: natural policy gradient runs from random starts on the
//! two-state example, with the predicted exponential rates for reference.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use frflow_core::mdp::{mdp_rate_constants, Mdp, MdpRateConstants};
use frflow_core::npg::{run_npg, NpgConfig, Parametrization, Preconditioner, TrajectoryLog};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, StandardNormal};
use rayon::prelude::*;

use crate::error::{CliError, Result};
use crate::instance::{self, Instance, Overrides};
use crate::manifest::ExperimentManifest;
use crate::svg::{self, Panel, Series, Stroke};
use crate::table::{write_file, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// The original rewards; both rates coincide.
    Fig2,
    /// `r(s1, a2) = 3`, where the advantage rate exceeds the edge rate.
    Fig3,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
        }
    }

    pub fn instance(self) -> &'static str {
        match self {
            Self::Fig2 => "kakade2x2",
            Self::Fig3 => "kakade2x2-variant",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParamChoice {
    Softmax,
    Escort(f64),
    LogLinear(PathBuf),
}

impl FromStr for ParamChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            None if s == "softmax" => Ok(Self::Softmax),
            Some(("escort", p)) => p
                .parse::<f64>()
                .map(Self::Escort)
                .map_err(|e| format!("escort power `{p}`: {e}")),
            Some(("loglinear", path)) if !path.is_empty() => Ok(Self::LogLinear(path.into())),
            _ => Err(format!("expected softmax, escort:<p> or loglinear:<path>, got `{s}`")),
        }
    }
}

impl std::fmt::Display for ParamChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Softmax => write!(f, "softmax"),
            Self::Escort(p) => write!(f, "escort:{p}"),
            Self::LogLinear(path) => write!(f, "loglinear:{}", path.display()),
        }
    }
}

impl ParamChoice {
    pub fn build(&self, mdp: &Mdp) -> Result<Parametrization> {
        Ok(match self {
            Self::Softmax => Parametrization::softmax(mdp),
            Self::Escort(p) => Parametrization::escort(mdp, *p)?,
            Self::LogLinear(path) => Parametrization::log_linear(mdp, instance::load_features(path, mdp.num_pairs())?)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReproOptions {
    pub stepsize: f64,
    pub iters: usize,
    pub seeds: Vec<u64>,
    pub preconditioners: Vec<Preconditioner>,
    pub parametrization: ParamChoice,
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl Default for ReproOptions {
    fn default() -> Self {
        Self {
            stepsize: 1e-2,
            iters: 3000,
            seeds: (0..30).collect(),
            preconditioners: vec![Preconditioner::StateAction, Preconditioner::Kakade],
            parametrization: ParamChoice::Softmax,
            threads: None,
        }
    }
}

/// Thread cap from `FRFLOW_THREADS`; unset, empty or zero means no cap.
pub fn threads_from_env() -> Option<usize> {
    std::env::var("FRFLOW_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|n: &usize| *n > 0)
}

/// Independent standard normal coordinates from a ChaCha8 stream.
pub fn initial_theta(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub preconditioner: Preconditioner,
    pub log: TrajectoryLog,
}

#[derive(Debug, Clone)]
pub struct ReproResult {
    pub figure: Figure,
    pub mdp: Mdp,
    pub rates: MdpRateConstants,
    pub stepsize: f64,
    /// Ordered by preconditioner, then seed.
    pub runs: Vec<SeedRun>,
}

pub fn run(figure: Figure, opts: &ReproOptions) -> Result<ReproResult> {
    let (_, inst) = instance::load(figure.instance(), Overrides::default())?;
    let Instance::Mdp(mdp) = inst else {
        unreachable!("bundled figure instances are MDPs")
    };
    let rates = mdp_rate_constants(&mdp)?;
    let par = opts.parametrization.build(&mdp)?;
    let jobs: Vec<(Preconditioner, u64)> = opts
        .preconditioners
        .iter()
        .flat_map(|pc| opts.seeds.iter().map(move |s| (*pc, *s)))
        .collect();
    let work = || {
        jobs.par_iter()
            .map(|&(preconditioner, seed)| {
                let cfg = NpgConfig {
                    preconditioner,
                    stepsize: opts.stepsize,
                    max_iters: opts.iters,
                    ..NpgConfig::default()
                };
                let log = run_npg(&mdp, &par, &cfg, &initial_theta(seed, par.parameter_dim()))?;
                Ok(SeedRun {
                    seed,
                    preconditioner,
                    log,
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    let runs = match opts.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Precondition(format!("thread pool: {e}")))?
            .install(work)?,
        None => work()?,
    };
    Ok(ReproResult {
        figure,
        mdp,
        rates,
        stepsize: opts.stepsize,
        runs,
    })
}

pub fn seed_table(log: &TrajectoryLog) -> Table {
    let mut t = Table::new(&["k", "reward", "gap", "kl", "eps", "chi2"]);
    for r in &log.records {
        t.push(&[
            r.k.to_string(),
            crate::table::number(r.reward),
            crate::table::number(r.gap),
            crate::table::number(r.kl),
            crate::table::number(r.eps),
            crate::table::number(r.chi2),
        ]);
    }
    t
}

/// Points drawn per run; CSVs keep every iteration.
const PLOT_POINTS: usize = 400;

fn color(pc: Preconditioner) -> &'static str {
    match pc {
        Preconditioner::StateAction => "#1f77b4",
        Preconditioner::Kakade => "#ff7f0e",
    }
}

/// Gap and KL curves of every run against `k` on log scales, with
/// `C e^{−Δηk}` dashed and, for fig3, `C e^{−Δ_K ηk}` dotted.
pub fn plot(result: &ReproResult) -> String {
    let panel = |title: &str, y_label: &str, value: fn(&frflow_core::npg::NpgRecord) -> f64| {
        let mut series: Vec<Series> = result
            .runs
            .iter()
            .map(|run| {
                let stride = (run.log.records.len() / PLOT_POINTS).max(1);
                let pts = run
                    .log
                    .records
                    .iter()
                    .step_by(stride)
                    .map(|r| (r.k as f64, value(r)))
                    .collect();
                Series::faint(pts, color(run.preconditioner))
            })
            .collect();
        let start = result
            .runs
            .iter()
            .filter_map(|r| r.log.records.first().map(value))
            .fold(0.0f64, f64::max);
        let k_max = result.runs.iter().map(|r| r.log.records.len()).max().unwrap_or(1) as f64 - 1.0;
        let reference = |rate: f64| -> Vec<(f64, f64)> {
            (0..=100)
                .map(|i| {
                    let k = k_max * i as f64 / 100.0;
                    (k, start * (-rate * result.stepsize * k).exp())
                })
                .collect()
        };
        series.push(Series::line(
            "e^{−Δηk}",
            reference(result.rates.delta_rate),
            "#000",
            Stroke::Dashed,
        ));
        if result.figure == Figure::Fig3 {
            series.push(Series::line(
                "e^{−Δ_K ηk}",
                reference(result.rates.delta_kakade),
                "#000",
                Stroke::Dotted,
            ));
        }
        for pc in [Preconditioner::StateAction, Preconditioner::Kakade] {
            if result.runs.iter().any(|r| r.preconditioner == pc) {
                series.push(Series::line(pc.name(), Vec::new(), color(pc), Stroke::Solid));
            }
        }
        Panel {
            title: title.into(),
            x_label: "iteration k".into(),
            y_label: y_label.into(),
            log_y: true,
            series,
        }
    };
    svg::render(&[
        panel("optimality gap", "R* − R(θ_k)", |r| r.gap),
        panel("KL to the optimum", "KL(d*, d_k)", |r| r.kl),
    ])
}

/// Writes `<dir>/<preconditioner>_seed<NN>.csv`, `<dir>/<figure>.svg` and
/// `<dir>/manifest.json`.
pub fn write(result: &ReproResult, opts: &ReproOptions, dir: &Path) -> Result<ExperimentManifest> {
    for run in &result.runs {
        let name = format!("{}_seed{:02}.csv", run.preconditioner.name(), run.seed);
        seed_table(&run.log).write(&dir.join(name))?;
    }
    write_file(&dir.join(format!("{}.svg", result.figure.name())), &plot(result))?;
    let mut manifest = ExperimentManifest::new(
        &format!("repro {}", result.figure.name()),
        Some(format!("bundled:{}", result.figure.instance())),
        dir,
    );
    manifest
        .set("eta", opts.stepsize)
        .set("iters", opts.iters as u64)
        .set("parametrization", opts.parametrization.to_string())
        .set(
            "preconditioners",
            opts.preconditioners.iter().map(|p| p.name()).collect::<Vec<_>>(),
        )
        .set("initialization", "theta ~ N(0, I) from ChaCha8 seeded per run");
    manifest.seeds = opts.seeds.clone();
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}
