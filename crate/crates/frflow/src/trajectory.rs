//! `frflow flow`: the central path of an instance on a time grid.

use frflow_core::flow::{default_time_grid, integrate_flow_with, CentralPathConfig, FlowTrajectory};
use frflow_core::lp_geometry::{enumerate_vertices, gap_constants, optimal_face};
use frflow_core::Error as CoreError;

use crate::error::Result;
use crate::instance::Instance;
use crate::rates::default_start;
use crate::svg::{self, Panel, Series, Stroke};
use crate::table::{optional, Table};

pub const DEFAULT_GRID_POINTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowOptions {
    /// Last grid time; by default `100/Δ`.
    pub t_max: Option<f64>,
    pub grid_points: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            t_max: None,
            grid_points: DEFAULT_GRID_POINTS,
        }
    }
}

/// `0` followed by `points − 1` geometrically spaced times ending at `t_max`.
pub fn time_grid(t_max: f64, points: usize) -> Vec<f64> {
    let lo = (t_max / 100.0).min(1e-2);
    let k = points.saturating_sub(1);
    let mut out = vec![0.0];
    for i in 0..k {
        let s = if k > 1 { i as f64 / (k - 1) as f64 } else { 1.0 };
        out.push(lo * (t_max / lo).powf(s));
    }
    if let Some(last) = out.last_mut() {
        if k > 0 {
            *last = t_max;
        }
    }
    out
}

pub fn run(instance: &Instance, opts: &FlowOptions) -> Result<FlowTrajectory> {
    let (lp, mu0) = default_start(instance)?;
    let vertices = enumerate_vertices(&lp)?;
    let times = match opts.t_max {
        Some(t) => time_grid(t, opts.grid_points),
        None => {
            let face = optimal_face(&lp, &vertices);
            let delta = match gap_constants(&lp, &vertices, &face) {
                Ok(g) => g.delta_rate,
                Err(CoreError::TrivialProgram) => f64::NAN,
                Err(e) => return Err(e.into()),
            };
            default_time_grid(delta, opts.grid_points)
        }
    };
    Ok(integrate_flow_with(
        &lp,
        &vertices,
        &mu0,
        &times,
        &CentralPathConfig::default(),
    )?)
}

pub fn table(traj: &FlowTrajectory) -> Table {
    let mut t = Table::new(&["t", "gap", "kl", "sublinear_bound", "linear_bound_kl", "linear_bound_value"]);
    for (time, d) in traj.times.iter().zip(&traj.diagnostics) {
        t.push(&[
            crate::table::number(*time),
            crate::table::number(d.gap),
            crate::table::number(d.kl_to_optimum),
            optional(d.sublinear_bound),
            optional(d.linear_bound_kl),
            optional(d.linear_bound_value),
        ]);
    }
    t
}

fn points(traj: &FlowTrajectory, f: impl Fn(&frflow_core::flow::FlowDiagnostics) -> Option<f64>) -> Vec<(f64, f64)> {
    traj.times
        .iter()
        .zip(&traj.diagnostics)
        .filter_map(|(t, d)| f(d).map(|v| (*t, v)))
        .collect()
}

/// Gap and KL against time on log scales with the bounds overlaid.
pub fn plot(traj: &FlowTrajectory) -> String {
    let gap = Panel {
        title: "optimality gap".into(),
        x_label: "t".into(),
        y_label: "c·μ* − c·μ_t".into(),
        log_y: true,
        series: vec![
            Series::line("gap", points(traj, |d| Some(d.gap)), "#1f77b4", Stroke::Solid),
            Series::line("KL₀ / t", points(traj, |d| d.sublinear_bound), "#555", Stroke::Dashed),
            Series::line(
                "linear display",
                points(traj, |d| d.linear_bound_value),
                "#d62728",
                Stroke::Dotted,
            ),
        ],
    };
    let kl = Panel {
        title: "KL to the limit".into(),
        x_label: "t".into(),
        y_label: "KL(μ*, μ_t)".into(),
        log_y: true,
        series: vec![
            Series::line("KL", points(traj, |d| Some(d.kl_to_optimum)), "#2ca02c", Stroke::Solid),
            Series::line("linear bound", points(traj, |d| d.linear_bound_kl), "#555", Stroke::Dashed),
        ],
    };
    svg::render(&[gap, kl])
}
