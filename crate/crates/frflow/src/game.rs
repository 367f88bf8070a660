//! `frflow game`: per-player natural gradient simulation against the
//! closed-form product flow.

use frflow_core::games::{closed_form_product_flow, factorize_cost, simulate_factor_flow, FactorizedCost};
use frflow_core::measures::tv_distance;

use crate::error::{CliError, Result};
use crate::instance::GameSpec;
use crate::table::{number, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GameOptions {
    pub stepsize: f64,
    pub t_max: f64,
}

impl Default for GameOptions {
    fn default() -> Self {
        Self {
            stepsize: 1e-3,
            t_max: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GameComparison {
    pub factors: FactorizedCost,
    pub times: Vec<f64>,
    /// TV distance between the simulated product and the closed form.
    pub deviations: Vec<f64>,
}

impl GameComparison {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().copied().fold(0.0, f64::max)
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&["t", "tv_deviation"]);
        for (time, d) in self.times.iter().zip(&self.deviations) {
            t.push(&[number(*time), number(*d)]);
        }
        t
    }
}

/// Simulates from uniform factors for `round(t_max / stepsize)` steps.
pub fn run(spec: &GameSpec, opts: &GameOptions) -> Result<GameComparison> {
    if !(opts.stepsize > 0.0 && opts.t_max >= 0.0) {
        return Err(CliError::Precondition(
            "stepsize must be positive and t-max non-negative".into(),
        ));
    }
    let factors = factorize_cost(&spec.cost, spec.players, spec.actions)?;
    let iters = (opts.t_max / opts.stepsize).round() as usize;
    let theta0 = vec![vec![0.0; spec.actions]; spec.players];
    let states = simulate_factor_flow(&factors, &theta0, opts.stepsize, iters)?;
    let mut times = Vec::with_capacity(states.len());
    let mut deviations = Vec::with_capacity(states.len());
    for (k, state) in states.iter().enumerate() {
        let t = opts.stepsize * k as f64;
        let exact = closed_form_product_flow(&factors, t)?;
        deviations.push(tv_distance(&state.joint()?, &exact)?);
        times.push(t);
    }
    Ok(GameComparison {
        factors,
        times,
        deviations,
    })
}
