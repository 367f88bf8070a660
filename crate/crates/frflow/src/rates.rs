//! `frflow rates`: geometric rate constants of an instance.

use std::fmt::Write as _;

use frflow_core::lp_geometry::{enumerate_vertices, onset_time, optimal_face, rate_constants, SimplexLp};
use frflow_core::mdp::{deterministic_policies, mdp_rate_constants_with, occupancy, reward_of, state_action_lp, Mdp, Policy};
use frflow_core::measures::Distribution;

use crate::error::{CliError, Result};
use crate::instance::Instance;
use crate::table::{number, optional, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct RatesReport {
    /// Reward of every deterministic policy (MDP instances only).
    pub policy_rewards: Vec<(Vec<usize>, f64)>,
    pub optimal_value: f64,
    pub vertices: usize,
    pub optimal_face_size: usize,
    pub delta_lower: f64,
    pub delta_rate: f64,
    pub delta_kakade: Option<f64>,
    /// Onset of the linear regime from the default start; `None` when the
    /// optimum is not unique.
    pub onset_time: Option<f64>,
}

/// Flow start used by `rates` and `flow`: the file's `start`, the
/// maximum-entropy point of the polytope, or for MDPs the occupancy of the
/// uniform policy.
pub fn default_start(instance: &Instance) -> Result<(SimplexLp, Distribution)> {
    match instance {
        Instance::Lp { lp, start } => {
            let mu0 = start.clone().unwrap_or_else(|| lp.max_entropy_point().clone());
            Ok((lp.clone(), mu0))
        }
        Instance::Mdp(mdp) => {
            let lp = state_action_lp(mdp)?;
            let uniform = Policy::uniform(mdp.num_states(), mdp.num_actions());
            Ok((lp, occupancy(mdp, &uniform)?.into_distribution()))
        }
        Instance::Game(_) => Err(CliError::Precondition(
            "game instances have no polytope; use `frflow game`".into(),
        )),
    }
}

pub fn compute(instance: &Instance) -> Result<RatesReport> {
    let (lp, mu0) = default_start(instance)?;
    let vertices = enumerate_vertices(&lp)?;
    let face = optimal_face(&lp, &vertices);
    let mut report = match instance {
        Instance::Mdp(mdp) => mdp_report(mdp, &lp, &vertices, &face, &mu0)?,
        _ => {
            let rc = rate_constants(&lp, &vertices, &mu0)?;
            RatesReport {
                policy_rewards: Vec::new(),
                optimal_value: face.optimal_value,
                vertices: 0,
                optimal_face_size: 0,
                delta_lower: rc.delta_lower,
                delta_rate: rc.delta_rate,
                delta_kakade: None,
                onset_time: rc.t0,
            }
        }
    };
    report.vertices = vertices.len();
    report.optimal_face_size = face.vertex_indices.len();
    Ok(report)
}

fn mdp_report(
    mdp: &Mdp,
    lp: &SimplexLp,
    vertices: &frflow_core::lp_geometry::VertexSet,
    face: &frflow_core::lp_geometry::OptimalFace,
    mu0: &Distribution,
) -> Result<RatesReport> {
    let rc = mdp_rate_constants_with(mdp, lp, vertices)?;
    let mut policy_rewards = Vec::new();
    for actions in deterministic_policies(mdp)? {
        let r = reward_of(mdp, &Policy::deterministic(mdp.num_actions(), &actions))?;
        policy_rewards.push((actions, r));
    }
    let onset = if face.is_unique() {
        Some(onset_time(vertices.vertex(face.vertex_indices[0]), mu0, rc.delta_rate)?)
    } else {
        None
    };
    Ok(RatesReport {
        policy_rewards,
        optimal_value: face.optimal_value,
        vertices: 0,
        optimal_face_size: 0,
        delta_lower: rc.delta_lower,
        delta_rate: rc.delta_rate,
        delta_kakade: Some(rc.delta_kakade),
        onset_time: onset,
    })
}

fn policy_name(actions: &[usize]) -> String {
    let parts: Vec<String> = actions.iter().map(|a| (a + 1).to_string()).collect();
    format!("policy[{}]", parts.join(" "))
}

impl RatesReport {
    /// Two columns, `quantity,value`; policies are listed with one-based
    /// action indices per state.
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["quantity", "value"]);
        for (actions, r) in &self.policy_rewards {
            t.push(&[policy_name(actions), number(*r)]);
        }
        t.push(&["optimal_value".into(), number(self.optimal_value)]);
        t.push(&["vertices".into(), self.vertices.to_string()]);
        t.push(&["optimal_face_size".into(), self.optimal_face_size.to_string()]);
        t.push(&["delta_lower".into(), number(self.delta_lower)]);
        t.push(&["delta_rate".into(), number(self.delta_rate)]);
        t.push(&["delta_kakade".into(), optional(self.delta_kakade)]);
        t.push(&["onset_time".into(), optional(self.onset_time)]);
        t
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (actions, r) in &self.policy_rewards {
            let _ = writeln!(s, "{:<22}{r:.10}", format!("reward {}", policy_name(actions)));
        }
        let _ = writeln!(s, "{:<22}{:.10}", "optimal value", self.optimal_value);
        let _ = writeln!(
            s,
            "{:<22}{} of {} vertices",
            "optimal face", self.optimal_face_size, self.vertices
        );
        let _ = writeln!(s, "{:<22}{:.10}", "delta (vertex gap)", self.delta_lower);
        let _ = writeln!(s, "{:<22}{:.10}", "Delta (edge slope)", self.delta_rate);
        if let Some(k) = self.delta_kakade {
            let _ = writeln!(s, "{:<22}{k:.10}", "Delta_K (advantage)");
        }
        match self.onset_time {
            Some(t0) => {
                let _ = writeln!(s, "{:<22}{t0:.10}", "t0");
            }
            None => s.push_str("t0                    n/a (optimum not unique)\n"),
        }
        s
    }
}
