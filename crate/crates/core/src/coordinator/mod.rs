//! Cost-optimal coordination of the EVs behind one transformer.
//!
//! The model: each EV draws a fixed power in the slots where it is switched on.
//! Every charging run lasts at least `tau_min` slots, no run starts in the
//! last `tau_min` slots of the day, each EV turns on at most `max_switches`
//! times, nothing charges while the vehicle is away, every EV receives its
//! energy demand, and in every slot base load plus charging stays within the
//! transformer rating. The objective is the total energy cost under the tariff.
//!
//! [`build_ilp`] writes that model out as an explicit integer program,
//! [`solve`] finds an exact optimum, [`verify_schedule`] independently checks
//! any schedule, and [`brute_force_oracle`] enumerates small instances.

mod flow;
mod ilp;
mod milp;
mod oracle;
mod rowdp;
mod solver;
mod verify;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

pub use ilp::{build_ilp, ConstraintFamily, IlpModel, LinearConstraint, Sense, VarKind, Variable};
pub use oracle::brute_force_oracle;
pub use solver::{solve, solve_for};
pub use verify::{verify_schedule, Violation, ViolationKind};

/// Binary charging decisions with the quantities they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargingSchedule {
    /// `kappa[n][t]`: EV `n` charges during slot `t`.
    pub kappa: Vec<Vec<bool>>,
    /// Charging power drawn in each slot (kW), excluding base load.
    pub aggregate_kw: Vec<f64>,
    pub delivered_kwh: Vec<f64>,
    pub total_cost_cents: f64,
}

impl ChargingSchedule {
    /// Derives the aggregate, delivered energy and cost from `kappa`.
    pub fn from_kappa(scenario: &Scenario, kappa: Vec<Vec<bool>>) -> crate::Result<Self> {
        let prices = scenario.prices()?;
        let power = scenario.charger.power_kw;
        let dt = scenario.grid.slot_hours;
        let slots = scenario.grid.num_slots;
        let mut aggregate_kw = vec![0.0; slots];
        let mut delivered_kwh = Vec::with_capacity(kappa.len());
        let mut total_cost_cents = 0.0;
        for row in &kappa {
            let mut on = 0usize;
            for (t, &k) in row.iter().enumerate() {
                if k {
                    on += 1;
                    aggregate_kw[t] += power;
                    total_cost_cents += power * dt * prices[t];
                }
            }
            delivered_kwh.push(power * dt * on as f64);
        }
        Ok(ChargingSchedule {
            kappa,
            aggregate_kw,
            delivered_kwh,
            total_cost_cents,
        })
    }

    /// The schedule restricted to the EVs at `keep` (positions into `kappa`).
    pub fn restricted(&self, scenario: &Scenario, keep: &[usize]) -> crate::Result<Self> {
        let kappa = keep.iter().map(|&i| self.kappa[i].clone()).collect();
        Self::from_kappa(scenario, kappa)
    }

    pub fn num_evs(&self) -> usize {
        self.kappa.len()
    }
}

/// Turn-on indicators implied by a charging matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchIndicators {
    pub omega: Vec<Vec<bool>>,
}

impl SwitchIndicators {
    /// `omega[n][0] = kappa[n][0]`; afterwards set exactly on 0 -> 1 transitions.
    pub fn from_kappa(kappa: &[Vec<bool>]) -> Self {
        let omega = kappa
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(t, &k)| k && (t == 0 || !row[t - 1]))
                    .collect()
            })
            .collect();
        SwitchIndicators { omega }
    }

    pub fn turn_ons(&self, ev: usize) -> usize {
        self.omega[ev].iter().filter(|&&w| w).count()
    }
}

/// What a solve has to establish.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Goal {
    /// A minimum-cost schedule (within the relative gap).
    MinCost,
    /// Any schedule satisfying the constraints; enough to decide feasibility.
    AnySchedule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// A schedule meeting the goal was found: optimal within the relative
    /// gap, or merely valid under [`Goal::AnySchedule`].
    Feasible,
    /// No schedule satisfies the constraints.
    Infeasible,
    /// The time limit expired first. A schedule may still be attached, in which
    /// case the instance is feasible but its optimality is unproven.
    Unresolved,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes_explored: u64,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationResult {
    pub status: SolveStatus,
    pub schedule: Option<ChargingSchedule>,
    pub proof_note: String,
    pub solve_stats: SolveStats,
}

impl CoordinationResult {
    pub fn cost_cents(&self) -> Option<f64> {
        self.schedule.as_ref().map(|s| s.total_cost_cents)
    }

    /// Whether a constraint-satisfying schedule is known, optimal or not.
    pub fn has_schedule(&self) -> bool {
        self.schedule.is_some()
    }
}
