//! Independent schedule checker. Works directly from the scenario's raw
//! numbers in floating point and shares no code with the solver.

use serde::{Deserialize, Serialize};

use super::ChargingSchedule;
use crate::scenario::Scenario;

const KW_TOL: f64 = 1e-6;
const KWH_TOL: f64 = 1e-6;
const COST_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViolationKind {
    Dimension,
    Capacity,
    Demand,
    Availability,
    MinRunLength,
    LateStart,
    SwitchBudget,
    Accounting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub ev: Option<usize>,
    pub slot: Option<usize>,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.kind)?;
        if let Some(ev) = self.ev {
            write!(f, " ev={ev}")?;
        }
        if let Some(slot) = self.slot {
            write!(f, " slot={slot}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Lists every constraint `schedule` breaks for `scenario`; empty means valid.
pub fn verify_schedule(scenario: &Scenario, schedule: &ChargingSchedule) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut report = |kind, ev, slot, detail: String| {
        out.push(Violation {
            kind,
            ev,
            slot,
            detail,
        })
    };

    let slots = scenario.profile.kw.len();
    let n_evs = scenario.sessions.len();
    if schedule.kappa.len() != n_evs || schedule.kappa.iter().any(|r| r.len() != slots) {
        report(
            ViolationKind::Dimension,
            None,
            None,
            format!("schedule is not {n_evs} x {slots}"),
        );
        return out;
    }

    let power = scenario.charger.power_kw;
    let hours = 24.0 / slots as f64;
    let tau = scenario.params.tau_min;
    let budget = scenario.params.max_switches;

    for t in 0..slots {
        let on = schedule.kappa.iter().filter(|row| row[t]).count() as f64;
        let total = scenario.profile.kw[t] + power * on;
        if total > scenario.capacity_kw + KW_TOL {
            report(
                ViolationKind::Capacity,
                None,
                Some(t),
                format!("{total:.4} kW exceeds {:.4} kW", scenario.capacity_kw),
            );
        }
    }

    for (n, (row, session)) in schedule.kappa.iter().zip(&scenario.sessions).enumerate() {
        for &t in &session.unavailable_slots {
            if t < slots && row[t] {
                report(
                    ViolationKind::Availability,
                    Some(n),
                    Some(t),
                    "charging while away".into(),
                );
            }
        }

        let energy = power * hours * row.iter().filter(|&&k| k).count() as f64;
        if energy < session.energy_demand_kwh - KWH_TOL {
            report(
                ViolationKind::Demand,
                Some(n),
                None,
                format!(
                    "delivers {energy:.4} kWh of {:.4} kWh",
                    session.energy_demand_kwh
                ),
            );
        }

        let mut turn_ons = 0;
        let mut t = 0;
        while t < slots {
            if !row[t] {
                t += 1;
                continue;
            }
            let start = t;
            while t < slots && row[t] {
                t += 1;
            }
            turn_ons += 1;
            if t - start < tau {
                report(
                    ViolationKind::MinRunLength,
                    Some(n),
                    Some(start),
                    format!("run of {} slots, minimum {tau}", t - start),
                );
            }
            if start + tau >= slots {
                report(
                    ViolationKind::LateStart,
                    Some(n),
                    Some(start),
                    format!("turns on within the last {tau} slots"),
                );
            }
        }
        if turn_ons > budget {
            report(
                ViolationKind::SwitchBudget,
                Some(n),
                None,
                format!("{turn_ons} turn-ons, budget {budget}"),
            );
        }
    }

    // The derived fields must agree with kappa.
    if let Ok(prices) = scenario.tariff.price_series(scenario.month, &scenario.grid) {
        let mut cost = 0.0;
        for row in &schedule.kappa {
            for t in 0..slots {
                if row[t] {
                    cost += power * hours * prices[t];
                }
            }
        }
        let scale = cost.abs().max(1.0);
        if (cost - schedule.total_cost_cents).abs() > COST_REL_TOL * scale {
            report(
                ViolationKind::Accounting,
                None,
                None,
                format!(
                    "reported cost {} but kappa costs {cost}",
                    schedule.total_cost_cents
                ),
            );
        }
    }
    for t in 0..slots.min(schedule.aggregate_kw.len()) {
        let on = schedule.kappa.iter().filter(|row| row[t]).count() as f64;
        if (schedule.aggregate_kw[t] - power * on).abs() > KW_TOL {
            report(
                ViolationKind::Accounting,
                None,
                Some(t),
                "aggregate power does not match kappa".into(),
            );
        }
    }

    out
}
