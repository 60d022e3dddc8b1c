//! Explicit integer-program form of the coordination model.
//!
//! The exact solver does not consume this model; it exists so the
//! formulation can be inspected, exported to an LP file for an external MILP
//! solver, and used to check any candidate assignment row by row.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    /// Charging decision for (ev, slot).
    Kappa { ev: usize, slot: usize },
    /// Turn-on indicator for (ev, slot).
    Omega { ev: usize, slot: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    /// Variables pinned to a value (vehicle away) carry it here.
    pub fixed: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConstraintFamily {
    Capacity,
    SwitchDetectLower,
    SwitchDetectUpper,
    InitialSwitch,
    InitialRun,
    MinRun,
    EndOfDay,
    SwitchBudget,
    Demand,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub name: String,
    pub family: ConstraintFamily,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearConstraint {
    fn lhs(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * values[v]).sum()
    }

    fn satisfied(&self, values: &[f64], tol: f64) -> bool {
        let lhs = self.lhs(values);
        match self.sense {
            Sense::Le => lhs <= self.rhs + tol,
            Sense::Ge => lhs >= self.rhs - tol,
            Sense::Eq => (lhs - self.rhs).abs() <= tol,
        }
    }
}

/// Binary program: minimize `objective . x` subject to `constraints`, all
/// variables in {0, 1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IlpModel {
    pub num_evs: usize,
    pub num_slots: usize,
    pub variables: Vec<Variable>,
    pub objective: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
}

impl IlpModel {
    pub fn kappa(&self, ev: usize, slot: usize) -> usize {
        ev * self.num_slots + slot
    }

    pub fn omega(&self, ev: usize, slot: usize) -> usize {
        (self.num_evs + ev) * self.num_slots + slot
    }

    pub fn count(&self, family: ConstraintFamily) -> usize {
        self.constraints.iter().filter(|c| c.family == family).count()
    }

    pub fn fixed_count(&self) -> usize {
        self.variables.iter().filter(|v| v.fixed.is_some()).count()
    }

    /// Full assignment for a charging matrix, with turn-on indicators set by
    /// the transition rule.
    pub fn assignment_from_kappa(&self, kappa: &[Vec<bool>]) -> Vec<f64> {
        let mut values = vec![0.0; self.variables.len()];
        for (n, row) in kappa.iter().enumerate() {
            for (t, &k) in row.iter().enumerate() {
                if k {
                    values[self.kappa(n, t)] = 1.0;
                    if t == 0 || !row[t - 1] {
                        values[self.omega(n, t)] = 1.0;
                    }
                }
            }
        }
        values
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective.iter().zip(values).map(|(c, x)| c * x).sum()
    }

    /// Names of all violated rows and fixings.
    pub fn violated(&self, values: &[f64], tol: f64) -> Vec<String> {
        let mut out: Vec<String> = self
            .constraints
            .iter()
            .filter(|c| !c.satisfied(values, tol))
            .map(|c| c.name.clone())
            .collect();
        for (i, var) in self.variables.iter().enumerate() {
            if let Some(v) = var.fixed {
                if (values[i] - v).abs() > tol {
                    out.push(format!("fix_{}", var.name));
                }
            }
        }
        out
    }

    /// CPLEX LP text, readable by most MILP solvers.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        let term = |s: &mut String, c: f64, name: &str, first: bool| {
            if c < 0.0 {
                let _ = write!(s, " - {} {}", -c, name);
            } else if first {
                let _ = write!(s, " {c} {name}");
            } else {
                let _ = write!(s, " + {c} {name}");
            }
        };
        s.push_str("Minimize\n obj:");
        let mut first = true;
        for (i, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                term(&mut s, c, &self.variables[i].name, first);
                first = false;
            }
        }
        if first {
            s.push_str(" 0");
        }
        s.push_str("\nSubject To\n");
        for con in &self.constraints {
            let _ = write!(s, " {}:", con.name);
            for (j, &(v, c)) in con.terms.iter().enumerate() {
                term(&mut s, c, &self.variables[v].name, j == 0);
            }
            let op = match con.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {op} {}", con.rhs);
        }
        s.push_str("Bounds\n");
        for var in &self.variables {
            if let Some(v) = var.fixed {
                let _ = writeln!(s, " {} = {v}", var.name);
            }
        }
        s.push_str("Binary\n");
        for var in &self.variables {
            let _ = writeln!(s, " {}", var.name);
        }
        s.push_str("End\n");
        s
    }
}

/// Writes the coordination model for `scenario` as a binary program.
///
/// Energy terms carry the slot duration so that kW x h is compared with kWh.
/// Minimum-run rows cover offsets `1..tau_min` (runs of at least `tau_min`
/// slots) and the end-of-day rows forbid turning on in the last `tau_min` slots.
pub fn build_ilp(scenario: &Scenario) -> IlpModel {
    let n_evs = scenario.sessions.len();
    let slots = scenario.grid.num_slots;
    let tau = scenario.params.tau_min;
    let alpha = scenario.params.alpha;
    let beta = scenario.params.beta;
    let power = scenario.charger.power_kw;
    let dt = scenario.grid.slot_hours;
    let prices = scenario
        .prices()
        .expect("scenario tariff covers its month");

    let mut model = IlpModel {
        num_evs: n_evs,
        num_slots: slots,
        variables: Vec::with_capacity(2 * n_evs * slots),
        objective: vec![0.0; 2 * n_evs * slots],
        constraints: Vec::new(),
    };
    for n in 0..n_evs {
        let away = scenario.sessions[n].availability_mask(slots);
        for t in 0..slots {
            model.variables.push(Variable {
                name: format!("k_{n}_{t}"),
                kind: VarKind::Kappa { ev: n, slot: t },
                fixed: (!away[t]).then_some(0.0),
            });
        }
    }
    for n in 0..n_evs {
        for t in 0..slots {
            model.variables.push(Variable {
                name: format!("w_{n}_{t}"),
                kind: VarKind::Omega { ev: n, slot: t },
                fixed: None,
            });
        }
    }
    for n in 0..n_evs {
        for t in 0..slots {
            let k = model.kappa(n, t);
            model.objective[k] = power * dt * prices[t];
        }
    }

    let push = |model: &mut IlpModel,
                    name: String,
                    family,
                    terms: Vec<(usize, f64)>,
                    sense,
                    rhs| {
        model.constraints.push(LinearConstraint {
            name,
            family,
            terms,
            sense,
            rhs,
        })
    };

    for t in 0..slots {
        let terms = (0..n_evs).map(|n| (model.kappa(n, t), power)).collect();
        let rhs = scenario.capacity_kw - scenario.profile.kw[t];
        push(&mut model, format!("cap_{t}"), ConstraintFamily::Capacity, terms, Sense::Le, rhs);
    }

    for n in 0..n_evs {
        let k = |t| n * slots + t;
        let w = |t| (n_evs + n) * slots + t;
        for t in 1..slots {
            // k[t-1] - alpha (1 - w[t]) + beta <= k[t]
            push(
                &mut model,
                format!("swlo_{n}_{t}"),
                ConstraintFamily::SwitchDetectLower,
                vec![(k(t - 1), 1.0), (k(t), -1.0), (w(t), alpha)],
                Sense::Le,
                alpha - beta,
            );
            // k[t-1] + alpha w[t] >= k[t]
            push(
                &mut model,
                format!("swhi_{n}_{t}"),
                ConstraintFamily::SwitchDetectUpper,
                vec![(k(t - 1), 1.0), (w(t), alpha), (k(t), -1.0)],
                Sense::Ge,
                0.0,
            );
        }
        push(
            &mut model,
            format!("sw0_{n}"),
            ConstraintFamily::InitialSwitch,
            vec![(w(0), 1.0), (k(0), -1.0)],
            Sense::Eq,
            0.0,
        );
        for t in 1..tau {
            push(
                &mut model,
                format!("run0_{n}_{t}"),
                ConstraintFamily::InitialRun,
                vec![(k(0), 1.0), (k(t), -1.0)],
                Sense::Le,
                0.0,
            );
        }
        for t in 1..=slots - tau {
            for i in 1..tau {
                push(
                    &mut model,
                    format!("run_{n}_{t}_{i}"),
                    ConstraintFamily::MinRun,
                    vec![(k(t), 1.0), (k(t - 1), -1.0), (k(t + i), -1.0)],
                    Sense::Le,
                    0.0,
                );
            }
        }
        for t in (slots - tau - 1)..=(slots - 2) {
            push(
                &mut model,
                format!("eod_{n}_{t}"),
                ConstraintFamily::EndOfDay,
                vec![(k(t + 1), 1.0), (k(t), -1.0)],
                Sense::Le,
                0.0,
            );
        }
        push(
            &mut model,
            format!("budget_{n}"),
            ConstraintFamily::SwitchBudget,
            (0..slots).map(|t| (w(t), 1.0)).collect(),
            Sense::Le,
            scenario.params.max_switches as f64,
        );
        push(
            &mut model,
            format!("demand_{n}"),
            ConstraintFamily::Demand,
            (0..slots).map(|t| (k(t), power * dt)).collect(),
            Sense::Ge,
            scenario.sessions[n].energy_demand_kwh,
        );
    }
    model
}
