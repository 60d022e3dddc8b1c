//! Exact branch-and-bound over (EV, slot) fixings.
//!
//! Each node relaxes the transformer coupling: every EV independently gets
//! its cheapest valid row (dynamic program over run structure). If those rows
//! fit under the slot capacities the node is solved. Otherwise the node is
//! bounded by the best of
//!
//! * the sum of independent row costs,
//! * a min-cost transportation relaxation that keeps the coupling but drops
//!   run structure, and
//! * a Lagrangian bound that prices slot capacity with the transportation
//!   duals and re-solves the rows,
//!
//! and split on an overloaded slot: one child forbids an EV there, the other
//! forces it on. Costs are integers (prices normalized to the dearest slot),
//! so all comparisons are exact and the returned schedule does not depend on
//! the absolute price level.

use std::time::Instant;

use super::flow::transportation_bound;
use super::milp::{solve_milp, MilpInput, MilpOutcome};
use super::rowdp::{RowDp, RowSpec};
use super::{ChargingSchedule, CoordinationResult, Goal, SolveStats, SolveStatus};
use crate::error::Result;
use crate::scenario::Scenario;

const PRICE_UNITS: f64 = 1e9;
const LOAD_TOL_KW: f64 = 1e-9;
const ENERGY_TOL: f64 = 1e-9;

struct Instance {
    n_evs: usize,
    slots: usize,
    tau: usize,
    max_runs: usize,
    latest_start: usize,
    required: Vec<usize>,
    available: Vec<Vec<bool>>,
    slot_cap: Vec<usize>,
    cost: Vec<i64>,
}

impl Instance {
    fn cost_of(&self, rows: &[Vec<bool>]) -> i64 {
        rows.iter()
            .flat_map(|r| (0..self.slots).filter(|&t| r[t]).map(|t| self.cost[t]))
            .sum()
    }

    /// Full feasibility check of a candidate schedule.
    fn accepts(&self, rows: &[Vec<bool>]) -> bool {
        if rows.len() != self.n_evs {
            return false;
        }
        for t in 0..self.slots {
            if rows.iter().filter(|r| r[t]).count() > self.slot_cap[t] {
                return false;
            }
        }
        rows.iter().enumerate().all(|(n, row)| {
            let mut runs = 0;
            let mut t = 0;
            while t < self.slots {
                if !row[t] {
                    t += 1;
                    continue;
                }
                if t > self.latest_start {
                    return false;
                }
                let begin = t;
                while t < self.slots && row[t] {
                    if !self.available[n][t] {
                        return false;
                    }
                    t += 1;
                }
                if t - begin < self.tau {
                    return false;
                }
                runs += 1;
            }
            runs <= self.max_runs && row.iter().filter(|&&k| k).count() >= self.required[n]
        })
    }
}

enum Prepared {
    Ready(Instance),
    Infeasible(String),
}

fn prepare(scenario: &Scenario) -> Result<Prepared> {
    let n_evs = scenario.sessions.len();
    let slots = scenario.grid.num_slots;
    let power = scenario.charger.power_kw;
    let slot_energy = scenario.slot_energy_kwh();

    let mut slot_cap = Vec::with_capacity(slots);
    for (t, load) in scenario.profile.kw.iter().enumerate() {
        let headroom = scenario.capacity_kw - load;
        if headroom < -LOAD_TOL_KW {
            return Ok(Prepared::Infeasible(format!(
                "base load {load:.3} kW exceeds the {:.3} kW rating at slot {t}",
                scenario.capacity_kw
            )));
        }
        let fit = ((headroom + LOAD_TOL_KW) / power).floor().max(0.0) as usize;
        slot_cap.push(fit.min(n_evs));
    }

    let required = scenario
        .sessions
        .iter()
        .map(|s| {
            if s.energy_demand_kwh <= 0.0 {
                0
            } else {
                (s.energy_demand_kwh / slot_energy - ENERGY_TOL).ceil().max(0.0) as usize
            }
        })
        .collect();

    let prices = scenario.prices()?;
    let dearest = prices.iter().cloned().fold(f64::MIN, f64::max);
    let cost = prices
        .iter()
        .map(|p| (p / dearest * PRICE_UNITS).round() as i64)
        .collect();

    let tau = scenario.params.tau_min;
    Ok(Prepared::Ready(Instance {
        n_evs,
        slots,
        tau,
        max_runs: scenario.params.max_switches,
        latest_start: slots - tau - 1,
        required,
        available: scenario
            .sessions
            .iter()
            .map(|s| s.availability_mask(slots))
            .collect(),
        slot_cap,
        cost,
    }))
}

/// Row evaluations the search may spend before handing the instance to
/// branch-and-cut. Counted in work, not time, so results are reproducible.
const SEARCH_BUDGET: u64 = 600;
const ROOT_ROUNDS: usize = 60;
const NODE_ROUNDS: usize = 40;
/// Relative gap that accepts the first integer solution.
const ANY_GAP: f64 = 1e9;
const STALL_ROUNDS: usize = 10;
const MAX_LAMBDA: i64 = 1 << 50;

#[derive(Clone)]
struct Node {
    allowed: Vec<Vec<bool>>,
    forced: Vec<Vec<bool>>,
    /// Slot prices inherited from the parent's best multipliers.
    lambda: Vec<i64>,
}

/// Outcome of bounding one node.
enum Bound {
    Prune,
    Split { rows: Vec<Vec<bool>>, slot: usize, lambda: Vec<i64> },
}

struct Search<'a> {
    inst: &'a Instance,
    dp: RowDp,
    gap: f64,
    goal: Goal,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
    /// Row evaluations so far; the search hands over once it passes `budget`.
    work: u64,
    budget: u64,
    out_of_budget: bool,
    incumbent: Option<(i64, Vec<Vec<bool>>)>,
}

impl<'a> Search<'a> {
    fn row(&mut self, n: usize, allowed: &[bool], forced: &[bool], cost: &[i64]) -> Option<(i64, Vec<bool>)> {
        let inst = self.inst;
        self.work += 1;
        self.dp.solve(&RowSpec {
            tau: inst.tau,
            max_runs: inst.max_runs,
            latest_start: inst.latest_start,
            required: inst.required[n],
            cost,
            allowed,
            forced,
        })
    }

    fn cutoff(&self) -> i64 {
        match (&self.incumbent, self.goal) {
            (Some(_), Goal::AnySchedule) => i64::MIN,
            (Some((c, _)), Goal::MinCost) => c - (self.gap * *c as f64).floor() as i64,
            (None, _) => i64::MAX,
        }
    }

    fn offer(&mut self, cost: i64, rows: Vec<Vec<bool>>) {
        if self.incumbent.as_ref().map_or(true, |(c, _)| cost < *c) {
            self.incumbent = Some((cost, rows));
        }
    }

    fn true_cost(&self, rows: &[Vec<bool>]) -> i64 {
        self.inst.cost_of(rows)
    }

    fn loads(&self, rows: &[Vec<bool>]) -> Vec<i64> {
        (0..self.inst.slots)
            .map(|t| rows.iter().filter(|r| r[t]).count() as i64)
            .collect()
    }

    /// Most overloaded slot (earliest on ties), if any.
    fn worst_overload(&self, rows: &[Vec<bool>]) -> Option<usize> {
        let mut best: Option<(usize, i64)> = None;
        for (t, load) in self.loads(rows).into_iter().enumerate() {
            let over = load - self.inst.slot_cap[t] as i64;
            if over > 0 && best.map_or(true, |(_, o)| over > o) {
                best = Some((t, over));
            }
        }
        best.map(|(t, _)| t)
    }

    /// Sequential packing: EVs in `order` each take their cheapest row in the
    /// capacity left over by the previous ones.
    fn greedy(&mut self, node: &Node, order: &[usize], prices: &[i64]) -> Option<Vec<Vec<bool>>> {
        let inst = self.inst;
        let mut left = inst.slot_cap.clone();
        for n in 0..inst.n_evs {
            for t in 0..inst.slots {
                if node.forced[n][t] {
                    left[t] = left[t].checked_sub(1)?;
                }
            }
        }
        let mut rows = vec![Vec::new(); inst.n_evs];
        for &n in order {
            let allowed: Vec<bool> = (0..inst.slots)
                .map(|t| node.forced[n][t] || (node.allowed[n][t] && left[t] > 0))
                .collect();
            let (_, row) = self.row(n, &allowed, &node.forced[n], prices)?;
            for t in 0..inst.slots {
                if row[t] && !node.forced[n][t] {
                    left[t] -= 1;
                }
            }
            rows[n] = row;
        }
        Some(rows)
    }

    fn heuristics(&mut self, node: &Node, prices: &[i64], all_orders: bool) {
        let inst = self.inst;
        let natural: Vec<usize> = (0..inst.n_evs).collect();
        let mut by_demand = natural.clone();
        by_demand.sort_by_key(|&n| (std::cmp::Reverse(inst.required[n]), n));
        let mut orders = vec![by_demand];
        if all_orders {
            let mut by_window = natural.clone();
            by_window.sort_by_key(|&n| (inst.available[n].iter().filter(|&&a| a).count(), n));
            let mut reversed = natural.clone();
            reversed.reverse();
            orders.extend([natural, by_window, reversed]);
        }
        for order in orders {
            if let Some(rows) = self.greedy(node, &order, prices) {
                let c = self.true_cost(&rows);
                self.offer(c, rows);
            }
        }
    }

    /// Lagrangian value at `lambda` and the rows attaining it.
    fn dual(&mut self, node: &Node, lambda: &[i64]) -> Option<(i64, Vec<Vec<bool>>)> {
        let inst = self.inst;
        let priced: Vec<i64> = (0..inst.slots).map(|t| inst.cost[t] + lambda[t]).collect();
        let mut total: i64 = -(0..inst.slots)
            .map(|t| lambda[t] * inst.slot_cap[t] as i64)
            .sum::<i64>();
        let mut rows = Vec::with_capacity(inst.n_evs);
        for n in 0..inst.n_evs {
            let (c, r) = self.row(n, &node.allowed[n], &node.forced[n], &priced)?;
            total += c;
            rows.push(r);
        }
        Some((total, rows))
    }

    /// Bounds a node by the transportation relaxation and by subgradient
    /// ascent on the slot-capacity Lagrangian; offers any capacity-feasible
    /// rows met on the way.
    fn bound(&mut self, node: &Node, rounds: usize, root: bool) -> Bound {
        let inst = self.inst;
        let mut cap = inst.slot_cap.clone();
        let mut fixed_cost = 0i64;
        let mut demand = inst.required.clone();
        for n in 0..inst.n_evs {
            for t in 0..inst.slots {
                if node.forced[n][t] {
                    if cap[t] == 0 {
                        return Bound::Prune;
                    }
                    cap[t] -= 1;
                    fixed_cost += inst.cost[t];
                    demand[n] = demand[n].saturating_sub(1);
                }
            }
        }
        let usable: Vec<Vec<bool>> = (0..inst.n_evs)
            .map(|n| (0..inst.slots).map(|t| node.allowed[n][t] && !node.forced[n][t]).collect())
            .collect();
        let Some(flow) = transportation_bound(&demand, &usable, &cap, &inst.cost) else {
            return Bound::Prune;
        };
        let flow_bound = flow.cost + fixed_cost;
        if flow_bound >= self.cutoff() {
            return Bound::Prune;
        }

        // Start from whichever of the inherited and flow multipliers is better.
        let mut best: Option<(i64, Vec<Vec<bool>>, Vec<i64>)> = None;
        for lambda in [node.lambda.clone(), flow.congestion] {
            let Some((value, rows)) = self.dual(node, &lambda) else {
                return Bound::Prune;
            };
            if best.as_ref().map_or(true, |(b, _, _)| value > *b) {
                best = Some((value, rows, lambda));
            }
        }
        let (mut best_value, mut best_rows, mut best_lambda) = best.expect("two candidates");
        let mut lambda = best_lambda.clone();
        let mut rows = best_rows.clone();
        let mut value = best_value;
        let mut theta = 1.0f64;
        let mut stall = 0;

        for round in 0..rounds {
            if value.max(flow_bound) >= self.cutoff() {
                return Bound::Prune;
            }
            let load = self.loads(&rows);
            let over: Vec<i64> = (0..inst.slots).map(|t| load[t] - inst.slot_cap[t] as i64).collect();
            if over.iter().all(|&g| g <= 0) {
                let c = self.true_cost(&rows);
                self.offer(c, rows.clone());
                // Complementary slackness: rows are optimal for this node.
                let slack: i64 = (0..inst.slots).map(|t| lambda[t] * -over[t]).sum();
                if slack == 0 || c >= self.cutoff() {
                    return Bound::Prune;
                }
            }
            if root && round % 10 == 0 {
                let priced: Vec<i64> = (0..inst.slots).map(|t| inst.cost[t] + lambda[t]).collect();
                self.heuristics(node, &priced, true);
            }
            if Instant::now() >= self.deadline {
                break;
            }

            let g: Vec<i64> = (0..inst.slots)
                .map(|t| if lambda[t] == 0 { over[t].max(0) } else { over[t] })
                .collect();
            let norm: f64 = g.iter().map(|&x| (x * x) as f64).sum();
            if norm == 0.0 {
                break;
            }
            let target = match self.cutoff() {
                i64::MAX => best_value as f64 + 0.05 * (best_value.abs() as f64) + PRICE_UNITS,
                c => c as f64,
            };
            let step = theta * (target - value as f64).max(1.0) / norm;
            for t in 0..inst.slots {
                let moved = lambda[t] as f64 + step * g[t] as f64;
                lambda[t] = (moved.round() as i64).clamp(0, MAX_LAMBDA);
            }
            let Some((v, r)) = self.dual(node, &lambda) else {
                return Bound::Prune;
            };
            value = v;
            rows = r;
            if value > best_value {
                best_value = value;
                best_rows = rows.clone();
                best_lambda = lambda.clone();
                stall = 0;
            } else {
                stall += 1;
                if stall >= STALL_ROUNDS {
                    theta /= 2.0;
                    stall = 0;
                    if theta < 1e-3 {
                        break;
                    }
                }
            }
        }
        if best_value.max(flow_bound) >= self.cutoff() {
            return Bound::Prune;
        }
        let priced: Vec<i64> = (0..inst.slots).map(|t| inst.cost[t] + best_lambda[t]).collect();
        self.heuristics(node, &priced, false);
        if best_value.max(flow_bound) >= self.cutoff() {
            return Bound::Prune;
        }
        match self.worst_overload(&best_rows) {
            Some(slot) => Bound::Split {
                rows: best_rows,
                slot,
                lambda: best_lambda,
            },
            None => {
                // Capacity-feasible rows with slack left: split where the
                // price is highest among slots with a free decision.
                let free = |t: usize| (0..inst.n_evs).any(|n| best_rows[n][t] && !node.forced[n][t]);
                match (0..inst.slots).filter(|&t| free(t)).max_by_key(|&t| (best_lambda[t], std::cmp::Reverse(t))) {
                    Some(slot) => Bound::Split {
                        rows: best_rows,
                        slot,
                        lambda: best_lambda,
                    },
                    None => Bound::Prune,
                }
            }
        }
    }

    fn run(&mut self) {
        let inst = self.inst;
        let root = Node {
            allowed: inst
                .available
                .iter()
                .map(|a| (0..inst.slots).map(|t| a[t] && inst.slot_cap[t] > 0).collect())
                .collect(),
            forced: vec![vec![false; inst.slots]; inst.n_evs],
            lambda: vec![0; inst.slots],
        };
        let base_cost = inst.cost.clone();
        self.heuristics(&root, &base_cost, true);

        let mut stack = vec![root];
        let mut first = true;
        while let Some(node) = stack.pop() {
            if self.goal == Goal::AnySchedule && self.incumbent.is_some() {
                return;
            }
            if Instant::now() >= self.deadline {
                self.timed_out = true;
                return;
            }
            if self.work > self.budget {
                self.out_of_budget = true;
                stack.push(node);
                return;
            }
            self.nodes += 1;
            let rounds = if first { ROOT_ROUNDS } else { NODE_ROUNDS };
            let outcome = self.bound(&node, rounds, first);
            first = false;
            let Bound::Split { rows, slot, lambda } = outcome else {
                continue;
            };
            let Some(ev) = (0..inst.n_evs)
                .rev()
                .find(|&n| rows[n][slot] && !node.forced[n][slot])
            else {
                continue;
            };

            let mut force = node.clone();
            force.forced[ev][slot] = true;
            force.lambda = lambda.clone();
            let mut forbid = node;
            forbid.allowed[ev][slot] = false;
            forbid.lambda = lambda;
            stack.push(force);
            stack.push(forbid);
        }
    }
}

/// Solves the coordination problem for `scenario` exactly.
///
/// Among optimal schedules the search returns the first one it meets; the
/// search order is fixed, so equal inputs (and inputs whose prices differ by
/// a constant factor) give identical schedules.
pub fn solve(scenario: &Scenario) -> Result<CoordinationResult> {
    solve_for(scenario, Goal::MinCost)
}

/// [`solve`] with a choice of goal. Under [`Goal::AnySchedule`] the search
/// stops at the first schedule that satisfies every constraint; infeasibility
/// is still proved exhaustively.
pub fn solve_for(scenario: &Scenario, goal: Goal) -> Result<CoordinationResult> {
    scenario.validate()?;
    let started = Instant::now();
    let stats = |nodes| SolveStats {
        nodes_explored: nodes,
        wall_time_secs: started.elapsed().as_secs_f64(),
    };
    let inst = match prepare(scenario)? {
        Prepared::Infeasible(why) => {
            return Ok(CoordinationResult {
                status: SolveStatus::Infeasible,
                schedule: None,
                proof_note: why,
                solve_stats: stats(0),
            })
        }
        Prepared::Ready(inst) => inst,
    };

    let deadline = started + scenario.params.time_limit();
    let mut search = Search {
        inst: &inst,
        dp: RowDp::default(),
        gap: scenario.params.mip_gap,
        goal,
        deadline,
        nodes: 0,
        timed_out: false,
        work: 0,
        budget: SEARCH_BUDGET,
        out_of_budget: false,
        incumbent: None,
    };
    search.run();

    let nodes = search.nodes;
    let mut incumbent = search.incumbent.take();
    let (status, note) = if search.timed_out {
        (
            SolveStatus::Unresolved,
            format!("time limit reached after {nodes} search nodes"),
        )
    } else if !search.out_of_budget {
        match incumbent {
            Some(_) if goal == Goal::AnySchedule => (
                SolveStatus::Feasible,
                format!("schedule found after {nodes} search nodes; cost not minimized"),
            ),
            Some(_) => (
                SolveStatus::Feasible,
                format!("optimal within gap; search closed after {nodes} nodes"),
            ),
            None => (
                SolveStatus::Infeasible,
                format!("search space exhausted after {nodes} nodes"),
            ),
        }
    } else {
        let allowed: Vec<Vec<bool>> = (0..inst.n_evs)
            .map(|n| (0..inst.slots).map(|t| inst.available[n][t] && inst.slot_cap[t] > 0).collect())
            .collect();
        let outcome = solve_milp(&MilpInput {
            tau: inst.tau,
            max_runs: inst.max_runs,
            latest_start: inst.latest_start,
            required: &inst.required,
            allowed: &allowed,
            slot_cap: &inst.slot_cap,
            cost: &inst.cost,
            gap: match goal {
                Goal::MinCost => scenario.params.mip_gap,
                Goal::AnySchedule => ANY_GAP,
            },
            time_left: deadline.saturating_duration_since(Instant::now()),
            start: incumbent.as_ref().map(|(_, rows)| rows.as_slice()),
        });
        let adopt = |incumbent: &mut Option<(i64, Vec<Vec<bool>>)>, rows: Vec<Vec<bool>>| {
            if !inst.accepts(&rows) {
                return false;
            }
            let c = inst.cost_of(&rows);
            if incumbent.as_ref().map_or(true, |(best, _)| c < *best) {
                *incumbent = Some((c, rows));
            }
            true
        };
        match outcome {
            MilpOutcome::Optimal(rows) if adopt(&mut incumbent, rows.clone()) => (
                SolveStatus::Feasible,
                match goal {
                    Goal::MinCost => format!("optimal within gap; {nodes} search nodes, then closed by branch-and-cut"),
                    Goal::AnySchedule => format!("{nodes} search nodes, then a schedule from branch-and-cut; cost not minimized"),
                },
            ),
            MilpOutcome::Infeasible if incumbent.is_none() => (
                SolveStatus::Infeasible,
                format!("{nodes} search nodes, then infeasibility proved by branch-and-cut"),
            ),
            MilpOutcome::Stopped(found) => {
                if let Some(rows) = found {
                    adopt(&mut incumbent, rows);
                }
                (
                    SolveStatus::Unresolved,
                    "time limit reached in branch-and-cut".to_string(),
                )
            }
            _ => (
                SolveStatus::Unresolved,
                "branch-and-cut result disagrees with the search; not certified".to_string(),
            ),
        }
    };
    let schedule = match incumbent {
        Some((_, rows)) => Some(ChargingSchedule::from_kappa(scenario, rows)?),
        None => None,
    };
    Ok(CoordinationResult {
        status,
        schedule,
        proof_note: note,
        solve_stats: stats(nodes),
    })
}
