//! Exhaustive reference solver for small instances.
//!
//! Two regimes: up to two EVs on a grid of at most 24 slots (every bit
//! pattern of the day is screened), or a single EV on a full grid with at
//! most two turn-ons (every placement of at most two runs is tried).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use super::{ChargingSchedule, CoordinationResult, SolveStats, SolveStatus};
use crate::error::{Error, Result};
use crate::scenario::Scenario;

const TOL: f64 = 1e-9;

/// Runs of ones in a `slots`-bit pattern: each at least `tau` long, none
/// starting in the last `tau` slots, at most `max_runs` of them.
fn structurally_valid(mask: u32, slots: usize, tau: usize, max_runs: usize) -> bool {
    let mut runs = 0;
    let mut t = 0;
    while t < slots {
        if mask >> t & 1 == 0 {
            t += 1;
            continue;
        }
        let start = t;
        while t < slots && mask >> t & 1 == 1 {
            t += 1;
        }
        if t - start < tau || start + tau >= slots {
            return false;
        }
        runs += 1;
        if runs > max_runs {
            return false;
        }
    }
    true
}

type PatternKey = (usize, usize, usize);

fn valid_patterns(slots: usize, tau: usize, max_runs: usize) -> Arc<Vec<u32>> {
    static CACHE: OnceLock<Mutex<HashMap<PatternKey, Arc<Vec<u32>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(found) = cache.lock().unwrap().get(&(slots, tau, max_runs)) {
        return found.clone();
    }
    let patterns: Vec<u32> = (0..1u32 << slots)
        .filter(|&m| structurally_valid(m, slots, tau, max_runs))
        .collect();
    let patterns = Arc::new(patterns);
    cache
        .lock()
        .unwrap()
        .insert((slots, tau, max_runs), patterns.clone());
    patterns
}

struct Candidate {
    mask: u128,
    cost: f64,
}

/// Exact optimum by enumeration. Errors when the instance is outside both
/// size regimes.
pub fn brute_force_oracle(scenario: &Scenario) -> Result<CoordinationResult> {
    scenario.validate()?;
    let started = Instant::now();
    let slots = scenario.profile.kw.len();
    let n_evs = scenario.sessions.len();
    let tau = scenario.params.tau_min;
    let max_runs = scenario.params.max_switches;
    let small_grid = n_evs <= 2 && slots <= 24;
    let single_ev = n_evs == 1 && slots <= 96 && max_runs <= 2;
    if !small_grid && !single_ev && n_evs > 0 {
        return Err(Error::OracleBound(format!(
            "{n_evs} EVs, {slots} slots, {max_runs} turn-ons"
        )));
    }

    let power = scenario.charger.power_kw;
    let hours = 24.0 / slots as f64;
    let prices = scenario.tariff.price_series(scenario.month, &scenario.grid)?;
    let slot_cost: Vec<f64> = prices.iter().map(|p| power * hours * p).collect();
    let cap = scenario.capacity_kw;
    let load = &scenario.profile.kw;

    let done = |status, schedule: Option<ChargingSchedule>, note: &str, evaluated: u64| {
        CoordinationResult {
            status,
            schedule,
            proof_note: note.to_string(),
            solve_stats: SolveStats {
                nodes_explored: evaluated,
                wall_time_secs: started.elapsed().as_secs_f64(),
            },
        }
    };
    let to_rows = |masks: &[u128]| -> Vec<Vec<bool>> {
        masks
            .iter()
            .map(|m| (0..slots).map(|t| m >> t & 1 == 1).collect())
            .collect()
    };

    if (0..slots).any(|t| load[t] > cap + TOL) {
        return Ok(done(SolveStatus::Infeasible, None, "base load over rating", 0));
    }
    if n_evs == 0 {
        let schedule = ChargingSchedule::from_kappa(scenario, Vec::new())?;
        return Ok(done(SolveStatus::Feasible, Some(schedule), "no EVs", 1));
    }

    // Slots where one / two chargers fit on top of the base load.
    let fits_one: Vec<bool> = (0..slots).map(|t| load[t] + power <= cap + TOL).collect();
    let fits_two: Vec<bool> = (0..slots).map(|t| load[t] + 2.0 * power <= cap + TOL).collect();

    let mut per_ev: Vec<Vec<Candidate>> = Vec::with_capacity(n_evs);
    let mut evaluated = 0u64;
    for session in &scenario.sessions {
        let mut usable = vec![true; slots];
        for &t in &session.unavailable_slots {
            usable[t] = false;
        }
        for t in 0..slots {
            usable[t] &= fits_one[t];
        }
        let demand = session.energy_demand_kwh;
        let mut list = Vec::new();
        if small_grid {
            let blocked: u32 = (0..slots).filter(|&t| !usable[t]).map(|t| 1u32 << t).sum();
            for &m in valid_patterns(slots, tau, max_runs).iter() {
                evaluated += 1;
                if m & blocked != 0 {
                    continue;
                }
                let on = m.count_ones() as f64;
                if power * hours * on < demand - TOL {
                    continue;
                }
                let cost = (0..slots).filter(|&t| m >> t & 1 == 1).map(|t| slot_cost[t]).sum();
                list.push(Candidate {
                    mask: m as u128,
                    cost,
                });
            }
        } else {
            let mut best = None;
            place_runs(
                &usable,
                &slot_cost,
                tau,
                max_runs,
                demand,
                power * hours,
                &mut best,
                &mut evaluated,
            );
            list.extend(best);
        }
        list.sort_by(|a, b| a.cost.total_cmp(&b.cost).then(a.mask.cmp(&b.mask)));
        if list.is_empty() {
            return Ok(done(
                SolveStatus::Infeasible,
                None,
                "some EV has no valid row",
                evaluated,
            ));
        }
        per_ev.push(list);
    }

    let best: Option<(f64, Vec<u128>)> = if n_evs == 1 {
        let c = &per_ev[0][0];
        Some((c.cost, vec![c.mask]))
    } else {
        let conflict: u128 = (0..slots).filter(|&t| !fits_two[t]).map(|t| 1u128 << t).sum();
        let (first, second) = (&per_ev[0], &per_ev[1]);
        let cheapest_second = second[0].cost;
        let mut best: Option<(f64, Vec<u128>)> = None;
        for a in first {
            if let Some((b, _)) = &best {
                if a.cost + cheapest_second >= *b {
                    break;
                }
            }
            for b in second {
                evaluated += 1;
                if let Some((incumbent, _)) = &best {
                    if a.cost + b.cost >= *incumbent {
                        break;
                    }
                }
                if a.mask & b.mask & conflict == 0 {
                    best = Some((a.cost + b.cost, vec![a.mask, b.mask]));
                    break;
                }
            }
        }
        best
    };

    match best {
        None => Ok(done(
            SolveStatus::Infeasible,
            None,
            "no compatible pair of rows",
            evaluated,
        )),
        Some((_, masks)) => {
            let schedule = ChargingSchedule::from_kappa(scenario, to_rows(&masks))?;
            Ok(done(
                SolveStatus::Feasible,
                Some(schedule),
                "exhaustive optimum",
                evaluated,
            ))
        }
    }
}

/// Cheapest placement of up to `max_runs` runs (each >= `tau`, starting no
/// later than `slots - tau - 1`, separated by at least one idle slot) on
/// usable slots that meets the energy demand.
#[allow(clippy::too_many_arguments)]
fn place_runs(
    usable: &[bool],
    slot_cost: &[f64],
    tau: usize,
    max_runs: usize,
    demand: f64,
    slot_energy: f64,
    out: &mut Option<Candidate>,
    evaluated: &mut u64,
) {
    let slots = usable.len();
    let mut prefix = vec![0.0; slots + 1];
    for t in 0..slots {
        prefix[t + 1] = prefix[t] + slot_cost[t];
    }
    // Longest usable stretch starting at each slot.
    let mut stretch = vec![0usize; slots + 1];
    for t in (0..slots).rev() {
        stretch[t] = if usable[t] { stretch[t + 1] + 1 } else { 0 };
    }

    struct Walk<'a> {
        slots: usize,
        tau: usize,
        max_runs: usize,
        demand: f64,
        slot_energy: f64,
        prefix: &'a [f64],
        stretch: &'a [usize],
    }

    fn recurse(
        w: &Walk<'_>,
        from: usize,
        runs: usize,
        on: usize,
        mask: u128,
        cost: f64,
        out: &mut Option<Candidate>,
        evaluated: &mut u64,
    ) {
        *evaluated += 1;
        if w.slot_energy * on as f64 >= w.demand - TOL
            && out.as_ref().map_or(true, |b| cost < b.cost)
        {
            *out = Some(Candidate { mask, cost });
        }
        if runs == w.max_runs {
            return;
        }
        for start in from..w.slots.saturating_sub(w.tau) {
            for len in w.tau..=w.stretch[start] {
                let end = start + len;
                let run_mask = if len == 128 { u128::MAX } else { ((1u128 << len) - 1) << start };
                recurse(
                    w,
                    end + 1,
                    runs + 1,
                    on + len,
                    mask | run_mask,
                    cost + w.prefix[end] - w.prefix[start],
                    out,
                    evaluated,
                );
            }
        }
    }

    let walk = Walk {
        slots,
        tau,
        max_runs,
        demand,
        slot_energy,
        prefix: &prefix,
        stretch: &stretch,
    };
    recurse(&walk, 0, 0, 0, 0, 0.0, out, evaluated);
}
