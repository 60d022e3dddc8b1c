//! Fallback for instances the combinatorial search does not close quickly:
//! the same integer model handed to the HiGHS branch-and-cut solver.
//!
//! Variables are kappa (charging) and a start indicator per (ev, slot).
//! A start at `t` is implied by `kappa[t] - kappa[t-1]`, opens a run of at
//! least `tau` slots, and is only possible up to `latest_start`. Capacities
//! and demands are counted in slots, and costs are the normalized integer
//! slot costs, so the model does not depend on the absolute price level.

use std::time::Duration;

use highs::{HighsModelStatus, RowProblem, Sense};

pub(crate) struct MilpInput<'a> {
    pub tau: usize,
    pub max_runs: usize,
    pub latest_start: usize,
    pub required: &'a [usize],
    pub allowed: &'a [Vec<bool>],
    pub slot_cap: &'a [usize],
    pub cost: &'a [i64],
    pub gap: f64,
    pub time_left: Duration,
    pub start: Option<&'a [Vec<bool>]>,
}

pub(crate) enum MilpOutcome {
    Optimal(Vec<Vec<bool>>),
    Infeasible,
    /// Stopped early; the best schedule found, if any.
    Stopped(Option<Vec<Vec<bool>>>),
}

const COST_SCALE: f64 = 1e-9;

pub(crate) fn solve_milp(input: &MilpInput<'_>) -> MilpOutcome {
    let n_evs = input.required.len();
    let slots = input.cost.len();
    let tau = input.tau;
    let mut pb = RowProblem::default();

    let mut kappa = Vec::with_capacity(n_evs);
    for n in 0..n_evs {
        let row: Vec<_> = (0..slots)
            .map(|t| {
                let ub = if input.allowed[n][t] { 1.0 } else { 0.0 };
                pb.add_integer_column(input.cost[t] as f64 * COST_SCALE, 0.0..=ub)
            })
            .collect();
        kappa.push(row);
    }
    let mut start = Vec::with_capacity(n_evs);
    for n in 0..n_evs {
        let row: Vec<_> = (0..slots)
            .map(|t| {
                let open = t <= input.latest_start && input.allowed[n][t];
                pb.add_integer_column(0.0, 0.0..=if open { 1.0 } else { 0.0 })
            })
            .collect();
        start.push(row);
    }

    for t in 0..slots {
        let terms: Vec<_> = (0..n_evs).map(|n| (kappa[n][t], 1.0)).collect();
        pb.add_row(..=input.slot_cap[t] as f64, terms);
    }
    for n in 0..n_evs {
        let (k, w) = (&kappa[n], &start[n]);
        pb.add_row(0.0.., [(w[0], 1.0), (k[0], -1.0)]);
        for t in 1..slots {
            pb.add_row(0.0.., [(w[t], 1.0), (k[t], -1.0), (k[t - 1], 1.0)]);
            // A start needs the previous slot idle.
            pb.add_row(..=1.0, [(w[t], 1.0), (k[t - 1], 1.0)]);
        }
        // Any start in the last `tau` slots keeps slot t on.
        for t in 0..slots {
            let mut terms: Vec<_> = (t.saturating_sub(tau - 1)..=t).map(|s| (w[s], 1.0)).collect();
            terms.push((k[t], -1.0));
            pb.add_row(..=0.0, terms);
        }
        pb.add_row(..=input.max_runs as f64, w.iter().map(|&c| (c, 1.0)));
        pb.add_row(input.required[n] as f64.., k.iter().map(|&c| (c, 1.0)));
    }

    let mut model = pb.optimise(Sense::Minimise);
    model.make_quiet();
    model.set_option("threads", 1);
    model.set_option("random_seed", 0);
    model.set_option("mip_rel_gap", input.gap);
    model.set_option("mip_abs_gap", 0.5 * COST_SCALE);
    model.set_option("time_limit", input.time_left.as_secs_f64().max(0.01));
    if let Some(rows) = input.start {
        let mut cols = vec![0.0; 2 * n_evs * slots];
        for n in 0..n_evs {
            for t in 0..slots {
                if rows[n][t] {
                    cols[n * slots + t] = 1.0;
                    if t == 0 || !rows[n][t - 1] {
                        cols[(n_evs + n) * slots + t] = 1.0;
                    }
                }
            }
        }
        let _ = model.try_set_solution(Some(&cols), None, None, None);
    }

    let solved = model.solve();
    let extract = || -> Vec<Vec<bool>> {
        let sol = solved.get_solution();
        let cols = sol.columns();
        (0..n_evs)
            .map(|n| (0..slots).map(|t| cols[n * slots + t] > 0.5).collect())
            .collect()
    };
    match solved.status() {
        HighsModelStatus::Optimal => MilpOutcome::Optimal(extract()),
        HighsModelStatus::Infeasible => MilpOutcome::Infeasible,
        HighsModelStatus::ReachedTimeLimit | HighsModelStatus::ReachedIterationLimit => {
            let gap = solved.mip_gap();
            MilpOutcome::Stopped(gap.is_finite().then(extract))
        }
        _ => MilpOutcome::Stopped(None),
    }
}
