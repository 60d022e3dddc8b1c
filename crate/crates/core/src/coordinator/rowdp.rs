//! Cheapest single-EV row under the run structure.
//!
//! A row is valid when every maximal run of ones has length at least `tau`,
//! no run starts after `latest_start`, there are at most `max_runs` runs, all
//! ones are on allowed slots, all forced slots are ones, and the row has at
//! least `required` ones. Among minimum-cost rows the lexicographically
//! smallest one is returned.

pub(crate) const INF: i64 = i64::MAX / 4;

pub(crate) struct RowSpec<'a> {
    pub tau: usize,
    pub max_runs: usize,
    pub latest_start: usize,
    pub required: usize,
    pub cost: &'a [i64],
    pub allowed: &'a [bool],
    pub forced: &'a [bool],
}

/// Reusable backward table. Indexed by (slot, phase, runs used, ones capped
/// at `required`); phase 0 is "off", phase p in 1..=tau is "on for p slots"
/// with `tau` meaning "long enough to stop".
#[derive(Default)]
pub(crate) struct RowDp {
    table: Vec<i64>,
}

impl RowDp {
    pub fn solve(&mut self, spec: &RowSpec<'_>) -> Option<(i64, Vec<bool>)> {
        let slots = spec.cost.len();
        let tau = spec.tau;
        let phases = tau + 1;
        let runs = spec.max_runs + 1;
        let counts = spec.required + 1;
        let per_slot = phases * runs * counts;
        let idx = |t: usize, p: usize, r: usize, c: usize| ((t * phases + p) * runs + r) * counts + c;

        self.table.clear();
        self.table.resize((slots + 1) * per_slot, INF);
        let table = &mut self.table;
        for p in [0, tau] {
            for r in 0..runs {
                table[idx(slots, p, r, spec.required)] = 0;
            }
        }

        for t in (0..slots).rev() {
            let can_off = !spec.forced[t];
            let can_on = spec.allowed[t];
            let can_start = can_on && t <= spec.latest_start;
            let price = spec.cost[t];
            for p in 0..phases {
                for r in 0..runs {
                    for c in 0..counts {
                        let mut best = INF;
                        if can_off && (p == 0 || p == tau) {
                            best = table[idx(t + 1, 0, r, c)];
                        }
                        let c1 = (c + 1).min(spec.required);
                        if p == 0 {
                            if can_start && r + 1 < runs {
                                let next = table[idx(t + 1, 1, r + 1, c1)];
                                if next < INF {
                                    best = best.min(next + price);
                                }
                            }
                        } else if can_on {
                            let next = table[idx(t + 1, (p + 1).min(tau), r, c1)];
                            if next < INF {
                                best = best.min(next + price);
                            }
                        }
                        table[idx(t, p, r, c)] = best;
                    }
                }
            }
        }

        let total = table[idx(0, 0, 0, 0)];
        if total >= INF {
            return None;
        }

        // Forward walk, preferring "off" whenever it keeps the optimum.
        let mut row = vec![false; slots];
        let (mut p, mut r, mut c) = (0usize, 0usize, 0usize);
        let mut remaining = total;
        for t in 0..slots {
            let off_ok = !spec.forced[t] && (p == 0 || p == tau);
            if off_ok && table[idx(t + 1, 0, r, c)] == remaining {
                p = 0;
                continue;
            }
            row[t] = true;
            remaining -= spec.cost[t];
            if p == 0 {
                r += 1;
                p = 1;
            } else {
                p = (p + 1).min(tau);
            }
            c = (c + 1).min(spec.required);
            debug_assert_eq!(table[idx(t + 1, p, r, c)], remaining);
        }
        Some((total, row))
    }
}
