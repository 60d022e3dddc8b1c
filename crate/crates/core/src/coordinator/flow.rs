//! Transportation relaxation of the coupled problem: every EV needs a number
//! of distinct slots, every slot hosts a bounded number of EVs, and run
//! structure is ignored. Solved as a min-cost flow with successive shortest
//! paths; the final node potentials give slot congestion prices.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::rowdp::INF;

struct Arc {
    to: usize,
    cap: i64,
    cost: i64,
}

pub(crate) struct FlowBound {
    /// Minimum total slot cost of the relaxation.
    pub cost: i64,
    /// Non-negative shadow price of each slot's capacity.
    pub congestion: Vec<i64>,
}

/// `demand[n]` slots for EV `n` from the slots where `usable[n][t]`, at most
/// `slot_cap[t]` EVs per slot, each slot costing `cost[t]`. `None` when the
/// demands cannot all be met.
pub(crate) fn transportation_bound(
    demand: &[usize],
    usable: &[Vec<bool>],
    slot_cap: &[usize],
    cost: &[i64],
) -> Option<FlowBound> {
    let n_evs = demand.len();
    let slots = cost.len();
    let source = 0;
    let ev_node = |n: usize| 1 + n;
    let slot_node = |t: usize| 1 + n_evs + t;
    let sink = 1 + n_evs + slots;
    let nodes = sink + 1;

    let mut arcs: Vec<Arc> = Vec::new();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); nodes];
    let add = |arcs: &mut Vec<Arc>, adj: &mut Vec<Vec<usize>>, u: usize, v: usize, cap: i64, c: i64| {
        adj[u].push(arcs.len());
        arcs.push(Arc { to: v, cap, cost: c });
        adj[v].push(arcs.len());
        arcs.push(Arc { to: u, cap: 0, cost: -c });
    };

    let required: i64 = demand.iter().map(|&d| d as i64).sum();
    for n in 0..n_evs {
        if demand[n] > 0 {
            add(&mut arcs, &mut adj, source, ev_node(n), demand[n] as i64, 0);
        }
        for t in 0..slots {
            if usable[n][t] && slot_cap[t] > 0 {
                add(&mut arcs, &mut adj, ev_node(n), slot_node(t), 1, cost[t]);
            }
        }
    }
    for t in 0..slots {
        if slot_cap[t] > 0 {
            add(&mut arcs, &mut adj, slot_node(t), sink, slot_cap[t] as i64, 0);
        }
    }

    // All original costs are non-negative, so zero potentials start valid.
    let mut potential = vec![0i64; nodes];
    let mut dist = vec![INF; nodes];
    let mut prev_arc = vec![usize::MAX; nodes];
    let mut flow = 0i64;
    let mut total = 0i64;
    while flow < required {
        dist.iter_mut().for_each(|d| *d = INF);
        prev_arc.iter_mut().for_each(|p| *p = usize::MAX);
        dist[source] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0i64, source)));
        let mut settled = vec![false; nodes];
        while let Some(Reverse((d, u))) = heap.pop() {
            if settled[u] {
                continue;
            }
            settled[u] = true;
            if u == sink {
                break;
            }
            for &a in &adj[u] {
                let arc = &arcs[a];
                if arc.cap <= 0 {
                    continue;
                }
                let reduced = arc.cost + potential[u] - potential[arc.to];
                let nd = d + reduced;
                if nd < dist[arc.to] {
                    dist[arc.to] = nd;
                    prev_arc[arc.to] = a;
                    heap.push(Reverse((nd, arc.to)));
                }
            }
        }
        if !settled[sink] {
            return None;
        }
        let dsink = dist[sink];
        for v in 0..nodes {
            potential[v] += if settled[v] { dist[v].min(dsink) } else { dsink };
        }
        let mut push = required - flow;
        let mut v = sink;
        while v != source {
            let a = prev_arc[v];
            push = push.min(arcs[a].cap);
            v = arcs[a ^ 1].to;
        }
        let mut v = sink;
        while v != source {
            let a = prev_arc[v];
            arcs[a].cap -= push;
            arcs[a ^ 1].cap += push;
            total += push * arcs[a].cost;
            v = arcs[a ^ 1].to;
        }
        flow += push;
    }

    let congestion = (0..slots)
        .map(|t| (potential[sink] - potential[slot_node(t)]).max(0))
        .collect();
    Some(FlowBound {
        cost: total,
        congestion,
    })
}
