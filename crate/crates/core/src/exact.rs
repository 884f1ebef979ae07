//! Optimal tour lengths.
//!
//! [`solve_optimal`] runs a forward dynamic program over the six partial-tour
//! classes, one relaxation sweep per non-empty aisle, so its runtime is
//! linear in the number of aisles. [`brute_force_tsp`] is an independent
//! Held-Karp solver over the raw item-to-item metric, kept deliberately
//! separate from the tour-graph machinery so the two can cross-check each
//! other.

use crate::tourgraph::{
    horizontal_cost, replay, transition_horizontal, transition_vertical, valid_pairs_at,
    vertical_cost, ActionPair, PtsState, Rollout,
};
use crate::warehouse::{metric, Instance, Length};
use crate::{Error, Result};

const INFINITE: Length = Length::MAX / 4;

/// Best-known cost and backpointer for one (aisle position, state) cell.
#[derive(Clone, Copy, Debug)]
pub struct DpCell {
    pub cost: Length,
    pub back: Option<(PtsState, ActionPair)>,
}

impl DpCell {
    fn unreachable() -> Self {
        DpCell {
            cost: INFINITE,
            back: None,
        }
    }

    pub fn reachable(&self) -> bool {
        self.cost < INFINITE
    }
}

/// Forward DP table: `cells[p]` holds the best partial costs per state when
/// the tour is about to act on aisle position `p`; `terminal` holds the
/// costs of completed tours per final state.
#[derive(Clone, Debug)]
pub struct DpTable {
    pub cells: Vec<[DpCell; 6]>,
    pub terminal: [DpCell; 6],
}

impl DpTable {
    fn best_terminal(&self) -> (PtsState, Length) {
        let mut best = (PtsState::Empty, INFINITE);
        for state in PtsState::ALL {
            let cell = self.terminal[state.index()];
            if cell.reachable() && cell.cost < best.1 {
                best = (state, cell.cost);
            }
        }
        best
    }
}

/// Minimal tour length and a witnessing rollout.
///
/// Ties between equal-cost actions resolve to the lower action-pair index
/// (and lower source-state index), which keeps outputs deterministic.
pub fn solve_optimal(inst: &Instance) -> (Length, Rollout) {
    let seq = inst.aisle_sequence();
    let n = seq.len();
    let h = seq.aisle_len();
    let mut table = DpTable {
        cells: vec![[DpCell::unreachable(); 6]; n],
        terminal: [DpCell::unreachable(); 6],
    };
    table.cells[0][PtsState::Empty.index()].cost = 0;

    for position in 0..n {
        let entry = seq.entry(position);
        let last = position == n - 1;
        for state in PtsState::ALL {
            let here = table.cells[position][state.index()];
            if !here.reachable() {
                continue;
            }
            for pair in valid_pairs_at(&seq, position, state, false) {
                let after_vertical = transition_vertical(state, pair.vertical)
                    .expect("valid pair has a vertical transition");
                let mut cost = here.cost
                    + vertical_cost(pair.vertical, &entry.ys, h)
                        .expect("valid pair has a vertical cost");
                let (target, next_state) = if last {
                    (&mut table.terminal, after_vertical)
                } else {
                    let next = seq.entry(position + 1);
                    cost += horizontal_cost(pair.horizontal, entry.x, next.x)
                        .expect("positions are strictly increasing");
                    let s = transition_horizontal(after_vertical, pair.horizontal)
                        .expect("valid pair has a horizontal transition");
                    (&mut table.cells[position + 1], s)
                };
                let cell = &mut target[next_state.index()];
                if cost < cell.cost {
                    *cell = DpCell {
                        cost,
                        back: Some((state, pair)),
                    };
                }
            }
        }
    }

    let (mut state, best) = table.best_terminal();
    assert!(best < INFINITE, "DP found no completing tour");

    // Walk the backpointers from the terminal cell to the start.
    let mut actions = Vec::with_capacity(n);
    for position in (0..n).rev() {
        let (prev_state, pair) = if position == n - 1 {
            table.terminal[state.index()].back.unwrap()
        } else {
            table.cells[position + 1][state.index()].back.unwrap()
        };
        actions.push(pair);
        state = prev_state;
    }
    actions.reverse();

    let rollout = replay(&actions, &seq).expect("DP path replays cleanly");
    assert_eq!(rollout.total_length, best, "DP value must match its replay");
    (best, rollout)
}

/// Exact minimum over all item permutations via Held-Karp bitmask DP.
/// Guarded to small pick lists; this is a verification oracle, not a solver.
pub fn brute_force_tsp(inst: &Instance) -> Result<Length> {
    let m = inst.items.len();
    if m > 12 {
        return Err(Error::Contract(format!(
            "brute force is guarded to 12 items, got {m}"
        )));
    }
    let geom = &inst.geometry;
    let from_depot: Vec<Length> = inst
        .items
        .iter()
        .map(|item| metric(&inst.depot, item, geom))
        .collect();
    let dist: Vec<Vec<Length>> = inst
        .items
        .iter()
        .map(|a| inst.items.iter().map(|b| metric(a, b, geom)).collect())
        .collect();

    let full = (1usize << m) - 1;
    let mut dp = vec![vec![INFINITE; m]; 1 << m];
    for i in 0..m {
        dp[1 << i][i] = from_depot[i];
    }
    for mask in 1..=full {
        for last in 0..m {
            let cost = dp[mask][last];
            if cost >= INFINITE || mask & (1 << last) == 0 {
                continue;
            }
            for next in 0..m {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let candidate = cost + dist[last][next];
                let cell = &mut dp[mask | (1 << next)][next];
                if candidate < *cell {
                    *cell = candidate;
                }
            }
        }
    }
    let best = (0..m)
        .map(|last| dp[full][last] + from_depot[last])
        .min()
        .expect("at least one item");
    Ok(best)
}
