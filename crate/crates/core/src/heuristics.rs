//! Classical routing policies, each emitted as an action sequence and
//! replayed through the tour environment, so every heuristic tour is
//! automatically validity- and length-audited by the same machinery that
//! scores the exact solver and the learned policy.
//!
//! A first aisle that holds nothing but the depot is not a pick-aisle; the
//! policies cross it along the front cross-aisle, which in action terms is a
//! zero-cost `Bottom` followed by a doubled bottom pass (`02`).

use serde::{Deserialize, Serialize};

use crate::tourgraph::{
    largest_interior_gap, replay, ActionPair, HorizontalAction, Rollout, VerticalAction,
};
use crate::warehouse::AisleSequence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeuristicKind {
    SShape,
    Return,
    LargestGap,
    Composite,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 4] = [
        HeuristicKind::SShape,
        HeuristicKind::Return,
        HeuristicKind::LargestGap,
        HeuristicKind::Composite,
    ];
}

impl std::fmt::Display for HeuristicKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            HeuristicKind::SShape => "sshape",
            HeuristicKind::Return => "return",
            HeuristicKind::LargestGap => "largestgap",
            HeuristicKind::Composite => "composite",
        };
        f.write_str(label)
    }
}

pub fn solve_heuristic(kind: HeuristicKind, seq: &AisleSequence) -> Rollout {
    match kind {
        HeuristicKind::SShape => s_shape(seq),
        HeuristicKind::Return => return_policy(seq),
        HeuristicKind::LargestGap => largest_gap(seq),
        HeuristicKind::Composite => composite(seq),
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Side {
    Front,
    Back,
}

/// Encodes a tour in which the picker sweeps left to right once, serving
/// each aisle with the given vertical action, and finally returns to the
/// depot along the front cross-aisle.
///
/// `OnePass` flips the picker's side; `Top`/`Bottom` keep it. Between two
/// aisles the picker walks the cross-aisle it is currently on, and the
/// eventual return leg adds one bottom pass over every hop: from the back
/// that combines to a single pass of each cross-aisle (`11`), from the front
/// to a doubled bottom pass (`02`).
fn encode_sweep(choices: &[VerticalAction], seq: &AisleSequence) -> Rollout {
    let n = choices.len();
    let mut side = Side::Front;
    let mut actions = Vec::with_capacity(n);
    for (position, &vertical) in choices.iter().enumerate() {
        side = match vertical {
            VerticalAction::OnePass => match side {
                Side::Front => Side::Back,
                Side::Back => Side::Front,
            },
            VerticalAction::Top => {
                debug_assert!(side == Side::Back, "top serves an aisle from the back");
                Side::Back
            }
            VerticalAction::Bottom => {
                debug_assert!(side == Side::Front, "bottom serves an aisle from the front");
                Side::Front
            }
            VerticalAction::Gap => unreachable!("sweep tours never use gap"),
        };
        let horizontal = if position == n - 1 {
            HorizontalAction::H11
        } else {
            match side {
                Side::Back => HorizontalAction::H11,
                Side::Front => HorizontalAction::H02,
            }
        };
        actions.push(ActionPair::new(vertical, horizontal));
    }
    replay(&actions, seq).expect("sweep tours replay validly")
}

/// Positions that actually hold picks; everything except a depot-only first
/// aisle.
fn pick_positions(seq: &AisleSequence) -> Vec<usize> {
    (0..seq.len())
        .filter(|&p| !seq.entry(p).depot_only())
        .collect()
}

/// Traverse every pick-aisle end to end, snaking between the cross-aisles.
/// With an odd number of pick-aisles the last one is served from the front
/// instead, so the tour can close along the front cross-aisle.
pub fn s_shape(seq: &AisleSequence) -> Rollout {
    let picks = pick_positions(seq);
    let mut choices = vec![VerticalAction::Bottom; seq.len()];
    for (rank, &position) in picks.iter().enumerate() {
        let last = rank == picks.len() - 1;
        choices[position] = if last && picks.len() % 2 == 1 {
            VerticalAction::Bottom
        } else {
            VerticalAction::OnePass
        };
    }
    encode_sweep(&choices, seq)
}

/// Serve every aisle from the front cross-aisle.
pub fn return_policy(seq: &AisleSequence) -> Rollout {
    encode_sweep(&vec![VerticalAction::Bottom; seq.len()], seq)
}

/// Traverse the first and last pick-aisles fully; serve each aisle in
/// between from whichever end leaves the largest stretch of the aisle
/// unwalked: the span below the lowest pick (serve from the back), above the
/// highest pick (serve from the front), or the widest interior gap (serve
/// from both ends). Ties prefer front service, then back, then the split.
///
/// The outbound leg runs along the back cross-aisle and the return along the
/// front, so every hop between pick-aisles is a single pass of each (`11`).
pub fn largest_gap(seq: &AisleSequence) -> Rollout {
    let picks = pick_positions(seq);
    let h = seq.aisle_len();
    let mut actions = Vec::with_capacity(seq.len());
    if picks.first() != Some(&0) {
        // depot-only first aisle: cross along the front
        actions.push(ActionPair::new(
            VerticalAction::Bottom,
            HorizontalAction::H02,
        ));
    }
    for (rank, &position) in picks.iter().enumerate() {
        let entry = seq.entry(position);
        let first = rank == 0;
        let last = rank == picks.len() - 1;
        let vertical = if picks.len() == 1 {
            VerticalAction::Bottom
        } else if first || last {
            VerticalAction::OnePass
        } else {
            let front_gap = entry.min_y();
            let back_gap = h - entry.max_y();
            let interior = largest_interior_gap(&entry.ys);
            if back_gap >= front_gap && back_gap >= interior {
                VerticalAction::Bottom
            } else if front_gap >= interior {
                VerticalAction::Top
            } else {
                VerticalAction::Gap
            }
        };
        actions.push(ActionPair::new(vertical, HorizontalAction::H11));
    }
    replay(&actions, seq).expect("largest-gap tours replay validly")
}

/// One-aisle-lookahead greedy between traversing and returning: at each
/// aisle compare the vertical cost plus the walk from the resulting side to
/// the deepest pick of the next aisle, and keep the cheaper option. The
/// final aisle must leave the picker on the front side.
pub fn composite(seq: &AisleSequence) -> Rollout {
    let h = seq.aisle_len();
    let n = seq.len();
    let mut side = Side::Front;
    let mut choices = Vec::with_capacity(n);
    for position in 0..n {
        let entry = seq.entry(position);
        let vertical = if position == n - 1 {
            match side {
                Side::Front => VerticalAction::Bottom,
                Side::Back => VerticalAction::OnePass,
            }
        } else {
            let next_deepest = seq.entry(position + 1).max_y();
            let reach = |s: Side| match s {
                Side::Front => next_deepest,
                Side::Back => h - next_deepest,
            };
            let (stay_action, stay_cost) = match side {
                Side::Front => (VerticalAction::Bottom, 2 * entry.max_y()),
                Side::Back => (VerticalAction::Top, 2 * (h - entry.min_y())),
            };
            let flipped = match side {
                Side::Front => Side::Back,
                Side::Back => Side::Front,
            };
            if h + reach(flipped) < stay_cost + reach(side) {
                VerticalAction::OnePass
            } else {
                stay_action
            }
        };
        if vertical == VerticalAction::OnePass {
            side = match side {
                Side::Front => Side::Back,
                Side::Back => Side::Front,
            };
        }
        choices.push(vertical);
    }
    encode_sweep(&choices, seq)
}
