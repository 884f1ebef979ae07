//! The aisle-by-aisle tour construction environment.
//!
//! A partial tour over the first `i` non-empty aisles is summarized by the
//! parity of its rightmost cross-aisle nodes plus its connected-component
//! count — six classes in total. Vertical actions decide how a pick-aisle is
//! traversed, horizontal actions how the cross-aisles are walked to the next
//! non-empty aisle. Transitions between classes are fixed lookup tables;
//! invalid entries are combinations that can never complete into a closed
//! tour with even node parities.

use serde::{Deserialize, Serialize};

use crate::warehouse::{AisleSequence, Length};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// States and actions
// ---------------------------------------------------------------------------

/// Equivalence class of a partial tour subgraph. The first two letters of
/// the conventional label give the degree parity of the rightmost top and
/// bottom cross-aisle nodes (`0` untouched, `U` odd, `E` even), the trailing
/// count the number of connected components.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PtsState {
    /// `000C`: no edges yet; only before the first vertical action.
    Empty,
    /// `UU1C`: both cross nodes odd, one component.
    OddOdd,
    /// `E01C`: top even, bottom untouched, one component.
    EvenZero,
    /// `0E1C`: top untouched, bottom even, one component.
    ZeroEven,
    /// `EE1C`: both even, one component.
    EvenEven,
    /// `EE2C`: both even, two components.
    EvenEvenSplit,
}

impl PtsState {
    pub const ALL: [PtsState; 6] = [
        PtsState::Empty,
        PtsState::OddOdd,
        PtsState::EvenZero,
        PtsState::ZeroEven,
        PtsState::EvenEven,
        PtsState::EvenEvenSplit,
    ];

    pub fn index(self) -> usize {
        match self {
            PtsState::Empty => 0,
            PtsState::OddOdd => 1,
            PtsState::EvenZero => 2,
            PtsState::ZeroEven => 3,
            PtsState::EvenEven => 4,
            PtsState::EvenEvenSplit => 5,
        }
    }

    /// States in which a tour may end: connected, with every cross-aisle
    /// node of even or zero degree.
    pub fn terminal_valid(self) -> bool {
        matches!(
            self,
            PtsState::EvenZero | PtsState::ZeroEven | PtsState::EvenEven
        )
    }
}

impl std::fmt::Display for PtsState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            PtsState::Empty => "000C",
            PtsState::OddOdd => "UU1C",
            PtsState::EvenZero => "E01C",
            PtsState::ZeroEven => "0E1C",
            PtsState::EvenEven => "EE1C",
            PtsState::EvenEvenSplit => "EE2C",
        };
        f.write_str(label)
    }
}

/// How a pick-aisle is traversed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerticalAction {
    /// Walk the aisle end to end once.
    OnePass,
    /// Enter and leave from the back cross-aisle, down to the lowest pick.
    Top,
    /// Enter and leave from the front cross-aisle, up to the highest pick.
    Bottom,
    /// Serve the aisle from both ends, skipping the largest interior gap.
    Gap,
}

impl VerticalAction {
    pub const ALL: [VerticalAction; 4] = [
        VerticalAction::OnePass,
        VerticalAction::Top,
        VerticalAction::Bottom,
        VerticalAction::Gap,
    ];

    pub fn index(self) -> usize {
        match self {
            VerticalAction::OnePass => 0,
            VerticalAction::Top => 1,
            VerticalAction::Bottom => 2,
            VerticalAction::Gap => 3,
        }
    }
}

impl std::fmt::Display for VerticalAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            VerticalAction::OnePass => "1pass",
            VerticalAction::Top => "top",
            VerticalAction::Bottom => "bottom",
            VerticalAction::Gap => "gap",
        };
        f.write_str(label)
    }
}

/// How the two cross-aisles are walked between consecutive non-empty aisles.
/// The two digits give the number of top and bottom cross-aisle edges added.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HorizontalAction {
    /// One pass of each cross-aisle.
    H11,
    /// Two passes of the top cross-aisle.
    H20,
    /// Two passes of the bottom cross-aisle.
    H02,
    /// Two passes of each cross-aisle.
    H22,
}

impl HorizontalAction {
    pub const ALL: [HorizontalAction; 4] = [
        HorizontalAction::H11,
        HorizontalAction::H20,
        HorizontalAction::H02,
        HorizontalAction::H22,
    ];

    pub fn index(self) -> usize {
        match self {
            HorizontalAction::H11 => 0,
            HorizontalAction::H20 => 1,
            HorizontalAction::H02 => 2,
            HorizontalAction::H22 => 3,
        }
    }
}

impl std::fmt::Display for HorizontalAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let label = match self {
            HorizontalAction::H11 => "11",
            HorizontalAction::H20 => "20",
            HorizontalAction::H02 => "02",
            HorizontalAction::H22 => "22",
        };
        f.write_str(label)
    }
}

/// One decision per aisle: a vertical traversal plus the horizontal move to
/// the next non-empty aisle. In the final aisle the horizontal component is
/// a placeholder (`H11`) with zero cost and no transition, which keeps the
/// 16-way action alphabet uniform for the policy head.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionPair {
    pub vertical: VerticalAction,
    pub horizontal: HorizontalAction,
}

/// Number of distinct action pairs; the policy head's output width.
pub const ACTION_PAIR_COUNT: usize = 16;

impl ActionPair {
    pub fn new(vertical: VerticalAction, horizontal: HorizontalAction) -> Self {
        ActionPair {
            vertical,
            horizontal,
        }
    }

    /// Fixed head index: `4 * vertical + horizontal`.
    pub fn index(self) -> usize {
        4 * self.vertical.index() + self.horizontal.index()
    }

    pub fn from_index(index: usize) -> Self {
        assert!(
            index < ACTION_PAIR_COUNT,
            "action index {index} out of range"
        );
        ActionPair {
            vertical: VerticalAction::ALL[index / 4],
            horizontal: HorizontalAction::ALL[index % 4],
        }
    }

    pub fn all() -> impl Iterator<Item = ActionPair> {
        (0..ACTION_PAIR_COUNT).map(ActionPair::from_index)
    }
}

impl std::fmt::Display for ActionPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.vertical, self.horizontal)
    }
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

/// Vertical transition table. Every entry is defined; the `Empty` row is
/// reachable only before the first action.
pub fn transition_vertical(state: PtsState, action: VerticalAction) -> Option<PtsState> {
    use PtsState::*;
    use VerticalAction::*;
    Some(match (state, action) {
        (OddOdd, OnePass) => EvenEven,
        (OddOdd, Top) => OddOdd,
        (OddOdd, Bottom) => OddOdd,
        (OddOdd, Gap) => OddOdd,

        (EvenZero, OnePass) => OddOdd,
        (EvenZero, Top) => EvenZero,
        (EvenZero, Bottom) => EvenEvenSplit,
        (EvenZero, Gap) => EvenEvenSplit,

        (ZeroEven, OnePass) => OddOdd,
        (ZeroEven, Top) => EvenEvenSplit,
        (ZeroEven, Bottom) => ZeroEven,
        (ZeroEven, Gap) => EvenEvenSplit,

        (EvenEven, OnePass) => OddOdd,
        (EvenEven, Top) => EvenEven,
        (EvenEven, Bottom) => EvenEven,
        (EvenEven, Gap) => EvenEven,

        (EvenEvenSplit, OnePass) => OddOdd,
        (EvenEvenSplit, Top) => EvenEvenSplit,
        (EvenEvenSplit, Bottom) => EvenEvenSplit,
        (EvenEvenSplit, Gap) => EvenEvenSplit,

        (Empty, OnePass) => OddOdd,
        (Empty, Top) => EvenZero,
        (Empty, Bottom) => ZeroEven,
        (Empty, Gap) => EvenEvenSplit,
    })
}

/// Horizontal transition table. `None` entries can never complete into a
/// valid tour: either they leave the current aisle's cross nodes odd, or
/// they strand a component that no future edge can reconnect.
pub fn transition_horizontal(state: PtsState, action: HorizontalAction) -> Option<PtsState> {
    use HorizontalAction::*;
    use PtsState::*;
    match (state, action) {
        (OddOdd, H11) => Some(OddOdd),
        (OddOdd, _) => None,

        (EvenZero, H20) => Some(EvenZero),
        (EvenZero, H22) => Some(EvenEvenSplit),
        (EvenZero, _) => None,

        (ZeroEven, H02) => Some(ZeroEven),
        (ZeroEven, H22) => Some(EvenEvenSplit),
        (ZeroEven, _) => None,

        (EvenEven, H20) => Some(EvenZero),
        (EvenEven, H02) => Some(ZeroEven),
        (EvenEven, H22) => Some(EvenEven),
        (EvenEven, H11) => None,

        (EvenEvenSplit, H22) => Some(EvenEvenSplit),
        (EvenEvenSplit, _) => None,

        (Empty, _) => None,
    }
}

// ---------------------------------------------------------------------------
// Costs
// ---------------------------------------------------------------------------

/// Largest gap between consecutive sorted pick coordinates. Boundary spans
/// (below the lowest or above the highest pick) are not considered here;
/// those cases are what the `Top` and `Bottom` actions express.
pub fn largest_interior_gap(ys: &[Length]) -> Length {
    ys.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(0)
}

/// Edge length added by a vertical action in an aisle with sorted pick
/// coordinates `ys` and aisle length `h`.
pub fn vertical_cost(action: VerticalAction, ys: &[Length], h: Length) -> Result<Length> {
    if ys.is_empty() {
        return Err(Error::Contract("vertical cost of an empty aisle".into()));
    }
    Ok(match action {
        VerticalAction::OnePass => h,
        VerticalAction::Top => 2 * (h - ys[0]),
        VerticalAction::Bottom => 2 * ys[ys.len() - 1],
        VerticalAction::Gap => {
            if ys.len() < 2 {
                return Err(Error::InvalidAction {
                    step: 0,
                    reason: "gap needs at least two picks in the aisle".into(),
                });
            }
            2 * (h - largest_interior_gap(ys))
        }
    })
}

/// Edge length added by a horizontal action between aisles at `x` and
/// `x_next`.
pub fn horizontal_cost(action: HorizontalAction, x: Length, x_next: Length) -> Result<Length> {
    if x_next <= x {
        return Err(Error::Contract(format!(
            "horizontal move requires increasing x ({x} -> {x_next})"
        )));
    }
    let dx = x_next - x;
    Ok(match action {
        HorizontalAction::H22 => 4 * dx,
        _ => 2 * dx,
    })
}

// ---------------------------------------------------------------------------
// Action validity
// ---------------------------------------------------------------------------

/// Valid action pairs at a given aisle position and state.
///
/// A pair is valid when its vertical transition exists (`Gap` additionally
/// needs more than one pick in the aisle), its horizontal transition exists
/// for non-final aisles, the transition into the last aisle does not produce
/// a split graph, and in the final aisle the vertical result is a state a
/// tour may end in (with `H11` as the placeholder horizontal component).
/// The `simplified` flag removes every `Gap` pair, which guarantees tours
/// that enter each aisle at most once.
pub fn valid_pairs_at(
    seq: &AisleSequence,
    position: usize,
    state: PtsState,
    simplified: bool,
) -> Vec<ActionPair> {
    let n = seq.len();
    assert!(
        position < n,
        "position {position} out of range for {n} aisles"
    );
    let entry = seq.entry(position);
    let last = position == n - 1;
    let mut pairs = Vec::new();
    for vertical in VerticalAction::ALL {
        if vertical == VerticalAction::Gap && (simplified || entry.ys.len() <= 1) {
            continue;
        }
        let after_vertical = match transition_vertical(state, vertical) {
            Some(s) => s,
            None => continue,
        };
        if last {
            if after_vertical.terminal_valid() {
                pairs.push(ActionPair::new(vertical, HorizontalAction::H11));
            }
            continue;
        }
        for horizontal in HorizontalAction::ALL {
            let after = match transition_horizontal(after_vertical, horizontal) {
                Some(s) => s,
                None => continue,
            };
            // A split graph entering the final aisle can never reconnect.
            if position + 2 == n && after == PtsState::EvenEvenSplit {
                continue;
            }
            pairs.push(ActionPair::new(vertical, horizontal));
        }
    }
    assert!(
        !pairs.is_empty(),
        "no valid action pair at position {position} in state {state}"
    );
    pairs
}

// ---------------------------------------------------------------------------
// Environment
// ---------------------------------------------------------------------------

/// Mutable tour construction state over an aisle sequence. Stepping applies
/// one [`ActionPair`], advances to the next non-empty aisle and accumulates
/// cost; cloning gives an independent branch.
#[derive(Clone, Debug)]
pub struct EnvState<'a> {
    seq: &'a AisleSequence,
    position: usize,
    state: PtsState,
    total_cost: Length,
    history: Vec<ActionPair>,
}

impl<'a> EnvState<'a> {
    pub fn new(seq: &'a AisleSequence) -> Self {
        assert!(!seq.is_empty(), "aisle sequence must not be empty");
        EnvState {
            seq,
            position: 0,
            state: PtsState::Empty,
            total_cost: 0,
            history: Vec::with_capacity(seq.len()),
        }
    }

    pub fn sequence(&self) -> &AisleSequence {
        self.seq
    }

    /// 0-based index of the aisle the next action applies to; equals the
    /// sequence length once the tour is finished.
    pub fn position(&self) -> usize {
        self.position
    }

    pub fn state(&self) -> PtsState {
        self.state
    }

    pub fn total_cost(&self) -> Length {
        self.total_cost
    }

    pub fn history(&self) -> &[ActionPair] {
        &self.history
    }

    pub fn is_finished(&self) -> bool {
        self.position == self.seq.len()
    }

    pub fn valid_pairs(&self, simplified: bool) -> Vec<ActionPair> {
        valid_pairs_at(self.seq, self.position, self.state, simplified)
    }

    /// Validity of all 16 action pairs as a mask indexed by
    /// [`ActionPair::index`].
    pub fn valid_mask(&self, simplified: bool) -> [bool; ACTION_PAIR_COUNT] {
        let mut mask = [false; ACTION_PAIR_COUNT];
        for pair in self.valid_pairs(simplified) {
            mask[pair.index()] = true;
        }
        mask
    }

    /// Applies an action pair, returning the cost of this step.
    pub fn step(&mut self, pair: ActionPair) -> Result<Length> {
        if self.is_finished() {
            return Err(Error::InvalidAction {
                step: self.position,
                reason: "tour already finished".into(),
            });
        }
        if !self.valid_pairs(false).contains(&pair) {
            return Err(Error::InvalidAction {
                step: self.position,
                reason: format!("{pair} not valid in state {}", self.state),
            });
        }
        let entry = self.seq.entry(self.position);
        let h = self.seq.aisle_len();
        let after_vertical = transition_vertical(self.state, pair.vertical)
            .expect("vertical transition checked by validity");
        let mut cost = vertical_cost(pair.vertical, &entry.ys, h)?;
        if self.position + 1 < self.seq.len() {
            let next = self.seq.entry(self.position + 1);
            cost += horizontal_cost(pair.horizontal, entry.x, next.x)?;
            self.state = transition_horizontal(after_vertical, pair.horizontal)
                .expect("horizontal transition checked by validity");
        } else {
            self.state = after_vertical;
        }
        self.position += 1;
        self.total_cost += cost;
        self.history.push(pair);
        Ok(cost)
    }
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

/// A complete tour: one action pair per non-empty aisle, its per-step costs,
/// and (for policy rollouts) the log-probability of each chosen action.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub actions: Vec<ActionPair>,
    pub step_costs: Vec<Length>,
    pub total_length: Length,
    pub log_probs: Option<Vec<f64>>,
}

impl Rollout {
    /// Text form used by the CLI's `--dump-route`: one line
    /// `aisle vertical horizontal cost` per step plus a trailing total.
    pub fn dump(&self, seq: &AisleSequence) -> String {
        let mut out = String::new();
        for (i, (pair, cost)) in self.actions.iter().zip(&self.step_costs).enumerate() {
            out.push_str(&format!(
                "{} {} {} {}\n",
                seq.entry(i).aisle,
                pair.vertical,
                pair.horizontal,
                cost
            ));
        }
        out.push_str(&format!("total {}\n", self.total_length));
        out
    }
}

/// Replays an action sequence from the initial state, validating every step.
pub fn replay(actions: &[ActionPair], seq: &AisleSequence) -> Result<Rollout> {
    if actions.len() != seq.len() {
        return Err(Error::Contract(format!(
            "{} actions for {} aisles",
            actions.len(),
            seq.len()
        )));
    }
    let mut env = EnvState::new(seq);
    let mut step_costs = Vec::with_capacity(actions.len());
    for &pair in actions {
        step_costs.push(env.step(pair)?);
    }
    debug_assert!(env.state().terminal_valid());
    Ok(Rollout {
        actions: actions.to_vec(),
        step_costs,
        total_length: env.total_cost(),
        log_probs: None,
    })
}

/// Total tour length of an action sequence; errors carry the failing index.
pub fn rollout_length(actions: &[ActionPair], seq: &AisleSequence) -> Result<Length> {
    replay(actions, seq).map(|r| r.total_length)
}
