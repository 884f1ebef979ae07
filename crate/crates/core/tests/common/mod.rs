#![allow(dead_code)] // shared by multiple test binaries, each using a subset

//! Independent tour-graph reconstruction used to audit the environment.
//!
//! Actions are expanded into an explicit edge multiset over cross-aisle and
//! item nodes, deliberately sharing no code with the environment's state
//! machine: the builder knows edge geometry, the classifier knows parities
//! and components, and nothing else.

use std::collections::{HashMap, HashSet};

use picker_core::tourgraph::{ActionPair, HorizontalAction, VerticalAction};
use picker_core::warehouse::{AisleSequence, Length};

/// A graph node: `(aisle, y)` with `y = 0` the front cross-aisle node
/// (which the depot shares) and `y = h` the back one.
pub type Node = (usize, Length);

#[derive(Default)]
pub struct MultiGraph {
    pub edges: Vec<(Node, Node)>,
}

impl MultiGraph {
    fn chain(&mut self, nodes: &[Node], copies: usize) {
        for window in nodes.windows(2) {
            if window[0] == window[1] {
                continue; // zero-length edge: same node
            }
            for _ in 0..copies {
                self.edges.push((window[0], window[1]));
            }
        }
    }

    pub fn degrees(&self) -> HashMap<Node, usize> {
        let mut degrees = HashMap::new();
        for &(a, b) in &self.edges {
            *degrees.entry(a).or_insert(0) += 1;
            *degrees.entry(b).or_insert(0) += 1;
        }
        degrees
    }

    /// Connected components over nodes that carry at least one edge.
    pub fn component_count(&self) -> usize {
        let mut parent: HashMap<Node, Node> = HashMap::new();
        fn find(parent: &mut HashMap<Node, Node>, node: Node) -> Node {
            let up = *parent.entry(node).or_insert(node);
            if up == node {
                node
            } else {
                let root = find(parent, up);
                parent.insert(node, root);
                root
            }
        }
        for &(a, b) in &self.edges {
            let ra = find(&mut parent, a);
            let rb = find(&mut parent, b);
            if ra != rb {
                parent.insert(ra, rb);
            }
        }
        let nodes: HashSet<Node> = self.edges.iter().flat_map(|&(a, b)| [a, b]).collect();
        let roots: HashSet<Node> = nodes.iter().map(|&n| find(&mut parent, n)).collect();
        roots.len()
    }

    pub fn all_degrees_even(&self) -> bool {
        self.degrees().values().all(|&d| d % 2 == 0)
    }

    pub fn is_closed_tour(&self) -> bool {
        !self.edges.is_empty() && self.component_count() == 1 && self.all_degrees_even()
    }
}

/// Expands an action sequence into its edge multiset.
pub fn build_graph(actions: &[ActionPair], seq: &AisleSequence) -> MultiGraph {
    let h = seq.aisle_len();
    let mut graph = MultiGraph::default();
    for (position, pair) in actions.iter().enumerate() {
        let entry = seq.entry(position);
        let aisle = entry.aisle;
        let bottom = (aisle, 0);
        let top = (aisle, h);
        let items: Vec<Node> = entry.ys.iter().map(|&y| (aisle, y)).collect();

        match pair.vertical {
            VerticalAction::OnePass => {
                let mut nodes = vec![bottom];
                nodes.extend(items.iter().copied());
                nodes.push(top);
                graph.chain(&nodes, 1);
            }
            VerticalAction::Top => {
                let mut nodes = vec![top];
                nodes.extend(items.iter().rev().copied());
                graph.chain(&nodes, 2);
            }
            VerticalAction::Bottom => {
                let mut nodes = vec![bottom];
                nodes.extend(items.iter().copied());
                graph.chain(&nodes, 2);
            }
            VerticalAction::Gap => {
                let gap_at = entry
                    .ys
                    .windows(2)
                    .enumerate()
                    .max_by_key(|(_, w)| w[1] - w[0])
                    .map(|(i, _)| i)
                    .expect("gap needs two picks");
                let mut lower = vec![bottom];
                lower.extend(items[..=gap_at].iter().copied());
                graph.chain(&lower, 2);
                let mut upper: Vec<Node> = items[gap_at + 1..].to_vec();
                upper.push(top);
                graph.chain(&upper, 2);
            }
        }

        if position + 1 < seq.len() {
            let next = seq.entry(position + 1).aisle;
            let (top_edges, bottom_edges) = match pair.horizontal {
                HorizontalAction::H11 => (1, 1),
                HorizontalAction::H20 => (2, 0),
                HorizontalAction::H02 => (0, 2),
                HorizontalAction::H22 => (2, 2),
            };
            for _ in 0..top_edges {
                graph.edges.push(((aisle, h), (next, h)));
            }
            for _ in 0..bottom_edges {
                graph.edges.push(((aisle, 0), (next, 0)));
            }
        }
    }
    graph
}

/// Classifies a partial tour subgraph by the conventional labels: parity of
/// the rightmost top and bottom cross-aisle nodes plus component count.
pub fn classify(graph: &MultiGraph, rightmost_aisle: usize, h: Length) -> String {
    let degrees = graph.degrees();
    let symbol = |node: Node| -> char {
        match degrees.get(&node).copied().unwrap_or(0) {
            0 => '0',
            d if d % 2 == 1 => 'U',
            _ => 'E',
        }
    };
    format!(
        "{}{}{}C",
        symbol((rightmost_aisle, h)),
        symbol((rightmost_aisle, 0)),
        graph.component_count()
    )
}
