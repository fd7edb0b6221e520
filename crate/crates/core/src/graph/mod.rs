//! Directed session graphs over (item, TN bucket) nodes.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::data::LabeledInstance;
use crate::temporal::Bucketizer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GraphNode {
    pub item: usize,
    pub tn_bucket: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GraphEdge {
    pub src: usize,
    pub dst: usize,
    pub te_bucket: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Incoming,
    Outgoing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionGraph {
    /// Unique nodes in first-occurrence order.
    pub nodes: Vec<GraphNode>,
    /// One edge per consecutive pair of clicks; repeats and self-loops kept.
    pub edges: Vec<GraphEdge>,
    pub seq_to_node: Vec<usize>,
    /// Prediction time minus click time, per sequence position, clamped at 0.
    pub tn_diffs_ms: Vec<i64>,
    /// Interval between the clicks joined by each edge, clamped at 0.
    pub te_diffs_ms: Vec<i64>,
    /// How many differences were negative before clamping.
    pub clamped: usize,
}

/// Builds the graph of `instance`'s prefix.
///
/// # Panics
/// When the prefix is empty.
pub fn build_graph(instance: &LabeledInstance, tn: &Bucketizer, te: &Bucketizer) -> SessionGraph {
    let events = &instance.prefix.events;
    assert!(!events.is_empty(), "session {} has an empty prefix", instance.prefix.id);
    let mut clamped = 0;
    let mut clamp = |d: i64| {
        if d < 0 {
            clamped += 1;
        }
        d.max(0)
    };

    let mut nodes = Vec::new();
    let mut index: HashMap<GraphNode, usize> = HashMap::new();
    let mut seq_to_node = Vec::with_capacity(events.len());
    let mut tn_diffs_ms = Vec::with_capacity(events.len());
    for e in events {
        let diff = clamp(instance.prefix.prediction_ts - e.timestamp_ms);
        let node = GraphNode {
            item: e.item,
            tn_bucket: tn.bucketize(diff),
        };
        let k = *index.entry(node).or_insert_with(|| {
            nodes.push(node);
            nodes.len() - 1
        });
        seq_to_node.push(k);
        tn_diffs_ms.push(diff);
    }

    let mut edges = Vec::with_capacity(events.len() - 1);
    let mut te_diffs_ms = Vec::with_capacity(events.len() - 1);
    for j in 1..events.len() {
        let diff = clamp(events[j].timestamp_ms - events[j - 1].timestamp_ms);
        edges.push(GraphEdge {
            src: seq_to_node[j - 1],
            dst: seq_to_node[j],
            te_bucket: te.bucketize(diff),
        });
        te_diffs_ms.push(diff);
    }

    SessionGraph {
        nodes,
        edges,
        seq_to_node,
        tn_diffs_ms,
        te_diffs_ms,
        clamped,
    }
}

impl SessionGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn seq_len(&self) -> usize {
        self.seq_to_node.len()
    }

    /// Indices of the edges entering (`Incoming`) or leaving (`Outgoing`) `node`.
    pub fn incident(&self, node: usize, direction: Direction) -> Vec<usize> {
        self.edges
            .iter()
            .enumerate()
            .filter(|(_, e)| match direction {
                Direction::Incoming => e.dst == node,
                Direction::Outgoing => e.src == node,
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// `(neighbor, te_bucket)` for every incident edge, with multiplicity.
    pub fn neighbors(&self, node: usize, direction: Direction) -> Vec<(usize, usize)> {
        self.incident(node, direction)
            .into_iter()
            .map(|i| {
                let e = self.edges[i];
                match direction {
                    Direction::Incoming => (e.src, e.te_bucket),
                    Direction::Outgoing => (e.dst, e.te_bucket),
                }
            })
            .collect()
    }

    /// Sequence position of the most recent occurrence of each node.
    pub fn last_occurrence(&self) -> Vec<usize> {
        let mut last = vec![0; self.nodes.len()];
        for (j, &k) in self.seq_to_node.iter().enumerate() {
            last[k] = j;
        }
        last
    }

    /// Item indices in sequence order, read back through `seq_to_node`.
    pub fn items(&self) -> Vec<usize> {
        self.seq_to_node.iter().map(|&k| self.nodes[k].item).collect()
    }

    /// Plain-text adjacency listing, one line per node.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (k, n) in self.nodes.iter().enumerate() {
            let targets: Vec<String> = self
                .neighbors(k, Direction::Outgoing)
                .into_iter()
                .map(|(dst, te)| format!("{dst} te={te}"))
                .collect();
            let _ = writeln!(
                out,
                "node {k}: item={} tn={}; out -> [{}]",
                n.item,
                n.tn_bucket,
                targets.join(", ")
            );
        }
        out
    }
}
