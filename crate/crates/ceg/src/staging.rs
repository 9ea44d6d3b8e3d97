//! Position computation, graph compilation and minimization.
//!
//! Two situations share a position exactly when their rooted subtrees are
//! isomorphic preserving edge labels, stage colours and cluster colours.
//! Subtree isomorphism is decided by bottom-up canonical hashing: a vertex's
//! signature is its stage colour plus the sorted multiset of
//! (edge label, probability at fixed 12-decimal precision, edge colour,
//! child signature). Signatures are interned so the pass is near-linear.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::error::{CegError, Result};
use crate::model::{CegGraph, Edge, EdgeId, EventTree, StagePartition, VertexId, SINK_ID};

/// Partition of situations into positions. Position ids are the
/// lexicographically smallest member.
#[derive(Debug, Clone)]
pub struct PositionPartition {
    blocks: BTreeMap<VertexId, BTreeSet<VertexId>>,
    position_of: BTreeMap<VertexId, VertexId>,
}

impl PositionPartition {
    pub fn blocks(&self) -> &BTreeMap<VertexId, BTreeSet<VertexId>> {
        &self.blocks
    }

    pub fn position_of(&self, v: &VertexId) -> Option<&VertexId> {
        self.position_of.get(v)
    }

    pub fn are_merged(&self, a: &VertexId, b: &VertexId) -> bool {
        match (self.position_of(a), self.position_of(b)) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }
}

fn edge_colour(e: &Edge) -> String {
    match (&e.cluster, &e.holding) {
        (Some(c), _) => format!("c:{c}"),
        (None, Some(h)) => format!("h:{}", h.fingerprint()),
        (None, None) => "-".into(),
    }
}

struct Interner {
    codes: HashMap<String, u64>,
}

impl Interner {
    fn new() -> Self {
        Interner {
            codes: HashMap::new(),
        }
    }

    fn intern(&mut self, key: String) -> u64 {
        let next = self.codes.len() as u64;
        *self.codes.entry(key).or_insert(next)
    }
}

/// Computes the position partition of a validated tree. Unstaged situations
/// keep their own trivial colour, so positions always refine the stage
/// partition.
pub fn compute_positions(tree: &EventTree, stages: &StagePartition) -> PositionPartition {
    let mut interner = Interner::new();
    let leaf_code = interner.intern("leaf".into());
    let mut sig: BTreeMap<&VertexId, u64> = BTreeMap::new();

    // Post-order: children before parents.
    let mut order: Vec<&VertexId> = Vec::with_capacity(tree.vertices().len());
    let mut stack = vec![(tree.root(), false)];
    while let Some((v, expanded)) = stack.pop() {
        if expanded || tree.is_leaf(v) {
            order.push(v);
            continue;
        }
        stack.push((v, true));
        for &i in tree.out_edges(v) {
            stack.push((&tree.edges()[i].to, false));
        }
    }

    for v in order {
        if tree.is_leaf(v) {
            sig.insert(v, leaf_code);
            continue;
        }
        let stage_key = match stages.stage_of(v) {
            Some(s) => format!("u:{s}"),
            None => format!("~{v}"),
        };
        let mut parts: Vec<String> = tree
            .out_edges(v)
            .iter()
            .map(|&i| {
                let e = &tree.edges()[i];
                format!(
                    "{}\u{1}{:.12}\u{1}{}\u{1}{}",
                    e.label,
                    e.prob.value(),
                    edge_colour(e),
                    sig[&e.to]
                )
            })
            .collect();
        parts.sort();
        let code = interner.intern(format!("{stage_key}\u{2}{}", parts.join("\u{2}")));
        sig.insert(v, code);
    }

    let mut groups: BTreeMap<u64, BTreeSet<VertexId>> = BTreeMap::new();
    for v in tree.situations() {
        groups.entry(sig[v]).or_default().insert(v.clone());
    }
    let mut blocks = BTreeMap::new();
    let mut position_of = BTreeMap::new();
    for members in groups.into_values() {
        let rep = members.iter().next().expect("nonempty block").clone();
        for m in &members {
            position_of.insert(m.clone(), rep.clone());
        }
        blocks.insert(rep, members);
    }
    PositionPartition {
        blocks,
        position_of,
    }
}

/// Output of compilation with the bookkeeping needed by oracles and tests.
#[derive(Debug, Clone)]
pub struct Compiled {
    pub graph: CegGraph,
    /// position id -> situations coalesced into it
    pub members: BTreeMap<VertexId, BTreeSet<VertexId>>,
    /// tree edge id -> compiled edge id
    pub edge_map: BTreeMap<EdgeId, EdgeId>,
}

/// Coalesces situations in the same position into a single vertex and
/// collects all leaves into the sink. The edge multiset between positions is
/// the representative's out-edge multiset, so parallel edges with distinct
/// labels stay distinct. Stage colours are retained only where a stage spans
/// more than one position.
pub fn compile_ceg_detailed(
    tree: &EventTree,
    positions: &PositionPartition,
    stages: &StagePartition,
) -> Result<Compiled> {
    let sink = VertexId::from(SINK_ID);
    let pos_or_sink = |v: &VertexId| -> VertexId {
        if tree.is_leaf(v) {
            sink.clone()
        } else {
            positions
                .position_of(v)
                .expect("situation has a position")
                .clone()
        }
    };

    // Position vertices in first-appearance order.
    let mut vertices: Vec<VertexId> = Vec::new();
    let mut seen: BTreeSet<VertexId> = BTreeSet::new();
    for v in tree.vertices() {
        if tree.is_leaf(v) {
            continue;
        }
        let p = pos_or_sink(v);
        if seen.insert(p.clone()) {
            vertices.push(p);
        }
    }
    vertices.push(sink.clone());

    // Stage colouring survives only for stages split across positions.
    let mut stage_positions: BTreeMap<String, BTreeSet<VertexId>> = BTreeMap::new();
    for (sid, members) in stages.blocks() {
        for m in members {
            if let Some(p) = positions.position_of(m) {
                stage_positions
                    .entry(sid.clone())
                    .or_default()
                    .insert(p.clone());
            }
        }
    }
    let mut stage_of: BTreeMap<VertexId, String> = BTreeMap::new();
    for (sid, ps) in &stage_positions {
        if ps.len() > 1 {
            for p in ps {
                stage_of.insert(p.clone(), sid.clone());
            }
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut rep_edge_indices: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
    for rep in positions.blocks().keys() {
        let mut idxs = Vec::new();
        for &i in tree.out_edges(rep) {
            let e = &tree.edges()[i];
            idxs.push(edges.len());
            edges.push(Edge {
                from: rep.clone(),
                to: pos_or_sink(&e.to),
                label: e.label.clone(),
                prob: e.prob.clone(),
                holding: e.holding.clone(),
                cluster: e.cluster.clone(),
            });
        }
        rep_edge_indices.insert(rep.clone(), idxs);
    }
    // Reorder edges to follow the vertex order.
    let mut ordered = Vec::with_capacity(edges.len());
    let mut new_index: BTreeMap<usize, usize> = BTreeMap::new();
    for p in &vertices {
        if let Some(idxs) = rep_edge_indices.get(p) {
            for &i in idxs {
                new_index.insert(i, ordered.len());
                ordered.push(edges[i].clone());
            }
        }
    }

    let graph = CegGraph::new(
        vertices,
        ordered,
        pos_or_sink(tree.root()),
        sink.clone(),
        BTreeSet::new(),
        BTreeSet::new(),
        BTreeMap::new(),
        stage_of,
    )?;

    // Tree edge -> compiled edge. Members of a position pair their out-edges
    // with the representative's by the sorted descriptor order.
    let mut edge_map: BTreeMap<EdgeId, EdgeId> = BTreeMap::new();
    let descriptor = |i: usize| {
        let e = &tree.edges()[i];
        let to_key = pos_or_sink(&e.to);
        (
            e.label.clone(),
            format!("{:.12}", e.prob.value()),
            edge_colour(e),
            to_key,
            i,
        )
    };
    for (rep, members) in positions.blocks() {
        let mut rep_sorted: Vec<(usize, usize)> = Vec::new();
        {
            let mut ds: Vec<_> = tree.out_edges(rep).iter().map(|&i| descriptor(i)).collect();
            ds.sort();
            for (slot, d) in ds.iter().enumerate() {
                rep_sorted.push((slot, d.4));
            }
        }
        // slot -> compiled edge id
        let mut slot_to_ceg: BTreeMap<usize, EdgeId> = BTreeMap::new();
        for (slot, tree_idx) in &rep_sorted {
            let orig_local = tree
                .out_edges(rep)
                .iter()
                .position(|i| i == tree_idx)
                .unwrap();
            let flat = rep_edge_indices[rep][orig_local];
            let ceg_idx = new_index[&flat];
            slot_to_ceg.insert(*slot, graph.edge_ids()[ceg_idx].clone());
        }
        for m in members {
            let mut ds: Vec<_> = tree.out_edges(m).iter().map(|&i| descriptor(i)).collect();
            ds.sort();
            for (slot, d) in ds.iter().enumerate() {
                let tid = tree.edge_ids()[d.4].clone();
                edge_map.insert(tid, slot_to_ceg[&slot].clone());
            }
        }
    }

    Ok(Compiled {
        graph,
        members: positions.blocks().clone(),
        edge_map,
    })
}

/// `compile_ceg_detailed` without the bookkeeping.
pub fn compile_ceg(
    tree: &EventTree,
    positions: &PositionPartition,
    stages: &StagePartition,
) -> Result<CegGraph> {
    Ok(compile_ceg_detailed(tree, positions, stages)?.graph)
}

/// Merges non-sink vertices whose rooted subgraphs are isomorphic preserving
/// retained colourings, holding specs and slice tags. The path set and all
/// path probabilities are unchanged. Requires an acyclic graph.
pub fn minimize(graph: &CegGraph) -> Result<CegGraph> {
    if graph.is_dynamic() {
        return Err(CegError::Structural(
            "minimize requires an acyclic graph".into(),
        ));
    }
    let order = graph.topo_order()?;
    let mut interner = Interner::new();
    let sink_code = interner.intern("sink".into());
    let mut sig: BTreeMap<VertexId, u64> = BTreeMap::new();

    for v in order.iter().rev() {
        if v == graph.sink() {
            sig.insert(v.clone(), sink_code);
            continue;
        }
        let stage_key = graph
            .stage_of()
            .get(v)
            .map(|s| format!("u:{s}"))
            .unwrap_or_default();
        let slice_key = graph
            .slice_of()
            .get(v)
            .map(|k| format!("P{k}"))
            .unwrap_or_default();
        let timed_key = if graph.is_untimed(v) { "untimed" } else { "" };
        let mut parts: Vec<String> = graph
            .out_edges(v)
            .iter()
            .map(|&i| {
                let e = &graph.edges()[i];
                format!(
                    "{}\u{1}{:.12}\u{1}{}\u{1}{}",
                    e.label,
                    e.prob.value(),
                    edge_colour(e),
                    sig[&e.to]
                )
            })
            .collect();
        parts.sort();
        let code = interner.intern(format!(
            "{stage_key}|{slice_key}|{timed_key}\u{2}{}",
            parts.join("\u{2}")
        ));
        sig.insert(v.clone(), code);
    }

    // First vertex of each signature class survives.
    let mut rep_of: BTreeMap<&VertexId, &VertexId> = BTreeMap::new();
    let mut class_rep: BTreeMap<u64, &VertexId> = BTreeMap::new();
    for v in graph.vertices() {
        let code = sig[v];
        let rep = class_rep.entry(code).or_insert(v);
        rep_of.insert(v, rep);
    }

    let vertices: Vec<VertexId> = graph
        .vertices()
        .iter()
        .filter(|v| rep_of[*v] == *v)
        .cloned()
        .collect();
    let mut edges = Vec::new();
    for v in &vertices {
        for &i in graph.out_edges(v) {
            let e = &graph.edges()[i];
            edges.push(Edge {
                to: rep_of[&e.to].clone(),
                ..e.clone()
            });
        }
    }
    CegGraph::new(
        vertices.clone(),
        edges,
        rep_of[graph.root()].clone(),
        graph.sink().clone(),
        BTreeSet::new(),
        graph
            .untimed_vertices()
            .iter()
            .filter(|v| vertices.contains(v))
            .cloned()
            .collect(),
        graph
            .slice_of()
            .iter()
            .filter(|(v, _)| vertices.contains(v))
            .map(|(v, k)| (v.clone(), *k))
            .collect(),
        graph
            .stage_of()
            .iter()
            .filter(|(v, _)| vertices.contains(v))
            .map(|(v, s)| (v.clone(), s.clone()))
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------------

const FILL_PALETTE: [&str; 8] = [
    "lightblue",
    "lightsalmon",
    "palegreen",
    "plum",
    "khaki",
    "lightpink",
    "aquamarine",
    "wheat",
];
const EDGE_PALETTE: [&str; 8] = [
    "blue",
    "red",
    "forestgreen",
    "purple",
    "darkorange",
    "deeppink",
    "teal",
    "brown",
];

fn palette_map<'a, I: Iterator<Item = &'a str>>(
    ids: I,
    palette: &'static [&'static str],
) -> BTreeMap<&'a str, &'static str> {
    let mut sorted: Vec<&str> = ids.collect();
    sorted.sort_unstable();
    sorted.dedup();
    sorted
        .iter()
        .enumerate()
        .map(|(i, id)| (*id, palette[i % palette.len()]))
        .collect()
}

fn dot_escape(s: &str) -> String {
    s.replace('"', "\\\"")
}

/// Graphviz rendering of a hued tree: stage colours as vertex fills, cluster
/// ids as edge colours, probabilities on edge labels.
pub fn tree_to_dot(tree: &EventTree, stages: &StagePartition) -> String {
    let fills = palette_map(stages.blocks().keys().map(String::as_str), &FILL_PALETTE);
    let edge_colours = palette_map(
        tree.edges().iter().filter_map(|e| e.cluster.as_deref()),
        &EDGE_PALETTE,
    );
    let mut out = String::from("digraph tree {\n  rankdir=LR;\n  node [shape=circle];\n");
    for v in tree.vertices() {
        let mut attrs = Vec::new();
        if let Some(stage) = stages.stage_of(v) {
            attrs.push(format!("style=filled, fillcolor={}", fills[stage]));
            attrs.push(format!("xlabel=\"{}\"", dot_escape(stage)));
        }
        if tree.is_leaf(v) {
            attrs.push("shape=point".into());
        }
        out.push_str(&format!(
            "  \"{}\" [{}];\n",
            dot_escape(v.as_str()),
            attrs.join(", ")
        ));
    }
    for e in tree.edges() {
        let colour = e
            .cluster
            .as_deref()
            .map(|c| edge_colours[c])
            .unwrap_or("black");
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\\n{}\", color={}];\n",
            dot_escape(e.from.as_str()),
            dot_escape(e.to.as_str()),
            dot_escape(&e.label),
            e.prob.repr(),
            colour
        ));
    }
    out.push_str("}\n");
    out
}

/// Graphviz rendering of a compiled graph. Cyclic edges are dashed; untimed
/// vertices are drawn as boxes; the sink is a double circle.
pub fn ceg_to_dot(graph: &CegGraph) -> String {
    let fills = palette_map(graph.stage_of().values().map(String::as_str), &FILL_PALETTE);
    let edge_colours = palette_map(
        graph.edges().iter().filter_map(|e| e.cluster.as_deref()),
        &EDGE_PALETTE,
    );
    let mut out = String::from("digraph ceg {\n  rankdir=LR;\n  node [shape=circle];\n");
    for v in graph.vertices() {
        let mut attrs = Vec::new();
        if v == graph.sink() {
            attrs.push("shape=doublecircle".to_string());
            attrs.push("label=\"w∞\"".to_string());
        } else if graph.is_untimed(v) {
            attrs.push("shape=box".to_string());
        }
        if let Some(stage) = graph.stage_of().get(v) {
            attrs.push(format!("style=filled, fillcolor={}", fills[stage.as_str()]));
        }
        out.push_str(&format!(
            "  \"{}\" [{}];\n",
            dot_escape(v.as_str()),
            attrs.join(", ")
        ));
    }
    for (i, e) in graph.edges().iter().enumerate() {
        let id = &graph.edge_ids()[i];
        let colour = e
            .cluster
            .as_deref()
            .map(|c| edge_colours[c])
            .unwrap_or("black");
        let style = if graph.cyclic_edges().contains(id) {
            ", style=dashed"
        } else {
            ""
        };
        out.push_str(&format!(
            "  \"{}\" -> \"{}\" [label=\"{}\\n{}\", color={}{}];\n",
            dot_escape(e.from.as_str()),
            dot_escape(e.to.as_str()),
            dot_escape(&e.label),
            e.prob.repr(),
            colour,
            style
        ));
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::Decimal;

    #[test]
    fn infection_tree_positions_merge_as_expected() {
        let (tree, stages) = fixtures::infection_tree();
        let positions = compute_positions(&tree, &stages);
        assert!(positions.are_merged(&"v1".into(), &"v2".into()));
        assert!(positions.are_merged(&"v4".into(), &"v6".into()));
        assert!(positions.are_merged(&"v5".into(), &"v7".into()));
        assert!(!positions.are_merged(&"v4".into(), &"v5".into()));
        assert!(!positions.are_merged(&"v0".into(), &"v3".into()));
    }

    #[test]
    fn infection_tree_compiles_to_six_positions() {
        let (tree, stages) = fixtures::infection_tree();
        let positions = compute_positions(&tree, &stages);
        let graph = compile_ceg(&tree, &positions, &stages).unwrap();
        let ids: Vec<&str> = graph.vertices().iter().map(VertexId::as_str).collect();
        assert_eq!(ids, vec!["v0", "v1", "v3", "v4", "v5", SINK_ID]);
        // Same-stage different-position vertices keep their colouring; the
        // fixture's stages all coalesce, so no colour survives.
        assert!(graph.stage_of().is_empty());
        assert!(crate::model::validate_ceg(&graph).is_empty());
    }

    #[test]
    fn no_colouring_distinct_labels_yields_discrete_partition() {
        let (tree, stages) = fixtures::distinct_label_tree();
        let positions = compute_positions(&tree, &stages);
        assert_eq!(positions.blocks().len(), tree.situations().len());
    }

    #[test]
    fn uniform_binary_tree_merges_per_depth() {
        let (tree, stages) = fixtures::uniform_binary_tree(3);
        let positions = compute_positions(&tree, &stages);
        // Depths 0, 1, 2 of situations: 1 + 1 + 1 blocks.
        assert_eq!(positions.blocks().len(), 3);
        // Brute-force pairwise check against the hashing result.
        let situations = tree.situations();
        for a in &situations {
            for b in &situations {
                let iso = fixtures::subtrees_isomorphic(&tree, &stages, a, b);
                assert_eq!(positions.are_merged(a, b), iso, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn single_path_tree_compiles_to_path_graph() {
        let tree = fixtures::chain_tree(&["a", "b", "c", "d"]);
        let stages = StagePartition::default();
        let positions = compute_positions(&tree, &stages);
        let graph = compile_ceg(&tree, &positions, &stages).unwrap();
        assert_eq!(graph.vertices().len(), 4); // a, b, c + sink
        for v in graph.positions() {
            assert_eq!(graph.out_edges(v).len(), 1);
        }
    }

    #[test]
    fn minimize_is_identity_on_compiled_graphs() {
        let (tree, stages) = fixtures::infection_tree();
        let positions = compute_positions(&tree, &stages);
        let graph = compile_ceg(&tree, &positions, &stages).unwrap();
        let minimized = minimize(&graph).unwrap();
        assert_eq!(minimized.vertices().len(), graph.vertices().len());
        assert_eq!(minimized.edges().len(), graph.edges().len());
    }

    #[test]
    fn minimize_merges_duplicate_subgraphs_and_preserves_path_count() {
        let graph = fixtures::duplicate_subgraph_ceg();
        let before = crate::oracle::enumerate_paths(&graph, 1000).unwrap();
        let minimized = minimize(&graph).unwrap();
        let after = crate::oracle::enumerate_paths(&minimized, 1000).unwrap();
        assert!(minimized.vertices().len() < graph.vertices().len());
        assert_eq!(before.rows.len(), after.rows.len());
        let again = minimize(&minimized).unwrap();
        assert_eq!(again.vertices().len(), minimized.vertices().len());
    }

    #[test]
    fn minimize_keeps_parallel_edges_born_from_merging() {
        // x reaches two isomorphic subtrees through equal-label edges; after
        // the targets merge, x carries parallel identical triples that must
        // keep distinct ids and preserve the path count.
        use crate::model::{CegGraph, Decimal, Edge, HoldingTimeSpec, SINK_ID};
        let e = |from: &str, to: &str, label: &str, p: f64| Edge {
            from: from.into(),
            to: to.into(),
            label: label.to_string(),
            prob: Decimal::from_f64(p),
            holding: Some(HoldingTimeSpec::exponential_rate(1.0)),
            cluster: None,
        };
        let graph = CegGraph::new(
            ["x", "s", "t", SINK_ID]
                .iter()
                .map(|s| (*s).into())
                .collect(),
            vec![
                e("x", "s", "c", 0.5),
                e("x", "t", "c", 0.5),
                e("s", SINK_ID, "z", 1.0),
                e("t", SINK_ID, "z", 1.0),
            ],
            "x".into(),
            SINK_ID.into(),
            Default::default(),
            Default::default(),
            Default::default(),
            Default::default(),
        )
        .unwrap();
        let before = crate::oracle::enumerate_paths(&graph, 10).unwrap();
        let minimized = minimize(&graph).unwrap();
        let after = crate::oracle::enumerate_paths(&minimized, 10).unwrap();
        assert_eq!(minimized.vertices().len(), 3);
        assert_eq!(before.rows.len(), after.rows.len());
        let ids: std::collections::BTreeSet<_> = minimized.edge_ids().iter().collect();
        assert_eq!(
            ids.len(),
            minimized.edges().len(),
            "parallel edges need distinct ids"
        );
    }

    #[test]
    fn minimize_leaves_single_edge_graph_unchanged() {
        let graph = fixtures::single_edge_ceg();
        let minimized = minimize(&graph).unwrap();
        assert_eq!(minimized.vertices().len(), 2);
        assert_eq!(minimized.edges().len(), 1);
    }

    #[test]
    fn label_sequence_measure_is_preserved_by_compilation() {
        let (tree, stages) = fixtures::infection_tree();
        let positions = compute_positions(&tree, &stages);
        let graph = compile_ceg(&tree, &positions, &stages).unwrap();
        let tree_measure = fixtures::tree_label_sequence_measure(&tree);
        let ceg_measure = fixtures::ceg_label_sequence_measure(&graph);
        assert_eq!(tree_measure.len(), ceg_measure.len());
        for (labels, p) in tree_measure {
            let q = ceg_measure.get(&labels).copied().unwrap_or(0.0);
            assert!((p - q).abs() < 1e-12, "{labels:?}: {p} vs {q}");
        }
    }

    #[test]
    fn retained_stage_colouring_survives_split_stages() {
        // Two situations in one stage whose subtrees differ downstream, so
        // they stay separate positions but keep the stage colour.
        let (tree, stages) = fixtures::split_stage_tree();
        let positions = compute_positions(&tree, &stages);
        let compiled = compile_ceg_detailed(&tree, &positions, &stages).unwrap();
        assert!(!positions.are_merged(&"a".into(), &"b".into()));
        assert_eq!(compiled.graph.stage_of().len(), 2);
    }

    #[test]
    fn dot_export_contains_edges_and_colours() {
        let (tree, stages) = fixtures::infection_tree();
        let dot = tree_to_dot(&tree, &stages);
        assert!(dot.contains("\"v0\" -> \"v1\""));
        assert!(dot.contains("fillcolor="));
        let (graph, _) = fixtures::reinfection_model_graph();
        let dot = ceg_to_dot(&graph);
        assert!(
            dot.contains("style=dashed"),
            "cyclic edges should be dashed"
        );
        assert!(dot.contains("doublecircle"));
    }

    #[test]
    fn probability_equality_uses_fixed_precision_rendering() {
        // 0.1 + 0.2 style noise below 1e-12 must not split positions.
        let p1 = Decimal::from_f64(0.30000000000000004);
        let p2 = Decimal::from_f64(0.3);
        assert_eq!(format!("{:.12}", p1.value()), format!("{:.12}", p2.value()));
    }
}
