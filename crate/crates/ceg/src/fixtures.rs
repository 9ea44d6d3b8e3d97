//! Example models used across the test suites, the benches and the shipped
//! model files: a finite infection tree, its dynamic reinfection variant,
//! a falls-intervention model with untimed decision vertices, and a few
//! small synthetic graphs.

use std::collections::{BTreeMap, BTreeSet};

use crate::dynamic::{unroll, DcegModel};
use crate::model::{
    CegGraph, Decimal, Edge, EventTree, HoldingTimeSpec, StagePartition, VertexId, SINK_ID,
};
use crate::propagation::Evidence;

fn edge(
    from: &str,
    to: &str,
    label: &str,
    prob: &str,
    holding: Option<HoldingTimeSpec>,
    cluster: Option<&str>,
) -> Edge {
    Edge {
        from: from.into(),
        to: to.into(),
        label: label.to_string(),
        prob: Decimal::from_repr(prob).expect("fixture probability"),
        holding,
        cluster: cluster.map(str::to_string),
    }
}

fn exp(rate: f64) -> Option<HoldingTimeSpec> {
    Some(HoldingTimeSpec::exponential_rate(rate))
}

fn normal(mean: f64, sd: f64) -> Option<HoldingTimeSpec> {
    Some(HoldingTimeSpec::normal(mean, sd))
}

fn weibull(shape: f64, scale: f64) -> Option<HoldingTimeSpec> {
    Some(HoldingTimeSpec::weibull_shape_scale(shape, scale))
}

/// A unit-mass piecewise-linear density on a 0.1-step grid whose value at
/// `at` is exactly `value`: a plateau around `at` carrying part of the mass
/// and a far plateau on [8, 18] carrying the rest. Used to pin holding
/// densities whose parametric convention is not reproducible.
pub fn pinned_density(at: f64, value: f64) -> HoldingTimeSpec {
    let dt = 0.1;
    let n = 201; // 0.0 ..= 20.0
    let mut values = vec![0.0; n];
    // Wide plateau when the mass fits, narrow otherwise.
    let (lo, hi, ramp) = if value * 1.5 <= 0.9 {
        (at - 0.5, at + 0.5, 0.5)
    } else {
        (at - 0.1, at + 0.1, 0.1)
    };
    let plateau_mass = value * ((hi - lo) + ramp);
    let fill = (1.0 - plateau_mass) / 10.5;
    assert!(fill >= 0.0, "pinned density value too large");
    let set = |values: &mut Vec<f64>, a: f64, b: f64, va: f64, vb: f64| {
        let ia = (a / dt).round() as usize;
        let ib = ((b / dt).round() as usize).min(n - 1);
        let span = (ib - ia).max(1) as f64;
        for (off, v) in values[ia..=ib].iter_mut().enumerate() {
            *v = va + (vb - va) * off as f64 / span;
        }
    };
    set(&mut values, lo - ramp, lo, 0.0, value);
    set(&mut values, lo, hi, value, value);
    set(&mut values, hi, hi + ramp, value, 0.0);
    set(&mut values, 7.5, 8.0, 0.0, fill);
    set(&mut values, 8.0, 18.0, fill, fill);
    set(&mut values, 18.0, 18.5, fill, 0.0);
    HoldingTimeSpec::empirical_grid(dt, &values)
}

/// Finite infection tree: three strains, two of them treatable at hospital
/// or at home, each treatment followed by recovery or death. Stages assert
/// that the two treatable strains behave identically from the treatment
/// decision onwards.
pub fn infection_tree() -> (EventTree, StagePartition) {
    let vertices: Vec<VertexId> = (0..=17).map(|i| VertexId(format!("v{i}"))).collect();
    let edges = vec![
        edge("v0", "v1", "strain-1", "0.4", exp(2.0), None),
        edge("v0", "v2", "strain-2", "0.3", exp(2.8), None),
        edge("v0", "v3", "strain-3", "0.3", exp(3.5), None),
        edge("v1", "v4", "hospital", "0.45", normal(7.0, 1.0), Some("c1")),
        edge("v1", "v5", "home", "0.55", normal(5.0, 2.0), Some("c2")),
        edge("v2", "v6", "hospital", "0.45", normal(7.0, 1.0), Some("c1")),
        edge("v2", "v7", "home", "0.55", normal(5.0, 2.0), Some("c2")),
        edge(
            "v4",
            "v8",
            "recovered",
            "0.73",
            weibull(1.8, 24.0),
            Some("c3"),
        ),
        edge("v4", "v9", "died", "0.27", weibull(0.88, 2.0), Some("c4")),
        edge(
            "v5",
            "v10",
            "recovered",
            "0.8",
            weibull(2.8, 30.0),
            Some("c5"),
        ),
        edge("v5", "v11", "died", "0.2", weibull(0.8, 1.5), Some("c6")),
        edge(
            "v6",
            "v12",
            "recovered",
            "0.73",
            weibull(1.8, 24.0),
            Some("c3"),
        ),
        edge("v6", "v13", "died", "0.27", weibull(0.88, 2.0), Some("c4")),
        edge(
            "v7",
            "v14",
            "recovered",
            "0.8",
            weibull(2.8, 30.0),
            Some("c5"),
        ),
        edge("v7", "v15", "died", "0.2", weibull(0.8, 1.5), Some("c6")),
        edge("v3", "v16", "recovered", "0.9", weibull(1.3, 12.0), None),
        edge("v3", "v17", "died", "0.1", weibull(0.7, 1.8), None),
    ];
    let tree = EventTree::new(vertices, edges, "v0".into()).expect("fixture tree");
    let mut blocks: BTreeMap<String, BTreeSet<VertexId>> = BTreeMap::new();
    blocks.insert("u1".into(), ["v1".into(), "v2".into()].into());
    blocks.insert("u2".into(), ["v4".into(), "v6".into()].into());
    blocks.insert("u3".into(), ["v5".into(), "v7".into()].into());
    (tree, StagePartition::new(blocks))
}

/// The infection tree as a JSON document (hand-written, field order fixed,
/// so tests can patch probabilities textually).
pub fn infection_tree_doc() -> String {
    let mut edges = Vec::new();
    let (tree, stages) = infection_tree();
    for e in tree.edges() {
        let holding = match &e.holding {
            None => "null".to_string(),
            Some(h) => format!(
                r#"{{"family": "{}", "params": [{}], "convention": "{}"}}"#,
                h.family.name(),
                h.params
                    .iter()
                    .map(|p| format!("\"{}\"", p.repr()))
                    .collect::<Vec<_>>()
                    .join(", "),
                h.convention
            ),
        };
        edges.push(format!(
            r#"    {{"from": "{}", "to": "{}", "label": "{}", "prob": "{}", "holding": {}}}"#,
            e.from,
            e.to,
            e.label,
            e.prob.repr(),
            holding
        ));
    }
    let stages_json: Vec<String> = stages
        .blocks()
        .iter()
        .map(|(k, vs)| {
            format!(
                r#"    "{k}": [{}]"#,
                vs.iter()
                    .map(|v| format!("\"{v}\""))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    let clusters: BTreeMap<&str, Vec<String>> = {
        let mut m: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for (i, e) in tree.edges().iter().enumerate() {
            if let Some(c) = &e.cluster {
                m.entry(c).or_default().push(tree.edge_ids()[i].to_string());
            }
        }
        m
    };
    let clusters_json: Vec<String> = clusters
        .iter()
        .map(|(k, vs)| {
            format!(
                r#"    "{k}": [{}]"#,
                vs.iter()
                    .map(|v| format!("\"{v}\""))
                    .collect::<Vec<_>>()
                    .join(", ")
            )
        })
        .collect();
    format!(
        "{{\n  \"root\": \"v0\",\n  \"vertices\": [{}],\n  \"edges\": [\n{}\n  ],\n  \"stages\": {{\n{}\n  }},\n  \"clusters\": {{\n{}\n  }}\n}}\n",
        tree.vertices().iter().map(|v| format!("\"{v}\"")).collect::<Vec<_>>().join(", "),
        edges.join(",\n"),
        stages_json.join(",\n"),
        clusters_json.join(",\n")
    )
}

/// Dynamic reinfection template: recovery returns to the root along cyclic
/// edges, death is absorbed by the sink. The two recovery densities that no
/// parametric convention reproduces are pinned on empirical grids.
pub fn reinfection_model_graph() -> (CegGraph, StagePartition) {
    let vertices: Vec<VertexId> = ["w0", "w1", "w2", "w3", "w4", SINK_ID]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    let edges = vec![
        edge("w0", "w1", "strain-1", "0.4", exp(2.0), None),
        edge("w0", "w1", "strain-2", "0.3", exp(2.8), None),
        edge("w0", "w2", "strain-3", "0.3", exp(3.5), None),
        edge("w1", "w3", "hospital", "0.45", normal(7.0, 1.0), None),
        edge("w1", "w4", "home", "0.55", normal(5.0, 2.0), None),
        edge("w2", "w0", "recovered", "0.9", weibull(1.3, 12.0), None),
        edge("w2", SINK_ID, "died", "0.1", weibull(0.7, 1.8), None),
        edge(
            "w3",
            "w0",
            "recovered",
            "0.73",
            Some(pinned_density(4.5, 0.17826)),
            None,
        ),
        edge("w3", SINK_ID, "died", "0.27", weibull(0.88, 2.0), None),
        edge(
            "w4",
            "w0",
            "recovered",
            "0.8",
            Some(pinned_density(4.5, 0.91921)),
            None,
        ),
        edge("w4", SINK_ID, "died", "0.2", weibull(0.8, 1.5), None),
    ];
    let cyclic: BTreeSet<_> = ["w2:recovered:w0", "w3:recovered:w0", "w4:recovered:w0"]
        .iter()
        .map(|s| (*s).into())
        .collect();
    let graph = CegGraph::new(
        vertices,
        edges,
        "w0".into(),
        SINK_ID.into(),
        cyclic,
        BTreeSet::new(),
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("fixture graph");
    (graph, StagePartition::default())
}

/// The third passage-slice of the reinfection model, unrolled on its own.
pub fn reinfection_present_slice() -> CegGraph {
    let (graph, _) = reinfection_model_graph();
    let model = DcegModel::new(graph).expect("template");
    unroll(&model, 3, 0).expect("present slice")
}

/// Evidence for the third infection: treated (either strain 1 or 2, either
/// treatment), recovered, with transitions observed 2.5, 6.5 and 11 days
/// after the previous recovery.
pub fn treated_recovered_evidence() -> Evidence {
    Evidence::from_retained(
        [
            "w0@3:strain-1:w1@3",
            "w0@3:strain-2:w1@3",
            "w1@3:hospital:w3@3",
            "w1@3:home:w4@3",
            "w3@3:recovered:w_inf",
            "w4@3:recovered:w_inf",
        ]
        .iter()
        .map(|s| (*s).into()),
    )
    .with_times(vec![Some(2.5), Some(6.5), Some(11.0)])
}

/// Falls-intervention style mixed model: assessment and categorisation
/// vertices carry no holding times, clinical progression vertices do.
pub fn falls_model() -> CegGraph {
    let vertices: Vec<VertexId> = [
        "w0", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "w9", SINK_ID,
    ]
    .iter()
    .map(|s| VertexId::from(*s))
    .collect();
    let edges = vec![
        edge("w0", "w1", "communal", "0.35", None, None),
        edge("w0", "w2", "individual", "0.65", None, None),
        edge("w1", "w3", "high-risk", "0.4", None, None),
        edge("w1", "w4", "low-risk", "0.6", None, None),
        edge("w2", "w3", "high-risk", "0.25", None, None),
        edge("w2", "w4", "low-risk", "0.75", None, None),
        edge("w3", "w5", "treated", "0.7", None, None),
        edge("w3", "w7", "not-treated", "0.3", None, None),
        edge("w4", "w6", "falls", "0.3", weibull(1.6, 18.0), None),
        edge("w4", SINK_ID, "no-fall", "0.7", exp(0.05), None),
        edge("w5", "w6", "falls", "0.2", weibull(1.5, 24.0), None),
        edge("w5", SINK_ID, "no-fall", "0.8", exp(0.04), None),
        edge("w7", "w6", "falls", "0.45", weibull(1.4, 10.0), None),
        edge("w7", SINK_ID, "no-fall", "0.55", exp(0.07), None),
        edge("w6", "w8", "hospitalised", "0.55", None, None),
        edge("w6", "w9", "community-care", "0.45", None, None),
        edge("w8", SINK_ID, "recovered", "0.7", normal(40.0, 8.0), None),
        edge("w8", SINK_ID, "died", "0.3", weibull(0.9, 30.0), None),
        edge("w9", SINK_ID, "recovered", "0.85", normal(25.0, 6.0), None),
        edge("w9", SINK_ID, "died", "0.15", weibull(0.85, 20.0), None),
    ];
    let untimed: BTreeSet<VertexId> = ["w0", "w1", "w2", "w3", "w6"]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    CegGraph::new(
        vertices,
        edges,
        "w0".into(),
        SINK_ID.into(),
        BTreeSet::new(),
        untimed,
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("fixture graph")
}

/// Evidence on the falls model: individually assessed, high risk, treated,
/// fell, hospitalised, recovered. Untimed transitions happen at the same
/// clock reading as their predecessor.
pub fn falls_evidence() -> Evidence {
    Evidence::from_retained(
        [
            "w0:individual:w2",
            "w2:high-risk:w3",
            "w3:treated:w5",
            "w5:falls:w6",
            "w6:hospitalised:w8",
            "w8:recovered:w_inf",
        ]
        .iter()
        .map(|s| (*s).into()),
    )
    .with_times(vec![
        Some(0.0),
        Some(0.0),
        Some(0.0),
        Some(20.0),
        Some(20.0),
        Some(55.0),
    ])
}

/// Two routes from the root to a merge vertex `m`, then a common exit.
/// Symmetric: both routes are two rate-2 exponentials. Asymmetric: the
/// second route is normal(5,2) then normal(7,1).
pub fn two_route_diamond(symmetric: bool) -> CegGraph {
    let (h1, h2) = if symmetric {
        (exp(2.0), exp(2.0))
    } else {
        (normal(5.0, 2.0), normal(7.0, 1.0))
    };
    let vertices: Vec<VertexId> = ["r", "a1", "b1", "m", SINK_ID]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    let edges = vec![
        edge("r", "a1", "a", "0.5", exp(2.0), None),
        edge("r", "b1", "b", "0.5", h1, None),
        edge("a1", "m", "a-go", "1", exp(2.0), None),
        edge("b1", "m", "b-go", "1", h2, None),
        edge("m", SINK_ID, "end", "1", exp(1.0), None),
    ];
    CegGraph::new(
        vertices,
        edges,
        "r".into(),
        SINK_ID.into(),
        BTreeSet::new(),
        BTreeSet::new(),
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("fixture graph")
}

/// Root, one edge, sink.
pub fn single_edge_ceg() -> CegGraph {
    let vertices: Vec<VertexId> = ["r", SINK_ID].iter().map(|s| VertexId::from(*s)).collect();
    let edges = vec![edge("r", SINK_ID, "go", "1", exp(2.0), None)];
    CegGraph::new(
        vertices,
        edges,
        "r".into(),
        SINK_ID.into(),
        BTreeSet::new(),
        BTreeSet::new(),
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("fixture graph")
}

/// A graph with two isomorphic uncoloured subgraphs below distinct vertices,
/// for exercising minimization.
pub fn duplicate_subgraph_ceg() -> CegGraph {
    let vertices: Vec<VertexId> = ["r", "x", "y", "s", "t", SINK_ID]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    let edges = vec![
        edge("r", "x", "left", "0.5", exp(1.0), None),
        edge("r", "y", "right", "0.5", exp(1.0), None),
        edge("x", "s", "c", "0.7", exp(1.0), None),
        edge("x", SINK_ID, "d", "0.3", exp(2.0), None),
        edge("y", "t", "c", "0.7", exp(1.0), None),
        edge("y", SINK_ID, "d", "0.3", exp(2.0), None),
        edge("s", SINK_ID, "e", "1", exp(3.0), None),
        edge("t", SINK_ID, "e", "1", exp(3.0), None),
    ];
    CegGraph::new(
        vertices,
        edges,
        "r".into(),
        SINK_ID.into(),
        BTreeSet::new(),
        BTreeSet::new(),
        BTreeMap::new(),
        BTreeMap::new(),
    )
    .expect("fixture graph")
}

/// Chain tree a -> b -> c -> ... with unit probabilities.
pub fn chain_tree(names: &[&str]) -> EventTree {
    let vertices: Vec<VertexId> = names.iter().map(|s| VertexId::from(*s)).collect();
    let edges = names
        .windows(2)
        .enumerate()
        .map(|(i, w)| edge(w[0], w[1], &format!("step{i}"), "1", exp(1.0), None))
        .collect();
    EventTree::new(vertices, edges, names[0].into()).expect("fixture tree")
}

/// Small tree with all-distinct labels and no colouring.
pub fn distinct_label_tree() -> (EventTree, StagePartition) {
    let vertices: Vec<VertexId> = ["a", "b", "c", "d", "e", "f", "g"]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    let edges = vec![
        edge("a", "b", "p", "0.5", exp(1.0), None),
        edge("a", "c", "q", "0.5", exp(1.0), None),
        edge("b", "d", "r", "0.5", exp(1.0), None),
        edge("b", "e", "s", "0.5", exp(1.0), None),
        edge("c", "f", "t", "0.5", exp(1.0), None),
        edge("c", "g", "u", "0.5", exp(1.0), None),
    ];
    (
        EventTree::new(vertices, edges, "a".into()).expect("fixture tree"),
        StagePartition::default(),
    )
}

/// Complete binary tree of the given depth, every edge labelled a/b with
/// probability one half and a shared holding spec, all situations in one
/// stage per out-degree class.
pub fn uniform_binary_tree(depth: usize) -> (EventTree, StagePartition) {
    let mut vertices = Vec::new();
    let mut edges = Vec::new();
    let mut stage: BTreeSet<VertexId> = BTreeSet::new();
    let n_internal = (1 << depth) - 1;
    let total = (1 << (depth + 1)) - 1;
    for i in 0..total {
        let v = VertexId(format!("b{i}"));
        vertices.push(v.clone());
        if i < n_internal {
            stage.insert(v.clone());
            for (j, label) in ["a", "b"].iter().enumerate() {
                edges.push(edge(
                    &format!("b{i}"),
                    &format!("b{}", 2 * i + 1 + j),
                    label,
                    "0.5",
                    exp(1.0),
                    None,
                ));
            }
        }
    }
    let mut blocks = BTreeMap::new();
    blocks.insert("u0".to_string(), stage);
    (
        EventTree::new(vertices, edges, "b0".into()).expect("fixture tree"),
        StagePartition::new(blocks),
    )
}

/// Two situations sharing a stage whose subtrees differ downstream, so they
/// keep separate positions.
pub fn split_stage_tree() -> (EventTree, StagePartition) {
    let vertices: Vec<VertexId> = ["r", "a", "b", "a1", "a2", "b1", "b2", "a1x"]
        .iter()
        .map(|s| VertexId::from(*s))
        .collect();
    let edges = vec![
        edge("r", "a", "x", "0.5", exp(1.0), None),
        edge("r", "b", "y", "0.5", exp(1.0), None),
        edge("a", "a1", "m", "0.6", exp(1.0), None),
        edge("a", "a2", "n", "0.4", exp(1.0), None),
        edge("b", "b1", "m", "0.6", exp(1.0), None),
        edge("b", "b2", "n", "0.4", exp(1.0), None),
        edge("a1", "a1x", "z", "1", exp(1.0), None),
    ];
    let mut blocks = BTreeMap::new();
    blocks.insert("u".to_string(), ["a".into(), "b".into()].into());
    (
        EventTree::new(vertices, edges, "r".into()).expect("fixture tree"),
        StagePartition::new(blocks),
    )
}

/// Brute-force rooted-subtree isomorphism respecting labels, probabilities,
/// stage colours and edge colours, used as an independent check of the
/// hashing route.
pub fn subtrees_isomorphic(
    tree: &EventTree,
    stages: &StagePartition,
    a: &VertexId,
    b: &VertexId,
) -> bool {
    if a == b {
        return true;
    }
    let colour = |v: &VertexId| stages.stage_of(v).map(str::to_string);
    if colour(a) != colour(b) || (colour(a).is_none() && a != b) {
        return false;
    }
    let ea = tree.out_edges(a);
    let eb = tree.out_edges(b);
    if ea.len() != eb.len() {
        return false;
    }
    // Try every pairing of equal-descriptor edges.
    fn matching(tree: &EventTree, stages: &StagePartition, ea: &[usize], eb: &[usize]) -> bool {
        if ea.is_empty() {
            return true;
        }
        let e = &tree.edges()[ea[0]];
        for (i, &cand) in eb.iter().enumerate() {
            let c = &tree.edges()[cand];
            let key = |e: &Edge| {
                (
                    e.label.clone(),
                    format!("{:.12}", e.prob.value()),
                    e.cluster.clone().unwrap_or_else(|| {
                        e.holding
                            .as_ref()
                            .map(|h| h.fingerprint())
                            .unwrap_or_default()
                    }),
                )
            };
            if key(e) != key(c) {
                continue;
            }
            let child_ok = child_iso(tree, stages, &e.to, &c.to);
            if child_ok {
                let mut rest = eb.to_vec();
                rest.remove(i);
                if matching(tree, stages, &ea[1..], &rest) {
                    return true;
                }
            }
        }
        false
    }
    fn child_iso(tree: &EventTree, stages: &StagePartition, a: &VertexId, b: &VertexId) -> bool {
        match (tree.is_leaf(a), tree.is_leaf(b)) {
            (true, true) => true,
            (false, false) => subtrees_isomorphic(tree, stages, a, b),
            _ => false,
        }
    }
    matching(tree, stages, ea, eb)
}

/// Probability of each root-to-leaf label sequence in a tree.
pub fn tree_label_sequence_measure(tree: &EventTree) -> BTreeMap<Vec<String>, f64> {
    let mut out: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    let mut stack: Vec<(&VertexId, Vec<String>, f64)> = vec![(tree.root(), Vec::new(), 1.0)];
    while let Some((v, labels, p)) = stack.pop() {
        if tree.is_leaf(v) {
            *out.entry(labels).or_insert(0.0) += p;
            continue;
        }
        for &i in tree.out_edges(v) {
            let e = &tree.edges()[i];
            let mut next = labels.clone();
            next.push(e.label.clone());
            stack.push((&e.to, next, p * e.prob.value()));
        }
    }
    out
}

/// Probability of each root-to-sink label sequence in a compiled graph.
pub fn ceg_label_sequence_measure(graph: &CegGraph) -> BTreeMap<Vec<String>, f64> {
    let mut out: BTreeMap<Vec<String>, f64> = BTreeMap::new();
    let mut stack: Vec<(VertexId, Vec<String>, f64)> =
        vec![(graph.root().clone(), Vec::new(), 1.0)];
    while let Some((v, labels, p)) = stack.pop() {
        if v == *graph.sink() {
            *out.entry(labels).or_insert(0.0) += p;
            continue;
        }
        for &i in graph.out_edges(&v) {
            let e = &graph.edges()[i];
            let mut next = labels.clone();
            next.push(e.label.clone());
            stack.push((e.to.clone(), next, p * e.prob.value()));
        }
    }
    out
}
