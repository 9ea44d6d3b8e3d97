//! Transporter construction and the two-pass evidence propagation algorithm.
//!
//! Evidence is an intrinsic event, given as the set of retained edges, plus
//! optional absolute transition times. The transporter is the subgraph whose
//! root-to-sink paths are exactly the retained paths; the backward pass
//! computes per-edge t/h-potentials and per-vertex t/h-emphases over it, and
//! the forward pass revises the transition probabilities. Holding-time
//! densities are invariant under compatible evidence and are imported into
//! the revised model unchanged.

use std::collections::{BTreeMap, BTreeSet};

use crate::distributions::{self, GridSpec};
use crate::error::{CegError, Result};
use crate::model::{CegGraph, Decimal, Edge, EdgeId, VertexId};

/// An arrival-time query: the unit reached `vertex` at time `t_star`, and
/// the posterior over the different root-to-vertex routes is wanted.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalQuery {
    pub vertex: VertexId,
    pub t_star: f64,
}

/// Compatible evidence: an intrinsic event (retained edges) plus optional
/// point temporal evidence.
///
/// `times` are absolute transition times measured from arrival at
/// `times_anchor` (the root when unset): entry `i` is the time of the
/// `i+1`-th transition after the anchor, `None` marking an unknown time.
/// Per-vertex holding times are consecutive differences. A times vector of
/// length `d` also asserts that the unit made exactly `d` transitions from
/// the anchor to the sink.
#[derive(Debug, Clone, Default)]
pub struct Evidence {
    pub retained: BTreeSet<EdgeId>,
    pub times: Option<Vec<Option<f64>>>,
    pub times_anchor: Option<VertexId>,
    pub arrival_query: Option<ArrivalQuery>,
}

impl Evidence {
    pub fn from_retained<I: IntoIterator<Item = EdgeId>>(retained: I) -> Self {
        Evidence {
            retained: retained.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Vacuous evidence: every edge retained, no timing.
    pub fn vacuous(graph: &CegGraph) -> Self {
        Evidence::from_retained(graph.edge_ids().iter().cloned())
    }

    pub fn with_times(mut self, times: Vec<Option<f64>>) -> Self {
        self.times = Some(times);
        self
    }

    pub fn with_anchor(mut self, anchor: VertexId) -> Self {
        self.times_anchor = Some(anchor);
        self
    }

    /// Copy without the temporal part (used by arrival-time queries).
    pub fn non_temporal(&self) -> Evidence {
        Evidence {
            retained: self.retained.clone(),
            times: None,
            times_anchor: None,
            arrival_query: None,
        }
    }

    // Times must be nondecreasing: equal consecutive entries express the
    // zero dwell of transitions out of untimed vertices.
    fn check_times(&self) -> Result<()> {
        if let Some(times) = &self.times {
            let mut last = 0.0;
            for (i, t) in times.iter().enumerate() {
                if let Some(t) = t {
                    if !t.is_finite() || *t < 0.0 {
                        return Err(CegError::Parse {
                            path: format!("times[{i}]"),
                            message: "times must be finite and nonnegative".into(),
                        });
                    }
                    if *t < last {
                        return Err(CegError::Parse {
                            path: format!("times[{i}]"),
                            message: "times must be nondecreasing".into(),
                        });
                    }
                    last = *t;
                }
            }
        }
        Ok(())
    }
}

/// Parses an evidence document. Schema: `retained_edges` (array of edge
/// ids), optional `times` (numbers or nulls), optional `times_anchor`,
/// optional `arrival_query` `{vertex, t_star}`.
pub fn load_evidence(text: &str) -> Result<Evidence> {
    let doc: serde_json::Value = serde_json::from_str(text).map_err(|e| CegError::Parse {
        path: "<document>".into(),
        message: e.to_string(),
    })?;
    let obj = doc.as_object().ok_or_else(|| CegError::Parse {
        path: "<document>".into(),
        message: "expected an object".into(),
    })?;

    let retained_val = obj.get("retained_edges").ok_or_else(|| CegError::Parse {
        path: "retained_edges".into(),
        message: "missing".into(),
    })?;
    let arr = retained_val.as_array().ok_or_else(|| CegError::Parse {
        path: "retained_edges".into(),
        message: "expected an array".into(),
    })?;
    let mut retained = BTreeSet::new();
    for (i, v) in arr.iter().enumerate() {
        let s = v.as_str().ok_or_else(|| CegError::Parse {
            path: format!("retained_edges[{i}]"),
            message: "expected a string".into(),
        })?;
        retained.insert(EdgeId(s.to_string()));
    }

    let times = match obj.get("times") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::Array(ts)) => {
            let mut out = Vec::new();
            for (i, t) in ts.iter().enumerate() {
                match t {
                    serde_json::Value::Null => out.push(None),
                    serde_json::Value::Number(n) => out.push(Some(n.as_f64().unwrap())),
                    _ => {
                        return Err(CegError::Parse {
                            path: format!("times[{i}]"),
                            message: "expected a number or null".into(),
                        })
                    }
                }
            }
            Some(out)
        }
        Some(_) => {
            return Err(CegError::Parse {
                path: "times".into(),
                message: "expected an array or null".into(),
            })
        }
    };

    let times_anchor = match obj.get("times_anchor") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::String(s)) => Some(VertexId(s.clone())),
        Some(_) => {
            return Err(CegError::Parse {
                path: "times_anchor".into(),
                message: "expected a string".into(),
            })
        }
    };

    let arrival_query = match obj.get("arrival_query") {
        None | Some(serde_json::Value::Null) => None,
        Some(serde_json::Value::Object(q)) => {
            let vertex =
                q.get("vertex")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| CegError::Parse {
                        path: "arrival_query.vertex".into(),
                        message: "missing".into(),
                    })?;
            let t_star =
                q.get("t_star")
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| CegError::Parse {
                        path: "arrival_query.t_star".into(),
                        message: "missing".into(),
                    })?;
            Some(ArrivalQuery {
                vertex: VertexId(vertex.to_string()),
                t_star,
            })
        }
        Some(_) => {
            return Err(CegError::Parse {
                path: "arrival_query".into(),
                message: "expected an object".into(),
            })
        }
    };

    let evidence = Evidence {
        retained,
        times,
        times_anchor,
        arrival_query,
    };
    evidence.check_times()?;
    Ok(evidence)
}

/// Renders evidence back to deterministic JSON.
pub fn save_evidence(evidence: &Evidence) -> String {
    let times = evidence.times.as_ref().map(|ts| {
        ts.iter()
            .map(|t| match t {
                Some(x) => serde_json::json!(x),
                None => serde_json::Value::Null,
            })
            .collect::<Vec<_>>()
    });
    let value = serde_json::json!({
        "retained_edges": evidence.retained.iter().map(EdgeId::as_str).collect::<Vec<_>>(),
        "times": times,
        "times_anchor": evidence.times_anchor.as_ref().map(VertexId::as_str),
        "arrival_query": evidence.arrival_query.as_ref().map(|q| serde_json::json!({
            "vertex": q.vertex.as_str(),
            "t_star": q.t_star,
        })),
    });
    let mut out = serde_json::to_string_pretty(&value).expect("json rendering cannot fail");
    out.push('\n');
    out
}

fn forward_reach(
    graph: &CegGraph,
    from: &VertexId,
    allowed: &BTreeSet<usize>,
) -> BTreeSet<VertexId> {
    let mut reach = BTreeSet::new();
    let mut stack = vec![from.clone()];
    while let Some(v) = stack.pop() {
        if !reach.insert(v.clone()) {
            continue;
        }
        for &i in graph.out_edges(&v) {
            if allowed.contains(&i) {
                stack.push(graph.edges()[i].to.clone());
            }
        }
    }
    reach
}

fn backward_reach(
    graph: &CegGraph,
    to: &VertexId,
    allowed: &BTreeSet<usize>,
) -> BTreeSet<VertexId> {
    let mut incoming: BTreeMap<&VertexId, Vec<usize>> = BTreeMap::new();
    for &i in allowed {
        incoming.entry(&graph.edges()[i].to).or_default().push(i);
    }
    let mut reach = BTreeSet::new();
    let mut stack = vec![to.clone()];
    while let Some(v) = stack.pop() {
        if !reach.insert(v.clone()) {
            continue;
        }
        if let Some(edges) = incoming.get(&v) {
            for &i in edges {
                stack.push(graph.edges()[i].from.clone());
            }
        }
    }
    reach
}

/// Edges of `allowed` lying on a root-to-sink path within `allowed`.
fn viable_edges(graph: &CegGraph, allowed: &BTreeSet<usize>) -> BTreeSet<usize> {
    let reach = forward_reach(graph, graph.root(), allowed);
    let coreach = backward_reach(graph, graph.sink(), allowed);
    allowed
        .iter()
        .copied()
        .filter(|&i| {
            reach.contains(&graph.edges()[i].from) && coreach.contains(&graph.edges()[i].to)
        })
        .collect()
}

/// Builds the transporter graph: deletes every vertex and edge not on a
/// retained root-to-sink path, and, when transition times are given, also
/// removes paths whose number of transitions from the anchor differs from
/// the number of arrival times.
pub fn build_transporter(graph: &CegGraph, evidence: &Evidence) -> Result<CegGraph> {
    if graph.is_dynamic() {
        return Err(CegError::Structural(
            "transporter construction requires an acyclic graph; unroll first".into(),
        ));
    }
    evidence.check_times()?;

    let mut retained_idx: BTreeSet<usize> = BTreeSet::new();
    for id in &evidence.retained {
        let idx = graph
            .edge_index(id)
            .ok_or_else(|| CegError::UnknownEdge(id.to_string()))?;
        retained_idx.insert(idx);
    }

    // Intrinsic check: every retained edge must lie on some retained
    // root-to-sink path, i.e. the retained set equals the edge set of its
    // own path closure.
    let viable = viable_edges(graph, &retained_idx);
    if viable.is_empty() {
        return Err(CegError::Contradiction(
            "no retained root-to-sink path".into(),
        ));
    }
    let dangling: Vec<String> = retained_idx
        .difference(&viable)
        .map(|&i| graph.edge_ids()[i].to_string())
        .collect();
    if !dangling.is_empty() {
        return Err(CegError::NonIntrinsicEvidence(dangling));
    }

    let kept = match &evidence.times {
        None => viable,
        Some(times) => {
            let anchor = evidence
                .times_anchor
                .clone()
                .unwrap_or_else(|| graph.root().clone());
            if !graph.vertices().contains(&anchor) {
                return Err(CegError::UnknownVertex(anchor.to_string()));
            }
            let d = times.len();
            filter_by_length(graph, &viable, &anchor, d)?
        }
    };
    graph.restrict_to_edges(&kept)
}

/// Keeps edges on root-to-sink paths that pass through `anchor` and make
/// exactly `d` transitions between the anchor and the sink.
fn filter_by_length(
    graph: &CegGraph,
    viable: &BTreeSet<usize>,
    anchor: &VertexId,
    d: usize,
) -> Result<BTreeSet<usize>> {
    // Upstream: edges on a root-to-anchor path.
    let reach_root = forward_reach(graph, graph.root(), viable);
    let to_anchor = backward_reach(graph, anchor, viable);
    if !reach_root.contains(anchor) {
        return Err(CegError::Contradiction(format!(
            "anchor {anchor} is not reachable under the evidence"
        )));
    }
    let upstream: BTreeSet<usize> = viable
        .iter()
        .copied()
        .filter(|&i| {
            reach_root.contains(&graph.edges()[i].from) && to_anchor.contains(&graph.edges()[i].to)
        })
        .collect();

    // layers_from[i]: vertices exactly i transitions after the anchor.
    let mut layers_from: Vec<BTreeSet<VertexId>> = vec![[anchor.clone()].into_iter().collect()];
    for i in 0..d {
        let mut next = BTreeSet::new();
        for v in &layers_from[i] {
            for &e in graph.out_edges(v) {
                if viable.contains(&e) {
                    next.insert(graph.edges()[e].to.clone());
                }
            }
        }
        layers_from.push(next);
    }
    // layers_to[j]: vertices exactly j transitions before the sink.
    let mut incoming: BTreeMap<&VertexId, Vec<usize>> = BTreeMap::new();
    for &i in viable {
        incoming.entry(&graph.edges()[i].to).or_default().push(i);
    }
    let mut layers_to: Vec<BTreeSet<VertexId>> = vec![[graph.sink().clone()].into_iter().collect()];
    for j in 0..d {
        let mut prev = BTreeSet::new();
        for v in &layers_to[j] {
            if let Some(edges) = incoming.get(v) {
                for &e in edges {
                    prev.insert(graph.edges()[e].from.clone());
                }
            }
        }
        layers_to.push(prev);
    }

    let mut kept = upstream;
    for &i in viable {
        let e = &graph.edges()[i];
        for step in 0..d {
            if layers_from[step].contains(&e.from) && layers_to[d - step - 1].contains(&e.to) {
                kept.insert(i);
                break;
            }
        }
    }
    let final_set = viable_edges(graph, &kept);
    if final_set.is_empty() {
        return Err(CegError::Contradiction(format!(
            "no retained path makes exactly {d} transitions from {anchor} to the sink"
        )));
    }
    Ok(final_set)
}

/// Per-vertex holding time derived from the evidence times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Hold {
    Known(f64),
    Unknown,
}

/// Operation counts of one propagation run. Potentials count one operation
/// per edge handled in the backward pass (including zero assignments);
/// emphases count one per accommodated vertex plus one for the sink
/// initialization; revised probabilities count only the transporter edges.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub t_potentials: usize,
    pub h_potentials: usize,
    pub t_emphases: usize,
    pub h_emphases: usize,
    pub revised: usize,
}

impl OpCount {
    pub fn total(&self) -> usize {
        self.t_potentials + self.h_potentials + self.t_emphases + self.h_emphases + self.revised
    }
}

impl std::fmt::Display for OpCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "ops={} (t_potentials={} h_potentials={} t_emphases={} h_emphases={} revised={})",
            self.total(),
            self.t_potentials,
            self.h_potentials,
            self.t_emphases,
            self.h_emphases,
            self.revised
        )
    }
}

/// Bookkeeping of one propagation run: potentials, emphases, derived holding
/// times, accommodation order and operation counts.
#[derive(Debug, Clone, Default)]
pub struct PropagationState {
    pub t_potential: BTreeMap<EdgeId, f64>,
    pub h_potential: BTreeMap<EdgeId, f64>,
    pub t_emphasis: BTreeMap<VertexId, f64>,
    pub h_emphasis: BTreeMap<VertexId, f64>,
    pub holds: BTreeMap<VertexId, Hold>,
    pub accommodated: Vec<VertexId>,
    /// Vertices all of whose outgoing edges terminate in the sink.
    pub pre_sink: BTreeSet<VertexId>,
    pub ops: OpCount,
}

/// The transporter graph re-parameterized with the revised transition
/// probabilities; holding specs are imported unchanged.
#[derive(Debug, Clone)]
pub struct RevisedModel {
    pub transporter: CegGraph,
    pub revised: BTreeMap<EdgeId, f64>,
}

/// Derives per-vertex holds from the evidence. Vertices downstream of the
/// anchor take consecutive differences of the absolute times; everything
/// else, untimed vertices included, is `Unknown`. Each transporter vertex
/// must sit at a unique depth from the anchor when times are present.
fn derive_holds(transporter: &CegGraph, evidence: &Evidence) -> Result<BTreeMap<VertexId, Hold>> {
    let mut holds: BTreeMap<VertexId, Hold> = BTreeMap::new();
    for v in transporter.positions() {
        holds.insert(v.clone(), Hold::Unknown);
    }
    let Some(times) = &evidence.times else {
        return Ok(holds);
    };
    let anchor = evidence
        .times_anchor
        .clone()
        .unwrap_or_else(|| transporter.root().clone());
    // Unique depth per vertex downstream of the anchor.
    let mut depth: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut frontier: BTreeSet<VertexId> = [anchor.clone()].into_iter().collect();
    let mut level = 0usize;
    while !frontier.is_empty() {
        let mut next = BTreeSet::new();
        for v in &frontier {
            if v == transporter.sink() {
                continue;
            }
            if let Some(prev) = depth.insert(v.clone(), level) {
                if prev != level {
                    return Err(CegError::Structural(format!(
                        "vertex {v} is reachable at depths {prev} and {level} from {anchor}; \
                         arrival times are ambiguous"
                    )));
                }
            }
            for &i in transporter.out_edges(v) {
                next.insert(transporter.edges()[i].to.clone());
            }
        }
        frontier = next;
        level += 1;
        if level > transporter.vertices().len() + 1 {
            break;
        }
    }
    for (v, i) in depth {
        if transporter.is_untimed(&v) {
            continue;
        }
        if i >= times.len() {
            continue;
        }
        let arrive = if i == 0 { Some(0.0) } else { times[i - 1] };
        let depart = times[i];
        if let (Some(a), Some(d)) = (arrive, depart) {
            holds.insert(v, Hold::Known(d - a));
        }
    }
    Ok(holds)
}

/// A finished propagation run whose vertices count as accommodated when the
/// window is extended upstream: their potentials, emphases and revised
/// probabilities are reused verbatim instead of being recomputed.
#[derive(Debug, Clone, Copy)]
pub struct PriorRun<'a> {
    pub state: &'a PropagationState,
    pub revised: &'a BTreeMap<EdgeId, f64>,
}

/// Runs the two-pass propagation algorithm over the transporter.
///
/// Backward pass, in reverse topological order over the subgraph of `graph`
/// induced by the transporter's vertices: transporter edges get
/// `tau_e = pi_e * Phi(target)` and `tau^t_e = pi^t_e(t_w)` (one where the
/// holding time is unknown or the vertex untimed); induced non-transporter
/// edges get zero. Emphases are the sums `Phi(w) = sum tau_e` and
/// `Phi^t(w) = sum tau_e tau^t_e`. Forward pass: each transporter edge gets
/// `pi-hat_e = tau_e tau^t_e / Phi^t(w)`.
pub fn propagate(
    graph: &CegGraph,
    transporter: &CegGraph,
    evidence: &Evidence,
) -> Result<(PropagationState, RevisedModel)> {
    propagate_with_prior(graph, transporter, evidence, None)
}

/// `propagate`, reusing a prior run's results for vertices it already
/// accommodated. Only new vertices and their edges are computed and counted.
pub fn propagate_with_prior(
    graph: &CegGraph,
    transporter: &CegGraph,
    evidence: &Evidence,
    prior: Option<PriorRun<'_>>,
) -> Result<(PropagationState, RevisedModel)> {
    let mut state = PropagationState {
        holds: derive_holds(transporter, evidence)?,
        ..Default::default()
    };

    let tset: BTreeSet<&VertexId> = transporter.vertices().iter().collect();
    let t_edges: BTreeSet<&EdgeId> = transporter.edge_ids().iter().collect();

    // Sink initialization counts as one emphasis operation of each kind,
    // except when it was already initialized by the prior run.
    state.t_emphasis.insert(transporter.sink().clone(), 1.0);
    state.h_emphasis.insert(transporter.sink().clone(), 1.0);
    if prior.is_none() {
        state.ops.t_emphases += 1;
        state.ops.h_emphases += 1;
    }

    if let Some(p) = prior {
        state
            .t_potential
            .extend(p.state.t_potential.iter().map(|(k, v)| (k.clone(), *v)));
        state
            .h_potential
            .extend(p.state.h_potential.iter().map(|(k, v)| (k.clone(), *v)));
        state
            .t_emphasis
            .extend(p.state.t_emphasis.iter().map(|(k, v)| (k.clone(), *v)));
        state
            .h_emphasis
            .extend(p.state.h_emphasis.iter().map(|(k, v)| (k.clone(), *v)));
    }

    let order = transporter.topo_order()?;
    for w in order.iter().rev() {
        if w == transporter.sink() {
            continue;
        }
        if prior
            .map(|p| p.state.t_emphasis.contains_key(w))
            .unwrap_or(false)
        {
            continue;
        }
        let hold = state.holds.get(w).copied().unwrap_or(Hold::Unknown);
        let mut phi = 0.0;
        let mut phi_t = 0.0;
        // Edges of the original graph between surviving vertices; membership
        // in the transporter decides formula versus zero.
        for &i in graph.out_edges(w) {
            let (id, edge) = graph.edge(i);
            if !tset.contains(&edge.to) {
                continue; // deleted limb of the graph
            }
            let (tau, tau_t) = if t_edges.contains(id) {
                let phi_child = *state.t_emphasis.get(&edge.to).ok_or_else(|| {
                    CegError::Structural(format!("child {} not accommodated", edge.to))
                })?;
                let tau = edge.prob.value() * phi_child;
                let tau_t = h_potential(transporter, edge, id, w, hold)?;
                (tau, tau_t)
            } else {
                (0.0, 0.0)
            };
            state.ops.t_potentials += 1;
            state.ops.h_potentials += 1;
            state.t_potential.insert(id.clone(), tau);
            state.h_potential.insert(id.clone(), tau_t);
            phi += tau;
            phi_t += tau * tau_t;
        }
        state.ops.t_emphases += 1;
        state.ops.h_emphases += 1;
        if phi_t == 0.0 || phi == 0.0 {
            return Err(CegError::ZeroSupport(format!(
                "emphasis vanished at vertex {w}"
            )));
        }
        state.t_emphasis.insert(w.clone(), phi);
        state.h_emphasis.insert(w.clone(), phi_t);
        state.accommodated.push(w.clone());
    }

    // W(-1): transporter vertices all of whose outgoing edges hit the sink.
    for w in transporter.positions() {
        let idxs = transporter.out_edges(w);
        if !idxs.is_empty()
            && idxs
                .iter()
                .all(|&i| transporter.edges()[i].to == *transporter.sink())
        {
            state.pre_sink.insert(w.clone());
        }
    }

    // Forward pass: revised probabilities on transporter edges only. Edges
    // already revised by the prior run keep their values.
    let mut revised: BTreeMap<EdgeId, f64> = BTreeMap::new();
    let mut edges = Vec::with_capacity(transporter.edges().len());
    for (i, e) in transporter.edges().iter().enumerate() {
        let id = &transporter.edge_ids()[i];
        let hat = match prior.and_then(|p| p.revised.get(id)) {
            Some(prev) => *prev,
            None => {
                let phi_t = state.h_emphasis[&e.from];
                state.ops.revised += 1;
                state.t_potential[id] * state.h_potential[id] / phi_t
            }
        };
        revised.insert(id.clone(), hat);
        edges.push(Edge {
            prob: Decimal::from_f64(hat),
            ..e.clone()
        });
    }
    let revised_graph = CegGraph::new(
        transporter.vertices().to_vec(),
        edges,
        transporter.root().clone(),
        transporter.sink().clone(),
        BTreeSet::new(),
        transporter.untimed_vertices().clone(),
        transporter.slice_of().clone(),
        transporter.stage_of().clone(),
    )?;

    Ok((
        state,
        RevisedModel {
            transporter: revised_graph,
            revised,
        },
    ))
}

fn h_potential(
    graph: &CegGraph,
    edge: &Edge,
    id: &EdgeId,
    w: &VertexId,
    hold: Hold,
) -> Result<f64> {
    if graph.is_untimed(w) {
        return Ok(1.0);
    }
    match hold {
        Hold::Unknown => Ok(1.0),
        Hold::Known(t) => {
            let spec = edge.holding.as_ref().ok_or_else(|| {
                CegError::IncompleteModel(format!(
                    "edge {id} needs a holding spec to use the observed time"
                ))
            })?;
            Ok(distributions::density(spec, t))
        }
    }
}

/// A root-to-sink path of the revised model with its posterior probability.
#[derive(Debug, Clone)]
pub struct PathPosterior {
    pub edges: Vec<EdgeId>,
    pub labels: Vec<String>,
    pub probability: f64,
}

/// Posterior probability of every transporter root-to-sink path: the product
/// of revised edge probabilities along it, enumerated in depth-first order.
pub fn path_posteriors(revised: &RevisedModel) -> Vec<PathPosterior> {
    let graph = &revised.transporter;
    let mut out = Vec::new();
    let mut stack: Vec<(VertexId, Vec<usize>, f64)> = vec![(graph.root().clone(), Vec::new(), 1.0)];
    while let Some((v, prefix, p)) = stack.pop() {
        if v == *graph.sink() {
            out.push(PathPosterior {
                edges: prefix
                    .iter()
                    .map(|&i| graph.edge_ids()[i].clone())
                    .collect(),
                labels: prefix
                    .iter()
                    .map(|&i| graph.edges()[i].label.clone())
                    .collect(),
                probability: p,
            });
            continue;
        }
        // Reverse order so the leftmost edge is explored first.
        for &i in graph.out_edges(&v).iter().rev() {
            let e = &graph.edges()[i];
            let mut next = prefix.clone();
            next.push(i);
            stack.push((
                e.to.clone(),
                next,
                p * revised.revised[&graph.edge_ids()[i]],
            ));
        }
    }
    out
}

/// A root-to-vertex route with its arrival-time posterior.
#[derive(Debug, Clone)]
pub struct ArrivalPathPosterior {
    pub edges: Vec<EdgeId>,
    pub labels: Vec<String>,
    pub arrival_density: f64,
    pub probability: f64,
}

/// Posterior over the routes from the root to the queried vertex given that
/// the unit arrived there at `t_star`: each route is weighted by the
/// convolved holding density of its timed edges evaluated at `t_star`, times
/// the revised probability of the route under the non-temporal evidence.
pub fn arrival_time_path_posterior(
    graph: &CegGraph,
    evidence: &Evidence,
    grid: &GridSpec,
) -> Result<Vec<ArrivalPathPosterior>> {
    let query = evidence.arrival_query.clone().ok_or_else(|| {
        CegError::Structural("arrival-time posterior needs an arrival_query".into())
    })?;
    if query.t_star < 0.0 {
        return Err(CegError::Structural("t_star must be nonnegative".into()));
    }
    let transporter = build_transporter(graph, &evidence.non_temporal())?;
    if !transporter.vertices().contains(&query.vertex) {
        return Err(CegError::Contradiction(format!(
            "vertex {} is unreachable under the evidence",
            query.vertex
        )));
    }

    // Restrict to paths through the queried vertex.
    let all: BTreeSet<usize> = (0..transporter.edges().len()).collect();
    let to_w = backward_reach(&transporter, &query.vertex, &all);
    let from_w = forward_reach(&transporter, &query.vertex, &all);
    let keep: BTreeSet<usize> = all
        .iter()
        .copied()
        .filter(|&i| {
            let e = &transporter.edges()[i];
            to_w.contains(&e.to) || from_w.contains(&e.from)
        })
        .collect();
    let keep = viable_edges(&transporter, &keep);
    let restricted = transporter.restrict_to_edges(&keep)?;

    let nontemporal = Evidence::from_retained(restricted.edge_ids().iter().cloned());
    let (_, revised) = propagate(&restricted, &restricted, &nontemporal)?;

    // Enumerate root-to-vertex prefixes.
    let rgraph = &revised.transporter;
    let mut prefixes: Vec<Vec<usize>> = Vec::new();
    let mut stack: Vec<(VertexId, Vec<usize>)> = vec![(rgraph.root().clone(), Vec::new())];
    while let Some((v, prefix)) = stack.pop() {
        if v == query.vertex {
            prefixes.push(prefix);
            continue;
        }
        for &i in rgraph.out_edges(&v).iter().rev() {
            let mut next = prefix.clone();
            next.push(i);
            stack.push((rgraph.edges()[i].to.clone(), next));
        }
    }
    if prefixes.is_empty() {
        return Err(CegError::Contradiction(format!(
            "no route reaches {}",
            query.vertex
        )));
    }

    let mut rows = Vec::new();
    let mut total = 0.0;
    for prefix in &prefixes {
        let mut specs = Vec::new();
        let mut weight = 1.0;
        for &i in prefix {
            let (id, e) = rgraph.edge(i);
            weight *= revised.revised[id];
            if !rgraph.is_untimed(&e.from) {
                let spec = e.holding.clone().ok_or_else(|| {
                    CegError::IncompleteModel(format!(
                        "edge {id} needs a holding spec for the arrival-time query"
                    ))
                })?;
                specs.push(spec);
            }
        }
        let density = if specs.is_empty() {
            return Err(CegError::IncompleteModel(format!(
                "route to {} has no timed edge; its arrival time is not modelled",
                query.vertex
            )));
        } else {
            distributions::convolve(&specs, grid)?.value_at(query.t_star)
        };
        total += density * weight;
        rows.push(ArrivalPathPosterior {
            edges: prefix
                .iter()
                .map(|&i| rgraph.edge_ids()[i].clone())
                .collect(),
            labels: prefix
                .iter()
                .map(|&i| rgraph.edges()[i].label.clone())
                .collect(),
            arrival_density: density,
            probability: density * weight,
        });
    }
    if total == 0.0 {
        return Err(CegError::ZeroSupport(format!(
            "every route density vanishes at t* = {}",
            query.t_star
        )));
    }
    for row in &mut rows {
        row.probability /= total;
    }
    Ok(rows)
}
