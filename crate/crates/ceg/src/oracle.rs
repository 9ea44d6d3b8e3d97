//! Brute-force and Monte Carlo verification of the engine's inferences.
//!
//! Everything here recomputes quantities by direct summation over
//! exhaustively enumerated paths, with no sharing of the message-passing
//! code paths, so agreement is meaningful. The random model generator keeps
//! trees small enough (depth <= 6, branching <= 3) for exact enumeration
//! while still exercising position merging, every distribution family,
//! untimed vertices and gap-ridden time vectors.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::distributions::{density, sample_holding};
use crate::error::{CegError, Result};
use crate::model::{
    CegGraph, Decimal, Edge, EdgeId, EventTree, HoldingTimeSpec, StagePartition, TimedPath,
    TimedStep, VertexId,
};
use crate::propagation::{build_transporter, Evidence, Hold};
use crate::staging::{compile_ceg_detailed, compute_positions, Compiled};

/// One enumerated root-to-sink path.
#[derive(Debug, Clone)]
pub struct PathRow {
    pub id: usize,
    /// Edge indices into the graph.
    pub edges: Vec<usize>,
    pub edge_ids: Vec<EdgeId>,
    /// Source vertex of each step.
    pub sources: Vec<VertexId>,
    /// Holding spec of each step; `None` at untimed or unspecified steps.
    pub holdings: Vec<Option<HoldingTimeSpec>>,
    pub prior: f64,
}

/// Exhaustive table of root-to-sink paths.
#[derive(Debug, Clone)]
pub struct PathTable {
    pub rows: Vec<PathRow>,
}

/// Depth-first enumeration of every root-to-sink path; fails fast past the
/// bound.
pub fn enumerate_paths(graph: &CegGraph, max_paths: usize) -> Result<PathTable> {
    if graph.is_dynamic() {
        return Err(CegError::Structural(
            "path enumeration requires an acyclic graph".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut stack: Vec<(VertexId, Vec<usize>, f64)> = vec![(graph.root().clone(), Vec::new(), 1.0)];
    while let Some((v, prefix, p)) = stack.pop() {
        if v == *graph.sink() {
            if rows.len() >= max_paths {
                return Err(CegError::Capacity { limit: max_paths });
            }
            rows.push(PathRow {
                id: rows.len(),
                edge_ids: prefix
                    .iter()
                    .map(|&i| graph.edge_ids()[i].clone())
                    .collect(),
                sources: prefix
                    .iter()
                    .map(|&i| graph.edges()[i].from.clone())
                    .collect(),
                holdings: prefix
                    .iter()
                    .map(|&i| {
                        let e = &graph.edges()[i];
                        if graph.is_untimed(&e.from) {
                            None
                        } else {
                            e.holding.clone()
                        }
                    })
                    .collect(),
                edges: prefix,
                prior: p,
            });
            continue;
        }
        for &i in graph.out_edges(&v).iter().rev() {
            let e = &graph.edges()[i];
            let mut next = prefix.clone();
            next.push(i);
            stack.push((e.to.clone(), next, p * e.prob.value()));
        }
    }
    Ok(PathTable { rows })
}

/// Everything `posterior_by_enumeration` derives from the table.
#[derive(Debug, Clone)]
pub struct EnumerationPosterior {
    /// Local revised probability per transporter edge,
    /// `pi(edge | event, holding time at its source, source reached)`.
    pub edge_posteriors: BTreeMap<EdgeId, f64>,
    /// Chain-law posterior of each retained path (row id keyed).
    pub path_posteriors: BTreeMap<usize, f64>,
    /// Suffix-mass emphases per transporter vertex.
    pub t_emphasis: BTreeMap<VertexId, f64>,
    pub h_emphasis: BTreeMap<VertexId, f64>,
}

fn row_matches(
    row: &PathRow,
    retained: &BTreeSet<EdgeId>,
    evidence: &Evidence,
    anchor: &VertexId,
) -> bool {
    if !row.edge_ids.iter().all(|e| retained.contains(e)) {
        return false;
    }
    if let Some(times) = &evidence.times {
        let Some(pos) = row.sources.iter().position(|v| v == anchor) else {
            return false;
        };
        if row.edges.len() - pos != times.len() {
            return false;
        }
    }
    true
}

/// Holding time at a step `rel` transitions after the anchor.
fn hold_at(times: &Option<Vec<Option<f64>>>, rel: usize) -> Hold {
    let Some(times) = times else {
        return Hold::Unknown;
    };
    if rel >= times.len() {
        return Hold::Unknown;
    }
    let arrive = if rel == 0 { Some(0.0) } else { times[rel - 1] };
    match (arrive, times[rel]) {
        (Some(a), Some(d)) => Hold::Known(d - a),
        _ => Hold::Unknown,
    }
}

/// Applies Bayes rule directly over the enumerated timed paths: every
/// retained path is weighted by its transition probabilities and the local
/// holding densities; edge posteriors are the vertex-local conditionals and
/// path posteriors follow the chain law over them.
pub fn posterior_by_enumeration(
    graph: &CegGraph,
    table: &PathTable,
    evidence: &Evidence,
) -> Result<EnumerationPosterior> {
    let anchor = evidence
        .times_anchor
        .clone()
        .unwrap_or_else(|| graph.root().clone());
    let retained = &evidence.retained;

    let rows: Vec<&PathRow> = table
        .rows
        .iter()
        .filter(|r| row_matches(r, retained, evidence, &anchor))
        .collect();
    if rows.is_empty() {
        return Err(CegError::ZeroSupport("no retained path".into()));
    }

    // Hold per vertex, taken from the per-row step offsets. A vertex seen
    // at two different depths would have two holding times; reject that as
    // the engine does.
    let mut holds: BTreeMap<VertexId, Hold> = BTreeMap::new();
    for row in &rows {
        let anchor_pos = row.sources.iter().position(|v| v == &anchor);
        for (step, v) in row.sources.iter().enumerate() {
            let hold = match anchor_pos {
                Some(p) if step >= p && !graph.is_untimed(v) => hold_at(&evidence.times, step - p),
                _ => Hold::Unknown,
            };
            if let Some(prev) = holds.insert(v.clone(), hold) {
                if prev != hold {
                    return Err(CegError::Structural(format!(
                        "vertex {v} appears at ambiguous depths; arrival times are not well defined"
                    )));
                }
            }
        }
    }

    let local_density = |edge_idx: usize| -> Result<f64> {
        let (id, e) = graph.edge(edge_idx);
        match holds.get(&e.from).copied().unwrap_or(Hold::Unknown) {
            Hold::Unknown => Ok(1.0),
            Hold::Known(t) => {
                let spec = e.holding.as_ref().ok_or_else(|| {
                    CegError::IncompleteModel(format!("edge {id} needs a holding spec"))
                })?;
                Ok(density(spec, t))
            }
        }
    };

    // Vertex-local conditionals by direct summation.
    let mut through_edge: BTreeMap<usize, f64> = BTreeMap::new();
    for row in &rows {
        for &i in &row.edges {
            *through_edge.entry(i).or_insert(0.0) += row.prior;
        }
    }
    let mut edge_posteriors = BTreeMap::new();
    let mut vertex_edges: BTreeMap<&VertexId, Vec<usize>> = BTreeMap::new();
    for &i in through_edge.keys() {
        vertex_edges
            .entry(&graph.edges()[i].from)
            .or_default()
            .push(i);
    }
    for edge_idxs in vertex_edges.values() {
        let mut weights = Vec::new();
        let mut total = 0.0;
        for &i in edge_idxs {
            let w = through_edge[&i] * local_density(i)?;
            weights.push((i, w));
            total += w;
        }
        if total == 0.0 {
            return Err(CegError::ZeroSupport("local conditional vanished".into()));
        }
        for (i, w) in weights {
            edge_posteriors.insert(graph.edge_ids()[i].clone(), w / total);
        }
    }

    // Chain-law path posteriors.
    let mut path_posteriors = BTreeMap::new();
    for row in &rows {
        let p: f64 = row.edge_ids.iter().map(|id| edge_posteriors[id]).product();
        path_posteriors.insert(row.id, p);
    }

    // Suffix-mass emphases over the retained structure: for every vertex on
    // a retained path, Phi(w) is the total transition probability of the
    // retained suffixes from w, and Phi^t(w) additionally weighs each suffix
    // by the density of its first step at the observed holding time.
    let mut t_emphasis: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut h_emphasis: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut vertices: BTreeSet<&VertexId> = BTreeSet::new();
    for row in &rows {
        for v in &row.sources {
            vertices.insert(v);
        }
    }
    // Deduplicated suffix sets per vertex (paths can share suffixes).
    for v in vertices {
        let mut suffixes: BTreeSet<Vec<usize>> = BTreeSet::new();
        for row in &rows {
            if let Some(pos) = row.sources.iter().position(|s| s == v) {
                suffixes.insert(row.edges[pos..].to_vec());
            }
        }
        let mut phi = 0.0;
        let mut phi_t = 0.0;
        for suffix in suffixes {
            let mass: f64 = suffix
                .iter()
                .map(|&i| graph.edges()[i].prob.value())
                .product();
            phi += mass;
            phi_t += mass * local_density(suffix[0])?;
        }
        t_emphasis.insert(v.clone(), phi);
        h_emphasis.insert(v.clone(), phi_t);
    }

    Ok(EnumerationPosterior {
        edge_posteriors,
        path_posteriors,
        t_emphasis,
        h_emphasis,
    })
}

/// The appendix-style emphasis conditionals evaluated on the underlying
/// tree: for a representative situation of a position, the probability that
/// the intrinsic event (and, for the h-variant, the observed holding time)
/// occurs given that the unit reached the situation.
pub struct TreeEmphasisOracle<'a> {
    tree: &'a EventTree,
    compiled: &'a Compiled,
    retained: BTreeSet<EdgeId>,
    times: Option<Vec<Option<f64>>>,
}

impl<'a> TreeEmphasisOracle<'a> {
    pub fn new(tree: &'a EventTree, compiled: &'a Compiled, evidence: &Evidence) -> Self {
        TreeEmphasisOracle {
            tree,
            compiled,
            retained: evidence.retained.clone(),
            times: evidence.times.clone(),
        }
    }

    fn tree_paths(&self) -> Vec<(Vec<usize>, f64)> {
        let mut out = Vec::new();
        let mut stack: Vec<(&VertexId, Vec<usize>, f64)> =
            vec![(self.tree.root(), Vec::new(), 1.0)];
        while let Some((v, prefix, p)) = stack.pop() {
            if self.tree.is_leaf(v) {
                out.push((prefix, p));
                continue;
            }
            for &i in self.tree.out_edges(v).iter().rev() {
                let mut next = prefix.clone();
                next.push(i);
                stack.push((
                    &self.tree.edges()[i].to,
                    next,
                    p * self.tree.edges()[i].prob.value(),
                ));
            }
        }
        out
    }

    fn image_retained(&self, tree_edge: usize) -> bool {
        let tid = &self.tree.edge_ids()[tree_edge];
        self.retained.contains(&self.compiled.edge_map[tid])
    }

    fn row_retained(&self, edges: &[usize]) -> bool {
        if !edges.iter().all(|&i| self.image_retained(i)) {
            return false;
        }
        match &self.times {
            None => true,
            Some(times) => edges.len() == times.len(),
        }
    }

    /// `(t-emphasis, h-emphasis)` conditionals at a representative situation
    /// `v_j`, or None when its root path is not retained (the copy lies
    /// outside the transporter's tree).
    pub fn emphases_at(&self, v_j: &VertexId, graph: &CegGraph) -> Option<(f64, f64)> {
        let position = self
            .compiled
            .members
            .iter()
            .find(|(_, members)| members.contains(v_j))
            .map(|(p, _)| p.clone())?;
        let untimed = graph.is_untimed(&position);

        let mut through = 0.0;
        let mut retained_through = 0.0;
        let mut retained_timed = 0.0;
        let mut seen = false;
        for (edges, prior) in &self.tree_paths() {
            let Some(step) = edges
                .iter()
                .position(|&i| self.tree.edges()[i].from == *v_j)
            else {
                continue;
            };
            // The root path of v_j is unique in a tree; if it is not
            // retained, v_j is outside the transporter's tree entirely.
            if !edges[..step].iter().all(|&i| self.image_retained(i)) {
                return None;
            }
            seen = true;
            through += prior;
            if self.row_retained(edges) {
                retained_through += prior;
                let e = &self.tree.edges()[edges[step]];
                let f = match hold_at(&self.times, step) {
                    Hold::Known(t) if !untimed => {
                        e.holding.as_ref().map(|s| density(s, t)).unwrap_or(1.0)
                    }
                    _ => 1.0,
                };
                retained_timed += prior * f;
            }
        }
        if !seen || through == 0.0 {
            return None;
        }
        Some((retained_through / through, retained_timed / through))
    }
}

/// Deterministic per-trajectory RNG stream.
pub fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    // splitmix64 mix of seed and index keeps the streams decorrelated.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn sample_path<R: Rng>(graph: &CegGraph, rng: &mut R) -> TimedPath {
    let mut steps = Vec::new();
    let mut v = graph.root().clone();
    while v != *graph.sink() {
        let idxs = graph.out_edges(&v);
        let mut u: f64 = rng.gen();
        let mut chosen = idxs[idxs.len() - 1];
        for &i in idxs {
            u -= graph.edges()[i].prob.value();
            if u <= 0.0 {
                chosen = i;
                break;
            }
        }
        let e = &graph.edges()[chosen];
        let hold = match (&e.holding, graph.is_untimed(&v)) {
            (Some(spec), false) => sample_holding(spec, rng),
            _ => 0.0,
        };
        steps.push(TimedStep {
            vertex: v.clone(),
            edge: graph.edge_ids()[chosen].clone(),
            hold,
        });
        v = e.to.clone();
    }
    TimedPath { steps }
}

/// Draws `n` independent timed root-to-sink trajectories from an acyclic
/// graph. Deterministic given the seed, and identical with and without the
/// `parallel` feature because every trajectory owns its own stream.
pub fn simulate(graph: &CegGraph, n: usize, seed: u64) -> Result<Vec<TimedPath>> {
    if graph.is_dynamic() {
        return Err(CegError::Structural(
            "simulate on the template requires simulate_dynamic".into(),
        ));
    }
    Ok(crate::par::map_indexed(n, |i| {
        sample_path(graph, &mut stream_rng(seed, i))
    }))
}

/// Sequential twin of [`simulate`], kept unconditionally for differential
/// benchmarks.
pub fn simulate_sequential(graph: &CegGraph, n: usize, seed: u64) -> Result<Vec<TimedPath>> {
    if graph.is_dynamic() {
        return Err(CegError::Structural(
            "simulate on the template requires simulate_dynamic".into(),
        ));
    }
    Ok((0..n as u64)
        .map(|i| sample_path(graph, &mut stream_rng(seed, i)))
        .collect())
}

/// One step of a trajectory through a dynamic template: vertex left, edge
/// taken, holding time, passage-slice index at departure.
#[derive(Debug, Clone)]
pub struct DynamicStep {
    pub vertex: VertexId,
    pub edge: EdgeId,
    pub hold: f64,
    pub slice: u32,
}

/// Draws trajectories from a dynamic template, following cyclic edges into
/// the next passage-slice until the sink absorbs the unit (or `max_steps`
/// truncates a pathological walk).
pub fn simulate_dynamic(
    graph: &CegGraph,
    n: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<Vec<DynamicStep>>> {
    if !graph.is_dynamic() {
        return Err(CegError::Structural(
            "simulate_dynamic requires cyclic edges".into(),
        ));
    }
    let walk = |mut rng: ChaCha8Rng| -> Vec<DynamicStep> {
        let mut steps = Vec::new();
        let mut v = graph.root().clone();
        let mut slice = 1u32;
        while v != *graph.sink() && steps.len() < max_steps {
            let idxs = graph.out_edges(&v);
            let mut u: f64 = rng.gen();
            let mut chosen = idxs[idxs.len() - 1];
            for &i in idxs {
                u -= graph.edges()[i].prob.value();
                if u <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            let e = &graph.edges()[chosen];
            let id = graph.edge_ids()[chosen].clone();
            let hold = match (&e.holding, graph.is_untimed(&v)) {
                (Some(spec), false) => sample_holding(spec, &mut rng),
                _ => 0.0,
            };
            let cyclic = graph.cyclic_edges().contains(&id);
            steps.push(DynamicStep {
                vertex: v.clone(),
                edge: id,
                hold,
                slice,
            });
            if cyclic {
                slice += 1;
            }
            v = e.to.clone();
        }
        steps
    };
    Ok(crate::par::map_indexed(n, |i| walk(stream_rng(seed, i))))
}

// ---------------------------------------------------------------------------
// Random model corpus
// ---------------------------------------------------------------------------

/// A generated model with everything the differential tests need.
pub struct CorpusModel {
    pub tree: EventTree,
    pub stages: StagePartition,
    pub compiled: Compiled,
    pub graph: CegGraph,
    pub evidence: Evidence,
}

fn random_spec(rng: &mut ChaCha8Rng) -> HoldingTimeSpec {
    match rng.gen_range(0..3) {
        0 => HoldingTimeSpec::exponential_rate(rng.gen_range(0.3..3.0)),
        1 => HoldingTimeSpec::normal(rng.gen_range(3.0..10.0), rng.gen_range(0.5..2.0)),
        _ => {
            HoldingTimeSpec::weibull_shape_scale(rng.gen_range(1.1..3.0), rng.gen_range(2.0..20.0))
        }
    }
}

struct TreeBuilder {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
    counter: usize,
}

impl TreeBuilder {
    fn fresh(&mut self) -> VertexId {
        let v = VertexId(format!("n{}", self.counter));
        self.counter += 1;
        self.vertices.push(v.clone());
        v
    }

    fn grow(&mut self, parent: &VertexId, depth_left: usize, rng: &mut ChaCha8Rng) {
        if depth_left == 0 {
            return;
        }
        let k = rng.gen_range(1..=3usize);
        let mut probs: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        for (j, p) in probs.into_iter().enumerate() {
            let child = self.fresh();
            self.edges.push(Edge {
                from: parent.clone(),
                to: child.clone(),
                label: format!("e{j}"),
                prob: Decimal::from_f64(p),
                holding: Some(random_spec(rng)),
                cluster: None,
            });
            // Keep subtrees ragged: some branches stop early.
            if rng.gen_bool(0.75) {
                self.grow(&child, depth_left - 1, rng);
            }
        }
    }

    /// Deep-copies the subtree under `src` below `dst`, returning the
    /// situation pairs for stage construction.
    fn mirror(&mut self, src: &VertexId, dst: &VertexId) -> Vec<(VertexId, VertexId)> {
        let mut pairs = vec![(src.clone(), dst.clone())];
        let out: Vec<Edge> = self
            .edges
            .iter()
            .filter(|e| e.from == *src)
            .cloned()
            .collect();
        for e in out {
            let child = self.fresh();
            self.edges.push(Edge {
                from: dst.clone(),
                to: child.clone(),
                label: e.label.clone(),
                prob: e.prob.clone(),
                holding: e.holding.clone(),
                cluster: e.cluster.clone(),
            });
            pairs.extend(self.mirror(&e.to, &child));
        }
        pairs
    }
}

/// Generates a random coloured tree model with its compiled graph and a
/// random compatible evidence scenario. Deterministic in `seed`.
pub fn random_model(seed: u64) -> CorpusModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        if let Some(m) = try_random_model(&mut rng) {
            return m;
        }
    }
}

fn try_random_model(rng: &mut ChaCha8Rng) -> Option<CorpusModel> {
    let mut b = TreeBuilder {
        vertices: Vec::new(),
        edges: Vec::new(),
        counter: 0,
    };
    let root = b.fresh();
    let depth = rng.gen_range(2..=5usize);
    b.grow(&root, depth, rng);

    // Half the models duplicate a subtree under a fresh sibling pair so some
    // positions genuinely merge.
    let mut stage_blocks: BTreeMap<String, BTreeSet<VertexId>> = BTreeMap::new();
    if rng.gen_bool(0.5) {
        let candidates: Vec<VertexId> = b
            .edges
            .iter()
            .map(|e| e.to.clone())
            .filter(|v| b.edges.iter().any(|e| e.from == *v))
            .collect();
        if let Some(src) = candidates.first().cloned() {
            let twin = b.fresh();
            let parent = root.clone();
            // Attach the twin with a rebalanced pair of fresh edges.
            let p1 = rng.gen_range(0.2..0.6);
            b.edges.push(Edge {
                from: parent.clone(),
                to: twin.clone(),
                label: "twin".into(),
                prob: Decimal::from_f64(p1),
                holding: Some(random_spec(rng)),
                cluster: None,
            });
            // Renormalize the root's other edges.
            let rest: f64 = 1.0 - p1;
            let old_total: f64 = b
                .edges
                .iter()
                .filter(|e| e.from == parent && e.to != twin)
                .map(|e| e.prob.value())
                .sum();
            for e in b
                .edges
                .iter_mut()
                .filter(|e| e.from == parent && e.to != twin)
            {
                e.prob = Decimal::from_f64(e.prob.value() / old_total * rest);
            }
            let pairs = b.mirror(&src, &twin);
            for (i, (a, c)) in pairs.into_iter().enumerate() {
                stage_blocks.insert(format!("u{i}"), [a, c].into_iter().collect());
            }
        }
    }

    let tree = EventTree::new(b.vertices, b.edges, root).ok()?;
    let stages = StagePartition::new(stage_blocks);
    if !crate::model::validate(&tree, &stages).is_empty() {
        return None;
    }
    let positions = compute_positions(&tree, &stages);
    let compiled = compile_ceg_detailed(&tree, &positions, &stages).ok()?;

    // Decorate some positions as untimed.
    let untimed: BTreeSet<VertexId> = compiled
        .graph
        .positions()
        .filter(|_| rng.gen_bool(0.15))
        .cloned()
        .collect();
    let graph = CegGraph::new(
        compiled.graph.vertices().to_vec(),
        compiled.graph.edges().to_vec(),
        compiled.graph.root().clone(),
        compiled.graph.sink().clone(),
        BTreeSet::new(),
        untimed,
        BTreeMap::new(),
        compiled.graph.stage_of().clone(),
    )
    .ok()?;

    let table = enumerate_paths(&graph, 4000).ok()?;
    if table.rows.len() < 2 {
        return None;
    }

    // Random intrinsic evidence: keep a random nonempty subset of paths.
    let kept: Vec<&PathRow> = table.rows.iter().filter(|_| rng.gen_bool(0.7)).collect();
    let kept = if kept.is_empty() {
        vec![&table.rows[0]]
    } else {
        kept
    };
    let mut retained: BTreeSet<EdgeId> = BTreeSet::new();
    for row in &kept {
        retained.extend(row.edge_ids.iter().cloned());
    }

    // Optional temporal evidence at the length of one kept path.
    let times = if rng.gen_bool(0.6) {
        let d = kept[rng.gen_range(0..kept.len())].edges.len();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(d);
        for _ in 0..d {
            t += rng.gen_range(0.4..3.0);
            out.push(if rng.gen_bool(0.75) { Some(t) } else { None });
        }
        Some(out)
    } else {
        None
    };

    let evidence = Evidence {
        retained,
        times,
        times_anchor: None,
        arrival_query: None,
    };
    // The scenario must be propagatable end to end.
    let transporter = build_transporter(&graph, &evidence).ok()?;
    crate::propagation::propagate(&graph, &transporter, &evidence).ok()?;
    Some(CorpusModel {
        tree,
        stages,
        compiled,
        graph,
        evidence,
    })
}

/// Differential agreement report between the engine and the enumeration
/// oracle over a generated corpus.
#[derive(Debug, Clone, Copy, Default)]
pub struct AgreementReport {
    pub models: usize,
    pub max_edge_error: f64,
    pub max_path_error: f64,
    pub max_t_emphasis_error: f64,
    pub max_h_emphasis_error: f64,
    pub max_tree_identity_error: f64,
}

impl AgreementReport {
    pub fn max_error(&self) -> f64 {
        self.max_edge_error
            .max(self.max_path_error)
            .max(self.max_t_emphasis_error)
            .max(self.max_h_emphasis_error)
            .max(self.max_tree_identity_error)
    }
}

/// Runs the engine and the enumeration oracle over `count` random models and
/// reports the worst absolute disagreements.
pub fn differential_report(count: usize, seed: u64) -> Result<AgreementReport> {
    let mut report = AgreementReport {
        models: count,
        ..Default::default()
    };
    for i in 0..count {
        let m = random_model(seed.wrapping_add(i as u64));
        let transporter = build_transporter(&m.graph, &m.evidence)?;
        let (state, revised) = crate::propagation::propagate(&m.graph, &transporter, &m.evidence)?;
        let table = enumerate_paths(&m.graph, 4000)?;
        let oracle = posterior_by_enumeration(&m.graph, &table, &m.evidence)?;

        for (id, hat) in &revised.revised {
            let reference = oracle.edge_posteriors[id];
            report.max_edge_error = report.max_edge_error.max((hat - reference).abs());
        }
        let engine_paths = crate::propagation::path_posteriors(&revised);
        for p in engine_paths {
            let row = table
                .rows
                .iter()
                .find(|r| r.edge_ids == p.edges)
                .expect("engine path exists in the table");
            let reference = oracle.path_posteriors[&row.id];
            report.max_path_error = report.max_path_error.max((p.probability - reference).abs());
        }
        for v in transporter.positions() {
            let engine_phi = state.t_emphasis[v];
            let engine_phi_t = state.h_emphasis[v];
            report.max_t_emphasis_error = report
                .max_t_emphasis_error
                .max((engine_phi - oracle.t_emphasis[v]).abs());
            report.max_h_emphasis_error = report
                .max_h_emphasis_error
                .max((engine_phi_t - oracle.h_emphasis[v]).abs());
            // Appendix-style identity on the tree, at every retained copy.
            let tree_oracle = TreeEmphasisOracle::new(&m.tree, &m.compiled, &m.evidence);
            if let Some(members) = m.compiled.members.get(v) {
                for v_j in members {
                    if let Some((phi, phi_t)) = tree_oracle.emphases_at(v_j, &m.graph) {
                        report.max_tree_identity_error = report
                            .max_tree_identity_error
                            .max((engine_phi - phi).abs())
                            .max((engine_phi_t - phi_t).abs());
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_path_graph_has_one_path() {
        let graph = fixtures::single_edge_ceg();
        let table = enumerate_paths(&graph, 10).unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_abs_diff_eq!(table.rows[0].prior, 1.0);
    }

    #[test]
    fn present_slice_path_count_and_prior_mass() {
        let graph = fixtures::reinfection_present_slice();
        let table = enumerate_paths(&graph, 100).unwrap();
        // Hand count: two treated strains x two treatments x two outcomes,
        // plus the untreated strain's two outcomes.
        assert_eq!(table.rows.len(), 10);
        let total: f64 = table.rows.iter().map(|r| r.prior).sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn infection_ceg_paths_match_hand_count() {
        let (tree, stages) = fixtures::infection_tree();
        let positions = compute_positions(&tree, &stages);
        let graph = crate::staging::compile_ceg(&tree, &positions, &stages).unwrap();
        let table = enumerate_paths(&graph, 100).unwrap();
        // 2 treated strains x 2 treatments x 2 outcomes + untreated x 2.
        assert_eq!(table.rows.len(), 10);
    }

    #[test]
    fn capacity_bound_fails_fast() {
        let graph = fixtures::reinfection_present_slice();
        let err = enumerate_paths(&graph, 3).unwrap_err();
        assert!(matches!(err, CegError::Capacity { limit: 3 }));
    }

    #[test]
    fn uniform_two_path_model_is_symmetric() {
        let graph = fixtures::two_route_diamond(true);
        let table = enumerate_paths(&graph, 10).unwrap();
        let evidence = Evidence::vacuous(&graph).with_times(vec![Some(1.0), Some(2.0), Some(3.0)]);
        let oracle = posterior_by_enumeration(&graph, &table, &evidence).unwrap();
        let probs: Vec<f64> = oracle.path_posteriors.values().copied().collect();
        assert_eq!(probs.len(), 2);
        assert_abs_diff_eq!(probs[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(probs[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn enumeration_matches_propagation_on_the_worked_model() {
        let graph = fixtures::reinfection_present_slice();
        let evidence = fixtures::treated_recovered_evidence();
        let transporter = build_transporter(&graph, &evidence).unwrap();
        let (state, revised) =
            crate::propagation::propagate(&graph, &transporter, &evidence).unwrap();
        let table = enumerate_paths(&graph, 100).unwrap();
        let oracle = posterior_by_enumeration(&graph, &table, &evidence).unwrap();
        for (id, hat) in &revised.revised {
            assert_abs_diff_eq!(*hat, oracle.edge_posteriors[id], epsilon = 1e-12);
        }
        for v in transporter.positions() {
            assert_abs_diff_eq!(state.t_emphasis[v], oracle.t_emphasis[v], epsilon = 1e-12);
            assert_abs_diff_eq!(state.h_emphasis[v], oracle.h_emphasis[v], epsilon = 1e-12);
        }
    }

    #[test]
    fn simulation_is_deterministic_and_matches_priors() {
        let graph = fixtures::reinfection_present_slice();
        let a = simulate(&graph, 2000, 42).unwrap();
        let b = simulate(&graph, 2000, 42).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.steps.len(), y.steps.len());
            for (sx, sy) in x.steps.iter().zip(&y.steps) {
                assert_eq!(sx.edge, sy.edge);
                assert_eq!(sx.hold.to_bits(), sy.hold.to_bits());
            }
        }
        let seq = simulate_sequential(&graph, 2000, 42).unwrap();
        for (x, y) in a.iter().zip(&seq) {
            for (sx, sy) in x.steps.iter().zip(&y.steps) {
                assert_eq!(sx.hold.to_bits(), sy.hold.to_bits());
            }
        }

        // Edge frequencies against priors within 3 standard errors.
        let n = 100_000;
        let runs = simulate(&graph, n, 7).unwrap();
        let mut counts: BTreeMap<&EdgeId, usize> = BTreeMap::new();
        for run in &runs {
            for s in &run.steps {
                *counts
                    .entry(graph.edge_ids().iter().find(|id| **id == s.edge).unwrap())
                    .or_insert(0) += 1;
            }
        }
        let table = enumerate_paths(&graph, 100).unwrap();
        for (i, id) in graph.edge_ids().iter().enumerate() {
            let p: f64 = table
                .rows
                .iter()
                .filter(|r| r.edges.contains(&i))
                .map(|r| r.prior)
                .sum();
            let freq = *counts.get(id).unwrap_or(&0) as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((freq - p).abs() <= 3.0 * se + 1e-3, "{id}: {freq} vs {p}");
        }
    }

    #[test]
    fn differential_corpus_agrees_tightly() {
        let report = differential_report(25, 0xC0FFEE).unwrap();
        assert!(report.max_error() < 1e-9, "{report:?}");
    }
}
