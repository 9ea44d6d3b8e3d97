//! Dynamic models: unrolling over passage-slices, the past/present/future
//! split, incremental window extension, and semi-Markov forecasting.
//!
//! A dynamic template is a compiled graph with cyclic edges jumping back to
//! the slice root. Unrolling slices `k..k+l` chains slice copies along the
//! cyclic edges; the last slice's cyclic edges are collected into the sink,
//! and every vertex is tagged with its slice so situations with a directed
//! path between them can never share a position downstream.

use std::collections::{BTreeMap, BTreeSet};

use crate::distributions::sample_holding;
use crate::error::{CegError, Result};
use crate::model::{CegGraph, Edge, HoldingTimeSpec, VertexId};
use crate::propagation::{
    build_transporter, propagate, propagate_with_prior, Evidence, PriorRun, PropagationState,
    RevisedModel,
};

/// A continuous-time dynamic model: the finite slice template.
#[derive(Debug, Clone)]
pub struct DcegModel {
    template: CegGraph,
}

impl DcegModel {
    /// Wraps a template graph. Removing the cyclic edges must leave the
    /// graph acyclic.
    pub fn new(template: CegGraph) -> Result<Self> {
        template.topo_order()?;
        Ok(DcegModel { template })
    }

    pub fn template(&self) -> &CegGraph {
        &self.template
    }

    /// Distinct targets of the cyclic edges.
    pub fn slice_roots(&self) -> BTreeSet<VertexId> {
        self.template
            .cyclic_edges()
            .iter()
            .map(|id| {
                self.template.edges()[self.template.edge_index(id).expect("cyclic id")]
                    .to
                    .clone()
            })
            .collect()
    }

    fn single_slice_root(&self) -> Result<VertexId> {
        let roots = self.slice_roots();
        match roots.len() {
            1 => Ok(roots.into_iter().next().unwrap()),
            0 => Err(CegError::Structural(
                "template has no cyclic edges; there is only one slice".into(),
            )),
            n => Err(CegError::Structural(format!(
                "unrolling past the first slice needs a single slice root, found {n}"
            ))),
        }
    }
}

fn tagged(v: &VertexId, slice: u32) -> VertexId {
    VertexId(format!("{v}@{slice}"))
}

/// Unrolls passage-slices `k..=k+l` into one acyclic graph.
///
/// Slice `k` is rooted at the template root when `k == 1` and at the slice
/// root otherwise; cyclic edges of slice `j < k+l` enter slice `j+1`, and
/// those of the last slice are collected into the single sink together with
/// the template's own sink-bound edges.
pub fn unroll(model: &DcegModel, k: u32, l: u32) -> Result<CegGraph> {
    if k < 1 {
        return Err(CegError::Structural("slice indices start at 1".into()));
    }
    let template = model.template();
    if template.cyclic_edges().is_empty() {
        if k == 1 && l == 0 {
            return Ok(template.clone());
        }
        return Err(CegError::Structural(
            "template has no cyclic edges; only slice 1 exists".into(),
        ));
    }

    let sink = template.sink().clone();
    let mut vertices: Vec<VertexId> = Vec::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut untimed: BTreeSet<VertexId> = BTreeSet::new();
    let mut slice_of: BTreeMap<VertexId, u32> = BTreeMap::new();
    let mut stage_of: BTreeMap<VertexId, String> = BTreeMap::new();

    let mut root_of_unrolled = None;
    for j in k..=k + l {
        let slice_root = if j == 1 {
            template.root().clone()
        } else {
            model.single_slice_root()?
        };
        if j == k {
            root_of_unrolled = Some(tagged(&slice_root, j));
        }
        // Vertices of the slice: reachable from its root without cyclic edges.
        let mut members: Vec<VertexId> = Vec::new();
        let mut seen: BTreeSet<VertexId> = BTreeSet::new();
        let mut stack = vec![slice_root.clone()];
        while let Some(v) = stack.pop() {
            if v == sink || !seen.insert(v.clone()) {
                continue;
            }
            members.push(v.clone());
            for &i in template.out_edges(&v) {
                if !template.cyclic_edges().contains(&template.edge_ids()[i]) {
                    stack.push(template.edges()[i].to.clone());
                }
            }
        }
        // Deterministic order: template vertex order.
        members.sort_by_key(|v| template.vertices().iter().position(|x| x == v).unwrap());

        for v in &members {
            let tv = tagged(v, j);
            vertices.push(tv.clone());
            slice_of.insert(tv.clone(), j);
            if template.is_untimed(v) {
                untimed.insert(tv.clone());
            }
            if let Some(s) = template.stage_of().get(v) {
                stage_of.insert(tv.clone(), s.clone());
            }
        }
        for v in &members {
            for &i in template.out_edges(v) {
                let e = &template.edges()[i];
                let cyclic = template.cyclic_edges().contains(&template.edge_ids()[i]);
                let to = if cyclic {
                    if j < k + l {
                        tagged(&e.to, j + 1)
                    } else {
                        sink.clone()
                    }
                } else if e.to == sink {
                    sink.clone()
                } else {
                    tagged(&e.to, j)
                };
                edges.push(Edge {
                    from: tagged(v, j),
                    to,
                    label: e.label.clone(),
                    prob: e.prob.clone(),
                    holding: e.holding.clone(),
                    cluster: e.cluster.clone(),
                });
            }
        }
    }
    vertices.push(sink.clone());

    CegGraph::new(
        vertices,
        edges,
        root_of_unrolled.expect("at least one slice"),
        sink,
        BTreeSet::new(),
        untimed,
        slice_of,
        stage_of,
    )
}

/// Weighted components of a merged transition's holding distribution.
pub type HoldingMixture = Vec<(f64, Option<HoldingTimeSpec>)>;

/// A semi-Markov representation: the embedded Markov chain over positions
/// plus per-transition holding mixtures. Parallel edges between the same
/// pair of positions are merged; their holding distribution becomes a
/// mixture weighted by the merged transition probabilities.
#[derive(Debug, Clone)]
pub struct SmpModel {
    pub states: Vec<VertexId>,
    /// Row-stochastic embedded chain; absorbing states self-loop.
    pub matrix: Vec<Vec<f64>>,
    /// `(from, to) -> [(weight, holding spec)]`. Untimed or unspecified
    /// transitions carry `None` specs and contribute zero time.
    pub holdings: BTreeMap<(usize, usize), HoldingMixture>,
    pub absorbing: Vec<bool>,
    pub untimed: BTreeSet<usize>,
}

impl SmpModel {
    pub fn index_of(&self, state: &VertexId) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("state");
        for s in &self.states {
            out.push(',');
            out.push_str(s.as_str());
        }
        out.push('\n');
        for (i, s) in self.states.iter().enumerate() {
            out.push_str(s.as_str());
            for p in &self.matrix[i] {
                out.push_str(&format!(",{p}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn holdings_json(&self) -> serde_json::Value {
        let mut entries = Vec::new();
        for ((i, j), mixture) in &self.holdings {
            entries.push(serde_json::json!({
                "from": self.states[*i].as_str(),
                "to": self.states[*j].as_str(),
                "mixture": mixture.iter().map(|(w, spec)| serde_json::json!({
                    "weight": w,
                    "holding": spec.as_ref().map(|s| serde_json::json!({
                        "family": s.family.name(),
                        "params": s.params.iter().map(|p| p.repr()).collect::<Vec<_>>(),
                        "convention": s.convention,
                    })),
                })).collect::<Vec<_>>(),
            }));
        }
        serde_json::Value::Array(entries)
    }
}

/// Adapts the template to evidence about the future (edges impossible with
/// probability one removed), renormalizes each row, and condenses the
/// result into its semi-Markov representation. `None` evidence leaves the
/// transition probabilities unchanged.
pub fn revise_future(model: &DcegModel, future_evidence: Option<&Evidence>) -> Result<SmpModel> {
    let template = model.template();
    let keep: Vec<usize> = match future_evidence {
        None => (0..template.edges().len()).collect(),
        Some(ev) => {
            for id in &ev.retained {
                if template.edge_index(id).is_none() {
                    return Err(CegError::UnknownEdge(id.to_string()));
                }
            }
            (0..template.edges().len())
                .filter(|&i| ev.retained.contains(&template.edge_ids()[i]))
                .collect()
        }
    };

    // Reachability over the kept edges, cyclic ones included.
    let keep_set: BTreeSet<usize> = keep.iter().copied().collect();
    let mut reachable: BTreeSet<VertexId> = BTreeSet::new();
    let mut stack = vec![template.root().clone()];
    while let Some(v) = stack.pop() {
        if !reachable.insert(v.clone()) {
            continue;
        }
        for &i in template.out_edges(&v) {
            if keep_set.contains(&i) {
                stack.push(template.edges()[i].to.clone());
            }
        }
    }
    for v in &reachable {
        if v == template.sink() {
            continue;
        }
        if !template.out_edges(v).is_empty()
            && !template.out_edges(v).iter().any(|i| keep_set.contains(i))
        {
            return Err(CegError::Structural(format!(
                "vertex {v} stays reachable but loses every outgoing edge"
            )));
        }
    }

    let states: Vec<VertexId> = template
        .vertices()
        .iter()
        .filter(|v| reachable.contains(v))
        .cloned()
        .collect();
    let index: BTreeMap<&VertexId, usize> = states.iter().zip(0..).collect();
    let n = states.len();
    let mut matrix = vec![vec![0.0; n]; n];
    let mut holdings: BTreeMap<(usize, usize), HoldingMixture> = BTreeMap::new();

    for (vi, v) in states.iter().enumerate() {
        let kept_out: Vec<usize> = template
            .out_edges(v)
            .iter()
            .copied()
            .filter(|i| keep_set.contains(i))
            .collect();
        if kept_out.is_empty() {
            // Sink: absorbing self-loop.
            matrix[vi][vi] = 1.0;
            continue;
        }
        let total: f64 = kept_out
            .iter()
            .map(|&i| template.edges()[i].prob.value())
            .sum();
        for &i in &kept_out {
            let e = &template.edges()[i];
            let revised = e.prob.value() / total;
            let ti = index[&e.to];
            matrix[vi][ti] += revised;
            holdings
                .entry((vi, ti))
                .or_default()
                .push((revised, e.holding.clone()));
        }
    }
    // Mixture weights proportional to the merged edge probabilities.
    for mixture in holdings.values_mut() {
        let total: f64 = mixture.iter().map(|(w, _)| *w).sum();
        for (w, _) in mixture.iter_mut() {
            *w /= total;
        }
    }

    let absorbing: Vec<bool> = states
        .iter()
        .enumerate()
        .map(|(i, _)| matrix[i][i] == 1.0)
        .collect();
    let untimed = states
        .iter()
        .enumerate()
        .filter(|(_, v)| template.is_untimed(v))
        .map(|(i, _)| i)
        .collect();
    Ok(SmpModel {
        states,
        matrix,
        holdings,
        absorbing,
        untimed,
    })
}

/// The three-way split of a dynamic model around the evidence window.
#[derive(Debug, Clone)]
pub struct ModelSplit {
    /// Slices before the window; `None` when the window starts at slice 1.
    pub past: Option<CegGraph>,
    /// The unrolled window, ready for transporter construction and
    /// propagation.
    pub present: CegGraph,
    /// Semi-Markov future model.
    pub future: SmpModel,
    pub first_slice: u32,
    pub slice_count: u32,
}

/// Splits the model around evidence on passage-slices `k..k+l`. The past is
/// left untouched, the present is the unrolled window, and the future is
/// the revised semi-Markov model (present evidence carries no structural
/// implications for future slices in a time-homogeneous template, so the
/// future revision is the identity unless explicit future evidence is
/// supplied separately).
pub fn split(model: &DcegModel, evidence: &Evidence, k: u32, l: u32) -> Result<ModelSplit> {
    let present = unroll(model, k, l)?;
    // Compatibility gate: the transporter must exist.
    let _ = build_transporter(&present, evidence)?;
    let past = if k > 1 {
        Some(unroll(model, 1, k - 2)?)
    } else {
        None
    };
    let future = revise_future(model, None)?;
    Ok(ModelSplit {
        past,
        present,
        future,
        first_slice: k,
        slice_count: l,
    })
}

/// A propagated present window: transporter plus the run artifacts that a
/// later extension can build on.
#[derive(Debug, Clone)]
pub struct PresentInference {
    pub evidence: Evidence,
    pub transporter: CegGraph,
    pub state: PropagationState,
    pub revised: RevisedModel,
}

/// Builds the transporter and propagates the evidence through the present
/// window.
pub fn infer_present(present: &CegGraph, evidence: &Evidence) -> Result<PresentInference> {
    let transporter = build_transporter(present, evidence)?;
    let (state, revised) = propagate(present, &transporter, evidence)?;
    Ok(PresentInference {
        evidence: evidence.clone(),
        transporter,
        state,
        revised,
    })
}

/// Moves slices `i..k-1` from the past into the present, pruning them by the
/// new evidence and continuing the backward pass from the old window's root
/// to the new roots without recomputing accommodated vertices. The new
/// evidence must be non-temporal and concern only the moved slices.
pub fn extend_present_with_past(
    model: &DcegModel,
    split: &ModelSplit,
    prior: &PresentInference,
    new_evidence: &Evidence,
    i: u32,
) -> Result<(ModelSplit, PresentInference)> {
    let k = split.first_slice;
    if i == k {
        return Ok((split.clone(), prior.clone()));
    }
    if i > k {
        return Err(CegError::Structural(format!(
            "extension slice {i} must not exceed the window start {k}"
        )));
    }
    if i < 1 {
        return Err(CegError::Structural("slice indices start at 1".into()));
    }
    if new_evidence.times.is_some() {
        return Err(CegError::Structural(
            "extension evidence must be non-temporal; times stay anchored at the original window"
                .into(),
        ));
    }

    let combined_graph = unroll(model, i, split.slice_count + (k - i))?;
    let combined_evidence = Evidence {
        retained: prior
            .evidence
            .retained
            .union(&new_evidence.retained)
            .cloned()
            .collect(),
        times: prior.evidence.times.clone(),
        times_anchor: Some(
            prior
                .evidence
                .times_anchor
                .clone()
                .unwrap_or_else(|| split.present.root().clone()),
        ),
        arrival_query: None,
    };
    let transporter = build_transporter(&combined_graph, &combined_evidence)?;
    let (state, revised) = propagate_with_prior(
        &combined_graph,
        &transporter,
        &combined_evidence,
        Some(PriorRun {
            state: &prior.state,
            revised: &prior.revised.revised,
        }),
    )?;

    let past = if i > 1 {
        Some(unroll(model, 1, i - 2)?)
    } else {
        None
    };
    let new_split = ModelSplit {
        past,
        present: combined_graph,
        future: split.future.clone(),
        first_slice: i,
        slice_count: split.slice_count + (k - i),
    };
    let inference = PresentInference {
        evidence: combined_evidence,
        transporter,
        state,
        revised,
    };
    Ok((new_split, inference))
}

// ---------------------------------------------------------------------------
// Forecasting
// ---------------------------------------------------------------------------

/// Forecast queries answered from the future model.
#[derive(Debug, Clone, PartialEq)]
pub enum ForecastQuery {
    /// Exact state distribution after `steps` transitions of the embedded
    /// chain.
    NStep { from: VertexId, steps: u32 },
    /// Exact probability of ever being absorbed in `target`.
    Absorption { from: VertexId, target: VertexId },
    /// Monte Carlo first-passage time from `from` to `target`.
    FirstPassage { from: VertexId, target: VertexId },
}

impl std::fmt::Display for ForecastQuery {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ForecastQuery::NStep { from, steps } => write!(f, "n-step:{from}:{steps}"),
            ForecastQuery::Absorption { from, target } => write!(f, "absorption:{from}:{target}"),
            ForecastQuery::FirstPassage { from, target } => {
                write!(f, "first-passage:{from}:{target}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum ForecastResult {
    Distribution {
        states: Vec<VertexId>,
        probabilities: Vec<f64>,
    },
    Probability {
        value: f64,
        /// Set when the query state is unreachable and the exact answer is a
        /// structural zero.
        unreachable: bool,
    },
    FirstPassage {
        mean: f64,
        std_error: f64,
        hits: usize,
        samples: usize,
        seed: u64,
    },
}

/// Answers a forecast query. Step and absorption queries are exact on the
/// embedded chain; time-domain queries are Monte Carlo over the holding
/// mixtures with a reported standard error.
pub fn forecast(
    smp: &SmpModel,
    query: &ForecastQuery,
    samples: usize,
    seed: u64,
) -> Result<ForecastResult> {
    match query {
        ForecastQuery::NStep { from, steps } => {
            let start = smp
                .index_of(from)
                .ok_or_else(|| CegError::UnknownVertex(from.to_string()))?;
            let n = smp.states.len();
            let mut dist = vec![0.0; n];
            dist[start] = 1.0;
            for _ in 0..*steps {
                let mut next = vec![0.0; n];
                for (i, p) in dist.iter().enumerate() {
                    if *p == 0.0 {
                        continue;
                    }
                    for (j, q) in smp.matrix[i].iter().enumerate() {
                        next[j] += p * q;
                    }
                }
                dist = next;
            }
            Ok(ForecastResult::Distribution {
                states: smp.states.clone(),
                probabilities: dist,
            })
        }
        ForecastQuery::Absorption { from, target } => {
            let start = smp
                .index_of(from)
                .ok_or_else(|| CegError::UnknownVertex(from.to_string()))?;
            let Some(target) = smp.index_of(target) else {
                return Ok(ForecastResult::Probability {
                    value: 0.0,
                    unreachable: true,
                });
            };
            if start == target {
                return Ok(ForecastResult::Probability {
                    value: 1.0,
                    unreachable: false,
                });
            }
            // Reachability guard so unreachable targets return a flagged zero.
            let mut reach = BTreeSet::new();
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                if !reach.insert(v) {
                    continue;
                }
                for (j, p) in smp.matrix[v].iter().enumerate() {
                    if *p > 0.0 && v != j {
                        stack.push(j);
                    }
                }
            }
            if !reach.contains(&target) {
                return Ok(ForecastResult::Probability {
                    value: 0.0,
                    unreachable: true,
                });
            }
            let value = absorption_probability(smp, start, target)?;
            Ok(ForecastResult::Probability {
                value,
                unreachable: false,
            })
        }
        ForecastQuery::FirstPassage { from, target } => {
            let target = smp
                .index_of(target)
                .ok_or_else(|| CegError::UnknownVertex(target.to_string()))?;
            let trajectories = simulate_smp(smp, from, samples, seed, 100_000)?;
            let times = trajectories.iter().map(|tr| {
                tr.states
                    .iter()
                    .position(|&s| s == target)
                    .map(|pos| tr.holds[..pos].iter().sum::<f64>())
            });
            let hit_times: Vec<f64> = times.flatten().collect();
            let hits = hit_times.len();
            if hits == 0 {
                return Err(CegError::ZeroSupport(
                    "no sampled trajectory reaches the target".into(),
                ));
            }
            let mean: f64 = hit_times.iter().sum::<f64>() / hits as f64;
            let var: f64 = hit_times
                .iter()
                .map(|t| (t - mean) * (t - mean))
                .sum::<f64>()
                / (hits as f64 - 1.0);
            Ok(ForecastResult::FirstPassage {
                mean,
                std_error: (var / hits as f64).sqrt(),
                hits,
                samples,
                seed,
            })
        }
    }
}

/// One simulated semi-Markov trajectory: the visited state indices (the
/// last one absorbing unless the step cap truncated the walk) and the
/// holding time spent at each left state. Untimed states hold for zero.
#[derive(Debug, Clone)]
pub struct SmpTrajectory {
    pub states: Vec<usize>,
    pub holds: Vec<f64>,
}

/// Draws `n` independent trajectories of the semi-Markov process from
/// `from`. Deterministic given the seed; identical with and without the
/// `parallel` feature.
pub fn simulate_smp(
    smp: &SmpModel,
    from: &VertexId,
    n: usize,
    seed: u64,
    max_steps: usize,
) -> Result<Vec<SmpTrajectory>> {
    let start = smp
        .index_of(from)
        .ok_or_else(|| CegError::UnknownVertex(from.to_string()))?;
    Ok(crate::par::map_indexed(n, |idx| {
        let mut rng = crate::oracle::stream_rng(seed, idx);
        let mut states = vec![start];
        let mut holds = Vec::new();
        let mut v = start;
        while !smp.absorbing[v] && holds.len() < max_steps {
            let mut u: f64 = rand::Rng::gen(&mut rng);
            let row = &smp.matrix[v];
            let mut next = row.iter().rposition(|p| *p > 0.0).unwrap_or(v);
            for (j, p) in row.iter().enumerate() {
                u -= p;
                if u <= 0.0 {
                    next = j;
                    break;
                }
            }
            let mut hold = 0.0;
            if !smp.untimed.contains(&v) {
                if let Some(mixture) = smp.holdings.get(&(v, next)) {
                    let mut w: f64 = rand::Rng::gen(&mut rng);
                    let mut spec = &mixture[mixture.len() - 1].1;
                    for (weight, s) in mixture {
                        w -= weight;
                        if w <= 0.0 {
                            spec = s;
                            break;
                        }
                    }
                    if let Some(spec) = spec {
                        hold = sample_holding(spec, &mut rng);
                    }
                }
            }
            states.push(next);
            holds.push(hold);
            v = next;
        }
        SmpTrajectory { states, holds }
    }))
}

/// Probability of hitting `target` before any other absorbing state, solved
/// exactly by Gaussian elimination on the transient part of the chain.
fn absorption_probability(smp: &SmpModel, start: usize, target: usize) -> Result<f64> {
    let n = smp.states.len();
    let transient: Vec<usize> = (0..n)
        .filter(|&i| !smp.absorbing[i] && i != target)
        .collect();
    let pos: BTreeMap<usize, usize> = transient.iter().copied().zip(0..).collect();
    let m = transient.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for (r, &i) in transient.iter().enumerate() {
        a[r][r] = 1.0;
        for (j, p) in smp.matrix[i].iter().enumerate() {
            if *p == 0.0 {
                continue;
            }
            if j == target {
                a[r][m] += p;
            } else if let Some(&c) = pos.get(&j) {
                a[r][c] -= p;
            }
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&x, &y| a[x][col].abs().partial_cmp(&a[y][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-14 {
            continue;
        }
        a.swap(col, pivot);
        let lead = a[col][col];
        for x in a[col].iter_mut() {
            *x /= lead;
        }
        let pivot_row = a[col].clone();
        for (row, r) in a.iter_mut().enumerate() {
            if row != col && r[col] != 0.0 {
                let factor = r[col];
                for (x, p) in r.iter_mut().zip(&pivot_row) {
                    *x -= factor * p;
                }
            }
        }
    }
    if start == target {
        return Ok(1.0);
    }
    if smp.absorbing[start] {
        return Ok(0.0);
    }
    Ok(a[pos[&start]][m])
}
