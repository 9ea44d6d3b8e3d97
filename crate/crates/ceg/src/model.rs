//! Domain types for hued event trees and compiled CEG graphs.
//!
//! An event tree describes the possible evolutions of a process; vertex
//! colourings (stages) assert shared transition distributions and edge
//! colourings (clusters) assert shared holding-time distributions. Compiling
//! the coloured tree yields a graph whose vertices are positions and whose
//! leaves are collected into a single sink. All types here are immutable
//! after construction; validation reports violations as data rather than
//! failing.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{CegError, Result};

/// Identifier of a vertex (situation, position or sink).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(pub String);

impl VertexId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for VertexId {
    fn from(s: &str) -> Self {
        VertexId(s.to_string())
    }
}

/// Canonical edge identifier: `from:label:to`, with `#n` appended to
/// disambiguate repeated identical triples. Vertex names and labels must not
/// contain `:` so these ids stay unambiguous.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub String);

impl EdgeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EdgeId {
    fn from(s: &str) -> Self {
        EdgeId(s.to_string())
    }
}

/// Reserved identifier of the sink vertex collecting all leaves.
pub const SINK_ID: &str = "w_inf";

/// A real number that remembers the decimal string it was read from, so
/// that files round-trip bit-exactly and staging equality can be decided on
/// the source representation.
#[derive(Debug, Clone)]
pub struct Decimal {
    value: f64,
    repr: String,
}

impl Decimal {
    pub fn from_repr(repr: &str) -> std::result::Result<Self, String> {
        let value: f64 = repr
            .trim()
            .parse()
            .map_err(|_| format!("`{repr}` is not a decimal number"))?;
        if !value.is_finite() {
            return Err(format!("`{repr}` is not finite"));
        }
        Ok(Decimal {
            value,
            repr: repr.trim().to_string(),
        })
    }

    pub fn from_f64(value: f64) -> Self {
        Decimal {
            value,
            repr: format!("{value}"),
        }
    }

    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn repr(&self) -> &str {
        &self.repr
    }
}

impl PartialEq for Decimal {
    fn eq(&self, other: &Self) -> bool {
        self.repr == other.repr
    }
}
impl Eq for Decimal {}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.repr)
    }
}

/// Supported holding-time distribution families. The set is closed: unknown
/// families in a model file are a parse error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldingFamily {
    Exponential,
    Normal,
    Weibull,
    EmpiricalGrid,
}

impl HoldingFamily {
    pub fn name(&self) -> &'static str {
        match self {
            HoldingFamily::Exponential => "exponential",
            HoldingFamily::Normal => "normal",
            HoldingFamily::Weibull => "weibull",
            HoldingFamily::EmpiricalGrid => "empirical-grid",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "exponential" => Ok(HoldingFamily::Exponential),
            "normal" => Ok(HoldingFamily::Normal),
            "weibull" => Ok(HoldingFamily::Weibull),
            "empirical-grid" => Ok(HoldingFamily::EmpiricalGrid),
            other => Err(CegError::UnsupportedFamily(other.to_string())),
        }
    }
}

/// A holding-time distribution with an explicit parameterization marker.
///
/// Conventions per family:
/// - `exponential`: `rate` (params `[lambda]`) or `mean` (params `[mu]`)
/// - `normal`: `mean-sd` (params `[mu, sigma]`)
/// - `weibull`: `shape-scale` or `scale-shape` (params in that order)
/// - `empirical-grid`: `grid` (params `[dt, v0, v1, ..., vn]`, density values
///   on the uniform grid `t_i = i*dt`, linearly interpolated)
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HoldingTimeSpec {
    pub family: HoldingFamily,
    pub params: Vec<Decimal>,
    pub convention: String,
}

impl HoldingTimeSpec {
    pub fn exponential_rate(rate: f64) -> Self {
        HoldingTimeSpec {
            family: HoldingFamily::Exponential,
            params: vec![Decimal::from_f64(rate)],
            convention: "rate".into(),
        }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        HoldingTimeSpec {
            family: HoldingFamily::Normal,
            params: vec![Decimal::from_f64(mean), Decimal::from_f64(sd)],
            convention: "mean-sd".into(),
        }
    }

    pub fn weibull_shape_scale(shape: f64, scale: f64) -> Self {
        HoldingTimeSpec {
            family: HoldingFamily::Weibull,
            params: vec![Decimal::from_f64(shape), Decimal::from_f64(scale)],
            convention: "shape-scale".into(),
        }
    }

    pub fn empirical_grid(dt: f64, values: &[f64]) -> Self {
        let mut params = vec![Decimal::from_f64(dt)];
        params.extend(values.iter().map(|v| Decimal::from_f64(*v)));
        HoldingTimeSpec {
            family: HoldingFamily::EmpiricalGrid,
            params,
            convention: "grid".into(),
        }
    }

    pub fn param_values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value()).collect()
    }

    /// Checks the convention marker and parameter ranges. Returns a message
    /// describing the first problem found.
    pub fn check(&self) -> std::result::Result<(), String> {
        let p = self.param_values();
        match self.family {
            HoldingFamily::Exponential => {
                if self.convention != "rate" && self.convention != "mean" {
                    return Err(format!(
                        "exponential convention must be `rate` or `mean`, got `{}`",
                        self.convention
                    ));
                }
                if p.len() != 1 || p[0] <= 0.0 {
                    return Err("exponential needs one positive parameter".into());
                }
            }
            HoldingFamily::Normal => {
                if self.convention != "mean-sd" {
                    return Err(format!(
                        "normal convention must be `mean-sd`, got `{}`",
                        self.convention
                    ));
                }
                if p.len() != 2 || p[1] <= 0.0 {
                    return Err("normal needs params [mean, sd] with sd > 0".into());
                }
            }
            HoldingFamily::Weibull => {
                if self.convention != "shape-scale" && self.convention != "scale-shape" {
                    return Err(format!(
                        "weibull convention must be `shape-scale` or `scale-shape`, got `{}`",
                        self.convention
                    ));
                }
                if p.len() != 2 || p[0] <= 0.0 || p[1] <= 0.0 {
                    return Err("weibull needs two positive parameters".into());
                }
            }
            HoldingFamily::EmpiricalGrid => {
                if self.convention != "grid" {
                    return Err(format!(
                        "empirical-grid convention must be `grid`, got `{}`",
                        self.convention
                    ));
                }
                if p.len() < 3 || p[0] <= 0.0 {
                    return Err("empirical-grid needs params [dt, v0, v1, ...] with dt > 0".into());
                }
                if p[1..].iter().any(|v| *v < 0.0) {
                    return Err("empirical-grid density values must be nonnegative".into());
                }
            }
        }
        Ok(())
    }

    /// Stable textual fingerprint used when comparing colourings. Uses the
    /// source representation of the parameters.
    pub fn fingerprint(&self) -> String {
        let params: Vec<&str> = self.params.iter().map(|p| p.repr()).collect();
        format!(
            "{}:{}:{}",
            self.family.name(),
            self.convention,
            params.join(",")
        )
    }
}

/// A directed, labelled, probability-carrying edge. `holding` is absent for
/// transitions out of untimed vertices (or when timing is not modelled).
#[derive(Debug, Clone)]
pub struct Edge {
    pub from: VertexId,
    pub to: VertexId,
    pub label: String,
    pub prob: Decimal,
    pub holding: Option<HoldingTimeSpec>,
    pub cluster: Option<String>,
}

impl Edge {
    fn base_id(&self) -> String {
        format!("{}:{}:{}", self.from, self.label, self.to)
    }
}

fn assign_edge_ids(edges: &[Edge]) -> Vec<EdgeId> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    edges
        .iter()
        .map(|e| {
            let base = e.base_id();
            let n = seen.entry(base.clone()).or_insert(0);
            *n += 1;
            if *n == 1 {
                EdgeId(base)
            } else {
                EdgeId(format!("{base}#{n}"))
            }
        })
        .collect()
}

fn check_name(kind: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains(':') || name.contains('#') {
        return Err(CegError::Parse {
            path: kind.to_string(),
            message: format!("`{name}` must be nonempty and must not contain `:` or `#`"),
        });
    }
    Ok(())
}

/// A rooted event tree. Situations are the vertices with outgoing edges;
/// the remaining vertices are leaves.
#[derive(Debug, Clone)]
pub struct EventTree {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
    edge_ids: Vec<EdgeId>,
    root: VertexId,
    outgoing: BTreeMap<VertexId, Vec<usize>>,
}

impl EventTree {
    pub fn new(vertices: Vec<VertexId>, edges: Vec<Edge>, root: VertexId) -> Result<Self> {
        let vertex_set: BTreeSet<&VertexId> = vertices.iter().collect();
        if vertex_set.len() != vertices.len() {
            return Err(CegError::Parse {
                path: "vertices".into(),
                message: "duplicate vertex ids".into(),
            });
        }
        for v in &vertices {
            check_name("vertices", v.as_str())?;
        }
        if !vertex_set.contains(&root) {
            return Err(CegError::Parse {
                path: "root".into(),
                message: format!("root `{root}` is not a vertex"),
            });
        }
        let mut outgoing: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            check_name(&format!("edges[{i}].label"), &e.label)?;
            for end in [&e.from, &e.to] {
                if !vertex_set.contains(end) {
                    return Err(CegError::Parse {
                        path: format!("edges[{i}]"),
                        message: format!("endpoint `{end}` is not a vertex"),
                    });
                }
            }
            outgoing.entry(e.from.clone()).or_default().push(i);
        }
        let edge_ids = assign_edge_ids(&edges);
        Ok(EventTree {
            vertices,
            edges,
            edge_ids,
            root,
            outgoing,
        })
    }

    pub fn root(&self) -> &VertexId {
        &self.root
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    pub fn edge(&self, idx: usize) -> (&EdgeId, &Edge) {
        (&self.edge_ids[idx], &self.edges[idx])
    }

    pub fn out_edges(&self, v: &VertexId) -> &[usize] {
        self.outgoing.get(v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_leaf(&self, v: &VertexId) -> bool {
        self.out_edges(v).is_empty()
    }

    /// Non-leaf vertices.
    pub fn situations(&self) -> Vec<&VertexId> {
        self.vertices.iter().filter(|v| !self.is_leaf(v)).collect()
    }

    pub fn leaves(&self) -> Vec<&VertexId> {
        self.vertices.iter().filter(|v| self.is_leaf(v)).collect()
    }

    pub fn parent_counts(&self) -> BTreeMap<&VertexId, usize> {
        let mut counts: BTreeMap<&VertexId, usize> = self.vertices.iter().map(|v| (v, 0)).collect();
        for e in &self.edges {
            if let Some(c) = counts.get_mut(&e.to) {
                *c += 1;
            }
        }
        counts
    }
}

/// Partition of situations into stages (`stage id -> members`).
#[derive(Debug, Clone, Default)]
pub struct StagePartition {
    blocks: BTreeMap<String, BTreeSet<VertexId>>,
}

impl StagePartition {
    pub fn new(blocks: BTreeMap<String, BTreeSet<VertexId>>) -> Self {
        StagePartition { blocks }
    }

    pub fn blocks(&self) -> &BTreeMap<String, BTreeSet<VertexId>> {
        &self.blocks
    }

    pub fn stage_of(&self, v: &VertexId) -> Option<&str> {
        self.blocks
            .iter()
            .find(|(_, members)| members.contains(v))
            .map(|(id, _)| id.as_str())
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// A compiled CEG graph: positions plus a single sink. When `cyclic_edges`
/// is nonempty the graph is the finite template of a dynamic model and those
/// edges jump back to a passage-slice root.
#[derive(Debug, Clone)]
pub struct CegGraph {
    vertices: Vec<VertexId>,
    edges: Vec<Edge>,
    edge_ids: Vec<EdgeId>,
    root: VertexId,
    sink: VertexId,
    cyclic: BTreeSet<EdgeId>,
    untimed: BTreeSet<VertexId>,
    slice_of: BTreeMap<VertexId, u32>,
    stage_of: BTreeMap<VertexId, String>,
    outgoing: BTreeMap<VertexId, Vec<usize>>,
    by_id: BTreeMap<EdgeId, usize>,
}

impl CegGraph {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        vertices: Vec<VertexId>,
        edges: Vec<Edge>,
        root: VertexId,
        sink: VertexId,
        cyclic: BTreeSet<EdgeId>,
        untimed: BTreeSet<VertexId>,
        slice_of: BTreeMap<VertexId, u32>,
        stage_of: BTreeMap<VertexId, String>,
    ) -> Result<Self> {
        let vertex_set: BTreeSet<&VertexId> = vertices.iter().collect();
        if vertex_set.len() != vertices.len() {
            return Err(CegError::Parse {
                path: "vertices".into(),
                message: "duplicate vertex ids".into(),
            });
        }
        for v in &vertices {
            check_name("vertices", v.as_str())?;
        }
        for (name, v) in [("root", &root), ("sink", &sink)] {
            if !vertex_set.contains(v) {
                return Err(CegError::Parse {
                    path: name.into(),
                    message: format!("`{v}` is not a vertex"),
                });
            }
        }
        let mut outgoing: BTreeMap<VertexId, Vec<usize>> = BTreeMap::new();
        for (i, e) in edges.iter().enumerate() {
            check_name(&format!("edges[{i}].label"), &e.label)?;
            for end in [&e.from, &e.to] {
                if !vertex_set.contains(end) {
                    return Err(CegError::Parse {
                        path: format!("edges[{i}]"),
                        message: format!("endpoint `{end}` is not a vertex"),
                    });
                }
            }
            outgoing.entry(e.from.clone()).or_default().push(i);
        }
        let edge_ids = assign_edge_ids(&edges);
        for c in &cyclic {
            if !edge_ids.contains(c) {
                return Err(CegError::UnknownEdge(c.to_string()));
            }
        }
        for u in &untimed {
            if !vertex_set.contains(u) {
                return Err(CegError::UnknownVertex(u.to_string()));
            }
        }
        let by_id = edge_ids.iter().cloned().zip(0..).collect();
        Ok(CegGraph {
            vertices,
            edges,
            edge_ids,
            root,
            sink,
            cyclic,
            untimed,
            slice_of,
            stage_of,
            outgoing,
            by_id,
        })
    }

    pub fn root(&self) -> &VertexId {
        &self.root
    }

    pub fn sink(&self) -> &VertexId {
        &self.sink
    }

    pub fn vertices(&self) -> &[VertexId] {
        &self.vertices
    }

    /// Non-sink vertices.
    pub fn positions(&self) -> impl Iterator<Item = &VertexId> {
        self.vertices.iter().filter(move |v| **v != self.sink)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_ids(&self) -> &[EdgeId] {
        &self.edge_ids
    }

    pub fn edge(&self, idx: usize) -> (&EdgeId, &Edge) {
        (&self.edge_ids[idx], &self.edges[idx])
    }

    pub fn edge_index(&self, id: &EdgeId) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn out_edges(&self, v: &VertexId) -> &[usize] {
        self.outgoing.get(v).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn cyclic_edges(&self) -> &BTreeSet<EdgeId> {
        &self.cyclic
    }

    pub fn untimed_vertices(&self) -> &BTreeSet<VertexId> {
        &self.untimed
    }

    pub fn is_untimed(&self, v: &VertexId) -> bool {
        self.untimed.contains(v)
    }

    pub fn is_dynamic(&self) -> bool {
        !self.cyclic.is_empty()
    }

    pub fn slice_of(&self) -> &BTreeMap<VertexId, u32> {
        &self.slice_of
    }

    pub fn stage_of(&self) -> &BTreeMap<VertexId, String> {
        &self.stage_of
    }

    /// Vertices in topological order, ignoring cyclic edges. Errors if the
    /// remaining graph still contains a cycle.
    pub fn topo_order(&self) -> Result<Vec<VertexId>> {
        let mut indeg: BTreeMap<&VertexId, usize> = self.vertices.iter().map(|v| (v, 0)).collect();
        for (i, e) in self.edges.iter().enumerate() {
            if self.cyclic.contains(&self.edge_ids[i]) {
                continue;
            }
            *indeg.get_mut(&e.to).unwrap() += 1;
        }
        let mut queue: Vec<&VertexId> = self.vertices.iter().filter(|v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.vertices.len());
        while let Some(v) = queue.pop() {
            order.push(v.clone());
            for &i in self.out_edges(v) {
                if self.cyclic.contains(&self.edge_ids[i]) {
                    continue;
                }
                let d = indeg.get_mut(&self.edges[i].to).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push(&self.edges[i].to);
                }
            }
        }
        if order.len() != self.vertices.len() {
            return Err(CegError::Structural(
                "graph has a cycle outside the declared cyclic edges".into(),
            ));
        }
        Ok(order)
    }

    /// Restriction to a set of edges (by index), dropping vertices that are
    /// no longer reachable from the root or co-reachable to the sink. Edge
    /// ids of the surviving edges are preserved verbatim.
    pub fn restrict_to_edges(&self, keep: &BTreeSet<usize>) -> Result<CegGraph> {
        let mut vertices: Vec<VertexId> = Vec::new();
        let mut used: BTreeSet<&VertexId> = BTreeSet::new();
        used.insert(&self.root);
        used.insert(&self.sink);
        for &i in keep {
            used.insert(&self.edges[i].from);
            used.insert(&self.edges[i].to);
        }
        for v in &self.vertices {
            if used.contains(v) {
                vertices.push(v.clone());
            }
        }
        let edges: Vec<Edge> = keep.iter().map(|&i| self.edges[i].clone()).collect();
        let edge_ids: Vec<EdgeId> = keep.iter().map(|&i| self.edge_ids[i].clone()).collect();
        let cyclic = keep
            .iter()
            .filter(|&&i| self.cyclic.contains(&self.edge_ids[i]))
            .map(|&i| self.edge_ids[i].clone())
            .collect();
        let mut restricted = CegGraph::new(
            vertices.clone(),
            edges,
            self.root.clone(),
            self.sink.clone(),
            cyclic,
            self.untimed
                .iter()
                .filter(|v| used.contains(v))
                .cloned()
                .collect(),
            self.slice_of
                .iter()
                .filter(|(v, _)| used.contains(v))
                .map(|(v, s)| (v.clone(), *s))
                .collect(),
            self.stage_of
                .iter()
                .filter(|(v, _)| used.contains(v))
                .map(|(v, s)| (v.clone(), s.clone()))
                .collect(),
        )?;
        restricted.by_id = edge_ids.iter().cloned().zip(0..).collect();
        restricted.edge_ids = edge_ids;
        Ok(restricted)
    }
}

/// One step of a timed root-to-sink path: the position left, the edge taken
/// and the holding time spent before taking it.
#[derive(Debug, Clone)]
pub struct TimedStep {
    pub vertex: VertexId,
    pub edge: EdgeId,
    pub hold: f64,
}

/// A root-to-sink path with per-step holding times.
#[derive(Debug, Clone, Default)]
pub struct TimedPath {
    pub steps: Vec<TimedStep>,
}

impl TimedPath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    TreeStructure,
    ProbabilitySum,
    ProbabilityRange,
    StageOutDegree,
    StageMismatch,
    ClusterSpec,
    HoldingInvalid,
    Reachability,
}

#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

/// Outcome of validation. Empty report means the model satisfies every
/// invariant; violations are data, not failures.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, kind: ViolationKind, message: String) {
        self.violations.push(Violation { kind, message });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return writeln!(f, "ok: no violations");
        }
        for v in &self.violations {
            writeln!(f, "{:?}: {}", v.kind, v.message)?;
        }
        Ok(())
    }
}

pub const PROB_SUM_TOL: f64 = 1e-9;
pub const GRID_NORM_TOL: f64 = 1e-6;

fn check_probs_and_holdings(report: &mut ValidationReport, edges: &[Edge], ids: &[EdgeId]) {
    for (e, id) in edges.iter().zip(ids) {
        let p = e.prob.value();
        if !(0.0..=1.0).contains(&p) {
            report.push(
                ViolationKind::ProbabilityRange,
                format!("edge {id}: probability {p} outside [0,1]"),
            );
        }
        if let Some(spec) = &e.holding {
            if let Err(msg) = spec.check() {
                report.push(ViolationKind::HoldingInvalid, format!("edge {id}: {msg}"));
            } else if spec.family == HoldingFamily::EmpiricalGrid {
                let p = spec.param_values();
                let (dt, values) = (p[0], &p[1..]);
                let integral = crate::distributions::trapezoid(values, dt);
                if (integral - 1.0).abs() > GRID_NORM_TOL {
                    report.push(
                        ViolationKind::HoldingInvalid,
                        format!("edge {id}: empirical grid integrates to {integral}, not 1"),
                    );
                }
            }
        }
    }
}

fn check_prob_sums<F: Fn(&VertexId) -> Vec<usize>>(
    report: &mut ValidationReport,
    vertices: &[VertexId],
    edges: &[Edge],
    out: F,
) {
    for v in vertices {
        let idxs = out(v);
        if idxs.is_empty() {
            continue;
        }
        let sum: f64 = idxs.iter().map(|&i| edges[i].prob.value()).sum();
        if (sum - 1.0).abs() > PROB_SUM_TOL {
            report.push(
                ViolationKind::ProbabilitySum,
                format!(
                    "vertex {v}: outgoing probabilities sum to {sum:.9} (deficit {:.9})",
                    1.0 - sum
                ),
            );
        }
    }
}

/// Validates an event tree against its stage partition. Checks tree
/// structure, probability sums, stage consistency (equal out-degree and a
/// label bijection with identical probability strings) and cluster
/// consistency (identical holding specs).
pub fn validate(tree: &EventTree, stages: &StagePartition) -> ValidationReport {
    let mut report = ValidationReport::default();

    let counts = tree.parent_counts();
    for (v, c) in &counts {
        if **v == *tree.root() {
            if *c != 0 {
                report.push(
                    ViolationKind::TreeStructure,
                    format!("root {v} has an incoming edge"),
                );
            }
        } else if *c != 1 {
            report.push(
                ViolationKind::TreeStructure,
                format!("vertex {v} has {c} parents, expected exactly 1"),
            );
        }
    }

    check_probs_and_holdings(&mut report, tree.edges(), tree.edge_ids());
    check_prob_sums(&mut report, tree.vertices(), tree.edges(), |v| {
        tree.out_edges(v).to_vec()
    });

    // Stage consistency: same out-degree, and sorting outgoing edges by label
    // yields pairwise-equal (label, probability-string) vectors. Probability
    // equality is exact on the source decimal strings.
    for (stage_id, members) in stages.blocks() {
        let mut signature: Option<(Vec<(String, String)>, &VertexId)> = None;
        for v in members {
            if tree.is_leaf(v) {
                report.push(
                    ViolationKind::StageMismatch,
                    format!("stage {stage_id}: {v} is a leaf"),
                );
                continue;
            }
            let mut sig: Vec<(String, String)> = tree
                .out_edges(v)
                .iter()
                .map(|&i| {
                    (
                        tree.edges()[i].label.clone(),
                        tree.edges()[i].prob.repr().to_string(),
                    )
                })
                .collect();
            sig.sort();
            match &signature {
                None => signature = Some((sig, v)),
                Some((first, first_v)) => {
                    if first.len() != sig.len() {
                        report.push(
                            ViolationKind::StageOutDegree,
                            format!(
                                "stage {stage_id}: {first_v} and {v} have different out-degrees"
                            ),
                        );
                    } else if *first != sig {
                        report.push(
                            ViolationKind::StageMismatch,
                            format!("stage {stage_id}: {first_v} and {v} have different labelled transition vectors"),
                        );
                    }
                }
            }
        }
    }

    // Cluster consistency: edges sharing a cluster share an identical spec.
    let mut cluster_specs: BTreeMap<&str, (String, &EdgeId)> = BTreeMap::new();
    for (i, e) in tree.edges().iter().enumerate() {
        if let Some(c) = &e.cluster {
            let fp = e
                .holding
                .as_ref()
                .map(|h| h.fingerprint())
                .unwrap_or_else(|| "none".into());
            let id = &tree.edge_ids()[i];
            match cluster_specs.get(c.as_str()) {
                None => {
                    cluster_specs.insert(c, (fp, id));
                }
                Some((first, first_id)) => {
                    if *first != fp {
                        report.push(
                            ViolationKind::ClusterSpec,
                            format!("cluster {c}: edges {first_id} and {id} have different holding specs"),
                        );
                    }
                }
            }
        }
    }

    report
}

/// Validates a compiled graph: per-position probability sums, sink without
/// outgoing edges (acyclic case), and every position on some root-to-sink
/// path (cyclic edges count as sink-bound for co-reachability).
pub fn validate_ceg(graph: &CegGraph) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_probs_and_holdings(&mut report, graph.edges(), graph.edge_ids());
    check_prob_sums(&mut report, graph.vertices(), graph.edges(), |v| {
        graph.out_edges(v).to_vec()
    });

    if !graph.is_dynamic() && !graph.out_edges(graph.sink()).is_empty() {
        report.push(
            ViolationKind::TreeStructure,
            format!("sink {} has outgoing edges", graph.sink()),
        );
    }

    // Reachability from root.
    let mut reach: BTreeSet<&VertexId> = BTreeSet::new();
    let mut stack = vec![graph.root()];
    while let Some(v) = stack.pop() {
        if !reach.insert(v) {
            continue;
        }
        for &i in graph.out_edges(v) {
            stack.push(&graph.edges()[i].to);
        }
    }
    // Co-reachability to the sink, with cyclic edges treated as reaching it.
    let mut coreach: BTreeSet<&VertexId> = BTreeSet::new();
    coreach.insert(graph.sink());
    let mut changed = true;
    while changed {
        changed = false;
        for (i, e) in graph.edges().iter().enumerate() {
            let sink_bound = graph.cyclic_edges().contains(&graph.edge_ids()[i]);
            if (sink_bound || coreach.contains(&e.to)) && coreach.insert(&e.from) {
                changed = true;
            }
        }
    }
    for v in graph.vertices() {
        if !reach.contains(v) || !coreach.contains(v) {
            report.push(
                ViolationKind::Reachability,
                format!("vertex {v} lies on no root-to-sink path"),
            );
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// A loaded model document: either a hued event tree or a compiled graph,
/// always with a (possibly empty) stage partition.
#[derive(Debug, Clone)]
pub enum LoadedModel {
    Tree {
        tree: EventTree,
        stages: StagePartition,
    },
    Graph {
        graph: CegGraph,
        stages: StagePartition,
    },
}

fn parse_err(path: impl Into<String>, message: impl Into<String>) -> CegError {
    CegError::Parse {
        path: path.into(),
        message: message.into(),
    }
}

fn as_str<'a>(v: &'a serde_json::Value, path: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| parse_err(path, "expected a string"))
}

fn as_array<'a>(v: &'a serde_json::Value, path: &str) -> Result<&'a Vec<serde_json::Value>> {
    v.as_array()
        .ok_or_else(|| parse_err(path, "expected an array"))
}

fn decimal_field(v: &serde_json::Value, path: &str) -> Result<Decimal> {
    let s = as_str(v, path)?;
    Decimal::from_repr(s).map_err(|m| parse_err(path, m))
}

fn parse_holding(v: &serde_json::Value, path: &str) -> Result<Option<HoldingTimeSpec>> {
    if v.is_null() {
        return Ok(None);
    }
    let obj = v
        .as_object()
        .ok_or_else(|| parse_err(path, "expected an object or null"))?;
    let fam_val = obj
        .get("family")
        .ok_or_else(|| parse_err(format!("{path}.family"), "missing"))?;
    let family = HoldingFamily::parse(as_str(fam_val, &format!("{path}.family"))?)?;
    let params_val = obj
        .get("params")
        .ok_or_else(|| parse_err(format!("{path}.params"), "missing"))?;
    let mut params = Vec::new();
    for (i, p) in as_array(params_val, &format!("{path}.params"))?
        .iter()
        .enumerate()
    {
        params.push(decimal_field(p, &format!("{path}.params[{i}]"))?);
    }
    let convention = obj
        .get("convention")
        .map(|c| as_str(c, &format!("{path}.convention")).map(str::to_string))
        .transpose()?
        .ok_or_else(|| parse_err(format!("{path}.convention"), "missing"))?;
    let spec = HoldingTimeSpec {
        family,
        params,
        convention,
    };
    spec.check().map_err(|m| parse_err(path, m))?;
    Ok(Some(spec))
}

/// Parses a model document from JSON text. See `docs/formats.md` for the
/// schema. Returns a parse error naming the offending field.
pub fn load_model(text: &str) -> Result<LoadedModel> {
    let doc: serde_json::Value =
        serde_json::from_str(text).map_err(|e| parse_err("<document>", e.to_string()))?;
    let obj = doc
        .as_object()
        .ok_or_else(|| parse_err("<document>", "expected a JSON object"))?;

    let vertices_val = obj
        .get("vertices")
        .ok_or_else(|| parse_err("vertices", "missing"))?;
    let vertices_arr = as_array(vertices_val, "vertices")?;
    if vertices_arr.is_empty() {
        return Err(parse_err("vertices", "no root: vertex list is empty"));
    }
    let mut vertices = Vec::new();
    for (i, v) in vertices_arr.iter().enumerate() {
        vertices.push(VertexId(as_str(v, &format!("vertices[{i}]"))?.to_string()));
    }

    let edges_val = obj
        .get("edges")
        .ok_or_else(|| parse_err("edges", "missing"))?;
    let mut edges = Vec::new();
    for (i, ev) in as_array(edges_val, "edges")?.iter().enumerate() {
        let path = format!("edges[{i}]");
        let eo = ev
            .as_object()
            .ok_or_else(|| parse_err(&path, "expected an object"))?;
        let get = |k: &str| {
            eo.get(k)
                .ok_or_else(|| parse_err(format!("{path}.{k}"), "missing"))
        };
        edges.push(Edge {
            from: VertexId(as_str(get("from")?, &format!("{path}.from"))?.to_string()),
            to: VertexId(as_str(get("to")?, &format!("{path}.to"))?.to_string()),
            label: as_str(get("label")?, &format!("{path}.label"))?.to_string(),
            prob: decimal_field(get("prob")?, &format!("{path}.prob"))?,
            holding: parse_holding(
                eo.get("holding").unwrap_or(&serde_json::Value::Null),
                &format!("{path}.holding"),
            )?,
            cluster: None,
        });
    }

    // Clusters: map cluster id -> edge ids; attach to edges.
    if let Some(clusters_val) = obj.get("clusters") {
        let clusters = clusters_val
            .as_object()
            .ok_or_else(|| parse_err("clusters", "expected an object"))?;
        let provisional_ids = assign_edge_ids(&edges);
        for (cid, members) in clusters {
            for (i, m) in as_array(members, &format!("clusters.{cid}"))?
                .iter()
                .enumerate()
            {
                let id = EdgeId(as_str(m, &format!("clusters.{cid}[{i}]"))?.to_string());
                let idx = provisional_ids
                    .iter()
                    .position(|e| *e == id)
                    .ok_or_else(|| CegError::UnknownEdge(id.to_string()))?;
                edges[idx].cluster = Some(cid.clone());
            }
        }
    }

    let mut stage_blocks: BTreeMap<String, BTreeSet<VertexId>> = BTreeMap::new();
    if let Some(stages_val) = obj.get("stages") {
        let stages = stages_val
            .as_object()
            .ok_or_else(|| parse_err("stages", "expected an object"))?;
        for (sid, members) in stages {
            let mut block = BTreeSet::new();
            for (i, m) in as_array(members, &format!("stages.{sid}"))?
                .iter()
                .enumerate()
            {
                block.insert(VertexId(
                    as_str(m, &format!("stages.{sid}[{i}]"))?.to_string(),
                ));
            }
            stage_blocks.insert(sid.clone(), block);
        }
    }
    let stages = StagePartition::new(stage_blocks);

    let root = match obj.get("root") {
        Some(r) => VertexId(as_str(r, "root")?.to_string()),
        None => {
            // Derive: the unique vertex without incoming edges.
            let targets: BTreeSet<&VertexId> = edges.iter().map(|e| &e.to).collect();
            let roots: Vec<&VertexId> = vertices.iter().filter(|v| !targets.contains(v)).collect();
            match roots.as_slice() {
                [only] => (*only).clone(),
                [] => {
                    return Err(parse_err(
                        "root",
                        "no root: every vertex has an incoming edge",
                    ))
                }
                _ => {
                    return Err(parse_err(
                        "root",
                        "ambiguous root: declare `root` explicitly",
                    ))
                }
            }
        }
    };

    if let Some(sink_val) = obj.get("sink") {
        let sink = VertexId(as_str(sink_val, "sink")?.to_string());
        let mut cyclic = BTreeSet::new();
        if let Some(cv) = obj.get("cyclic_edges") {
            for (i, c) in as_array(cv, "cyclic_edges")?.iter().enumerate() {
                cyclic.insert(EdgeId(
                    as_str(c, &format!("cyclic_edges[{i}]"))?.to_string(),
                ));
            }
        }
        let mut untimed = BTreeSet::new();
        if let Some(uv) = obj.get("untimed_vertices") {
            for (i, u) in as_array(uv, "untimed_vertices")?.iter().enumerate() {
                untimed.insert(VertexId(
                    as_str(u, &format!("untimed_vertices[{i}]"))?.to_string(),
                ));
            }
        }
        let mut stage_of = BTreeMap::new();
        for (sid, members) in stages.blocks() {
            for m in members {
                stage_of.insert(m.clone(), sid.clone());
            }
        }
        let graph = CegGraph::new(
            vertices,
            edges,
            root,
            sink,
            cyclic,
            untimed,
            BTreeMap::new(),
            stage_of,
        )?;
        Ok(LoadedModel::Graph { graph, stages })
    } else {
        if obj
            .get("cyclic_edges")
            .map(|v| !v.as_array().map(|a| a.is_empty()).unwrap_or(true))
            == Some(true)
        {
            return Err(parse_err(
                "cyclic_edges",
                "cyclic edges require a `sink` (graph document)",
            ));
        }
        let tree = EventTree::new(vertices, edges, root)?;
        Ok(LoadedModel::Tree { tree, stages })
    }
}

fn holding_json(h: &Option<HoldingTimeSpec>) -> serde_json::Value {
    match h {
        None => serde_json::Value::Null,
        Some(spec) => serde_json::json!({
            "family": spec.family.name(),
            "params": spec.params.iter().map(|p| p.repr()).collect::<Vec<_>>(),
            "convention": spec.convention,
        }),
    }
}

fn edges_json(edges: &[Edge]) -> serde_json::Value {
    serde_json::Value::Array(
        edges
            .iter()
            .map(|e| {
                serde_json::json!({
                    "from": e.from.as_str(),
                    "to": e.to.as_str(),
                    "label": e.label,
                    "prob": e.prob.repr(),
                    "holding": holding_json(&e.holding),
                })
            })
            .collect(),
    )
}

fn clusters_json(edges: &[Edge], ids: &[EdgeId]) -> serde_json::Value {
    let mut clusters: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (e, id) in edges.iter().zip(ids) {
        if let Some(c) = &e.cluster {
            clusters.entry(c).or_default().push(id.as_str());
        }
    }
    serde_json::json!(clusters)
}

fn stages_json(stages: &StagePartition) -> serde_json::Value {
    let map: BTreeMap<&str, Vec<&str>> = stages
        .blocks()
        .iter()
        .map(|(k, vs)| (k.as_str(), vs.iter().map(|v| v.as_str()).collect()))
        .collect();
    serde_json::json!(map)
}

/// Renders a model back to deterministic, pretty-printed JSON. Probabilities
/// and parameters keep their source decimal strings, so `save(load(d))` is
/// semantically identical to `d`.
pub fn save_model(model: &LoadedModel) -> String {
    let value = match model {
        LoadedModel::Tree { tree, stages } => serde_json::json!({
            "root": tree.root().as_str(),
            "vertices": tree.vertices().iter().map(VertexId::as_str).collect::<Vec<_>>(),
            "edges": edges_json(tree.edges()),
            "stages": stages_json(stages),
            "clusters": clusters_json(tree.edges(), tree.edge_ids()),
        }),
        LoadedModel::Graph { graph, stages } => serde_json::json!({
            "root": graph.root().as_str(),
            "sink": graph.sink().as_str(),
            "vertices": graph.vertices().iter().map(VertexId::as_str).collect::<Vec<_>>(),
            "edges": edges_json(graph.edges()),
            "stages": stages_json(stages),
            "clusters": clusters_json(graph.edges(), graph.edge_ids()),
            "cyclic_edges": graph.cyclic_edges().iter().map(EdgeId::as_str).collect::<Vec<_>>(),
            "untimed_vertices": graph.untimed_vertices().iter().map(VertexId::as_str).collect::<Vec<_>>(),
        }),
    };
    let mut out = serde_json::to_string_pretty(&value).expect("json rendering cannot fail");
    out.push('\n');
    out
}
