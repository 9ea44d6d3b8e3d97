//! End-to-end acceptance suite for the inference engine.
//!
//! Each criterion is one test that prints a `[PASS]`/`[FAIL]` line (visible
//! with `--nocapture`) and asserts at its stated tolerance. Reference values
//! for the reinfection example are hand-derived from the fixture's
//! parameters: closed-form densities, the backward/forward recursion worked
//! by hand, and values recorded at the precision of their original source
//! (five decimals, one emphasis at four).

use std::collections::BTreeSet;
use std::time::Instant;

use ceg::dynamic::{
    extend_present_with_past, forecast, infer_present, revise_future, split, unroll, DcegModel,
    ForecastQuery, ForecastResult,
};
use ceg::fixtures;
use ceg::model::{EdgeId, VertexId};
use ceg::oracle::{self, differential_report, enumerate_paths, posterior_by_enumeration};
use ceg::propagation::{build_transporter, path_posteriors, propagate, Evidence, OpCount};

fn pass(name: &str, detail: String) {
    println!("[PASS] {name}: {detail}");
}

struct Check {
    name: &'static str,
    failures: Vec<String>,
    details: Vec<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Check {
            name,
            failures: Vec::new(),
            details: Vec::new(),
        }
    }

    fn close(&mut self, label: &str, got: f64, want: f64, tol: f64) {
        let err = (got - want).abs();
        self.details
            .push(format!("{label} |{got:.7}-{want}|={err:.2e}"));
        if err.is_nan() || err > tol {
            self.failures.push(format!(
                "{label}: got {got}, want {want} (tol {tol}, err {err:.3e})"
            ));
        }
    }

    fn ok(&mut self, label: &str, cond: bool) {
        if cond {
            self.details.push(label.to_string());
        } else {
            self.failures.push(label.to_string());
        }
    }

    fn finish(self, detail: String) {
        if self.failures.is_empty() {
            pass(self.name, detail);
        } else {
            println!("[FAIL] {}:", self.name);
            for f in &self.failures {
                println!("       {f}");
            }
            panic!("{} failed:\n{}", self.name, self.failures.join("\n"));
        }
    }
}

fn present_inference() -> (
    ceg::model::CegGraph,
    Evidence,
    ceg::propagation::PropagationState,
    ceg::propagation::RevisedModel,
) {
    let graph = fixtures::reinfection_present_slice();
    let evidence = fixtures::treated_recovered_evidence();
    let transporter = build_transporter(&graph, &evidence).expect("transporter");
    let (state, revised) = propagate(&graph, &transporter, &evidence).expect("propagate");
    (graph, evidence, state, revised)
}

fn id(s: &str) -> EdgeId {
    EdgeId(s.to_string())
}

fn v(s: &str) -> VertexId {
    VertexId(s.to_string())
}

// Closed-form densities of the fixture's holding specs at the observed
// holds (2.5, 4, 4.5):
//   rate-2 exponential at 2.5     = 2 e^-5        = 0.013475893998170934
//   rate-2.8 exponential at 2.5   = 2.8 e^-7      = 0.002553269503552645
//   normal(7,1) at 4              = phi(3)        = 0.004431848411938008
//   normal(5,2) at 4              = phi(0.5)/2    = 0.17603266338214976
const DENS_STRAIN1: f64 = 0.013475893998170934;
const DENS_STRAIN2: f64 = 0.002553269503552645;
const DENS_HOSPITAL: f64 = 0.004431848411938008;
const DENS_HOME: f64 = 0.17603266338214976;
// Pinned recovery densities at 4.5 (empirical grids in the fixture).
const DENS_REC_HOSP: f64 = 0.17826;
const DENS_REC_HOME: f64 = 0.91921;

#[test]
fn criterion_01_potentials_and_closed_form_densities() {
    let start = Instant::now();
    let (_, _, state, _) = present_inference();
    let elapsed = start.elapsed();

    let mut c = Check::new("criterion 1: backward potentials and density conventions");
    // h-potentials recorded at five decimals; rate and mean-sd conventions.
    c.close(
        "h e1(w0,w1)",
        state.h_potential[&id("w0@3:strain-1:w1@3")],
        0.01348,
        1e-5,
    );
    c.close(
        "h e2(w0,w1)",
        state.h_potential[&id("w0@3:strain-2:w1@3")],
        0.00255,
        1e-5,
    );
    c.close(
        "h e(w1,w3)",
        state.h_potential[&id("w1@3:hospital:w3@3")],
        0.00443,
        1e-5,
    );
    c.close(
        "h e(w1,w4)",
        state.h_potential[&id("w1@3:home:w4@3")],
        0.17603,
        1e-5,
    );
    // All six t-potentials.
    c.close(
        "t e(w3,sink)",
        state.t_potential[&id("w3@3:recovered:w_inf")],
        0.73,
        1e-5,
    );
    c.close(
        "t e(w4,sink)",
        state.t_potential[&id("w4@3:recovered:w_inf")],
        0.80,
        1e-5,
    );
    c.close(
        "t e(w1,w3)",
        state.t_potential[&id("w1@3:hospital:w3@3")],
        0.3285,
        1e-5,
    );
    c.close(
        "t e(w1,w4)",
        state.t_potential[&id("w1@3:home:w4@3")],
        0.44,
        1e-5,
    );
    c.close(
        "t e1(w0,w1)",
        state.t_potential[&id("w0@3:strain-1:w1@3")],
        0.3074,
        1e-5,
    );
    c.close(
        "t e2(w0,w1)",
        state.t_potential[&id("w0@3:strain-2:w1@3")],
        0.23055,
        1e-5,
    );
    c.ok("runtime < 1s", elapsed.as_secs_f64() < 1.0);
    c.finish(format!(
        "10 values within 1e-5, {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ));
}

#[test]
fn criterion_02_emphases() {
    let start = Instant::now();
    let (_, _, state, _) = present_inference();
    let elapsed = start.elapsed();

    // Independent hand recursion from the frozen densities.
    let phi_w1 = 0.45 * 0.73 + 0.55 * 0.8;
    let phit_w3 = 0.73 * DENS_REC_HOSP;
    let phit_w4 = 0.8 * DENS_REC_HOME;
    let phit_w1 = 0.45 * 0.73 * DENS_HOSPITAL + 0.55 * 0.8 * DENS_HOME;
    let phit_w0 = 0.4 * phi_w1 * DENS_STRAIN1 + 0.3 * phi_w1 * DENS_STRAIN2;

    let mut c = Check::new("criterion 2: backward emphases");
    c.close("t-emphasis w3", state.t_emphasis[&v("w3@3")], 0.73, 1e-5);
    c.close("t-emphasis w4", state.t_emphasis[&v("w4@3")], 0.80, 1e-5);
    c.close("t-emphasis w1", state.t_emphasis[&v("w1@3")], 0.7685, 1e-5);
    // The w0 entry was recorded at four decimals; its exact value is
    // 0.7 * 0.7685 = 0.53795, which sits on the rounding boundary of
    // 0.5380. Compared at the recorded precision (half an ulp of the
    // fourth decimal) plus the exact value at full precision.
    c.close(
        "t-emphasis w0 (4dp record)",
        state.t_emphasis[&v("w0@3")],
        0.5380,
        5.000001e-5,
    );
    c.close(
        "t-emphasis w0 (exact)",
        state.t_emphasis[&v("w0@3")],
        0.53795,
        1e-9,
    );
    c.close("h-emphasis w3", state.h_emphasis[&v("w3@3")], 0.13013, 1e-5);
    c.close("h-emphasis w4", state.h_emphasis[&v("w4@3")], 0.73537, 1e-5);
    c.close("h-emphasis w1", state.h_emphasis[&v("w1@3")], 0.07891, 1e-5);
    c.close("h-emphasis w0", state.h_emphasis[&v("w0@3")], 0.00473, 1e-5);
    // Full-precision recursion agreement.
    c.close(
        "h-emphasis w3 (exact)",
        state.h_emphasis[&v("w3@3")],
        phit_w3,
        1e-12,
    );
    c.close(
        "h-emphasis w4 (exact)",
        state.h_emphasis[&v("w4@3")],
        phit_w4,
        1e-12,
    );
    c.close(
        "h-emphasis w1 (exact)",
        state.h_emphasis[&v("w1@3")],
        phit_w1,
        1e-12,
    );
    c.close(
        "h-emphasis w0 (exact)",
        state.h_emphasis[&v("w0@3")],
        phit_w0,
        1e-12,
    );
    c.ok("runtime < 1s", elapsed.as_secs_f64() < 1.0);
    c.finish(format!(
        "8 recorded values matched, exact recursion at 1e-12, {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ));
}

fn classify(labels: &[String]) -> usize {
    match (labels[0].as_str(), labels[1].as_str()) {
        ("strain-1", "hospital") => 0,
        ("strain-1", "home") => 1,
        ("strain-2", "hospital") => 2,
        ("strain-2", "home") => 3,
        other => panic!("unexpected path {other:?}"),
    }
}

#[test]
fn criterion_03_path_posteriors_with_and_without_timing() {
    let start = Instant::now();
    let (graph, evidence, _, revised) = present_inference();
    let timed = path_posteriors(&revised);

    let untimed_ev = evidence.non_temporal();
    let transporter = build_transporter(&graph, &untimed_ev).unwrap();
    let (_, untimed_revised) = propagate(&graph, &transporter, &untimed_ev).unwrap();
    let untimed = path_posteriors(&untimed_revised);
    let elapsed = start.elapsed();

    let reference_timed = [0.01615, 0.85944, 0.00230, 0.12211];
    let reference_untimed = [0.24426, 0.32717, 0.18320, 0.24537];

    let mut c = Check::new("criterion 3: path posteriors with and without timing");
    c.ok("four timed paths", timed.len() == 4);
    for p in &timed {
        let k = classify(&p.labels);
        c.close(
            &format!("pi(path {})", k + 1),
            p.probability,
            reference_timed[k],
            5e-4,
        );
    }
    // Untimed transporter keeps the untreated branch: filter to the four
    // treated-and-recovered paths and renormalize over the treated event.
    let mut untimed_probs = [0.0; 4];
    for p in &untimed {
        if p.labels.len() == 3 && p.labels[2] == "recovered" && p.labels[0] != "strain-3" {
            untimed_probs[classify(&p.labels)] = p.probability;
        }
    }
    let total: f64 = untimed_probs.iter().sum();
    for (k, p) in untimed_probs.iter().enumerate() {
        c.close(
            &format!("pi*(path {})", k + 1),
            p / total,
            reference_untimed[k],
            5e-4,
        );
    }
    c.ok("runtime < 1s", elapsed.as_secs_f64() < 1.0);
    c.finish(format!(
        "8 posteriors within 5e-4, {:.1} ms",
        elapsed.as_secs_f64() * 1e3
    ));
}

#[test]
fn criterion_04_operation_count() {
    let (_, _, state, _) = present_inference();
    let mut c = Check::new("criterion 4: operation count");
    let want = OpCount {
        t_potentials: 8,
        h_potentials: 8,
        t_emphases: 5,
        h_emphases: 5,
        revised: 6,
    };
    c.ok(
        &format!("ops decompose as 8+8+5+5+6 (got {})", state.ops),
        state.ops == want && state.ops.total() == 32,
    );
    c.finish(format!("{}", state.ops));
}

#[test]
fn criterion_05_emphasis_identities_on_random_corpus() {
    let start = Instant::now();
    let report = differential_report(100, 0x5EED).expect("corpus runs");
    let elapsed = start.elapsed();
    let mut c = Check::new("criterion 5: emphases are event conditionals (100 random models)");
    c.ok(
        &format!(
            "t-emphasis identity max err {:.2e}",
            report.max_t_emphasis_error
        ),
        report.max_t_emphasis_error < 1e-9,
    );
    c.ok(
        &format!(
            "h-emphasis identity max err {:.2e}",
            report.max_h_emphasis_error
        ),
        report.max_h_emphasis_error < 1e-9,
    );
    c.ok(
        &format!(
            "tree-copy conditional identity max err {:.2e}",
            report.max_tree_identity_error
        ),
        report.max_tree_identity_error < 1e-9,
    );
    c.ok("runtime < 60s", elapsed.as_secs_f64() < 60.0);
    c.finish(format!(
        "max errors t={:.2e} h={:.2e} tree={:.2e}, {:.2} s",
        report.max_t_emphasis_error,
        report.max_h_emphasis_error,
        report.max_tree_identity_error,
        elapsed.as_secs_f64()
    ));
}

#[test]
fn criterion_06_differential_agreement_on_random_corpus() {
    let start = Instant::now();
    let report = differential_report(100, 0xD1FF).expect("corpus runs");
    let elapsed = start.elapsed();
    let mut c = Check::new("criterion 6: propagate matches enumeration (100 random models)");
    c.ok(
        &format!(
            "revised edge probabilities max err {:.2e}",
            report.max_edge_error
        ),
        report.max_edge_error < 1e-9,
    );
    c.ok(
        &format!("path posteriors max err {:.2e}", report.max_path_error),
        report.max_path_error < 1e-9,
    );
    c.ok("runtime < 60s", elapsed.as_secs_f64() < 60.0);
    c.finish(format!(
        "max errors edges={:.2e} paths={:.2e}, {:.2} s",
        report.max_edge_error,
        report.max_path_error,
        elapsed.as_secs_f64()
    ));
}

#[test]
fn criterion_07_window_extension_equals_full_repropagation() {
    let (template, _) = fixtures::reinfection_model_graph();
    let model = DcegModel::new(template).unwrap();
    let present_evidence = fixtures::treated_recovered_evidence();
    let s = split(&model, &present_evidence, 3, 0).unwrap();
    let prior = infer_present(&s.present, &present_evidence).unwrap();

    // Second infection was strain 1: slice-2 evidence keeps only that entry
    // edge, both treatments, and the recoveries into slice 3.
    let slice2: BTreeSet<EdgeId> = [
        "w0@2:strain-1:w1@2",
        "w1@2:hospital:w3@2",
        "w1@2:home:w4@2",
        "w3@2:recovered:w0@3",
        "w4@2:recovered:w0@3",
    ]
    .iter()
    .map(|s| id(s))
    .collect();
    let new_evidence = Evidence::from_retained(slice2.clone());
    let (s2, extended) = extend_present_with_past(&model, &s, &prior, &new_evidence, 2).unwrap();

    // Full re-propagation over the enlarged window with the same evidence,
    // times still anchored at the old window's root.
    let wide = unroll(&model, 2, 1).unwrap();
    let combined = Evidence {
        retained: slice2.union(&present_evidence.retained).cloned().collect(),
        times: present_evidence.times.clone(),
        times_anchor: Some(v("w0@3")),
        arrival_query: None,
    };
    let transporter = build_transporter(&wide, &combined).unwrap();
    let (full_state, full_revised) = propagate(&wide, &transporter, &combined).unwrap();

    let mut c = Check::new("criterion 7: incremental window extension");
    c.ok("one strain edge survives in slice 2", {
        let slice2_strains = extended
            .transporter
            .edge_ids()
            .iter()
            .filter(|e| e.as_str().starts_with("w0@2:strain"))
            .count();
        slice2_strains == 1
    });
    let mut max_err: f64 = 0.0;
    for (eid, hat) in &full_revised.revised {
        let ext = extended.revised.revised[eid];
        max_err = max_err.max((ext - hat).abs());
    }
    for (vid, phi) in &full_state.t_emphasis {
        max_err = max_err.max((extended.state.t_emphasis[vid] - phi).abs());
    }
    for (vid, phi) in &full_state.h_emphasis {
        max_err = max_err.max((extended.state.h_emphasis[vid] - phi).abs());
    }
    c.ok(
        &format!("extension equals full re-propagation (max err {max_err:.2e})"),
        max_err < 1e-12,
    );
    // Downstream artifacts are reused, not recomputed.
    c.ok(
        "downstream potentials unchanged",
        prior
            .state
            .t_potential
            .iter()
            .all(|(k, val)| extended.state.t_potential[k].to_bits() == val.to_bits()),
    );
    c.ok("no-op extension returns the split unchanged", {
        let (s3, again) =
            extend_present_with_past(&model, &s2, &extended, &new_evidence, 2).unwrap();
        s3.first_slice == 2 && again.revised.revised.len() == extended.revised.revised.len()
    });
    c.finish(format!(
        "max err {max_err:.2e} over {} edges",
        full_revised.revised.len()
    ));
}

#[test]
fn criterion_08_future_model_renormalization() {
    let (template, _) = fixtures::reinfection_model_graph();
    let model = DcegModel::new(template.clone()).unwrap();

    let mut c = Check::new("criterion 8: future model");
    // No future-relevant evidence: the revision is the identity and the two
    // parallel entry edges merge with a mixture holding time.
    let smp = revise_future(&model, None).unwrap();
    c.ok("six states", smp.states.len() == 6);
    let w0 = smp.index_of(&v("w0")).unwrap();
    let w1 = smp.index_of(&v("w1")).unwrap();
    let sink = smp.index_of(&v("w_inf")).unwrap();
    c.close("merged entry transition", smp.matrix[w0][w1], 0.7, 1e-12);
    c.ok(
        "entry holding is a two-component mixture",
        smp.holdings[&(w0, w1)].len() == 2,
    );
    c.ok(
        "sink is absorbing",
        smp.absorbing[sink] && smp.matrix[sink][sink] == 1.0,
    );
    for (i, row) in smp.matrix.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        c.close(&format!("row sum {}", smp.states[i]), sum, 1.0, 1e-9);
    }
    // Full transition support: entries branch to the two illness states,
    // treatment branches to the two care settings, every outcome state
    // returns to the entry or is absorbed.
    let expect = |name: &str, want: &[&str]| {
        let i = smp.index_of(&v(name)).unwrap();
        let got: Vec<&str> = smp.matrix[i]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(j, _)| smp.states[j].as_str())
            .collect();
        got == want
    };
    c.ok(
        "entry state branches to both illness states",
        expect("w0", &["w1", "w2"]),
    );
    c.ok(
        "treatment state branches to both care settings",
        expect("w1", &["w3", "w4"]),
    );
    c.ok(
        "untreated outcome loops or absorbs",
        expect("w2", &["w0", "w_inf"]),
    );
    c.ok(
        "hospital outcome loops or absorbs",
        expect("w3", &["w0", "w_inf"]),
    );
    c.ok(
        "home outcome loops or absorbs",
        expect("w4", &["w0", "w_inf"]),
    );

    // Excluding the untreatable strain forever renormalizes the root row to
    // (0.4, 0.3)/0.7 = (4/7, 3/7).
    let retained: BTreeSet<EdgeId> = template
        .edge_ids()
        .iter()
        .filter(|e| !e.as_str().starts_with("w0:strain-3"))
        .cloned()
        .collect();
    let revised = revise_future(&model, Some(&Evidence::from_retained(retained))).unwrap();
    let w0 = revised.index_of(&v("w0")).unwrap();
    let w1 = revised.index_of(&v("w1")).unwrap();
    let mixture = &revised.holdings[&(w0, w1)];
    c.close(
        "renormalized strain-1 weight",
        mixture[0].0,
        4.0 / 7.0,
        1e-12,
    );
    c.close(
        "renormalized strain-2 weight",
        mixture[1].0,
        3.0 / 7.0,
        1e-12,
    );
    for (i, row) in revised.matrix.iter().enumerate() {
        let sum: f64 = row.iter().sum();
        c.close(
            &format!("revised row sum {}", revised.states[i]),
            sum,
            1.0,
            1e-9,
        );
    }
    // Embedded-chain sanity: two-step distribution and eventual absorption.
    let r = forecast(
        &smp,
        &ForecastQuery::NStep {
            from: v("w0"),
            steps: 2,
        },
        0,
        0,
    )
    .unwrap();
    if let ForecastResult::Distribution {
        states,
        probabilities,
    } = r
    {
        let get = |n: &str| probabilities[states.iter().position(|s| s.as_str() == n).unwrap()];
        c.close("two-step mass at w3", get("w3"), 0.315, 1e-12);
        c.close("two-step mass at w4", get("w4"), 0.385, 1e-12);
        c.close("two-step mass at w0", get("w0"), 0.27, 1e-12);
        c.close("two-step mass at sink", get("w_inf"), 0.03, 1e-12);
    } else {
        c.ok("n-step query returns a distribution", false);
    }
    c.finish("merged entry edge, exact renormalization, stochastic rows".into());
}

#[test]
fn criterion_09_mixed_timed_untimed_propagation() {
    let graph = fixtures::falls_model();
    // Keep every edge; the six observed transition times select the
    // length-six histories (high-risk, fall, hospital or community care).
    let evidence = Evidence::vacuous(&graph).with_times(vec![
        Some(0.0),
        Some(0.0),
        Some(0.0),
        Some(20.0),
        Some(20.0),
        Some(55.0),
    ]);
    let transporter = build_transporter(&graph, &evidence).unwrap();
    let (state, revised) = propagate(&graph, &transporter, &evidence).unwrap();

    let table = enumerate_paths(&graph, 1000).unwrap();
    let oracle = posterior_by_enumeration(&graph, &table, &evidence).unwrap();

    let mut c = Check::new("criterion 9: mixed timed/untimed propagation");
    let untimed: Vec<&str> = vec!["w0", "w1", "w2", "w3", "w6"];
    for name in &untimed {
        let vid = v(name);
        if !transporter.vertices().contains(&vid) {
            continue;
        }
        // Untimed vertices revise exactly as in the non-temporal algorithm.
        for &i in transporter.out_edges(&vid) {
            let eid = &transporter.edge_ids()[i];
            let plain = state.t_potential[eid] / state.t_emphasis[&vid];
            c.close(
                &format!("plain revision at {eid}"),
                revised.revised[eid],
                plain,
                1e-9,
            );
        }
        c.close(
            &format!("h-emphasis equals t-emphasis at {name}"),
            state.h_emphasis[&vid],
            state.t_emphasis[&vid],
            0.0,
        );
    }
    let mut max_err: f64 = 0.0;
    for (eid, hat) in &revised.revised {
        max_err = max_err.max((hat - oracle.edge_posteriors[eid]).abs());
    }
    c.ok(
        &format!("all revisions match enumeration (max err {max_err:.2e})"),
        max_err < 1e-9,
    );
    c.ok("timed vertices get density-weighted revisions", {
        // At w6 the two options have equal t-potential shares only if the
        // oracle says so; check that timing actually modulated w8 vs w9
        // downstream by comparing against the untimed run.
        let untimed_ev = evidence.non_temporal();
        let t2 = build_transporter(&graph, &untimed_ev).unwrap();
        let (_, r2) = propagate(&graph, &t2, &untimed_ev).unwrap();
        let timed_w8 = revised.revised[&id("w8:recovered:w_inf")];
        let plain_w8 = r2.revised[&id("w8:recovered:w_inf")];
        (timed_w8 - plain_w8).abs() > 1e-3
    });
    c.finish(format!("max enumeration err {max_err:.2e}"));
}

#[test]
fn criterion_10_simulation_consistency() {
    let (template, _) = fixtures::reinfection_model_graph();
    let n = 100_000;
    let runs = oracle::simulate_dynamic(&template, n, 0xABCD, 10_000).unwrap();

    // Condition on: recovered in slices one and two, then treated and
    // recovered in slice three. Classify the slice-three history.
    let mut counts = [0usize; 4];
    let mut kept = 0usize;
    for run in &runs {
        let slice3: Vec<&oracle::DynamicStep> = run.iter().filter(|s| s.slice == 3).collect();
        if run
            .iter()
            .filter(|s| s.slice < 3)
            .any(|s| s.edge.as_str().contains("died"))
        {
            continue;
        }
        if slice3.len() != 3 {
            continue;
        }
        let labels: Vec<&str> = slice3
            .iter()
            .map(|s| s.edge.as_str().split(':').nth(1).unwrap())
            .collect();
        if labels[2] != "recovered" || labels[0] == "strain-3" {
            continue;
        }
        kept += 1;
        let k = match (labels[0], labels[1]) {
            ("strain-1", "hospital") => 0,
            ("strain-1", "home") => 1,
            ("strain-2", "hospital") => 2,
            ("strain-2", "home") => 3,
            other => panic!("unexpected {other:?}"),
        };
        counts[k] += 1;
    }

    let reference = [0.24426_f64, 0.32717, 0.18320, 0.24537];
    let mut c = Check::new("criterion 10: conditioned simulation reproduces untimed posteriors");
    c.ok(
        &format!("enough conditioned trajectories ({kept})"),
        kept > 10_000,
    );
    for (k, want) in reference.iter().enumerate() {
        let freq = counts[k] as f64 / kept as f64;
        let se = (want * (1.0 - want) / kept as f64).sqrt();
        c.ok(
            &format!(
                "path {} frequency {freq:.5} vs {want} (3se = {:.5})",
                k + 1,
                3.0 * se
            ),
            (freq - want).abs() <= 3.0 * se,
        );
    }
    c.finish(format!("{kept} of {n} trajectories conditioned"));
}
