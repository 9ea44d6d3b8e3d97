//! Property tests over the random model corpus plus a few worked spot
//! checks of the joint timed-path probability.

use std::collections::BTreeSet;

use proptest::prelude::*;

use ceg::distributions::joint_timed_path_probability;
use ceg::model::{load_model, save_model, LoadedModel, TimedPath, TimedStep};
use ceg::oracle::{enumerate_paths, random_model};
use ceg::propagation::{build_transporter, propagate, Evidence};
use ceg::staging::minimize;

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    /// Revised transition probabilities are a distribution at every
    /// transporter vertex with outgoing edges.
    #[test]
    fn revised_probabilities_normalize(seed in 0u64..10_000) {
        let m = random_model(seed);
        let transporter = build_transporter(&m.graph, &m.evidence).unwrap();
        let (_, revised) = propagate(&m.graph, &transporter, &m.evidence).unwrap();
        for v in revised.transporter.positions() {
            let idxs = revised.transporter.out_edges(v);
            if idxs.is_empty() {
                continue;
            }
            let sum: f64 = idxs.iter().map(|&i| revised.revised[&revised.transporter.edge_ids()[i]]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-9, "{v}: {sum}");
        }
    }

    /// Adding further intrinsic evidence never adds vertices or edges to
    /// the transporter.
    #[test]
    fn transporter_shrinks_monotonically(seed in 0u64..10_000, keep_mask in 1u32..255) {
        let m = random_model(seed);
        let base = Evidence::from_retained(m.evidence.retained.iter().cloned());
        let transporter = build_transporter(&m.graph, &base).unwrap();
        // Further evidence: keep a nonempty subset of the transporter paths.
        let paths = enumerate_paths(&transporter, 10_000).unwrap();
        let kept: Vec<_> = paths
            .rows
            .iter()
            .filter(|r| keep_mask & (1 << (r.id % 8)) != 0)
            .collect();
        prop_assume!(!kept.is_empty());
        let mut retained = BTreeSet::new();
        for row in kept {
            retained.extend(row.edge_ids.iter().cloned());
        }
        let narrower = build_transporter(&m.graph, &Evidence::from_retained(retained)).unwrap();
        let old_edges: BTreeSet<_> = transporter.edge_ids().iter().collect();
        for e in narrower.edge_ids() {
            prop_assert!(old_edges.contains(e));
        }
        prop_assert!(narrower.vertices().len() <= transporter.vertices().len());
        prop_assert!(narrower.edges().len() <= transporter.edges().len());
    }

    /// Compiled graphs are already minimal (recomputing positions on the
    /// quotient is the discrete partition), and minimize is idempotent.
    #[test]
    fn compiled_graphs_are_minimal(seed in 0u64..10_000) {
        let m = random_model(seed);
        let once = minimize(&m.compiled.graph).unwrap();
        prop_assert_eq!(once.vertices().len(), m.compiled.graph.vertices().len());
        let twice = minimize(&once).unwrap();
        prop_assert_eq!(twice.vertices().len(), once.vertices().len());
        prop_assert_eq!(twice.edges().len(), once.edges().len());
    }

    /// Compilation preserves the probability of every label sequence.
    #[test]
    fn compilation_preserves_label_measure(seed in 0u64..10_000) {
        let m = random_model(seed);
        let tree_measure = ceg::fixtures::tree_label_sequence_measure(&m.tree);
        let graph_measure = ceg::fixtures::ceg_label_sequence_measure(&m.compiled.graph);
        prop_assert_eq!(tree_measure.len(), graph_measure.len());
        for (labels, p) in tree_measure {
            let q = graph_measure.get(&labels).copied().unwrap_or(0.0);
            prop_assert!((p - q).abs() < 1e-12, "{:?}: {} vs {}", labels, p, q);
        }
    }

    /// Model files survive a save/load/save cycle byte for byte, keeping
    /// every decimal string.
    #[test]
    fn save_load_round_trip_is_stable(seed in 0u64..10_000) {
        let m = random_model(seed);
        let doc = save_model(&LoadedModel::Graph { graph: m.graph.clone(), stages: Default::default() });
        let reloaded = load_model(&doc).unwrap();
        let again = save_model(&reloaded);
        prop_assert_eq!(doc, again);
    }

    /// Path priors over any compiled graph sum to one.
    #[test]
    fn path_priors_sum_to_one(seed in 0u64..10_000) {
        let m = random_model(seed);
        let table = enumerate_paths(&m.graph, 10_000).unwrap();
        let total: f64 = table.rows.iter().map(|r| r.prior).sum();
        prop_assert!((total - 1.0).abs() < 1e-9, "{total}");
    }
}

#[test]
fn joint_timed_path_probability_matches_hand_product() {
    let graph = ceg::fixtures::reinfection_present_slice();
    let path = TimedPath {
        steps: vec![
            TimedStep {
                vertex: "w0@3".into(),
                edge: "w0@3:strain-1:w1@3".into(),
                hold: 2.5,
            },
            TimedStep {
                vertex: "w1@3".into(),
                edge: "w1@3:home:w4@3".into(),
                hold: 4.0,
            },
            TimedStep {
                vertex: "w4@3".into(),
                edge: "w4@3:recovered:w_inf".into(),
                hold: 4.5,
            },
        ],
    };
    let p = joint_timed_path_probability(&graph, &path).unwrap();
    // 0.4 * 0.55 * 0.8 times the densities 2e^-5, phi(0.5)/2 and the pinned
    // recovery density 0.91921.
    let expected = 0.176 * 0.013475893998170934 * 0.17603266338214976 * 0.91921;
    assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");
}

#[test]
fn joint_timed_path_probability_edge_cases() {
    let graph = ceg::fixtures::reinfection_present_slice();
    // Empty path: the empty product.
    assert_eq!(
        joint_timed_path_probability(&graph, &TimedPath::default()).unwrap(),
        1.0
    );

    // A zero-probability edge zeroes the product.
    let doc = r#"{
        "root": "r", "sink": "w_inf", "vertices": ["r", "w_inf"],
        "edges": [
            {"from": "r", "to": "w_inf", "label": "never", "prob": "0",
             "holding": {"family": "exponential", "params": ["1"], "convention": "rate"}},
            {"from": "r", "to": "w_inf", "label": "always", "prob": "1",
             "holding": {"family": "exponential", "params": ["1"], "convention": "rate"}}
        ]
    }"#;
    let LoadedModel::Graph { graph, .. } = load_model(doc).unwrap() else {
        panic!()
    };
    let path = TimedPath {
        steps: vec![TimedStep {
            vertex: "r".into(),
            edge: "r:never:w_inf".into(),
            hold: 1.0,
        }],
    };
    assert_eq!(joint_timed_path_probability(&graph, &path).unwrap(), 0.0);

    // Untimed steps contribute probability only.
    let falls = ceg::fixtures::falls_model();
    let path = TimedPath {
        steps: vec![
            TimedStep {
                vertex: "w0".into(),
                edge: "w0:communal:w1".into(),
                hold: 0.0,
            },
            TimedStep {
                vertex: "w1".into(),
                edge: "w1:low-risk:w4".into(),
                hold: 0.0,
            },
            TimedStep {
                vertex: "w4".into(),
                edge: "w4:no-fall:w_inf".into(),
                hold: 10.0,
            },
        ],
    };
    let p = joint_timed_path_probability(&falls, &path).unwrap();
    let expected = 0.35 * 0.6 * 0.7 * (0.05 * (-0.05_f64 * 10.0).exp());
    assert!((p - expected).abs() < 1e-15, "{p} vs {expected}");

    // A timed edge without a holding spec is an incomplete model.
    let doc = r#"{
        "root": "r", "sink": "w_inf", "vertices": ["r", "w_inf"],
        "edges": [{"from": "r", "to": "w_inf", "label": "go", "prob": "1", "holding": null}]
    }"#;
    let LoadedModel::Graph { graph, .. } = load_model(doc).unwrap() else {
        panic!()
    };
    let path = TimedPath {
        steps: vec![TimedStep {
            vertex: "r".into(),
            edge: "r:go:w_inf".into(),
            hold: 1.0,
        }],
    };
    assert!(matches!(
        joint_timed_path_probability(&graph, &path),
        Err(ceg::CegError::IncompleteModel(_))
    ));
}
