//! Regenerates the model files shipped under `models/` from the fixtures:
//!
//! ```sh
//! cargo run -p ceg --example generate_models -- models
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ceg::fixtures;
use ceg::model::{save_model, EdgeId, LoadedModel};
use ceg::propagation::{save_evidence, Evidence};

fn main() {
    let dir = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "models".to_string());
    let dir = Path::new(&dir);
    fs::create_dir_all(dir).expect("create output directory");

    fs::write(
        dir.join("infection_tree.json"),
        fixtures::infection_tree_doc(),
    )
    .unwrap();

    let (graph, stages) = fixtures::reinfection_model_graph();
    fs::write(
        dir.join("reinfection.json"),
        save_model(&LoadedModel::Graph {
            graph: graph.clone(),
            stages,
        }),
    )
    .unwrap();

    fs::write(
        dir.join("reinfection_present_evidence.json"),
        save_evidence(&fixtures::treated_recovered_evidence()),
    )
    .unwrap();

    // Arrival-time query: the unit is known to have reached the treatment
    // decision 2.5 days after the last recovery; which strain was it?
    let arrival = Evidence {
        arrival_query: Some(ceg::propagation::ArrivalQuery {
            vertex: "w1@3".into(),
            t_star: 2.5,
        }),
        ..fixtures::treated_recovered_evidence().non_temporal()
    };
    fs::write(
        dir.join("reinfection_arrival_query.json"),
        save_evidence(&arrival),
    )
    .unwrap();

    // Future evidence: the untreatable strain is ruled out forever.
    let retained: BTreeSet<EdgeId> = graph
        .edge_ids()
        .iter()
        .filter(|id| !id.as_str().starts_with("w0:strain-3"))
        .cloned()
        .collect();
    fs::write(
        dir.join("reinfection_future_no_strain3.json"),
        save_evidence(&Evidence::from_retained(retained)),
    )
    .unwrap();

    let falls = fixtures::falls_model();
    fs::write(
        dir.join("falls.json"),
        save_model(&LoadedModel::Graph {
            graph: falls,
            stages: ceg::model::StagePartition::default(),
        }),
    )
    .unwrap();
    fs::write(
        dir.join("falls_evidence.json"),
        save_evidence(&fixtures::falls_evidence()),
    )
    .unwrap();

    println!("wrote model files to {}", dir.display());
}
