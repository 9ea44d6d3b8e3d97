//! Command-line surface for the inference engine: compile models, propagate
//! evidence, unroll and split dynamic models, forecast through the future
//! model, and verify the engine against the enumeration oracle.
//!
//! Every run writes a `manifest.json` (input digests, seeds, grid, counts,
//! wall time) into the output directory, and every data output cites the
//! manifest's deterministic run id. Outputs are byte-identical for
//! identical inputs and seeds.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use ceg::distributions::GridSpec;
use ceg::dynamic::{
    forecast, revise_future, split, unroll, DcegModel, ForecastQuery, ForecastResult, SmpModel,
};
use ceg::model::{
    load_model, save_model, validate, validate_ceg, CegGraph, LoadedModel, StagePartition, VertexId,
};
use ceg::oracle::differential_report;
use ceg::propagation::{
    arrival_time_path_posterior, build_transporter, load_evidence, path_posteriors, propagate,
    Evidence,
};
use ceg::staging::{ceg_to_dot, compile_ceg, compute_positions, minimize, tree_to_dot};

#[derive(Parser)]
#[command(
    name = "ceg",
    version,
    about = "Exact inference for continuous-time chain event graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Output directory for result files.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Density grid step in days.
    #[arg(long, default_value_t = 0.01)]
    grid_dt: f64,
    /// Density grid horizon in days.
    #[arg(long, default_value_t = 200.0)]
    grid_tmax: f64,
    /// Seed for every sampling operation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sample count for Monte Carlo queries.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a model file; compile trees into their position graph.
    Build {
        model: PathBuf,
        /// Merge vertices with isomorphic colouring-preserving subgraphs.
        #[arg(long)]
        minimize: bool,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Propagate evidence and write the revised model and path posteriors.
    Propagate {
        model: PathBuf,
        evidence: PathBuf,
        /// Present window `k:l` for dynamic models (slices k..k+l).
        #[arg(long, value_parser = parse_slices)]
        slices: Option<(u32, u32)>,
        /// Minimize the transporter before propagating.
        #[arg(long)]
        minimize: bool,
        /// Fail when the transporter has more root-to-sink paths than this.
        #[arg(long, default_value_t = 100_000)]
        max_paths: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Unroll a dynamic model over passage-slices.
    Unroll {
        model: PathBuf,
        #[arg(long, value_parser = parse_slices)]
        slices: (u32, u32),
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Split a dynamic model into past, present and future around evidence.
    Split {
        model: PathBuf,
        evidence: PathBuf,
        #[arg(long, value_parser = parse_slices)]
        slices: (u32, u32),
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Answer a forecast query on the future model.
    Forecast {
        model: PathBuf,
        /// Query: `n-step:FROM:STEPS`, `absorption:FROM:TARGET` or
        /// `first-passage:FROM:TARGET`.
        #[arg(long)]
        query: String,
        /// Evidence about future slices (template edge ids).
        #[arg(long)]
        evidence: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Differentially test the engine against the enumeration oracle.
    Verify {
        /// Number of random models.
        #[arg(long, default_value_t = 100)]
        models: usize,
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn parse_slices(s: &str) -> Result<(u32, u32), String> {
    let (k, l) = s
        .split_once(':')
        .ok_or_else(|| format!("`{s}` is not of the form k:l"))?;
    Ok((
        k.parse()
            .map_err(|e| format!("bad slice index `{k}`: {e}"))?,
        l.parse()
            .map_err(|e| format!("bad slice count `{l}`: {e}"))?,
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err
                .downcast_ref::<ceg::CegError>()
                .map(ceg::CegError::exit_code)
                .unwrap_or(2);
            ExitCode::from(code as u8)
        }
    }
}

struct Manifest {
    command: String,
    inputs: Vec<(String, String)>,
    seed: u64,
    grid: GridSpec,
    samples: usize,
    run_id: String,
    ops: Option<String>,
    started: Instant,
}

impl Manifest {
    fn new(command: &str, inputs: &[&Path], common: &CommonOpts) -> anyhow::Result<Self> {
        let mut digests = Vec::new();
        for path in inputs {
            let bytes = fs::read(path)
                .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
            digests.push((
                path.file_name()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                hex::encode(Sha256::digest(&bytes)),
            ));
        }
        let mut hasher = Sha256::new();
        hasher.update(command.as_bytes());
        for (name, digest) in &digests {
            hasher.update(name.as_bytes());
            hasher.update(digest.as_bytes());
        }
        hasher.update(common.seed.to_le_bytes());
        hasher.update(common.grid_dt.to_le_bytes());
        hasher.update(common.grid_tmax.to_le_bytes());
        hasher.update(common.samples.to_le_bytes());
        hasher.update(env!("CARGO_PKG_VERSION").as_bytes());
        let run_id = hex::encode(&Sha256::finalize(hasher)[..8]);
        Ok(Manifest {
            command: command.to_string(),
            inputs: digests,
            seed: common.seed,
            grid: GridSpec::new(common.grid_dt, common.grid_tmax)?,
            samples: common.samples,
            run_id,
            ops: None,
            started: Instant::now(),
        })
    }

    fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let value = serde_json::json!({
            "engine_version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "run_id": self.run_id,
            "inputs": self.inputs.iter().map(|(n, d)| serde_json::json!({"file": n, "sha256": d})).collect::<Vec<_>>(),
            "seed": self.seed,
            "grid": {"dt": self.grid.dt, "t_max": self.grid.t_max},
            "samples": self.samples,
            "op_count": self.ops,
            "wall_ms": self.started.elapsed().as_millis() as u64,
        });
        fs::write(
            out_dir.join("manifest.json"),
            format!("{}\n", serde_json::to_string_pretty(&value)?),
        )?;
        Ok(())
    }
}

fn write_json(
    out_dir: &Path,
    name: &str,
    run_id: &str,
    mut value: serde_json::Value,
) -> anyhow::Result<()> {
    if let Some(obj) = value.as_object_mut() {
        obj.insert("run_id".to_string(), serde_json::json!(run_id));
    }
    fs::write(
        out_dir.join(name),
        format!("{}\n", serde_json::to_string_pretty(&value)?),
    )?;
    Ok(())
}

fn write_model_json(
    out_dir: &Path,
    name: &str,
    run_id: &str,
    model: &LoadedModel,
    revised: bool,
) -> anyhow::Result<()> {
    let text = save_model(model);
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    let obj = value.as_object_mut().expect("model json is an object");
    obj.insert("run_id".to_string(), serde_json::json!(run_id));
    if revised {
        obj.insert("revised".to_string(), serde_json::json!(true));
    }
    fs::write(
        out_dir.join(name),
        format!("{}\n", serde_json::to_string_pretty(&value)?),
    )?;
    Ok(())
}

fn write_text(out_dir: &Path, name: &str, header: &str, body: &str) -> anyhow::Result<()> {
    fs::write(out_dir.join(name), format!("{header}\n{body}"))?;
    Ok(())
}

fn load_model_file(path: &Path) -> anyhow::Result<LoadedModel> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(load_model(&text)?)
}

fn load_evidence_file(path: &Path) -> anyhow::Result<Evidence> {
    let text = fs::read_to_string(path)
        .map_err(|e| anyhow::anyhow!("cannot read {}: {e}", path.display()))?;
    Ok(load_evidence(&text)?)
}

/// Validation failures exit with code 2 and the report on standard error.
fn gate_validation(report: ceg::model::ValidationReport) -> anyhow::Result<()> {
    if report.is_empty() {
        Ok(())
    } else {
        eprintln!("{report}");
        Err(ceg::CegError::Parse {
            path: "<model>".into(),
            message: "validation failed".into(),
        }
        .into())
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Build {
            model,
            minimize: do_minimize,
            common,
        } => {
            let manifest = Manifest::new("build", &[model.as_path()], &common)?;
            fs::create_dir_all(&common.out_dir)?;
            let loaded = load_model_file(&model)?;
            let (compiled, stages) = match loaded {
                LoadedModel::Tree { tree, stages } => {
                    gate_validation(validate(&tree, &stages))?;
                    let positions = compute_positions(&tree, &stages);
                    let graph = compile_ceg(&tree, &positions, &stages)?;
                    let blocks: Vec<String> = positions
                        .blocks()
                        .iter()
                        .filter(|(_, members)| members.len() > 1)
                        .map(|(rep, members)| {
                            format!(
                                "{rep} <- {{{}}}",
                                members
                                    .iter()
                                    .map(|m| m.as_str())
                                    .collect::<Vec<_>>()
                                    .join(", ")
                            )
                        })
                        .collect();
                    if !blocks.is_empty() {
                        println!("coalesced positions: {}", blocks.join("; "));
                    }
                    let dot = tree_to_dot(&tree, &stages);
                    write_text(
                        &common.out_dir,
                        "tree.dot",
                        &format!("// run_id {}", manifest.run_id),
                        &dot,
                    )?;
                    (graph, stages)
                }
                LoadedModel::Graph { graph, stages } => {
                    gate_validation(validate_ceg(&graph))?;
                    (graph, stages)
                }
            };
            let compiled = if do_minimize && !compiled.is_dynamic() {
                minimize(&compiled)?
            } else {
                compiled
            };
            write_model_json(
                &common.out_dir,
                "compiled.json",
                &manifest.run_id,
                &LoadedModel::Graph {
                    graph: compiled.clone(),
                    stages,
                },
                false,
            )?;
            write_text(
                &common.out_dir,
                "compiled.dot",
                &format!("// run_id {}", manifest.run_id),
                &ceg_to_dot(&compiled),
            )?;
            println!(
                "compiled {} positions, {} edges",
                compiled.vertices().len() - 1,
                compiled.edges().len()
            );
            manifest.write(&common.out_dir)
        }

        Command::Propagate {
            model,
            evidence,
            slices,
            minimize: do_minimize,
            max_paths,
            common,
        } => {
            let mut manifest =
                Manifest::new("propagate", &[model.as_path(), evidence.as_path()], &common)?;
            fs::create_dir_all(&common.out_dir)?;
            let loaded = load_model_file(&model)?;
            let evidence = load_evidence_file(&evidence)?;
            let graph = present_graph(loaded, slices)?;

            let transporter = build_transporter(&graph, &evidence)?;
            // Minimization merges vertices, so the quotient becomes its own
            // propagation context: ids of the original graph no longer apply.
            let (context, transporter, evidence) = if do_minimize {
                let quotient = minimize(&transporter)?;
                let ev = Evidence {
                    retained: quotient.edge_ids().iter().cloned().collect(),
                    times: evidence.times.clone(),
                    times_anchor: evidence.times_anchor.clone(),
                    arrival_query: evidence.arrival_query.clone(),
                };
                (quotient.clone(), quotient, ev)
            } else {
                (graph.clone(), transporter, evidence)
            };
            ceg::oracle::enumerate_paths(&transporter, max_paths)?;
            let (state, revised) = propagate(&context, &transporter, &evidence)?;
            println!("{}", state.ops);
            manifest.ops = Some(state.ops.to_string());

            write_model_json(
                &common.out_dir,
                "revised.json",
                &manifest.run_id,
                &LoadedModel::Graph {
                    graph: revised.transporter.clone(),
                    stages: StagePartition::default(),
                },
                true,
            )?;

            let mut csv = String::from("path,probability,edges\n");
            for (i, p) in path_posteriors(&revised).iter().enumerate() {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    i + 1,
                    p.probability,
                    p.edges
                        .iter()
                        .map(|e| e.as_str())
                        .collect::<Vec<_>>()
                        .join(" ")
                ));
            }
            write_text(
                &common.out_dir,
                "paths.csv",
                &format!("# run_id {}", manifest.run_id),
                &csv,
            )?;

            if evidence.arrival_query.is_some() {
                let rows = arrival_time_path_posterior(&context, &evidence, &manifest.grid)?;
                let mut csv = String::from("route,probability,arrival_density,edges\n");
                for (i, r) in rows.iter().enumerate() {
                    csv.push_str(&format!(
                        "{},{},{},{}\n",
                        i + 1,
                        r.probability,
                        r.arrival_density,
                        r.edges
                            .iter()
                            .map(|e| e.as_str())
                            .collect::<Vec<_>>()
                            .join(" ")
                    ));
                }
                write_text(
                    &common.out_dir,
                    "arrival.csv",
                    &format!("# run_id {}", manifest.run_id),
                    &csv,
                )?;
            }
            manifest.write(&common.out_dir)
        }

        Command::Unroll {
            model,
            slices: (k, l),
            common,
        } => {
            let manifest = Manifest::new("unroll", &[model.as_path()], &common)?;
            fs::create_dir_all(&common.out_dir)?;
            let model = dceg_from_file(&model)?;
            let graph = unroll(&model, k, l)?;
            write_model_json(
                &common.out_dir,
                "unrolled.json",
                &manifest.run_id,
                &LoadedModel::Graph {
                    graph: graph.clone(),
                    stages: StagePartition::default(),
                },
                false,
            )?;
            write_text(
                &common.out_dir,
                "unrolled.dot",
                &format!("// run_id {}", manifest.run_id),
                &ceg_to_dot(&graph),
            )?;
            println!(
                "unrolled slices {k}..{} into {} vertices",
                k + l,
                graph.vertices().len()
            );
            manifest.write(&common.out_dir)
        }

        Command::Split {
            model,
            evidence,
            slices: (k, l),
            common,
        } => {
            let manifest = Manifest::new("split", &[model.as_path(), evidence.as_path()], &common)?;
            fs::create_dir_all(&common.out_dir)?;
            let model = dceg_from_file(&model)?;
            let evidence = load_evidence_file(&evidence)?;
            let parts = split(&model, &evidence, k, l)?;
            write_model_json(
                &common.out_dir,
                "present.json",
                &manifest.run_id,
                &LoadedModel::Graph {
                    graph: parts.present.clone(),
                    stages: StagePartition::default(),
                },
                false,
            )?;
            if let Some(past) = &parts.past {
                write_model_json(
                    &common.out_dir,
                    "past.json",
                    &manifest.run_id,
                    &LoadedModel::Graph {
                        graph: past.clone(),
                        stages: StagePartition::default(),
                    },
                    false,
                )?;
            }
            write_smp(&common.out_dir, &manifest.run_id, &parts.future)?;
            println!(
                "split at slices {k}:{l}: past {}, present {} vertices, future {} states",
                parts
                    .past
                    .as_ref()
                    .map(|p| format!("{} vertices", p.vertices().len()))
                    .unwrap_or_else(|| "empty".into()),
                parts.present.vertices().len(),
                parts.future.states.len()
            );
            manifest.write(&common.out_dir)
        }

        Command::Forecast {
            model,
            query,
            evidence,
            common,
        } => {
            let mut inputs = vec![model.clone()];
            if let Some(e) = &evidence {
                inputs.push(e.clone());
            }
            let input_refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
            let manifest = Manifest::new("forecast", &input_refs, &common)?;
            fs::create_dir_all(&common.out_dir)?;
            let model = dceg_from_file(&model)?;
            let future_evidence = evidence.as_deref().map(load_evidence_file).transpose()?;
            let smp = revise_future(&model, future_evidence.as_ref())?;
            let query = parse_query(&query)?;
            let result = forecast(&smp, &query, common.samples, common.seed)?;
            write_smp(&common.out_dir, &manifest.run_id, &smp)?;
            let report = match &result {
                ForecastResult::Distribution {
                    states,
                    probabilities,
                } => serde_json::json!({
                    "query": format!("{query}"),
                    "distribution": states.iter().zip(probabilities)
                        .map(|(s, p)| serde_json::json!({"state": s.as_str(), "probability": p}))
                        .collect::<Vec<_>>(),
                }),
                ForecastResult::Probability { value, unreachable } => {
                    if *unreachable {
                        eprintln!(
                            "warning: query state is unreachable; probability is structurally zero"
                        );
                    }
                    serde_json::json!({
                        "query": format!("{query}"),
                        "probability": value,
                        "unreachable": unreachable,
                    })
                }
                ForecastResult::FirstPassage {
                    mean,
                    std_error,
                    hits,
                    samples,
                    seed,
                } => serde_json::json!({
                    "query": format!("{query}"),
                    "mean": mean,
                    "std_error": std_error,
                    "hits": hits,
                    "samples": samples,
                    "seed": seed,
                }),
            };
            println!("{}", serde_json::to_string(&report)?);
            write_json(&common.out_dir, "forecast.json", &manifest.run_id, report)?;
            manifest.write(&common.out_dir)
        }

        Command::Verify { models, common } => {
            let report = differential_report(models, common.seed)?;
            println!("verify: {models} random models, seed {}", common.seed);
            println!(
                "  revised edge probabilities   max |err| = {:.3e}",
                report.max_edge_error
            );
            println!(
                "  path posteriors              max |err| = {:.3e}",
                report.max_path_error
            );
            println!(
                "  t-emphasis conditionals      max |err| = {:.3e}",
                report.max_t_emphasis_error
            );
            println!(
                "  h-emphasis conditionals      max |err| = {:.3e}",
                report.max_h_emphasis_error
            );
            println!(
                "  tree-copy conditionals       max |err| = {:.3e}",
                report.max_tree_identity_error
            );
            if report.max_error() < 1e-9 {
                println!("agreement: OK (threshold 1e-9)");
                Ok(())
            } else {
                Err(ceg::CegError::ZeroSupport(format!(
                    "oracle disagreement {:.3e} exceeds 1e-9",
                    report.max_error()
                ))
                .into())
            }
        }
    }
}

/// Resolves the graph evidence is propagated on: acyclic models are used
/// directly, dynamic models are unrolled over the requested window.
fn present_graph(loaded: LoadedModel, slices: Option<(u32, u32)>) -> anyhow::Result<CegGraph> {
    match loaded {
        LoadedModel::Tree { tree, stages } => {
            gate_validation(validate(&tree, &stages))?;
            let positions = compute_positions(&tree, &stages);
            Ok(compile_ceg(&tree, &positions, &stages)?)
        }
        LoadedModel::Graph { graph, .. } => {
            gate_validation(validate_ceg(&graph))?;
            if graph.is_dynamic() {
                let (k, l) = slices.ok_or_else(|| {
                    anyhow::anyhow!("dynamic model: pass --slices k:l to select the present window")
                })?;
                let model = DcegModel::new(graph)?;
                Ok(unroll(&model, k, l)?)
            } else {
                Ok(graph)
            }
        }
    }
}

fn dceg_from_file(path: &Path) -> anyhow::Result<DcegModel> {
    match load_model_file(path)? {
        LoadedModel::Graph { graph, .. } => {
            gate_validation(validate_ceg(&graph))?;
            Ok(DcegModel::new(graph)?)
        }
        LoadedModel::Tree { .. } => Err(anyhow::anyhow!(
            "expected a graph document with cyclic edges"
        )),
    }
}

fn parse_query(s: &str) -> anyhow::Result<ForecastQuery> {
    let parts: Vec<&str> = s.split(':').collect();
    match parts.as_slice() {
        ["n-step", from, steps] => Ok(ForecastQuery::NStep {
            from: VertexId::from(*from),
            steps: steps.parse().map_err(|e| anyhow::anyhow!("bad step count `{steps}`: {e}"))?,
        }),
        ["absorption", from, target] => Ok(ForecastQuery::Absorption {
            from: VertexId::from(*from),
            target: VertexId::from(*target),
        }),
        ["first-passage", from, target] => Ok(ForecastQuery::FirstPassage {
            from: VertexId::from(*from),
            target: VertexId::from(*target),
        }),
        _ => Err(anyhow::anyhow!(
            "unknown query `{s}`; expected n-step:FROM:STEPS, absorption:FROM:TARGET or first-passage:FROM:TARGET"
        )),
    }
}

fn write_smp(out_dir: &Path, run_id: &str, smp: &SmpModel) -> anyhow::Result<()> {
    write_text(
        out_dir,
        "future_matrix.csv",
        &format!("# run_id {run_id}"),
        &smp.matrix_csv(),
    )?;
    write_json(
        out_dir,
        "future_holdings.json",
        run_id,
        serde_json::json!({ "transitions": smp.holdings_json() }),
    )?;
    Ok(())
}
