//! Command-line entry point wiring the pipeline stages together:
//! `split`, `sample`, `prove`, `train`, `eval`, and the worked-example
//! `demo`. Exit codes: 0 ok, 1 pipeline error, 2 usage error. All
//! randomness funnels through `--seed`.

mod manifest;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use ceqa_core::constraint::CheckConfig;
use ceqa_core::kg::{split_edges, GraphSplit, KnowledgeGraph};
use ceqa_core::model::{Ablation, EncodeOptions, ModelParams};
use ceqa_core::query::{QueryInstance, QueryTypeNode, SplitName};
use ceqa_core::sampler::{generate_dataset, to_jsonl, SamplerConfig, DEFAULT_QUERY_TYPES};
use ceqa_core::train::{evaluate, train, TrainConfig};

use manifest::Manifest;

const EMBEDDED_FIXTURE: &str = include_str!("../../../fixtures/figure_example.tsv");
const DEFAULT_FIXTURE_PATH: &str = "fixtures/figure_example.tsv";

#[derive(Parser)]
#[command(
    name = "ceqa",
    version,
    about = "Complex eventuality query answering: split graphs, sample benchmarks, prove answers, train and evaluate the query encoder"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a knowledge graph into cumulative train/valid/test edge lists.
    Split(SplitArgs),
    /// Sample a benchmark dataset of constraint-bearing queries.
    Sample(SampleArgs),
    /// Prove every candidate answer of one dataset record.
    Prove(ProveArgs),
    /// Train the query encoder on a sampled dataset.
    Train(TrainArgs),
    /// Evaluate a trained model with the filtered ranking protocol.
    Eval(EvalArgs),
    /// Run the restaurant worked example end to end.
    Demo(DemoArgs),
}

#[derive(Args)]
struct SplitArgs {
    /// Knowledge graph TSV (head<TAB>relation<TAB>tail per line).
    #[arg(long)]
    kg: PathBuf,
    /// Comma-separated train,valid,test ratios.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long, default_value = "0.8,0.1,0.1")]
    ratios: String,
    /// One query type per line; defaults to the fifteen benchmark shapes.
    #[arg(long)]
    types_file: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    count_per_type: usize,
    #[arg(long, default_value_t = 3)]
    max_info: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value_t = ceqa_core::exec::DEFAULT_GROUNDING_CAP)]
    grounding_cap: usize,
    /// Sampling attempts per retained-query target.
    #[arg(long, default_value_t = 100)]
    retry_budget: usize,
}

#[derive(Args)]
struct ProveArgs {
    #[arg(long)]
    kg: PathBuf,
    /// File holding one dataset record (JSONL line).
    #[arg(long)]
    record: PathBuf,
    /// Print the satisfying assignment and timestamp order for valid
    /// answers.
    #[arg(long)]
    witness: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    kg: PathBuf,
    /// Directory holding train.jsonl (a `sample` output directory).
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 300)]
    dim: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 256)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "none")]
    ablation: String,
    /// Softmax the memory relevance scores instead of using them raw.
    #[arg(long)]
    normalize_scores: bool,
    /// Apply the memory read to anchor embeddings too.
    #[arg(long)]
    memory_on_anchors: bool,
    /// Restrict lr and batch to the benchmark search grids.
    #[arg(long)]
    grid: bool,
    /// Checkpoint path; the loss curve and manifest land next to it.
    #[arg(long, default_value = "model.ckpt")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    kg: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data_dir: PathBuf,
    /// Which split to evaluate: valid or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Ratios used when the dataset was sampled; defaults to the sample
    /// manifest's record.
    #[arg(long)]
    ratios: Option<String>,
    /// Split seed used when the dataset was sampled; defaults to the
    /// sample manifest's record.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value = "report.tsv")]
    report: PathBuf,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Args)]
struct DemoArgs {
    /// Fixture graph; defaults to fixtures/figure_example.tsv, falling
    /// back to the embedded copy when that file is not present.
    #[arg(long)]
    kg: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Split(args) => cmd_split(args),
        Command::Sample(args) => cmd_sample(args),
        Command::Prove(args) => cmd_prove(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Demo(args) => cmd_demo(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn parse_ratios(s: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("cannot parse ratios {s:?}"))?;
    if parts.len() != 3 {
        bail!("ratios need exactly three comma-separated values, got {s:?}");
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn load_graph(path: &Path) -> Result<KnowledgeGraph> {
    let g = KnowledgeGraph::load(path)
        .with_context(|| format!("loading graph {}", path.display()))?;
    if g.self_loop_count() > 0 {
        eprintln!("note: {} self-loop edge(s) preserved", g.self_loop_count());
    }
    Ok(g)
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&args.ratios)?;
    let g = load_graph(&args.kg)?;
    let split = split_edges(&g, ratios, args.seed)?;

    let mut manifest = Manifest::new("split");
    manifest.set("ratios", &args.ratios);
    manifest.set("seed", args.seed);
    manifest.add_input(&args.kg)?;
    manifest.write(&args.out_dir)?;

    for (name, graph) in [
        ("train.tsv", &split.train),
        ("valid.tsv", &split.valid),
        ("test.tsv", &split.test),
    ] {
        std::fs::write(args.out_dir.join(name), graph.to_tsv())?;
    }
    println!(
        "edges: train {} / valid {} / test {} (vertices {})",
        split.train.edge_count(),
        split.valid.edge_count(),
        split.test.edge_count(),
        g.vertex_count()
    );
    Ok(())
}

fn read_types_file(path: &Path) -> Result<Vec<QueryTypeNode>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading types file {}", path.display()))?;
    content
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| QueryTypeNode::parse(l).map_err(|e| anyhow!("type {l:?}: {e}")))
        .collect()
}

fn sampler_config(args: &SampleArgs) -> Result<SamplerConfig> {
    let eval_types = match &args.types_file {
        Some(path) => read_types_file(path)?,
        None => DEFAULT_QUERY_TYPES
            .iter()
            .map(|s| QueryTypeNode::parse(s).unwrap())
            .collect(),
    };
    let mut cfg = SamplerConfig::with_default_types(args.count_per_type, args.seed);
    cfg.train_types = eval_types
        .iter()
        .filter(|t| t.stats().0 <= cfg.max_anchors[0])
        .cloned()
        .collect();
    cfg.eval_types = eval_types;
    cfg.max_info = args.max_info;
    cfg.grounding_cap = args.grounding_cap;
    cfg.retry_budget = args.retry_budget;
    Ok(cfg)
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let ratios = parse_ratios(&args.ratios)?;
    let g = load_graph(&args.kg)?;
    let split = split_edges(&g, ratios, args.seed)?;
    let cfg = sampler_config(&args)?;

    let mut manifest = Manifest::new("sample");
    manifest.set("ratios", &args.ratios);
    manifest.set("seed", args.seed);
    manifest.set("count_per_type", args.count_per_type);
    manifest.set("max_info", args.max_info);
    manifest.set("grounding_cap", args.grounding_cap);
    manifest.set("retry_budget", args.retry_budget);
    manifest.set(
        "eval_types",
        cfg.eval_types
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" "),
    );
    manifest.add_input(&args.kg)?;
    manifest.write(&args.out_dir)?;

    let ds = generate_dataset(&split, &cfg, args.workers)?;
    for (name, records) in [
        ("train.jsonl", &ds.train),
        ("valid.jsonl", &ds.valid),
        ("test.jsonl", &ds.test),
    ] {
        std::fs::write(args.out_dir.join(name), to_jsonl(records, &g)?)?;
    }
    std::fs::write(args.out_dir.join("stats.tsv"), ds.stats.to_tsv())?;
    for (split_name, ty, missing) in &ds.shortfalls {
        eprintln!(
            "warning: {} {}: {} target(s) unmet after retries",
            split_name.name(),
            ty,
            missing
        );
    }
    println!(
        "records: train {} / valid {} / test {}",
        ds.train.len(),
        ds.valid.len(),
        ds.test.len()
    );
    Ok(())
}

fn print_verdicts(
    kg: &KnowledgeGraph,
    record: &QueryInstance,
    witness: bool,
) -> Result<()> {
    let check = CheckConfig::default();
    for &candidate in &ceqa_core::answer_set(kg, &record.query) {
        let verdict =
            ceqa_core::check_answer(kg, &record.query, &record.info_atomics, candidate, &check)?;
        println!("{}: {}", kg.text(candidate), verdict.status);
        if witness {
            if let Some(grounding) = &verdict.witness {
                let parts: Vec<String> = grounding
                    .iter()
                    .map(|(var, v)| format!("{var} = {}", kg.text(*v)))
                    .collect();
                println!("  grounding: {}", parts.join(", "));
                let set = ceqa_core::constraint::derive_for_grounding(
                    &record.query,
                    &record.info_atomics,
                    grounding,
                )?;
                if let Some(model) =
                    ceqa_core::constraint::solve_occurrence(&set.occ, check.var_limit)?
                {
                    let assignment: Vec<String> = model
                        .iter()
                        .map(|(v, b)| format!("η({}) = {}", kg.text(*v), b))
                        .collect();
                    println!("  occurrence: {}", assignment.join(", "));
                }
                if let Some(order) = ceqa_core::constraint::temporal_order(&set.temp) {
                    let steps: Vec<String> = order
                        .iter()
                        .map(|class| {
                            class
                                .iter()
                                .map(|&v| kg.text(v).to_string())
                                .collect::<Vec<_>>()
                                .join(" = ")
                        })
                        .collect();
                    println!("  order: {}", steps.join(" ≺ "));
                }
            }
        }
    }
    Ok(())
}

fn cmd_prove(args: ProveArgs) -> Result<()> {
    let g = load_graph(&args.kg)?;
    let content = std::fs::read_to_string(&args.record)
        .with_context(|| format!("reading record {}", args.record.display()))?;
    let line = content
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .ok_or_else(|| anyhow!("record file {} is empty", args.record.display()))?;
    let record = QueryInstance::from_json(line, &g)?;
    print_verdicts(&g, &record, args.witness)
}

fn read_records(path: &Path, kg: &KnowledgeGraph) -> Result<Vec<QueryInstance>> {
    let content = std::fs::read_to_string(path)
        .with_context(|| format!("reading dataset {}", path.display()))?;
    content
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| QueryInstance::from_json(l, kg).map_err(Into::into))
        .collect()
}

fn out_dir_of(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let ablation = Ablation::parse(&args.ablation)
        .ok_or_else(|| anyhow!("unknown ablation {:?}", args.ablation))?;
    let g = load_graph(&args.kg)?;
    let records = read_records(&args.data_dir.join("train.jsonl"), &g)?;

    let mut cfg = TrainConfig::paper(args.seed);
    cfg.d = args.dim;
    cfg.lr = args.lr;
    cfg.batch_size = args.batch;
    cfg.epochs = args.epochs;
    cfg.grid_mode = args.grid;
    cfg.options = EncodeOptions {
        ablation,
        normalize_scores: args.normalize_scores,
        memory_on_anchors: args.memory_on_anchors,
    };
    cfg.validate()?;

    let out_dir = out_dir_of(&args.out);
    let mut manifest = Manifest::new("train");
    manifest.set("dim", args.dim);
    manifest.set("lr", args.lr);
    manifest.set("batch", args.batch);
    manifest.set("epochs", args.epochs);
    manifest.set("seed", args.seed);
    manifest.set("ablation", ablation.name());
    manifest.set("normalize_scores", args.normalize_scores);
    manifest.set("memory_on_anchors", args.memory_on_anchors);
    manifest.add_input(&args.kg)?;
    manifest.add_input(&args.data_dir.join("train.jsonl"))?;
    manifest.write(&out_dir)?;

    let out = train(&records, &g, &cfg)?;
    out.params.save(&args.out, &cfg.options)?;
    let mut curve = String::from("epoch\tloss\n");
    for (i, l) in out.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{i}\t{l:.6}\n"));
    }
    std::fs::write(out_dir.join("loss.tsv"), curve)?;
    println!(
        "trained {} epochs; loss {:.4} -> {:.4}; checkpoint {}",
        out.loss_curve.len(),
        out.loss_curve.first().unwrap_or(&f64::NAN),
        out.loss_curve.last().unwrap_or(&f64::NAN),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let g = load_graph(&args.kg)?;
    let sample_config = manifest::read_config(&args.data_dir).unwrap_or_default();
    let ratios_str = args
        .ratios
        .clone()
        .or_else(|| sample_config.get("ratios").cloned())
        .ok_or_else(|| {
            anyhow!("no --ratios given and no sample manifest in {}", args.data_dir.display())
        })?;
    let split_seed = match args.split_seed {
        Some(s) => s,
        None => sample_config
            .get("seed")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                anyhow!(
                    "no --split-seed given and no sample manifest in {}",
                    args.data_dir.display()
                )
            })?,
    };
    let ratios = parse_ratios(&ratios_str)?;
    let split: GraphSplit = split_edges(&g, ratios, split_seed)?;

    let (split_name, records_file, smaller) = match args.split.as_str() {
        "valid" => (SplitName::Valid, "valid.jsonl", &split.train),
        "test" => (SplitName::Test, "test.jsonl", &split.valid),
        other => bail!("unknown split {other:?} (expected valid or test)"),
    };
    let records = read_records(&args.data_dir.join(records_file), &g)?;
    let (params, options) = ModelParams::load(&args.model)?;
    if params.n_vertices() != g.vertex_count() {
        bail!(
            "model was trained on {} vertices but the graph has {}",
            params.n_vertices(),
            g.vertex_count()
        );
    }

    let expected_types: Vec<QueryTypeNode> = match sample_config.get("eval_types") {
        Some(s) => s
            .split_whitespace()
            .map(|t| QueryTypeNode::parse(t).map_err(|e| anyhow!("{e}")))
            .collect::<Result<_>>()?,
        None => {
            let mut seen = Vec::new();
            for r in &records {
                let t = r.query.erase().to_string();
                if !seen.contains(&t) {
                    seen.push(t);
                }
            }
            seen.sort();
            seen.iter()
                .map(|t| QueryTypeNode::parse(t).unwrap())
                .collect()
        }
    };

    let out_dir = out_dir_of(&args.report);
    let mut manifest = Manifest::new("eval");
    manifest.set("split", split_name.name());
    manifest.set("ratios", &ratios_str);
    manifest.set("split_seed", split_seed);
    manifest.set("workers", args.workers);
    manifest.add_input(&args.kg)?;
    manifest.add_input(&args.model)?;
    manifest.add_input(&args.data_dir.join(records_file))?;
    manifest.write(&out_dir)?;

    let result = evaluate(
        &records,
        &params,
        &options,
        smaller,
        &expected_types,
        &CheckConfig::default(),
        split_seed,
        args.workers,
    )?;
    std::fs::write(&args.report, result.to_tsv())?;
    println!(
        "{}: {} queries ranked ({} skipped); Hit@1 {:.4} Hit@3 {:.4} MRR {:.4}",
        split_name.name(),
        result.overall.n,
        result.skipped,
        result.overall.hit1,
        result.overall.hit3,
        result.overall.mrr
    );
    Ok(())
}

fn cmd_demo(args: DemoArgs) -> Result<()> {
    let g = match &args.kg {
        Some(path) => load_graph(path)?,
        None => {
            let default = Path::new(DEFAULT_FIXTURE_PATH);
            if default.exists() {
                load_graph(default)?
            } else {
                KnowledgeGraph::parse_tsv(EMBEDDED_FIXTURE)?
            }
        }
    };
    let query = ceqa_core::GroundedNode::parse(
        "(p,Reason,(i,(p,Succession,(e,PersonX complains)),(p,Succession,(e,PersonX leaves))))",
        &g,
    )?;
    let atomic = |h: &str, rel: ceqa_core::RelationType, t: &str| -> Result<ceqa_core::InfoAtomic> {
        Ok(ceqa_core::InfoAtomic {
            head: g.vertex_by_text(h).ok_or_else(|| anyhow!("fixture vertex {h:?} missing"))?,
            rel,
            tail: g.vertex_by_text(t).ok_or_else(|| anyhow!("fixture vertex {t:?} missing"))?,
        })
    };
    let info = vec![
        atomic(
            "PersonY adds ketchup",
            ceqa_core::RelationType::ChosenAlternative,
            "PersonY adds vinegar",
        )?,
        atomic(
            "Food is bad",
            ceqa_core::RelationType::Precedence,
            "PersonY adds soy sauce",
        )?,
    ];
    let check = CheckConfig::default();
    for &candidate in &ceqa_core::answer_set(&g, &query) {
        let verdict = ceqa_core::check_answer(&g, &query, &info, candidate, &check)?;
        println!("{}: {}", g.text(candidate), verdict.status);
    }
    Ok(())
}
