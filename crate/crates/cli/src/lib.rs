//! Command-line front end. [`run`] parses arguments, dispatches to the
//! library and maps outcomes to exit codes: 0 on success, 1 on usage
//! errors, 2 on runtime or validation errors.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use hetfuse::analysis::{
    collapse_experiment, collapse_graph, count_params, emit_trend_data, expressiveness_check, extract_attention_matrix,
    top_metapaths, DEFAULT_THRESHOLD,
};
use hetfuse::attr::{build_unified_schema, features_to_tsv, project_features};
use hetfuse::autodiff::op_gradient_suite;
use hetfuse::encoding::build_codebook;
use hetfuse::fusion::FusionVariant;
use hetfuse::graph::{load_graph, synth_graph, write_graph, HeteroGraph, SchemaSpec};
use hetfuse::layers::{Model, ModelConfig, ModelKind};
use hetfuse::train::{
    evaluate_model, model_grad_check, train_model, train_trials, NegativeMode, OptimizerKind, RunReport, Task,
    TrainConfig,
};

/// `println!` that ignores a closed standard output.
macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "hetfuse", version, about = "Heterogeneous graph learning with fused attribute and type encodings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic heterogeneous graph from a schema.
    Synth(SynthArgs),
    /// Export the unified feature matrix, schema and type codebook of a graph.
    Preprocess(PreprocessArgs),
    /// Train node-classification or link-prediction models.
    Train(TrainArgs),
    /// Score a saved model on a graph.
    Eval(EvalArgs),
    /// Parameter counts, relation collapse, expressiveness, attention or trend data.
    Analyze(AnalyzeArgs),
    /// Run the relation-collapse experiment, optionally dumping its graph.
    CollapseLab(CollapseArgs),
    /// Finite-difference checks of every tape operation and of both models.
    GradCheck(GradCheckArgs),
    /// CSV for plotting from saved run reports.
    PlotData(PlotArgs),
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Schema JSON file, or `acm-like` / `tiny` for a built-in schema.
    #[arg(long)]
    spec: String,
    /// Overrides the schema's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for nodes.tsv, edges.tsv and labels.tsv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PreprocessArgs {
    /// Graph directory.
    #[arg(long)]
    graph: PathBuf,
    /// Output directory for features.tsv, schema.json and codebook.json.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigFlags,
}

/// JSON config file plus flag overrides for every run setting.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    /// JSON training config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model kind.
    #[arg(long, value_parser = ["bg-hgnn", "rgcn"])]
    model: Option<String>,
    /// Message-passing layers.
    #[arg(long)]
    layers: Option<usize>,
    /// Hidden width.
    #[arg(long)]
    hidden: Option<usize>,
    /// Attention heads in hidden GAT layers.
    #[arg(long)]
    heads: Option<usize>,
    /// Fusion rank.
    #[arg(long)]
    rank: Option<usize>,
    /// Fusion output width.
    #[arg(long)]
    fuse_dim: Option<usize>,
    /// Fusion combining rule.
    #[arg(long, value_parser = ["lmf", "per-rank-kron"])]
    fusion_variant: Option<String>,
    /// Node-type vector length (default: node-type count).
    #[arg(long)]
    type_dim: Option<usize>,
    /// Edge-type vector length (default: edge-type count).
    #[arg(long)]
    edge_type_dim: Option<usize>,
    /// Lower bound of the type-vector distribution.
    #[arg(long, allow_negative_numbers = true)]
    enc_low: Option<f64>,
    /// Upper bound of the type-vector distribution.
    #[arg(long, allow_negative_numbers = true)]
    enc_high: Option<f64>,
    /// Seed of the type codebook.
    #[arg(long)]
    enc_seed: Option<u64>,
    /// Identity type vectors instead of random ones.
    #[arg(long)]
    one_hot: bool,
    /// Value of absent feature channels.
    #[arg(long, allow_negative_numbers = true)]
    sentinel: Option<f64>,
    /// Node classification or link prediction.
    #[arg(long, value_parser = ["node", "link"])]
    task: Option<String>,
    /// Training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Optimizer.
    #[arg(long, value_parser = ["gd", "momentum", "adam"])]
    optimizer: Option<String>,
    /// Independent trials, seeded `seed, seed + 1, ...`.
    #[arg(long)]
    trials: Option<usize>,
    /// Seed of the run and of model initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Relation to predict in the link task.
    #[arg(long)]
    relation: Option<String>,
    /// Negative sampling for the link task.
    #[arg(long, value_parser = ["two-hop", "random-hop"])]
    negatives: Option<String>,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<TrainConfig, CliError> {
        let mut c: TrainConfig = match &self.config {
            Some(path) => serde_json::from_str(&read(path)?)
                .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?,
            None => TrainConfig::default(),
        };
        let m = &mut c.model;
        let e = &mut m.encoding;
        set(&mut m.kind, parse(&self.model)?);
        set(&mut m.layers, self.layers);
        set(&mut m.hidden, self.hidden);
        set(&mut m.heads, self.heads);
        set(&mut m.rank, self.rank);
        set(&mut m.fuse_dim, self.fuse_dim);
        set::<FusionVariant>(&mut m.variant, parse(&self.fusion_variant)?);
        if self.type_dim.is_some() {
            e.node_dim = self.type_dim;
        }
        if self.edge_type_dim.is_some() {
            e.edge_dim = self.edge_type_dim;
        }
        set(&mut e.low, self.enc_low);
        set(&mut e.high, self.enc_high);
        set(&mut e.seed, self.enc_seed);
        e.one_hot |= self.one_hot;
        set(&mut m.sentinel, self.sentinel);
        set::<Task>(&mut c.task, parse(&self.task)?);
        set(&mut c.epochs, self.epochs);
        set(&mut c.lr, self.lr);
        set::<OptimizerKind>(&mut c.optimizer, parse(&self.optimizer)?);
        set(&mut c.trials, self.trials);
        set(&mut c.seed, self.seed);
        if self.relation.is_some() {
            c.link.relation = self.relation.clone();
        }
        set::<NegativeMode>(&mut c.link.negatives, parse(&self.negatives)?);
        c.model.seed = c.seed;
        c.validate()?;
        Ok(c)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse<T>(value: &Option<String>) -> Result<Option<T>, CliError>
where
    T: std::str::FromStr<Err = hetfuse::Error>,
{
    value.as_deref().map(str::parse).transpose().map_err(CliError::from)
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Graph directory.
    #[arg(long)]
    graph: PathBuf,
    #[command(flatten)]
    config: ConfigFlags,
    /// Run trials on separate threads.
    #[arg(long)]
    parallel: bool,
    /// Write the run reports as a JSON array.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Save the trained model with its config (single trial only).
    #[arg(long)]
    save_model: Option<PathBuf>,
    /// Dataset label stored in the reports, used to pair trend rows.
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Graph directory.
    #[arg(long)]
    graph: PathBuf,
    /// Model file written by `train --save-model`.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Analysis {
    Params,
    Collapse,
    Expressiveness,
    Attention,
    Trend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Analysis to run.
    #[arg(long, value_enum)]
    what: Analysis,
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    out: Format,
    /// Binarization threshold for attention matrices.
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Number of seeds for collapse and expressiveness, starting at `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Graph directory (params, attention).
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Saved model (attention).
    #[arg(long)]
    model_file: Option<PathBuf>,
    /// Run report files (trend).
    #[arg(long, num_args = 1..)]
    reports: Vec<PathBuf>,
    /// Nodes in the collapse graph.
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    /// Graph pairs per seed in the expressiveness check.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    /// Longest meta-path reported.
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args, Debug)]
struct CollapseArgs {
    /// Nodes in the collapse graph.
    #[arg(long, default_value_t = 2000)]
    nodes: usize,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Also write the first seed's graph to this directory.
    #[arg(long)]
    dump: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value = "csv")]
    out: Format,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Seed of the test inputs and models.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PlotKind {
    /// One row per dataset: relation count, parameter ratio, F1 gap.
    Trend,
    /// One row per epoch of every report: loss, accuracy, seconds.
    History,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// CSV layout.
    #[arg(long, value_enum, default_value = "trend")]
    kind: PlotKind,
    /// Run report files.
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What `train --save-model` writes.
#[derive(Serialize, Deserialize)]
pub struct ModelFile {
    pub config: TrainConfig,
    pub model: Model,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<hetfuse::Error> for CliError {
    fn from(e: hetfuse::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("values serialize")
}

fn announce<T: Serialize>(what: &str, value: &T) {
    eprintln!("{what}: {}", serde_json::to_string(value).expect("values serialize"));
}

fn kind_name(kind: ModelKind) -> String {
    serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

fn load(path: &Path) -> Result<HeteroGraph, CliError> {
    Ok(load_graph(path)?)
}

/// The argument parser, for help and completion tooling.
pub fn command() -> clap::Command {
    Cli::command()
}

/// Runs one invocation; `argv` excludes the program name.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let args = std::iter::once("hetfuse".to_string()).chain(argv.into_iter().map(Into::into));
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            EXIT_USAGE
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            EXIT_RUNTIME
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
        Command::CollapseLab(a) => collapse_lab(a),
        Command::GradCheck(a) => grad_check(a),
        Command::PlotData(a) => plot_data(a),
    }
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let mut spec = match a.spec.as_str() {
        "acm-like" => SchemaSpec::acm_like(0),
        "tiny" => SchemaSpec::tiny(0),
        path => serde_json::from_str(&read(Path::new(path))?)
            .map_err(|e| CliError::Runtime(format!("{path}: {e}")))?,
    };
    set(&mut spec.seed, a.seed);
    announce("schema", &spec);
    let g = synth_graph(&spec)?;
    write_graph(&g, &a.out)?;
    outln!(
        "wrote {} nodes, {} edges, {} relations to {}",
        g.node_count(),
        g.edge_count(),
        g.num_edge_types(),
        a.out.display()
    );
    Ok(())
}

fn preprocess(a: PreprocessArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    announce("config", &cfg);
    let g = load(&a.graph)?;
    let schema = build_unified_schema(&g, cfg.model.sentinel);
    let uf = project_features(&g, &schema)?;
    let cb = build_codebook(&g, &cfg.model.encoding)?;
    fs::create_dir_all(&a.out).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", a.out.display())))?;
    write(&a.out.join("features.tsv"), &features_to_tsv(&uf, &schema))?;
    write(&a.out.join("schema.json"), &to_json(&schema))?;
    write(&a.out.join("codebook.json"), &to_json(&cb))?;
    outln!("{} channels, {} node types, {} edge types", schema.width(), cb.node_vectors.len(), cb.edge_vectors.len());
    Ok(())
}

fn summary_line(r: &RunReport) -> String {
    let metrics = match (&r.node, &r.link) {
        (Some(n), _) => format!(
            "train_acc {:.4} test_micro_f1 {} test_macro_f1 {}",
            n.train_accuracy,
            opt(n.test_micro_f1),
            opt(n.test_macro_f1)
        ),
        (_, Some(l)) => format!("relation {} test_auc {} test_mrr {}", l.relation, opt(l.test_auc), opt(l.test_mrr)),
        _ => String::new(),
    };
    let secs = r.mean_epoch_seconds().map_or("-".into(), |s| format!("{s:.4}"));
    format!("seed {} params {} epoch_s {secs} {metrics}", r.seed, r.param_count)
}

fn opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.4}"))
}

fn train(a: TrainArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    announce("config", &cfg);
    let g = load(&a.graph)?;
    let mut reports = if let Some(path) = &a.save_model {
        if cfg.trials != 1 {
            return Err(CliError::Usage("--save-model needs --trials 1".into()));
        }
        let trained = train_model(&g, &cfg)?;
        write(path, &serde_json::to_string(&ModelFile { config: cfg.clone(), model: trained.model }).expect("model serializes"))?;
        vec![trained.report]
    } else {
        train_trials(&g, &cfg, a.parallel)?
    };
    for r in &mut reports {
        r.dataset = a.dataset.clone().unwrap_or_else(|| a.graph.display().to_string());
        outln!("{}", summary_line(r));
    }
    if let Some(path) = &a.report {
        write(path, &to_json(&reports))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    let file = load_model(&a.model)?;
    announce("config", &file.config);
    let g = load(&a.graph)?;
    let (node, link) = evaluate_model(&file.model, &g, &file.config)?;
    outln!("{}", to_json(&serde_json::json!({ "node": node, "link": link })));
    Ok(())
}

/// Reports from files holding either one report or an array of them.
fn read_reports(paths: &[PathBuf]) -> Result<Vec<RunReport>, CliError> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<RunReport>),
        One(Box<RunReport>),
    }
    let mut out = Vec::new();
    for p in paths {
        match serde_json::from_str(&read(p)?).map_err(|e| CliError::Runtime(format!("{}: {e}", p.display())))? {
            OneOrMany::Many(rs) => out.extend(rs),
            OneOrMany::One(r) => out.push(*r),
        }
    }
    Ok(out)
}

fn need<'a, T>(value: &'a Option<T>, flag: &str, what: &str) -> Result<&'a T, CliError> {
    value.as_ref().ok_or_else(|| CliError::Usage(format!("--what {what} needs --{flag}")))
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    announce("config", &cfg);
    let seeds = cfg.seed..cfg.seed + a.seeds;
    let text = match a.what {
        Analysis::Params => {
            let g = load(need(&a.graph, "graph", "params")?)?;
            let b = count_params(&Model::build(&g, &cfg.model)?);
            match a.out {
                Format::Json => to_json(&b),
                Format::Csv => {
                    let mut s = String::from("component,count\n");
                    for (k, v) in &b.components {
                        writeln!(s, "{k},{v}").unwrap();
                    }
                    writeln!(s, "total,{}", b.total).unwrap();
                    s
                }
            }
        }
        Analysis::Collapse => collapse_table(a.nodes, seeds, a.out)?,
        Analysis::Expressiveness => {
            let reports = seeds
                .map(|s| expressiveness_check(a.pairs, s).map(|r| (s, r)))
                .collect::<Result<Vec<_>, _>>()?;
            match a.out {
                Format::Json => to_json(&reports.iter().map(|(s, r)| serde_json::json!({"seed": s, "report": r})).collect::<Vec<_>>()),
                Format::Csv => {
                    let mut s = String::from("seed,pairs,baseline_distinct,encoding_distinct,violations\n");
                    for (seed, r) in &reports {
                        writeln!(s, "{seed},{},{},{},{}", r.pairs, r.baseline_distinct, r.encoding_distinct, r.violations).unwrap();
                    }
                    s
                }
            }
        }
        Analysis::Attention => {
            let g = load(need(&a.graph, "graph", "attention")?)?;
            let file = load_model(need(&a.model_file, "model-file", "attention")?)?;
            if file.model.kind() != ModelKind::BgHgnn {
                return Err(CliError::Runtime("attention needs a bg-hgnn model".into()));
            }
            let m = extract_attention_matrix(&file.model, &g, a.threshold)?;
            let paths = top_metapaths(&m, a.hops)?;
            match a.out {
                Format::Json => to_json(&serde_json::json!({ "matrix": m, "metapaths": paths })),
                Format::Csv => {
                    let mut s = String::from("src_type,dst_type,attention,binary\n");
                    for (i, src) in m.types.iter().enumerate() {
                        for (j, dst) in m.types.iter().enumerate() {
                            writeln!(s, "{src},{dst},{},{}", m.real[i][j], m.binary[i][j]).unwrap();
                        }
                    }
                    s
                }
            }
        }
        Analysis::Trend => {
            if a.reports.is_empty() {
                return Err(CliError::Usage("--what trend needs --reports".into()));
            }
            let reports = read_reports(&a.reports)?;
            match a.out {
                Format::Csv => emit_trend_data(&reports)?,
                Format::Json => to_json(&hetfuse::analysis::trend_rows(&reports)?),
            }
        }
    };
    outln!("{}", text.trim_end());
    Ok(())
}

fn collapse_table(nodes: usize, seeds: std::ops::Range<u64>, out: Format) -> Result<String, CliError> {
    let reports = seeds.map(|s| collapse_experiment(nodes, s)).collect::<Result<Vec<_>, _>>()?;
    Ok(match out {
        Format::Json => to_json(&reports),
        Format::Csv => {
            let mut s = String::from(
                "seed,n_nodes,mean_r1,mean_r2,mean_r3,r23_statistic_mean,r23_count,mean_probe_accuracy,channel_probe_accuracy\n",
            );
            for r in &reports {
                let [m1, m2, m3] = r.relation_means;
                writeln!(
                    s,
                    "{},{},{m1},{m2},{m3},{},{},{},{}",
                    r.seed, r.n_nodes, r.r23_statistic_mean, r.r23_count, r.mean_probe_accuracy, r.channel_probe_accuracy
                )
                .unwrap();
            }
            s
        }
    })
}

fn collapse_lab(a: CollapseArgs) -> Result<(), CliError> {
    announce("config", &serde_json::json!({"nodes": a.nodes, "seed": a.seed, "seeds": a.seeds}));
    if let Some(dir) = &a.dump {
        write_graph(&collapse_graph(a.nodes, a.seed)?.graph, dir)?;
    }
    outln!("{}", collapse_table(a.nodes, a.seed..a.seed + a.seeds, a.out)?.trim_end());
    Ok(())
}

fn grad_check(a: GradCheckArgs) -> Result<(), CliError> {
    announce("config", &serde_json::json!({"eps": a.eps, "tol": a.tol, "seed": a.seed}));
    let mut failed = Vec::new();
    for (name, r) in op_gradient_suite(a.seed, a.eps)? {
        outln!("op {name}: max rel error {:.3e}", r.max_rel_error);
        if !r.passes(a.tol) {
            failed.push(name.to_string());
        }
    }
    let g = synth_graph(&SchemaSpec::tiny(a.seed))?;
    for kind in [ModelKind::BgHgnn, ModelKind::RgcnBaseline] {
        let cfg = ModelConfig {
            kind,
            hidden: 6,
            heads: 2,
            fuse_dim: 5,
            rank: 3,
            seed: a.seed,
            ..Default::default()
        };
        let r = model_grad_check(&g, &cfg, a.eps)?;
        let name = kind_name(kind);
        outln!("model {name}: max rel error {:.3e} over {} parameters", r.max_rel_error, r.params.len());
        if !r.passes(a.tol) {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        outln!("all gradient checks passed");
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient checks failed: {}", failed.join(", "))))
    }
}

fn plot_data(a: PlotArgs) -> Result<(), CliError> {
    announce("config", &serde_json::json!({"kind": format!("{:?}", a.kind).to_lowercase(), "reports": a.reports}));
    let reports = read_reports(&a.reports)?;
    let csv = match a.kind {
        PlotKind::Trend => emit_trend_data(&reports)?,
        PlotKind::History => {
            let mut s = String::from("dataset,model,seed,epoch,loss,train_accuracy,seconds\n");
            for r in &reports {
                for h in &r.history {
                    let acc = h.train_accuracy.map_or(String::new(), |x| x.to_string());
                    writeln!(s, "{},{},{},{},{},{acc},{}", r.dataset, kind_name(r.model), r.seed, h.epoch, h.loss, h.seconds).unwrap();
                }
            }
            s
        }
    };
    match &a.out {
        Some(path) => write(path, &csv),
        None => {
            outln!("{}", csv.trim_end());
            Ok(())
        }
    }
}
