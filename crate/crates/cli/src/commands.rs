use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use rcx_core::agent::{
    beam_explain, explainer_log_csv, read_policy, train_explainer, write_policy, ExplainerHyper, PolicyParams,
    PolicySpec, RcExplainer, RolloutMode,
};
use rcx_core::attribution::{AttributionContext, RewardMode, DEFAULT_PROB_FLOOR};
use rcx_core::baselines::{Occlusion, RandomExplainer};
use rcx_core::dataset::{read_dataset, split, write_dataset, Dataset, SplitName};
use rcx_core::dot::export_dot;
use rcx_core::explain::{Explainer, RankedEdges};
use rcx_core::gnn::{read_params, write_params, ModelParams, ModelSpec, Readout};
use rcx_core::metrics::{acc_at_ratio, acc_auc, contrastivity, gt_precision_recall, sanity_check, top_k_count};
use rcx_core::screening::{greedy_screening, GreedyScreening};
use rcx_core::synth::{generate_planted_motif, random_connected_graph, MotifConfig};
use rcx_core::zoo::{epoch_log_csv, evaluate_accuracy, randomized_clone, train_target, TrainHyper};
use rcx_core::{Error, Result};

use crate::manifest::Manifest;
use crate::{
    BenchArgs, Command, EvaluateArgs, ExplainArgs, ExplainerSelection, ExportDotArgs, GenDataArgs, Method, MetricArg,
    ReadoutArg, RewardArg, RolloutArg, SanityCheckArgs, SplitArg, TrainExplainerArgs, TrainTargetArgs,
};

pub const EXPLANATIONS_SCHEMA_VERSION: u32 = 1;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::GenData(a) => gen_data(&a),
        Command::TrainTarget(a) => train_target_cmd(&a),
        Command::TrainExplainer(a) => train_explainer_cmd(&a),
        Command::Explain(a) => explain(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::SanityCheck(a) => sanity_check_cmd(&a),
        Command::ExportDot(a) => export_dot_cmd(&a),
        Command::Bench(a) => bench(&a),
    }
}

impl From<SplitArg> for SplitName {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => SplitName::Train,
            SplitArg::Valid => SplitName::Valid,
            SplitArg::Test => SplitName::Test,
        }
    }
}

impl From<RewardArg> for RewardMode {
    fn from(r: RewardArg) -> Self {
        match r {
            RewardArg::Mi => RewardMode::Mi,
            RewardArg::Binary => RewardMode::Binary,
            RewardArg::Ce => RewardMode::Ce,
        }
    }
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Rc => "rc",
            Method::Random => "random",
            Method::Occlusion => "occlusion",
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn sibling(primary: &Path, suffix: &str) -> PathBuf {
    let mut name = primary.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    primary.with_file_name(name)
}

fn load_model(path: &Path, dataset: &Dataset) -> Result<ModelParams> {
    let model = read_params(path, None)?;
    if model.spec.input_dim() != dataset.feature_dim() || model.spec.num_classes != dataset.num_classes {
        return Err(Error::Validation(format!(
            "model {} expects {} features and {} classes; dataset has {} and {}",
            path.display(),
            model.spec.input_dim(),
            model.spec.num_classes,
            dataset.feature_dim(),
            dataset.num_classes
        )));
    }
    Ok(model)
}

fn load_policy(path: Option<&PathBuf>, model: &ModelParams) -> Result<PolicyParams> {
    let path = path.ok_or_else(|| Error::Validation("method `rc` needs --policy".into()))?;
    let policy = read_policy(path)?;
    if policy.spec.num_classes != model.spec.num_classes || policy.spec.encoder_dims[0] != model.spec.input_dim() {
        return Err(Error::Validation(format!(
            "policy {} does not match the model's features or classes",
            path.display()
        )));
    }
    Ok(policy)
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let ratios: [f64; 3] = a
        .ratios
        .as_slice()
        .try_into()
        .map_err(|_| Error::Validation(format!("--ratios needs 3 values, got {}", a.ratios.len())))?;
    let raw = generate_planted_motif(&MotifConfig {
        n_graphs: a.n,
        n_classes: a.classes,
        base_nodes: a.base_nodes,
        seed: a.seed,
    })?;
    let ds = split(&raw, ratios, a.seed)?;
    write_dataset(&a.out, &ds)?;
    let mut m = Manifest::new("gen-data", a);
    m.seed("seed", a.seed).output(&a.out);
    m.write(&a.out)?;
    println!("wrote {} graphs to {}", ds.graphs.len(), a.out.display());
    Ok(())
}

fn train_target_cmd(a: &TrainTargetArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let mut dims = vec![ds.feature_dim()];
    dims.extend(std::iter::repeat_n(a.hidden, a.layers));
    let spec = ModelSpec {
        num_layers: a.layers,
        layer_dims: dims,
        num_classes: ds.num_classes,
        readout: match a.readout {
            ReadoutArg::Sum => Readout::Sum,
            ReadoutArg::Mean => Readout::Mean,
        },
        predictor_hidden: a.predictor_hidden.unwrap_or(a.hidden),
    };
    spec.validate()?;
    let hyper = TrainHyper {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.weight_decay,
        patience: a.patience,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let out = train_target(&ds, &spec, &hyper)?;
    let log = a.log.clone().unwrap_or_else(|| sibling(&a.out, ".log.csv"));
    write_params(&a.out, &out.params)?;
    write_text(&log, &epoch_log_csv(&out.log))?;
    let mut m = Manifest::new("train-target", a);
    m.seed("seed", a.seed).input(&a.data)?;
    m.output(&a.out).output(&log);
    m.write(&a.out)?;
    let test = if ds.splits.test.is_empty() {
        String::from("n/a")
    } else {
        evaluate_accuracy(&out.params, &ds, SplitName::Test)?.to_string()
    };
    println!("best epoch {:?}, test accuracy {test}", out.best_epoch);
    Ok(())
}

fn train_explainer_cmd(a: &TrainExplainerArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let model = load_model(&a.model, &ds)?;
    let edge_dim = ds.graphs.first().map_or(0, |g| g.edge_feature_dim());
    let spec = PolicySpec::for_model(&model.spec, edge_dim, a.width);
    let init = PolicyParams::init(&spec, a.seed)?;
    let hyper = ExplainerHyper {
        epochs: a.epochs,
        lr: a.lr,
        weight_decay: a.weight_decay,
        batch_size: a.batch_size,
        train_ratio: a.train_ratio,
        reward_mode: a.reward.into(),
        rollout_mode: match a.rollout {
            RolloutArg::Sample => RolloutMode::Sample,
            RolloutArg::Greedy => RolloutMode::Greedy,
        },
        baseline_momentum: a.baseline_momentum,
        seed: a.seed,
    };
    let out = train_explainer(&init, &model, &ds, &hyper)?;
    let log = a.log.clone().unwrap_or_else(|| sibling(&a.out, ".log.csv"));
    write_policy(&a.out, &out.policy)?;
    write_text(&log, &explainer_log_csv(&out.log))?;
    let mut m = Manifest::new("train-explainer", a);
    m.seed("seed", a.seed).input(&a.data)?.input(&a.model)?;
    m.output(&a.out).output(&log);
    m.write(&a.out)?;
    let best = out.best_epoch.and_then(|e| out.log.get(e - 1)).map(|l| l.valid_acc_auc);
    println!("best epoch {:?}, validation ACC-AUC {best:?}", out.best_epoch);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub graph_id: String,
    pub target_class: usize,
    /// Explanation size.
    pub k: usize,
    /// Ranked edge indices; the first `k` form the explanation.
    pub order: Vec<usize>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cumulative_reward: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExplanationFile {
    pub schema_version: u32,
    pub method: String,
    pub split: String,
    pub explanations: Vec<ExplanationRecord>,
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let model = load_model(&a.model, &ds)?;
    let mut m = Manifest::new("explain", a);
    m.input(&a.data)?.input(&a.model)?;
    let sel = &a.explainer;
    if a.beam.is_some() && sel.method != Method::Rc {
        return Err(Error::Validation("--beam applies only to --method rc".into()));
    }
    let explainer = explainer_for(sel, &model, &mut m)?;
    let split: SplitName = a.split.into();
    let mut records = Vec::new();
    for &i in ds.splits.get(split) {
        let g = &ds.graphs[i];
        if a.graph.as_deref().is_some_and(|id| id != g.graph_id()) {
            continue;
        }
        let target = model.forward(g)?.predicted_class();
        let k = match a.k {
            Some(k) => k.min(g.num_edges()),
            None => top_k_count(g.num_edges(), a.ratio),
        };
        let (ranked, reward) = match (a.beam, &explainer) {
            (Some(width), Chosen::Rc(rc)) if k > 0 => {
                let ctx = AttributionContext::with_target(&model, g, target, DEFAULT_PROB_FLOOR)?;
                let b = beam_explain(&rc.policy, &ctx, k, width, a.reward.into())?;
                (b.ranked, Some(b.cumulative_reward))
            }
            _ => (explainer.get().explain(&model, g, target)?, None),
        };
        records.push(ExplanationRecord {
            graph_id: g.graph_id().to_string(),
            target_class: target,
            k,
            order: ranked.order().to_vec(),
            scores: ranked.scores().to_vec(),
            cumulative_reward: reward,
        });
    }
    if let Some(id) = &a.graph {
        if records.is_empty() {
            return Err(Error::Validation(format!("graph `{id}` not in the {} split", split.as_str())));
        }
    }
    let file = ExplanationFile {
        schema_version: EXPLANATIONS_SCHEMA_VERSION,
        method: sel.method.as_str().to_string(),
        split: split.as_str().to_string(),
        explanations: records,
    };
    let mut text = serde_json::to_string_pretty(&file).expect("explanations serialize");
    text.push('\n');
    write_text(&a.out, &text)?;
    m.output(&a.out);
    m.write(&a.out)?;
    println!("explained {} graphs", file.explanations.len());
    Ok(())
}

enum Chosen {
    Rc(Box<RcExplainer>),
    Other(Box<dyn Explainer>),
}

impl Chosen {
    fn get(&self) -> &dyn Explainer {
        match self {
            Chosen::Rc(rc) => rc.as_ref(),
            Chosen::Other(b) => b.as_ref(),
        }
    }
}

fn explainer_for(sel: &ExplainerSelection, model: &ModelParams, m: &mut Manifest) -> Result<Chosen> {
    make_explainer(sel.method, sel.policy.as_ref(), sel.seed, model, m)
}

fn make_explainer(
    method: Method,
    policy: Option<&PathBuf>,
    seed: u64,
    model: &ModelParams,
    m: &mut Manifest,
) -> Result<Chosen> {
    Ok(match method {
        Method::Greedy => Chosen::Other(Box::new(GreedyScreening)),
        Method::Occlusion => Chosen::Other(Box::new(Occlusion)),
        Method::Random => {
            m.seed("random_explainer", seed);
            Chosen::Other(Box::new(RandomExplainer { seed }))
        }
        Method::Rc => {
            let p = load_policy(policy, model)?;
            m.input(policy.expect("checked by load_policy"))?;
            Chosen::Rc(Box::new(RcExplainer { policy: p }))
        }
    })
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let model = load_model(&a.model, &ds)?;
    let split: SplitName = a.split.into();
    if ds.splits.get(split).is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", split.as_str())));
    }
    let mut m = Manifest::new("evaluate", a);
    m.input(&a.data)?.input(&a.model)?;
    let randomized = if a.metrics.contains(&MetricArg::Sc) {
        m.seed("random_model_seed", a.random_model_seed);
        Some(randomized_clone(&model, a.random_model_seed)?)
    } else {
        None
    };
    let mut results = String::from("method,metric,value,graphs_used,graphs_skipped\n");
    let mut curves = String::from("method,ratio,accuracy\n");
    let n_split = ds.splits.get(split).len();
    for &method in &a.methods {
        let chosen = make_explainer(method, a.policy.as_ref(), a.seed, &model, &mut m)?;
        let ex = chosen.get();
        let name = method.as_str();
        for metric in &a.metrics {
            match metric {
                MetricArg::Acc => {
                    let mut hits = 0usize;
                    for g in ds.split_graphs(split) {
                        let target = model.forward(g)?.predicted_class();
                        let ranked = ex.explain(&model, g, target)?;
                        hits += usize::from(acc_at_ratio(&model, g, &ranked, a.ratio)?);
                    }
                    let value = hits as f64 / n_split as f64;
                    writeln!(results, "{name},acc@{},{value},{n_split},0", a.ratio).unwrap();
                }
                MetricArg::Auc => {
                    let curve = acc_auc(&model, &ds, split, ex)?;
                    writeln!(results, "{name},acc_auc,{},{n_split},0", curve.auc).unwrap();
                    for (r, acc) in curve.ratios.iter().zip(&curve.accuracy) {
                        writeln!(curves, "{name},{r},{acc}").unwrap();
                    }
                }
                MetricArg::Cst => {
                    let s = contrastivity(ex, &model, &ds, split)?;
                    writeln!(results, "{name},cst,{},{},{}", s.mean_abs, s.graphs_used, s.graphs_skipped).unwrap();
                }
                MetricArg::Sc => {
                    let s = sanity_check(ex, &model, randomized.as_ref().expect("built above"), &ds, split)?;
                    writeln!(results, "{name},sc,{},{},{}", s.mean_abs, s.graphs_used, s.graphs_skipped).unwrap();
                }
                MetricArg::Gt => {
                    let (mut p, mut r, mut used) = (0.0, 0.0, 0usize);
                    for &i in ds.splits.get(split) {
                        let Some(truth) = ds.ground_truth[i].as_ref() else { continue };
                        let g = &ds.graphs[i];
                        let target = model.forward(g)?.predicted_class();
                        let ranked = ex.explain(&model, g, target)?;
                        let (pi, ri) = gt_precision_recall(&ranked, truth, truth.len())?;
                        p += pi;
                        r += ri;
                        used += 1;
                    }
                    if used == 0 {
                        return Err(Error::UndefinedMetric("no graph in the split has ground truth".into()));
                    }
                    let skipped = n_split - used;
                    let u = used as f64;
                    writeln!(results, "{name},gt_precision,{},{used},{skipped}", p / u).unwrap();
                    writeln!(results, "{name},gt_recall,{},{used},{skipped}", r / u).unwrap();
                }
            }
        }
    }
    write_text(&a.out, &results)?;
    m.output(&a.out);
    if a.metrics.contains(&MetricArg::Auc) {
        let path = a.curves.clone().unwrap_or_else(|| sibling(&a.out, ".curves.csv"));
        write_text(&path, &curves)?;
        m.output(&path);
    }
    m.write(&a.out)?;
    print!("{results}");
    Ok(())
}

fn sanity_check_cmd(a: &SanityCheckArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let model = load_model(&a.model, &ds)?;
    let mut m = Manifest::new("sanity-check", a);
    m.input(&a.data)?.input(&a.model)?;
    m.seed("random_model_seed", a.random_model_seed);
    let chosen = explainer_for(&a.explainer, &model, &mut m)?;
    let randomized = randomized_clone(&model, a.random_model_seed)?;
    let s = sanity_check(chosen.get(), &model, &randomized, &ds, a.split.into())?;
    let text = format!(
        "method,sc,graphs_used,graphs_skipped\n{},{},{},{}\n",
        a.explainer.method.as_str(),
        s.mean_abs,
        s.graphs_used,
        s.graphs_skipped
    );
    write_text(&a.out, &text)?;
    m.output(&a.out);
    m.write(&a.out)?;
    print!("{text}");
    Ok(())
}

fn export_dot_cmd(a: &ExportDotArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let text = fs::read_to_string(&a.explanations).map_err(|e| Error::Io {
        path: a.explanations.clone(),
        source: e,
    })?;
    let file: ExplanationFile =
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", a.explanations.display())))?;
    if file.schema_version != EXPLANATIONS_SCHEMA_VERSION {
        return Err(Error::Validation(format!(
            "explanations schema version {} unsupported",
            file.schema_version
        )));
    }
    let graph = ds
        .graphs
        .iter()
        .find(|g| g.graph_id() == a.graph)
        .ok_or_else(|| Error::Validation(format!("graph `{}` not in {}", a.graph, a.data.display())))?;
    let rec = file
        .explanations
        .iter()
        .find(|r| r.graph_id == a.graph)
        .ok_or_else(|| Error::Validation(format!("no explanation for `{}`", a.graph)))?;
    let ranked = RankedEdges::new(rec.order.clone(), rec.scores.clone())?;
    export_dot(graph, &ranked, &a.out)?;
    let mut m = Manifest::new("export-dot", a);
    m.input(&a.data)?.input(&a.explanations)?;
    m.output(&a.out);
    m.write(&a.out)?;
    Ok(())
}

fn machine_descriptor() -> BTreeMap<String, serde_json::Value> {
    let cpu = fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|t| {
            t.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|s| s.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    let cores = std::thread::available_parallelism().map_or(0, |n| n.get());
    BTreeMap::from([
        ("os".to_string(), json!(std::env::consts::OS)),
        ("arch".to_string(), json!(std::env::consts::ARCH)),
        ("cpu".to_string(), json!(cpu)),
        ("logical_cores".to_string(), json!(cores)),
        ("timing_threads".to_string(), json!(1)),
    ])
}

/// Timings are measured on a single worker thread after one warm-up graph.
/// Unlike every other command, the timing CSV is not byte-reproducible.
fn bench(a: &BenchArgs) -> Result<()> {
    let ds = read_dataset(&a.data)?;
    let model = load_model(&a.model, &ds)?;
    let split: SplitName = a.split.into();
    let graphs: Vec<_> = ds.split_graphs(split).collect();
    if graphs.is_empty() {
        return Err(Error::Validation(format!("the {} split is empty", split.as_str())));
    }
    let mut m = Manifest::new("bench", a);
    m.input(&a.data)?.input(&a.model)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Validation(format!("thread pool: {e}")))?;
    let mut csv = String::from("section,method,num_edges,k,graphs,seconds_per_graph,forwards_per_graph\n");
    for &method in &a.methods {
        let chosen = make_explainer(method, a.policy.as_ref(), a.seed, &model, &mut m)?;
        let ex = chosen.get();
        let secs = pool.install(|| -> Result<f64> {
            let warm = graphs[0];
            ex.explain(&model, warm, model.forward(warm)?.predicted_class())?;
            let start = Instant::now();
            for g in &graphs {
                ex.explain(&model, g, model.forward(g)?.predicted_class())?;
            }
            Ok(start.elapsed().as_secs_f64() / graphs.len() as f64)
        })?;
        let mean_edges = graphs.iter().map(|g| g.num_edges()).sum::<usize>() as f64 / graphs.len() as f64;
        writeln!(csv, "explainers,{},{mean_edges},full,{},{secs},", method.as_str(), graphs.len()).unwrap();
    }
    let reps = 5;
    for &e in &a.scaling_edges {
        let nodes = (e * 3 / 5 + 1).max(a.scaling_k + 1);
        let sample: Vec<_> = (0..reps)
            .map(|r| random_connected_graph(&format!("bench-{e}-{r}"), nodes, e, a.seed.wrapping_add(r as u64)))
            .collect::<Result<_>>()?;
        let k = a.scaling_k.min(e);
        let (secs, forwards) = pool.install(|| -> Result<(f64, f64)> {
            let warm = AttributionContext::new(&model, &sample[0])?;
            greedy_screening(&warm, k)?;
            let mut forwards = 0;
            let start = Instant::now();
            for g in &sample {
                let ctx = AttributionContext::new(&model, g)?;
                greedy_screening(&ctx, k)?;
                forwards += ctx.forward_count();
            }
            Ok((start.elapsed().as_secs_f64() / reps as f64, forwards as f64 / reps as f64))
        })?;
        writeln!(csv, "scaling,greedy,{e},{k},{reps},{secs},{forwards}").unwrap();
    }
    write_text(&a.out, &csv)?;
    m.output(&a.out);
    m.seed("seed", a.seed);
    m.extra.insert("machine".into(), json!(machine_descriptor()));
    m.write(&a.out)?;
    print!("{csv}");
    Ok(())
}
