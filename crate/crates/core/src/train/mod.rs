//! Training loops, optimizers and evaluation.

mod link;
pub mod metrics;

pub use link::{
    resolve_relation, sample_link_pairs, sample_negatives, split_link_edges, LinkPairs, LinkSplit, NegativeMode,
};
pub use metrics::{accuracy, f1_scores, mrr, roc_auc};

use std::collections::HashSet;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{grad_check, GradCheckReport, Gradients, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::layers::{GraphInputs, Model, ModelConfig, ModelKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Node,
    Link,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node" => Ok(Task::Node),
            "link" => Ok(Task::Link),
            _ => Err(Error::InvalidArgument(format!("unknown task '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    #[default]
    Gd,
    Momentum,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gd" | "sgd" => Ok(OptimizerKind::Gd),
            "momentum" => Ok(OptimizerKind::Momentum),
            "adam" => Ok(OptimizerKind::Adam),
            _ => Err(Error::InvalidArgument(format!("unknown optimizer '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    /// Relation to predict; the largest relation when unset.
    pub relation: Option<String>,
    pub negatives: NegativeMode,
    /// Train/val/test fractions of the target relation's edges.
    pub split: [f64; 3],
    /// Corrupted destinations ranked against each positive for MRR.
    pub mrr_candidates: usize,
}

impl Default for LinkConfig {
    fn default() -> Self {
        LinkConfig {
            relation: None,
            negatives: NegativeMode::TwoHop,
            split: [0.8, 0.1, 0.1],
            mrr_candidates: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub trials: usize,
    pub optimizer: OptimizerKind,
    pub momentum: f64,
    pub weight_decay: f64,
    pub task: Task,
    pub model: ModelConfig,
    pub link: LinkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            lr: 0.05,
            seed: 0,
            trials: 5,
            optimizer: OptimizerKind::Gd,
            momentum: 0.9,
            weight_decay: 0.0,
            task: Task::Node,
            model: ModelConfig::default(),
            link: LinkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// Training accuracy (node task) measured before the update.
    pub train_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeMetrics {
    pub train_accuracy: f64,
    pub val_micro_f1: Option<f64>,
    pub val_macro_f1: Option<f64>,
    pub test_micro_f1: Option<f64>,
    pub test_macro_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkMetrics {
    pub relation: String,
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub test_mrr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Free-form dataset label, used to pair reports in trend data.
    #[serde(default)]
    pub dataset: String,
    pub model: ModelKind,
    pub task: Task,
    pub seed: u64,
    pub history: Vec<EpochRecord>,
    pub node: Option<NodeMetrics>,
    pub link: Option<LinkMetrics>,
    pub param_count: usize,
    pub num_relations: usize,
    pub num_edges: usize,
    pub config: TrainConfig,
}

impl RunReport {
    pub fn mean_epoch_seconds(&self) -> Option<f64> {
        (!self.history.is_empty()).then(|| self.history.iter().map(|r| r.seconds).sum::<f64>() / self.history.len() as f64)
    }

    pub fn micro_f1(&self) -> Option<f64> {
        self.node.as_ref().and_then(|n| n.test_micro_f1)
    }
}

/// First-order optimizer state.
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
}

impl Optimizer {
    pub fn new(cfg: &TrainConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.lr,
            momentum: cfg.momentum,
            weight_decay: cfg.weight_decay,
            step: 0,
            first: zeros(),
            second: if cfg.optimizer == OptimizerKind::Adam { zeros() } else { Vec::new() },
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let g = grads.get(id);
            let p = store.get_mut(id);
            let k = id.0;
            for i in 0..p.len() {
                let grad = g.data()[i] + self.weight_decay * p.data()[i];
                let delta = match self.kind {
                    OptimizerKind::Gd => grad,
                    OptimizerKind::Momentum => {
                        let v = &mut self.first[k].data_mut()[i];
                        *v = self.momentum * *v + grad;
                        *v
                    }
                    OptimizerKind::Adam => {
                        let m = &mut self.first[k].data_mut()[i];
                        *m = b1 * *m + (1.0 - b1) * grad;
                        let m_hat = *m / (1.0 - b1.powi(self.step));
                        let v = &mut self.second[k].data_mut()[i];
                        *v = b2 * *v + (1.0 - b2) * grad * grad;
                        let v_hat = *v / (1.0 - b2.powi(self.step));
                        m_hat / (v_hat.sqrt() + eps)
                    }
                };
                p.data_mut()[i] -= self.lr * delta;
            }
        }
    }
}

/// Mean softmax cross-entropy of `logits` rows `nodes` against `labels`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, nodes: &[usize], labels: &[usize]) -> Result<Var> {
    if nodes.is_empty() {
        return Err(Error::MissingLabels);
    }
    let logp = tape.log_softmax_rows(logits)?;
    let rows = tape.gather_rows(logp, nodes)?;
    let picked = tape.pick(rows, labels)?;
    let mean = tape.mean(picked)?;
    tape.scale(mean, -1.0)
}

/// `dot(h_u, h_v)` for each pair, as a column.
pub fn pair_scores(tape: &mut Tape, h: Var, pairs: &[(usize, usize)]) -> Result<Var> {
    let us: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let vs: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let hu = tape.gather_rows(h, &us)?;
    let hv = tape.gather_rows(h, &vs)?;
    let prod = tape.mul(hu, hv)?;
    let width = tape.shape(h)[1];
    let ones = tape.constant(Tensor::full(&[width, 1], 1.0));
    tape.matmul(prod, ones)
}

/// Mean binary cross-entropy on dot-product scores.
pub fn link_loss(tape: &mut Tape, h: Var, pairs: &LinkPairs) -> Result<Var> {
    let scores = pair_scores(tape, h, &pairs.pairs)?;
    // softplus(-s) for positives, softplus(s) for negatives.
    let signs: Vec<f64> = pairs.labels.iter().map(|&l| if l { -1.0 } else { 1.0 }).collect();
    let signed = tape.scale_rows(scores, &signs)?;
    let sp = tape.softplus(signed)?;
    tape.mean(sp)
}

fn argmax_rows(t: &Tensor) -> Vec<usize> {
    (0..t.rows())
        .map(|i| {
            let row = t.row(i);
            (0..row.len()).fold(0, |best, j| if row[j] > row[best] { j } else { best })
        })
        .collect()
}

/// A trained model with its report.
pub struct TrainedModel {
    pub model: Model,
    pub report: RunReport,
}

enum Objective {
    Node { train: Vec<usize>, labels: Vec<usize> },
    Link { split: LinkSplit, pairs: LinkPairs },
}

/// Trains one model on `g` with seed `cfg.seed` (the model is initialized
/// from the same seed).
pub fn train_model(g: &HeteroGraph, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let model_cfg = ModelConfig {
        seed: cfg.seed,
        ..cfg.model.clone()
    };
    let (objective, graph) = match cfg.task {
        Task::Node => {
            let labels = g.labels().ok_or(Error::MissingLabels)?;
            let train: Vec<usize> = match g.splits() {
                Some(s) => s.train.clone(),
                None => labels.keys().copied().collect(),
            };
            let train: Vec<usize> = train.into_iter().filter(|v| labels.contains_key(v)).collect();
            if train.is_empty() {
                return Err(Error::MissingLabels);
            }
            let y = train.iter().map(|v| labels[v]).collect();
            (Objective::Node { train, labels: y }, g.clone())
        }
        Task::Link => {
            let rel = resolve_relation(g, cfg.link.relation.as_deref())?;
            let split = split_link_edges(g, rel, cfg.link.split, cfg.seed)?;
            let negatives = sample_negatives(g, rel, cfg.link.negatives, split.train.len(), cfg.seed ^ 0x5eed)?;
            let pairs = LinkPairs::from_parts(&split.train, &negatives);
            let graph = split.train_graph.clone();
            (Objective::Link { split, pairs }, graph)
        }
    };

    let mut model = Model::build(&graph, &model_cfg)?;
    let inputs = model.prepare(&graph)?;
    let mut opt = Optimizer::new(cfg, &model.store);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let use_dropout = model_cfg.dropout > 0.0;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let mut tape = Tape::new();
        let step = |tape: &mut Tape, rng: Option<&mut ChaCha8Rng>| -> Result<(Var, Option<f64>)> {
            let out = model.forward(tape, &inputs, rng)?;
            match &objective {
                Objective::Node { train, labels } => {
                    let logits = out.logits.ok_or(Error::MissingLabels)?;
                    let loss = cross_entropy(tape, logits, train, labels)?;
                    let pred = argmax_rows(tape.value(logits));
                    let train_pred: Vec<usize> = train.iter().map(|&v| pred[v]).collect();
                    Ok((loss, Some(accuracy(&train_pred, labels))))
                }
                Objective::Link { pairs, .. } => Ok((link_loss(tape, out.embeddings, pairs)?, None)),
            }
        };
        let (loss, train_accuracy) = match step(&mut tape, use_dropout.then_some(&mut drop_rng)) {
            Err(Error::NonFinite { .. }) => return Err(Error::Diverged { epoch }),
            other => other?,
        };
        let loss_value = tape.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let grads = tape.backward(loss, &model.store)?;
        if !grads.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        opt.step(&mut model.store, &grads);
        history.push(EpochRecord {
            epoch,
            loss: loss_value,
            train_accuracy,
            seconds: start.elapsed().as_secs_f64(),
        });
    }

    let (node, link) = match &objective {
        Objective::Node { .. } => (Some(evaluate_node(&model, &inputs, g)?), None),
        Objective::Link { split, .. } => (None, Some(evaluate_link(&model, &inputs, g, split, cfg)?)),
    };
    let report = RunReport {
        dataset: String::new(),
        model: model_cfg.kind,
        task: cfg.task,
        seed: cfg.seed,
        history,
        node,
        link,
        param_count: model.store.num_scalars(),
        num_relations: g.num_edge_types(),
        num_edges: g.edge_count(),
        config: TrainConfig {
            model: model_cfg,
            ..cfg.clone()
        },
    };
    Ok(TrainedModel { model, report })
}

/// Scores a model trained with `cfg` on `g`. Link models are evaluated on
/// the held-out edges of the same seeded split used for training.
pub fn evaluate_model(model: &Model, g: &HeteroGraph, cfg: &TrainConfig) -> Result<(Option<NodeMetrics>, Option<LinkMetrics>)> {
    match cfg.task {
        Task::Node => Ok((Some(evaluate_node(model, &model.prepare(g)?, g)?), None)),
        Task::Link => {
            let rel = resolve_relation(g, cfg.link.relation.as_deref())?;
            let split = split_link_edges(g, rel, cfg.link.split, cfg.seed)?;
            let inputs = model.prepare(&split.train_graph)?;
            Ok((None, Some(evaluate_link(model, &inputs, g, &split, cfg)?)))
        }
    }
}

pub fn train(g: &HeteroGraph, cfg: &TrainConfig) -> Result<RunReport> {
    train_model(g, cfg).map(|t| t.report)
}

/// `cfg.trials` independent runs with seeds `cfg.seed, cfg.seed + 1, ...`,
/// optionally on one thread each.
pub fn train_trials(g: &HeteroGraph, cfg: &TrainConfig, parallel: bool) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let configs: Vec<TrainConfig> = (0..cfg.trials as u64)
        .map(|i| TrainConfig {
            seed: cfg.seed.wrapping_add(i),
            ..cfg.clone()
        })
        .collect();
    if !parallel {
        return configs.iter().map(|c| train(g, c)).collect();
    }
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || train(g, c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("training thread panicked"))
            .collect()
    })
}

/// Finite-difference check of the node-classification loss over every
/// labeled node, for a freshly initialized model.
pub fn model_grad_check(g: &HeteroGraph, cfg: &ModelConfig, eps: f64) -> Result<GradCheckReport> {
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let nodes: Vec<usize> = labels.keys().copied().collect();
    let y: Vec<usize> = labels.values().copied().collect();
    let model = Model::build(g, cfg)?;
    let inputs = model.prepare(g)?;
    grad_check(
        |tape, store| {
            let out = model.forward_with(tape, store, &inputs, None)?;
            let logits = out.logits.ok_or(Error::MissingLabels)?;
            cross_entropy(tape, logits, &nodes, &y)
        },
        &model.store,
        eps,
    )
}

/// Node-classification metrics on the splits of `g`.
pub fn evaluate_node(model: &Model, inputs: &GraphInputs, g: &HeteroGraph) -> Result<NodeMetrics> {
    let labels = g.labels().ok_or(Error::MissingLabels)?;
    let (_, logits, _) = model.predict(inputs)?;
    let logits = logits.ok_or(Error::MissingLabels)?;
    let pred = argmax_rows(&logits);
    let score = |nodes: &[usize]| -> Result<Option<(f64, f64)>> {
        let nodes: Vec<usize> = nodes.iter().copied().filter(|v| labels.contains_key(v)).collect();
        if nodes.is_empty() {
            return Ok(None);
        }
        let p: Vec<usize> = nodes.iter().map(|&v| pred[v]).collect();
        let y: Vec<usize> = nodes.iter().map(|v| labels[v]).collect();
        f1_scores(&p, &y).map(Some)
    };
    let all: Vec<usize> = labels.keys().copied().collect();
    let (train, val, test) = match g.splits() {
        Some(s) => (s.train.clone(), s.val.clone(), s.test.clone()),
        None => (all.clone(), Vec::new(), all),
    };
    let train_accuracy = score(&train)?.map_or(0.0, |s| s.0);
    let val = score(&val)?;
    let test = score(&test)?;
    Ok(NodeMetrics {
        train_accuracy,
        val_micro_f1: val.map(|s| s.0),
        val_macro_f1: val.map(|s| s.1),
        test_micro_f1: test.map(|s| s.0),
        test_macro_f1: test.map(|s| s.1),
    })
}

fn evaluate_link(model: &Model, inputs: &GraphInputs, g: &HeteroGraph, split: &LinkSplit, cfg: &TrainConfig) -> Result<LinkMetrics> {
    let (h, _, _) = model.predict(inputs)?;
    let dot = |u: usize, v: usize| h.row(u).iter().zip(h.row(v)).map(|(a, b)| a * b).sum::<f64>();
    let rel = split.relation;
    let auc_for = |positives: &[(usize, usize)], salt: u64| -> Result<Option<f64>> {
        if positives.is_empty() {
            return Ok(None);
        }
        let negatives = sample_negatives(g, rel, cfg.link.negatives, positives.len(), cfg.seed ^ salt)?;
        let pairs = LinkPairs::from_parts(positives, &negatives);
        let scores: Vec<f64> = pairs.pairs.iter().map(|&(u, v)| dot(u, v)).collect();
        roc_auc(&scores, &pairs.labels).map(Some)
    };
    let val_auc = auc_for(&split.val, 0x7a1)?;
    let test_auc = auc_for(&split.test, 0x7e57)?;

    let existing: HashSet<(usize, usize)> = g
        .edges()
        .iter()
        .zip(g.edge_types())
        .filter(|(_, &t)| t == rel)
        .map(|(&e, _)| e)
        .collect();
    let test_mrr = if split.test.is_empty() || cfg.link.mrr_candidates == 0 {
        None
    } else {
        let dst_type = g.node_type(split.test[0].1);
        let pool = g.nodes_of_type(dst_type);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x3a1);
        let mut lists = Vec::with_capacity(split.test.len());
        for &(u, v) in &split.test {
            let mut scores = vec![dot(u, v)];
            let mut flags = vec![true];
            for _ in 0..cfg.link.mrr_candidates * 10 {
                if scores.len() > cfg.link.mrr_candidates {
                    break;
                }
                let w = pool[rng.random_range(0..pool.len())];
                if w != u && w != v && !existing.contains(&(u, w)) {
                    scores.push(dot(u, w));
                    flags.push(false);
                }
            }
            lists.push((scores, flags));
        }
        Some(mrr(&lists)?)
    };
    Ok(LinkMetrics {
        relation: g.edge_type_names()[rel].clone(),
        val_auc,
        test_auc,
        test_mrr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{synth_graph, SchemaSpec};

    fn small() -> HeteroGraph {
        let mut spec = SchemaSpec::acm_like(11);
        for t in &mut spec.node_types {
            t.count = t.count.div_ceil(8);
        }
        synth_graph(&spec).unwrap()
    }

    fn quick(task: Task) -> TrainConfig {
        TrainConfig {
            epochs: 3,
            task,
            model: ModelConfig {
                hidden: 8,
                heads: 2,
                fuse_dim: 8,
                featureless_dim: 4,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn zero_epochs_reports_initial_metrics() {
        let g = small();
        let r = train(&g, &TrainConfig { epochs: 0, ..quick(Task::Node) }).unwrap();
        assert!(r.history.is_empty());
        assert!(r.node.unwrap().test_micro_f1.is_some());
    }

    #[test]
    fn same_seed_same_history() {
        let g = small();
        let a = train(&g, &quick(Task::Node)).unwrap();
        let b = train(&g, &quick(Task::Node)).unwrap();
        let la: Vec<f64> = a.history.iter().map(|r| r.loss).collect();
        let lb: Vec<f64> = b.history.iter().map(|r| r.loss).collect();
        assert_eq!(la, lb);
    }

    #[test]
    fn link_task_reports_auc_and_mrr() {
        let g = small();
        let cfg = TrainConfig {
            link: LinkConfig {
                relation: Some("paper_author".into()),
                negatives: NegativeMode::RandomHop,
                ..Default::default()
            },
            ..quick(Task::Link)
        };
        let r = train(&g, &cfg).unwrap();
        let link = r.link.unwrap();
        assert!(link.test_auc.is_some_and(|a| (0.0..=1.0).contains(&a)));
        assert!(link.test_mrr.is_some_and(|m| m > 0.0 && m <= 1.0));
    }

    #[test]
    fn unlabeled_graph_is_rejected_for_node_task() {
        let g = small().with_labels(None, None).unwrap();
        assert!(matches!(train(&g, &quick(Task::Node)), Err(Error::MissingLabels)));
    }

    #[test]
    fn exploding_learning_rate_reports_epoch() {
        let g = small();
        let cfg = TrainConfig { lr: 1e200, epochs: 20, ..quick(Task::Node) };
        match train(&g, &cfg) {
            Err(Error::Diverged { epoch }) => assert!(epoch < 20),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn parallel_trials_match_sequential() {
        let g = small();
        let cfg = TrainConfig { trials: 2, epochs: 2, ..quick(Task::Node) };
        let a = train_trials(&g, &cfg, true).unwrap();
        let b = train_trials(&g, &cfg, false).unwrap();
        let losses = |rs: &[RunReport]| rs.iter().map(|r| r.history[1].loss).collect::<Vec<_>>();
        assert_eq!(losses(&a), losses(&b));
        assert_eq!(a[1].seed, cfg.seed + 1);
    }
}
