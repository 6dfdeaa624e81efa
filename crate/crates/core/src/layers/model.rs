use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{dropout, Activation, GatEdges, GatLayer, Linear, RelationIndex, RgcnLayer};
use crate::attr::{build_unified_schema, project_features, UnifiedSchema};
use crate::autodiff::{ParamStore, Tape, Tensor, Var};
use crate::encoding::{build_codebook, neighbor_relation_summary, EncodingConfig, TypeCodebook};
use crate::error::{Error, Result};
use crate::fusion::{FusionInputs, FusionLayer, FusionParams, FusionVariant};
use crate::graph::{init_featureless, HeteroGraph};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    BgHgnn,
    #[serde(alias = "rgcn")]
    RgcnBaseline,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bg-hgnn" => Ok(ModelKind::BgHgnn),
            "rgcn" | "rgcn-baseline" => Ok(ModelKind::RgcnBaseline),
            _ => Err(Error::InvalidArgument(format!("unknown model kind '{s}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub layers: usize,
    pub hidden: usize,
    /// Attention heads in hidden GAT layers; the output layer has one.
    pub heads: usize,
    pub rank: usize,
    /// Fusion output width (per rank projection).
    pub fuse_dim: usize,
    pub variant: FusionVariant,
    pub slope: f64,
    pub sentinel: f64,
    pub encoding: EncodingConfig,
    /// Channels given to node types that have no features.
    pub featureless_dim: usize,
    pub activation: Activation,
    pub self_loops: bool,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::BgHgnn,
            layers: 3,
            hidden: 32,
            heads: 4,
            rank: 4,
            fuse_dim: 32,
            variant: FusionVariant::Lmf,
            slope: 0.2,
            sentinel: 0.0,
            encoding: EncodingConfig::default(),
            featureless_dim: 256,
            activation: Activation::Elu,
            self_loops: true,
            dropout: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
enum Arch {
    BgHgnn {
        fusion: FusionLayer,
        gat: Vec<GatLayer>,
    },
    Rgcn {
        /// Per node type; `None` for types without nodes.
        inputs: Vec<Option<Linear>>,
        layers: Vec<RgcnLayer>,
    },
}

/// Graph-derived tensors a model consumes. Built once per graph by
/// [`Model::prepare`].
#[derive(Clone, Debug)]
pub enum GraphInputs {
    BgHgnn {
        fusion: FusionInputs,
        edges: GatEdges,
    },
    Rgcn {
        /// Feature matrix per node type, rows in that type's local order.
        features: Vec<Tensor>,
        /// Row of node `v` in the stacked per-type projections.
        order: Vec<usize>,
        relations: RelationIndex,
    },
}

impl GraphInputs {
    pub fn num_nodes(&self) -> usize {
        match self {
            GraphInputs::BgHgnn { edges, .. } => edges.num_nodes,
            GraphInputs::Rgcn { relations, .. } => relations.num_nodes,
        }
    }
}

pub struct ModelOutput {
    /// `n x hidden` node embeddings after the last message-passing layer.
    pub embeddings: Var,
    /// `n x classes`, when the model has a classifier head.
    pub logits: Option<Var>,
    /// First-layer attention per head (`edges x 1`); empty for the baseline.
    pub attention: Vec<Var>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    arch: Arch,
    head: Option<Linear>,
    pub codebook: Option<TypeCodebook>,
    pub schema: Option<UnifiedSchema>,
    pub num_classes: usize,
}

impl Model {
    /// Builds a model sized for `g`. A classifier head is added when `g`
    /// carries labels.
    pub fn build(g: &HeteroGraph, config: &ModelConfig) -> Result<Self> {
        let c = config;
        if c.layers == 0 || c.hidden == 0 || c.heads == 0 {
            return Err(Error::InvalidArgument("layers, hidden and heads must be positive".into()));
        }
        if !(0.0..1.0).contains(&c.dropout) {
            return Err(Error::InvalidArgument(format!("dropout {} outside [0, 1)", c.dropout)));
        }
        let g = with_features(g, c)?;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let mut store = ParamStore::new();
        let (arch, codebook, schema) = match c.kind {
            ModelKind::BgHgnn => {
                if c.layers > 1 && c.hidden % c.heads != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "hidden width {} is not divisible by {} heads",
                        c.hidden, c.heads
                    )));
                }
                let schema = build_unified_schema(&g, c.sentinel);
                let cb = build_codebook(&g, &c.encoding)?;
                let mut fp = FusionParams::init(c.rank, c.fuse_dim, [schema.width(), cb.node_dim, cb.edge_dim], &mut rng)?;
                fp.variant = c.variant;
                let fusion = FusionLayer::register(&mut store, fp)?;
                let mut gat = Vec::with_capacity(c.layers);
                let mut width = fusion.output_dim();
                for l in 0..c.layers {
                    let last = l + 1 == c.layers;
                    let (heads, head_dim) = if last { (1, c.hidden) } else { (c.heads, c.hidden / c.heads) };
                    let layer = GatLayer::register(&mut store, &format!("gat.{l}"), width, head_dim, heads, !last, c.slope, &mut rng)?;
                    width = layer.output_dim();
                    gat.push(layer);
                }
                (Arch::BgHgnn { fusion, gat }, Some(cb), Some(schema))
            }
            ModelKind::RgcnBaseline => {
                let inputs = g
                    .features()
                    .iter()
                    .enumerate()
                    .map(|(t, table)| {
                        (!table.nodes.is_empty()).then(|| {
                            let name = &g.node_type_names()[t];
                            Linear::register(&mut store, &format!("input.{name}"), table.channels.len(), c.hidden, &mut rng)
                        })
                    })
                    .collect();
                let layers = (0..c.layers)
                    .map(|l| {
                        RgcnLayer::register(
                            &mut store,
                            &format!("rgcn.{l}"),
                            g.num_edge_types(),
                            c.hidden,
                            c.hidden,
                            c.activation,
                            &mut rng,
                        )
                    })
                    .collect();
                (Arch::Rgcn { inputs, layers }, None, None)
            }
        };
        let num_classes = g.num_classes();
        let head = (num_classes > 0).then(|| Linear::register(&mut store, "head", c.hidden, num_classes, &mut rng));
        Ok(Model {
            config: c.clone(),
            store,
            arch,
            head,
            codebook,
            schema,
            num_classes,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn num_layers(&self) -> usize {
        match &self.arch {
            Arch::BgHgnn { gat, .. } => gat.len(),
            Arch::Rgcn { layers, .. } => layers.len(),
        }
    }

    pub fn fusion(&self) -> Option<&FusionLayer> {
        match &self.arch {
            Arch::BgHgnn { fusion, .. } => Some(fusion),
            Arch::Rgcn { .. } => None,
        }
    }

    pub fn gat_layers(&self) -> &[GatLayer] {
        match &self.arch {
            Arch::BgHgnn { gat, .. } => gat,
            Arch::Rgcn { .. } => &[],
        }
    }

    pub fn rgcn_layers(&self) -> &[RgcnLayer] {
        match &self.arch {
            Arch::BgHgnn { .. } => &[],
            Arch::Rgcn { layers, .. } => layers,
        }
    }

    pub fn prepare(&self, g: &HeteroGraph) -> Result<GraphInputs> {
        let g = with_features(g, &self.config)?;
        match &self.arch {
            Arch::BgHgnn { .. } => {
                let schema = self.schema.as_ref().expect("bg-hgnn models carry a schema");
                let cb = self.codebook.as_ref().expect("bg-hgnn models carry a codebook");
                let uf = project_features(&g, schema)?;
                let nrs = neighbor_relation_summary(&g, cb)?;
                let fusion = FusionInputs::new(&uf, cb, &nrs, g.node_types())?;
                let edges = GatEdges::new(g.edges(), g.node_count(), self.config.self_loops)?;
                Ok(GraphInputs::BgHgnn { fusion, edges })
            }
            Arch::Rgcn { inputs, layers } => {
                if inputs.len() != g.num_node_types()
                    || layers.first().is_some_and(|l| l.params(&self.store).relation_weights.len() != g.num_edge_types())
                {
                    return Err(Error::Validation("graph types do not match the model".into()));
                }
                let mut features = Vec::new();
                let mut offsets = Vec::new();
                let mut offset = 0;
                for (table, lin) in g.features().iter().zip(inputs) {
                    offsets.push(offset);
                    offset += table.nodes.len();
                    let width = table.channels.len();
                    if !table.nodes.is_empty() && lin.as_ref().is_none_or(|l| l.in_dim != width) {
                        return Err(Error::Validation("node type feature widths do not match the model".into()));
                    }
                    features.push(Tensor::new(vec![table.nodes.len(), width], table.values.clone())?);
                }
                let order = (0..g.node_count())
                    .map(|v| offsets[g.node_type(v)] + g.local_index(v))
                    .collect();
                Ok(GraphInputs::Rgcn {
                    features,
                    order,
                    relations: RelationIndex::new(&g),
                })
            }
        }
    }

    /// Records a forward pass. Passing `rng` enables dropout.
    pub fn forward(&self, tape: &mut Tape, inputs: &GraphInputs, rng: Option<&mut ChaCha8Rng>) -> Result<ModelOutput> {
        self.forward_with(tape, &self.store, inputs, rng)
    }

    /// [`Model::forward`] reading parameters from `store`, which must have
    /// the layout of `self.store`.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        inputs: &GraphInputs,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<ModelOutput> {
        let p = self.config.dropout;
        let mut attention = Vec::new();
        let embeddings = match (&self.arch, inputs) {
            (Arch::BgHgnn { fusion, gat }, GraphInputs::BgHgnn { fusion: fi, edges }) => {
                let x = tape.constant(fi.x.clone());
                let o = tape.constant(fi.o.clone());
                let w = tape.constant(fi.w.clone());
                let mut h = fusion.forward(tape, store, x, o, w)?;
                for (l, layer) in gat.iter().enumerate() {
                    if let Some(r) = rng.as_deref_mut() {
                        h = dropout(tape, h, p, r)?;
                    }
                    let out = layer.forward(tape, store, edges, h)?;
                    if l == 0 {
                        attention = out.attention;
                    }
                    h = tape.elu(out.h)?;
                }
                h
            }
            (Arch::Rgcn { inputs: proj, layers }, GraphInputs::Rgcn { features, order, relations }) => {
                let mut parts = Vec::new();
                for (lin, x) in proj.iter().zip(features) {
                    if let Some(lin) = lin {
                        let xv = tape.constant(x.clone());
                        parts.push(lin.forward(tape, store, xv)?);
                    }
                }
                let stacked = tape.concat_rows(&parts)?;
                let mut h = tape.gather_rows(stacked, order)?;
                for layer in layers {
                    if let Some(r) = rng.as_deref_mut() {
                        h = dropout(tape, h, p, r)?;
                    }
                    h = layer.forward(tape, store, relations, h)?;
                }
                h
            }
            _ => return Err(Error::InvalidArgument("graph inputs were prepared for another model kind".into())),
        };
        let logits = match &self.head {
            Some(head) => Some(head.forward(tape, store, embeddings)?),
            None => None,
        };
        Ok(ModelOutput {
            embeddings,
            logits,
            attention,
        })
    }

    /// Forward pass without dropout, returning plain values:
    /// embeddings, logits and head-averaged first-layer attention.
    pub fn predict(&self, inputs: &GraphInputs) -> Result<(Tensor, Option<Tensor>, Vec<f64>)> {
        let mut tape = Tape::new();
        let out = self.forward(&mut tape, inputs, None)?;
        let k = out.attention.len().max(1) as f64;
        let mut att: Vec<f64> = Vec::new();
        for a in &out.attention {
            let vals = tape.value(*a).data();
            if att.is_empty() {
                att = vec![0.0; vals.len()];
            }
            for (acc, x) in att.iter_mut().zip(vals) {
                *acc += x / k;
            }
        }
        Ok((
            tape.value(out.embeddings).clone(),
            out.logits.map(|l| tape.value(l).clone()),
            att,
        ))
    }
}

fn with_features(g: &HeteroGraph, c: &ModelConfig) -> Result<HeteroGraph> {
    if g.features().iter().any(|t| t.channels.is_empty() && !t.nodes.is_empty()) {
        init_featureless(g, c.featureless_dim, c.seed)
    } else {
        Ok(g.clone())
    }
}
