use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::layers::{Model, ModelKind};

/// Scalar parameter census of a model, grouped by the first segment of
/// each parameter name (`fusion`, `gat`, `rgcn`, `input`, `head`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamBreakdown {
    pub kind: ModelKind,
    pub components: BTreeMap<String, usize>,
    pub total: usize,
    pub num_relations: usize,
    pub layers: usize,
    pub rank: Option<usize>,
    pub hidden: usize,
}

impl ParamBreakdown {
    /// Parameters of the message-passing stack alone.
    pub fn gnn_stack(&self) -> usize {
        let key = match self.kind {
            ModelKind::BgHgnn => "gat",
            ModelKind::RgcnBaseline => "rgcn",
        };
        self.components.get(key).copied().unwrap_or(0)
    }
}

pub fn count_params(model: &Model) -> ParamBreakdown {
    let mut components = BTreeMap::new();
    for (_, name, t) in model.store.iter() {
        let key = name.split('.').next().unwrap_or(name).to_string();
        *components.entry(key).or_insert(0) += t.len();
    }
    let num_relations = match model.kind() {
        ModelKind::BgHgnn => model.codebook.as_ref().map_or(0, |c| c.edge_vectors.len()),
        ModelKind::RgcnBaseline => model.rgcn_layers().first().map_or(0, |l| l.num_relations()),
    };
    ParamBreakdown {
        kind: model.kind(),
        total: components.values().sum(),
        components,
        num_relations,
        layers: model.num_layers(),
        rank: model.fusion().map(|f| f.rank),
        hidden: model.config.hidden,
    }
}
