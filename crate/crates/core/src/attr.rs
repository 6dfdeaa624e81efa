//! Attribute-space fusion: every node type's feature channels are merged
//! into one sorted channel list, and every node is projected into it.
//!
//! Channels a node's type does not own are filled with a sentinel
//! (default `0.0`) and flagged in a presence mask. Channels with the same
//! name in different node types are treated as the same channel.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::HeteroGraph;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnifiedSchema {
    /// Sorted union of all channel names.
    pub channels: Vec<String>,
    /// For each node type, the unified column of each of its own channels,
    /// in the order of that type's feature table.
    pub type_columns: Vec<Vec<usize>>,
    pub sentinel: f64,
}

impl UnifiedSchema {
    pub fn width(&self) -> usize {
        self.channels.len()
    }

    pub fn column(&self, channel: &str) -> Option<usize> {
        self.channels.binary_search_by(|c| c.as_str().cmp(channel)).ok()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnifiedFeatures {
    /// `node_count x width` projected features.
    pub values: Tensor,
    /// Same shape; `1.0` where the channel belongs to the node's type.
    pub mask: Tensor,
}

pub fn build_unified_schema(g: &HeteroGraph, sentinel: f64) -> UnifiedSchema {
    let union: BTreeSet<&str> = g
        .features()
        .iter()
        .flat_map(|t| t.channels.iter().map(String::as_str))
        .collect();
    let channels: Vec<String> = union.into_iter().map(str::to_string).collect();
    let position: BTreeMap<&str, usize> = channels
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let type_columns = g
        .features()
        .iter()
        .map(|t| t.channels.iter().map(|c| position[c.as_str()]).collect())
        .collect();
    UnifiedSchema {
        channels,
        type_columns,
        sentinel,
    }
}

pub fn project_features(g: &HeteroGraph, schema: &UnifiedSchema) -> Result<UnifiedFeatures> {
    if schema.type_columns.len() != g.num_node_types() {
        return Err(Error::Validation(format!(
            "schema covers {} node types, graph has {}",
            schema.type_columns.len(),
            g.num_node_types()
        )));
    }
    for (t, table) in g.features().iter().enumerate() {
        let cols = &schema.type_columns[t];
        let consistent = cols.len() == table.channels.len()
            && table
                .channels
                .iter()
                .zip(cols)
                .all(|(c, &i)| schema.channels.get(i) == Some(c));
        if !consistent {
            return Err(Error::Validation(format!(
                "schema does not match channels of node type '{}'",
                g.node_type_names()[t]
            )));
        }
    }

    let n = g.node_count();
    let w = schema.width();
    let mut values = Tensor::full(&[n, w], schema.sentinel);
    let mut mask = Tensor::zeros(&[n, w]);
    for v in 0..n {
        let cols = &schema.type_columns[g.node_type(v)];
        for (&c, &x) in cols.iter().zip(g.node_features(v)) {
            values.set(v, c, x);
            mask.set(v, c, 1.0);
        }
    }
    Ok(UnifiedFeatures { values, mask })
}

/// Recovers a node's own feature row from the projection.
pub fn recover_row(uf: &UnifiedFeatures, schema: &UnifiedSchema, g: &HeteroGraph, v: usize) -> Vec<f64> {
    schema.type_columns[g.node_type(v)]
        .iter()
        .map(|&c| uf.values.get(v, c))
        .collect()
}

/// Tab-separated dump: a header of channel names, then one row per node.
pub fn features_to_tsv(uf: &UnifiedFeatures, schema: &UnifiedSchema) -> String {
    let mut out = String::from("node_id");
    for c in &schema.channels {
        out.push('\t');
        out.push_str(c);
    }
    out.push('\n');
    for v in 0..uf.values.rows() {
        write!(out, "{v}").unwrap();
        for x in uf.values.row(v) {
            write!(out, "\t{x}").unwrap();
        }
        out.push('\n');
    }
    out
}
