//! Directory format:
//!
//! ```text
//! nodes.tsv    node_id <TAB> type_name <TAB> feat_json
//! edges.tsv    src_id  <TAB> dst_id    <TAB> edge_type_name
//! labels.tsv   node_id <TAB> class_id                       (optional)
//! splits.json  {"train": [...], "val": [...], "test": [...]} (optional)
//! ```
//!
//! TSVs carry a header row. Node ids in the files may be any distinct
//! non-negative integers; they are renumbered densely in file order.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{GraphBuilder, HeteroGraph, Splits};
use crate::error::{Error, Result};

const NODES: &str = "nodes.tsv";
const EDGES: &str = "edges.tsv";
const LABELS: &str = "labels.tsv";
const SPLITS: &str = "splits.json";

#[derive(Clone, Copy, Debug, Default)]
pub struct LoadOptions {
    /// Add a reversed copy of every relation as its own edge type.
    pub add_inverse_edges: bool,
}

pub fn load_graph(dir: impl AsRef<Path>) -> Result<HeteroGraph> {
    load_graph_with(dir, LoadOptions::default())
}

fn read(dir: &Path, name: &str) -> Result<String> {
    let path = dir.join(name);
    fs::read_to_string(&path).map_err(|e| Error::io(path, e))
}

fn data_lines<'a>(text: &'a str, file: &'static str) -> Result<impl Iterator<Item = (usize, &'a str)>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some(_) => {}
        None if text.is_empty() => {}
        None => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                message: "missing header row".into(),
            })
        }
    }
    Ok(lines.filter(|(_, l)| !l.is_empty()).map(|(i, l)| (i + 1, l)))
}

fn fields<'a, const N: usize>(file: &str, line: usize, text: &'a str) -> Result<[&'a str; N]> {
    let parts: Vec<&str> = text.splitn(N, '\t').collect();
    parts.try_into().map_err(|p: Vec<&str>| Error::Parse {
        file: file.into(),
        line,
        message: format!("expected {N} tab-separated fields, found {}", p.len()),
    })
}

fn parse_num<T: std::str::FromStr>(file: &str, line: usize, what: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse {
        file: file.into(),
        line,
        message: format!("invalid {what} '{s}'"),
    })
}

pub fn load_graph_with(dir: impl AsRef<Path>, opts: LoadOptions) -> Result<HeteroGraph> {
    let dir = dir.as_ref();
    let nodes_text = read(dir, NODES)?;
    let edges_text = read(dir, EDGES)?;

    let mut b = GraphBuilder::new();
    let mut ids: HashMap<u64, usize> = HashMap::new();
    for (line, text) in data_lines(&nodes_text, NODES)? {
        let [id, ty, feat] = fields::<3>(NODES, line, text)?;
        let ext: u64 = parse_num(NODES, line, "node id", id)?;
        let features: BTreeMap<String, f64> =
            serde_json::from_str(feat).map_err(|e| Error::Parse {
                file: NODES.into(),
                line,
                message: format!("bad feature json: {e}"),
            })?;
        let t = b.node_type(ty);
        let dense = b.add_node(t, features);
        if ids.insert(ext, dense).is_some() {
            return Err(Error::Validation(format!("{NODES} line {line}: duplicate node id {ext}")));
        }
    }

    let lookup = |file: &str, line: usize, s: &str| -> Result<usize> {
        let ext: u64 = parse_num(file, line, "node id", s)?;
        ids.get(&ext).copied().ok_or_else(|| {
            Error::Validation(format!("{file} line {line}: unknown node id {ext}"))
        })
    };

    for (line, text) in data_lines(&edges_text, EDGES)? {
        let [s, d, ty] = fields::<3>(EDGES, line, text)?;
        let src = lookup(EDGES, line, s)?;
        let dst = lookup(EDGES, line, d)?;
        let t = b.edge_type(ty);
        b.add_edge(src, dst, t);
    }

    let labels_path = dir.join(LABELS);
    if labels_path.exists() {
        let text = read(dir, LABELS)?;
        let mut labels = BTreeMap::new();
        for (line, row) in data_lines(&text, LABELS)? {
            let [id, class] = fields::<2>(LABELS, line, row)?;
            let v = lookup(LABELS, line, id)?;
            let c: usize = parse_num(LABELS, line, "class id", class)?;
            if labels.insert(v, c).is_some() {
                return Err(Error::Validation(format!("{LABELS} line {line}: node labeled twice")));
            }
        }
        b.set_labels(Some(labels));
    }

    if dir.join(SPLITS).exists() {
        let raw: BTreeMap<String, Vec<u64>> = serde_json::from_str(&read(dir, SPLITS)?)?;
        let map = |key: &str| -> Result<Vec<usize>> {
            raw.get(key)
                .map(|v| v.as_slice())
                .unwrap_or_default()
                .iter()
                .map(|ext| {
                    ids.get(ext).copied().ok_or_else(|| {
                        Error::Validation(format!("{SPLITS}: unknown node id {ext} in '{key}'"))
                    })
                })
                .collect()
        };
        b.set_splits(Some(Splits {
            train: map("train")?,
            val: map("val")?,
            test: map("test")?,
        }));
    }

    let g = b.build()?;
    if opts.add_inverse_edges {
        g.with_inverse_edges()
    } else {
        Ok(g)
    }
}

pub fn write_graph(g: &HeteroGraph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut nodes = String::from("node_id\ttype_name\tfeat_json\n");
    for v in 0..g.node_count() {
        let t = g.node_type(v);
        let table = &g.features()[t];
        let obj: serde_json::Map<String, serde_json::Value> = table
            .channels
            .iter()
            .zip(g.node_features(v))
            .map(|(k, &x)| (k.clone(), serde_json::Value::from(x)))
            .collect();
        nodes.push_str(&format!(
            "{v}\t{}\t{}\n",
            g.node_type_names()[t],
            serde_json::Value::Object(obj)
        ));
    }
    let mut edges = String::from("src_id\tdst_id\tedge_type_name\n");
    for (&(s, d), &t) in g.edges().iter().zip(g.edge_types()) {
        edges.push_str(&format!("{s}\t{d}\t{}\n", g.edge_type_names()[t]));
    }
    write(dir, NODES, &nodes)?;
    write(dir, EDGES, &edges)?;

    if let Some(labels) = g.labels() {
        let mut text = String::from("node_id\tclass_id\n");
        for (v, c) in labels {
            text.push_str(&format!("{v}\t{c}\n"));
        }
        write(dir, LABELS, &text)?;
    }
    if let Some(splits) = g.splits() {
        write(dir, SPLITS, &serde_json::to_string(splits)?)?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}
