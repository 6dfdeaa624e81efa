mod common;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetfuse::graph::{init_featureless, load_graph, synth_graph, write_graph, HeteroGraph, SchemaSpec};

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

/// Edges as `(src, dst, relation name)` and node type names, which are
/// independent of type numbering.
fn named(g: &HeteroGraph) -> (Vec<(usize, usize, String)>, Vec<String>) {
    let edges = g
        .edges()
        .iter()
        .zip(g.edge_types())
        .map(|(&(s, d), &t)| (s, d, g.edge_type_names()[t].clone()))
        .collect();
    let types = g.node_types().iter().map(|&t| g.node_type_names()[t].clone()).collect();
    (edges, types)
}

#[test]
fn write_load_round_trip_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for i in 0..20 {
        let g = common::random_graph(&mut rng, 30, 3, 4);
        let tmp = tempfile::tempdir().unwrap();
        let first = tmp.path().join("a");
        let second = tmp.path().join("b");
        write_graph(&g, &first).unwrap();
        let loaded = load_graph(&first).unwrap();
        // Type ids follow first appearance in the files.
        assert_eq!(named(&loaded), named(&g), "graph {i}");
        for v in 0..g.node_count() {
            assert_eq!(loaded.node_features(v), g.node_features(v));
        }
        assert_eq!(loaded.labels(), g.labels());
        assert_eq!(loaded.splits(), g.splits());

        write_graph(&loaded, &second).unwrap();
        assert_eq!(load_graph(&second).unwrap(), loaded, "graph {i} changed on second load");
        assert_eq!(dir_contents(&first), dir_contents(&second));
    }
}

#[test]
fn synthetic_acm_like_round_trips() {
    let g = synth_graph(&SchemaSpec::acm_like(4)).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    write_graph(&g, tmp.path()).unwrap();
    assert_eq!(load_graph(tmp.path()).unwrap(), g);
}

#[test]
fn same_spec_and_seed_write_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["x", "y"] {
        write_graph(&synth_graph(&SchemaSpec::acm_like(9)).unwrap(), tmp.path().join(name)).unwrap();
    }
    assert_eq!(dir_contents(&tmp.path().join("x")), dir_contents(&tmp.path().join("y")));
    let other = synth_graph(&SchemaSpec::acm_like(10)).unwrap();
    assert_ne!(other, synth_graph(&SchemaSpec::acm_like(9)).unwrap());
}

const AIFB_NODES: usize = 8285;
const AIFB_EDGES: usize = 29043;
const AIFB_RELATIONS: usize = 45;
const AIFB_LABELED: usize = 176;
const AIFB_CLASSES: usize = 4;

/// Writes a dump with the node, edge, relation and label counts of the
/// AIFB benchmark. Ids are sparse and shuffled to exercise renumbering.
fn write_aifb_shaped(dir: &Path) {
    let mut rng = ChaCha8Rng::seed_from_u64(45);
    let types = ["Person", "Publication", "Project", "Organization", "Topic", "Literal", "Thing"];
    let ids: Vec<u64> = (0..AIFB_NODES as u64).map(|i| i * 7 + 1000).collect();
    let mut nodes = String::from("node_id\ttype_name\tfeat_json\n");
    for (k, id) in ids.iter().enumerate() {
        let t = types[k % types.len()];
        let feat = if t == "Literal" { "{}".to_string() } else { format!("{{\"len\":{}}}", k % 13) };
        writeln!(nodes, "{id}\t{t}\t{feat}").unwrap();
    }
    let mut edges = String::from("src_id\tdst_id\tedge_type_name\n");
    let mut seen = BTreeSet::new();
    while seen.len() < AIFB_EDGES {
        // Every relation appears at least once.
        let r = if seen.len() < AIFB_RELATIONS { seen.len() } else { rng.random_range(0..AIFB_RELATIONS) };
        let e = (rng.random_range(0..AIFB_NODES), rng.random_range(0..AIFB_NODES), r);
        if seen.insert(e) {
            writeln!(edges, "{}\t{}\trel_{r:02}", ids[e.0], ids[e.1]).unwrap();
        }
    }
    let mut labels = String::from("node_id\tclass_id\n");
    for k in 0..AIFB_LABELED {
        writeln!(labels, "{}\t{}", ids[k * 40], k % AIFB_CLASSES).unwrap();
    }
    fs::write(dir.join("nodes.tsv"), nodes).unwrap();
    fs::write(dir.join("edges.tsv"), edges).unwrap();
    fs::write(dir.join("labels.tsv"), labels).unwrap();
}

#[test]
fn aifb_shaped_dump_has_benchmark_counts() {
    let tmp = tempfile::tempdir().unwrap();
    write_aifb_shaped(tmp.path());
    let g = load_graph(tmp.path()).unwrap();
    assert_eq!(g.node_count(), AIFB_NODES);
    assert_eq!(g.edge_count(), AIFB_EDGES);
    assert_eq!(g.num_edge_types(), AIFB_RELATIONS);
    let labels = g.labels().unwrap();
    assert_eq!(labels.len(), AIFB_LABELED);
    assert_eq!(g.num_classes(), AIFB_CLASSES);
    assert_eq!(load_graph(tmp.path()).unwrap(), g, "loading is deterministic");
}

#[test]
fn neighbors_match_edge_scan() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..30 {
        let g = common::random_graph(&mut rng, 25, 3, 3);
        for v in 0..g.node_count() {
            for rel in std::iter::once(None).chain((0..g.num_edge_types()).map(Some)) {
                let expected: BTreeSet<usize> = g
                    .edges()
                    .iter()
                    .zip(g.edge_types())
                    .filter(|(&(_, d), &t)| d == v && rel.is_none_or(|r| r == t))
                    .map(|(&(s, _), _)| s)
                    .collect();
                let got = g.neighbors(v, rel).unwrap();
                assert_eq!(got, expected.into_iter().collect::<Vec<_>>());
            }
        }
        assert!(g.neighbors(g.node_count(), None).is_err());
    }
}

fn featureless_graph() -> HeteroGraph {
    let mut spec = SchemaSpec::acm_like(2);
    spec.node_types[3].channels.clear();
    synth_graph(&spec).unwrap()
}

#[test]
fn featureless_types_gain_channels_deterministically() {
    let g = featureless_graph();
    let a = init_featureless(&g, 256, 5).unwrap();
    let b = init_featureless(&g, 256, 5).unwrap();
    assert_eq!(a, b);
    let term = g.node_type_id("term").unwrap();
    assert_eq!(a.features()[term].channels.len(), 256);
    for t in 0..g.num_node_types() {
        if t != term {
            assert_eq!(a.features()[t], g.features()[t]);
        }
    }
    assert_ne!(init_featureless(&g, 256, 6).unwrap(), a);
    assert!(init_featureless(&g, 0, 5).is_err());
}

