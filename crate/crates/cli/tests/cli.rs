use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hetfuse::analysis::parse_trend_csv;
use hetfuse::train::RunReport;
use hetfuse_cli::{run, ModelFile, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn hetfuse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetfuse")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

const SMALL: &[&str] = &["--hidden", "8", "--heads", "2", "--fuse-dim", "6", "--epochs", "3"];

fn synth_tiny(dir: &Path) -> String {
    let g = dir.join("g");
    assert_eq!(run(["synth", "--spec", "tiny", "--seed", "2", "--out", path(&g)]), EXIT_OK);
    path(&g).to_string()
}

#[test]
fn synth_from_spec_file_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("acm_like.json");
    fs::write(&spec, serde_json::to_string(&hetfuse::graph::SchemaSpec::acm_like(0)).unwrap()).unwrap();
    for out in ["a", "b", "c"] {
        let seed = if out == "c" { "8" } else { "7" };
        let dir = tmp.path().join(out);
        assert_eq!(run(["synth", "--spec", path(&spec), "--seed", seed, "--out", path(&dir)]), EXIT_OK);
    }
    let a = dir_contents(&tmp.path().join("a"));
    assert_eq!(a, dir_contents(&tmp.path().join("b")));
    assert_ne!(a, dir_contents(&tmp.path().join("c")));
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = hetfuse(&["bogus"]);
    assert_eq!(out.status.code(), Some(EXIT_USAGE));
    assert!(text(&out.stderr).contains("Usage"));
    assert_eq!(hetfuse(&[]).status.code(), Some(EXIT_USAGE));
    assert_eq!(run(["train", "--no-such-flag"]), EXIT_USAGE);
    assert_eq!(run(["train", "--graph", "g", "--model", "gcn"]), EXIT_USAGE);
}

#[test]
fn grad_check_passes() {
    let out = hetfuse(&["grad-check"]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stdout));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("model bg-hgnn") && stdout.contains("model rgcn-baseline"));
    assert!(text(&out.stderr).contains("\"seed\":0"));
}

#[test]
fn help_documents_every_flag() {
    for sub in ["synth", "preprocess", "train", "eval", "analyze", "collapse-lab", "grad-check", "plot-data"] {
        assert_eq!(hetfuse(&[sub, "--help"]).status.code(), Some(EXIT_OK), "{sub}");
    }
    for sub in hetfuse_cli::command().get_subcommands() {
        assert!(sub.get_about().is_some(), "{} has no description", sub.get_name());
        for arg in sub.get_arguments() {
            assert!(arg.get_help().is_some(), "{} --{} is undocumented", sub.get_name(), arg.get_id());
        }
    }
    let train = text(&hetfuse(&["train", "--help"]).stdout);
    for flag in [
        "--task", "--epochs", "--lr", "--trials", "--seed", "--report", "--parallel", "--layers", "--hidden", "--heads",
        "--model", "--rank", "--fuse-dim", "--fusion-variant", "--type-dim", "--edge-type-dim", "--enc-low",
        "--enc-high", "--enc-seed", "--sentinel", "--config",
    ] {
        assert!(train.contains(flag), "train --help lacks {flag}");
    }
    let analyze = text(&hetfuse(&["analyze", "--help"]).stdout);
    for flag in ["--what", "--threshold", "--seeds", "--out"] {
        assert!(analyze.contains(flag));
    }
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth_tiny(tmp.path());
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 4, "seed": 9, "model": {"hidden": 8, "heads": 2, "fuse_dim": 6}}"#).unwrap();
    let report = tmp.path().join("r.json");
    let out = hetfuse(&[
        "train", "--graph", &g, "--config", path(&cfg), "--hidden", "4", "--trials", "1", "--report", path(&report),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stderr));
    assert!(text(&out.stderr).contains("\"seed\":9"));
    let reports: Vec<RunReport> = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let c = &reports[0].config;
    assert_eq!((c.epochs, c.seed, c.model.hidden, c.model.fuse_dim), (4, 9, 4, 6));
    assert_eq!(reports[0].history.len(), 4);

    fs::write(&cfg, r#"{"epoch": 4}"#).unwrap();
    assert_eq!(run(["train", "--graph", &g, "--config", path(&cfg)]), EXIT_RUNTIME);
    assert_eq!(run(["train", "--graph", &g, "--lr=-1"]), EXIT_RUNTIME);
    assert_eq!(run(["train", "--graph", path(&tmp.path().join("missing"))]), EXIT_RUNTIME);
}

fn strip_timing(mut reports: Vec<RunReport>) -> Vec<RunReport> {
    for r in &mut reports {
        for h in &mut r.history {
            h.seconds = 0.0;
        }
    }
    reports
}

#[test]
fn parallel_trials_match_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth_tiny(tmp.path());
    let mut results = Vec::new();
    for (name, extra) in [("seq.json", None), ("par.json", Some("--parallel"))] {
        let report = tmp.path().join(name);
        let mut args = vec!["train", "--graph", &g, "--trials", "3", "--report", path(&report)];
        args.extend(SMALL);
        args.extend(extra);
        assert_eq!(run(args), EXIT_OK);
        results.push(strip_timing(serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0].iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn saved_model_evaluates_to_report_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth_tiny(tmp.path());
    for task in ["node", "link"] {
        let model = tmp.path().join(format!("{task}.model.json"));
        let report = tmp.path().join(format!("{task}.json"));
        let mut args = vec![
            "train", "--graph", &g, "--task", task, "--trials", "1", "--seed", "4", "--save-model", path(&model),
            "--report", path(&report),
        ];
        args.extend(SMALL);
        if task == "link" {
            args.extend(["--negatives", "random-hop"]);
        }
        let out = hetfuse(&args);
        assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stderr));
        let reports: Vec<RunReport> = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        let file: ModelFile = serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
        assert_eq!(file.config.seed, 4);

        let out = hetfuse(&["eval", "--graph", &g, "--model", path(&model)]);
        assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stderr));
        let metrics: serde_json::Value = serde_json::from_str(&text(&out.stdout)).unwrap();
        assert_eq!(metrics["node"], serde_json::to_value(&reports[0].node).unwrap());
        assert_eq!(metrics["link"], serde_json::to_value(&reports[0].link).unwrap());
    }
    let model = tmp.path().join("x.json");
    assert_eq!(run(["train", "--graph", &g, "--trials", "2", "--save-model", path(&model)]), EXIT_USAGE);
}

#[test]
fn trend_plot_data_from_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for (spec, seed) in [("tiny", "1"), ("acm-like", "1")] {
        let g = tmp.path().join(spec);
        assert_eq!(run(["synth", "--spec", spec, "--seed", seed, "--out", path(&g)]), EXIT_OK);
        for model in ["bg-hgnn", "rgcn"] {
            let report = tmp.path().join(format!("{spec}-{model}.json"));
            let mut args = vec![
                "train", "--graph", path(&g), "--model", model, "--trials", "1", "--dataset", spec, "--report",
                path(&report),
            ];
            args.extend(SMALL);
            assert_eq!(run(args), EXIT_OK);
            files.push(report);
        }
    }
    let csv = tmp.path().join("trend.csv");
    let mut args = vec!["plot-data", "--out", path(&csv), "--reports"];
    args.extend(files.iter().map(|f| path(f)));
    assert_eq!(run(args.clone()), EXIT_OK);
    let rows = parse_trend_csv(&fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    let acm = rows.iter().find(|r| r.dataset == "acm-like").unwrap();
    let tiny = rows.iter().find(|r| r.dataset == "tiny").unwrap();
    assert_eq!((acm.relations, tiny.relations), (8, 3));
    assert!(acm.param_ratio > tiny.param_ratio);

    args.extend(["--kind", "history"]);
    assert_eq!(run(args), EXIT_OK);
    let history = fs::read_to_string(&csv).unwrap();
    assert_eq!(history.lines().count(), 1 + 4 * 3);
    assert!(history.lines().nth(1).unwrap().starts_with("tiny,bg-hgnn,0,0,"));

    assert_eq!(run(["plot-data", "--reports", path(&files[0])]), EXIT_RUNTIME);
}

#[test]
fn analyses_report_in_both_formats() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth_tiny(tmp.path());
    let out = hetfuse(&["analyze", "--what", "params", "--graph", &g, "--model", "rgcn", "--hidden", "4", "--out", "csv"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let csv = text(&out.stdout);
    let counts: Vec<(String, usize)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (k, v) = l.split_once(',').unwrap();
            (k.to_string(), v.parse().unwrap())
        })
        .collect();
    let (total, parts) = counts.split_last().unwrap();
    assert_eq!(total.0, "total");
    assert_eq!(total.1, parts.iter().map(|p| p.1).sum::<usize>());
    // Three relations, three layers of width 4.
    assert_eq!(parts.iter().find(|p| p.0 == "rgcn").unwrap().1, 3 * (3 + 1) * 16);

    let out = hetfuse(&["analyze", "--what", "expressiveness", "--seeds", "2", "--pairs", "20"]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let v: serde_json::Value = serde_json::from_str(&text(&out.stdout)).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["report"]["violations"], 0);

    let model = tmp.path().join("m.json");
    let mut args = vec!["train", "--graph", &g, "--trials", "1", "--save-model", path(&model)];
    args.extend(SMALL);
    assert_eq!(run(args), EXIT_OK);
    let out = hetfuse(&["analyze", "--what", "attention", "--graph", &g, "--model-file", path(&model)]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&text(&out.stdout)).unwrap();
    assert_eq!(v["matrix"]["types"], serde_json::json!(["a", "b"]));
    assert!(!v["metapaths"].as_array().unwrap().is_empty());

    assert_eq!(run(["analyze", "--what", "attention"]), EXIT_USAGE);
    assert_eq!(run(["analyze", "--what", "trend"]), EXIT_USAGE);
}

#[test]
fn collapse_lab_dumps_graph_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("collapse");
    let out = hetfuse(&["collapse-lab", "--nodes", "300", "--seeds", "2", "--dump", path(&dump)]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", text(&out.stderr));
    assert_eq!(text(&out.stdout).lines().count(), 3);
    assert!(hetfuse::graph::load_graph(&dump).unwrap().node_count() > 300);
    assert_eq!(hetfuse(&["collapse-lab", "--nodes", "300", "--seeds", "2"]).stdout, out.stdout);
    assert_eq!(run(["collapse-lab", "--nodes", "5"]), EXIT_RUNTIME);
}

#[test]
fn preprocess_exports_features_and_codebook() {
    let tmp = tempfile::tempdir().unwrap();
    let g = synth_tiny(tmp.path());
    let out = tmp.path().join("pre");
    assert_eq!(run(["preprocess", "--graph", &g, "--out", path(&out), "--sentinel", "-1", "--enc-seed", "3"]), EXIT_OK);
    let tsv = fs::read_to_string(out.join("features.tsv")).unwrap();
    assert_eq!(tsv.lines().count(), 21);
    assert_eq!(tsv.lines().next().unwrap(), "node_id\tc0\tc1\tc2");
    // Type `b` lacks channel c2.
    assert!(tsv.lines().skip(1).any(|l| l.ends_with("\t-1")));
    let cb: hetfuse::encoding::TypeCodebook = serde_json::from_str(&fs::read_to_string(out.join("codebook.json")).unwrap()).unwrap();
    assert_eq!((cb.node_dim, cb.edge_dim, cb.seed), (2, 3, 3));
}
