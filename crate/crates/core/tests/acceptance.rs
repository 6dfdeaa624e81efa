//! End-to-end acceptance checks. Everything runs inside one test so that
//! timing criteria are not measured while other tests compete for cores.

use std::collections::{BTreeMap, BTreeSet};
use std::time::{Duration, Instant};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetfuse::analysis::{
    collapse_experiment, count_params, expressiveness_check, extract_attention_matrix, top_metapaths,
    DEFAULT_THRESHOLD,
};
use hetfuse::encoding::EncodingConfig;
use hetfuse::fusion::{append_one, fuse, FusionParams};
use hetfuse::graph::{synth_graph, EdgeTypeSpec, HeteroGraph, LabelRule, NodeTypeSpec, SchemaSpec};
use hetfuse::layers::{Model, ModelConfig, ModelKind};
use hetfuse::train::{f1_scores, model_grad_check, mrr, roc_auc, train, train_model, TrainConfig};

struct Outcome {
    id: usize,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn run(id: usize, limit: Option<Duration>, check: impl FnOnce() -> (bool, String)) -> Outcome {
    let start = Instant::now();
    let (ok, mut detail) = check();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed < l);
    if let Some(l) = limit {
        detail.push_str(&format!("; limit {:.0}s", l.as_secs_f64()));
    }
    Outcome {
        id,
        pass: ok && in_time,
        detail,
        elapsed,
    }
}

fn node(name: &str, count: usize, channels: usize, signal: f64) -> NodeTypeSpec {
    NodeTypeSpec {
        name: name.into(),
        count,
        channels: (0..channels).map(|i| format!("{name}{i}")).collect(),
        signal,
    }
}

fn edge(name: &str, src: &str, dst: &str, degree: f64, homophily: f64) -> EdgeTypeSpec {
    EdgeTypeSpec {
        name: name.into(),
        src: src.into(),
        dst: dst.into(),
        degree,
        homophily,
        inverse_of: None,
    }
}

fn inverse(name: &str, base: &str, src: &str, dst: &str) -> EdgeTypeSpec {
    EdgeTypeSpec {
        inverse_of: Some(base.into()),
        ..edge(name, src, dst, 0.0, 0.0)
    }
}

fn labels(node_type: &str) -> Option<LabelRule> {
    Some(LabelRule {
        node_type: node_type.into(),
        classes: 3,
        split: [0.6, 0.2, 0.2],
    })
}

// ---------------------------------------------------------------------------
// 1. fusion against the explicit tensor contraction

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

/// Materializes `W[d, i, j, k] = Σ_t Wx_t[d, i] Wo_t[d, j] Ww_t[d, k]` and
/// the outer product `x ⊗ o ⊗ w`, then contracts them.
fn full_contraction(x: &[f64], o: &[f64], w: &[f64], p: &FusionParams) -> Vec<f64> {
    let (a, b, c) = (x.len(), o.len(), w.len());
    let mut weight = vec![0.0; p.out_dim * a * b * c];
    for t in 0..p.rank {
        for d in 0..p.out_dim {
            for i in 0..a {
                for j in 0..b {
                    for k in 0..c {
                        weight[((d * a + i) * b + j) * c + k] +=
                            p.x_factors[t].get(d, i) * p.o_factors[t].get(d, j) * p.w_factors[t].get(d, k);
                    }
                }
            }
        }
    }
    let mut outer = vec![0.0; a * b * c];
    for i in 0..a {
        for j in 0..b {
            for k in 0..c {
                outer[(i * b + j) * c + k] = x[i] * o[j] * w[k];
            }
        }
    }
    (0..p.out_dim)
        .map(|d| {
            outer
                .iter()
                .enumerate()
                .map(|(idx, z)| weight[d * a * b * c + idx] * z)
                .sum()
        })
        .collect()
}

fn fusion_oracle() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let dims = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let rank = rng.random_range(1..=3);
        let out = rng.random_range(1..=3);
        let p = FusionParams::seeded(rank, out, dims, rng.random()).unwrap();
        let x = append_one(&random_vec(&mut rng, dims[0]));
        let o = append_one(&random_vec(&mut rng, dims[1]));
        let w = append_one(&random_vec(&mut rng, dims[2]));
        let fast = fuse(&x, &o, &w, &p).unwrap();
        let slow = full_contraction(&x, &o, &w, &p);
        for (f, s) in fast.iter().zip(&slow) {
            worst = worst.max((f - s).abs());
        }
    }
    (worst <= 1e-10, format!("max abs diff {worst:.2e} over 100 instances"))
}

// ---------------------------------------------------------------------------
// 2. gradient check of the whole model

fn twenty_node_graph() -> HeteroGraph {
    synth_graph(&SchemaSpec {
        seed: 5,
        node_types: vec![node("a", 12, 3, 1.0), node("b", 8, 2, 1.0)],
        edge_types: vec![
            edge("a_b", "a", "b", 1.5, 0.8),
            inverse("b_a", "a_b", "b", "a"),
            edge("a_a", "a", "a", 1.0, 0.5),
        ],
        labels: labels("a"),
        latent_classes: None,
    })
    .unwrap()
}

fn gradient_check() -> (bool, String) {
    let g = twenty_node_graph();
    let cfg = ModelConfig {
        layers: 3,
        hidden: 6,
        heads: 2,
        fuse_dim: 5,
        rank: 3,
        seed: 3,
        ..Default::default()
    };
    let report = model_grad_check(&g, &cfg, 1e-5).unwrap();
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let all = report.params.iter().all(|p| p.max_rel_error <= 1e-4);
    (
        all && report.params.len() > 1,
        format!(
            "{} parameter tensors, max rel error {:.2e} ({})",
            report.params.len(),
            report.max_rel_error,
            worst.name
        ),
    )
}

// ---------------------------------------------------------------------------
// 3. parameter counts

fn relation_graph(num_relations: usize) -> HeteroGraph {
    synth_graph(&SchemaSpec {
        seed: 2,
        node_types: vec![node("n", 60, 4, 1.0)],
        edge_types: (0..num_relations)
            .map(|r| edge(&format!("r{r}"), "n", "n", 1.0, 0.5))
            .collect(),
        labels: labels("n"),
        latent_classes: None,
    })
    .unwrap()
}

fn parameter_counts() -> (bool, String) {
    let h = 16;
    let config = |kind| ModelConfig {
        kind,
        layers: 3,
        hidden: h,
        encoding: EncodingConfig {
            node_dim: Some(2),
            edge_dim: Some(8),
            ..Default::default()
        },
        ..Default::default()
    };
    let mut bg = Vec::new();
    let mut stacks = Vec::new();
    let mut closed_form = true;
    for r in [2, 10, 50] {
        let g = relation_graph(r);
        assert_eq!(g.num_edge_types(), r);
        bg.push(count_params(&Model::build(&g, &config(ModelKind::BgHgnn)).unwrap()).total);
        let stack = count_params(&Model::build(&g, &config(ModelKind::RgcnBaseline)).unwrap()).gnn_stack();
        closed_form &= stack == 3 * (r + 1) * h * h;
        stacks.push(stack);
    }
    let identical = bg.windows(2).all(|w| w[0] == w[1]);
    let increasing = stacks.windows(2).all(|w| w[0] < w[1]);
    (
        identical && closed_form && increasing,
        format!("bg-hgnn totals {bg:?}; rgcn stacks {stacks:?}"),
    )
}

// ---------------------------------------------------------------------------
// 4. relation collapse

fn relation_collapse() -> (bool, String) {
    let mut ok = true;
    let mut stats = Vec::new();
    let mut margins = Vec::new();
    for seed in 0..5 {
        let r = collapse_experiment(2000, seed).unwrap();
        ok &= r.r23_statistic_mean.abs() <= 0.1;
        ok &= r.channel_probe_accuracy > r.mean_probe_accuracy;
        stats.push(format!("{:+.3}", r.r23_statistic_mean));
        margins.push(format!("{:.3}/{:.3}", r.channel_probe_accuracy, r.mean_probe_accuracy));
    }
    (
        ok,
        format!("r2r3 means [{}]; channel/mean accuracy [{}]", stats.join(" "), margins.join(" ")),
    )
}

// ---------------------------------------------------------------------------
// 5. expressiveness

fn expressiveness() -> (bool, String) {
    let mut violations = 0;
    let mut distinct = 0;
    for seed in 0..3 {
        let r = expressiveness_check(200, seed).unwrap();
        violations += r.violations;
        distinct += r.baseline_distinct;
    }
    (
        violations == 0 && distinct > 0,
        format!("{violations} violations; {distinct} of 600 pairs had distinct baseline outputs"),
    )
}

// ---------------------------------------------------------------------------
// 6. trainability and rank

fn planted_graph(seed: u64) -> HeteroGraph {
    synth_graph(&SchemaSpec {
        seed,
        node_types: vec![node("item", 300, 4, 1.0), node("user", 150, 4, 2.0), node("tag", 50, 2, 2.0)],
        edge_types: vec![
            edge("item_user", "item", "user", 2.0, 0.9),
            inverse("user_item", "item_user", "user", "item"),
            edge("item_tag", "item", "tag", 1.0, 0.9),
            inverse("tag_item", "item_tag", "tag", "item"),
            edge("item_item", "item", "item", 2.0, 0.8),
            edge("item_noise", "item", "item", 2.0, 0.0),
        ],
        labels: labels("item"),
        latent_classes: None,
    })
    .unwrap()
}

fn trainability() -> (bool, String) {
    let mut reached = 0;
    let mut final_acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for seed in 0..5 {
        let g = planted_graph(seed);
        assert_eq!((g.node_count(), g.num_edge_types()), (500, 6));
        for rank in [1, 4] {
            let cfg = TrainConfig {
                epochs: 200,
                seed,
                model: ModelConfig {
                    layers: 3,
                    rank,
                    ..Default::default()
                },
                ..Default::default()
            };
            let r = train(&g, &cfg).unwrap();
            let hit = r.history.iter().any(|h| h.train_accuracy.unwrap() >= 0.95);
            if rank == 4 && hit {
                reached += 1;
            }
            final_acc.entry(rank).or_default().push(r.node.unwrap().train_accuracy);
        }
    }
    let mean = |r: usize| final_acc[&r].iter().sum::<f64>() / 5.0;
    (
        reached >= 4 && mean(4) >= mean(1),
        format!(
            "{reached}/5 seeds reached 95%; mean train accuracy r=4 {:.3}, r=1 {:.3}",
            mean(4),
            mean(1)
        ),
    )
}

// ---------------------------------------------------------------------------
// 7. epoch time at many relations

fn many_relation_graph() -> HeteroGraph {
    synth_graph(&SchemaSpec {
        seed: 1,
        node_types: vec![node("n", 2000, 16, 1.0)],
        edge_types: (0..40).map(|r| edge(&format!("r{r}"), "n", "n", 0.5, 0.5)).collect(),
        labels: labels("n"),
        latent_classes: None,
    })
    .unwrap()
}

fn throughput() -> (bool, String) {
    let g = many_relation_graph();
    let time = |kind| {
        let cfg = TrainConfig {
            epochs: 20,
            seed: 1,
            model: ModelConfig {
                kind,
                ..Default::default()
            },
            ..Default::default()
        };
        train(&g, &cfg).unwrap().mean_epoch_seconds().unwrap()
    };
    let (bg, rgcn) = (time(ModelKind::BgHgnn), time(ModelKind::RgcnBaseline));
    (
        bg <= rgcn,
        format!("mean epoch bg-hgnn {bg:.4}s, rgcn {rgcn:.4}s ({:.2}x)", rgcn / bg),
    )
}

// ---------------------------------------------------------------------------
// 8. attention and meta-paths

fn planted_hop(a: &str, b: &str) -> bool {
    matches!(
        (a, b),
        ("paper", "author") | ("author", "paper") | ("paper", "subject") | ("subject", "paper")
    )
}

fn attention_recovery() -> (bool, String) {
    let mut agreement = Vec::new();
    let mut ranked = 0;
    for seed in 0..5 {
        let g = synth_graph(&SchemaSpec::acm_like(seed)).unwrap();
        let cfg = TrainConfig {
            seed,
            ..Default::default()
        };
        let trained = train_model(&g, &cfg).unwrap();
        let m = extract_attention_matrix(&trained.model, &g, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(m.size(), 4);
        let mask: Vec<Vec<u8>> = m
            .types
            .iter()
            .map(|a| m.types.iter().map(|b| u8::from(planted_hop(a, b))).collect())
            .collect();
        agreement.push(m.agreement(&mask));

        let paths = top_metapaths(&m, 2).unwrap();
        let two_hop = paths.iter().filter(|p| p.hops() == 2);
        let (planted, noise): (Vec<_>, Vec<_>) =
            two_hop.partition(|p| p.types.windows(2).all(|w| planted_hop(&w[0], &w[1])));
        let best_noise = noise.iter().map(|p| p.score).fold(f64::NEG_INFINITY, f64::max);
        let wanted = ["PAP", "PSP"];
        if wanted.iter().all(|ab| {
            planted
                .iter()
                .find(|p| p.abbreviation() == *ab)
                .is_some_and(|p| p.score > best_noise)
        }) {
            ranked += 1;
        }
    }
    let mean = agreement.iter().sum::<f64>() / agreement.len() as f64;
    (
        mean >= 0.8 && ranked >= 4,
        format!(
            "mask agreement {:?} (mean {mean:.3}); PAP and PSP above noise on {ranked}/5 seeds",
            agreement.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

// ---------------------------------------------------------------------------
// 9. metrics against brute force

fn f1_oracle(pred: &[usize], gold: &[usize]) -> (f64, f64) {
    let classes: Vec<usize> = pred.iter().chain(gold).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let k = classes.len();
    let pos = |c: usize| classes.iter().position(|&x| x == c).unwrap();
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &g) in pred.iter().zip(gold) {
        confusion[pos(g)][pos(p)] += 1;
    }
    let trace: usize = (0..k).map(|c| confusion[c][c]).sum();
    let mut total = 0.0;
    for c in 0..k {
        let gold_count: usize = confusion[c].iter().sum();
        let pred_count: usize = confusion.iter().map(|row| row[c]).sum();
        total += (2 * confusion[c][c]) as f64 / (gold_count + pred_count) as f64;
    }
    (trace as f64 / pred.len() as f64, total / k as f64)
}

fn auc_oracle(scores: &[f64], labels: &[bool]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0usize;
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs as f64
}

fn mrr_oracle(lists: &[(Vec<f64>, Vec<bool>)]) -> f64 {
    let mut total = 0.0;
    for (scores, flags) in lists {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let at = order.iter().position(|&k| flags[k]).unwrap();
        let s = scores[order[at]];
        let first = order.iter().position(|&k| scores[k] == s).unwrap();
        let last = order.iter().rposition(|&k| scores[k] == s).unwrap();
        total += 1.0 / ((first + 1 + last + 1) as f64 / 2.0);
    }
    total / lists.len() as f64
}

fn metric_oracles() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut f1_mismatch = 0;
    let mut auc_worst: f64 = 0.0;
    let mut mrr_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let k = rng.random_range(1..6);
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        if f1_scores(&pred, &gold).unwrap() != f1_oracle(&pred, &gold) {
            f1_mismatch += 1;
        }

        let n = rng.random_range(2..60);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        labels[0] = true;
        labels[1] = false;
        // Coarse scores so that ties occur.
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..8u8)) / 7.0).collect();
        auc_worst = auc_worst.max((roc_auc(&scores, &labels).unwrap() - auc_oracle(&scores, &labels)).abs());

        let lists: Vec<(Vec<f64>, Vec<bool>)> = (0..rng.random_range(1..6))
            .map(|_| {
                let len = rng.random_range(1..21);
                let scores = (0..len).map(|_| f64::from(rng.random_range(0..6u8))).collect();
                let hit = rng.random_range(0..len);
                (scores, (0..len).map(|i| i == hit).collect())
            })
            .collect();
        if mrr(&lists).unwrap() != mrr_oracle(&lists) {
            mrr_mismatch += 1;
        }
    }
    (
        f1_mismatch == 0 && mrr_mismatch == 0 && auc_worst <= 1e-12,
        format!("f1 mismatches {f1_mismatch}, mrr mismatches {mrr_mismatch}, auc max diff {auc_worst:.1e}"),
    )
}

#[test]
fn acceptance() {
    let secs = |s: u64| Some(Duration::from_secs(s));
    let outcomes = [
        run(1, secs(5), fusion_oracle),
        run(2, secs(60), gradient_check),
        run(3, None, parameter_counts),
        run(4, secs(120), relation_collapse),
        run(5, None, expressiveness),
        run(6, secs(180), trainability),
        run(7, None, throughput),
        run(8, None, attention_recovery),
        run(9, None, metric_oracles),
    ];
    // Direct handle writes bypass libtest capture.
    let mut err = std::io::stderr().lock();
    for o in &outcomes {
        let _ = writeln!(
            err,
            "criterion {}: {} ({:.1}s) {}",
            o.id,
            if o.pass { "PASS" } else { "FAIL" },
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    let failed: Vec<usize> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

