use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::ModelKind;
use crate::train::RunReport;

pub const TREND_HEADER: &str = "dataset,relations,edges,param_ratio,f1_gap,relation_density";

/// One dataset: baseline over bg-hgnn parameter totals, bg-hgnn minus
/// baseline test micro-F1, and relations per edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub dataset: String,
    pub relations: usize,
    pub edges: usize,
    pub param_ratio: f64,
    pub f1_gap: f64,
    pub relation_density: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len().max(1) as f64
}

/// Pairs reports by `dataset`. Each dataset needs at least one report of
/// each model kind; trials of one kind are averaged.
pub fn trend_rows(reports: &[RunReport]) -> Result<Vec<TrendRow>> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument("trend data needs at least two reports".into()));
    }
    let mut groups: BTreeMap<&str, (Vec<&RunReport>, Vec<&RunReport>)> = BTreeMap::new();
    for r in reports {
        let g = groups.entry(r.dataset.as_str()).or_default();
        match r.model {
            ModelKind::BgHgnn => g.0.push(r),
            ModelKind::RgcnBaseline => g.1.push(r),
        }
    }
    let mut rows = Vec::new();
    for (name, (ours, base)) in groups {
        let (Some(o), false) = (ours.first(), base.is_empty()) else {
            return Err(Error::InvalidArgument(format!("dataset '{name}' lacks a report of both model kinds")));
        };
        if ours.iter().chain(&base).any(|r| r.num_relations != o.num_relations || r.num_edges != o.num_edges) {
            return Err(Error::InvalidArgument(format!("reports for dataset '{name}' describe different graphs")));
        }
        let f1 = |rs: &[&RunReport]| -> Result<f64> {
            let xs: Option<Vec<f64>> = rs.iter().map(|r| r.micro_f1()).collect();
            xs.map(|v| mean(&v))
                .ok_or_else(|| Error::InvalidArgument(format!("dataset '{name}' has a report without test micro-F1")))
        };
        let params = |rs: &[&RunReport]| mean(&rs.iter().map(|r| r.param_count as f64).collect::<Vec<_>>());
        rows.push(TrendRow {
            dataset: name.to_string(),
            relations: o.num_relations,
            edges: o.num_edges,
            param_ratio: params(&base) / params(&ours).max(1.0),
            f1_gap: f1(&ours)? - f1(&base)?,
            relation_density: o.num_relations as f64 / o.num_edges.max(1) as f64,
        });
    }
    let distinct: std::collections::BTreeSet<usize> = rows.iter().map(|r| r.relations).collect();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument("trend data needs at least two relation counts".into()));
    }
    Ok(rows)
}

/// CSV with a [`TREND_HEADER`] header; floats print in shortest
/// round-trip form.
pub fn emit_trend_data(reports: &[RunReport]) -> Result<String> {
    Ok(trend_csv(&trend_rows(reports)?))
}

pub fn trend_csv(rows: &[TrendRow]) -> String {
    let mut out = String::from(TREND_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.dataset, r.relations, r.edges, r.param_ratio, r.f1_gap, r.relation_density
        )
        .unwrap();
    }
    out
}

pub fn parse_trend_csv(text: &str) -> Result<Vec<TrendRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(TREND_HEADER) {
        return Err(Error::Parse {
            file: "trend.csv".into(),
            line: 1,
            message: "unexpected header".into(),
        });
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = |m: &str| Error::Parse {
                file: "trend.csv".into(),
                line: i + 2,
                message: m.to_string(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(TrendRow {
                dataset: f[0].to_string(),
                relations: f[1].parse().map_err(|_| bad("bad relation count"))?,
                edges: f[2].parse().map_err(|_| bad("bad edge count"))?,
                param_ratio: num(f[3])?,
                f1_gap: num(f[4])?,
                relation_density: num(f[5])?,
            })
        })
        .collect()
}
