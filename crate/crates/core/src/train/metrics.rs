//! Classification and ranking metrics.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// `(micro, macro)` F1 for single-label multiclass predictions.
///
/// Macro-F1 averages over every class that occurs in `pred` or `gold`.
pub fn f1_scores(pred: &[usize], gold: &[usize]) -> Result<(f64, f64)> {
    if pred.len() != gold.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} gold labels",
            pred.len(),
            gold.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("f1 of an empty prediction list".into()));
    }
    let classes: BTreeSet<usize> = pred.iter().chain(gold).copied().collect();
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    let micro = correct as f64 / pred.len() as f64;
    let mut total = 0.0;
    for &c in &classes {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for (&p, &g) in pred.iter().zip(gold) {
            match (p == c, g == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        total += (2 * tp) as f64 / (2 * tp + fp + fn_) as f64;
    }
    Ok((micro, total / classes.len() as f64))
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    pred.iter().zip(gold).filter(|(p, g)| p == g).count() as f64 / pred.len() as f64
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from average ranks.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidArgument("roc_auc needs finite scores".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("roc_auc needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of positive ranks (1-based), ties sharing their average rank.
    // Doubled to stay in integers.
    let mut rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let positives = order[i..=j].iter().filter(|&&k| labels[k]).count() as u128;
        rank_sum2 += positives * (i as u128 + 1 + j as u128 + 1);
        i = j + 1;
    }
    let (p, n) = (pos as u128, neg as u128);
    let u2 = rank_sum2 - p * (p + 1);
    Ok(u2 as f64 / (2 * p * n) as f64)
}

/// Mean reciprocal rank. Each list holds candidate scores and a flag for
/// the single positive; tied candidates share their average rank.
pub fn mrr(lists: &[(Vec<f64>, Vec<bool>)]) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::InvalidArgument("mrr of no lists".into()));
    }
    let mut total = 0.0;
    for (i, (scores, flags)) in lists.iter().enumerate() {
        if scores.len() != flags.len() {
            return Err(Error::InvalidArgument(format!("list {i}: scores and flags differ in length")));
        }
        let mut positives = flags.iter().enumerate().filter(|(_, &f)| f).map(|(k, _)| k);
        let (Some(p), None) = (positives.next(), positives.next()) else {
            return Err(Error::InvalidArgument(format!("list {i} needs exactly one positive")));
        };
        let s = scores[p];
        let mut greater = 0usize;
        let mut ties = 0usize;
        for (k, x) in scores.iter().enumerate() {
            match x.partial_cmp(&s) {
                Some(Ordering::Greater) => greater += 1,
                Some(Ordering::Equal) if k != p => ties += 1,
                None => return Err(Error::InvalidArgument(format!("list {i} has a NaN score"))),
                _ => {}
            }
        }
        let rank = 1.0 + greater as f64 + ties as f64 / 2.0;
        total += 1.0 / rank;
    }
    Ok(total / lists.len() as f64)
}
