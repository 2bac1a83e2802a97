//! Performance and group fairness metrics.
//!
//! Everything is computed in fractional units; percentages appear only when a
//! report is rendered to CSV.
//!
//! Definitions used throughout, with `yhat = [score >= threshold]`:
//!
//! - AUC: Mann-Whitney statistic `(concordant + 0.5 * ties) / (P * N)`.
//! - ES-AUC: `auc / (1 + sum_g |auc - auc_g|)`.
//! - DPD: `max_g P(yhat = 1 | g) - min_g P(yhat = 1 | g)`.
//! - DEOdds: the larger of the max-min gap in true positive rate and the
//!   max-min gap in false positive rate across groups.

mod report;

pub use report::{
    read_report, report_csv, write_report, EvaluationReport, GroupMetrics, REPORT_CSV_PREFIX,
    REPORT_JSON_PREFIX,
};

use std::collections::BTreeMap;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub group_ids: Vec<usize>,
    /// Number of levels of the attribute; groups are `0..num_groups`.
    pub num_groups: usize,
    pub threshold: f64,
}

impl Predictions {
    pub fn new(
        scores: Vec<f64>,
        labels: Vec<u8>,
        group_ids: Vec<usize>,
        num_groups: usize,
        threshold: f64,
    ) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Metric("no predictions".into()));
        }
        if scores.len() != labels.len() || scores.len() != group_ids.len() {
            return Err(Error::Shape(format!(
                "{} scores, {} labels, {} group ids",
                scores.len(),
                labels.len(),
                group_ids.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Metric("non-finite score".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::Metric("labels must be 0 or 1".into()));
        }
        if let Some(g) = group_ids.iter().find(|&&g| g >= num_groups) {
            return Err(Error::Metric(format!("group id {g} out of range")));
        }
        Ok(Self {
            scores,
            labels,
            group_ids,
            num_groups,
            threshold,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    fn group_indices(&self, group: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_ids
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == group)
            .map(|(i, _)| i)
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_groups];
        for &g in &self.group_ids {
            counts[g] += 1;
        }
        counts
    }

    fn predicted_positive(&self, i: usize) -> bool {
        self.scores[i] >= self.threshold
    }
}

/// Area under the ROC curve from average ranks, which counts tied
/// positive/negative pairs as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        pos_rank_sum += mean_rank * tied_pos as f64;
        start = end;
    }
    let u = pos_rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Equity-scaled AUC.
pub fn es_auc(overall_auc: f64, group_aucs: impl IntoIterator<Item = f64>) -> f64 {
    let spread: f64 = group_aucs
        .into_iter()
        .map(|g| (overall_auc - g).abs())
        .sum();
    overall_auc / (1.0 + spread)
}

/// AUC within each group. Groups lacking one of the classes are left out
/// with a warning.
pub fn groupwise_auc(preds: &Predictions) -> BTreeMap<usize, f64> {
    let mut out = BTreeMap::new();
    for g in 0..preds.num_groups {
        let idx: Vec<usize> = preds.group_indices(g).collect();
        let scores: Vec<f64> = idx.iter().map(|&i| preds.scores[i]).collect();
        let labels: Vec<u8> = idx.iter().map(|&i| preds.labels[i]).collect();
        match auc(&scores, &labels) {
            Ok(v) => {
                out.insert(g, v);
            }
            Err(_) => log::warn!("group {g}: AUC undefined ({} samples, single class)", idx.len()),
        }
    }
    out
}

fn max_min_gap(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Demographic parity difference.
pub fn dpd(preds: &Predictions) -> Result<f64> {
    let mut rates = Vec::with_capacity(preds.num_groups);
    for g in 0..preds.num_groups {
        let (n, pos) = preds
            .group_indices(g)
            .fold((0usize, 0usize), |(n, p), i| (n + 1, p + preds.predicted_positive(i) as usize));
        if n == 0 {
            return Err(Error::Metric(format!("group {g} has no samples")));
        }
        rates.push(pos as f64 / n as f64);
    }
    Ok(max_min_gap(&rates))
}

/// Difference in equalized odds.
pub fn deodds(preds: &Predictions) -> Result<f64> {
    let mut tpr = Vec::with_capacity(preds.num_groups);
    let mut fpr = Vec::with_capacity(preds.num_groups);
    for g in 0..preds.num_groups {
        let (mut tp, mut p, mut fp, mut n) = (0usize, 0usize, 0usize, 0usize);
        for i in preds.group_indices(g) {
            let hit = preds.predicted_positive(i) as usize;
            if preds.labels[i] == 1 {
                p += 1;
                tp += hit;
            } else {
                n += 1;
                fp += hit;
            }
        }
        if p == 0 || n == 0 {
            return Err(Error::Metric(format!(
                "group {g} needs at least one positive and one negative ({p} positive, {n} negative)"
            )));
        }
        tpr.push(tp as f64 / p as f64);
        fpr.push(fp as f64 / n as f64);
    }
    Ok(max_min_gap(&tpr).max(max_min_gap(&fpr)))
}

/// All metrics for one attribute. Level names default to the level indices.
pub fn evaluate(preds: &Predictions, attribute_name: &str) -> Result<EvaluationReport> {
    let overall = auc(&preds.scores, &preds.labels)?;
    let group_auc = groupwise_auc(preds);
    let counts = preds.group_counts();
    let groups = (0..preds.num_groups)
        .map(|g| GroupMetrics {
            level: g.to_string(),
            auc: group_auc.get(&g).copied(),
            count: counts[g],
        })
        .collect();
    Ok(EvaluationReport::assemble(
        attribute_name,
        overall,
        groups,
        dpd(preds)?,
        deodds(preds)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.2], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.2, 0.8], &[1, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1, 1]).is_err());
    }

    #[test]
    fn es_auc_examples() {
        let v = es_auc(0.7727, [0.7974, 0.7360, 0.7782]);
        assert!((v - 0.7243).abs() < 5e-4, "{v}");
        let v = es_auc(0.7727, [0.7425, 0.8088]);
        assert!((v - 0.7247).abs() < 5e-4, "{v}");
        assert_eq!(es_auc(0.8, [0.8, 0.8, 0.8]), 0.8);
    }

    fn preds(scores: &[f64], labels: &[u8], groups: &[usize], k: usize) -> Predictions {
        Predictions::new(scores.to_vec(), labels.to_vec(), groups.to_vec(), k, 0.5).unwrap()
    }

    #[test]
    fn groupwise_examples() {
        let p = preds(&[0.9, 0.1, 0.8, 0.2], &[1, 0, 1, 0], &[0, 0, 1, 1], 2);
        let g = groupwise_auc(&p);
        assert_eq!(g.get(&0), Some(&1.0));
        assert_eq!(g.get(&1), Some(&1.0));
        let p = preds(&[0.9, 0.1, 0.8, 0.7], &[1, 0, 1, 1], &[0, 0, 1, 1], 2);
        let g = groupwise_auc(&p);
        assert!(!g.contains_key(&1));
    }

    #[test]
    fn dpd_examples() {
        // group 0: 3/5 positive, group 1: 2/5 positive
        let p = preds(
            &[0.9, 0.9, 0.9, 0.1, 0.1, 0.9, 0.9, 0.1, 0.1, 0.1],
            &[1, 0, 1, 0, 1, 1, 0, 1, 0, 0],
            &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
            2,
        );
        assert!((dpd(&p).unwrap() - 0.2).abs() < 1e-15);
        let p = preds(&[0.7; 4], &[1, 0, 1, 0], &[0, 0, 1, 1], 2);
        assert_eq!(dpd(&p).unwrap(), 0.0);
        // rates 0.1, 0.5, 0.9 over groups of ten
        let mut scores = Vec::new();
        let mut groups = Vec::new();
        for (g, k) in [(0usize, 1usize), (1, 5), (2, 9)] {
            for i in 0..10 {
                scores.push(if i < k { 1.0 } else { 0.0 });
                groups.push(g);
            }
        }
        let labels = vec![0; 30];
        let p = preds(&scores, &labels, &groups, 3);
        assert!((dpd(&p).unwrap() - 0.8).abs() < 1e-15);
        let p = preds(&[0.7; 2], &[1, 0], &[0, 0], 2);
        assert!(dpd(&p).is_err());
    }

    #[test]
    fn deodds_examples() {
        let p = preds(&[0.9, 0.1, 0.9, 0.1], &[1, 0, 1, 0], &[0, 0, 1, 1], 2);
        assert_eq!(deodds(&p).unwrap(), 0.0);
        // A: TPR 1, FPR 0. B: TPR 0.5, FPR 0.
        let p = preds(
            &[0.9, 0.9, 0.1, 0.9, 0.1, 0.1],
            &[1, 1, 0, 1, 1, 0],
            &[0, 0, 0, 1, 1, 1],
            2,
        );
        assert_eq!(deodds(&p).unwrap(), 0.5);
        let p = preds(&[0.9, 0.9], &[1, 1], &[0, 1], 2);
        assert!(deodds(&p).is_err());
    }

    #[test]
    fn prediction_validation() {
        assert!(Predictions::new(vec![], vec![], vec![], 1, 0.5).is_err());
        assert!(Predictions::new(vec![0.1], vec![2], vec![0], 1, 0.5).is_err());
        assert!(Predictions::new(vec![0.1], vec![1], vec![1], 1, 0.5).is_err());
        assert!(Predictions::new(vec![0.1, 0.2], vec![1], vec![0], 1, 0.5).is_err());
    }
}
