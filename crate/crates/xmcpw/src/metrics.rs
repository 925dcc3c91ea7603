//! Ranking metrics: precision@k, nDCG@k and their propensity-scored
//! counterparts, plus the normalized-gain comparison score.
//!
//! All discounts use the rank position `r` (1-based) inside a natural
//! logarithm, `1 / ln(r + 1)`; the normalized forms are invariant to the
//! log base. Propensity-scored variants weight each hit by the label's
//! inverse propensity, which rewards retrieving rarely annotated labels.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Observed positive labels of the test examples, sorted per example.
pub type GroundTruth = Vec<Vec<u32>>;

/// A propensity-scored metric selector for [`normalized_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PsMetric {
    Psp,
    Psndcg,
}

#[inline]
fn is_relevant(truth: &[u32], label: u32) -> bool {
    truth.binary_search(&label).is_ok()
}

#[inline]
fn rank_discount<S: Scalar>(rank: usize) -> S {
    S::one() / S::from_usize(rank + 1).expect("rank representable").ln()
}

/// Sum of the first `min(k, |truth|)` rank discounts; the ideal DCG mass.
fn ideal_discount_sum<S: Scalar>(truth_size: usize, k: usize) -> S {
    (1..=k.min(truth_size)).map(rank_discount::<S>).fold(S::zero(), |a, b| a + b)
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    Ok(())
}

/// Fraction of the top-`k` predicted labels that are relevant.
pub fn precision_at_k<S: Scalar>(truth: &[u32], predicted: &[(u32, S)], k: usize) -> Result<S> {
    check_k(k)?;
    let hits = predicted
        .iter()
        .take(k)
        .filter(|&&(label, _)| is_relevant(truth, label))
        .count();
    Ok(S::from_usize(hits).expect("hit count representable") / S::from_usize(k).unwrap())
}

/// Discounted cumulative gain over the top-`k` predictions.
pub fn dcg_at_k<S: Scalar>(truth: &[u32], predicted: &[(u32, S)], k: usize) -> Result<S> {
    check_k(k)?;
    let mut gain = S::zero();
    for (pos, &(label, _)) in predicted.iter().take(k).enumerate() {
        if is_relevant(truth, label) {
            gain += rank_discount(pos + 1);
        }
    }
    Ok(gain)
}

/// Normalized DCG; 0 for an empty truth set.
pub fn ndcg_at_k<S: Scalar>(truth: &[u32], predicted: &[(u32, S)], k: usize) -> Result<S> {
    let gain = dcg_at_k(truth, predicted, k)?;
    if truth.is_empty() {
        return Ok(S::zero());
    }
    Ok(gain / ideal_discount_sum(truth.len(), k))
}

/// Propensity-scored precision: hits weighted by inverse propensity.
/// Can exceed 1.
pub fn psp_at_k<S: Scalar>(
    truth: &[u32],
    predicted: &[(u32, S)],
    k: usize,
    inv_props: &[S],
) -> Result<S> {
    check_k(k)?;
    let mut sum = S::zero();
    for &(label, _) in predicted.iter().take(k) {
        if is_relevant(truth, label) {
            sum += inv_props[label as usize];
        }
    }
    Ok(sum / S::from_usize(k).unwrap())
}

/// Propensity-scored DCG.
pub fn psdcg_at_k<S: Scalar>(
    truth: &[u32],
    predicted: &[(u32, S)],
    k: usize,
    inv_props: &[S],
) -> Result<S> {
    check_k(k)?;
    let mut gain = S::zero();
    for (pos, &(label, _)) in predicted.iter().take(k).enumerate() {
        if is_relevant(truth, label) {
            gain += inv_props[label as usize] * rank_discount(pos + 1);
        }
    }
    Ok(gain)
}

/// Propensity-scored nDCG; 0 for an empty truth set.
pub fn psndcg_at_k<S: Scalar>(
    truth: &[u32],
    predicted: &[(u32, S)],
    k: usize,
    inv_props: &[S],
) -> Result<S> {
    let gain = psdcg_at_k(truth, predicted, k, inv_props)?;
    if truth.is_empty() {
        return Ok(S::zero());
    }
    Ok(gain / ideal_discount_sum(truth.len(), k))
}

/// The predictions a perfect system would make: the truth vector itself
/// used as scores (1 on relevant labels, 0 elsewhere), ties broken by
/// ascending label index. Labels beyond the relevant ones contribute
/// nothing to any metric, so only the relevant prefix is materialized.
fn truth_as_prediction<S: Scalar>(truth: &[u32], k: usize) -> Vec<(u32, S)> {
    truth.iter().take(k).map(|&label| (label, S::one())).collect()
}

/// Mean of a propensity-scored metric over the test set, skipping
/// examples with no observed labels (their normalizer is empty). Returns
/// zero when every example is skipped.
fn ps_mean<S: Scalar>(
    metric: PsMetric,
    k: usize,
    predictions: &[Vec<(u32, S)>],
    truth: &[Vec<u32>],
    inv_props: &[S],
) -> Result<S> {
    let mut sum = S::zero();
    let mut counted = 0usize;
    for (truth_row, predicted) in truth.iter().zip(predictions) {
        if truth_row.is_empty() {
            continue;
        }
        sum += match metric {
            PsMetric::Psp => psp_at_k(truth_row, predicted, k, inv_props)?,
            PsMetric::Psndcg => psndcg_at_k(truth_row, predicted, k, inv_props)?,
        };
        counted += 1;
    }
    if counted == 0 {
        return Ok(S::zero());
    }
    Ok(sum / S::from_usize(counted).unwrap())
}

/// Performance relative to the best attainable system, in percent:
/// `100 * G(predictions) / G(truth-as-scores)`. Returns NaN when the
/// denominator is zero (no relevant labels anywhere).
pub fn normalized_gain<S: Scalar>(
    metric: PsMetric,
    k: usize,
    predictions: &[Vec<(u32, S)>],
    truth: &[Vec<u32>],
    inv_props: &[S],
) -> Result<S> {
    check_k(k)?;
    if truth.is_empty() {
        return Err(Error::Dimension("need at least one test example".into()));
    }
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} prediction rows for {} truth rows",
            predictions.len(),
            truth.len()
        )));
    }
    let achieved = ps_mean(metric, k, predictions, truth, inv_props)?;
    let ideal_rows: Vec<Vec<(u32, S)>> =
        truth.iter().map(|row| truth_as_prediction(row, k)).collect();
    let ideal = ps_mean(metric, k, &ideal_rows, truth, inv_props)?;
    if ideal == S::zero() {
        return Ok(S::nan());
    }
    Ok(S::cast(100.0) * achieved / ideal)
}

/// Aggregate metric values at one cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsAtK<S> {
    pub k: usize,
    pub p: S,
    pub ndcg: S,
    pub psp: S,
    pub psndcg: S,
    /// `100 * G(pred) / G(truth)` for PSP, when requested.
    pub psp_gain: Option<S>,
    /// `100 * G(pred) / G(truth)` for PSnDCG, when requested.
    pub psndcg_gain: Option<S>,
}

/// Metric means over a test set for each requested cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport<S> {
    pub at_k: Vec<MetricsAtK<S>>,
    pub num_examples: usize,
    /// Examples with empty observed label sets, excluded from the
    /// propensity-scored means.
    pub skipped_in_ps: usize,
    pub warnings: Vec<String>,
}

/// Evaluate all metrics at every cutoff in `ks`.
///
/// Vanilla means run over all examples; propensity-scored means skip
/// examples with no observed labels. With `with_gains`, the normalized
/// PSP/PSnDCG percentages are included (NaN with a warning when the
/// denominator system scores zero).
pub fn evaluate<S: Scalar>(
    truth: &[Vec<u32>],
    predictions: &[Vec<(u32, S)>],
    ks: &[usize],
    inv_props: &[S],
    with_gains: bool,
) -> Result<MetricsReport<S>> {
    if predictions.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "{} prediction rows for {} truth rows",
            predictions.len(),
            truth.len()
        )));
    }
    for row in truth {
        if let Some(&label) = row.last() {
            if label as usize >= inv_props.len() {
                return Err(Error::Dimension(format!(
                    "label {label} outside the propensity vector (len {})",
                    inv_props.len()
                )));
            }
        }
    }
    let num_examples = truth.len();
    let skipped_in_ps = truth.iter().filter(|row| row.is_empty()).count();
    let mut warnings = Vec::new();
    let mut at_k = Vec::with_capacity(ks.len());
    for &k in ks {
        check_k(k)?;
        let mut p_sum = S::zero();
        let mut ndcg_sum = S::zero();
        for (truth_row, predicted) in truth.iter().zip(predictions) {
            p_sum += precision_at_k(truth_row, predicted, k)?;
            ndcg_sum += ndcg_at_k(truth_row, predicted, k)?;
        }
        let denom = S::from_usize(num_examples.max(1)).unwrap();
        let psp = ps_mean(PsMetric::Psp, k, predictions, truth, inv_props)?;
        let psndcg = ps_mean(PsMetric::Psndcg, k, predictions, truth, inv_props)?;
        let (psp_gain, psndcg_gain) = if with_gains {
            let pg = normalized_gain(PsMetric::Psp, k, predictions, truth, inv_props)?;
            let ng = normalized_gain(PsMetric::Psndcg, k, predictions, truth, inv_props)?;
            if pg.is_nan() || ng.is_nan() {
                warnings.push(format!(
                    "normalized gain at k={k} undefined: the ideal system scores zero"
                ));
            }
            (Some(pg), Some(ng))
        } else {
            (None, None)
        };
        at_k.push(MetricsAtK {
            k,
            p: p_sum / denom,
            ndcg: ndcg_sum / denom,
            psp,
            psndcg,
            psp_gain,
            psndcg_gain,
        });
    }
    Ok(MetricsReport {
        at_k,
        num_examples,
        skipped_in_ps,
        warnings,
    })
}

impl<S: Scalar> MetricsReport<S> {
    /// Machine-readable `metric@k=value` lines, 6 decimal places.
    pub fn to_kv_lines(&self) -> String {
        let mut out = String::new();
        for row in &self.at_k {
            out.push_str(&format!("p@{}={:.6}\n", row.k, row.p.as_f64()));
            out.push_str(&format!("ndcg@{}={:.6}\n", row.k, row.ndcg.as_f64()));
            out.push_str(&format!("psp@{}={:.6}\n", row.k, row.psp.as_f64()));
            out.push_str(&format!("psndcg@{}={:.6}\n", row.k, row.psndcg.as_f64()));
            if let Some(gain) = row.psp_gain {
                out.push_str(&format!("psp-norm@{}={:.6}\n", row.k, gain.as_f64()));
            }
            if let Some(gain) = row.psndcg_gain {
                out.push_str(&format!("psndcg-norm@{}={:.6}\n", row.k, gain.as_f64()));
            }
        }
        out
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let has_gains = self.at_k.iter().any(|r| r.psp_gain.is_some());
        let mut out = String::new();
        out.push_str(&format!(
            "{:>4}  {:>10}  {:>10}  {:>10}  {:>10}",
            "k", "P@k", "nDCG@k", "PSP@k", "PSnDCG@k"
        ));
        if has_gains {
            out.push_str(&format!("  {:>10}  {:>12}", "PSP%@k", "PSnDCG%@k"));
        }
        out.push('\n');
        for row in &self.at_k {
            out.push_str(&format!(
                "{:>4}  {:>10.6}  {:>10.6}  {:>10.6}  {:>10.6}",
                row.k,
                row.p.as_f64(),
                row.ndcg.as_f64(),
                row.psp.as_f64(),
                row.psndcg.as_f64()
            ));
            if let (Some(pg), Some(ng)) = (row.psp_gain, row.psndcg_gain) {
                out.push_str(&format!("  {:>10.4}  {:>12.4}", pg.as_f64(), ng.as_f64()));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "examples: {}  (skipped in propensity-scored means: {})\n",
            self.num_examples, self.skipped_in_ps
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ovr::top_k_of_scores;
    use crate::rng::SplitMix64;

    fn ranked(scores: &[f64]) -> Vec<(u32, f64)> {
        top_k_of_scores(scores, scores.len())
    }

    #[test]
    fn precision_examples() {
        let truth = vec![0u32, 2];
        let predicted = ranked(&[0.9, 0.1, 0.8, 0.2]);
        assert_eq!(precision_at_k(&truth, &predicted, 2).unwrap(), 1.0);
        assert!((precision_at_k(&truth, &predicted, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&[], &predicted, 2).unwrap(), 0.0);
        assert!(precision_at_k(&truth, &predicted, 0).is_err());
    }

    #[test]
    fn ndcg_examples() {
        // Single relevant label ranked first.
        let predicted = ranked(&[1.0, 0.5, 0.2]);
        assert!((ndcg_at_k(&[0], &predicted, 3).unwrap() - 1.0).abs() < 1e-15);

        // Relevant label at rank 2 of 2.
        let predicted = ranked(&[1.0, 0.5]);
        let dcg = dcg_at_k(&[1], &predicted, 2).unwrap();
        assert!((dcg - 1.0 / 3f64.ln()).abs() < 1e-15);
        let ndcg = ndcg_at_k(&[1], &predicted, 2).unwrap();
        assert!((ndcg - 2f64.ln() / 3f64.ln()).abs() < 1e-15);
        assert!((ndcg - 0.6309).abs() < 1e-4);

        // No relevant label in the top-k.
        assert_eq!(ndcg_at_k(&[2], &ranked(&[1.0, 0.5, 0.0]), 2).unwrap(), 0.0);
    }

    #[test]
    fn psp_examples() {
        let inv = vec![4.0, 1.0];
        let predicted = ranked(&[1.0, 0.0]);
        assert_eq!(psp_at_k(&[0], &predicted, 1, &inv).unwrap(), 4.0);
        assert_eq!(psp_at_k(&[1], &predicted, 1, &inv).unwrap(), 0.0);
        // Unit propensities collapse PSP to P.
        let unit = vec![1.0, 1.0];
        for truth in [vec![0u32], vec![1], vec![0, 1]] {
            for k in 1..=2 {
                assert_eq!(
                    psp_at_k(&truth, &predicted, k, &unit).unwrap(),
                    precision_at_k(&truth, &predicted, k).unwrap()
                );
            }
        }
    }

    #[test]
    fn psndcg_examples() {
        let inv = vec![2.0];
        let predicted = ranked(&[1.0]);
        assert!((psndcg_at_k(&[0], &predicted, 1, &inv).unwrap() - 2.0).abs() < 1e-15);
        let unit = vec![1.0, 1.0, 1.0];
        let predicted = ranked(&[0.3, 0.9, 0.5]);
        for truth in [vec![0u32], vec![1, 2], vec![0, 1, 2]] {
            for k in 1..=3 {
                let a = psndcg_at_k(&truth, &predicted, k, &unit).unwrap();
                let b = ndcg_at_k(&truth, &predicted, k).unwrap();
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_gain_examples() {
        let inv = vec![3.0, 2.0, 1.5];
        let truth = vec![vec![0u32, 2], vec![1]];
        // Predictions equal to the truth ranking.
        let ideal: Vec<Vec<(u32, f64)>> = vec![
            vec![(0, 1.0), (2, 1.0)],
            vec![(1, 1.0)],
        ];
        let gain = normalized_gain(PsMetric::Psp, 2, &ideal, &truth, &inv).unwrap();
        assert!((gain - 100.0).abs() < 1e-10);

        // Zero hits.
        let miss: Vec<Vec<(u32, f64)>> = vec![vec![(1, 1.0)], vec![(0, 1.0)]];
        assert_eq!(normalized_gain(PsMetric::Psp, 1, &miss, &truth, &inv).unwrap(), 0.0);

        // Denominator zero: every truth row empty -> NaN sentinel.
        let empty_truth: Vec<Vec<u32>> = vec![vec![], vec![]];
        let gain =
            normalized_gain(PsMetric::Psp, 1, &miss, &empty_truth, &inv).unwrap();
        assert!(gain.is_nan());
    }

    #[test]
    fn psp_dominates_p_when_propensities_are_genuine() {
        let mut rng = SplitMix64::new(31);
        for _ in 0..200 {
            let num_labels = 2 + rng.below(6);
            let inv: Vec<f64> = (0..num_labels).map(|_| 1.0 + rng.range(0.0, 4.0)).collect();
            let scores: Vec<f64> = (0..num_labels).map(|_| rng.range(-1.0, 1.0)).collect();
            let truth: Vec<u32> = (0..num_labels as u32).filter(|_| rng.unit() < 0.4).collect();
            let predicted = ranked(&scores);
            for k in 1..=num_labels {
                let p = precision_at_k(&truth, &predicted, k).unwrap();
                let psp = psp_at_k(&truth, &predicted, k, &inv).unwrap();
                assert!(psp >= p - 1e-12);
            }
        }
    }

    #[test]
    fn aggregates_are_permutation_invariant() {
        let truth = vec![vec![0u32], vec![1], vec![], vec![0, 1]];
        let predictions: Vec<Vec<(u32, f64)>> = vec![
            ranked(&[0.9, 0.1]),
            ranked(&[0.3, 0.7]),
            ranked(&[0.5, 0.2]),
            ranked(&[0.6, 0.8]),
        ];
        let inv = vec![2.0, 3.0];
        let base = evaluate(&truth, &predictions, &[1, 2], &inv, true).unwrap();
        let perm = [2usize, 0, 3, 1];
        let truth_p: Vec<Vec<u32>> = perm.iter().map(|&i| truth[i].clone()).collect();
        let pred_p: Vec<Vec<(u32, f64)>> = perm.iter().map(|&i| predictions[i].clone()).collect();
        let shuffled = evaluate(&truth_p, &pred_p, &[1, 2], &inv, true).unwrap();
        for (a, b) in base.at_k.iter().zip(&shuffled.at_k) {
            assert!((a.p - b.p).abs() < 1e-12);
            assert!((a.ndcg - b.ndcg).abs() < 1e-12);
            assert!((a.psp - b.psp).abs() < 1e-12);
            assert!((a.psndcg - b.psndcg).abs() < 1e-12);
        }
        assert_eq!(base.skipped_in_ps, 1);
    }

    /// nDCG recomputed with base-2 logarithms; the ratio must not change.
    fn ndcg_base2(truth: &[u32], predicted: &[(u32, f64)], k: usize) -> f64 {
        if truth.is_empty() {
            return 0.0;
        }
        let mut gain = 0.0;
        for (pos, &(label, _)) in predicted.iter().take(k).enumerate() {
            if truth.binary_search(&label).is_ok() {
                gain += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let ideal: f64 = (1..=k.min(truth.len()))
            .map(|r| 1.0 / ((r + 1) as f64).log2())
            .sum();
        gain / ideal
    }

    #[test]
    fn ndcg_is_invariant_to_the_log_base() {
        let mut rng = SplitMix64::new(77);
        for _ in 0..100 {
            let num_labels = 3 + rng.below(5);
            let scores: Vec<f64> = (0..num_labels).map(|_| rng.range(-1.0, 1.0)).collect();
            let truth: Vec<u32> = (0..num_labels as u32).filter(|_| rng.unit() < 0.5).collect();
            let predicted = ranked(&scores);
            for k in 1..=num_labels {
                let natural = ndcg_at_k(&truth, &predicted, k).unwrap();
                let base2 = ndcg_base2(&truth, &predicted, k);
                assert!((natural - base2).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn report_formats_are_stable() {
        let truth = vec![vec![0u32]];
        let predictions = vec![ranked(&[1.0, 0.5])];
        let report = evaluate(&truth, &predictions, &[1], &[1.0, 1.0], true).unwrap();
        let kv = report.to_kv_lines();
        assert!(kv.contains("p@1=1.000000"));
        assert!(kv.contains("psp-norm@1=100.000000"));
        let table = report.to_table();
        assert!(table.contains("P@k"));
        assert!(table.contains("examples: 1"));
    }
}
