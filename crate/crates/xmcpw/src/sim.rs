//! Missing-label simulation and exact verification of the unbiasedness
//! identity.
//!
//! [`drop_labels`] implements the one-sided observation model: every true
//! positive survives independently with its label's keep probability, and
//! negatives are never flipped. Randomness is counter-based, keyed by
//! `(seed, example, label)`, so the output is independent of iteration
//! order and parallelism.
//!
//! [`exact_expectation_check`] verifies, by closed-form enumeration over
//! the two-point joint distribution of `(Y*, Y)`, that the corrected loss
//! evaluated on observed labels has the same expectation as the plain loss
//! on true labels. No sampling is involved; the identity holds to
//! floating-point precision.

use rayon::prelude::*;

use crate::data::{SparseDataset, SparseExample};
use crate::error::{Error, Result};
use crate::loss::{unbiased_positive_part, LossFamily, PropensityScore};
use crate::ovr::{predict_topk, train, OvrModel, TrainConfig};
use crate::propensity::PropensityModel;
use crate::rng::{coordinate_unit, SplitMix64};
use crate::scalar::{positive_part, Scalar};
use crate::solver::SolverLoss;

/// Per-label keep probabilities and the seed for [`drop_labels`].
#[derive(Debug, Clone, PartialEq)]
pub struct DropConfig<S> {
    keep: Vec<PropensityScore<S>>,
    seed: u64,
}

impl<S: Scalar> DropConfig<S> {
    /// Requires every probability in `(0, 1]`.
    pub fn new(keep_probabilities: Vec<S>, seed: u64) -> Result<Self> {
        let keep = keep_probabilities
            .into_iter()
            .map(|p| {
                PropensityScore::new(p).map_err(|_| {
                    Error::Config(format!("keep probability must be in (0, 1], got {p}"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DropConfig { keep, seed })
    }

    /// The same keep probability for every label.
    pub fn uniform(num_labels: usize, p: S, seed: u64) -> Result<Self> {
        Self::new(vec![p; num_labels], seed)
    }

    pub fn keep_probabilities(&self) -> &[PropensityScore<S>] {
        &self.keep
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Drop observed positives independently with probability `1 - p_l`.
/// Features are untouched and labels are never added. Deterministic in
/// `(seed, example index, label index)` only.
pub fn drop_labels<S: Scalar>(
    dataset: &SparseDataset<S>,
    config: &DropConfig<S>,
) -> Result<SparseDataset<S>> {
    if config.keep.len() != dataset.num_labels() {
        return Err(Error::Dimension(format!(
            "keep probabilities cover {} labels, dataset has {}",
            config.keep.len(),
            dataset.num_labels()
        )));
    }
    let examples: Vec<SparseExample<S>> = dataset
        .examples()
        .par_iter()
        .enumerate()
        .map(|(i, example)| {
            let labels = example
                .labels
                .iter()
                .copied()
                .filter(|&label| {
                    let p = config.keep[label as usize].get().as_f64();
                    coordinate_unit(config.seed, i as u64, label as u64) < p
                })
                .collect();
            SparseExample {
                labels,
                features: example.features.clone(),
            }
        })
        .collect();
    SparseDataset::new(dataset.num_features(), dataset.num_labels(), examples)
}

/// One cell of the expectation-identity grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationCase<S> {
    /// `P(Y* = 1)`, the probability that the label is truly relevant.
    pub q: S,
    pub p: PropensityScore<S>,
    /// Prediction: raw score for margin families, probability for `Bce`.
    pub prediction: S,
    pub family: LossFamily,
}

/// Closed-form evaluation of both sides of the unbiasedness identity.
///
/// Under the observation model, `P(Y = 1) = q * p`. The left side is the
/// expectation of the plain loss under the true label, the right side the
/// expectation of the corrected loss under the observed label:
///
/// ```text
/// lhs = q * l*_+(v) + (1 - q) * l*_-(v)
/// rhs = q * p * l_+(v) + (1 - q * p) * l*_-(v)
/// ```
///
/// For `ZeroOne` the correction is the unshifted form (the generic
/// transform); the public shifted variant trades the identity for
/// non-negativity and is off by exactly `(1/p - 1) * q * p`.
pub fn exact_expectation_check<S: Scalar>(case: &ExpectationCase<S>) -> Result<(S, S)> {
    if !(case.q >= S::zero() && case.q <= S::one()) {
        return Err(Error::Domain(format!(
            "q must be in [0, 1], got {}",
            case.q
        )));
    }
    let (lp, lm) = case.family.plain_parts(case.prediction);
    let corrected = unbiased_positive_part(lp, lm, case.p);
    let observed_positive = case.q * case.p.get();
    let lhs = case.q * lp + (S::one() - case.q) * lm;
    let rhs = observed_positive * corrected + (S::one() - observed_positive) * lm;
    Ok((lhs, rhs))
}

/// Which objective a synthetic-experiment run trained with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentVariant {
    /// Unweighted objective (both class costs 1).
    Plain,
    /// Positive class weighted by `2/p - 1` using the true propensity.
    Weighted,
}

impl ExperimentVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentVariant::Plain => "plain",
            ExperimentVariant::Weighted => "weighted",
        }
    }
}

/// One row of the experiment table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentRow<S> {
    pub propensity: S,
    pub variant: ExperimentVariant,
    /// Mean plain squared-hinge loss on the fully labeled test set.
    pub test_loss: S,
    /// Binary accuracy over all (example, label) decisions on the test set.
    pub accuracy: S,
}

/// Result of [`synthetic_experiment`]: two rows (plain, weighted) per grid
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport<S> {
    pub rows: Vec<ExperimentRow<S>>,
}

impl<S: Scalar> std::fmt::Display for ExperimentReport<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for row in &self.rows {
            writeln!(
                f,
                "p={:.3}, variant={}, loss={:.6}, acc={:.6}",
                row.propensity.as_f64(),
                row.variant.as_str(),
                row.test_loss.as_f64(),
                row.accuracy.as_f64()
            )?;
        }
        Ok(())
    }
}

/// Controlled missing-label experiment on synthetic linearly separable
/// multi-label data.
///
/// A random sparse dataset with a linear ground truth is generated; for
/// each grid propensity the training labels are dropped uniformly and two
/// one-vs-rest models are trained, one with the plain objective and one
/// with the propensity-weighted objective. Both are then evaluated on the
/// fully labeled test half: mean plain squared-hinge loss and binary
/// accuracy over every (example, label) decision.
pub fn synthetic_experiment<S: Scalar>(
    num_points: usize,
    num_features: usize,
    num_labels: usize,
    propensity_grid: &[S],
    seed: u64,
) -> Result<ExperimentReport<S>> {
    if num_labels < 2 {
        return Err(Error::Config(format!(
            "need at least 2 labels, got {num_labels}"
        )));
    }
    if num_points < 10 || num_features < 2 {
        return Err(Error::Config(
            "need at least 10 points and 2 features".into(),
        ));
    }
    for &p in propensity_grid {
        PropensityScore::new(p)
            .map_err(|_| Error::Config(format!("grid propensity must be in (0, 1], got {p}")))?;
    }

    let (train_set, test_set) = generate_linear_data(num_points, num_features, num_labels, seed)?;

    let mut rows = Vec::with_capacity(propensity_grid.len() * 2);
    for (grid_idx, &p) in propensity_grid.iter().enumerate() {
        let drop = DropConfig::uniform(num_labels, p, seed ^ (grid_idx as u64 + 1).wrapping_mul(0x9E37_79B9))?;
        let observed = drop_labels(&train_set, &drop)?;

        let plain_props = PropensityModel::uniform(num_labels, S::one())?;
        let weighted_props = PropensityModel::uniform(num_labels, p)?;
        let config = TrainConfig {
            scheme: crate::loss::WeightScheme::Theory,
            loss: SolverLoss::SquaredHinge,
            prune_threshold: S::zero(),
            ..TrainConfig::default()
        };
        for (variant, props) in [
            (ExperimentVariant::Plain, &plain_props),
            (ExperimentVariant::Weighted, &weighted_props),
        ] {
            let model = train(&observed, props, &config)?;
            let (test_loss, accuracy) = full_label_test_metrics(&model, &test_set)?;
            rows.push(ExperimentRow {
                propensity: p,
                variant,
                test_loss,
                accuracy,
            });
        }
    }
    Ok(ExperimentReport { rows })
}

/// Mean plain squared-hinge loss and binary accuracy of a model on a
/// fully labeled dataset, over all (example, label) pairs.
pub fn full_label_test_metrics<S: Scalar>(
    model: &OvrModel<S>,
    test_set: &SparseDataset<S>,
) -> Result<(S, S)> {
    let num_labels = model.num_labels();
    let all_scores = predict_topk(model, test_set, num_labels)?;
    let mut loss_sum = S::zero();
    let mut correct = 0usize;
    for (example, scored) in test_set.examples().iter().zip(&all_scores.rows) {
        for &(label, score) in scored {
            let relevant = example.has_label(label);
            let z = if relevant { S::one() } else { -S::one() };
            let margin = positive_part(S::one() - z * score);
            loss_sum += margin * margin;
            if (score >= S::zero()) == relevant {
                correct += 1;
            }
        }
    }
    let total = S::from_usize(test_set.num_points() * num_labels).unwrap();
    Ok((
        loss_sum / total,
        S::from_usize(correct).unwrap() / total,
    ))
}

/// Random sparse examples with labels assigned by thresholded linear
/// scores, so the problem is exactly linearly separable with a bias term.
/// Returns (train, test) halves, both bias-augmented.
fn generate_linear_data<S: Scalar>(
    num_points: usize,
    num_features: usize,
    num_labels: usize,
    seed: u64,
) -> Result<(SparseDataset<S>, SparseDataset<S>)> {
    let mut rng = SplitMix64::new(seed);
    let total = 2 * num_points;

    let truth: Vec<Vec<f64>> = (0..num_labels)
        .map(|_| (0..num_features).map(|_| rng.range(-1.0, 1.0)).collect())
        .collect();

    let nnz = (num_features / 2).clamp(2, num_features);
    let mut features_per_example: Vec<Vec<(u32, S)>> = Vec::with_capacity(total);
    for _ in 0..total {
        let picked = rng.distinct_sorted(nnz, num_features);
        let mut features: Vec<(u32, f64)> = picked
            .into_iter()
            .map(|i| (i as u32, rng.range(-1.0, 1.0)))
            .collect();
        let norm: f64 = features.iter().map(|&(_, v)| v * v).sum::<f64>().sqrt();
        if norm < 1e-9 {
            features[0].1 = 1.0;
        } else {
            for (_, v) in &mut features {
                *v /= norm;
            }
        }
        features_per_example.push(
            features
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|(i, v)| (i, S::cast(v)))
                .collect(),
        );
    }

    // Per-label threshold at a random positive rate in [0.25, 0.5); the
    // quantile midpoint leaves an exact margin on both sides.
    let mut labels_per_example: Vec<Vec<u32>> = vec![Vec::new(); total];
    for (label, weights) in truth.iter().enumerate() {
        let scores: Vec<f64> = features_per_example
            .iter()
            .map(|features| {
                features
                    .iter()
                    .map(|&(idx, v)| v.as_f64() * weights[idx as usize])
                    .sum()
            })
            .collect();
        let rate = 0.25 + 0.25 * rng.unit();
        let positives = ((total as f64 * rate) as usize).clamp(1, total - 1);
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let threshold = 0.5 * (sorted[positives - 1] + sorted[positives]);
        for (i, &score) in scores.iter().enumerate() {
            if score > threshold {
                labels_per_example[i].push(label as u32);
            }
        }
    }

    let build = |range: std::ops::Range<usize>| -> Result<SparseDataset<S>> {
        let examples = range
            .map(|i| SparseExample {
                labels: labels_per_example[i].clone(),
                features: features_per_example[i].clone(),
            })
            .collect();
        let mut dataset = SparseDataset::new(num_features, num_labels, examples)?;
        dataset.add_bias(S::one())?;
        Ok(dataset)
    };
    Ok((build(0..num_points)?, build(num_points..total)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loss::LossSpec;
    use crate::loss::LossVariant;

    fn p(v: f64) -> PropensityScore<f64> {
        PropensityScore::new(v).unwrap()
    }

    fn dense_multilabel_dataset(num_points: usize, num_labels: usize) -> SparseDataset<f64> {
        let examples = (0..num_points)
            .map(|i| SparseExample {
                labels: (0..num_labels as u32).collect(),
                features: vec![(0, i as f64 + 1.0)],
            })
            .collect();
        SparseDataset::new(1, num_labels, examples).unwrap()
    }

    #[test]
    fn keep_all_leaves_the_dataset_unchanged() {
        let dataset = dense_multilabel_dataset(50, 3);
        let config = DropConfig::uniform(3, 1.0, 123).unwrap();
        let dropped = drop_labels(&dataset, &config).unwrap();
        assert_eq!(dataset, dropped);
    }

    #[test]
    fn same_seed_is_reproducible_and_different_seeds_differ() {
        let dataset = dense_multilabel_dataset(200, 4);
        let config = DropConfig::uniform(4, 0.5, 7).unwrap();
        let a = drop_labels(&dataset, &config).unwrap();
        let b = drop_labels(&dataset, &config).unwrap();
        assert_eq!(a, b);
        let other = DropConfig::uniform(4, 0.5, 8).unwrap();
        let c = drop_labels(&dataset, &other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn kept_count_concentrates_around_the_binomial_mean() {
        let dataset = dense_multilabel_dataset(10_000, 1);
        let config = DropConfig::uniform(1, 0.5, 99).unwrap();
        let dropped = drop_labels(&dataset, &config).unwrap();
        let kept: usize = dropped.label_frequencies().counts[0];
        // 4 standard deviations of Binomial(10^4, 0.5).
        let sigma = (10_000.0f64 * 0.25).sqrt();
        assert!(
            (kept as f64 - 5000.0).abs() <= 4.0 * sigma,
            "kept {kept} of 10000"
        );
    }

    #[test]
    fn parallel_drop_matches_a_sequential_reference() {
        // The keep decision depends only on (seed, example, label), so a
        // plain sequential loop must reproduce the parallel result.
        let dataset = dense_multilabel_dataset(150, 4);
        let config = DropConfig::uniform(4, 0.6, 31).unwrap();
        let dropped = drop_labels(&dataset, &config).unwrap();
        for (i, example) in dataset.examples().iter().enumerate() {
            let expected: Vec<u32> = example
                .labels
                .iter()
                .copied()
                .filter(|&label| crate::rng::coordinate_unit(31, i as u64, label as u64) < 0.6)
                .collect();
            assert_eq!(dropped.examples()[i].labels, expected);
        }
    }

    #[test]
    fn dropping_never_adds_labels() {
        let dataset = dense_multilabel_dataset(300, 5);
        for seed in 0..5 {
            let config = DropConfig::uniform(5, 0.3, seed).unwrap();
            let dropped = drop_labels(&dataset, &config).unwrap();
            for (before, after) in dataset.examples().iter().zip(dropped.examples()) {
                for label in &after.labels {
                    assert!(before.labels.contains(label));
                }
                assert_eq!(before.features, after.features);
            }
        }
    }

    #[test]
    fn invalid_probabilities_are_rejected() {
        assert!(DropConfig::<f64>::uniform(2, 0.0, 1).is_err());
        assert!(DropConfig::<f64>::uniform(2, 1.1, 1).is_err());
        let dataset = dense_multilabel_dataset(5, 3);
        let config = DropConfig::uniform(2, 0.5, 1).unwrap();
        assert!(drop_labels(&dataset, &config).is_err());
    }

    fn prediction_grid(family: LossFamily) -> Vec<f64> {
        match family {
            LossFamily::Bce => (1..=24).map(|i| i as f64 / 25.0).collect(),
            _ => (-10..=10).map(|i| i as f64 / 5.0).collect(),
        }
    }

    #[test]
    fn expectation_identity_holds_on_the_full_grid() {
        let families = [
            LossFamily::SquaredError,
            LossFamily::Bce,
            LossFamily::Hinge,
            LossFamily::ZeroOne,
            LossFamily::SquaredHinge,
        ];
        for family in families {
            for pi in 1..=10 {
                let prop = p(pi as f64 / 10.0);
                for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
                    for v in prediction_grid(family) {
                        let case = ExpectationCase { q, p: prop, prediction: v, family };
                        let (lhs, rhs) = exact_expectation_check(&case).unwrap();
                        assert!(
                            (lhs - rhs).abs() <= 1e-10,
                            "{family:?} q={q} p={} v={v}: {lhs} vs {rhs}",
                            prop.get()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn unit_propensity_makes_the_identity_trivial() {
        for family in [LossFamily::SquaredError, LossFamily::Hinge] {
            let case = ExpectationCase { q: 0.5, p: p(1.0), prediction: 0.4, family };
            let (lhs, rhs) = exact_expectation_check(&case).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn certain_positive_hinge_case_is_exact() {
        let case = ExpectationCase {
            q: 1.0,
            p: p(0.2),
            prediction: 0.4,
            family: LossFamily::Hinge,
        };
        let (lhs, rhs) = exact_expectation_check(&case).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12);
    }

    #[test]
    fn invalid_q_is_rejected() {
        let case = ExpectationCase {
            q: 1.5,
            p: p(0.5),
            prediction: 0.0,
            family: LossFamily::Hinge,
        };
        assert!(exact_expectation_check(&case).is_err());
    }

    /// The public shifted zero-one variant misses the identity by exactly
    /// `(1/p - 1) * q * p`: its positive part sits `1/p - 1` above the
    /// unshifted correction.
    #[test]
    fn shifted_zero_one_offset_is_the_known_constant() {
        for pi in 1..=10 {
            let prop = p(pi as f64 / 10.0);
            let shifted = LossSpec::new(LossFamily::ZeroOne, LossVariant::Unbiased, prop).unwrap();
            for q in [0.0, 0.25, 0.5, 0.75, 1.0] {
                for v in prediction_grid(LossFamily::ZeroOne) {
                    let case = ExpectationCase {
                        q,
                        p: prop,
                        prediction: v,
                        family: LossFamily::ZeroOne,
                    };
                    let (lhs, _) = exact_expectation_check(&case).unwrap();
                    let observed_positive = q * prop.get();
                    let (_, lm) = LossFamily::ZeroOne.plain_parts(v);
                    let rhs_shifted = observed_positive * shifted.eval(true, v)
                        + (1.0 - observed_positive) * lm;
                    let offset = (prop.inverse() - 1.0) * q * prop.get();
                    assert!(
                        (rhs_shifted - lhs - offset).abs() <= 1e-12,
                        "p={} q={q} v={v}",
                        prop.get()
                    );
                }
            }
        }
    }

    #[test]
    fn experiment_shape_and_unit_propensity_collapse() {
        let report: ExperimentReport<f64> =
            synthetic_experiment(60, 8, 3, &[1.0, 0.5], 42).unwrap();
        assert_eq!(report.rows.len(), 4);
        let at_unit: Vec<&ExperimentRow<f64>> =
            report.rows.iter().filter(|r| r.propensity == 1.0).collect();
        assert_eq!(at_unit.len(), 2);
        assert!((at_unit[0].test_loss - at_unit[1].test_loss).abs() <= 1e-9);
        assert!((at_unit[0].accuracy - at_unit[1].accuracy).abs() <= 1e-9);
        let text = report.to_string();
        assert!(text.contains("p=1.000, variant=plain"));
        assert!(text.contains("p=0.500, variant=weighted"));
    }

    #[test]
    fn degenerate_sizes_are_rejected() {
        assert!(synthetic_experiment::<f64>(60, 8, 1, &[0.5], 1).is_err());
        assert!(synthetic_experiment::<f64>(5, 8, 3, &[0.5], 1).is_err());
        assert!(synthetic_experiment::<f64>(60, 8, 3, &[0.0], 1).is_err());
    }

    #[test]
    fn weighting_helps_at_low_propensity() {
        // One seeded run; the acceptance suite runs the 4-of-5 version.
        let report: ExperimentReport<f64> =
            synthetic_experiment(300, 16, 5, &[0.3], 7).unwrap();
        let plain = report.rows.iter().find(|r| r.variant == ExperimentVariant::Plain).unwrap();
        let weighted =
            report.rows.iter().find(|r| r.variant == ExperimentVariant::Weighted).unwrap();
        assert!(
            weighted.test_loss <= plain.test_loss,
            "weighted {} vs plain {}",
            weighted.test_loss,
            plain.test_loss
        );
    }
}
