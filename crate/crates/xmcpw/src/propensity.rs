//! Empirical propensity model mapping label frequencies to observation
//! probabilities.
//!
//! The probability that a relevant label was actually annotated grows with
//! how often the label occurs in training:
//!
//! ```text
//! p_l = 1 / (1 + C * (N_l + B)^-A),   C = (ln N - 1) * (B + 1)^A
//! ```
//!
//! where `N` is the number of training points and `N_l` the number of
//! positives for label `l`. `A` and `B` are dataset-dependent; a table of
//! published values for the common benchmarks is built in. All logarithms
//! are natural.

use crate::error::{Error, Result};
use crate::loss::PropensityScore;
use crate::scalar::Scalar;

/// Parameters of the empirical propensity model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityParams<S> {
    a: S,
    b: S,
    num_points: usize,
}

impl<S: Scalar> PropensityParams<S> {
    /// Requires `A > 0`, `B >= 0` and at least two training points.
    pub fn new(a: S, b: S, num_points: usize) -> Result<Self> {
        if !a.is_finite() || a <= S::zero() {
            return Err(Error::Parameter(format!("A must be positive, got {a}")));
        }
        if !b.is_finite() || b < S::zero() {
            return Err(Error::Parameter(format!("B must be non-negative, got {b}")));
        }
        if num_points < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 training points, got {num_points}"
            )));
        }
        Ok(PropensityParams { a, b, num_points })
    }

    /// Table-1 `(A, B)` values for a named benchmark dataset
    /// (case-insensitive); the training-set size comes from the caller.
    pub fn for_dataset(name: &str, num_points: usize) -> Result<Self> {
        let (a, b) = default_ab(name)?;
        PropensityParams::new(S::cast(a), S::cast(b), num_points)
    }

    pub fn a(&self) -> S {
        self.a
    }

    pub fn b(&self) -> S {
        self.b
    }

    pub fn num_points(&self) -> usize {
        self.num_points
    }
}

/// Published `(A, B)` propensity parameters for the standard benchmarks.
pub fn default_ab(name: &str) -> Result<(f64, f64)> {
    match name.to_ascii_lowercase().as_str() {
        "eurlex-4k" => Ok((0.55, 1.5)),
        "amazoncat-13k" => Ok((0.55, 1.5)),
        "wikipedia-31k" => Ok((0.55, 1.5)),
        "wikilshtc-325k" => Ok((0.5, 0.4)),
        "wikipedia-500k" => Ok((0.5, 0.4)),
        "amazon-670k" => Ok((0.6, 2.6)),
        _ => Err(Error::UnknownDataset(name.to_string())),
    }
}

/// Per-label positive counts: `counts[l]` is the number of training
/// examples annotated with label `l`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelFrequencies {
    pub counts: Vec<usize>,
}

impl LabelFrequencies {
    pub fn new(counts: Vec<usize>) -> Self {
        LabelFrequencies { counts }
    }

    pub fn num_labels(&self) -> usize {
        self.counts.len()
    }
}

/// The fitted model: derived constant `C` and one propensity per label.
///
/// Constructed either from [`PropensityParams`] and label frequencies, or
/// directly from known propensity values (simulation). Immutable once
/// built; share freely across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct PropensityModel<S> {
    params: Option<PropensityParams<S>>,
    c: Option<S>,
    per_label: Vec<PropensityScore<S>>,
}

impl<S: Scalar> PropensityModel<S> {
    /// Evaluate the empirical model on the label frequencies.
    ///
    /// Fails when `ln N <= 1` (the derived constant would not be positive)
    /// and when `B = 0` while some label has zero positives (the model
    /// would take a logarithm of zero).
    pub fn from_params(params: PropensityParams<S>, freqs: &LabelFrequencies) -> Result<Self> {
        let ln_n = S::from_usize(params.num_points)
            .expect("point count representable")
            .ln();
        if ln_n <= S::one() {
            return Err(Error::Parameter(format!(
                "ln(num_points) must exceed 1 for the derived constant to be positive; \
                 got num_points = {}",
                params.num_points
            )));
        }
        if params.b == S::zero() && freqs.counts.contains(&0) {
            return Err(Error::Domain(
                "B = 0 with a zero-frequency label: propensity undefined (log of zero)".into(),
            ));
        }
        let c = (ln_n - S::one()) * (params.b + S::one()).powf(params.a);
        let per_label = freqs
            .counts
            .iter()
            .map(|&n_l| {
                let base = S::from_usize(n_l).expect("count representable") + params.b;
                // exp(-A ln(N_l + B)) written directly as a power.
                let p = S::one() / (S::one() + c * base.powf(-params.a));
                PropensityScore::new(p)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(PropensityModel {
            params: Some(params),
            c: Some(c),
            per_label,
        })
    }

    /// Wrap known per-label propensities (no empirical fit); used for
    /// simulations and controlled experiments.
    pub fn from_propensities(values: Vec<S>) -> Result<Self> {
        let per_label = values
            .into_iter()
            .map(PropensityScore::new)
            .collect::<Result<Vec<_>>>()?;
        Ok(PropensityModel {
            params: None,
            c: None,
            per_label,
        })
    }

    /// Uniform propensity for every label.
    pub fn uniform(num_labels: usize, p: S) -> Result<Self> {
        Self::from_propensities(vec![p; num_labels])
    }

    /// The fitted parameters, when the model came from the empirical form.
    pub fn params(&self) -> Option<&PropensityParams<S>> {
        self.params.as_ref()
    }

    /// The derived constant `C`, when the model came from the empirical form.
    pub fn c(&self) -> Option<S> {
        self.c
    }

    pub fn num_labels(&self) -> usize {
        self.per_label.len()
    }

    pub fn get(&self, label: usize) -> PropensityScore<S> {
        self.per_label[label]
    }

    pub fn per_label(&self) -> &[PropensityScore<S>] {
        &self.per_label
    }

    /// Elementwise `1 / p_l`, the weights used by propensity-scored metrics.
    pub fn inverse_propensities(&self) -> Vec<S> {
        self.per_label.iter().map(|p| p.inverse()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eurlex_model(counts: Vec<usize>) -> PropensityModel<f64> {
        let params = PropensityParams::new(0.55, 1.5, 15_539).unwrap();
        PropensityModel::from_params(params, &LabelFrequencies::new(counts)).unwrap()
    }

    #[test]
    fn derived_constant_matches_direct_evaluation() {
        let model = eurlex_model(vec![1]);
        let expected = (15_539f64.ln() - 1.0) * 2.5f64.powf(0.55);
        assert!((model.c().unwrap() - expected).abs() < 1e-12);
        assert!((model.c().unwrap() - 14.32).abs() < 0.01);
    }

    #[test]
    fn frequent_label_propensity_approaches_one() {
        let model = eurlex_model(vec![1_000_000_000]);
        assert!((model.get(0).get() - 1.0).abs() < 1e-3);
        assert!(model.get(0).get() < 1.0);
    }

    #[test]
    fn mid_frequency_label_example() {
        let model = eurlex_model(vec![100]);
        let c = (15_539f64.ln() - 1.0) * 2.5f64.powf(0.55);
        let expected = 1.0 / (1.0 + c * 101.5f64.powf(-0.55));
        assert!((model.get(0).get() - expected).abs() < 1e-12);
        assert!((model.get(0).get() - 0.47).abs() < 0.005);
    }

    #[test]
    fn dataset_table_lookup() {
        assert_eq!(default_ab("WikiLSHTC-325K").unwrap(), (0.5, 0.4));
        assert_eq!(default_ab("Amazon-670K").unwrap(), (0.6, 2.6));
        assert_eq!(default_ab("eurlex-4k").unwrap(), (0.55, 1.5));
        assert!(matches!(
            default_ab("unknown-ds"),
            Err(Error::UnknownDataset(_))
        ));
    }

    #[test]
    fn tiny_point_count_is_rejected() {
        // ln 2 < 1, so the derived constant would be negative.
        let params = PropensityParams::new(0.55, 1.5, 2).unwrap();
        assert!(PropensityModel::from_params(params, &LabelFrequencies::new(vec![5])).is_err());
        let params = PropensityParams::new(0.55, 1.5, 3).unwrap();
        assert!(PropensityModel::from_params(params, &LabelFrequencies::new(vec![5])).is_ok());
    }

    #[test]
    fn zero_frequency_needs_positive_b() {
        let params = PropensityParams::<f64>::new(0.5, 0.0, 100).unwrap();
        let freqs = LabelFrequencies::new(vec![3, 0]);
        assert!(matches!(
            PropensityModel::from_params(params, &freqs),
            Err(Error::Domain(_))
        ));
        // With B > 0 the zero-frequency label is fine.
        let params = PropensityParams::new(0.5, 0.4, 100).unwrap();
        let model = PropensityModel::from_params(params, &freqs).unwrap();
        assert!(model.get(1).get() > 0.0);
    }

    #[test]
    fn inverse_propensities_examples() {
        let model = PropensityModel::from_propensities(vec![0.5, 0.25]).unwrap();
        assert_eq!(model.inverse_propensities(), vec![2.0, 4.0]);

        let model: PropensityModel<f64> =
            PropensityModel::from_propensities(vec![1.0 - 1e-15]).unwrap();
        assert!((model.inverse_propensities()[0] - 1.0).abs() < 1e-12);

        let model = PropensityModel::<f64>::from_propensities(vec![]).unwrap();
        assert!(model.inverse_propensities().is_empty());
    }

    #[test]
    fn propensity_is_monotone_in_frequency_and_strictly_inside_unit_interval() {
        let counts: Vec<usize> = (0..200).map(|i| i * 7).collect();
        let model = eurlex_model(counts.clone());
        for l in 1..counts.len() {
            assert!(model.get(l).get() >= model.get(l - 1).get());
        }
        for l in 0..counts.len() {
            let p = model.get(l).get();
            assert!(p > 0.0 && p < 1.0, "label {l}: {p}");
        }
    }

    #[test]
    fn power_form_matches_exponential_form() {
        let (a, b) = (0.55f64, 1.5f64);
        for n_l in [0usize, 1, 10, 1000, 1_000_000] {
            let base = n_l as f64 + b;
            let via_exp = (-a * base.ln()).exp();
            let via_pow = base.powf(-a);
            assert!((via_exp - via_pow).abs() <= 1e-12 * via_pow.max(1.0));
        }
    }
}
