//! Sparse dataset text format, preprocessing and label statistics.
//!
//! The on-disk format is the plain-text layout used by the public extreme
//! classification benchmarks: a header line `num_points num_features
//! num_labels`, then one line per example holding a comma-separated label
//! list (possibly empty) followed by space-separated `index:value` feature
//! pairs. Indices are 0-based. Both `\n` and `\r\n` line endings are
//! accepted, and blank trailing lines are skipped.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::propensity::LabelFrequencies;
use crate::scalar::Scalar;

/// One training/test instance: sorted label set and sorted sparse features.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseExample<S> {
    /// Strictly increasing label indices.
    pub labels: Vec<u32>,
    /// Strictly increasing feature indices with finite non-zero values.
    pub features: Vec<(u32, S)>,
}

impl<S: Scalar> SparseExample<S> {
    /// Sparse dot product against a dense weight vector.
    #[inline]
    pub fn dot(&self, weights: &[S]) -> S {
        let mut acc = S::zero();
        for &(idx, value) in &self.features {
            acc += value * weights[idx as usize];
        }
        acc
    }

    /// Euclidean norm of the feature vector.
    pub fn norm(&self) -> S {
        self.features
            .iter()
            .map(|&(_, v)| v * v)
            .fold(S::zero(), |a, b| a + b)
            .sqrt()
    }

    pub fn has_label(&self, label: u32) -> bool {
        self.labels.binary_search(&label).is_ok()
    }
}

/// Row-sparse dataset: examples plus the feature/label space dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDataset<S> {
    num_features: usize,
    num_labels: usize,
    examples: Vec<SparseExample<S>>,
    /// Bias value appended by [`SparseDataset::add_bias`], if any. Guards
    /// against double augmentation; not persisted by [`write_xmc`].
    bias: Option<S>,
}

impl<S: Scalar> SparseDataset<S> {
    /// Build a dataset from parts, validating every invariant: feature
    /// indices strictly increasing and in range with finite non-zero
    /// values, label indices strictly increasing and in range.
    pub fn new(
        num_features: usize,
        num_labels: usize,
        examples: Vec<SparseExample<S>>,
    ) -> Result<Self> {
        for (i, example) in examples.iter().enumerate() {
            validate_example(example, num_features, num_labels)
                .map_err(|msg| Error::Domain(format!("example {i}: {msg}")))?;
        }
        Ok(SparseDataset {
            num_features,
            num_labels,
            examples,
            bias: None,
        })
    }

    pub fn num_points(&self) -> usize {
        self.examples.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn examples(&self) -> &[SparseExample<S>] {
        &self.examples
    }

    pub fn bias(&self) -> Option<S> {
        self.bias
    }

    /// Scale every example to unit Euclidean norm; all-zero feature
    /// vectors are left unchanged. The sparsity pattern and every value's
    /// sign are preserved.
    pub fn l2_normalize(&mut self) {
        for example in &mut self.examples {
            let norm = example.norm();
            if norm > S::zero() {
                for (_, v) in &mut example.features {
                    *v /= norm;
                }
            }
        }
    }

    /// Append a constant feature with the given value to every example,
    /// growing the feature space by one. Rejected when a bias is already
    /// present or the value is zero/non-finite.
    pub fn add_bias(&mut self, bias_value: S) -> Result<()> {
        if self.bias.is_some() {
            return Err(Error::Config("bias feature already present".into()));
        }
        if bias_value == S::zero() || !bias_value.is_finite() {
            return Err(Error::Config(format!(
                "bias value must be finite and non-zero, got {bias_value}"
            )));
        }
        let bias_index = self.num_features as u32;
        for example in &mut self.examples {
            example.features.push((bias_index, bias_value));
        }
        self.num_features += 1;
        self.bias = Some(bias_value);
        Ok(())
    }

    /// Per-label positive counts over the examples.
    pub fn label_frequencies(&self) -> LabelFrequencies {
        let mut counts = vec![0usize; self.num_labels];
        for example in &self.examples {
            for &label in &example.labels {
                counts[label as usize] += 1;
            }
        }
        LabelFrequencies::new(counts)
    }

    /// Observed label sets per example (the ground truth seen by metrics).
    pub fn label_sets(&self) -> Vec<Vec<u32>> {
        self.examples.iter().map(|e| e.labels.clone()).collect()
    }
}

fn validate_example<S: Scalar>(
    example: &SparseExample<S>,
    num_features: usize,
    num_labels: usize,
) -> std::result::Result<(), String> {
    for pair in example.features.windows(2) {
        if pair[0].0 >= pair[1].0 {
            return Err(format!(
                "feature indices not strictly increasing: {} then {}",
                pair[0].0, pair[1].0
            ));
        }
    }
    for &(idx, value) in &example.features {
        if idx as usize >= num_features {
            return Err(format!("feature index {idx} out of range (< {num_features})"));
        }
        if !value.is_finite() || value == S::zero() {
            return Err(format!("feature {idx} has invalid value {value}"));
        }
    }
    for pair in example.labels.windows(2) {
        if pair[0] >= pair[1] {
            return Err(format!(
                "label indices not strictly increasing: {} then {}",
                pair[0], pair[1]
            ));
        }
    }
    if let Some(&label) = example.labels.last() {
        if label as usize >= num_labels {
            return Err(format!("label index {label} out of range (< {num_labels})"));
        }
    }
    Ok(())
}

/// Parse a dataset in the benchmark text format.
///
/// Errors carry the 1-based physical line number (the header is line 1).
pub fn parse_xmc<S: Scalar, R: BufRead>(reader: R) -> Result<SparseDataset<S>> {
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing header line"))?
        .map_err(Error::Io)?;
    let mut parts = header.split_whitespace();
    let mut next_dim = |name: &str| -> Result<usize> {
        parts
            .next()
            .ok_or_else(|| Error::parse(1, format!("header missing {name}")))?
            .parse::<usize>()
            .map_err(|e| Error::parse(1, format!("bad {name}: {e}")))
    };
    let num_points = next_dim("num_points")?;
    let num_features = next_dim("num_features")?;
    let num_labels = next_dim("num_labels")?;
    if parts.next().is_some() {
        return Err(Error::parse(1, "header has more than three fields"));
    }

    let mut examples = Vec::with_capacity(num_points);
    let mut line_no = 1usize;
    for _ in 0..num_points {
        let line = lines
            .next()
            .ok_or_else(|| {
                Error::parse(
                    line_no + 1,
                    format!("expected {num_points} example lines, found {}", examples.len()),
                )
            })?
            .map_err(Error::Io)?;
        line_no += 1;
        examples.push(parse_example_line(&line, line_no, num_features, num_labels)?);
    }
    // Only blank material may follow the declared examples.
    for line in lines {
        let line = line.map_err(Error::Io)?;
        line_no += 1;
        if !line.trim().is_empty() {
            return Err(Error::parse(
                line_no,
                format!("unexpected content after {num_points} examples"),
            ));
        }
    }
    SparseDataset::new(num_features, num_labels, examples)
}

fn parse_example_line<S: Scalar>(
    line: &str,
    line_no: usize,
    num_features: usize,
    num_labels: usize,
) -> Result<SparseExample<S>> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let mut tokens = line.split_whitespace().peekable();

    // A line that opens with whitespace or whose first token is a feature
    // pair carries an empty label list.
    let mut labels: Vec<u32> = Vec::new();
    let leading_space = line.starts_with(' ') || line.starts_with('\t');
    if let Some(&first) = tokens.peek() {
        if !leading_space && !first.contains(':') {
            let token = tokens.next().expect("peeked");
            for piece in token.split(',') {
                if piece.is_empty() {
                    continue;
                }
                let label: u32 = piece
                    .parse()
                    .map_err(|e| Error::parse(line_no, format!("bad label `{piece}`: {e}")))?;
                if label as usize >= num_labels {
                    return Err(Error::parse(
                        line_no,
                        format!("label index {label} out of range (< {num_labels})"),
                    ));
                }
                labels.push(label);
            }
        }
    }
    labels.sort_unstable();
    labels.dedup();

    let mut features: Vec<(u32, S)> = Vec::new();
    for token in tokens {
        let (idx_str, val_str) = token.split_once(':').ok_or_else(|| {
            Error::parse(line_no, format!("expected `index:value` pair, got `{token}`"))
        })?;
        let idx: u32 = idx_str
            .parse()
            .map_err(|e| Error::parse(line_no, format!("bad feature index `{idx_str}`: {e}")))?;
        if idx as usize >= num_features {
            return Err(Error::parse(
                line_no,
                format!("feature index {idx} out of range (< {num_features})"),
            ));
        }
        let value: S = val_str
            .parse()
            .map_err(|e| Error::parse(line_no, format!("bad feature value `{val_str}`: {e}")))?;
        if !value.is_finite() {
            return Err(Error::parse(
                line_no,
                format!("feature value `{val_str}` is not finite"),
            ));
        }
        // Explicit zeros carry no information; drop them so the in-memory
        // invariant (non-zero values) holds.
        if value != S::zero() {
            features.push((idx, value));
        }
    }
    features.sort_unstable_by_key(|&(idx, _)| idx);
    for pair in features.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::parse(
                line_no,
                format!("duplicate feature index {}", pair[0].0),
            ));
        }
    }
    Ok(SparseExample { labels, features })
}

/// Serialize a dataset in the benchmark text format. `parse_xmc` of the
/// output reproduces the input exactly; values are written with full
/// round-trip precision.
pub fn write_xmc<S: Scalar, W: Write>(dataset: &SparseDataset<S>, writer: &mut W) -> Result<()> {
    writeln!(
        writer,
        "{} {} {}",
        dataset.num_points(),
        dataset.num_features(),
        dataset.num_labels()
    )?;
    for example in dataset.examples() {
        let mut line = String::new();
        for (i, label) in example.labels.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&label.to_string());
        }
        if example.labels.is_empty() && !example.features.is_empty() {
            // Leading space marks an empty label list.
            line.push(' ');
            for (i, &(idx, value)) in example.features.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format!("{idx}:{value}"));
            }
        } else {
            for &(idx, value) in &example.features {
                line.push_str(&format!(" {idx}:{value}"));
            }
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Result of fitting `n_(r) = n_(1) * r^-beta` to the frequency-ranked
/// label counts by least squares in log-log space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit<S> {
    /// Fitted count of the most frequent label.
    pub n1: S,
    /// Power-law exponent.
    pub beta: S,
    /// Coefficient of determination of the log-log regression.
    pub r2: S,
}

/// Fit a power law to label frequencies. Counts are sorted in decreasing
/// order to obtain `n_(r)`; only ranks with positive counts enter the fit,
/// and at least two such ranks are required.
pub fn power_law_fit<S: Scalar>(freqs: &LabelFrequencies) -> Result<PowerLawFit<S>> {
    let mut sorted: Vec<usize> = freqs.counts.iter().copied().filter(|&c| c > 0).collect();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    if sorted.len() < 2 {
        return Err(Error::Fit(format!(
            "power-law fit needs at least 2 labels with positive counts, got {}",
            sorted.len()
        )));
    }

    // Least squares of ln n_(r) on ln r.
    let n = sorted.len() as f64;
    let points: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, &count)| (((i + 1) as f64).ln(), (count as f64).ln()))
        .collect();
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &points {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    // A constant sequence is fitted perfectly by the zero slope.
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(PowerLawFit {
        n1: S::cast(intercept.exp()),
        beta: S::cast(-slope),
        r2: S::cast(r2),
    })
}
