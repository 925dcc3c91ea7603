//! One-vs-rest training, model persistence and top-k prediction.
//!
//! Training solves one weighted binary problem per label over the shared
//! feature matrix. The positive-class cost of label `l` is
//! `global_cost * positive_weight(scheme, p_l)` and the negative-class cost
//! is `global_cost`; with all propensities at 1 under the `Theory` scheme
//! this reduces to the plain unweighted one-vs-rest objective. Labels are
//! independent, so they are trained in parallel on a work-stealing pool;
//! each label writes only its own row, which keeps the result bitwise
//! identical across thread counts.

use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::data::SparseDataset;
use crate::error::{Error, Result};
use crate::loss::{positive_weight, PropensityScore, WeightScheme};
use crate::propensity::PropensityModel;
use crate::scalar::Scalar;
use crate::solver::{solve, BinaryProblem, SolverConfig, SolverLoss};

/// One label's sparse weight row: `(feature index, weight)` pairs.
type SparseRow<S> = Vec<(u32, S)>;

/// Options for [`train`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<S> {
    pub scheme: WeightScheme,
    pub loss: SolverLoss,
    pub solver: SolverConfig<S>,
    /// Weights with `|value| <= prune_threshold` are dropped from the model.
    pub prune_threshold: S,
    pub thread_count: usize,
    /// Multiplies both class costs; sweeps the loss/regularizer trade-off.
    pub global_cost: S,
}

impl<S: Scalar> Default for TrainConfig<S> {
    fn default() -> Self {
        TrainConfig {
            scheme: WeightScheme::Empirical,
            loss: SolverLoss::SquaredHinge,
            solver: SolverConfig::default(),
            prune_threshold: S::cast(0.01),
            thread_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            global_cost: S::one(),
        }
    }
}

impl<S: Scalar> TrainConfig<S> {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.prune_threshold.is_nan() || self.prune_threshold < S::zero() {
            return Err(Error::Config(format!(
                "prune threshold must be non-negative, got {}",
                self.prune_threshold
            )));
        }
        if self.thread_count == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        if !self.global_cost.is_finite() || self.global_cost <= S::zero() {
            return Err(Error::Config(format!(
                "global cost must be positive, got {}",
                self.global_cost
            )));
        }
        Ok(())
    }
}

/// A label whose subproblem hit the iteration cap.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceWarning<S> {
    pub label: u32,
    pub gradient_norm: S,
}

/// Training provenance kept with the in-memory model; not persisted by
/// [`OvrModel::save`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta<S> {
    pub scheme: Option<WeightScheme>,
    pub prune_threshold: Option<S>,
    /// `(A, B)` of the propensity model, when it was an empirical fit.
    pub propensity_ab: Option<(S, S)>,
    pub warnings: Vec<ConvergenceWarning<S>>,
}

impl<S> Default for TrainMeta<S> {
    fn default() -> Self {
        TrainMeta {
            scheme: None,
            prune_threshold: None,
            propensity_ab: None,
            warnings: Vec::new(),
        }
    }
}

/// Per-label sparse weight rows plus the dimensions they live in.
#[derive(Debug, Clone, PartialEq)]
pub struct OvrModel<S> {
    num_features: usize,
    num_labels: usize,
    /// Bias value when the feature space was augmented; the bias weight
    /// itself is the last coordinate of each row.
    bias: Option<S>,
    rows: Vec<Vec<(u32, S)>>,
    meta: TrainMeta<S>,
}

impl<S: Scalar> OvrModel<S> {
    /// Assemble a model from raw rows, validating index order and range.
    pub fn from_rows(
        num_features: usize,
        num_labels: usize,
        bias: Option<S>,
        rows: Vec<Vec<(u32, S)>>,
    ) -> Result<Self> {
        if rows.len() != num_labels {
            return Err(Error::Dimension(format!(
                "{} rows for {} labels",
                rows.len(),
                num_labels
            )));
        }
        for (label, row) in rows.iter().enumerate() {
            for pair in row.windows(2) {
                if pair[0].0 >= pair[1].0 {
                    return Err(Error::Domain(format!(
                        "row {label}: weight indices not strictly increasing"
                    )));
                }
            }
            for &(idx, value) in row {
                if idx as usize >= num_features {
                    return Err(Error::Domain(format!(
                        "row {label}: weight index {idx} out of range (< {num_features})"
                    )));
                }
                if !value.is_finite() {
                    return Err(Error::Domain(format!(
                        "row {label}: non-finite weight at index {idx}"
                    )));
                }
            }
        }
        Ok(OvrModel {
            num_features,
            num_labels,
            bias,
            rows,
            meta: TrainMeta::default(),
        })
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn bias(&self) -> Option<S> {
        self.bias
    }

    pub fn rows(&self) -> &[Vec<(u32, S)>] {
        &self.rows
    }

    pub fn meta(&self) -> &TrainMeta<S> {
        &self.meta
    }

    /// Total number of stored weights.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Drop every weight with `|value| <= threshold`. Idempotent.
    pub fn prune(&mut self, threshold: S) -> Result<()> {
        if threshold.is_nan() || threshold < S::zero() {
            return Err(Error::Config(format!(
                "prune threshold must be non-negative, got {threshold}"
            )));
        }
        for row in &mut self.rows {
            row.retain(|&(_, value)| value.abs() > threshold);
        }
        Ok(())
    }

    /// Serialize as text: a header
    /// `xmcpw 1 num_features num_labels bias_value` followed by one line
    /// per label, `label nnz idx:val idx:val ...`. A model without a bias
    /// writes `0` in the bias slot.
    pub fn save<W: Write>(&self, writer: &mut W) -> Result<()> {
        let bias = self.bias.unwrap_or_else(S::zero);
        writeln!(
            writer,
            "xmcpw 1 {} {} {}",
            self.num_features, self.num_labels, bias
        )?;
        for (label, row) in self.rows.iter().enumerate() {
            let mut line = format!("{label} {}", row.len());
            for &(idx, value) in row {
                line.push_str(&format!(" {idx}:{value}"));
            }
            writeln!(writer, "{line}")?;
        }
        Ok(())
    }

    /// Parse a model saved by [`OvrModel::save`]. Errors carry the 1-based
    /// line number.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(1, "missing model header"))?
            .map_err(Error::Io)?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 || fields[0] != "xmcpw" {
            return Err(Error::parse(1, "expected `xmcpw 1 num_features num_labels bias`"));
        }
        if fields[1] != "1" {
            return Err(Error::parse(
                1,
                format!("unsupported model version `{}`", fields[1]),
            ));
        }
        let num_features: usize = fields[2]
            .parse()
            .map_err(|e| Error::parse(1, format!("bad feature count: {e}")))?;
        let num_labels: usize = fields[3]
            .parse()
            .map_err(|e| Error::parse(1, format!("bad label count: {e}")))?;
        let bias_raw: S = fields[4]
            .parse()
            .map_err(|e| Error::parse(1, format!("bad bias value: {e}")))?;
        let bias = if bias_raw == S::zero() { None } else { Some(bias_raw) };

        let mut rows: Vec<Vec<(u32, S)>> = vec![Vec::new(); num_labels];
        let mut seen = vec![false; num_labels];
        for (offset, line) in lines.enumerate() {
            let line_no = offset + 2;
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let label: usize = parts
                .next()
                .ok_or_else(|| Error::parse(line_no, "empty row line"))?
                .parse()
                .map_err(|e| Error::parse(line_no, format!("bad label index: {e}")))?;
            if label >= num_labels {
                return Err(Error::parse(
                    line_no,
                    format!("label {label} out of range (< {num_labels})"),
                ));
            }
            if seen[label] {
                return Err(Error::parse(line_no, format!("duplicate row for label {label}")));
            }
            seen[label] = true;
            let nnz: usize = parts
                .next()
                .ok_or_else(|| Error::parse(line_no, "missing nnz field"))?
                .parse()
                .map_err(|e| Error::parse(line_no, format!("bad nnz: {e}")))?;
            let mut row = Vec::with_capacity(nnz);
            for _ in 0..nnz {
                let token = parts
                    .next()
                    .ok_or_else(|| Error::parse(line_no, "fewer weight pairs than nnz"))?;
                let (idx_str, val_str) = token.split_once(':').ok_or_else(|| {
                    Error::parse(line_no, format!("expected `index:value`, got `{token}`"))
                })?;
                let idx: u32 = idx_str
                    .parse()
                    .map_err(|e| Error::parse(line_no, format!("bad weight index: {e}")))?;
                let value: S = val_str
                    .parse()
                    .map_err(|e| Error::parse(line_no, format!("bad weight value: {e}")))?;
                row.push((idx, value));
            }
            if parts.next().is_some() {
                return Err(Error::parse(line_no, "more weight pairs than nnz"));
            }
            rows[label] = row;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Parse {
                line: num_labels + 1,
                message: format!("missing row for label {missing}"),
            });
        }
        OvrModel::from_rows(num_features, num_labels, bias, rows)
    }
}

/// Train a one-vs-rest model.
///
/// The dataset must already be preprocessed (normalized / bias-augmented)
/// as desired; `propensities` must cover every label. Solver warnings for
/// labels that hit the iteration cap are collected in the model metadata.
pub fn train<S: Scalar>(
    dataset: &SparseDataset<S>,
    propensities: &PropensityModel<S>,
    config: &TrainConfig<S>,
) -> Result<OvrModel<S>> {
    config.validate()?;
    if propensities.num_labels() != dataset.num_labels() {
        return Err(Error::Dimension(format!(
            "propensity vector covers {} labels, dataset has {}",
            propensities.num_labels(),
            dataset.num_labels()
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.thread_count)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let results: Vec<(SparseRow<S>, Option<ConvergenceWarning<S>>)> = pool.install(|| {
        (0..dataset.num_labels() as u32)
            .into_par_iter()
            .map(|label| train_label(dataset, propensities.get(label as usize), label, config))
            .collect()
    });

    let mut rows = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for (row, warning) in results {
        rows.push(row);
        warnings.extend(warning);
    }

    let mut model = OvrModel::from_rows(
        dataset.num_features(),
        dataset.num_labels(),
        dataset.bias(),
        rows,
    )?;
    model.meta = TrainMeta {
        scheme: Some(config.scheme),
        prune_threshold: Some(config.prune_threshold),
        propensity_ab: propensities.params().map(|p| (p.a(), p.b())),
        warnings,
    };
    Ok(model)
}

fn train_label<S: Scalar>(
    dataset: &SparseDataset<S>,
    propensity: PropensityScore<S>,
    label: u32,
    config: &TrainConfig<S>,
) -> (SparseRow<S>, Option<ConvergenceWarning<S>>) {
    let signs: Vec<i8> = dataset
        .examples()
        .iter()
        .map(|e| if e.has_label(label) { 1 } else { -1 })
        .collect();
    let c_pos = config.global_cost * positive_weight(config.scheme, propensity);
    let c_neg = config.global_cost;
    let problem = BinaryProblem::new(dataset, signs, c_pos, c_neg, config.loss)
        .expect("per-label problem construction cannot fail on a valid dataset");
    let result = solve(&problem, &config.solver);
    let row: Vec<(u32, S)> = result
        .weights
        .iter()
        .enumerate()
        .filter(|&(_, &w)| w.abs() > config.prune_threshold)
        .map(|(idx, &w)| (idx as u32, w))
        .collect();
    let warning = (!result.converged).then_some(ConvergenceWarning {
        label,
        gradient_norm: result.gradient_norm,
    });
    (row, warning)
}

/// Per-example top-k predictions: `(label, score)` pairs in descending
/// score order, ties broken by ascending label index.
#[derive(Debug, Clone, PartialEq)]
pub struct TopK<S> {
    pub k: usize,
    pub rows: Vec<Vec<(u32, S)>>,
}

/// Score a dataset against a model and keep the top `k` labels per example.
///
/// If the model carries a bias and the dataset does not, the bias feature
/// is appended on the fly; otherwise the feature spaces must line up. When
/// `k` exceeds the label count, all labels are returned.
pub fn predict_topk<S: Scalar>(
    model: &OvrModel<S>,
    dataset: &SparseDataset<S>,
    k: usize,
) -> Result<TopK<S>> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let auto_bias = match (model.bias(), dataset.num_features()) {
        (_, d) if d == model.num_features() => None,
        (Some(b), d) if d + 1 == model.num_features() => Some(b),
        _ => {
            return Err(Error::Dimension(format!(
                "dataset has {} features, model expects {}{}",
                dataset.num_features(),
                model.num_features(),
                if model.bias().is_some() { " (with bias)" } else { "" }
            )));
        }
    };

    // Feature-major view of the model: weights[feature] -> (label, value).
    let mut columns: Vec<Vec<(u32, S)>> = vec![Vec::new(); model.num_features()];
    for (label, row) in model.rows().iter().enumerate() {
        for &(idx, value) in row {
            columns[idx as usize].push((label as u32, value));
        }
    }

    let k_eff = k.min(model.num_labels());
    let rows: Vec<Vec<(u32, S)>> = dataset
        .examples()
        .par_iter()
        .map(|example| {
            let mut scores = vec![S::zero(); model.num_labels()];
            for &(idx, value) in &example.features {
                for &(label, weight) in &columns[idx as usize] {
                    scores[label as usize] += value * weight;
                }
            }
            if let Some(bias) = auto_bias {
                for &(label, weight) in &columns[model.num_features() - 1] {
                    scores[label as usize] += bias * weight;
                }
            }
            top_k_of_scores(&scores, k_eff)
        })
        .collect();

    Ok(TopK { k, rows })
}

/// Select the `k` best `(label, score)` pairs: descending score,
/// ascending label on ties.
pub fn top_k_of_scores<S: Scalar>(scores: &[S], k: usize) -> Vec<(u32, S)> {
    let mut order: Vec<u32> = (0..scores.len() as u32).collect();
    let k = k.min(scores.len());
    let compare = |&a: &u32, &b: &u32| {
        scores[b as usize]
            .partial_cmp(&scores[a as usize])
            .expect("scores are finite")
            .then(a.cmp(&b))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k, compare);
        order.truncate(k);
    }
    order.sort_unstable_by(compare);
    order
        .into_iter()
        .map(|label| (label, scores[label as usize]))
        .collect()
}
