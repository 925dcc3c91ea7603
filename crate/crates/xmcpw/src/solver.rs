//! Second-order solver for the per-label binary subproblem.
//!
//! Each label's classifier minimizes
//!
//! ```text
//! ||w||^2 + c_pos * sum_{i in positives} loss(+1, w.x_i)
//!        + c_neg * sum_{i in negatives} loss(-1, w.x_i)
//! ```
//!
//! where the loss is either the squared hinge `[1 - z s]_+^2` or the
//! logistic loss `ln(1 + exp(-z s))`. Both objectives are convex with a
//! (generalized) Hessian of the form `2 I + X^T D X`, which makes them a
//! good fit for a trust-region Newton method with conjugate-gradient inner
//! solves; the Hessian is only ever touched through Hessian-vector
//! products over the sparse rows.
//!
//! The solver is fully deterministic: a fixed start at `w = 0` and
//! sequential accumulation over examples yield bitwise-reproducible
//! results.

use crate::data::SparseDataset;
use crate::error::{Error, Result};
use crate::scalar::{positive_part, Scalar};

/// Margin loss minimized by the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverLoss {
    /// `[1 - z s]_+^2`; the default.
    SquaredHinge,
    /// `ln(1 + exp(-z s))`, the weighted cross-entropy analogue on scores.
    Logistic,
}

impl SolverLoss {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sqhinge" | "squared-hinge" | "squaredhinge" => Ok(SolverLoss::SquaredHinge),
            "logistic" | "log" => Ok(SolverLoss::Logistic),
            other => Err(Error::Config(format!(
                "unknown solver loss `{other}` (expected `sqhinge` or `logistic`)"
            ))),
        }
    }
}

/// A single label's weighted binary problem over a shared feature matrix.
#[derive(Debug)]
pub struct BinaryProblem<'a, S> {
    features: &'a SparseDataset<S>,
    /// `+1` for examples carrying the label, `-1` otherwise.
    signs: Vec<i8>,
    c_pos: S,
    c_neg: S,
    loss: SolverLoss,
}

impl<'a, S: Scalar> BinaryProblem<'a, S> {
    /// Requires `signs.len()` to match the example count, `c_pos >= 0` and
    /// `c_neg > 0`.
    pub fn new(
        features: &'a SparseDataset<S>,
        signs: Vec<i8>,
        c_pos: S,
        c_neg: S,
        loss: SolverLoss,
    ) -> Result<Self> {
        if signs.len() != features.num_points() {
            return Err(Error::Dimension(format!(
                "signs length {} != example count {}",
                signs.len(),
                features.num_points()
            )));
        }
        if signs.iter().any(|&z| z != 1 && z != -1) {
            return Err(Error::Domain("signs must be +1 or -1".into()));
        }
        if !c_pos.is_finite() || !c_neg.is_finite() || c_pos < S::zero() || c_neg <= S::zero()
        {
            return Err(Error::Domain(format!(
                "need c_pos >= 0 and c_neg > 0, got {c_pos} and {c_neg}"
            )));
        }
        Ok(BinaryProblem {
            features,
            signs,
            c_pos,
            c_neg,
            loss,
        })
    }

    pub fn num_features(&self) -> usize {
        self.features.num_features()
    }

    pub fn num_examples(&self) -> usize {
        self.features.num_points()
    }

    #[inline]
    fn cost(&self, sign: i8) -> S {
        if sign > 0 {
            self.c_pos
        } else {
            self.c_neg
        }
    }

    /// `w . x_i` for every example.
    fn scores(&self, w: &[S]) -> Vec<S> {
        self.features.examples().iter().map(|e| e.dot(w)).collect()
    }

    fn objective_from_scores(&self, w: &[S], scores: &[S]) -> S {
        let mut value = w.iter().map(|&x| x * x).fold(S::zero(), |a, b| a + b);
        for (i, &s) in scores.iter().enumerate() {
            let z: S = if self.signs[i] > 0 { S::one() } else { -S::one() };
            let t = z * s;
            let term = match self.loss {
                SolverLoss::SquaredHinge => {
                    let m = positive_part(S::one() - t);
                    m * m
                }
                SolverLoss::Logistic => log1p_exp_neg(t),
            };
            value += self.cost(self.signs[i]) * term;
        }
        value
    }

    /// Objective value at `w`.
    pub fn objective(&self, w: &[S]) -> Result<S> {
        self.check_dim(w)?;
        Ok(self.objective_from_scores(w, &self.scores(w)))
    }

    fn gradient_from_scores(&self, w: &[S], scores: &[S]) -> WeightVector<S> {
        let two = S::cast(2.0);
        let mut grad: Vec<S> = w.iter().map(|&x| two * x).collect();
        for (i, example) in self.features.examples().iter().enumerate() {
            let z: S = if self.signs[i] > 0 { S::one() } else { -S::one() };
            let t = z * scores[i];
            // d loss / d score
            let slope = match self.loss {
                SolverLoss::SquaredHinge => {
                    if t < S::one() {
                        -two * z * (S::one() - t)
                    } else {
                        continue;
                    }
                }
                SolverLoss::Logistic => -z * sigmoid(-t),
            };
            let coeff = self.cost(self.signs[i]) * slope;
            for &(idx, value) in &example.features {
                grad[idx as usize] += coeff * value;
            }
        }
        grad
    }

    /// Exact gradient of the objective at `w`.
    pub fn gradient(&self, w: &[S]) -> Result<WeightVector<S>> {
        self.check_dim(w)?;
        Ok(self.gradient_from_scores(w, &self.scores(w)))
    }

    /// Per-example curvature coefficients of the (generalized) Hessian
    /// `2 I + X^T D X` at the current scores.
    fn curvature(&self, scores: &[S]) -> Vec<S> {
        let two = S::cast(2.0);
        scores
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let z: S = if self.signs[i] > 0 { S::one() } else { -S::one() };
                let t = z * s;
                match self.loss {
                    SolverLoss::SquaredHinge => {
                        if t < S::one() {
                            two * self.cost(self.signs[i])
                        } else {
                            S::zero()
                        }
                    }
                    SolverLoss::Logistic => {
                        let sig = sigmoid(t);
                        self.cost(self.signs[i]) * sig * (S::one() - sig)
                    }
                }
            })
            .collect()
    }

    /// `(2 I + X^T D X) v` without materializing the Hessian.
    fn hessian_vec(&self, curvature: &[S], v: &[S]) -> Vec<S> {
        let two = S::cast(2.0);
        let mut out: Vec<S> = v.iter().map(|&x| two * x).collect();
        for (i, example) in self.features.examples().iter().enumerate() {
            let d = curvature[i];
            if d == S::zero() {
                continue;
            }
            let xv = example.dot(v);
            let coeff = d * xv;
            for &(idx, value) in &example.features {
                out[idx as usize] += coeff * value;
            }
        }
        out
    }

    fn check_dim(&self, w: &[S]) -> Result<()> {
        if w.len() != self.num_features() {
            return Err(Error::Dimension(format!(
                "weight vector length {} != feature count {}",
                w.len(),
                self.num_features()
            )));
        }
        Ok(())
    }
}

/// Stopping tolerance and iteration budget for [`solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<S> {
    /// Relative gradient-norm stop:
    /// `||g(w)|| <= tolerance * max(1, ||g(0)||)`.
    pub tolerance: S,
    /// Cap on outer trust-region iterations.
    pub max_outer_iterations: usize,
    /// Cap on conjugate-gradient iterations per outer step.
    pub max_cg_iterations: usize,
}

impl<S: Scalar> Default for SolverConfig<S> {
    fn default() -> Self {
        SolverConfig {
            tolerance: S::cast(1e-3),
            max_outer_iterations: 100,
            max_cg_iterations: 50,
        }
    }
}

impl<S: Scalar> SolverConfig<S> {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance <= S::zero() {
            return Err(Error::Config(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_outer_iterations == 0 || self.max_cg_iterations == 0 {
            return Err(Error::Config("iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense per-feature weights; the bias is the last coordinate when the
/// dataset was augmented.
pub type WeightVector<S> = Vec<S>;

/// Outcome of a [`solve`] call.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult<S> {
    /// Final (best) iterate.
    pub weights: WeightVector<S>,
    /// Whether the gradient-norm stop was reached within the budget.
    pub converged: bool,
    /// Outer iterations consumed.
    pub iterations: usize,
    /// Gradient norm at the returned iterate.
    pub gradient_norm: S,
}

/// Minimize the binary objective from `w = 0` by trust-region Newton-CG.
///
/// Deterministic given the problem and config. On budget exhaustion the
/// best iterate found is returned with `converged = false`; the objective
/// at the returned point never exceeds the value at `w = 0`.
pub fn solve<S: Scalar>(problem: &BinaryProblem<'_, S>, config: &SolverConfig<S>) -> SolveResult<S> {
    debug_assert!(config.validate().is_ok());
    let n = problem.num_features();
    // Step acceptance and radius-update constants of the standard
    // trust-region Newton scheme.
    let eta0 = S::cast(1e-4);
    let eta1 = S::cast(0.25);
    let eta2 = S::cast(0.75);
    let sigma1 = S::cast(0.25);
    let sigma2 = S::cast(0.5);
    let sigma3 = S::cast(4.0);

    let mut w = vec![S::zero(); n];
    let mut scores = problem.scores(&w);
    let mut f = problem.objective_from_scores(&w, &scores);
    let mut grad = problem.gradient_from_scores(&w, &scores);
    let gnorm0 = norm(&grad);
    let stop = config.tolerance * S::one().max(gnorm0);
    let mut gnorm = gnorm0;
    let mut delta = gnorm0;

    let mut iterations = 0usize;
    let mut converged = gnorm <= stop;
    while !converged && iterations < config.max_outer_iterations {
        iterations += 1;
        let curvature = problem.curvature(&scores);
        let (step, residual) = conjugate_gradient_step(
            problem,
            &curvature,
            &grad,
            delta,
            config.max_cg_iterations,
        );

        let w_new: Vec<S> = w.iter().zip(&step).map(|(&a, &b)| a + b).collect();
        let scores_new = problem.scores(&w_new);
        let f_new = problem.objective_from_scores(&w_new, &scores_new);

        let gs = dot(&grad, &step);
        // Predicted decrease of the quadratic model; `residual` is
        // `-g - H s`, so `s.r = -s.g - s.H.s`.
        let predicted = -(gs - dot(&step, &residual)) / S::cast(2.0);
        let actual = f - f_new;
        let step_norm = norm(&step);

        if iterations == 1 {
            delta = delta.min(step_norm);
        }
        let denom = f_new - f - gs;
        let alpha = if denom <= S::zero() {
            sigma3
        } else {
            sigma1.max(-(gs / denom) / S::cast(2.0))
        };
        if actual < eta0 * predicted {
            delta = (alpha.max(sigma1) * step_norm).min(sigma2 * delta);
        } else if actual < eta1 * predicted {
            delta = (sigma1 * delta).max((alpha * step_norm).min(sigma2 * delta));
        } else if actual < eta2 * predicted {
            delta = (sigma1 * delta).max((alpha * step_norm).min(sigma3 * delta));
        } else {
            delta = delta.max((alpha * step_norm).min(sigma3 * delta));
        }

        if actual > eta0 * predicted {
            w = w_new;
            scores = scores_new;
            f = f_new;
            grad = problem.gradient_from_scores(&w, &scores);
            gnorm = norm(&grad);
            if gnorm <= stop {
                converged = true;
            }
        } else if actual.abs() <= S::cast(1e-12) * f.abs().max(S::one())
            && predicted.abs() <= S::cast(1e-12) * f.abs().max(S::one())
        {
            // Numeric floor: neither the model nor the objective can move.
            break;
        }
    }

    SolveResult {
        weights: w,
        converged,
        iterations,
        gradient_norm: gnorm,
    }
}

/// Approximately solve `H s = -g` within the trust radius by conjugate
/// gradients, following the step to the boundary when it would leave the
/// region. Returns the step and the final residual `-g - H s`.
fn conjugate_gradient_step<S: Scalar>(
    problem: &BinaryProblem<'_, S>,
    curvature: &[S],
    grad: &[S],
    delta: S,
    max_cg: usize,
) -> (Vec<S>, Vec<S>) {
    let n = grad.len();
    let mut step = vec![S::zero(); n];
    let mut residual: Vec<S> = grad.iter().map(|&g| -g).collect();
    let mut direction = residual.clone();
    let cg_tol = S::cast(0.1) * norm(grad);
    let mut rr = dot(&residual, &residual);

    for _ in 0..max_cg {
        if norm(&residual) <= cg_tol {
            break;
        }
        let h_dir = problem.hessian_vec(curvature, &direction);
        let dhd = dot(&direction, &h_dir);
        // The regularizer keeps the Hessian positive definite; this guard
        // only trips on numeric degeneracies.
        if dhd <= S::zero() {
            let alpha = boundary_intersection(&step, &direction, delta);
            axpy(alpha, &direction, &mut step);
            axpy(-alpha, &h_dir, &mut residual);
            break;
        }
        let alpha = rr / dhd;
        axpy(alpha, &direction, &mut step);
        if norm(&step) > delta {
            // Undo, then advance exactly to the trust-region boundary.
            axpy(-alpha, &direction, &mut step);
            let alpha = boundary_intersection(&step, &direction, delta);
            axpy(alpha, &direction, &mut step);
            axpy(-alpha, &h_dir, &mut residual);
            break;
        }
        axpy(-alpha, &h_dir, &mut residual);
        let rr_new = dot(&residual, &residual);
        let beta = rr_new / rr;
        for (d, &r) in direction.iter_mut().zip(&residual) {
            *d = r + beta * *d;
        }
        rr = rr_new;
    }
    (step, residual)
}

/// Positive root of `||s + alpha d|| = delta`.
fn boundary_intersection<S: Scalar>(step: &[S], direction: &[S], delta: S) -> S {
    let sd = dot(step, direction);
    let ss = dot(step, step);
    let dd = dot(direction, direction);
    let radicand = sd * sd + dd * (delta * delta - ss);
    let root = radicand.max(S::zero()).sqrt();
    if sd >= S::zero() {
        (delta * delta - ss) / (sd + root)
    } else {
        (root - sd) / dd
    }
}

#[inline]
fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).fold(S::zero(), |acc, v| acc + v)
}

#[inline]
fn norm<S: Scalar>(a: &[S]) -> S {
    dot(a, a).sqrt()
}

#[inline]
fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable `ln(1 + exp(-t))`.
#[inline]
fn log1p_exp_neg<S: Scalar>(t: S) -> S {
    if t >= S::zero() {
        (-t).exp().ln_1p()
    } else {
        -t + t.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<S: Scalar>(t: S) -> S {
    if t >= S::zero() {
        S::one() / (S::one() + (-t).exp())
    } else {
        let e = t.exp();
        e / (S::one() + e)
    }
}
