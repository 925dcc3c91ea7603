//! Pointwise binary losses: plain, unbiased under missing labels, and
//! convex re-weighted variants.
//!
//! The observation model is one-sided: a truly relevant label is observed
//! with probability `p` (its propensity) and never observed spuriously.
//! Under this model any loss that decomposes into a positive part
//! `l*_+(prediction)` and a negative part `l*_-(prediction)` admits an
//! unbiased estimate from the observed labels alone: the negative part is
//! kept and the positive part is replaced by
//!
//! ```text
//! l_+(v) = (l*_+(v) + (p - 1) * l*_-(v)) / p
//! ```
//!
//! For hinge-style losses the unbiased form loses convexity, so this module
//! also provides the convex re-weighted alternatives that upper-bound the
//! (shifted) unbiased 0-1 loss: the positive class is weighted by
//! `2/p - 1` while the negative class keeps weight 1.

use crate::error::{Error, Result};
use crate::scalar::{positive_part, Scalar};

/// Probability that a truly relevant label is observed; strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropensityScore<S>(S);

impl<S: Scalar> PropensityScore<S> {
    /// Requires `0 < p <= 1`.
    pub fn new(p: S) -> Result<Self> {
        if !(p > S::zero() && p <= S::one()) || !p.is_finite() {
            return Err(Error::Domain(format!(
                "propensity must be in (0, 1], got {p}"
            )));
        }
        Ok(PropensityScore(p))
    }

    /// Propensity 1: every relevant label is observed.
    pub fn one() -> Self {
        PropensityScore(S::one())
    }

    #[inline]
    pub fn get(self) -> S {
        self.0
    }

    /// `1 / p`.
    #[inline]
    pub fn inverse(self) -> S {
        S::one() / self.0
    }
}

/// Class membership on the `{-1, +1}` scale used by margin losses;
/// `z = 2y - 1` for a binary label `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignedLabel {
    Positive,
    Negative,
}

impl SignedLabel {
    #[inline]
    pub fn from_binary(y: bool) -> Self {
        if y {
            SignedLabel::Positive
        } else {
            SignedLabel::Negative
        }
    }

    /// `+1` or `-1`.
    #[inline]
    pub fn value<S: Scalar>(self) -> S {
        match self {
            SignedLabel::Positive => S::one(),
            SignedLabel::Negative => -S::one(),
        }
    }
}

/// The loss families with a known decomposition over binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossFamily {
    /// `(y - v)^2` on predictions `v` (probabilities or scores).
    SquaredError,
    /// Misclassification indicator on a raw score; `v >= 0` predicts positive.
    ZeroOne,
    /// `[1 - z v]_+` on a raw score.
    Hinge,
    /// `[1 - z v]_+^2` on a raw score.
    SquaredHinge,
    /// Binary cross-entropy on a probability in `(0, 1)`.
    Bce,
}

impl LossFamily {
    /// Whether the prediction is a raw score compared against a margin
    /// (as opposed to a probability/regression value).
    pub fn is_margin_based(self) -> bool {
        matches!(
            self,
            LossFamily::ZeroOne | LossFamily::Hinge | LossFamily::SquaredHinge
        )
    }

    /// The decomposition `(l*_+(v), l*_-(v))` of the plain loss.
    ///
    /// For margin families `v` is the raw score; for `Bce` it is clamped
    /// into the open unit interval before taking logarithms.
    pub fn plain_parts<S: Scalar>(self, prediction: S) -> (S, S) {
        match self {
            LossFamily::SquaredError => {
                let one = S::one();
                ((one - prediction) * (one - prediction), prediction * prediction)
            }
            LossFamily::ZeroOne => {
                if prediction < S::zero() {
                    (S::one(), S::zero())
                } else {
                    (S::zero(), S::one())
                }
            }
            LossFamily::Hinge => (
                positive_part(S::one() - prediction),
                positive_part(S::one() + prediction),
            ),
            LossFamily::SquaredHinge => {
                let pos = positive_part(S::one() - prediction);
                let neg = positive_part(S::one() + prediction);
                (pos * pos, neg * neg)
            }
            LossFamily::Bce => {
                let v = clamp_unit(prediction);
                (-v.ln(), -(S::one() - v).ln())
            }
        }
    }
}

/// How the propensity enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossVariant {
    /// The original loss; ignores the propensity.
    Plain,
    /// Unbiased estimate of the plain loss under missing labels. For
    /// `ZeroOne` this is the shifted form, which is non-negative and
    /// equivalent for optimization.
    Unbiased,
    /// Convex upper bound of the shifted unbiased 0-1 loss; only defined
    /// for `Hinge`, `SquaredHinge` and `ZeroOne` (where it coincides with
    /// the shifted form).
    ConvexWeighted,
}

/// Margin losses that have a convex re-weighted form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginLoss {
    Hinge,
    SquaredHinge,
}

/// Positive-class weighting scheme for the one-vs-rest trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    /// `C_p = 2/p - 1`: the weight under which the weighted squared hinge
    /// upper-bounds the unbiased 0-1 loss.
    Theory,
    /// `C_p = 1/p - 1`: a variant that shifts extra weight onto rare
    /// labels and works better on long-tailed data.
    Empirical,
}

impl WeightScheme {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "theory" => Ok(WeightScheme::Theory),
            "empirical" => Ok(WeightScheme::Empirical),
            other => Err(Error::Config(format!(
                "unknown weight scheme `{other}` (expected `theory` or `empirical`)"
            ))),
        }
    }
}

/// A fully specified pointwise loss: family, variant and propensity.
///
/// `Plain` specs ignore the propensity; any spec with `p = 1` evaluates
/// identically to its plain counterpart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec<S> {
    family: LossFamily,
    variant: LossVariant,
    p: PropensityScore<S>,
}

impl<S: Scalar> LossSpec<S> {
    /// Rejects `ConvexWeighted` for `SquaredError` and `Bce`: their
    /// unbiased forms are already usable directly (quadratic in the
    /// prediction, respectively convex), so no surrogate exists.
    pub fn new(family: LossFamily, variant: LossVariant, p: PropensityScore<S>) -> Result<Self> {
        if variant == LossVariant::ConvexWeighted
            && matches!(family, LossFamily::SquaredError | LossFamily::Bce)
        {
            return Err(Error::Config(format!(
                "ConvexWeighted is not defined for {family:?}; use Unbiased"
            )));
        }
        Ok(LossSpec { family, variant, p })
    }

    /// The plain loss of `family` (propensity fixed at 1).
    pub fn plain(family: LossFamily) -> Self {
        LossSpec {
            family,
            variant: LossVariant::Plain,
            p: PropensityScore::one(),
        }
    }

    pub fn family(&self) -> LossFamily {
        self.family
    }

    pub fn variant(&self) -> LossVariant {
        self.variant
    }

    pub fn propensity(&self) -> PropensityScore<S> {
        self.p
    }

    /// Evaluate the loss at a binary label and a prediction.
    ///
    /// For margin families the prediction is the raw score and the label is
    /// converted to `z = 2y - 1` internally; for `SquaredError` and `Bce`
    /// the prediction is the regression value / probability.
    pub fn eval(&self, y: bool, prediction: S) -> S {
        let p = self.p;
        match self.variant {
            LossVariant::Plain => {
                let (lp, lm) = self.family.plain_parts(prediction);
                if y {
                    lp
                } else {
                    lm
                }
            }
            LossVariant::Unbiased => match self.family {
                // Shifted by 1/p - 1 relative to the generic transform so
                // the loss stays non-negative; equivalent for optimization.
                LossFamily::ZeroOne => {
                    if y {
                        if prediction < S::zero() {
                            S::cast(2.0) * p.inverse() - S::one()
                        } else {
                            S::zero()
                        }
                    } else if prediction < S::zero() {
                        S::zero()
                    } else {
                        S::one()
                    }
                }
                family => {
                    let (lp, lm) = family.plain_parts(prediction);
                    if y {
                        unbiased_positive_part(lp, lm, p)
                    } else {
                        lm
                    }
                }
            },
            LossVariant::ConvexWeighted => match self.family {
                LossFamily::Hinge => {
                    convex_weighted(MarginLoss::Hinge, SignedLabel::from_binary(y), prediction, p)
                }
                LossFamily::SquaredHinge => convex_weighted(
                    MarginLoss::SquaredHinge,
                    SignedLabel::from_binary(y),
                    prediction,
                    p,
                ),
                // The shifted unbiased form is its own convex-weighted
                // representation: (2/p - 1) on the positive indicator.
                LossFamily::ZeroOne => LossSpec {
                    family: LossFamily::ZeroOne,
                    variant: LossVariant::Unbiased,
                    p,
                }
                .eval(y, prediction),
                LossFamily::SquaredError | LossFamily::Bce => {
                    unreachable!("rejected at construction")
                }
            },
        }
    }
}

/// The generic unbiased correction of the positive part:
/// `(l*_+ + (p - 1) * l*_-) / p`. The negative part is used unchanged by
/// callers.
pub fn unbiased_positive_part<S: Scalar>(
    l_plus_star: S,
    l_minus_star: S,
    p: PropensityScore<S>,
) -> S {
    (l_plus_star + (p.get() - S::one()) * l_minus_star) / p.get()
}

/// Convex re-weighted hinge / squared hinge:
/// `((z (1 - p) + 1) / p) * [1 - z v]_+` (squared for [`MarginLoss::SquaredHinge`]).
///
/// The coefficient is `2/p - 1` for the positive class and exactly 1 for
/// the negative class.
pub fn convex_weighted<S: Scalar>(
    loss: MarginLoss,
    z: SignedLabel,
    z_hat: S,
    p: PropensityScore<S>,
) -> S {
    let zv: S = z.value();
    let coefficient = (zv * (S::one() - p.get()) + S::one()) / p.get();
    let margin = positive_part(S::one() - zv * z_hat);
    match loss {
        MarginLoss::Hinge => coefficient * margin,
        MarginLoss::SquaredHinge => coefficient * margin * margin,
    }
}

/// Positive-class cost for the one-vs-rest objective under `scheme`.
pub fn positive_weight<S: Scalar>(scheme: WeightScheme, p: PropensityScore<S>) -> S {
    match scheme {
        WeightScheme::Theory => S::cast(2.0) * p.inverse() - S::one(),
        WeightScheme::Empirical => p.inverse() - S::one(),
    }
}

/// Unshifted unbiased 0-1 positive part: `1/p` when the score is negative,
/// `1 - 1/p` otherwise. Exactly the generic transform of the 0-1 loss; can
/// be negative, which is why the public variant is the shifted form. The
/// expectation-identity suite uses it as an independent reference.
#[cfg(test)]
pub(crate) fn zero_one_unshifted_positive<S: Scalar>(z_hat: S, p: PropensityScore<S>) -> S {
    if z_hat < S::zero() {
        p.inverse()
    } else {
        S::one() - p.inverse()
    }
}

fn clamp_unit<S: Scalar>(v: S) -> S {
    // 1e-12 collapses to zero distance from 1.0 in f32, so widen the guard
    // to the type's epsilon when necessary.
    let eps = S::cast(1e-12).max(S::epsilon());
    v.max(eps).min(S::one() - eps)
}
