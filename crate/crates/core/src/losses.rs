//! Cross-entropy and squared-error losses with their output-space gradients.
//!
//! These are the two losses whose Bayes-optimal predictors mix linearly, which
//! is what makes the mixture objective concave and its gradients computable in
//! closed form. Classification probabilities are clamped to [`PROB_FLOOR`]
//! before any logarithm so losses stay bounded.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp floor applied to probabilities before logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
    SquaredError,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::SquaredError => "squared_error",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross_entropy" => Ok(LossKind::CrossEntropy),
            "squared_error" => Ok(LossKind::SquaredError),
            other => Err(Error::UnknownName(format!("loss kind '{other}'"))),
        }
    }
}

/// Shape of a prediction, shared by every oracle in a group set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputKind {
    ClassProbs,
    Mass,
    Value,
}

/// A predictor's output at one query point.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictionOutput {
    /// Distribution over m class labels; entries sum to one.
    ClassProbs(Vec<f64>),
    /// Probability the model assigns to an observed outcome. Used for
    /// generative sequence scoring, where the output space is the (huge)
    /// simplex over all sequences and only the observed coordinate is needed.
    Mass(f64),
    /// Regression output (conditional mean).
    Value(Vec<f64>),
}

impl PredictionOutput {
    pub fn kind(&self) -> OutputKind {
        match self {
            PredictionOutput::ClassProbs(_) => OutputKind::ClassProbs,
            PredictionOutput::Mass(_) => OutputKind::Mass,
            PredictionOutput::Value(_) => OutputKind::Value,
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            PredictionOutput::ClassProbs(v) | PredictionOutput::Value(v) => v.len(),
            PredictionOutput::Mass(_) => 1,
        }
    }

    /// Output coordinates as a flat slice.
    pub fn coords(&self) -> &[f64] {
        match self {
            PredictionOutput::ClassProbs(v) | PredictionOutput::Value(v) => v,
            PredictionOutput::Mass(m) => std::slice::from_ref(m),
        }
    }

    pub(crate) fn from_coords(kind: OutputKind, coords: Vec<f64>) -> Self {
        match kind {
            OutputKind::ClassProbs => PredictionOutput::ClassProbs(coords),
            OutputKind::Mass => PredictionOutput::Mass(coords[0]),
            OutputKind::Value => PredictionOutput::Value(coords),
        }
    }

    /// Check well-formedness: finite coordinates, and for classification a
    /// distribution summing to one within 1e-9.
    pub fn validate(&self) -> Result<()> {
        if self.coords().iter().any(|c| !c.is_finite()) {
            return Err(Error::Numeric("prediction has non-finite coordinates".into()));
        }
        match self {
            PredictionOutput::ClassProbs(probs) => {
                if probs.is_empty() {
                    return Err(Error::InvalidDimension("empty class distribution".into()));
                }
                if probs.iter().any(|&p| p < -1e-9) {
                    return Err(Error::InvalidParameter(
                        "class probabilities must be nonnegative".into(),
                    ));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "class probabilities sum to {total}, expected 1"
                    )));
                }
            }
            PredictionOutput::Mass(m) => {
                if *m < 0.0 {
                    return Err(Error::InvalidParameter("mass must be nonnegative".into()));
                }
            }
            PredictionOutput::Value(_) => {}
        }
        Ok(())
    }
}

/// Ground truth paired with a prediction.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// Class label in [0, m).
    Label(usize),
    /// Regression target, same arity as the prediction.
    Value(Vec<f64>),
    /// Generative samples: the realized outcome is the query itself, so a
    /// `Mass` prediction already scores it and no separate label is needed.
    Observed,
}

/// Cross-entropy `−log(o[y])` with the clamped coordinate.
pub fn cross_entropy(output: &PredictionOutput, target: &Target) -> Result<f64> {
    loss_on_coords(LossKind::CrossEntropy, output.kind(), output.coords(), target)
}

/// Squared error Σ_j (o_j − y_j)².
pub fn squared_error(output: &PredictionOutput, target: &Target) -> Result<f64> {
    loss_on_coords(LossKind::SquaredError, output.kind(), output.coords(), target)
}

pub fn loss(kind: LossKind, output: &PredictionOutput, target: &Target) -> Result<f64> {
    loss_on_coords(kind, output.kind(), output.coords(), target)
}

/// Gradient of the loss in the prediction's output coordinates:
/// for cross-entropy `−1/o[y]` at the target index (clamped denominator), zero
/// elsewhere; for squared error 2(o − y).
pub fn loss_output_gradient(
    kind: LossKind,
    output: &PredictionOutput,
    target: &Target,
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; output.arity()];
    loss_gradient_on_coords(kind, output.kind(), output.coords(), target, &mut grad)?;
    Ok(grad)
}

pub(crate) fn loss_on_coords(
    kind: LossKind,
    output_kind: OutputKind,
    coords: &[f64],
    target: &Target,
) -> Result<f64> {
    match kind {
        LossKind::CrossEntropy => match (output_kind, target) {
            (OutputKind::ClassProbs, Target::Label(label)) => {
                if *label >= coords.len() {
                    return Err(Error::InvalidParameter(format!(
                        "label {label} out of range for {} classes",
                        coords.len()
                    )));
                }
                Ok(-coords[*label].max(PROB_FLOOR).ln())
            }
            (OutputKind::Mass, Target::Observed) => Ok(-coords[0].max(PROB_FLOOR).ln()),
            _ => Err(Error::TypeMismatch(
                "cross-entropy needs class probabilities with a label, or a mass \
                 with an observed outcome"
                    .into(),
            )),
        },
        LossKind::SquaredError => match (output_kind, target) {
            (OutputKind::Value, Target::Value(truth)) => {
                if truth.len() != coords.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "prediction arity {} vs target arity {}",
                        coords.len(),
                        truth.len()
                    )));
                }
                Ok(coords
                    .iter()
                    .zip(truth)
                    .map(|(o, y)| (o - y) * (o - y))
                    .sum())
            }
            _ => Err(Error::TypeMismatch(
                "squared error needs a regression output with a value target".into(),
            )),
        },
    }
}

pub(crate) fn loss_gradient_on_coords(
    kind: LossKind,
    output_kind: OutputKind,
    coords: &[f64],
    target: &Target,
    grad: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(grad.len(), coords.len());
    grad.fill(0.0);
    match kind {
        LossKind::CrossEntropy => match (output_kind, target) {
            (OutputKind::ClassProbs, Target::Label(label)) => {
                if *label >= coords.len() {
                    return Err(Error::InvalidParameter(format!(
                        "label {label} out of range for {} classes",
                        coords.len()
                    )));
                }
                grad[*label] = -1.0 / coords[*label].max(PROB_FLOOR);
                Ok(())
            }
            (OutputKind::Mass, Target::Observed) => {
                grad[0] = -1.0 / coords[0].max(PROB_FLOOR);
                Ok(())
            }
            _ => Err(Error::TypeMismatch(
                "cross-entropy needs class probabilities with a label, or a mass \
                 with an observed outcome"
                    .into(),
            )),
        },
        LossKind::SquaredError => match (output_kind, target) {
            (OutputKind::Value, Target::Value(truth)) => {
                if truth.len() != coords.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "prediction arity {} vs target arity {}",
                        coords.len(),
                        truth.len()
                    )));
                }
                for ((g, o), y) in grad.iter_mut().zip(coords).zip(truth) {
                    *g = 2.0 * (o - y);
                }
                Ok(())
            }
            _ => Err(Error::TypeMismatch(
                "squared error needs a regression output with a value target".into(),
            )),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cross_entropy_examples() {
        let o = PredictionOutput::ClassProbs(vec![0.5, 0.5]);
        let ce = cross_entropy(&o, &Target::Label(0)).unwrap();
        assert!((ce - 2.0_f64.ln()).abs() < 1e-12);

        let perfect = PredictionOutput::ClassProbs(vec![1.0, 0.0]);
        assert!(cross_entropy(&perfect, &Target::Label(0)).unwrap().abs() <= 1e-12);

        let quarter = PredictionOutput::ClassProbs(vec![0.25; 4]);
        let ce4 = cross_entropy(&quarter, &Target::Label(3)).unwrap();
        assert!((ce4 - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let o = PredictionOutput::ClassProbs(vec![0.0, 1.0]);
        let ce = cross_entropy(&o, &Target::Label(0)).unwrap();
        assert!((ce + PROB_FLOOR.ln()).abs() < 1e-9);
        assert!(ce.is_finite());
    }

    #[test]
    fn cross_entropy_rejects_bad_inputs() {
        let o = PredictionOutput::ClassProbs(vec![0.5, 0.5]);
        assert!(matches!(
            cross_entropy(&o, &Target::Label(2)),
            Err(Error::InvalidParameter(_))
        ));
        let v = PredictionOutput::Value(vec![0.5]);
        assert!(matches!(
            cross_entropy(&v, &Target::Label(0)),
            Err(Error::TypeMismatch(_))
        ));
    }

    #[test]
    fn squared_error_examples() {
        let o = PredictionOutput::Value(vec![0.45]);
        let se = squared_error(&o, &Target::Value(vec![0.1])).unwrap();
        assert!((se - 0.1225).abs() < 1e-12);

        let same = squared_error(&o, &Target::Value(vec![0.45])).unwrap();
        assert_eq!(same, 0.0);

        let pair = PredictionOutput::Value(vec![1.0, 2.0]);
        let se2 = squared_error(&pair, &Target::Value(vec![0.0, 0.0])).unwrap();
        assert!((se2 - 5.0).abs() < 1e-12);

        assert!(squared_error(&pair, &Target::Value(vec![0.0])).is_err());
    }

    #[test]
    fn gradient_examples() {
        let o = PredictionOutput::ClassProbs(vec![0.5, 0.5]);
        let g = loss_output_gradient(LossKind::CrossEntropy, &o, &Target::Label(0)).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-12);
        assert_eq!(g[1], 0.0);

        let reg = PredictionOutput::Value(vec![0.45]);
        let g = loss_output_gradient(LossKind::SquaredError, &reg, &Target::Value(vec![0.1]))
            .unwrap();
        assert!((g[0] - 0.7).abs() < 1e-12);

        let sure = PredictionOutput::ClassProbs(vec![1.0, 0.0]);
        let g = loss_output_gradient(LossKind::CrossEntropy, &sure, &Target::Label(0)).unwrap();
        assert!((g[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_outputs_score_observed_outcomes() {
        let o = PredictionOutput::Mass(0.25);
        let ce = cross_entropy(&o, &Target::Observed).unwrap();
        assert!((ce - 4.0_f64.ln()).abs() < 1e-12);
        let g = loss_output_gradient(LossKind::CrossEntropy, &o, &Target::Observed).unwrap();
        assert!((g[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn validate_checks_distributions() {
        assert!(PredictionOutput::ClassProbs(vec![0.5, 0.5]).validate().is_ok());
        assert!(PredictionOutput::ClassProbs(vec![0.5, 0.6]).validate().is_err());
        assert!(PredictionOutput::ClassProbs(vec![1.5, -0.5]).validate().is_err());
        assert!(PredictionOutput::Mass(-0.1).validate().is_err());
        assert!(PredictionOutput::Value(vec![f64::NAN]).validate().is_err());
    }

    #[test]
    fn loss_kind_round_trips_names() {
        assert_eq!(LossKind::from_str("cross_entropy").unwrap(), LossKind::CrossEntropy);
        assert_eq!(LossKind::from_str("squared_error").unwrap(), LossKind::SquaredError);
        assert!(LossKind::from_str("hinge").is_err());
        assert_eq!(LossKind::CrossEntropy.to_string(), "cross_entropy");
    }

    /// Central finite difference of the loss in one output coordinate.
    fn loss_coord_derivative(
        kind: LossKind,
        output: &PredictionOutput,
        target: &Target,
        coord: usize,
    ) -> f64 {
        let h = 1e-6;
        let bump = |delta: f64| {
            let mut coords = output.coords().to_vec();
            coords[coord] += delta;
            let bumped = PredictionOutput::from_coords(output.kind(), coords);
            loss(kind, &bumped, target).unwrap()
        };
        (bump(h) - bump(-h)) / (2.0 * h)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng_state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (rng_state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..50 {
            // Interior classification point.
            let p = 0.1 + 0.8 * next();
            let o = PredictionOutput::ClassProbs(vec![p, 1.0 - p]);
            let y = Target::Label(if next() < 0.5 { 0 } else { 1 });
            let g = loss_output_gradient(LossKind::CrossEntropy, &o, &y).unwrap();
            for (j, &analytic) in g.iter().enumerate() {
                let fd = loss_coord_derivative(LossKind::CrossEntropy, &o, &y, j);
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                assert!((analytic - fd).abs() / denom <= 1e-5, "{analytic} vs {fd}");
            }

            // Regression point.
            let o = PredictionOutput::Value(vec![2.0 * next() - 1.0, 2.0 * next() - 1.0]);
            let y = Target::Value(vec![2.0 * next() - 1.0, 2.0 * next() - 1.0]);
            let g = loss_output_gradient(LossKind::SquaredError, &o, &y).unwrap();
            for (j, &analytic) in g.iter().enumerate() {
                let fd = loss_coord_derivative(LossKind::SquaredError, &o, &y, j);
                let denom = analytic.abs().max(fd.abs()).max(1e-6);
                assert!((analytic - fd).abs() / denom <= 1e-5);
            }
        }
    }

    proptest! {
        #[test]
        fn losses_are_convex_in_the_output(
            p1 in 0.05f64..0.95,
            p2 in 0.05f64..0.95,
            alpha in 0.0f64..1.0,
            label in 0usize..2,
            v1 in -2.0f64..2.0,
            v2 in -2.0f64..2.0,
            y in -2.0f64..2.0,
        ) {
            let o1 = PredictionOutput::ClassProbs(vec![p1, 1.0 - p1]);
            let o2 = PredictionOutput::ClassProbs(vec![p2, 1.0 - p2]);
            let mixed = PredictionOutput::ClassProbs(vec![
                alpha * p1 + (1.0 - alpha) * p2,
                alpha * (1.0 - p1) + (1.0 - alpha) * (1.0 - p2),
            ]);
            let t = Target::Label(label);
            let lhs = cross_entropy(&mixed, &t).unwrap();
            let rhs = alpha * cross_entropy(&o1, &t).unwrap()
                + (1.0 - alpha) * cross_entropy(&o2, &t).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);

            let r1 = PredictionOutput::Value(vec![v1]);
            let r2 = PredictionOutput::Value(vec![v2]);
            let rmix = PredictionOutput::Value(vec![alpha * v1 + (1.0 - alpha) * v2]);
            let t = Target::Value(vec![y]);
            let lhs = squared_error(&rmix, &t).unwrap();
            let rhs = alpha * squared_error(&r1, &t).unwrap()
                + (1.0 - alpha) * squared_error(&r2, &t).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn losses_are_nonnegative(
            p in 0.0f64..1.0,
            v in -3.0f64..3.0,
            y in -3.0f64..3.0,
        ) {
            let o = PredictionOutput::ClassProbs(vec![p, 1.0 - p]);
            prop_assert!(cross_entropy(&o, &Target::Label(0)).unwrap() >= 0.0);
            let r = PredictionOutput::Value(vec![v]);
            prop_assert!(squared_error(&r, &Target::Value(vec![y])).unwrap() >= 0.0);
        }
    }
}
