//! Bayes-optimal mixture predictors over a set of per-group oracles.
//!
//! With no covariate shift the mixture predictor is the weighted average
//! `f_λ(x) = Σ_p λ_p f_p(x)`. Under covariate shift each group is reweighed by
//! its covariate density at the query point:
//!
//! ```text
//! f_λ(x) = Σ_p λ_p p(x) f_p(x) / Σ_p λ_p p(x)
//! ```
//!
//! Weight gradients are reported as raw partials ∂f_λ/∂λ_p; the mirror ascent
//! step is invariant to constant shifts, so no tangent projection is applied
//! here.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{OutputKind, PredictionOutput};
use crate::simplex::MixtureWeights;

/// Query point an oracle is evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub enum Covariate {
    /// Continuous covariate (d-dimensional).
    Point(Vec<f64>),
    /// Token sequence. Generative families score the observed sequence itself;
    /// the covariate space proper is a singleton.
    Tokens(Vec<u16>),
}

impl Covariate {
    pub fn scalar(x: f64) -> Self {
        Covariate::Point(vec![x])
    }
}

type PredictFn = dyn Fn(&Covariate) -> PredictionOutput + Send + Sync;
type DensityFn = dyn Fn(&Covariate) -> f64 + Send + Sync;

/// Per-group predictor f_p with an optional covariate density p(x).
///
/// Oracles are immutable after construction and callable concurrently.
#[derive(Clone)]
pub struct GroupOracle {
    predict: Arc<PredictFn>,
    density: Option<Arc<DensityFn>>,
}

impl fmt::Debug for GroupOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GroupOracle")
            .field("has_density", &self.has_density())
            .finish()
    }
}

impl GroupOracle {
    pub fn new(predict: impl Fn(&Covariate) -> PredictionOutput + Send + Sync + 'static) -> Self {
        Self {
            predict: Arc::new(predict),
            density: None,
        }
    }

    pub fn with_density(
        predict: impl Fn(&Covariate) -> PredictionOutput + Send + Sync + 'static,
        density: impl Fn(&Covariate) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            predict: Arc::new(predict),
            density: Some(Arc::new(density)),
        }
    }

    pub fn predict(&self, x: &Covariate) -> PredictionOutput {
        (self.predict)(x)
    }

    pub fn density(&self, x: &Covariate) -> Option<f64> {
        self.density.as_ref().map(|d| d(x))
    }

    pub fn has_density(&self) -> bool {
        self.density.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftMode {
    NoShift,
    CovariateShift,
}

/// The K per-group oracles together with the shift regime they are combined
/// under. Covariate shift requires a density on every oracle.
#[derive(Clone, Debug)]
pub struct GroupOracleSet {
    oracles: Vec<GroupOracle>,
    shift_mode: ShiftMode,
}

impl GroupOracleSet {
    pub fn new(oracles: Vec<GroupOracle>, shift_mode: ShiftMode) -> Result<Self> {
        if oracles.is_empty() {
            return Err(Error::InvalidDimension("oracle set must be non-empty".into()));
        }
        if shift_mode == ShiftMode::CovariateShift
            && oracles.iter().any(|o| !o.has_density())
        {
            return Err(Error::InvalidParameter(
                "covariate shift requires a density on every oracle".into(),
            ));
        }
        Ok(Self { oracles, shift_mode })
    }

    pub fn group_count(&self) -> usize {
        self.oracles.len()
    }

    pub fn shift_mode(&self) -> ShiftMode {
        self.shift_mode
    }

    pub fn oracle(&self, group: usize) -> &GroupOracle {
        &self.oracles[group]
    }

    pub fn oracles(&self) -> &[GroupOracle] {
        &self.oracles
    }

    /// Same oracles under a different shift regime.
    pub fn with_shift_mode(&self, shift_mode: ShiftMode) -> Result<Self> {
        Self::new(self.oracles.clone(), shift_mode)
    }
}

/// Per-group predictions (and densities, in shift mode) at one query point.
pub(crate) struct PointEvaluations {
    pub kind: OutputKind,
    pub arity: usize,
    /// Flattened K × arity prediction coordinates.
    pub preds: Vec<f64>,
    /// K densities when combining under covariate shift.
    pub dens: Option<Vec<f64>>,
}

pub(crate) fn evaluate_point(set: &GroupOracleSet, x: &Covariate) -> Result<PointEvaluations> {
    let k = set.group_count();
    let first = set.oracle(0).predict(x);
    let kind = first.kind();
    let arity = first.arity();
    let mut preds = Vec::with_capacity(k * arity);
    preds.extend_from_slice(first.coords());
    for p in 1..k {
        let out = set.oracle(p).predict(x);
        if out.kind() != kind || out.arity() != arity {
            return Err(Error::TypeMismatch(format!(
                "oracle {p} output does not match oracle 0 (kind/arity {kind:?}/{arity})"
            )));
        }
        preds.extend_from_slice(out.coords());
    }
    if preds.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite oracle prediction at {x:?}"
        )));
    }
    let dens = match set.shift_mode() {
        ShiftMode::NoShift => None,
        ShiftMode::CovariateShift => {
            let mut values = Vec::with_capacity(k);
            for p in 0..k {
                let d = set.oracle(p).density(x).ok_or_else(|| {
                    Error::InvalidParameter(format!("oracle {p} has no density"))
                })?;
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::Numeric(format!(
                        "invalid density {d} from oracle {p} at {x:?}"
                    )));
                }
                values.push(d);
            }
            Some(values)
        }
    };
    Ok(PointEvaluations { kind, arity, preds, dens })
}

/// Raised by the combine kernels; callers attach query context.
pub(crate) enum CombineError {
    ZeroDensity,
}

/// f_λ coordinates from per-group prediction rows.
pub(crate) fn combine_mixture(
    weights: &[f64],
    preds: &[f64],
    arity: usize,
    dens: Option<&[f64]>,
    out: &mut [f64],
) -> std::result::Result<(), CombineError> {
    debug_assert_eq!(preds.len(), weights.len() * arity);
    debug_assert_eq!(out.len(), arity);
    out.fill(0.0);
    match dens {
        None => {
            for (p, &w) in weights.iter().enumerate() {
                let row = &preds[p * arity..(p + 1) * arity];
                for (o, &c) in out.iter_mut().zip(row) {
                    *o += w * c;
                }
            }
        }
        Some(dens) => {
            let denom: f64 = weights.iter().zip(dens).map(|(w, d)| w * d).sum();
            if denom <= 0.0 {
                return Err(CombineError::ZeroDensity);
            }
            for (p, &w) in weights.iter().enumerate() {
                let scale = w * dens[p] / denom;
                let row = &preds[p * arity..(p + 1) * arity];
                for (o, &c) in out.iter_mut().zip(row) {
                    *o += scale * c;
                }
            }
        }
    }
    Ok(())
}

/// ∂f_λ/∂λ_q rows (flattened K × arity) given f_λ's own coordinates.
///
/// No shift: ∂f_λ/∂λ_q = f_q(x). Covariate shift, by the quotient rule:
/// ∂f_λ/∂λ_q = q(x)·(f_q(x) − f_λ(x)) / Σ_p λ_p p(x).
pub(crate) fn combine_mixture_gradient(
    weights: &[f64],
    preds: &[f64],
    arity: usize,
    dens: Option<&[f64]>,
    mixture: &[f64],
    out: &mut [f64],
) -> std::result::Result<(), CombineError> {
    debug_assert_eq!(out.len(), preds.len());
    match dens {
        None => out.copy_from_slice(preds),
        Some(dens) => {
            let denom: f64 = weights.iter().zip(dens).map(|(w, d)| w * d).sum();
            if denom <= 0.0 {
                return Err(CombineError::ZeroDensity);
            }
            for (q, &d) in dens.iter().enumerate() {
                let row = &preds[q * arity..(q + 1) * arity];
                let out_row = &mut out[q * arity..(q + 1) * arity];
                for ((o, &c), &f) in out_row.iter_mut().zip(row).zip(mixture) {
                    *o = d * (c - f) / denom;
                }
            }
        }
    }
    Ok(())
}

fn check_dims(weights: &MixtureWeights, set: &GroupOracleSet) -> Result<()> {
    if weights.len() != set.group_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} oracles",
            weights.len(),
            set.group_count()
        )));
    }
    Ok(())
}

/// The mixture predictor f_λ(x).
pub fn mixture_predict(
    weights: &MixtureWeights,
    set: &GroupOracleSet,
    x: &Covariate,
) -> Result<PredictionOutput> {
    check_dims(weights, set)?;
    let evals = evaluate_point(set, x)?;
    let mut coords = vec![0.0; evals.arity];
    combine_mixture(
        weights.as_slice(),
        &evals.preds,
        evals.arity,
        evals.dens.as_deref(),
        &mut coords,
    )
    .map_err(|CombineError::ZeroDensity| Error::DegenerateDensity(format!("{x:?}")))?;
    Ok(PredictionOutput::from_coords(evals.kind, coords))
}

/// Raw partials ∂f_λ/∂λ_p, one coordinate vector per group.
pub fn mixture_predict_gradient(
    weights: &MixtureWeights,
    set: &GroupOracleSet,
    x: &Covariate,
) -> Result<Vec<Vec<f64>>> {
    check_dims(weights, set)?;
    let evals = evaluate_point(set, x)?;
    let arity = evals.arity;
    let mut mixture = vec![0.0; arity];
    let mut flat = vec![0.0; weights.len() * arity];
    combine_mixture(
        weights.as_slice(),
        &evals.preds,
        arity,
        evals.dens.as_deref(),
        &mut mixture,
    )
    .and_then(|()| {
        combine_mixture_gradient(
            weights.as_slice(),
            &evals.preds,
            arity,
            evals.dens.as_deref(),
            &mixture,
            &mut flat,
        )
    })
    .map_err(|CombineError::ZeroDensity| Error::DegenerateDensity(format!("{x:?}")))?;
    Ok(flat.chunks(arity).map(|row| row.to_vec()).collect())
}

/// Mixture covariate density p_λ(x) = Σ_p λ_p p(x). Covariate-shift mode only.
pub fn mixture_density(
    weights: &MixtureWeights,
    set: &GroupOracleSet,
    x: &Covariate,
) -> Result<f64> {
    check_dims(weights, set)?;
    if set.shift_mode() != ShiftMode::CovariateShift {
        return Err(Error::Unsupported(
            "mixture density is only defined under covariate shift".into(),
        ));
    }
    let evals = evaluate_point(set, x)?;
    let dens = evals.dens.expect("covariate shift evaluations carry densities");
    Ok(weights
        .as_slice()
        .iter()
        .zip(&dens)
        .map(|(w, d)| w * d)
        .sum())
}
