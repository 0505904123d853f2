//! Probability-simplex weight vectors and the entropic mirror ascent step.
//!
//! Mixture weights live on Δ^K: nonnegative entries summing to one. The
//! multiplicative update
//!
//! ```text
//! λ_p ← λ_p · exp(η·g_p) / Σ_q λ_q · exp(η·g_q)
//! ```
//!
//! is the simplex-constrained ascent step the solver iterates.

use rand::Rng;
use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};

/// Absolute tolerance on simplex mass checks.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A point on the probability simplex over K groups.
///
/// Construction renormalizes, so stored entries are nonnegative and sum to one
/// up to float rounding; every update goes through the same renormalization,
/// which absorbs drift. Entries are never floored away from zero — a group may
/// asymptotically vanish under repeated updates.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct MixtureWeights(Vec<f64>);

impl MixtureWeights {
    /// Uniform weights 1/K, the mirror ascent starting point.
    pub fn uniform(group_count: usize) -> Result<Self> {
        if group_count == 0 {
            return Err(Error::InvalidDimension("group count must be >= 1".into()));
        }
        Ok(Self(vec![1.0 / group_count as f64; group_count]))
    }

    /// Build weights from nonnegative entries, renormalizing to unit mass.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidDimension("weights must be non-empty".into()));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("weights contain non-finite entries".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter(
                "weights must have positive total mass".into(),
            ));
        }
        let mut normalized = weights;
        for w in &mut normalized {
            *w /= total;
        }
        Ok(Self(normalized))
    }

    /// Draw weights from a symmetric Dirichlet with the given concentration
    /// (concentration 1 is uniform over the simplex).
    pub fn sample_dirichlet<R: Rng + ?Sized>(
        group_count: usize,
        concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        Self::new(sample_dirichlet_raw(group_count, concentration, rng)?)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    /// One entropic mirror ascent step with gradient `g` and step size `η`.
    ///
    /// Exponents are shifted by their maximum before exponentiation; the shift
    /// cancels in the normalization, so the update is overflow-safe and exactly
    /// invariant to adding a constant to the gradient.
    pub fn mirror_ascent_step(&self, gradient: &[f64], step_size: f64) -> Result<Self> {
        if gradient.len() != self.0.len() {
            return Err(Error::DimensionMismatch(format!(
                "gradient has {} entries for {} weights",
                gradient.len(),
                self.0.len()
            )));
        }
        if !step_size.is_finite() || step_size <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {step_size}"
            )));
        }
        if gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("gradient has non-finite entries".into()));
        }
        let max_arg = gradient
            .iter()
            .fold(f64::NEG_INFINITY, |m, &g| m.max(step_size * g));
        let mut updated: Vec<f64> = self
            .0
            .iter()
            .zip(gradient)
            .map(|(&w, &g)| w * (step_size * g - max_arg).exp())
            .collect();
        let total: f64 = updated.iter().sum();
        if total <= 0.0 {
            return Err(Error::Numeric(
                "mirror ascent step lost all mass".into(),
            ));
        }
        for w in &mut updated {
            *w /= total;
        }
        Ok(Self(updated))
    }

    /// ℓ1 distance Σ_i |a_i − b_i|.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch(format!(
                "cannot compare weights of dimension {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }
}

/// Symmetric Dirichlet draw via normalized Gamma variates.
pub(crate) fn sample_dirichlet_raw<R: Rng + ?Sized>(
    dimension: usize,
    concentration: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if dimension == 0 {
        return Err(Error::InvalidDimension("dimension must be >= 1".into()));
    }
    if !concentration.is_finite() || concentration <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "Dirichlet concentration must be positive and finite, got {concentration}"
        )));
    }
    let gamma = rand_distr::Gamma::new(concentration, 1.0)
        .map_err(|e| Error::InvalidParameter(format!("invalid Gamma parameters: {e}")))?;
    // Tiny concentrations can underflow every draw to zero; retry a few times.
    for _ in 0..100 {
        let draws: Vec<f64> = (0..dimension).map(|_| gamma.sample(rng)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 && total.is_finite() {
            return Ok(draws.into_iter().map(|d| d / total).collect());
        }
    }
    Err(Error::Numeric(
        "Dirichlet sampling produced zero total mass".into(),
    ))
}
