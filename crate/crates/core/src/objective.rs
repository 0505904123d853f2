//! The empirical mixture objective and its gradient estimators.
//!
//! ```text
//! J(λ)  = Σ_p λ_p · mean_{(x,y)∈D_p} ℒ(f_λ(x), y)
//! ∇J_q  = mean_{D_q} ℒ(f_λ(x), y)
//!         + Σ_p λ_p · mean_{D_p} ⟨ ∂ℒ/∂o (f_λ(x), y), ∂f_λ(x)/∂λ_q ⟩
//! ```
//!
//! The gradient is the exact product/chain-rule derivative of `J`; finite
//! differences are used only as a test oracle. Oracle predictions and
//! densities do not depend on λ, so [`PreparedProblem`] evaluates every oracle
//! once per sample and reuses the tables across λ queries — a solve, a grid
//! search, or a concavity probe then costs O(samples · K · arity) per
//! evaluation. Reductions run in fixed order with compensated summation.

use rand::Rng;

use crate::error::{Error, Result};
use crate::losses::{self, LossKind, OutputKind, Target};
use crate::mixture::{
    combine_mixture, combine_mixture_gradient, evaluate_point, CombineError, Covariate,
    GroupOracleSet, ShiftMode,
};
use crate::numeric::CompensatedSum;
use crate::simplex::MixtureWeights;

/// One labeled observation.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub x: Covariate,
    pub y: Target,
}

impl Sample {
    pub fn new(x: Covariate, y: Target) -> Self {
        Self { x, y }
    }
}

/// Per-group sample collections D_p, with an optional held-out second set D_p′
/// for proxy fitting.
#[derive(Clone, Debug)]
pub struct GroupDatasets {
    groups: Vec<Vec<Sample>>,
    heldout: Option<Vec<Vec<Sample>>>,
}

impl GroupDatasets {
    pub fn new(groups: Vec<Vec<Sample>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidDimension("need at least one group".into()));
        }
        Ok(Self { groups, heldout: None })
    }

    pub fn with_heldout(groups: Vec<Vec<Sample>>, heldout: Vec<Vec<Sample>>) -> Result<Self> {
        if heldout.len() != groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} held-out groups for {} groups",
                heldout.len(),
                groups.len()
            )));
        }
        let mut data = Self::new(groups)?;
        data.heldout = Some(heldout);
        Ok(data)
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group(&self, index: usize) -> &[Sample] {
        &self.groups[index]
    }

    pub fn groups(&self) -> &[Vec<Sample>] {
        &self.groups
    }

    pub fn heldout(&self) -> Option<&[Vec<Sample>]> {
        self.heldout.as_deref()
    }
}

struct PreparedGroup {
    /// Flattened n × K × arity prediction coordinates.
    preds: Vec<f64>,
    /// Flattened n × K densities under covariate shift.
    dens: Option<Vec<f64>>,
    targets: Vec<Target>,
    len: usize,
}

/// λ-independent evaluation tables for one (datasets, oracles, loss) triple.
pub struct PreparedProblem {
    groups: Vec<PreparedGroup>,
    kind: OutputKind,
    arity: usize,
    loss_kind: LossKind,
    shift: ShiftMode,
}

impl PreparedProblem {
    pub fn new(data: &GroupDatasets, set: &GroupOracleSet, loss_kind: LossKind) -> Result<Self> {
        if data.group_count() != set.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} dataset groups for {} oracles",
                data.group_count(),
                set.group_count()
            )));
        }
        let k = set.group_count();
        let mut kind: Option<(OutputKind, usize)> = None;
        let mut groups = Vec::with_capacity(k);
        for (p, samples) in data.groups().iter().enumerate() {
            if samples.is_empty() {
                return Err(Error::EmptyGroup(format!("group {p} has no samples")));
            }
            let mut preds = Vec::new();
            let mut dens = match set.shift_mode() {
                ShiftMode::NoShift => None,
                ShiftMode::CovariateShift => Some(Vec::with_capacity(samples.len() * k)),
            };
            let mut targets = Vec::with_capacity(samples.len());
            for sample in samples {
                let evals = evaluate_point(set, &sample.x)?;
                match kind {
                    None => kind = Some((evals.kind, evals.arity)),
                    Some((ek, ea)) => {
                        if ek != evals.kind || ea != evals.arity {
                            return Err(Error::TypeMismatch(format!(
                                "group {p} predictions do not match earlier groups"
                            )));
                        }
                    }
                }
                check_sample_typing(loss_kind, evals.kind, evals.arity, &sample.y)?;
                preds.extend_from_slice(&evals.preds);
                if let (Some(store), Some(values)) = (dens.as_mut(), evals.dens) {
                    store.extend_from_slice(&values);
                }
                targets.push(sample.y.clone());
            }
            groups.push(PreparedGroup { preds, dens, targets, len: samples.len() });
        }
        let (kind, arity) = kind.expect("at least one non-empty group");
        Ok(Self { groups, kind, arity, loss_kind, shift: set.shift_mode() })
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn group_len(&self, group: usize) -> usize {
        self.groups[group].len
    }

    pub fn loss_kind(&self) -> LossKind {
        self.loss_kind
    }

    pub fn output_kind(&self) -> OutputKind {
        self.kind
    }

    pub fn shift_mode(&self) -> ShiftMode {
        self.shift
    }

    fn check_weights(&self, weights: &MixtureWeights) -> Result<()> {
        if weights.len() != self.groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} groups",
                weights.len(),
                self.groups.len()
            )));
        }
        Ok(())
    }

    /// Mean loss of f_λ on each group's samples.
    pub fn group_mean_losses(&self, weights: &MixtureWeights) -> Result<Vec<f64>> {
        self.check_weights(weights)?;
        let w = weights.as_slice();
        let arity = self.arity;
        let mut mixture = vec![0.0; arity];
        let mut means = Vec::with_capacity(self.groups.len());
        for (p, group) in self.groups.iter().enumerate() {
            let mut acc = CompensatedSum::new();
            for i in 0..group.len {
                let preds = &group.preds[i * w.len() * arity..(i + 1) * w.len() * arity];
                let dens = group.dens.as_ref().map(|d| &d[i * w.len()..(i + 1) * w.len()]);
                combine_mixture(w, preds, arity, dens, &mut mixture).map_err(
                    |CombineError::ZeroDensity| {
                        Error::DegenerateDensity(format!("group {p}, sample {i}"))
                    },
                )?;
                acc.add(losses::loss_on_coords(
                    self.loss_kind,
                    self.kind,
                    &mixture,
                    &group.targets[i],
                )?);
            }
            means.push(acc.value() / group.len as f64);
        }
        Ok(means)
    }

    /// J(λ) = Σ_p λ_p · mean loss on D_p.
    pub fn objective(&self, weights: &MixtureWeights) -> Result<f64> {
        let means = self.group_mean_losses(weights)?;
        let mut acc = CompensatedSum::new();
        for (w, m) in weights.as_slice().iter().zip(&means) {
            acc.add(w * m);
        }
        Ok(acc.value())
    }

    /// Exact gradient of [`Self::objective`] in λ.
    pub fn gradient(&self, weights: &MixtureWeights) -> Result<Vec<f64>> {
        self.gradient_impl(weights, None)
    }

    /// Gradient restricted to explicit per-group sample indices. With every
    /// group's full index range this is identical to [`Self::gradient`]; the
    /// minibatch estimator passes sampled indices.
    pub fn gradient_on_batches(
        &self,
        weights: &MixtureWeights,
        batches: &[Vec<usize>],
    ) -> Result<Vec<f64>> {
        if batches.len() != self.groups.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} batches for {} groups",
                batches.len(),
                self.groups.len()
            )));
        }
        for (p, (batch, group)) in batches.iter().zip(&self.groups).enumerate() {
            if batch.is_empty() {
                return Err(Error::EmptyGroup(format!("batch for group {p} is empty")));
            }
            if let Some(&bad) = batch.iter().find(|&&i| i >= group.len) {
                return Err(Error::InvalidParameter(format!(
                    "batch index {bad} out of range for group {p} of size {}",
                    group.len
                )));
            }
        }
        self.gradient_impl(weights, Some(batches))
    }

    fn gradient_impl(
        &self,
        weights: &MixtureWeights,
        batches: Option<&[Vec<usize>]>,
    ) -> Result<Vec<f64>> {
        self.check_weights(weights)?;
        let w = weights.as_slice();
        let k = w.len();
        let arity = self.arity;
        let mut mixture = vec![0.0; arity];
        let mut loss_grad = vec![0.0; arity];
        let mut partials = vec![0.0; k * arity];

        // mean_p[ℒ] and mean_p[⟨∂ℒ/∂o, ∂f/∂λ_q⟩] per (p, q).
        let mut loss_means = vec![0.0; k];
        let mut inner_means = vec![0.0; k * k];
        for (p, group) in self.groups.iter().enumerate() {
            let mut loss_acc = CompensatedSum::new();
            let mut inner_acc: Vec<CompensatedSum> = vec![CompensatedSum::new(); k];
            let full_range: Vec<usize>;
            let indices: &[usize] = match batches {
                Some(b) => &b[p],
                None => {
                    full_range = (0..group.len).collect();
                    &full_range
                }
            };
            for &i in indices {
                let preds = &group.preds[i * k * arity..(i + 1) * k * arity];
                let dens = group.dens.as_ref().map(|d| &d[i * k..(i + 1) * k]);
                let degenerate = |CombineError::ZeroDensity| {
                    Error::DegenerateDensity(format!("group {p}, sample {i}"))
                };
                combine_mixture(w, preds, arity, dens, &mut mixture).map_err(degenerate)?;
                combine_mixture_gradient(w, preds, arity, dens, &mixture, &mut partials)
                    .map_err(degenerate)?;
                let target = &group.targets[i];
                loss_acc.add(losses::loss_on_coords(
                    self.loss_kind,
                    self.kind,
                    &mixture,
                    target,
                )?);
                losses::loss_gradient_on_coords(
                    self.loss_kind,
                    self.kind,
                    &mixture,
                    target,
                    &mut loss_grad,
                )?;
                for (q, acc) in inner_acc.iter_mut().enumerate() {
                    let row = &partials[q * arity..(q + 1) * arity];
                    acc.add(loss_grad.iter().zip(row).map(|(a, b)| a * b).sum());
                }
            }
            let n = indices.len() as f64;
            loss_means[p] = loss_acc.value() / n;
            for q in 0..k {
                inner_means[p * k + q] = inner_acc[q].value() / n;
            }
        }

        let mut gradient = Vec::with_capacity(k);
        for q in 0..k {
            let mut acc = CompensatedSum::new();
            acc.add(loss_means[q]);
            for p in 0..k {
                acc.add(w[p] * inner_means[p * k + q]);
            }
            gradient.push(acc.value());
        }
        Ok(gradient)
    }
}

fn check_sample_typing(
    loss_kind: LossKind,
    output_kind: OutputKind,
    arity: usize,
    target: &Target,
) -> Result<()> {
    let ok = match (loss_kind, output_kind, target) {
        (LossKind::CrossEntropy, OutputKind::ClassProbs, Target::Label(label)) => *label < arity,
        (LossKind::CrossEntropy, OutputKind::Mass, Target::Observed) => true,
        (LossKind::SquaredError, OutputKind::Value, Target::Value(v)) => v.len() == arity,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::TypeMismatch(format!(
            "sample target {target:?} is incompatible with {loss_kind} on {output_kind:?} outputs"
        )))
    }
}

/// J(λ) over the given datasets and oracles.
pub fn mixmax_objective(
    weights: &MixtureWeights,
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
) -> Result<f64> {
    PreparedProblem::new(data, set, loss_kind)?.objective(weights)
}

/// Full-data gradient estimator: the exact λ-gradient of [`mixmax_objective`].
pub fn emixmax_gradient(
    weights: &MixtureWeights,
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
) -> Result<Vec<f64>> {
    PreparedProblem::new(data, set, loss_kind)?.gradient(weights)
}

/// Minibatch gradient estimator: per group, `batch_size` samples drawn
/// uniformly with replacement. Its expectation over the sampling equals
/// [`emixmax_gradient`].
pub fn minibatch_gradient<R: Rng + ?Sized>(
    weights: &MixtureWeights,
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    batch_size: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be >= 1".into()));
    }
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    let batches = sample_batches(&problem, batch_size, rng);
    problem.gradient_on_batches(weights, &batches)
}

pub(crate) fn sample_batches<R: Rng + ?Sized>(
    problem: &PreparedProblem,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Vec<usize>> {
    (0..problem.group_count())
        .map(|p| {
            let n = problem.group_len(p);
            (0..batch_size).map(|_| rng.random_range(0..n)).collect()
        })
        .collect()
}
