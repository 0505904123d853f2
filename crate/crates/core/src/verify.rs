//! Independent verification oracles: exhaustive grid search over the simplex,
//! central finite differences along simplex tangents, concavity probes,
//! gradient unbiasedness against enumerated populations, and worst-group
//! evaluation.
//!
//! These deliberately avoid the analytic gradient path: the grid and the
//! finite differences only consume objective values, and the unbiasedness
//! population gradient is recomputed from first principles by enumerating the
//! sequence space.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{LossKind, OutputKind, PROB_FLOOR};
use crate::mixture::GroupOracleSet;
use crate::numeric::CompensatedSum;
use crate::objective::{GroupDatasets, PreparedProblem};
use crate::simplex::MixtureWeights;
use crate::synthetic::{enumerate_sequences, markov_group_datasets, MarkovChainSpec};

/// Hard cap on simplex-grid enumeration.
pub const MAX_GRID_POINTS: usize = 1_000_000;

/// Resolution spec for the exhaustive simplex grid.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct GridSpec {
    pub groups: usize,
    pub step: f64,
}

impl GridSpec {
    pub fn new(groups: usize, step: f64) -> Result<Self> {
        if groups == 0 {
            return Err(Error::InvalidDimension("group count must be >= 1".into()));
        }
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "grid step must be in (0, 1], got {step}"
            )));
        }
        let divisions = (1.0 / step).round();
        if (divisions * step - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "grid step {step} does not divide 1"
            )));
        }
        let spec = Self { groups, step };
        spec.point_count()?;
        Ok(spec)
    }

    /// Default resolution: 0.01 up to three groups, 0.05 for four or five.
    pub fn default_for(groups: usize) -> Result<Self> {
        match groups {
            0 => Err(Error::InvalidDimension("group count must be >= 1".into())),
            1..=3 => Self::new(groups, 0.01),
            4..=5 => Self::new(groups, 0.05),
            _ => Err(Error::InvalidParameter(format!(
                "no default grid step for {groups} groups; pass one explicitly"
            ))),
        }
    }

    pub fn divisions(&self) -> usize {
        (1.0 / self.step).round() as usize
    }

    /// C(divisions + groups − 1, groups − 1), checked against the cap.
    pub fn point_count(&self) -> Result<usize> {
        let n = self.divisions() as u128;
        let k = self.groups as u128;
        let mut count: u128 = 1;
        for i in 0..(k - 1) {
            count = count.saturating_mul(n + i + 1);
            count /= i + 1;
            if count > MAX_GRID_POINTS as u128 {
                return Err(Error::GridTooLarge { points: count, limit: MAX_GRID_POINTS });
            }
        }
        Ok(count as usize)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSearchResult {
    pub best_weights: MixtureWeights,
    pub best_objective: f64,
    pub points_evaluated: usize,
}

/// Evaluate the objective at every grid point on the simplex; ties keep the
/// lexicographically smallest weight vector (points are enumerated in
/// ascending lexicographic order and only strict improvements replace the
/// incumbent).
pub fn grid_search(
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    grid: &GridSpec,
) -> Result<GridSearchResult> {
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    grid_search_prepared(&problem, grid)
}

pub fn grid_search_prepared(
    problem: &PreparedProblem,
    grid: &GridSpec,
) -> Result<GridSearchResult> {
    if grid.groups != problem.group_count() {
        return Err(Error::DimensionMismatch(format!(
            "grid over {} groups for a {}-group problem",
            grid.groups,
            problem.group_count()
        )));
    }
    grid.point_count()?;
    let divisions = grid.divisions();
    let mut best: Option<(MixtureWeights, f64)> = None;
    let mut evaluated = 0usize;
    let mut counts = vec![0usize; grid.groups];
    for_each_composition(divisions, &mut counts, &mut |counts| {
        let weights = MixtureWeights::new(
            counts
                .iter()
                .map(|&c| c as f64 / divisions as f64)
                .collect(),
        )?;
        let objective = problem.objective(&weights)?;
        evaluated += 1;
        match &best {
            Some((_, incumbent)) if objective <= *incumbent => {}
            _ => best = Some((weights, objective)),
        }
        Ok(())
    })?;
    let (best_weights, best_objective) = best.expect("grid has at least one point");
    Ok(GridSearchResult { best_weights, best_objective, points_evaluated: evaluated })
}

/// Enumerate compositions of `total` into `scratch.len()` nonnegative parts
/// in ascending lexicographic order.
fn for_each_composition(
    total: usize,
    scratch: &mut [usize],
    visit: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    fn recurse(
        remaining: usize,
        slot: usize,
        scratch: &mut [usize],
        visit: &mut impl FnMut(&[usize]) -> Result<()>,
    ) -> Result<()> {
        if slot == scratch.len() - 1 {
            scratch[slot] = remaining;
            return visit(scratch);
        }
        for value in 0..=remaining {
            scratch[slot] = value;
            recurse(remaining - value, slot + 1, scratch, visit)?;
        }
        Ok(())
    }
    recurse(total, 0, scratch, visit)
}

/// Central finite differences of the objective along simplex tangent
/// directions.
#[derive(Clone, Debug, Serialize)]
pub struct TangentGradient {
    /// Index pairs (i, j) for directions (e_i − e_j)/√2.
    pub directions: Vec<(usize, usize)>,
    pub derivatives: Vec<f64>,
}

/// Projection of a raw gradient onto the tangent (e_i − e_j)/√2.
pub fn tangent_component(gradient: &[f64], i: usize, j: usize) -> f64 {
    (gradient[i] - gradient[j]) / 2.0_f64.sqrt()
}

/// Central difference of the prepared objective along (e_i − e_j)/√2.
pub fn finite_diff_tangent(
    problem: &PreparedProblem,
    weights: &MixtureWeights,
    i: usize,
    j: usize,
    step: f64,
) -> Result<f64> {
    check_interior(weights, step)?;
    let bump = |delta: f64| -> Result<f64> {
        let mut raw = weights.as_slice().to_vec();
        raw[i] += delta / 2.0_f64.sqrt();
        raw[j] -= delta / 2.0_f64.sqrt();
        problem.objective(&MixtureWeights::new(raw)?)
    };
    Ok((bump(step)? - bump(-step)?) / (2.0 * step))
}

fn check_interior(weights: &MixtureWeights, step: f64) -> Result<()> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if weights.as_slice().iter().any(|&w| w < 10.0 * step) {
        return Err(Error::InvalidParameter(format!(
            "weights too close to the simplex boundary for step {step}"
        )));
    }
    Ok(())
}

/// Finite-difference tangent derivatives over the spanning direction set
/// (e_i − e_{i+1})/√2.
pub fn finite_diff_gradient(
    weights: &MixtureWeights,
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    step: f64,
) -> Result<TangentGradient> {
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    finite_diff_gradient_prepared(&problem, weights, step)
}

pub fn finite_diff_gradient_prepared(
    problem: &PreparedProblem,
    weights: &MixtureWeights,
    step: f64,
) -> Result<TangentGradient> {
    let k = weights.len();
    if k < 2 {
        return Ok(TangentGradient { directions: vec![], derivatives: vec![] });
    }
    let mut directions = Vec::with_capacity(k - 1);
    let mut derivatives = Vec::with_capacity(k - 1);
    for i in 0..k - 1 {
        directions.push((i, i + 1));
        derivatives.push(finite_diff_tangent(problem, weights, i, i + 1, step)?);
    }
    Ok(TangentGradient { directions, derivatives })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcavityReport {
    pub trials: usize,
    /// min over trials and α of J(αλ₁+(1−α)λ₂) − αJ(λ₁) − (1−α)J(λ₂).
    pub worst_violation: f64,
    pub pass: bool,
}

/// Midpoint-concavity probe on random simplex pairs with α ∈ {0.1, …, 0.9}.
/// Exact-oracle problems must show no violation beyond −1e-9.
pub fn concavity_probe<R: Rng + ?Sized>(
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    trials: usize,
    rng: &mut R,
) -> Result<ConcavityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    let k = problem.group_count();
    let mut worst = f64::INFINITY;
    for _ in 0..trials {
        let a = MixtureWeights::sample_dirichlet(k, 1.0, rng)?;
        let b = MixtureWeights::sample_dirichlet(k, 1.0, rng)?;
        let ja = problem.objective(&a)?;
        let jb = problem.objective(&b)?;
        for alpha_step in 1..=9 {
            let alpha = alpha_step as f64 / 10.0;
            let mixed = MixtureWeights::new(
                a.as_slice()
                    .iter()
                    .zip(b.as_slice())
                    .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
                    .collect(),
            )?;
            let jm = problem.objective(&mixed)?;
            worst = worst.min(jm - alpha * ja - (1.0 - alpha) * jb);
        }
    }
    Ok(ConcavityReport { trials, worst_violation: worst, pass: worst >= -1e-9 })
}

#[derive(Clone, Debug, Serialize)]
pub struct UnbiasednessReport {
    pub population_gradient: Vec<f64>,
    pub mean_gradient: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub z_scores: Vec<f64>,
    pub datasets: usize,
    pub pass: bool,
}

/// Compare the mean of the empirical gradient over freshly sampled datasets
/// against the population gradient computed by full sequence enumeration.
/// Passes when every component sits within three standard errors.
pub fn unbiasedness_test<R: Rng + ?Sized>(
    chains: &[MarkovChainSpec],
    weights: &MixtureWeights,
    n_datasets: usize,
    samples_per_length: usize,
    rng: &mut R,
) -> Result<UnbiasednessReport> {
    if chains.is_empty() {
        return Err(Error::InvalidDimension("need at least one chain".into()));
    }
    if weights.len() != chains.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} chains",
            weights.len(),
            chains.len()
        )));
    }
    if n_datasets < 2 {
        return Err(Error::InvalidParameter("need at least two dataset resamples".into()));
    }
    let population_gradient = enumerated_population_gradient(chains, weights)?;

    let set = crate::synthetic::markov_oracle_set(chains)?;
    let k = chains.len();
    let mut means = vec![0.0; k];
    let mut m2 = vec![0.0; k];
    for n in 1..=n_datasets {
        let data = markov_group_datasets(chains, samples_per_length, rng)?;
        let gradient = crate::objective::emixmax_gradient(
            weights,
            &data,
            &set,
            LossKind::CrossEntropy,
        )?;
        for q in 0..k {
            let delta = gradient[q] - means[q];
            means[q] += delta / n as f64;
            m2[q] += delta * (gradient[q] - means[q]);
        }
    }
    let mut standard_errors = Vec::with_capacity(k);
    let mut z_scores = Vec::with_capacity(k);
    for q in 0..k {
        let variance = m2[q] / (n_datasets as f64 - 1.0);
        let se = (variance / n_datasets as f64).sqrt();
        standard_errors.push(se);
        let gap = means[q] - population_gradient[q];
        z_scores.push(if se > 0.0 {
            gap / se
        } else if gap.abs() <= 1e-12 {
            0.0
        } else {
            f64::INFINITY
        });
    }
    let pass = z_scores.iter().all(|z| z.abs() <= 3.0);
    Ok(UnbiasednessReport {
        population_gradient,
        mean_gradient: means,
        standard_errors,
        z_scores,
        datasets: n_datasets,
        pass,
    })
}

/// Population gradient of the mixture objective for exact-chain oracles,
/// computed by summing over every sequence in the family:
///
/// ```text
/// ∇J_q = E_q[ −log m_λ(y) ] − Σ_p λ_p · E_p[ m_q(y) / m_λ(y) ]
/// ```
///
/// where m_p is chain p's modeled sequence probability and expectations run
/// over the enumerated space weighted by m_p.
pub fn enumerated_population_gradient(
    chains: &[MarkovChainSpec],
    weights: &MixtureWeights,
) -> Result<Vec<f64>> {
    let vocab = chains[0].vocab();
    let max_len = chains[0].max_len();
    if chains.iter().any(|c| c.vocab() != vocab || c.max_len() != max_len) {
        return Err(Error::DimensionMismatch(
            "all chains must share vocabulary and max length".into(),
        ));
    }
    let sequences = enumerate_sequences(vocab, max_len)?;
    let k = chains.len();
    let w = weights.as_slice();

    let mut loss_terms: Vec<CompensatedSum> = vec![CompensatedSum::new(); k];
    let mut ratio_terms: Vec<CompensatedSum> = vec![CompensatedSum::new(); k * k];
    let mut masses = vec![0.0; k];
    for seq in &sequences {
        for (p, chain) in chains.iter().enumerate() {
            masses[p] = chain.sequence_log_prob(seq)?.exp();
        }
        let mix: f64 = w.iter().zip(&masses).map(|(wq, m)| wq * m).sum();
        let clamped = mix.max(PROB_FLOOR);
        let loss = -clamped.ln();
        for p in 0..k {
            loss_terms[p].add(masses[p] * loss);
            for q in 0..k {
                ratio_terms[p * k + q].add(masses[p] * masses[q] / clamped);
            }
        }
    }
    let mut gradient = Vec::with_capacity(k);
    for q in 0..k {
        let mut acc = CompensatedSum::new();
        acc.add(loss_terms[q].value());
        for p in 0..k {
            acc.add(-w[p] * ratio_terms[p * k + q].value());
        }
        gradient.push(acc.value());
    }
    Ok(gradient)
}

#[derive(Clone, Debug, Serialize)]
pub struct WorstGroupReport {
    pub group_losses: Vec<f64>,
    pub worst_loss: f64,
    /// Index of the worst group (smallest index on ties).
    pub worst_group: usize,
    /// Per-group argmax-rule accuracy; classification outputs only.
    pub group_accuracies: Option<Vec<f64>>,
    pub worst_accuracy: Option<f64>,
    /// The mixture weights evaluated; absent when a bare predictor was
    /// supplied instead.
    pub weights: Option<MixtureWeights>,
}

/// Mean loss of f_λ on each group's evaluation data; the worst group is the
/// maximum. For classification outputs the argmax-rule accuracy is reported
/// alongside.
pub fn worst_group_eval(
    weights: &MixtureWeights,
    eval_data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
) -> Result<WorstGroupReport> {
    let problem = PreparedProblem::new(eval_data, set, loss_kind)?;
    let group_losses = problem.group_mean_losses(weights)?;
    let (worst_group, worst_loss) = group_losses
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let group_accuracies = match problem.output_kind() {
        OutputKind::ClassProbs => Some(group_argmax_accuracies(weights, eval_data, set)?),
        _ => None,
    };
    let worst_accuracy = group_accuracies
        .as_ref()
        .map(|a| a.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(WorstGroupReport {
        group_losses,
        worst_loss,
        worst_group,
        group_accuracies,
        worst_accuracy,
        weights: Some(weights.clone()),
    })
}

/// Worst-group evaluation of an arbitrary supplied predictor (instead of the
/// mixture f_λ).
pub fn worst_group_eval_with<F>(
    predict: F,
    eval_data: &GroupDatasets,
    loss_kind: LossKind,
) -> Result<WorstGroupReport>
where
    F: Fn(&crate::mixture::Covariate) -> crate::losses::PredictionOutput,
{
    let mut group_losses = Vec::with_capacity(eval_data.group_count());
    let mut group_hits: Vec<Option<usize>> = Vec::with_capacity(eval_data.group_count());
    let mut classification = true;
    for (p, group) in eval_data.groups().iter().enumerate() {
        if group.is_empty() {
            return Err(Error::EmptyGroup(format!("group {p} has no samples")));
        }
        let mut acc = CompensatedSum::new();
        let mut hits = 0usize;
        for sample in group {
            let out = predict(&sample.x);
            acc.add(crate::losses::loss(loss_kind, &out, &sample.y)?);
            if out.kind() == OutputKind::ClassProbs {
                if let crate::losses::Target::Label(label) = &sample.y {
                    let predicted = out
                        .coords()
                        .iter()
                        .enumerate()
                        .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                            if v > bv {
                                (i, v)
                            } else {
                                (bi, bv)
                            }
                        })
                        .0;
                    if predicted == *label {
                        hits += 1;
                    }
                }
            } else {
                classification = false;
            }
        }
        group_losses.push(acc.value() / group.len() as f64);
        group_hits.push(classification.then_some(hits));
    }
    let (worst_group, worst_loss) = group_losses
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    let group_accuracies = classification.then(|| {
        group_hits
            .iter()
            .zip(eval_data.groups())
            .map(|(hits, group)| hits.unwrap_or(0) as f64 / group.len() as f64)
            .collect::<Vec<f64>>()
    });
    let worst_accuracy = group_accuracies
        .as_ref()
        .map(|a| a.iter().cloned().fold(f64::INFINITY, f64::min));
    Ok(WorstGroupReport {
        group_losses,
        worst_loss,
        worst_group,
        group_accuracies,
        worst_accuracy,
        weights: None,
    })
}

fn group_argmax_accuracies(
    weights: &MixtureWeights,
    eval_data: &GroupDatasets,
    set: &GroupOracleSet,
) -> Result<Vec<f64>> {
    let mut accuracies = Vec::with_capacity(eval_data.group_count());
    for group in eval_data.groups() {
        let mut hits = 0usize;
        for sample in group {
            let out = crate::mixture::mixture_predict(weights, set, &sample.x)?;
            let coords = out.coords();
            let predicted = coords
                .iter()
                .enumerate()
                .fold((0usize, f64::NEG_INFINITY), |(bi, bv), (i, &v)| {
                    if v > bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                })
                .0;
            match &sample.y {
                crate::losses::Target::Label(label) => {
                    if predicted == *label {
                        hits += 1;
                    }
                }
                other => {
                    return Err(Error::TypeMismatch(format!(
                        "accuracy needs label targets, got {other:?}"
                    )))
                }
            }
        }
        accuracies.push(hits as f64 / group.len() as f64);
    }
    Ok(accuracies)
}
