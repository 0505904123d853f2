//! Synthetic distribution families with exact samplers, exact Bayes-optimal
//! predictors, and exact densities.
//!
//! Two families:
//! - Markov chains over a small token vocabulary whose transition rows are
//!   drawn from a symmetric Dirichlet; the modeled object is the mixed
//!   distribution of sequences of lengths 1..L with a uniform length prior.
//! - Cosine toys on `[0,1]`: binary classification with cosine conditionals, and
//!   deterministic regression with one cosine curve and constant levels.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::losses::{LossKind, PredictionOutput, Target, PROB_FLOOR};
use crate::mixture::{Covariate, GroupOracle, GroupOracleSet, ShiftMode};
use crate::numeric::simpson;
use crate::objective::{GroupDatasets, Sample};
use crate::simplex::{sample_dirichlet_raw, MixtureWeights};

pub const DEFAULT_VOCAB: usize = 4;
pub const DEFAULT_MAX_LEN: usize = 10;

/// Hard cap on sequence-space enumeration.
pub const MAX_ENUMERATION: usize = 1_000_000;

/// A Markov chain over `vocab` tokens, modeling sequences of length 1..=`max_len`
/// with a uniform 1/max_len length prior.
///
/// The initial distribution is uniform and the length prior is part of the
/// modeled probability; both are λ-independent constants, so they shift the
/// mixture objective without moving its argmax (asserted in tests).
#[derive(Clone, Debug, Serialize)]
pub struct MarkovChainSpec {
    vocab: usize,
    max_len: usize,
    initial: Vec<f64>,
    transitions: Vec<Vec<f64>>,
}

impl MarkovChainSpec {
    pub fn new(initial: Vec<f64>, transitions: Vec<Vec<f64>>, max_len: usize) -> Result<Self> {
        let vocab = initial.len();
        if vocab < 2 {
            return Err(Error::InvalidDimension("vocabulary must have >= 2 tokens".into()));
        }
        if max_len == 0 {
            return Err(Error::InvalidParameter("max sequence length must be >= 1".into()));
        }
        if transitions.len() != vocab || transitions.iter().any(|row| row.len() != vocab) {
            return Err(Error::DimensionMismatch(format!(
                "transition matrix must be {vocab}x{vocab}"
            )));
        }
        let initial = normalize_row(initial, "initial distribution")?;
        let transitions = transitions
            .into_iter()
            .enumerate()
            .map(|(i, row)| normalize_row(row, &format!("transition row {i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { vocab, max_len, initial, transitions })
    }

    /// Draw a chain with transition rows from a symmetric Dirichlet of the
    /// given magnitude (large magnitudes concentrate rows near uniform).
    pub fn sample<R: Rng + ?Sized>(
        vocab: usize,
        max_len: usize,
        magnitude: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::InvalidDimension("vocabulary must have >= 2 tokens".into()));
        }
        let transitions = (0..vocab)
            .map(|_| sample_dirichlet_raw(vocab, magnitude, rng))
            .collect::<Result<Vec<_>>>()?;
        Self::new(vec![1.0 / vocab as f64; vocab], transitions, max_len)
    }

    pub fn vocab(&self) -> usize {
        self.vocab
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn transitions(&self) -> &[Vec<f64>] {
        &self.transitions
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions[from][to]
    }

    /// Log of the modeled sequence probability:
    /// `log(1/max_len) + log π(s_0) + Σ_t log T(s_{t−1}, s_t)`.
    pub fn sequence_log_prob(&self, seq: &[u16]) -> Result<f64> {
        if seq.is_empty() || seq.len() > self.max_len {
            return Err(Error::InvalidParameter(format!(
                "sequence length {} outside 1..={}",
                seq.len(),
                self.max_len
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t as usize >= self.vocab) {
            return Err(Error::InvalidParameter(format!(
                "token {bad} outside vocabulary of size {}",
                self.vocab
            )));
        }
        let mut log_prob = -(self.max_len as f64).ln() + self.initial[seq[0] as usize].ln();
        for pair in seq.windows(2) {
            log_prob += self.transitions[pair[0] as usize][pair[1] as usize].ln();
        }
        Ok(log_prob)
    }

    /// Sample one sequence of the given length.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, length: usize, rng: &mut R) -> Vec<u16> {
        let mut seq = Vec::with_capacity(length);
        let mut token = sample_categorical(&self.initial, rng);
        seq.push(token as u16);
        for _ in 1..length {
            token = sample_categorical(&self.transitions[token], rng);
            seq.push(token as u16);
        }
        seq
    }

    /// Exactly `n_per_length` sequences of each length 1..=max_len, in length
    /// order.
    pub fn sample_sequences<R: Rng + ?Sized>(&self, n_per_length: usize, rng: &mut R) -> Vec<Vec<u16>> {
        let mut sequences = Vec::with_capacity(n_per_length * self.max_len);
        for length in 1..=self.max_len {
            for _ in 0..n_per_length {
                sequences.push(self.sample_sequence(length, rng));
            }
        }
        sequences
    }

    /// The chain as a group oracle: the prediction for an observed sequence is
    /// its exact modeled probability, scored with cross-entropy in generative
    /// mode. The covariate space is a singleton, so there is no covariate
    /// shift and no density. Panics on non-sequence queries or sequences
    /// outside the family (a caller bug, not a data condition).
    pub fn as_oracle(&self) -> GroupOracle {
        let chain = self.clone();
        GroupOracle::new(move |x: &Covariate| match x {
            Covariate::Tokens(seq) => match chain.sequence_log_prob(seq) {
                Ok(lp) => PredictionOutput::Mass(lp.exp()),
                Err(e) => panic!("invalid sequence query: {e}"),
            },
            other => panic!("markov oracle expects token sequences, got {other:?}"),
        })
    }
}

fn normalize_row(row: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if row.iter().any(|p| !p.is_finite()) {
        return Err(Error::Numeric(format!("{what} has non-finite entries")));
    }
    if row.iter().any(|&p| p < 0.0) {
        return Err(Error::InvalidParameter(format!("{what} has negative entries")));
    }
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidParameter(format!("{what} has no mass")));
    }
    Ok(row.into_iter().map(|p| p / total).collect())
}

pub(crate) fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.len() - 1
}

/// All sequences of lengths 1..=max_len, lexicographic within each length.
pub fn enumerate_sequences(vocab: usize, max_len: usize) -> Result<Vec<Vec<u16>>> {
    let mut count: u128 = 0;
    let mut power: u128 = 1;
    for _ in 1..=max_len {
        power = power.saturating_mul(vocab as u128);
        count = count.saturating_add(power);
    }
    if count > MAX_ENUMERATION as u128 {
        return Err(Error::EnumerationTooLarge { count, limit: MAX_ENUMERATION });
    }
    let mut all = Vec::with_capacity(count as usize);
    for length in 1..=max_len {
        let mut seq = vec![0u16; length];
        loop {
            all.push(seq.clone());
            // Odometer increment.
            let mut pos = length;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                seq[pos] += 1;
                if (seq[pos] as usize) < vocab {
                    break;
                }
                seq[pos] = 0;
            }
            if seq.iter().all(|&t| t == 0) {
                break;
            }
        }
    }
    Ok(all)
}

/// Datasets drawn from a set of chains: `n_per_length` sequences per length per
/// group, carried as generative samples.
pub fn markov_group_datasets<R: Rng + ?Sized>(
    chains: &[MarkovChainSpec],
    n_per_length: usize,
    rng: &mut R,
) -> Result<GroupDatasets> {
    if n_per_length == 0 {
        return Err(Error::InvalidParameter("need at least one sample per length".into()));
    }
    let groups = chains
        .iter()
        .map(|chain| {
            chain
                .sample_sequences(n_per_length, rng)
                .into_iter()
                .map(|seq| Sample::new(Covariate::Tokens(seq), Target::Observed))
                .collect()
        })
        .collect();
    GroupDatasets::new(groups)
}

/// Exact-probability oracles for a set of chains (no covariate shift).
pub fn markov_oracle_set(chains: &[MarkovChainSpec]) -> Result<GroupOracleSet> {
    GroupOracleSet::new(
        chains.iter().map(MarkovChainSpec::as_oracle).collect(),
        ShiftMode::NoShift,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyFamily {
    BinaryCosine,
    RegressionCosine,
}

/// One group's conditional curve `amplitude·cos(π·(x − phase)) + offset`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CosineParams {
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
}

impl CosineParams {
    pub fn eval(&self, x: f64) -> f64 {
        self.amplitude * (std::f64::consts::PI * (x - self.phase)).cos() + self.offset
    }
}

/// A cosine toy instance: per-group conditionals on a shared uniform covariate
/// law over `[0,1]`.
///
/// Classification groups have P(y=1|x) given by the curve; regression groups
/// have deterministic targets equal to the curve.
#[derive(Clone, Debug, Serialize)]
pub struct ToySpec {
    family: ToyFamily,
    groups: Vec<CosineParams>,
}

impl ToySpec {
    pub fn new(family: ToyFamily, groups: Vec<CosineParams>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidDimension("toy needs at least one group".into()));
        }
        if family == ToyFamily::BinaryCosine {
            for (i, g) in groups.iter().enumerate() {
                if g.offset - g.amplitude.abs() < -1e-12 || g.offset + g.amplitude.abs() > 1.0 + 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "group {i} conditional leaves [0,1]"
                    )));
                }
            }
        }
        Ok(Self { family, groups })
    }

    /// Mirror pair: p₂(1|x) = 1 − p₁(1|x).
    pub fn ce_mirror() -> Self {
        Self::new(
            ToyFamily::BinaryCosine,
            vec![
                CosineParams { amplitude: 0.5, phase: 0.0, offset: 0.5 },
                CosineParams { amplitude: -0.5, phase: 0.0, offset: 0.5 },
            ],
        )
        .expect("static parameters are valid")
    }

    /// Phase-shifted pair: the maximum-entropy conditional is outside the span.
    pub fn ce_shifted() -> Self {
        Self::new(
            ToyFamily::BinaryCosine,
            vec![
                CosineParams { amplitude: 0.5, phase: 0.0, offset: 0.5 },
                CosineParams { amplitude: -0.5, phase: 0.2, offset: 0.5 },
            ],
        )
        .expect("static parameters are valid")
    }

    /// Cosine curve plus constants 0.1 and 0.15.
    pub fn regression_low() -> Self {
        Self::regression_with_third_level(0.15)
    }

    /// Cosine curve plus constants 0.1 and 0.8; the two constants are the
    /// extreme functions.
    pub fn regression_high() -> Self {
        Self::regression_with_third_level(0.8)
    }

    fn regression_with_third_level(level: f64) -> Self {
        Self::new(
            ToyFamily::RegressionCosine,
            vec![
                CosineParams { amplitude: 0.2, phase: 0.0, offset: 0.5 },
                CosineParams { amplitude: 0.0, phase: 0.0, offset: 0.1 },
                CosineParams { amplitude: 0.0, phase: 0.0, offset: level },
            ],
        )
        .expect("static parameters are valid")
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "ce_mirror" => Ok(Self::ce_mirror()),
            "ce_shifted" => Ok(Self::ce_shifted()),
            "regression_low" => Ok(Self::regression_low()),
            "regression_high" => Ok(Self::regression_high()),
            other => Err(Error::UnknownName(format!("toy variant '{other}'"))),
        }
    }

    pub fn family(&self) -> ToyFamily {
        self.family
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn params(&self) -> &[CosineParams] {
        &self.groups
    }

    pub fn loss_kind(&self) -> LossKind {
        match self.family {
            ToyFamily::BinaryCosine => LossKind::CrossEntropy,
            ToyFamily::RegressionCosine => LossKind::SquaredError,
        }
    }

    /// The group's conditional P(y=1|x) (classification) or conditional mean
    /// (regression).
    pub fn conditional(&self, group: usize, x: f64) -> f64 {
        self.groups[group].eval(x)
    }

    /// Exact Bayes oracles with the uniform density on `[0,1]` attached.
    pub fn oracle_set(&self, shift_mode: ShiftMode) -> Result<GroupOracleSet> {
        let family = self.family;
        let oracles = self
            .groups
            .iter()
            .map(|&params| {
                let predict = move |x: &Covariate| {
                    let xv = match x {
                        Covariate::Point(v) => v[0],
                        other => panic!("toy oracle expects a scalar covariate, got {other:?}"),
                    };
                    let value = params.eval(xv);
                    match family {
                        ToyFamily::BinaryCosine => {
                            PredictionOutput::ClassProbs(vec![1.0 - value, value])
                        }
                        ToyFamily::RegressionCosine => PredictionOutput::Value(vec![value]),
                    }
                };
                let density = |x: &Covariate| match x {
                    Covariate::Point(v) if (0.0..=1.0).contains(&v[0]) => 1.0,
                    _ => 0.0,
                };
                GroupOracle::with_density(predict, density)
            })
            .collect();
        GroupOracleSet::new(oracles, shift_mode)
    }

    /// Draw n samples from one group: `x ~ U[0,1]`, then y from the conditional
    /// (classification) or deterministically (regression).
    pub fn sample_group<R: Rng + ?Sized>(&self, group: usize, n: usize, rng: &mut R) -> Vec<Sample> {
        (0..n)
            .map(|_| {
                let x: f64 = rng.random();
                let value = self.conditional(group, x);
                let y = match self.family {
                    ToyFamily::BinaryCosine => {
                        let draw: f64 = rng.random();
                        Target::Label(usize::from(draw < value))
                    }
                    ToyFamily::RegressionCosine => Target::Value(vec![value]),
                };
                Sample::new(Covariate::scalar(x), y)
            })
            .collect()
    }

    pub fn sample_datasets<R: Rng + ?Sized>(
        &self,
        n_per_group: usize,
        rng: &mut R,
    ) -> Result<GroupDatasets> {
        if n_per_group == 0 {
            return Err(Error::InvalidParameter("need at least one sample per group".into()));
        }
        let groups = (0..self.group_count())
            .map(|p| self.sample_group(p, n_per_group, rng))
            .collect();
        GroupDatasets::new(groups)
    }

    fn mixture_value(&self, weights: &[f64], x: f64) -> f64 {
        weights
            .iter()
            .zip(&self.groups)
            .map(|(w, g)| w * g.eval(x))
            .sum()
    }

    /// Exact per-group expected losses of f_λ under the family, by quadrature
    /// over the uniform covariate law.
    pub fn exact_group_losses(
        &self,
        weights: &MixtureWeights,
        loss_kind: LossKind,
    ) -> Result<Vec<f64>> {
        if weights.len() != self.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} groups",
                weights.len(),
                self.group_count()
            )));
        }
        match (self.family, loss_kind) {
            (ToyFamily::BinaryCosine, LossKind::CrossEntropy) => Ok((0..self.group_count())
                .map(|p| {
                    simpson(
                        |x| {
                            let truth = self.conditional(p, x);
                            let mix = self.mixture_value(weights.as_slice(), x);
                            let mut loss = 0.0;
                            if truth > 0.0 {
                                loss -= truth * mix.max(PROB_FLOOR).ln();
                            }
                            if truth < 1.0 {
                                loss -= (1.0 - truth) * (1.0 - mix).max(PROB_FLOOR).ln();
                            }
                            loss
                        },
                        0.0,
                        1.0,
                        2000,
                    )
                })
                .collect()),
            (ToyFamily::RegressionCosine, LossKind::SquaredError) => Ok((0..self.group_count())
                .map(|p| {
                    simpson(
                        |x| {
                            let diff =
                                self.mixture_value(weights.as_slice(), x) - self.conditional(p, x);
                            diff * diff
                        },
                        0.0,
                        1.0,
                        2000,
                    )
                })
                .collect()),
            _ => Err(Error::TypeMismatch(format!(
                "{loss_kind} does not apply to {:?}",
                self.family
            ))),
        }
    }

    pub fn exact_worst_group_loss(
        &self,
        weights: &MixtureWeights,
        loss_kind: LossKind,
    ) -> Result<f64> {
        Ok(self
            .exact_group_losses(weights, loss_kind)?
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Exact per-group accuracy of the argmax rule under f_λ (classification).
    pub fn exact_group_accuracies(&self, weights: &MixtureWeights) -> Result<Vec<f64>> {
        if self.family != ToyFamily::BinaryCosine {
            return Err(Error::Unsupported("accuracy applies to classification toys".into()));
        }
        if weights.len() != self.group_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} groups",
                weights.len(),
                self.group_count()
            )));
        }
        Ok((0..self.group_count())
            .map(|p| {
                simpson(
                    |x| {
                        let truth = self.conditional(p, x);
                        if self.mixture_value(weights.as_slice(), x) > 0.5 {
                            truth
                        } else {
                            1.0 - truth
                        }
                    },
                    0.0,
                    1.0,
                    4000,
                )
            })
            .collect())
    }
}

/// Named toy instance with its exact oracles; the returned [`ToySpec`] carries
/// the sampler and the exact evaluators. Known names: `ce_mirror`,
/// `ce_shifted`, `regression_low`, `regression_high`.
pub fn toy_oracles(name: &str) -> Result<(GroupOracleSet, ToySpec)> {
    let spec = ToySpec::by_name(name)?;
    let set = spec.oracle_set(ShiftMode::NoShift)?;
    Ok((set, spec))
}
