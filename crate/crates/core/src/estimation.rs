//! Proxy estimation pipelines: smoothed empirical Markov transitions, Gaussian
//! KDE densities with Scott bandwidths, dataset splitting, and the
//! fit-proxies-then-solve driver.
//!
//! The driver replaces exact oracles with models fitted on held-aside data
//! (or the same data, under data reuse) and runs the ordinary solve on the
//! remainder. For sequence families the proxy is the well-specified
//! transition-count estimator, playing the role a trained sequence model
//! would on unknown families.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::mixture::{Covariate, GroupOracle, GroupOracleSet, ShiftMode};
use crate::objective::{GroupDatasets, Sample};
use crate::seeds::derive_seed;
use crate::solver::{solve, SolveReport, SolverConfig};
use crate::synthetic::MarkovChainSpec;

/// Default transition smoothing (Jeffreys-style) keeping proxy cross-entropy
/// bounded.
pub const DEFAULT_SMOOTHING: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum SplitMode {
    /// Disjoint parts: `proxy_fraction` of each group fits the proxy, the rest
    /// feeds the gradient estimator.
    Split { proxy_fraction: f64 },
    /// Fit proxies and estimate gradients on the same data.
    DataReuse,
}

/// How a group's samples are divided between proxy fitting and gradient
/// estimation. Splits are stratified: sequence samples are partitioned per
/// length, so a 75:25 split of 800 samples per length yields 600/200 per
/// length.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub seed: u64,
}

impl SplitPlan {
    pub fn data_reuse(seed: u64) -> Self {
        Self { mode: SplitMode::DataReuse, seed }
    }

    pub fn split(proxy_fraction: f64, seed: u64) -> Result<Self> {
        if !(proxy_fraction > 0.0 && proxy_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "proxy fraction must lie in (0,1), got {proxy_fraction}"
            )));
        }
        Ok(Self { mode: SplitMode::Split { proxy_fraction }, seed })
    }

    pub fn name(&self) -> String {
        match self.mode {
            SplitMode::DataReuse => "data_reuse".into(),
            SplitMode::Split { proxy_fraction } => format!("split:{proxy_fraction}"),
        }
    }

    /// Partition one group's samples into (proxy part, gradient part).
    /// Deterministic in the plan seed; the same permutation pattern applies to
    /// every group, so duplicated groups split identically.
    pub fn split_group(
        &self,
        group_index: usize,
        samples: &[Sample],
    ) -> Result<(Vec<Sample>, Vec<Sample>)> {
        match self.mode {
            SplitMode::DataReuse => Ok((samples.to_vec(), samples.to_vec())),
            SplitMode::Split { proxy_fraction } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, 0));
                // Stratify by sequence length (point covariates share one stratum).
                let mut strata: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
                for (i, sample) in samples.iter().enumerate() {
                    let key = match &sample.x {
                        Covariate::Tokens(seq) => seq.len(),
                        Covariate::Point(_) => 0,
                    };
                    strata.entry(key).or_default().push(i);
                }
                let mut proxy = Vec::new();
                let mut gradient = Vec::new();
                for indices in strata.values() {
                    let mut shuffled = indices.clone();
                    shuffled.shuffle(&mut rng);
                    let cut = ((proxy_fraction * shuffled.len() as f64).round() as usize)
                        .min(shuffled.len());
                    if cut == 0 || cut == shuffled.len() {
                        return Err(Error::EmptyGroup(format!(
                            "split leaves an empty part in group {group_index} \
                             (stratum of {} samples at fraction {proxy_fraction})",
                            shuffled.len()
                        )));
                    }
                    for &i in &shuffled[..cut] {
                        proxy.push(samples[i].clone());
                    }
                    for &i in &shuffled[cut..] {
                        gradient.push(samples[i].clone());
                    }
                }
                Ok((proxy, gradient))
            }
        }
    }
}

/// Count-based transition estimator with additive smoothing:
/// `T(i,j) = (count(i→j) + s) / (count(i→·) + V·s)`, and the initial
/// distribution estimated the same way from first tokens.
pub fn fit_markov_proxy(
    samples: &[Sample],
    vocab: usize,
    max_len: usize,
    smoothing: f64,
) -> Result<MarkovChainSpec> {
    if samples.is_empty() {
        return Err(Error::EmptyGroup("no samples to fit a proxy on".into()));
    }
    if vocab < 2 {
        return Err(Error::InvalidDimension("vocabulary must have >= 2 tokens".into()));
    }
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "smoothing must be nonnegative, got {smoothing}"
        )));
    }
    let mut first_counts = vec![0.0_f64; vocab];
    let mut transition_counts = vec![vec![0.0_f64; vocab]; vocab];
    for sample in samples {
        let seq = match &sample.x {
            Covariate::Tokens(seq) => seq,
            other => {
                return Err(Error::TypeMismatch(format!(
                    "markov proxy needs sequence samples, got {other:?}"
                )))
            }
        };
        if seq.is_empty() || seq.len() > max_len {
            return Err(Error::InvalidParameter(format!(
                "sequence length {} outside 1..={max_len}",
                seq.len()
            )));
        }
        if let Some(&bad) = seq.iter().find(|&&t| t as usize >= vocab) {
            return Err(Error::InvalidParameter(format!(
                "token {bad} outside vocabulary of size {vocab}"
            )));
        }
        first_counts[seq[0] as usize] += 1.0;
        for pair in seq.windows(2) {
            transition_counts[pair[0] as usize][pair[1] as usize] += 1.0;
        }
    }

    let initial: Vec<f64> = first_counts
        .iter()
        .map(|&c| (c + smoothing) / (samples.len() as f64 + vocab as f64 * smoothing))
        .collect();
    let mut transitions = Vec::with_capacity(vocab);
    for (state, row) in transition_counts.iter().enumerate() {
        let total: f64 = row.iter().sum();
        let denom = total + vocab as f64 * smoothing;
        if denom <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "state {state} was never observed and smoothing is zero; \
                 its transition row is undefined"
            )));
        }
        transitions.push(row.iter().map(|&c| (c + smoothing) / denom).collect());
    }
    MarkovChainSpec::new(initial, transitions, max_len)
}

/// Gaussian product-kernel density estimate with Scott's bandwidth
/// `h_j = σ̂_j · n^(−1/(d+4))` per dimension (unbiased standard deviation).
#[derive(Clone, Debug, Serialize)]
pub struct KdeModel {
    points: Vec<Vec<f64>>,
    bandwidths: Vec<f64>,
}

pub fn fit_kde(points: &[Vec<f64>]) -> Result<KdeModel> {
    let n = points.len();
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "KDE needs at least two points, got {n}"
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch(
            "KDE points must share a positive dimension".into(),
        ));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("KDE points must be finite".into()));
    }
    let scale = (n as f64).powf(-1.0 / (dim as f64 + 4.0));
    let mut bandwidths = Vec::with_capacity(dim);
    for j in 0..dim {
        let mean = points.iter().map(|p| p[j]).sum::<f64>() / n as f64;
        let variance =
            points.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        if variance <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "dimension {j} has zero sample variance; its bandwidth is undefined"
            )));
        }
        bandwidths.push(variance.sqrt() * scale);
    }
    Ok(KdeModel { points: points.to_vec(), bandwidths })
}

impl KdeModel {
    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.bandwidths.len()
    }

    /// Density estimate `(1/n) Σ_i Π_j φ((x_j − x_{i,j})/h_j)/h_j`.
    pub fn density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::DimensionMismatch(format!(
                "query dimension {} vs model dimension {}",
                x.len(),
                self.dimension()
            )));
        }
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let mut total = 0.0;
        for point in &self.points {
            let mut kernel = 1.0;
            for ((xj, pj), h) in x.iter().zip(point).zip(&self.bandwidths) {
                let z = (xj - pj) / h;
                kernel *= (-0.5 * z * z).exp() / (norm * h);
            }
            total += kernel;
        }
        Ok(total / self.points.len() as f64)
    }

    /// Wrap as a density function over point covariates, for building
    /// density-bearing oracles under covariate shift.
    pub fn into_density_fn(self) -> impl Fn(&Covariate) -> f64 + Send + Sync {
        move |x: &Covariate| match x {
            Covariate::Point(v) => self.density(v).unwrap_or(0.0),
            Covariate::Tokens(_) => 0.0,
        }
    }
}

/// Convenience free-function form of [`KdeModel::density`].
pub fn kde_density(model: &KdeModel, x: &[f64]) -> Result<f64> {
    model.density(x)
}

/// Fits one group's proxy oracle from its proxy-part samples.
pub trait ProxyFitter {
    fn fit(&self, samples: &[Sample]) -> Result<GroupOracle>;
}

/// Markov-family proxy: transition counting with additive smoothing.
#[derive(Clone, Copy, Debug)]
pub struct MarkovProxyFitter {
    pub vocab: usize,
    pub max_len: usize,
    pub smoothing: f64,
}

impl MarkovProxyFitter {
    pub fn new(vocab: usize, max_len: usize) -> Self {
        Self { vocab, max_len, smoothing: DEFAULT_SMOOTHING }
    }

    pub fn fit_spec(&self, samples: &[Sample]) -> Result<MarkovChainSpec> {
        fit_markov_proxy(samples, self.vocab, self.max_len, self.smoothing)
    }
}

impl ProxyFitter for MarkovProxyFitter {
    fn fit(&self, samples: &[Sample]) -> Result<GroupOracle> {
        Ok(self.fit_spec(samples)?.as_oracle())
    }
}

/// A solve over fitted proxies, tagged with the plan that produced it.
#[derive(Clone, Debug, Serialize)]
pub struct E2Report {
    pub plan: SplitPlan,
    pub report: SolveReport,
}

/// Fit per-group proxies on each group's proxy part and run the solver on the
/// gradient part. Under data reuse both parts are the full group data.
pub fn e2mixmax(
    data: &GroupDatasets,
    plan: &SplitPlan,
    fitter: &dyn ProxyFitter,
    shift_mode: ShiftMode,
    loss_kind: LossKind,
    config: &SolverConfig,
) -> Result<E2Report> {
    if data.heldout().is_some() {
        return Err(Error::InvalidParameter(
            "datasets with explicit held-out parts use e2mixmax_heldout".into(),
        ));
    }
    let mut oracles = Vec::with_capacity(data.group_count());
    let mut gradient_groups = Vec::with_capacity(data.group_count());
    for (p, samples) in data.groups().iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::EmptyGroup(format!("group {p} has no samples")));
        }
        let (proxy_part, gradient_part) = plan.split_group(p, samples)?;
        oracles.push(fitter.fit(&proxy_part)?);
        gradient_groups.push(gradient_part);
    }
    let set = GroupOracleSet::new(oracles, shift_mode)?;
    let gradient_data = GroupDatasets::new(gradient_groups)?;
    let report = solve(&gradient_data, &set, loss_kind, config)?;
    Ok(E2Report { plan: plan.clone(), report })
}

/// Variant with explicit held-out fitting data: proxies are fitted on each
/// group's held-out samples and gradients estimated on the main samples.
pub fn e2mixmax_heldout(
    data: &GroupDatasets,
    fitter: &dyn ProxyFitter,
    shift_mode: ShiftMode,
    loss_kind: LossKind,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let heldout = data.heldout().ok_or_else(|| {
        Error::InvalidParameter("datasets carry no held-out parts to fit proxies on".into())
    })?;
    let mut oracles = Vec::with_capacity(data.group_count());
    for (p, samples) in heldout.iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::EmptyGroup(format!("held-out part of group {p} is empty")));
        }
        oracles.push(fitter.fit(samples)?);
    }
    let set = GroupOracleSet::new(oracles, shift_mode)?;
    solve(data, &set, loss_kind, config)
}
