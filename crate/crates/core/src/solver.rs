//! Entropic mirror ascent driver: iterate gradient → multiplicative step,
//! with convergence monitoring.
//!
//! Convergence (successive objective change within tolerance) is monitored but
//! does not stop the run by default — reference settings use fixed step
//! counts. `early_stop` opts into halting at the first converged step for
//! step-count tuning studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::LossKind;
use crate::mixture::GroupOracleSet;
use crate::objective::{sample_batches, GroupDatasets, PreparedProblem};
use crate::simplex::MixtureWeights;

fn default_convergence_tol() -> f64 {
    0.01
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Mirror ascent step size η.
    pub step_size: f64,
    /// Number of steps n.
    pub max_steps: usize,
    /// Per-group minibatch size; absent means full-data gradients.
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Threshold on |J(λ_i) − J(λ_{i−1})| for the converged flag.
    #[serde(default = "default_convergence_tol")]
    pub convergence_tol: f64,
    /// Stop at the first converged step instead of running all n.
    #[serde(default)]
    pub early_stop: bool,
    /// Seed for minibatch sampling.
    #[serde(default)]
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(step_size: f64, max_steps: usize) -> Self {
        Self {
            step_size,
            max_steps,
            batch_size: None,
            convergence_tol: default_convergence_tol(),
            early_stop: false,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = Some(batch_size);
        self
    }

    fn validate(&self) -> Result<()> {
        if !self.step_size.is_finite() || self.step_size <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "step size must be positive and finite, got {}",
                self.step_size
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("step count must be >= 1".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidParameter("batch size must be >= 1".into()));
        }
        if !self.convergence_tol.is_finite() || self.convergence_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "convergence tolerance must be nonnegative, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryPoint {
    pub step: usize,
    pub weights: MixtureWeights,
    pub objective: f64,
    /// ℓ2 norm of the gradient that produced this step (absent at step 0).
    pub gradient_norm: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub final_weights: MixtureWeights,
    pub trajectory: Vec<TrajectoryPoint>,
    pub converged: bool,
    pub steps_taken: usize,
}

impl SolveReport {
    /// |J_n − J_{n−1}| over the last recorded step.
    pub fn last_objective_change(&self) -> Option<f64> {
        let n = self.trajectory.len();
        if n < 2 {
            return None;
        }
        Some((self.trajectory[n - 1].objective - self.trajectory[n - 2].objective).abs())
    }

    pub fn final_objective(&self) -> f64 {
        self.trajectory
            .last()
            .expect("trajectory includes step 0")
            .objective
    }
}

/// Run mirror ascent from uniform weights.
pub fn solve(
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    let initial = MixtureWeights::uniform(problem.group_count())?;
    solve_prepared(&problem, initial, config)
}

/// Run mirror ascent from explicit starting weights (used to continue a
/// finished run with a smaller step size).
pub fn solve_from(
    initial: MixtureWeights,
    data: &GroupDatasets,
    set: &GroupOracleSet,
    loss_kind: LossKind,
    config: &SolverConfig,
) -> Result<SolveReport> {
    let problem = PreparedProblem::new(data, set, loss_kind)?;
    solve_prepared(&problem, initial, config)
}

/// Mirror ascent over an already-prepared problem.
pub fn solve_prepared(
    problem: &PreparedProblem,
    initial: MixtureWeights,
    config: &SolverConfig,
) -> Result<SolveReport> {
    config.validate()?;
    if initial.len() != problem.group_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} initial weights for {} groups",
            initial.len(),
            problem.group_count()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut weights = initial;
    let mut objective = problem.objective(&weights)?;
    if !objective.is_finite() {
        return Err(Error::Numeric(format!(
            "objective not finite at the starting point: {objective}"
        )));
    }
    let mut trajectory = vec![TrajectoryPoint {
        step: 0,
        weights: weights.clone(),
        objective,
        gradient_norm: None,
    }];
    let mut converged = false;
    let mut steps_taken = 0;

    for step in 1..=config.max_steps {
        let gradient = match config.batch_size {
            None => problem.gradient(&weights)?,
            Some(batch_size) => {
                let batches = sample_batches(problem, batch_size, &mut rng);
                problem.gradient_on_batches(&weights, &batches)?
            }
        };
        let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        weights = weights.mirror_ascent_step(&gradient, config.step_size)?;
        let next = problem.objective(&weights)?;
        if !next.is_finite() {
            return Err(Error::Numeric(format!(
                "objective diverged at step {step}: {next}"
            )));
        }
        if (next - objective).abs() <= config.convergence_tol {
            converged = true;
        }
        objective = next;
        steps_taken = step;
        trajectory.push(TrajectoryPoint {
            step,
            weights: weights.clone(),
            objective,
            gradient_norm: Some(norm),
        });
        if converged && config.early_stop {
            break;
        }
    }

    Ok(SolveReport {
        final_weights: weights,
        trajectory,
        converged,
        steps_taken,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{Covariate, ShiftMode};
    use crate::objective::Sample;
    use crate::losses::Target;
    use crate::synthetic::{markov_group_datasets, markov_oracle_set, MarkovChainSpec, ToySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn markov_problem(
        seed: u64,
        groups: usize,
        n_per_length: usize,
    ) -> (GroupDatasets, crate::mixture::GroupOracleSet) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chains: Vec<MarkovChainSpec> = (0..groups)
            .map(|_| MarkovChainSpec::sample(4, 10, 1.0, &mut rng).unwrap())
            .collect();
        let set = markov_oracle_set(&chains).unwrap();
        let data = markov_group_datasets(&chains, n_per_length, &mut rng).unwrap();
        (data, set)
    }

    #[test]
    fn identical_groups_stay_uniform() {
        let chain = MarkovChainSpec::sample(4, 6, 1.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let chains = vec![chain.clone(), chain.clone(), chain];
        let set = markov_oracle_set(&chains).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let samples = chains[0].sample_sequences(40, &mut rng);
        let group: Vec<Sample> = samples
            .into_iter()
            .map(|s| Sample::new(Covariate::Tokens(s), Target::Observed))
            .collect();
        let data = GroupDatasets::new(vec![group.clone(), group.clone(), group]).unwrap();

        let report = solve(
            &data,
            &set,
            LossKind::CrossEntropy,
            &SolverConfig::new(2.0, 10),
        )
        .unwrap();
        for point in &report.trajectory {
            for &w in point.weights.as_slice() {
                assert!((w - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let (data, set) = markov_problem(7, 3, 50);
        let config = SolverConfig::new(2.0, 10).with_seed(99).with_batch_size(20);
        let a = solve(&data, &set, LossKind::CrossEntropy, &config).unwrap();
        let b = solve(&data, &set, LossKind::CrossEntropy, &config).unwrap();
        assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (pa, pb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(pa.weights, pb.weights);
            assert_eq!(pa.objective.to_bits(), pb.objective.to_bits());
        }
    }

    #[test]
    fn small_steps_increase_the_objective_monotonically() {
        let (data, set) = markov_problem(11, 3, 50);
        let report = solve(
            &data,
            &set,
            LossKind::CrossEntropy,
            &SolverConfig::new(0.01, 50),
        )
        .unwrap();
        for pair in report.trajectory.windows(2) {
            assert!(pair[1].objective >= pair[0].objective - 1e-7);
        }
    }

    #[test]
    fn final_objective_beats_uniform() {
        // Sequence-task setting: 10 steps at η = 2.
        let (data, set) = markov_problem(13, 3, 80);
        let uniform = MixtureWeights::uniform(3).unwrap();
        let at_uniform =
            crate::objective::mixmax_objective(&uniform, &data, &set, LossKind::CrossEntropy)
                .unwrap();
        let report = solve(
            &data,
            &set,
            LossKind::CrossEntropy,
            &SolverConfig::new(2.0, 10),
        )
        .unwrap();
        assert!(report.final_objective() >= at_uniform - 1e-9);

        // Tabular-style setting: 20 steps at η = 0.1, regression toy.
        let spec = ToySpec::regression_high();
        let toy_set = spec.oracle_set(ShiftMode::NoShift).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let toy_data = spec.sample_datasets(2000, &mut rng).unwrap();
        let at_uniform = crate::objective::mixmax_objective(
            &MixtureWeights::uniform(3).unwrap(),
            &toy_data,
            &toy_set,
            LossKind::SquaredError,
        )
        .unwrap();
        let report = solve(
            &toy_data,
            &toy_set,
            LossKind::SquaredError,
            &SolverConfig::new(0.1, 20),
        )
        .unwrap();
        assert!(report.final_objective() >= at_uniform - 1e-9);
    }

    #[test]
    fn trajectory_starts_at_step_zero_and_counts_steps() {
        let (data, set) = markov_problem(17, 2, 30);
        let report = solve(
            &data,
            &set,
            LossKind::CrossEntropy,
            &SolverConfig::new(2.0, 10),
        )
        .unwrap();
        assert_eq!(report.trajectory[0].step, 0);
        assert!(report.trajectory[0].gradient_norm.is_none());
        assert_eq!(report.trajectory.len(), 11);
        assert_eq!(report.steps_taken, 10);
        assert_eq!(
            report.final_weights,
            report.trajectory.last().unwrap().weights
        );
    }

    #[test]
    fn early_stop_halts_at_first_convergence() {
        let (data, set) = markov_problem(19, 2, 50);
        let mut config = SolverConfig::new(0.5, 200);
        config.convergence_tol = 0.001;
        config.early_stop = true;
        let report = solve(&data, &set, LossKind::CrossEntropy, &config).unwrap();
        assert!(report.converged);
        assert!(report.steps_taken < 200);
        assert!(report.last_objective_change().unwrap() <= 0.001);
    }

    #[test]
    fn mirror_toy_recovers_balanced_weights() {
        let spec = ToySpec::ce_mirror();
        let set = spec.oracle_set(ShiftMode::NoShift).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = spec.sample_datasets(10_000, &mut rng).unwrap();
        let report = solve(
            &data,
            &set,
            LossKind::CrossEntropy,
            &SolverConfig::new(0.5, 100),
        )
        .unwrap();
        let target = MixtureWeights::uniform(2).unwrap();
        let l1 = report.final_weights.l1_distance(&target).unwrap();
        assert!(l1 <= 0.01, "final {:?}", report.final_weights);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let (data, set) = markov_problem(29, 2, 10);
        for config in [
            SolverConfig::new(0.0, 10),
            SolverConfig::new(f64::NAN, 10),
            SolverConfig::new(1.0, 0),
            SolverConfig::new(1.0, 10).with_batch_size(0),
        ] {
            assert!(solve(&data, &set, LossKind::CrossEntropy, &config).is_err());
        }
    }
}
