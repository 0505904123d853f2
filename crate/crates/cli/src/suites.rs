//! Verification suites: each runs an independent check at default parameters,
//! prints its worst margin, and reports pass/fail.

use anyhow::bail;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mixmax_core::losses::LossKind;
use mixmax_core::mixture::ShiftMode;
use mixmax_core::objective::PreparedProblem;
use mixmax_core::seeds::derive_seed;
use mixmax_core::simplex::MixtureWeights;
use mixmax_core::solver::{solve_prepared, SolverConfig};
use mixmax_core::synthetic::{markov_group_datasets, markov_oracle_set, MarkovChainSpec, ToySpec};
use mixmax_core::verify::{
    concavity_probe, finite_diff_gradient_prepared, grid_search_prepared, tangent_component,
    unbiasedness_test, GridSpec,
};

pub const KNOWN_SUITES: &[&str] = &["gradients", "concavity", "unbiasedness", "oracle"];

pub const DEFAULT_SEED: u64 = 20_240_601;

/// Run a named suite; returns whether it passed.
pub fn run_suite(name: &str, seed: u64) -> anyhow::Result<bool> {
    match name {
        "gradients" => gradients_suite(seed),
        "concavity" => concavity_suite(seed),
        "unbiasedness" => unbiasedness_suite(seed),
        "oracle" => oracle_suite(seed),
        other => bail!("unknown suite '{other}'; known: {}", KNOWN_SUITES.join(", ")),
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn interior_weights(groups: usize, rng: &mut ChaCha8Rng) -> MixtureWeights {
    loop {
        let candidate = MixtureWeights::sample_dirichlet(groups, 1.0, rng)
            .expect("valid Dirichlet parameters");
        if candidate.as_slice().iter().all(|&w| w > 1e-3) {
            return candidate;
        }
    }
}

/// Analytic gradients against central finite differences (h = 1e-5) on Markov
/// and toy problems.
fn gradients_suite(seed: u64) -> anyhow::Result<bool> {
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut check = |problem: &PreparedProblem, rng: &mut ChaCha8Rng| -> anyhow::Result<()> {
        for _ in 0..5 {
            let weights = interior_weights(problem.group_count(), rng);
            let analytic = problem.gradient(&weights)?;
            let fd = finite_diff_gradient_prepared(problem, &weights, step)?;
            for (&(i, j), &numeric) in fd.directions.iter().zip(&fd.derivatives) {
                worst = worst.max(relative_error(tangent_component(&analytic, i, j), numeric));
            }
        }
        Ok(())
    };

    for instance in 0..2u64 {
        let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, instance));
        let chains: Vec<MarkovChainSpec> = (0..3)
            .map(|_| MarkovChainSpec::sample(4, 10, 1.0, &mut data_rng))
            .collect::<mixmax_core::Result<_>>()?;
        let set = markov_oracle_set(&chains)?;
        let data = markov_group_datasets(&chains, 30, &mut data_rng)?;
        let problem = PreparedProblem::new(&data, &set, LossKind::CrossEntropy)?;
        check(&problem, &mut rng)?;
    }
    for name in ["ce_mirror", "ce_shifted", "regression_low", "regression_high"] {
        let spec = ToySpec::by_name(name)?;
        let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 100));
        let data = spec.sample_datasets(400, &mut data_rng)?;
        let set = spec.oracle_set(ShiftMode::NoShift)?;
        let problem = PreparedProblem::new(&data, &set, spec.loss_kind())?;
        check(&problem, &mut rng)?;
    }

    let pass = worst <= 1e-5;
    println!(
        "suite gradients: worst relative error {worst:.3e} (threshold 1.0e-5) — {}",
        verdict(pass)
    );
    Ok(pass)
}

/// Midpoint concavity on exact-oracle classification and regression problems.
fn concavity_suite(seed: u64) -> anyhow::Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for (spec, loss) in [
        (ToySpec::ce_mirror(), LossKind::CrossEntropy),
        (ToySpec::ce_shifted(), LossKind::CrossEntropy),
        (ToySpec::regression_low(), LossKind::SquaredError),
        (ToySpec::regression_high(), LossKind::SquaredError),
    ] {
        let data = spec.sample_datasets(2000, &mut rng)?;
        let set = spec.oracle_set(ShiftMode::NoShift)?;
        let report = concavity_probe(&data, &set, loss, 100, &mut rng)?;
        worst = worst.min(report.worst_violation);
    }
    let pass = worst >= -1e-9;
    println!(
        "suite concavity: worst violation {worst:.3e} (threshold -1.0e-9) — {}",
        verdict(pass)
    );
    Ok(pass)
}

/// Mean empirical gradient over fresh datasets against the enumerated
/// population gradient.
fn unbiasedness_suite(seed: u64) -> anyhow::Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chains: Vec<MarkovChainSpec> = (0..3)
        .map(|_| MarkovChainSpec::sample(3, 4, 1.0, &mut rng))
        .collect::<mixmax_core::Result<_>>()?;
    let weights = MixtureWeights::uniform(3)?;
    let report = unbiasedness_test(&chains, &weights, 400, 10, &mut rng)?;
    let worst_z = report
        .z_scores
        .iter()
        .fold(0.0f64, |acc, z| acc.max(z.abs()));
    println!(
        "suite unbiasedness: worst |z| {worst_z:.3} over {} resamples (threshold 3) — {}",
        report.datasets,
        verdict(report.pass)
    );
    Ok(report.pass)
}

/// Mirror ascent against the exhaustive simplex grid on seeded instances.
fn oracle_suite(seed: u64) -> anyhow::Result<bool> {
    let mut worst_l1: f64 = 0.0;
    let mut worst_gap: f64 = 0.0;
    for (instance, groups) in [(0u64, 2usize), (1, 2), (2, 3), (3, 3)] {
        let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, instance));
        let chains: Vec<MarkovChainSpec> = (0..groups)
            .map(|_| MarkovChainSpec::sample(4, 10, 1.0, &mut data_rng))
            .collect::<mixmax_core::Result<_>>()?;
        let set = markov_oracle_set(&chains)?;
        let data = markov_group_datasets(&chains, 100, &mut data_rng)?;
        let problem = PreparedProblem::new(&data, &set, LossKind::CrossEntropy)?;

        let coarse = solve_prepared(
            &problem,
            MixtureWeights::uniform(groups)?,
            &SolverConfig::new(2.0, 10),
        )?;
        let refined =
            solve_prepared(&problem, coarse.final_weights, &SolverConfig::new(0.5, 100))?;
        let grid = grid_search_prepared(&problem, &GridSpec::new(groups, 0.01)?)?;
        worst_l1 = worst_l1.max(refined.final_weights.l1_distance(&grid.best_weights)?);
        worst_gap = worst_gap.max((grid.best_objective - refined.final_objective()).abs());
    }
    let pass = worst_l1 <= 0.02 && worst_gap <= 1e-3;
    println!(
        "suite oracle: worst ℓ1 {worst_l1:.4} (threshold 0.02), worst objective gap \
         {worst_gap:.2e} (threshold 1.0e-3) — {}",
        verdict(pass)
    );
    Ok(pass)
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}
