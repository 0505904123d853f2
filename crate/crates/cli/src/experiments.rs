//! Named experiments over seeded, individually replayable trials.
//!
//! Every trial derives its seed from the master seed and a documented counter
//! (see [`crate::config`]), tasks may run on a worker pool, and rows are
//! emitted in deterministic trial order regardless of completion order. A
//! failing trial contributes rows with `status` describing the error; the run
//! continues.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::bail;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;

use mixmax_core::baselines::Baseline;
use mixmax_core::estimation::{e2mixmax, MarkovProxyFitter, SplitMode, SplitPlan, DEFAULT_SMOOTHING};
use mixmax_core::losses::LossKind;
use mixmax_core::mixture::ShiftMode;
use mixmax_core::objective::mixmax_objective;
use mixmax_core::seeds::derive_seed;
use mixmax_core::simplex::MixtureWeights;
use mixmax_core::solver::solve;
use mixmax_core::synthetic::{
    markov_group_datasets, markov_oracle_set, MarkovChainSpec, ToyFamily, ToySpec, DEFAULT_MAX_LEN,
    DEFAULT_VOCAB,
};
use mixmax_core::verify::worst_group_eval;

use crate::config::{self, ExperimentConfig, RunManifest};
use crate::output::{format_float, sanitize_field, write_text, CsvTable};

// Within-trial seed streams.
const DATA_STREAM: u64 = 0;
const SOLVER_STREAM: u64 = 1;
const SPLIT_STREAM: u64 = 2;

#[derive(Debug)]
pub struct RunOutcome {
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
    pub chains_path: Option<PathBuf>,
    pub rows: usize,
    pub row_failures: usize,
}

/// Execute a config end to end: run trials, write `<experiment>.csv`,
/// `<experiment>_manifest.json`, and (for sequence experiments)
/// `<experiment>_chains.json` under `out_dir`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<RunOutcome> {
    config::validate(config)?;
    let baselines = parse_baselines(&config.baselines)?;
    let built = match config.experiment.as_str() {
        "toy_ce_mirror" => run_toy(config, &baselines, ToySpec::ce_mirror(), workers)?,
        "toy_ce_shifted" => run_toy(config, &baselines, ToySpec::ce_shifted(), workers)?,
        "toy_regression_low" => run_toy(config, &baselines, ToySpec::regression_low(), workers)?,
        "toy_regression_high" => run_toy(config, &baselines, ToySpec::regression_high(), workers)?,
        "markov_magnitudes" => run_markov_magnitudes(config, &baselines, workers)?,
        "markov_split_comparison" => run_split_comparison(config, workers)?,
        other => bail!("unknown experiment '{other}'"),
    };

    let csv_path = write_text(out_dir, &format!("{}.csv", config.experiment), &built.table.to_csv())?;
    let manifest = RunManifest {
        config: config.clone(),
        seeds: built.seeds,
        version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let manifest_path = write_text(
        out_dir,
        &format!("{}_manifest.json", config.experiment),
        &format!("{}\n", serde_json::to_string_pretty(&manifest)?),
    )?;
    let chains_path = match built.chains_json {
        Some(json) => Some(write_text(
            out_dir,
            &format!("{}_chains.json", config.experiment),
            &json,
        )?),
        None => None,
    };
    Ok(RunOutcome {
        csv_path,
        manifest_path,
        chains_path,
        rows: built.table.row_count(),
        row_failures: built.row_failures,
    })
}

struct BuiltTable {
    table: CsvTable,
    seeds: Vec<u64>,
    chains_json: Option<String>,
    row_failures: usize,
}

fn parse_baselines(names: &[String]) -> anyhow::Result<Vec<Baseline>> {
    names
        .iter()
        .map(|name| {
            name.parse::<Baseline>()
                .map_err(|e| anyhow::anyhow!("bad baseline: {e}"))
        })
        .collect()
}

fn lambda_headers(groups: usize) -> Vec<String> {
    (1..=groups).map(|i| format!("lambda_{i}")).collect()
}

fn lambda_fields(weights: &MixtureWeights) -> Vec<String> {
    weights.as_slice().iter().map(|&w| format_float(w)).collect()
}

fn nan_fields(count: usize) -> Vec<String> {
    vec!["nan".to_string(); count]
}

/// Weights for one method, plus the solver's converged flag when applicable.
fn method_weights(
    baseline: Baseline,
    data: &mixmax_core::objective::GroupDatasets,
    set: &mixmax_core::mixture::GroupOracleSet,
    loss: LossKind,
    config: &ExperimentConfig,
    trial_seed: u64,
) -> mixmax_core::Result<(MixtureWeights, String)> {
    let groups = set.group_count();
    match baseline {
        Baseline::MixMax => {
            let mut solver = config.solver.clone();
            solver.seed = derive_seed(trial_seed, SOLVER_STREAM);
            let report = solve(data, set, loss, &solver)?;
            Ok((report.final_weights, report.converged.to_string()))
        }
        other => Ok((other.weights(groups)?, String::new())),
    }
}

fn run_toy(
    config: &ExperimentConfig,
    baselines: &[Baseline],
    spec: ToySpec,
    workers: usize,
) -> anyhow::Result<BuiltTable> {
    let loss = spec.loss_kind();
    let groups = spec.group_count();
    let classification = spec.family() == ToyFamily::BinaryCosine;
    let samples_per_group = config.family.samples_per_group.unwrap_or(10_000);

    let mut header = vec!["trial".to_string(), "method".to_string()];
    header.extend(lambda_headers(groups));
    header.push("objective".into());
    header.push("worst_group_loss".into());
    if classification {
        header.push("worst_group_accuracy".into());
    }
    header.push("converged".into());
    header.push("status".into());

    let seeds: Vec<u64> = (0..config.trials)
        .map(|t| derive_seed(config.master_seed, t as u64))
        .collect();

    let trial_rows = parallel_map(config.trials, workers, |trial| {
        let trial_seed = seeds[trial];
        let mut rows = Vec::new();
        let prepared: mixmax_core::Result<_> = (|| {
            let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, DATA_STREAM));
            let data = spec.sample_datasets(samples_per_group, &mut data_rng)?;
            let set = spec.oracle_set(ShiftMode::NoShift)?;
            Ok((data, set))
        })();
        match prepared {
            Err(error) => {
                let message = format!("error: {}", sanitize_field(&error.to_string()));
                for baseline in baselines {
                    let mut row = vec![trial.to_string(), baseline.to_string()];
                    row.extend(nan_fields(groups + 2 + usize::from(classification)));
                    row.push(String::new());
                    row.push(message.clone());
                    rows.push(row);
                }
            }
            Ok((data, set)) => {
                for baseline in baselines {
                    let mut row = vec![trial.to_string(), baseline.to_string()];
                    let result: mixmax_core::Result<Vec<String>> = (|| {
                        let (weights, converged) =
                            method_weights(*baseline, &data, &set, loss, config, trial_seed)?;
                        let objective = mixmax_objective(&weights, &data, &set, loss)?;
                        let worst = spec.exact_worst_group_loss(&weights, loss)?;
                        let mut fields = lambda_fields(&weights);
                        fields.push(format_float(objective));
                        fields.push(format_float(worst));
                        if classification {
                            let accuracy = spec
                                .exact_group_accuracies(&weights)?
                                .into_iter()
                                .fold(f64::INFINITY, f64::min);
                            fields.push(format_float(accuracy));
                        }
                        fields.push(converged);
                        fields.push("ok".into());
                        Ok(fields)
                    })();
                    match result {
                        Ok(fields) => row.extend(fields),
                        Err(error) => {
                            row.extend(nan_fields(groups + 2 + usize::from(classification)));
                            row.push(String::new());
                            row.push(format!("error: {}", sanitize_field(&error.to_string())));
                        }
                    }
                    rows.push(row);
                }
            }
        }
        rows
    });

    let mut table = CsvTable::new(header);
    let mut row_failures = 0;
    for rows in trial_rows {
        for row in rows {
            if row.last().map(|s| s.starts_with("error")) == Some(true) {
                row_failures += 1;
            }
            table.push(row);
        }
    }
    Ok(BuiltTable { table, seeds, chains_json: None, row_failures })
}

#[derive(Serialize)]
struct ChainRecord {
    magnitude: f64,
    trial: usize,
    seed: u64,
    chains: Vec<MarkovChainSpec>,
}

fn run_markov_magnitudes(
    config: &ExperimentConfig,
    baselines: &[Baseline],
    workers: usize,
) -> anyhow::Result<BuiltTable> {
    let vocab = config.family.vocab.unwrap_or(DEFAULT_VOCAB);
    let max_len = config.family.max_len.unwrap_or(DEFAULT_MAX_LEN);
    let groups = config.family.groups.unwrap_or(3);
    let magnitudes = config
        .family
        .magnitudes
        .clone()
        .unwrap_or_else(|| vec![1.0, 3.0, 5.0, 7.0, 10.0]);
    let train_per_length = config.family.samples_per_length.unwrap_or(800);
    let test_per_length = config.family.test_samples_per_length.unwrap_or(200);

    let mut header = vec![
        "magnitude".to_string(),
        "trial".to_string(),
        "method".to_string(),
    ];
    header.extend(lambda_headers(groups));
    header.push("objective".into());
    header.push("worst_group_loss".into());
    header.push("converged".into());
    header.push("status".into());

    let tasks: Vec<(usize, usize)> = (0..magnitudes.len())
        .flat_map(|m| (0..config.trials).map(move |t| (m, t)))
        .collect();
    let seeds: Vec<u64> = tasks
        .iter()
        .map(|&(m, t)| derive_seed(config.master_seed, m as u64 * 1_000_000 + t as u64))
        .collect();

    let outputs = parallel_map(tasks.len(), workers, |index| {
        let (magnitude_index, trial) = tasks[index];
        let magnitude = magnitudes[magnitude_index];
        let trial_seed = seeds[index];
        let mut rows = Vec::new();
        let mut chain_record = None;
        let prepared: mixmax_core::Result<_> = (|| {
            let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, DATA_STREAM));
            let chains: Vec<MarkovChainSpec> = (0..groups)
                .map(|_| MarkovChainSpec::sample(vocab, max_len, magnitude, &mut data_rng))
                .collect::<mixmax_core::Result<_>>()?;
            let train = markov_group_datasets(&chains, train_per_length, &mut data_rng)?;
            let test = markov_group_datasets(&chains, test_per_length, &mut data_rng)?;
            let set = markov_oracle_set(&chains)?;
            Ok((chains, train, test, set))
        })();
        match prepared {
            Err(error) => {
                let message = format!("error: {}", sanitize_field(&error.to_string()));
                for baseline in baselines {
                    let mut row = vec![
                        format_float(magnitude),
                        trial.to_string(),
                        baseline.to_string(),
                    ];
                    row.extend(nan_fields(groups + 2));
                    row.push(String::new());
                    row.push(message.clone());
                    rows.push(row);
                }
            }
            Ok((chains, train, test, set)) => {
                chain_record = Some(ChainRecord {
                    magnitude,
                    trial,
                    seed: trial_seed,
                    chains,
                });
                for baseline in baselines {
                    let mut row = vec![
                        format_float(magnitude),
                        trial.to_string(),
                        baseline.to_string(),
                    ];
                    let result: mixmax_core::Result<Vec<String>> = (|| {
                        let (weights, converged) = method_weights(
                            *baseline,
                            &train,
                            &set,
                            LossKind::CrossEntropy,
                            config,
                            trial_seed,
                        )?;
                        let objective =
                            mixmax_objective(&weights, &train, &set, LossKind::CrossEntropy)?;
                        let report =
                            worst_group_eval(&weights, &test, &set, LossKind::CrossEntropy)?;
                        let mut fields = lambda_fields(&weights);
                        fields.push(format_float(objective));
                        fields.push(format_float(report.worst_loss));
                        fields.push(converged);
                        fields.push("ok".into());
                        Ok(fields)
                    })();
                    match result {
                        Ok(fields) => row.extend(fields),
                        Err(error) => {
                            row.extend(nan_fields(groups + 2));
                            row.push(String::new());
                            row.push(format!("error: {}", sanitize_field(&error.to_string())));
                        }
                    }
                    rows.push(row);
                }
            }
        }
        (rows, chain_record)
    });

    let mut table = CsvTable::new(header);
    let mut row_failures = 0;
    let mut records = Vec::new();
    for (rows, record) in outputs {
        for row in rows {
            if row.last().map(|s| s.starts_with("error")) == Some(true) {
                row_failures += 1;
            }
            table.push(row);
        }
        if let Some(record) = record {
            records.push(record);
        }
    }
    let chains_json = format!("{}\n", serde_json::to_string_pretty(&records)?);
    Ok(BuiltTable { table, seeds, chains_json: Some(chains_json), row_failures })
}

fn run_split_comparison(config: &ExperimentConfig, workers: usize) -> anyhow::Result<BuiltTable> {
    let vocab = config.family.vocab.unwrap_or(DEFAULT_VOCAB);
    let max_len = config.family.max_len.unwrap_or(DEFAULT_MAX_LEN);
    let groups = config.family.groups.unwrap_or(3);
    let magnitude = config
        .family
        .magnitudes
        .as_ref()
        .and_then(|m| m.first().copied())
        .unwrap_or(1.0);
    let samples_per_length = config.family.samples_per_length.unwrap_or(800);
    let smoothing = config.family.smoothing.unwrap_or(DEFAULT_SMOOTHING);
    let modes = if config.split_modes.is_empty() {
        vec![
            SplitMode::DataReuse,
            SplitMode::Split { proxy_fraction: 0.75 },
        ]
    } else {
        config.split_modes.clone()
    };

    let mut header = vec![
        "samples_per_length".to_string(),
        "plan".to_string(),
        "trial".to_string(),
    ];
    header.extend(lambda_headers(groups));
    header.push("objective".into());
    header.push("converged".into());
    header.push("status".into());

    let seeds: Vec<u64> = (0..config.trials)
        .map(|t| derive_seed(config.master_seed, t as u64))
        .collect();

    let outputs = parallel_map(config.trials, workers, |trial| {
        let trial_seed = seeds[trial];
        let mut rows = Vec::new();
        let mut chain_record = None;
        let prepared: mixmax_core::Result<_> = (|| {
            let mut data_rng = ChaCha8Rng::seed_from_u64(derive_seed(trial_seed, DATA_STREAM));
            let chains: Vec<MarkovChainSpec> = (0..groups)
                .map(|_| MarkovChainSpec::sample(vocab, max_len, magnitude, &mut data_rng))
                .collect::<mixmax_core::Result<_>>()?;
            let data = markov_group_datasets(&chains, samples_per_length, &mut data_rng)?;
            let exact_set = markov_oracle_set(&chains)?;
            Ok((chains, data, exact_set))
        })();
        match prepared {
            Err(error) => {
                let message = format!("error: {}", sanitize_field(&error.to_string()));
                for mode in &modes {
                    let plan = SplitPlan { mode: *mode, seed: 0 };
                    let mut row = vec![
                        samples_per_length.to_string(),
                        plan.name(),
                        trial.to_string(),
                    ];
                    row.extend(nan_fields(groups + 1));
                    row.push(String::new());
                    row.push(message.clone());
                    rows.push(row);
                }
            }
            Ok((chains, data, exact_set)) => {
                chain_record = Some(ChainRecord { magnitude, trial, seed: trial_seed, chains });
                let fitter = MarkovProxyFitter { vocab, max_len, smoothing };
                for mode in &modes {
                    let plan = SplitPlan {
                        mode: *mode,
                        seed: derive_seed(trial_seed, SPLIT_STREAM),
                    };
                    let mut row = vec![
                        samples_per_length.to_string(),
                        plan.name(),
                        trial.to_string(),
                    ];
                    let result: mixmax_core::Result<Vec<String>> = (|| {
                        let mut solver = config.solver.clone();
                        solver.seed = derive_seed(trial_seed, SOLVER_STREAM);
                        let e2 = e2mixmax(
                            &data,
                            &plan,
                            &fitter,
                            ShiftMode::NoShift,
                            LossKind::CrossEntropy,
                            &solver,
                        )?;
                        // Objective of the returned weights under exact
                        // oracles on the full training data.
                        let objective = mixmax_objective(
                            &e2.report.final_weights,
                            &data,
                            &exact_set,
                            LossKind::CrossEntropy,
                        )?;
                        let mut fields = lambda_fields(&e2.report.final_weights);
                        fields.push(format_float(objective));
                        fields.push(e2.report.converged.to_string());
                        fields.push("ok".into());
                        Ok(fields)
                    })();
                    match result {
                        Ok(fields) => row.extend(fields),
                        Err(error) => {
                            row.extend(nan_fields(groups + 1));
                            row.push(String::new());
                            row.push(format!("error: {}", sanitize_field(&error.to_string())));
                        }
                    }
                    rows.push(row);
                }
            }
        }
        (rows, chain_record)
    });

    let mut table = CsvTable::new(header);
    let mut row_failures = 0;
    let mut records = Vec::new();
    for (rows, record) in outputs {
        for row in rows {
            if row.last().map(|s| s.starts_with("error")) == Some(true) {
                row_failures += 1;
            }
            table.push(row);
        }
        if let Some(record) = record {
            records.push(record);
        }
    }
    let chains_json = format!("{}\n", serde_json::to_string_pretty(&records)?);
    Ok(BuiltTable { table, seeds, chains_json: Some(chains_json), row_failures })
}

/// Run `f` over 0..count on up to `workers` threads; results keep index order.
pub fn parallel_map<T, F>(count: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.max(1).min(count.max(1));
    if workers <= 1 {
        return (0..count).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..count).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, Ordering::Relaxed);
                if index >= count {
                    break;
                }
                let value = f(index);
                slots.lock().expect("no poisoned worker")[index] = Some(value);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned worker")
        .into_iter()
        .map(|slot| slot.expect("every index visited"))
        .collect()
}
