//! High-level subcommand implementations shared by the binary and the
//! integration tests.

use std::path::Path;

use rtnet_core::data::{gen_pda_task, PdaTask};
use rtnet_core::train::{retention_report, train, TrainOutcome};

use crate::checkpoint::{save_checkpoint, CHECKPOINT_FILE};
use crate::config::{ExperimentConfig, SweepAxis};
use crate::dataset_io::{load_task, save_task};
use crate::error::{CliError, Result};
use crate::metrics::{fmt6, retention_csv, MetricsWriter};

/// Generates the synthetic task from the config's spec and writes the
/// three dataset files into `out`.
pub fn run_gen_task(config: &ExperimentConfig) -> Result<()> {
    let task = gen_pda_task(&config.task_spec)?;
    save_task(&task, &config.out_dir)?;
    Ok(())
}

/// Loads the configured task directory, or generates the task in memory
/// when no directory is set.
pub fn resolve_task(config: &ExperimentConfig) -> Result<PdaTask> {
    match &config.task_dir {
        Some(dir) => load_task(dir),
        None => Ok(gen_pda_task(&config.task_spec)?),
    }
}

/// Trains per the config and writes `metrics.csv`, `retention.csv`, and
/// `checkpoint.v1` into the output directory. Returns the outcome for
/// callers that inspect it directly.
pub fn run_train(config: &ExperimentConfig) -> Result<TrainOutcome> {
    let task = resolve_task(config)?;
    let mut writer = MetricsWriter::new();
    let outcome = train(
        &config.train,
        &task.source,
        task.target_train_inputs(),
        &task.target_test,
        &mut writer,
    )?;

    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("metrics.csv"), writer.into_csv())?;

    let report = retention_report(
        &outcome.model.selector,
        &outcome.model.da,
        &task.source,
        task.target_train_inputs(),
    )?;
    std::fs::write(config.out_dir.join("retention.csv"), retention_csv(&report))?;

    save_checkpoint(&outcome.model, &config.out_dir.join(CHECKPOINT_FILE))?;
    Ok(outcome)
}

/// Evaluates the checkpoint in the output directory on the task's target
/// test split and returns the accuracy.
pub fn run_eval(config: &ExperimentConfig) -> Result<f64> {
    let task = resolve_task(config)?;
    let model = crate::checkpoint::load_checkpoint(&config.out_dir.join(CHECKPOINT_FILE))?;
    Ok(rtnet_core::train::evaluate(&model.da, &task.target_test)?)
}

/// Recomputes the retention report from the checkpoint in the output
/// directory and rewrites `retention.csv` there.
pub fn run_report(config: &ExperimentConfig) -> Result<String> {
    let task = resolve_task(config)?;
    let model = crate::checkpoint::load_checkpoint(&config.out_dir.join(CHECKPOINT_FILE))?;
    let report = retention_report(
        &model.selector,
        &model.da,
        &task.source,
        task.target_train_inputs(),
    )?;
    let csv = retention_csv(&report);
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("retention.csv"), &csv)?;
    Ok(csv)
}

fn sanitize(value: &str) -> String {
    value
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// Runs one training per sweep point, each in its own subdirectory, and
/// writes `sweep.csv` with the axis value and final accuracy per row.
/// Failed points are recorded with an `error` status and the sweep
/// continues.
pub fn run_sweep(config: &ExperimentConfig) -> Result<String> {
    let points: Vec<(String, String, ExperimentConfig)> = match &config.sweep {
        SweepAxis::Gamma(values) => values
            .iter()
            .map(|&gamma| {
                let mut point = config.clone();
                point.train.rl.gamma = gamma;
                ("gamma".to_string(), fmt6(gamma), point)
            })
            .collect(),
        SweepAxis::Variant(variants) => variants
            .iter()
            .map(|&variant| {
                let mut point = config.clone();
                point.train.variant = variant;
                ("variant".to_string(), variant.name().to_string(), point)
            })
            .collect(),
        SweepAxis::Shared(sets) => sets
            .iter()
            .map(|shared| {
                let mut point = config.clone();
                point.task_spec.shared = shared.clone();
                // A stored task has fixed labels; shared sweeps regenerate.
                point.task_dir = None;
                let label = shared
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join("+");
                ("shared".to_string(), label, point)
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(CliError::Config("sweep axis has no values".into()));
    }

    let mut csv = String::from("axis,value,final_accuracy,status\n");
    for (axis, label, mut point) in points {
        point.out_dir = config.out_dir.join(format!("{axis}_{}", sanitize(&label)));
        match run_train(&point) {
            Ok(outcome) => {
                csv.push_str(&format!("{axis},{label},{},ok\n", fmt6(outcome.final_accuracy)))
            }
            Err(err) => csv.push_str(&format!("{axis},{label},,error: {err}\n")),
        }
    }
    std::fs::create_dir_all(&config.out_dir)?;
    std::fs::write(config.out_dir.join("sweep.csv"), &csv)?;
    Ok(csv)
}

/// Convenience for tests: data rows of a written metrics.csv.
pub fn metrics_data_rows(out_dir: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(out_dir.join("metrics.csv"))?;
    Ok(text.lines().skip(1).map(str::to_string).collect())
}
