//! Plain-text dataset persistence.
//!
//! Format (version `v1`):
//!
//! ```text
//! rtnet-dataset v1
//! domain source
//! samples 600
//! input_dim 8
//! <label> <x_1> ... <x_input_dim>     (one row per sample)
//! ```
//!
//! Floats are printed with Rust's shortest round-trip formatting, so
//! `load(save(d)) == d` bit-exactly. A task directory holds three files:
//! `source.txt`, `target_train.txt`, `target_test.txt`.

use std::path::Path;

use rtnet_core::data::{Dataset, Domain, PdaTask};
use rtnet_core::Tensor;

use crate::error::{CliError, Result};

const MAGIC: &str = "rtnet-dataset v1";

pub const SOURCE_FILE: &str = "source.txt";
pub const TARGET_TRAIN_FILE: &str = "target_train.txt";
pub const TARGET_TEST_FILE: &str = "target_test.txt";

pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("domain {}\n", dataset.domain.name()));
    out.push_str(&format!("samples {}\n", dataset.len()));
    out.push_str(&format!("input_dim {}\n", dataset.input_dim()));
    for i in 0..dataset.len() {
        out.push_str(&dataset.labels[i].to_string());
        for &v in dataset.inputs.row(i) {
            out.push(' ');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_error<T>(path: &Path, line_no: usize, msg: impl std::fmt::Display) -> Result<T> {
    Err(CliError::Config(format!(
        "{}:{line_no}: {msg}",
        path.display()
    )))
}

fn header_value<'a>(path: &Path, line_no: usize, line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let Some(line) = line else {
        return parse_error(path, line_no, "unexpected end of file");
    };
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v),
        _ => parse_error(path, line_no, format!("expected `{key} <value>`, got `{line}`")),
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();

    match lines.next() {
        Some(MAGIC) => {}
        other => {
            return parse_error(
                path,
                1,
                format!("expected header `{MAGIC}`, got `{}`", other.unwrap_or("")),
            )
        }
    }
    let domain = Domain::from_name(header_value(path, 2, lines.next(), "domain")?)?;
    let samples: usize = header_value(path, 3, lines.next(), "samples")?
        .parse()
        .map_err(|e| CliError::Config(format!("{}:3: bad sample count: {e}", path.display())))?;
    let input_dim: usize = header_value(path, 4, lines.next(), "input_dim")?
        .parse()
        .map_err(|e| CliError::Config(format!("{}:4: bad input_dim: {e}", path.display())))?;

    let mut labels = Vec::with_capacity(samples);
    let mut data = Vec::with_capacity(samples * input_dim);
    for row in 0..samples {
        let line_no = 5 + row;
        let Some(line) = lines.next() else {
            return parse_error(path, line_no, format!("truncated: expected {samples} rows"));
        };
        let mut fields = line.split(' ');
        let label: usize = match fields.next().map(str::parse) {
            Some(Ok(l)) => l,
            _ => return parse_error(path, line_no, "bad label"),
        };
        labels.push(label);
        let mut count = 0;
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| CliError::Config(format!("{}:{line_no}: bad value `{field}`", path.display())))?;
            data.push(v);
            count += 1;
        }
        if count != input_dim {
            return parse_error(path, line_no, format!("expected {input_dim} values, got {count}"));
        }
    }
    if lines.next().is_some() {
        return parse_error(path, 5 + samples, "trailing content after last row");
    }
    let inputs = Tensor::from_vec(&[samples, input_dim], data)?;
    Ok(Dataset::new(inputs, labels, domain)?)
}

/// Writes `source.txt`, `target_train.txt`, `target_test.txt` into `dir`,
/// creating it if needed. Target-train labels are persisted — the trainer
/// interface is what withholds them, not the file format.
pub fn save_task(task: &PdaTask, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_dataset(&task.source, &dir.join(SOURCE_FILE))?;
    save_dataset(task.target_train_for_eval(), &dir.join(TARGET_TRAIN_FILE))?;
    save_dataset(&task.target_test, &dir.join(TARGET_TEST_FILE))?;
    Ok(())
}

pub fn load_task(dir: &Path) -> Result<PdaTask> {
    let source = load_dataset(&dir.join(SOURCE_FILE))?;
    let target_train = load_dataset(&dir.join(TARGET_TRAIN_FILE))?;
    let target_test = load_dataset(&dir.join(TARGET_TEST_FILE))?;
    if target_train.domain != Domain::Target || target_test.domain != Domain::Target {
        return Err(CliError::Config(format!(
            "target files in {} must carry the target domain tag",
            dir.display()
        )));
    }
    if source.domain != Domain::Source {
        return Err(CliError::Config(format!(
            "{}/source.txt must carry the source domain tag",
            dir.display()
        )));
    }
    Ok(PdaTask::new(source, target_train, target_test))
}
