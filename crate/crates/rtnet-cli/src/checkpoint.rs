//! Versioned text checkpoints of all six trained networks.
//!
//! Layout (version `v1`, file name `checkpoint.v1`):
//!
//! ```text
//! rtnet-checkpoint v1
//! network feature
//! layers 2
//! layer 32 8 relu
//! w <32·8 weights, row-major, space-separated>
//! b <32 biases>
//! ...
//! ```
//!
//! Networks appear in the fixed order `feature`, `classifier`,
//! `gen_source`, `gen_target`, `policy`, `value`. Floats use shortest
//! round-trip formatting, so a save/load cycle reproduces parameters
//! bit-exactly. Optimizer state is not persisted: a checkpoint supports
//! evaluation and reporting, not resuming training mid-run.

use std::path::Path;

use rtnet_core::da::DaModel;
use rtnet_core::generators::GeneratorPair;
use rtnet_core::network::{Activation, DenseNetwork, Layer};
use rtnet_core::selector::Selector;
use rtnet_core::train::RtNet;
use rtnet_core::Tensor;

use crate::error::{CliError, Result};

const MAGIC: &str = "rtnet-checkpoint v1";

/// File name carrying the format version.
pub const CHECKPOINT_FILE: &str = "checkpoint.v1";

const NETWORK_NAMES: [&str; 6] = [
    "feature",
    "classifier",
    "gen_source",
    "gen_target",
    "policy",
    "value",
];

fn push_floats(out: &mut String, prefix: &str, values: &[f64]) {
    out.push_str(prefix);
    for &v in values {
        out.push(' ');
        out.push_str(&v.to_string());
    }
    out.push('\n');
}

fn write_network(out: &mut String, name: &str, net: &DenseNetwork) {
    out.push_str(&format!("network {name}\n"));
    out.push_str(&format!("layers {}\n", net.layers().len()));
    for layer in net.layers() {
        let w = layer.weights();
        out.push_str(&format!(
            "layer {} {} {}\n",
            w.rows(),
            w.cols(),
            layer.activation().name()
        ));
        push_floats(out, "w", w.data());
        push_floats(out, "b", layer.bias());
    }
}

pub fn save_checkpoint(model: &RtNet, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let nets = [
        &model.da.feature,
        &model.da.classifier,
        &model.generators.source,
        &model.generators.target,
        &model.selector.policy,
        &model.selector.value,
    ];
    for (name, net) in NETWORK_NAMES.iter().zip(nets) {
        write_network(&mut out, name, net);
    }
    std::fs::write(path, out)?;
    Ok(())
}

struct Parser<'a> {
    path: &'a Path,
    lines: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Parser<'a> {
    fn next(&mut self) -> Result<&'a str> {
        self.line_no += 1;
        self.lines
            .next()
            .ok_or_else(|| self.error("unexpected end of file"))
    }

    fn error(&self, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{}:{}: {msg}", self.path.display(), self.line_no))
    }

    fn expect_tagged(&mut self, tag: &str) -> Result<&'a str> {
        let line = self.next()?;
        match line.split_once(' ') {
            Some((t, rest)) if t == tag => Ok(rest),
            _ => Err(self.error(format!("expected `{tag} ...`, got `{line}`"))),
        }
    }

    fn floats(&mut self, tag: &str, expected: usize) -> Result<Vec<f64>> {
        let rest = self.expect_tagged(tag)?;
        let values: std::result::Result<Vec<f64>, _> =
            rest.split(' ').map(str::parse).collect();
        let values = values.map_err(|e| self.error(format!("bad float: {e}")))?;
        if values.len() != expected {
            return Err(self.error(format!("expected {expected} values, got {}", values.len())));
        }
        Ok(values)
    }

    fn network(&mut self, name: &str) -> Result<DenseNetwork> {
        let got = self.expect_tagged("network")?;
        if got != name {
            return Err(self.error(format!("expected network `{name}`, got `{got}`")));
        }
        let count: usize = self
            .expect_tagged("layers")?
            .parse()
            .map_err(|e| self.error(format!("bad layer count: {e}")))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let header = self.expect_tagged("layer")?;
            let mut parts = header.split(' ');
            let parse_dim = |p: Option<&str>| -> Option<usize> { p.and_then(|s| s.parse().ok()) };
            let (rows, cols) = match (parse_dim(parts.next()), parse_dim(parts.next())) {
                (Some(r), Some(c)) => (r, c),
                _ => return Err(self.error(format!("bad layer header `{header}`"))),
            };
            let activation = match parts.next() {
                Some(name) => Activation::from_name(name)?,
                None => return Err(self.error("missing activation")),
            };
            let weights = Tensor::from_vec(&[rows, cols], self.floats("w", rows * cols)?)?;
            let bias = self.floats("b", rows)?;
            layers.push(Layer::from_parts(weights, bias, activation)?);
        }
        Ok(DenseNetwork::from_layers(layers)?)
    }
}

pub fn load_checkpoint(path: &Path) -> Result<RtNet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut parser = Parser {
        path,
        lines: text.lines(),
        line_no: 0,
    };
    if parser.next()? != MAGIC {
        return Err(parser.error(format!("expected header `{MAGIC}`")));
    }
    let mut nets = Vec::with_capacity(6);
    for name in NETWORK_NAMES {
        nets.push(parser.network(name)?);
    }
    if parser.lines.next().is_some() {
        parser.line_no += 1;
        return Err(parser.error("trailing content after last network"));
    }
    let mut nets = nets.into_iter();
    let da = DaModel::from_networks(nets.next().unwrap(), nets.next().unwrap())?;
    let generators = GeneratorPair::from_networks(nets.next().unwrap(), nets.next().unwrap())?;
    let selector = Selector::from_networks(nets.next().unwrap(), nets.next().unwrap())?;
    Ok(RtNet {
        da,
        generators,
        selector,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rtnet_core::train::TrainConfig;

    fn fresh_model(seed: u64) -> RtNet {
        let config = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        RtNet::init(&config, 8, 6).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let model = fresh_model(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.da.feature, model.da.feature);
        assert_eq!(loaded.da.classifier, model.da.classifier);
        assert_eq!(loaded.generators.source, model.generators.source);
        assert_eq!(loaded.generators.target, model.generators.target);
        assert_eq!(loaded.selector.policy, model.selector.policy);
        assert_eq!(loaded.selector.value, model.selector.value);
    }

    #[test]
    fn truncated_checkpoint_is_located_error() {
        let model = fresh_model(6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        save_checkpoint(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().take(8).collect();
        std::fs::write(&path, lines.join("\n")).unwrap();
        let err = load_checkpoint(&path).unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains(&path.display().to_string()));
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        std::fs::write(&path, "rtnet-checkpoint v0\n").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
