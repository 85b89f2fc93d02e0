//! Synthetic partial-domain-adaptation tasks and deterministic batching.
//!
//! A task draws Gaussian blobs around seeded class centers. The source
//! domain covers every class; the target domain covers the shared subset
//! only and is pushed through an affine domain shift (rotation in the
//! first two coordinates, per-feature scale, translation). The target
//! split is half unlabeled training data and half a held-out labeled
//! test set.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::substream_seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl Domain {
    pub fn name(&self) -> &'static str {
        match self {
            Domain::Source => "source",
            Domain::Target => "target",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(CoreError::Config(format!("unknown domain `{other}`"))),
        }
    }
}

/// Materialized labeled samples for one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub domain: Domain,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, domain: Domain) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(CoreError::Usage("inputs/labels length mismatch".into()));
        }
        Ok(Dataset {
            inputs,
            labels,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }
}

/// Parameters of one synthetic PDA task.
#[derive(Debug, Clone, PartialEq)]
pub struct PdaTaskSpec {
    /// |C_s|: number of source classes.
    pub source_classes: usize,
    /// C_t: shared class ids present in the target domain.
    pub shared: Vec<usize>,
    /// Samples per class, per domain.
    pub samples_per_class: usize,
    pub input_dim: usize,
    /// Minimum pairwise distance between class centers.
    pub separation: f64,
    /// Within-class Gaussian noise σ.
    pub noise: f64,
    /// Domain shift: rotation (degrees) in the first two coordinates.
    pub rotation_deg: f64,
    /// Domain shift: translation added to every coordinate.
    pub translation: f64,
    /// Domain shift: per-feature multiplier applied before translation.
    pub scale: f64,
    pub seed: u64,
}

impl PdaTaskSpec {
    /// The task used by the acceptance runs: 6 source classes, 3 shared,
    /// 8 input dims, 100 samples/class/domain, 15° rotation, +0.5
    /// translation, σ=0.3 noise, 3.0 center separation.
    pub fn default_task(seed: u64) -> Self {
        PdaTaskSpec {
            source_classes: 6,
            shared: vec![0, 1, 2],
            samples_per_class: 100,
            input_dim: 8,
            separation: 3.0,
            noise: 0.3,
            rotation_deg: 15.0,
            translation: 0.5,
            scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.shared.is_empty() {
            return Err(CoreError::Config("shared class set must be non-empty".into()));
        }
        if self.shared.iter().any(|&c| c >= self.source_classes) {
            return Err(CoreError::Config(
                "shared classes must be a subset of the source classes".into(),
            ));
        }
        if self.noise <= 0.0 {
            return Err(CoreError::Config("noise scale must be > 0".into()));
        }
        if self.source_classes == 0 || self.samples_per_class == 0 || self.input_dim == 0 {
            return Err(CoreError::Config("task dimensions must be > 0".into()));
        }
        Ok(())
    }
}

/// The three datasets of one generated task. Target-train labels are kept
/// for evaluation only and are not reachable through the training
/// interface, which consumes [`PdaTask::target_train_inputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct PdaTask {
    pub source: Dataset,
    target_train: Dataset,
    pub target_test: Dataset,
}

impl PdaTask {
    pub fn new(source: Dataset, target_train: Dataset, target_test: Dataset) -> Self {
        PdaTask {
            source,
            target_train,
            target_test,
        }
    }

    /// Unlabeled view of the target training split; this is all the
    /// trainer ever sees of it.
    pub fn target_train_inputs(&self) -> &Tensor {
        &self.target_train.inputs
    }

    /// Evaluation-only accessor for the withheld target-train labels.
    pub fn target_train_for_eval(&self) -> &Dataset {
        &self.target_train
    }
}

fn normal_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box-Muller; one value per call keeps the draw order stable.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

fn draw_centers<R: Rng + ?Sized>(spec: &PdaTaskSpec, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.source_classes);
    let mut attempts = 0;
    while centers.len() < spec.source_classes {
        attempts += 1;
        if attempts > 10_000 {
            return Err(CoreError::Config(
                "could not place class centers at the requested separation".into(),
            ));
        }
        let candidate: Vec<f64> = (0..spec.input_dim)
            .map(|_| normal_draw(rng) * spec.separation)
            .collect();
        let far_enough = centers.iter().all(|c| {
            let d2: f64 = c
                .iter()
                .zip(&candidate)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            libm::sqrt(d2) >= spec.separation
        });
        if far_enough {
            centers.push(candidate);
        }
    }
    Ok(centers)
}

fn apply_shift(spec: &PdaTaskSpec, x: &mut [f64]) {
    if x.len() >= 2 {
        let theta = spec.rotation_deg * core::f64::consts::PI / 180.0;
        let (sin, cos) = (libm::sin(theta), libm::cos(theta));
        let (a, b) = (x[0], x[1]);
        x[0] = cos * a - sin * b;
        x[1] = sin * a + cos * b;
    }
    for v in x.iter_mut() {
        *v = *v * spec.scale + spec.translation;
    }
}

/// Generates the source dataset, the unlabeled target-train split, and
/// the held-out target-test split. Fully deterministic per seed.
pub fn gen_pda_task(spec: &PdaTaskSpec) -> Result<PdaTask> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, 0x61));
    let centers = draw_centers(spec, &mut rng)?;

    let dim = spec.input_dim;
    let n_source = spec.source_classes * spec.samples_per_class;
    let mut src_inputs = Tensor::zeros(&[n_source, dim]);
    let mut src_labels = Vec::with_capacity(n_source);
    for c in 0..spec.source_classes {
        for k in 0..spec.samples_per_class {
            let row = src_inputs.row_mut(c * spec.samples_per_class + k);
            for (j, v) in row.iter_mut().enumerate() {
                *v = centers[c][j] + spec.noise * normal_draw(&mut rng);
            }
            src_labels.push(c);
        }
    }

    let per_split = spec.samples_per_class / 2;
    let mut train_rows: Vec<Vec<f64>> = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_rows: Vec<Vec<f64>> = Vec::new();
    let mut test_labels = Vec::new();
    for &c in &spec.shared {
        for k in 0..spec.samples_per_class {
            let mut x: Vec<f64> = (0..dim)
                .map(|j| centers[c][j] + spec.noise * normal_draw(&mut rng))
                .collect();
            apply_shift(spec, &mut x);
            if k < per_split {
                train_rows.push(x);
                train_labels.push(c);
            } else {
                test_rows.push(x);
                test_labels.push(c);
            }
        }
    }

    let to_tensor = |rows: &[Vec<f64>]| {
        let mut t = Tensor::zeros(&[rows.len(), dim]);
        for (i, r) in rows.iter().enumerate() {
            t.row_mut(i).copy_from_slice(r);
        }
        t
    };

    Ok(PdaTask::new(
        Dataset::new(src_inputs, src_labels, Domain::Source)?,
        Dataset::new(to_tensor(&train_rows), train_labels, Domain::Target)?,
        Dataset::new(to_tensor(&test_rows), test_labels, Domain::Target)?,
    ))
}

/// One unit of an Algorithm-style training step: paired source and target
/// mini-batches.
#[derive(Debug, Clone)]
pub struct BatchPair {
    /// 1-based batch id within the episode.
    pub batch_id: usize,
    pub source_x: Tensor,
    pub source_y: Vec<usize>,
    pub target_x: Tensor,
}

fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    // Fisher-Yates.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Splits both domains into `N = floor(min(n_s, n_t)/n)` paired batches
/// using independent seeded shuffles per domain and episode. Trailing
/// remainders are dropped.
pub fn batches(
    source: &Dataset,
    target_inputs: &Tensor,
    batch_size: usize,
    seed: u64,
    episode: usize,
) -> Result<Vec<BatchPair>> {
    if batch_size < 2 {
        return Err(CoreError::Config("batch size must be at least 2".into()));
    }
    let (n_s, n_t) = (source.len(), target_inputs.rows());
    if batch_size > n_s.min(n_t) {
        return Err(CoreError::Config(format!(
            "batch size {batch_size} exceeds the smaller domain ({})",
            n_s.min(n_t)
        )));
    }
    let src_order = shuffled_indices(n_s, substream_seed(seed, 0x5000 + episode as u64));
    let tgt_order = shuffled_indices(n_t, substream_seed(seed, 0x7000 + episode as u64));
    let n_batches = n_s.min(n_t) / batch_size;
    let mut out = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let s_idx = &src_order[b * batch_size..(b + 1) * batch_size];
        let t_idx = &tgt_order[b * batch_size..(b + 1) * batch_size];
        out.push(BatchPair {
            batch_id: b + 1,
            source_x: source.inputs.select_rows(s_idx),
            source_y: s_idx.iter().map(|&i| source.labels[i]).collect(),
            target_x: target_inputs.select_rows(t_idx),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn default_task_shapes_and_label_spaces() {
        let task = gen_pda_task(&PdaTaskSpec::default_task(1)).unwrap();
        assert_eq!(task.source.len(), 600);
        assert_eq!(task.source.input_dim(), 8);
        let source_classes: BTreeSet<_> = task.source.labels.iter().copied().collect();
        assert_eq!(source_classes.len(), 6);
        // Target labels stay inside the shared set.
        for ds in [task.target_train_for_eval(), &task.target_test] {
            assert!(ds.labels.iter().all(|&c| c <= 2));
            assert_eq!(ds.len(), 150);
        }
    }

    #[test]
    fn small_task_counts() {
        let spec = PdaTaskSpec {
            source_classes: 6,
            shared: vec![0, 1, 2],
            samples_per_class: 50,
            ..PdaTaskSpec::default_task(3)
        };
        let task = gen_pda_task(&spec).unwrap();
        assert_eq!(task.source.len(), 300);
        assert_eq!(task.target_train_inputs().rows(), 75);
        assert_eq!(task.target_test.len(), 75);
    }

    #[test]
    fn identity_shift_tiny_noise_lands_on_shared_centers() {
        let spec = PdaTaskSpec {
            rotation_deg: 0.0,
            translation: 0.0,
            scale: 1.0,
            noise: 1e-9,
            samples_per_class: 4,
            ..PdaTaskSpec::default_task(5)
        };
        let task = gen_pda_task(&spec).unwrap();
        // Target points coincide (up to the vanishing noise) with the
        // source class means of the same label.
        let eval = task.target_train_for_eval();
        for i in 0..eval.len() {
            let label = eval.labels[i];
            let mut best = f64::INFINITY;
            let mut best_label = usize::MAX;
            for c in 0..spec.source_classes {
                // Mean of the source samples of class c.
                let rows: Vec<usize> = (0..task.source.len())
                    .filter(|&r| task.source.labels[r] == c)
                    .collect();
                let mut d2 = 0.0;
                for j in 0..spec.input_dim {
                    let mean: f64 = rows
                        .iter()
                        .map(|&r| task.source.inputs.get(r, j))
                        .sum::<f64>()
                        / rows.len() as f64;
                    let diff = eval.inputs.get(i, j) - mean;
                    d2 += diff * diff;
                }
                if d2 < best {
                    best = d2;
                    best_label = c;
                }
            }
            assert_eq!(best_label, label);
            assert!(best < 1e-10);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let spec = PdaTaskSpec::default_task(9);
        assert_eq!(gen_pda_task(&spec).unwrap(), gen_pda_task(&spec).unwrap());
    }

    #[test]
    fn empty_shared_set_is_config_error() {
        let spec = PdaTaskSpec {
            shared: vec![],
            ..PdaTaskSpec::default_task(1)
        };
        assert!(matches!(gen_pda_task(&spec), Err(CoreError::Config(_))));
    }

    #[test]
    fn centers_respect_separation() {
        let spec = PdaTaskSpec::default_task(13);
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, 0x61));
        let centers = draw_centers(&spec, &mut rng).unwrap();
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d2: f64 = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
                assert!(libm::sqrt(d2) >= spec.separation);
            }
        }
    }

    #[test]
    fn batch_count_and_partition() {
        let spec = PdaTaskSpec {
            samples_per_class: 100,
            ..PdaTaskSpec::default_task(2)
        };
        let task = gen_pda_task(&spec).unwrap();
        // n_s=600, n_t=150, n=50 -> N=3.
        let pairs = batches(&task.source, task.target_train_inputs(), 50, 2, 1).unwrap();
        assert_eq!(pairs.len(), 3);
        // No source sample twice within one episode.
        let mut seen = BTreeSet::new();
        for p in &pairs {
            for i in 0..p.source_x.rows() {
                let fp: Vec<u64> = p.source_x.row(i).iter().map(|v| v.to_bits()).collect();
                assert!(seen.insert(fp), "duplicate source sample in episode");
            }
        }
    }

    #[test]
    fn different_episode_different_shuffle_same_multiset() {
        let spec = PdaTaskSpec {
            samples_per_class: 20,
            ..PdaTaskSpec::default_task(4)
        };
        let task = gen_pda_task(&spec).unwrap();
        // The target split is fully consumed each episode (30 samples,
        // 3 batches of 10), so its multiset must be episode-invariant.
        let collect = |episode: usize| {
            let pairs = batches(&task.source, task.target_train_inputs(), 10, 7, episode).unwrap();
            let mut flat: Vec<u64> = Vec::new();
            for p in &pairs {
                flat.extend(p.target_x.data().iter().map(|v| v.to_bits()));
            }
            flat
        };
        let (e1, e2) = (collect(1), collect(2));
        assert_ne!(e1, e2);
        let sorted = |mut v: Vec<u64>| {
            v.sort_unstable();
            v
        };
        assert_eq!(sorted(e1), sorted(e2));
    }

    #[test]
    fn oversized_batch_is_config_error() {
        let spec = PdaTaskSpec {
            samples_per_class: 10,
            ..PdaTaskSpec::default_task(6)
        };
        let task = gen_pda_task(&spec).unwrap();
        assert!(batches(&task.source, task.target_train_inputs(), 64, 0, 1).is_err());
    }
}
