//! The joint training loop, evaluation, and retention reporting.
//!
//! One episode is a pass over the paired mini-batches; each step runs
//! the fixed ordering
//!
//! 1. build selector states through `F` and `C`
//! 2. draw keep/drop actions ε-greedily from `π`
//! 3. update `F` and `C` with the selected source batch
//! 4. read the reward off `G_t` with the selected batch
//! 5. update `G_s` and `G_t`
//! 6. store the step record
//!
//! and after the episode the policy and value networks replay the
//! history with discounted returns. Variants switch the selector and
//! loss terms on or off without touching the shared RNG streams, so
//! `coral` and `rtnet_noselect` walk identical model trajectories.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::da::{update_da_model, DaHyperparams, DaModel};
use crate::data::{batches, Dataset};
use crate::error::{CoreError, Result};
use crate::generators::{compute_reward, pretrain_generators, update_generators, GeneratorPair};
use crate::selector::{
    build_states, discounted_returns, epsilon_schedule, sample_actions, select_batch,
    target_label_distribution, update_policy, update_value, EpisodeHistory, RlHyperparams,
    Selector, StepRecord, ACTION_KEEP,
};
use crate::substream_seed;
use crate::tensor::Tensor;

/// Which components update during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Full model: policy-driven selection, all losses, RL updates.
    Rtnet,
    /// Selection forced to all-keep; policy and value still train.
    RtnetNoselect,
    /// Selector off: every batch used whole, no RL updates.
    Coral,
    /// Selector off and λ1 = λ2 = 0: plain source classifier.
    SourceOnly,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Rtnet => "rtnet",
            Variant::RtnetNoselect => "rtnet_noselect",
            Variant::Coral => "coral",
            Variant::SourceOnly => "source_only",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rtnet" => Ok(Variant::Rtnet),
            "rtnet_noselect" => Ok(Variant::RtnetNoselect),
            "coral" => Ok(Variant::Coral),
            "source_only" => Ok(Variant::SourceOnly),
            other => Err(CoreError::Config(alloc::format!(
                "unknown variant `{other}` (expected rtnet, rtnet_noselect, coral, source_only)"
            ))),
        }
    }

    fn uses_policy_actions(&self) -> bool {
        matches!(self, Variant::Rtnet)
    }

    fn updates_selector(&self) -> bool {
        matches!(self, Variant::Rtnet | Variant::RtnetNoselect)
    }
}

/// Everything one training run needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: Variant,
    /// Episode budget L.
    pub episodes: usize,
    pub batch_size: usize,
    /// Generator warm-up steps before episode 1.
    pub pretrain_steps: usize,
    /// Source-classification warm-up steps for F and C before the
    /// generators are pre-trained; the desk-scale stand-in for starting
    /// from a pretrained backbone.
    pub source_pretrain_steps: usize,
    /// Covariance-alignment weight used during the warm-up steps. Kept
    /// separate from `da.lambda2`: the warm-up only needs a small dose
    /// to place source features inside the region the target generator
    /// is trained on, while the episode weight controls how strongly
    /// adaptation pulls on the features afterwards.
    pub warmup_lambda2: f64,
    pub seed: u64,
    /// Hidden width of the feature extractor.
    pub feature_hidden: usize,
    /// Adaptation-layer width d.
    pub feature_dim: usize,
    pub da: DaHyperparams,
    pub rl: RlHyperparams,
    /// Learning rate for the generators (pretraining and Eq.-6-style
    /// per-step updates); separate from the adaptation-model rate.
    pub gen_lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::Rtnet,
            episodes: 300,
            batch_size: 32,
            pretrain_steps: 200,
            source_pretrain_steps: 0,
            warmup_lambda2: DaHyperparams::default().lambda2,
            seed: 0,
            feature_hidden: 32,
            feature_dim: 16,
            da: DaHyperparams::default(),
            rl: RlHyperparams::default(),
            gen_lr: 1e-4,
        }
    }
}

/// The jointly trained networks.
#[derive(Debug, Clone)]
pub struct RtNet {
    pub da: DaModel,
    pub generators: GeneratorPair,
    pub selector: Selector,
}

impl RtNet {
    /// Initializes all six networks from one seeded stream, in a fixed
    /// order, so every variant starts from identical parameters.
    pub fn init(config: &TrainConfig, input_dim: usize, num_classes: usize) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 0x1));
        let da = DaModel::new(
            input_dim,
            config.feature_hidden,
            config.feature_dim,
            num_classes,
            &mut rng,
        )?;
        let generators = GeneratorPair::new(
            config.feature_dim,
            config.feature_hidden,
            input_dim,
            &mut rng,
        )?;
        let state_dim = config.feature_dim + 2 * num_classes;
        let selector = Selector::new(state_dim, config.rl.hidden, &mut rng)?;
        Ok(RtNet {
            da,
            generators,
            selector,
        })
    }
}

/// Ordering checkpoints within one training step; consumed by tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainEvent {
    StatesBuilt { episode: usize, batch: usize },
    ActionsTaken { episode: usize, batch: usize },
    DaModelUpdated { episode: usize, batch: usize },
    RewardComputed { episode: usize, batch: usize },
    GeneratorsUpdated { episode: usize, batch: usize },
    RecordStored { episode: usize, batch: usize },
    PolicyUpdated { episode: usize },
    ValueUpdated { episode: usize },
    EpisodeFinished { episode: usize },
}

/// One per-step metrics row, emitted after its episode completes (the
/// discounted return needs the whole episode).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub episode: usize,
    pub batch: usize,
    pub epsilon: f64,
    pub n_selected: usize,
    pub reward: f64,
    pub discounted_return: f64,
    pub source_ce: f64,
    pub target_entropy: f64,
    pub coral: f64,
    pub mean_value: f64,
}

/// One per-episode summary row.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub epsilon: f64,
    pub mean_reward: f64,
    pub accuracy: f64,
}

/// Receives training progress; all hooks default to no-ops.
pub trait TrainObserver {
    fn on_event(&mut self, _event: TrainEvent) {}
    fn on_step(&mut self, _metrics: &StepMetrics) {}
    fn on_episode(&mut self, _metrics: &EpisodeMetrics) {}
}

/// Observer that ignores everything.
pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Result of one training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: RtNet,
    /// Mean step reward per episode.
    pub episode_rewards: Vec<f64>,
    /// Target-test accuracy per episode.
    pub episode_accuracy: Vec<f64>,
    pub final_accuracy: f64,
}

fn context(err: CoreError, episode: usize, batch: usize) -> CoreError {
    let wrap = |msg: String| alloc::format!("episode {episode}, batch {batch}: {msg}");
    match err {
        CoreError::Config(m) => CoreError::Config(wrap(m)),
        CoreError::Usage(m) => CoreError::Usage(wrap(m)),
        CoreError::Numeric(m) => CoreError::Numeric(wrap(m)),
    }
}

/// Runs the full training loop.
///
/// `target_train` is the unlabeled target split: the trainer only ever
/// sees inputs. `target_test` is the held-out labeled split used for the
/// per-episode accuracy.
pub fn train<O: TrainObserver>(
    config: &TrainConfig,
    source: &Dataset,
    target_train: &Tensor,
    target_test: &Dataset,
    observer: &mut O,
) -> Result<TrainOutcome> {
    if config.episodes == 0 {
        return Err(CoreError::Config("episode count must be >= 1".into()));
    }
    if target_test.is_empty() {
        return Err(CoreError::Config("target test set is empty".into()));
    }
    let num_classes = source
        .labels
        .iter()
        .max()
        .map(|&m| m + 1)
        .ok_or_else(|| CoreError::Config("source dataset is empty".into()))?;

    let mut model = RtNet::init(config, source.input_dim(), num_classes)?;

    // Variant knob: source_only drops the adaptation terms entirely.
    let hp = match config.variant {
        Variant::SourceOnly => DaHyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..config.da
        },
        _ => config.da,
    };

    // Warm up F and C on source classification plus a light covariance
    // alignment before anything else sees their features; the
    // desk-scale stand-in for starting from a pretrained backbone. The
    // entropy term stays off: it presumes predictions that are already
    // meaningful.
    if config.source_pretrain_steps > 0 {
        let warmup_hp = DaHyperparams {
            lambda1: 0.0,
            // Variants that do no adaptation keep a pure-CE warm-up.
            lambda2: if hp.lambda2 == 0.0 {
                0.0
            } else {
                config.warmup_lambda2
            },
            ..config.da
        };
        let mut warmup_rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 0x4));
        let n = config.batch_size.min(source.len()).min(target_train.rows());
        for _ in 0..config.source_pretrain_steps {
            let idx: Vec<usize> = (0..n)
                .map(|_| warmup_rng.random_range(0..source.len()))
                .collect();
            let x = source.inputs.select_rows(&idx);
            let y: Vec<usize> = idx.iter().map(|&i| source.labels[i]).collect();
            let t_idx: Vec<usize> = (0..n)
                .map(|_| warmup_rng.random_range(0..target_train.rows()))
                .collect();
            let t_x = target_train.select_rows(&t_idx);
            update_da_model(&mut model.da, &x, &y, &t_x, &warmup_hp)?;
        }
    }

    let mut pretrain_rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 0x2));
    pretrain_generators(
        &mut model.generators,
        &model.da.feature,
        &source.inputs,
        target_train,
        config.pretrain_steps,
        config.batch_size,
        config.gen_lr,
        &mut pretrain_rng,
    )?;

    let mut selector_rng = ChaCha8Rng::seed_from_u64(substream_seed(config.seed, 0x3));

    let mut episode_rewards = Vec::with_capacity(config.episodes);
    let mut episode_accuracy = Vec::with_capacity(config.episodes);

    for episode in 1..=config.episodes {
        let epsilon = if config.variant.uses_policy_actions() {
            epsilon_schedule(episode, config.episodes, config.rl.eps_decay_fraction)
        } else {
            0.0
        };
        let pairs = batches(source, target_train, config.batch_size, config.seed, episode)?;
        if pairs.is_empty() {
            return Err(CoreError::Config("no full batch fits the data".into()));
        }

        let mut history = EpisodeHistory::new();
        let mut step_rows: Vec<StepMetrics> = Vec::with_capacity(pairs.len());

        for pair in &pairs {
            let b = pair.batch_id;
            let wrap = |e: CoreError| context(e, episode, b);

            // 1. States through F and C.
            let features = model.da.feature.forward(&pair.source_x).map_err(wrap)?;
            let target_probs = model.da.predict(&pair.target_x).map_err(wrap)?;
            let alpha = target_label_distribution(&target_probs).map_err(wrap)?;
            let states = build_states(features.output(), &pair.source_y, &alpha, num_classes)
                .map_err(wrap)?;
            observer.on_event(TrainEvent::StatesBuilt { episode, batch: b });

            // 2. Actions.
            let actions = if config.variant.uses_policy_actions() {
                let probs = model.selector.policy_forward(&states).map_err(wrap)?;
                sample_actions(&probs, epsilon, &mut selector_rng).map_err(wrap)?
            } else {
                vec![ACTION_KEEP; pair.source_y.len()]
            };
            let (sel_x, sel_y, recorded, _fallback) =
                select_batch(&pair.source_x, &pair.source_y, &actions).map_err(wrap)?;
            observer.on_event(TrainEvent::ActionsTaken { episode, batch: b });

            // 3. Domain adaptation update with the selected batch.
            let losses =
                update_da_model(&mut model.da, &sel_x, &sel_y, &pair.target_x, &hp).map_err(wrap)?;
            observer.on_event(TrainEvent::DaModelUpdated { episode, batch: b });

            // 4. Reward off the post-update feature extractor, pre-update
            //    generators.
            let reward =
                compute_reward(&model.generators.target, &model.da.feature, &sel_x).map_err(wrap)?;
            observer.on_event(TrainEvent::RewardComputed { episode, batch: b });

            // 5. Generator update; F is frozen inside.
            update_generators(
                &mut model.generators,
                &model.da.feature,
                &sel_x,
                &pair.target_x,
                config.gen_lr,
            )
            .map_err(wrap)?;
            observer.on_event(TrainEvent::GeneratorsUpdated { episode, batch: b });

            // 6. Record the step.
            let values = if config.variant.updates_selector() {
                model.selector.value_forward(&states).map_err(wrap)?
            } else {
                vec![0.0; recorded.len()]
            };
            let mean_value = values.iter().sum::<f64>() / values.len() as f64;
            history
                .push(StepRecord {
                    batch_id: b,
                    states,
                    actions: recorded,
                    reward,
                    values,
                })
                .map_err(wrap)?;
            observer.on_event(TrainEvent::RecordStored { episode, batch: b });

            step_rows.push(StepMetrics {
                episode,
                batch: b,
                epsilon,
                n_selected: sel_y.len(),
                reward,
                discounted_return: 0.0,
                source_ce: losses.source_ce,
                target_entropy: losses.target_entropy,
                coral: losses.coral,
                mean_value,
            });
        }

        let rewards = history.rewards();
        let returns = discounted_returns(&rewards, config.rl.gamma)?;
        for (row, &ret) in step_rows.iter_mut().zip(&returns) {
            row.discounted_return = ret;
        }

        if config.variant.updates_selector() {
            // Replay the whole episode: ascent on π, then descent on V.
            update_policy(&mut model.selector, &history, &returns, config.rl.lr)?;
            observer.on_event(TrainEvent::PolicyUpdated { episode });
            update_value(&mut model.selector, &history, &returns, config.rl.value_lr)?;
            observer.on_event(TrainEvent::ValueUpdated { episode });
        }

        let accuracy = evaluate(&model.da, target_test)?;
        let mean_reward = rewards.iter().sum::<f64>() / rewards.len() as f64;
        episode_rewards.push(mean_reward);
        episode_accuracy.push(accuracy);

        for row in &step_rows {
            observer.on_step(row);
        }
        observer.on_episode(&EpisodeMetrics {
            episode,
            epsilon,
            mean_reward,
            accuracy,
        });
        observer.on_event(TrainEvent::EpisodeFinished { episode });
    }

    let final_accuracy = *episode_accuracy.last().unwrap();
    Ok(TrainOutcome {
        model,
        episode_rewards,
        episode_accuracy,
        final_accuracy,
    })
}

/// Fraction of argmax predictions matching the true labels, over the full
/// source class space: the classifier has to avoid outlier classes on
/// its own.
pub fn evaluate(model: &DaModel, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(CoreError::Usage("empty test set".into()));
    }
    let probs = model.predict(&test.inputs)?;
    let mut correct = 0usize;
    for (i, &label) in test.labels.iter().enumerate() {
        let row = probs.row(i);
        let mut best = 0usize;
        for (c, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = c;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

/// Mean keep-probability per source class, with α computed from one fixed
/// pass over the target inputs. Returns `(class, mean π_keep)` rows in
/// class order.
pub fn retention_report(
    selector: &Selector,
    model: &DaModel,
    source: &Dataset,
    target_inputs: &Tensor,
) -> Result<Vec<(usize, f64)>> {
    let num_classes = model.num_classes();
    let target_probs = model.predict(target_inputs)?;
    let alpha = target_label_distribution(&target_probs)?;
    let features = model.features(&source.inputs)?;
    let states = build_states(&features, &source.labels, &alpha, num_classes)?;
    let probs = selector.policy_forward(&states)?;

    let mut sums = vec![0.0; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (i, &c) in source.labels.iter().enumerate() {
        sums[c] += probs.get(i, ACTION_KEEP);
        counts[c] += 1;
    }
    Ok((0..num_classes)
        .filter(|&c| counts[c] > 0)
        .map(|c| (c, sums[c] / counts[c] as f64))
        .collect())
}
