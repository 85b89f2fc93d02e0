//! Source and target reconstruction generators and the selection reward.
//!
//! `G_s` and `G_t` decode adaptation-layer features back to input space.
//! They are never sampled from; their only job is to turn per-sample
//! reconstruction error into the batch reward
//! `r_b = exp(-mean ‖x - G_t(F(x))‖²)` over the selected source samples.
//! The feature extractor is frozen during every generator update.

use alloc::vec::Vec;

use rand::Rng;

use crate::adam::AdamState;
use crate::error::{CoreError, Result};
use crate::network::{Activation, DenseNetwork, GradientSet};
use crate::tensor::Tensor;

/// The generator pair with optimizer states.
#[derive(Debug, Clone)]
pub struct GeneratorPair {
    pub source: DenseNetwork,
    pub target: DenseNetwork,
    pub source_opt: AdamState,
    pub target_opt: AdamState,
}

impl GeneratorPair {
    /// Dense decoders mirroring the feature extractor:
    /// `d -> hidden (relu) -> input_dim (linear)`.
    pub fn new<R: Rng + ?Sized>(
        feature_dim: usize,
        hidden: usize,
        input_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let dims = [feature_dim, hidden, input_dim];
        let acts = [Activation::Relu, Activation::Linear];
        let source = DenseNetwork::xavier(&dims, &acts, rng)?;
        let target = DenseNetwork::xavier(&dims, &acts, rng)?;
        Self::from_networks(source, target)
    }

    pub fn from_networks(source: DenseNetwork, target: DenseNetwork) -> Result<Self> {
        if source.input_dim() != target.input_dim()
            || source.output_dim() != target.output_dim()
        {
            return Err(CoreError::Config("generator shapes differ".into()));
        }
        let source_opt = AdamState::new(&source);
        let target_opt = AdamState::new(&target);
        Ok(GeneratorPair {
            source,
            target,
            source_opt,
            target_opt,
        })
    }
}

/// Per-sample squared reconstruction error `‖x_i - G(F(x_i))‖²`.
pub fn reconstruction_errors(
    generator: &DenseNetwork,
    feature: &DenseNetwork,
    x: &Tensor,
) -> Result<Vec<f64>> {
    let z = feature.forward(x)?;
    let recon = generator.forward(z.output())?;
    let out = recon.output();
    if out.shape() != x.shape() {
        return Err(CoreError::Usage(
            "generator output shape does not match input".into(),
        ));
    }
    let mut errors = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let e: f64 = x
            .row(i)
            .iter()
            .zip(out.row(i))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        errors.push(e);
    }
    Ok(errors)
}

/// Batch reward `exp(-mean reconstruction error)` of the selected source
/// samples through the target generator. Always in `(0, 1]`.
pub fn compute_reward(
    target_gen: &DenseNetwork,
    feature: &DenseNetwork,
    selected_x: &Tensor,
) -> Result<f64> {
    if selected_x.rows() == 0 {
        return Err(CoreError::Usage(
            "reward needs at least one selected sample".into(),
        ));
    }
    let errors = reconstruction_errors(target_gen, feature, selected_x)?;
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(libm::exp(-mean))
}

/// Loss and gradient of `mean_i ‖x_i - G(z_i)‖²` with respect to `G`'s
/// parameters, with `z = F(x)` held constant.
pub fn recon_grads(
    generator: &DenseNetwork,
    feature: &DenseNetwork,
    x: &Tensor,
) -> Result<(f64, GradientSet)> {
    let z = feature.forward(x)?;
    let trace = generator.forward(z.output())?;
    let out = trace.output();
    let n = x.rows() as f64;
    let mut upstream = Tensor::zeros(out.shape());
    let mut loss = 0.0;
    for i in 0..x.rows() {
        let (xi, oi) = (x.row(i), out.row(i));
        let gi = upstream.row_mut(i);
        for j in 0..xi.len() {
            let diff = oi[j] - xi[j];
            loss += diff * diff;
            gi[j] = 2.0 * diff / n;
        }
    }
    let (grads, _) = generator.backward(&trace, &upstream)?;
    Ok((loss / n, grads))
}

/// One Adam step minimizing source reconstruction on `G_s` plus target
/// reconstruction on `G_t`. Returns `(mean source error, mean target
/// error)` before the step. `F` is read-only here.
pub fn update_generators(
    pair: &mut GeneratorPair,
    feature: &DenseNetwork,
    selected_source_x: &Tensor,
    target_x: &Tensor,
    lr: f64,
) -> Result<(f64, f64)> {
    if selected_source_x.rows() == 0 || target_x.rows() == 0 {
        return Err(CoreError::Usage("generator update needs non-empty batches".into()));
    }
    let (src_loss, src_grads) = recon_grads(&pair.source, feature, selected_source_x)?;
    let (tgt_loss, tgt_grads) = recon_grads(&pair.target, feature, target_x)?;
    pair.source_opt.apply(&mut pair.source, &src_grads, lr)?;
    pair.target_opt.apply(&mut pair.target, &tgt_grads, lr)?;
    Ok((src_loss, tgt_loss))
}

/// Warm-up phase: repeated generator updates on random mini-batches of
/// the full source and target data before episode 1.
pub fn pretrain_generators<R: Rng + ?Sized>(
    pair: &mut GeneratorPair,
    feature: &DenseNetwork,
    source_x: &Tensor,
    target_x: &Tensor,
    steps: usize,
    batch_size: usize,
    lr: f64,
    rng: &mut R,
) -> Result<()> {
    let pick = |rng: &mut R, data: &Tensor| {
        let n = data.rows();
        let k = batch_size.min(n);
        let idx: Vec<usize> = (0..k).map(|_| rng.random_range(0..n)).collect();
        data.select_rows(&idx)
    };
    for _ in 0..steps {
        let sb = pick(rng, source_x);
        let tb = pick(rng, target_x);
        update_generators(pair, feature, &sb, &tb, lr)?;
    }
    Ok(())
}
