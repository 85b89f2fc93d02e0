//! Domain adaptation model: shared feature extractor `F`, shared
//! classifier `C`, and the combined objective
//!
//! `L = L_s + λ1·L_t + λ2·L_c`
//!
//! where `L_s` is source cross-entropy, `L_t` is the mean prediction
//! entropy on the target batch (gradient flows into `F` only), and `L_c`
//! is the squared Frobenius distance between the unnormalized feature
//! covariances of the two domains. Features are the output of `F`'s last
//! layer (the adaptation layer).

use alloc::format;
use alloc::vec;

use rand::Rng;

use crate::adam::AdamState;
use crate::error::{CoreError, Result};
use crate::network::{Activation, DenseNetwork, ForwardTrace, GradientSet};
use crate::tensor::Tensor;

/// Probability floor applied before any `log` on predicted probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Weights and learning rate for the combined objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaHyperparams {
    /// Entropy weight λ1.
    pub lambda1: f64,
    /// Covariance-alignment weight λ2.
    pub lambda2: f64,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for DaHyperparams {
    fn default() -> Self {
        DaHyperparams {
            lambda1: 1.0,
            lambda2: 7.0,
            lr: 1e-4,
            batch_size: 32,
        }
    }
}

/// Feature extractor + classifier with their optimizer states.
#[derive(Debug, Clone)]
pub struct DaModel {
    pub feature: DenseNetwork,
    pub classifier: DenseNetwork,
    pub feature_opt: AdamState,
    pub classifier_opt: AdamState,
}

/// The three loss terms and their weighted sum for one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DaLosses {
    pub source_ce: f64,
    pub target_entropy: f64,
    pub coral: f64,
    pub total: f64,
}

impl DaModel {
    /// Default architecture: `F: input -> hidden (relu) -> d (linear)`,
    /// `C: d -> classes (softmax)`.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: usize,
        feature_dim: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let feature = DenseNetwork::xavier(
            &[input_dim, hidden, feature_dim],
            &[Activation::Relu, Activation::Linear],
            rng,
        )?;
        let classifier =
            DenseNetwork::xavier(&[feature_dim, classes], &[Activation::Softmax], rng)?;
        Self::from_networks(feature, classifier)
    }

    pub fn from_networks(feature: DenseNetwork, classifier: DenseNetwork) -> Result<Self> {
        if feature.output_dim() != classifier.input_dim() {
            return Err(CoreError::Config(format!(
                "feature dim {} does not match classifier input {}",
                feature.output_dim(),
                classifier.input_dim()
            )));
        }
        if classifier.layers().last().unwrap().activation() != Activation::Softmax {
            return Err(CoreError::Config(
                "classifier must end in softmax".into(),
            ));
        }
        let feature_opt = AdamState::new(&feature);
        let classifier_opt = AdamState::new(&classifier);
        Ok(DaModel {
            feature,
            classifier,
            feature_opt,
            classifier_opt,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature.output_dim()
    }

    pub fn num_classes(&self) -> usize {
        self.classifier.output_dim()
    }

    /// Class probabilities `C(F(x))`.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let zf = self.feature.forward(x)?;
        let zc = self.classifier.forward(zf.output())?;
        Ok(zc.output().clone())
    }

    /// Features of the adaptation layer, `F(x)`.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.feature.forward(x)?.output().clone())
    }
}

/// Unnormalized covariance `Zᵀ J_n Z` with `J_n = I - (1/n)·11ᵀ`.
pub fn covariance(z: &Tensor) -> Tensor {
    let (n, d) = (z.rows(), z.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(z.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut cov = Tensor::zeros(&[d, d]);
    for i in 0..n {
        let row = z.row(i);
        for a in 0..d {
            let ca = row[a] - mean[a];
            for b in 0..d {
                let v = cov.get(a, b) + ca * (row[b] - mean[b]);
                cov.set(a, b, v);
            }
        }
    }
    cov
}

/// CORAL loss `‖Cov(Z_s) - Cov(Z_t)‖_F²`; each domain is centered with its
/// own batch size.
pub fn coral_loss(z_s: &Tensor, z_t: &Tensor) -> Result<f64> {
    check_coral_inputs(z_s, z_t)?;
    let (cs, ct) = (covariance(z_s), covariance(z_t));
    let loss = cs
        .data()
        .iter()
        .zip(ct.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(loss)
}

/// Analytic gradients of [`coral_loss`] with respect to both feature
/// batches: `dL/dZ_s = 4·J Z_s (Cov_s - Cov_t)` and the negated analogue
/// for `Z_t`.
pub fn coral_grads(z_s: &Tensor, z_t: &Tensor) -> Result<(Tensor, Tensor)> {
    check_coral_inputs(z_s, z_t)?;
    let (cs, ct) = (covariance(z_s), covariance(z_t));
    let d = z_s.cols();
    let mut diff = Tensor::zeros(&[d, d]);
    for i in 0..d * d {
        diff.data_mut()[i] = cs.data()[i] - ct.data()[i];
    }
    let grad = |z: &Tensor, sign: f64| {
        let n = z.rows();
        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, v) in mean.iter_mut().zip(z.row(i)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut g = Tensor::zeros(&[n, d]);
        for i in 0..n {
            let zi = z.row(i);
            let gi = g.row_mut(i);
            for b in 0..d {
                let mut s = 0.0;
                for a in 0..d {
                    s += (zi[a] - mean[a]) * diff.get(a, b);
                }
                gi[b] = sign * 4.0 * s;
            }
        }
        g
    };
    Ok((grad(z_s, 1.0), grad(z_t, -1.0)))
}

fn check_coral_inputs(z_s: &Tensor, z_t: &Tensor) -> Result<()> {
    if z_s.rows() < 2 || z_t.rows() < 2 {
        return Err(CoreError::Usage(
            "covariance centering needs at least 2 rows per domain".into(),
        ));
    }
    if z_s.cols() != z_t.cols() {
        return Err(CoreError::Usage("feature dims differ between domains".into()));
    }
    Ok(())
}

/// Mean `-log p(true class)` over the batch, probabilities floored at
/// [`PROB_FLOOR`].
pub fn source_ce_loss(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() {
        return Err(CoreError::Usage("probs/labels length mismatch".into()));
    }
    let classes = probs.cols();
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(CoreError::Usage(format!(
                "label {y} out of range for {classes} classes"
            )));
        }
        total -= libm::log(probs.get(i, y).max(PROB_FLOOR));
    }
    Ok(total / labels.len() as f64)
}

/// Gradient of [`source_ce_loss`] with respect to the probabilities.
fn source_ce_grad(probs: &Tensor, labels: &[usize]) -> Tensor {
    let n = probs.rows() as f64;
    let mut g = Tensor::zeros(probs.shape());
    for (i, &y) in labels.iter().enumerate() {
        g.set(i, y, -1.0 / (probs.get(i, y).max(PROB_FLOOR) * n));
    }
    g
}

/// Mean prediction entropy `-Σ_c p log p` over the batch.
pub fn target_entropy_loss(probs: &Tensor) -> Result<f64> {
    if probs.rows() == 0 {
        return Err(CoreError::Usage("empty probability batch".into()));
    }
    let mut total = 0.0;
    for i in 0..probs.rows() {
        for &p in probs.row(i) {
            total -= p * libm::log(p.max(PROB_FLOOR));
        }
    }
    Ok(total / probs.rows() as f64)
}

/// Gradient of [`target_entropy_loss`] with respect to the probabilities.
fn target_entropy_grad(probs: &Tensor) -> Tensor {
    let n = probs.rows() as f64;
    let mut g = Tensor::zeros(probs.shape());
    for i in 0..probs.rows() {
        for (gv, &p) in g.row_mut(i).iter_mut().zip(probs.row(i)) {
            *gv = (-libm::log(p.max(PROB_FLOOR)) - 1.0) / n;
        }
    }
    g
}

/// Gradients of the combined objective for `F` and `C`.
#[derive(Debug, Clone)]
pub struct DaGradients {
    pub feature: GradientSet,
    pub classifier: GradientSet,
}

/// Evaluates `L_s + λ1·L_t + λ2·L_c` on a selected source batch and a
/// target batch and returns the value together with gradients for `F`
/// and `C`.
///
/// The entropy term is a stop-gradient with respect to `C`: its path
/// through the classifier contributes to the feature gradient only.
/// Loss terms with a zero weight are skipped and reported as 0.
pub fn da_objective(
    model: &DaModel,
    source_x: &Tensor,
    source_y: &[usize],
    target_x: &Tensor,
    hp: &DaHyperparams,
) -> Result<(DaLosses, DaGradients)> {
    if source_x.rows() < 2 {
        return Err(CoreError::Usage(
            "selected source batch needs at least 2 samples".into(),
        ));
    }
    if target_x.rows() < 2 {
        return Err(CoreError::Usage("target batch needs at least 2 samples".into()));
    }

    let ft_s = model.feature.forward(source_x)?;
    let ct_s = model.classifier.forward(ft_s.output())?;
    let probs_s = ct_s.output();

    let l_s = source_ce_loss(probs_s, source_y)?;
    let d_probs_s = source_ce_grad(probs_s, source_y);
    let (cls_grads, d_zs_ce) = model.classifier.backward(&ct_s, &d_probs_s)?;
    let (mut feat_grads, _) = model.feature.backward(&ft_s, &d_zs_ce)?;

    let mut l_t = 0.0;
    let mut ft_t: Option<ForwardTrace> = None;
    if hp.lambda1 != 0.0 || hp.lambda2 != 0.0 {
        ft_t = Some(model.feature.forward(target_x)?);
    }
    if hp.lambda1 != 0.0 {
        let ft_t = ft_t.as_ref().unwrap();
        let ct_t = model.classifier.forward(ft_t.output())?;
        let probs_t = ct_t.output();
        l_t = target_entropy_loss(probs_t)?;
        let d_probs_t = target_entropy_grad(probs_t);
        // Stop-gradient: classifier parameter gradients from this term are
        // discarded; only the input gradient is propagated into F.
        let (_, d_zt_ent) = model.classifier.backward(&ct_t, &d_probs_t)?;
        let (g, _) = model.feature.backward(ft_t, &d_zt_ent)?;
        feat_grads.add_scaled(&g, hp.lambda1);
    }

    let mut l_c = 0.0;
    if hp.lambda2 != 0.0 {
        let ft_t = ft_t.as_ref().unwrap();
        let (z_s, z_t) = (ft_s.output(), ft_t.output());
        l_c = coral_loss(z_s, z_t)?;
        let (d_zs, d_zt) = coral_grads(z_s, z_t)?;
        let (gs, _) = model.feature.backward(&ft_s, &d_zs)?;
        let (gt, _) = model.feature.backward(ft_t, &d_zt)?;
        feat_grads.add_scaled(&gs, hp.lambda2);
        feat_grads.add_scaled(&gt, hp.lambda2);
    }

    let total = l_s + hp.lambda1 * l_t + hp.lambda2 * l_c;
    if !total.is_finite() {
        return Err(CoreError::Numeric("non-finite DA objective".into()));
    }
    Ok((
        DaLosses {
            source_ce: l_s,
            target_entropy: l_t,
            coral: l_c,
            total,
        },
        DaGradients {
            feature: feat_grads,
            classifier: cls_grads,
        },
    ))
}

/// One Adam step on `F` and `C` with the [`da_objective`] gradients.
pub fn update_da_model(
    model: &mut DaModel,
    source_x: &Tensor,
    source_y: &[usize],
    target_x: &Tensor,
    hp: &DaHyperparams,
) -> Result<DaLosses> {
    let (losses, grads) = da_objective(model, source_x, source_y, target_x, hp)?;
    model
        .feature_opt
        .apply(&mut model.feature, &grads.feature, hp.lr)?;
    model
        .classifier_opt
        .apply(&mut model.classifier, &grads.classifier, hp.lr)?;
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::finite_diff_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_batch(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, dim]);
        for v in t.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0;
        }
        t
    }

    #[test]
    fn coral_identical_inputs_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = random_batch(&mut rng, 5, 3);
        assert_eq!(coral_loss(&z, &z).unwrap(), 0.0);
    }

    #[test]
    fn coral_hand_example() {
        // Cov_s = [[2,0],[0,0]], Cov_t = 0, loss = 4.
        let zs = Tensor::from_rows(&[&[1.0, 0.0], &[-1.0, 0.0]]).unwrap();
        let zt = Tensor::from_rows(&[&[0.0, 0.0], &[0.0, 0.0]]).unwrap();
        assert!((coral_loss(&zs, &zt).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coral_is_permutation_invariant_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let zs = random_batch(&mut rng, 6, 4);
        let zt = random_batch(&mut rng, 6, 4);
        let base = coral_loss(&zs, &zt).unwrap();
        let permuted = zs.select_rows(&[3, 1, 5, 0, 4, 2]);
        assert!((coral_loss(&permuted, &zt).unwrap() - base).abs() < 1e-9);
        assert!((coral_loss(&zt, &zs).unwrap() - base).abs() < 1e-12);
        assert!(base >= 0.0);
    }

    #[test]
    fn coral_needs_two_rows() {
        let one = Tensor::from_rows(&[&[1.0, 2.0]]).unwrap();
        let two = Tensor::from_rows(&[&[1.0, 2.0], &[0.0, 0.0]]).unwrap();
        assert!(coral_loss(&one, &two).is_err());
    }

    #[test]
    fn covariance_is_symmetric_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = random_batch(&mut rng, 8, 3);
        let c = covariance(&z);
        for a in 0..3 {
            for b in 0..3 {
                assert!((c.get(a, b) - c.get(b, a)).abs() < 1e-12);
            }
        }
        // PSD check through quadratic forms on random vectors.
        for _ in 0..20 {
            let v: alloc::vec::Vec<f64> = (0..3).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut q = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    q += v[a] * c.get(a, b) * v[b];
                }
            }
            assert!(q >= -1e-10, "quadratic form {q}");
        }
    }

    #[test]
    fn ce_hand_examples() {
        let probs = Tensor::from_rows(&[&[0.5, 0.5]]).unwrap();
        let l = source_ce_loss(&probs, &[0]).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-9);

        let onehot = Tensor::from_rows(&[&[1.0, 0.0]]).unwrap();
        assert!(source_ce_loss(&onehot, &[0]).unwrap().abs() < 1e-9);

        let two = Tensor::from_rows(&[&[1.0, 0.0], &[0.5, 0.5]]).unwrap();
        let l2 = source_ce_loss(&two, &[0, 1]).unwrap();
        assert!((l2 - core::f64::consts::LN_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn ce_label_out_of_range() {
        let probs = Tensor::from_rows(&[&[0.5, 0.5]]).unwrap();
        assert!(source_ce_loss(&probs, &[2]).is_err());
    }

    #[test]
    fn entropy_bounds() {
        let uniform = Tensor::from_rows(&[&[0.2; 5]]).unwrap();
        let l = target_entropy_loss(&uniform).unwrap();
        assert!((l - libm::log(5.0)).abs() < 1e-9);

        let onehot = Tensor::from_rows(&[&[0.0, 1.0, 0.0]]).unwrap();
        assert!(target_entropy_loss(&onehot).unwrap().abs() < 1e-9);
    }

    fn model_and_batches(seed: u64) -> (DaModel, Tensor, alloc::vec::Vec<usize>, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = DaModel::new(4, 6, 3, 3, &mut rng).unwrap();
        let xs = random_batch(&mut rng, 5, 4);
        let ys = (0..5).map(|i| i % 3).collect();
        let xt = random_batch(&mut rng, 4, 4);
        (model, xs, ys, xt)
    }

    #[test]
    fn objective_reduces_to_ce_with_zero_weights() {
        let (model, xs, ys, xt) = model_and_batches(5);
        let hp = DaHyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..DaHyperparams::default()
        };
        let (losses, _) = da_objective(&model, &xs, &ys, &xt, &hp).unwrap();
        let probs = model.predict(&xs).unwrap();
        let ce = source_ce_loss(&probs, &ys).unwrap();
        assert!((losses.total - ce).abs() < 1e-12);
        assert_eq!(losses.target_entropy, 0.0);
        assert_eq!(losses.coral, 0.0);
    }

    #[test]
    fn entropy_gradient_never_touches_classifier() {
        let (model, xs, ys, xt) = model_and_batches(6);
        let base = DaHyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..DaHyperparams::default()
        };
        let with_entropy = DaHyperparams {
            lambda1: 2.5,
            lambda2: 0.0,
            ..DaHyperparams::default()
        };
        let (_, g0) = da_objective(&model, &xs, &ys, &xt, &base).unwrap();
        let (_, g1) = da_objective(&model, &xs, &ys, &xt, &with_entropy).unwrap();
        // Turning the entropy term on must leave the classifier gradient
        // bit-identical: the term is a stop-gradient for C.
        assert_eq!(g0.classifier, g1.classifier);
        assert_ne!(g0.feature, g1.feature);
    }

    #[test]
    fn objective_gradients_match_finite_differences() {
        let (model, xs, ys, xt) = model_and_batches(7);
        let hp = DaHyperparams::default();
        let (_, grads) = da_objective(&model, &xs, &ys, &xt, &hp).unwrap();

        // Feature side. The entropy stop-gradient only affects C, so the
        // full objective is differentiable in F's parameters as written.
        let mut feat = model.feature.clone();
        let cls = model.classifier.clone();
        let loss_f = |net: &DenseNetwork| {
            let m = DaModel::from_networks(net.clone(), cls.clone())?;
            Ok(da_objective(&m, &xs, &ys, &xt, &hp)?.0.total)
        };
        let err = finite_diff_check(&mut feat, loss_f, &grads.feature, 1e-5).unwrap();
        assert!(err < 1e-4, "feature gradient error {err}");

        // Classifier side: the analytic gradient deliberately omits the
        // entropy path, so check it against L_s alone.
        let ce_only = DaHyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            ..hp
        };
        let feat_fixed = model.feature.clone();
        let mut cls2 = model.classifier.clone();
        let loss_c = |net: &DenseNetwork| {
            let m = DaModel::from_networks(feat_fixed.clone(), net.clone())?;
            Ok(da_objective(&m, &xs, &ys, &xt, &ce_only)?.0.total)
        };
        let err = finite_diff_check(&mut cls2, loss_c, &grads.classifier, 1e-5).unwrap();
        assert!(err < 1e-4, "classifier gradient error {err}");
    }

    #[test]
    fn update_descends_on_fixed_batch() {
        let (mut model, xs, ys, xt) = model_and_batches(8);
        let hp = DaHyperparams {
            lr: 1e-2,
            ..DaHyperparams::default()
        };
        let mut losses = alloc::vec::Vec::new();
        for _ in 0..50 {
            losses.push(update_da_model(&mut model, &xs, &ys, &xt, &hp).unwrap().total);
        }
        let avg = |w: &[f64]| w.iter().sum::<f64>() / w.len() as f64;
        assert!(
            avg(&losses[40..50]) <= avg(&losses[0..10]),
            "objective did not descend: {} -> {}",
            avg(&losses[0..10]),
            avg(&losses[40..50])
        );
    }

    #[test]
    fn zero_lr_is_identity() {
        let (mut model, xs, ys, xt) = model_and_batches(9);
        let before = model.feature.clone();
        let hp = DaHyperparams {
            lr: 0.0,
            ..DaHyperparams::default()
        };
        update_da_model(&mut model, &xs, &ys, &xt, &hp).unwrap();
        assert_eq!(model.feature, before);
    }

    #[test]
    fn predict_rows_sum_to_one_and_batch_independent() {
        let (model, xs, _, _) = model_and_batches(10);
        let probs = model.predict(&xs).unwrap();
        for i in 0..probs.rows() {
            let sum: f64 = probs.row(i).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
        let permuted = xs.select_rows(&[4, 2, 0, 1, 3]);
        let probs_p = model.predict(&permuted).unwrap();
        for (k, &src) in [4usize, 2, 0, 1, 3].iter().enumerate() {
            assert_eq!(probs_p.row(k), probs.row(src));
        }
    }

    #[test]
    fn untrained_zero_head_is_uniform() {
        let feature = DenseNetwork::zeroed(&[4, 3], &[Activation::Linear]).unwrap();
        let classifier = DenseNetwork::zeroed(&[3, 5], &[Activation::Softmax]).unwrap();
        let model = DaModel::from_networks(feature, classifier).unwrap();
        let x = Tensor::from_rows(&[&[1.0, -2.0, 0.5, 3.0]]).unwrap();
        let probs = model.predict(&x).unwrap();
        for &p in probs.row(0) {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn plain_classifier_fits_separable_data() {
        // λ1=λ2=0 on linearly separable blobs reaches training accuracy 1.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut model = DaModel::new(2, 8, 4, 2, &mut rng).unwrap();
        let mut xs = Tensor::zeros(&[20, 2]);
        let mut ys = alloc::vec::Vec::new();
        for i in 0..20 {
            let c = i % 2;
            let center = if c == 0 { -2.0 } else { 2.0 };
            xs.row_mut(i)[0] = center + rng.random::<f64>() * 0.2;
            xs.row_mut(i)[1] = center + rng.random::<f64>() * 0.2;
            ys.push(c);
        }
        let hp = DaHyperparams {
            lambda1: 0.0,
            lambda2: 0.0,
            lr: 5e-2,
            batch_size: 20,
        };
        let xt = xs.clone();
        for _ in 0..200 {
            update_da_model(&mut model, &xs, &ys, &xt, &hp).unwrap();
        }
        let probs = model.predict(&xs).unwrap();
        let correct = (0..20)
            .filter(|&i| {
                let row = probs.row(i);
                let pred = if row[0] >= row[1] { 0 } else { 1 };
                pred == ys[i]
            })
            .count();
        assert_eq!(correct, 20);
    }
}
