//! Central finite-difference gradient verification.
//!
//! This is the independent oracle for every analytic gradient in the crate:
//! it never calls `backward`, only the supplied loss closure.

use crate::error::{CoreError, Result};
use crate::network::{DenseNetwork, GradientSet};

/// Compares `analytic` against central differences of `loss_fn` at the
/// network's current parameters and returns the largest per-coordinate
/// relative discrepancy.
///
/// The discrepancy for one coordinate is `|a - n| / max(|a|, |n|, 1e-6)`;
/// the absolute guard keeps noise on near-zero gradients from dominating.
/// Two exactly-zero gradients score 0.
pub fn finite_diff_check<F>(
    net: &mut DenseNetwork,
    mut loss_fn: F,
    analytic: &GradientSet,
    eps: f64,
) -> Result<f64>
where
    F: FnMut(&DenseNetwork) -> Result<f64>,
{
    if eps <= 0.0 {
        return Err(CoreError::Usage("eps must be > 0".into()));
    }
    if analytic.param_count() != net.param_count() {
        return Err(CoreError::Usage(
            "analytic gradient does not match parameter count".into(),
        ));
    }
    let mut max_err = 0.0_f64;
    for idx in 0..net.param_count() {
        let original = net.param(idx);

        *net.param_mut(idx) = original + eps;
        let plus = loss_fn(net)?;
        *net.param_mut(idx) = original - eps;
        let minus = loss_fn(net)?;
        *net.param_mut(idx) = original;

        if !plus.is_finite() || !minus.is_finite() {
            return Err(CoreError::Numeric("non-finite loss during gradient check".into()));
        }
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic.param(idx);
        let diff = (a - numeric).abs();
        if diff == 0.0 {
            continue;
        }
        let denom = a.abs().max(numeric.abs()).max(1e-6);
        max_err = max_err.max(diff / denom);
    }
    Ok(max_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, GradientSet};
    use crate::tensor::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quadratic_loss(net: &DenseNetwork) -> Result<f64> {
        // loss = sum over params of p^2
        let mut s = 0.0;
        for idx in 0..net.param_count() {
            let p = net.param(idx);
            s += p * p;
        }
        Ok(s)
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net =
            DenseNetwork::xavier(&[3, 2], &[Activation::Linear], &mut rng).unwrap();
        // Analytic gradient of sum p^2 is 2p, written via the flat order.
        let mut analytic = GradientSet::zeros_like(&net);
        let mut flat = alloc_flat(&net);
        for (i, v) in flat.iter_mut().enumerate() {
            *v = 2.0 * net.param(i);
        }
        write_flat(&mut analytic, &flat);
        let err = finite_diff_check(&mut net, quadratic_loss, &analytic, 1e-5).unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn zero_vs_zero_is_zero() {
        let mut net = DenseNetwork::zeroed(&[2, 2], &[Activation::Linear]).unwrap();
        let analytic = GradientSet::zeros_like(&net);
        // Constant loss: both analytic and numeric gradients are zero.
        let err = finite_diff_check(&mut net, |_| Ok(1.0), &analytic, 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn two_layer_relu_backward_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut net = DenseNetwork::xavier(
            &[4, 8, 3],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        )
        .unwrap();
        // Inputs nudged away from zero pre-activations by using generic values.
        let mut x = Tensor::zeros(&[5, 4]);
        for v in x.data_mut() {
            *v = rng.random::<f64>() * 2.0 - 1.0 + 0.05;
        }
        let loss = |net: &DenseNetwork| -> Result<f64> {
            let trace = net.forward(&x)?;
            Ok(trace.output().data().iter().map(|v| v * v).sum())
        };
        let trace = net.forward(&x).unwrap();
        let mut upstream = trace.output().clone();
        for v in upstream.data_mut() {
            *v *= 2.0;
        }
        let (analytic, _) = net.backward(&trace, &upstream).unwrap();
        let err = finite_diff_check(&mut net, loss, &analytic, 1e-5).unwrap();
        assert!(err < 1e-4, "relative error {err}");
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let mut net = DenseNetwork::zeroed(&[2, 2], &[Activation::Linear]).unwrap();
        let analytic = GradientSet::zeros_like(&net);
        let res = finite_diff_check(&mut net, |_| Ok(f64::NAN), &analytic, 1e-5);
        assert!(matches!(res, Err(CoreError::Numeric(_))));
    }

    fn alloc_flat(net: &DenseNetwork) -> alloc::vec::Vec<f64> {
        alloc::vec![0.0; net.param_count()]
    }

    fn write_flat(grads: &mut GradientSet, flat: &[f64]) {
        let mut i = 0;
        for layer in grads.layers_mut() {
            for v in layer.d_weights.data_mut() {
                *v = flat[i];
                i += 1;
            }
            for v in &mut layer.d_bias {
                *v = flat[i];
                i += 1;
            }
        }
    }
}
