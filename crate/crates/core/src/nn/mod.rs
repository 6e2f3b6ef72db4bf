//! Dense-network numerical core: forward pass, analytic backpropagation,
//! Adam, Xavier initialization, and a finite-difference gradient checker.
//!
//! Everything is 64-bit. Networks are plain value objects; a version counter
//! ties forward caches to the parameter state they were computed with, so a
//! backward pass against mutated parameters is rejected instead of silently
//! producing wrong gradients.

mod checkpoint;

pub use checkpoint::{read_adam, read_net, write_adam, write_net};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("cache is stale: parameters changed since the forward pass")]
    StaleCache,
    #[error("non-finite gradient encountered (training divergence)")]
    Divergence,
    #[error("checkpoint i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
}

impl Activation {
    fn apply(self, pre: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => pre.mapv(|x| x.max(0.0)),
            Activation::Sigmoid => pre.mapv(sigmoid),
            Activation::Linear => pre.clone(),
        }
    }

    /// Derivative expressed through pre- and post-activation values.
    fn derivative(self, pre: &Array2<f64>, post: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Relu => pre.mapv(|x| if x > 0.0 { 1.0 } else { 0.0 }),
            Activation::Sigmoid => post.mapv(|s| s * (1.0 - s)),
            Activation::Linear => Array2::ones(pre.raw_dim()),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone)]
pub struct Layer {
    /// `[out x in]`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct DenseNet {
    layers: Vec<Layer>,
    version: u64,
}

/// Per-layer pre/post activations from a forward pass.
pub struct Cache {
    version: u64,
    input: Array2<f64>,
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the network.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub bias: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.raw_dim()))
                .collect(),
            bias: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.bias.raw_dim()))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.bias.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }
}

impl DenseNet {
    /// Xavier-uniform weights, zero biases. `layer_sizes` has L+1 entries,
    /// `activations` L entries.
    pub fn xavier<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Self {
        assert!(layer_sizes.len() >= 2, "need at least input and output");
        assert_eq!(layer_sizes.len() - 1, activations.len());
        let layers = layer_sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = Array2::from_shape_fn((fan_out, fan_in), |_| {
                    rng.random_range(-bound..bound)
                });
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                    activation,
                }
            })
            .collect();
        Self { layers, version: 0 }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Self {
        for pair in layers.windows(2) {
            assert_eq!(pair[0].weights.nrows(), pair[1].weights.ncols());
        }
        Self { layers, version: 0 }
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weights.nrows()
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.weights.nrows()));
        sizes
    }

    /// Batched forward pass over rows of `x` (`[n x in]`).
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Cache), NnError> {
        if x.ncols() != self.input_dim() {
            return Err(NnError::ShapeMismatch {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post = Vec::with_capacity(self.layers.len());
        let mut a = x.clone();
        for layer in &self.layers {
            let z = a.dot(&layer.weights.t()) + &layer.bias;
            let act = layer.activation.apply(&z);
            pre.push(z);
            post.push(act.clone());
            a = act;
        }
        Ok((
            a,
            Cache {
                version: self.version,
                input: x.clone(),
                pre,
                post,
            },
        ))
    }

    /// Single-vector forward pass.
    pub fn forward(&self, x: &Array1<f64>) -> Result<(Array1<f64>, Cache), NnError> {
        let x2 = x.clone().insert_axis(Axis(0));
        let (out, cache) = self.forward_batch(&x2)?;
        Ok((out.index_axis(Axis(0), 0).to_owned(), cache))
    }

    /// Reverse-mode gradients of `sum(output * output_grad)` w.r.t. all
    /// parameters and the input. Gradients are summed over the batch.
    pub fn backward_batch(
        &self,
        cache: &Cache,
        output_grad: &Array2<f64>,
    ) -> Result<(Gradients, Array2<f64>), NnError> {
        if cache.version != self.version {
            return Err(NnError::StaleCache);
        }
        if output_grad.ncols() != self.output_dim() {
            return Err(NnError::ShapeMismatch {
                expected: self.output_dim(),
                got: output_grad.ncols(),
            });
        }
        let n_layers = self.layers.len();
        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad
            * &self.layers[n_layers - 1]
                .activation
                .derivative(&cache.pre[n_layers - 1], &cache.post[n_layers - 1]);
        for l in (0..n_layers).rev() {
            let layer_input = if l == 0 { &cache.input } else { &cache.post[l - 1] };
            // matmul with a transposed lhs can come back column-major; force
            // row-major so parameter and gradient memory orders agree
            grads.weights[l] = delta.t().dot(layer_input).as_standard_layout().into_owned();
            grads.bias[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let upstream = delta.dot(&self.layers[l].weights);
                delta = upstream
                    * &self.layers[l - 1]
                        .activation
                        .derivative(&cache.pre[l - 1], &cache.post[l - 1]);
            }
        }
        let input_grad = {
            // recompute first-layer delta to propagate into the input
            let mut d = output_grad
                * &self.layers[n_layers - 1]
                    .activation
                    .derivative(&cache.pre[n_layers - 1], &cache.post[n_layers - 1]);
            for l in (1..n_layers).rev() {
                let upstream = d.dot(&self.layers[l].weights);
                d = upstream
                    * &self.layers[l - 1]
                        .activation
                        .derivative(&cache.pre[l - 1], &cache.post[l - 1]);
            }
            d.dot(&self.layers[0].weights)
        };
        Ok((grads, input_grad))
    }

    /// Single-vector backward pass.
    pub fn backward(
        &self,
        cache: &Cache,
        output_grad: &Array1<f64>,
    ) -> Result<(Gradients, Array1<f64>), NnError> {
        let g2 = output_grad.clone().insert_axis(Axis(0));
        let (grads, ig) = self.backward_batch(cache, &g2)?;
        Ok((grads, ig.index_axis(Axis(0), 0).to_owned()))
    }

    fn bump_version(&mut self) {
        self.version = self.version.wrapping_add(1);
    }
}

/// Bias-corrected Adam state for one network.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Gradients::zeros_like(net),
            v: Gradients::zeros_like(net),
        }
    }

    /// One descent step along `grads`. Errors on non-finite gradients.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NnError> {
        if !grads.is_finite() {
            return Err(NnError::Divergence);
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.lr, self.beta1, self.beta2, self.eps);
        for (l, layer) in net.layers.iter_mut().enumerate() {
            azip_update(
                layer.weights.as_slice_mut().unwrap(),
                grads.weights[l].as_slice().unwrap(),
                self.m.weights[l].as_slice_mut().unwrap(),
                self.v.weights[l].as_slice_mut().unwrap(),
                lr, b1, b2, eps, bc1, bc2,
            );
            azip_update(
                layer.bias.as_slice_mut().unwrap(),
                grads.bias[l].as_slice().unwrap(),
                self.m.bias[l].as_slice_mut().unwrap(),
                self.v.bias[l].as_slice_mut().unwrap(),
                lr, b1, b2, eps, bc1, bc2,
            );
        }
        net.bump_version();
        Ok(())
    }

    pub(crate) fn moments(&self) -> (&Gradients, &Gradients) {
        (&self.m, &self.v)
    }

    pub(crate) fn restore(net: &DenseNet, lr: f64, step_count: u64, m: Gradients, v: Gradients) -> Self {
        let mut adam = Self::new(net, lr);
        adam.step_count = step_count;
        adam.m = m;
        adam.v = v;
        adam
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    params: &mut [f64],
    grads: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..params.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grads[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grads[i] * grads[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// `target <- tau * local + (1 - tau) * target`, elementwise.
pub fn soft_update(target: &mut DenseNet, local: &DenseNet, tau: f64) {
    assert!(tau > 0.0 && tau <= 1.0);
    for (t, l) in target.layers.iter_mut().zip(&local.layers) {
        t.weights.zip_mut_with(&l.weights, |tw, &lw| *tw = tau * lw + (1.0 - tau) * *tw);
        t.bias.zip_mut_with(&l.bias, |tb, &lb| *tb = tau * lb + (1.0 - tau) * *tb);
    }
    target.bump_version();
}

/// Compare analytic parameter gradients against central finite differences
/// of `L = sum(output * output_grad)`. Returns the worst relative error
/// (with an absolute floor to avoid 0/0 on dead relu units).
pub fn grad_check(
    net: &DenseNet,
    x: &Array1<f64>,
    output_grad: &Array1<f64>,
    h: f64,
) -> Result<f64, NnError> {
    let (_, cache) = net.forward(x)?;
    let (analytic, _) = net.backward(&cache, output_grad)?;
    let loss = |n: &DenseNet| -> f64 {
        let (out, _) = n.forward(x).unwrap();
        out.iter().zip(output_grad).map(|(o, g)| o * g).sum()
    };
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for l in 0..net.layers.len() {
        let n_w = net.layers[l].weights.len();
        for idx in 0..n_w {
            let orig = net.layers[l].weights.as_slice().unwrap()[idx];
            probe.layers[l].weights.as_slice_mut().unwrap()[idx] = orig + h;
            let up = loss(&probe);
            probe.layers[l].weights.as_slice_mut().unwrap()[idx] = orig - h;
            let down = loss(&probe);
            probe.layers[l].weights.as_slice_mut().unwrap()[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic.weights[l].as_slice().unwrap()[idx];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-7));
        }
        for idx in 0..net.layers[l].bias.len() {
            let orig = net.layers[l].bias[idx];
            probe.layers[l].bias[idx] = orig + h;
            let up = loss(&probe);
            probe.layers[l].bias[idx] = orig - h;
            let down = loss(&probe);
            probe.layers[l].bias[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic.bias[l][idx];
            worst = worst.max((an - fd).abs() / an.abs().max(fd.abs()).max(1e-7));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, STREAM_INIT};
    use ndarray::array;

    fn single_linear(w: f64, b: f64) -> DenseNet {
        DenseNet::from_layers(vec![Layer {
            weights: array![[w]],
            bias: array![b],
            activation: Activation::Linear,
        }])
    }

    #[test]
    fn forward_affine_1x1() {
        let net = single_linear(2.0, 1.0);
        let (out, _) = net.forward(&array![3.0]).unwrap();
        assert_eq!(out[0], 7.0);
    }

    #[test]
    fn forward_zero_net_is_zero() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: Array2::zeros((2, 3)),
            bias: Array1::zeros(2),
            activation: Activation::Linear,
        }]);
        let (out, _) = net.forward(&array![1.0, -2.0, 5.0]).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn relu_clips_negatives() {
        let net = DenseNet::from_layers(vec![Layer {
            weights: Array2::eye(2),
            bias: Array1::zeros(2),
            activation: Activation::Relu,
        }]);
        let (out, _) = net.forward(&array![-1.0, 2.0]).unwrap();
        assert_eq!(out, array![0.0, 2.0]);
    }

    #[test]
    fn forward_dimension_mismatch() {
        let net = single_linear(1.0, 0.0);
        assert!(matches!(
            net.forward(&array![1.0, 2.0]),
            Err(NnError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn backward_outer_product_identity() {
        // linear single layer: dL/dW = output_grad (x) input
        let mut rng = stream_rng(1, STREAM_INIT);
        let net = DenseNet::xavier(&[3, 2], &[Activation::Linear], &mut rng);
        let x = array![0.5, -1.0, 2.0];
        let g = array![1.5, -0.25];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, input_grad) = net.backward(&cache, &g).unwrap();
        for i in 0..2 {
            for j in 0..3 {
                assert!((grads.weights[0][[i, j]] - g[i] * x[j]).abs() < 1e-14);
            }
        }
        // input grad = g . W
        let expect = g.dot(&net.layers()[0].weights);
        for (a, b) in input_grad.iter().zip(expect.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn backward_zero_grad_gives_zeros() {
        let mut rng = stream_rng(2, STREAM_INIT);
        let net = DenseNet::xavier(
            &[4, 8, 2],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let x = array![0.1, 0.2, -0.3, 0.4];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, ig) = net.backward(&cache, &array![0.0, 0.0]).unwrap();
        assert!(grads.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(ig.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_rejected() {
        let mut rng = stream_rng(3, STREAM_INIT);
        let mut net = DenseNet::xavier(&[2, 2], &[Activation::Linear], &mut rng);
        let x = array![1.0, 2.0];
        let (_, cache) = net.forward(&x).unwrap();
        let (grads, _) = net.backward(&cache, &array![1.0, 1.0]).unwrap();
        let mut adam = Adam::new(&net, 1e-3);
        adam.step(&mut net, &grads).unwrap();
        assert!(matches!(
            net.backward(&cache, &array![1.0, 1.0]),
            Err(NnError::StaleCache)
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream_rng(4, STREAM_INIT);
        for acts in [
            [Activation::Relu, Activation::Relu, Activation::Linear],
            [Activation::Sigmoid, Activation::Relu, Activation::Sigmoid],
        ] {
            let net = DenseNet::xavier(&[8, 16, 8, 4], &acts, &mut rng);
            let x = Array1::from_shape_fn(8, |_| rng.random_range(-1.0..1.0));
            let g = Array1::from_shape_fn(4, |_| rng.random_range(-1.0..1.0));
            let worst = grad_check(&net, &x, &g, 1e-5).unwrap();
            assert!(worst < 1e-4, "worst relative error {worst}");
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut rng = stream_rng(5, STREAM_INIT);
        let mut net = DenseNet::xavier(&[2, 3], &[Activation::Linear], &mut rng);
        let before = net.layers()[0].weights.clone();
        let grads = Gradients::zeros_like(&net);
        let mut adam = Adam::new(&net, 5e-4);
        adam.step(&mut net, &grads).unwrap();
        assert_eq!(net.layers()[0].weights, before);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // constant gradient 1: bias-corrected first step is -lr / (1 + eps')
        let mut net = single_linear(0.0, 0.0);
        let mut adam = Adam::new(&net, 5e-4);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][[0, 0]] = 1.0;
        adam.step(&mut net, &grads).unwrap();
        let delta = net.layers()[0].weights[[0, 0]];
        assert!((delta + 5e-4).abs() < 1e-8, "delta {delta}");
    }

    #[test]
    fn adam_opposite_gradients_move_opposite() {
        let mut rng = stream_rng(6, STREAM_INIT);
        let mut net = DenseNet::xavier(&[1, 2], &[Activation::Linear], &mut rng);
        let before = net.layers()[0].weights.clone();
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][[0, 0]] = 1.0;
        grads.weights[0][[1, 0]] = -1.0;
        let mut adam = Adam::new(&net, 1e-3);
        adam.step(&mut net, &grads).unwrap();
        assert!(net.layers()[0].weights[[0, 0]] < before[[0, 0]]);
        assert!(net.layers()[0].weights[[1, 0]] > before[[1, 0]]);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = single_linear(0.0, 0.0);
        let mut adam = Adam::new(&net, 1e-3);
        let mut grads = Gradients::zeros_like(&net);
        grads.weights[0][[0, 0]] = f64::NAN;
        assert!(matches!(adam.step(&mut net, &grads), Err(NnError::Divergence)));
    }

    #[test]
    fn xavier_seeded_and_bounded() {
        let mut a = stream_rng(7, STREAM_INIT);
        let mut b = stream_rng(7, STREAM_INIT);
        let acts = [Activation::Relu, Activation::Linear];
        let n1 = DenseNet::xavier(&[5, 8, 3], &acts, &mut a);
        let n2 = DenseNet::xavier(&[5, 8, 3], &acts, &mut b);
        for (l1, l2) in n1.layers().iter().zip(n2.layers()) {
            assert_eq!(l1.weights, l2.weights);
            assert!(l1.bias.iter().all(|&x| x == 0.0));
        }
        let bound0 = (6.0 / 13.0f64).sqrt();
        assert!(n1.layers()[0].weights.iter().all(|&w| w.abs() <= bound0));
    }

    #[test]
    fn soft_update_convex_combination() {
        let local = single_linear(1.0, 1.0);
        let mut target = single_linear(0.0, 0.0);
        soft_update(&mut target, &local, 0.5);
        assert_eq!(target.layers()[0].weights[[0, 0]], 0.5);
        soft_update(&mut target, &local, 1.0);
        assert_eq!(target.layers()[0].weights[[0, 0]], 1.0);
    }

    #[test]
    fn soft_update_geometric_convergence() {
        let local = single_linear(1.0, 0.0);
        let mut target = single_linear(0.0, 0.0);
        let tau = 0.1;
        let mut gap = 1.0;
        for _ in 0..20 {
            soft_update(&mut target, &local, tau);
            let new_gap = 1.0 - target.layers()[0].weights[[0, 0]];
            assert!((new_gap - (1.0 - tau) * gap).abs() < 1e-12);
            gap = new_gap;
        }
    }

    #[test]
    fn linearity_of_linear_net() {
        let mut rng = stream_rng(8, STREAM_INIT);
        let net = DenseNet::xavier(
            &[3, 4, 2],
            &[Activation::Linear, Activation::Linear],
            &mut rng,
        );
        let x = array![0.3, -0.7, 1.1];
        let y = array![-0.2, 0.5, 0.9];
        let (fx, _) = net.forward(&x).unwrap();
        let (fy, _) = net.forward(&y).unwrap();
        let combo = &x * 2.0 + &y * (-0.5);
        let (fc, _) = net.forward(&combo).unwrap();
        for i in 0..2 {
            assert!((fc[i] - (2.0 * fx[i] - 0.5 * fy[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = stream_rng(9, STREAM_INIT);
        let net = DenseNet::xavier(
            &[4, 6, 2],
            &[Activation::Relu, Activation::Linear],
            &mut rng,
        );
        let x = array![0.1, 0.2, 0.3, 0.4];
        let (a, _) = net.forward(&x).unwrap();
        let (b, _) = net.forward(&x).unwrap();
        assert_eq!(a, b);
    }
}
