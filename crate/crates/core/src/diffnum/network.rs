use rand::Rng;

use super::layers::{Layer, LayerSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A fixed stack of layers with a one-deep tape: `forward` with recording
/// enabled stores what `backward` needs, and `backward` consumes it.
#[derive(Clone, Debug)]
pub struct Sequential {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
}

impl Sequential {
    /// Validate the stack against a per-item input shape and initialize
    /// parameters.
    pub fn new<R: Rng>(input_shape: &[usize], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let layer = Layer::new(spec.clone(), i, &shape, rng)?;
            shape = layer.out_shape().to_vec();
            layers.push(layer);
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
        })
    }

    /// Per-item output shape computed by the shared shape function.
    pub fn output_shape(specs: &[LayerSpec], input_shape: &[usize]) -> Result<Vec<usize>> {
        specs
            .iter()
            .enumerate()
            .try_fold(input_shape.to_vec(), |shape, (i, s)| s.output_shape(i, &shape))
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        self.layers
            .last()
            .map(|l| l.out_shape())
            .unwrap_or(&self.input_shape)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec().clone()).collect()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Run the stack on a batched input `[N, ...input_shape]`.
    pub fn forward(&mut self, input: &Tensor, record: bool) -> Result<Tensor> {
        if input.shape().len() != self.input_shape.len() + 1 || &input.shape()[1..] != self.input_shape.as_slice() {
            let kind = self.layers.first().map_or("input", |l| l.spec().kind());
            return Err(Error::Shape {
                layer: 0,
                kind,
                detail: format!(
                    "expected [N, {:?}], got {:?}",
                    self.input_shape,
                    input.shape()
                ),
            });
        }
        let mut x = input.clone();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            x = layer.forward(i, &x, record)?;
        }
        Ok(x)
    }

    /// Backpropagate `grad_output` (gradient of the loss w.r.t. the last
    /// output) through the recorded tape. Parameter gradients accumulate;
    /// returns the gradient w.r.t. the input.
    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        if self.layers.iter().any(|l| !l.has_cache()) {
            return Err(Error::State(
                "backward called without a recorded forward".into(),
            ));
        }
        let mut g = grad_output.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            g = layer.backward(i, &g)?;
        }
        Ok(g)
    }

    pub fn clear_tape(&mut self) {
        self.layers.iter_mut().for_each(Layer::clear_cache);
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.params_mut().iter_mut().for_each(Tensor::zero_grad);
        }
    }

    /// Parameters in a stable order with names `"{layer}.{weight|bias}"`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (j, p) in layer.params().iter().enumerate() {
                out.push((format!("{i}.{}", param_suffix(j)), p));
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.params_mut().iter_mut())
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    /// Combined branch signature of the last forward; changes whenever a
    /// relu flips or a pooling winner moves.
    pub fn branch_signature(&self) -> Vec<u64> {
        self.layers.iter().map(Layer::branch_signature).collect()
    }
}

fn param_suffix(j: usize) -> &'static str {
    if j == 0 {
        "weight"
    } else {
        "bias"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_dense_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Sequential::new(&[3], &[LayerSpec::dense(3, 3)], &mut rng).unwrap();
        {
            let mut params = net.params_mut();
            params[0].data_mut().copy_from_slice(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        }
        let v = Tensor::from_vec(&[1, 3], vec![0.5, -2.0, 7.25]).unwrap();
        assert_eq!(net.forward(&v, false).unwrap().data(), v.data());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let specs = [LayerSpec::conv(2, 3), LayerSpec::Relu, LayerSpec::dense(3 * 4 * 4, 5)];
        let mut net = Sequential::new(&[2, 6, 6], &specs, &mut rng).unwrap();
        for p in net.params_mut() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Tensor::full(&[2, 2, 6, 6], 3.0);
        let y = net.forward(&x, false).unwrap();
        assert_eq!(y.shape(), &[2, 5]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sum_loss_gives_unit_parameter_grads() {
        // Input of ones, loss = sum of outputs: d/dW = x = 1, d/db = 1.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = Sequential::new(&[4], &[LayerSpec::dense(4, 3)], &mut rng).unwrap();
        let x = Tensor::full(&[1, 4], 1.0);
        let y = net.forward(&x, true).unwrap();
        net.backward(&Tensor::full(y.shape(), 1.0)).unwrap();
        for (_, p) in net.named_params() {
            assert!(p.grad().unwrap().iter().all(|&g| g == 1.0));
        }
    }

    #[test]
    fn quadratic_loss_matches_closed_form() {
        // L = 0.5 * |Wx - y|^2  =>  dL/dW = (Wx - y) x^T
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = Sequential::new(&[2], &[LayerSpec::dense(2, 2)], &mut rng).unwrap();
        let w = [0.3, -1.2, 0.8, 0.5];
        net.params_mut()[0].data_mut().copy_from_slice(&w);
        let x = [1.5, -0.5];
        let target = [0.2, 0.7];
        let out = net.forward(&Tensor::from_vec(&[1, 2], x.to_vec()).unwrap(), true).unwrap();
        let r: Vec<f64> = out.data().iter().zip(&target).map(|(a, b)| a - b).collect();
        net.backward(&Tensor::from_vec(&[1, 2], r.clone()).unwrap()).unwrap();
        let g = net.named_params()[0].1.grad().unwrap().to_vec();
        for i in 0..2 {
            for j in 0..2 {
                assert!((g[i * 2 + j] - r[i] * x[j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backward_without_forward_is_state_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Sequential::new(&[2], &[LayerSpec::dense(2, 1)], &mut rng).unwrap();
        let err = net.backward(&Tensor::zeros(&[1, 1])).unwrap_err();
        assert!(matches!(err, Error::State(_)));
    }

    #[test]
    fn construction_rejects_bad_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let err = Sequential::new(&[3, 8, 8], &[LayerSpec::conv(3, 4), LayerSpec::dense(10, 2)], &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::Shape { layer: 1, .. }));
    }
}
