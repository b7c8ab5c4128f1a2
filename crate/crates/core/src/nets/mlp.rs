use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::io::TensorFile;
use crate::{Error, Real, Result};

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    /// `out × in`.
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Fully connected network: leaky-ReLU hidden layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Layer<T>>,
}

/// Activations saved by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache<T> {
    /// Input to each layer (post-activation of the previous one).
    inputs: Vec<Array2<T>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<T>>,
}

impl<T: Real> Mlp<T> {
    /// He-initialised network with layer widths `sizes` (input first). With
    /// `zero_output` the last layer starts at zero so the network outputs
    /// exactly zero for any input.
    pub fn new(sizes: &[usize], zero_output: bool, rng: &mut impl Rng) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
                let weight = if zero_output && l == n - 1 {
                    Array2::zeros((fan_out, fan_in))
                } else {
                    let std = (2.0 / fan_in.max(1) as f64).sqrt();
                    let normal = Normal::new(0.0, std).expect("finite std");
                    Array2::from_shape_fn((fan_out, fan_in), |_| T::lit(normal.sample(rng)))
                };
                Layer { weight, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.nrows()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<T>) -> Result<(Array2<T>, MlpCache<T>)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!("MLP expects {} inputs, got {}", self.input_dim(), x.ncols())));
        }
        let slope = T::lit(LEAKY_SLOPE);
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = h.dot(&layer.weight.t()) + &layer.bias;
            inputs.push(h);
            if l == last {
                return Ok((z, MlpCache { inputs, pre }));
            }
            h = z.mapv(|v| if v > T::zero() { v } else { v * slope });
            pre.push(z);
        }
        unreachable!()
    }

    /// Parameter gradients and input gradient for upstream `g`.
    pub fn backward(&self, cache: &MlpCache<T>, g: ArrayView2<T>) -> (Mlp<T>, Array2<T>) {
        let slope = T::lit(LEAKY_SLOPE);
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = g.to_owned();
        for l in (0..self.layers.len()).rev() {
            let gw = g.t().dot(&cache.inputs[l]);
            let gb = g.sum_axis(Axis(0));
            grads.push(Layer { weight: gw, bias: gb });
            let mut gin = g.dot(&self.layers[l].weight);
            if l > 0 {
                gin.zip_mut_with(&cache.pre[l - 1], |gv, &z| {
                    if z <= T::zero() {
                        *gv *= slope;
                    }
                });
            }
            g = gin;
        }
        grads.reverse();
        (Mlp { layers: grads }, g)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: Array2::zeros(l.weight.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect(),
        }
    }

    /// Parameter tensors in a fixed order, for the optimiser.
    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [l.weight.as_slice_mut().expect("standard layout"), l.bias.as_slice_mut().expect("standard layout")]
            })
            .collect()
    }

    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().expect("standard layout"), l.bias.as_slice().expect("standard layout")])
            .collect()
    }

    pub fn write_tensors(&self, file: &mut TensorFile, prefix: &str) {
        for (i, l) in self.layers.iter().enumerate() {
            let (r, c) = l.weight.dim();
            file.push_f64(&format!("{prefix}.{i}.weight"), &[r, c], l.weight.iter().map(|v| v.f64()).collect());
            file.push_f64(&format!("{prefix}.{i}.bias"), &[r], l.bias.iter().map(|v| v.f64()).collect());
        }
    }

    pub fn read_tensors(file: &TensorFile, prefix: &str) -> Result<Self> {
        let mut layers = Vec::new();
        while file.names().any(|n| n == format!("{prefix}.{}.weight", layers.len())) {
            let i = layers.len();
            let (shape, w) = file.f64(&format!("{prefix}.{i}.weight"))?;
            if shape.len() != 2 {
                return Err(Error::Shape(format!("{prefix}.{i}.weight is not a matrix")));
            }
            let b = file.f64_shaped(&format!("{prefix}.{i}.bias"), &[shape[0]])?;
            layers.push(Layer {
                weight: Array2::from_shape_vec((shape[0], shape[1]), w.iter().map(|&v| T::lit(v)).collect())
                    .map_err(|e| Error::Shape(e.to_string()))?,
                bias: b.iter().map(|&v| T::lit(v)).collect(),
            });
        }
        if layers.is_empty() {
            return Err(Error::Shape(format!("no layers under {prefix}")));
        }
        if layers.windows(2).any(|p| p[0].weight.nrows() != p[1].weight.ncols()) {
            return Err(Error::Shape(format!("layer sizes under {prefix} do not chain")));
        }
        Ok(Self { layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_output_layer_gives_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::<f64>::new(&[5, 16, 16, 3], true, &mut rng);
        let x = Array2::from_shape_fn((4, 5), |(i, j)| (i * 5 + j) as f64 - 7.0);
        let (y, _) = net.forward(x.view()).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_linear_layer() {
        let net = Mlp { layers: vec![Layer { weight: Array2::<f64>::eye(3), bias: Array1::zeros(3) }] };
        let x = array![[1.0, -2.0, 3.5]];
        assert_eq!(net.forward(x.view()).unwrap().0, x);
    }

    #[test]
    fn two_layer_hand_example() {
        // h = lrelu([[1,2],[-1,1]] x + [0, -1]); y = [[1,-1],[2,0]] h + [0.5, 0]
        // x = (1, 1): z = (3, -1) → h = (3, -0.01) → y = (3.51, 6)
        let net = Mlp {
            layers: vec![
                Layer { weight: array![[1.0, 2.0], [-1.0, 1.0]], bias: array![0.0, -1.0] },
                Layer { weight: array![[1.0, -1.0], [2.0, 0.0]], bias: array![0.5, 0.0] },
            ],
        };
        let (y, _) = net.forward(array![[1.0, 1.0]].view()).unwrap();
        assert_eq!(y, array![[3.51, 6.0]]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Mlp::<f64>::new(&[3, 4, 2], false, &mut rng);
        assert!(net.forward(Array2::zeros((1, 2)).view()).is_err());
    }

    #[test]
    fn linear_weight_gradient_is_outer_product() {
        let net = Mlp { layers: vec![Layer { weight: array![[0.25, -0.5]], bias: array![0.125] }] };
        let x = array![[2.0, -1.5]];
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, gx) = net.backward(&cache, array![[0.75]].view());
        assert_eq!(g.layers[0].weight, array![[1.5, -1.125]]);
        assert_eq!(g.layers[0].bias, array![0.75]);
        assert_eq!(gx, array![[0.1875, -0.375]]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::<f64>::new(&[3, 8, 2], false, &mut rng);
        let x = Array2::from_elem((5, 3), 0.4);
        let (_, cache) = net.forward(x.view()).unwrap();
        let (g, gx) = net.backward(&cache, Array2::zeros((5, 2)).view());
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
        assert!(gx.iter().all(|&v| v == 0.0));
    }
}
