use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Layer, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generator" => Ok(Role::Generator),
            "discriminator" => Ok(Role::Discriminator),
            other => Err(Error::invalid(format!("unknown role '{other}'"))),
        }
    }
}

/// A sequential chain of layers. Consecutive layers only need matching
/// per-sample element counts; flattening and unflattening are implicit.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T: Scalar = f32> {
    pub role: Role,
    layers: Vec<Layer<T>>,
}

/// Gradients from a full backward pass. `layers[i]` holds the
/// (weight, bias) gradients of layer `i` when parameter gradients were requested.
#[derive(Clone, Debug)]
pub struct NetworkGrads<T: Scalar = f32> {
    pub input: Tensor<T>,
    pub layers: Vec<Option<(Tensor<T>, Tensor<T>)>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(role: Role, layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            let out = pair[0].output_shape();
            let inp = pair[1].input_shape();
            if out.iter().product::<usize>() != inp.iter().product::<usize>() {
                return Err(Error::shape(&inp, &out).at_layer(i + 1));
            }
        }
        Ok(Self { role, layers })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn into_layers(self) -> Vec<Layer<T>> {
        self.layers
    }

    pub fn input_shape(&self) -> Vec<usize> {
        self.layers[0].input_shape()
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.layers[self.layers.len() - 1].output_shape()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Layer::parameter_count).sum()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.forward_prefix(x, self.layers.len())
    }

    fn forward_prefix(&self, x: &Tensor<T>, count: usize) -> Result<Tensor<T>> {
        let mut cur: Option<Tensor<T>> = None;
        for (i, layer) in self.layers[..count].iter().enumerate() {
            let input = cur.as_ref().unwrap_or(x);
            cur = Some(layer.forward(input).map_err(|e| e.at_layer(i))?);
        }
        Ok(cur.unwrap_or_else(|| x.clone()))
    }

    /// Forward pass keeping every layer's output for a later backward pass.
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let mut trace: Vec<Tensor<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = trace.last().unwrap_or(x);
            let out = layer.forward(input).map_err(|e| e.at_layer(i))?;
            trace.push(out);
        }
        Ok(trace)
    }

    /// Output of the last hidden layer (the layer just before the output layer).
    pub fn hidden_features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if self.layers.len() < 2 {
            return Err(Error::invalid("network has no hidden layer"));
        }
        self.forward_prefix(x, self.layers.len() - 1)
    }

    pub fn backward(
        &self,
        x: &Tensor<T>,
        trace: &[Tensor<T>],
        upstream: &Tensor<T>,
        param_grads: bool,
    ) -> Result<NetworkGrads<T>> {
        if trace.len() != self.layers.len() {
            return Err(Error::invalid("trace length does not match layer count"));
        }
        let mut layers = vec![None; self.layers.len()];
        let mut grad = upstream.clone();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { &trace[i - 1] };
            let g = self.layers[i]
                .backward(input, &trace[i], &grad, param_grads)
                .map_err(|e| e.at_layer(i))?;
            if let (Some(w), Some(b)) = (g.weight, g.bias) {
                layers[i] = Some((w, b));
            }
            grad = g.input;
        }
        Ok(NetworkGrads {
            input: grad,
            layers,
        })
    }

    /// Mutable parameter groups in a fixed order: weight then bias per layer.
    pub fn param_groups_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weight.data_mut());
            out.push(l.bias.data_mut());
        }
        out
    }

    pub fn param_group_sizes(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.len(), l.bias.len()])
            .collect()
    }
}

impl<T: Scalar> NetworkGrads<T> {
    /// Gradient groups aligned with [`Network::param_groups_mut`].
    pub fn groups(&self) -> Result<Vec<&[T]>> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            let (w, b) = l
                .as_ref()
                .ok_or_else(|| Error::invalid("parameter gradients were not computed"))?;
            out.push(w.data());
            out.push(b.data());
        }
        Ok(out)
    }

    /// Adds another gradient set onto this one (parameter groups only).
    pub fn accumulate(&mut self, other: &NetworkGrads<T>) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::invalid("gradient sets from different networks"));
        }
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            match (mine, theirs) {
                (Some((w, b)), Some((ow, ob))) => {
                    for (a, &c) in w.data_mut().iter_mut().zip(ow.data()) {
                        *a = *a + c;
                    }
                    for (a, &c) in b.data_mut().iter_mut().zip(ob.data()) {
                        *a = *a + c;
                    }
                }
                (None, None) => {}
                _ => return Err(Error::invalid("mismatched gradient sets")),
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, ConvGeometry, Geometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_disc(rng: &mut ChaCha8Rng) -> Network<f64> {
        let conv = Layer::init(
            Geometry::Conv2d(ConvGeometry::halving(1, 2, 6, 6, 3)),
            Activation::Tanh,
            rng,
        )
        .unwrap();
        let lin = Layer::init(
            Geometry::Linear {
                in_features: 18,
                out_features: 1,
            },
            Activation::Sigmoid,
            rng,
        )
        .unwrap();
        Network::new(Role::Discriminator, vec![conv, lin]).unwrap()
    }

    #[test]
    fn rejects_broken_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conv = Layer::<f32>::init(
            Geometry::Conv2d(ConvGeometry::halving(1, 2, 6, 6, 3)),
            Activation::Relu,
            &mut rng,
        )
        .unwrap();
        let lin = Layer::<f32>::zeroed(
            Geometry::Linear {
                in_features: 17,
                out_features: 1,
            },
            Activation::Sigmoid,
        )
        .unwrap();
        let err = Network::new(Role::Discriminator, vec![conv, lin]).unwrap_err();
        assert!(matches!(err, Error::Shape { layer: Some(1), .. }));
    }

    #[test]
    fn forward_is_deterministic_and_features_tap_hidden_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = small_disc(&mut rng);
        let x = Tensor::new(vec![2, 1, 6, 6], (0..72).map(|i| (i as f64 * 0.1).sin()).collect()).unwrap();
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
        assert_eq!(net.hidden_features(&x).unwrap().shape(), &[2, 2, 3, 3]);
        let err = net.forward(&Tensor::zeros(&[1, 1, 5, 5])).unwrap_err();
        assert!(matches!(err, Error::Shape { layer: Some(0), .. }));
    }

    #[test]
    fn network_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut net = small_disc(&mut rng);
        let x = Tensor::new(vec![2, 1, 6, 6], (0..72).map(|i| (i as f64 * 0.37).cos()).collect()).unwrap();
        let trace = net.forward_trace(&x).unwrap();
        let up = Tensor::filled(&[2, 1], 1.0);
        let grads = net.backward(&x, &trace, &up, true).unwrap();
        let analytic: Vec<f64> = grads.groups().unwrap().concat();
        let h = 1e-5;
        let mut idx = 0;
        let sizes = net.param_group_sizes();
        for (gi, &size) in sizes.iter().enumerate() {
            for j in 0..size {
                let orig = net.param_groups_mut()[gi][j];
                net.param_groups_mut()[gi][j] = orig + h;
                let plus: f64 = net.forward(&x).unwrap().data().iter().sum();
                net.param_groups_mut()[gi][j] = orig - h;
                let minus: f64 = net.forward(&x).unwrap().data().iter().sum();
                net.param_groups_mut()[gi][j] = orig;
                let fd = (plus - minus) / (2.0 * h);
                assert!((fd - analytic[idx]).abs() < 1e-7, "group {gi} idx {j}");
                idx += 1;
            }
        }
    }
}
