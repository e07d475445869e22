use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fid::{extract_features, gaussian_stats, FeatureMatrix, GaussianStats};
use crate::nn::{AdamConfig, AdamState, Activation, ConvGeometry, Geometry, Layer, Network, Role, Tensor};

/// Maps a batch of samples to feature vectors for Fréchet distance.
pub trait FeatureExtractor: Send + Sync {
    fn name(&self) -> &str;

    fn extract(&self, samples: &Tensor) -> Result<FeatureMatrix>;
}

/// Raw pixels as features.
#[derive(Clone, Copy, Debug, Default)]
pub struct PixelFeatures;

impl FeatureExtractor for PixelFeatures {
    fn name(&self) -> &str {
        "pixels"
    }

    fn extract(&self, samples: &Tensor) -> Result<FeatureMatrix> {
        FeatureMatrix::from_tensor(samples, "pixels")
    }
}

/// Last-hidden-layer activations of a frozen network.
#[derive(Clone, Debug)]
pub struct NetworkFeatures {
    pub network: Network,
    name: String,
}

impl NetworkFeatures {
    pub fn new(network: Network, name: impl Into<String>) -> Result<Self> {
        if network.layers().len() < 2 {
            return Err(Error::invalid("feature network needs a hidden layer"));
        }
        Ok(Self {
            network,
            name: name.into(),
        })
    }
}

impl FeatureExtractor for NetworkFeatures {
    fn name(&self) -> &str {
        &self.name
    }

    fn extract(&self, samples: &Tensor) -> Result<FeatureMatrix> {
        let mut fm = extract_features(&self.network, samples)?;
        fm.source = self.name.clone();
        Ok(fm)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub feature_dim: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            feature_dim: 32,
        }
    }
}

/// Small convolutional classifier trained on the run's dataset before
/// evolution and frozen afterwards. With labels it learns the label classes;
/// without labels it learns to tell dataset samples from uniform noise.
pub fn train_classifier_extractor(
    samples: &Tensor,
    labels: Option<&[u8]>,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<NetworkFeatures> {
    let shape = &samples.shape()[1..];
    if shape.len() != 3 {
        return Err(Error::invalid(format!("expected image samples [n, c, h, w], got {:?}", samples.shape())));
    }
    let (c, h, w) = (shape[0], shape[1], shape[2]);
    let n = samples.batch();
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::invalid(format!("{} labels for {n} samples", l.len())));
        }
    }
    let classes = labels.map_or(2, |l| l.iter().copied().max().unwrap_or(0) as usize + 1).max(2);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv1 = ConvGeometry::halving(c, 16, h, w, 3);
    let l1 = Layer::init(Geometry::Conv2d(conv1), Activation::LeakyRelu, &mut rng)?;
    let s1 = l1.output_shape();
    let conv2 = ConvGeometry::halving(16, 32, s1[1], s1[2], 3);
    let l2 = Layer::init(Geometry::Conv2d(conv2), Activation::LeakyRelu, &mut rng)?;
    let flat: usize = l2.output_shape().iter().product();
    let l3 = Layer::init(
        Geometry::Linear {
            in_features: flat,
            out_features: cfg.feature_dim,
        },
        Activation::LeakyRelu,
        &mut rng,
    )?;
    let l4 = Layer::init(
        Geometry::Linear {
            in_features: cfg.feature_dim,
            out_features: classes,
        },
        Activation::None,
        &mut rng,
    )?;
    let mut net = Network::new(Role::Discriminator, vec![l1, l2, l3, l4])?;
    let mut adam = AdamState::new(&net.param_group_sizes(), AdamConfig::default());

    let b = cfg.batch_size.max(2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut pos = 0;
    for _ in 0..cfg.steps {
        let (batch, targets) = match labels {
            Some(l) => {
                let idx: Vec<usize> = (0..b)
                    .map(|_| {
                        let i = order[pos];
                        pos = (pos + 1) % n;
                        i
                    })
                    .collect();
                let targets = idx.iter().map(|&i| l[i] as usize).collect::<Vec<_>>();
                (samples.select(&idx)?, targets)
            }
            None => {
                let half = b / 2;
                let idx: Vec<usize> = (0..half)
                    .map(|_| {
                        let i = order[pos];
                        pos = (pos + 1) % n;
                        i
                    })
                    .collect();
                let real = samples.select(&idx)?;
                let noise_len = (b - half) * c * h * w;
                let noise = Tensor::new(
                    vec![b - half, c, h, w],
                    (0..noise_len).map(|_| rng.random::<f32>()).collect(),
                )?;
                let mut targets = vec![0; half];
                targets.extend(std::iter::repeat_n(1, b - half));
                (Tensor::concat_batch(&[&real, &noise])?, targets)
            }
        };
        let trace = net.forward_trace(&batch)?;
        let logits = trace.last().expect("non-empty");
        let upstream = softmax_xent_grad(logits.data(), &targets, classes);
        let upstream = Tensor::new(logits.shape().to_vec(), upstream)?;
        let grads = net.backward(&batch, &trace, &upstream, true)?;
        adam.step(&mut net.param_groups_mut(), &grads.groups()?, cfg.learning_rate)?;
    }
    NetworkFeatures::new(net, "classifier")
}

/// Gradient of mean softmax cross-entropy with respect to the logits.
fn softmax_xent_grad(logits: &[f32], targets: &[usize], classes: usize) -> Vec<f32> {
    let b = targets.len() as f64;
    let mut out = Vec::with_capacity(logits.len());
    for (row, &t) in logits.chunks_exact(classes).zip(targets) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let exps: Vec<f64> = row.iter().map(|&v| (v as f64 - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        for (k, e) in exps.iter().enumerate() {
            let onehot = if k == t { 1.0 } else { 0.0 };
            out.push(((e / sum - onehot) / b) as f32);
        }
    }
    out
}

/// Dataset-side statistics for generator fitness, computed once per run from
/// a seed-selected reference subset.
#[derive(Clone, Debug)]
pub struct FidReference {
    pub stats: GaussianStats,
}

impl FidReference {
    pub fn new(extractor: &dyn FeatureExtractor, data: &Tensor, subset: usize, seed: u64) -> Result<Self> {
        let n = data.batch();
        let take = subset.min(n);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(take);
        idx.sort_unstable();
        let feats = extractor.extract(&data.select(&idx)?)?;
        Ok(Self {
            stats: gaussian_stats(&feats)?.regularized(),
        })
    }

    pub fn fid(&self, extractor: &dyn FeatureExtractor, samples: &Tensor) -> Result<f64> {
        let feats = extractor.extract(samples)?;
        let stats = gaussian_stats(&feats)?.regularized();
        crate::fid::frechet_distance(&stats, &self.stats)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_gradient_rows_sum_to_zero() {
        let g = softmax_xent_grad(&[1.0, 2.0, 0.5, -1.0, 0.0, 3.0], &[0, 2], 3);
        for row in g.chunks(3) {
            assert!(row.iter().sum::<f32>().abs() < 1e-6);
        }
        assert!(g[0] < 0.0 && g[5] < 0.0);
    }

    #[test]
    fn pixel_features_are_flattened_input() {
        let t = Tensor::new(vec![2, 1, 2, 2], (0..8).map(|v| v as f32).collect()).unwrap();
        let f = PixelFeatures.extract(&t).unwrap();
        assert_eq!((f.n(), f.d()), (2, 4));
        assert_eq!(f.values(), t.data());
    }
}
