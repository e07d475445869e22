//! Adversarial training of a single (generator, discriminator) pair with the
//! standard discriminator loss and the non-saturating generator loss.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network, Tensor};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Latent dimensionality used by default.
pub const DEFAULT_Z_DIM: usize = 100;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn mean_neg_log(values: impl Iterator<Item = f64>, len: usize) -> f64 {
    let total: f64 = values.map(|p| -clamp_prob(p).ln()).sum();
    total / len as f64
}

/// `−mean(log D(x)) − mean(log(1 − D(G(z))))`.
pub fn d_loss(d_real: &[f32], d_fake: &[f32]) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let real = mean_neg_log(d_real.iter().map(|&p| p as f64), d_real.len());
    let fake = mean_neg_log(d_fake.iter().map(|&p| 1.0 - p as f64), d_fake.len());
    Ok(real + fake)
}

/// Non-saturating generator loss `−mean(log D(G(z)))`.
pub fn g_loss(d_fake: &[f32]) -> Result<f64> {
    if d_fake.is_empty() {
        return Err(Error::EmptyBatch);
    }
    Ok(mean_neg_log(d_fake.iter().map(|&p| p as f64), d_fake.len()))
}

/// `n × z_dim` standard-normal latent vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch(pub Tensor);

impl LatentBatch {
    pub fn tensor(&self) -> &Tensor {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.batch()
    }

    pub fn z_dim(&self) -> usize {
        self.0.sample_len()
    }
}

pub fn sample_latent<R: Rng + ?Sized>(n: usize, z_dim: usize, rng: &mut R) -> Result<LatentBatch> {
    if n == 0 || z_dim == 0 {
        return Err(Error::invalid(format!("latent batch {n}×{z_dim} is empty")));
    }
    let data = (0..n * z_dim).map(|_| rng.sample::<f32, _>(StandardNormal)).collect();
    Ok(LatentBatch(Tensor::new(vec![n, z_dim], data)?))
}

/// A network together with its optimizer state while it is being trained.
#[derive(Clone, Debug)]
pub struct Trainee {
    pub network: Network,
    pub optimizer: AdamState,
}

impl Trainee {
    pub fn new(network: Network) -> Self {
        let optimizer = AdamState::new(&network.param_group_sizes(), AdamConfig::default());
        Self { network, optimizer }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub batches: usize,
    pub learning_rate: f64,
    pub z_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            batches: 10,
            learning_rate: 0.003,
            z_dim: DEFAULT_Z_DIM,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    pub d_losses: Vec<f64>,
    pub g_losses: Vec<f64>,
    pub batches: usize,
    /// Discriminator updates skipped because the loss was not finite.
    pub skipped_d: usize,
    /// Generator updates skipped because the loss was not finite.
    pub skipped_g: usize,
    /// Parameter groups Adam refused to update (non-finite gradients).
    pub rejected_groups: usize,
}

impl TrainStats {
    pub fn mean_d_loss(&self) -> Option<f64> {
        mean(&self.d_losses)
    }

    pub fn mean_g_loss(&self) -> Option<f64> {
        mean(&self.g_losses)
    }

    pub fn had_non_finite(&self) -> bool {
        self.skipped_d > 0 || self.skipped_g > 0 || self.rejected_groups > 0
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Cycles through a seed-shuffled permutation of the dataset.
struct BatchCursor {
    order: Vec<usize>,
    pos: usize,
}

impl BatchCursor {
    fn new<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        (0..size)
            .map(|_| {
                let i = self.order[self.pos];
                self.pos = (self.pos + 1) % self.order.len();
                i
            })
            .collect()
    }
}

fn check_pair(g: &Network, d: &Network, data: &Tensor, z_dim: usize) -> Result<()> {
    if data.batch() == 0 {
        return Err(Error::EmptyBatch);
    }
    let sample_shape = &data.shape()[1..];
    if g.output_shape() != sample_shape {
        return Err(Error::shape(sample_shape, &g.output_shape()));
    }
    if g.input_shape().iter().product::<usize>() != z_dim {
        return Err(Error::shape(&[z_dim], &g.input_shape()));
    }
    if d.input_shape() != sample_shape {
        return Err(Error::shape(sample_shape, &d.input_shape()));
    }
    if d.output_shape() != [1] {
        return Err(Error::shape(&[1], &d.output_shape()));
    }
    Ok(())
}

/// Discriminator update on `[real; fake]`. The generator is not involved.
fn d_half_step(d: &mut Trainee, real: &Tensor, fake: &Tensor, lr: f64, stats: &mut TrainStats) -> Result<()> {
    let b = real.batch();
    let joint = Tensor::concat_batch(&[real, fake])?;
    let d_trace = d.network.forward_trace(&joint)?;
    let probs = d_trace.last().expect("non-empty network").data();
    let (p_real, p_fake) = probs.split_at(b);
    let loss = d_loss(p_real, p_fake)?;
    if loss.is_finite() {
        let scale = 1.0 / b as f64;
        let upstream: Vec<f32> = p_real
            .iter()
            .map(|&p| (-scale / clamp_prob(p as f64)) as f32)
            .chain(p_fake.iter().map(|&p| (scale / clamp_prob(1.0 - p as f64)) as f32))
            .collect();
        let upstream = Tensor::new(vec![2 * b, 1], upstream)?;
        let grads = d.network.backward(&joint, &d_trace, &upstream, true)?;
        let report = d.optimizer.step(&mut d.network.param_groups_mut(), &grads.groups()?, lr)?;
        stats.rejected_groups += report.rejected_groups.len();
    } else {
        stats.skipped_d += 1;
    }
    stats.d_losses.push(loss);
    Ok(())
}

/// Generator update through a frozen discriminator.
fn g_half_step(
    g: &mut Trainee,
    d: &Network,
    z: &LatentBatch,
    g_trace: &[Tensor],
    lr: f64,
    stats: &mut TrainStats,
) -> Result<()> {
    let fake = g_trace.last().expect("non-empty network");
    let b = fake.batch();
    let d_trace = d.forward_trace(fake)?;
    let p_fake = d_trace.last().expect("non-empty network").data();
    let loss = g_loss(p_fake)?;
    if loss.is_finite() {
        let scale = 1.0 / b as f64;
        let upstream: Vec<f32> = p_fake.iter().map(|&p| (-scale / clamp_prob(p as f64)) as f32).collect();
        let upstream = Tensor::new(vec![b, 1], upstream)?;
        let d_grads = d.backward(fake, &d_trace, &upstream, false)?;
        let g_grads = g.network.backward(z.tensor(), g_trace, &d_grads.input, true)?;
        let report = g.optimizer.step(&mut g.network.param_groups_mut(), &g_grads.groups()?, lr)?;
        stats.rejected_groups += report.rejected_groups.len();
    } else {
        stats.skipped_g += 1;
    }
    stats.g_losses.push(loss);
    Ok(())
}

/// Trains one pair for `cfg.batches` iterations. Each iteration first updates
/// the discriminator on a real and a fake batch, then updates the generator
/// through the (frozen) discriminator. Both trainees are modified in place.
pub fn train_pair<R: Rng + ?Sized>(
    g: &mut Trainee,
    d: &mut Trainee,
    data: &Tensor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<TrainStats> {
    check_pair(&g.network, &d.network, data, cfg.z_dim)?;
    let mut stats = TrainStats::default();
    if cfg.batches == 0 {
        return Ok(stats);
    }
    let b = cfg.batch_size;
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut cursor = BatchCursor::new(data.batch(), rng);

    for _ in 0..cfg.batches {
        let real = data.select(&cursor.next(b))?;
        let z = sample_latent(b, cfg.z_dim, rng)?;
        let g_trace = g.network.forward_trace(z.tensor())?;
        d_half_step(d, &real, g_trace.last().expect("non-empty network"), cfg.learning_rate, &mut stats)?;
        g_half_step(g, &d.network, &z, &g_trace, cfg.learning_rate, &mut stats)?;
        stats.batches += 1;
    }
    Ok(stats)
}

/// Discriminator loss on one real and one fake batch without any update.
pub fn evaluate_pair<R: Rng + ?Sized>(
    g: &Network,
    d: &Network,
    data: &Tensor,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    check_pair(g, d, data, cfg.z_dim)?;
    let b = cfg.batch_size.max(1);
    let mut cursor = BatchCursor::new(data.batch(), rng);
    let real = data.select(&cursor.next(b))?;
    let z = sample_latent(b, cfg.z_dim, rng)?;
    let fake = g.forward(z.tensor())?;
    let p_real = d.forward(&real)?;
    let p_fake = d.forward(&fake)?;
    d_loss(p_real.data(), p_fake.data())
}

/// Draws `n` generator samples in chunks.
pub fn generate<R: Rng + ?Sized>(g: &Network, n: usize, z_dim: usize, rng: &mut R) -> Result<Tensor> {
    const CHUNK: usize = 256;
    let mut parts = Vec::new();
    let mut left = n;
    while left > 0 {
        let take = left.min(CHUNK);
        let z = sample_latent(take, z_dim, rng)?;
        parts.push(g.forward(z.tensor())?);
        left -= take;
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    Tensor::concat_batch(&refs)
}
