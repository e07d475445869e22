use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};

pub const PERPLEXITY_TOLERANCE: f64 = 1e-5;
pub const CALIBRATION_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init_scale: f64,
}

impl TsneConfig {
    pub fn new(perplexity: f64, iterations: usize, seed: u64) -> Self {
        Self {
            perplexity,
            iterations,
            seed,
            learning_rate: 200.0,
            exaggeration: 4.0,
            exaggeration_iterations: 100,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init_scale: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibratedRow {
    pub probs: Vec<f64>,
    pub beta: f64,
    pub perplexity: f64,
    /// Target unreachable; `probs` is uniform.
    pub degenerate: bool,
}

fn row_at(shifted: &[f64], beta: f64) -> (Vec<f64>, f64) {
    let w: Vec<f64> = shifted.iter().map(|d| (-beta * d).exp()).collect();
    let sum: f64 = w.iter().sum();
    let probs: Vec<f64> = w.iter().map(|v| v / sum).collect();
    let h: f64 = -probs.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum::<f64>();
    (probs, h.exp())
}

/// Gaussian conditional row over squared distances to the other points, with
/// the precision searched so that the row's perplexity hits `target`.
pub fn perplexity_calibrate(sq_dists: &[f64], target: f64) -> Result<CalibratedRow> {
    let m = sq_dists.len();
    if m == 0 {
        return Err(Error::invalid("perplexity row has no neighbours"));
    }
    if !(target >= 1.0 && target <= m as f64) {
        return Err(Error::invalid(format!("perplexity {target} outside [1, {m}]")));
    }
    if sq_dists.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::invalid("squared distances must be finite and non-negative"));
    }
    let dmin = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq_dists.iter().map(|d| d - dmin).collect();
    let spread = shifted.iter().copied().fold(0.0, f64::max);
    let uniform = |degenerate| CalibratedRow {
        probs: vec![1.0 / m as f64; m],
        beta: 0.0,
        perplexity: m as f64,
        degenerate,
    };
    if spread == 0.0 {
        return Ok(uniform((target - m as f64).abs() > PERPLEXITY_TOLERANCE));
    }
    // As beta grows the row concentrates on the nearest ties.
    let ties = shifted.iter().filter(|&&d| d == 0.0).count() as f64;
    if target < ties - PERPLEXITY_TOLERANCE {
        return Ok(uniform(true));
    }

    let nonzero: Vec<f64> = shifted.iter().copied().filter(|&d| d > 0.0).collect();
    let mut beta = nonzero.len() as f64 / nonzero.iter().sum::<f64>();
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut best = row_at(&shifted, beta);
    for _ in 0..CALIBRATION_ITERATIONS {
        if (best.1 - target).abs() <= PERPLEXITY_TOLERANCE {
            break;
        }
        if best.1 > target {
            lo = beta;
            beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = 0.5 * (beta + lo);
        }
        best = row_at(&shifted, beta);
    }
    let (probs, perplexity) = best;
    if (perplexity - target).abs() > PERPLEXITY_TOLERANCE {
        return Ok(uniform(true));
    }
    Ok(CalibratedRow {
        probs,
        beta,
        perplexity,
        degenerate: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Affinities {
    pub n: usize,
    /// Row-major `n × n` joint probabilities.
    pub p: Vec<f64>,
    pub perplexity: f64,
    pub sigmas: Vec<f64>,
    pub degenerate_rows: Vec<usize>,
}

impl Affinities {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }
}

pub fn squared_distances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut out = vec![0.0; n * n];
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for j in 0..n {
            if j != i {
                row[j] = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            }
        }
    });
    out
}

/// Symmetrised input affinities `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn affinities(x: &DMatrix<f64>, perplexity: f64) -> Result<Affinities> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("affinities need at least 2 points"));
    }
    let d2 = squared_distances(x);
    let rows: Vec<CalibratedRow> = (0..n)
        .into_par_iter()
        .map(|i| {
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d2[i * n + j]).collect();
            perplexity_calibrate(&others, perplexity)
        })
        .collect::<Result<_>>()?;
    let mut cond = vec![0.0; n * n];
    for (i, r) in rows.iter().enumerate() {
        let mut k = 0;
        for j in 0..n {
            if j != i {
                cond[i * n + j] = r.probs[k];
                k += 1;
            }
        }
    }
    let scale = 1.0 / (2.0 * n as f64);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (cond[i * n + j] + cond[j * n + i]) * scale;
        }
    }
    let sigmas = rows
        .iter()
        .map(|r| if r.beta > 0.0 { (0.5 / r.beta).sqrt() } else { f64::INFINITY })
        .collect();
    let degenerate_rows: Vec<usize> = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.degenerate)
        .map(|(i, _)| i)
        .collect();
    if !degenerate_rows.is_empty() {
        log::warn!("{} affinity rows could not reach perplexity {perplexity}", degenerate_rows.len());
    }
    Ok(Affinities {
        n,
        p,
        perplexity,
        sigmas,
        degenerate_rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TsneResult {
    pub points: Vec<[f64; 2]>,
    /// `kl[t]` is KL(P‖Q) after update `t + 1`, always against the true P.
    pub kl: Vec<f64>,
    pub degenerate_rows: Vec<usize>,
}

impl TsneResult {
    /// KL right after the early-exaggeration phase ends.
    pub fn kl_after_exaggeration(&self, cfg: &TsneConfig) -> Option<f64> {
        cfg.exaggeration_iterations.checked_sub(1).and_then(|i| self.kl.get(i)).copied()
    }

    pub fn final_kl(&self) -> Option<f64> {
        self.kl.last().copied()
    }
}

fn student_row_sums(y: &[[f64; 2]]) -> Vec<f64> {
    y.par_iter()
        .enumerate()
        .map(|(i, yi)| {
            let mut s = 0.0;
            for (j, yj) in y.iter().enumerate() {
                if j != i {
                    let dx = yi[0] - yj[0];
                    let dy = yi[1] - yj[1];
                    s += 1.0 / (1.0 + dx * dx + dy * dy);
                }
            }
            s
        })
        .collect()
}

/// Gradient rows (with the given exaggeration) and the KL term `Σ p log num`.
fn gradient(y: &[[f64; 2]], aff: &Affinities, z: f64, exaggeration: f64) -> Vec<([f64; 2], f64)> {
    let n = aff.n;
    y.par_iter()
        .enumerate()
        .map(|(i, yi)| {
            let mut g = [0.0, 0.0];
            let mut plog = 0.0;
            let prow = &aff.p[i * n..(i + 1) * n];
            for (j, yj) in y.iter().enumerate() {
                if j == i {
                    continue;
                }
                let dx = yi[0] - yj[0];
                let dy = yi[1] - yj[1];
                let num = 1.0 / (1.0 + dx * dx + dy * dy);
                let pij = prow[j];
                let coef = (exaggeration * pij - num / z) * num;
                g[0] += coef * dx;
                g[1] += coef * dy;
                if pij > 0.0 {
                    plog += pij * num.ln();
                }
            }
            ([4.0 * g[0], 4.0 * g[1]], plog)
        })
        .collect()
}

fn kl_value(entropy_term: f64, plog: f64, z: f64) -> f64 {
    // Σ p log p − Σ p log(num / Z), with Σ p = 1.
    entropy_term - plog + z.ln()
}

/// Exact t-SNE into two dimensions.
pub fn tsne_embed(x: &DMatrix<f64>, cfg: &TsneConfig) -> Result<TsneResult> {
    let n = x.nrows();
    if n < 5 {
        return Err(Error::invalid(format!("t-SNE needs at least 5 points, got {n}")));
    }
    if !(cfg.perplexity >= 1.0 && cfg.perplexity <= (n - 1) as f64) {
        return Err(Error::invalid(format!(
            "perplexity {} outside [1, {}] for {n} points",
            cfg.perplexity,
            n - 1
        )));
    }
    if (n as f64) < 3.0 * cfg.perplexity {
        log::warn!("t-SNE on {n} points with perplexity {} (fewer than 3x)", cfg.perplexity);
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("t-SNE input".into()));
    }
    let aff = affinities(x, cfg.perplexity)?;
    let entropy_term: f64 = aff.p.iter().filter(|&&p| p > 0.0).map(|p| p * p.ln()).sum();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut y: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            let a: f64 = StandardNormal.sample(&mut rng);
            let b: f64 = StandardNormal.sample(&mut rng);
            [a * cfg.init_scale, b * cfg.init_scale]
        })
        .collect();
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut kl = Vec::with_capacity(cfg.iterations);

    for it in 0..=cfg.iterations {
        let z: f64 = student_row_sums(&y).iter().sum();
        let exaggeration = if it < cfg.exaggeration_iterations { cfg.exaggeration } else { 1.0 };
        let rows = gradient(&y, &aff, z, exaggeration);
        if it > 0 {
            let plog: f64 = rows.iter().map(|r| r.1).sum();
            kl.push(kl_value(entropy_term, plog, z));
        }
        if it == cfg.iterations {
            break;
        }
        let momentum = if it < cfg.momentum_switch { cfg.initial_momentum } else { cfg.final_momentum };
        for (i, (g, _)) in rows.iter().enumerate() {
            if !g[0].is_finite() || !g[1].is_finite() {
                return Err(Error::NonFinite(format!("t-SNE gradient at iteration {it}, point {i}")));
            }
            for a in 0..2 {
                gains[i][a] = if (g[a] > 0.0) != (update[i][a] > 0.0) {
                    gains[i][a] + 0.2
                } else {
                    (gains[i][a] * 0.8).max(0.01)
                };
                update[i][a] = momentum * update[i][a] - cfg.learning_rate * gains[i][a] * g[a];
                y[i][a] += update[i][a];
            }
        }
        for a in 0..2 {
            let mean = y.iter().map(|p| p[a]).sum::<f64>() / n as f64;
            y.iter_mut().for_each(|p| p[a] -= mean);
        }
    }
    Ok(TsneResult {
        points: y,
        kl,
        degenerate_rows: aff.degenerate_rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn equidistant_row_is_uniform() {
        let r = perplexity_calibrate(&[2.0; 5], 5.0).unwrap();
        assert!(!r.degenerate);
        assert!(r.probs.iter().all(|p| (p - 0.2).abs() < 1e-15));
        let r = perplexity_calibrate(&[2.0; 5], 3.0).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn near_points_dominate_low_perplexity() {
        let mut d = vec![0.01, 0.012];
        d.extend(std::iter::repeat_n(25.0, 40));
        let r = perplexity_calibrate(&d, 2.0).unwrap();
        assert!(!r.degenerate);
        // Oracle: recompute entropy directly from the returned row.
        let h: f64 = -r.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        assert!((2f64.powf(h) - 2.0).abs() < 1e-3);
        assert!(r.probs[0] + r.probs[1] >= 0.95);
    }

    #[test]
    fn rejects_out_of_range_target() {
        assert!(perplexity_calibrate(&[1.0, 2.0, 3.0], 0.5).is_err());
        assert!(perplexity_calibrate(&[1.0, 2.0, 3.0], 3.5).is_err());
    }

    #[test]
    fn affinity_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(60, 7, |_, _| rng.random_range(-1.0..1.0));
        let a = affinities(&x, 10.0).unwrap();
        let total: f64 = a.p.iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        for i in 0..a.n {
            assert_eq!(a.get(i, i), 0.0);
            for j in 0..a.n {
                assert!(a.get(i, j) >= 0.0);
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
    }

    #[test]
    fn rejects_tiny_inputs() {
        let x = DMatrix::from_element(4, 3, 1.0);
        assert!(tsne_embed(&x, &TsneConfig::new(1.0, 10, 0)).is_err());
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(30, 5, |_, _| rng.random_range(-1.0..1.0));
        let cfg = TsneConfig::new(5.0, 150, 3);
        assert_eq!(tsne_embed(&x, &cfg).unwrap(), tsne_embed(&x, &cfg).unwrap());
    }
}
