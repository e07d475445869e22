//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own PASS/FAIL line even when captured output is hidden.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use coegan::embed::{
    evaluate_run, evaluate_sources, jaccard_index, perplexity_calibrate, tsne_embed, DiscriminatorSnapshot,
    EvalSettings, GeneratorSamples, RunEvalOptions, TauSource, TsneConfig,
};
use coegan::evo::{build_phenotype, evolve, Gene, Genome, ParamStore, PhenotypeSpec};
use coegan::fid::{frechet_distance, GaussianStats};
use coegan::gan::{d_loss, g_loss, train_pair, TrainConfig, Trainee};
use coegan::io::{synth_dataset, synth_draw, Dataset, JaccardVariant, RunConfig, SynthKind};
use coegan::nn::{layer_backward, Activation, ConvGeometry, Geometry, Layer, Role, Tensor};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, what: &str) -> Result<(), String> {
    if elapsed > limit {
        return Err(format!("{what} took {elapsed:.1?}, limit {limit:?}"));
    }
    Ok(())
}

// ---------------------------------------------------------------- gradients

const ACTIVATIONS: [Activation; 6] = [
    Activation::Relu,
    Activation::Elu,
    Activation::LeakyRelu,
    Activation::Sigmoid,
    Activation::Tanh,
    Activation::None,
];

fn random_geometry(kind: usize, rng: &mut ChaCha8Rng) -> Geometry {
    loop {
        let g = match kind {
            0 => Geometry::Linear {
                in_features: rng.random_range(1..=12),
                out_features: rng.random_range(1..=8),
            },
            _ => {
                let (ci, co) = (rng.random_range(1..=3), rng.random_range(1..=3));
                let (h, w) = (rng.random_range(1..=6), rng.random_range(1..=6));
                let k = rng.random_range(1..=5);
                if kind == 1 {
                    Geometry::Conv2d(ConvGeometry::halving(ci, co, h, w, k))
                } else {
                    Geometry::Deconv2d(ConvGeometry::doubling(ci, co, h, w, k))
                }
            }
        };
        if g.validate().is_ok() {
            return g;
        }
    }
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn weighted_output(layer: &Layer<f64>, x: &Tensor<f64>, up: &Tensor<f64>) -> f64 {
    let y = layer.forward(x).unwrap();
    y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
}

#[derive(Clone, Copy)]
enum Slot {
    Input(usize),
    Weight(usize),
    Bias(usize),
}

fn slot_mut<'a>(layer: &'a mut Layer<f64>, x: &'a mut Tensor<f64>, slot: Slot) -> &'a mut f64 {
    match slot {
        Slot::Input(j) => &mut x.data_mut()[j],
        Slot::Weight(j) => &mut layer.weight.data_mut()[j],
        Slot::Bias(j) => &mut layer.bias.data_mut()[j],
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale < 1e-7 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for kind in 0..3 {
        for i in 0..50 {
            let geometry = random_geometry(kind, &mut rng);
            let act = ACTIVATIONS[i % ACTIVATIONS.len()];
            let mut layer = Layer::<f64>::init(geometry, act, &mut rng).unwrap();
            // Non-zero biases keep uncovered deconv outputs off the activation kink.
            for b in layer.bias.data_mut() {
                *b = rng.sample(StandardNormal);
            }
            let mut in_shape = vec![2];
            in_shape.extend(layer.input_shape());
            let mut x = random_tensor(&in_shape, &mut rng);
            let mut out_shape = vec![2];
            out_shape.extend(layer.output_shape());
            let up = random_tensor(&out_shape, &mut rng);
            let (dx, dw, db) = layer_backward(&layer, &x, &up).unwrap();

            let mut worst_at = |slot: Slot, analytic: f64| {
                let orig = *slot_mut(&mut layer, &mut x, slot);
                *slot_mut(&mut layer, &mut x, slot) = orig + h;
                let plus = weighted_output(&layer, &x, &up);
                *slot_mut(&mut layer, &mut x, slot) = orig - h;
                let minus = weighted_output(&layer, &x, &up);
                *slot_mut(&mut layer, &mut x, slot) = orig;
                worst = worst.max(rel_err(analytic, (plus - minus) / (2.0 * h)));
            };
            for (j, a) in dx.data().iter().enumerate() {
                worst_at(Slot::Input(j), *a);
            }
            for (j, a) in dw.data().iter().enumerate() {
                worst_at(Slot::Weight(j), *a);
            }
            for (j, a) in db.data().iter().enumerate() {
                worst_at(Slot::Bias(j), *a);
            }
            checked += dx.len() + dw.len() + db.len();
        }
    }
    within(start.elapsed(), Duration::from_secs(120), "gradient check")?;
    check(
        worst < 1e-4,
        format!("150 layers, {checked} entries, worst relative error {worst:.2e}, {:.1?}", start.elapsed()),
    )
}

// ---------------------------------------------------------------- losses

fn criterion_losses() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64);
        let real: Vec<f32> = (0..n).map(|_| rng.random_range(0.001f32..0.999)).collect();
        let fake: Vec<f32> = (0..n).map(|_| rng.random_range(0.001f32..0.999)).collect();
        let mut oracle_d = 0.0;
        for &r in &real {
            oracle_d -= (r as f64).ln() / n as f64;
        }
        for &f in &fake {
            oracle_d -= (1.0 - f as f64).ln() / n as f64;
        }
        let mut oracle_g = 0.0;
        for &f in &fake {
            oracle_g -= (f as f64).ln() / n as f64;
        }
        worst = worst
            .max((d_loss(&real, &fake).unwrap() - oracle_d).abs())
            .max((g_loss(&fake).unwrap() - oracle_g).abs());
    }
    let half = [0.5f32; 16];
    let a_d = (d_loss(&half, &half).unwrap() - 2.0 * 2f64.ln()).abs();
    let a_g = (g_loss(&half).unwrap() - 2f64.ln()).abs();
    check(
        worst < 1e-6 && a_d <= 1e-6 && a_g <= 1e-6,
        format!("oracle max deviation {worst:.2e}, anchors off by {a_d:.1e} / {a_g:.1e}"),
    )
}

// ---------------------------------------------------------------- FID

fn stats(mu: DVector<f64>, sigma: DMatrix<f64>) -> GaussianStats {
    GaussianStats { mu, sigma, n: 1000 }
}

fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn criterion_fid() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 5;
    let a = stats(DVector::from_fn(d, |_, _| rng.random()), random_spd(d, &mut rng));
    let same = frechet_distance(&a, &a).unwrap();
    let mut shifted_mu = DVector::zeros(3);
    shifted_mu[0] = 1.0;
    let unit = frechet_distance(
        &stats(DVector::zeros(3), DMatrix::identity(3, 3)),
        &stats(shifted_mu, DMatrix::identity(3, 3)),
    )
    .unwrap();
    let diag = frechet_distance(
        &stats(DVector::zeros(2), DMatrix::identity(2, 2)),
        &stats(DVector::zeros(2), DMatrix::identity(2, 2) * 4.0),
    )
    .unwrap();
    let mut asym = 0.0f64;
    let mut monotone = true;
    for _ in 0..100 {
        let d = rng.random_range(2..=8);
        let x = stats(DVector::from_fn(d, |_, _| rng.random()), random_spd(d, &mut rng));
        let y = stats(DVector::from_fn(d, |_, _| rng.random()), random_spd(d, &mut rng));
        let xy = frechet_distance(&x, &y).unwrap();
        let yx = frechet_distance(&y, &x).unwrap();
        asym = asym.max((xy - yx).abs() / xy.max(1.0));
        let dir = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mut last = -1.0;
        for t in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let moved = stats(&x.mu + &dir * t, x.sigma.clone());
            let v = frechet_distance(&x, &moved).unwrap();
            monotone &= v >= last;
            last = v;
        }
    }
    check(
        same.abs() <= 1e-9 && (unit - 1.0).abs() <= 1e-9 && (diag - 2.0).abs() <= 1e-9 && asym < 1e-9 && monotone,
        format!(
            "self {same:.1e}, unit shift {unit:.12}, diagonal {diag:.12}, asymmetry {asym:.1e}, monotone {monotone}"
        ),
    )
}

// ---------------------------------------------------------------- t-SNE

fn two_clusters(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side: Vec<bool> = (0..n).map(|i| i < n / 2).collect();
    let x = DMatrix::from_fn(n, d, |i, _| {
        let centre = if side[i] { 10.0 } else { -10.0 };
        centre + 0.5 * rng.sample::<f64, _>(StandardNormal)
    });
    (x, side)
}

fn criterion_tsne() -> Outcome {
    // Perplexity calibration on generic 50-D data, verified by recomputing the entropy.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = DMatrix::from_fn(200, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut worst_perp = 0.0f64;
    for i in 0..200 {
        let row: Vec<f64> = (0..200)
            .filter(|&j| j != i)
            .map(|j| (x.row(i) - x.row(j)).norm_squared())
            .collect();
        let r = perplexity_calibrate(&row, 30.0).map_err(|e| e.to_string())?;
        if r.degenerate {
            return Err(format!("row {i} flagged degenerate"));
        }
        let h: f64 = -r.probs.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        worst_perp = worst_perp.max((2f64.powf(h) - 30.0).abs());
    }
    if worst_perp > 1e-3 {
        return Err(format!("perplexity off by {worst_perp:.2e}"));
    }

    let mut slowest = Duration::ZERO;
    let mut margins = Vec::new();
    for seed in 0..10u64 {
        let (x, side) = two_clusters(200, 50, seed);
        let cfg = TsneConfig::new(30.0, 1000, seed);
        let start = Instant::now();
        let emb = tsne_embed(&x, &cfg).map_err(|e| e.to_string())?;
        slowest = slowest.max(start.elapsed());
        within(start.elapsed(), Duration::from_secs(60), "t-SNE run")?;
        let exag = emb.kl_after_exaggeration(&cfg).unwrap();
        let last = emb.final_kl().unwrap();
        if !(last < exag) {
            return Err(format!("seed {seed}: final KL {last} not below post-exaggeration KL {exag}"));
        }
        // Separating direction: between the two embedded centroids.
        let centroid = |s: bool| {
            let pts: Vec<&[f64; 2]> = emb.points.iter().zip(&side).filter(|(_, t)| **t == s).map(|(p, _)| p).collect();
            let k = pts.len() as f64;
            [pts.iter().map(|p| p[0]).sum::<f64>() / k, pts.iter().map(|p| p[1]).sum::<f64>() / k]
        };
        let (a, b) = (centroid(true), centroid(false));
        let dir = [a[0] - b[0], a[1] - b[1]];
        let proj = |p: &[f64; 2]| p[0] * dir[0] + p[1] * dir[1];
        let lo_a = emb.points.iter().zip(&side).filter(|(_, s)| **s).map(|(p, _)| proj(p)).fold(f64::INFINITY, f64::min);
        let hi_b = emb.points.iter().zip(&side).filter(|(_, s)| !**s).map(|(p, _)| proj(p)).fold(f64::NEG_INFINITY, f64::max);
        if lo_a <= hi_b {
            return Err(format!("seed {seed}: clusters not linearly separated"));
        }
        margins.push((lo_a - hi_b) / (dir[0].hypot(dir[1])));
    }
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(format!(
        "perplexity error {worst_perp:.1e}, 10/10 separable (min gap {min_margin:.2}), KL decreased on 10/10, slowest run {slowest:.1?}"
    ))
}

// ---------------------------------------------------------------- Jaccard

fn criterion_jaccard() -> Outcome {
    let sym = JaccardVariant::Symmetric;
    let mg = [[0.0, 0.0], [1.0, 1.0]];
    let md = [[0.0, 0.0], [0.9, 0.9]];
    let wide = jaccard_index(&mg, &md, 0.2, sym).unwrap().j;
    let narrow = jaccard_index(&mg, &md, 0.1, sym).unwrap().j;
    if wide != 1.0 || narrow != 0.5 {
        return Err(format!("hand geometry gave {wide} and {narrow}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let a: Vec<[f64; 2]> = (0..rng.random_range(1..30)).map(|_| [rng.random(), rng.random()]).collect();
        let b: Vec<[f64; 2]> = (0..rng.random_range(1..30)).map(|_| [rng.random(), rng.random()]).collect();
        if jaccard_index(&a, &a, rng.random_range(1e-6..1.0), sym).unwrap().j != 1.0 {
            return Err("J(mg, mg) != 1".into());
        }
        let far: Vec<[f64; 2]> = b.iter().map(|p| [p[0] + 5.0, p[1]]).collect();
        if jaccard_index(&a, &far, 3.0, sym).unwrap().j != 0.0 {
            return Err("separated sets scored above 0".into());
        }
        let mut last = 0.0;
        for step in 1..=40 {
            let j = jaccard_index(&a, &b, step as f64 * 0.04, sym).unwrap().j;
            if j < last || !(0.0..=1.0).contains(&j) {
                return Err(format!("J not monotone in tau ({last} then {j})"));
            }
            last = j;
        }
    }
    Ok("hand values 1 and 0.5 exact; identity, separation and monotonicity hold on 200 random sets".into())
}

// ---------------------------------------------------------------- mode collapse

fn trained_discriminator(data: &Tensor, seed: u64) -> coegan::nn::Network {
    let spec = PhenotypeSpec {
        data_shape: [1, 8, 8],
        z_dim: 100,
        channels_min: 8,
        channels_max: 32,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gg = Genome::new(Role::Generator, vec![Gene::deconv(0, Activation::Relu, 16, 3)]).unwrap();
    let dg = Genome::new(Role::Discriminator, vec![Gene::conv(1, Activation::LeakyRelu, 16, 3)]).unwrap();
    let mut g = Trainee::new(build_phenotype(&gg, &spec, &ParamStore::new(), &mut rng).unwrap().network);
    let mut d = Trainee::new(build_phenotype(&dg, &spec, &ParamStore::new(), &mut rng).unwrap().network);
    let cfg = TrainConfig {
        batches: 100,
        ..TrainConfig::default()
    };
    train_pair(&mut g, &mut d, data, &cfg, &mut rng).unwrap();
    d.network
}

fn criterion_mode_collapse() -> Outcome {
    let start = Instant::now();
    let base = RunConfig::desk();
    let mut gaps = Vec::new();
    for seed in 0..5u64 {
        let data = synth_dataset(SynthKind::GaussianMixture, 2, 1000, 8, seed).map_err(|e| e.to_string())?;
        let d = trained_discriminator(&data.samples, seed);
        let n = base.samples_per_model;
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        let real = data.samples.slice_batch(0, n).unwrap();
        let (one, _) = synth_draw(SynthKind::GaussianMixture, 2, 8, n, Some(&[0]), &mut rng).unwrap();
        let (both, _) = synth_draw(SynthKind::GaussianMixture, 2, 8, n, None, &mut rng).unwrap();
        let mut settings = EvalSettings::from_config(&base);
        settings.seed = seed;
        // Both doubles play final-generation generators; the threshold pools over them.
        settings.tau = TauSource::AllGenerators;
        let ev = evaluate_sources(
            &[DiscriminatorSnapshot {
                generation: 0,
                network: d,
            }],
            &real,
            &[
                GeneratorSamples {
                    generation: 0,
                    samples: one,
                },
                GeneratorSamples {
                    generation: 1,
                    samples: both,
                },
            ],
            &settings,
        )
        .map_err(|e| e.to_string())?;
        let (j_one, j_both) = (ev.report.j(0, 0).unwrap(), ev.report.j(0, 1).unwrap());
        gaps.push((j_one, j_both));
    }
    within(start.elapsed(), Duration::from_secs(300), "mode-collapse check")?;
    let passed = gaps.iter().filter(|(a, b)| b - a >= 0.2).count();
    let detail = gaps
        .iter()
        .map(|(a, b)| format!("{a:.3}/{b:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    check(
        passed == 5,
        format!("{passed}/5 seeds with gap >= 0.2; J collapsed/full: {detail}; {:.1?}", start.elapsed()),
    )
}

// ---------------------------------------------------------------- evolution trend

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

fn criterion_trend() -> Outcome {
    let start = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let (mut fid1, mut fid30, mut j3, mut j30) = (vec![], vec![], vec![], vec![]);
    for seed in 0..5u64 {
        let mut cfg = RunConfig::desk();
        cfg.seed = seed;
        let data = Dataset::load(&cfg.dataset, cfg.seed).map_err(|e| e.to_string())?;
        let run = root.path().join(format!("seed-{seed}"));
        let summary = evolve(&cfg, &data, &run, 1).map_err(|e| e.to_string())?;
        let best = |g: usize| summary.metrics.iter().find(|r| r.generation == g).unwrap().best_generator_fid;
        fid1.push(best(1));
        fid30.push(best(30));
        let report = evaluate_run(
            &run,
            &RunEvalOptions {
                generations: vec![3, 30],
                disc_generations: Some(vec![30]),
                tau: TauSource::Latest,
                out_dir: None,
            },
        )
        .map_err(|e| e.to_string())?;
        j3.push(report.j(30, 3).unwrap_or(0.0));
        j30.push(report.j(30, 30).unwrap_or(0.0));
    }
    within(start.elapsed(), Duration::from_secs(1800), "evolution trend")?;
    let (f1, f30, a, b) = (median(fid1.clone()), median(fid30.clone()), median(j3.clone()), median(j30.clone()));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    check(
        f30 < f1 && b > a,
        format!(
            "median best FID gen1 {f1:.2} -> gen30 {f30:.2}; median J gen3 {a:.3} -> gen30 {b:.3}; FID1 [{}] FID30 [{}] J3 [{}] J30 [{}]; {:.0?}",
            fmt(&fid1),
            fmt(&fid30),
            fmt(&j3),
            fmt(&j30),
            start.elapsed()
        ),
    )
}

// ---------------------------------------------------------------- protocol

const TABLE: [(&str, &str); 20] = [
    ("generations", "100"),
    ("gen_population", "10"),
    ("disc_population", "10"),
    ("prob_add", "0.3"),
    ("prob_remove", "0.1"),
    ("prob_change", "0.1"),
    ("channels_min", "32"),
    ("channels_max", "512"),
    ("tournament_k", "2"),
    ("fid_samples", "5000"),
    ("genome_limit", "4"),
    ("species", "3"),
    ("batch_size", "64"),
    ("batches_per_generation", "10"),
    ("optimizer", "adam"),
    ("learning_rate", "0.003"),
    ("pca_dims", "50"),
    ("tsne_perplexity", "30"),
    ("tsne_iterations", "1000"),
    ("samples_per_model", "1000"),
];

fn echo_map(path: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

const TINY_RUN: &str = "\
gen_population = 2
disc_population = 2
species = 1
channels_min = 4
channels_max = 8
batch_size = 16
batches_per_generation = 1
fid_samples = 64
fid_reference_samples = 128
dataset_samples = 200
samples_per_model = 60
tsne_perplexity = 10
tsne_iterations = 250
";

fn cli(args: &[&str]) -> i32 {
    coegan::cli::run(std::iter::once("coegan").chain(args.iter().copied()))
}

fn criterion_protocol() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let paper = dir.path().join("paper");
    if cli(&["evolve", "--profile", "paper", "--dry-run", "--out", paper.to_str().unwrap()]) != 0 {
        return Err("dry run failed".into());
    }
    let echo = echo_map(&paper.join("config.txt"));
    let wrong: Vec<String> = TABLE
        .iter()
        .filter(|(k, v)| echo.get(*k).map(String::as_str) != Some(*v))
        .map(|(k, v)| format!("{k} = {:?} (want {v})", echo.get(*k)))
        .collect();
    if !wrong.is_empty() {
        return Err(format!("config echo differs: {}", wrong.join("; ")));
    }

    let cfg = dir.path().join("tiny.cfg");
    std::fs::write(&cfg, format!("generations = 100\n{TINY_RUN}")).unwrap();
    let run = dir.path().join("run");
    let (c, r) = (cfg.to_str().unwrap(), run.to_str().unwrap());
    if cli(&["evolve", "--config", c, "--seed", "3", "--out", r]) != 0 {
        return Err("100-generation run failed".into());
    }
    if cli(&["evaluate", "--run", r, "--generations", "5,10,100"]) != 0 {
        return Err("evaluate failed".into());
    }
    let rows = coegan::embed::eval::read_report_csv(&run.join("eval/report.csv")).map_err(|e| e.to_string())?;
    let cells: Vec<(usize, usize)> = rows.iter().map(|r| (r.disc_gen, r.gen_gen)).collect();
    let want: Vec<(usize, usize)> = [5, 10, 100].iter().flat_map(|&d| [5, 10, 100].map(|g| (d, g))).collect();
    let all_scored = rows.iter().all(|r| r.status == "ok" && r.j.is_some_and(|j| (0.0..=1.0).contains(&j)));
    check(
        cells == want && all_scored,
        format!("{} full-scale values echoed exactly; evaluate produced a {}-cell J matrix over generations 5,10,100", TABLE.len(), rows.len()),
    )
}

// ---------------------------------------------------------------- determinism

fn criterion_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(&cfg, format!("generations = 4\neval_generations = 2,4\n{TINY_RUN}")).unwrap();
    let c = cfg.to_str().unwrap();
    let mut files = Vec::new();
    for (i, jobs) in ["1", "2"].iter().enumerate() {
        let run = dir.path().join(format!("run{i}"));
        let r = run.to_str().unwrap();
        let tsne = dir.path().join(format!("tsne{i}.csv"));
        let ok = cli(&["evolve", "--config", c, "--seed", "11", "--out", r, "--jobs", jobs]) == 0
            && cli(&["evaluate", "--run", r]) == 0
            && cli(&[
                "tsne",
                run.join("eval/samples-dataset.fm").to_str().unwrap(),
                "--out",
                tsne.to_str().unwrap(),
                "--perplexity",
                "10",
                "--iterations",
                "200",
                "--seed",
                "11",
            ]) == 0
            && cli(&["report", "--eval", run.join("eval").to_str().unwrap()]) == 0;
        if !ok {
            return Err(format!("invocation set {i} failed"));
        }
        files.push([run.join("metrics.csv"), run.join("eval/report.csv"), tsne]);
    }
    let mut compared = 0;
    for (a, b) in files[0].iter().zip(&files[1]) {
        let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        if x != y {
            return Err(format!("{} differs between repeated invocations", a.file_name().unwrap().to_string_lossy()));
        }
        compared += x.len();
    }
    Ok(format!(
        "metrics.csv, report.csv and t-SNE CSV byte-identical across repeats (1 vs 2 jobs), {compared} bytes compared"
    ))
}

fn main() {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 gradient correctness", criterion_gradients),
        ("2 loss oracles", criterion_losses),
        ("3 FID analytic suite", criterion_fid),
        ("4 t-SNE correctness", criterion_tsne),
        ("5 Jaccard oracle", criterion_jaccard),
        ("6 mode-collapse detection", criterion_mode_collapse),
        ("7 evolution trend", criterion_trend),
        ("8 protocol fidelity", criterion_protocol),
        ("9 determinism", criterion_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        match f() {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
