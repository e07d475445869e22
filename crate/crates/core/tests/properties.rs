use coegan::embed::{affinities, jaccard_index, map_distances};
use coegan::evo::{build_phenotype, Gene, Genome, Individual, ParamStore, PhenotypeSpec};
use coegan::fid::{frechet_distance, FeatureMatrix, GaussianStats};
use coegan::io::{Checkpoint, JaccardVariant};
use coegan::nn::{layer_backward, Activation, ConvGeometry, Geometry, Layer, Tensor};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ACTS: [Activation; 6] = [
    Activation::Relu,
    Activation::Elu,
    Activation::LeakyRelu,
    Activation::Sigmoid,
    Activation::Tanh,
    Activation::None,
];

fn geometry() -> impl Strategy<Value = Geometry> {
    prop_oneof![
        (1usize..10, 1usize..8).prop_map(|(i, o)| Geometry::Linear {
            in_features: i,
            out_features: o
        }),
        (1usize..4, 1usize..4, 1usize..7, 1usize..7, 1usize..6)
            .prop_map(|(ci, co, h, w, k)| Geometry::Conv2d(ConvGeometry::halving(ci, co, h, w, k))),
        (1usize..4, 1usize..4, 1usize..5, 1usize..5, 1usize..6)
            .prop_map(|(ci, co, h, w, k)| Geometry::Deconv2d(ConvGeometry::doubling(ci, co, h, w, k))),
    ]
    .prop_filter("buildable", |g| g.validate().is_ok())
}

fn tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn batched(batch: usize, shape: Vec<usize>) -> Vec<usize> {
    std::iter::once(batch).chain(shape).collect()
}

fn spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() + DMatrix::identity(d, d) * 0.1
}

fn points(n: usize) -> impl Strategy<Value = Vec<[f64; 2]>> {
    prop::collection::vec((0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| [x, y]), 1..n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn shape_inference_matches_forward(g in geometry(), act in 0usize..6, batch in 1usize..4, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = Layer::<f64>::init(g, ACTS[act], &mut rng).unwrap();
        let x = tensor(&batched(batch, layer.input_shape()), &mut rng);
        let y = layer.forward(&x).unwrap();
        prop_assert_eq!(y.shape(), &batched(batch, g.output_shape())[..]);
        // Same weights and input give a bitwise-identical output.
        prop_assert_eq!(layer.forward(&x).unwrap(), y);
    }

    #[test]
    fn gradients_match_central_differences(g in geometry(), act in 0usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layer = Layer::<f64>::init(g, ACTS[act], &mut rng).unwrap();
        for b in layer.bias.data_mut() {
            *b = rng.random_range(-1.0..1.0);
        }
        let x = tensor(&batched(1, layer.input_shape()), &mut rng);
        let up = tensor(&batched(1, layer.output_shape()), &mut rng);
        let (_, dw, _) = layer_backward(&layer, &x, &up).unwrap();
        let h = 1e-5;
        let objective = |l: &Layer<f64>| -> f64 {
            l.forward(&x).unwrap().data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
        };
        // A handful of weights per case keeps the property cheap.
        for _ in 0..4 {
            let j = rng.random_range(0..dw.len());
            let orig = layer.weight.data()[j];
            layer.weight.data_mut()[j] = orig + h;
            let plus = objective(&layer);
            layer.weight.data_mut()[j] = orig - h;
            let minus = objective(&layer);
            layer.weight.data_mut()[j] = orig;
            let fd = (plus - minus) / (2.0 * h);
            let a = dw.data()[j];
            let scale = a.abs().max(fd.abs());
            prop_assert!(scale < 1e-7 || (a - fd).abs() / scale < 1e-4, "analytic {} vs fd {}", a, fd);
        }
    }

    #[test]
    fn frechet_is_symmetric_and_zero_on_self(d in 1usize..8, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = GaussianStats { mu: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)), sigma: spd(d, &mut rng), n: 100 };
        let b = GaussianStats { mu: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)), sigma: spd(d, &mut rng), n: 100 };
        let ab = frechet_distance(&a, &b).unwrap();
        prop_assert!((ab - frechet_distance(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert!(frechet_distance(&a, &a).unwrap().abs() < 1e-9);
    }

    #[test]
    fn jaccard_is_monotone_in_tau(mg in points(30), md in points(30), t1 in 0.001..1.5f64, t2 in 0.001..1.5f64) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        for v in [JaccardVariant::Symmetric, JaccardVariant::Literal, JaccardVariant::UnionMinusIntersection] {
            let a = jaccard_index(&mg, &md, lo, v).unwrap().j;
            let b = jaccard_index(&mg, &md, hi, v).unwrap().j;
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }
    }

    #[test]
    fn map_distances_transpose(mg in points(20), md in points(20)) {
        prop_assert_eq!(map_distances(&mg, &md).transpose(), map_distances(&md, &mg));
    }

    #[test]
    fn affinities_are_symmetric_distributions(n in 6usize..25, d in 1usize..6, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-3.0..3.0));
        let perplexity = (n as f64 - 1.0) / 3.0;
        let p = affinities(&x, perplexity).unwrap();
        let mut total = 0.0;
        for i in 0..n {
            prop_assert_eq!(p.get(i, i), 0.0);
            for j in 0..n {
                prop_assert!(p.get(i, j) >= 0.0);
                prop_assert!((p.get(i, j) - p.get(j, i)).abs() < 1e-15);
                total += p.get(i, j);
            }
        }
        prop_assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn feature_matrix_binary_round_trip(n in 1usize..20, d in 1usize..10, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f32> = (0..n * d).map(|_| rng.random()).collect();
        let f = FeatureMatrix::new(n, d, values, "prop").unwrap();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let back = FeatureMatrix::read_binary(&buf[..]).unwrap();
        prop_assert_eq!(back.values(), f.values());
        prop_assert_eq!((back.n(), back.d()), (n, d));
    }

    #[test]
    fn checkpoint_round_trip(out in 4usize..9, kernel in prop::sample::select(vec![3usize, 5]), act in 0usize..6, seed: u64, fitness in -1e6..1e6f64) {
        let spec = PhenotypeSpec { data_shape: [1, 8, 8], z_dim: 10, channels_min: 4, channels_max: 8 };
        let genome = Genome::new(
            coegan::nn::Role::Discriminator,
            vec![Gene::conv(1, ACTS[act], out, kernel), Gene::linear(2, ACTS[(act + 1) % 6], out)],
        ).unwrap();
        let ph = build_phenotype(&genome, &spec, &ParamStore::new(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut ind = Individual::new(seed % 1000, genome);
        ind.params = ph.params();
        ind.fitness = Some(fitness);
        let c = Checkpoint { individual: ind, generation: 3, spec };
        let back = Checkpoint::from_bytes(&c.to_bytes().unwrap()).unwrap();
        prop_assert_eq!(back.network().unwrap(), ph.network);
        prop_assert_eq!(back, c);
    }
}
