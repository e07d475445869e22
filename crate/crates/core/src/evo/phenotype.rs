use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::evo::Genome;
use crate::nn::{Activation, ConvGeometry, Geometry, Layer, LayerKind, Network, Role, Tensor};

/// Kernel of the automatically appended generator output layer.
pub const OUTPUT_KERNEL: usize = 3;

/// Activation of the appended generator output layer. A sigmoid here
/// saturates at zero on mostly dark images and stops learning.
pub const GENERATOR_OUTPUT_ACTIVATION: Activation = Activation::None;

/// Identifies the parameters of one phenotype layer across generations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamKey {
    Gene(u64),
    /// Generator latent projection added when the genome has no linear gene.
    Input,
    /// Automatically appended output layer.
    Output,
}

impl std::fmt::Display for ParamKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamKey::Gene(id) => write!(f, "gene:{id}"),
            ParamKey::Input => f.write_str("input"),
            ParamKey::Output => f.write_str("output"),
        }
    }
}

impl std::str::FromStr for ParamKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "input" => Ok(ParamKey::Input),
            "output" => Ok(ParamKey::Output),
            _ => s
                .strip_prefix("gene:")
                .and_then(|v| v.parse().ok())
                .map(ParamKey::Gene)
                .ok_or_else(|| Error::invalid(format!("bad parameter key {s:?}"))),
        }
    }
}

/// Learned weights and biases keyed by the layer they belong to.
pub type ParamStore = BTreeMap<ParamKey, (Tensor, Tensor)>;

/// Everything about the problem a phenotype must fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhenotypeSpec {
    /// `[C, H, W]` of dataset samples.
    pub data_shape: [usize; 3],
    pub z_dim: usize,
    pub channels_min: usize,
    pub channels_max: usize,
}

#[derive(Clone, Debug)]
pub struct Phenotype {
    pub network: Network,
    pub keys: Vec<ParamKey>,
    /// Number of layers whose parameters were freshly initialized.
    pub fresh: usize,
}

impl Phenotype {
    pub fn params(&self) -> ParamStore {
        self.keys
            .iter()
            .zip(self.network.layers())
            .map(|(k, l)| (*k, (l.weight.clone(), l.bias.clone())))
            .collect()
    }
}

struct Planned {
    key: ParamKey,
    geometry: Geometry,
    activation: Activation,
}

fn plan_discriminator(genome: &Genome, spec: &PhenotypeSpec) -> Result<Vec<Planned>> {
    let [c, h, w] = spec.data_shape;
    let (mut c, mut h, mut w) = (c, h, w);
    let mut flat: Option<usize> = None;
    let mut plan = Vec::new();
    for g in &genome.genes {
        let geometry = match g.kind {
            LayerKind::Conv2d => {
                let k = g.kernel.expect("validated");
                let geo = ConvGeometry::halving(c, g.out, h, w, k);
                let out = Geometry::Conv2d(geo).output_shape();
                (c, h, w) = (out[0], out[1], out[2]);
                Geometry::Conv2d(geo)
            }
            LayerKind::Linear => {
                let in_features = flat.unwrap_or(c * h * w);
                flat = Some(g.out);
                Geometry::Linear {
                    in_features,
                    out_features: g.out,
                }
            }
            LayerKind::Deconv2d => unreachable!("validated"),
        };
        geometry
            .validate()
            .map_err(|e| Error::Unviable(format!("gene {}: {e}", g.id)))?;
        plan.push(Planned {
            key: ParamKey::Gene(g.id),
            geometry,
            activation: g.activation,
        });
    }
    let last = genome.genes.last().expect("validated");
    let done = last.kind == LayerKind::Linear && last.out == 1 && last.activation == Activation::Sigmoid;
    if !done {
        plan.push(Planned {
            key: ParamKey::Output,
            geometry: Geometry::Linear {
                in_features: flat.unwrap_or(c * h * w),
                out_features: 1,
            },
            activation: Activation::Sigmoid,
        });
    }
    Ok(plan)
}

fn plan_generator(genome: &Genome, spec: &PhenotypeSpec) -> Result<Vec<Planned>> {
    let [c_out, h, w] = spec.data_shape;
    let deconvs: Vec<_> = genome.genes.iter().filter(|g| g.kind == LayerKind::Deconv2d).collect();
    let linears: Vec<_> = genome.genes.iter().filter(|g| g.kind == LayerKind::Linear).collect();
    let append = deconvs.last().is_none_or(|g| g.out != c_out);
    let doublings = deconvs.len() + usize::from(append);
    let factor = 1usize
        .checked_shl(doublings as u32)
        .filter(|f| *f <= h && *f <= w)
        .ok_or_else(|| Error::Unviable(format!("{doublings} doublings exceed {h}×{w}")))?;
    if h % factor != 0 || w % factor != 0 {
        return Err(Error::Unviable(format!("{h}×{w} is not divisible by 2^{doublings}")));
    }
    let (h0, w0) = (h / factor, w / factor);

    let mut plan = Vec::new();
    let mut features = spec.z_dim;
    let reshape_channels = |out: usize| {
        let c = (out as f64 / (h0 * w0) as f64).round() as usize;
        c.clamp(spec.channels_min, spec.channels_max)
    };
    let mut c;
    if linears.is_empty() {
        c = spec.channels_min;
        plan.push(Planned {
            key: ParamKey::Input,
            geometry: Geometry::Linear {
                in_features: features,
                out_features: c * h0 * w0,
            },
            activation: Activation::Relu,
        });
    } else {
        c = 0;
        for (i, g) in linears.iter().enumerate() {
            let out = if i + 1 == linears.len() {
                c = reshape_channels(g.out);
                c * h0 * w0
            } else {
                g.out
            };
            plan.push(Planned {
                key: ParamKey::Gene(g.id),
                geometry: Geometry::Linear {
                    in_features: features,
                    out_features: out,
                },
                activation: g.activation,
            });
            features = out;
        }
    }
    let (mut hh, mut ww) = (h0, w0);
    for g in &deconvs {
        let geo = ConvGeometry::doubling(c, g.out, hh, ww, g.kernel.expect("validated"));
        plan.push(Planned {
            key: ParamKey::Gene(g.id),
            geometry: Geometry::Deconv2d(geo),
            activation: g.activation,
        });
        (c, hh, ww) = (g.out, hh * 2, ww * 2);
    }
    if append {
        let geo = ConvGeometry::doubling(c, c_out, hh, ww, OUTPUT_KERNEL);
        plan.push(Planned {
            key: ParamKey::Output,
            geometry: Geometry::Deconv2d(geo),
            activation: GENERATOR_OUTPUT_ACTIVATION,
        });
    }
    for p in &plan {
        p.geometry.validate().map_err(|e| Error::Unviable(e.to_string()))?;
    }
    Ok(plan)
}

/// Derives the network for `genome`, copying parameters from `store` where
/// the key and shapes match and initializing the rest from `rng`.
pub fn build_phenotype<R: Rng + ?Sized>(
    genome: &Genome,
    spec: &PhenotypeSpec,
    store: &ParamStore,
    rng: &mut R,
) -> Result<Phenotype> {
    genome.validate(usize::MAX)?;
    let plan = match genome.role {
        Role::Discriminator => plan_discriminator(genome, spec)?,
        Role::Generator => plan_generator(genome, spec)?,
    };
    let mut layers = Vec::with_capacity(plan.len());
    let mut keys = Vec::with_capacity(plan.len());
    let mut fresh = 0;
    for p in plan {
        let inherited = store.get(&p.key).filter(|(w, b)| {
            w.shape() == p.geometry.weight_shape().as_slice() && b.len() == p.geometry.bias_len()
        });
        let layer = match inherited {
            Some((w, b)) => {
                let mut l = Layer::zeroed(p.geometry, p.activation)?;
                l.weight = w.clone();
                l.bias = b.clone();
                l
            }
            None => {
                fresh += 1;
                Layer::init(p.geometry, p.activation, rng)?
            }
        };
        layers.push(layer);
        keys.push(p.key);
    }
    let network = Network::new(genome.role, layers).map_err(|e| Error::Unviable(e.to_string()))?;
    Ok(Phenotype { network, keys, fresh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evo::Gene;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use Activation::*;

    const MNIST: PhenotypeSpec = PhenotypeSpec {
        data_shape: [1, 28, 28],
        z_dim: 100,
        channels_min: 32,
        channels_max: 512,
    };

    fn build(genome: &Genome) -> Result<Phenotype> {
        build_phenotype(genome, &MNIST, &ParamStore::new(), &mut ChaCha8Rng::seed_from_u64(0))
    }

    #[test]
    fn discriminator_linear_in_features() {
        let g = Genome::new(
            Role::Discriminator,
            vec![Gene::conv(0, Elu, 256, 3), Gene::conv(1, Elu, 64, 3), Gene::linear(2, Sigmoid, 1)],
        )
        .unwrap();
        let p = build(&g).unwrap();
        assert_eq!(p.network.layers().len(), 3);
        assert_eq!(p.network.layers()[2].geometry, Geometry::Linear { in_features: 3136, out_features: 1 });
    }

    #[test]
    fn generator_reshape_coercion() {
        let g = Genome::new(
            Role::Generator,
            vec![Gene::linear(0, Relu, 4096), Gene::deconv(1, Relu, 128, 3), Gene::deconv(2, Elu, 1, 3)],
        )
        .unwrap();
        let p = build(&g).unwrap();
        let layers = p.network.layers();
        assert_eq!(layers.len(), 3);
        assert_eq!(layers[0].geometry, Geometry::Linear { in_features: 100, out_features: 4116 });
        assert_eq!(layers[1].input_shape(), vec![84, 7, 7]);
        assert_eq!(p.network.output_shape(), vec![1, 28, 28]);
    }

    #[test]
    fn single_linear_discriminator_gets_output() {
        let g = Genome::new(Role::Discriminator, vec![Gene::linear(0, Relu, 32)]).unwrap();
        let p = build(&g).unwrap();
        assert_eq!(p.keys, vec![ParamKey::Gene(0), ParamKey::Output]);
        assert_eq!(p.network.output_shape(), vec![1]);
    }

    #[test]
    fn generator_without_linear_gets_input_and_output() {
        let g = Genome::new(Role::Generator, vec![Gene::deconv(0, Relu, 64, 3)]).unwrap();
        let p = build(&g).unwrap();
        assert_eq!(p.keys, vec![ParamKey::Input, ParamKey::Gene(0), ParamKey::Output]);
        assert_eq!(p.network.layers()[0].output_shape(), vec![32 * 7 * 7]);
        assert_eq!(p.network.output_shape(), vec![1, 28, 28]);
    }

    #[test]
    fn indivisible_generator_is_unviable() {
        let g = Genome::new(
            Role::Generator,
            vec![Gene::deconv(0, Relu, 64, 3), Gene::deconv(1, Relu, 64, 3)],
        )
        .unwrap();
        assert!(matches!(build(&g), Err(Error::Unviable(_))));
    }

    #[test]
    fn matching_parameters_are_inherited() {
        let g = Genome::new(Role::Discriminator, vec![Gene::conv(0, Elu, 32, 3), Gene::linear(1, Relu, 40)]).unwrap();
        let first = build(&g).unwrap();
        let store = first.params();
        let again = build_phenotype(&g, &MNIST, &store, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(again.fresh, 0);
        assert_eq!(again.params(), store);
    }
}
