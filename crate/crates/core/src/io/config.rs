use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    AllVsAll,
    KBest(usize),
}

impl fmt::Display for Pairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pairing::AllVsAll => f.write_str("all-vs-all"),
            Pairing::KBest(k) => write!(f, "k-best:{k}"),
        }
    }
}

impl FromStr for Pairing {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "all-vs-all" {
            return Ok(Pairing::AllVsAll);
        }
        if let Some(k) = s.strip_prefix("k-best:") {
            let k: usize = k.parse().map_err(|_| format!("bad k in {s:?}"))?;
            if k == 0 {
                return Err("k-best needs k >= 1".into());
            }
            return Ok(Pairing::KBest(k));
        }
        Err(format!("unknown pairing {s:?} (all-vs-all | k-best:<k>)"))
    }
}

/// Which layer kinds an add-mutation may create.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NewGeneKinds {
    /// Convolution for discriminators, transpose convolution for generators.
    Conv,
    /// Any role-legal kind, including linear.
    All,
}

impl fmt::Display for NewGeneKinds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NewGeneKinds::Conv => "conv",
            NewGeneKinds::All => "all",
        })
    }
}

impl FromStr for NewGeneKinds {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "conv" => Ok(NewGeneKinds::Conv),
            "all" => Ok(NewGeneKinds::All),
            _ => Err(format!("unknown new_gene_kinds {s:?} (conv | all)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FidExtractorKind {
    Classifier,
    Pixels,
}

impl fmt::Display for FidExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FidExtractorKind::Classifier => "classifier",
            FidExtractorKind::Pixels => "pixels",
        })
    }
}

impl FromStr for FidExtractorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "classifier" => Ok(FidExtractorKind::Classifier),
            "pixels" => Ok(FidExtractorKind::Pixels),
            _ => Err(format!("unknown fid_extractor {s:?} (classifier | pixels)")),
        }
    }
}

/// Counting rule for the overlap score; see `embed::jaccard_index`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum JaccardVariant {
    /// `(|matched_G| + |matched_D|) / (|M^G| + |M^d|)`.
    #[default]
    Symmetric,
    /// `|matched_G| / (|M^G| + |M^d|)`.
    Literal,
    /// `|matched_G| / (|M^G| + |M^d| − |matched_G|)`.
    UnionMinusIntersection,
}

impl fmt::Display for JaccardVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JaccardVariant::Symmetric => "symmetric",
            JaccardVariant::Literal => "literal",
            JaccardVariant::UnionMinusIntersection => "union-minus-intersection",
        })
    }
}

impl FromStr for JaccardVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "symmetric" => Ok(JaccardVariant::Symmetric),
            "literal" => Ok(JaccardVariant::Literal),
            "union-minus-intersection" => Ok(JaccardVariant::UnionMinusIntersection),
            _ => Err(format!(
                "unknown jaccard variant {s:?} (symmetric | literal | union-minus-intersection)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    GaussianMixture,
    Shapes,
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::GaussianMixture => "gaussian-mixture",
            SynthKind::Shapes => "shapes",
        })
    }
}

impl FromStr for SynthKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "gaussian-mixture" => Ok(SynthKind::GaussianMixture),
            "shapes" => Ok(SynthKind::Shapes),
            _ => Err(format!("unknown synthetic kind {s:?} (gaussian-mixture | shapes)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Synthetic {
        kind: SynthKind,
        modes: usize,
        samples: usize,
        size: usize,
    },
    Idx {
        images: PathBuf,
        labels: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Profile {
    Paper,
    Desk,
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            _ => Err(format!("unknown profile {s:?} (paper | desk)")),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub generations: usize,
    pub gen_population: usize,
    pub disc_population: usize,
    pub prob_add: f64,
    pub prob_remove: f64,
    pub prob_change: f64,
    pub channels_min: usize,
    pub channels_max: usize,
    pub tournament_k: usize,
    pub fid_samples: usize,
    pub genome_limit: usize,
    pub species: usize,
    pub pairing: Pairing,
    pub new_gene_kinds: NewGeneKinds,

    pub batch_size: usize,
    pub batches_per_generation: usize,
    pub learning_rate: f64,
    pub z_dim: usize,

    pub pca_dims: usize,
    pub tsne_perplexity: f64,
    pub tsne_iterations: usize,
    pub samples_per_model: usize,
    pub eval_generations: Vec<usize>,
    pub jaccard: JaccardVariant,

    pub fid_extractor: FidExtractorKind,
    pub fid_reference_samples: usize,
    pub dataset: DatasetSpec,
    pub seed: u64,
}

impl Default for RunConfig {
    /// The full-scale experimental setup.
    fn default() -> Self {
        Self {
            generations: 100,
            gen_population: 10,
            disc_population: 10,
            prob_add: 0.3,
            prob_remove: 0.1,
            prob_change: 0.1,
            channels_min: 32,
            channels_max: 512,
            tournament_k: 2,
            fid_samples: 5000,
            genome_limit: 4,
            species: 3,
            pairing: Pairing::AllVsAll,
            new_gene_kinds: NewGeneKinds::Conv,
            batch_size: 64,
            batches_per_generation: 10,
            learning_rate: 0.003,
            z_dim: 100,
            pca_dims: 50,
            tsne_perplexity: 30.0,
            tsne_iterations: 1000,
            samples_per_model: 1000,
            eval_generations: vec![5, 10, 100],
            jaccard: JaccardVariant::Symmetric,
            fid_extractor: FidExtractorKind::Classifier,
            fid_reference_samples: 5000,
            dataset: DatasetSpec::Idx {
                images: PathBuf::from("data/train-images-idx3-ubyte"),
                labels: Some(PathBuf::from("data/train-labels-idx1-ubyte")),
            },
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn paper() -> Self {
        Self::default()
    }

    /// Scaled-down profile that finishes in minutes on one CPU.
    pub fn desk() -> Self {
        Self {
            generations: 30,
            gen_population: 5,
            disc_population: 5,
            channels_min: 8,
            channels_max: 32,
            fid_samples: 1000,
            samples_per_model: 300,
            eval_generations: vec![3, 10, 30],
            fid_reference_samples: 1000,
            dataset: DatasetSpec::Synthetic {
                kind: SynthKind::GaussianMixture,
                modes: 2,
                samples: 1000,
                size: 8,
            },
            ..Self::default()
        }
    }

    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Paper => Self::paper(),
            Profile::Desk => Self::desk(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config { line: 0, message: m });
        for (name, p) in [
            ("prob_add", self.prob_add),
            ("prob_remove", self.prob_remove),
            ("prob_change", self.prob_change),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        for (name, v) in [
            ("gen_population", self.gen_population),
            ("disc_population", self.disc_population),
            ("channels_min", self.channels_min),
            ("tournament_k", self.tournament_k),
            ("fid_samples", self.fid_samples),
            ("genome_limit", self.genome_limit),
            ("species", self.species),
            ("batch_size", self.batch_size),
            ("z_dim", self.z_dim),
            ("pca_dims", self.pca_dims),
            ("samples_per_model", self.samples_per_model),
            ("fid_reference_samples", self.fid_reference_samples),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.fid_samples < 2 || self.fid_reference_samples < 2 {
            return bad("FID needs at least 2 samples per side".into());
        }
        if self.channels_max < self.channels_min {
            return bad(format!(
                "channels_max {} < channels_min {}",
                self.channels_max, self.channels_min
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.tsne_perplexity >= 1.0) {
            return bad(format!("tsne_perplexity must be >= 1, got {}", self.tsne_perplexity));
        }
        if let Pairing::KBest(k) = self.pairing {
            if k > self.gen_population.min(self.disc_population) {
                return bad(format!("k-best:{k} exceeds a population size"));
            }
        }
        if let DatasetSpec::Synthetic { modes, samples, size, .. } = self.dataset {
            if modes == 0 || samples == 0 || size == 0 {
                return bad("synthetic dataset needs positive modes, samples and size".into());
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines on top of `base`. `#` starts a comment.
    pub fn parse(text: &str, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        let mut images: Option<PathBuf> = None;
        let mut labels: Option<Option<PathBuf>> = None;
        let mut synth = match &cfg.dataset {
            DatasetSpec::Synthetic { kind, modes, samples, size } => (*kind, *modes, *samples, *size),
            DatasetSpec::Idx { .. } => (SynthKind::GaussianMixture, 2, 1000, 8),
        };
        let mut source: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got {line:?}"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let err = |m: String| Error::Config { line: line_no, message: m };
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| err(format!("{key}: cannot parse {value:?}")))?
                };
            }
            macro_rules! word {
                () => {
                    value.parse().map_err(|m: String| err(m))?
                };
            }
            match key {
                "generations" => cfg.generations = num!(),
                "gen_population" => cfg.gen_population = num!(),
                "disc_population" => cfg.disc_population = num!(),
                "prob_add" => cfg.prob_add = num!(),
                "prob_remove" => cfg.prob_remove = num!(),
                "prob_change" => cfg.prob_change = num!(),
                "channels_min" => cfg.channels_min = num!(),
                "channels_max" => cfg.channels_max = num!(),
                "tournament_k" => cfg.tournament_k = num!(),
                "fid_samples" => cfg.fid_samples = num!(),
                "genome_limit" => cfg.genome_limit = num!(),
                "species" => cfg.species = num!(),
                "pairing" => cfg.pairing = word!(),
                "new_gene_kinds" => cfg.new_gene_kinds = word!(),
                "batch_size" => cfg.batch_size = num!(),
                "batches_per_generation" => cfg.batches_per_generation = num!(),
                "optimizer" => {
                    if value != "adam" {
                        return Err(err(format!("only the adam optimizer is supported, got {value:?}")));
                    }
                }
                "learning_rate" => cfg.learning_rate = num!(),
                "z_dim" => cfg.z_dim = num!(),
                "pca_dims" => cfg.pca_dims = num!(),
                "tsne_perplexity" => cfg.tsne_perplexity = num!(),
                "tsne_iterations" => cfg.tsne_iterations = num!(),
                "samples_per_model" => cfg.samples_per_model = num!(),
                "eval_generations" => {
                    cfg.eval_generations = parse_list(value).map_err(err)?;
                }
                "jaccard" => cfg.jaccard = word!(),
                "fid_extractor" => cfg.fid_extractor = word!(),
                "fid_reference_samples" => cfg.fid_reference_samples = num!(),
                "dataset" => {
                    if value != "synthetic" && value != "idx" {
                        return Err(err(format!("dataset must be synthetic or idx, got {value:?}")));
                    }
                    source = Some(value.to_string());
                }
                "dataset_kind" => synth.0 = word!(),
                "dataset_modes" => synth.1 = num!(),
                "dataset_samples" => synth.2 = num!(),
                "dataset_size" => synth.3 = num!(),
                "idx_images" => images = Some(PathBuf::from(value)),
                "idx_labels" => {
                    labels = Some((!value.is_empty() && value != "none").then(|| PathBuf::from(value)))
                }
                "seed" => cfg.seed = num!(),
                _ => return Err(err(format!("unknown key {key:?}"))),
            }
        }
        let source = source.unwrap_or_else(|| match cfg.dataset {
            DatasetSpec::Synthetic { .. } => "synthetic".into(),
            DatasetSpec::Idx { .. } => "idx".into(),
        });
        cfg.dataset = if source == "synthetic" {
            DatasetSpec::Synthetic {
                kind: synth.0,
                modes: synth.1,
                samples: synth.2,
                size: synth.3,
            }
        } else {
            let (old_images, old_labels) = match &cfg.dataset {
                DatasetSpec::Idx { images, labels } => (Some(images.clone()), labels.clone()),
                DatasetSpec::Synthetic { .. } => (None, None),
            };
            DatasetSpec::Idx {
                images: images.or(old_images).ok_or_else(|| Error::Config {
                    line: 0,
                    message: "dataset = idx needs idx_images".into(),
                })?,
                labels: labels.unwrap_or(old_labels),
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, base: RunConfig) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::parse(&text, base)
    }

    /// Every setting as `key = value` lines, parseable by [`RunConfig::parse`].
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("generations", self.generations.to_string());
        kv("gen_population", self.gen_population.to_string());
        kv("disc_population", self.disc_population.to_string());
        kv("prob_add", self.prob_add.to_string());
        kv("prob_remove", self.prob_remove.to_string());
        kv("prob_change", self.prob_change.to_string());
        kv("channels_min", self.channels_min.to_string());
        kv("channels_max", self.channels_max.to_string());
        kv("tournament_k", self.tournament_k.to_string());
        kv("fid_samples", self.fid_samples.to_string());
        kv("genome_limit", self.genome_limit.to_string());
        kv("species", self.species.to_string());
        kv("pairing", self.pairing.to_string());
        kv("new_gene_kinds", self.new_gene_kinds.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("batches_per_generation", self.batches_per_generation.to_string());
        kv("optimizer", "adam".into());
        kv("learning_rate", self.learning_rate.to_string());
        kv("z_dim", self.z_dim.to_string());
        kv("pca_dims", self.pca_dims.to_string());
        kv("tsne_perplexity", self.tsne_perplexity.to_string());
        kv("tsne_iterations", self.tsne_iterations.to_string());
        kv("samples_per_model", self.samples_per_model.to_string());
        kv("eval_generations", join(&self.eval_generations));
        kv("jaccard", self.jaccard.to_string());
        kv("fid_extractor", self.fid_extractor.to_string());
        kv("fid_reference_samples", self.fid_reference_samples.to_string());
        match &self.dataset {
            DatasetSpec::Synthetic { kind, modes, samples, size } => {
                kv("dataset", "synthetic".into());
                kv("dataset_kind", kind.to_string());
                kv("dataset_modes", modes.to_string());
                kv("dataset_samples", samples.to_string());
                kv("dataset_size", size.to_string());
            }
            DatasetSpec::Idx { images, labels } => {
                kv("dataset", "idx".into());
                kv("idx_images", images.display().to_string());
                kv(
                    "idx_labels",
                    labels.as_ref().map_or("none".into(), |p| p.display().to_string()),
                );
            }
        }
        kv("seed", self.seed.to_string());
        s
    }
}

pub fn parse_list(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| format!("bad list entry {s:?}")))
        .collect()
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}
