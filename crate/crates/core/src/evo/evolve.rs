use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evo::mutation::{random_gene, new_gene_kinds, MutationConfig};
use crate::evo::selection::ReproductionStats;
use crate::evo::{
    best_index, build_phenotype, pair_all_vs_all, pair_all_vs_k_best, schedule_rounds, select_and_reproduce,
    Genome, Individual, InnovationCounter, ParamStore, PhenotypeSpec, Speciator, WORST_FITNESS,
};
use crate::fid::{
    train_classifier_extractor, ClassifierConfig, FeatureExtractor, FidReference, PixelFeatures,
};
use crate::gan::{evaluate_pair, generate, train_pair, TrainConfig, Trainee};
use crate::io::{atomic_write, save_checkpoint, Checkpoint, Dataset, FidExtractorKind, Pairing, RunConfig};
use crate::nn::{Network, Role};
use crate::seeds::{stream, tag};

/// One row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub generation: usize,
    pub best_generator_id: u64,
    pub best_generator_fid: f64,
    pub median_generator_fid: f64,
    pub best_discriminator_id: u64,
    pub best_discriminator_loss: f64,
    pub mean_discriminator_loss: f64,
    pub generator_species: usize,
    pub discriminator_species: usize,
    pub pairs: usize,
    pub skipped_updates: usize,
    pub rejected_groups: usize,
    pub flagged: usize,
    pub mean_generator_genes: f64,
    pub mean_discriminator_genes: f64,
    pub offspring_retried: usize,
    pub offspring_copied: usize,
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    atomic_write(path, &bytes)
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Csv(e),
    })?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn checkpoint_path(run: &Path, generation: usize, role: Role) -> PathBuf {
    run.join("checkpoints")
        .join(format!("gen-{generation}"))
        .join(format!("{}.ckpt", role.name()))
}

/// The FID machinery of a run: the frozen extractor and cached reference statistics.
pub struct FidContext {
    pub extractor: Box<dyn FeatureExtractor>,
    pub reference: FidReference,
}

impl FidContext {
    pub fn new(cfg: &RunConfig, data: &Dataset) -> Result<Self> {
        let extractor: Box<dyn FeatureExtractor> = match cfg.fid_extractor {
            FidExtractorKind::Pixels => Box::new(PixelFeatures),
            FidExtractorKind::Classifier => Box::new(train_classifier_extractor(
                &data.samples,
                data.labels.as_deref(),
                &ClassifierConfig::default(),
                crate::seeds::derive_seed(cfg.seed, &[tag::EXTRACTOR]),
            )?),
        };
        let reference = FidReference::new(
            extractor.as_ref(),
            &data.samples,
            cfg.fid_reference_samples,
            crate::seeds::derive_seed(cfg.seed, &[tag::REFERENCE]),
        )?;
        Ok(Self { extractor, reference })
    }

    pub fn fid(&self, g: &Network, n: usize, z_dim: usize, seed_parts: &[u64], seed: u64) -> Result<f64> {
        let samples = generate(g, n, z_dim, &mut stream(seed, seed_parts))?;
        self.reference.fid(self.extractor.as_ref(), &samples)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvolveSummary {
    pub metrics: Vec<MetricsRow>,
    pub run_dir: PathBuf,
}

fn spec_for(cfg: &RunConfig, data: &Dataset) -> Result<PhenotypeSpec> {
    match *data.sample_shape() {
        [c, h, w] => Ok(PhenotypeSpec {
            data_shape: [c, h, w],
            z_dim: cfg.z_dim,
            channels_min: cfg.channels_min,
            channels_max: cfg.channels_max,
        }),
        ref other => Err(Error::invalid(format!("dataset samples must be C×H×W, got {other:?}"))),
    }
}

fn mutation_config(cfg: &RunConfig) -> MutationConfig {
    MutationConfig {
        prob_add: cfg.prob_add,
        prob_remove: cfg.prob_remove,
        prob_change: cfg.prob_change,
        genome_limit: cfg.genome_limit,
        channels_min: cfg.channels_min,
        channels_max: cfg.channels_max,
        new_gene_kinds: cfg.new_gene_kinds,
    }
}

struct State {
    gens: Vec<Individual>,
    discs: Vec<Individual>,
    innovations: InnovationCounter,
    next_id: u64,
    gen_species: Speciator,
    disc_species: Speciator,
}

fn initial_population(
    role: Role,
    size: usize,
    cfg: &RunConfig,
    spec: &PhenotypeSpec,
    st: &mut (InnovationCounter, u64),
) -> Result<Vec<Individual>> {
    let mcfg = mutation_config(cfg);
    let kinds = new_gene_kinds(role, cfg.new_gene_kinds);
    let mut rng = stream(cfg.seed, &[tag::INIT, role as u64]);
    let mut pop = Vec::with_capacity(size);
    for _ in 0..size {
        let mut built = None;
        for _ in 0..=crate::evo::selection::MUTATION_RETRIES * 4 {
            use rand::Rng;
            let kind = kinds[rng.random_range(0..kinds.len())];
            let gene = random_gene(kind, &mcfg, &mut st.0, &mut rng);
            let genome = Genome::new(role, vec![gene])?;
            match build_phenotype(&genome, spec, &ParamStore::new(), &mut rng) {
                Ok(ph) => {
                    built = Some((genome, ph.params()));
                    break;
                }
                Err(Error::Unviable(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let (genome, params) = built.ok_or_else(|| {
            Error::Unviable(format!("no single-gene {role} fits samples of shape {:?}", spec.data_shape))
        })?;
        let mut ind = Individual::new(st.1, genome);
        st.1 += 1;
        ind.params = params;
        pop.push(ind);
    }
    Ok(pop)
}

fn networks(pop: &[Individual], spec: &PhenotypeSpec, seed: u64, generation: usize) -> Result<Vec<(Network, Vec<crate::evo::ParamKey>)>> {
    pop.iter()
        .map(|ind| {
            // Offspring carry complete parameter stores; the stream only
            // matters for individuals restored without parameters.
            let mut rng = stream(seed, &[tag::INIT, generation as u64, ind.id]);
            let ph = build_phenotype(&ind.genome, spec, &ind.params, &mut rng)?;
            Ok((ph.network, ph.keys))
        })
        .collect()
}

fn store_from(network: &Network, keys: &[crate::evo::ParamKey]) -> ParamStore {
    keys.iter()
        .zip(network.layers())
        .map(|(k, l)| (*k, (l.weight.clone(), l.bias.clone())))
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn set_fitness(ind: &mut Individual, value: f64) {
    if value.is_finite() {
        ind.fitness = Some(value);
        ind.flagged = false;
    } else {
        ind.fitness = Some(WORST_FITNESS);
        ind.flagged = true;
    }
}

#[derive(Default)]
struct GenerationStats {
    pairs: usize,
    skipped: usize,
    rejected: usize,
}

/// Runs the coevolution described by `cfg` on `data`, writing checkpoints,
/// `metrics.csv` and `config.txt` under `run_dir`. `jobs` caps concurrent
/// pair trainings.
pub fn evolve(cfg: &RunConfig, data: &Dataset, run_dir: &Path, jobs: usize) -> Result<EvolveSummary> {
    cfg.validate()?;
    let spec = spec_for(cfg, data)?;
    std::fs::create_dir_all(run_dir)?;
    atomic_write(&run_dir.join("config.txt"), cfg.echo().as_bytes())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    pool.install(|| evolve_inner(cfg, data, &spec, run_dir))
}

fn evolve_inner(cfg: &RunConfig, data: &Dataset, spec: &PhenotypeSpec, run_dir: &Path) -> Result<EvolveSummary> {
    info!("training FID feature extractor ({})", cfg.fid_extractor);
    let fid = FidContext::new(cfg, data)?;
    let train_cfg = TrainConfig {
        batch_size: cfg.batch_size,
        batches: cfg.batches_per_generation,
        learning_rate: cfg.learning_rate,
        z_dim: cfg.z_dim,
    };

    let mut ids = (InnovationCounter::default(), 0u64);
    let gens = initial_population(Role::Generator, cfg.gen_population, cfg, spec, &mut ids)?;
    let discs = initial_population(Role::Discriminator, cfg.disc_population, cfg, spec, &mut ids)?;
    let mut st = State {
        gens,
        discs,
        innovations: ids.0,
        next_id: ids.1,
        gen_species: Speciator::default(),
        disc_species: Speciator::default(),
    };
    let mut prior: HashMap<u64, f64> = HashMap::new();
    let mut rows = Vec::new();
    let mcfg = mutation_config(cfg);

    for generation in 0..=cfg.generations {
        let g_nets = networks(&st.gens, spec, cfg.seed, generation)?;
        let d_nets = networks(&st.discs, spec, cfg.seed, generation)?;
        let mut gstats = GenerationStats::default();

        let d_losses: Vec<f64> = if generation == 0 {
            // The initial population is only scored, not trained.
            let losses = st
                .discs
                .par_iter()
                .zip(&d_nets)
                .map(|(d, (dn, _))| {
                    let mut sum = 0.0;
                    for (g, (gn, _)) in st.gens.iter().zip(&g_nets) {
                        let mut rng = stream(cfg.seed, &[tag::TRAIN, 0, g.id, d.id]);
                        sum += evaluate_pair(gn, dn, &data.samples, &train_cfg, &mut rng)?;
                    }
                    Ok(sum / st.gens.len() as f64)
                })
                .collect::<Result<Vec<f64>>>()?;
            for (ind, (n, k)) in st.gens.iter_mut().zip(&g_nets) {
                ind.params = store_from(n, k);
            }
            for (ind, (n, k)) in st.discs.iter_mut().zip(&d_nets) {
                ind.params = store_from(n, k);
            }
            losses
        } else {
            let pairs = match cfg.pairing {
                Pairing::AllVsAll => pair_all_vs_all(st.gens.len(), st.discs.len()),
                Pairing::KBest(k) => {
                    let look = |ind: &Individual| {
                        prior
                            .get(&ind.id)
                            .or_else(|| ind.parent.and_then(|p| prior.get(&p)))
                            .copied()
                    };
                    let gf: Vec<_> = st.gens.iter().map(look).collect();
                    let df: Vec<_> = st.discs.iter().map(look).collect();
                    let mut rng = stream(cfg.seed, &[tag::PAIRING, generation as u64]);
                    let kb = pair_all_vs_k_best(&gf, &df, k, &mut rng);
                    if kb.fallback {
                        warn!("generation {generation}: no prior fitness, pairing random k individuals");
                    }
                    kb.pairs
                }
            };
            gstats.pairs = pairs.len();
            let g_train: Vec<Mutex<Trainee>> = g_nets.iter().map(|(n, _)| Mutex::new(Trainee::new(n.clone()))).collect();
            let d_train: Vec<Mutex<Trainee>> = d_nets.iter().map(|(n, _)| Mutex::new(Trainee::new(n.clone()))).collect();
            let mut match_losses: Vec<Vec<f64>> = vec![Vec::new(); st.discs.len()];
            for round in schedule_rounds(&pairs) {
                let results = round
                    .par_iter()
                    .map(|&pi| {
                        let (gi, di) = pairs[pi];
                        let mut g = g_train[gi].lock().expect("poisoned");
                        let mut d = d_train[di].lock().expect("poisoned");
                        let mut rng = stream(cfg.seed, &[tag::TRAIN, generation as u64, st.gens[gi].id, st.discs[di].id]);
                        let stats = train_pair(&mut g, &mut d, &data.samples, &train_cfg, &mut rng)?;
                        Ok((di, stats))
                    })
                    .collect::<Result<Vec<_>>>()?;
                for (di, stats) in results {
                    gstats.skipped += stats.skipped_d + stats.skipped_g;
                    gstats.rejected += stats.rejected_groups;
                    let finite: Vec<f64> = stats.d_losses.iter().copied().filter(|l| l.is_finite()).collect();
                    let m = if finite.is_empty() {
                        f64::NAN
                    } else {
                        finite.iter().sum::<f64>() / finite.len() as f64
                    };
                    match_losses[di].push(m);
                }
            }
            for ((ind, t), (_, keys)) in st.gens.iter_mut().zip(g_train).zip(&g_nets) {
                ind.params = store_from(&t.into_inner().expect("poisoned").network, keys);
            }
            for ((ind, t), (_, keys)) in st.discs.iter_mut().zip(d_train).zip(&d_nets) {
                ind.params = store_from(&t.into_inner().expect("poisoned").network, keys);
            }
            match_losses
                .into_iter()
                .map(|l| {
                    if l.is_empty() {
                        f64::NAN
                    } else {
                        l.iter().sum::<f64>() / l.len() as f64
                    }
                })
                .collect()
        };

        for (ind, l) in st.discs.iter_mut().zip(&d_losses) {
            set_fitness(ind, *l);
        }
        let g_nets = networks(&st.gens, spec, cfg.seed, generation)?;
        let fids: Vec<f64> = st
            .gens
            .par_iter()
            .zip(&g_nets)
            .map(|(g, (gn, _))| {
                fid.fid(gn, cfg.fid_samples, cfg.z_dim, &[tag::FID, generation as u64, g.id], cfg.seed)
                    .unwrap_or(f64::NAN)
            })
            .collect();
        for (ind, f) in st.gens.iter_mut().zip(&fids) {
            set_fitness(ind, *f);
        }

        let gr = st.gen_species.speciate(&mut st.gens, cfg.species);
        let dr = st.disc_species.speciate(&mut st.discs, cfg.species);

        let bg = best_index(&st.gens).expect("non-empty");
        let bd = best_index(&st.discs).expect("non-empty");
        for (role, ind) in [(Role::Generator, &st.gens[bg]), (Role::Discriminator, &st.discs[bd])] {
            let ckpt = Checkpoint {
                individual: ind.clone(),
                generation,
                spec: *spec,
            };
            save_checkpoint(&ckpt, &checkpoint_path(run_dir, generation, role))?;
        }

        let mut gf: Vec<f64> = st.gens.iter().map(|i| i.sort_fitness()).collect();
        let df: Vec<f64> = st.discs.iter().map(|i| i.sort_fitness()).collect();
        let mut row = MetricsRow {
            generation,
            best_generator_id: st.gens[bg].id,
            best_generator_fid: st.gens[bg].sort_fitness(),
            median_generator_fid: median(&mut gf),
            best_discriminator_id: st.discs[bd].id,
            best_discriminator_loss: st.discs[bd].sort_fitness(),
            mean_discriminator_loss: df.iter().sum::<f64>() / df.len() as f64,
            generator_species: gr.species,
            discriminator_species: dr.species,
            pairs: gstats.pairs,
            skipped_updates: gstats.skipped,
            rejected_groups: gstats.rejected,
            flagged: st.gens.iter().chain(&st.discs).filter(|i| i.flagged).count(),
            mean_generator_genes: st.gens.iter().map(|i| i.genome.len()).sum::<usize>() as f64 / st.gens.len() as f64,
            mean_discriminator_genes: st.discs.iter().map(|i| i.genome.len()).sum::<usize>() as f64
                / st.discs.len() as f64,
            offspring_retried: 0,
            offspring_copied: 0,
        };
        info!(
            "generation {generation}: best FID {:.4}, best D loss {:.4}",
            row.best_generator_fid, row.best_discriminator_loss
        );

        prior = st
            .gens
            .iter()
            .chain(&st.discs)
            .map(|i| (i.id, i.sort_fitness()))
            .collect();
        if generation >= 1 && generation < cfg.generations {
            let mut rs = ReproductionStats::default();
            for role in [Role::Generator, Role::Discriminator] {
                let pop = match role {
                    Role::Generator => &st.gens,
                    Role::Discriminator => &st.discs,
                };
                let mut rng = stream(cfg.seed, &[tag::SELECT, generation as u64, role as u64]);
                let (next, stats) = select_and_reproduce(
                    pop,
                    cfg.tournament_k,
                    &mcfg,
                    spec,
                    &mut st.innovations,
                    &mut st.next_id,
                    &mut rng,
                )?;
                rs.retried += stats.retried;
                rs.copied += stats.copied;
                match role {
                    Role::Generator => st.gens = next,
                    Role::Discriminator => st.discs = next,
                }
            }
            row.offspring_retried = rs.retried;
            row.offspring_copied = rs.copied;
        }
        rows.push(row);
        write_metrics(&run_dir.join("metrics.csv"), &rows)?;
    }
    Ok(EvolveSummary {
        metrics: rows,
        run_dir: run_dir.to_path_buf(),
    })
}
